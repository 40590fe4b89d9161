"""Dense operator algebra for small qubit-resonator systems.

Everything here is plain numpy on complex128 arrays. States are density
matrices; the qubit basis is (|g>, |e>) with sigma_z = diag(-1, +1), so the
excited-state population sits at index 1 and rho_eg = rho[1, 0].
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy.linalg import expm

# ---------------------------------------------------------------------------
# qubit operators, basis (g, e)
# ---------------------------------------------------------------------------

SIGMA_Z = np.diag([-1.0 + 0.0j, 1.0 + 0.0j])
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |g><e|
PROJ_G = np.diag([1.0 + 0.0j, 0.0 + 0.0j])
PROJ_E = np.diag([0.0 + 0.0j, 1.0 + 0.0j])


def annihilation(n_max: int) -> np.ndarray:
    """Resonator annihilation operator truncated at Fock level n_max (dim n_max+1)."""
    return np.diag(np.sqrt(np.arange(1.0, n_max + 1.0)), 1).astype(complex)


def number_op(n_max: int) -> np.ndarray:
    return np.diag(np.arange(0.0, n_max + 1.0)).astype(complex)


def coherent_state(beta: complex, n_max: int) -> np.ndarray:
    """Truncated coherent-state vector exp(-|b|^2/2) b^n / sqrt(n!)."""
    n = np.arange(n_max + 1)
    logfact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1.0, n_max + 1.0)))))
    amp = np.exp(-0.5 * abs(beta) ** 2 - 0.5 * logfact) * np.power(complex(beta), n)
    return amp.astype(complex)


def displacement_matrix(beta: complex, n_max: int) -> np.ndarray:
    """Matrix elements <p| D(beta) |q> of the displacement operator, truncated.

    Computed as the exact exponential of the truncated generator
    beta a^dag - beta* a; accurate for |beta|^2 well below n_max.
    """
    a = annihilation(n_max)
    return expm(beta * a.conj().T - np.conj(beta) * a)


def fock_cutoff(alpha_max: float) -> int:
    """Truncation level used throughout: ceil(4 |alpha|^2_max) + 6."""
    return int(math.ceil(4.0 * alpha_max**2)) + 6


# ---------------------------------------------------------------------------
# superoperator actions
# ---------------------------------------------------------------------------


def dissipator_apply(x: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Lindblad dissipator D[X]rho = X rho X^dag - (X^dag X rho + rho X^dag X)/2."""
    xr = x @ rho
    xdx = x.conj().T @ x
    return xr @ x.conj().T - 0.5 * (xdx @ rho + rho @ xdx)


def measure_apply(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Normalized measurement superoperator M[c]rho = c rho + rho c^dag - <c + c^dag> rho."""
    sym = c @ rho + rho @ c.conj().T
    return sym - np.trace(sym).real * rho


def jump_apply(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Normalized jump superoperator G[c]rho = c rho c^dag / <c^dag c> - rho."""
    num = c @ rho @ c.conj().T
    denom = np.trace(num).real
    if denom <= 0.0:
        raise ValueError("jump applied to state with vanishing jump probability")
    return num / denom - rho


def measure_unnorm_apply(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Unnormalized (linear) measurement superoperator c rho + rho c^dag."""
    return c @ rho + rho @ c.conj().T


def jump_unnorm_apply(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Unnormalized (linear) jump superoperator c rho c^dag - rho."""
    return c @ rho @ c.conj().T - rho


class SuperopKind(enum.Enum):
    """Tags for the four stochastic superoperators; apply() dispatches on the tag."""

    MEASURE = "measure"
    JUMP = "jump"
    MEASURE_UNNORM = "measure_unnorm"
    JUMP_UNNORM = "jump_unnorm"

    def apply(self, c: np.ndarray, rho: np.ndarray) -> np.ndarray:
        return _SUPEROP_TABLE[self](c, rho)


_SUPEROP_TABLE = {
    SuperopKind.MEASURE: measure_apply,
    SuperopKind.JUMP: jump_apply,
    SuperopKind.MEASURE_UNNORM: measure_unnorm_apply,
    SuperopKind.JUMP_UNNORM: jump_unnorm_apply,
}


# ---------------------------------------------------------------------------
# density-matrix utilities
# ---------------------------------------------------------------------------


def expect(op: np.ndarray, rho: np.ndarray) -> complex:
    return complex(np.trace(op @ rho))


def purity(rho: np.ndarray) -> float:
    return float(np.trace(rho @ rho).real)


def herm_repair(rho: np.ndarray) -> np.ndarray:
    """Project onto the Hermitian part, (rho + rho^dag)/2."""
    return 0.5 * (rho + rho.conj().T)


def check_density_matrix(
    rho: np.ndarray,
    herm_tol: float = 1e-10,
    trace_tol: float = 1e-9,
    eig_tol: float = -1e-8,
) -> None:
    """Raise ValueError unless rho is Hermitian, unit trace, and PSD within tolerance."""
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian within tolerance")
    if abs(np.trace(rho).real - 1.0) > trace_tol:
        raise ValueError("density matrix trace deviates from 1")
    if np.min(np.linalg.eigvalsh(herm_repair(rho))) < eig_tol:
        raise ValueError("density matrix has a negative eigenvalue beyond tolerance")


def trace_distance(rho_a: np.ndarray, rho_b: np.ndarray) -> float:
    """Trace distance (1/2) ||rho_a - rho_b||_1 for Hermitian arguments."""
    diff = herm_repair(rho_a - rho_b)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


# ---------------------------------------------------------------------------
# composite-space helpers, ordering qubit (x) resonator [(x) filter resonator]
# ---------------------------------------------------------------------------


def embed_qubit(op2: np.ndarray, *cav_dims: int) -> np.ndarray:
    out = op2
    for d in cav_dims:
        out = np.kron(out, np.eye(d, dtype=complex))
    return out


def embed_resonator(opc: np.ndarray, trailing_dims: tuple[int, ...] = ()) -> np.ndarray:
    out = np.kron(np.eye(2, dtype=complex), opc)
    for d in trailing_dims:
        out = np.kron(out, np.eye(d, dtype=complex))
    return out


def embed_filter(opb: np.ndarray, cav_dim: int) -> np.ndarray:
    return np.kron(np.eye(2 * cav_dim, dtype=complex), opb)


def partial_trace_resonator(joint: np.ndarray, field_dim: int) -> np.ndarray:
    """Trace out all field modes of a qubit (x) field state; returns the 2x2 qubit state."""
    d = joint.shape[0]
    if d != 2 * field_dim:
        raise ValueError("joint dimension does not factor as 2 x field_dim")
    return np.einsum("ikjk->ij", joint.reshape(2, field_dim, 2, field_dim))


def resonator_tail_population(joint: np.ndarray, n_max: int, trailing_dim: int = 1) -> float:
    """Total population in the top two Fock levels of the first resonator mode."""
    nc = n_max + 1
    pops = np.diag(joint).real.reshape(2, nc, trailing_dim)
    return float(np.sum(pops[:, nc - 2 :, :]))
