"""Displaced-frame photodetection hierarchy, kept as an independent oracle.

The conditional qubit-resonator state under photodetection is written in the
polaron (displaced) frame, one Fock-indexed block per qubit dyad:

    rho_p = sum_{nm} block_gg[n, m] |n,g><m,g| + block_ee[n, m] |n,e><m,e|
          + block_eg[n, m] |n,e><m,g| + h.c.

The blocks obey closed linear recursions in the Fock indices; no quantum
operators appear, so this module shares nothing with the density-matrix
steppers it is meant to check. Evolution is kept unnormalized (linear form of
the jump SME) and normalization is deferred to readout. The reduced qubit
state is reassembled from the blocks with displacement-operator matrix
elements d_pq(beta) = <p|D(beta)|q> and the interference phase between the
two displaced frames.

From a vacuum start the diagonal blocks stay confined to n = m = 0; only a
finite qubit decay rate feeds higher Fock states (through the d-matrix
cross-term), which is what the cutoff monitor is for.
"""

from __future__ import annotations

import dataclasses
import functools
import math

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from . import linalg
from .fields import FieldSample, FieldTrajectory, SystemParams
from .qubit_sme import QubitState

HERM_TOL = 1e-10


def d_element(beta: complex, p: int, q: int) -> complex:
    """Displacement matrix element <p|D(beta)|q> in Laguerre closed form.

    Exact in the infinite-dimensional space, unlike a truncated exponential
    of beta a^dag - beta* a, so entries near a Fock cutoff stay correct.
    """
    if p < 0 or q < 0:
        raise ValueError("Fock indices must be nonnegative")
    x = abs(beta) ** 2
    lo, hi = (q, p) if p >= q else (p, q)
    amp = complex(beta) ** (p - q) if p >= q else (-np.conj(beta)) ** (q - p)
    lag = eval_genlaguerre(lo, hi - lo, x)
    return complex(amp * lag * math.exp(0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - 0.5 * x))


def d_matrix(beta: complex, n_max: int) -> np.ndarray:
    """All <p|D(beta)|q> for p, q <= n_max, vectorized form of d_element."""
    idx = np.arange(n_max + 1)
    pp, qq = idx[:, None], idx[None, :]
    lo = np.minimum(pp, qq)
    k = np.abs(pp - qq)
    x = abs(beta) ** 2
    amp = np.where(pp >= qq, np.power(complex(beta), k), np.power(-np.conj(beta), k))
    return amp * eval_genlaguerre(lo, k, x) * np.exp(
        0.5 * (gammaln(lo + 1.0) - gammaln(lo + k + 1.0)) - 0.5 * x
    )


@dataclasses.dataclass
class DisplacedHierarchy:
    """Unnormalized displaced-frame state: one (n_max+1)^2 Fock block per qubit dyad."""

    n_max: int
    block_gg: np.ndarray
    block_ee: np.ndarray
    block_eg: np.ndarray
    beta_eg: complex
    d_cache: np.ndarray

    def qubit_norm(self) -> float:
        return float(np.trace(self.block_gg).real + np.trace(self.block_ee).real)

    def confinement_error(self) -> float:
        """Largest diagonal-block magnitude outside the (0, 0) corner."""
        err = 0.0
        for block in (self.block_gg, self.block_ee):
            masked = np.abs(block).copy()
            masked[0, 0] = 0.0
            err = max(err, float(masked.max()))
        return err

    def tail_population(self) -> float:
        """Largest magnitude on the truncation boundary of any block."""
        edge = 0.0
        for block in (self.block_gg, self.block_ee, self.block_eg):
            edge = max(edge, float(np.abs(block[-1, :]).max()), float(np.abs(block[:, -1]).max()))
        return edge

    def validate(self, tail_tol: float = 1e-8) -> None:
        for name, block in (("gg", self.block_gg), ("ee", self.block_ee)):
            if np.max(np.abs(block - block.conj().T)) > HERM_TOL:
                raise ValueError(f"{name} block lost hermiticity")
        if not np.isfinite(self.block_eg).all():
            raise ValueError("eg block is not finite")
        if self.qubit_norm() <= 0.0:
            raise ValueError("qubit norm is not positive")
        if self.tail_population() > tail_tol:
            raise ValueError("population reached the Fock cutoff; increase n_max")


def vacuum_hierarchy(rho_qubit: QubitState, n_max: int = 6) -> DisplacedHierarchy:
    """Displaced frame at t = 0: fields vanish, so the resonator is in vacuum."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    dim = n_max + 1
    gg = np.zeros((dim, dim), dtype=complex)
    ee = np.zeros((dim, dim), dtype=complex)
    eg = np.zeros((dim, dim), dtype=complex)
    gg[0, 0] = rho_qubit.rho_gg
    ee[0, 0] = rho_qubit.rho_ee
    eg[0, 0] = rho_qubit.rho_eg
    return DisplacedHierarchy(n_max, gg, ee, eg, 0.0 + 0.0j, np.eye(dim, dtype=complex))


@functools.lru_cache(maxsize=None)
def _grids(n_max: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    idx = np.arange(n_max + 1, dtype=float)
    return idx[:, None] - idx[None, :], idx[:, None] + idx[None, :], np.sqrt(idx)


def _lower_n(block: np.ndarray, sq: np.ndarray) -> np.ndarray:
    # sqrt(n+1) block[n+1, m]
    out = np.zeros_like(block)
    out[:-1, :] = sq[1:, None] * block[1:, :]
    return out


def _lower_m(block: np.ndarray, sq: np.ndarray) -> np.ndarray:
    # sqrt(m+1) block[n, m+1]
    out = np.zeros_like(block)
    out[:, :-1] = sq[None, 1:] * block[:, 1:]
    return out


def _lower_nm(block: np.ndarray, sq: np.ndarray) -> np.ndarray:
    # sqrt((n+1)(m+1)) block[n+1, m+1]
    out = np.zeros_like(block)
    out[:-1, :-1] = sq[1:, None] * sq[None, 1:] * block[1:, 1:]
    return out


def _jump_block(block: np.ndarray, al_left: complex, al_right: complex, sq: np.ndarray) -> np.ndarray:
    # (a + al_left) block (a + al_right)^dag in Fock components
    return (
        _lower_nm(block, sq)
        + np.conj(al_right) * _lower_n(block, sq)
        + al_left * _lower_m(block, sq)
        + al_left * np.conj(al_right) * block
    )


def step_hierarchy(
    h: DisplacedHierarchy,
    f: FieldSample,
    p: SystemParams,
    jump: bool,
    dt: float,
    eps_d: complex = 0.0,
) -> DisplacedHierarchy:
    """One Euler step of the unnormalized displaced-frame hierarchy.

    A click applies the displaced jump map (a + alpha_i) to each block at the
    step start with the fields of sample f; the deterministic drift then
    advances the blocks. eps_d is the drive amplitude during the step (the
    drive enters only the eg phase; the alphas already carry it elsewhere).
    """
    dim = h.n_max + 1
    for block in (h.block_gg, h.block_ee, h.block_eg):
        if block.shape != (dim, dim):
            raise ValueError("block shape violates the Fock cutoff")
    nm_diff, nm_sum, sq = _grids(h.n_max)
    ag, ae = f.alpha_g, f.alpha_e
    beta = ae - ag
    ng, ne = abs(ag) ** 2, abs(ae) ** 2
    d = d_matrix(beta, h.n_max)

    gg, ee, eg = h.block_gg, h.block_ee, h.block_eg
    if jump:
        gg = _jump_block(gg, ag, ag, sq)
        ee = _jump_block(ee, ae, ae, sq)
        eg = _jump_block(eg, ae, ag, sq)

    ring = -1j * (p.delta_r - p.chi) * nm_diff - 0.5 * p.kappa * nm_sum
    dgg = (
        ring * gg
        + p.kappa * _lower_nm(gg, sq)
        - 0.5 * p.kappa * p.eta * (
            (nm_sum + 2.0 * ng) * gg + np.conj(ag) * _lower_n(gg, sq) + ag * _lower_m(gg, sq)
        )
    )
    if p.gamma1 != 0.0:
        dgg = dgg + p.gamma1 * (d @ ee @ d.conj().T)
    # the bare qubit-decay loss enters the ee block with a minus sign, so that
    # the populations exchange weight; the rotating term is kept as in the gg
    # block (it only touches n != m elements, empty from a vacuum start)
    dee = (
        ring * ee
        + p.kappa * _lower_nm(ee, sq)
        - p.gamma1 * ee
        - 0.5 * p.kappa * p.eta * (
            (nm_sum + 2.0 * ne) * ee + np.conj(ae) * _lower_n(ee, sq) + ae * _lower_m(ee, sq)
        )
    )
    phase = (
        p.omega_a_tilde
        + nm_diff * p.delta_r
        + nm_sum * p.chi
        + np.real(eps_d * np.conj(beta))
    )
    deg = (
        (
            -1j * phase
            - 0.5 * (1.0 - p.eta) * p.kappa * nm_sum
            - 0.5 * p.gamma1
            - p.gamma_phi
            - (1.0 - p.eta) * p.kappa * (0.5 * abs(beta) ** 2 + 1j * np.imag(np.conj(ae) * ag))
        )
        * eg
        + (1.0 - p.eta) * p.kappa * (
            _lower_nm(eg, sq) + beta * _lower_m(eg, sq) - np.conj(beta) * _lower_n(eg, sq)
        )
        - 0.5 * p.eta * p.kappa * (
            (nm_sum + ng + ne) * eg + np.conj(ae) * _lower_n(eg, sq) + ag * _lower_m(eg, sq)
        )
    )
    return DisplacedHierarchy(
        h.n_max, gg + dt * dgg, ee + dt * dee, eg + dt * deg, beta, d
    )


def reconstruct_qubit(h: DisplacedHierarchy, f: FieldSample) -> QubitState:
    """Normalized reduced qubit state at the fields of sample f.

    The diagonal entries are plain block traces; the coherence picks up the
    d-matrix overlap of the two displaced frames and their interference phase.
    """
    p_gg = float(np.trace(h.block_gg).real)
    p_ee = float(np.trace(h.block_ee).real)
    norm = p_gg + p_ee
    if norm <= 0.0:
        raise ValueError("zero norm; nothing to reconstruct")
    d = d_matrix(f.alpha_e - f.alpha_g, h.n_max)
    phase = np.exp(-1j * np.imag(f.alpha_g * np.conj(f.alpha_e)))
    rho_eg = complex(np.trace(h.block_eg @ d)) * phase
    return QubitState(p_gg / norm, rho_eg / norm)


def simulate_hierarchy(
    rho0: QubitState,
    traj: FieldTrajectory,
    p: SystemParams,
    jumps: np.ndarray,
    n_max: int = 6,
) -> tuple[list[QubitState], DisplacedHierarchy]:
    """Reference hierarchy loop driven by an externally supplied jump record."""
    n = traj.n_steps
    if len(jumps) != n:
        raise ValueError("jump record does not match the field grid")
    h = vacuum_hierarchy(rho0, n_max)
    states = [reconstruct_qubit(h, traj.sample(0))]
    for k in range(n):
        eps = p.epsilon_m if k < traj.k_meas else 0.0
        h = step_hierarchy(h, traj.sample(k), p, bool(jumps[k]), traj.dt, eps_d=eps)
        states.append(reconstruct_qubit(h, traj.sample(k + 1)))
    return states, h


def check_dpia_identity(
    alpha_g: complex, alpha_e: complex, rho: QubitState, kappa: float, eta: float
) -> float:
    """Residual of the polaron-frame dissipator identity.

    (i eta kappa / 2) Im(alpha_e* alpha_g) [sigma_z, rho]
      - (eta kappa / 4) |beta_eg|^2 D[sigma_z] rho  ==  -eta kappa D[Pi_alpha] rho.
    """
    rhom = rho.matrix()
    sz = linalg.SIGMA_Z
    lhs = 0.5j * eta * kappa * np.imag(np.conj(alpha_e) * alpha_g) * (sz @ rhom - rhom @ sz)
    lhs = lhs - 0.25 * eta * kappa * abs(alpha_e - alpha_g) ** 2 * linalg.dissipator_apply(sz, rhom)
    pi_alpha = alpha_g * linalg.PROJ_G + alpha_e * linalg.PROJ_E
    rhs = -eta * kappa * linalg.dissipator_apply(pi_alpha, rhom)
    return float(np.max(np.abs(lhs - rhs)))


def check_im_derivative(traj: FieldTrajectory, p: SystemParams) -> float:
    """Finite-difference residual of the interference-phase derivative.

    d/dt Im(alpha_g alpha_e*) should equal
    -Re(eps_d beta_eg*) + 2 chi Re(alpha_g alpha_e*) - kappa Im(alpha_e* alpha_g).
    Central differences; the pulse edge is excluded (the drive jumps there).
    """
    n = traj.n_steps
    if n < 3:
        raise ValueError("trajectory too short for a derivative check")
    im = np.imag(traj.alpha_g * np.conj(traj.alpha_e))
    lhs = (im[2:] - im[:-2]) / (2.0 * traj.dt)
    k = np.arange(1, n)
    eps = np.where(k < traj.k_meas, p.epsilon_m, 0.0)
    beta = (traj.alpha_e - traj.alpha_g)[1:-1]
    rhs = (
        -np.real(eps * np.conj(beta))
        + 2.0 * p.chi * np.real(traj.alpha_g * np.conj(traj.alpha_e))[1:-1]
        - p.kappa * np.imag(np.conj(traj.alpha_e) * traj.alpha_g)[1:-1]
    )
    keep = np.abs(k - traj.k_meas) > 1
    return float(np.max(np.abs((lhs - rhs)[keep]))) if keep.any() else 0.0
