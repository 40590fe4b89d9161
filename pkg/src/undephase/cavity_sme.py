"""Full qubit-resonator stochastic master equations and the cascaded-filter model.

Two representations coexist here:

* Fock-truncated density matrices (JointState) stepped by Euler-Maruyama or
  RK4; these are the expensive, assumption-free references.
* The coherent-branch form for the cascaded chain: because the dispersive
  interaction is diagonal in the qubit basis and all field equations are
  linear, the joint state stays inside span{|i><j| (x) |A_i><A_j| (x) |B_i><B_j|}
  and only the scalar weights w_ij are stochastic. This is exact, and is what
  the ensemble driver integrates.

Mode ordering in composite spaces: qubit (x) readout resonator (x) filter.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from typing import Optional

import numpy as np

from . import linalg
from .fields import FieldTrajectory, SystemParams, grid_steps, pulse_off_index
from .qubit_sme import QubitState


@dataclasses.dataclass
class JointState:
    """Fock-truncated density matrix of qubit (x) resonator(s)."""

    n_max: int
    matrix: np.ndarray
    m_max: Optional[int] = None

    @property
    def field_dim(self) -> int:
        d = self.n_max + 1
        if self.m_max is not None:
            d *= self.m_max + 1
        return d

    def qubit_state(self) -> QubitState:
        red = linalg.partial_trace_resonator(self.matrix, self.field_dim)
        return QubitState(float(red[0, 0].real), complex(red[1, 0]))

    def tail_population(self) -> float:
        trailing = 1 if self.m_max is None else self.m_max + 1
        tail = linalg.resonator_tail_population(self.matrix, self.n_max, trailing)
        if self.m_max is not None:
            nc, mc = self.n_max + 1, self.m_max + 1
            pops = np.diag(self.matrix).real.reshape(2, nc, mc)
            tail = max(tail, float(np.sum(pops[:, :, mc - 2 :])))
        return tail

    def validate(self, tail_tol: float = 1e-8) -> None:
        linalg.check_density_matrix(self.matrix, eig_tol=-1e-7)
        if self.tail_population() > tail_tol:
            raise ValueError("Fock cutoff too small: population reached the top levels")


def vacuum_joint(rho_qubit: QubitState, n_max: int, m_max: Optional[int] = None) -> JointState:
    dim = n_max + 1 if m_max is None else (n_max + 1) * (m_max + 1)
    vac = np.zeros((dim, dim), dtype=complex)
    vac[0, 0] = 1.0
    return JointState(n_max, np.kron(rho_qubit.matrix(), vac), m_max)


@dataclasses.dataclass(frozen=True)
class _Ops:
    a: np.ndarray
    ad: np.ndarray
    num_a: np.ndarray
    b: Optional[np.ndarray]
    sz: np.ndarray
    sm: np.ndarray
    sp: np.ndarray
    proj_e: np.ndarray  # sigma_+ sigma_-
    sz_num: np.ndarray  # a^dag a sigma_z


@functools.lru_cache(maxsize=8)
def _ops(n_max: int, m_max: Optional[int] = None) -> _Ops:
    a_local = linalg.annihilation(n_max)
    if m_max is None:
        a = linalg.embed_resonator(a_local)
        b = None
    else:
        a = linalg.embed_resonator(a_local, (m_max + 1,))
        b = linalg.embed_filter(linalg.annihilation(m_max), n_max + 1)
    dims = (n_max + 1,) if m_max is None else (n_max + 1, m_max + 1)
    sz = linalg.embed_qubit(linalg.SIGMA_Z, *dims)
    sm = linalg.embed_qubit(linalg.SIGMA_MINUS, *dims)
    sp = sm.conj().T
    ad = a.conj().T
    return _Ops(
        a=a, ad=ad, num_a=ad @ a, b=b, sz=sz, sm=sm, sp=sp, proj_e=sp @ sm, sz_num=sz @ ad @ a
    )


@functools.lru_cache(maxsize=32)
def build_heff(
    p: SystemParams, n_max: int, eps_d: complex = 0.0, m_max: Optional[int] = None
) -> np.ndarray:
    """Dispersive-frame Hamiltonian acting on the readout resonator and qubit."""
    ops = _ops(n_max, m_max)
    h = (
        0.5 * p.omega_a_tilde * ops.sz
        + p.delta_r * ops.num_a
        + p.chi * ops.sz_num
        + eps_d * ops.ad
        + np.conj(eps_d) * ops.a
    )
    return h


def _deterministic_rhs(
    rho: np.ndarray, p: SystemParams, ops: _Ops, heff: np.ndarray, kappa_a: float
) -> np.ndarray:
    out = -1j * (heff @ rho - rho @ heff)
    if kappa_a != 0.0:
        out += kappa_a * linalg.dissipator_apply(ops.a, rho)
    if p.gamma1 != 0.0:
        out += p.gamma1 * linalg.dissipator_apply(ops.sm, rho)
    if p.gamma_phi != 0.0:
        out += 0.5 * p.gamma_phi * linalg.dissipator_apply(ops.sz, rho)
    return out


def _cascade_rhs(rho: np.ndarray, p: SystemParams, ops: _Ops) -> np.ndarray:
    g = math.sqrt(p.kappa_b * p.kappa)
    out = 2.0 * p.kappa_b * linalg.dissipator_apply(ops.b, rho)
    ra = rho @ ops.ad
    ar = ops.a @ rho
    out -= g * (ra @ ops.b - ops.b @ ra + ops.b.conj().T @ ar - ar @ ops.b.conj().T)
    return out


def _finish_step(s: JointState, new_matrix: np.ndarray) -> JointState:
    # Euler-Maruyama updates push near-pure states slightly outside the PSD
    # cone (order dt); repair by clipping negative eigenvalues, then
    # renormalize. The repair bias on reduced dynamics scales like dt^2.
    new_matrix = linalg.herm_repair(new_matrix)
    evals, vecs = np.linalg.eigh(new_matrix)
    if evals[0] < 0.0:
        new_matrix = (vecs * np.clip(evals, 0.0, None)) @ vecs.conj().T
    tr = np.trace(new_matrix).real
    return JointState(s.n_max, new_matrix / tr, s.m_max)


@functools.lru_cache(maxsize=64)
def _homodyne_coeffs(p: SystemParams, n_max: int, eps_d: complex, m_max: Optional[int]):
    """Per-step constants of the homodyne Euler map, grouped so the drift is
    K rho + rho K^dag + kappa a rho a^dag (+ decay sandwich terms)."""
    ops = _ops(n_max, m_max)
    heff = build_heff(p, n_max, eps_d, m_max)
    k_drift = -1j * heff - 0.5 * p.kappa * ops.num_a
    if p.gamma1 != 0.0:
        k_drift = k_drift - 0.5 * p.gamma1 * ops.proj_e
    if p.gamma_phi != 0.0:
        k_drift = k_drift - 0.25 * p.gamma_phi * np.eye(heff.shape[0], dtype=complex)
    c = ops.a * np.exp(-1j * p.phi_LO)
    sk = math.sqrt(p.kappa * p.eta)
    return k_drift, k_drift.conj().T, c, c.conj().T, sk, ops


def step_full_homodyne(
    s: JointState, p: SystemParams, dW: float, dt: float, eps_d: complex = 0.0
) -> tuple[JointState, float]:
    """Euler-Maruyama step of the single-cavity homodyne SME; returns (state, j dt)."""
    kd, kdh, c, cd, sk, ops = _homodyne_coeffs(p, s.n_max, complex(eps_d), s.m_max)
    rho = s.matrix
    drift = kd @ rho
    drift += rho @ kdh
    drift += p.kappa * ((ops.a @ rho) @ ops.ad)
    if p.gamma1 != 0.0:
        drift += p.gamma1 * ((ops.sm @ rho) @ ops.sp)
    if p.gamma_phi != 0.0:
        drift += 0.5 * p.gamma_phi * ((ops.sz @ rho) @ ops.sz)
    sym = c @ rho
    sym += rho @ cd
    tr_sym = np.trace(sym).real
    j_dt = sk * tr_sym * dt + dW
    new = rho + drift * dt + (sk * dW) * (sym - tr_sym * rho)
    return _finish_step(s, new), j_dt


def jump_intensity_full(s: JointState, p: SystemParams) -> float:
    ops = _ops(s.n_max, s.m_max)
    return p.kappa * p.eta * np.trace(ops.num_a @ s.matrix).real


def step_full_photo(
    s: JointState, p: SystemParams, jump: bool, dt: float, eps_d: complex = 0.0
) -> JointState:
    """Euler step of the single-cavity photodetection SME; click applied at step start."""
    ops = _ops(s.n_max, s.m_max)
    rho = s.matrix
    if jump:
        num = ops.a @ rho @ ops.ad
        denom = np.trace(num).real
        if denom <= 0.0:
            raise ValueError("click recorded on a dark resonator state")
        rho = num / denom
    heff = build_heff(p, s.n_max, eps_d, s.m_max)
    drift = _deterministic_rhs(rho, p, ops, heff, (1.0 - p.eta) * p.kappa)
    drift -= 0.5 * p.kappa * p.eta * linalg.measure_apply(ops.num_a, rho)
    return _finish_step(s, rho + drift * dt)


def step_cascaded(
    s: JointState, p: SystemParams, dW: float, dt: float, eps_d: complex = 0.0
) -> tuple[JointState, float]:
    """Euler-Maruyama step of the two-resonator cascade with homodyne readout of the filter."""
    if s.m_max is None:
        raise ValueError("cascaded step requires a two-mode JointState")
    ops = _ops(s.n_max, s.m_max)
    heff = build_heff(p, s.n_max, eps_d, s.m_max)
    drift = _deterministic_rhs(s.matrix, p, ops, heff, p.kappa)
    drift += _cascade_rhs(s.matrix, p, ops)
    sk = math.sqrt(p.kappa_b * p.eta)
    c = ops.b * np.exp(-1j * p.phi_LO)
    innov = linalg.measure_apply(c, s.matrix)
    j_dt = sk * np.trace((c + c.conj().T) @ s.matrix).real * dt + dW
    return _finish_step(s, s.matrix + drift * dt + sk * innov * dW), j_dt


def evolve_master(s: JointState, p: SystemParams, t_end: float, dt: float = 1e-3) -> JointState:
    """Deterministic RK4 integration of the unconditional master equation from t = 0."""
    n = grid_steps(t_end, dt)
    k_off = pulse_off_index(p, n, dt)
    ops = _ops(s.n_max, s.m_max)
    h_on = build_heff(p, s.n_max, p.epsilon_m, s.m_max)
    h_off = build_heff(p, s.n_max, 0.0, s.m_max)

    def rhs(rho: np.ndarray, heff: np.ndarray) -> np.ndarray:
        out = _deterministic_rhs(rho, p, ops, heff, p.kappa)
        if s.m_max is not None:
            out += _cascade_rhs(rho, p, ops)
        return out

    rho = s.matrix.copy()
    for k in range(n):
        h = h_on if k < k_off else h_off
        k1 = rhs(rho, h)
        k2 = rhs(rho + 0.5 * dt * k1, h)
        k3 = rhs(rho + 0.5 * dt * k2, h)
        k4 = rhs(rho + dt * k3, h)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = linalg.herm_repair(rho)
    return JointState(s.n_max, rho, s.m_max)


# ---------------------------------------------------------------------------
# cascaded coherent-branch representation (exact)
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class CascadedFields:
    """Branch field amplitudes A_i (readout) and B_i (filter) on the grid."""

    dt: float
    t: np.ndarray
    a_g: np.ndarray
    a_e: np.ndarray
    b_g: np.ndarray
    b_e: np.ndarray
    k_meas: int


def integrate_cascaded_fields(p: SystemParams, t_end: float, dt: float = 1e-3) -> CascadedFields:
    """RK4 for the four coupled linear branch-field ODEs from vacuum.

    dA_i/dt = -i eps - i(delta_r -/+ chi) A_i - kappa/2 A_i
    dB_i/dt = -sqrt(kappa kappa_b) A_i - kappa_b B_i   (unidirectional coupling)
    """
    n = grid_steps(t_end, dt)
    k_meas = pulse_off_index(p, n, dt)
    t = np.arange(n + 1) * dt
    g = math.sqrt(p.kappa * p.kappa_b)
    ca = np.array(
        [
            -1j * (p.delta_r - p.chi) - 0.5 * p.kappa,
            -1j * (p.delta_r + p.chi) - 0.5 * p.kappa,
        ]
    )

    def rhs(y: np.ndarray, eps: float) -> np.ndarray:
        a, b = y[:2], y[2:]
        return np.concatenate((ca * a - 1j * eps, -g * a - p.kappa_b * b))

    out = np.zeros((n + 1, 4), dtype=complex)
    y = np.zeros(4, dtype=complex)
    for k in range(n):
        eps = p.epsilon_m if k < k_meas else 0.0
        k1 = rhs(y, eps)
        k2 = rhs(y + 0.5 * dt * k1, eps)
        k3 = rhs(y + 0.5 * dt * k2, eps)
        k4 = rhs(y + dt * k3, eps)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y
    return CascadedFields(
        dt=dt, t=t, a_g=out[:, 0], a_e=out[:, 1], b_g=out[:, 2], b_e=out[:, 3], k_meas=k_meas
    )


def _branch_derivatives(cf: CascadedFields, p: SystemParams):
    """Left-endpoint time derivatives of the branch fields on each step."""
    n = len(cf.t) - 1
    eps = np.where(np.arange(n) < cf.k_meas, p.epsilon_m, 0.0)
    g = math.sqrt(p.kappa * p.kappa_b)
    ca_g = -1j * (p.delta_r - p.chi) - 0.5 * p.kappa
    ca_e = -1j * (p.delta_r + p.chi) - 0.5 * p.kappa
    da_g = ca_g * cf.a_g[:n] - 1j * eps
    da_e = ca_e * cf.a_e[:n] - 1j * eps
    db_g = -g * cf.a_g[:n] - p.kappa_b * cf.b_g[:n]
    db_e = -g * cf.a_e[:n] - p.kappa_b * cf.b_e[:n]
    return eps, da_g, da_e, db_g, db_e


@dataclasses.dataclass(frozen=True)
class CascadedCoeffs:
    """Per-step scalar coefficients for the branch-weight SDE (left endpoints)."""

    dt: float
    t: np.ndarray
    k_meas: int
    rate_eg: np.ndarray  # deterministic d/dt log w_eg
    c_g: np.ndarray  # B_g e^{-i phi_LO}
    c_e: np.ndarray
    kick_scale: float  # sqrt(kappa_b eta)
    overlap: np.ndarray  # <A_g|A_e><B_g|B_e> on the grid (n+1 points)
    fields: CascadedFields


def prepare_cascaded_coeffs(p: SystemParams, t_end: float, dt: float = 1e-3) -> CascadedCoeffs:
    # sigma_minus maps the ee branch onto a gg dyad carrying the excited-state
    # fields, which leaves the four-branch ansatz; relaxation is not supported
    if p.gamma1 != 0.0:
        raise ValueError("branch representation requires gamma1 = 0")
    cf = integrate_cascaded_fields(p, t_end, dt)
    n = len(cf.t) - 1
    eps, da_g, da_e, db_g, db_e = _branch_derivatives(cf, p)
    a_g, a_e, b_g, b_e = cf.a_g[:n], cf.a_e[:n], cf.b_g[:n], cf.b_e[:n]
    g = math.sqrt(p.kappa * p.kappa_b)
    rate_eg = (
        -1j * p.omega_a_tilde
        - p.gamma_phi
        - 1j * eps * (a_e - np.conj(a_g))
        + p.kappa * a_e * np.conj(a_g)
        + 2.0 * p.kappa_b * b_e * np.conj(b_g)
        + g * (a_e * np.conj(b_g) + b_e * np.conj(a_g))
        + np.real(np.conj(a_e) * da_e + np.conj(a_g) * da_g)
        + np.real(np.conj(b_e) * db_e + np.conj(b_g) * db_g)
    )
    phase = np.exp(-1j * p.phi_LO)
    ov = np.exp(
        -0.5 * (np.abs(cf.a_g) ** 2 + np.abs(cf.a_e) ** 2)
        + np.conj(cf.a_g) * cf.a_e
        - 0.5 * (np.abs(cf.b_g) ** 2 + np.abs(cf.b_e) ** 2)
        + np.conj(cf.b_g) * cf.b_e
    )
    return CascadedCoeffs(
        dt=dt,
        t=cf.t,
        k_meas=cf.k_meas,
        rate_eg=rate_eg,
        c_g=b_g * phase,
        c_e=b_e * phase,
        kick_scale=math.sqrt(p.kappa_b * p.eta),
        overlap=ov,
        fields=cf,
    )


@dataclasses.dataclass
class BranchWeights:
    w_gg: float
    w_ee: float
    w_eg: complex


def step_branch_weights(
    w: BranchWeights, coeffs: CascadedCoeffs, k: int, dW: float
) -> tuple[BranchWeights, float]:
    """Euler-Maruyama step of the normalized branch-weight SDE; returns (weights, j dt)."""
    rcg = coeffs.c_g[k].real
    rce = coeffs.c_e[k].real
    m = 2.0 * (w.w_gg * rcg + w.w_ee * rce)
    kick = coeffs.kick_scale * dW
    w_gg = w.w_gg * (1.0 + (2.0 * rcg - m) * kick)
    w_ee = w.w_ee * (1.0 + (2.0 * rce - m) * kick)
    w_eg = w.w_eg * (
        1.0
        + coeffs.rate_eg[k] * coeffs.dt
        + (coeffs.c_e[k] + np.conj(coeffs.c_g[k]) - m) * kick
    )
    total = w_gg + w_ee
    j_dt = coeffs.kick_scale * m * coeffs.dt + dW
    return BranchWeights(w_gg / total, w_ee / total, w_eg / total), j_dt


def branch_qubit_state(w: BranchWeights, coeffs: CascadedCoeffs, k: int) -> QubitState:
    """Reduced qubit state at grid index k: overlaps contract the field kets."""
    return QubitState(w.w_gg, w.w_eg * coeffs.overlap[k])


def branches_to_joint(
    w: BranchWeights, coeffs: CascadedCoeffs, k: int, n_max: int, m_max: int
) -> JointState:
    """Assemble the explicit Fock-space matrix of the branch state (validation aid)."""
    cf = coeffs.fields
    kets = {
        "g": np.kron(linalg.coherent_state(cf.a_g[k], n_max), linalg.coherent_state(cf.b_g[k], m_max)),
        "e": np.kron(linalg.coherent_state(cf.a_e[k], n_max), linalg.coherent_state(cf.b_e[k], m_max)),
    }
    qb = {"g": np.array([1.0, 0.0], dtype=complex), "e": np.array([0.0, 1.0], dtype=complex)}
    weights = {
        ("g", "g"): w.w_gg,
        ("e", "e"): w.w_ee,
        ("e", "g"): w.w_eg,
        ("g", "e"): np.conj(w.w_eg),
    }
    dim = 2 * (n_max + 1) * (m_max + 1)
    out = np.zeros((dim, dim), dtype=complex)
    for (i, j), wij in weights.items():
        ket = np.kron(qb[i], kets[i])
        bra = np.kron(qb[j], kets[j])
        out += wij * np.outer(ket, bra.conj())
    return JointState(n_max, out, m_max)


def simulate_cascaded_branches(
    coeffs: CascadedCoeffs, w0: BranchWeights, dWs: np.ndarray
) -> tuple[list[BranchWeights], np.ndarray]:
    """Reference loop over step_branch_weights."""
    n = len(coeffs.t) - 1
    if len(dWs) != n:
        raise ValueError("dW stream does not match the coefficient grid")
    weights = [w0]
    samples = np.empty(n)
    w = w0
    for k in range(n):
        w, samples[k] = step_branch_weights(w, coeffs, k, float(dWs[k]))
        weights.append(w)
    return weights, samples
