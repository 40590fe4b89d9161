"""Trajectory-ensemble drivers: deterministic streams, kernels, bit-stable reduction.

Each trajectory owns a counter-based RNG stream keyed by (master seed,
trajectory index), drawing its Wiener increments in one standard_normal call
(then any uniforms), so ensembles are reproducible for a fixed seed no matter
how trajectories are batched. Reduction walks trajectories in index order with
compensated summation, which keeps the output bit-stable as well.

Three phase-accounting variants are reduced side by side:
  no-fb     raw conditional coherence, no correction applied
  fb-trunc  corrected with the record truncated at the pulse turn-off
  fb-full   corrected with the full record including the ring-down
The correction phase is always computed from the recorded current through the
ideal-chain inversion (subtract the deterministic mean, weigh by Re alpha_g),
which is exact for the single-resonator chain and deliberately model-blind for
the bandwidth-limited chain.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional

import numpy as np

from . import cavity_sme
from .backend import get_backend
from .fields import GRID_ALIGN_TOL, FieldTrajectory, SystemParams, grid_steps, integrate_fields
from .qubit_sme import PLUS_STATE, QubitState

_PHILOX_MASK = (1 << 64) - 1


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one trajectory: key = (master seed, index)."""
    if seed < 0 or index < 0:
        raise ValueError("seed and trajectory index must be nonnegative")
    return np.random.Generator(np.random.Philox(key=[seed & _PHILOX_MASK, index]))


def draw_wiener(
    seed: int, lo: int, hi: int, n_steps: int, sqrt_dt: float, n_uniform: int = 0
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Wiener increments (and trailing uniforms) for trajectories lo..hi-1."""
    dws = np.empty((hi - lo, n_steps))
    us = np.empty((hi - lo, n_uniform)) if n_uniform else None
    for i in range(hi - lo):
        rng = trajectory_rng(seed, lo + i)
        dws[i] = rng.standard_normal(n_steps) * sqrt_dt
        if n_uniform:
            us[i] = rng.random(n_uniform)
    return dws, us


class KahanAccumulator:
    """Elementwise compensated summation; add order defines the result bits."""

    def __init__(self, shape) -> None:
        self._sum = np.zeros(shape)
        self._comp = np.zeros(shape)

    def add(self, x: np.ndarray) -> None:
        y = x - self._comp
        t = self._sum + y
        self._comp = (t - self._sum) - y
        self._sum = t

    @property
    def value(self) -> np.ndarray:
        return self._sum.copy()


def _snap_positions(n_steps: int, snap_idx: np.ndarray) -> np.ndarray:
    snap_idx = np.asarray(snap_idx, dtype=np.int64)
    if snap_idx.size == 0:
        raise ValueError("at least one snapshot index is required")
    if snap_idx[0] < 0 or snap_idx[-1] > n_steps or np.any(np.diff(snap_idx) <= 0):
        raise ValueError("snapshot indices must be increasing grid indices")
    pos = np.full(n_steps + 1, -1, dtype=np.int64)
    pos[snap_idx] = np.arange(snap_idx.size, dtype=np.int64)
    return pos


def _time_indices(times: np.ndarray, dt: float) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    idx = np.rint(times / dt).astype(np.int64)
    if np.any(np.abs(idx * dt - times) > GRID_ALIGN_TOL):
        raise ValueError("sample times must fall on the integration grid")
    return idx


@dataclasses.dataclass(frozen=True)
class HomodyneKernelCoeffs:
    """Per-step scalar coefficients of the effective homodyne SME (left endpoints)."""

    dt: float
    n_steps: int
    k_meas: int
    sk: float
    gamma1_dt: float
    rcg: np.ndarray
    rce: np.ndarray
    drc: np.ndarray
    s_re: np.ndarray
    s_im: np.ndarray
    rate_re_dt: np.ndarray
    rate_im_dt: np.ndarray
    est_re: np.ndarray
    est_mean_dt: np.ndarray
    traj: FieldTrajectory

    def run(self, bk, dws: np.ndarray, snap_idx: np.ndarray, initial: QubitState):
        snap_pos = _snap_positions(self.n_steps, snap_idx)
        return bk.homodyne_chunk(
            np.ascontiguousarray(dws),
            self.rcg,
            self.rce,
            self.drc,
            self.s_re,
            self.s_im,
            self.rate_re_dt,
            self.rate_im_dt,
            self.est_re,
            self.est_mean_dt,
            self.gamma1_dt,
            self.sk,
            self.dt,
            self.k_meas,
            snap_pos,
            len(snap_idx),
            initial.rho_gg,
            initial.rho_eg.real,
            initial.rho_eg.imag,
        )


@dataclasses.dataclass(frozen=True)
class CascadedKernelCoeffs:
    """Per-step coefficients of the branch-weight SME plus the ideal-chain estimator."""

    dt: float
    n_steps: int
    k_meas: int
    kick_scale: float
    rcg: np.ndarray
    rce: np.ndarray
    s_re: np.ndarray
    s_im: np.ndarray
    rate_re_dt: np.ndarray
    rate_im_dt: np.ndarray
    est_re: np.ndarray
    est_mean_dt: np.ndarray
    overlap: np.ndarray
    coeffs: cavity_sme.CascadedCoeffs

    def run(self, bk, dws: np.ndarray, snap_idx: np.ndarray, initial: QubitState):
        snap_pos = _snap_positions(self.n_steps, snap_idx)
        ov = self.overlap[np.asarray(snap_idx, dtype=np.int64)]
        return bk.cascaded_chunk(
            np.ascontiguousarray(dws),
            self.rcg,
            self.rce,
            self.s_re,
            self.s_im,
            self.rate_re_dt,
            self.rate_im_dt,
            self.est_re,
            self.est_mean_dt,
            np.ascontiguousarray(ov.real),
            np.ascontiguousarray(ov.imag),
            self.kick_scale,
            self.dt,
            self.k_meas,
            snap_pos,
            len(snap_idx),
            initial.rho_gg,
            initial.rho_ee,
            initial.rho_eg.real,
            initial.rho_eg.imag,
        )


def prepare_homodyne_kernel(p: SystemParams, t_end: float, dt: float) -> HomodyneKernelCoeffs:
    """Precompute the per-step arrays the homodyne kernel consumes.

    The estimator arrays implement the record inversion
    dW = j dt - 2 sqrt(kappa eta) Im(alpha_g) dt and the phase weight
    2 sqrt(kappa eta) Re(alpha_g), per step, with left-endpoint fields.
    """
    traj = integrate_fields(p, t_end, dt)
    n = traj.n_steps
    sk = math.sqrt(p.kappa * p.eta)
    ph = np.exp(-1j * p.phi_LO)
    cg = traj.alpha_g[:n] * ph
    ce = traj.alpha_e[:n] * ph
    s = ce + np.conj(cg)
    rate = -1j * (p.omega_a_tilde + traj.stark_b[:n]) - traj.gamma_d[:n] - p.gamma_phi - 0.5 * p.gamma1
    return HomodyneKernelCoeffs(
        dt=dt,
        n_steps=n,
        k_meas=traj.k_meas,
        sk=sk,
        gamma1_dt=p.gamma1 * dt,
        rcg=np.ascontiguousarray(cg.real),
        rce=np.ascontiguousarray(ce.real),
        drc=np.ascontiguousarray(cg.real - ce.real),
        s_re=np.ascontiguousarray(s.real),
        s_im=np.ascontiguousarray(s.imag),
        rate_re_dt=np.ascontiguousarray(rate.real * dt),
        rate_im_dt=np.ascontiguousarray(rate.imag * dt),
        est_re=np.ascontiguousarray(2.0 * sk * np.real(traj.alpha_g[:n])),
        est_mean_dt=np.ascontiguousarray(2.0 * sk * np.imag(traj.alpha_g[:n]) * dt),
        traj=traj,
    )


def prepare_cascaded_kernel(p: SystemParams, t_end: float, dt: float) -> CascadedKernelCoeffs:
    """Precompute the branch-weight arrays plus the single-resonator estimator.

    The correction deliberately uses the ideal-chain inversion (built from the
    bare alpha_g, not the filtered branch fields): the observer undoes the
    phase as if the detection chain had unlimited bandwidth, so the residual
    dephasing measures what the filter withholds.
    """
    coeffs = cavity_sme.prepare_cascaded_coeffs(p, t_end, dt)
    n = len(coeffs.t) - 1
    s = coeffs.c_e + np.conj(coeffs.c_g)
    sk = math.sqrt(p.kappa * p.eta)
    est_traj = integrate_fields(p, t_end, dt)
    return CascadedKernelCoeffs(
        dt=dt,
        n_steps=n,
        k_meas=coeffs.k_meas,
        kick_scale=coeffs.kick_scale,
        rcg=np.ascontiguousarray(coeffs.c_g.real),
        rce=np.ascontiguousarray(coeffs.c_e.real),
        s_re=np.ascontiguousarray(s.real),
        s_im=np.ascontiguousarray(s.imag),
        rate_re_dt=np.ascontiguousarray(coeffs.rate_eg.real * dt),
        rate_im_dt=np.ascontiguousarray(coeffs.rate_eg.imag * dt),
        est_re=np.ascontiguousarray(2.0 * sk * np.real(est_traj.alpha_g[:n])),
        est_mean_dt=np.ascontiguousarray(2.0 * sk * np.imag(est_traj.alpha_g[:n]) * dt),
        overlap=coeffs.overlap,
        coeffs=coeffs,
    )


@dataclasses.dataclass(frozen=True)
class EnsembleResult:
    """Reduced ensemble statistics on the snapshot grid.

    purity_state_* is the purity of the ensemble-averaged state per variant;
    purity_mean_of_purities averages the per-trajectory purity (identical for
    all variants because a phase rotation never changes |rho_eg|). stderr_*
    are delta-method standard errors of the mean-state purities.
    """

    times: np.ndarray
    t_off: Optional[np.ndarray]
    n_trajectories: int
    mean_rho_gg: np.ndarray
    mean_rho_eg_nofb: np.ndarray
    mean_rho_eg_trunc: np.ndarray
    mean_rho_eg_full: np.ndarray
    purity_state_nofb: np.ndarray
    purity_state_trunc: np.ndarray
    purity_state_full: np.ndarray
    purity_mean_of_purities: np.ndarray
    stderr_state_nofb: np.ndarray
    stderr_state_trunc: np.ndarray
    stderr_state_full: np.ndarray
    stderr_mean_of_purities: np.ndarray


_N_BASE = 4  # g, g^2, purity, purity^2
_N_VAR = 7  # x, y, x^2, y^2, xy, gx, gy per variant


def _stack_rows(g, z_re, z_im, theta, theta_trunc):
    """Per-trajectory reduction rows: base stats plus the three variants."""
    cos_f = np.cos(theta)
    sin_f = np.sin(theta)
    x_f = z_re * cos_f + z_im * sin_f
    y_f = z_im * cos_f - z_re * sin_f
    cos_t = np.cos(theta_trunc)[:, None]
    sin_t = np.sin(theta_trunc)[:, None]
    x_t = z_re * cos_t + z_im * sin_t
    y_t = z_im * cos_t - z_re * sin_t
    purity = g * g + (1.0 - g) * (1.0 - g) + 2.0 * (z_re * z_re + z_im * z_im)
    pieces = [g, g * g, purity, purity * purity]
    for x, y in ((z_re, z_im), (x_t, y_t), (x_f, y_f)):
        pieces.extend([x, y, x * x, y * y, x * y, g * x, g * y])
    return np.stack(pieces, axis=1)


def _finalize(sums: np.ndarray, n: int, times: np.ndarray, t_off) -> EnsembleResult:
    m = sums / n
    mg = m[0]
    mop = m[2]
    denom = max(n - 1, 1)
    var_mop = np.maximum(sums[3] - n * mop * mop, 0.0) / denom
    c_gg = np.maximum(sums[1] - n * mg * mg, 0.0) / denom

    means, purities, stderrs = [], [], []
    for v in range(3):
        o = _N_BASE + v * _N_VAR
        x, y = m[o], m[o + 1]
        c_xx = np.maximum(sums[o + 2] - n * x * x, 0.0) / denom
        c_yy = np.maximum(sums[o + 3] - n * y * y, 0.0) / denom
        c_xy = (sums[o + 4] - n * x * y) / denom
        c_gx = (sums[o + 5] - n * mg * x) / denom
        c_gy = (sums[o + 6] - n * mg * y) / denom
        d_g = 4.0 * mg - 2.0
        d_x = 4.0 * x
        d_y = 4.0 * y
        var = (
            d_g * d_g * c_gg
            + d_x * d_x * c_xx
            + d_y * d_y * c_yy
            + 2.0 * (d_g * d_x * c_gx + d_g * d_y * c_gy + d_x * d_y * c_xy)
        ) / n
        means.append(x + 1j * y)
        purities.append(mg * mg + (1.0 - mg) * (1.0 - mg) + 2.0 * (x * x + y * y))
        stderrs.append(np.sqrt(np.maximum(var, 0.0)))

    return EnsembleResult(
        times=times,
        t_off=t_off,
        n_trajectories=n,
        mean_rho_gg=mg,
        mean_rho_eg_nofb=means[0],
        mean_rho_eg_trunc=means[1],
        mean_rho_eg_full=means[2],
        purity_state_nofb=purities[0],
        purity_state_trunc=purities[1],
        purity_state_full=purities[2],
        purity_mean_of_purities=mop,
        stderr_state_nofb=stderrs[0],
        stderr_state_trunc=stderrs[1],
        stderr_state_full=stderrs[2],
        stderr_mean_of_purities=np.sqrt(var_mop / n),
    )


def _resolve_times(p: SystemParams, t_offs, sample_times, dt: float):
    if (t_offs is None) == (sample_times is None):
        raise ValueError("provide exactly one of t_offs or sample_times")
    if t_offs is not None:
        t_offs = np.asarray(t_offs, dtype=float)
        times = p.t_meas + t_offs
    else:
        times = np.asarray(sample_times, dtype=float)
    return times, t_offs


def _run_reduced(coeffs, n_trajectories, seed, snap_idx, times, t_off, initial, backend, chunk, stream_offset):
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be at least 1")
    bk = get_backend(backend)
    sqrt_dt = math.sqrt(coeffs.dt)
    acc = KahanAccumulator((_N_BASE + 3 * _N_VAR, len(snap_idx)))
    for lo in range(0, n_trajectories, chunk):
        hi = min(lo + chunk, n_trajectories)
        dws, _ = draw_wiener(seed, stream_offset + lo, stream_offset + hi, coeffs.n_steps, sqrt_dt)
        g, z_re, z_im, theta, theta_tr, _ = coeffs.run(bk, dws, snap_idx, initial)
        rows = _stack_rows(g, z_re, z_im, theta, theta_tr)
        for i in range(hi - lo):
            acc.add(rows[i])
    return _finalize(acc.value, n_trajectories, times, t_off)


def run_homodyne_ensemble(
    p: SystemParams,
    n_trajectories: int,
    seed: int,
    *,
    t_offs=None,
    sample_times=None,
    dt: float = 1e-3,
    backend: str = "auto",
    chunk: int = 256,
    initial: QubitState = PLUS_STATE,
    stream_offset: int = 0,
) -> EnsembleResult:
    """Effective-qubit homodyne ensemble sampled at t_meas + t_offs.

    Pass sample_times instead of t_offs for absolute sampling times (used for
    the always-on-drive saturation study, where t_off has no meaning).
    """
    times, t_off = _resolve_times(p, t_offs, sample_times, dt)
    coeffs = prepare_homodyne_kernel(p, float(np.max(times)), dt)
    snap_idx = _time_indices(times, dt)
    return _run_reduced(
        coeffs, n_trajectories, seed, snap_idx, times, t_off, initial, backend, chunk, stream_offset
    )


def run_cascaded_ensemble(
    p: SystemParams,
    n_trajectories: int,
    seed: int,
    *,
    t_offs=None,
    sample_times=None,
    dt: float = 1e-3,
    backend: str = "auto",
    chunk: int = 256,
    initial: QubitState = PLUS_STATE,
    stream_offset: int = 0,
) -> EnsembleResult:
    """Bandwidth-limited (two-resonator) ensemble with the ideal-chain correction."""
    times, t_off = _resolve_times(p, t_offs, sample_times, dt)
    coeffs = prepare_cascaded_kernel(p, float(np.max(times)), dt)
    snap_idx = _time_indices(times, dt)
    return _run_reduced(
        coeffs, n_trajectories, seed, snap_idx, times, t_off, initial, backend, chunk, stream_offset
    )


@dataclasses.dataclass(frozen=True)
class TrajectoryResult:
    """One conditional trajectory on the full grid."""

    t: np.ndarray
    rho_gg: np.ndarray
    rho_eg: np.ndarray
    theta: np.ndarray
    theta_trunc: float
    s_int: float

    def purity(self) -> np.ndarray:
        return self.rho_gg**2 + (1.0 - self.rho_gg) ** 2 + 2.0 * np.abs(self.rho_eg) ** 2

    def corrected_rho_eg(self) -> np.ndarray:
        """Coherence after undoing the record-conditioned phase at each time."""
        return self.rho_eg * np.exp(-1j * self.theta)


def run_trajectory(
    p: SystemParams,
    seed: int,
    index: int = 0,
    *,
    dt: float = 1e-3,
    t_end: Optional[float] = None,
    cascaded: bool = False,
    backend: str = "auto",
    initial: QubitState = PLUS_STATE,
) -> TrajectoryResult:
    """Single trajectory (stream `index` of `seed`) sampled on every grid point."""
    if t_end is None:
        t_end = p.t_total
    prepare = prepare_cascaded_kernel if cascaded else prepare_homodyne_kernel
    coeffs = prepare(p, t_end, dt)
    n = coeffs.n_steps
    bk = get_backend(backend)
    dws, _ = draw_wiener(seed, index, index + 1, n, math.sqrt(dt))
    snap_idx = np.arange(n + 1, dtype=np.int64)
    g, z_re, z_im, theta, theta_tr, s_int = coeffs.run(bk, dws, snap_idx, initial)
    return TrajectoryResult(
        t=np.arange(n + 1) * dt,
        rho_gg=g[0],
        rho_eg=z_re[0] + 1j * z_im[0],
        theta=theta[0],
        theta_trunc=float(theta_tr[0]),
        s_int=float(s_int[0]),
    )


def run_ks_pair(
    p: SystemParams,
    n_trajectories: int,
    seed: int,
    *,
    dt: float = 1e-3,
    t_end: Optional[float] = None,
    backend: str = "auto",
    chunk: int = 256,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrated currents S = sum j dt for initial |g> and initial |e| ensembles.

    The two ensembles use disjoint stream indices of the same master seed.
    Comparing the two S distributions tests that the record carries no
    information about the qubit state.
    """
    if t_end is None:
        t_end = p.t_total
    coeffs = prepare_homodyne_kernel(p, t_end, dt)
    n = coeffs.n_steps
    bk = get_backend(backend)
    sqrt_dt = math.sqrt(dt)
    snap_idx = np.array([n], dtype=np.int64)
    out = []
    for which, offset in ((QubitState(1.0, 0.0j), 0), (QubitState(0.0, 0.0j), n_trajectories)):
        s_all = np.empty(n_trajectories)
        for lo in range(0, n_trajectories, chunk):
            hi = min(lo + chunk, n_trajectories)
            dws, _ = draw_wiener(seed, offset + lo, offset + hi, n, sqrt_dt)
            *_, s_int = coeffs.run(bk, dws, snap_idx, which)
            s_all[lo:hi] = s_int
        out.append(s_all)
    return out[0], out[1]
