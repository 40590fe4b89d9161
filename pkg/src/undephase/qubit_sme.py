"""Effective qubit-only stochastic master equations conditioned on the readout record.

Both unravelings evolve only (rho_gg, rho_eg): the qubit populations are
frozen up to gamma_1, and the field enters through the precomputed amplitudes
alpha_g, alpha_e of a FieldTrajectory. Homodyne detection gives a diffusive
equation driven by the Wiener increments dW; photodetection gives a jump
equation driven by detector clicks. Each has an analytic solution whose phase
can be undone from the record alone.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .fields import FieldSample, FieldTrajectory, SystemParams

JUMP_PROB_GUARD = 0.01


@dataclasses.dataclass(frozen=True)
class QubitState:
    """Qubit density matrix in the (g, e) basis: diag (rho_gg, 1 - rho_gg), offdiag rho_eg = <e|rho|g>."""

    rho_gg: float
    rho_eg: complex

    @property
    def rho_ee(self) -> float:
        return 1.0 - self.rho_gg

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.rho_gg, np.conj(self.rho_eg)], [self.rho_eg, self.rho_ee]], dtype=complex
        )

    def purity(self) -> float:
        return self.rho_gg**2 + self.rho_ee**2 + 2.0 * abs(self.rho_eg) ** 2

    def validate(self, tol: float = 1e-9) -> None:
        if not -tol <= self.rho_gg <= 1.0 + tol:
            raise ValueError("rho_gg outside [0, 1]")
        if abs(self.rho_eg) ** 2 > self.rho_gg * self.rho_ee + tol:
            raise ValueError("coherence exceeds positivity bound")


PLUS_STATE = QubitState(rho_gg=0.5, rho_eg=0.5 + 0.0j)


@dataclasses.dataclass(frozen=True)
class MeasurementRecord:
    """One detector record: homodyne samples j dt per step, or photon arrival times."""

    kind: str
    dt: float
    samples: Optional[np.ndarray] = None
    jump_times: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("homodyne", "photo"):
            raise ValueError(f"unknown record kind {self.kind!r}")
        if self.kind == "homodyne":
            if self.samples is None:
                raise ValueError("homodyne record requires samples")
        else:
            if self.jump_times is None:
                raise ValueError("photo record requires jump_times")
            jt = np.asarray(self.jump_times)
            if jt.size > 1 and not np.all(np.diff(jt) > 0.0):
                raise ValueError("jump_times must be strictly increasing")


@dataclasses.dataclass(frozen=True)
class StochasticPhase:
    theta: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.theta):
            raise ValueError("phase must be finite")


def _theta_value(theta) -> float:
    return theta.theta if isinstance(theta, StochasticPhase) else float(theta)


def _repair_state(rho_gg: float, rho_eg: complex) -> QubitState:
    # trace/Hermiticity are structural in this parametrization; clamp the
    # population against Euler overshoot. The coherence is deliberately left
    # unclipped: folding the O(sqrt(dt)) Euler noise back inside the Bloch
    # ball at the pure-state boundary |rho_eg| = 1/2 would bias magnitudes
    # downward, while the raw excursions are zero-mean and vanish with dt.
    rho_gg = min(max(rho_gg, 0.0), 1.0)
    return QubitState(rho_gg, rho_eg)


# ---------------------------------------------------------------------------
# homodyne unraveling
# ---------------------------------------------------------------------------


def step_homodyne(
    rho: QubitState, f: FieldSample, p: SystemParams, dW: float, dt: float
) -> tuple[QubitState, float]:
    """One Euler-Maruyama step of the conditional qubit equation under homodyne detection.

    Returns the updated state and the current sample j dt generated by this
    step. The innovation operator is Pi_alpha e^{-i phi_LO} with
    Pi_alpha = alpha_g |g><g| + alpha_e |e><e|.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    sk = math.sqrt(p.kappa * p.eta)
    phase = np.exp(-1j * p.phi_LO)
    c_g = f.alpha_g * phase
    c_e = f.alpha_e * phase
    rcg, rce = c_g.real, c_e.real
    mean_q = rho.rho_gg * rcg + rho.rho_ee * rce  # <Pi e^{-i phi} + h.c.> / 2

    drift_gg = p.gamma1 * rho.rho_ee
    noise_gg = 2.0 * sk * rho.rho_gg * rho.rho_ee * (rcg - rce)
    rate_eg = (
        -1j * (p.omega_a_tilde + f.stark_b)
        - f.gamma_d
        - p.gamma_phi
        - 0.5 * p.gamma1
    )
    noise_eg = sk * (c_e + np.conj(c_g) - 2.0 * mean_q)

    new_gg = rho.rho_gg + drift_gg * dt + noise_gg * dW
    new_eg = rho.rho_eg * (1.0 + rate_eg * dt + noise_eg * dW)
    j_dt = 2.0 * sk * mean_q * dt + dW
    return _repair_state(new_gg, new_eg), j_dt


def simulate_homodyne(
    rho0: QubitState, traj: FieldTrajectory, p: SystemParams, dWs: np.ndarray
) -> tuple[list[QubitState], np.ndarray]:
    """Reference loop over step_homodyne; returns states on the grid and the record samples."""
    n = traj.n_steps
    if len(dWs) != n:
        raise ValueError("dW stream does not match the field grid")
    states = [rho0]
    samples = np.empty(n)
    rho = rho0
    for k in range(n):
        rho, samples[k] = step_homodyne(rho, traj.sample(k), p, float(dWs[k]), traj.dt)
        states.append(rho)
    return states, samples


def analytic_offdiag_homodyne(
    rho_eg0: complex, traj: FieldTrajectory, dWs: np.ndarray, p: SystemParams
) -> np.ndarray:
    """Exact solution of the homodyne off-diagonal equation on the grid.

    rho_eg(t) = rho_eg(0) exp[ int (-Gamma_d + 2 kappa eta Re^2 alpha_g) ds
                               + 2i sqrt(kappa eta) int Re(alpha_g) dW ].
    Valid for gamma_1 = gamma_phi = 0, delta_r = 0, phi_LO = pi/2, with the
    deterministic qubit rotation excluded.
    """
    _require_phase_frame(p)
    ks = p.kappa * p.eta
    re_g = np.real(traj.alpha_g)
    exponent_re = cumulative_trapezoid(
        -traj.gamma_d + 2.0 * ks * re_g**2, dx=traj.dt, initial=0.0
    )
    kicks = 2.0 * math.sqrt(ks) * re_g[:-1] * np.asarray(dWs)
    exponent_im = np.concatenate(([0.0], np.cumsum(kicks)))
    return rho_eg0 * np.exp(exponent_re + 1j * exponent_im)


def _require_phase_frame(p: SystemParams) -> None:
    if p.gamma1 != 0.0 or p.gamma_phi != 0.0:
        raise ValueError("analytic form requires gamma_1 = gamma_phi = 0")
    if p.delta_r != 0.0:
        raise ValueError("analytic form requires delta_r = 0")
    if abs(p.phi_LO - math.pi / 2.0) > 1e-12:
        raise ValueError("analytic form requires phi_LO = pi/2")


def extract_noise(
    rec: MeasurementRecord, traj: FieldTrajectory, p: SystemParams
) -> np.ndarray:
    """Invert the current formula j dt = 2 sqrt(kappa eta) Im(alpha_g) dt + dW."""
    if rec.kind != "homodyne":
        raise ValueError("noise extraction defined for homodyne records")
    _require_phase_frame(p)
    samples = np.asarray(rec.samples)
    if len(samples) != traj.n_steps:
        raise ValueError("record length does not match the field grid")
    sk = math.sqrt(p.kappa * p.eta)
    return samples - 2.0 * sk * np.imag(traj.alpha_g[:-1]) * traj.dt


def stochastic_phase_homodyne(
    dWs: Sequence[float], traj: FieldTrajectory, p: SystemParams
) -> StochasticPhase:
    """Accumulated stochastic phase theta = 2 sqrt(kappa eta) sum Re(alpha_g) dW.

    Accepts a truncated noise stream; the sum runs over the provided
    increments only (left-point field values).
    """
    dWs = np.asarray(dWs)
    if len(dWs) > traj.n_steps:
        raise ValueError("noise stream longer than the field grid")
    sk = math.sqrt(p.kappa * p.eta)
    theta = 2.0 * sk * float(np.sum(np.real(traj.alpha_g[: len(dWs)]) * dWs))
    return StochasticPhase(theta)


def apply_phase_correction(rho: QubitState, theta) -> QubitState:
    """Conditional correction rho_eg <- rho_eg e^{-i theta}; diagonals untouched."""
    th = _theta_value(theta)
    return QubitState(rho.rho_gg, rho.rho_eg * np.exp(-1j * th))


def rotation_angle(traj: FieldTrajectory, p: SystemParams, n_steps: Optional[int] = None) -> float:
    """Deterministic phase register Lambda = sum (omega_a + B) dt (left endpoints).

    The conditional state carries e^{-i Lambda}; remove it with
    apply_phase_correction(rho, -Lambda) before analytic comparisons.
    """
    n = traj.n_steps if n_steps is None else n_steps
    return float(np.sum((p.omega_a_tilde + traj.stark_b[:n]) * traj.dt))


# ---------------------------------------------------------------------------
# photodetection unraveling
# ---------------------------------------------------------------------------


def _photo_rates(rho_gg, rho_ee, f: FieldSample, p: SystemParams):
    ng = abs(f.alpha_g) ** 2
    ne = abs(f.alpha_e) ** 2
    ke = p.kappa * p.eta
    nbar = ng * rho_gg + ne * rho_ee
    d_gg = p.gamma1 * rho_ee - ke * (ng - nbar) * rho_gg
    rate_eg = (
        -1j * (p.omega_a_tilde + f.stark_b)
        - f.gamma_d
        - p.gamma_phi
        - 0.5 * p.gamma1
        - ke * (f.alpha_e * np.conj(f.alpha_g) - nbar)
    )
    return d_gg, rate_eg


def jump_probability(rho: QubitState, f: FieldSample, p: SystemParams, dt: float) -> float:
    ng = abs(f.alpha_g) ** 2
    ne = abs(f.alpha_e) ** 2
    return p.kappa * p.eta * (ng * rho.rho_gg + ne * rho.rho_ee) * dt


def sample_jump(rho: QubitState, f: FieldSample, p: SystemParams, dt: float, u: float) -> bool:
    """Bernoulli thinning of the detection process with intensity eta kappa <Pi^dag Pi>."""
    prob = jump_probability(rho, f, p, dt)
    if prob >= JUMP_PROB_GUARD:
        raise ValueError("jump probability per step exceeds the smallness guard; reduce dt")
    return u < prob


def step_photo(
    rho: QubitState,
    f: FieldSample,
    p: SystemParams,
    jump: bool,
    dt: float,
    f_end: Optional[FieldSample] = None,
) -> QubitState:
    """One step of the conditional qubit equation under photodetection.

    A detector click (jump = true) applies G[Pi_alpha] at the step start with
    the fields of sample f; the no-click drift then advances the state. With
    f_end supplied the drift uses a Heun (trapezoidal) update, otherwise plain
    Euler.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    rho_gg, rho_eg = rho.rho_gg, rho.rho_eg
    if jump:
        ng = abs(f.alpha_g) ** 2
        ne = abs(f.alpha_e) ** 2
        nbar = ng * rho_gg + ne * rho.rho_ee
        if nbar <= 0.0:
            raise ValueError("click recorded while the detection intensity vanishes")
        rho_eg = f.alpha_e * np.conj(f.alpha_g) * rho_eg / nbar
        rho_gg = ng * rho_gg / nbar

    d_gg1, rate_eg1 = _photo_rates(rho_gg, 1.0 - rho_gg, f, p)
    if f_end is None:
        new_gg = rho_gg + d_gg1 * dt
        new_eg = rho_eg * (1.0 + rate_eg1 * dt)
    else:
        mid_gg = rho_gg + d_gg1 * dt
        mid_eg = rho_eg * (1.0 + rate_eg1 * dt)
        d_gg2, rate_eg2 = _photo_rates(mid_gg, 1.0 - mid_gg, f_end, p)
        new_gg = rho_gg + 0.5 * dt * (d_gg1 + d_gg2)
        new_eg = rho_eg * (1.0 + 0.5 * dt * (rate_eg1 + rate_eg2 + rate_eg1 * rate_eg2 * dt))
    return _repair_state(float(new_gg), complex(new_eg))


def simulate_photo(
    rho0: QubitState,
    traj: FieldTrajectory,
    p: SystemParams,
    uniforms: np.ndarray,
) -> tuple[list[QubitState], np.ndarray]:
    """Reference photodetection loop; clicks decided per step from the supplied uniforms."""
    n = traj.n_steps
    if len(uniforms) != n:
        raise ValueError("uniform stream does not match the field grid")
    states = [rho0]
    rho = rho0
    jumps = []
    for k in range(n):
        f = traj.sample(k)
        jump = sample_jump(rho, f, p, traj.dt, float(uniforms[k]))
        if jump:
            jumps.append(traj.t[k])
        rho = step_photo(rho, f, p, jump, traj.dt, f_end=traj.sample(k + 1))
        states.append(rho)
    return states, np.array(jumps)


def analytic_offdiag_photo(
    rho_eg0: complex, traj: FieldTrajectory, jump_times: Sequence[float], p: SystemParams
) -> complex:
    """Product-form solution of the photodetection off-diagonal equation.

    rho_eg(t_end) = rho_eg(0) exp[ int (-Gamma_d + eta kappa (alpha_e^2 + N_alpha)) ds ]
                    prod_N ( -e^{2 i xi(t_N)} ),   xi = Arg(alpha_e).
    Requires delta_r = 0 and gamma_1 = gamma_phi = 0; the deterministic qubit
    rotation is excluded.
    """
    if p.delta_r != 0.0:
        raise ValueError("product form requires delta_r = 0")
    if p.gamma1 != 0.0 or p.gamma_phi != 0.0:
        raise ValueError("product form requires gamma_1 = gamma_phi = 0")
    ke = p.kappa * p.eta
    rate = -traj.gamma_d + ke * (traj.alpha_e**2 + traj.n_alpha)
    exponent = np.trapezoid(rate, dx=traj.dt)
    out = rho_eg0 * np.exp(exponent)
    for t_n in np.asarray(jump_times):
        k = int(round(t_n / traj.dt))
        if abs(k * traj.dt - t_n) > 1e-9 or not 0 <= k <= traj.n_steps:
            raise ValueError("jump time does not sit on the field grid")
        xi = np.angle(traj.alpha_e[k])
        out = out * (-np.exp(2j * xi))
    return complex(out)


def photo_phase_correction(
    jump_times: Sequence[float], traj: FieldTrajectory, p: SystemParams
) -> StochasticPhase:
    """Total record-conditioned phase of the photodetection solution.

    theta = sum_N (pi + 2 xi(t_N)) + int eta kappa Im(alpha_e^2) ds; undoing it
    restores the initial coherence phase exactly at eta = 1.
    """
    ke = p.kappa * p.eta
    theta = ke * float(np.trapezoid(np.imag(traj.alpha_e**2), dx=traj.dt))
    for t_n in np.asarray(jump_times):
        k = int(round(t_n / traj.dt))
        if abs(k * traj.dt - t_n) > 1e-9 or not 0 <= k <= traj.n_steps:
            raise ValueError("jump time does not sit on the field grid")
        theta += math.pi + 2.0 * float(np.angle(traj.alpha_e[k]))
    return StochasticPhase(theta)
