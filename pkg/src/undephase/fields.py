"""Deterministic readout-field dynamics under the step measurement pulse.

The two coherent amplitudes alpha_g, alpha_e obey linear ODEs driven by
epsilon_d(t) = epsilon_m [Theta(t) - Theta(t - t_meas)]; everything downstream
(dephasing rate Gamma_d, Stark shift B, photon number N_alpha) derives from
them. All rates and times are in kappa = 1 units.
"""

from __future__ import annotations

import dataclasses
import math
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

GRID_ALIGN_TOL = 1e-9


@dataclasses.dataclass(frozen=True)
class SystemParams:
    """Operating point of the readout chain.

    chi           dispersive shift
    kappa         resonator decay rate (unit of all rates; keep at 1)
    eta           detector efficiency, in [0, 1]
    epsilon_m     measurement-pulse amplitude
    delta_r       drive-resonator detuning
    t_meas        pulse duration
    t_off         post-pulse waiting time
    phi_LO        local-oscillator phase of the homodyne detector
    gamma1        qubit relaxation rate
    gamma_phi     intrinsic pure-dephasing rate
    omega_a_tilde Lamb-shifted qubit frequency in the rotating frame
    kappa_b       filter-resonator loss rate (finite-bandwidth model, = BW/2)
    """

    chi: float = 3.0
    kappa: float = 1.0
    eta: float = 1.0
    epsilon_m: float = 1.0
    delta_r: float = 0.0
    t_meas: float = 5.0
    t_off: float = 10.0
    phi_LO: float = math.pi / 2.0
    gamma1: float = 0.0
    gamma_phi: float = 0.0
    omega_a_tilde: float = 0.0
    kappa_b: float = 5.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.t_meas < 0.0 or self.t_off < 0.0:
            raise ValueError("t_meas and t_off must be nonnegative")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if self.kappa_b <= 0.0:
            raise ValueError("kappa_b must be positive")
        if self.gamma1 < 0.0 or self.gamma_phi < 0.0:
            raise ValueError("decay rates must be nonnegative")

    @property
    def t_total(self) -> float:
        return self.t_meas + self.t_off


class FieldSample(NamedTuple):
    alpha_g: complex
    alpha_e: complex
    gamma_d: float
    stark_b: float


@dataclasses.dataclass(frozen=True)
class FieldTrajectory:
    """Field amplitudes and derived rates on a uniform time grid.

    Arrays have length n_steps + 1 (grid points); k_meas is the grid index of
    the pulse turn-off (== n_steps when the pulse extends past the grid).
    """

    dt: float
    t: np.ndarray
    alpha_g: np.ndarray
    alpha_e: np.ndarray
    gamma_d: np.ndarray
    stark_b: np.ndarray
    n_alpha: np.ndarray
    k_meas: int

    @property
    def n_steps(self) -> int:
        return len(self.t) - 1

    def sample(self, k: int) -> FieldSample:
        return FieldSample(
            complex(self.alpha_g[k]),
            complex(self.alpha_e[k]),
            float(self.gamma_d[k]),
            float(self.stark_b[k]),
        )

    def midpoint_sample(self, k: int) -> FieldSample:
        # grid-average values: second-order accurate at the step midpoint
        return FieldSample(
            complex(0.5 * (self.alpha_g[k] + self.alpha_g[k + 1])),
            complex(0.5 * (self.alpha_e[k] + self.alpha_e[k + 1])),
            float(0.5 * (self.gamma_d[k] + self.gamma_d[k + 1])),
            float(0.5 * (self.stark_b[k] + self.stark_b[k + 1])),
        )


def dephasing_rate(alpha_g, alpha_e, chi):
    """Measurement-induced dephasing rate Gamma_d = 2 chi Im(alpha_g alpha_e*)."""
    return 2.0 * chi * np.imag(alpha_g * np.conjugate(alpha_e))


def stark_shift(alpha_g, alpha_e, chi):
    """AC Stark shift B = 2 chi Re(alpha_g alpha_e*)."""
    return 2.0 * chi * np.real(alpha_g * np.conjugate(alpha_e))


def grid_steps(t_end: float, dt: float) -> int:
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > GRID_ALIGN_TOL:
        raise ValueError(f"t_end = {t_end} is not a positive multiple of dt = {dt}")
    return n


def pulse_off_index(p: SystemParams, n_steps: int, dt: float) -> int:
    """Grid index where the pulse switches off; n_steps if it never does."""
    if p.t_meas >= n_steps * dt - GRID_ALIGN_TOL:
        return n_steps
    k = int(round(p.t_meas / dt))
    if abs(k * dt - p.t_meas) > GRID_ALIGN_TOL:
        raise ValueError("t_meas must fall on the time grid")
    return k


def integrate_fields(p: SystemParams, t_end: float, dt: float = 1e-3) -> FieldTrajectory:
    """RK4 integration of the alpha_g / alpha_e ODEs from vacuum.

    The drive is piecewise constant, so each step lies entirely inside or
    outside the pulse; the turn-off edge must sit on a grid point.
    """
    n = grid_steps(t_end, dt)
    k_meas = pulse_off_index(p, n, dt)
    t = np.arange(n + 1) * dt

    # dalpha/dt = c alpha - i eps, with c = -i(delta_r -/+ chi) - kappa/2
    c = np.array(
        [
            -1j * (p.delta_r - p.chi) - 0.5 * p.kappa,
            -1j * (p.delta_r + p.chi) - 0.5 * p.kappa,
        ]
    )
    alpha = np.zeros((n + 1, 2), dtype=complex)
    y = np.zeros(2, dtype=complex)
    for k in range(n):
        eps = p.epsilon_m if k < k_meas else 0.0
        d = -1j * eps
        k1 = c * y + d
        k2 = c * (y + 0.5 * dt * k1) + d
        k3 = c * (y + 0.5 * dt * k2) + d
        k4 = c * (y + dt * k3) + d
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        alpha[k + 1] = y

    ag, ae = alpha[:, 0], alpha[:, 1]
    return FieldTrajectory(
        dt=dt,
        t=t,
        alpha_g=ag,
        alpha_e=ae,
        gamma_d=dephasing_rate(ag, ae, p.chi),
        stark_b=stark_shift(ag, ae, p.chi),
        n_alpha=np.abs(ag) ** 2,
        k_meas=k_meas,
    )


def alpha_g_closed_form(p: SystemParams, t):
    """Closed-form alpha_g(t) for the step pulse at delta_r = 0 (vacuum start)."""
    if p.delta_r != 0.0:
        raise ValueError("closed form requires delta_r = 0")
    t = np.asarray(t, dtype=float)
    pref = 2.0 * p.epsilon_m / (2.0 * p.chi + 1j * p.kappa)
    r = 0.5 * p.kappa - 1j * p.chi
    on = np.where(t >= 0.0, 1.0 - np.exp(-r * np.maximum(t, 0.0)), 0.0)
    off = np.where(t >= p.t_meas, 1.0 - np.exp(-r * np.maximum(t - p.t_meas, 0.0)), 0.0)
    out = pref * (on - off)
    return out if out.ndim else complex(out)


def parity_fields(p: SystemParams, t_end: float, dt: float = 1e-3) -> FieldTrajectory:
    """Two-qubit parity-mode amplitudes: same dynamics with chi -> 2 chi."""
    if p.delta_r != 0.0:
        raise ValueError("parity mapping stated for delta_r = 0")
    return integrate_fields(dataclasses.replace(p, chi=2.0 * p.chi), t_end, dt)


def zero_dephasing_integral(traj: FieldTrajectory, eta: float, kappa: float = 1.0) -> np.ndarray:
    """Cumulative integral of (-Gamma_d + 2 kappa eta Re^2 alpha_g) on the grid.

    At eta = 1 this equals -2 Re^2(alpha_g(t)) identically and therefore
    returns to zero once the field rings down.
    """
    integrand = -traj.gamma_d + 2.0 * kappa * eta * np.real(traj.alpha_g) ** 2
    return cumulative_trapezoid(integrand, dx=traj.dt, initial=0.0)


def revival_times(traj: FieldTrajectory) -> np.ndarray:
    """Zero crossings of Re(alpha_g) after the pulse, by linear interpolation."""
    re = np.real(traj.alpha_g)
    ts = []
    for k in range(traj.k_meas, traj.n_steps):
        a, b = re[k], re[k + 1]
        if a == 0.0 and traj.t[k] > traj.t[traj.k_meas]:
            ts.append(traj.t[k])
        elif a * b < 0.0:
            ts.append(traj.t[k] + traj.dt * a / (a - b))
    return np.array(ts)
