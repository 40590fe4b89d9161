"""Vectorized numpy fallback for the trajectory-chunk kernels.

Both backends implement the same two entry points with identical argument
lists and identical floating-point operation order, so a fixed seed gives the
same bits regardless of which one is selected. Each call advances a chunk of
independent trajectories through the full time grid and returns per-trajectory
snapshots plus the record-derived correction phase.

Argument conventions shared by both kernels:
  dws          (chunk, n_steps) Wiener increments, already scaled by sqrt(dt)
  snap_pos     (n_steps + 1,) int64; snap_pos[k] = output column for the state
               after k steps, or -1 when that grid point is not sampled
  est_re       per-step weight of the offline phase estimate; the kernel
               accumulates theta += est_re[k] * (j_dt - est_mean_dt[k]), i.e.
               the estimator sees only the recorded current, never dW itself
  k_meas       grid index of the pulse turn-off; theta_trunc freezes there
Returns (g_snap, z_re_snap, z_im_snap, theta_snap, theta_trunc, s_int) where
g is rho_gg (homodyne) or w_gg (cascaded), z is the qubit coherence rho_eg,
and s_int = sum of j dt over the whole record.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def homodyne_chunk(
    dws,
    rcg,
    rce,
    drc,
    s_re,
    s_im,
    rate_re_dt,
    rate_im_dt,
    est_re,
    est_mean_dt,
    gamma1_dt,
    sk,
    dt,
    k_meas,
    snap_pos,
    n_snaps,
    g0,
    z0_re,
    z0_im,
):
    """Effective-qubit homodyne SME over one chunk; mirrors step_homodyne."""
    dws = np.asarray(dws)
    c, n = dws.shape
    g_snap = np.empty((c, n_snaps))
    z_re_snap = np.empty((c, n_snaps))
    z_im_snap = np.empty((c, n_snaps))
    theta_snap = np.empty((c, n_snaps))
    theta_trunc = np.zeros(c)
    s_int = np.zeros(c)

    tsk2 = 2.0 * sk
    g = np.full(c, g0)
    z_re = np.full(c, z0_re)
    z_im = np.full(c, z0_im)
    theta = np.zeros(c)

    sp = snap_pos[0]
    if sp >= 0:
        g_snap[:, sp] = g
        z_re_snap[:, sp] = z_re
        z_im_snap[:, sp] = z_im
        theta_snap[:, sp] = theta

    for k in range(n):
        dw = dws[:, k]
        one_m_g = 1.0 - g
        mean_q = g * rcg[k] + one_m_g * rce[k]

        gnoise = tsk2 * g * one_m_g * drc[k]
        g = g + gamma1_dt * one_m_g + gnoise * dw
        nre = sk * (s_re[k] - 2.0 * mean_q)
        fre = 1.0 + rate_re_dt[k] + nre * dw
        fim = rate_im_dt[k] + sk * s_im[k] * dw
        z_re, z_im = z_re * fre - z_im * fim, z_re * fim + z_im * fre

        j_dt = tsk2 * mean_q * dt + dw
        s_int = s_int + j_dt
        theta = theta + est_re[k] * (j_dt - est_mean_dt[k])

        # population clamp only, as in the scalar reference step; the
        # coherence is never folded back inside the Bloch ball
        g = np.minimum(np.maximum(g, 0.0), 1.0)

        if k + 1 == k_meas:
            theta_trunc[:] = theta
        sp = snap_pos[k + 1]
        if sp >= 0:
            g_snap[:, sp] = g
            z_re_snap[:, sp] = z_re
            z_im_snap[:, sp] = z_im
            theta_snap[:, sp] = theta

    return g_snap, z_re_snap, z_im_snap, theta_snap, theta_trunc, s_int


def cascaded_chunk(
    dws,
    rcg,
    rce,
    s_re,
    s_im,
    rate_re_dt,
    rate_im_dt,
    est_re,
    est_mean_dt,
    ov_re,
    ov_im,
    kick_scale,
    dt,
    k_meas,
    snap_pos,
    n_snaps,
    wg0,
    we0,
    z0_re,
    z0_im,
):
    """Coherent-branch cascaded SME over one chunk; mirrors step_branch_weights.

    ov_re/ov_im hold the deterministic branch-field overlap on the snapshot
    grid (length n_snaps); the stored coherence is w_eg * overlap, i.e. the
    reduced qubit rho_eg at the snapshot.
    """
    dws = np.asarray(dws)
    c, n = dws.shape
    g_snap = np.empty((c, n_snaps))
    z_re_snap = np.empty((c, n_snaps))
    z_im_snap = np.empty((c, n_snaps))
    theta_snap = np.empty((c, n_snaps))
    theta_trunc = np.zeros(c)
    s_int = np.zeros(c)

    wg = np.full(c, wg0)
    we = np.full(c, we0)
    z_re = np.full(c, z0_re)
    z_im = np.full(c, z0_im)
    theta = np.zeros(c)

    sp = snap_pos[0]
    if sp >= 0:
        g_snap[:, sp] = wg
        z_re_snap[:, sp] = z_re * ov_re[sp] - z_im * ov_im[sp]
        z_im_snap[:, sp] = z_re * ov_im[sp] + z_im * ov_re[sp]
        theta_snap[:, sp] = theta

    for k in range(n):
        dw = dws[:, k]
        kick = kick_scale * dw
        m = 2.0 * (wg * rcg[k] + we * rce[k])

        wg = wg * (1.0 + (2.0 * rcg[k] - m) * kick)
        we = we * (1.0 + (2.0 * rce[k] - m) * kick)
        fre = 1.0 + rate_re_dt[k] + (s_re[k] - m) * kick
        fim = rate_im_dt[k] + s_im[k] * kick
        z_re, z_im = z_re * fre - z_im * fim, z_re * fim + z_im * fre

        total = wg + we
        wg = wg / total
        we = we / total
        z_re = z_re / total
        z_im = z_im / total

        j_dt = kick_scale * m * dt + dw
        s_int = s_int + j_dt
        theta = theta + est_re[k] * (j_dt - est_mean_dt[k])

        if k + 1 == k_meas:
            theta_trunc[:] = theta
        sp = snap_pos[k + 1]
        if sp >= 0:
            g_snap[:, sp] = wg
            z_re_snap[:, sp] = z_re * ov_re[sp] - z_im * ov_im[sp]
            z_im_snap[:, sp] = z_re * ov_im[sp] + z_im * ov_re[sp]
            theta_snap[:, sp] = theta

    return g_snap, z_re_snap, z_im_snap, theta_snap, theta_trunc, s_int
