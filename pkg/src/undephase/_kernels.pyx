# cython: language_level=3
"""Compiled trajectory-chunk kernels.

Scalar translation of undephase._purepy: the same two entry points, the same
argument order, and the same floating-point operation order per step, so both
backends produce identical bits for identical inputs. See _purepy for the
argument conventions.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def homodyne_chunk(
    double[:, ::1] dws,
    double[::1] rcg,
    double[::1] rce,
    double[::1] drc,
    double[::1] s_re,
    double[::1] s_im,
    double[::1] rate_re_dt,
    double[::1] rate_im_dt,
    double[::1] est_re,
    double[::1] est_mean_dt,
    double gamma1_dt,
    double sk,
    double dt,
    Py_ssize_t k_meas,
    cnp.int64_t[::1] snap_pos,
    Py_ssize_t n_snaps,
    double g0,
    double z0_re,
    double z0_im,
):
    """Effective-qubit homodyne SME over one chunk; mirrors step_homodyne."""
    cdef Py_ssize_t c = dws.shape[0]
    cdef Py_ssize_t n = dws.shape[1]
    g_snap_arr = np.empty((c, n_snaps))
    z_re_snap_arr = np.empty((c, n_snaps))
    z_im_snap_arr = np.empty((c, n_snaps))
    theta_snap_arr = np.empty((c, n_snaps))
    theta_trunc_arr = np.zeros(c)
    s_int_arr = np.zeros(c)
    cdef double[:, ::1] g_snap = g_snap_arr
    cdef double[:, ::1] z_re_snap = z_re_snap_arr
    cdef double[:, ::1] z_im_snap = z_im_snap_arr
    cdef double[:, ::1] theta_snap = theta_snap_arr
    cdef double[::1] theta_trunc = theta_trunc_arr
    cdef double[::1] s_int = s_int_arr

    cdef double tsk2 = 2.0 * sk
    cdef Py_ssize_t i, k
    cdef cnp.int64_t sp
    cdef double g, z_re, z_im, theta, theta_tr, s
    cdef double dw, one_m_g, mean_q, gnoise, nre, fre, fim, zr_new, zi_new
    cdef double j_dt

    for i in range(c):
        g = g0
        z_re = z0_re
        z_im = z0_im
        theta = 0.0
        theta_tr = 0.0
        s = 0.0
        sp = snap_pos[0]
        if sp >= 0:
            g_snap[i, sp] = g
            z_re_snap[i, sp] = z_re
            z_im_snap[i, sp] = z_im
            theta_snap[i, sp] = theta
        for k in range(n):
            dw = dws[i, k]
            one_m_g = 1.0 - g
            mean_q = g * rcg[k] + one_m_g * rce[k]

            gnoise = tsk2 * g * one_m_g * drc[k]
            g = g + gamma1_dt * one_m_g + gnoise * dw
            nre = sk * (s_re[k] - 2.0 * mean_q)
            fre = 1.0 + rate_re_dt[k] + nre * dw
            fim = rate_im_dt[k] + sk * s_im[k] * dw
            zr_new = z_re * fre - z_im * fim
            zi_new = z_re * fim + z_im * fre
            z_re = zr_new
            z_im = zi_new

            j_dt = tsk2 * mean_q * dt + dw
            s = s + j_dt
            theta = theta + est_re[k] * (j_dt - est_mean_dt[k])

            # population clamp only, as in the scalar reference step; the
            # coherence is never folded back inside the Bloch ball
            if g < 0.0:
                g = 0.0
            elif g > 1.0:
                g = 1.0

            if k + 1 == k_meas:
                theta_tr = theta
            sp = snap_pos[k + 1]
            if sp >= 0:
                g_snap[i, sp] = g
                z_re_snap[i, sp] = z_re
                z_im_snap[i, sp] = z_im
                theta_snap[i, sp] = theta
        theta_trunc[i] = theta_tr
        s_int[i] = s

    return g_snap_arr, z_re_snap_arr, z_im_snap_arr, theta_snap_arr, theta_trunc_arr, s_int_arr


def cascaded_chunk(
    double[:, ::1] dws,
    double[::1] rcg,
    double[::1] rce,
    double[::1] s_re,
    double[::1] s_im,
    double[::1] rate_re_dt,
    double[::1] rate_im_dt,
    double[::1] est_re,
    double[::1] est_mean_dt,
    double[::1] ov_re,
    double[::1] ov_im,
    double kick_scale,
    double dt,
    Py_ssize_t k_meas,
    cnp.int64_t[::1] snap_pos,
    Py_ssize_t n_snaps,
    double wg0,
    double we0,
    double z0_re,
    double z0_im,
):
    """Coherent-branch cascaded SME over one chunk; mirrors step_branch_weights."""
    cdef Py_ssize_t c = dws.shape[0]
    cdef Py_ssize_t n = dws.shape[1]
    g_snap_arr = np.empty((c, n_snaps))
    z_re_snap_arr = np.empty((c, n_snaps))
    z_im_snap_arr = np.empty((c, n_snaps))
    theta_snap_arr = np.empty((c, n_snaps))
    theta_trunc_arr = np.zeros(c)
    s_int_arr = np.zeros(c)
    cdef double[:, ::1] g_snap = g_snap_arr
    cdef double[:, ::1] z_re_snap = z_re_snap_arr
    cdef double[:, ::1] z_im_snap = z_im_snap_arr
    cdef double[:, ::1] theta_snap = theta_snap_arr
    cdef double[::1] theta_trunc = theta_trunc_arr
    cdef double[::1] s_int = s_int_arr

    cdef Py_ssize_t i, k
    cdef cnp.int64_t sp
    cdef double wg, we, z_re, z_im, theta, theta_tr, s
    cdef double dw, kick, m, fre, fim, zr_new, zi_new, total, j_dt

    for i in range(c):
        wg = wg0
        we = we0
        z_re = z0_re
        z_im = z0_im
        theta = 0.0
        theta_tr = 0.0
        s = 0.0
        sp = snap_pos[0]
        if sp >= 0:
            g_snap[i, sp] = wg
            z_re_snap[i, sp] = z_re * ov_re[sp] - z_im * ov_im[sp]
            z_im_snap[i, sp] = z_re * ov_im[sp] + z_im * ov_re[sp]
            theta_snap[i, sp] = theta
        for k in range(n):
            dw = dws[i, k]
            kick = kick_scale * dw
            m = 2.0 * (wg * rcg[k] + we * rce[k])

            wg = wg * (1.0 + (2.0 * rcg[k] - m) * kick)
            we = we * (1.0 + (2.0 * rce[k] - m) * kick)
            fre = 1.0 + rate_re_dt[k] + (s_re[k] - m) * kick
            fim = rate_im_dt[k] + s_im[k] * kick
            zr_new = z_re * fre - z_im * fim
            zi_new = z_re * fim + z_im * fre
            z_re = zr_new
            z_im = zi_new

            total = wg + we
            wg = wg / total
            we = we / total
            z_re = z_re / total
            z_im = z_im / total

            j_dt = kick_scale * m * dt + dw
            s = s + j_dt
            theta = theta + est_re[k] * (j_dt - est_mean_dt[k])

            if k + 1 == k_meas:
                theta_tr = theta
            sp = snap_pos[k + 1]
            if sp >= 0:
                g_snap[i, sp] = wg
                z_re_snap[i, sp] = z_re * ov_re[sp] - z_im * ov_im[sp]
                z_im_snap[i, sp] = z_re * ov_im[sp] + z_im * ov_re[sp]
                theta_snap[i, sp] = theta
        theta_trunc[i] = theta_tr
        s_int[i] = s

    return g_snap_arr, z_re_snap_arr, z_im_snap_arr, theta_snap_arr, theta_trunc_arr, s_int_arr
