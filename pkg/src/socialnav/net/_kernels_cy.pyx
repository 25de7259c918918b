# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled GRU sequence kernels; drop-in twin of _kernels_py."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sigmoid(double v) nogil:
    return 1.0 / (1.0 + exp(-v))


def gru_seq_forward(wz, wr, wh, uz, ur, uh, bz, br, bh, x, h0):
    """Scan a GRU over the time axis of x; see _kernels_py.gru_seq_forward."""
    cdef double[:, :, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] Wz = np.ascontiguousarray(wz), Wr = np.ascontiguousarray(wr), Wh = np.ascontiguousarray(wh)
    cdef double[:, ::1] Uz = np.ascontiguousarray(uz), Ur = np.ascontiguousarray(ur), Uh = np.ascontiguousarray(uh)
    cdef double[::1] Bz = np.ascontiguousarray(bz), Br = np.ascontiguousarray(br), Bh = np.ascontiguousarray(bh)
    cdef double[:, ::1] H0 = np.ascontiguousarray(h0, dtype=np.float64)

    cdef Py_ssize_t B = X.shape[0], T = X.shape[1], I = X.shape[2], H = H0.shape[1]
    hs_np = np.empty((B, T, H))
    zs_np = np.empty((B, T, H))
    rs_np = np.empty((B, T, H))
    hbars_np = np.empty((B, T, H))
    hprevs_np = np.empty((B, T, H))
    cdef double[:, :, ::1] hs = hs_np, zs = zs_np, rs = rs_np, hbars = hbars_np, hprevs = hprevs_np

    cdef double[::1] h = np.empty(H)
    cdef Py_ssize_t b, k, i, j
    cdef double az, ar, ah, z, r, hb

    with nogil:
        for b in range(B):
            for j in range(H):
                h[j] = H0[b, j]
            for k in range(T):
                for j in range(H):
                    hprevs[b, k, j] = h[j]
                for j in range(H):
                    az = Bz[j]
                    ar = Br[j]
                    for i in range(I):
                        az += Wz[j, i] * X[b, k, i]
                        ar += Wr[j, i] * X[b, k, i]
                    for i in range(H):
                        az += Uz[j, i] * hprevs[b, k, i]
                        ar += Ur[j, i] * hprevs[b, k, i]
                    zs[b, k, j] = _sigmoid(az)
                    rs[b, k, j] = _sigmoid(ar)
                for j in range(H):
                    ah = Bh[j]
                    for i in range(I):
                        ah += Wh[j, i] * X[b, k, i]
                    for i in range(H):
                        ah += Uh[j, i] * rs[b, k, i] * hprevs[b, k, i]
                    hbars[b, k, j] = tanh(ah)
                for j in range(H):
                    z = zs[b, k, j]
                    hb = hbars[b, k, j]
                    h[j] = (1.0 - z) * hprevs[b, k, j] + z * hb
                    hs[b, k, j] = h[j]

    return hs_np, (np.asarray(X), zs_np, rs_np, hbars_np, hprevs_np)


def gru_seq_backward(wz, wr, wh, uz, ur, uh, bz, br, bh, cache, dhs):
    """Reverse-mode scan; see _kernels_py.gru_seq_backward."""
    x_np, zs_np, rs_np, hbars_np, hprevs_np = cache
    cdef double[:, :, ::1] X = np.ascontiguousarray(x_np, dtype=np.float64)
    cdef double[:, :, ::1] zs = np.ascontiguousarray(zs_np), rs = np.ascontiguousarray(rs_np)
    cdef double[:, :, ::1] hbars = np.ascontiguousarray(hbars_np), hprevs = np.ascontiguousarray(hprevs_np)
    cdef double[:, :, ::1] dHs = np.ascontiguousarray(dhs, dtype=np.float64)
    cdef double[:, ::1] Uz = np.ascontiguousarray(uz), Ur = np.ascontiguousarray(ur), Uh = np.ascontiguousarray(uh)

    cdef Py_ssize_t B = X.shape[0], T = X.shape[1], I = X.shape[2], H = zs.shape[2]

    dwz_np = np.zeros((H, I)); dwr_np = np.zeros((H, I)); dwh_np = np.zeros((H, I))
    duz_np = np.zeros((H, H)); dur_np = np.zeros((H, H)); duh_np = np.zeros((H, H))
    dbz_np = np.zeros(H); dbr_np = np.zeros(H); dbh_np = np.zeros(H)
    dh0_np = np.zeros((B, H))
    cdef double[:, ::1] dwz = dwz_np, dwr = dwr_np, dwh = dwh_np
    cdef double[:, ::1] duz = duz_np, dur = dur_np, duh = duh_np
    cdef double[::1] dbz = dbz_np, dbr = dbr_np, dbh = dbh_np
    cdef double[:, ::1] dh0 = dh0_np

    cdef double[::1] dh = np.empty(H), da_h = np.empty(H), da_z = np.empty(H)
    cdef double[::1] d_rh = np.empty(H), da_r = np.empty(H), dh_new = np.empty(H)
    cdef Py_ssize_t b, k, i, j
    cdef double z, r, hb, hp, acc

    with nogil:
        for b in range(B):
            for j in range(H):
                dh[j] = 0.0
            for k in range(T - 1, -1, -1):
                for j in range(H):
                    dh[j] += dHs[b, k, j]
                for j in range(H):
                    z = zs[b, k, j]
                    hb = hbars[b, k, j]
                    hp = hprevs[b, k, j]
                    da_h[j] = dh[j] * z * (1.0 - hb * hb)
                    da_z[j] = dh[j] * (hb - hp) * z * (1.0 - z)
                for j in range(H):
                    acc = 0.0
                    for i in range(H):
                        acc += da_h[i] * Uh[i, j]
                    d_rh[j] = acc
                    r = rs[b, k, j]
                    da_r[j] = acc * hprevs[b, k, j] * r * (1.0 - r)
                for j in range(H):
                    for i in range(I):
                        dwh[j, i] += da_h[j] * X[b, k, i]
                        dwr[j, i] += da_r[j] * X[b, k, i]
                        dwz[j, i] += da_z[j] * X[b, k, i]
                    for i in range(H):
                        duh[j, i] += da_h[j] * rs[b, k, i] * hprevs[b, k, i]
                        dur[j, i] += da_r[j] * hprevs[b, k, i]
                        duz[j, i] += da_z[j] * hprevs[b, k, i]
                    dbh[j] += da_h[j]
                    dbr[j] += da_r[j]
                    dbz[j] += da_z[j]
                for j in range(H):
                    acc = dh[j] * (1.0 - zs[b, k, j]) + d_rh[j] * rs[b, k, j]
                    for i in range(H):
                        acc += da_r[i] * Ur[i, j] + da_z[i] * Uz[i, j]
                    dh_new[j] = acc
                for j in range(H):
                    dh[j] = dh_new[j]
            for j in range(H):
                dh0[b, j] = dh[j]

    return (dwz_np, dwr_np, dwh_np, duz_np, dur_np, duh_np, dbz_np, dbr_np, dbh_np), dh0_np
