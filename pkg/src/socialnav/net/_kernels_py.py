"""Pure-numpy GRU sequence kernels (fallback for the compiled extension)."""

from __future__ import annotations

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_seq_forward(wz, wr, wh, uz, ur, uh, bz, br, bh, x, h0):
    """Scan a GRU over the time axis of x.

    x: (B, T, I), h0: (B, H). Returns (hs, cache) where hs is (B, T, H)
    and cache holds the gate activations needed by the backward pass.
    """
    b, t, _ = x.shape
    h_dim = h0.shape[1]
    hs = np.empty((b, t, h_dim))
    zs = np.empty((b, t, h_dim))
    rs = np.empty((b, t, h_dim))
    hbars = np.empty((b, t, h_dim))
    hprevs = np.empty((b, t, h_dim))

    h = h0
    for k in range(t):
        xk = x[:, k, :]
        z = _sigmoid(xk @ wz.T + h @ uz.T + bz)
        r = _sigmoid(xk @ wr.T + h @ ur.T + br)
        hbar = np.tanh(xk @ wh.T + (r * h) @ uh.T + bh)
        hprevs[:, k, :] = h
        h = (1.0 - z) * h + z * hbar
        hs[:, k, :] = h
        zs[:, k, :] = z
        rs[:, k, :] = r
        hbars[:, k, :] = hbar
    return hs, (x, zs, rs, hbars, hprevs)


def gru_seq_backward(wz, wr, wh, uz, ur, uh, bz, br, bh, cache, dhs):
    """Reverse-mode accumulation through the scan.

    dhs: (B, T, H) gradient of the loss w.r.t. each step's hidden output.
    Returns (param_grads, dh0) with param_grads in the same 9-slot order.
    """
    x, zs, rs, hbars, hprevs = cache
    b, t, _ = x.shape

    dwz = np.zeros_like(wz)
    dwr = np.zeros_like(wr)
    dwh = np.zeros_like(wh)
    duz = np.zeros_like(uz)
    dur = np.zeros_like(ur)
    duh = np.zeros_like(uh)
    dbz = np.zeros_like(bz)
    dbr = np.zeros_like(br)
    dbh = np.zeros_like(bh)

    dh = np.zeros((b, wz.shape[0]))
    for k in range(t - 1, -1, -1):
        dh = dh + dhs[:, k, :]
        xk = x[:, k, :]
        z, r, hbar, hprev = zs[:, k, :], rs[:, k, :], hbars[:, k, :], hprevs[:, k, :]

        da_h = dh * z * (1.0 - hbar * hbar)
        da_z = dh * (hbar - hprev) * z * (1.0 - z)
        d_rh = da_h @ uh
        da_r = d_rh * hprev * r * (1.0 - r)

        dwh += da_h.T @ xk
        duh += da_h.T @ (r * hprev)
        dbh += da_h.sum(axis=0)
        dwr += da_r.T @ xk
        dur += da_r.T @ hprev
        dbr += da_r.sum(axis=0)
        dwz += da_z.T @ xk
        duz += da_z.T @ hprev
        dbz += da_z.sum(axis=0)

        dh = dh * (1.0 - z) + d_rh * r + da_r @ ur + da_z @ uz

    return (dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh), dh
