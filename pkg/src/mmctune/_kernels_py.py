"""Pure-numpy implementation of the hot field-evaluation kernels.

Same contract as the compiled module ``mmctune._kernels``; selected by
``mmctune.kernels`` when the extension is unavailable or disabled.
"""

from __future__ import annotations

import numpy as np

_F_FLOOR = 1e-12


def _ipow(x: np.ndarray, p: int) -> np.ndarray:
    # Exponentiation by squaring, matching the compiled kernel's rounding.
    result = np.ones_like(x)
    b = x
    e = p
    while e > 0:
        if e & 1:
            result = result * b
        b = b * b
        e >>= 1
    return result


def _phi_one_raw(prm: np.ndarray, xs: np.ndarray, ys: np.ndarray, p: int) -> np.ndarray:
    x0, y0, L, t1, t2, t3, theta = prm
    ct = np.cos(theta)
    st = np.sin(theta)
    dx = xs - x0
    dy = ys - y0
    xl = ct * dx + st * dy
    yl = -st * dx + ct * dy
    f = t2 + (t3 - t1) / (2.0 * L) * xl + (t1 + t3 - 2.0 * t2) / (2.0 * L * L) * xl * xl
    f = np.where(np.abs(f) < _F_FLOOR, _F_FLOOR, f)
    return 1.0 - _ipow(xl / L, p) - _ipow(yl / f, p)


def phi_one(prm, xs, ys, p):
    """Field of a single component at the given points."""
    prm = np.asarray(prm, dtype=float).ravel()
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    return _phi_one_raw(prm, xs, ys, int(p))


def phi_max(params, xs, ys, p):
    """Structure field and arg-max component index at the given points.

    Ties resolve to the lowest component index (numpy argmax convention).
    """
    params = np.asarray(params, dtype=float).reshape(-1, 7)
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    stack = np.empty((params.shape[0], xs.size), dtype=float)
    for i in range(params.shape[0]):
        stack[i] = _phi_one_raw(params[i], xs, ys, int(p))
    amax = np.argmax(stack, axis=0)
    phi = stack[amax, np.arange(xs.size)]
    return phi, amax.astype(np.int64)


def component_fd_grad(params, xs, ys, comp_idx, p, step):
    """Central finite differences of the owning component's field.

    For point ``j`` the derivative of component ``comp_idx[j]``'s field with
    respect to each of its 7 parameters, step ``step``.  Returns an
    ``(n_points, 7)`` array.
    """
    params = np.asarray(params, dtype=float).reshape(-1, 7)
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    comp_idx = np.asarray(comp_idx, dtype=np.int64).ravel()
    out = np.zeros((xs.size, 7), dtype=float)
    inv2h = 1.0 / (2.0 * step)
    for i in np.unique(comp_idx):
        sel = comp_idx == i
        sx, sy = xs[sel], ys[sel]
        for k in range(7):
            plus = params[i].copy()
            plus[k] += step
            minus = params[i].copy()
            minus[k] -= step
            out[sel, k] = (
                _phi_one_raw(plus, sx, sy, int(p)) - _phi_one_raw(minus, sx, sy, int(p))
            ) * inv2h
    return out
