"""Energy/gradient and line-search kernels on link grids.

Each kernel exists twice: a numba loop version and a numpy version built on
``np.roll``. ``gllab._accel.USE_NUMBA`` picks one at import time; both are
importable directly for benchmarking and cross-checks.

Conventions shared by all kernels (per axis ``k``):
  edge term   ck[k] * w[k] * |hop[k] * u(x + e_k) - u(x)|**2
  wall term   ck[k] * wall[k] * |u(x)|**2
  mass        cm * sum |u|**2        quartic   cm * sum |u|**4
The gradient is the real gradient packed as ``dE/dRe u + i dE/dIm u``.
"""
import numpy as np

from . import _accel
from ._accel import njit


# --------------------------------------------------------------------------
# numba versions
# --------------------------------------------------------------------------
@njit
def _energy_grad_2d_nb(u, h0, h1, w0, w1, l0, l1, ck0, ck1, cm, grad, want_grad):
    n0, n1 = u.shape
    kin = 0.0
    mass = 0.0
    quart = 0.0
    if want_grad:
        for i in range(n0):
            for j in range(n1):
                grad[i, j] = 0.0
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            ux = u[i, j]
            p = ux.real * ux.real + ux.imag * ux.imag
            mass += p
            quart += p * p
            kin += (ck0 * l0[i, j] + ck1 * l1[i, j]) * p
            c0 = ck0 * w0[i, j]
            z0 = h0[i, j] * u[ip, j] - ux
            kin += c0 * (z0.real * z0.real + z0.imag * z0.imag)
            c1 = ck1 * w1[i, j]
            z1 = h1[i, j] * u[i, jp] - ux
            kin += c1 * (z1.real * z1.real + z1.imag * z1.imag)
            if want_grad:
                g = 2.0 * (ck0 * l0[i, j] + ck1 * l1[i, j]) * ux
                g += 2.0 * cm * (p - 1.0) * ux
                g -= 2.0 * (c0 * z0 + c1 * z1)
                grad[i, j] += g
                grad[ip, j] += 2.0 * c0 * np.conj(h0[i, j]) * z0
                grad[i, jp] += 2.0 * c1 * np.conj(h1[i, j]) * z1
    return kin, cm * mass, cm * quart


@njit
def _energy_grad_3d_nb(u, h0, h1, h2, w0, w1, w2, l0, l1, l2, ck0, ck1, ck2, cm,
                       grad, want_grad):
    n0, n1, n2 = u.shape
    kin = 0.0
    mass = 0.0
    quart = 0.0
    if want_grad:
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    grad[i, j, k] = 0.0
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            for k in range(n2):
                kp = k + 1 if k + 1 < n2 else 0
                ux = u[i, j, k]
                p = ux.real * ux.real + ux.imag * ux.imag
                mass += p
                quart += p * p
                lw = ck0 * l0[i, j, k] + ck1 * l1[i, j, k] + ck2 * l2[i, j, k]
                kin += lw * p
                c0 = ck0 * w0[i, j, k]
                z0 = h0[i, j, k] * u[ip, j, k] - ux
                c1 = ck1 * w1[i, j, k]
                z1 = h1[i, j, k] * u[i, jp, k] - ux
                c2 = ck2 * w2[i, j, k]
                z2 = h2[i, j, k] * u[i, j, kp] - ux
                kin += c0 * (z0.real * z0.real + z0.imag * z0.imag)
                kin += c1 * (z1.real * z1.real + z1.imag * z1.imag)
                kin += c2 * (z2.real * z2.real + z2.imag * z2.imag)
                if want_grad:
                    g = 2.0 * lw * ux + 2.0 * cm * (p - 1.0) * ux
                    g -= 2.0 * (c0 * z0 + c1 * z1 + c2 * z2)
                    grad[i, j, k] += g
                    grad[ip, j, k] += 2.0 * c0 * np.conj(h0[i, j, k]) * z0
                    grad[i, jp, k] += 2.0 * c1 * np.conj(h1[i, j, k]) * z1
                    grad[i, j, kp] += 2.0 * c2 * np.conj(h2[i, j, k]) * z2
    return kin, cm * mass, cm * quart


@njit
def _line_coeffs_2d_nb(u, d, h0, h1, w0, w1, l0, l1, ck0, ck1, cm):
    n0, n1 = u.shape
    kd = 0.0
    md = 0.0
    s2 = 0.0
    s3 = 0.0
    s4 = 0.0
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            dx = d[i, j]
            ux = u[i, j]
            r = dx.real * dx.real + dx.imag * dx.imag
            p = ux.real * ux.real + ux.imag * ux.imag
            q = 2.0 * (ux.real * dx.real + ux.imag * dx.imag)
            md += r
            s2 += q * q + 2.0 * p * r
            s3 += q * r
            s4 += r * r
            kd += (ck0 * l0[i, j] + ck1 * l1[i, j]) * r
            z0 = h0[i, j] * d[ip, j] - dx
            z1 = h1[i, j] * d[i, jp] - dx
            kd += ck0 * w0[i, j] * (z0.real * z0.real + z0.imag * z0.imag)
            kd += ck1 * w1[i, j] * (z1.real * z1.real + z1.imag * z1.imag)
    return kd, cm * md, cm * s2, cm * s3, cm * s4


@njit
def _line_coeffs_3d_nb(u, d, h0, h1, h2, w0, w1, w2, l0, l1, l2, ck0, ck1, ck2, cm):
    n0, n1, n2 = u.shape
    kd = 0.0
    md = 0.0
    s2 = 0.0
    s3 = 0.0
    s4 = 0.0
    for i in range(n0):
        ip = i + 1 if i + 1 < n0 else 0
        for j in range(n1):
            jp = j + 1 if j + 1 < n1 else 0
            for k in range(n2):
                kp = k + 1 if k + 1 < n2 else 0
                dx = d[i, j, k]
                ux = u[i, j, k]
                r = dx.real * dx.real + dx.imag * dx.imag
                p = ux.real * ux.real + ux.imag * ux.imag
                q = 2.0 * (ux.real * dx.real + ux.imag * dx.imag)
                md += r
                s2 += q * q + 2.0 * p * r
                s3 += q * r
                s4 += r * r
                kd += (ck0 * l0[i, j, k] + ck1 * l1[i, j, k] + ck2 * l2[i, j, k]) * r
                z0 = h0[i, j, k] * d[ip, j, k] - dx
                z1 = h1[i, j, k] * d[i, jp, k] - dx
                z2 = h2[i, j, k] * d[i, j, kp] - dx
                kd += ck0 * w0[i, j, k] * (z0.real * z0.real + z0.imag * z0.imag)
                kd += ck1 * w1[i, j, k] * (z1.real * z1.real + z1.imag * z1.imag)
                kd += ck2 * w2[i, j, k] * (z2.real * z2.real + z2.imag * z2.imag)
    return kd, cm * md, cm * s2, cm * s3, cm * s4


# --------------------------------------------------------------------------
# numpy versions
# --------------------------------------------------------------------------
def _energy_grad_np(u, hop, w, wall, ck, cm, grad, want_grad):
    p = (u.real**2 + u.imag**2)
    lw = sum(c * l for c, l in zip(ck, wall))
    kin = float(np.sum(lw * p))
    if want_grad:
        g = 2.0 * lw * u + 2.0 * cm * (p - 1.0) * u
    for k in range(u.ndim):
        z = hop[k] * np.roll(u, -1, axis=k) - u
        cz = ck[k] * w[k]
        kin += float(np.sum(cz * (z.real**2 + z.imag**2)))
        if want_grad:
            g -= 2.0 * cz * z
            g += np.roll(2.0 * cz * np.conj(hop[k]) * z, 1, axis=k)
    if want_grad:
        grad[...] = g
    return kin, cm * float(np.sum(p)), cm * float(np.sum(p * p))


def _line_coeffs_np(u, d, hop, w, wall, ck, cm):
    r = d.real**2 + d.imag**2
    p = u.real**2 + u.imag**2
    q = 2.0 * (u.real * d.real + u.imag * d.imag)
    kd = float(np.sum(sum(c * l for c, l in zip(ck, wall)) * r))
    for k in range(u.ndim):
        z = hop[k] * np.roll(d, -1, axis=k) - d
        kd += float(np.sum(ck[k] * w[k] * (z.real**2 + z.imag**2)))
    return (kd, cm * float(np.sum(r)), cm * float(np.sum(q * q + 2.0 * p * r)),
            cm * float(np.sum(q * r)), cm * float(np.sum(r * r)))


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------
def energy_grad(u, hop, w, wall, ck, cm, grad=None, use_numba=None):
    """Return ``(kinetic, mass, quartic_sum)``; fill ``grad`` when given.

    ``mass`` is ``cm * sum|u|^2`` and ``quartic_sum`` is ``cm * sum|u|^4``
    (without the factor 1/2).
    """
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    want = grad is not None
    if not want:
        grad = np.empty((0,) * u.ndim, dtype=np.complex128)
    if not use_numba:
        return _energy_grad_np(u, hop, w, wall, ck, cm, grad, want)
    if u.ndim == 2:
        return _energy_grad_2d_nb(u, hop[0], hop[1], w[0], w[1], wall[0], wall[1],
                                  ck[0], ck[1], cm, grad, want)
    return _energy_grad_3d_nb(u, hop[0], hop[1], hop[2], w[0], w[1], w[2],
                              wall[0], wall[1], wall[2], ck[0], ck[1], ck[2], cm, grad, want)


def line_coeffs(u, d, hop, w, wall, ck, cm, use_numba=None):
    """Pieces of the quartic ``E(u + t d)``: ``(K(d), M(d), S2, S3, S4)``."""
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if not use_numba:
        return _line_coeffs_np(u, d, hop, w, wall, ck, cm)
    if u.ndim == 2:
        return _line_coeffs_2d_nb(u, d, hop[0], hop[1], w[0], w[1], wall[0], wall[1],
                                  ck[0], ck[1], cm)
    return _line_coeffs_3d_nb(u, d, hop[0], hop[1], hop[2], w[0], w[1], w[2],
                              wall[0], wall[1], wall[2], ck[0], ck[1], ck[2], cm)
