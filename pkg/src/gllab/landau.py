"""Lowest Landau band of the magnetic-periodic operator and the Abrikosov
energy restricted to it.

The operator is the link Laplacian of the quantized magnetic torus, so the
band, the nonlinear periodic solver and the Abrikosov minimization all share
one discretization.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .grid import (BC, GaugeLinks, GridMismatchError, GridSpec, OrderParameter,
                   build_gauge_links)

log = logging.getLogger(__name__)

BAND_CUT = 2.0
DEFAULT_SPACING = 0.125


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class LandauBand:
    N: int
    side: float
    eigenvalues: np.ndarray
    basis: np.ndarray  # (N, n, n); orthonormal in the cell-weighted inner product
    gap_ratio: float
    grid: GridSpec
    links: GaugeLinks
    higher: Optional[np.ndarray] = None  # eigenvectors above the band, same layout

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    @property
    def spread(self) -> float:
        """Largest deviation of a band eigenvalue from 1."""
        return float(np.max(np.abs(self.eigenvalues[: self.dimension] - 1.0)))

    def gram(self) -> np.ndarray:
        B = self.basis.reshape(self.dimension, -1)
        return (B.conj() @ B.T) * self.grid.cell_volume

    def field(self, coeffs) -> OrderParameter:
        return OrderParameter(self.grid, np.tensordot(coeffs, self.basis, axes=1))


def magnetic_laplacian(links: GaugeLinks) -> sp.csr_matrix:
    """Sparse Hermitian matrix of the quadratic form ``sum_e s |hop f_y - f_x|^2 / a^2``.

    Eigenvalues of this matrix are the eigenvalues of the discrete P_R with
    respect to the cell-weighted inner product.
    """
    g = links.grid
    n = g.points_per_side
    size = n**g.dim
    idx = np.arange(size).reshape(g.shape)
    L = sp.csr_matrix((size, size), dtype=np.complex128)
    for k in range(g.dim):
        nbr = np.roll(idx, -1, axis=k).ravel()
        w = links.weight[k].ravel()
        D = sp.csr_matrix((links.hop[k].ravel() * np.sqrt(w), (idx.ravel(), nbr)),
                          shape=(size, size)) - sp.diags(np.sqrt(w))
        L = L + links.scale[k] * (D.conj().T @ D)
        if np.any(links.wall[k]):
            L = L + links.scale[k] * sp.diags(links.wall[k].ravel())
    L = L / g.spacing**2
    return (0.5 * (L + L.conj().T)).tocsr()


def _subspace_iteration(L, k, v0, tol=1e-11, max_iter=200):
    # ``v0`` may carry extra guard columns; only the lowest ``k`` must converge
    """Lowest ``k`` eigenpairs by block inverse iteration with Rayleigh-Ritz.

    Unlike Lanczos, a block method sees every member of an exactly degenerate
    cluster, which the magnetic torus always has.
    """
    from scipy.sparse.linalg import splu

    size = L.shape[0]
    # the spectrum starts at 1 (just below it without calibration), so the
    # shifted operator stays positive definite and the band converges fast
    shift = 0.9
    lu = splu((L - shift * sp.identity(size, format="csr")).tocsc())
    X, _ = np.linalg.qr(v0)
    vals = np.zeros(k)
    for _ in range(max_iter):
        Y = lu.solve(X)
        Y, _ = np.linalg.qr(Y)
        LY = L @ Y
        H = Y.conj().T @ LY
        theta, S = np.linalg.eigh(0.5 * (H + H.conj().T))
        X = Y @ S
        resid = np.linalg.norm(LY @ S[:, :k] - X[:, :k] * theta[:k], axis=0)
        vals = theta
        # eigenvalue error is quadratic in the residual, so pairs above the
        # band only need a loose residual for a sharp gap estimate
        need = np.where(theta[:k] < BAND_CUT, tol, math.sqrt(tol))
        if np.all(resid <= need * np.maximum(1.0, np.abs(theta[:k]))):
            return vals, X
    return vals, X


def lowest_band(N: int, spacing: float = DEFAULT_SPACING, k: Optional[int] = None,
                calibrated: bool = True, method: str = "subspace") -> LandauBand:
    """Lowest ``k`` eigenpairs of the discrete P_R on the torus with N flux quanta.

    Band members are the eigenvalues below 2 (halfway between the continuum
    levels 1 and 3); their number must equal N. Degenerate eigenvectors are
    re-orthonormalized as a block, so any orthonormal basis of the band
    subspace may come back. ``method`` is ``"subspace"`` (block shift-invert
    iteration) or ``"arpack"`` (implicitly restarted Lanczos, smallest
    algebraic); the latter can drop members of a degenerate cluster.
    """
    if N < 1 or int(N) != N:
        raise ValueError("N must be a positive integer")
    k = N + 4 if k is None else k
    if k < N + 1:
        raise ValueError("k must be at least N + 1")
    grid = GridSpec.periodic(int(N), spacing)
    links = build_gauge_links(grid, calibrated=calibrated)
    L = magnetic_laplacian(links)
    size = L.shape[0]
    if k >= size:
        raise ValueError("grid too coarse for the requested number of eigenpairs")
    rng = np.random.default_rng(12345 + N)
    try:
        if method == "subspace":
            block = min(size - 1, k + 4)
            v0 = rng.normal(size=(size, block)) + 1j * rng.normal(size=(size, block))
            vals, vecs = _subspace_iteration(L, k, v0)
            vals, vecs = vals[:k], vecs[:, :k]
        elif method == "arpack":
            v0 = rng.normal(size=size) + 1j * rng.normal(size=size)
            vals, vecs = eigsh(L, k=k, which="SA", v0=v0, tol=1e-12, maxiter=20000,
                               ncv=min(size - 1, 3 * k + 20))
        else:
            raise ValueError(f"unknown eigensolver {method!r}")
    except ValueError:
        raise
    except Exception as exc:  # ArpackNoConvergence and friends
        raise EigensolverError(f"eigensolver failed for N={N}: {exc}") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    nb = int(np.sum(vals < BAND_CUT))
    if nb != N:
        raise EigensolverError(f"found {nb} band eigenvalues below {BAND_CUT}, expected {N}")
    q, _ = np.linalg.qr(vecs[:, :nb])
    basis = (q.T / grid.spacing).reshape((nb,) + grid.shape)
    higher = (vecs[:, nb:].T / grid.spacing).reshape((k - nb,) + grid.shape)
    gap_ratio = float(vals[nb] / vals[nb - 1])
    return LandauBand(int(N), grid.side, vals, basis, gap_ratio, grid, links, higher)


def project_band(band: LandauBand, f: OrderParameter):
    """Orthogonal projection onto the band; returns ``(in_band, ||f - in_band||_2)``."""
    if not f.grid.same_lattice(band.grid):
        raise GridMismatchError("field and band live on different grids")
    B = band.basis.reshape(band.dimension, -1)
    w = band.grid.cell_volume
    c = (B.conj() @ f.values.ravel()) * w
    inside = (c @ B).reshape(band.grid.shape)
    rest = f.values - inside
    return OrderParameter(band.grid, inside), float(np.sqrt(np.sum(np.abs(rest) ** 2) * w))


def quadratic_form(links: GaugeLinks, f: np.ndarray) -> float:
    """Discrete ``Q_R(f) = ||(grad - iA) f||^2`` (with calibration)."""
    from .energy import raw_energy_grad

    kin, _, _ = raw_energy_grad(f, links, 1.0)
    return kin


# --------------------------------------------------------------------------
# Abrikosov energy on the band
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class AbrikosovResult:
    N: int
    c_value: float
    coefficients: np.ndarray
    density: float
    beta_ratio: float
    converged: bool = True
    iterations: int = 0
    restarts_used: int = 0
    seed: int = 0


def abrikosov_energy(band: LandauBand, coeffs) -> float:
    """F_R of the band field with the given coefficients."""
    v = np.tensordot(coeffs, band.basis, axes=1)
    p = np.abs(v) ** 2
    w = band.grid.cell_volume
    return float(np.sum(-p + 0.5 * p * p) * w)


def beta_ratio(band: LandauBand, coeffs) -> float:
    v = np.tensordot(coeffs, band.basis, axes=1)
    p = np.abs(v) ** 2
    w = band.grid.cell_volume
    area = band.grid.volume
    return float(np.sum(p * p) * w * area / (np.sum(p) * w) ** 2)


def optimal_scaling_energy(l2sq: float, l4: float) -> float:
    """``min_t F(t v) = -(int|v|^2)^2 / (2 int|v|^4)``."""
    return -l2sq * l2sq / (2.0 * l4)


def _sphere_descent(Bmat, w, c0, tol, max_iter):
    """Minimize ``J(c) = w sum |B^T c|^4`` on the unit sphere ``|c| = 1``.

    Riemannian gradient descent with Barzilai-Borwein steps and an Armijo
    safeguard; the phase of ``c`` is a symmetry and is left free.
    """
    c = c0 / np.linalg.norm(c0)

    def value_grad(c):
        v = c @ Bmat
        p = (v.real**2 + v.imag**2)
        J = w * float(np.sum(p * p))
        # real gradient of J w.r.t. c packed as complex
        G = 4.0 * w * (Bmat.conj() @ (p * v))
        return J, G

    J, G = value_grad(c)
    step = 1e-2 / max(J, 1e-300)
    prev_c = prev_rg = None
    it = 0
    converged = False
    for it in range(max_iter):
        rg = G - np.real(np.vdot(c, G)) * c  # tangent projection
        gnorm = float(np.linalg.norm(rg))
        if gnorm <= tol * J:
            converged = True
            break
        if prev_rg is not None:
            s = c - prev_c
            y = rg - prev_rg
            sy = float(np.real(np.vdot(s, y)))
            if sy > 0:
                step = float(np.real(np.vdot(s, s))) / sy
        while True:
            cn = c - step * rg
            cn /= np.linalg.norm(cn)
            Jn, Gn = value_grad(cn)
            if Jn <= J - 1e-4 * step * gnorm**2 or step < 1e-300:
                break
            step *= 0.5
        prev_c, prev_rg = c, rg
        c, J, G = cn, Jn, Gn
    return c, J, it, converged


def _quotient_lbfgs(Bmat, w, c0, tol, max_iter):
    """Minimize the scale-invariant ``J(c) / |c|^4`` with L-BFGS on real parts.

    Same minimizers as the sphere problem; the free radius costs nothing and
    quasi-Newton curvature makes it far faster than first-order steps.
    """
    from scipy.optimize import minimize as sp_minimize

    nb = Bmat.shape[0]

    def fg(x):
        c = x[:nb] + 1j * x[nb:]
        v = c @ Bmat
        p = v.real**2 + v.imag**2
        J = w * float(np.sum(p * p))
        G = 4.0 * w * (Bmat.conj() @ (p * v))
        n2 = float(np.vdot(c, c).real)
        g = G / n2**2 - 4.0 * J * c / n2**3
        return J / n2**2, np.concatenate([g.real, g.imag])

    c0 = c0 / np.linalg.norm(c0)
    res = sp_minimize(fg, np.concatenate([c0.real, c0.imag]), jac=True, method="L-BFGS-B",
                      options={"maxiter": max_iter, "gtol": tol * 1e-2, "ftol": 1e-15,
                               "maxcor": 20})
    c = res.x[:nb] + 1j * res.x[nb:]
    c /= np.linalg.norm(c)
    f, g = fg(np.concatenate([c.real, c.imag]))
    ok = bool(res.success or np.linalg.norm(g) <= max(tol, 1e-6) * f)
    return c, f, int(res.nit), ok


def minimize_abrikosov(band: LandauBand, tol: float = 1e-10, restarts: int = 8, seed: int = 0,
                       max_iter: int = 20000, init=None, method: str = "lbfgs") -> AbrikosovResult:
    """c(R) = min F_R over the band.

    For a fixed shape ``v`` the amplitude minimizing ``F_R(t v)`` gives
    ``-(int|v|^2)^2 / (2 int|v|^4)``, so the search runs over unit coefficient
    vectors and minimizes ``int|v|^4`` there. Several random restarts guard
    against the lattice-symmetric local minima of the Abrikosov landscape.
    ``method`` is ``"lbfgs"`` (quasi-Newton on the scale-invariant quotient)
    or ``"sphere"`` (projected gradient descent on the unit sphere).
    """
    if method not in ("lbfgs", "sphere"):
        raise ValueError(f"unknown method {method!r}")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    descend = _quotient_lbfgs if method == "lbfgs" else _sphere_descent
    nb = band.dimension
    if nb < 1:
        raise ValueError("empty band")
    gram = band.gram()
    if np.linalg.matrix_rank(gram, tol=1e-8) < nb:
        raise ValueError("band basis is rank deficient")
    Bmat = band.basis.reshape(nb, -1)
    w = band.grid.cell_volume
    rng = np.random.default_rng(seed)
    starts = [np.asarray(c, dtype=np.complex128) for c in (init or ())]
    for _ in range(restarts):
        starts.append(rng.normal(size=nb) + 1j * rng.normal(size=nb))
    best = None
    total_its = 0
    for c0 in starts:
        if nb > 1:
            c, _, its, ok = descend(Bmat, w, c0, tol, max_iter)
        else:
            c, its, ok = c0 / np.linalg.norm(c0), 0, True
        total_its += its
        v = c @ Bmat
        p = np.abs(v) ** 2
        l2 = float(np.sum(p) * w)
        l4 = float(np.sum(p * p) * w)
        cval = optimal_scaling_energy(l2, l4)
        if best is None or cval < best[0] - 1e-13 * abs(cval):
            best = (cval, c, l2, l4, ok)
    cval, c, l2, l4, ok = best
    t = math.sqrt(l2 / l4)
    coeffs = t * c
    area = band.grid.volume
    beta = l4 * area / l2**2
    if abs(cval + area / (2.0 * beta)) > 1e-6 * abs(cval):
        raise AssertionError("scaling identity violated at the Abrikosov optimum")
    return AbrikosovResult(N=band.N, c_value=cval, coefficients=coeffs, density=cval / area,
                           beta_ratio=beta, converged=ok, iterations=total_its,
                           restarts_used=len(starts), seed=seed)
