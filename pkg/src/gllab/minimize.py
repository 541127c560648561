"""Ground-state energies m0 (2D Dirichlet), m_p (2D magnetic-periodic) and
M0 (3D Dirichlet) by nonlinear conjugate gradients, plus Richardson
extrapolation in the spacing.

Every reported energy is the energy of an explicit discrete field, so it
bounds the discrete infimum from above. Along a search line the energy is a
quartic polynomial, which lets the line search be exact.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .energy import (EnergyBreakdown, breakdown, pair, raw_energy_grad, raw_line_coeffs,
                     residual_from_grad)
from .grid import (BC, GaugeLinks, GridSpec, OrderParameter, build_gauge_links,
                   periodic_side)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_RESTARTS = 4
DEFAULT_MAX_ITER = 40000
ENERGY_WINDOW = 50
MAX_NODES_3D = 3_000_000


class ConvergenceWarning(UserWarning):
    pass


class BoundViolation(RuntimeError):
    """A rigorous discrete bound failed: the discretization is broken."""


@dataclass(frozen=True)
class MinimizeResult:
    energy: float
    breakdown: EnergyBreakdown
    field: OrderParameter
    residual: float
    iterations: int
    restarts_used: int
    b: float
    side: float
    spacing: float
    bc: BC
    seed: int
    converged: bool = True
    tol: float = DEFAULT_TOL
    method: str = "ncg"
    bounds: tuple = ()
    start: str = ""

    @property
    def dim(self) -> int:
        return self.field.grid.dim

    @property
    def density(self) -> float:
        return self.energy / self.field.grid.volume

    def quartic_integral(self) -> float:
        return 2.0 * self.breakdown.quartic


@dataclass
class _Run:
    values: np.ndarray
    energy: float
    parts: tuple
    residual: float
    iterations: int
    converged: bool
    start: str
    order: int


def _quartic_argmin(c1, c2, c3, c4) -> float:
    """Minimizer over t >= 0 of ``c1 t + c2 t^2 + c3 t^3 + c4 t^4``."""
    if c4 <= 0.0:
        if c2 > 0:
            return max(0.0, -c1 / (2.0 * c2))
        return 0.0
    roots = np.roots([4.0 * c4, 3.0 * c3, 2.0 * c2, c1])
    best_t, best_f = 0.0, 0.0
    for r in roots:
        if abs(r.imag) > 1e-9 * max(1.0, abs(r.real)):
            continue
        t = r.real
        if t <= 0.0:
            continue
        f = t * (c1 + t * (c2 + t * (c3 + t * c4)))
        if f < best_f:
            best_t, best_f = t, f
    return best_t


def ncg(values, links: GaugeLinks, b: float, tol: float = DEFAULT_TOL,
        max_iter: int = DEFAULT_MAX_ITER):
    """Polak-Ribiere+ conjugate gradients with exact quartic line search.

    Returns ``(values, parts, residual, iterations, converged)`` where
    ``parts`` is ``(kinetic, mass, quartic_sum)``.
    """
    grid = links.grid
    x = np.array(values, dtype=np.complex128, copy=True)
    g = np.empty_like(x)
    parts = raw_energy_grad(x, links, b, g)
    energy = parts[0] - parts[1] + 0.5 * parts[2]
    history = [energy]
    d = -g
    gg = pair(g, g)
    scale = max(abs(energy), 1e-8 * grid.volume)
    g_new = np.empty_like(x)
    converged = False
    steepest = True
    it = 0
    for it in range(max_iter + 1):
        res = residual_from_grad(g, grid)
        if res == 0.0:
            converged = True
            break
        if res < tol and len(history) > 1:
            old = history[max(0, len(history) - 1 - ENERGY_WINDOW)]
            scale = max(abs(energy), 1e-8 * grid.volume)
            if abs(old - energy) / scale < tol / 10.0:
                converged = True
                break
        if it == max_iter:
            break
        slope = pair(g, d)
        if slope >= 0.0:
            d = -g
            slope = -gg
            steepest = True
        kd, md, s2, s3, s4 = raw_line_coeffs(x, d, links, b)
        t = _quartic_argmin(slope, kd - md + 0.5 * s2, s3, 0.5 * s4)
        if t > 0.0:
            x += t * d
            new_parts = raw_energy_grad(x, links, b, g_new)
            new_energy = new_parts[0] - new_parts[1] + 0.5 * new_parts[2]
        if t == 0.0 or new_energy > energy + 1e-14 * scale:
            # stalled at roundoff level: retry once along -g, then give up
            if t > 0.0:
                x -= t * d
            if steepest:
                # no further decrease is representable; accept if the gradient is small
                converged = residual_from_grad(g, grid) < tol
                break
            d = -g
            steepest = True
            continue
        steepest = False
        gg_new = pair(g_new, g_new)
        beta = max(0.0, (gg_new - pair(g_new, g)) / gg) if gg > 0 else 0.0
        g, g_new = g_new, g
        gg = gg_new
        parts, energy = new_parts, new_energy
        history.append(energy)
        if len(history) > ENERGY_WINDOW + 1:
            history.pop(0)
        d = -g + beta * d
    res = residual_from_grad(g, grid)
    return x, parts, res, it, converged


def lbfgs(values, links: GaugeLinks, b: float, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER):
    """Same contract as :func:`ncg`, using scipy's L-BFGS-B on (Re u, Im u).

    Serves as an independent second optimizer for cross-checks.
    """
    grid = links.grid
    shape = grid.shape
    g = np.empty(shape, dtype=np.complex128)

    def fun(z):
        v = z[: z.size // 2].reshape(shape) + 1j * z[z.size // 2:].reshape(shape)
        p = raw_energy_grad(v, links, b, g)
        return p[0] - p[1] + 0.5 * p[2], np.concatenate([g.real.ravel(), g.imag.ravel()])

    x0 = np.concatenate([np.real(values).ravel(), np.imag(values).ravel()])
    out = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B",
                            options={"maxiter": max_iter, "maxfun": 2 * max_iter,
                                     "gtol": 2.0 * grid.cell_volume * tol * 1e-2,
                                     "ftol": 1e-15, "maxcor": 20})
    z = out.x
    v = z[: z.size // 2].reshape(shape) + 1j * z[z.size // 2:].reshape(shape)
    parts = raw_energy_grad(v, links, b, g)
    res = residual_from_grad(g, grid)
    return v, parts, res, int(out.nit), bool(res < tol)


_METHODS = {"ncg": ncg, "lbfgs": lbfgs}


def initial_fields(grid: GridSpec, b: float, restarts: int, seed: int):
    """Starting fields: the constant branch first, then white noise."""
    rng = np.random.default_rng(seed)
    phase = np.exp(2j * math.pi * rng.random())
    out = [("constant", np.full(grid.shape, math.sqrt(max(1.0 - b, 0.0)) * phase))]
    for r in range(1, restarts):
        sub = np.random.default_rng([seed, r])
        noise = sub.normal(size=grid.shape) + 1j * sub.normal(size=grid.shape)
        out.append((f"noise{r}", 0.5 * noise / math.sqrt(2.0)))
    return out


def _pick_best(runs: Sequence[_Run], tol: float) -> _Run:
    """Lowest energy; within ``tol`` prefer smaller residual, then earlier start."""
    best = None
    for run in runs:
        if best is None:
            best = run
            continue
        scale = max(abs(best.energy), abs(run.energy), 1.0)
        if run.energy < best.energy - tol * scale:
            best = run
        elif abs(run.energy - best.energy) <= tol * scale:
            if (run.residual, run.order) < (best.residual, best.order):
                best = run
    return best


def _solve(grid: GridSpec, b: float, tol: float, restarts: int, seed: int,
           init: Optional[Sequence] = None, method: str = "ncg",
           max_iter: int = DEFAULT_MAX_ITER, calibrated: bool = True,
           links: Optional[GaugeLinks] = None) -> MinimizeResult:
    if b < 0 or not math.isfinite(b):
        raise ValueError(f"b must be a non-negative number, got {b}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    links = links or build_gauge_links(grid, calibrated=calibrated)
    solver = _METHODS[method]
    starts = []
    for k, f in enumerate(init or ()):
        vals = f.values if isinstance(f, OrderParameter) else np.asarray(f)
        starts.append((f"seeded{k}", vals))
    starts += initial_fields(grid, b, restarts, seed)
    runs = []
    for order, (label, v0) in enumerate(starts):
        x, parts, res, its, ok = solver(v0, links, b, tol, max_iter)
        e = parts[0] - parts[1] + 0.5 * parts[2]
        log.debug("start %s: E=%.12g res=%.3g its=%d", label, e, res, its)
        runs.append(_Run(x, e, parts, res, its, ok, label, order))
    best = _pick_best(runs, tol)
    if best.energy > 0.0:
        zero = np.zeros(grid.shape, dtype=np.complex128)
        best = _Run(zero, 0.0, (0.0, 0.0, 0.0), 0.0, 0, True, "zero", -1)
    if not best.converged:
        log.warning("best run (%s) did not reach residual %.1e (got %.2e)",
                    best.start, tol, best.residual)
    field_ = OrderParameter(grid, best.values)
    bd = breakdown(*best.parts, b)
    lower = -0.5 * max(1.0 - b, 0.0) ** 2 * grid.volume
    slack = 10.0 * tol * max(1.0, abs(lower))
    bounds = [
        {"name": "rough_lower", "lhs": lower, "rhs": bd.total, "pass": lower <= bd.total + slack},
        {"name": "nonpositive", "lhs": bd.total, "rhs": 0.0, "pass": bd.total <= 0.0},
        {"name": "max_principle", "lhs": field_.max_abs(), "rhs": 1.0 + 10 * tol,
         "pass": field_.max_abs() <= 1.0 + 10 * tol},
    ]
    if links.calibrated and not bounds[0]["pass"]:
        raise BoundViolation(f"energy {bd.total} below the rigorous floor {lower}")
    return MinimizeResult(
        energy=bd.total, breakdown=bd, field=field_, residual=best.residual,
        iterations=sum(r.iterations for r in runs), restarts_used=len(runs), b=b,
        side=grid.side, spacing=grid.spacing, bc=grid.bc, seed=seed,
        converged=best.converged, tol=tol, method=method, bounds=tuple(bounds),
        start=best.start,
    )


def minimize_dirichlet_2d(b, side, spacing, tol=DEFAULT_TOL, restarts=DEFAULT_RESTARTS,
                          seed=0, init=None, method="ncg", max_iter=DEFAULT_MAX_ITER,
                          calibrated=True) -> MinimizeResult:
    """Approximate m0(b, side).

    At ``b = 0`` the continuum infimum is not attained (it needs a boundary
    layer of vanishing width); on this cell-centred grid the walls sit on
    cell faces, so the discrete minimum equals ``-side**2 / 2`` at any spacing.
    """
    grid = GridSpec.from_spacing(2, side, spacing, BC.DIRICHLET)
    return _solve(grid, b, tol, restarts, seed, init, method, max_iter, calibrated)


def minimize_periodic_2d(b, N, spacing, tol=DEFAULT_TOL, restarts=DEFAULT_RESTARTS,
                         seed=0, init=None, method="ncg", max_iter=DEFAULT_MAX_ITER,
                         calibrated=True) -> MinimizeResult:
    """Approximate m_p(b, sqrt(2 pi N)); the spacing is rounded down to divide the side."""
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    if b <= 0:
        raise ValueError("the periodic problem needs b > 0")
    grid = GridSpec.periodic(int(N), spacing)
    return _solve(grid, b, tol, restarts, seed, init, method, max_iter, calibrated)


def cube_grid(side, spacing, max_nodes=MAX_NODES_3D) -> GridSpec:
    """Dirichlet cube grid; MemoryError when it exceeds ``max_nodes``."""
    grid = GridSpec.from_spacing(3, side, spacing, BC.DIRICHLET)
    if grid.points_per_side**3 > max_nodes:
        raise MemoryError(f"{grid.points_per_side}^3 nodes exceed the cap of {max_nodes}")
    return grid


def minimize_dirichlet_3d(b, side, spacing, tol=DEFAULT_TOL, restarts=DEFAULT_RESTARTS,
                          seed=0, init=None, method="ncg", max_iter=DEFAULT_MAX_ITER,
                          calibrated=True, max_nodes=MAX_NODES_3D,
                          companion: Optional[MinimizeResult] = None,
                          mhat: Optional[float] = None) -> MinimizeResult:
    """Approximate M0(b, side) on the cube.

    With ``companion`` (the 2D Dirichlet result at the same b, side and
    spacing) the sandwich ``R m0 <= M0 <= (R-2) m0 + mhat`` is evaluated and
    attached to ``bounds``; the upper side only when ``mhat`` is given.
    """
    grid = cube_grid(side, spacing, max_nodes)
    res = _solve(grid, b, tol, restarts, seed, init, method, max_iter, calibrated)
    if companion is None:
        return res
    extra = list(sandwich_bounds(res, companion, mhat))
    return MinimizeResult(**{**res.__dict__, "bounds": res.bounds + tuple(extra)})


def sandwich_bounds(res3: MinimizeResult, res2: MinimizeResult, mhat=None):
    R = res3.side
    slack = 10.0 * res3.tol * max(1.0, abs(res3.energy))
    out = [{"name": "slab_lower", "lhs": R * res2.energy, "rhs": res3.energy,
            "pass": R * res2.energy <= res3.energy + slack}]
    if mhat is not None:
        rhs = (R - 2.0) * res2.energy + mhat
        out.append({"name": "slab_upper", "lhs": res3.energy, "rhs": rhs,
                    "pass": res3.energy <= rhs + slack})
    return out


# --------------------------------------------------------------------------
# continuum extrapolation
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class Extrapolation:
    value: float
    order: Optional[float]
    residual: float
    error: float
    flagged: bool
    reason: str = ""
    spacings: tuple = ()
    energies: tuple = ()

    def as_dict(self):
        return {"value": self.value, "order": self.order, "residual": self.residual}


ORDER_RANGE = (1.5, 2.5)


def _richardson(a_coarse, e_coarse, a_fine, e_fine, p):
    r = (a_coarse / a_fine) ** p
    return e_fine + (e_fine - e_coarse) / (r - 1.0)


def _fit_order(a, e):
    """Order ``p`` of ``E(a) = E* + C a^p`` through three points."""
    d1 = e[0] - e[1]
    d2 = e[1] - e[2]

    def f(p):
        return d1 * (a[1] ** p - a[2] ** p) - d2 * (a[0] ** p - a[1] ** p)

    if d1 * d2 <= 0:
        return None
    ratio = abs(d1 / d2)
    if math.isclose(a[0] / a[1], a[1] / a[2], rel_tol=1e-9):
        return math.log(ratio) / math.log(a[0] / a[1])
    try:
        return optimize.brentq(f, 0.05, 12.0)
    except ValueError:
        return None


def continuum_extrapolate(results: Sequence, tol: float = DEFAULT_TOL) -> Extrapolation:
    """Richardson extrapolation of energies to zero spacing.

    ``results`` are MinimizeResults (or ``(spacing, energy)`` pairs) sharing
    b, side and boundary condition. With two spacings the O(a^2) order of the
    link stencil is assumed; with three or more the order is fitted on the
    finest three and must land in [1.5, 2.5] or the result is flagged.
    """
    pts = []
    keys = set()
    for r in results:
        if isinstance(r, MinimizeResult):
            pts.append((r.spacing, r.energy))
            keys.add((round(r.b, 12), round(r.side, 9), r.bc, r.dim))
        else:
            pts.append((float(r[0]), float(r[1])))
    if len(keys) > 1:
        raise ValueError("extrapolation inputs differ in (b, side, bc, dim)")
    if len(pts) < 2:
        raise ValueError("need at least two spacings")
    pts.sort(key=lambda t: -t[0])
    a = np.array([p[0] for p in pts])
    e = np.array([p[1] for p in pts])
    if np.any(np.diff(a) >= 0):
        raise ValueError("spacings must be distinct")
    scale = max(1.0, float(np.max(np.abs(e))))
    noise = 10.0 * tol * scale
    diffs = np.diff(e)
    base = dict(spacings=tuple(a), energies=tuple(e))
    if np.all(np.abs(diffs) <= 1e-12 * scale):
        return Extrapolation(float(e[-1]), None, 0.0, 0.0, True, "identical inputs", **base)
    signs = np.sign(diffs[np.abs(diffs) > noise])
    if signs.size and not (np.all(signs > 0) or np.all(signs < 0)):
        return Extrapolation(float(e[-1]), None, float("nan"), float(np.ptp(e)), True,
                             "non-monotone energy sequence", **base)
    if len(a) == 2:
        val = _richardson(a[0], e[0], a[1], e[1], 2.0)
        return Extrapolation(float(val), 2.0, 0.0, float(abs(val - e[-1])), False,
                             "order assumed", **base)
    a3, e3 = a[-3:], e[-3:]
    if np.all(np.abs(np.diff(e3)) <= noise):
        return Extrapolation(float(e[-1]), None, 0.0, float(np.ptp(e3)), True,
                             "differences below solver noise", **base)
    p = _fit_order(a3, e3)
    if p is None:
        return Extrapolation(float(e[-1]), None, float("nan"), float(np.ptp(e3)), True,
                             "order fit failed", **base)
    val = _richardson(a3[1], e3[1], a3[2], e3[2], p)
    resid = 0.0
    if len(a) > 3:
        C = (e3[2] - val) / a3[2] ** p
        resid = float(np.sqrt(np.mean((e - (val + C * a**p)) ** 2)))
    val2 = _richardson(a3[1], e3[1], a3[2], e3[2], 2.0)
    flagged = not (ORDER_RANGE[0] <= p <= ORDER_RANGE[1])
    return Extrapolation(float(val), float(p), resid, float(abs(val - val2) + abs(val - e3[2]) * 0.1),
                         flagged, "order outside [1.5, 2.5]" if flagged else "", **base)


def minimize_extrapolated(kind: str, b: float, size, spacings: Sequence[float], **kw):
    """Run one of the minimizers at several spacings and extrapolate."""
    fn = {"m0": minimize_dirichlet_2d, "mp": minimize_periodic_2d,
          "m3d": minimize_dirichlet_3d}[kind]
    results = [fn(b, size, s, **kw) for s in spacings]
    return results, continuum_extrapolate(results, tol=kw.get("tol", DEFAULT_TOL))


def periodic_grid_for(N: int, spacing: float) -> GridSpec:
    return GridSpec.periodic(N, spacing)


def dirichlet_grid_like(grid: GridSpec) -> GridSpec:
    return GridSpec(grid.dim, grid.side, grid.points_per_side, BC.DIRICHLET, grid.center)


__all__ = [
    "MinimizeResult", "Extrapolation", "BoundViolation", "ncg", "lbfgs",
    "minimize_dirichlet_2d", "minimize_periodic_2d", "minimize_dirichlet_3d",
    "continuum_extrapolate", "minimize_extrapolated", "sandwich_bounds", "periodic_side",
]
