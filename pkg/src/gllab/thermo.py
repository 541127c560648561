"""Thermodynamic limits and the global property suite.

Densities ``e(R) = m0(b, R) / R^2`` are fitted with ``e = g + C / R``; the
same model is used for ``c(R) / R^2``. E2 is estimated twice: from the
Abrikosov minimum on growing tori and from ``g(b) / (1 - b)^2`` as b -> 1.
The bulk trial configuration is evaluated in the scaled variables
``y = sqrt(kappa H) x`` where it is the reduced functional with ``b = H/kappa``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .energy import raw_energy_grad
from .grid import (BC, GridMismatchError, GridSpec, OrderParameter, build_gauge_links,
                   dirichlet_to_periodic, embed, periodic_extend, periodic_side,
                   tile_dirichlet)
from .landau import lowest_band, minimize_abrikosov, project_band
from .minimize import (DEFAULT_RESTARTS, DEFAULT_TOL, MinimizeResult, continuum_extrapolate,
                       minimize_dirichlet_2d, minimize_dirichlet_3d, minimize_periodic_2d)

log = logging.getLogger(__name__)

DEFAULT_SPACING = 0.25
GL_EXPONENT = 0.8
SIGMAS = (0.05, 0.1, 0.2, 0.4)


class SeriesWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ThermoSeries:
    """Fitted limit of a density series.

    ``points`` holds ``(scale, value)`` pairs: ``(R, m0/R^2)`` for g,
    ``(R, c(R)/R^2)`` for the lattice route and ``(1 - b, g(b)/(1-b)^2)`` for
    the GL route. ``limit`` is None when the series is flagged.
    """
    b: Optional[float]
    points: tuple
    limit: Optional[float]
    fit_constant: Optional[float]
    fit_exponent: Optional[float]
    residual: float
    error: float
    route: str = "m0"
    flagged: bool = False
    reason: str = ""
    point_errors: tuple = ()
    parts: tuple = ()

    def as_dict(self):
        d = {k: v for k, v in asdict(self).items() if k != "parts"}
        d["points"] = [list(p) for p in self.points]
        d["point_errors"] = list(self.point_errors)
        d["parts"] = [p.as_dict() for p in self.parts]
        return d


# --------------------------------------------------------------------------
# fitting helpers
# --------------------------------------------------------------------------
def fit_inverse(scales, values, errors=None):
    """Least squares ``value = limit + C / scale``.

    Returns ``(limit, C, stderr_limit, rms_residual)``. With as many points
    as parameters the fit is exact and the error comes from ``errors`` alone.
    """
    x = 1.0 / np.asarray(scales, dtype=float)
    y = np.asarray(values, dtype=float)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = len(y) - 2
    rms = float(np.sqrt(np.mean(resid**2))) if len(y) else 0.0
    cov_unit = np.linalg.pinv(A.T @ A)
    se = math.sqrt(float(np.sum(resid**2)) / dof * cov_unit[0, 0]) if dof > 0 else 0.0
    if errors is not None:
        # propagate per-point errors through the linear fit (worst case, not quadrature)
        lev = np.abs((cov_unit @ A.T)[0])
        se = math.hypot(se, float(np.sum(lev * np.asarray(errors, dtype=float))))
    return float(coef[0]), float(coef[1]), se, rms


def fit_power(scales, values):
    """Free exponent of ``value = limit + C scale^-p``; None when ill-posed."""
    x = np.asarray(scales, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(x) < 4 or np.ptp(y) <= 1e-14 * max(1.0, np.max(np.abs(y))):
        return None

    def model(s, g, c, p):
        return g + c * s ** (-p)

    try:
        popt, _ = optimize.curve_fit(model, x, y, p0=(y[-1], (y[0] - y[-1]) * x[0], 1.0),
                                     maxfev=20000)
    except (RuntimeError, ValueError):
        return None
    p = float(popt[2])
    return p if 0.0 < p < 10.0 else None


def _series(b, scales, values, errors, tol_noise, route, decreasing=True, parts=()):
    scales = [float(s) for s in scales]
    values = [float(v) for v in values]
    pts = tuple(zip(scales, values))
    if all(v == 0.0 for v in values):
        return ThermoSeries(b, pts, 0.0, 0.0, None, 0.0, 0.0, route, False, "", tuple(errors),
                            tuple(parts))
    flagged, reason = False, ""
    if decreasing:
        for (s0, v0), (s1, v1), e0, e1 in zip(pts, pts[1:], errors, errors[1:]):
            if v1 > v0 + tol_noise + e0 + e1:
                flagged, reason = True, f"density rises between R={s0:g} and R={s1:g}"
                break
    limit, C, se, rms = fit_inverse(scales, values, errors)
    p = fit_power(scales, values)
    return ThermoSeries(b, pts, None if flagged else limit, C, p, rms, se, route, flagged,
                        reason, tuple(errors), tuple(parts))


# --------------------------------------------------------------------------
# cached building blocks
# --------------------------------------------------------------------------
def _aligned(grid_small: GridSpec, grid_big: GridSpec) -> bool:
    if not math.isclose(grid_small.spacing, grid_big.spacing, rel_tol=1e-10):
        return False
    d = (grid_big.points_per_side - grid_small.points_per_side)
    return d >= 0 and d % 2 == 0


@lru_cache(maxsize=64)
def dirichlet_chain(b: float, sides: tuple, spacing: float = DEFAULT_SPACING,
                    tol: float = DEFAULT_TOL, restarts: int = DEFAULT_RESTARTS,
                    seed: int = 0) -> tuple:
    """m0 at increasing sides, each run seeded by the smaller boxes.

    Every smaller minimizer is embedded (zero outside) and exact halves are
    tiled by magnetic translation. Both seeds have energy at most the source
    energy, so the chain is non-increasing and ``m0(2R) <= 4 m0(R)`` up to
    solver noise by construction of the start set.
    """
    out = []
    for side in sorted(sides):
        grid = GridSpec.from_spacing(2, side, spacing, BC.DIRICHLET)
        init = []
        for prev in out:
            if _aligned(prev.field.grid, grid):
                try:
                    init.append(embed(prev.field, grid).values)
                except GridMismatchError:
                    pass
            if math.isclose(2 * prev.side, side, rel_tol=1e-12) and \
                    2 * prev.field.grid.points_per_side == grid.points_per_side:
                init.append(tile_dirichlet(prev.field, 2).values)
        out.append(minimize_dirichlet_2d(b, side, spacing, tol=tol, restarts=restarts,
                                         seed=seed, init=init or None))
    return tuple(out)


def dirichlet_point(b, side, spacing=DEFAULT_SPACING, tol=DEFAULT_TOL,
                    restarts=DEFAULT_RESTARTS, seed=0) -> MinimizeResult:
    return dirichlet_chain(float(b), (float(side),), spacing, tol, restarts, seed)[0]


@lru_cache(maxsize=32)
def band_and_abrikosov(N: int, spacing: float, tol: float = 1e-10, restarts: int = 8,
                       seed: int = 0):
    band = lowest_band(N, spacing)
    return band, minimize_abrikosov(band, tol=tol, restarts=restarts, seed=seed)


@lru_cache(maxsize=64)
def periodic_point(b: float, N: int, spacing: float = DEFAULT_SPACING, tol: float = DEFAULT_TOL,
                   restarts: int = DEFAULT_RESTARTS, seed: int = 0):
    """``(m_p result, m0 result at the same side, abrikosov result)``.

    The periodic run starts from the Dirichlet minimizer extended to the
    torus and from ``sqrt(1-b)`` times the Abrikosov minimizer, which makes
    ``m_p <= m0`` and ``m_p <= (1-b)^2 c(R)`` exact on the grid.
    """
    side = periodic_side(N)
    m0 = dirichlet_point(b, side, spacing, tol, restarts, seed)
    band, abr = band_and_abrikosov(N, spacing)
    init = [dirichlet_to_periodic(m0.field).values]
    if b < 1:
        init.append(math.sqrt(1.0 - b) * band.field(abr.coefficients).values)
    mp = minimize_periodic_2d(b, N, spacing, tol=tol, restarts=restarts, seed=seed, init=init)
    return mp, m0, abr


def clear_caches():
    dirichlet_chain.cache_clear()
    band_and_abrikosov.cache_clear()
    periodic_point.cache_clear()


# --------------------------------------------------------------------------
# g(b) and E2
# --------------------------------------------------------------------------
def estimate_g(b: float, sides: Sequence[float], spacing: float = DEFAULT_SPACING,
               tol: float = DEFAULT_TOL, spacings: Optional[Sequence[float]] = None,
               restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> ThermoSeries:
    """Fit ``m0(b, R) / R^2 = g + C / R`` over ``sides``.

    With several ``spacings`` each point is continuum extrapolated first;
    otherwise the single ``spacing`` is used and its value is taken as is.
    """
    sides = [float(s) for s in sides]
    if len(sides) < 3:
        raise ValueError("need at least three sides")
    if any(s1 <= s0 for s0, s1 in zip(sides, sides[1:])):
        raise ValueError("sides must be increasing")
    if sides[0] < 4:
        raise ValueError("sides must be at least 4")
    if b < 0:
        raise ValueError("b must be non-negative")
    spacings = tuple(spacings) if spacings else (spacing,)
    chains = [dirichlet_chain(float(b), tuple(sides), float(a), tol, restarts, seed)
              for a in spacings]
    values, errors = [], []
    for i, R in enumerate(sides):
        runs = [c[i] for c in chains]
        if len(runs) > 1:
            ex = continuum_extrapolate(runs, tol)
            E, err = ex.value, ex.error
        else:
            E, err = runs[0].energy, 0.0
        noise = tol * max(1.0, abs(E))
        values.append(E / R**2)
        errors.append((err + noise) / R**2)
    return _series(float(b), sides, values, errors, 10.0 * tol, "m0")


def estimate_e2_lattice(Ns: Sequence[int], spacing: float = 0.125, tol: float = 1e-10,
                        restarts: int = 8, seed: int = 0) -> ThermoSeries:
    """Fit ``c(R) / R^2 = E2 + C / R`` over the tori with N flux quanta."""
    Ns = sorted(int(n) for n in Ns)
    if len(set(Ns)) < 3:
        raise ValueError("need at least three distinct N")
    scales, values, errors = [], [], []
    for N in Ns:
        _, abr = band_and_abrikosov(N, float(spacing), tol, restarts, seed)
        scales.append(periodic_side(N))
        values.append(abr.density)
        errors.append(1e-6 * abs(abr.density))
    # c(R)/R^2 is not monotone in R (lattice frustration depends on N)
    return _series(None, scales, values, errors, 0.0, "lattice", decreasing=False)


def gl_sides(b: float, exponent: float = GL_EXPONENT, minimum: float = 16.0, step: float = 4.0):
    """Default sides for the GL route: three sides above ``(1-b)^-exponent``."""
    s0 = max(minimum, step * math.ceil((1.0 - b) ** (-exponent) / step))
    return (s0, s0 + step, s0 + 2 * step)


def estimate_e2_gl(bs: Sequence[float], sides=None, spacing: float = DEFAULT_SPACING,
                   tol: float = DEFAULT_TOL, exponent: float = GL_EXPONENT,
                   restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> ThermoSeries:
    """``g(b) / (1-b)^2`` per b, extrapolated linearly in ``1 - b`` to b = 1.

    ``sides`` is either one list used for every b or a mapping b -> list.
    Sides below ``(1-b)^-exponent`` are dropped with a warning.
    """
    bs = sorted(float(b) for b in bs)
    if len(bs) < 2 or any(not 0 < b < 1 for b in bs):
        raise ValueError("need at least two b values in (0, 1)")
    parts, xs, ratios, errs = [], [], [], []
    for b in bs:
        if sides is None:
            sb = gl_sides(b, exponent)
        elif isinstance(sides, dict):
            sb = sides[b]
        else:
            sb = sides
        floor = (1.0 - b) ** (-exponent)
        kept = [s for s in sb if s >= floor]
        if len(kept) < len(sb):
            warnings.warn(f"b={b}: dropped sides below {floor:.3g}", SeriesWarning, stacklevel=2)
        if len(kept) < 3:
            raise ValueError(f"b={b}: fewer than three sides at or above {floor:.3g}")
        s = estimate_g(b, kept, spacing, tol, restarts=restarts, seed=seed)
        parts.append(s)
        g = s.limit if s.limit is not None else s.points[-1][1]
        q = (1.0 - b) ** 2
        xs.append(1.0 - b)
        ratios.append(g / q)
        errs.append((s.error + (s.residual if s.limit is None else 0.0)) / q)
    flagged = any(p.flagged for p in parts)
    d = np.diff(ratios)
    monotone = bool(np.all(d <= np.array(errs[1:]) + np.array(errs[:-1])) or
                    np.all(d >= -(np.array(errs[1:]) + np.array(errs[:-1]))))
    x = np.asarray(xs)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, np.asarray(ratios), rcond=None)
    resid = np.asarray(ratios) - A @ coef
    cov_unit = np.linalg.pinv(A.T @ A)
    dof = len(x) - 2
    se = math.sqrt(float(np.sum(resid**2)) / dof * cov_unit[0, 0]) if dof > 0 else 0.0
    lev = np.abs((cov_unit @ A.T)[0])
    # the linear model in 1-b is itself a choice; the spread of the ratios
    # around their b -> 1 end is kept as a systematic part of the error bar
    sys_err = float(np.max(np.abs(np.asarray(ratios) - coef[0]))) * 0.5
    err = math.hypot(se, float(np.sum(lev * np.asarray(errs)))) + sys_err
    reason = "" if monotone else "ratios not monotone in b (diagnostic)"
    if flagged:
        reason = "; ".join(filter(None, [reason, "a g(b) series is flagged"]))
    return ThermoSeries(None, tuple(zip(xs, ratios)), float(coef[0]), float(coef[1]), None,
                        float(np.sqrt(np.mean(resid**2))), err, "gl", flagged, reason,
                        tuple(errs), tuple(parts))


# --------------------------------------------------------------------------
# bulk trial configuration
# --------------------------------------------------------------------------
def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        f0 = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        s = 1.0 - t
        f1 = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return f0 / (f0 + f1)


def cutoff_chi(t):
    """Even cutoff: 1 on [-1, 1], 0 outside [-2, 2], smooth in between."""
    return 1.0 - smooth_step(np.abs(t) - 1.0)


def h_eta(dist, eta):
    return 1.0 - cutoff_chi(np.asarray(dist) / eta)


def default_eta(kappa: float, eta0: float = 0.1, kappa0: float = 40.0, power: float = 0.5):
    """Cutoff width shrinking like ``kappa^-power`` (between 1/kappa and 1)."""
    return eta0 * (kappa0 / kappa) ** power


@dataclass(frozen=True)
class TrialConfigReport:
    kappa: float
    H: float
    eta: float
    ell: float
    R: float
    domain_volume: float
    energy: float
    bound: float
    slack: float
    normalized_slack: float
    e2: float
    N: int
    spacing: float
    max_modulus: float
    vanishes_on_layer: bool
    matches_outside: bool
    domain: str = "box-domain adaptation"

    def as_dict(self):
        return asdict(self)


def bulk_trial_energy(kappa: float, H: float, N: int = 16, eta: Optional[float] = None,
                      box_side: float = 1.0, spacing: float = DEFAULT_SPACING,
                      e2: Optional[float] = None, tol: float = DEFAULT_TOL,
                      restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> TrialConfigReport:
    """Energy of ``h_eta(x) u_{b,R}(sqrt(kappa H) x_perp)`` on a cube with frozen F.

    ``u_{b,R}`` is the periodic minimizer for ``b = H/kappa`` with N flux
    quanta; E2 defaults to ``c(R)/R^2`` of the same torus. In scaled
    coordinates the energy is ``kappa^(1/2) H^(-3/2)`` times the reduced
    functional; interior z-slices are identical and evaluated once.
    """
    if kappa <= 0 or H <= 0:
        raise ValueError("kappa and H must be positive")
    if H < 0.8 * kappa or H > 10.0 * kappa:
        raise ValueError("need 0.8 kappa <= H <= 10 kappa")
    eta = default_eta(kappa) if eta is None else float(eta)
    if not (1.0 / kappa < eta < 0.3 * box_side):
        raise ValueError("eta must lie in (1/kappa, 0.3 box_side)")
    b = H / kappa
    s = math.sqrt(kappa * H)
    R = periodic_side(N)
    if e2 is None:
        e2 = band_and_abrikosov(N, spacing)[1].density
    if b < 1:
        mp, _, _ = periodic_point(float(b), int(N), spacing, tol, restarts, seed)
        u = mp.field
    else:
        u = OrderParameter.zeros(GridSpec.periodic(N, spacing))
    a = u.grid.spacing
    n = int(round(box_side * s / a))
    if (u.grid.points_per_side - n) % 2:
        n += 1
    cross = GridSpec(2, n * a, n, BC.DIRICHLET, (0.0, 0.0))
    links = build_gauge_links(cross, calibrated=True)
    U = periodic_extend(u, cross)
    P = np.abs(U) ** 2
    L = n * a  # scaled side actually used
    half = 0.5 * L
    x = cross.axis_coords(0)
    d_axis = (half - np.abs(x)) / s  # physical distance to the nearest face, per axis
    d_perp = np.minimum.outer(d_axis, d_axis)
    f_perp = h_eta(d_perp, eta)

    def slice_energy(f):
        if not np.any(f):
            return 0.0
        kin, mass, quart = raw_energy_grad(f * U, links, b)
        return kin - mass + 0.5 * quart

    e_int = slice_energy(f_perp)
    total = 0.0
    z_kin = 0.0
    edge = [k for k in range(n) if d_axis[k] < 2.0 * eta]
    interior = n - len(edge)
    total += interior * a * e_int
    cache = {}
    for k in edge:
        key = min(k, n - 1 - k)
        if key not in cache:
            cache[key] = slice_energy(h_eta(np.minimum(d_perp, d_axis[k]), eta))
        total += a * cache[key]
    for k in range(n - 1):
        if d_axis[k] >= 2 * eta and d_axis[k + 1] >= 2 * eta:
            continue
        f0 = h_eta(np.minimum(d_perp, d_axis[k]), eta)
        f1 = h_eta(np.minimum(d_perp, d_axis[k + 1]), eta)
        z_kin += b * a * float(np.sum((f1 - f0) ** 2 * P))
    G = total + z_kin
    energy = math.sqrt(kappa) / H**1.5 * G
    volume = (L / s) ** 3
    bound = e2 * volume * max(kappa - H, 0.0) ** 2
    slack = energy - bound
    norm = max(kappa, max(kappa - H, 0.0) ** 2)
    layer = d_perp <= eta
    inner = d_perp >= 2 * eta
    return TrialConfigReport(
        kappa=float(kappa), H=float(H), eta=eta, ell=R / s, R=R, domain_volume=volume,
        energy=float(energy), bound=float(bound), slack=float(slack),
        normalized_slack=float(slack / norm), e2=float(e2), N=int(N), spacing=a,
        max_modulus=float(np.sqrt(P.max())) if P.size else 0.0,
        vanishes_on_layer=bool(np.all(f_perp[layer] == 0.0)),
        matches_outside=bool(np.all(np.abs(f_perp[inner] - 1.0) == 0.0)),
    )


# --------------------------------------------------------------------------
# calibration record and property suite
# --------------------------------------------------------------------------
@dataclass
class Calibration:
    """Fitted constants of one run; reported, never asserted by value."""
    C_hat: Optional[float] = None        # m0 <= m_p + C (1-b) R
    C_hat_spread: Optional[float] = None  # max/min of the per-point values
    M_hat: Optional[float] = None        # M0 <= (R-2) m0 + M
    alpha_hat: Optional[float] = None    # alpha (1-b)^2 <= |g(b)|
    C_p: dict = field(default_factory=dict)   # ||u - Pi u||_p <= C_p sqrt(gamma) ||u||_2
    C_max: Optional[float] = None        # max|u_p| <= C_max [1/b - 1]^(1/2)
    C_sigma: Optional[float] = None      # lower bound constant of m_p vs c(R)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    params: dict
    lhs: float
    rhs: float
    passed: bool
    hard: bool = True

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def as_dict(self):
        d = asdict(self)
        d["slack"] = self.slack
        return d


@dataclass
class SuiteConfig:
    bs: tuple = (0.3, 0.5, 0.7, 0.9)
    Ns: tuple = (4, 16, 36)
    sides: tuple = (6.0, 8.0, 10.0, 12.0, 16.0)
    spacing: float = DEFAULT_SPACING
    tol: float = DEFAULT_TOL
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0
    g_bs: tuple = ()
    g_sides: tuple = (8.0, 12.0, 16.0)
    sides3d: tuple = ()
    bs3d: tuple = ()
    corrupt: float = 1.0  # amplitude factor applied to minimizers (negative control)


@dataclass
class SuiteReport:
    checks: list
    calibration: Calibration
    g_series: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)

    def failures(self):
        return [c for c in self.checks if c.hard and not c.passed]

    def as_dict(self):
        return {"passed": self.passed, "checks": [c.as_dict() for c in self.checks],
                "calibration": self.calibration.as_dict(),
                "g_series": [s.as_dict() for s in self.g_series]}


def _field_checks(res: MinimizeResult, kind: str, params: dict, factor: float, tol: float):
    values = res.field.values * factor
    links = build_gauge_links(res.field.grid)
    kin, mass, quart = raw_energy_grad(values, links, res.b)
    e = kin - mass + 0.5 * quart
    R = res.side
    dim = res.field.grid.dim
    lower = -0.5 * max(1.0 - res.b, 0.0) ** 2 * R**dim
    slack = 10.0 * tol * max(1.0, abs(lower))
    top = float(np.max(np.abs(values))) if values.size else 0.0
    out = [
        PropertyCheck(f"{kind}.rough_lower", params, lower, e + slack, lower <= e + slack),
        PropertyCheck(f"{kind}.nonpositive", params, e, slack, e <= slack),
        PropertyCheck(f"{kind}.max_principle", params, top, 1.0 + 10 * tol, top <= 1.0 + 10 * tol),
    ]
    if res.b >= 1:
        out.append(PropertyCheck(f"{kind}.normal_state", params, abs(e), 1e-6, abs(e) <= 1e-6))
    if factor == 1.0 and res.converged:
        gap = e + 0.5 * quart
        out.append(PropertyCheck(f"{kind}.critical_identity", params, abs(gap),
                                 10 * tol * max(1.0, abs(e)), abs(gap) <= 10 * tol * max(1.0, abs(e))))
    return out, e


def property_suite(config: Optional[SuiteConfig] = None) -> SuiteReport:
    """Evaluate the inequalities tying m0, m_p, c(R), M0 and g together.

    Failures are returned as data. Constants without a known value (C, M,
    alpha, C_p, C_max) are fitted and only their sign and form are checked.
    """
    cfg = config or SuiteConfig()
    tol, a, f = cfg.tol, cfg.spacing, cfg.corrupt
    checks: list = []
    cal = Calibration()
    kw = dict(tol=tol, restarts=cfg.restarts, seed=cfg.seed)

    # Dirichlet chains: rough bounds, monotonicity in R, subadditivity
    for b in cfg.bs:
        chain = dirichlet_chain(float(b), tuple(float(s) for s in cfg.sides), a, **kw)
        energies = {}
        for res in chain:
            c, e = _field_checks(res, "m0", {"b": b, "side": res.side}, f, tol)
            checks += c
            energies[res.side] = e
        sides = sorted(energies)
        for s0, s1 in zip(sides, sides[1:]):
            noise = 10 * tol * max(1.0, abs(energies[s0]))
            checks.append(PropertyCheck("m0.monotone_in_R", {"b": b, "R": s0, "R2": s1},
                                        energies[s1], energies[s0] + noise,
                                        energies[s1] <= energies[s0] + noise))
        for s in sides:
            if 2 * s in energies:
                rhs = 4 * energies[s] + 10 * tol * max(1.0, abs(4 * energies[s]))
                checks.append(PropertyCheck("m0.subadditive", {"b": b, "R": s},
                                            energies[2 * s], rhs, energies[2 * s] <= rhs))

    # periodic problems: ordering chain, c(R) bounds, sup-norm and projection constants
    gaps, cmax, cps, csig = [], [], {2: [], 4: []}, []
    for b in cfg.bs:
        for N in cfg.Ns:
            mp, m0, abr = periodic_point(float(b), int(N), a, **kw)
            R = mp.side
            params = {"b": b, "N": N}
            c, emp = _field_checks(mp, "mp", params, f, tol)
            checks += c
            e0 = m0.energy
            noise = 10 * tol * max(1.0, abs(e0))
            checks.append(PropertyCheck("mp_le_m0", params, emp, e0 + noise, emp <= e0 + noise))
            ub = max(1.0 - b, 0.0) ** 2 * abr.c_value
            checks.append(PropertyCheck("mp_le_c", params, emp, ub + noise, emp <= ub + noise))
            if b < 1:
                gaps.append((e0 - emp) / ((1.0 - b) * R))
                gamma = 1.0 / b - 1.0
                cmax.append(float(np.max(np.abs(mp.field.values))) / math.sqrt(gamma))
                band, _ = band_and_abrikosov(int(N), a)
                inside, _ = project_band(band, mp.field)
                rest = mp.field.values - inside.values
                l2 = mp.field.l2_norm()
                if l2 > 0:
                    w = mp.field.grid.cell_volume
                    for p in (2, 4):
                        lp = float(np.sum(np.abs(rest) ** p) * w) ** (1.0 / p)
                        cps[p].append(lp / (math.sqrt(gamma) * l2))
                # smallest constant making the sigma lower bound hold, best sigma
                q = (1.0 - b) ** 2
                need = min(((1 + 2 * s) * abr.c_value - emp / q) * s**3 / (q * R**4)
                           for s in SIGMAS)
                csig.append(need)
    if gaps:
        pos = [g for g in gaps if g > 0]
        cal.C_hat = max(gaps)
        cal.C_hat_spread = (max(pos) / min(pos)) if pos else None
        checks.append(PropertyCheck("m0_le_mp_plus_CR.form", {}, -cal.C_hat, 0.0,
                                    cal.C_hat >= 0.0))
    if cmax:
        cal.C_max = max(cmax)
    cal.C_p = {str(p): max(v) for p, v in cps.items() if v}
    if csig:
        cal.C_sigma = max(0.0, max(csig))

    # g(b) series: range, monotonicity, concavity, quadratic pinch
    gs = []
    for b in cfg.g_bs:
        s = estimate_g(float(b), cfg.g_sides, a, tol, restarts=cfg.restarts, seed=cfg.seed)
        gs.append(s)
    if gs:
        checks += g_shape_checks(gs, cal)

    # 3D sandwich
    m3 = []
    for b in cfg.bs3d:
        for R in cfg.sides3d:
            res2 = dirichlet_point(float(b), float(R), a, **kw)
            res3 = minimize_dirichlet_3d(float(b), float(R), a, **kw)
            c, e3 = _field_checks(res3, "M0", {"b": b, "side": R}, f, tol)
            checks += c
            slack = 10 * tol * max(1.0, abs(e3))
            checks.append(PropertyCheck("M0_slab_lower", {"b": b, "side": R},
                                        R * res2.energy, e3 + slack, R * res2.energy <= e3 + slack))
            m3.append(e3 - (R - 2) * res2.energy)
    if m3:
        cal.M_hat = max(0.0, max(m3))
    return SuiteReport(checks, cal, gs)


def g_shape_checks(series: Sequence[ThermoSeries], cal: Optional[Calibration] = None):
    """Range, monotonicity, midpoint concavity and the quadratic pinch of g."""
    pts = sorted((s.b, s.limit if s.limit is not None else s.points[-1][1], s.error)
                 for s in series)
    checks = []
    for b, g, err in pts:
        checks.append(PropertyCheck("g.range", {"b": b}, g, 0.0,
                                    -0.5 - err <= g <= err))
        upper = 0.5 * max(1.0 - b, 0.0) ** 2
        checks.append(PropertyCheck("g.pinch_upper", {"b": b}, abs(g), upper + err,
                                    abs(g) <= upper + err))
    for (b0, g0, e0), (b1, g1, e1) in zip(pts, pts[1:]):
        checks.append(PropertyCheck("g.nondecreasing", {"b": b0, "b2": b1}, g0, g1 + e0 + e1,
                                    g0 <= g1 + e0 + e1))
    for i in range(1, len(pts) - 1):
        (bl, gl, el), (bm, gm, em), (br, gr, er) = pts[i - 1], pts[i], pts[i + 1]
        t = (bm - bl) / (br - bl)
        chord = (1 - t) * gl + t * gr
        tolc = el + em + er
        checks.append(PropertyCheck("g.concave", {"b": bm}, chord, gm + tolc, chord <= gm + tolc))
    ratios = [abs(g) / (1 - b) ** 2 for b, g, _ in pts if b < 1]
    if ratios:
        alpha = min(ratios)
        if cal is not None:
            cal.alpha_hat = alpha
        checks.append(PropertyCheck("g.pinch_alpha_positive", {}, -alpha, 0.0, alpha > 0))
    return checks


__all__ = [
    "ThermoSeries", "TrialConfigReport", "Calibration", "PropertyCheck", "SuiteConfig",
    "SuiteReport", "estimate_g", "estimate_e2_lattice", "estimate_e2_gl", "gl_sides",
    "bulk_trial_energy", "property_suite", "g_shape_checks", "fit_inverse", "h_eta",
    "cutoff_chi", "default_eta", "dirichlet_chain", "dirichlet_point", "periodic_point", "band_and_abrikosov",
    "clear_caches",
]
