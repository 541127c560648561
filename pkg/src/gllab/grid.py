"""Discretized boxes and the unit constant magnetic field as link phases.

Nodes are cell centres: a box of side ``R`` split into ``n`` cells per axis
has nodes at ``c - R/2 + (i + 1/2) a`` with ``a = R / n``. For Dirichlet boxes
the field vanishes on the cell faces that form the boundary, so the edge
from the outermost node to the wall has length ``a/2`` (weight 2 in the
kinetic sum). Magnetic-periodic boxes are discrete tori whose wrap-around
edges carry the quasi-periodic phase of E_R.

The vector potential is the symmetric gauge ``A = (-x2/2, x1/2[, 0])``.
Edge phases are exact line integrals, so every elementary plaquette in the
(x1, x2) plane carries flux ``a**2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

MAX_SPACING = 0.5
QUANT_TOL = 1e-9


class QuantizationError(ValueError):
    """Periodic box whose area is not an integer number of flux quanta."""


class GridMismatchError(ValueError):
    """Two objects that should share a grid do not."""


class BC(str, Enum):
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"


def flux_quanta(side: float) -> float:
    return side * side / (2.0 * math.pi)


def snap_side(side: float) -> tuple[float, int, float]:
    """Nearest admissible periodic side ``sqrt(2 pi N)``.

    Returns ``(snapped_side, N, |snapped_side - side|)``.
    """
    N = max(1, int(round(flux_quanta(side))))
    snapped = math.sqrt(2.0 * math.pi * N)
    return snapped, N, abs(snapped - side)


def periodic_side(N: int) -> float:
    if N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    return math.sqrt(2.0 * math.pi * N)


@dataclass(frozen=True)
class GridSpec:
    dim: int
    side: float
    points_per_side: int
    bc: BC = BC.DIRICHLET
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        object.__setattr__(self, "bc", BC(self.bc))
        center = tuple(float(c) for c in self.center)
        if len(center) < self.dim:
            center = center + (0.0,) * (self.dim - len(center))
        object.__setattr__(self, "center", center[: self.dim])
        if not (self.side > 0 and math.isfinite(self.side)):
            raise ValueError(f"side must be positive, got {self.side}")
        if self.points_per_side < 2:
            raise ValueError("need at least 2 points per side")
        if self.spacing > MAX_SPACING * (1 + 1e-12):
            raise ValueError(
                f"spacing {self.spacing:.4g} exceeds {MAX_SPACING} magnetic lengths"
            )
        if self.bc is BC.PERIODIC:
            if self.dim != 2:
                raise ValueError("magnetic-periodic boxes are two-dimensional")
            nq = flux_quanta(self.side)
            if nq < 0.5 or abs(nq - round(nq)) * 2 * math.pi > QUANT_TOL:
                raise QuantizationError(
                    f"side**2 = {self.side**2:.12g} is not 2*pi*N (N ~ {nq:.6g})"
                )

    @classmethod
    def from_spacing(cls, dim, side, spacing, bc=BC.DIRICHLET, center=(0.0, 0.0, 0.0)):
        """Box with the largest admissible spacing not exceeding ``spacing``."""
        if spacing <= 0:
            raise ValueError("spacing must be positive")
        n = max(2, int(math.ceil(side / spacing - 1e-9)))
        return cls(dim, float(side), n, bc, center)

    @classmethod
    def periodic(cls, N, spacing, center=(0.0, 0.0)):
        return cls.from_spacing(2, periodic_side(N), spacing, BC.PERIODIC, center)

    @property
    def spacing(self) -> float:
        return self.side / self.points_per_side

    @property
    def shape(self) -> tuple:
        return (self.points_per_side,) * self.dim

    @property
    def N(self) -> int:
        """Flux quanta through the (x1, x2) cross-section, rounded."""
        return int(round(flux_quanta(self.side)))

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def volume(self) -> float:
        return self.side**self.dim

    def axis_coords(self, axis: int) -> np.ndarray:
        a = self.spacing
        i = np.arange(self.points_per_side)
        return self.center[axis] - 0.5 * self.side + (i + 0.5) * a

    def coords(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.axis_coords(k) for k in range(self.dim)], indexing="ij")

    def translated(self, shift) -> "GridSpec":
        center = tuple(c + s for c, s in zip(self.center, tuple(shift) + (0.0,) * 3))
        return GridSpec(self.dim, self.side, self.points_per_side, self.bc, center)

    def same_lattice(self, other: "GridSpec") -> bool:
        return (
            self.dim == other.dim
            and self.points_per_side == other.points_per_side
            and self.bc == other.bc
            and math.isclose(self.side, other.side, rel_tol=1e-12)
            and all(math.isclose(x, y, abs_tol=1e-9) for x, y in zip(self.center, other.center))
        )


@lru_cache(maxsize=256)
def lattice_floor(flux: float) -> float:
    """Bottom of the spectrum of the infinite-lattice magnetic Laplacian.

    ``flux`` is the phase per plaquette. The result is in hopping units, so
    the continuum value is ``flux`` itself. Computed in Landau gauge, where
    the operator reduces to a family of tridiagonal Harper chains; a window
    of 14 magnetic lengths around one potential well is exact up to tunnelling
    corrections of order exp(-1/flux).
    """
    if flux <= 0:
        return 0.0
    half = int(math.ceil(14.0 / math.sqrt(flux))) + 2
    m = np.arange(-half, half + 1, dtype=float)
    off = -np.ones(m.size - 1)
    best = np.inf
    for delta in (0.0, 0.25, 0.5):
        diag = 4.0 - 2.0 * np.cos(flux * (m - delta))
        w = eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, 0))
        best = min(best, float(w[0]))
    return best


def kinetic_calibration(spacing: float) -> float:
    """Factor that puts the lattice Landau floor exactly at 1.

    The plain link Laplacian has its lowest Landau level at ``1 - a**2/8 + ...``;
    dividing the in-plane kinetic term by that floor restores the identity
    ``inf spec = 1`` on which the normal-state and rough energy bounds rest.
    """
    flux = spacing * spacing
    return flux / lattice_floor(flux)


@dataclass(frozen=True)
class GaugeLinks:
    """Link data for one grid.

    ``theta[k]`` is the line integral of A along the edge leaving each node in
    direction ``k``. ``hop[k]`` is the factor applied to the neighbour value in
    the covariant difference ``hop * u(x + e_k) - u(x)``; on periodic wrap
    edges it also carries the quasi-periodic phase. ``weight[k]`` is 1 on
    edges that exist and 0 otherwise; ``wall[k]`` counts the half-edges to the
    Dirichlet boundary (times 2) at each node.
    """

    grid: GridSpec
    theta: tuple
    hop: tuple
    weight: tuple
    wall: tuple
    scale: tuple = field(default=(1.0, 1.0))

    @property
    def calibrated(self) -> bool:
        return self.scale[0] != 1.0


def build_gauge_links(grid: GridSpec, calibrated: bool = True) -> GaugeLinks:
    a = grid.spacing
    n = grid.points_per_side
    X = grid.coords()
    theta = [-0.5 * a * X[1], 0.5 * a * X[0]]
    if grid.dim == 3:
        theta.append(np.zeros(grid.shape))
    hop = [np.exp(-1j * t) for t in theta]
    weight = []
    wall = []
    for k in range(grid.dim):
        w = np.ones(grid.shape)
        wl = np.zeros(grid.shape)
        if grid.bc is BC.DIRICHLET:
            last = [slice(None)] * grid.dim
            last[k] = n - 1
            first = [slice(None)] * grid.dim
            first[k] = 0
            w[tuple(last)] = 0.0
            hop[k][tuple(last)] = 0.0
            wl[tuple(last)] += 2.0
            wl[tuple(first)] += 2.0
        weight.append(w)
        wall.append(wl)
    if grid.bc is BC.PERIODIC:
        R = grid.side
        hop[0][n - 1, :] *= np.exp(0.5j * R * X[1][n - 1, :])
        hop[1][:, n - 1] *= np.exp(-0.5j * R * X[0][:, n - 1])
    s = kinetic_calibration(a) if calibrated else 1.0
    scale = (s, s) if grid.dim == 2 else (s, s, 1.0)
    for arr in (*theta, *hop, *weight, *wall):
        arr.setflags(write=False)
    return GaugeLinks(grid, tuple(theta), tuple(hop), tuple(weight), tuple(wall), scale)


def plaquette_flux(links: GaugeLinks, axes=(0, 1)) -> np.ndarray:
    """Oriented phase around each elementary plaquette spanned by ``axes``.

    Uses the effective transporters (including wrap phases) and reports the
    angle in (-pi, pi]. Plaquettes touching a missing Dirichlet edge are NaN.
    """
    i, j = axes
    hi, hj = links.hop[i], links.hop[j]
    wi, wj = links.weight[i], links.weight[j]

    def fwd(arr, k):
        return np.roll(arr, -1, axis=k)

    loop = np.conj(hi) * np.conj(fwd(hj, i)) * fwd(hi, j) * hj
    ok = (wi > 0) & (wj > 0) & (fwd(wj, i) > 0) & (fwd(wi, j) > 0)
    out = np.angle(loop)
    return np.where(ok, out, np.nan)


@dataclass(frozen=True)
class OrderParameter:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128, copy=True)
        if v.shape != self.grid.shape:
            raise GridMismatchError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    def with_values(self, values) -> "OrderParameter":
        return OrderParameter(self.grid, values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))


def _require_periodic(u: OrderParameter):
    if u.grid.bc is not BC.PERIODIC:
        raise ValueError("quasi-periodic wrapping needs a magnetic-periodic grid")


def quasi_periodic_phase(R: float, x1, x2, k1: int, k2: int):
    """Phase with ``u(x + k1 R e1 + k2 R e2) = phase * u(x)`` for u in E_R."""
    return np.exp(0.5j * R * (k1 * x2 - k2 * x1) + 0.5j * k1 * k2 * R * R)


def wrap_quasi_periodic(u: OrderParameter, shift=(1, 0)) -> OrderParameter:
    """The field on the cell translated by ``shift`` periods.

    The returned OrderParameter lives on the translated grid and holds
    ``u(x + k R)`` for every node ``x`` of the original cell.
    """
    _require_periodic(u)
    k1, k2 = (int(s) for s in shift)
    if k1 == 0 and k2 == 0:
        return u
    R = u.grid.side
    X1, X2 = u.grid.coords()
    phase = quasi_periodic_phase(R, X1, X2, k1, k2)
    return OrderParameter(u.grid.translated((k1 * R, k2 * R)), phase * u.values)


def _node_index(grid: GridSpec, x: np.ndarray, axis: int) -> np.ndarray:
    a = grid.spacing
    t = (x - (grid.center[axis] - 0.5 * grid.side)) / a - 0.5
    idx = np.rint(t)
    if np.max(np.abs(t - idx), initial=0.0) > 1e-6:
        raise GridMismatchError("target nodes are not aligned with the source lattice")
    return idx.astype(np.int64)


def periodic_extend(u: OrderParameter, target: GridSpec) -> np.ndarray:
    """Values of the quasi-periodic field ``u`` at the nodes of ``target``.

    ``target`` must have the same spacing and node alignment (it may be larger
    and shifted by any multiple of the spacing).
    """
    _require_periodic(u)
    src = u.grid
    if not math.isclose(src.spacing, target.spacing, rel_tol=1e-10):
        raise GridMismatchError("spacing differs between source and target grids")
    R = src.side
    X1, X2 = target.coords()[:2]
    lo1 = src.center[0] - 0.5 * R
    lo2 = src.center[1] - 0.5 * R
    k1 = np.floor((X1 - lo1) / R + 1e-9).astype(np.int64)
    k2 = np.floor((X2 - lo2) / R + 1e-9).astype(np.int64)
    b1 = X1 - k1 * R
    b2 = X2 - k2 * R
    i1 = np.clip(_node_index(src, b1, 0), 0, src.points_per_side - 1)
    i2 = np.clip(_node_index(src, b2, 1), 0, src.points_per_side - 1)
    phase = quasi_periodic_phase(R, b1, b2, k1, k2)
    return phase * u.values[i1, i2]


def magnetic_translate(values: np.ndarray, grid: GridSpec, shift) -> tuple:
    """Magnetic translation of a field by ``shift`` (a lattice vector).

    Returns ``(grid_translated, values_translated)`` with
    ``v(x) = exp(i A(c).x) u(x - c)``, which commutes with the link covariant
    differences exactly.
    """
    c = tuple(shift) + (0.0,) * (grid.dim - len(shift))
    g2 = grid.translated(c)
    X = g2.coords()
    phi = 0.5 * (-c[1] * X[0] + c[0] * X[1])
    return g2, np.exp(1j * phi) * values


def embed(u: OrderParameter, target: GridSpec) -> OrderParameter:
    """Place a Dirichlet field inside a larger aligned Dirichlet box.

    The field is carried to ``target`` coordinates by magnetic translation
    when the centres differ only by the nodes' own coordinates (no shift is
    applied: nodes are matched by position). Outside the source box the
    result is zero.
    """
    src = u.grid
    if src.bc is not BC.DIRICHLET or target.bc is not BC.DIRICHLET:
        raise ValueError("embed works on Dirichlet grids")
    if src.dim != target.dim or not math.isclose(src.spacing, target.spacing, rel_tol=1e-10):
        raise GridMismatchError("embedding needs equal dimension and spacing")
    out = np.zeros(target.shape, dtype=np.complex128)
    starts = []
    for k in range(src.dim):
        x0 = src.axis_coords(k)[0]
        idx = _node_index(target, np.array([x0]), k)[0]
        if idx < 0 or idx + src.points_per_side > target.points_per_side:
            raise GridMismatchError("source box does not fit inside target box")
        starts.append(idx)
    sl = tuple(slice(s, s + src.points_per_side) for s in starts)
    out[sl] = u.values
    return OrderParameter(target, out)


def tile_dirichlet(u: OrderParameter, copies: int) -> OrderParameter:
    """``copies**2`` magnetic translates of a 2D Dirichlet field side by side.

    The result lives on the box of side ``copies * R`` centred at the same
    point, with the same spacing.
    """
    g = u.grid
    if g.dim != 2 or g.bc is not BC.DIRICHLET:
        raise ValueError("tiling is defined for 2D Dirichlet fields")
    R = g.side
    big = GridSpec(2, copies * R, copies * g.points_per_side, BC.DIRICHLET, g.center)
    out = np.zeros(big.shape, dtype=np.complex128)
    n = g.points_per_side
    for j1 in range(copies):
        for j2 in range(copies):
            c = ((j1 - 0.5 * (copies - 1)) * R, (j2 - 0.5 * (copies - 1)) * R)
            _, vals = magnetic_translate(u.values, g, c)
            out[j1 * n:(j1 + 1) * n, j2 * n:(j2 + 1) * n] = vals
    return OrderParameter(big, out)


def dirichlet_to_periodic(u: OrderParameter) -> OrderParameter:
    """Extend a Dirichlet field on a quantized square to the magnetic torus."""
    g = u.grid
    if g.bc is not BC.DIRICHLET or g.dim != 2:
        raise ValueError("need a 2D Dirichlet field")
    pg = GridSpec(2, g.side, g.points_per_side, BC.PERIODIC, g.center)
    return OrderParameter(pg, u.values)
