"""Shared oracles for the test modules."""
import numpy as np

from gllab.energy import eval_energy, eval_gradient, pair
from gllab.grid import BC, GridSpec, OrderParameter, build_gauge_links

# (dim, bc) combinations the library supports; periodic boxes are 2D only
CASES = [(2, BC.DIRICHLET), (2, BC.PERIODIC), (3, BC.DIRICHLET)]


def case_grid(dim, bc):
    if bc is BC.PERIODIC:
        return GridSpec.periodic(1, 0.25)
    return GridSpec.from_spacing(dim, 3.0 if dim == 2 else 2.0, 0.25)


def random_field(grid, rng, amplitude=1.0):
    z = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    return OrderParameter(grid, amplitude * z / np.sqrt(2.0))


def fd_relative_error(u, links, b, v, h):
    """Central difference of E along ``v`` against the analytic gradient."""
    ep = eval_energy(u.with_values(u.values + h * v), links, b).total
    em = eval_energy(u.with_values(u.values - h * v), links, b).total
    fd = (ep - em) / (2.0 * h)
    an = pair(eval_gradient(u, links, b), v)
    return abs(fd - an) / max(abs(an), 1e-12)


def gradient_check(dim, bc, fields=20, seed=0, hs=(1e-4, 1e-5)):
    """Worst relative error over ``fields`` random (u, v, b) triples."""
    grid = case_grid(dim, bc)
    links = build_gauge_links(grid)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(fields):
        u = random_field(grid, rng)
        v = random_field(grid, rng).values
        b = float(rng.uniform(0.0, 1.5))
        worst = max(worst, min(fd_relative_error(u, links, b, v, h) for h in hs))
    return worst
