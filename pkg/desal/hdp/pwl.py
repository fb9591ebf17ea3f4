"""
Triangular piecewise-linear approximation of bivariate functions.

A surface z = f(x, y) is tabulated on an M×N grid of breakpoints.
Each rectangular patch (m, n) is split along its main diagonal into two
triangles:

- lower: vertices (m, n), (m+1, n), (m+1, n+1)
- upper: vertices (m, n), (m, n+1), (m+1, n+1)

In a MILP, weights λ on the vertices form a convex combination. One
binary per triangle selects the triangle that may carry nonzero
weights.
"""

from typing import Callable, Dict, NamedTuple, Optional, Sequence, Tuple, \
    Union

import numpy as np
import pyomo.environ as pyo
from arxiv.base import logging

logger = logging.getLogger(__name__)

HULL_TOLERANCE = 1e-9


class PwlDomainError(Exception):
    """A point or breakpoint lies outside the domain of a surface."""


class PwlSurface(NamedTuple):
    """Vertex values of a bivariate function on a breakpoint grid."""

    x_breaks: np.ndarray
    y_breaks: np.ndarray
    z_grid: np.ndarray
    """Shape (M, N): ``z_grid[m, n] = f(x_breaks[m], y_breaks[n])``."""
    name: str = ''

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.x_breaks), len(self.y_breaks)

    def triangles(self) -> Dict[str, Tuple[Tuple[int, int], ...]]:
        """Vertex indices of the lower and upper triangle of patch (0, 0)."""
        return {'lower': ((0, 0), (1, 0), (1, 1)),
                'upper': ((0, 0), (0, 1), (1, 1))}


class PwlHandles(NamedTuple):
    """Pyomo expressions produced by :func:`emit_milp_block`."""

    x: pyo.Expression
    y: pyo.Expression
    z: Tuple[pyo.Expression, ...]
    block: pyo.Block


def breakpoints(lower: float, upper: float, step: float) -> np.ndarray:
    """
    Breakpoints from ``lower`` to ``upper`` inclusive, ``step`` apart.

    The last interval is shorter when the range is not a whole number of
    steps.
    """
    if upper <= lower or step <= 0:
        raise PwlDomainError(f'Bad breakpoint range [{lower}, {upper}] '
                             f'step {step}')
    count = max(int(np.ceil((upper - lower) / step - 1e-9)), 1)
    breaks = lower + step * np.arange(count + 1, dtype=float)
    breaks[-1] = upper
    return breaks


def tabulate(f: Callable[[np.ndarray, np.ndarray], np.ndarray],
             x_breaks: Sequence[float], y_breaks: Sequence[float],
             name: str = '') -> PwlSurface:
    """
    Evaluate ``f`` at every vertex of the breakpoint grid.

    ``f`` receives broadcast arrays of x and y values.
    """
    xs = np.asarray(x_breaks, dtype=float)
    ys = np.asarray(y_breaks, dtype=float)
    for label, breaks in (('x', xs), ('y', ys)):
        if breaks.ndim != 1 or len(breaks) < 2:
            raise PwlDomainError(f'{label} needs at least two breakpoints')
        if np.any(np.diff(breaks) <= 0):
            raise PwlDomainError(f'{label} breakpoints must increase')
    grid_x, grid_y = np.meshgrid(xs, ys, indexing='ij')
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.asarray(f(grid_x, grid_y), dtype=float) \
            * np.ones_like(grid_x)
    if not np.all(np.isfinite(z)):
        bad = np.argwhere(~np.isfinite(z))[0]
        raise PwlDomainError(
            f'{name or "f"} undefined at ({xs[bad[0]]}, {ys[bad[1]]})'
        )
    return PwlSurface(xs, ys, z, name)


def _locate(breaks: np.ndarray, value: float, label: str) -> Tuple[int, float]:
    if value < breaks[0] - HULL_TOLERANCE \
            or value > breaks[-1] + HULL_TOLERANCE:
        raise PwlDomainError(f'{label}={value} outside '
                             f'[{breaks[0]}, {breaks[-1]}]')
    k = int(np.searchsorted(breaks, value, side='right')) - 1
    k = min(max(k, 0), len(breaks) - 2)
    frac = (value - breaks[k]) / (breaks[k + 1] - breaks[k])
    return k, min(max(frac, 0.0), 1.0)


def interpolate(s: PwlSurface, x: float, y: float) -> float:
    """
    Triangular interpolation of ``s`` at (``x``, ``y``).

    Points on a patch diagonal belong to the lower triangle.
    """
    m, xi = _locate(s.x_breaks, x, 'x')
    n, eta = _locate(s.y_breaks, y, 'y')
    z = s.z_grid
    if eta <= xi:
        return float(z[m, n] + xi * (z[m + 1, n] - z[m, n])
                     + eta * (z[m + 1, n + 1] - z[m + 1, n]))
    return float(z[m, n] + eta * (z[m, n + 1] - z[m, n])
                 + xi * (z[m + 1, n + 1] - z[m, n + 1]))


def interpolate_bilinear(s: PwlSurface, x: float, y: float) -> float:
    """Rectangular (bilinear) interpolation, for comparison."""
    m, xi = _locate(s.x_breaks, x, 'x')
    n, eta = _locate(s.y_breaks, y, 'y')
    z = s.z_grid
    return float((1 - xi) * (1 - eta) * z[m, n] + xi * (1 - eta) * z[m + 1, n]
                 + (1 - xi) * eta * z[m, n + 1] + xi * eta * z[m + 1, n + 1])


def interpolate_univariate(s: PwlSurface, x: float, y: float) -> float:
    """Linear in ``x`` along the nearest ``y`` row, for comparison."""
    _locate(s.y_breaks, y, 'y')
    _locate(s.x_breaks, x, 'x')
    n = int(np.argmin(np.abs(s.y_breaks - y)))
    return float(np.interp(x, s.x_breaks, s.z_grid[:, n]))


METHODS: Dict[str, Callable[[PwlSurface, float, float], float]] = {
    'triangle': interpolate,
    'rectangle': interpolate_bilinear,
    'univariate': interpolate_univariate,
}


def error_report(s: PwlSurface, f: Callable[[float, float], float],
                 samples: Sequence[Tuple[float, float]],
                 method: str = 'triangle') -> Tuple[float, float]:
    """
    Largest absolute and relative interpolation error over ``samples``.

    Relative errors skip samples where ``f`` is zero.
    """
    evaluate = METHODS[method]
    max_abs = 0.0
    max_rel = 0.0
    for x, y in samples:
        exact = float(f(x, y))
        err = abs(evaluate(s, x, y) - exact)
        max_abs = max(max_abs, err)
        if exact != 0:
            max_rel = max(max_rel, err / abs(exact))
    return max_abs, max_rel


def _vertex_triangles(m: int, n: int, rows: int, cols: int) \
        -> Tuple[Tuple[str, int, int], ...]:
    """Triangles (kind, patch m, patch n) having vertex (m, n) as corner."""
    found = []
    for kind, dm, dn in (('lo', 0, 0), ('lo', -1, 0), ('lo', -1, -1),
                         ('up', 0, 0), ('up', 0, -1), ('up', -1, -1)):
        pm, pn = m + dm, n + dn
        if 0 <= pm < rows - 1 and 0 <= pn < cols - 1:
            found.append((kind, pm, pn))
    return tuple(found)


def emit_milp_block(s: Union[PwlSurface, Sequence[PwlSurface]],
                    on_var: Union[float, pyo.Var, pyo.Expression],
                    model: pyo.Block, name: str,
                    method: str = 'triangle') -> PwlHandles:
    """
    Add a triangle-selection block for ``s`` to ``model``.

    Parameters
    ----------
    s : :class:`PwlSurface` or sequence
        Surfaces that share one breakpoint grid, and therefore one set of
        vertex weights.
    on_var : pyomo variable, expression or number
        The weights sum to ``on_var`` and so does the triangle selection;
        with ``on_var = 0`` every output is zero.
    model : pyomo block
        Parent that receives a sub-block called ``name``.

    Returns
    -------
    :class:`PwlHandles`

    """
    if method != 'triangle':
        raise NotImplementedError(f'{method} surfaces are for comparison '
                                  'only; emit triangle blocks')
    surfaces = (s,) if isinstance(s, PwlSurface) else tuple(s)
    base = surfaces[0]
    for other in surfaces[1:]:
        if other.shape != base.shape \
                or not np.array_equal(other.x_breaks, base.x_breaks) \
                or not np.array_equal(other.y_breaks, base.y_breaks):
            raise PwlDomainError(f'{other.name} does not share the grid '
                                 f'of {base.name}')
    rows, cols = base.shape
    blk = pyo.Block(concrete=True)
    model.add_component(name, blk)

    blk.M = pyo.RangeSet(0, rows - 1)
    blk.N = pyo.RangeSet(0, cols - 1)
    blk.PM = pyo.RangeSet(0, rows - 2)
    blk.PN = pyo.RangeSet(0, cols - 2)
    blk.lam = pyo.Var(blk.M, blk.N, bounds=(0, 1))
    blk.u_lo = pyo.Var(blk.PM, blk.PN, within=pyo.Binary)
    blk.u_up = pyo.Var(blk.PM, blk.PN, within=pyo.Binary)

    blk.weights = pyo.Constraint(
        expr=sum(blk.lam[m, n] for m in blk.M for n in blk.N) == on_var
    )
    blk.select = pyo.Constraint(
        expr=sum(blk.u_lo[m, n] + blk.u_up[m, n]
                 for m in blk.PM for n in blk.PN) == on_var
    )

    def _activation(b, m, n):
        owners = _vertex_triangles(m, n, rows, cols)
        return b.lam[m, n] <= sum(
            (b.u_lo if kind == 'lo' else b.u_up)[pm, pn]
            for kind, pm, pn in owners
        )
    blk.activation = pyo.Constraint(blk.M, blk.N, rule=_activation)

    blk.x = pyo.Expression(expr=sum(
        float(base.x_breaks[m]) * blk.lam[m, n]
        for m in blk.M for n in blk.N))
    blk.y = pyo.Expression(expr=sum(
        float(base.y_breaks[n]) * blk.lam[m, n]
        for m in blk.M for n in blk.N))
    outputs = []
    for k, surface in enumerate(surfaces):
        expr = pyo.Expression(expr=sum(
            float(surface.z_grid[m, n]) * blk.lam[m, n]
            for m in blk.M for n in blk.N))
        blk.add_component(f'z{k}', expr)
        outputs.append(expr)
    return PwlHandles(blk.x, blk.y, tuple(outputs), blk)


def check_block_solution(blk: pyo.Block,
                         on: Optional[float] = None,
                         tol: float = 1e-6) -> Optional[str]:
    """
    Check a solved block for a valid convex combination.

    Returns a description of the first problem found, or ``None``.
    """
    lam = {key: var.value or 0.0 for key, var in blk.lam.items()}
    total = sum(lam.values())
    if on is not None and abs(total - on) > tol:
        return f'{blk.name}: weights sum to {total:.6g}, expected {on:.6g}'
    if any(v < -tol for v in lam.values()):
        return f'{blk.name}: negative weight'
    chosen = [('lo', key) for key, var in blk.u_lo.items()
              if (var.value or 0.0) > 0.5]
    chosen += [('up', key) for key, var in blk.u_up.items()
               if (var.value or 0.0) > 0.5]
    if len(chosen) > 1:
        return f'{blk.name}: {len(chosen)} triangles selected'
    support = {key for key, v in lam.items() if v > tol}
    if not support:
        return None
    if not chosen:
        return f'{blk.name}: weights without a selected triangle'
    kind, (pm, pn) = chosen[0]
    corners = {(pm, pn), (pm + 1, pn + 1),
               (pm + 1, pn) if kind == 'lo' else (pm, pn + 1)}
    if not support <= corners:
        return f'{blk.name}: weights span more than one triangle'
    return None
