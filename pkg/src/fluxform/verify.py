"""Numerical checks of the flux-derivative identities.

Stokes residuals, ``D o D = 0``, agreement with analytic derivatives, and a
constructive mean-value locator driven by repeated trisection of a block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .chains import Block, Chain, SingularBlock, boundary
from .deriv import DerivConfig, derivative_field, exterior_derivative_at, exterior_derivative_many
from .errors import BracketingError, DegreeError, ShapeError
from .forms import FormField, minors
from .integrate import DEFAULT_QUADRATURE, QuadratureSpec, boundary_integral, integrate_over_chain
from .multiindex import enumerate_indices

log = logging.getLogger(__name__)

EPS_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# Stokes


def _derivative_rows(field: FormField, sb: SingularBlock, T: np.ndarray, cfg: DerivConfig) -> np.ndarray:
    X = sb(T).reshape(len(T), sb.n)
    if field.analytic_derivative is not None or field.derivative_batch is not None:
        return field.derivative_many(X)
    base = cfg.eps if cfg.eps is not None else 1e-4 * np.maximum(1.0, np.max(np.abs(X), axis=1))
    # keep every stencil well inside the parameter block
    eps = np.minimum(base, np.maximum(EPS_FLOOR, 0.1 * sb.domain.distance_to_boundary(T)))
    return exterior_derivative_many(field, X, eps, cfg.face_subdivisions)


def _integrate_derivative(field: FormField, sb: SingularBlock, cfg: DerivConfig, m: int, step) -> float:
    T = sb.domain.midpoint_nodes(m)
    rows = _derivative_rows(field, sb, T, cfg)
    J = sb.jacobian_at(T, step).reshape(len(T), sb.n, sb.k)
    dens = np.einsum("ij,ij->i", rows, minors(J, enumerate_indices(sb.n, sb.k)))
    return float(sb.domain.volume / m**sb.k * np.sum(dens))


def integrate_derivative(field: FormField, c: Chain, cfg: DerivConfig | None = None, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``int_c D omega``, using the field's analytic derivative when it has one."""
    cfg = cfg or DerivConfig()
    if field.n != c.n:
        raise ShapeError(f"field lives on R^{field.n}, chain maps into R^{c.n}")
    if field.degree + 1 != c.dim:
        raise DegreeError(f"D of a {field.degree}-form cannot be integrated over a {c.dim}-chain")
    total = 0.0
    for coeff, sb in c.terms:
        m = int(q.subdivisions)
        value = _integrate_derivative(field, sb, cfg, m, q.jacobian_step)
        if q.rtol is not None:
            while 2 * m <= q.max_subdivisions:
                m *= 2
                finer = _integrate_derivative(field, sb, cfg, m, q.jacobian_step)
                done = abs(finer - value) <= q.rtol * max(abs(finer), np.finfo(float).tiny)
                value = finer
                if done:
                    break
        total += coeff * value
    return total


def stokes_sides(field: FormField, c: Chain | SingularBlock | Block, cfg: DerivConfig | None = None, q: QuadratureSpec = DEFAULT_QUADRATURE) -> tuple[float, float]:
    """``(int_{boundary c} omega, int_c D omega)``.  A bare block means its inclusion."""
    if isinstance(c, Block):
        c = SingularBlock.inclusion(c)
    if isinstance(c, SingularBlock):
        c = Chain.of(c)
    lhs = integrate_over_chain(field, boundary(c), q)
    rhs = integrate_derivative(field, c, cfg, q)
    return lhs, rhs


def stokes_residual(field: FormField, c: Chain | SingularBlock | Block, cfg: DerivConfig | None = None, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``|int_{boundary c} omega - int_c D omega|``."""
    lhs, rhs = stokes_sides(field, c, cfg, q)
    return abs(lhs - rhs)


def boundary_of_boundary_integral(field: FormField, c: Chain, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``int_{boundary(boundary c)} omega``, which vanishes identically."""
    return integrate_over_chain(field, boundary(boundary(c)), q)


# ---------------------------------------------------------------------------
# D^2 and compatibility

DSQ_OUTER = DerivConfig(eps=1e-3)
DSQ_INNER = DerivConfig(eps=1e-4)


def d_squared(field: FormField, x, outer: DerivConfig = DSQ_OUTER, inner: DerivConfig = DSQ_INNER):
    """Stencil derivative of the stencil derivative at ``x``."""
    return exterior_derivative_at(derivative_field(field, inner), x, outer)


def d_squared_residual(field: FormField, x, outer: DerivConfig = DSQ_OUTER, inner: DerivConfig = DSQ_INNER) -> float:
    """Max-norm of ``D(D omega)_x``; the inner step should be much smaller than the outer."""
    return d_squared(field, x, outer, inner).max_abs()


def compatibility_check(field: FormField, x, cfg: DerivConfig | None = None) -> float:
    """Max-norm difference between the stencil derivative and the analytic one at ``x``."""
    analytic = field.derivative_at(x)
    return (exterior_derivative_at(field, x, cfg) - analytic).max_abs()


# ---------------------------------------------------------------------------
# mean-value locator


@dataclass(frozen=True)
class MvtLevel:
    block: Block
    average: float
    mismatch: float
    case: str  # "uniform", "centre" or "bisection"


@dataclass(frozen=True)
class MvtResult:
    """Outcome of :func:`mvt_locate`.

    ``target`` is the average boundary flux of the starting block,
    ``attained`` the stencil value ``D omega_xi(e_1, ..., e_k)`` and
    ``residual = |attained - target|``.
    """

    xi: np.ndarray
    target: float
    attained: float
    depth: int
    residual: float
    levels: tuple[MvtLevel, ...] = field(default=(), repr=False)


def average_flux(field: FormField, block: Block, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``(1/vol B) int_{boundary B} omega`` for the inclusion of ``block``."""
    return boundary_integral(field, SingularBlock.inclusion(block), q) / block.volume


def _sub_block(corner: np.ndarray, h: np.ndarray) -> Block:
    return Block(tuple(zip(corner, corner + h)))


def _trisect(field, current: Block, target: float, q, depth: int, root_tol: float, bracket_tol: float, max_iter: int):
    """Pick a one-third-scale sub-block of ``current`` whose average flux equals ``target``."""
    a, h = current.lower, current.sides / 3.0
    centre = a + h
    corners = [a + np.array(idx) * h for idx in product(range(3), repeat=current.dim)]
    mism = np.array([average_flux(field, _sub_block(c, h), q) - target for c in corners])
    scale = max(1.0, abs(target))
    if np.max(np.abs(mism)) <= 1e-12 * scale:
        return _sub_block(centre, h), "uniform"

    def m(x):
        return average_flux(field, _sub_block(x, h), q) - target

    m_centre = m(centre)
    if abs(m_centre) <= root_tol:
        return _sub_block(centre, h), "centre"
    lo_i, hi_i = int(np.argmin(mism)), int(np.argmax(mism))
    if not (mism[lo_i] < 0 < mism[hi_i]):
        if np.max(np.abs(mism)) <= bracket_tol:
            log.warning("depth %d: no sign change, mismatch %.3g within tolerance; taking centre", depth, np.max(np.abs(mism)))
            return _sub_block(centre, h), "centre"
        raise BracketingError(f"no sign change of the flux mismatch at depth {depth}", depth, current.center)
    x0, x1 = corners[lo_i], corners[hi_i]

    def gamma(theta):
        # x0 -> centre -> x1, as two straight segments
        if theta <= 0.5:
            return x0 + 2.0 * theta * (centre - x0)
        return centre + (2.0 * theta - 1.0) * (x1 - centre)

    lo, hi = 0.0, 1.0
    best_theta, best_val = (lo, mism[lo_i]) if abs(mism[lo_i]) < abs(mism[hi_i]) else (hi, mism[hi_i])
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = m(gamma(mid))
        if abs(val) < abs(best_val):
            best_theta, best_val = mid, val
        if abs(val) <= root_tol:
            break
        if val < 0:
            lo = mid
        else:
            hi = mid
    if abs(best_val) > bracket_tol:
        raise BracketingError(
            f"bisection stalled at depth {depth} with mismatch {best_val:.3g}; the form is not flux-continuous here",
            depth,
            gamma(best_theta) + 0.5 * h,
        )
    return _sub_block(gamma(best_theta), h), "bisection"


def mvt_locate(
    field: FormField,
    block: Block,
    cfg: DerivConfig | None = None,
    q: QuadratureSpec = QuadratureSpec(subdivisions=16),
    max_depth: int = 8,
    tol: float | None = None,
    root_tol: float = 1e-12,
    bracket_tol: float = 1e-9,
    max_iter: int = 60,
) -> MvtResult:
    """Locate ``xi`` with ``D omega_xi(e_1, ..., e_k) = (1/vol B) int_{boundary B} omega``.

    Repeatedly replaces the block by a translate of its one-third-scale
    sub-block with the same average boundary flux.  When the ``3**k`` grid
    sub-blocks all match, the centre one is kept; otherwise the mismatch is
    bisected along the path from the most negative grid translate through
    the centre translate to the most positive one.  Stops after
    ``max_depth`` levels or once the longest side is below ``tol``.
    """
    if field.n != block.dim or field.degree != block.dim - 1:
        raise DegreeError(f"need a {block.dim - 1}-form on R^{block.dim}, got a {field.degree}-form on R^{field.n}")
    target = average_flux(field, block, q)
    scale = max(1.0, abs(target))
    levels = []
    current = block
    depth = 0
    while depth < max_depth and (tol is None or current.longest >= tol):
        nxt, case = _trisect(field, current, target, q, depth + 1, root_tol * scale, bracket_tol * scale, max_iter)
        depth += 1
        avg = average_flux(field, nxt, q)
        levels.append(MvtLevel(nxt, avg, abs(avg - target), case))
        current = nxt
    xi = current.center
    cfg = cfg or DerivConfig(eps=min(1e-4 * max(1.0, float(np.max(np.abs(xi)))), 0.25 * current.shortest))
    attained = float(exterior_derivative_at(field, xi, cfg).dense()[0])
    return MvtResult(xi, target, attained, depth, abs(attained - target), tuple(levels))
