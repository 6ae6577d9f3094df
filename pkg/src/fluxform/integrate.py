"""Composite-midpoint integration of forms over singular blocks and chains."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .chains import Block, Chain, SingularBlock, boundary, finite_difference_jacobian
from .errors import DegreeError, ShapeError
from .forms import AlternatingTensor, FormField, minors
from .multiindex import enumerate_indices


@dataclass(frozen=True)
class QuadratureSpec:
    """Midpoint rule with ``subdivisions`` cells per axis.

    If ``rtol`` is set, the cell count is doubled until two successive
    estimates agree to ``rtol`` (relative) or ``max_subdivisions`` is passed.
    """

    subdivisions: int = 32
    rtol: float | None = None
    max_subdivisions: int = 1024
    jacobian_step: float | None = None

    def __post_init__(self):
        if int(self.subdivisions) < 1:
            raise ValueError(f"subdivisions must be >= 1, got {self.subdivisions}")
        if self.rtol is not None and self.rtol <= 0:
            raise ValueError("rtol must be positive")


DEFAULT_QUADRATURE = QuadratureSpec()


def _check_degree(field: FormField, sb: SingularBlock) -> None:
    if field.n != sb.n:
        raise ShapeError(f"field lives on R^{field.n}, block maps into R^{sb.n}")
    if field.degree != sb.k:
        raise DegreeError(f"cannot integrate a {field.degree}-form over a {sb.k}-dimensional block")


def pullback_densities(sb: SingularBlock, field: FormField, nodes, jacobian_step: float | None = None) -> np.ndarray:
    """``(c* omega)_t(e_1, ..., e_k)`` at each row of ``nodes``; shape ``(N,)``."""
    _check_degree(field, sb)
    T = np.asarray(nodes, dtype=float)
    T = T.reshape(-1, sb.k) if sb.k else T.reshape(max(1, len(T)) if T.ndim > 1 else 1, 0)
    comps = field.sample_many(sb(T).reshape(len(T), sb.n))
    if sb.k == 0:
        return comps[:, 0]
    J = sb.jacobian_at(T, jacobian_step).reshape(len(T), sb.n, sb.k)
    dets = minors(J, enumerate_indices(sb.n, sb.k))
    return np.einsum("ij,ij->i", comps, dets)


def pullback_density(sb: SingularBlock, field: FormField, t, jacobian_step: float | None = None) -> float:
    """Integrand of ``c* omega`` at a single parameter point ``t``."""
    return float(pullback_densities(sb, field, np.atleast_1d(np.asarray(t, dtype=float))[None, :], jacobian_step)[0])


def _midpoint(field: FormField, sb: SingularBlock, m: int, step) -> float:
    nodes = sb.domain.midpoint_nodes(m)
    values = pullback_densities(sb, field, nodes, step)
    # np.sum is pairwise on contiguous float arrays: order-independent of evaluation
    return float(sb.domain.volume / m**sb.k * np.sum(values))


def integrate_over_singular_block(field: FormField, sb: SingularBlock, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``int_B c* omega`` by the composite midpoint rule (a point sample when k = 0)."""
    _check_degree(field, sb)
    m = int(q.subdivisions)
    value = _midpoint(field, sb, m, q.jacobian_step)
    if q.rtol is None or sb.k == 0:
        return value
    while 2 * m <= q.max_subdivisions:
        m *= 2
        finer = _midpoint(field, sb, m, q.jacobian_step)
        converged = abs(finer - value) <= q.rtol * max(abs(finer), np.finfo(float).tiny)
        value = finer
        if converged:
            break
    return value


def integrate_over_chain(field: FormField, c: Chain, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``sum_i n_i int_{c_i} omega``; zero for the empty chain."""
    if field.n != c.n:
        raise ShapeError(f"field lives on R^{field.n}, chain maps into R^{c.n}")
    if field.degree != c.dim:
        raise DegreeError(f"cannot integrate a {field.degree}-form over a {c.dim}-chain")
    total = 0.0
    for coeff, sb in c.terms:
        total += coeff * integrate_over_singular_block(field, sb, q)
    return total


def integrate(field: FormField, target, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Dispatch on a :class:`Chain`, :class:`SingularBlock` or (inclusion of a) :class:`Block`."""
    if isinstance(target, Chain):
        return integrate_over_chain(field, target, q)
    if isinstance(target, Block):
        target = SingularBlock.inclusion(target)
    return integrate_over_singular_block(field, target, q)


def boundary_integral(field: FormField, sb: SingularBlock | Block, q: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``int_{boundary c} omega`` for a ``(k-1)``-form and a ``k``-dimensional block."""
    if isinstance(sb, Block):
        sb = SingularBlock.inclusion(sb)
    if field.degree != sb.k - 1:
        raise DegreeError(f"boundary of a {sb.k}-block carries {sb.k - 1}-forms, got a {field.degree}-form")
    return integrate_over_chain(field, boundary(sb), q)


def pullback_field(field: FormField, psi, p: int, jacobian=None, step: float | None = None) -> FormField:
    """The form ``psi* omega`` on ``R^p`` for a map ``psi: R^p -> R^n``.

    ``psi`` follows the broadcasting convention of singular-block maps.
    Without ``jacobian`` the derivative is taken by central differences.
    """
    n, d = field.n, field.degree
    rows = enumerate_indices(n, d)
    cols = enumerate_indices(p, d)
    whole = Block(tuple((-np.inf, np.inf) for _ in range(p)))

    def jac(T):
        if jacobian is not None:
            return np.asarray(jacobian(T), dtype=float)
        return finite_difference_jacobian(psi, whole, T, step)

    def batch(T):
        T = np.asarray(T, dtype=float).reshape(-1, p)
        comps = field.sample_many(np.asarray(psi(T), dtype=float).reshape(len(T), n))
        if d == 0:
            return comps
        J = jac(T).reshape(len(T), n, p)
        out = np.empty((len(T), comb(p, d)))
        for col, J_idx in enumerate(cols):
            sub = J[:, :, [j - 1 for j in J_idx]]
            out[:, col] = np.einsum("ij,ij->i", comps, minors(sub, rows))
        return out

    def sampler(t):
        return AlternatingTensor.from_dense(p, d, batch(np.asarray(t, dtype=float)[None, :])[0])

    return FormField(p, d, sampler, batch=batch, name="pullback")
