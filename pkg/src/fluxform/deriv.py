"""Exterior derivative as the normalised boundary flux over small cubes.

For an increasing ``Q = (q_1 < ... < q_k)`` the component ``D omega_x(e_Q)``
is approximated by the flux of ``omega`` through the ``2 eps`` cube centred
at ``x`` in the ``Q``-plane, divided by its volume.  With one sample per face
(the face centre) this is

    1/(2 eps) * sum_i sum_j (-1)**(i+j) * omega_{x + (2j-1) eps e_{q_i}}[Q without q_i]

which is a centred, second-order difference scheme.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .chains import Block, SingularBlock
from .errors import DegreeError, ShapeError
from .forms import AlternatingTensor, FormField
from .integrate import QuadratureSpec, boundary_integral
from .multiindex import enumerate_indices, index_positions


@dataclass(frozen=True)
class DerivConfig:
    """Stencil settings.

    ``eps`` is the half-width of the cube; ``None`` means
    ``1e-4 * max(1, |x|_inf)``.  ``aspect_bound`` is the admissible
    longest/shortest side ratio for general flux averages (the stencil uses
    cubes, which satisfy any bound).  ``face_subdivisions`` is the number of
    midpoint cells per face axis.
    """

    eps: float | None = None
    aspect_bound: float = 2.0
    face_subdivisions: int = 1
    richardson_levels: int = 0
    jacobian_step: float | None = None

    def __post_init__(self):
        if self.eps is not None and not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.aspect_bound > 1:
            raise ValueError(f"aspect_bound must exceed 1, got {self.aspect_bound}")
        if int(self.face_subdivisions) < 1:
            raise ValueError("face_subdivisions must be >= 1")
        if int(self.richardson_levels) < 0:
            raise ValueError("richardson_levels must be >= 0")

    def eps_at(self, x) -> float:
        if self.eps is not None:
            return float(self.eps)
        return 1e-4 * max(1.0, float(np.max(np.abs(x))) if np.size(x) else 1.0)


class AspectRatioWarning(UserWarning):
    """A flux average was taken over a block violating the aspect bound."""


class RichardsonWarning(UserWarning):
    """Observed convergence order is far from 2; the extrapolation is unreliable."""


def _result_degree(field: FormField) -> int:
    k = field.degree + 1
    if k > field.n:
        raise DegreeError(f"the derivative of a {field.degree}-form on R^{field.n} has degree {k} > n")
    return k


def exterior_derivative_many(field: FormField, points, eps, face_subdivisions: int = 1) -> np.ndarray:
    """Stencil derivative at each row of ``points``; shape ``(N, C(n, k))``.

    ``eps`` is a scalar or one half-width per point.
    """
    X = np.asarray(points, dtype=float)
    n = field.n
    if X.ndim != 2 or X.shape[1] != n:
        raise ShapeError(f"points must have shape (N, {n}), got {X.shape}")
    k = _result_degree(field)
    N = len(X)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (N,))
    Qs = enumerate_indices(n, k)
    sub_pos = index_positions(n, k - 1)
    out = np.zeros((N, len(Qs)))
    m = int(face_subdivisions)

    if m == 1 or k == 1:
        # 2n shared face centres x -/+ eps e_q
        shifts = np.einsum("j,qr->jqr", np.array([-1.0, 1.0]), np.eye(n))
        P = X[:, None, None, :] + eps[:, None, None, None] * shifts[None]
        S = field.sample_many(P.reshape(-1, n)).reshape(N, 2, n, -1)
        for col, Q in enumerate(Qs):
            for i, q in enumerate(Q):
                s_col = sub_pos[Q[:i] + Q[i + 1:]]
                for j in (0, 1):
                    sign = -1.0 if (i + 1 + j) % 2 else 1.0
                    out[:, col] += sign * S[:, j, q - 1, s_col]
        return out / (2.0 * eps)[:, None]

    ticks = -1.0 + (2.0 * np.arange(m) + 1.0) / m
    grid = np.stack([g.reshape(-1) for g in np.meshgrid(*([ticks] * (k - 1)), indexing="ij")], axis=-1)
    for col, Q in enumerate(Qs):
        for i, q in enumerate(Q):
            others = Q[:i] + Q[i + 1:]
            s_col = sub_pos[others]
            E = np.zeros((k - 1, n))
            E[np.arange(k - 1), [o - 1 for o in others]] = 1.0
            face_offsets = grid @ E  # (m^(k-1), n), in units of eps
            for j in (0, 1):
                sign = -1.0 if (i + 1 + j) % 2 else 1.0
                centre = X.copy()
                centre[:, q - 1] += (2 * j - 1) * eps
                P = centre[:, None, :] + eps[:, None, None] * face_offsets[None]
                vals = field.sample_many(P.reshape(-1, n))[:, s_col].reshape(N, -1)
                out[:, col] += sign * vals.mean(axis=1)
    return out / (2.0 * eps)[:, None]


def exterior_derivative_at(field: FormField, x, cfg: DerivConfig | None = None) -> AlternatingTensor:
    """Components of ``D omega_x`` on every increasing ``Q`` of length ``degree + 1``."""
    cfg = cfg or DerivConfig()
    x = np.asarray(x, dtype=float)
    if x.shape != (field.n,):
        raise ShapeError(f"point must have shape ({field.n},), got {x.shape}")
    row = exterior_derivative_many(field, x[None, :], cfg.eps_at(x), cfg.face_subdivisions)[0]
    return AlternatingTensor.from_dense(field.n, field.degree + 1, row)


def exterior_derivative_refined(field: FormField, x, cfg: DerivConfig | None = None):
    """Richardson extrapolation over ``eps, eps/2, ...``; returns ``(tensor, error_estimate)``.

    Assumes an even error expansion (true for the centred stencil).  The
    error estimate is the largest component change between the last two
    diagonal entries of the tableau.  A :class:`RichardsonWarning` is issued
    when the observed order differs from 2 by more than 0.5.
    """
    cfg = cfg or DerivConfig()
    x = np.asarray(x, dtype=float)
    levels = max(1, int(cfg.richardson_levels))
    eps0 = cfg.eps_at(x)
    epss = eps0 / 2.0 ** np.arange(levels + 1)
    raw = exterior_derivative_many(field, np.repeat(x[None, :], levels + 1, axis=0), epss, cfg.face_subdivisions)
    table = [[raw[0]]]
    for lvl in range(1, levels + 1):
        row = [raw[lvl]]
        for j in range(1, lvl + 1):
            factor = 4.0**j
            row.append(row[j - 1] + (row[j - 1] - table[lvl - 1][j - 1]) / (factor - 1.0))
        table.append(row)
    best = table[-1][-1]
    error = float(np.max(np.abs(best - table[-2][-1]))) if best.size else 0.0
    order = observed_order(raw)
    if order is not None and abs(order - 2.0) > 0.5:
        warnings.warn(f"observed stencil order {order:.2f} is far from 2; extrapolation unreliable", RichardsonWarning, stacklevel=2)
    return AlternatingTensor.from_dense(field.n, field.degree + 1, best), error


def observed_order(raw: np.ndarray) -> float | None:
    """Order estimate ``log2(|D(e) - D(e/2)| / |D(e/2) - D(e/4)|)`` from halving rows."""
    if len(raw) < 3:
        return None
    d1 = float(np.max(np.abs(raw[0] - raw[1]))) if raw.shape[1] else 0.0
    d2 = float(np.max(np.abs(raw[1] - raw[2]))) if raw.shape[1] else 0.0
    scale = max(1.0, float(np.max(np.abs(raw))) if raw.size else 1.0)
    if d1 <= 1e-12 * scale or d2 <= 1e-12 * scale:
        return None  # differences at roundoff level: stencil effectively exact
    return float(np.log2(d1 / d2))


def convergence_order(field: FormField, x, eps_sequence: Sequence[float], reference: AlternatingTensor, face_subdivisions: int = 1):
    """Least-squares slope of ``log(error)`` against ``log(eps)``.

    Returns the string ``"exact"`` when any level's error is indistinguishable
    from zero, i.e. below ``16 * machine_eps * max|omega| / eps``.
    """
    eps = np.asarray(eps_sequence, dtype=float)
    if eps.size < 3:
        raise ValueError("need at least three step sizes")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("eps_sequence must be strictly decreasing")
    x = np.asarray(x, dtype=float)
    rows = exterior_derivative_many(field, np.repeat(x[None, :], len(eps), axis=0), eps, face_subdivisions)
    errors = np.max(np.abs(rows - reference.dense()[None, :]), axis=1)
    scale = max(1.0, field.sample(x).max_abs())
    floor = 16.0 * np.finfo(float).eps * scale / eps
    if np.any(errors <= floor):
        return "exact"
    slope, _ = np.polyfit(np.log(eps), np.log(errors), 1)
    return float(slope)


def stencil_errors(field: FormField, x, eps_sequence: Sequence[float], reference: AlternatingTensor) -> np.ndarray:
    """Max-norm stencil error at each step size."""
    eps = np.asarray(eps_sequence, dtype=float)
    x = np.asarray(x, dtype=float)
    rows = exterior_derivative_many(field, np.repeat(x[None, :], len(eps), axis=0), eps)
    return np.max(np.abs(rows - reference.dense()[None, :]), axis=1)


def flux_average(
    field: FormField,
    phi: SingularBlock | Callable,
    p,
    block: Block,
    *,
    jacobian: Callable | None = None,
    cfg: DerivConfig | None = None,
    quadrature: QuadratureSpec | None = None,
) -> float:
    """``(1/vol B) * int_{boundary B} phi* omega`` for a block ``B`` containing ``p``.

    This is the quantity whose limit as ``B`` shrinks to ``p`` (with bounded
    aspect ratio) defines ``D omega_{phi(p)}(phi'(p) e_1, ..., phi'(p) e_k)``.
    ``phi`` is a :class:`SingularBlock` (its domain must contain ``B``) or a
    broadcasting map ``R^k -> R^n``.
    """
    cfg = cfg or DerivConfig()
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if not block.contains(p):
        raise ValueError(f"base point {p.tolist()} is not in the block")
    if isinstance(phi, SingularBlock):
        if not phi.domain.contains_block(block):
            raise ValueError("block is not inside the domain of phi")
        fn, jac, n = phi.map, phi.jacobian if jacobian is None else jacobian, phi.n
    else:
        fn, jac = phi, jacobian
        n = int(np.asarray(fn(p), dtype=float).shape[-1])
    if block.dim and block.aspect >= cfg.aspect_bound:
        warnings.warn(
            f"block aspect ratio {block.aspect:.3g} violates the bound {cfg.aspect_bound}",
            AspectRatioWarning,
            stacklevel=2,
        )
    q = quadrature or QuadratureSpec(subdivisions=cfg.face_subdivisions, jacobian_step=cfg.jacobian_step)
    sb = SingularBlock(block, fn, n, jac)
    return boundary_integral(field, sb, q) / block.volume


def cube_chart(x, Q: Sequence[int], n: int) -> Callable:
    """The affine map ``t -> x + sum_i t_i e_{q_i}`` spanning the ``Q``-plane."""
    x = np.asarray(x, dtype=float)
    E = np.zeros((len(Q), n))
    E[np.arange(len(Q)), [q - 1 for q in Q]] = 1.0
    return lambda t: x + np.asarray(t, dtype=float) @ E


def derivative_field(field: FormField, cfg: DerivConfig | None = None) -> FormField:
    """The stencil derivative ``y -> D omega_y`` as a field of degree ``p + 1``."""
    cfg = cfg or DerivConfig()
    _result_degree(field)

    def batch(pts):
        pts = np.asarray(pts, dtype=float)
        eps = np.array([cfg.eps_at(y) for y in pts]) if cfg.eps is None else cfg.eps
        return exterior_derivative_many(field, pts, eps, cfg.face_subdivisions)

    def sampler(y):
        return exterior_derivative_at(field, y, cfg)

    return FormField(field.n, field.degree + 1, sampler, batch=batch, name="D")
