"""Blocks, singular blocks, integer chains and the boundary operator.

Maps of singular blocks follow a numpy broadcasting convention: they take an
array whose last axis holds the ``k`` block coordinates and return an array
whose last axis holds the ``n`` target coordinates.  Jacobians, when given,
return shape ``(..., n, k)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import AxisError, ShapeError


@dataclass(frozen=True)
class Block:
    """A product of non-degenerate closed intervals ``[a_1, b_1] x ... x [a_k, b_k]``.

    The empty product (``k = 0``) is the one-point domain of a 0-block.
    """

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.intervals)
        for i, (a, b) in enumerate(ivs, start=1):
            if not a < b:
                raise ValueError(f"interval {i} is degenerate or reversed: [{a}, {b}]")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def cube(cls, center: Sequence[float], half_width: float) -> Block:
        return cls(tuple((c - half_width, c + half_width) for c in center))

    @classmethod
    def from_flat(cls, values: Sequence[float]) -> Block:
        """``[a1, b1, a2, b2, ...]`` -> block."""
        if len(values) % 2:
            raise ValueError("block bounds must come in (a, b) pairs")
        return cls(tuple(zip(values[::2], values[1::2])))

    @property
    def dim(self) -> int:
        return len(self.intervals)

    @property
    def lower(self) -> np.ndarray:
        return np.array([a for a, _ in self.intervals])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b for _, b in self.intervals])

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def longest(self) -> float:
        """Longest side length, written L(B) in the flux-limit definition."""
        return float(np.max(self.sides))

    @property
    def shortest(self) -> float:
        return float(np.min(self.sides))

    @property
    def aspect(self) -> float:
        return self.longest / self.shortest

    def contains(self, t, strict: bool = False) -> bool:
        t = np.asarray(t, dtype=float)
        if strict:
            return bool(np.all(t > self.lower) and np.all(t < self.upper))
        return bool(np.all(t >= self.lower) and np.all(t <= self.upper))

    def contains_block(self, other: Block, strict: bool = False) -> bool:
        if strict:
            return bool(np.all(other.lower > self.lower) and np.all(other.upper < self.upper))
        return bool(np.all(other.lower >= self.lower) and np.all(other.upper <= self.upper))

    def translate(self, offset) -> Block:
        offset = np.asarray(offset, dtype=float)
        return Block(tuple(zip(self.lower + offset, self.upper + offset)))

    def drop(self, axis: int) -> Block:
        """The block with (1-based) ``axis`` removed."""
        return Block(self.intervals[: axis - 1] + self.intervals[axis:])

    def distance_to_boundary(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.min(np.minimum(t - self.lower, self.upper - t), axis=-1)

    def midpoint_nodes(self, m: int) -> np.ndarray:
        """Cell centres of the uniform ``m``-per-axis grid; shape ``(m**k, k)``."""
        if self.dim == 0:
            return np.zeros((1, 0))
        axes = [a + (np.arange(m) + 0.5) * (b - a) / m for a, b in self.intervals]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in grid], axis=-1)

    def to_json(self) -> list:
        return [[a, b] for a, b in self.intervals]


@dataclass(frozen=True, eq=False)
class SingularBlock:
    """A C^1 map from a :class:`Block` in ``R^k`` into ``R^n``.

    ``affine`` records ``(matrix, offset)`` for affine maps so faces can be
    compared structurally; it is informational and never used for evaluation.
    """

    domain: Block
    map: Callable[[np.ndarray], np.ndarray]
    n: int
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    affine: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    label: str = "map"

    @property
    def k(self) -> int:
        return self.domain.dim

    @classmethod
    def inclusion(cls, block: Block) -> SingularBlock:
        k = block.dim
        return cls.from_affine(block, np.eye(k), np.zeros(k), label="inclusion")

    @classmethod
    def from_affine(cls, block: Block, matrix, offset, label: str = "affine") -> SingularBlock:
        A = np.array(matrix, dtype=float).reshape(len(offset), block.dim)
        b = np.array(offset, dtype=float)
        A.flags.writeable = False
        b.flags.writeable = False

        def fn(t):
            return np.asarray(t, dtype=float) @ A.T + b

        def jac(t):
            t = np.asarray(t, dtype=float)
            return np.broadcast_to(A, t.shape[:-1] + A.shape)

        return cls(block, fn, len(b), jac, (A, b), label)

    @classmethod
    def point(cls, p) -> SingularBlock:
        """A 0-block: the constant map from the one-point domain to ``p``."""
        p = np.asarray(p, dtype=float)
        return cls.from_affine(Block(()), np.zeros((len(p), 0)), p, label="point")

    def __call__(self, t) -> np.ndarray:
        return np.asarray(self.map(np.asarray(t, dtype=float)), dtype=float)

    def jacobian_at(self, t, step: float | None = None) -> np.ndarray:
        """Jacobian ``(..., n, k)``: the analytic one if given, else finite differences.

        Differences are central with step ``max(1e-6, 1e-8 |t_i|)`` (or
        ``step``), shrunk to half the side length, and one-sided wherever a
        central step would leave the domain block.
        """
        t = np.asarray(t, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(t), dtype=float)
        return finite_difference_jacobian(self.map, self.domain, t, step)

    def face(self, i: int, j: int) -> SingularBlock:
        """The face freezing (1-based) coordinate ``i`` at its lower (j=0) or upper (j=1) end."""
        if not 1 <= i <= self.k:
            raise AxisError(f"face axis {i} outside 1..{self.k}")
        if j not in (0, 1):
            raise AxisError(f"face side must be 0 or 1, got {j}")
        value = self.domain.intervals[i - 1][j]
        parent = self

        def fn(t):
            t = np.asarray(t, dtype=float)
            return parent(np.insert(t, i - 1, value, axis=-1))

        jac = None
        if self.jacobian is not None:
            def jac(t):
                t = np.asarray(t, dtype=float)
                full = parent.jacobian(np.insert(t, i - 1, value, axis=-1))
                return np.delete(np.asarray(full, dtype=float), i - 1, axis=-1)

        affine = None
        if self.affine is not None:
            A, b = self.affine
            A2 = np.delete(A, i - 1, axis=1)
            b2 = b + A[:, i - 1] * value
            A2.flags.writeable = False
            b2.flags.writeable = False
            affine = (A2, b2)
        return SingularBlock(self.domain.drop(i), fn, self.n, jac, affine, f"{self.label}[{i},{j}]")

    def same_affine(self, other: SingularBlock, atol: float = 0.0) -> bool:
        """Structural equality for affine blocks (domain, matrix, offset)."""
        if self.affine is None or other.affine is None or self.domain != other.domain:
            return False
        (A, b), (C, d) = self.affine, other.affine
        return A.shape == C.shape and np.allclose(A, C, rtol=0, atol=atol) and np.allclose(b, d, rtol=0, atol=atol)


def finite_difference_jacobian(fn, domain: Block, t: np.ndarray, step: float | None = None) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    k = domain.dim
    if k == 0:
        base = np.asarray(fn(t), dtype=float)
        return np.zeros(base.shape + (0,))
    cols = []
    lo, hi = domain.lower, domain.upper
    for a in range(k):
        h = np.maximum(1e-6, 1e-8 * np.abs(t[..., a])) if step is None else np.full(t.shape[:-1], float(step))
        h = np.minimum(h, 0.5 * (hi[a] - lo[a]))
        tp, tm = t.copy(), t.copy()
        fwd = t[..., a] + h <= hi[a]
        bwd = t[..., a] - h >= lo[a]
        tp[..., a] = np.where(fwd, t[..., a] + h, t[..., a])
        tm[..., a] = np.where(bwd, t[..., a] - h, t[..., a])
        width = tp[..., a] - tm[..., a]
        diff = np.asarray(fn(tp), dtype=float) - np.asarray(fn(tm), dtype=float)
        cols.append(diff / width[..., None])
    return np.stack(cols, axis=-1)


@dataclass(frozen=True, eq=False)
class Chain:
    """An integer combination of singular blocks sharing ``n`` and ``k``.

    ``dim`` is kept explicitly so the empty chain still knows its dimension.
    """

    terms: tuple[tuple[int, SingularBlock], ...]
    n: int
    dim: int

    def __post_init__(self):
        kept = []
        for coeff, sb in self.terms:
            if int(coeff) != coeff:
                raise ValueError(f"chain coefficients must be integers, got {coeff}")
            if sb.n != self.n or sb.k != self.dim:
                raise ShapeError(f"block of (n, k)=({sb.n}, {sb.k}) in a chain of (n, k)=({self.n}, {self.dim})")
            if coeff != 0:
                kept.append((int(coeff), sb))
        object.__setattr__(self, "terms", tuple(kept))

    @classmethod
    def of(cls, *blocks: SingularBlock, coefficients: Iterable[int] | None = None) -> Chain:
        if not blocks:
            raise ValueError("use Chain.empty(n, k) for a chain without blocks")
        coeffs = list(coefficients) if coefficients is not None else [1] * len(blocks)
        return cls(tuple(zip(coeffs, blocks)), blocks[0].n, blocks[0].k)

    @classmethod
    def empty(cls, n: int, dim: int) -> Chain:
        return cls((), n, dim)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __add__(self, other: Chain) -> Chain:
        if (self.n, self.dim) != (other.n, other.dim):
            raise ShapeError("chains of different (n, k) cannot be added")
        return Chain(self.terms + other.terms, self.n, self.dim)

    def __neg__(self) -> Chain:
        return Chain(tuple((-c, sb) for c, sb in self.terms), self.n, self.dim)

    def __sub__(self, other: Chain) -> Chain:
        return self + (-other)

    def __rmul__(self, scalar: int) -> Chain:
        return Chain(tuple((scalar * c, sb) for c, sb in self.terms), self.n, self.dim)

    def boundary(self) -> Chain:
        return boundary(self)


def boundary(c: Chain | SingularBlock) -> Chain:
    """``sum_i sum_j (-1)**(i+j) c_ij`` per block, extended linearly; empty for 0-chains."""
    if isinstance(c, SingularBlock):
        c = Chain.of(c)
    if c.dim == 0:
        return Chain.empty(c.n, 0)
    terms = []
    for coeff, sb in c.terms:
        for i in range(1, sb.k + 1):
            for j in (0, 1):
                terms.append((coeff * (-1) ** (i + j), sb.face(i, j)))
    return Chain(tuple(terms), c.n, c.dim - 1)


def face(sb: SingularBlock, i: int, j: int) -> SingularBlock:
    return sb.face(i, j)


# ---------------------------------------------------------------------------
# named parametrisations and chain JSON


def _polar(params: Mapping):
    """``(r, theta) -> (r cos theta, r sin theta)``; params ``center`` optional."""
    c = np.asarray(params.get("center", [0.0, 0.0]), dtype=float)

    def fn(t):
        r, th = t[..., 0], t[..., 1]
        return np.stack([c[0] + r * np.cos(th), c[1] + r * np.sin(th)], axis=-1)

    def jac(t):
        r, th = t[..., 0], t[..., 1]
        row1 = np.stack([np.cos(th), -r * np.sin(th)], axis=-1)
        row2 = np.stack([np.sin(th), r * np.cos(th)], axis=-1)
        return np.stack([row1, row2], axis=-2)

    return fn, jac, 2


def _saddle(params: Mapping):
    """``(t1, t2) -> (t1, t2, a t1 t2)`` in R^3."""
    a = float(params.get("a", 1.0))

    def fn(t):
        return np.stack([t[..., 0], t[..., 1], a * t[..., 0] * t[..., 1]], axis=-1)

    def jac(t):
        one, zero = np.ones(t.shape[:-1]), np.zeros(t.shape[:-1])
        rows = [
            np.stack([one, zero], axis=-1),
            np.stack([zero, one], axis=-1),
            np.stack([a * t[..., 1], a * t[..., 0]], axis=-1),
        ]
        return np.stack(rows, axis=-2)

    return fn, jac, 3


def _spherical(params: Mapping):
    """``(theta, phi) -> R (sin theta cos phi, sin theta sin phi, cos theta)``."""
    R = float(params.get("radius", 1.0))

    def fn(t):
        th, ph = t[..., 0], t[..., 1]
        return R * np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)

    def jac(t):
        th, ph = t[..., 0], t[..., 1]
        rows = [
            np.stack([np.cos(th) * np.cos(ph), -np.sin(th) * np.sin(ph)], axis=-1),
            np.stack([np.cos(th) * np.sin(ph), np.sin(th) * np.cos(ph)], axis=-1),
            np.stack([-np.sin(th), np.zeros_like(th)], axis=-1),
        ]
        return R * np.stack(rows, axis=-2)

    return fn, jac, 3


MAP_REGISTRY: dict[str, Callable] = {
    "polar": _polar,
    "saddle": _saddle,
    "spherical": _spherical,
}


def register_map(name: str, factory: Callable) -> None:
    """Register ``factory(params) -> (map, jacobian_or_None, n)`` for chain JSON."""
    MAP_REGISTRY[name] = factory


def singular_block_from_json(entry: Mapping, n: int | None = None) -> SingularBlock:
    block = Block(tuple(tuple(iv) for iv in entry["intervals"])) if entry.get("intervals") else Block(())
    spec = entry.get("map", "inclusion")
    if spec == "inclusion":
        sb = SingularBlock.inclusion(block)
    elif isinstance(spec, Mapping) and "affine" in spec:
        aff = spec["affine"]
        sb = SingularBlock.from_affine(block, aff["matrix"], aff["offset"])
    elif isinstance(spec, Mapping) and "point" in spec:
        sb = SingularBlock.point(spec["point"])
    elif isinstance(spec, Mapping) and "named" in spec:
        name = spec["named"]
        if name not in MAP_REGISTRY:
            raise ValueError(f"unknown named map {name!r}; known: {sorted(MAP_REGISTRY)}")
        fn, jac, target = MAP_REGISTRY[name](spec.get("params", {}))
        sb = SingularBlock(block, fn, target, jac, label=name)
    else:
        raise ValueError(f"unrecognised map specification {spec!r}")
    if n is not None and sb.n != n:
        raise ShapeError(f"block maps into R^{sb.n}, chain declares n={n}")
    return sb


def chain_from_json(data: Mapping) -> Chain:
    """Build a chain from ``{"n": 2, "blocks": [{"coefficient": 1, "intervals": [[0, 1], [0, 1]], "map": "inclusion"}]}``.

    ``map`` may be ``"inclusion"``, ``{"affine": {"matrix": ..., "offset": ...}}``,
    ``{"point": [...]}`` for 0-blocks, or ``{"named": name, "params": {...}}``.
    A top-level ``"boundary": true`` replaces the chain by its boundary.
    """
    n = data.get("n")
    blocks = [singular_block_from_json(e, n) for e in data["blocks"]]
    if not blocks:
        raise ValueError("chain JSON lists no blocks")
    coeffs = [int(e.get("coefficient", 1)) for e in data["blocks"]]
    chain = Chain.of(*blocks, coefficients=coeffs)
    for _ in range(int(data.get("boundary", 0))):
        chain = chain.boundary()
    return chain


def load_chain(path) -> Chain:
    with open(path) as fh:
        return chain_from_json(json.load(fh))


NAMED_CHAINS: dict[str, dict] = {
    "unit-interval": {"n": 1, "blocks": [{"intervals": [[0, 1]]}]},
    "unit-interval-boundary": {"n": 1, "blocks": [{"intervals": [[0, 1]]}], "boundary": 1},
    "unit-square": {"n": 2, "blocks": [{"intervals": [[0, 1], [0, 1]]}]},
    "unit-square-boundary": {"n": 2, "blocks": [{"intervals": [[0, 1], [0, 1]]}], "boundary": 1},
    "unit-cube": {"n": 3, "blocks": [{"intervals": [[0, 1], [0, 1], [0, 1]]}]},
    "unit-cube-boundary": {"n": 3, "blocks": [{"intervals": [[0, 1], [0, 1], [0, 1]]}], "boundary": 1},
}
