"""Pointwise alternating tensors and black-box form fields.

A :class:`FormField` is nothing more than a sampler ``x -> AlternatingTensor``;
nothing downstream needs a formula.  Fields can optionally expose a vectorised
``batch`` evaluator returning dense component rows, which the quadrature and
stencil code use when available.
"""

from __future__ import annotations

import json
import threading
import warnings
from dataclasses import dataclass, field
from math import comb
from numbers import Real
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegreeError, SamplingError, ShapeError
from .multiindex import (
    REPEATED,
    MultiIndex,
    check_degree,
    enumerate_indices,
    from_key,
    index_positions,
    sort_with_sign,
    to_key,
    validate_index,
)

DENSE_MAX_DIM = 12


class AlternatingTensor:
    """Components of a degree-``p`` alternating tensor on ``R^n``.

    Components are keyed by increasing multi-indices; missing keys are zero.
    Instances are immutable.  Storage is a dense vector in lexicographic order
    for ``n <= 12`` and a sparse dict above that.
    """

    __slots__ = ("n", "degree", "_dense", "_sparse")

    def __init__(self, n: int, degree: int, components: Mapping[Sequence[int], float] | None = None):
        check_degree(n, degree)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "degree", int(degree))
        comps = {}
        for idx, value in (components or {}).items():
            idx = (idx,) if isinstance(idx, int) else idx
            comps[validate_index(idx, n, degree)] = float(value)
        self._set(comps)

    def _set(self, comps: dict[MultiIndex, float]) -> None:
        if self.n <= DENSE_MAX_DIM:
            vec = np.zeros(comb(self.n, self.degree))
            pos = index_positions(self.n, self.degree)
            for idx, value in comps.items():
                vec[pos[idx]] = value
            vec.flags.writeable = False
            object.__setattr__(self, "_dense", vec)
            object.__setattr__(self, "_sparse", None)
        else:
            object.__setattr__(self, "_dense", None)
            object.__setattr__(self, "_sparse", {k: v for k, v in comps.items() if v != 0.0})

    def __setattr__(self, name, value):
        raise AttributeError("AlternatingTensor is immutable")

    @classmethod
    def from_dense(cls, n: int, degree: int, values) -> AlternatingTensor:
        """Build from a vector ordered like ``enumerate_indices(n, degree)``."""
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != comb(n, degree):
            raise ShapeError(f"expected {comb(n, degree)} components for (n={n}, p={degree}), got {values.size}")
        out = cls.__new__(cls)
        check_degree(n, degree)
        object.__setattr__(out, "n", int(n))
        object.__setattr__(out, "degree", int(degree))
        if n <= DENSE_MAX_DIM:
            vec = values.copy()
            vec.flags.writeable = False
            object.__setattr__(out, "_dense", vec)
            object.__setattr__(out, "_sparse", None)
        else:
            idxs = enumerate_indices(n, degree)
            object.__setattr__(out, "_dense", None)
            object.__setattr__(out, "_sparse", {idxs[i]: float(v) for i, v in enumerate(values) if v != 0.0})
        return out

    @classmethod
    def from_raw(cls, n: int, degree: int, raw: Mapping[Sequence[int], float]) -> AlternatingTensor:
        """Alternate a dictionary whose keys may be in any order.

        ``raw[(2, 1)] = a`` is stored as the component ``-a`` on ``(1, 2)``;
        keys with a repeated index are dropped.  Two keys that are permutations
        of each other must agree up to the permutation sign.
        """
        comps: dict[MultiIndex, float] = {}
        for key, value in raw.items():
            key = (key,) if isinstance(key, int) else key
            if len(key) != degree:
                raise DegreeError(f"key {list(key)} does not have length {degree}")
            idx, sign = sort_with_sign(key, n)
            if idx is REPEATED:
                continue
            signed = sign * float(value)
            if idx in comps and comps[idx] != signed:
                raise ValueError(f"inconsistent raw entries for {list(idx)}: {comps[idx]} vs {signed}")
            comps[idx] = signed
        return cls(n, degree, comps)

    @classmethod
    def zeros(cls, n: int, degree: int) -> AlternatingTensor:
        return cls(n, degree)

    @property
    def components(self) -> dict[MultiIndex, float]:
        """Nonzero components keyed by increasing multi-index."""
        if self._dense is not None:
            idxs = enumerate_indices(self.n, self.degree)
            return {idxs[i]: float(v) for i, v in enumerate(self._dense) if v != 0.0}
        return dict(self._sparse)

    def dense(self) -> np.ndarray:
        """Writable copy of all ``C(n, p)`` components in lex order."""
        if self._dense is not None:
            return self._dense.copy()
        pos = index_positions(self.n, self.degree)
        vec = np.zeros(len(pos))
        for idx, value in self._sparse.items():
            vec[pos[idx]] = value
        return vec

    def __getitem__(self, indices) -> float:
        """Component on any ordering of an index tuple, with the alternation sign."""
        indices = (indices,) if isinstance(indices, int) else tuple(indices)
        if len(indices) != self.degree:
            raise DegreeError(f"expected {self.degree} indices, got {len(indices)}")
        idx, sign = sort_with_sign(indices, self.n)
        if idx is REPEATED:
            return 0.0
        if self._dense is not None:
            return sign * float(self._dense[index_positions(self.n, self.degree)[idx]])
        return sign * self._sparse.get(idx, 0.0)

    def full_array(self) -> np.ndarray:
        """The ``n x ... x n`` antisymmetric array determined by the components."""
        arr = np.zeros((self.n,) * self.degree)
        from itertools import permutations

        for idx, value in self.components.items():
            for perm in permutations(idx):
                _, sign = sort_with_sign(perm)
                arr[tuple(i - 1 for i in perm)] = sign * value
        return arr

    def apply(self, vectors) -> float:
        return apply_tensor(self, vectors)

    def max_abs(self) -> float:
        if self._dense is not None:
            return float(np.max(np.abs(self._dense))) if self._dense.size else 0.0
        return max((abs(v) for v in self._sparse.values()), default=0.0)

    def _check_compatible(self, other: AlternatingTensor) -> None:
        if not isinstance(other, AlternatingTensor):
            raise TypeError(f"cannot combine AlternatingTensor with {type(other).__name__}")
        if (self.n, self.degree) != (other.n, other.degree):
            raise ShapeError(f"(n, p) mismatch: {(self.n, self.degree)} vs {(other.n, other.degree)}")

    def __add__(self, other: AlternatingTensor) -> AlternatingTensor:
        self._check_compatible(other)
        return AlternatingTensor.from_dense(self.n, self.degree, self.dense() + other.dense())

    def __sub__(self, other: AlternatingTensor) -> AlternatingTensor:
        self._check_compatible(other)
        return AlternatingTensor.from_dense(self.n, self.degree, self.dense() - other.dense())

    def __neg__(self) -> AlternatingTensor:
        return AlternatingTensor.from_dense(self.n, self.degree, -self.dense())

    def __mul__(self, scalar) -> AlternatingTensor:
        if not isinstance(scalar, Real):
            return NotImplemented
        return AlternatingTensor.from_dense(self.n, self.degree, float(scalar) * self.dense())

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, AlternatingTensor):
            return NotImplemented
        return (self.n, self.degree) == (other.n, other.degree) and bool(np.array_equal(self.dense(), other.dense()))

    def __hash__(self):
        return hash((self.n, self.degree, tuple(self.dense())))

    def allclose(self, other: AlternatingTensor, rtol: float = 1e-9, atol: float = 0.0) -> bool:
        self._check_compatible(other)
        return bool(np.allclose(self.dense(), other.dense(), rtol=rtol, atol=atol))

    def to_json(self, dense: bool = True) -> dict:
        """``{"degree": p, "components": {"[1,2]": value, ...}}``."""
        if dense:
            comps = {to_key(i): float(v) for i, v in zip(enumerate_indices(self.n, self.degree), self.dense())}
        else:
            comps = {to_key(i): v for i, v in self.components.items()}
        return {"degree": self.degree, "components": comps}

    @classmethod
    def from_json(cls, n: int, data: Mapping) -> AlternatingTensor:
        comps = {from_key(k): v for k, v in data.get("components", {}).items()}
        return cls(n, int(data["degree"]), comps)

    def __repr__(self) -> str:
        body = ", ".join(f"{list(k)}: {v:g}" for k, v in self.components.items())
        return f"AlternatingTensor(n={self.n}, degree={self.degree}, {{{body}}})"


def minors(matrix: np.ndarray, rows: Sequence[MultiIndex]) -> np.ndarray:
    """Determinants of the row-selected square minors of ``matrix``.

    ``matrix`` has shape ``(..., n, p)``; ``rows`` are 1-based increasing
    multi-indices of length ``p``.  Returns shape ``(..., len(rows))``.
    """
    matrix = np.asarray(matrix, dtype=float)
    p = matrix.shape[-1]
    if p == 0:
        return np.ones(matrix.shape[:-2] + (len(rows),))
    sel = np.array([[i - 1 for i in r] for r in rows], dtype=int)
    sub = matrix[..., sel, :]  # (..., R, p, p)
    if p == 1:
        return sub[..., 0, 0]
    if p == 2:
        return sub[..., 0, 0] * sub[..., 1, 1] - sub[..., 0, 1] * sub[..., 1, 0]
    return np.linalg.det(sub)


def apply_tensor(t: AlternatingTensor, vectors) -> float:
    """Evaluate ``t`` on ``p`` vectors via the determinant-minor expansion.

    ``t(v_1, ..., v_p) = sum_I t[I] * det(rows I of [v_1 ... v_p])``.
    """
    vecs = np.asarray(vectors, dtype=float)
    if t.degree == 0:
        if vecs.size != 0:
            raise ShapeError("a degree-0 tensor takes no vectors")
        return t[()]
    if vecs.ndim != 2 or vecs.shape != (t.degree, t.n):
        raise ShapeError(f"expected {t.degree} vectors of dimension {t.n}, got array of shape {vecs.shape}")
    comps = t.components
    if not comps:
        return 0.0
    dets = minors(vecs.T, list(comps))
    return float(np.dot(np.fromiter(comps.values(), float, len(comps)), dets))


def _as_tensor(value, n: int, degree: int) -> AlternatingTensor:
    if isinstance(value, AlternatingTensor):
        if (value.n, value.degree) != (n, degree):
            raise ShapeError(f"sampler returned (n, p)=({value.n}, {value.degree}), expected ({n}, {degree})")
        return value
    if isinstance(value, Mapping):
        return AlternatingTensor(n, degree, value)
    if degree == 0 and np.ndim(value) == 0:
        return AlternatingTensor.from_dense(n, 0, [value])
    return AlternatingTensor.from_dense(n, degree, value)


@dataclass(frozen=True, eq=False)
class FormField:
    """A degree-``p`` form on ``R^n`` given by a pointwise sampler.

    Parameters
    ----------
    sampler
        ``x -> AlternatingTensor`` (a mapping of components or a dense row is
        accepted too).  Must be a pure function of ``x``.
    analytic_derivative
        Optional ``x -> AlternatingTensor`` of degree ``p + 1``; only used by
        compatibility and Stokes checks.
    batch
        Optional vectorised evaluator ``(N, n) -> (N, C(n, p))`` returning
        dense components in lexicographic order.
    derivative_batch
        Optional vectorised analytic derivative ``(N, n) -> (N, C(n, p+1))``.
    thread_safe
        Set to False for samplers backed by non-reentrant resources; calls are
        then serialised behind a lock.
    """

    n: int
    degree: int
    sampler: Callable
    analytic_derivative: Callable | None = None
    batch: Callable | None = None
    thread_safe: bool = True
    name: str | None = None
    derivative_batch: Callable | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        check_degree(self.n, self.degree)

    @property
    def size(self) -> int:
        return comb(self.n, self.degree)

    def _call(self, fn, arg):
        if self.thread_safe:
            return fn(arg)
        with self._lock:
            return fn(arg)

    def sample(self, x) -> AlternatingTensor:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ShapeError(f"point must have shape ({self.n},), got {x.shape}")
        try:
            value = self._call(self.sampler, x)
        except SamplingError:
            raise
        except (ShapeError, DegreeError):
            raise
        except Exception as exc:
            raise SamplingError(f"sampler failed at {x.tolist()}: {exc}", x) from exc
        return _as_tensor(value, self.n, self.degree)

    __call__ = sample

    def sample_many(self, points) -> np.ndarray:
        """Dense components at each row of ``points``; shape ``(N, C(n, p))``."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.n:
            raise ShapeError(f"points must have shape (N, {self.n}), got {pts.shape}")
        if self.batch is not None:
            try:
                out = self._call(self.batch, pts)
            except SamplingError:
                raise
            except Exception as exc:
                raise SamplingError(f"batch sampler failed: {exc}") from exc
            out = np.asarray(out, dtype=float)
            if out.shape != (len(pts), self.size):
                out = np.broadcast_to(out, (len(pts), self.size)).copy()
            return out
        out = np.empty((len(pts), self.size))
        for row, x in enumerate(pts):
            out[row] = self.sample(x).dense()
        return out

    def derivative_at(self, x) -> AlternatingTensor:
        from .errors import MissingDerivativeError

        if self.analytic_derivative is None:
            raise MissingDerivativeError("field has no analytic derivative")
        x = np.asarray(x, dtype=float)
        return _as_tensor(self.analytic_derivative(x), self.n, self.degree + 1)

    def derivative_many(self, points) -> np.ndarray:
        """Dense analytic-derivative rows at each row of ``points``."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.n)
        if self.derivative_batch is not None:
            out = np.asarray(self._call(self.derivative_batch, pts), dtype=float)
            return np.broadcast_to(out, (len(pts), comb(self.n, self.degree + 1))).copy()
        return np.stack([self.derivative_at(x).dense() for x in pts]) if len(pts) else np.zeros((0, comb(self.n, self.degree + 1)))

    # linear combinations keep both the sampler and the optional extras
    def _combine(self, other: FormField, a: float, b: float) -> FormField:
        if (self.n, self.degree) != (other.n, other.degree):
            raise ShapeError("fields of different (n, p) cannot be combined")

        def sampler(x):
            return a * self.sample(x) + b * other.sample(x)

        batch = None
        if self.batch is not None and other.batch is not None:
            def batch(pts):
                return a * self.sample_many(pts) + b * other.sample_many(pts)

        deriv = None
        if self.analytic_derivative is not None and other.analytic_derivative is not None:
            def deriv(x):
                return a * self.derivative_at(x) + b * other.derivative_at(x)

        return FormField(self.n, self.degree, sampler, deriv, batch)

    def __add__(self, other: FormField) -> FormField:
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other: FormField) -> FormField:
        return self._combine(other, 1.0, -1.0)

    def __rmul__(self, scalar: float) -> FormField:
        return self._combine(self, float(scalar), 0.0)

    @classmethod
    def from_functions(
        cls,
        n: int,
        degree: int,
        coefficients: Mapping[Sequence[int], Callable],
        derivative: Mapping[Sequence[int], Callable] | None = None,
        name: str | None = None,
    ) -> FormField:
        """Field whose components are numpy-broadcasting callables of ``x``.

        Each callable receives ``x`` with the coordinate on the last axis
        (shape ``(n,)`` or ``(N, n)``) and must return a scalar or shape
        ``(N,)``; use ``x[..., 0]`` for the first coordinate.
        """
        coeffs = _index_callables(n, degree, coefficients)
        deriv = None if derivative is None else _index_callables(n, degree + 1, derivative)

        def batch(pts):
            out = np.zeros((len(pts), comb(n, degree)))
            for col, fn in coeffs:
                out[:, col] = fn(pts)
            return out

        def sampler(x):
            return AlternatingTensor.from_dense(n, degree, batch(x[None, :])[0])

        analytic = deriv_batch = None
        if deriv is not None:
            def deriv_batch(pts):
                out = np.zeros((len(pts), comb(n, degree + 1)))
                for col, fn in deriv:
                    out[:, col] = fn(pts)
                return out

            def analytic(x):
                return AlternatingTensor.from_dense(n, degree + 1, deriv_batch(np.asarray(x, dtype=float)[None, :])[0])

        return cls(n, degree, sampler, analytic, batch, name=name, derivative_batch=deriv_batch)

    @classmethod
    def constant(cls, tensor: AlternatingTensor) -> FormField:
        row = tensor.dense()

        def batch(pts):
            return np.tile(row, (len(pts), 1))

        zero = AlternatingTensor.zeros(tensor.n, tensor.degree + 1) if tensor.degree < tensor.n else None
        return cls(tensor.n, tensor.degree, lambda x: tensor, (lambda x: zero) if zero is not None else None, batch)

    @classmethod
    def zero(cls, n: int, degree: int) -> FormField:
        return cls.constant(AlternatingTensor.zeros(n, degree))


def _index_callables(n, degree, mapping):
    pos = index_positions(n, degree)
    out = []
    for idx, fn in mapping.items():
        idx = (idx,) if isinstance(idx, int) else tuple(idx)
        key, sign = sort_with_sign(idx, n)
        if key is REPEATED:
            continue
        if len(key) != degree:
            raise DegreeError(f"component {list(idx)} does not have degree {degree}")
        if sign < 0:
            fn = (lambda f: lambda x: -np.asarray(f(x), dtype=float))(fn)
        out.append((pos[key], fn))
    return out


def sample(field: FormField, x) -> AlternatingTensor:
    """Components of ``field`` at ``x``."""
    return field.sample(x)


# --------------------------------------------------------------------------
# data clouds


@dataclass(frozen=True, eq=False)
class DataCloud:
    """A finite set of points with full component rows of a degree-``p`` form."""

    n: int
    degree: int
    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        check_degree(self.n, self.degree)
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.n)
        vals = np.asarray(self.values, dtype=float).reshape(len(pts), comb(self.n, self.degree))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_json(cls, data: Mapping) -> DataCloud:
        n, degree = int(data["n"]), int(data["degree"])
        pos = index_positions(n, degree)
        pts, rows = [], []
        for k, entry in enumerate(data["samples"]):
            point = entry["point"]
            if len(point) != n:
                raise ShapeError(f"sample {k}: point has {len(point)} coordinates, expected {n}")
            row = np.zeros(len(pos))
            for key, value in entry.get("components", {}).items():
                row[pos[validate_index(from_key(key), n, degree)]] = float(value)
            pts.append(point)
            rows.append(row)
        return cls(n, degree, np.array(pts, dtype=float).reshape(-1, n), np.array(rows).reshape(-1, len(pos)))

    def to_json(self) -> dict:
        idxs = enumerate_indices(self.n, self.degree)
        samples = []
        for point, row in zip(self.points, self.values):
            comps = {to_key(i): float(v) for i, v in zip(idxs, row) if v != 0.0}
            samples.append({"point": [float(c) for c in point], "components": comps})
        return {"n": self.n, "degree": self.degree, "samples": samples}

    @classmethod
    def load(cls, path) -> DataCloud:
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_field(cls, field: FormField, points) -> DataCloud:
        pts = np.asarray(points, dtype=float).reshape(-1, field.n)
        return cls(field.n, field.degree, pts, field.sample_many(pts))


class ApproximateMatchingWarning(UserWarning):
    """Nearest-sample lookup silently substitutes neighbouring data."""


def field_from_cloud(cloud: DataCloud | Mapping, matching: str = "exact", tol: float = 1e-12) -> FormField:
    """A :class:`FormField` answering queries from a data cloud.

    With ``matching="exact"`` a query must coincide with a stored point to
    within ``tol`` in every coordinate, otherwise :class:`SamplingError` is
    raised.  ``matching="nearest"`` returns the closest sample's components
    and is approximate.
    """
    if not isinstance(cloud, DataCloud):
        cloud = DataCloud.from_json(cloud)
    if matching not in ("exact", "nearest"):
        raise ValueError(f"matching must be 'exact' or 'nearest', got {matching!r}")
    if len(cloud) == 0:
        raise ValueError("data cloud has no samples")
    if matching == "nearest":
        warnings.warn("nearest-sample matching is approximate", ApproximateMatchingWarning, stacklevel=2)
    tree = cKDTree(cloud.points)
    n, degree = cloud.n, cloud.degree

    def batch(pts):
        dist, which = tree.query(pts, k=1, p=np.inf)
        if matching == "exact":
            bad = np.flatnonzero(dist > tol)
            if bad.size:
                x = pts[bad[0]]
                raise SamplingError(f"data cloud has no sample at {x.tolist()}", x)
        return cloud.values[which]

    def sampler(x):
        return AlternatingTensor.from_dense(n, degree, batch(x[None, :])[0])

    return FormField(n, degree, sampler, batch=batch, name=f"cloud[{len(cloud)}, {matching}]")
