import json
import threading
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import data_path
from fluxform.errors import DegreeError, MissingDerivativeError, SamplingError, ShapeError
from fluxform.forms import (
    AlternatingTensor,
    ApproximateMatchingWarning,
    DataCloud,
    FormField,
    apply_tensor,
    field_from_cloud,
    minors,
    sample,
)
from fluxform.multiindex import enumerate_indices, sort_with_sign


def leibniz_apply(components, vectors):
    # sum over I of t_I * sum over permutations, written out without determinants
    total = 0.0
    p = len(vectors)
    for idx, coeff in components.items():
        for perm in permutations(range(p)):
            sign = sort_with_sign([perm[j] + 1 for j in range(p)])[1]
            prod = 1.0
            for slot in range(p):
                prod *= vectors[perm[slot]][idx[slot] - 1]
            total += coeff * sign * prod
    return total


def random_tensor(rng, n, p):
    return AlternatingTensor.from_dense(n, p, rng.normal(size=len(enumerate_indices(n, p))))


def test_apply_tensor_examples():
    e = np.eye(3)
    t = AlternatingTensor(3, 2, {(1, 2): 1.0})
    assert apply_tensor(t, [e[0], e[1]]) == 1.0
    assert apply_tensor(t, [e[1], e[0]]) == -1.0
    t2 = AlternatingTensor(3, 2, {(1, 3): 1.0, (2, 3): 2.0})
    assert apply_tensor(t2, [e[0] + e[1], e[2]]) == 3.0


def test_apply_tensor_degree_zero_and_errors():
    assert apply_tensor(AlternatingTensor(2, 0, {(): 4.5}), np.zeros((0, 2))) == 4.5
    t = AlternatingTensor(3, 2, {(1, 2): 1.0})
    with pytest.raises(ShapeError):
        apply_tensor(t, [[1, 0, 0]])
    with pytest.raises(ShapeError):
        apply_tensor(t, [[1, 0], [0, 1]])


@settings(deadline=None, max_examples=60)
@given(st.integers(1, 5).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, min(n, 4)))), st.integers(0, 2**32 - 1))
def test_apply_tensor_matches_leibniz_oracle(np_, seed):
    n, p = np_
    rng = np.random.default_rng(seed)
    t = random_tensor(rng, n, p)
    V = rng.normal(size=(p, n))
    assert apply_tensor(t, V) == pytest.approx(leibniz_apply(t.components, V), rel=1e-12, abs=1e-12)


@settings(deadline=None, max_examples=60)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_apply_tensor_alternating_and_multilinear(n, seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, n + 1))
    t = random_tensor(rng, n, p)
    V = rng.normal(size=(p, n))
    base = apply_tensor(t, V)
    scale = max(1.0, abs(base))
    # repeated vector
    W = V.copy()
    W[1] = W[0]
    assert apply_tensor(t, W) == pytest.approx(0.0, abs=1e-12 * scale)
    # swap
    S = V.copy()
    S[[0, 1]] = S[[1, 0]]
    assert apply_tensor(t, S) == pytest.approx(-base, rel=1e-12, abs=1e-12)
    # linearity in slot 0
    u, a, b = rng.normal(size=n), 1.7, -0.3
    L = V.copy()
    L[0] = a * V[0] + b * u
    U = V.copy()
    U[0] = u
    assert apply_tensor(t, L) == pytest.approx(a * base + b * apply_tensor(t, U), rel=1e-10, abs=1e-12)
    # linearity in the tensor
    t2 = random_tensor(rng, n, p)
    assert apply_tensor(2.0 * t - t2, V) == pytest.approx(2.0 * base - apply_tensor(t2, V), rel=1e-10, abs=1e-12)


def test_minors_against_numpy_det(rng):
    J = rng.normal(size=(7, 4, 3))
    rows = enumerate_indices(4, 3)
    got = minors(J, rows)
    want = np.stack([np.linalg.det(J[:, [i - 1 for i in idx], :]) for idx in rows], axis=-1)
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12)
    J2 = rng.normal(size=(5, 3, 2))
    got2 = minors(J2, enumerate_indices(3, 2))
    want2 = np.stack([np.linalg.det(J2[:, [i - 1 for i in idx], :]) for idx in enumerate_indices(3, 2)], axis=-1)
    assert np.allclose(got2, want2, rtol=1e-12, atol=1e-14)


def test_tensor_indexing_applies_signs():
    t = AlternatingTensor(3, 2, {(1, 3): 2.0})
    assert t[1, 3] == 2.0
    assert t[3, 1] == -2.0
    assert t[1, 1] == 0.0
    assert t[1, 2] == 0.0


def test_from_raw_alternates_and_checks_consistency():
    t = AlternatingTensor.from_raw(3, 2, {(2, 1): 5.0, (3, 3): 7.0})
    assert t.components == {(1, 2): -5.0}
    same = AlternatingTensor.from_raw(3, 2, {(1, 2): -5.0, (2, 1): 5.0})
    assert same == t
    with pytest.raises(ValueError):
        AlternatingTensor.from_raw(3, 2, {(1, 2): 1.0, (2, 1): 1.0})


@settings(deadline=None, max_examples=40)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_full_array_equals_increasing_storage(n, seed):
    # alternation of the increasing-key table reproduces the stored tensor at every slot tuple
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, n + 1))
    t = random_tensor(rng, n, p)
    full = t.full_array()
    raw = {tuple(i + 1 for i in pos): full[pos] for pos in np.ndindex(*full.shape)}
    assert AlternatingTensor.from_raw(n, p, raw).allclose(t, rtol=0, atol=0)
    for pos in np.ndindex(*full.shape):
        assert full[pos] == t[tuple(i + 1 for i in pos)]


def test_tensor_is_immutable_and_rejects_bad_keys():
    t = AlternatingTensor(3, 1, {(1,): 1.0})
    with pytest.raises((AttributeError, TypeError)):
        t.n = 4
    with pytest.raises((ValueError, IndexError)):
        AlternatingTensor(3, 1, {(4,): 1.0})
    with pytest.raises(DegreeError):
        AlternatingTensor(3, 2, {(1,): 1.0})
    d = t.dense()
    d[0] = 99.0
    assert t[1] == 1.0


def test_sparse_storage_for_large_n():
    t = AlternatingTensor.from_raw(20, 3, {(1, 5, 20): 2.0, (5, 1, 20): -2.0})
    assert t.components == {(1, 5, 20): 2.0}
    t = AlternatingTensor(20, 3, {(1, 5, 20): 1.0})
    assert t[20, 5, 1] == -1.0
    e = np.eye(20)
    assert apply_tensor(t, [e[0], e[4], e[19]]) == 1.0
    assert (t + t)[1, 5, 20] == 2.0


def test_tensor_json_round_trip():
    t = AlternatingTensor(3, 2, {(1, 3): 0.25, (2, 3): -1.0})
    data = json.loads(json.dumps(t.to_json()))
    assert data == {"degree": 2, "components": {"[1,2]": 0.0, "[1,3]": 0.25, "[2,3]": -1.0}}
    assert AlternatingTensor.from_json(3, data) == t


# ---------------------------------------------------------------------------
# fields


def radial_field():
    return FormField.from_functions(3, 1, {1: lambda x: x[..., 0], 2: lambda x: x[..., 1], 3: lambda x: x[..., 2]})


def test_sample_radial_and_x_dydz_fields():
    assert sample(radial_field(), [1.01, 1, 1]).components == {(1,): 1.01, (2,): 1.0, (3,): 1.0}
    w = FormField.from_functions(3, 2, {(2, 3): lambda x: x[..., 0]})
    assert sample(w, [1.01, 2, 3]).components == {(2, 3): 1.01}
    assert sample(FormField.zero(3, 2), [4, 5, 6]).components == {}


def test_sampler_output_is_checked_and_failures_carry_the_point():
    bad = FormField(2, 1, lambda x: AlternatingTensor(3, 1, {(1,): 1.0}))
    with pytest.raises((ShapeError, DegreeError)):
        bad.sample([0.0, 0.0])

    def boom(x):
        raise RuntimeError("sensor offline")

    f = FormField(2, 1, boom)
    with pytest.raises(SamplingError) as info:
        f.sample([0.5, 0.25])
    assert info.value.payload()["point"] == [0.5, 0.25]
    with pytest.raises(ShapeError):
        radial_field().sample([1.0, 2.0])


def test_sampler_accepts_mappings_and_rows():
    f = FormField(2, 1, lambda x: {(1,): x[0], (2,): 3.0})
    assert f.sample([2.0, 0.0]).components == {(1,): 2.0, (2,): 3.0}
    g = FormField(2, 1, lambda x: np.array([1.0, x[1]]))
    assert g.sample([0.0, 5.0])[2] == 5.0


def test_sampling_is_pure():
    f = radial_field()
    x = np.array([0.3, -0.2, 0.9])
    assert f.sample(x) == f.sample(x)
    assert np.array_equal(f.sample_many(np.tile(x, (4, 1))), np.tile(f.sample(x).dense(), (4, 1)))


def test_non_thread_safe_sampler_is_serialised():
    active = []
    overlap = []

    def sampler(x):
        active.append(1)
        if len(active) > 1:
            overlap.append(1)
        s = float(np.sum(np.sin(np.arange(2000) * x[0])))
        active.pop()
        return {(1,): s}

    f = FormField(1, 1, sampler, thread_safe=False)
    threads = [threading.Thread(target=lambda: [f.sample([i * 0.1]) for i in range(20)]) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not overlap


def test_field_algebra_and_derivatives():
    f = FormField.from_functions(2, 1, {2: lambda x: x[..., 0] ** 2}, derivative={(1, 2): lambda x: 2 * x[..., 0]})
    g = FormField.from_functions(2, 1, {1: lambda x: x[..., 1]}, derivative={(2, 1): lambda x: 1.0 + 0 * x[..., 0]})
    h = f + 2.0 * g
    x = np.array([3.0, -1.0])
    assert h.sample(x).components == {(1,): -2.0, (2,): 9.0}
    assert h.derivative_at(x)[1, 2] == 6.0 - 2.0
    assert f.derivative_many(np.array([[1.0, 0.0], [2.0, 0.0]]))[:, 0].tolist() == [2.0, 4.0]
    with pytest.raises(MissingDerivativeError):
        radial_field().derivative_at(x)
    with pytest.raises(ShapeError):
        f + radial_field()


# ---------------------------------------------------------------------------
# data clouds


def test_radial_cloud_file():
    cloud = DataCloud.load(data_path("radial_1form_cloud.json"))
    assert len(cloud) == 6 and cloud.degree == 1
    f = field_from_cloud(cloud)
    assert f.sample([1.01, 1, 1]).components == {(1,): 1.01, (2,): 1.0, (3,): 1.0}
    with pytest.raises(SamplingError) as info:
        f.sample([2, 2, 2])
    assert info.value.payload()["point"] == [2.0, 2.0, 2.0]


def test_x_dydz_cloud_file():
    f = field_from_cloud(DataCloud.load(data_path("x_dydz_2form_cloud.json")))
    assert f.sample([1, 2, 2.99]).components == {(2, 3): 1.0}
    assert f.sample([0.99, 2, 3])[3, 2] == -0.99


def test_exact_matching_tolerance_and_nearest_mode():
    cloud = DataCloud.load(data_path("radial_1form_cloud.json"))
    exact = field_from_cloud(cloud)
    assert exact.sample([1.01 + 5e-13, 1, 1])[1] == 1.01
    with pytest.raises(SamplingError):
        exact.sample([1.01 + 1e-9, 1, 1])
    with pytest.warns(ApproximateMatchingWarning):
        near = field_from_cloud(cloud, matching="nearest")
    assert near.sample([1.02, 1, 1])[1] == 1.01


def test_cloud_json_round_trip(tmp_path):
    cloud = DataCloud.from_field(radial_field(), np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]))
    path = tmp_path / "c.json"
    cloud.save(path)
    back = DataCloud.load(path)
    assert np.array_equal(back.points, cloud.points) and np.array_equal(back.values, cloud.values)
    with pytest.raises(ShapeError):
        DataCloud.from_json({"n": 3, "degree": 1, "samples": [{"point": [1, 2], "components": {}}]})
