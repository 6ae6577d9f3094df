import numpy as np
import pytest

from fluxform.chains import Block, Chain, SingularBlock, boundary
from fluxform.errors import DegreeError, SamplingError
from fluxform.expression import parse_form
from fluxform.forms import AlternatingTensor, FormField
from fluxform.integrate import (
    QuadratureSpec,
    boundary_integral,
    integrate,
    integrate_over_chain,
    integrate_over_singular_block,
    pullback_density,
    pullback_field,
)


def field(text, n):
    return parse_form(text, n).to_field()


def test_pullback_density_examples():
    f = field("x1*x2*dx1^dx2", 2)
    sb = SingularBlock.inclusion(Block(((0, 1), (0, 1))))
    assert pullback_density(sb, f, [0.5, 0.25]) == 0.125
    stretch = SingularBlock(Block(((0, 1),)), lambda t: 2.0 * t, 1)
    one = field("1*dx1", 1)
    assert pullback_density(stretch, one, [0.3]) == pytest.approx(2.0, abs=1e-9)
    eps, x = 0.01, np.array([1.0, 2.0, 3.0])
    cube = SingularBlock.inclusion(Block(tuple((c - eps, c + eps) for c in x)))
    c11 = cube.face(1, 1)
    w = field("x1*dx2^dx3", 3)
    for t in [[2.0, 3.0], [1.995, 3.005]]:
        assert pullback_density(c11, w, t) == x[0] + eps


def test_integrate_examples():
    sb = SingularBlock.inclusion(Block(((0, 1),)))
    assert integrate_over_singular_block(field("x1*dx1", 1), sb, QuadratureSpec(1000)) == pytest.approx(0.5, abs=1e-6)
    assert integrate(FormField.zero(2, 2), Block(((0, 3), (1, 2)))) == 0.0
    f = field("x1^2", 1)
    assert boundary_integral(f, Block(((1.0, 2.0),))) == 3.0
    assert integrate_over_chain(field("x1*dx1", 1), Chain.of(sb, sb, coefficients=[1, -1])) == 0.0


def test_heaviside_boundary_flux_matches_closed_form(rng):
    f = field("(sin(x1) + step(x2))*dx2", 2)
    for _ in range(20):
        h = rng.uniform(0.05, 1.0, size=2)
        x = rng.uniform(-1, 1 - h)
        got = boundary_integral(f, Block(((x[0], x[0] + h[0]), (x[1], x[1] + h[1]))))
        assert got == pytest.approx(h[1] * (np.sin(x[0] + h[0]) - np.sin(x[0])), abs=1e-8)


def test_green_lhs():
    lhs = integrate_over_chain(field("-x2*dx1 + x1*dx2", 2), boundary(SingularBlock.inclusion(Block(((0, 1), (0, 1))))))
    assert lhs == pytest.approx(2.0, abs=1e-6)


def test_boundary_integral_examples():
    assert boundary_integral(field("x1*dx2", 2), Block(((0, 1), (0, 1)))) == pytest.approx(1.0, abs=1e-9)
    const = FormField.constant(AlternatingTensor(3, 2, {(1, 2): 3.0, (2, 3): -1.0}))
    assert boundary_integral(const, Block(((0, 1), (0, 2), (-1, 1)))) == 0.0
    radial = field("x1*dx1 + x2*dx2 + x3*dx3", 3)
    cube = Block(tuple((1 - 0.01, 1 + 0.01) for _ in range(3)))
    for Q in [(1, 2), (1, 3), (2, 3)]:
        A = np.zeros((3, 2))
        A[Q[0] - 1, 0] = A[Q[1] - 1, 1] = 1.0
        plane = SingularBlock.from_affine(Block(((-0.01, 0.01), (-0.01, 0.01))), A, np.ones(3))
        assert abs(boundary_integral(radial, plane)) <= 1e-12
    assert abs(integrate_over_chain(field("x1*dx1^dx2", 3), boundary(SingularBlock.inclusion(cube)))) < 1e-12


def test_degree_mismatch():
    with pytest.raises(DegreeError):
        integrate(field("x1*dx1", 2), Block(((0, 1), (0, 1))))
    with pytest.raises(DegreeError):
        boundary_integral(field("x1*dx1^dx2", 2), Block(((0, 1), (0, 1))))


def test_linearity_on_fixed_nodes(rng):
    w = field("sin(x1)*x2*dx1 + exp(x2)*dx2", 2)
    e = field("x1^3*dx1 - cos(x1*x2)*dx2", 2)
    fn = lambda t: np.stack([t[..., 0] + 0.3 * t[..., 1] ** 2, t[..., 1] - 0.2 * np.sin(t[..., 0])], axis=-1)
    sb = SingularBlock(Block(((0, 1),)), lambda t: fn(np.concatenate([t, 0.5 * t], axis=-1)), 2)
    a, b = 1.7, -0.4
    lhs = integrate(a * w + b * e, sb)
    rhs = a * integrate(w, sb) + b * integrate(e, sb)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_orientation_flip_under_axis_swap():
    w = field("x1*x2^2*dx1^dx2", 2)
    B = Block(((0, 1), (0, 2)))
    swapped = SingularBlock(Block(((0, 2), (0, 1))), lambda t: t[..., ::-1], 2)
    assert integrate(w, swapped) == pytest.approx(-integrate(w, B), rel=1e-12)


def test_naturality_under_affine_maps(rng):
    w = field("sin(x1)*dx2 + x3*x1*dx3 - x2^2*dx1", 3)
    A = rng.normal(size=(3, 2))
    b = rng.normal(size=3)
    B = Block(((0, 1), (-0.5, 0.5)))
    psi = lambda t: t @ A.T + b
    pulled = pullback_field(w, psi, 2, jacobian=lambda t: np.broadcast_to(A, t.shape[:-1] + A.shape))
    direct = integrate_over_chain(w, boundary(SingularBlock.from_affine(B, A, b)), QuadratureSpec(64))
    via_pullback = boundary_integral(pulled, B, QuadratureSpec(64))
    assert via_pullback == pytest.approx(direct, rel=1e-12, abs=1e-12)
    # finite-difference Jacobians give the same answer to their own accuracy
    pulled_fd = pullback_field(w, psi, 2)
    assert boundary_integral(pulled_fd, B, QuadratureSpec(64)) == pytest.approx(direct, abs=1e-7)


def test_midpoint_rule_is_second_order():
    w = field("exp(x1)*x2^4*dx1^dx2", 2)
    B = Block(((0, 1), (0, 1)))
    exact = (np.e - 1) / 5
    errs = [abs(integrate(w, B, QuadratureSpec(m)) - exact) for m in (4, 8, 16, 32)]
    slopes = np.diff(np.log(errs)) / np.log(0.5)
    assert np.all(np.abs(slopes - 2.0) < 0.3)


def test_doubling_loop_reaches_rtol():
    w = field("exp(x1)*dx1", 1)
    q = QuadratureSpec(subdivisions=2, rtol=1e-8)
    assert integrate(w, Block(((0, 1),)), q) == pytest.approx(np.e - 1, rel=1e-7)


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(0)
    with pytest.raises(ValueError):
        QuadratureSpec(rtol=-1)


def test_sampling_error_names_a_node():
    def sampler(x):
        if x[0] > 0.5:
            raise KeyError("no data")
        return {(1,): 1.0}

    f = FormField(1, 1, sampler)
    with pytest.raises(SamplingError) as info:
        integrate(f, Block(((0, 1),)), QuadratureSpec(4))
    assert info.value.payload()["point"] == [0.625]
