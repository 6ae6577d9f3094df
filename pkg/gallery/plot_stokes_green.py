"""
Stokes on squares, saddles and spheres
======================================

The boundary integral of a form and the integral of its flux derivative
over the chain should agree.  We compare both sides for Green's classic
area form and for a few curved 2-chains in R^3.
"""

import numpy as np

from fluxform import Block, Chain, DerivConfig, QuadratureSpec, SingularBlock, parse_form, stokes_sides
from fluxform.chains import MAP_REGISTRY

q = QuadratureSpec(256)
cfg = DerivConfig(eps=1e-4)

# Green: -y dx + x dy around the unit square encloses twice the area
green = parse_form("-x2*dx1 + x1*dx2", 2).to_field()
square = SingularBlock.inclusion(Block(((0, 1), (0, 1))))
print("Green:", stokes_sides(green, square, cfg, q))

# curved chains come from the map registry
fn, jac, n = MAP_REGISTRY["saddle"]({"a": 0.7})
saddle = Chain.of(SingularBlock(Block(((0, 1), (0, 1))), fn, n, jac))
fn, jac, n = MAP_REGISTRY["spherical"]({"r": 1.5})
cap = Chain.of(SingularBlock(Block(((0.3, 1.2), (0.0, 2.0))), fn, n, jac))

w = parse_form("x2*x3*dx1 + sin(x1)*dx2 + x1^2*x2*dx3", 3).to_field()
for name, chain in [("saddle", saddle), ("sphere patch", cap)]:
    lhs, rhs = stokes_sides(w, chain, cfg, q)
    print(f"{name:>12}: boundary {lhs:.10f}  interior {rhs:.10f}  rel. gap {abs(lhs - rhs) / abs(lhs):.2e}")

# the gap closes at second order in the quadrature step
for m in (16, 32, 64, 128):
    lhs, rhs = stokes_sides(w, saddle, cfg, QuadratureSpec(m))
    print(m, abs(lhs - rhs))
