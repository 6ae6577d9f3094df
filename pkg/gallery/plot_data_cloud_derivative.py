"""
Exterior derivative of sampled data
===================================

A form does not need a formula.  Here we only know a 2-form on R^3 at the
six points ``x +/- eps e_i`` around ``x = (1, 2, 3)``, and that is already
enough for the flux derivative at ``x``.
"""

import numpy as np

from fluxform import DataCloud, DerivConfig, exterior_derivative_at, field_from_cloud, parse_form

# sample x1 dx2^dx3 on the stencil nodes, then forget the formula
x = np.array([1.0, 2.0, 3.0])
eps = 0.01
nodes = [x + s * eps * e for e in np.eye(3) for s in (-1, 1)]
cloud = DataCloud.from_field(parse_form("x1*dx2^dx3", 3).to_field(), nodes)
print(cloud.to_json()["samples"][0])

# the cloud behaves like any other form field
field = field_from_cloud(cloud)
dw = exterior_derivative_at(field, x, DerivConfig(eps=eps))
print("D omega at", x, "=", dw.to_json(dense=False))

# a radial 1-form is closed; its flux derivative is zero to roundoff
radial = field_from_cloud(DataCloud.from_field(parse_form("x1*dx1 + x2*dx2 + x3*dx3", 3).to_field(), [np.ones(3) + s * eps * e for e in np.eye(3) for s in (-1, 1)]))
print("radial:", exterior_derivative_at(radial, np.ones(3), DerivConfig(eps=eps)).max_abs())
