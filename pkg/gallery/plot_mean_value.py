"""
Finding the mean-value point
============================

For an (n-1)-form on an n-block there is a point where the flux derivative
equals the average boundary flux.  Trisection finds it constructively:
keep a one-third-scale sub-block with the same average flux, and repeat.
"""

import numpy as np

from fluxform import Block, mvt_locate, parse_form

# x^2 dy on the unit square: average flux 1 = 2 xi_1, so xi_1 = 1/2
res = mvt_locate(parse_form("x1^2*dx2", 2).to_field(), Block(((0, 1), (0, 1))))
print("xi =", res.xi, "target", res.target, "attained", res.attained)
for k, level in enumerate(res.levels, 1):
    print(f"  level {k}: case {level.case:<9} side {level.block.longest:.2e} mismatch {level.mismatch:.1e}")

# one dimension: the ordinary mean value theorem for f = x^2 on [0, 2]
res1 = mvt_locate(parse_form("x1^2", 1).to_field(), Block(((0, 2),)))
print("1-d xi =", res1.xi[0])

# a less symmetric example: the trisection has to bisect along a path
res = mvt_locate(parse_form("exp(x1)*x2*dx1 + sin(x1*x2)*dx2", 2).to_field(), Block(((0, 1), (0.5, 2))))
print("xi =", res.xi, "residual", res.residual, [lv.case for lv in res.levels])
