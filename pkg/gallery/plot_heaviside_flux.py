"""
Flux through a jump
===================

``(sin x + H(y)) dy`` jumps across the x-axis, so it has no classical
derivative there.  Its boundary flux is still perfectly regular: the jump
part ``H(y) dy`` contributes equally on the left and right faces and cancels.
"""

import numpy as np

from fluxform import Block, boundary_integral, parse_form

w = parse_form("(sin(x1) + step(x2))*dx2", 2).to_field()

rng = np.random.default_rng(0)
for _ in range(5):
    h = rng.uniform(0.05, 1.0, size=2)
    x = rng.uniform(-1.0, 1.0 - h)
    flux = boundary_integral(w, Block(((x[0], x[0] + h[0]), (x[1], x[1] + h[1]))))
    exact = h[1] * (np.sin(x[0] + h[0]) - np.sin(x[0]))
    print(f"corner {x.round(3)}  sides {h.round(3)}  flux {flux:+.12f}  error {abs(flux - exact):.1e}")

# shrinking squares straddling the jump: flux / area tends to cos(x)
for h in (0.1, 0.01, 0.001):
    B = Block(((0.5 - h / 2, 0.5 + h / 2), (-h / 2, h / 2)))
    print(h, boundary_integral(w, B) / B.volume, np.cos(0.5))
