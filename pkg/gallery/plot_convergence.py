"""
How fast does the stencil converge?
===================================

The face-centre stencil is centred, so its error falls like eps^2 until
roundoff takes over.  Richardson extrapolation removes the leading term.
"""

import numpy as np

from fluxform import AlternatingTensor, DerivConfig, convergence_order, exterior_derivative_at, exterior_derivative_refined, parse_form
from fluxform.deriv import stencil_errors

w = parse_form("x3^2*sin(x1)*dx2 + exp(x2)*x1*dx3", 3).to_field()
x = np.array([0.4, -0.3, 0.9])
x1, x2, x3 = x

# d omega by hand
exact = AlternatingTensor(3, 2, {(1, 2): x3**2 * np.cos(x1), (1, 3): np.exp(x2), (2, 3): x1 * np.exp(x2) - 2 * x3 * np.sin(x1)})

eps_seq = [1e-1 / 2**i for i in range(8)]
for eps, err in zip(eps_seq, stencil_errors(w, x, eps_seq, exact)):
    print(f"eps {eps:.2e}  error {err:.3e}  error/eps^2 {err / eps**2:.4f}")
print("observed order:", convergence_order(w, x, eps_seq[:5], exact))

# far too small a step is dominated by cancellation
print("eps=1e-9 error:", (exterior_derivative_at(w, x, DerivConfig(eps=1e-9)) - exact).max_abs())

value, estimate = exterior_derivative_refined(w, x, DerivConfig(eps=1e-2))
print("Richardson error", (value - exact).max_abs(), "estimate", estimate)
