"""
Nested dual numbers
===================

Forward-mode derivatives of any order come from nesting duals.  Here the
second derivative of tan at 0.3 is computed twice, once by seeding a dual
inside a dual and once from the closed form 2 tan x sec^2 x.
"""

import math

from nhtrack import scalar_jet as jet

x = 0.3
inner = lambda v: jet.directional(lambda xs: jet.tan(xs[0]), [v], [1.0])[1]
_, d2 = jet.directional(lambda xs: inner(xs[0]), [x], [1.0])
print("tan''(0.3) by nesting :", d2)
print("tan''(0.3) closed form:", 2 * math.tan(x) / math.cos(x) ** 2)

# the smooth norm pieces used by the x-stage stay finite at the origin
for rho in [0.0, 1e-12, 0.25]:
    print(f"rho={rho:<8g} tanhc_sq={jet.tanhc_sq(rho, 1.0):.15f}  sinh_sq_norm={jet.sinh_sq_norm(rho, 1.0):.3e}")

# a Jacobian in one call
val, J = jet.jacobian(lambda v: [v[0] * v[1], jet.sin(v[0])], [2.0, 3.0])
print("values", val, "jacobian", J)
