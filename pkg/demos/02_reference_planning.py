"""
Feedforward for an automobile on a circle
=========================================

The maneuvering operator lifts a planar curve to states and inputs.  On a
circle of radius R the steering angle settles at arctan(1/R) for a unit
wheelbase, and reversing flips the sign of the speed only.
"""

import math

import numpy as np

from nhtrack.maneuver import maneuvering_operator
from nhtrack.models import automobile, rhs
from nhtrack.trajectories import Circle

R = 5.0
circle = Circle((0.0, 0.0), R, 0.2, 0.0)

for direction in (1, -1):
    ref = maneuvering_operator(automobile(), (0,), circle, direction)
    print(f"direction {direction:+d}")
    for t in [0.0, 5.0, 10.0]:
        p = ref.at(t)
        print(f"  t={t:4.1f}  heading={p.qD[2]: .6f}  steer={p.qD[3]:.12f}  u={np.round(p.uD, 12)}")
    # the reference is feasible: its derivative matches the model
    h, t = 1e-4, 3.0
    qd = (np.array(ref.at(t + h).qD) - np.array(ref.at(t - h).qD)) / (2 * h)
    p = ref.at(t)
    print("  feasibility residual", np.max(np.abs(qd - np.array(rhs(automobile(), p.qD, p.uD)))))

print("arctan(1/R) =", math.atan(1 / R))
