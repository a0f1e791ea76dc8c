"""Trajectory tracking for wheeled vehicles with nonholonomic constraints.

Modules:

- :mod:`nhtrack.scalar_jet`: nested forward-mode dual numbers over generic scalars
- :mod:`nhtrack.models`: sled, automobile and truck-with-trailers kinematics
- :mod:`nhtrack.maneuver`: maneuverability test, chained-form transforms,
  reference generation
- :mod:`nhtrack.backstepping`: recursive synthesis of the tracking feedback
- :mod:`nhtrack.simulator`: fixed-step closed-loop runs and diagnostics
- :mod:`nhtrack.cli`: scenario files and the ``nhtrack`` command
"""

from .backstepping import ControlLaw, FeedbackLaw, Gains, Psi, control_law, phi
from .maneuver import (ReferenceGenerator, admissibility_report, build_transform,
                       check_maneuverability, maneuvering_operator)
from .models import (WheeledModel, automobile, automobile_front_axle, axle_chain,
                     chaplygin_sled, constraint_residuals, rhs, truck_with_trailers)
from .simulator import Scenario, Trace, diagnostics, integrate_closed_loop
from .trajectories import Circle, LaneChange, Line, Polynomial

__version__ = "0.1.0"

__all__ = [
    "ControlLaw", "FeedbackLaw", "Gains", "Psi", "control_law", "phi",
    "ReferenceGenerator", "admissibility_report", "build_transform",
    "check_maneuverability", "maneuvering_operator",
    "WheeledModel", "automobile", "automobile_front_axle", "axle_chain",
    "chaplygin_sled", "constraint_residuals", "rhs", "truck_with_trailers",
    "Scenario", "Trace", "diagnostics", "integrate_closed_loop",
    "Circle", "LaneChange", "Line", "Polynomial",
]
