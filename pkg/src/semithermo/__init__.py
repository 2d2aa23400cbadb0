"""Numerical thermodynamic formalism for finitely generated rational semigroups."""

from .errors import *  # noqa: F401,F403
from .rational import INF, RationalMap, chordal, critical_points, fixed_points, preimages
from .skew import SemigroupSpec, compose_word, enumerate_tree, semihyperbolic_family
from .thermo import bowen_root, estimate_pressure, pressure_curve
from .multifractal import hd_of_measure, spectrum_table, temperature
from .geometry import box_dimension, osc_check, render_fiber, render_global, shrink_rate
from .measures import (
    birkhoff_diagnostics,
    conformal_atoms,
    sample_backward_orbit,
    transfer_operator_check,
)

__version__ = "0.1.0"
