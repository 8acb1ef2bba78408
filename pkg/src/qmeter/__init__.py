"""Monte-Carlo and closed-form checks for a harmonic oscillator metered by a quantum noise field.

The oscillator Hamiltonian is ``H = omega (a*a - (conj(alpha) a + alpha a*))`` and the
apparatus couples through ``Gamma = gamma a*a`` to a field quadrature that, in the
vacuum, is a standard Brownian motion.  Everything the package simulates reduces to
functionals of that Brownian path.
"""

from qmeter.model import (
    ModelParams,
    RegimeReport,
    TimeGrid,
    derived_constants,
    measurement_window,
)
from qmeter.paths import BrownianPath, rescale_path, sample_path
from qmeter.functionals import (
    Ensemble,
    PathFunctionals,
    compute_functionals,
    sample_ensemble,
    z_via_ito_parts,
)

__all__ = [
    "BrownianPath",
    "Ensemble",
    "ModelParams",
    "PathFunctionals",
    "RegimeReport",
    "TimeGrid",
    "compute_functionals",
    "derived_constants",
    "measurement_window",
    "rescale_path",
    "sample_ensemble",
    "sample_path",
    "z_via_ito_parts",
]

__version__ = "0.1.0"
