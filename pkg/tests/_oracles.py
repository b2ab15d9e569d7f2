"""Independent reference computations used to check the library's results.

The pose oracle integrates cos/sin of the quadratic heading polynomial with
adaptive Gauss-Kronrod quadrature (QUADPACK), an implementation wholly
separate from the panelised fixed-order quadrature inside the library.
"""

import math
import warnings

from scipy.integrate import IntegrationWarning, quad


def integrate_pose(start, kappa0, kappa_rate, length):
    """Endpoint (x, y, theta) of a spiral by adaptive quadrature."""

    def theta(s):
        return start.theta + kappa0 * s + 0.5 * kappa_rate * s * s

    with warnings.catch_warnings():
        # roundoff-level tolerance requests trip QUADPACK's warning; the
        # achieved accuracy is still far beyond what the checks need
        warnings.simplefilter("ignore", IntegrationWarning)
        x, _ = quad(lambda s: math.cos(theta(s)), 0.0, length,
                    epsabs=1e-12, epsrel=1e-12, limit=400)
        y, _ = quad(lambda s: math.sin(theta(s)), 0.0, length,
                    epsabs=1e-12, epsrel=1e-12, limit=400)
    return start.x + x, start.y + y, theta(length)
