"""Shared helpers for the test suite."""

import numpy as np
import pytest

from eisopt import ParameterVector


def random_theta(rng: np.random.Generator) -> ParameterVector:
    """A random valid parameter vector with realistically wide scales.

    Resistances and CPE coefficients are drawn log-uniformly; exponents
    are kept away from their interval edges so finite-difference probes
    stay inside the valid region.
    """
    return ParameterVector.from_array(
        [
            10.0 ** rng.uniform(-3.5, -2.0),   # R_s
            10.0 ** rng.uniform(5.5, 7.5),     # Q_HF
            rng.uniform(-0.99, -0.6),          # phi_HF
            10.0 ** rng.uniform(-3.0, -1.8),   # R_1
            10.0 ** rng.uniform(0.0, 1.2),     # Q_1
            rng.uniform(0.45, 0.95),           # phi_1
            10.0 ** rng.uniform(-2.8, -1.4),   # R_2
            10.0 ** rng.uniform(0.2, 1.3),     # Q_2
            rng.uniform(0.5, 0.98),            # phi_2
            10.0 ** rng.uniform(2.0, 3.5),     # Q_LF
            rng.uniform(0.3, 0.9),             # phi_LF
        ]
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
