"""Reference parameter sets for the two characterized cell states.

State (a) is the high state of charge / room temperature condition, state
(b) the low state of charge / cold condition.  Both were obtained by fitting
the generalized Randles model to measured spectra of the same Li-ion cell
and serve as ground truth for synthetic experiments and regression tests.
"""

from __future__ import annotations

from .circuit import ParameterVector
from .exceptions import DomainError

# State (a): SoC 50%, 25 degC.
STATE_A = ParameterVector(
    r_s=1.937e-3,
    q_hf=1.132e7,
    phi_hf=-9.845e-1,
    r_1=2.409e-3,
    q_1=4.715e0,
    phi_1=6.618e-1,
    r_2=3.273e-3,
    q_2=6.419e0,
    phi_2=9.347e-1,
    q_lf=8.585e2,
    phi_lf=5.553e-1,
)

# State (b): SoC 20%, 15 degC.
STATE_B = ParameterVector(
    r_s=2.017e-3,
    q_hf=1.020e7,
    phi_hf=-9.845e-1,
    r_1=9.535e-3,
    q_1=8.307e0,
    phi_1=5.698e-1,
    r_2=2.647e-2,
    q_2=6.497e0,
    phi_2=9.546e-1,
    q_lf=6.250e2,
    phi_lf=5.356e-1,
)

FIXTURES = {
    "state_a": STATE_A,
    "state_b": STATE_B,
}


def get_fixture(name: str) -> ParameterVector:
    try:
        return FIXTURES[name]
    except KeyError:
        known = ", ".join(sorted(FIXTURES))
        raise DomainError(f"unknown fixture {name!r}; known: {known}") from None
