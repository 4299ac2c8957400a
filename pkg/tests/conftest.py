import os
from fractions import Fraction

from hypothesis import HealthCheck, settings, strategies as st

settings.register_profile(
    "default",
    deadline=None,
    max_examples=int(os.environ.get("HYPOTHESIS_EXAMPLES", "150")),
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@st.composite
def fractions_in(draw, lo, hi, max_den=64):
    """A Fraction in [lo, hi] with denominator at most max_den."""
    lo, hi = Fraction(lo), Fraction(hi)
    q = draw(st.integers(1, max_den))
    a = -((-lo.numerator * q) // lo.denominator)  # ceil(lo * q)
    b = (hi.numerator * q) // hi.denominator  # floor(hi * q)
    if a > b:
        return lo
    return Fraction(draw(st.integers(a, b)), q)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
