import numpy as np
import pytest

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


class ZeroPotential:
    """F = 0: isolates the gradient part of the energies."""

    def F(self, s):
        return 0.0 * np.asarray(s, dtype=float)

    dF = d2F = d3F = d4F = F

    def inf_F(self):
        return 0.0


class ShiftedWell:
    """Double well written without the closed-form helpers, to reach the generic branches."""

    def __init__(self, q=1.0, r=1.0):
        self.q, self.r = q, r

    def F(self, s):
        return 0.25 * self.q * s**4 - 0.5 * self.r * s**2

    def dF(self, s):
        return self.q * s**3 - self.r * s

    def d2F(self, s):
        return 3.0 * self.q * s**2 - self.r

    def d3F(self, s):
        return 6.0 * self.q * s

    def d4F(self, s):
        return 6.0 * self.q + 0.0 * s

    def inf_F(self):
        return -self.r**2 / (4.0 * self.q)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
