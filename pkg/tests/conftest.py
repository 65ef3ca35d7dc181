import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_sym(rng, d, order, scale=1.0):
    from raretail.symtensor import symmetrize

    return symmetrize(scale * rng.standard_normal((d,) * order))


def random_spd(rng, d, floor=0.5):
    a = rng.standard_normal((d, d))
    return a @ a.T / d + floor * np.eye(d)


def random_rotation(rng, m):
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
