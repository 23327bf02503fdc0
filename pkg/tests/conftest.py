import numpy as np
import pytest

from sponsornet.model import GenerationConfig, MarketInstance, build_matrices, generate_instance


@pytest.fixture
def single_user():
    """One user with the default parameters: a = b = 30, c = 3, gamma = 2, s = t = 5."""
    inst = MarketInstance.uniform(1)
    return inst, build_matrices(inst)


@pytest.fixture
def two_users():
    inst = MarketInstance.uniform(2)
    return inst, build_matrices(inst)


@pytest.fixture(scope="session")
def default_market():
    inst = generate_instance(GenerationConfig(seed=0))
    return inst, build_matrices(inst)


def small_instance(seed, n=None, **overrides):
    """Random market with 1..6 users, drawn around the default parameters."""
    rng = np.random.default_rng(10_000 + seed)
    if n is None:
        n = int(rng.integers(1, 7))
    cfg = GenerationConfig(n=n, seed=seed, mu_g=float(rng.uniform(0.0, 8.0)), c=float(rng.uniform(0.5, 4.0)))
    inst = generate_instance(GenerationConfig(**{**cfg.__dict__, **overrides}))
    return inst, build_matrices(inst)


_criteria = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for name in report.keywords:
        if name.startswith("criterion_"):
            _criteria[name] = (report.outcome, report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria, key=lambda s: int(s.split("_")[1])):
        outcome, nodeid = _criteria[name]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name.replace('_', ' ')}  ({nodeid.split('::')[-1]})")
