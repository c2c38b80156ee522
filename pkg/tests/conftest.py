import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from yatt import genotype, pipeline, synth

settings.register_profile(
    "repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def small_synth():
    return synth.synthesize(locations=12, years=3, genotypes=30, trials=2, seed=5)


@pytest.fixture(scope="session")
def small_features(small_synth):
    asg = genotype.cluster_genotypes(small_synth.correlation, 5, seed=0)
    return pipeline.prepare(small_synth.records, small_synth.weather, asg)


@pytest.fixture(scope="session")
def small_split(small_features):
    return pipeline.split(small_features, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, line = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {line}")
