import numpy as np
import pytest

from fuzzydistill.envlab import ACTION_NAMES, FEATURE_NAMES, EnvConfig, generate_dataset
from fuzzydistill.model import FcsModel, MembershipFamily
from fuzzydistill.training import TrainConfig, distill


@pytest.fixture(scope="session")
def lander_data():
    """The 5000-pair synthetic-teacher dataset (seed 42) used by the directional checks."""
    return generate_dataset(EnvConfig(), 5000, 42)


@pytest.fixture(scope="session")
def tri16(lander_data):
    model, report = distill(lander_data, TrainConfig(n_rules=16, family=MembershipFamily.triangular(), seed=42),
                            FEATURE_NAMES, ACTION_NAMES)
    return model, report


def random_model(rng, n_rules=4, d=3, m=2, family=None, spread_range=(0.3, 1.5)):
    return FcsModel(
        rng.normal(size=(n_rules, d)),
        rng.uniform(*spread_range, size=(n_rules, d)),
        rng.normal(size=(n_rules, m, d)),
        rng.normal(size=(n_rules, m)),
        family=family or MembershipFamily.gaussian(),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance summary ------------------------------------------------------


def pytest_configure(config):
    config._acceptance_lines = {}


@pytest.fixture
def record_criterion(request):
    """Call with (number, passed, detail); lines are printed in the terminal summary."""

    def record(number, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        request.config._acceptance_lines[number] = f"criterion {number:2d}: {status}  {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
