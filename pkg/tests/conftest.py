import numpy as np
import pytest

from ddlqg.system import CostWeights, ExperimentInputSpec, LinearSystem, generate_open_loop_dataset

EXAMPLE_A = [[0.7, 1.2], [0.0, 0.4]]


def make_example_system(**changes):
    base = dict(A=EXAMPLE_A, B=[[0.0], [1.0]], C=[[1.0, 0.0]], Q_w=2 * np.eye(2), R_v=[[1.0]],
                Sigma0=np.eye(2))
    base.update(changes)
    return LinearSystem(**base)


@pytest.fixture(scope="session")
def example_system():
    return make_example_system()


@pytest.fixture(scope="session")
def noise_free_system():
    return make_example_system(Q_w=np.zeros((2, 2)))


@pytest.fixture(scope="session")
def example_weights():
    return CostWeights(Q_x=5 * np.eye(2), R_u=[[1.0]])


@pytest.fixture(scope="session")
def example_dataset_1e4(example_system):
    return generate_open_loop_dataset(example_system, ExperimentInputSpec(np.eye(1), 50, 10_000, 7))


@pytest.fixture(scope="session")
def noise_free_dataset(noise_free_system):
    return generate_open_loop_dataset(noise_free_system,
                                      ExperimentInputSpec(np.eye(1), 50, 400, 3))


ACCEPTANCE_LINES = {}


@pytest.fixture
def record_criterion():
    """Record the one-line verdict for an acceptance criterion."""

    def record(key, passed, detail):
        ACCEPTANCE_LINES[key] = f"{key}: {'PASS' if passed else 'FAIL'} ({detail})"
        print(ACCEPTANCE_LINES[key])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (len(k), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
