import numpy as np
import pytest

from dadmms.graph import build_topology
from dadmms.problems import LinRegProblem, generate_linreg, generate_logreg


@pytest.fixture
def ring5():
    return build_topology("ring_cyclic", 5)


@pytest.fixture
def complete5():
    return build_topology("fully_connected", 5)


@pytest.fixture
def noedge5():
    return build_topology("no_edge", 5)


@pytest.fixture
def linreg5():
    return generate_linreg(d=2, xi=4.0, lambda_prior=10.0, n_agents=5, n_per_agent=50, seed=0)


@pytest.fixture
def logreg5():
    return generate_logreg(d=2, lambda_prior=10.0, n_agents=5, n_per_agent=50, seed=0)


@pytest.fixture
def small_linreg():
    return generate_linreg(d=2, xi=4.0, lambda_prior=10.0, n_agents=5, n_per_agent=10, seed=1)


@pytest.fixture
def isotropic_linreg() -> LinRegProblem:
    """Every agent holds H_i = 3 I + I/(lambda N), so tau_f = 1 and m_f is just above 3."""
    xi = 4.0
    features = [np.sqrt(3.0) * xi * np.eye(2) for _ in range(5)]
    targets = [np.array([1.0, -1.0]) * (i + 1) for i in range(5)]
    return LinRegProblem(d=2, xi=xi, lambda_prior=10.0, features=features, targets=targets)


@pytest.fixture
def write_toml(tmp_path):
    def _write(text: str, name: str = "experiment.toml"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
