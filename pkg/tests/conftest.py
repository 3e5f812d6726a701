import numpy as np
import pytest

from pcadr import ConstraintModel, NoiseModel, SimulationSpec, simulate

FLOW_NAMES = ("F1", "F2", "F3", "F4", "F5", "F6")

FLOW_MATRIX = np.array(
    [
        [1, 1, -1, 0, 0, 0],
        [0, 0, 1, -1, 0, 0],
        [0, 0, 0, 1, -1, -1],
        [0, -1, 0, 0, 0, 1],
    ],
    dtype=float,
)

FLOW_ERROR_SD = {"F1": 0.1, "F2": 0.08, "F3": 0.15, "F4": 0.2, "F5": 0.18, "F6": 0.1}

#: Seed shared with the shipped presets.
PRESET_SEED = 5


@pytest.fixture(scope="session")
def flow_model():
    return ConstraintModel(FLOW_MATRIX, FLOW_NAMES)


@pytest.fixture(scope="session")
def flow_noise():
    return NoiseModel.from_sd([FLOW_ERROR_SD[v] for v in FLOW_NAMES])


def make_flow_spec(model, seed=PRESET_SEED, n_samples=1000):
    return SimulationSpec(
        model=model,
        independent_names=("F1", "F2"),
        base_values={"F1": 10.0, "F2": 10.0},
        fluctuation_sd={"F1": 1.0, "F2": 2.0},
        error_sd=dict(FLOW_ERROR_SD),
        n_samples=n_samples,
        seed=seed,
    )


@pytest.fixture(scope="session")
def flow_data(flow_model):
    """Preset-seed data set of 1000 samples with truth attached."""
    return simulate(make_flow_spec(flow_model))


def random_full_rank_model(rng, n_constraints, n_variables):
    """Random constraint model with well-separated singular values."""
    while True:
        matrix = rng.normal(size=(n_constraints, n_variables))
        svals = np.linalg.svd(matrix, compute_uv=False)
        if svals[-1] > 1e-3 * svals[0]:
            names = tuple(f"v{i + 1}" for i in range(n_variables))
            return ConstraintModel(matrix, names)


def random_spd_noise(rng, n):
    """Random well-conditioned SPD covariance."""
    basis = rng.normal(size=(n, n))
    sigma = basis @ basis.T + n * np.eye(n)
    return NoiseModel(sigma)
