import numpy as np
import pytest
from hypothesis import settings

from nodallab import DomainSpec, build_grid, solve_least_energy_nodal
from nodallab import cli

settings.register_profile("suite", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("suite")

LADDER = (3.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0)


@pytest.fixture(scope="session")
def disk129():
    return build_grid(DomainSpec.unit_disk(), 129)


@pytest.fixture(scope="session")
def disk257():
    return build_grid(DomainSpec.unit_disk(), 257)


@pytest.fixture(scope="session")
def rect129():
    return build_grid(DomainSpec.rectangle(1.0, 1.0), 129)


@pytest.fixture(scope="session")
def sol_p3_257(disk257):
    return solve_least_energy_nodal(disk257, 3.0)


@pytest.fixture(scope="session")
def ladder_report():
    """The full acceptance run: unit disk, n=513, ladder 3..16."""
    config = cli.ExperimentConfig.from_dict(
        {
            "domain": {"kind": "unit_disk"},
            "n": 513,
            "p_ladder": list(LADDER),
            "output_dir": "acceptance-out",
        }
    )
    return cli.run_experiment(config)


def rng_field(grid, seed, smooth=True):
    """Deterministic pseudo-random interior field, optionally smoothed."""
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(grid.num_interior)
    if smooth:
        img = grid.as_image(vals, fill=0.0)
        for _ in range(2):
            img = 0.25 * img + 0.1875 * (
                np.roll(img, 1, 0) + np.roll(img, -1, 0) + np.roll(img, 1, 1) + np.roll(img, -1, 1)
            )
        vals = img[grid.mask]
    return vals
