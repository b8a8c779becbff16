"""Global fixtures and pytest configuration.

- Provides small hand-built adoption datasets and learner settings
- Exposes factories writing event logs and YAML configs into ``tmp_path``
- Exposes a shared CliRunner for CLI tests
"""

from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pytest
import yaml
from typer.testing import CliRunner

from src.adoption.dataset import AdoptionEvent, UserMeta, build_dataset
from src.adoption.synthetic import generate_synthetic
from src.services.config_schema import HyperParams, SurfingParams, SyntheticParams

EVENTS = [
    ("alice", "i1", 10, 1),
    ("alice", "i2", 11, 1),
    ("bob", "i2", 12, 1),
    ("bob", "i3", 13, 1),
    ("carol", "i1", 14, 1),
    ("carol", "i4", 15, 0),
]
META = [("alice", 30, 10), ("bob", 5, 2), ("carol", 100, 0)]
EXPOSURES = [("alice", "i3"), ("bob", "i1"), ("carol", "i2"), ("carol", "i3")]

# Small but learnable synthetic regime for CLI and service tests.
SMALL_SIM: Dict[str, Any] = {
    "n_users": 30,
    "n_items": 40,
    "sim_K": 3,
    "exposure_density": 0.3,
}


@pytest.fixture
def tiny_dataset():
    """Three users, four items, explicit exposure log."""
    return build_dataset(
        [AdoptionEvent(u, j, t, bool(x)) for u, j, t, x in EVENTS],
        [UserMeta(u, f, p) for u, f, p in META],
        EXPOSURES,
    )


@pytest.fixture
def hyper():
    """Learner settings sized for unit tests."""
    return HyperParams(
        K=3, lambda_u=0.1, lambda_theta=0.1, lambda_eta=1.0, max_iters=50
    )


@pytest.fixture
def surfing():
    return SurfingParams()


@pytest.fixture(scope="session")
def synthetic_small():
    """(dataset, truth) drawn from a 30 x 40 generator run."""
    params = SyntheticParams(n_users=30, n_items=40, K=3, exposure_density=0.3)
    return generate_synthetic(params, SurfingParams(), seed=7)


@pytest.fixture
def write_logs(tmp_path):
    """Write event, metadata and exposure logs; returns their paths."""

    def _factory(
        events=EVENTS, meta=META, exposures=EXPOSURES, directory: Path = tmp_path
    ) -> Dict[str, Path]:
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "events": directory / "events.tsv",
            "meta": directory / "meta.tsv",
            "exposures": directory / "exposures.tsv",
        }
        for key, rows in (("events", events), ("meta", meta), ("exposures", exposures)):
            with paths[key].open("w", encoding="utf-8") as f:
                f.write(f"# {key}\n")
                for row in rows:
                    f.write("\t".join(str(x) for x in row) + "\n")
        return paths

    return _factory


@pytest.fixture
def config_factory(tmp_path):
    """Write a flat YAML config; ``seed`` and ``out_dir`` default to test values.

    Example usage:
        path = config_factory({"K": 2, "events": "events.tsv"})
    """

    def _factory(
        values: Optional[Dict[str, Any]] = None, name: str = "vip_config.yaml"
    ) -> str:
        raw: Dict[str, Any] = {"seed": 11, "out_dir": str(tmp_path / "out")}
        raw.update(values or {})
        path = tmp_path / name
        with path.open("w", encoding="utf-8") as f:
            yaml.safe_dump(raw, f)
        return str(path)

    return _factory


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cli():
    """Shared CliRunner for all CLI tests."""
    return CliRunner()
