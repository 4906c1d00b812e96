import numpy as np
import pytest

from deepmotion.dataset import AgentTrack, ObstacleMap, TrajectoryDataset
from deepmotion.synthetic import make_crowd

_acceptance: dict[str, str] = {}


def pytest_runtest_makereport(item, call):
    if call.when != "call" or item.module.__name__.split(".")[-1] != "test_acceptance":
        return
    marker = item.get_closest_marker("criterion")
    label = marker.args[0] if marker else item.name
    failed = call.excinfo is not None
    if failed or label not in _acceptance:
        _acceptance[label] = "FAIL" if failed else "PASS"


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion label")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in _acceptance.items():
        terminalreporter.write_line(f"[{outcome}] {label}")


@pytest.fixture
def crowd():
    return make_crowd(n_agents=9, seed=3)


@pytest.fixture
def line_dataset():
    """Two walkers on straight lines, an empty map."""
    a = AgentTrack(1, np.arange(6) * 0.4, np.column_stack([np.arange(6) * 0.4, np.zeros(6)]))
    b = AgentTrack(2, np.arange(6) * 0.4, np.column_stack([5 - np.arange(6) * 0.4, np.full(6, 3.0)]))
    return TrajectoryDataset([a, b], ObstacleMap(), 0.4)


TOY_NETWORK = dict(conv_layers=2, filters=4, lstm_units=4, dense_units=4)


@pytest.fixture
def make_run(tmp_path):
    """Write a dataset plus a complete run config; returns the config path.

    ``sections`` maps section name to field overrides.
    """
    from dataclasses import replace

    from deepmotion.config import RunConfig, dump_config

    def build(dataset=None, name="run", **sections):
        ds = dataset if dataset is not None else make_crowd(6, seed=11)
        ds_path = tmp_path / f"{name}.dataset.json"
        ds.save(ds_path)
        cfg = RunConfig()
        cfg.data.dataset = ds_path.name
        for section, values in sections.items():
            setattr(cfg, section, replace(getattr(cfg, section), **values))
        path = tmp_path / f"{name}.toml"
        path.write_text(dump_config(cfg))
        return path

    return build
