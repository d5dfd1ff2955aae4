"""Shared trained models; each is built once per session and reused by the bench and acceptance tests."""

import pytest

from anchordet.bench import find_cell, run_ablation
from anchordet.detector import DetectorConfig, generate_scenes, train

TOY_STEPS = 2000
TOY_SEED = 0


@pytest.fixture(scope="session")
def toy_scenes():
    return generate_scenes(TOY_SEED, 16, max_objects=3)


@pytest.fixture(scope="session")
def ablation(toy_scenes):
    return run_ablation(DetectorConfig.toy(), toy_scenes, TOY_STEPS, seed=TOY_SEED, keep_models=True)


@pytest.fixture(scope="session")
def toy_run(ablation):
    """The default toy detector: learned anchors, two patterns, RCDA."""
    return find_cell(ablation, query="anchor", patterns=2, attention="rcda", anchors="learned").train_result


@pytest.fixture(scope="session")
def toy_run_twin(toy_scenes):
    return train(DetectorConfig.toy(), toy_scenes, TOY_STEPS, seed=TOY_SEED)


@pytest.fixture(scope="session")
def bimodal_scenes():
    return generate_scenes(TOY_SEED, 16, max_objects=3, size_mode="bimodal")


@pytest.fixture(scope="session")
def bimodal_run(bimodal_scenes):
    return train(DetectorConfig.toy(), bimodal_scenes, TOY_STEPS, seed=TOY_SEED)


def tiny_model():
    """A briefly trained small detector for fast plumbing tests."""
    cfg = DetectorConfig.toy(enc_layers=1, dec_layers=1, height=8, width=8)
    scenes = generate_scenes(1, 3, height=8, width=8)
    return train(cfg, scenes, 3, seed=1).model, scenes


_criteria: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" in report.nodeid and (report.when == "call" or report.failed):
        name = report.nodeid.split("::")[-1][len("test_"):]
        _criteria[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for name in sorted(_criteria):
            terminalreporter.write_line(f"{_criteria[name]}  {name}")
