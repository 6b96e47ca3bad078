import json
from pathlib import Path

import numpy as np
import pytest

from pathattr import models

FIXTURES = Path(__file__).parent / "fixtures"


def random_model(arch="mlp", shape=(6, 6, 2), classes=3, seed=0, activation="softplus", **kw):
    """Toy model with random weights and nonzero biases."""
    w = models.init_weights(arch, shape, classes, seed=seed, activation=activation, **kw)
    rng = np.random.default_rng(seed + 1000)
    for layer in w.layers:
        layer["b"] = rng.normal(0.0, 0.3, size=layer["b"].shape)
    return models.ToyModel(w)


def small_cnn(seed=0, shape=(8, 8, 2), classes=3, activation="softplus"):
    return random_model("tiny-cnn", shape, classes, seed, activation, filters=3, kernel=3, pool=2)


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def study_weights():
    return models.load_weights(FIXTURES / "study_cnn.json")


@pytest.fixture(scope="session")
def study_model(study_weights):
    return models.ToyModel(study_weights)


@pytest.fixture(scope="session")
def witness():
    return json.loads((FIXTURES / "linearity_witness.json").read_text())


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def record(number, title, ok, detail=""):
    ACCEPTANCE[number] = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    print(ACCEPTANCE[number])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
