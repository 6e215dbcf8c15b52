import numpy as np
import pytest

from lusin.catalog import catalog_map, compactified, space
from lusin.config import settings


@pytest.fixture
def half_line():
    return compactified("half-line")


@pytest.fixture
def real_line():
    return compactified("real-line")


@pytest.fixture
def two_ray():
    return compactified("two-ray")


@pytest.fixture
def squared_line():
    return space("squared-line")


@pytest.fixture
def lollipop():
    return catalog_map("lollipop")


@pytest.fixture
def figure_eight():
    return catalog_map("figure-eight")


@pytest.fixture
def spiral():
    return catalog_map("spiral-lollipop")


@pytest.fixture
def identity():
    return catalog_map("identity")


@pytest.fixture
def quick_settings(monkeypatch):
    """Shorter sequences and fewer certificate runs for end-to-end tests."""
    monkeypatch.setattr(settings, "sequence_length", 4000)
    monkeypatch.setattr(settings, "certificate_sequences", 10)
    monkeypatch.setattr(settings, "certificate_length", 4000)
    monkeypatch.setattr(settings, "axiom_triples", 2000)
    return settings


def line_points(values) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(-1, 1)
