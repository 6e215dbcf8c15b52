import json

import numpy as np
import pytest

from lusin.catalog import (
    MAP_CATALOG,
    SPACE_CATALOG,
    load_descriptor,
    load_descriptor_file,
    parse_exhaustion,
    resolve,
)
from lusin.compactification import Balls, RayIntervals, delta
from lusin.errors import ConfigError, DescriptorError


def test_every_catalog_entry_resolves():
    for name in list(SPACE_CATALOG) + list(MAP_CATALOG):
        target = resolve(name)
        assert target.name == name
    assert resolve("lollipop") is resolve("lollipop")


def test_squared_line_has_no_compactification():
    target = resolve("squared-line")
    assert target.cspace is None
    assert target.fmap is None


def test_maps_inherit_their_space():
    target = resolve("spiral-lollipop")
    assert target.space.name == "two-ray"
    assert target.cspace is not None
    assert len(target.fmap.forms) == 2
    assert target.fmap.escape_phases == (1024, 8)


def test_unknown_identifier():
    with pytest.raises(ConfigError):
        resolve("klein-bottle")


@pytest.mark.parametrize(
    "payload, regions, r1, r3",
    [
        ({"intervals": "[0,n]", "radii": "1/n", "n_max": 2000}, RayIntervals, 1.0, 1 / 3),
        ({"intervals": "[0, 2*n]", "radii": "1/n^2", "n_max": 2000}, RayIntervals, 1.0, 1 / 9),
        ({"balls": "n", "radii": "0.5*0.5^n", "n_max": 40}, Balls, 0.25, 0.0625),
    ],
)
def test_parse_exhaustion(payload, regions, r1, r3):
    exhaustion = parse_exhaustion(payload, np.zeros(1))
    assert isinstance(exhaustion.regions, regions)
    assert exhaustion.radii[0] == pytest.approx(r1)
    assert exhaustion.radii[2] == pytest.approx(r3)
    assert exhaustion.n_max == payload["n_max"]


@pytest.mark.parametrize(
    "payload",
    [
        {"intervals": "[1,n]", "radii": "1/n", "n_max": 10},
        {"intervals": "[0,n]", "radii": "log(n)", "n_max": 10},
        {"intervals": "[0,n]", "radii": "1/n"},
        {"intervals": "[0,n]", "radii": "1/n", "n_max": 1},
        {"radii": "1/n", "n_max": 10},
    ],
)
def test_bad_exhaustions(payload):
    with pytest.raises(DescriptorError):
        parse_exhaustion(payload, np.zeros(1))


def test_custom_descriptor_with_ball_exhaustion():
    target = load_descriptor(
        {
            "space": "ball-line",
            "domain": "line",
            "x0": [0.0],
            "branches": [{"span": 50}, {"span": 50}],
            "exhaustion": {"balls": "n", "radii": "1/n", "n_max": 5000},
        }
    )
    assert target.name == "ball-line"
    assert delta(target.cspace, [2.5], [-10.2]) == pytest.approx(1 / 3 + 1 / 11)


def test_custom_map_over_a_catalog_space(tmp_path):
    path = tmp_path / "slow-lollipop.json"
    path.write_text(
        json.dumps(
            {
                "space": "half-line",
                "branches": [{"form": "rational_circle", "coefficients": [0.0, 0.0, 2.0, 1.0, 0.25]}],
                "x1": {"points": [[0.0]]},
            }
        )
    )
    target = resolve(str(path))
    assert target.name == "slow-lollipop"
    np.testing.assert_allclose(target.fmap.forward([[0.0]]), [[0.0, 2.0]], atol=1e-12)
    assert target.fmap.known_x1.is_singleton


@pytest.mark.parametrize(
    "payload",
    [
        [],
        {"domain": "rays"},
        {"domain": "torus", "branches": [{}]},
        {"domain": "line", "branches": [{}]},
        {"domain": "rays", "distance": "manhattan", "branches": [{}]},
        {"domain": "rays", "branches": [{}], "exhaustion": {"intervals": "[0,n]", "radii": "1/n", "n_max": 2000}},
        {"domain": "rays", "x0": [0.0], "branches": [{"form": "affine", "coefficients": [0, 1]}, {}]},
        {"space": "half-line", "branches": [{"form": "hyperbola"}]},
        {"space": "real-line", "branches": [{"form": "affine", "coefficients": [0, 1]}]},
    ],
)
def test_malformed_descriptors(payload):
    with pytest.raises(DescriptorError):
        load_descriptor(payload, name="broken")


def test_descriptor_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_descriptor_file(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(DescriptorError):
        resolve(str(bad))
