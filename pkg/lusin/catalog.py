"""Built-in spaces and maps, written in the JSON descriptor schema and built by the same loader.

Descriptor keys:
    space        name; a map naming a catalog space inherits its domain, x0 and exhaustion
    domain       "rays" (branch i on the ray from (0, 2i) along +x; dimension 1 for one branch)
                 or "line" (two opposite rays from 0)
    distance     "euclidean" (default) or "sqeuclidean"
    x0           base point coordinates
    branches     [{form, coefficients, span, law}], form/coefficients optional for bare spaces
    exhaustion   {"intervals": "[0,n]" | "[0,k*n]", or "balls": "k*n", "radii": "c/n" | "c/n^p" | "c*q^n", "n_max"}
    x1           {"points": [...], "branches": [...]} analytic discontinuity set
    escape_phases  per-branch phase counts for escaping sequences
"""
import json
import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from lusin.compactification import Balls, CompactifiedSpace, Exhaustion, RayIntervals
from lusin.errors import ConfigError, DescriptorError
from lusin.forms import make_form
from lusin.maps import KnownX1, MapInstance
from lusin.metric import Point, Ray, SpaceDescriptor, euclidean, squared_euclidean


logger = logging.getLogger(__name__)

BRANCH_GAP = 2.0
DEFAULT_EXHAUSTION = {"intervals": "[0,n]", "radii": "1/n", "n_max": 20000}

SPACE_CATALOG = {
    "half-line": {
        "domain": "rays",
        "x0": [0.0],
        "branches": [{"span": 500, "law": "log"}],
        "exhaustion": DEFAULT_EXHAUSTION,
    },
    "real-line": {
        "domain": "line",
        "x0": [0.0],
        "branches": [{"span": 200, "law": "rational"}, {"span": 200, "law": "rational"}],
        "exhaustion": DEFAULT_EXHAUSTION,
    },
    "two-ray": {
        "domain": "rays",
        "x0": [0.0, 0.0],
        "branches": [{"span": 90, "law": "uniform"}, {"span": 500, "law": "rational"}],
        "exhaustion": DEFAULT_EXHAUSTION,
    },
    # (x - y)^2 is not a metric; kept as the failing verification fixture
    "squared-line": {
        "domain": "rays",
        "distance": "sqeuclidean",
        "branches": [{"span": 10, "law": "uniform"}],
    },
}

MAP_CATALOG = {
    "identity": {
        "space": "real-line",
        "branches": [
            {"form": "affine", "coefficients": [0.0, 1.0]},
            {"form": "affine", "coefficients": [0.0, -1.0]},
        ],
        "x1": {"points": []},
    },
    "lollipop": {
        "space": "half-line",
        "branches": [{"form": "rational_circle", "coefficients": [0.0, 0.0, 1.0, 1.0, 0.0]}],
        "x1": {"points": [[0.0]]},
    },
    "figure-eight": {
        "space": "real-line",
        "branches": [
            {"form": "figure_eight", "coefficients": [1.0]},
            {"form": "figure_eight", "coefficients": [-1.0]},
        ],
        "x1": {"points": [[0.0]]},
    },
    "spiral-lollipop": {
        "space": "two-ray",
        "branches": [
            {"form": "rational_spiral", "coefficients": [0.0, 0.0, 1.0, 1.0, 1.0, 0.0]},
            {"form": "rational_circle", "coefficients": [0.0, 0.0, 1.0, 1.0, 0.0]},
        ],
        "x1": {"branches": [1]},
        "escape_phases": [1024, 8],
    },
}

_NUMBER = r"([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)"
_INTERVAL = re.compile(rf"^\[\s*0\s*,\s*(?:{_NUMBER}\s*\*\s*)?n\s*\]$")
_BALL = re.compile(rf"^(?:{_NUMBER}\s*\*\s*)?n$")
_HARMONIC = re.compile(rf"^{_NUMBER}\s*/\s*n(?:\s*\^\s*{_NUMBER})?$")
_GEOMETRIC = re.compile(rf"^{_NUMBER}\s*\*\s*{_NUMBER}\s*\^\s*n$")


@dataclass(frozen=True)
class Target:
    """A resolved run target: a space, its compactification when declared, and a map when declared."""

    name: str
    space: SpaceDescriptor
    cspace: CompactifiedSpace | None = None
    fmap: MapInstance | None = None


def _scale(match: re.Match, group: int) -> float:
    return float(match.group(group)) if match.group(group) else 1.0


def parse_exhaustion(payload: dict, x0: np.ndarray) -> Exhaustion:
    try:
        n_max = int(payload["n_max"])
        radii_expr = str(payload["radii"]).replace(" ", "")
    except (KeyError, TypeError, ValueError) as exc:
        raise DescriptorError(f"exhaustion needs radii and n_max: {exc}") from None
    if n_max < 2:
        raise DescriptorError("exhaustion n_max must be at least 2")
    n = np.arange(1, n_max + 1, dtype=float)

    if "intervals" in payload:
        match = _INTERVAL.match(str(payload["intervals"]).replace(" ", ""))
        if not match:
            raise DescriptorError(f"unsupported interval expression {payload['intervals']!r}")
        regions = RayIntervals(_scale(match, 1) * n)
    elif "balls" in payload:
        match = _BALL.match(str(payload["balls"]).replace(" ", ""))
        if not match:
            raise DescriptorError(f"unsupported ball expression {payload['balls']!r}")
        regions = Balls(np.repeat(x0.reshape(1, -1), n_max, axis=0), _scale(match, 1) * n)
    else:
        raise DescriptorError("exhaustion needs 'intervals' or 'balls'")

    if match := _HARMONIC.match(radii_expr):
        power = float(match.group(2)) if match.group(2) else 1.0
        radii = float(match.group(1)) / n**power
    elif match := _GEOMETRIC.match(radii_expr):
        radii = float(match.group(1)) * float(match.group(2)) ** n
    else:
        raise DescriptorError(f"unsupported radius expression {payload['radii']!r}")
    return Exhaustion(regions=regions, radii=radii, n_max=n_max)


def _build_space(name: str, payload: dict) -> SpaceDescriptor:
    branches = payload.get("branches") or []
    if not branches:
        raise DescriptorError(f"{name}: descriptor declares no branches")
    domain = payload.get("domain", "rays")
    rays = []
    if domain == "line":
        if len(branches) != 2:
            raise DescriptorError(f"{name}: a line domain has exactly two branches")
        for direction, entry in zip((1.0, -1.0), branches):
            rays.append(Ray((0.0,), (direction,), float(entry.get("span", 100.0)), entry.get("law", "log")))
        separation = None
    elif domain == "rays":
        for idx, entry in enumerate(branches):
            origin, direction = ((0.0,), (1.0,)) if len(branches) == 1 else ((0.0, BRANCH_GAP * idx), (1.0, 0.0))
            rays.append(Ray(origin, direction, float(entry.get("span", 100.0)), entry.get("law", "log")))
        separation = BRANCH_GAP if len(branches) > 1 else None
    else:
        raise DescriptorError(f"{name}: unknown domain {domain!r}")
    distances = {"euclidean": euclidean, "sqeuclidean": squared_euclidean}
    try:
        distance = distances[payload.get("distance", "euclidean")]
    except KeyError:
        raise DescriptorError(f"{name}: unknown distance {payload['distance']!r}") from None
    return SpaceDescriptor(
        name=name,
        dimension=rays[0].dimension,
        branches=tuple(rays),
        distance=distance,
        branch_separation=separation,
    )


def _inherit(payload: dict) -> dict:
    parent_name = payload.get("space")
    if parent_name not in SPACE_CATALOG or "domain" in payload:
        return payload
    parent = SPACE_CATALOG[parent_name]
    merged = {**parent, **{key: value for key, value in payload.items() if key != "branches"}}
    own = payload.get("branches") or []
    if own and len(own) != len(parent["branches"]):
        raise DescriptorError(f"{parent_name} has {len(parent['branches'])} branches, descriptor gives {len(own)}")
    merged["branches"] = [{**base, **extra} for base, extra in zip(parent["branches"], own)] or parent["branches"]
    return merged


def load_descriptor(payload: dict, name: str | None = None) -> Target:
    if not isinstance(payload, dict):
        raise DescriptorError("descriptor must be a JSON object")
    payload = _inherit(payload)
    name = name or payload.get("space") or "custom"
    space = _build_space(payload.get("space") or name, payload)

    cspace = None
    if "exhaustion" in payload:
        if "x0" not in payload:
            raise DescriptorError(f"{name}: an exhaustion needs a base point x0")
        x0 = np.asarray(payload["x0"], dtype=float).ravel()
        exhaustion = parse_exhaustion(payload["exhaustion"], x0)
        cspace = CompactifiedSpace(base=space, x0=Point(tuple(x0)), exhaustion=exhaustion)

    fmap = None
    forms = [entry for entry in payload["branches"] if "form" in entry]
    if forms:
        if len(forms) != len(payload["branches"]):
            raise DescriptorError(f"{name}: every branch needs a form once one does")
        known = payload.get("x1")
        fmap = MapInstance(
            name=name,
            domain=space,
            forms=tuple(make_form(entry["form"], entry.get("coefficients", [])) for entry in forms),
            known_x1=None
            if known is None
            else KnownX1(
                points=tuple(tuple(float(c) for c in np.atleast_1d(p)) for p in known.get("points", [])),
                branches=tuple(int(b) for b in known.get("branches", [])),
            ),
            escape_phases=tuple(payload["escape_phases"]) if "escape_phases" in payload else None,
        )
    return Target(name=name, space=space, cspace=cspace, fmap=fmap)


def load_descriptor_file(path: str | Path) -> Target:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read descriptor {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DescriptorError(f"{path} is not valid JSON: {exc}") from None
    return load_descriptor(payload, name=Path(path).stem)


@lru_cache(maxsize=None)
def _catalog_target(identifier: str) -> Target:
    if identifier in MAP_CATALOG:
        return load_descriptor(MAP_CATALOG[identifier], name=identifier)
    return load_descriptor(SPACE_CATALOG[identifier], name=identifier)


def resolve(identifier: str) -> Target:
    """Catalog name or path to a JSON descriptor."""
    if identifier in MAP_CATALOG or identifier in SPACE_CATALOG:
        return _catalog_target(identifier)
    if identifier.endswith(".json") or Path(identifier).is_file():
        logger.debug("loading descriptor from %s", identifier)
        return load_descriptor_file(identifier)
    known = sorted(SPACE_CATALOG) + sorted(MAP_CATALOG)
    raise ConfigError(f"unknown space or map {identifier!r}; known: {', '.join(known)}")


def space(name: str) -> SpaceDescriptor:
    return resolve(name).space


def compactified(name: str) -> CompactifiedSpace:
    target = resolve(name)
    if target.cspace is None:
        raise ConfigError(f"{name} declares no exhaustion")
    return target.cspace


def catalog_map(name: str) -> MapInstance:
    target = resolve(name)
    if target.fmap is None:
        raise ConfigError(f"{name} is a space, not a map")
    return target.fmap
