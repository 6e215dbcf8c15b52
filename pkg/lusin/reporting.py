"""Run configuration, the verification suites, and report emission and archiving."""
import csv
import hashlib
import io
import json
import logging
import math
import time
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from sqlalchemy import select
from sqlalchemy.orm import Session

from lusin.catalog import Target, resolve
from lusin.compactification import escape_convergence_check, total_boundedness_net
from lusin.config import settings
from lusin.errors import ConfigError, DomainError, OracleError, ResolutionError, ScopeError
from lusin.maps import (
    EscapeSampler,
    PullbackCloud,
    default_radius_schedule,
    discontinuity_set,
    extends_to_infinity,
    image_compactness_check,
    proper_neighborhood_test,
)
from lusin.metric import SequenceClass, cauchy_classify, check_metric_axioms
from lusin.models import RunRecord
from lusin.strata import (
    StratumMetric,
    Stratification,
    boundary_blowup_check,
    certificate_sequences,
    chain_invariants,
    density_proxy,
    homeo_certificate,
    nowhere_density_proxy,
    stratify,
)


logger = logging.getLogger(__name__)

SIGNIFICANT_DIGITS = 12
CSV_COLUMNS = ["suite", "checked", "violations", "max_slack", "wall_ms", "verdict"]
CONSISTENCY_POINTS = 200
SHOWN_VIOLATIONS = 10
APPROACH_CANDIDATES = 64
SEED_SPACE = 2**64


def round_sig(value):
    """Round every float in a nested payload to 12 significant digits; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(key): round_sig(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_sig(item) for item in value]
    if isinstance(value, np.ndarray):
        return round_sig(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{SIGNIFICANT_DIGITS}g}")
    return value


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Literal["verify", "compactify", "stratify", "report"]
    target: str = Field(min_length=1)
    seed: int = Field(ge=0, lt=SEED_SPACE)
    samples: int = Field(ge=10)
    tolerance: float = Field(gt=0)
    epsilons: list[float] = Field(min_length=1)
    depth: int = Field(ge=1)
    output_format: Literal["json", "csv"] = "json"
    output_path: str | None = None
    points: list[list[float]] = Field(default_factory=list)

    @field_validator("epsilons")
    @classmethod
    def _positive_epsilons(cls, values: list[float]) -> list[float]:
        if any(not value > 0 for value in values):
            raise ValueError("every epsilon must be positive")
        return values

    @classmethod
    def from_settings(cls, command: str, target: str, **overrides) -> "RunConfig":
        values = {
            "seed": settings.seed,
            "samples": settings.samples,
            "tolerance": settings.tolerance,
            "epsilons": list(settings.epsilons),
            "depth": settings.depth,
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(command=command, target=target, **values)

    def digest(self) -> str:
        payload = self.model_dump(mode="json", exclude={"output_format", "output_path"})
        return _digest(payload)


class SuiteResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    suite: str
    checked: int
    violations: int
    max_slack: float = 0.0
    wall_ms: float = 0.0
    verdict: Literal["pass", "fail"]
    details: dict = Field(default_factory=dict)

    @field_validator("max_slack", "wall_ms", mode="before")
    @classmethod
    def _round_scalar(cls, value):
        return round_sig(value)

    @field_validator("details", mode="before")
    @classmethod
    def _round_details(cls, value):
        return round_sig(value)


class RunReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    config: RunConfig
    suites: list[SuiteResult]
    verdict: Literal["pass", "fail"]

    @model_validator(mode="after")
    def _verdict_matches_suites(self) -> "RunReport":
        expected = "fail" if any(suite.verdict == "fail" for suite in self.suites) else "pass"
        if self.verdict != expected:
            raise ValueError(f"report verdict {self.verdict} contradicts its suites")
        return self

    @classmethod
    def assemble(cls, config: RunConfig, suites: list[SuiteResult]) -> "RunReport":
        verdict = "fail" if any(suite.verdict == "fail" for suite in suites) else "pass"
        return cls(config=config, suites=suites, verdict=verdict)

    @property
    def failed(self) -> bool:
        return self.verdict == "fail"

    def digest(self) -> str:
        payload = self.model_dump(mode="json")
        for suite in payload["suites"]:
            suite.pop("wall_ms", None)
        return _digest(payload)


def _digest(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _result(
    name: str,
    started: float,
    checked: int,
    violations: int,
    max_slack: float = 0.0,
    details: dict | None = None,
) -> SuiteResult:
    wall_ms = (time.perf_counter() - started) * 1e3 if settings.record_wall_time else 0.0
    result = SuiteResult(
        suite=name,
        checked=int(checked),
        violations=int(violations),
        max_slack=max(float(max_slack), 0.0),
        wall_ms=wall_ms,
        verdict="fail" if violations else "pass",
        details=details or {},
    )
    logger.info("suite %s: %s (%d checked, %d violations)", name, result.verdict, checked, violations)
    return result


def _axiom_suite(name: str, distance, samples, seed: int) -> SuiteResult:
    started = time.perf_counter()
    triples = None if len(samples) <= settings.axiom_exhaustive_limit else settings.axiom_triples
    try:
        report = check_metric_axioms(distance, samples, settings.axiom_tolerance, triples=triples, seed=seed)
    except OracleError as exc:
        partial = exc.report
        return _result(
            name,
            started,
            partial.pairs_checked if partial else 0,
            1,
            details={"error": str(exc)},
        )
    worst = [
        {"axiom": entry.axiom, "points": entry.points, "slack": entry.slack}
        for entry in report.violations[:SHOWN_VIOLATIONS]
    ]
    return _result(
        name,
        started,
        report.pairs_checked + report.triples_checked,
        report.violation_count,
        report.max_slack,
        {"pairs": report.pairs_checked, "triples": report.triples_checked, "worst": worst},
    )


def _lipschitz_suite(cspace, samples) -> SuiteResult:
    started = time.perf_counter()
    h = cspace.h(samples)
    base = np.asarray(cspace.base.distance(samples, samples))
    excess = np.triu(np.abs(h[:, None] - h[None, :]) - base, k=1)
    n = len(samples)
    violations = int((excess > settings.lipschitz_slack).sum())
    return _result("lipschitz", started, n * (n - 1) // 2, violations, float(excess.max()) if violations else 0.0)


def _domination_suite(cspace, samples) -> SuiteResult:
    started = time.perf_counter()
    excess = cspace.delta(samples, samples) - np.asarray(cspace.base.distance(samples, samples))
    violations = int((excess > 0).sum())
    return _result("domination", started, excess.size, violations, float(excess.max()) if violations else 0.0)


def _anchor_suite(cspace, samples) -> SuiteResult:
    started = time.perf_counter()
    r1 = float(cspace.exhaustion.radii[0])
    g0 = float(cspace.g(cspace.anchor)[0])
    h0 = float(cspace.h(cspace.anchor)[0])
    g = cspace.g(samples)
    h = np.minimum(np.asarray(cspace.base.distance(samples, cspace.anchor))[:, 0], g)
    to_anchor = cspace.delta(samples, cspace.anchor)[:, 0]
    checks = {
        "g(x0)=r1": int(g0 != r1),
        "h(x0)=0": int(h0 != 0.0),
        "delta(x,x0)=h(x)": int((to_anchor != h).sum()),
        "h<=r1": int((h > r1).sum()),
        "g>0": int((g <= 0).sum()),
    }
    slack = max(abs(g0 - r1), abs(h0), float(np.abs(to_anchor - h).max()), float((h - r1).max()), 0.0)
    return _result(
        "anchors",
        started,
        2 + 3 * len(samples),
        sum(checks.values()),
        slack if sum(checks.values()) else 0.0,
        {"g_x0": g0, "r1": r1, "h_x0": h0, "failed_checks": checks},
    )


def _net_suite(cspace, config: RunConfig) -> SuiteResult:
    started = time.perf_counter()
    checks = cspace.base.sample(config.samples, (config.seed + 1) % SEED_SPACE)
    rows, violations, slack = [], 0, 0.0
    for epsilon in sorted(config.epsilons, reverse=True):
        net = total_boundedness_net(cspace, epsilon)
        nearest = cspace.delta(checks, net).min(axis=1)
        violations += int((nearest >= epsilon).sum())
        slack = max(slack, float((nearest - epsilon).max()))
        rows.append(
            {"epsilon": epsilon, "n_epsilon": cspace.n_epsilon(epsilon), "net_size": len(net), "coverage": float(nearest.max())}
        )
    sizes = [row["net_size"] for row in rows]
    monotone = all(a <= b for a, b in zip(sizes, sizes[1:]))
    violations += int(not monotone)
    return _result(
        "net-coverage",
        started,
        len(checks) * len(rows),
        violations,
        slack if violations else 0.0,
        {"nets": rows, "sizes_grow": monotone},
    )


def _escape_suite(cspace) -> SuiteResult:
    started = time.perf_counter()
    sequence = cspace.base.embed(0, np.arange(1, settings.sequence_length + 1, dtype=float))
    report = escape_convergence_check(cspace, sequence, settings.cauchy_tolerance)
    window, tol = settings.cauchy_window, settings.cauchy_tolerance
    under_delta = cauchy_classify(sequence, cspace.delta, window, tol)
    under_base = cauchy_classify(sequence, cspace.base.distance, window, tol)
    violations = (
        int(not report.converges_to_x0)
        + int(under_delta is not SequenceClass.CAUCHY)
        + int(under_base is not SequenceClass.DIVERGENT)
    )
    return _result(
        "escape-convergence",
        started,
        len(sequence),
        violations,
        details={
            "final_delta_to_x0": float(report.delta_to_x0[-1]),
            "converges_to_x0": report.converges_to_x0,
            "delta_class": under_delta.value,
            "base_class": under_base.value,
        },
    )


def verify_suites(target: Target, config: RunConfig) -> list[SuiteResult]:
    space = target.space
    samples = space.sample(config.samples, config.seed)
    suites = [_axiom_suite("base-metric-axioms", space.distance, samples, config.seed)]
    cspace = target.cspace
    if cspace is None:
        logger.info("%s declares no exhaustion; only the base metric is checked", target.name)
        return suites
    suites.append(_axiom_suite("delta-metric-axioms", cspace.delta, samples, config.seed))
    suites.append(_lipschitz_suite(cspace, samples))
    suites.append(_domination_suite(cspace, samples))
    suites.append(_anchor_suite(cspace, samples))
    suites.append(_net_suite(cspace, config))
    suites.append(_escape_suite(cspace))
    return suites


def compactify_suites(target: Target, config: RunConfig) -> list[SuiteResult]:
    started = time.perf_counter()
    cspace = target.cspace
    if cspace is None:
        raise ConfigError(f"{target.name} declares no exhaustion to compactify")
    if config.points:
        try:
            coords = cspace.base.require(np.asarray(config.points, dtype=float))
        except (DomainError, ValueError) as exc:
            raise ConfigError(f"point rejected: {exc}") from None
    else:
        coords = cspace.base.sample(config.samples, config.seed)[:5]
    details = {
        "points": coords,
        "g": cspace.g(coords),
        "h": cspace.h(coords),
        "delta_to_x0": cspace.delta(coords, cspace.anchor)[:, 0],
        "delta": cspace.delta(coords, coords),
    }
    return [_result("compactify-points", started, len(coords), 0, details=details)]


def _sampler(fmap) -> EscapeSampler:
    return EscapeSampler.for_map(fmap, settings.escape_factor, settings.escape_steps)


def _consistency_suite(fmap, strat: Stratification, samples, sampler, config: RunConfig) -> SuiteResult:
    """The compact-closure test holds exactly at the level-0 samples outside the Y1 estimate.

    The Y1 estimate is the set of images within tol of the escape limit set, so membership
    is read off the level mask.
    """
    started = time.perf_counter()
    level = strat.levels[0]
    rng = np.random.default_rng(config.seed)
    chosen = rng.choice(len(level.y_samples), size=min(CONSISTENCY_POINTS, len(level.y_samples)), replace=False)
    cloud = PullbackCloud.build(fmap, samples, sampler)
    schedule = default_radius_schedule(config.tolerance)
    far = ~level.next_mask[chosen]
    disagreements = 0
    for y, expected in zip(level.y_samples[chosen], far):
        proper = proper_neighborhood_test(fmap, y[None, :], schedule, settings.proper_bound, cloud)
        disagreements += int(proper != bool(expected))
    return _result(
        "f1-f3-consistency",
        started,
        len(chosen),
        disagreements,
        details={"agreement": 1.0 - disagreements / len(chosen), "proper_points": int(far.sum())},
    )


def _stratum_metric_suite(fmap, strat: Stratification, config: RunConfig) -> SuiteResult:
    started = time.perf_counter()
    rows, checked, violations, slack = [], 0, 0, 0.0
    triples = settings.axiom_triples
    for level in strat.levels:
        z = level.z_samples
        if len(z) < 3:
            continue
        sm = StratumMetric(level=level.k, boundary_samples=level.x_next, base_distance=fmap.domain.distance)
        metric = sm.image_metric(fmap)
        report = check_metric_axioms(
            metric, z, settings.axiom_tolerance, triples=None if len(z) <= settings.axiom_exhaustive_limit else triples, seed=config.seed
        )
        preimages = fmap.inverse(z)
        shortfall = np.asarray(fmap.domain.distance(preimages, preimages)) - metric(z, z)
        dominated = int((shortfall > settings.axiom_tolerance).sum())
        checked += report.pairs_checked + report.triples_checked + shortfall.size
        violations += report.violation_count + dominated
        slack = max(slack, report.max_slack, float(shortfall.max()))
        rows.append(
            {"k": level.k, "samples": len(z), "axiom_violations": report.violation_count, "domination_violations": dominated}
        )
    return _result("stratum-metrics", started, checked, violations, slack if violations else 0.0, {"levels": rows})


def _approach(fmap, level) -> np.ndarray | None:
    """A Z-sample and a boundary sample joined by a segment inside the domain, closest pair first."""
    z, boundary = level.x_samples[~level.next_mask], level.x_next
    if len(z) == 0 or len(boundary) == 0:
        return None
    gaps = np.asarray(fmap.domain.distance(z, boundary))
    for flat in np.argsort(gaps, axis=None)[:APPROACH_CANDIDATES]:
        i, j = np.unravel_index(flat, gaps.shape)
        if fmap.domain.contains((z[i] + boundary[j]) / 2.0)[0]:
            return np.vstack([z[i], boundary[j]])
    return None


def _blowup_suite(fmap, strat: Stratification) -> SuiteResult:
    started = time.perf_counter()
    rows, violations = [], 0
    m = np.arange(1, settings.sequence_length + 1, dtype=float)[:, None]
    for level in strat.levels:
        pair = _approach(fmap, level)
        if pair is None:
            continue
        start, target = pair
        sequence = target + (start - target) / m
        sm = StratumMetric(level=level.k, boundary_samples=level.x_next, base_distance=fmap.domain.distance)
        report = boundary_blowup_check(
            sm, fmap, fmap.forward(sequence), settings.cauchy_window, settings.cauchy_tolerance
        )
        violations += int(not report.ok)
        rows.append({"k": level.k, "max_kappa": report.max_kappa, "class": report.classification.value})
    return _result("boundary-blowup", started, len(rows), violations, details={"levels": rows})


def stratify_suites(target: Target, config: RunConfig) -> list[SuiteResult]:
    fmap = target.fmap
    if fmap is None:
        raise ConfigError(f"{target.name} is a space; stratify needs a map")
    started = time.perf_counter()
    samples = fmap.domain.sample(config.samples, config.seed)
    sampler = _sampler(fmap)
    try:
        strat = stratify(fmap, config.depth, config.tolerance, samples, sampler, settings.escape_min_hits)
    except ResolutionError as exc:
        return [_result("stratification", started, 0, 1, details={"error": str(exc), "level": exc.level})]
    levels = [{**level.summary(), "limits": level.limits} for level in strat.levels]
    suites = [
        _result(
            "stratification",
            started,
            len(strat.levels),
            0,
            details={"terminated": strat.terminated, "levels": levels},
        )
    ]
    suites.append(_consistency_suite(fmap, strat, samples, sampler, config))

    started = time.perf_counter()
    chain = chain_invariants(strat)
    suites.append(
        _result(
            "chain-invariants",
            started,
            len(strat.levels),
            int(not chain.inclusion_ok) + int(not chain.disjoint_ok),
            details={"inclusion": chain.inclusion_ok, "disjoint": chain.disjoint_ok},
        )
    )
    for name, proxy in (
        ("density-proxy", lambda: density_proxy(strat)),
        ("nowhere-density-proxy", lambda: nowhere_density_proxy(strat, seed=config.seed)),
    ):
        started = time.perf_counter()
        report = proxy()
        suites.append(
            _result(
                name,
                started,
                len(report.per_level),
                int(not report.ok),
                details={"radius": report.radius, "levels": report.per_level},
            )
        )
    suites.append(_stratum_metric_suite(fmap, strat, config))
    suites.append(_blowup_suite(fmap, strat))
    return suites


def _singleton_x1(fmap, sampler, tol: float) -> bool:
    if fmap.known_x1 is not None:
        return fmap.known_x1.is_singleton
    return extends_to_infinity(fmap, sampler, tol, settings.escape_min_hits)


def certificate_suites(target: Target, config: RunConfig) -> list[SuiteResult]:
    """Homeomorphism certificate and image compactness, for maps whose X1 is a single point."""
    fmap, cspace = target.fmap, target.cspace
    if fmap is None or cspace is None:
        return []
    sampler = _sampler(fmap)
    if not _singleton_x1(fmap, sampler, config.tolerance):
        logger.info("%s: X1 is not a single point; certificate skipped", fmap.name)
        return []
    suites = []
    started = time.perf_counter()
    sequences, labels = certificate_sequences(
        cspace, settings.certificate_sequences, settings.certificate_length, config.seed
    )
    try:
        report = homeo_certificate(
            fmap,
            cspace,
            sequences,
            settings.cauchy_window,
            settings.cauchy_tolerance,
            labels=labels,
            sampler=sampler,
            tol=config.tolerance,
        )
    except ScopeError as exc:
        logger.info("%s: %s", fmap.name, exc)
        return []
    disagreements = sum(not entry.agree for entry in report.entries)
    mislabelled = round((1.0 - report.labels_matched) * len(report.entries))
    suites.append(
        _result(
            "homeo-certificate",
            started,
            len(report.entries),
            disagreements + mislabelled,
            details={"agreement": report.agreement, "labels_matched": report.labels_matched},
        )
    )

    started = time.perf_counter()
    samples = fmap.domain.sample(config.samples, config.seed)
    compact = image_compactness_check(
        fmap, sampler, samples, min(config.epsilons), config.tolerance, settings.escape_min_hits
    )
    limits = np.atleast_2d(compact.limit) if compact.limit is not None else np.empty((0, fmap.codomain_dimension))
    estimate = discontinuity_set(fmap, limits, samples, config.tolerance)
    suites.append(
        _result(
            "image-compactness",
            started,
            1,
            int(not compact.compact),
            details={
                "limit": compact.limit,
                "tail_gap": compact.tail_gap,
                "net_size": compact.net_size,
                "x1_samples": len(estimate.x1),
            },
        )
    )
    return suites


def run_verify(config: RunConfig) -> RunReport:
    return RunReport.assemble(config, verify_suites(resolve(config.target), config))


def run_compactify(config: RunConfig) -> RunReport:
    return RunReport.assemble(config, compactify_suites(resolve(config.target), config))


def run_stratify(config: RunConfig) -> RunReport:
    return RunReport.assemble(config, stratify_suites(resolve(config.target), config))


def run_report(config: RunConfig, session: Session | None = None) -> RunReport:
    target = resolve(config.target)
    suites = verify_suites(target, config)
    if target.fmap is not None:
        suites += stratify_suites(target, config)
        suites += certificate_suites(target, config)
    report = RunReport.assemble(config, suites)
    if session is not None:
        archive_report(session, report)
        session.commit()
    elif settings.archive_url:
        from lusin.database import session_factory

        with session_factory()() as archive:
            archive_report(archive, report)
            archive.commit()
    return report


RUNNERS = {
    "verify": run_verify,
    "compactify": run_compactify,
    "stratify": run_stratify,
    "report": run_report,
}


def render_report(report: RunReport, fmt: str) -> str:
    if fmt == "json":
        return report.model_dump_json(indent=2) + "\n"
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for suite in report.suites:
            writer.writerow(suite.model_dump())
        return buffer.getvalue()
    raise ConfigError(f"unknown output format {fmt!r}")


def emit_report(report: RunReport, fmt: str, path: str | Path | None = None) -> str:
    """Render the report and write it to path when given; OSError propagates to the caller."""
    text = render_report(report, fmt)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def archive_report(session: Session, report: RunReport) -> RunRecord:
    """Upsert a run record keyed by config digest, flagging drift when the same config reports differently."""
    config_digest = report.config.digest()
    report_digest = report.digest()
    payload = report.model_dump(mode="json")
    record = session.scalar(select(RunRecord).where(RunRecord.config_digest == config_digest))

    if record:
        record.runs += 1
        if record.report_digest != report_digest:
            logger.warning("run %s drifted: same config, different report", config_digest[:12])
            record.drifted = True
        record.report_digest = report_digest
        record.verdict = report.verdict
        record.payload = payload
        session.add(record)
        return record

    record = RunRecord(
        command=report.config.command,
        target=report.config.target,
        config_digest=config_digest,
        report_digest=report_digest,
        verdict=report.verdict,
        payload=payload,
    )
    session.add(record)
    return record
