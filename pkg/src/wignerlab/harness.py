"""Deterministic Monte Carlo campaigns over Wigner replicas.

Each replica ``(n, r)`` is sampled from a seed derived by hashing
``(master seed, n, r)``; workers share nothing, and all aggregation runs
after collection in ``(n, r)`` order. The serialized report is therefore a
pure function of the configuration, whatever the worker count.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import partial
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import lawcheck, semicircle
from .ensemble import distribution_from_config, sample_wigner
from .errors import ConfigError, WignerLabError
from .spectral import SpectralData, eigendecompose, stieltjes

__all__ = [
    "SCHEMA_VERSION",
    "METRICS",
    "CampaignConfig",
    "ReplicaRecord",
    "CampaignReport",
    "CampaignResult",
    "CampaignAborted",
    "SchemaError",
    "derive_seed",
    "run_replica",
    "run_campaign",
    "aggregate",
    "format_number",
    "write_table",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METRICS = ("ks", "esd", "locallaw", "outside", "rigidity", "deloc", "window", "smoothing")

# the v-scaling fit only uses grid points with v >= fit_min_factor * v0
_DEFAULT_GRID = {"A0": 4.0, "u": [0.0], "v_count": 10, "v_max": 0.5, "v_min_factor": 1.0, "fit_min_factor": 4.0}
_DEFAULT_SMOOTHING = {"A0": 1.0, "V": 4.0, "x_points": 1001}
_DEFAULT_WINDOW = {"x": 0.0, "xi_power": 0.5}
_DEFAULT_OUTSIDE = {"u": [2.5, 3.0, 4.0], "v": [0.05, 0.2, 1.0]}


class CampaignAborted(WignerLabError):
    """Persistence failed mid-campaign; a partial manifest was written."""


class SchemaError(WignerLabError):
    """Replica records disagree on metric names or shapes."""


def derive_seed(master: int, n: int, replica: int) -> int:
    """Stable 64-bit seed for replica ``replica`` of dimension ``n``."""
    digest = hashlib.blake2b(f"{int(master)}:{int(n)}:{int(replica)}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _merged(defaults, given, name):
    given = dict(given or {})
    unknown = set(given) - set(defaults)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {key!r} in {name}", f"{name}.{key}")
    return {**defaults, **given}


@dataclass(frozen=True)
class CampaignConfig:
    """Everything needed to replay a campaign."""

    ensemble: dict
    ns: tuple
    replicas: int
    seed: int
    metrics: tuple = ("ks",)
    grid: dict = field(default_factory=lambda: dict(_DEFAULT_GRID))
    smoothing: dict = field(default_factory=lambda: dict(_DEFAULT_SMOOTHING))
    window: dict = field(default_factory=lambda: dict(_DEFAULT_WINDOW))
    outside: dict = field(default_factory=lambda: dict(_DEFAULT_OUTSIDE))
    p_values: tuple = (1, 2, 4)
    max_failure_fraction: float = 0.0
    output: str | None = None

    def __post_init__(self):
        ens = self.ensemble
        if isinstance(ens, str):
            ens = {"name": ens}
        object.__setattr__(self, "ensemble", dict(ens))
        distribution_from_config(self.ensemble)
        try:
            ns = tuple(int(n) for n in np.atleast_1d(self.ns))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"n must be a list of integers: {exc}", "n") from exc
        if not ns or any(n < 2 for n in ns) or list(ns) != sorted(set(ns)):
            raise ConfigError("n list must be nonempty, strictly ascending, with every n >= 2", "n")
        object.__setattr__(self, "ns", ns)
        if not isinstance(self.replicas, (int, np.integer)) or self.replicas < 1:
            raise ConfigError("replicas must be a positive integer", "replicas")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer", "seed")
        metrics = tuple(self.metrics)
        bad = [m for m in metrics if m not in METRICS]
        if bad or not metrics:
            raise ConfigError(f"unknown metric {bad[0] if bad else None!r}; choose from {METRICS}", "metrics")
        object.__setattr__(self, "metrics", tuple(m for m in METRICS if m in metrics))
        object.__setattr__(self, "grid", _merged(_DEFAULT_GRID, self.grid, "grid"))
        object.__setattr__(self, "smoothing", _merged(_DEFAULT_SMOOTHING, self.smoothing, "smoothing"))
        object.__setattr__(self, "window", _merged(_DEFAULT_WINDOW, self.window, "window"))
        object.__setattr__(self, "outside", _merged(_DEFAULT_OUTSIDE, self.outside, "outside"))
        object.__setattr__(self, "p_values", tuple(int(p) for p in self.p_values))
        if any(p < 1 for p in self.p_values):
            raise ConfigError("p_values must be positive integers", "p_values")
        if not 0.0 <= float(self.max_failure_fraction) <= 1.0:
            raise ConfigError("max_failure_fraction must lie in [0, 1]", "max_failure_fraction")
        for n in ns if "locallaw" in metrics else ():
            try:
                self.grid_for(n)
            except ValueError as exc:
                raise ConfigError(f"grid invalid for n = {n}: {exc}", "grid") from exc

    def grid_for(self, n: int) -> lawcheck.GridSpec:
        g = self.grid
        return lawcheck.GridSpec.build(
            n,
            A0=float(g["A0"]),
            u=tuple(g["u"]),
            v_count=int(g["v_count"]),
            v_max=float(g["v_max"]),
            v_min_factor=float(g["v_min_factor"]),
        )

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION}
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            out[f.name] = list(val) if isinstance(val, tuple) else val
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignConfig":
        data = dict(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}", "schema_version")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"unknown configuration field {key!r}", key)
        for key in ("ensemble", "ns", "replicas", "seed"):
            if key not in data:
                raise ConfigError(f"missing required field {key!r}", key)
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"malformed configuration: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "CampaignConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def config_hash(self) -> str:
        body = self.to_dict()
        body.pop("output", None)
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class ReplicaRecord:
    n: int
    replica: int
    seed: int
    metrics: dict
    wall_time: float = 0.0
    status: str = "ok"
    error: str = ""

    def to_json(self) -> str:
        body = {"schema_version": SCHEMA_VERSION, **dataclasses.asdict(self)}
        return json.dumps(body, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ReplicaRecord":
        body = json.loads(line)
        body.pop("schema_version", None)
        return cls(**body)


def _metrics_for(config: CampaignConfig, n: int, spec: SpectralData) -> dict:
    out = {}
    m = config.metrics
    if "ks" in m:
        out["ks"] = lawcheck.kolmogorov_distance(spec)
    if "esd" in m:
        out["eigenvalues"] = spec.eigenvalues.tolist()
    if "locallaw" in m:
        z = config.grid_for(n).points()
        lam = np.asarray(stieltjes(spec, z)) - np.asarray(semicircle.stieltjes(z))
        out["abs_lambda"] = np.abs(lam).tolist()
        out["imag_lambda"] = np.abs(lam.imag).tolist()
    if "outside" in m:
        rep = lawcheck.imag_law_outside([spec], config.outside["u"], config.outside["v"])
        out["outside_imag"] = [row["imag_q50"] for row in rep["rows"]]
    if "rigidity" in m:
        rig = lawcheck.rigidity_report(spec)
        out["rigidity_bulk"] = rig.bulk_max
        out["rigidity_edge"] = rig.edge_max
    if "deloc" in m:
        out["deloc"] = lawcheck.delocalization_report(spec)
    if "window" in m:
        xi = n ** float(config.window["xi_power"])
        out["window"] = lawcheck.window_density(spec, float(config.window["x"]), xi)
    if "smoothing" in m:
        sm = config.smoothing
        v0, eps = lawcheck.smoothing_parameters(n, float(sm["A0"]))
        terms = lawcheck.smoothing_bound(
            partial(stieltjes, spec), v0, eps, V=float(sm["V"]), x_points=int(sm["x_points"])
        )
        out["smoothing_term1"] = terms.global_term
        out["smoothing_term4"] = terms.local_term
        out["smoothing_total"] = terms.total
    return out


def run_replica(config: CampaignConfig, n: int, replica: int) -> ReplicaRecord:
    """Compute one replica; numerical failures are captured in the record."""
    seed = derive_seed(config.seed, n, replica)
    start = time.perf_counter()
    try:
        with threadpool_limits(limits=1):
            dist = distribution_from_config(config.ensemble)
            sample = sample_wigner(n, dist, seed)
            spec = eigendecompose(sample, want_vectors="deloc" in config.metrics)
            metrics = _metrics_for(config, n, spec)
        return ReplicaRecord(n, replica, seed, metrics, time.perf_counter() - start)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return ReplicaRecord(n, replica, seed, {}, time.perf_counter() - start, "failed", f"{type(exc).__name__}: {exc}")


def _replica_task(config_dict, n, replica):
    return run_replica(CampaignConfig.from_dict(config_dict), n, replica)


@dataclass
class CampaignReport:
    """Deterministic tables distilled from a campaign's records."""

    config: CampaignConfig
    summary: list
    moments: list
    fits: list
    failures: list
    law_reports: dict = field(default_factory=dict)

    def tables(self) -> dict:
        """Serialized CSV text per table name."""
        meta = {"config_hash": self.config.config_hash(), "schema_version": SCHEMA_VERSION}
        return {
            "summary": write_table(SUMMARY_COLUMNS, self.summary, meta),
            "moments": write_table(MOMENT_COLUMNS, self.moments, meta),
            "fits": write_table(FIT_COLUMNS, self.fits, meta),
            "failures": write_table(FAILURE_COLUMNS, self.failures, meta),
        }

    def digest(self) -> str:
        body = "".join(text for _, text in sorted(self.tables().items()))
        return hashlib.sha256(body.encode()).hexdigest()

    def fit(self, name: str):
        for row in self.fits:
            if row["fit"] == name:
                return row
        raise KeyError(name)

    def value(self, n: int, metric: str, column: str = "median", u=None, v=None):
        for row in self.summary:
            if row["n"] == n and row["metric"] == metric:
                if u is None or (math.isclose(row["u"], u) and math.isclose(row["v"], v)):
                    return row[column]
        raise KeyError((n, metric))


@dataclass
class CampaignResult:
    report: CampaignReport
    records: list


SUMMARY_COLUMNS = ("n", "metric", "u", "v", "count", "mean", "median", "q90", "q99")
MOMENT_COLUMNS = ("n", "metric", "u", "v", "p", "moment", "envelope", "ratio")
FIT_COLUMNS = ("fit", "x", "y", "slope", "intercept", "max_residual", "slope_stderr", "points")
FAILURE_COLUMNS = ("n", "replica", "seed", "error")


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return "nan"
        return f"{float(x):.17g}"
    return str(x)


def write_table(columns, rows, meta: dict) -> str:
    """``#``-prefixed metadata, a header row, then comma-separated data."""
    lines = [f"# {k}={meta[k]}" for k in sorted(meta)]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_number(row.get(c, "")) for c in columns))
    return "\n".join(lines) + "\n"


def _stats(values):
    vals = np.asarray(values, dtype=float)
    return {
        "count": int(vals.size),
        "mean": float(vals.mean()),
        "median": lawcheck.empirical_quantile(vals, 0.5),
        "q90": lawcheck.empirical_quantile(vals, 0.9),
        "q99": lawcheck.empirical_quantile(vals, 0.99),
    }


def _point_coords(config, n, metric, length):
    if metric in ("abs_lambda", "imag_lambda"):
        pts = config.grid_for(n).points()
    elif metric == "outside_imag":
        uu, vv = np.meshgrid(config.outside["u"], config.outside["v"], indexing="ij")
        pts = (uu + 1j * vv).ravel()
    else:
        pts = np.full(length, np.nan + 1j * np.nan)
    return pts


def _check_schema(records):
    by_n = {}
    bad = []
    for rec in records:
        shape = {k: (len(v) if isinstance(v, list) else None) for k, v in rec.metrics.items()}
        if "eigenvalues" in shape:
            shape["eigenvalues"] = rec.n
        ref = by_n.setdefault(rec.n, (shape, rec))
        if ref[0] != shape:
            bad.append((rec.n, rec.replica))
    if bad:
        raise SchemaError(f"records with mismatched metric schema (n, replica): {bad}")


def aggregate(records, config: CampaignConfig) -> CampaignReport:
    """Summary, moment and fit tables from replica records in replica order."""
    ok = sorted((r for r in records if r.status == "ok"), key=lambda r: (r.n, r.replica))
    failed = sorted((r for r in records if r.status != "ok"), key=lambda r: (r.n, r.replica))
    _check_schema(ok)
    summary, moments, fits = [], [], []
    law_reports = {}
    medians = {}
    for n in config.ns:
        recs = [r for r in ok if r.n == n]
        if not recs:
            continue
        law = lawcheck.LawReport(n=n, replicas=len(recs), config=config.to_dict())
        names = [k for k in recs[0].metrics if k != "eigenvalues"]
        for name in names:
            first = recs[0].metrics[name]
            if isinstance(first, list):
                mat = np.array([r.metrics[name] for r in recs], dtype=float)
                pts = _point_coords(config, n, name, mat.shape[1])
                for k, zk in enumerate(pts):
                    row = {"n": n, "metric": name, "u": zk.real, "v": zk.imag, **_stats(mat[:, k])}
                    summary.append(row)
                    if name == "abs_lambda":
                        for p in config.p_values:
                            if p > math.log(n):
                                continue
                            mom = float(np.mean(mat[:, k] ** p))
                            env = (p / (n * zk.imag)) ** p
                            moments.append(
                                {"n": n, "metric": name, "u": zk.real, "v": zk.imag, "p": p,
                                 "moment": mom, "envelope": env, "ratio": mom / env}
                            )
            else:
                vals = [r.metrics[name] for r in recs]
                row = {"n": n, "metric": name, "u": math.nan, "v": math.nan, **_stats(vals)}
                summary.append(row)
                medians.setdefault(name, {})[n] = row
        if "esd" in config.metrics:
            specs = [SpectralData.from_eigenvalues(r.metrics["eigenvalues"]) for r in recs]
            dist = lawcheck.mean_esd_distance(specs)
            summary.append({"n": n, "metric": "mean_esd", "u": math.nan, "v": math.nan,
                            "count": len(recs), "mean": dist, "median": dist, "q90": dist, "q99": dist})
            medians.setdefault("mean_esd", {})[n] = {"median": dist, "q99": dist}
            law.extras["mean_esd"] = dist
        if "ks" in config.metrics:
            law.kolmogorov = [r.metrics["ks"] for r in recs]
        if "rigidity" in config.metrics:
            law.rigidity_max = [r.metrics["rigidity_bulk"] for r in recs]
        if "deloc" in config.metrics:
            law.delocalization = [r.metrics["deloc"] for r in recs]
        if "locallaw" in config.metrics:
            law.grid_rows = [row for row in summary if row["n"] == n and row["metric"] in ("abs_lambda", "imag_lambda")]
            fit = _local_law_fit(config, n, summary)
            if fit is not None:
                fits.append(fit)
                law.fits["locallaw_v"] = fit
        law_reports[n] = law

    targets = {
        "ks": ("median", "ks_vs_n"),
        "mean_esd": ("median", "mean_esd_vs_n"),
        "deloc": ("q99", "deloc_q99_vs_n"),
        "rigidity_bulk": ("median", "rigidity_vs_n"),
        "smoothing_term4": ("median", "smoothing_term4_vs_n"),
    }
    for metric, (column, label) in targets.items():
        per_n = medians.get(metric, {})
        if len(per_n) >= 3 and all(per_n[n][column] > 0 for n in per_n):
            ns = sorted(per_n)
            fit = lawcheck.scaling_fit(ns, [per_n[n][column] for n in ns])
            fits.append(_fit_row(label, "n", f"{metric}.{column}", fit))
    failures = [{"n": r.n, "replica": r.replica, "seed": r.seed, "error": r.error.replace(",", ";")} for r in failed]
    return CampaignReport(config, summary, moments, fits, failures, law_reports)


def _fit_row(label, x, y, fit):
    return {"fit": label, "x": x, "y": y, "slope": fit.slope, "intercept": fit.intercept,
            "max_residual": fit.max_residual, "slope_stderr": fit.slope_stderr, "points": fit.points}


def _local_law_fit(config, n, summary):
    grid = config.grid_for(n)
    floor = float(config.grid["fit_min_factor"]) * grid.v0 * (1 - 1e-12)
    rows = [
        r for r in summary
        if r["n"] == n and r["metric"] == "abs_lambda" and r["u"] == grid.u[0] and r["v"] >= floor
    ]
    if len(rows) < 3:
        return None
    fit = lawcheck.scaling_fit([r["v"] for r in rows], [r["median"] for r in rows])
    return _fit_row(f"locallaw_v_n{n}", "v", "abs_lambda.median", fit)


def _write_manifest(path: Path, body: dict):
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def run_campaign(config: CampaignConfig, workers: int = 1, records_path=None, manifest_path=None) -> CampaignResult:
    """Run every ``(n, replica)`` exactly once and aggregate in index order.

    Records are appended to ``records_path`` (JSON lines) as they complete.
    If writing fails, a manifest with status ``aborted`` is written and
    :class:`CampaignAborted` is raised.
    """
    tasks = [(n, r) for n in config.ns for r in range(config.replicas)]
    started = datetime.now(timezone.utc).isoformat()
    records = []
    sink = None
    if records_path is not None:
        records_path = Path(records_path)
        if manifest_path is None:
            manifest_path = records_path.with_suffix(".manifest.json")
    manifest = {
        "config_hash": config.config_hash(),
        "schema_version": SCHEMA_VERSION,
        "start": started,
        "planned": len(tasks),
    }

    def persist(rec):
        records.append(rec)
        if sink is not None:
            try:
                sink.write(rec.to_json() + "\n")
                sink.flush()
            except OSError as exc:
                raise CampaignAborted(f"writing record (n={rec.n}, replica={rec.replica}) failed: {exc}") from exc

    try:
        if records_path is not None:
            try:
                sink = open(records_path, "w")
            except OSError as exc:
                raise CampaignAborted(f"cannot open records file {records_path}: {exc}") from exc
        if workers <= 1:
            for n, r in tasks:
                persist(run_replica(config, n, r))
        else:
            cfg = config.to_dict()
            with ProcessPoolExecutor(max_workers=int(workers)) as pool:
                futures = [pool.submit(_replica_task, cfg, n, r) for n, r in tasks]
                for fut in as_completed(futures):
                    persist(fut.result())
    except CampaignAborted:
        if manifest_path is not None:
            try:
                _write_manifest(Path(manifest_path), {
                    **manifest, "status": "aborted", "end": datetime.now(timezone.utc).isoformat(),
                    "completed": sorted([r.n, r.replica] for r in records),
                    "failures": sum(r.status != "ok" for r in records),
                })
            except OSError:
                log.error("could not write partial-results manifest %s", manifest_path)
        raise
    finally:
        if sink is not None:
            try:
                sink.close()
            except OSError:
                pass

    report = aggregate(records, config)
    if manifest_path is not None:
        _write_manifest(Path(manifest_path), {
            **manifest, "status": "complete", "end": datetime.now(timezone.utc).isoformat(),
            "records": len(records), "failures": len(report.failures),
        })
    log.info("campaign %s: %d records, %d failures", config.config_hash(), len(records), len(report.failures))
    return CampaignResult(report, records)


def default_output_dir() -> Path:
    return Path(os.environ.get("WIGNERLAB_OUT", "wignerlab-out"))
