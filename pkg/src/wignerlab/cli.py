"""Command-line entry point: ``wignerlab <subcommand> [options]``.

Configuration is one JSON object (see ``CampaignConfig.to_dict``), e.g.::

    {"schema_version": 1, "ensemble": {"name": "rademacher"},
     "ns": [128, 256, 512, 1024], "replicas": 50, "seed": 1,
     "metrics": ["ks"], "grid": {"A0": 4.0, "u": [0.0], "v_count": 10}}

Every field can be overridden by a flag. Exit codes: 0 success, 2
configuration error, 3 numerical failures above the configured threshold,
1 when writing results fails part way (a partial manifest is left behind).

Campaign subcommands write ``summary.csv``, ``moments.csv``, ``fits.csv``,
``failures.csv``, ``records.jsonl``, ``manifest.json`` and ``config.json``
into the output directory (``--out``, else ``$WIGNERLAB_OUT``, else
``./wignerlab-out``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, semicircle
from .ensemble import distribution_from_config, sample_wigner
from .errors import ConfigError, WignerLabError
from .harness import CampaignConfig, format_number, write_table
from .spectral import eigendecompose, identity_residuals

__all__ = ["main", "build_parser", "resolve_config", "IDENTITY_TOLERANCES", "EXIT_OK", "EXIT_IO", "EXIT_CONFIG", "EXIT_NUMERIC"]

log = logging.getLogger("wignerlab")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
OUT_ENV = "WIGNERLAB_OUT"

IDENTITY_TOLERANCES = {
    "self_consistency": 1e-8,
    "lambda_ratio": 1e-8,
    "ward_row": 1e-9,
    "ward_average": 1e-9,
    "eps_reconstruction": 1e-8,
    "perturbation_expansion": 1e-8,
    "interlacing_excess": 1e-10,
}

# subcommand -> metrics it runs; None means take them from the config
CAMPAIGNS = {
    "locallaw": ("locallaw", "outside"),
    "ks": ("ks",),
    "meanks": ("ks", "esd"),
    "rigidity": ("rigidity",),
    "deloc": ("deloc",),
    "window": ("window",),
    "smoothing": ("smoothing",),
    "scaling": None,
}
HEADLINE = {
    "locallaw": "abs_lambda",
    "ks": "ks",
    "meanks": "mean_esd",
    "rigidity": "rigidity_bulk",
    "deloc": "deloc",
    "window": "window",
    "smoothing": "smoothing_term4",
}
SAMPLE_COLUMNS = ("n", "index", "eigenvalue", "semicircle_quantile")
IDENTITY_COLUMNS = ("identity", "max_residual", "tolerance", "pass")

_BASE_CONFIG = {
    "ensemble": {"name": "rademacher"},
    "ns": [64, 128, 256],
    "replicas": 10,
    "seed": 0,
    "metrics": ["ks", "esd", "rigidity", "deloc"],
}


def _int_list(text, field):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"--{field} expects comma-separated integers, got {text!r}", field) from exc
    if not vals:
        raise ConfigError(f"--{field} is empty", field)
    return vals


def _float_list(text, field):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"--{field} expects comma-separated numbers, got {text!r}", field) from exc
    if not vals:
        raise ConfigError(f"--{field} is empty", field)
    return vals


def parse_dist(text: str) -> dict:
    """``name``, ``name:key=value,...`` or a JSON object."""
    text = text.strip()
    if text.startswith("{"):
        try:
            out = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--dist is not valid JSON: {exc}", "ensemble") from exc
        return out
    name, _, rest = text.partition(":")
    out = {"name": name}
    for item in filter(None, rest.split(",")):
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--dist parameter {item!r} is not key=value", "ensemble")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--dist parameter {key!r} has a non-numeric value", f"ensemble.{key}") from exc
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wignerlab", description="Wigner-matrix law verification campaigns.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in ("sample", "identities", *CAMPAIGNS):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON campaign configuration")
        p.add_argument("--n", help="comma-separated matrix sizes")
        p.add_argument("--replicas", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--dist", help="entry law: name, name:key=value,... or JSON")
        p.add_argument("--v-min-const", type=float, dest="v_min_const", help="A0 in v0 = A0 log(n)/n")
        p.add_argument("--grid-u", dest="grid_u", help="comma-separated real parts")
        p.add_argument("--grid-v-count", type=int, dest="grid_v_count")
        p.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./wignerlab-out)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--plots", action="store_true", help="also write SVG plots")
    return parser


def resolve_config(args, metrics=None) -> CampaignConfig:
    """Config file (if any) then flag overrides, validated as one object."""
    if args.config is not None:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}", "config") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}", "config") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object", "config")
    else:
        data = json.loads(json.dumps(_BASE_CONFIG))
    data.setdefault("schema_version", harness.SCHEMA_VERSION)
    if args.n is not None:
        data["ns"] = _int_list(args.n, "n")
    if args.replicas is not None:
        data["replicas"] = args.replicas
    if args.seed is not None:
        data["seed"] = args.seed
    if args.dist is not None:
        data["ensemble"] = parse_dist(args.dist)
    grid = dict(data.get("grid") or {})
    if args.v_min_const is not None:
        grid["A0"] = args.v_min_const
    if args.grid_u is not None:
        grid["u"] = _float_list(args.grid_u, "grid-u")
    if args.grid_v_count is not None:
        grid["v_count"] = args.grid_v_count
    if grid:
        data["grid"] = grid
    if metrics is not None:
        data["metrics"] = list(metrics)
    if args.out is not None:
        data["output"] = str(args.out)
    return CampaignConfig.from_dict(data)


def _out_dir(config: CampaignConfig) -> Path:
    out = Path(config.output) if config.output else harness.default_output_dir()
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}", "out") from exc
    return out


def _meta(config):
    return {"config_hash": config.config_hash(), "schema_version": harness.SCHEMA_VERSION}


def _cmd_sample(args, config, out):
    rows, series = [], {}
    dist = distribution_from_config(config.ensemble)
    for n in config.ns:
        spec = eigendecompose(sample_wigner(n, dist, harness.derive_seed(config.seed, n, 0)), want_vectors=False)
        gam = semicircle.quantile(np.arange(1, n + 1), n)
        rows += [{"n": n, "index": j + 1, "eigenvalue": lam, "semicircle_quantile": g}
                 for j, (lam, g) in enumerate(zip(spec.eigenvalues, gam))]
        print(f"n={n} min={spec.eigenvalues[0]:.6f} max={spec.eigenvalues[-1]:.6f}")
        series[n] = spec.eigenvalues
    (out / "eigenvalues.csv").write_text(write_table(SAMPLE_COLUMNS, rows, _meta(config)))
    if args.plots:
        _overlay_plot(series, out / "esd_overlay.svg")
    return EXIT_OK


def _overlay_plot(eigs_by_n, path):
    from .plotting import emit_plot

    x = np.linspace(-2.5, 2.5, 401)
    series = {"semicircle cdf": (x, semicircle.cdf(x))}
    for n, lam in eigs_by_n.items():
        lam = np.asarray(lam)
        series[f"ESD n={n}"] = (lam, np.arange(1, lam.size + 1) / lam.size)
    emit_plot(series, "overlay", path, title="empirical spectral cdf")


def _cmd_identities(args, config, out):
    n = config.ns[0] if args.n is not None or args.config is not None else 50
    seed = config.seed if args.seed is not None or args.config is not None else 7
    rng = np.random.default_rng(seed)
    zs = rng.uniform(-3.0, 3.0, 20) + 1j * rng.uniform(0.05, 2.0, 20)
    dist = distribution_from_config(config.ensemble)
    sample = sample_wigner(n, dist, seed)
    spec = eigendecompose(sample)
    worst = dict.fromkeys(IDENTITY_TOLERANCES, 0.0)
    for z in zs:
        for key, val in identity_residuals(sample, z, spec).items():
            worst[key] = max(worst[key], val)
    rows = []
    for key, tol in IDENTITY_TOLERANCES.items():
        ok = worst[key] <= tol
        rows.append({"identity": key, "max_residual": worst[key], "tolerance": tol, "pass": ok})
        print(f"{key:24s} {worst[key]:.3e}  (tol {tol:.0e})  {'ok' if ok else 'FAIL'}")
    (out / "identities.csv").write_text(write_table(IDENTITY_COLUMNS, rows, _meta(config)))
    failed = [r["identity"] for r in rows if not r["pass"]]
    if failed:
        print(f"error: identities above tolerance: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_campaign(args, config, out):
    result = harness.run_campaign(config, workers=args.workers, records_path=out / "records.jsonl",
                                  manifest_path=out / "manifest.json")
    report = result.report
    for name, text in report.tables().items():
        (out / f"{name}.csv").write_text(text)
    (out / "config.json").write_text(config.dumps() + "\n")
    headline = HEADLINE.get(args.subcommand)
    metrics = [headline] if headline else sorted({r["metric"] for r in report.summary if r["u"] != r["u"]})
    for metric in metrics:
        for row in report.summary:
            if row["metric"] == metric and row["u"] != row["u"]:
                print(f"{metric} n={row['n']} median={format_number(row['median'])} q99={format_number(row['q99'])}")
    for fit in report.fits:
        print(f"fit {fit['fit']}: slope={fit['slope']:.4f} stderr={fit['slope_stderr']:.4f}")
    if args.plots:
        _campaign_plots(config, result, out)
    for fail in report.failures:
        print(f"replica failed (n={fail['n']}, replica={fail['replica']}, seed={fail['seed']}): {fail['error']}",
              file=sys.stderr)
    planned = len(config.ns) * config.replicas
    if report.failures and len(report.failures) / planned > config.max_failure_fraction:
        print(f"error: {len(report.failures)} of {planned} replicas failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _campaign_plots(config, result, out):
    from .lawcheck import scaling_fit
    from .plotting import emit_plot

    report = result.report
    scalar = {}
    for row in report.summary:
        if row["u"] != row["u"]:
            scalar.setdefault(row["metric"], []).append((row["n"], row["median"]))
    for metric, pts in scalar.items():
        x, y = np.array(pts).T
        fit = scaling_fit(x, y) if x.size >= 3 and np.all(y > 0) else None
        emit_plot({f"median {metric}": (x, y)}, "loglog", out / f"{metric}_vs_n.svg", fit=fit)
    if "esd" in config.metrics:
        n = config.ns[-1]
        first = next(r for r in sorted(result.records, key=lambda r: (r.n, r.replica)) if r.n == n and r.status == "ok")
        _overlay_plot({n: first.metrics["eigenvalues"]}, out / "esd_overlay.svg")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        metrics = None
        if args.subcommand in CAMPAIGNS:
            metrics = CAMPAIGNS[args.subcommand]
        elif args.subcommand == "identities" or args.subcommand == "sample":
            metrics = ("ks",)
        if args.subcommand == "scaling" and args.config is None:
            metrics = _BASE_CONFIG["metrics"]
        config = resolve_config(args, metrics)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1", "workers")
        out = _out_dir(config)
        if args.subcommand == "sample":
            return _cmd_sample(args, config, out)
        if args.subcommand == "identities":
            return _cmd_identities(args, config, out)
        return _cmd_campaign(args, config, out)
    except ConfigError as exc:
        field = f" [field: {exc.field}]" if getattr(exc, "field", None) else ""
        print(f"configuration error{field}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except harness.CampaignAborted as exc:
        print(f"campaign aborted: {exc}", file=sys.stderr)
        return EXIT_IO
    except WignerLabError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
