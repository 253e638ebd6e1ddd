import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wignerlab import harness
from wignerlab.errors import ConfigError, NumericalError
from wignerlab.harness import CampaignConfig, ReplicaRecord, aggregate, derive_seed, run_campaign


def small_config(**kw):
    base = dict(ensemble={"name": "rademacher"}, ns=[16, 24, 32], replicas=3, seed=5, metrics=["ks", "esd", "rigidity"])
    base.update(kw)
    return CampaignConfig(**base)


def test_derive_seed_frozen():
    # blake2b-64 of "master:n:replica", little-endian
    assert derive_seed(0, 128, 0) == 9063053678065082660
    assert derive_seed(12345, 1024, 49) == 5544896373527025651
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.integers(2, 4096), min_size=1, max_size=5, unique=True),
    st.integers(1, 500),
    st.integers(0, 2**63),
    st.sets(st.sampled_from(harness.METRICS), min_size=1),
)
def test_config_round_trip(ns, replicas, seed, metrics):
    metrics = metrics - {"locallaw"}
    if not metrics:
        metrics = {"ks"}
    cfg = CampaignConfig({"name": "pareto", "delta": 0.5}, sorted(ns), replicas, seed, tuple(metrics))
    again = CampaignConfig.loads(cfg.dumps())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


@pytest.mark.parametrize(
    "patch,field",
    [
        ({"replicas": 0}, "replicas"),
        ({"ns": [32, 16]}, "n"),
        ({"ns": []}, "n"),
        ({"metrics": ["bogus"]}, "metrics"),
        ({"ensemble": {"name": "nope"}}, "ensemble.name"),
        ({"grid": {"Vmax": 1.0}}, "grid.Vmax"),
        ({"metrics": ["locallaw"], "ns": [8]}, "grid"),
    ],
)
def test_config_errors_name_field(patch, field):
    with pytest.raises(ConfigError) as info:
        small_config(**patch)
    assert info.value.field == field


def test_from_dict_rejects_unknown_and_missing():
    with pytest.raises(ConfigError) as info:
        CampaignConfig.from_dict({"ensemble": "gaussian", "ns": [8], "replicas": 1, "seed": 0, "colour": 1})
    assert info.value.field == "colour"
    with pytest.raises(ConfigError) as info:
        CampaignConfig.from_dict({"ensemble": "gaussian", "ns": [8], "replicas": 1})
    assert info.value.field == "seed"
    with pytest.raises(ConfigError):
        CampaignConfig.from_dict({"schema_version": 99})


def test_single_replica_report_equals_record():
    cfg = small_config(ns=[20], replicas=1, metrics=["ks", "deloc"])
    result = run_campaign(cfg)
    rec = result.records[0]
    for metric in ("ks", "deloc"):
        for col in ("mean", "median", "q90", "q99"):
            assert result.report.value(20, metric, col) == rec.metrics[metric]


def test_worker_count_invariance(tmp_path):
    cfg = small_config(metrics=["ks", "esd", "rigidity", "deloc", "locallaw", "window"], ns=[32, 40, 48])
    one = run_campaign(cfg, workers=1)
    two = run_campaign(cfg, workers=2, records_path=tmp_path / "rec.jsonl")
    assert one.report.tables() == two.report.tables()
    assert one.report.digest() == two.report.digest()
    lines = (tmp_path / "rec.jsonl").read_text().splitlines()
    assert len(lines) == 9
    parsed = sorted((ReplicaRecord.from_json(line) for line in lines), key=lambda r: (r.n, r.replica))
    assert [r.metrics for r in parsed] == [r.metrics for r in sorted(one.records, key=lambda r: (r.n, r.replica))]
    manifest = json.loads((tmp_path / "rec.manifest.json").read_text())
    assert manifest["status"] == "complete" and manifest["failures"] == 0
    assert manifest["config_hash"] == cfg.config_hash()


def _rec(n, r, **metrics):
    return ReplicaRecord(n, r, derive_seed(0, n, r), metrics)


def test_aggregate_midpoint_median_and_constants():
    cfg = small_config(ns=[16], metrics=["ks"])
    report = aggregate([_rec(16, 0, ks=1.0), _rec(16, 1, ks=3.0)], cfg)
    assert report.value(16, "ks", "median") == 2.0
    assert report.value(16, "ks", "mean") == 2.0
    const = aggregate([_rec(16, r, ks=0.25) for r in range(5)], cfg)
    row = next(r for r in const.summary if r["metric"] == "ks")
    assert row["mean"] == row["median"] == row["q90"] == row["q99"] == 0.25


def test_aggregate_is_order_independent():
    cfg = small_config(ns=[16], metrics=["ks"])
    recs = [_rec(16, r, ks=0.1 * r + 0.05) for r in range(7)]
    assert aggregate(recs, cfg).digest() == aggregate(recs[::-1], cfg).digest()


def test_aggregate_schema_mismatch_lists_records():
    cfg = small_config(ns=[16], metrics=["ks"])
    with pytest.raises(harness.SchemaError, match=r"\(16, 2\)"):
        aggregate([_rec(16, 0, ks=1.0), _rec(16, 1, ks=2.0), _rec(16, 2, deloc=1.0)], cfg)


def test_moment_envelope_ratio_rows():
    cfg = small_config(ns=[64, 128, 512], replicas=2, metrics=["locallaw"], p_values=(1, 2, 4))
    report = run_campaign(cfg).report
    ps = {row["p"] for row in report.moments if row["n"] == 64}
    assert ps == {1, 2, 4}
    for row in report.moments:
        assert row["p"] <= math.log(row["n"])
        assert row["envelope"] == pytest.approx((row["p"] / (row["n"] * row["v"])) ** row["p"])
        assert row["ratio"] == pytest.approx(row["moment"] / row["envelope"])
    assert report.fit("locallaw_v_n512")["points"] >= 3


def test_failed_replica_is_recorded(monkeypatch):
    real = harness._metrics_for

    def flaky(config, n, spec):
        if n == 24:
            raise NumericalError("synthetic breakdown")
        return real(config, n, spec)

    monkeypatch.setattr(harness, "_metrics_for", flaky)
    result = run_campaign(small_config())
    failures = result.report.failures
    assert [(f["n"], f["replica"]) for f in failures] == [(24, 0), (24, 1), (24, 2)]
    assert "synthetic breakdown" in failures[0]["error"]
    ok = [r for r in result.records if r.status == "ok"]
    assert len(ok) == 3 * 3 - len(failures)


def test_persistence_failure_writes_partial_manifest(tmp_path):
    manifest = tmp_path / "manifest.json"
    with pytest.raises(harness.CampaignAborted):
        run_campaign(small_config(), records_path="/dev/full", manifest_path=manifest)
    body = json.loads(manifest.read_text())
    assert body["status"] == "aborted"
    assert body["planned"] == 9
    assert len(body["completed"]) >= 1


def test_table_format_golden():
    text = harness.write_table(("n", "x"), [{"n": 3, "x": 0.1}, {"n": 4, "x": float("nan")}], {"config_hash": "ab", "schema_version": 1})
    assert text == "# config_hash=ab\n# schema_version=1\nn,x\n3,0.10000000000000001\n4,nan\n"


def test_column_schemas_golden():
    assert harness.SUMMARY_COLUMNS == ("n", "metric", "u", "v", "count", "mean", "median", "q90", "q99")
    assert harness.MOMENT_COLUMNS == ("n", "metric", "u", "v", "p", "moment", "envelope", "ratio")
    assert harness.FIT_COLUMNS == ("fit", "x", "y", "slope", "intercept", "max_residual", "slope_stderr", "points")
    assert harness.FAILURE_COLUMNS == ("n", "replica", "seed", "error")
    assert harness.SCHEMA_VERSION == 1
