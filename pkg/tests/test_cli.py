from __future__ import annotations

import json

import pytest

from conftest import SYNTHETIC, SYNTHETIC_SEED, SYNTHETIC_TARGET
from crosswalk_vlm.cli import main, read_config_file
from crosswalk_vlm.roads import parse_osm
from crosswalk_vlm.verdict import UNPARSEABLE

BUILD = [
    "build",
    "--raster", str(SYNTHETIC / "raster.tif"),
    "--osm", str(SYNTHETIC / "roads.osm"),
    "--overrides", str(SYNTHETIC / "overrides.json"),
    "--seed", str(SYNTHETIC_SEED),
    "--target", str(SYNTHETIC_TARGET),
]


def replay(config: str) -> list[str]:
    return ["label", "--config", config, "--mode", "replay", "--transcripts", str(SYNTHETIC / "transcripts")]


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    assert main(BUILD + ["--dataset", str(root), "--configs", "overlaid,plain"]) == 0
    assert main(replay("overlaid") + ["--dataset", str(root)]) == 0
    return root


def test_missing_osm_is_usage_error(tmp_path, capsys):
    code = main(["build", "--dataset", str(tmp_path), "--raster", str(SYNTHETIC / "raster.tif"), "--osm", str(tmp_path / "nope.osm")])
    assert code == 1
    assert "not found" in capsys.readouterr().err


def test_bad_flag_value_is_usage_error(tmp_path):
    assert main(BUILD + ["--dataset", str(tmp_path), "--seed", "x"]) == 1
    assert main(BUILD + ["--dataset", str(tmp_path), "--configs", "sepia"]) == 1
    with pytest.raises(SystemExit) as info:
        main(["label", "--mode", "telepathy"])
    assert info.value.code == 1


def test_build_is_reproducible(tmp_path, built):
    assert main(BUILD + ["--dataset", str(tmp_path), "--configs", "overlaid,plain"]) == 0
    for config in ("overlaid", "plain"):
        assert (tmp_path / config / "manifest.json").read_bytes() == (built / config / "manifest.json").read_bytes()
    manifest = json.loads((tmp_path / "overlaid/manifest.json").read_text())
    assert manifest["class_counts"] == {"crosswalk": 8, "not-crosswalk": 8}


def test_label_then_eval(built, capsys):
    verdicts = json.loads((built / "overlaid/verdicts.json").read_text())
    assert len(verdicts["records"]) == 16
    assert all("verdict" in r for r in verdicts["records"])

    capsys.readouterr()
    assert main(["eval", "--dataset", str(built), "--config", "overlaid"]) == 0
    out = capsys.readouterr().out
    assert "overlaid" in out and "policy=lenient" in out
    report = json.loads((built / "overlaid/report.json").read_text())
    assert report["metrics"]["confusion"] == {"tp": 5, "fp": 1, "tn": 7, "fn": 3}
    lines = (built / "overlaid/misclassifications.jsonl").read_text().splitlines()
    assert "_meta" in json.loads(lines[0])
    assert len(lines) - 1 == 4


def test_strict_policy_excludes_unparseable(built, capsys):
    records = json.loads((built / "overlaid/verdicts.json").read_text())["records"]
    bad = sum(r["verdict"]["label"] == UNPARSEABLE for r in records)
    assert bad > 0
    assert main(["eval", "--dataset", str(built), "--config", "overlaid", "--policy", "strict"]) == 0
    strict = json.loads((built / "overlaid/report.json").read_text())["metrics"]
    assert strict["excluded"] == bad
    assert sum(strict["confusion"].values()) == 16 - bad
    assert main(["eval", "--dataset", str(built), "--config", "overlaid"]) == 0
    lenient = json.loads((built / "overlaid/report.json").read_text())["metrics"]
    assert lenient["excluded"] == 0


def test_eval_without_verdicts(built, tmp_path):
    assert main(["eval", "--dataset", str(built), "--config", "plain"]) == 1


def test_empty_verdicts_is_data_error(built, tmp_path, capsys):
    root = tmp_path / "copy"
    (root / "plain").mkdir(parents=True)
    manifest = json.loads((built / "plain/manifest.json").read_text())
    (root / "plain/manifest.json").write_text(json.dumps(manifest))
    (root / "plain/verdicts.json").write_text(json.dumps({"config": "plain", "records": []}))
    assert main(["eval", "--dataset", str(root), "--config", "plain"]) == 2
    assert "no verdicts" in capsys.readouterr().err


def test_replay_miss_is_gateway_error(built, tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    code = main(["label", "--dataset", str(built), "--config", "plain", "--mode", "replay", "--transcripts", str(tmp_path / "empty")])
    assert code == 3
    assert "replay misses" in capsys.readouterr().err
    (built / "plain/verdicts.json").unlink()


def test_export_osm_round_trip(built, tmp_path):
    out = tmp_path / "change.osc"
    assert main(["export-osm", "--dataset", str(built), "--config", "overlaid", "--out", str(out)]) == 0
    graph = parse_osm(out.read_bytes())
    manifest = json.loads((built / "overlaid/manifest.json").read_text())
    by_id = {s["sample_id"]: s for s in manifest["samples"]}
    exported = {graph.node_tags[n]["detection:sample"]: graph.nodes[n] for n in graph.crossing_nodes()}
    assert len(exported) == 6  # tp + fp under the lenient policy
    for sid, point in exported.items():
        assert abs(point.lat - by_id[sid]["lat"]) <= 1e-7
        assert abs(point.lon - by_id[sid]["lon"]) <= 1e-7
    assert all(n < 0 for n in graph.crossing_nodes())


def test_report_lists_evaluated_configs(built, capsys):
    assert main(["eval", "--dataset", str(built), "--config", "overlaid"]) == 0
    capsys.readouterr()
    assert main(["report", "--dataset", str(built)]) == 0
    out = capsys.readouterr().out
    assert "overlaid" in out and "plain" not in out
    assert (built / "report.txt").read_text() == out


def test_report_without_evals(tmp_path):
    assert main(["report", "--dataset", str(tmp_path)]) == 1


def test_show_prompt(capsys):
    assert main(["show-prompt", "--config", "overlaid"]) == 0
    out = capsys.readouterr().out
    assert "CROSSWALK:" in out and "--- user ---" in out
    assert main(["show-prompt"]) == 1
    assert main(["show-prompt", "--config", "sepia"]) == 1


def test_config_file(tmp_path, built):
    cfg = tmp_path / "run.conf"
    cfg.write_text(
        "# synthetic run\n"
        f"raster = {SYNTHETIC / 'raster.tif'}\n"
        f"osm = {SYNTHETIC / 'roads.osm'}\n"
        f"overrides = {SYNTHETIC / 'overrides.json'}\n"
        f"seed = {SYNTHETIC_SEED}\n"
        "target = 3   # overridden below\n"
        "configs = overlaid\n"
        "line-width = 3\n"
    )
    assert read_config_file(cfg)["line_width"] == "3"
    out = tmp_path / "ds"
    assert main(["--config-file", str(cfg), "build", "--dataset", str(out), "--target", str(SYNTHETIC_TARGET)]) == 0
    assert (out / "overlaid/manifest.json").read_bytes() == (built / "overlaid/manifest.json").read_bytes()
    assert not (out / "plain").exists()


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "bad.conf"
    cfg.write_text("colour = red\n")
    assert main(["--config-file", str(cfg), "show-prompt", "--config", "plain"]) == 1
    assert main(["--config-file", str(tmp_path / "missing.conf"), "show-prompt", "--config", "plain"]) == 1


def test_api_key_flag_takes_env_name_only(tmp_path, built, monkeypatch):
    monkeypatch.delenv("CROSSWALK_TEST_KEY", raising=False)
    code = main(["label", "--dataset", str(built), "--config", "overlaid", "--mode", "live", "--api-key-env", "CROSSWALK_TEST_KEY", "--max-attempts", "1"])
    assert code == 3
    # the failed run rewrote verdicts with errors; restore them from replay
    assert main(replay("overlaid") + ["--dataset", str(built)]) == 0
