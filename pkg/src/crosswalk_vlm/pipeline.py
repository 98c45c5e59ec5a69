"""End-to-end commands: build datasets, label them, evaluate, export."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .dataset import MANIFEST_NAME, DatasetManifest, build_dataset, load_manifest
from .errors import EmptyInput, GatewayError, InputPathError, ReplayMiss
from .evaluation import (
    ConfusionMatrix,
    MetricsReport,
    confusion,
    format_table,
    metrics,
    misclassification_report,
    to_jsonl,
)
from .gateway import Gateway, GatewayConfig
from .georaster import load_raster
from .osm_export import export_crossings
from .prompts import assemble, build_template
from .render import DatasetConfig, RenderStyle
from .roads import (
    best_window,
    derive_truth,
    enumerate_approaches,
    find_intersections,
    load_overrides,
    parse_osm,
)
from .verdict import EXCLUDED, LENIENT, Verdict, parse_response, to_prediction

log = logging.getLogger(__name__)

VERDICTS_NAME = "verdicts.json"
REPORT_NAME = "report.json"
REPORT_TEXT_NAME = "report.txt"
ERRORS_NAME = "misclassifications.jsonl"


@dataclass
class PipelineConfig:
    dataset_root: Path
    raster: Path | None = None
    osm: Path | None = None
    overrides: Path | None = None
    configs: tuple[DatasetConfig, ...] = tuple(DatasetConfig)
    style: RenderStyle = field(default_factory=RenderStyle)
    gateway: GatewayConfig = field(default_factory=lambda: GatewayConfig(mode="live"))
    seed: int = 0
    target: int | None = 100
    size: int = 256
    stride: int | None = None
    workers: int = 1
    policy: str = LENIENT


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise InputPathError(f"no {what} path given")
    if not Path(path).is_file():
        raise InputPathError(f"{what} not found: {path}")
    return Path(path)


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def cmd_build(cfg: PipelineConfig) -> dict[DatasetConfig, DatasetManifest]:
    raster_path = _require(cfg.raster, "raster")
    osm_path = _require(cfg.osm, "OSM extract")
    overrides_path = _require(cfg.overrides, "override manifest") if cfg.overrides else None

    raster = load_raster(raster_path)
    with open(osm_path, "rb") as fh:
        graph = parse_osm(fh)
    overrides = load_overrides(overrides_path) if overrides_path else []

    stride = cfg.stride or cfg.size
    approaches = []
    for inter in find_intersections(graph, raster.epsg):
        window = best_window(raster, inter, cfg.size, stride)
        if window is not None:
            approaches.extend(enumerate_approaches(inter, window, raster))
    labeled = derive_truth(graph, approaches, overrides)
    log.info("%d approaches labeled", len(labeled))

    inputs = {"raster": raster.digest, "osm": file_sha256(osm_path)}
    if overrides_path:
        inputs["overrides"] = file_sha256(overrides_path)

    root = Path(cfg.dataset_root)
    _write_json(
        root / "approaches.json",
        {
            "pipeline_version": __version__,
            "seed": cfg.seed,
            "inputs": inputs,
            "approaches": [
                {
                    "key": a.key,
                    "node_id": a.node_id,
                    "way_id": a.way_id,
                    "window": a.window.as_list(),
                    "truth_label": a.truth_label,
                    "truth_source": a.truth_source,
                }
                for a in labeled
            ],
        },
    )
    return {
        c: build_dataset(
            c,
            labeled,
            raster,
            root,
            target=cfg.target,
            seed=cfg.seed,
            style=cfg.style,
            inputs=inputs,
            workers=cfg.workers,
        )
        for c in cfg.configs
    }


def _manifest(cfg: PipelineConfig, config: DatasetConfig) -> tuple[DatasetManifest, Path]:
    path = Path(cfg.dataset_root) / config.value / MANIFEST_NAME
    if not path.is_file():
        raise InputPathError(f"no manifest at {path}; run build first")
    return load_manifest(path), path


def cmd_label(cfg: PipelineConfig, config: DatasetConfig, gateway: Gateway | None = None) -> dict:
    """Classify every sample of one config and write ``verdicts.json``.

    Gateway failures are recorded per sample; if any occurred the file is
    still written and a :class:`GatewayError` summarising them is raised.
    """
    config = DatasetConfig(config)
    manifest, manifest_path = _manifest(cfg, config)
    template = build_template(config)
    bundles = [assemble(template, s, manifest.root) for s in manifest.samples]

    own = gateway is None
    gw = gateway or Gateway(cfg.gateway)
    try:
        results = gw.classify_batch(bundles)
    finally:
        if own:
            gw.close()

    records = []
    for res in results:
        rec = {"sample_id": res.sample_id, "bundle_digest": res.digest}
        if res.ok:
            rec["verdict"] = parse_response(res.response).to_dict()
        else:
            rec["error"] = res.error
            rec["error_type"] = res.error_type
        records.append(rec)
    doc = {
        "pipeline_version": __version__,
        "config": config.value,
        "seed": manifest.seed,
        "model": cfg.gateway.model,
        "inputs": {**manifest.inputs, "manifest": file_sha256(manifest_path)},
        "records": records,
    }
    _write_json(manifest_path.parent / VERDICTS_NAME, doc)

    failed = [r for r in results if not r.ok]
    if failed:
        missing = [r.digest for r in failed if r.error_type == ReplayMiss.__name__]
        msg = f"{len(failed)} of {len(results)} samples failed"
        if missing:
            msg += "; replay misses: " + ", ".join(missing)
        raise GatewayError(msg)
    return doc


def _load_verdicts(cfg: PipelineConfig, config: DatasetConfig) -> tuple[dict, dict[str, Verdict]]:
    path = Path(cfg.dataset_root) / config.value / VERDICTS_NAME
    if not path.is_file():
        raise InputPathError(f"no verdicts at {path}; run label first")
    doc = json.loads(path.read_text(encoding="utf-8"))
    verdicts = {r["sample_id"]: Verdict.from_dict(r["verdict"]) for r in doc["records"] if "verdict" in r}
    return doc, verdicts


def cmd_eval(cfg: PipelineConfig, config: DatasetConfig, policy: str | None = None) -> dict:
    config = DatasetConfig(config)
    policy = policy or cfg.policy
    manifest, _ = _manifest(cfg, config)
    vdoc, verdicts = _load_verdicts(cfg, config)
    if not verdicts:
        raise EmptyInput(f"{config.value}: no verdicts to score")

    predictions = {sid: to_prediction(v, policy) for sid, v in verdicts.items()}
    truths = {s.sample_id: s.truth_label for s in manifest.samples}
    excluded = sum(1 for p in predictions.values() if p == EXCLUDED)
    cm = confusion(predictions, truths)
    report = metrics(cm, config=config.value, excluded=excluded, policy=policy)
    errors = misclassification_report(manifest.samples, verdicts, predictions)

    meta = {
        "pipeline_version": __version__,
        "seed": manifest.seed,
        "model": vdoc.get("model"),
        "inputs": vdoc.get("inputs", {}),
    }
    out = Path(cfg.dataset_root) / config.value
    _write_json(out / REPORT_NAME, {**meta, "metrics": report.to_dict()})
    (out / REPORT_TEXT_NAME).write_text(format_table([report]), encoding="utf-8")
    (out / ERRORS_NAME).write_text(to_jsonl([{"_meta": meta}] + errors), encoding="utf-8")
    return {"metrics": report, "misclassifications": errors}


def cmd_export_osm(cfg: PipelineConfig, config: DatasetConfig, policy: str | None = None) -> str:
    config = DatasetConfig(config)
    policy = policy or cfg.policy
    manifest, _ = _manifest(cfg, config)
    vdoc, verdicts = _load_verdicts(cfg, config)
    digests = {r["sample_id"]: r["bundle_digest"] for r in vdoc["records"]}
    positives = [
        {
            "lat": s.lat,
            "lon": s.lon,
            "sample_id": s.sample_id,
            "way_id": s.way_id,
            "bundle_digest": digests.get(s.sample_id),
        }
        for s in manifest.samples
        if s.sample_id in verdicts and to_prediction(verdicts[s.sample_id], policy) == "crosswalk"
    ]
    return export_crossings(
        positives, model=vdoc.get("model", ""), seed=manifest.seed, inputs=vdoc.get("inputs", {})
    )


def cmd_report(cfg: PipelineConfig) -> str:
    reports = []
    for c in DatasetConfig:
        path = Path(cfg.dataset_root) / c.value / REPORT_NAME
        if path.is_file():
            m = json.loads(path.read_text(encoding="utf-8"))["metrics"]
            m["confusion"] = ConfusionMatrix(**m["confusion"])
            m["undefined"] = tuple(m["undefined"])
            reports.append(MetricsReport(**m))
    if not reports:
        raise InputPathError(f"no evaluation reports under {cfg.dataset_root}; run eval first")
    text = format_table(reports)
    (Path(cfg.dataset_root) / REPORT_TEXT_NAME).write_text(text, encoding="utf-8")
    return text
