"""Render labeled approaches to PNG patches and write per-config manifests."""

from __future__ import annotations

import hashlib
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InsufficientSamples
from .georaster import GeoRaster, PixelWindow
from .render import (
    DatasetConfig,
    RenderStyle,
    encode_png,
    render_blurred,
    render_overlaid,
    render_plain,
    render_vector_layer,
)
from .roads import CROSSWALK, LABELS, NOT_CROSSWALK, Approach

MANIFEST_NAME = "manifest.json"


def sample_id(raster_digest: str, window: PixelWindow, approach_key: str) -> str:
    """Stable id for one approach in one window; identical across configs."""
    h = hashlib.sha256()
    h.update(f"{raster_digest}|{window.x0},{window.y0},{window.size}|{approach_key}".encode())
    return h.hexdigest()[:20]


@dataclass
class PatchSample:
    sample_id: str
    config: DatasetConfig
    window: PixelWindow
    approach_key: str
    node_id: int
    way_id: int
    lat: float
    lon: float
    truth_label: str | None
    truth_source: str
    images: list[str] = field(default_factory=list)
    image_sha256: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "config": self.config.value,
            "window": self.window.as_list(),
            "approach": self.approach_key,
            "node_id": self.node_id,
            "way_id": self.way_id,
            "lat": self.lat,
            "lon": self.lon,
            "truth_label": self.truth_label,
            "truth_source": self.truth_source,
            "images": self.images,
            "image_sha256": self.image_sha256,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatchSample":
        return cls(
            sample_id=d["sample_id"],
            config=DatasetConfig(d["config"]),
            window=PixelWindow(*d["window"]),
            approach_key=d["approach"],
            node_id=d["node_id"],
            way_id=d["way_id"],
            lat=d["lat"],
            lon=d["lon"],
            truth_label=d["truth_label"],
            truth_source=d["truth_source"],
            images=list(d["images"]),
            image_sha256=list(d["image_sha256"]),
        )


@dataclass
class DatasetManifest:
    config: DatasetConfig
    seed: int
    style: RenderStyle
    samples: list[PatchSample]
    balanced: bool
    inputs: dict[str, str] = field(default_factory=dict)
    root: Path | None = None

    @property
    def class_counts(self) -> dict[str, int]:
        counts = {label: 0 for label in LABELS}
        for s in self.samples:
            if s.truth_label in counts:
                counts[s.truth_label] += 1
        return counts

    def to_json(self) -> str:
        doc = {
            "pipeline_version": __version__,
            "config": self.config.value,
            "seed": self.seed,
            "balanced": self.balanced,
            "inputs": dict(sorted(self.inputs.items())),
            "style": self.style.to_dict(),
            "class_counts": self.class_counts,
            "samples": [s.to_dict() for s in self.samples],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def image_path(self, rel: str) -> Path:
        assert self.root is not None
        return self.root / rel


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    style = {k: tuple(v) if isinstance(v, list) else v for k, v in doc["style"].items()}
    return DatasetManifest(
        config=DatasetConfig(doc["config"]),
        seed=doc["seed"],
        style=RenderStyle(**style),
        samples=[PatchSample.from_dict(s) for s in doc["samples"]],
        balanced=doc["balanced"],
        inputs=doc.get("inputs", {}),
        root=path.parent.parent,
    )


def render_images(
    config: DatasetConfig,
    raster: GeoRaster,
    approach: Approach,
    style: RenderStyle,
    keep_sharp: list[list[tuple[float, float]]] | None = None,
) -> list[np.ndarray]:
    window = approach.window
    line = approach.pixel_centerline(raster)
    if config is DatasetConfig.PLAIN:
        return [render_plain(raster, window)]
    if config is DatasetConfig.SEPARATED:
        return [render_plain(raster, window), render_vector_layer(line, window.size, style)]
    if config is DatasetConfig.OVERLAID:
        return [render_overlaid(raster, window, line, style)]
    return [render_blurred(raster, window, line, style, keep_sharp)]


def select_samples(
    approaches: list[Approach],
    raster_digest: str,
    target: int | None,
    seed: int,
) -> list[tuple[str, Approach]]:
    """Seeded per-class sample; returns (sample_id, approach) sorted by id.

    With ``target=None`` every labeled approach is returned.
    """
    by_class: dict[str, list[tuple[str, Approach]]] = {label: [] for label in LABELS}
    for a in approaches:
        if a.truth_label in by_class:
            by_class[a.truth_label].append((sample_id(raster_digest, a.window, a.key), a))
    for items in by_class.values():
        items.sort(key=lambda t: t[0])

    if target is None:
        chosen = [t for items in by_class.values() for t in items]
    else:
        available = {label: len(items) for label, items in by_class.items()}
        if any(n < target for n in available.values()):
            raise InsufficientSamples(available, target)
        rng = random.Random(seed)
        chosen = []
        for label in (CROSSWALK, NOT_CROSSWALK):
            chosen.extend(rng.sample(by_class[label], target))
    return sorted(chosen, key=lambda t: t[0])


def _sharp_lines(raster: GeoRaster, approaches: list[Approach]) -> dict[tuple, list]:
    groups: dict[tuple, list] = {}
    for a in approaches:
        groups.setdefault((a.node_id, a.window), []).append(a.pixel_centerline(raster))
    return groups


def build_dataset(
    config: DatasetConfig | str,
    approaches: list[Approach],
    raster: GeoRaster,
    root: str | Path,
    *,
    target: int | None = 100,
    seed: int = 0,
    style: RenderStyle = RenderStyle(),
    inputs: dict[str, str] | None = None,
    workers: int = 1,
) -> DatasetManifest:
    """Render a (balanced by default) dataset under ``root/<config>/``.

    Patches land at ``<config>/<label>/<sample_id>.png`` (Separated also writes
    ``<sample_id>.vector.png``) and the manifest at ``<config>/manifest.json``.
    """
    config = DatasetConfig(config)
    root = Path(root)
    chosen = select_samples(approaches, raster.digest, target, seed)
    sharp = _sharp_lines(raster, approaches)

    def work(item: tuple[str, Approach]) -> PatchSample:
        sid, a = item
        images = render_images(config, raster, a, style, sharp[(a.node_id, a.window)])
        rels, digests = [], []
        for k, img in enumerate(images):
            suffix = ".png" if k == 0 else ".vector.png"
            rel = f"{config.value}/{a.truth_label}/{sid}{suffix}"
            data = encode_png(img)
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
            rels.append(rel)
            digests.append(hashlib.sha256(data).hexdigest())
        return PatchSample(
            sample_id=sid,
            config=config,
            window=a.window,
            approach_key=a.key,
            node_id=a.node_id,
            way_id=a.way_id,
            lat=a.location.lat,
            lon=a.location.lon,
            truth_label=a.truth_label,
            truth_source=a.truth_source,
            images=rels,
            image_sha256=digests,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(work, chosen))
    else:
        samples = [work(item) for item in chosen]

    manifest = DatasetManifest(
        config=config,
        seed=seed,
        style=style,
        samples=samples,
        balanced=target is not None,
        inputs={"raster": raster.digest, **(inputs or {})},
        root=root,
    )
    out = root / config.value / MANIFEST_NAME
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(manifest.to_json(), encoding="utf-8")
    return manifest
