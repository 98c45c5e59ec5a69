from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from crosswalk_vlm.georaster import GeoRaster
from crosswalk_vlm.pipeline import PipelineConfig

FIXTURES = Path(__file__).parent / "fixtures"
SYNTHETIC = FIXTURES / "synthetic"
RATIONALES = FIXTURES / "rationales"

# values the fixture transcripts were recorded with (see fixtures/make_synthetic.py)
SYNTHETIC_TARGET = 8
SYNTHETIC_SEED = 7


def synthetic_config(root: Path, **kw) -> PipelineConfig:
    from crosswalk_vlm.gateway import GatewayConfig

    params = dict(
        dataset_root=root,
        raster=SYNTHETIC / "raster.tif",
        osm=SYNTHETIC / "roads.osm",
        overrides=SYNTHETIC / "overrides.json",
        target=SYNTHETIC_TARGET,
        seed=SYNTHETIC_SEED,
        gateway=GatewayConfig(mode="replay", transcript_dir=SYNTHETIC / "transcripts"),
    )
    params.update(kw)
    return PipelineConfig(**params)


def make_raster(pixels: np.ndarray, origin=(500_000.0, 4_400_000.0), epsg: int = 32616) -> GeoRaster:
    return GeoRaster(pixels=pixels, pixel_size=(1.0, 1.0), origin=origin, epsg=epsg)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def noise_raster(rng) -> GeoRaster:
    return make_raster(rng.integers(0, 256, size=(512, 512, 3), dtype=np.uint8))
