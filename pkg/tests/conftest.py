import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mvuq import raster


@pytest.fixture
def sentinel_constant_raster():
    """13-band raster where each band is constant at a per-band value."""
    order = ["1", "2", "3", "4", "5", "6", "7", "8", "8A", "9", "11", "12", "10"]
    vals = {lab: (85.0 if lab == "8A" else float(lab)) for lab in order}
    bands = [raster.SENTINEL2_BANDS[lab] for lab in order]
    data = np.stack([np.full((8, 8), vals[lab], dtype=np.uint16) for lab in order])
    return raster.BandRaster(bands, data)


def random_raster(rng: np.random.Generator, height: int = 8, width: int = 8,
                  labels=("1", "2", "3", "4", "8", "11", "12")) -> raster.BandRaster:
    bands = [raster.SENTINEL2_BANDS[lab] for lab in labels]
    data = rng.integers(0, 4096, size=(len(labels), height, width)).astype(np.uint16)
    return raster.BandRaster(bands, data)
