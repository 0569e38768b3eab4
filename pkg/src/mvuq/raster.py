"""Multi-band rasters: loading, normalization, and 3-band view composition."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .containers import bands_sidecar_path, read_btsr, write_btsr
from .errors import FormatError, MissingBand, ShapeMismatch

RAW_MAX = 4095          # 12-bit digital numbers
CLIP_HIGH = 3000.0      # values above are clipped before scaling
SCALE_MAX = 255.0


@dataclass(frozen=True)
class BandId:
    """One spectral band: string label, central wavelength, native resolution."""

    index: str
    wavelength_nm: float
    resolution_m: float


# Sentinel-2 band metadata, in the conventional listing order
# (Cirrus carries index 10 but is listed after SWIR 2).
SENTINEL2_BANDS: dict[str, BandId] = {
    b.index: b
    for b in (
        BandId("1", 443.0, 60.0),    # Coastal Aerosol
        BandId("2", 494.0, 10.0),    # Blue
        BandId("3", 560.0, 10.0),    # Green
        BandId("4", 665.0, 10.0),    # Red
        BandId("5", 703.0, 20.0),    # Red Edge 1
        BandId("6", 740.0, 20.0),    # Red Edge 2
        BandId("7", 782.0, 20.0),    # Red Edge 3
        BandId("8", 835.0, 10.0),    # NIR
        BandId("8A", 864.0, 20.0),   # NIR Narrow
        BandId("9", 945.0, 60.0),    # Water Vapour
        BandId("11", 1610.0, 20.0),  # SWIR 1
        BandId("12", 2190.0, 20.0),  # SWIR 2
        BandId("10", 1375.0, 60.0),  # Cirrus
    )
}


@dataclass(frozen=True)
class ViewSpec:
    """An ordered band triplet rendered as (R, G, B) output channels."""

    name: str
    triplet: tuple[str, str, str]

    def __post_init__(self):
        if len(self.triplet) != 3:
            raise ValueError("a view triplet has exactly 3 bands")


VIEW_PRESETS: dict[str, ViewSpec] = {
    "natural": ViewSpec("natural", ("4", "3", "2")),
    "false_color": ViewSpec("false_color", ("8", "4", "2")),
    "moisture": ViewSpec("moisture", ("12", "1", "3")),
    "agriculture": ViewSpec("agriculture", ("11", "8", "2")),
}


def resolve_view(name: str) -> ViewSpec:
    """Look up a preset view or parse ``custom:<b1,b2,b3>``."""
    if name in VIEW_PRESETS:
        return VIEW_PRESETS[name]
    if name.startswith("custom:"):
        parts = tuple(p.strip() for p in name[len("custom:"):].split(","))
        if len(parts) != 3 or not all(parts):
            raise ValueError(f"custom view needs 3 comma-separated bands, got {name!r}")
        return ViewSpec(name, parts)  # type: ignore[arg-type]
    raise ValueError(f"unknown view {name!r}; presets: {sorted(VIEW_PRESETS)}")


class BandRaster:
    """A multi-band image on a common grid of width x height raw digital numbers.

    Immutable after construction; band grids are keyed by string label so that
    "8A" stays distinct from "8" and the nonmonotone Sentinel-2 listing order
    cannot cause positional mixups.
    """

    def __init__(self, bands: list[BandId], data: np.ndarray,
                 crs_tag: str = "EPSG:4326", origin: tuple[float, float] = (0.0, 0.0),
                 ground_size_m: float = 10000.0):
        data = np.asarray(data)
        if data.ndim != 3:
            raise ShapeMismatch(f"raster data must be (bands, height, width), got {data.shape}")
        if data.shape[0] != len(bands):
            raise ShapeMismatch(f"{len(bands)} band ids for {data.shape[0]} grids")
        labels = [b.index for b in bands]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate band labels in {labels}")
        if data.dtype.kind in "fi" and (data < 0).any():
            raise ValueError("raw digital numbers must be >= 0")
        self.bands = tuple(bands)
        self._index = {b.index: i for i, b in enumerate(bands)}
        self.data = data
        self.data.setflags(write=False)
        self.crs_tag = crs_tag
        self.origin = origin
        self.ground_size_m = float(ground_size_m)

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def band(self, label: str) -> np.ndarray:
        if label not in self._index:
            raise MissingBand(label)
        return self.data[self._index[label]]

    def has_band(self, label: str) -> bool:
        return label in self._index


@dataclass(frozen=True)
class ViewImage:
    """A composed 3-channel view; channels hold normalized reals in [0, 255]."""

    spec: ViewSpec
    channels: np.ndarray  # (3, height, width) float64

    @property
    def height(self) -> int:
        return self.channels.shape[1]

    @property
    def width(self) -> int:
        return self.channels.shape[2]


def normalize_band(raw: np.ndarray) -> np.ndarray:
    """Scale raw digital numbers 0..3000 to 0..255, clipping values above 3000.

    Output stays in float64; quantization happens only at PNG export.
    """
    raw = np.asarray(raw, dtype=np.float64)
    # multiply before dividing: keeps 0/1500/3000 -> 0/127.5/255 bit-exact
    return np.clip(raw, 0.0, CLIP_HIGH) * SCALE_MAX / CLIP_HIGH


def compose_view(raster: BandRaster, spec: ViewSpec) -> ViewImage:
    """Stack the spec's band triplet as normalized (R, G, B) channels."""
    grids = []
    for label in spec.triplet:
        grids.append(raster.band(label))
    shape = grids[0].shape
    for g, label in zip(grids[1:], spec.triplet[1:]):
        if g.shape != shape:
            raise ShapeMismatch(
                f"band {label!r} grid {g.shape} differs from {shape}; resample first")
    channels = np.stack([normalize_band(g) for g in grids])
    return ViewImage(spec=spec, channels=channels)


def upsample_nearest(grid: np.ndarray, target_hw: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor upsample of a coarse band grid onto a finer grid."""
    h, w = grid.shape
    th, tw = target_hw
    rows = np.minimum((np.arange(th) * h) // th, h - 1)
    cols = np.minimum((np.arange(tw) * w) // tw, w - 1)
    return grid[np.ix_(rows, cols)]


# --- persistence ---------------------------------------------------------

def save_raster(raster: BandRaster, path: str | os.PathLike) -> None:
    """Write a raster as rank-3 BTSR (u16) plus a band-label sidecar."""
    write_btsr(path, raster.data.astype(np.uint16))
    sidecar = {
        "bands": [b.index for b in raster.bands],
        "crs_tag": raster.crs_tag,
        "origin": list(raster.origin),
        "ground_size_m": raster.ground_size_m,
    }
    bands_sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_raster(path: str | os.PathLike) -> BandRaster:
    """Read a BTSR raster and resolve its band labels via the sidecar."""
    data = read_btsr(path)
    if data.ndim != 3:
        raise FormatError(f"raster container must be rank 3, got rank {data.ndim}")
    sidecar_file = bands_sidecar_path(path)
    if not sidecar_file.exists():
        raise FormatError(f"missing band sidecar {sidecar_file}")
    sidecar = json.loads(sidecar_file.read_text())
    labels = sidecar.get("bands")
    if not isinstance(labels, list) or len(labels) != data.shape[0]:
        raise FormatError(
            f"sidecar lists {labels if labels is None else len(labels)} bands "
            f"for {data.shape[0]} grids")
    bands = []
    for entry in labels:
        if isinstance(entry, dict):
            bands.append(BandId(str(entry["label"]), float(entry["wavelength_nm"]),
                                float(entry["resolution_m"])))
        else:
            label = str(entry)
            if label not in SENTINEL2_BANDS:
                raise FormatError(
                    f"unknown band label {label!r}; give explicit metadata in the sidecar")
            bands.append(SENTINEL2_BANDS[label])
    return BandRaster(
        bands, data,
        crs_tag=str(sidecar.get("crs_tag", "EPSG:4326")),
        origin=tuple(sidecar.get("origin", (0.0, 0.0))),  # type: ignore[arg-type]
        ground_size_m=float(sidecar.get("ground_size_m", 10000.0)),
    )


def quantize_channels(channels: np.ndarray) -> np.ndarray:
    """Round normalized channels to 8-bit, half to even (127.5 -> 128)."""
    return np.clip(np.rint(channels), 0, 255).astype(np.uint8)


def save_view_png(view: ViewImage, path: str | os.PathLike) -> None:
    """Export a view as 8-bit RGB PNG."""
    rgb = quantize_channels(view.channels)
    Image.fromarray(np.moveaxis(rgb, 0, -1), mode="RGB").save(path, format="PNG")


def save_view_btsr(view: ViewImage, path: str | os.PathLike) -> None:
    """Export a view losslessly as rank-3 BTSR (f64) with its triplet sidecar."""
    write_btsr(path, view.channels.astype(np.float64))
    sidecar = {"bands": [{"label": lab,
                          "wavelength_nm": SENTINEL2_BANDS[lab].wavelength_nm
                          if lab in SENTINEL2_BANDS else float("nan"),
                          "resolution_m": SENTINEL2_BANDS[lab].resolution_m
                          if lab in SENTINEL2_BANDS else float("nan")}
                         for lab in view.spec.triplet],
               "view_name": view.spec.name}
    bands_sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))
