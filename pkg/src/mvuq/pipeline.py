"""Declarative end-to-end pipeline: compose -> featurize -> fuse -> fit ->
predict -> evaluate -> (optional) krige.

Configuration is TOML with flat stage-named sections; every artifact carries
a provenance block (config hash, seed, package version) and re-running an
identical config produces byte-identical reports.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__, bayes, featurize, geoviz, hetero, raster, regress, uqmetrics
from .errors import ConfigError, StageError

DEFAULT_VIEWS = ("natural", "false_color", "moisture", "agriculture")


@dataclass
class PipelineConfig:
    raster_dir: str | None = None
    feature_files: list[str] = field(default_factory=list)
    targets_path: str = ""
    views: list[str] = field(default_factory=lambda: list(DEFAULT_VIEWS))
    n_filters: int = 128
    patch_size: int = 3
    stride: int | None = None
    featurizer_seed: int = 17
    models: list[str] = field(default_factory=lambda: ["mean", "ridge_cv"])
    folds: int = 5
    seed: int = 7
    output_dir: str = "out"
    clamp_01: bool = False
    alpha: float = 0.95
    krige_enabled: bool = False
    krige_value_col: str = "mu"
    krige_res_km: float = 1.0
    krige_model: str = ""
    jobs: int | None = None
    blr_draws: int = 1500
    blr_warmup: int = 500
    blr_chains: int = 4
    blr_prior: str = "half_t_shrinkage"
    hetero_lr: float = 1e-2
    hetero_epochs: int = 2000

    def canonical(self) -> dict:
        return {k: v for k, v in sorted(self.__dict__.items())}

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str | os.PathLike) -> PipelineConfig:
    """Parse the TOML file and apply environment overrides."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc

    cfg = PipelineConfig()
    inputs = raw.get("inputs", {})
    cfg.raster_dir = inputs.get("raster_dir")
    cfg.feature_files = list(inputs.get("features", []))
    cfg.targets_path = inputs.get("targets", "")
    cfg.views = list(raw.get("views", {}).get("names", cfg.views))
    fz = raw.get("featurizer", {})
    cfg.n_filters = int(fz.get("filters", cfg.n_filters))
    cfg.patch_size = int(fz.get("patch_size", cfg.patch_size))
    cfg.stride = int(fz["stride"]) if "stride" in fz else None
    cfg.featurizer_seed = int(fz.get("seed", cfg.featurizer_seed))
    cfg.models = list(raw.get("models", {}).get("names", cfg.models))
    cv = raw.get("cv", {})
    cfg.folds = int(cv.get("folds", cfg.folds))
    cfg.seed = int(cv.get("seed", cfg.seed))
    rep = raw.get("report", {})
    cfg.clamp_01 = bool(rep.get("clamp_01", cfg.clamp_01))
    cfg.alpha = float(rep.get("alpha", cfg.alpha))
    cfg.output_dir = raw.get("output", {}).get("dir", cfg.output_dir)
    kr = raw.get("krige", {})
    cfg.krige_enabled = bool(kr.get("enabled", False))
    cfg.krige_value_col = kr.get("value_col", cfg.krige_value_col)
    cfg.krige_res_km = float(kr.get("res_km", cfg.krige_res_km))
    cfg.krige_model = kr.get("model", "")
    blr = raw.get("blr", {})
    cfg.blr_draws = int(blr.get("draws", cfg.blr_draws))
    cfg.blr_warmup = int(blr.get("warmup", cfg.blr_warmup))
    cfg.blr_chains = int(blr.get("chains", cfg.blr_chains))
    cfg.blr_prior = blr.get("prior", cfg.blr_prior)
    het = raw.get("hetero", {})
    cfg.hetero_lr = float(het.get("lr", cfg.hetero_lr))
    cfg.hetero_epochs = int(het.get("epochs", cfg.hetero_epochs))

    if os.environ.get("MVUQ_SEED"):
        cfg.seed = int(os.environ["MVUQ_SEED"])
    if os.environ.get("MVUQ_JOBS"):
        cfg.jobs = int(os.environ["MVUQ_JOBS"])
    return cfg


def read_targets_csv(path: str | os.PathLike) -> dict[str, dict]:
    """location_id -> {"target": float, "lon": float|None, "lat": float|None}."""
    out: dict[str, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "location_id" not in reader.fieldnames \
                or "target" not in reader.fieldnames:
            raise ConfigError(f"{path}: needs columns location_id,target")
        for row in reader:
            rec = {"target": float(row["target"]),
                   "lon": float(row["lon"]) if row.get("lon") else None,
                   "lat": float(row["lat"]) if row.get("lat") else None}
            out[str(row["location_id"])] = rec
    if not out:
        raise ConfigError(f"{path}: no target rows")
    return out


def validate_config(cfg: PipelineConfig) -> list[str]:
    """Pre-run diagnostics; raises ConfigError on fatal defects, returns warnings."""
    warnings_: list[str] = []
    if not cfg.feature_files and not cfg.raster_dir:
        raise ConfigError("inputs: need raster_dir or features")
    if not cfg.models:
        raise ConfigError("models: need at least one model")
    if cfg.folds < 2:
        raise ConfigError("cv.folds must be >= 2")
    for kind in cfg.models:
        if kind not in uqmetrics.KNOWN_MODELS:
            raise ConfigError(
                f"unknown model {kind!r}; valid: {', '.join(uqmetrics.KNOWN_MODELS)}")
    if not cfg.targets_path:
        raise ConfigError("inputs.targets is required")
    if not Path(cfg.targets_path).exists():
        raise ConfigError(f"targets file missing: {cfg.targets_path}")
    for f in cfg.feature_files:
        if not Path(f).exists():
            raise ConfigError(f"feature file missing: {f}")
    if cfg.raster_dir:
        rdir = Path(cfg.raster_dir)
        if not rdir.is_dir():
            raise ConfigError(f"raster dir missing: {cfg.raster_dir}")
        rasters = sorted(rdir.glob("*.btsr"))
        if not rasters:
            raise ConfigError(f"no .btsr rasters in {cfg.raster_dir}")
        if not cfg.views:
            raise ConfigError("views: need at least one view when composing rasters")
        # sidecar-only consistency check (never touches payload data)
        for rp in rasters:
            side = rp.with_name(rp.stem + ".bands.json")
            if not side.exists():
                raise ConfigError(f"missing band sidecar for {rp}")
            labels = {str(e if not isinstance(e, dict) else e.get("label"))
                      for e in json.loads(side.read_text()).get("bands", [])}
            for view_name in cfg.views:
                spec = raster.resolve_view(view_name)
                missing = [b for b in spec.triplet if b not in labels]
                if missing:
                    raise ConfigError(
                        f"{rp.name}: view {view_name!r} needs bands {missing}")
        targets = read_targets_csv(cfg.targets_path)
        n = len(targets)
        if cfg.folds > n:
            warnings_.append(f"cv.folds={cfg.folds} exceeds n={n} locations")
    else:
        targets = read_targets_csv(cfg.targets_path)
        if cfg.folds > len(targets):
            warnings_.append(f"cv.folds={cfg.folds} exceeds n={len(targets)} locations")
    if cfg.krige_enabled:
        if cfg.krige_model and cfg.krige_model not in cfg.models:
            raise ConfigError(f"krige.model {cfg.krige_model!r} not in models list")
    return warnings_


def _provenance(cfg: PipelineConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed,
            "versions": {"mvuq": __version__}}


def _stage_features(cfg: PipelineConfig, out_dir: Path) -> dict[str, featurize.FeatureMatrix]:
    """Compose + featurize rasters, or import feature files; returns per-view sets."""
    sets: dict[str, featurize.FeatureMatrix] = {}
    if cfg.feature_files:
        for f in cfg.feature_files:
            fm = featurize.import_features(f)
            name = fm.view_name or Path(f).stem
            sets[name] = fm
        return sets

    rdir = Path(cfg.raster_dir)
    paths = sorted(rdir.glob("*.btsr"))
    location_ids = [p.stem for p in paths]
    rasters = [raster.load_raster(p) for p in paths]
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    for vi, view_name in enumerate(cfg.views):
        spec = raster.resolve_view(view_name)
        images = [raster.compose_view(r, spec) for r in rasters]
        fz = featurize.RandomConvFeaturizer(
            n_filters=cfg.n_filters, patch_size=cfg.patch_size,
            seed=cfg.featurizer_seed + vi, stride=cfg.stride)
        fm = featurize.build_feature_matrix(images, fz, location_ids, view_name)
        featurize.export_features(fm, feat_dir / f"{view_name}.fmx")
        sets[view_name] = fm
    return sets


def run(config_path: str | os.PathLike) -> dict:
    """Execute the pipeline; returns the report dict. Raises ConfigError/StageError."""
    cfg = load_config(config_path)
    validate_config(cfg)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    stage = "features"
    try:
        sets = _stage_features(cfg, out_dir)
    except Exception as exc:
        raise StageError(stage, exc) from exc

    stage = "fuse"
    try:
        ordered = [sets[k] for k in sorted(sets)]
        fused = featurize.fuse_views(*ordered) if len(ordered) > 1 else ordered[0]
        if len(ordered) > 1:
            feat_dir = out_dir / "features"
            feat_dir.mkdir(parents=True, exist_ok=True)
            featurize.export_features(fused, feat_dir / "fused.fmx")
    except Exception as exc:
        raise StageError(stage, exc) from exc

    stage = "targets"
    try:
        targets = read_targets_csv(cfg.targets_path)
        missing = [lid for lid in fused.location_ids if lid not in targets]
        if missing:
            raise ConfigError(f"targets missing for locations: {missing[:5]}")
        y = np.array([targets[lid]["target"] for lid in fused.location_ids])
    except StageError:
        raise
    except ConfigError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc

    stage = "evaluate"
    try:
        feature_sets = dict(sets)
        if len(sets) > 1:
            feature_sets["fused"] = fused
        hcfg = uqmetrics.HarnessConfig(
            feature_sets=feature_sets, targets=y, models=tuple(cfg.models),
            folds=cfg.folds, seed=cfg.seed, alpha=cfg.alpha, clamp_01=cfg.clamp_01,
            blr_prior=cfg.blr_prior, blr_chains=cfg.blr_chains,
            blr_draws=cfg.blr_draws, blr_warmup=cfg.blr_warmup,
            hetero_lr=cfg.hetero_lr, hetero_epochs=cfg.hetero_epochs)
        report = uqmetrics.evaluate_pipeline(hcfg)
        report["provenance"] = _provenance(cfg)
    except Exception as exc:
        raise StageError(stage, exc) from exc

    stage = "fit-predict"
    try:
        preds = _refit_and_predict(cfg, fused, y, out_dir)
        report["refit_on_all"] = preds["summary"]
    except Exception as exc:
        raise StageError(stage, exc) from exc

    stage = "krige"
    if cfg.krige_enabled:
        try:
            _stage_krige(cfg, fused, targets, preds, out_dir)
        except Exception as exc:
            raise StageError(stage, exc) from exc

    (out_dir / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n")
    (out_dir / "report.csv").write_text(uqmetrics.report_csv(report))
    artifacts = sorted(str(p.relative_to(out_dir))
                       for p in out_dir.rglob("*") if p.is_file())
    (out_dir / "run_manifest.json").write_text(json.dumps({
        "provenance": _provenance(cfg),
        "jobs": cfg.jobs,
        "artifacts": [a for a in artifacts if a != "run_manifest.json"],
    }, sort_keys=True, indent=2) + "\n")
    return report


def _refit_and_predict(cfg: PipelineConfig, fused, y, out_dir: Path) -> dict:
    """Fit each model on all rows, write models and a predictions CSV."""
    models_dir = out_dir / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    columns: dict[str, tuple[np.ndarray, np.ndarray | None]] = {}
    summary: dict[str, dict] = {}
    for kind in cfg.models:
        if kind == "mean":
            mb = regress.mean_baseline(y)
            columns[kind] = (mb.predict(fused), None)
            summary[kind] = {"prediction": mb.prediction}
        elif kind == "ridge_cv":
            model, cvrep = regress.fit_ridge_cv(fused, y, k=cfg.folds, seed=cfg.seed)
            regress.save_model(model, models_dir / "ridge.json")
            columns[kind] = (regress.predict(model, fused), None)
            summary[kind] = {"chosen_alpha": cvrep.chosen_alpha,
                             "cv_mae": cvrep.mae_mean, "cv_mae_se": cvrep.mae_se}
        elif kind == "hetero":
            model = hetero.fit_hetero(fused, y, lr=cfg.hetero_lr,
                                      epochs=cfg.hetero_epochs, seed=cfg.seed)
            (models_dir / "hetero.json").write_text(model.to_json())
            dists = hetero.predict_hetero(model, fused)
            columns[kind] = (np.array([d.mu for d in dists]),
                             np.array([d.var for d in dists]))
            summary[kind] = {"train_nll": model.train_nll}
        elif kind == "blr_conjugate":
            x = fused.values
            means = x.mean(axis=0)
            sds = np.where(x.std(axis=0) < 1e-12, 1.0, x.std(axis=0))
            xs = (x - means) / sds
            sigma2 = bayes.estimate_sigma2(xs, y)
            post = bayes.fit_blr_conjugate(xs, y, sigma2=sigma2)
            dists = bayes.predict_blr(post, xs)
            columns[kind] = (np.array([d.mu for d in dists]),
                             np.array([d.var for d in dists]))
            summary[kind] = {"sigma2": post.sigma2}
        elif kind == "blr_mcmc":
            prior = bayes.BlrPriorConfig(kind=cfg.blr_prior)
            draws = bayes.fit_blr_mcmc(fused, y, prior=prior, chains=cfg.blr_chains,
                                       draws=cfg.blr_draws, warmup=cfg.blr_warmup,
                                       seed=cfg.seed)
            bayes.save_draws(draws, models_dir / "posterior.bin")
            diag = bayes.diagnostics(draws)
            (models_dir / "posterior.diag.json").write_text(
                json.dumps(diag, sort_keys=True, indent=2))
            dists = bayes.predict_blr(draws, fused, seed=cfg.seed)
            columns[kind] = (np.array([d.mu for d in dists]),
                             np.array([d.var for d in dists]))
            summary[kind] = {"max_coef_rhat": diag["max_coef_rhat"]}

    lines = ["location_id," + ",".join(
        f"{k}_mu" + ("" if columns[k][1] is None else f",{k}_var")
        for k in cfg.models)]
    for i, lid in enumerate(fused.location_ids):
        cells = [lid]
        for kind in cfg.models:
            mu, var = columns[kind]
            cells.append(repr(float(mu[i])))
            if var is not None:
                cells.append(repr(float(var[i])))
        lines.append(",".join(cells))
    (out_dir / "predictions.csv").write_text("\n".join(lines) + "\n")
    return {"summary": summary, "columns": columns}


def _stage_krige(cfg: PipelineConfig, fused, targets: dict, preds: dict,
                 out_dir: Path) -> None:
    coords = [(targets[lid]["lon"], targets[lid]["lat"]) for lid in fused.location_ids]
    if any(c[0] is None or c[1] is None for c in coords):
        raise ConfigError("krige enabled but targets.csv lacks lon/lat columns")
    model_kind = cfg.krige_model or cfg.models[0]
    mu, var = preds["columns"][model_kind]
    value_kind = {"mu": "posterior_mean", "var": "posterior_variance",
                  "target": "target"}.get(cfg.krige_value_col, "posterior_mean")
    if cfg.krige_value_col == "var":
        if var is None:
            raise ConfigError(f"model {model_kind!r} has no variance column to krige")
        values = var
    elif cfg.krige_value_col == "target":
        values = np.array([targets[lid]["target"] for lid in fused.location_ids])
    else:
        values = mu
    pts = np.asarray(coords, dtype=np.float64)
    field_ = geoviz.ScatterField(points=pts, values=values, kind=value_kind)
    vmodel = geoviz.fit_variogram(field_)
    pad_lon = (pts[:, 0].max() - pts[:, 0].min()) * 0.05 + 1e-6
    pad_lat = (pts[:, 1].max() - pts[:, 1].min()) * 0.05 + 1e-6
    bbox = (pts[:, 0].min() - pad_lon, pts[:, 1].min() - pad_lat,
            pts[:, 0].max() + pad_lon, pts[:, 1].max() + pad_lat)
    grid = geoviz.krige(field_, vmodel, bbox, res_km=cfg.krige_res_km)
    geoviz.save_grid(grid, out_dir / "grid.btsr", out_dir / "grid.png")
    (out_dir / "markers.geojson").write_text(
        json.dumps(geoviz.markers_geojson(field_), sort_keys=True))
