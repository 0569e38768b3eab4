"""Command-line interface. Exit codes: 0 success, 1 stage error, 2 config error."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import bayes, featurize, geoviz, hetero, pipeline, raster, regress
from .errors import ConfigError, MvuqError, StageError


@click.group()
def main():
    """Multi-view raster features, probabilistic regression, uncertainty scoring."""


def _fail(exc: BaseException, code: int):
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--view", required=True,
              help="natural|false_color|moisture|agriculture|custom:<b1,b2,b3>")
@click.option("--out", "out_path", required=True, type=click.Path())
def compose(input_path, view, out_path):
    """Compose a 3-band view from a BTSR raster; writes .btsr or .png."""
    try:
        r = raster.load_raster(input_path)
        spec = raster.resolve_view(view)
        img = raster.compose_view(r, spec)
        if out_path.endswith(".png"):
            raster.save_view_png(img, out_path)
        else:
            raster.save_view_btsr(img, out_path)
    except MvuqError as exc:
        _fail(exc, 1)
    except ValueError as exc:
        _fail(exc, 2)
    click.echo(f"wrote {out_path}")


@main.command("featurize")
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True))
@click.option("--views", default="natural,false_color,moisture,agriculture")
@click.option("--seed", default=17, type=int)
@click.option("--filters", default=512, type=int)
@click.option("--patch-size", default=3, type=int)
@click.option("--stride", default=None, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
def featurize_cmd(input_dir, views, seed, filters, patch_size, stride, out_dir):
    """Featurize every raster in a directory, one FMX per view."""
    try:
        paths = sorted(Path(input_dir).glob("*.btsr"))
        if not paths:
            raise ConfigError(f"no .btsr rasters in {input_dir}")
        rasters = [raster.load_raster(p) for p in paths]
        ids = [p.stem for p in paths]
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        for vi, name in enumerate([v.strip() for v in views.split(",") if v.strip()]):
            spec = raster.resolve_view(name)
            images = [raster.compose_view(r, spec) for r in rasters]
            fz = featurize.RandomConvFeaturizer(n_filters=filters, patch_size=patch_size,
                                                seed=seed + vi, stride=stride)
            fm = featurize.build_feature_matrix(images, fz, ids, name)
            featurize.export_features(fm, Path(out_dir) / f"{name}.fmx")
            click.echo(f"wrote {out_dir}/{name}.fmx ({fm.n}x{fm.d})")
    except ConfigError as exc:
        _fail(exc, 2)
    except (MvuqError, ValueError) as exc:
        _fail(exc, 1)


@main.command()
@click.option("--inputs", required=True, help="comma-separated FMX paths")
@click.option("--out", "out_path", required=True, type=click.Path())
def fuse(inputs, out_path):
    """Concatenate per-view feature matrices column-wise."""
    try:
        mats = [featurize.import_features(p.strip()) for p in inputs.split(",")]
        fused = featurize.fuse_views(*mats)
        featurize.export_features(fused, out_path)
    except MvuqError as exc:
        _fail(exc, 1)
    click.echo(f"wrote {out_path}")


def _load_xy(features_path, targets_path):
    fm = featurize.import_features(features_path)
    targets = pipeline.read_targets_csv(targets_path)
    missing = [lid for lid in fm.location_ids if lid not in targets]
    if missing:
        raise ConfigError(f"targets missing for locations: {missing[:5]}")
    y = np.array([targets[lid]["target"] for lid in fm.location_ids])
    return fm, y


@main.command("fit-ridge")
@click.option("--features", "features_path", required=True, type=click.Path(exists=True))
@click.option("--targets", "targets_path", required=True, type=click.Path(exists=True))
@click.option("--grid", default="default", help="'default' or comma-separated alphas")
@click.option("--folds", default=5, type=int)
@click.option("--seed", default=7, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report", "report_path", default=None, type=click.Path())
def fit_ridge_cmd(features_path, targets_path, grid, folds, seed, out_path, report_path):
    """Cross-validated ridge fit; model JSON plus optional CV report."""
    try:
        fm, y = _load_xy(features_path, targets_path)
        alphas = regress.DEFAULT_ALPHA_GRID if grid == "default" else \
            tuple(float(a) for a in grid.split(","))
        model, rep = regress.fit_ridge_cv(fm, y, alpha_grid=alphas, k=folds, seed=seed)
        regress.save_model(model, out_path)
        if report_path:
            Path(report_path).write_text(json.dumps({
                "folds": rep.folds, "fold_mae": rep.fold_mae, "mae_mean": rep.mae_mean,
                "mae_se": rep.mae_se, "chosen_alpha": rep.chosen_alpha,
                "grid": rep.grid, "grid_mean_mae": rep.grid_mean_mae,
            }, sort_keys=True, indent=2))
    except ConfigError as exc:
        _fail(exc, 2)
    except MvuqError as exc:
        _fail(exc, 1)
    click.echo(f"wrote {out_path} (alpha={model.alpha})")


@main.command("fit-hetero")
@click.option("--features", "features_path", required=True, type=click.Path(exists=True))
@click.option("--targets", "targets_path", required=True, type=click.Path(exists=True))
@click.option("--lr", default=1e-2, type=float)
@click.option("--epochs", default=2000, type=int)
@click.option("--seed", default=7, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def fit_hetero_cmd(features_path, targets_path, lr, epochs, seed, out_path):
    """Heteroscedastic Gaussian fit (mean and log-variance heads)."""
    try:
        fm, y = _load_xy(features_path, targets_path)
        model = hetero.fit_hetero(fm, y, lr=lr, epochs=epochs, seed=seed)
        Path(out_path).write_text(model.to_json())
    except ConfigError as exc:
        _fail(exc, 2)
    except MvuqError as exc:
        _fail(exc, 1)
    click.echo(f"wrote {out_path} (train NLL {model.train_nll:.4f})")


_PRIOR_ALIASES = {"half_t": "half_t_shrinkage", "gaussian": "gaussian_ridge"}


@main.command("fit-blr")
@click.option("--features", "features_path", required=True, type=click.Path(exists=True))
@click.option("--targets", "targets_path", required=True, type=click.Path(exists=True))
@click.option("--prior", default="half_t")
@click.option("--nu", default=3.0, type=float)
@click.option("--chains", default=4, type=int)
@click.option("--draws", default=1500, type=int)
@click.option("--warmup", default=500, type=int)
@click.option("--seed", default=7, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--diag", "diag_path", default=None, type=click.Path())
def fit_blr_cmd(features_path, targets_path, prior, nu, chains, draws, warmup,
                seed, out_path, diag_path):
    """Gibbs-sampled Bayesian linear regression with shrinkage priors."""
    try:
        fm, y = _load_xy(features_path, targets_path)
        kind = _PRIOR_ALIASES.get(prior, prior)
        cfg = bayes.BlrPriorConfig(kind=kind, nu=nu)
        posterior = bayes.fit_blr_mcmc(fm, y, prior=cfg, chains=chains, draws=draws,
                                       warmup=warmup, seed=seed)
        bayes.save_draws(posterior, out_path)
        if diag_path:
            Path(diag_path).write_text(
                json.dumps(bayes.diagnostics(posterior), sort_keys=True, indent=2))
    except ConfigError as exc:
        _fail(exc, 2)
    except (MvuqError, ValueError) as exc:
        _fail(exc, 1)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--features", "features_path", required=True, type=click.Path(exists=True))
@click.option("--seed", default=0, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def predict(model_path, features_path, seed, out_path):
    """Predict with a saved model; CSV of location_id, mu[, var]."""
    try:
        fm = featurize.import_features(features_path)
        text = Path(model_path).read_bytes()
        if text[:4] == b"BTSR":
            draws = bayes.load_draws(model_path)
            dists = bayes.predict_blr(draws, fm, seed=seed)
            rows = [(d.mu, d.var) for d in dists]
        else:
            obj = json.loads(text)
            if "w_mu" in obj:
                model = hetero.HeteroModel.from_json(text.decode())
                dists = hetero.predict_hetero(model, fm)
                rows = [(d.mu, d.var) for d in dists]
            else:
                model = regress.load_model(model_path)
                rows = [(m, None) for m in regress.predict(model, fm)]
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["location_id", "mu", "var"])
            for lid, (mu, var) in zip(fm.location_ids, rows):
                writer.writerow([lid, repr(float(mu)),
                                 "" if var is None else repr(float(var))])
    except MvuqError as exc:
        _fail(exc, 1)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def evaluate(config_path, out_path):
    """K-fold evaluation harness from a TOML config; JSON + CSV reports."""
    try:
        cfg = pipeline.load_config(config_path)
        pipeline.validate_config(cfg)
        report = pipeline.run(config_path)
    except ConfigError as exc:
        _fail(exc, 2)
    except StageError as exc:
        _fail(exc, 1)
    Path(out_path).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--points", "points_path", required=True, type=click.Path(exists=True))
@click.option("--value-col", default="mu")
@click.option("--bbox", default=None, help="lon0,lat0,lon1,lat1 (default: data bounds)")
@click.option("--res-km", default=1.0, type=float)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--png", "png_path", default=None, type=click.Path())
@click.option("--markers", "markers_path", default=None, type=click.Path())
def krige(points_path, value_col, bbox, res_km, out_path, png_path, markers_path):
    """Krige a CSV of scattered values (needs lon, lat, and the value column)."""
    try:
        lons, lats, vals = [], [], []
        with open(points_path, newline="") as fh:
            reader = csv.DictReader(fh)
            cols = reader.fieldnames or []
            if "lon" not in cols or "lat" not in cols or value_col not in cols:
                raise ConfigError(f"{points_path}: needs columns lon, lat, {value_col}")
            for row in reader:
                lons.append(float(row["lon"]))
                lats.append(float(row["lat"]))
                vals.append(float(row[value_col]))
        field = geoviz.ScatterField(points=np.column_stack([lons, lats]),
                                    values=np.array(vals))
        model = geoviz.fit_variogram(field)
        if bbox:
            box = tuple(float(v) for v in bbox.split(","))
            if len(box) != 4:
                raise ConfigError("bbox needs 4 comma-separated numbers")
        else:
            box = (min(lons), min(lats), max(lons), max(lats))
        grid = geoviz.krige(field, model, box, res_km=res_km)
        geoviz.save_grid(grid, out_path, png_path)
        if markers_path:
            Path(markers_path).write_text(
                json.dumps(geoviz.markers_geojson(field), sort_keys=True))
    except ConfigError as exc:
        _fail(exc, 2)
    except (MvuqError, ValueError) as exc:
        _fail(exc, 1)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--jobs", default=None, type=int,
              help="cap worker count (also settable via MVUQ_JOBS)")
def run(config_path, jobs):
    """Run the full pipeline from a TOML config."""
    import os

    if jobs is not None:
        os.environ["MVUQ_JOBS"] = str(jobs)
    try:
        pipeline.run(config_path)
    except ConfigError as exc:
        _fail(exc, 2)
    except StageError as exc:
        _fail(exc, 1)
    cfg = pipeline.load_config(config_path)
    click.echo(f"ok: report at {Path(cfg.output_dir) / 'report.json'}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
def validate(config_path):
    """Validate a pipeline config without touching payload data."""
    try:
        cfg = pipeline.load_config(config_path)
        warnings_ = pipeline.validate_config(cfg)
    except ConfigError as exc:
        _fail(exc, 2)
    for w in warnings_:
        click.echo(f"warning: {w}")
    click.echo("ok")


if __name__ == "__main__":
    main()
