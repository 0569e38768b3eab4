"""Bayesian linear regression with ridge and half-Student-t shrinkage priors.

Two inference paths share the model y = [F, 1] w~ + eps, eps ~ N(0, sigma^2):

* a conjugate path with fixed noise variance and Gaussian prior
  Omega = diag(c, ..., c, intercept_sd^2), giving the closed-form posterior
      Sigma = (X'X / sigma^2 + Omega^{-1})^{-1},  mu = Sigma X'y / sigma^2
  and the predictive N(x' mu, x' Sigma x + sigma^2);

* an auxiliary-variable Gibbs sampler for the fully Bayesian model
      w_j ~ N(0, lambda_j^2 tau^2),  lambda_j ~ half-t_nu(0, 1),
      tau ~ half-Cauchy(0, 1),  b ~ N(0, intercept_sd^2),  p(sigma) flat on sigma>0.
  Half-t and half-Cauchy scales are augmented with inverse-gamma auxiliaries
  so every conditional is exact: with a_j ~ InvGamma(1/2, 1),
  lambda_j^2 | a_j ~ InvGamma(nu/2, nu/a_j) marginalizes to half-t_nu, and the
  same construction with nu=1 gives the half-Cauchy global scale. The
  coefficient block is multivariate Gaussian sampled by Cholesky; sigma^2 has
  an inverse-gamma conditional with shape (n-1)/2 under the flat prior.

The regularized-horseshoe option replaces lambda_j^2 by
slab^2 lambda_j^2 / (slab^2 + tau^2 lambda_j^2) inside the coefficient prior;
its lambda update keeps the unregularized inverse-gamma conditional as a
Metropolis proposal, corrected by the Gaussian prior-density ratio.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .containers import read_btsr, write_btsr
from .distributions import PredictiveDistribution
from .errors import (DimensionMismatch, DivergentChain, NumericalFailure,
                     RHatWarning)

PRIOR_KINDS = ("gaussian_ridge", "half_t_shrinkage", "regularized_horseshoe")


@dataclass(frozen=True)
class BlrPriorConfig:
    kind: str = "half_t_shrinkage"
    c: float = 1.0                 # gaussian_ridge prior variance
    nu: float = 3.0                # half-t degrees of freedom for local scales
    slab_scale: float = 2.0        # regularized_horseshoe slab
    intercept_sd: float = 5.0

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"prior kind must be one of {PRIOR_KINDS}, got {self.kind!r}")
        if self.c <= 0 or self.nu < 1 or self.slab_scale <= 0 or self.intercept_sd <= 0:
            raise ValueError("prior hyperparameters out of range")


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray          # (p,) for p = d (+1 with intercept)
    cov: np.ndarray           # (p, p) symmetric positive definite
    sigma2: float
    include_intercept: bool = True


@dataclass
class PosteriorDraws:
    chains: int
    draws_per_chain: int
    warmup: int
    coef: np.ndarray      # (chains, kept, p); intercept last when present
    sigma: np.ndarray     # (chains, kept)
    tau: np.ndarray       # (chains, kept)
    lam: np.ndarray       # (chains, kept, d)
    include_intercept: bool = True
    param_names: list[str] = field(default_factory=list)

    @property
    def kept(self) -> int:
        return self.draws_per_chain - self.warmup

    @property
    def coef_flat(self) -> np.ndarray:
        """(chains * kept, p) coefficient draws."""
        return self.coef.reshape(-1, self.coef.shape[-1])

    @property
    def sigma_flat(self) -> np.ndarray:
        return self.sigma.reshape(-1)


def _design(features, include_intercept: bool) -> np.ndarray:
    x = features.values if hasattr(features, "values") else np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if include_intercept:
        return np.hstack([x, np.ones((x.shape[0], 1))])
    return np.array(x, dtype=np.float64)


def estimate_sigma2(features, y, alpha: float = 1.0) -> float:
    """Noise-variance estimate for the fixed-noise conjugate path.

    Mean squared residual of a ridge fit with a degrees-of-freedom
    correction; when n <= d (residuals near zero by interpolation) falls back
    to the target variance so the likelihood precision stays well scaled.
    """
    from .regress import fit_ridge, predict

    x = features.values if hasattr(features, "values") else np.asarray(features, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, d = x.shape
    var_y = max(float(np.var(y)), 1e-12)
    if n <= d + 1:
        return var_y
    model = fit_ridge(x, y, alpha=alpha)
    resid = y - predict(model, x)
    msr = float(np.mean(resid**2)) * n / (n - d)
    return max(msr, 1e-6 * var_y, 1e-12)


def fit_blr_conjugate(features, y, c: float = 1.0, sigma2: float = 1.0,
                      intercept_sd: float = 5.0,
                      include_intercept: bool = True) -> GaussianPosterior:
    """Closed-form Gaussian posterior for fixed noise variance."""
    if c <= 0 or sigma2 <= 0:
        raise ValueError("c and sigma2 must be > 0")
    xt = _design(features, include_intercept)
    y = np.asarray(y, dtype=np.float64).ravel()
    if xt.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{xt.shape[0]} rows vs {y.shape[0]} targets")
    p = xt.shape[1]
    prior_var = np.full(p, c)
    if include_intercept:
        prior_var[-1] = intercept_sd**2
    precision = xt.T @ xt / sigma2 + np.diag(1.0 / prior_var)
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError:
        precision[np.diag_indices(p)] += 1e-10
        try:
            chol = np.linalg.cholesky(precision)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("posterior precision not PD after jitter") from exc
    ident = np.eye(p)
    chol_inv = np.linalg.solve(chol, ident)
    cov = chol_inv.T @ chol_inv
    mean = cov @ (xt.T @ y / sigma2)
    cov = 0.5 * (cov + cov.T)
    return GaussianPosterior(mean=mean, cov=cov, sigma2=float(sigma2),
                             include_intercept=include_intercept)


# --- Gibbs sampler -----------------------------------------------------------

def _inv_gamma(rng: np.random.Generator, shape: float, rate, size=None) -> np.ndarray:
    """InvGamma(shape, rate) draw: density x^{-shape-1} exp(-rate/x)."""
    return rate / rng.standard_gamma(shape, size=size)


def _draw_coefficients(rng, xtx, xty, sigma2, prior_var):
    p = xtx.shape[0]
    precision = xtx / sigma2 + np.diag(1.0 / prior_var)
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError:
        precision[np.diag_indices(p)] += 1e-10
        chol = np.linalg.cholesky(precision)
    mean = np.linalg.solve(precision, xty / sigma2)
    z = rng.standard_normal(p)
    return mean + np.linalg.solve(chol.T, z)


def _effective_lambda2(lam2, tau2, slab2):
    return slab2 * lam2 / (slab2 + tau2 * lam2)


def _slab_log_correction(coefs, lam2, tau2, slab2):
    """log prod_j N(w_j; 0, tau^2 lam~_j^2) / N(w_j; 0, tau^2 lam_j^2)."""
    eff = tau2 * _effective_lambda2(lam2, tau2, slab2)
    plain = tau2 * lam2
    return float(np.sum(-0.5 * np.log(eff) - coefs**2 / (2.0 * eff)
                        + 0.5 * np.log(plain) + coefs**2 / (2.0 * plain)))


def fit_blr_mcmc(features, y, prior: BlrPriorConfig | None = None, chains: int = 4,
                 draws: int = 1500, warmup: int = 500, seed: int = 0,
                 include_intercept: bool = True, standardize: bool = True,
                 pin_scales: bool = False, pin_tau: float | None = None,
                 pin_sigma2: float | None = None, check_rhat: bool = True) -> PosteriorDraws:
    """Auxiliary-variable Gibbs sampler; seeded, chains independent.

    ``pin_scales`` / ``pin_tau`` / ``pin_sigma2`` freeze blocks of the sampler
    for validation against the conjugate path and low-dimensional quadrature;
    they are not part of the modeling surface.
    """
    prior = prior or BlrPriorConfig()
    x = features.values if hasattr(features, "values") else np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=np.float64).ravel()
    n, d = x.shape
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{n} rows vs {y.shape[0]} targets")
    if n < 3:
        raise ValueError("MCMC path needs n >= 3")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("inputs must be finite")
    if warmup >= draws:
        raise ValueError("warmup must be smaller than draws")

    if standardize:
        col_means = x.mean(axis=0)
        col_sds = x.std(axis=0, ddof=0)
        col_sds = np.where(col_sds < 1e-12, 1.0, col_sds)
    else:
        col_means = np.zeros(d)
        col_sds = np.ones(d)
    xs = (x - col_means) / col_sds
    xt = np.hstack([xs, np.ones((n, 1))]) if include_intercept else xs
    p = xt.shape[1]
    xtx = xt.T @ xt
    xty = xt.T @ y

    kept = draws - warmup
    ss = np.random.SeedSequence(seed)
    chain_seeds = ss.spawn(chains)

    coef_out = np.empty((chains, kept, p))
    sigma_out = np.empty((chains, kept))
    tau_out = np.empty((chains, kept))
    lam_out = np.empty((chains, kept, d))

    gaussian_prior = prior.kind == "gaussian_ridge"
    regularized = prior.kind == "regularized_horseshoe"
    slab2 = prior.slab_scale**2
    nu = prior.nu

    for ch in range(chains):
        rng = np.random.default_rng(chain_seeds[ch])
        lam2 = np.ones(d)
        aux_a = np.ones(d)
        tau2 = 1.0 if pin_tau is None else float(pin_tau) ** 2
        aux_b = 1.0
        sigma2 = float(np.var(y)) if np.var(y) > 0 else 1.0
        if pin_sigma2 is not None:
            sigma2 = float(pin_sigma2)
        w = np.zeros(p)
        for it in range(draws):
            if gaussian_prior:
                eff_lam2 = np.full(d, prior.c)
                prior_var = eff_lam2.copy()
            else:
                eff_lam2 = _effective_lambda2(lam2, tau2, slab2) if regularized else lam2
                prior_var = eff_lam2 * tau2
            if include_intercept:
                prior_var = np.append(prior_var, prior.intercept_sd**2)
            w = _draw_coefficients(rng, xtx, xty, sigma2, prior_var)
            resid = y - xt @ w
            rss = float(resid @ resid)
            if pin_sigma2 is None:
                sigma2 = float(_inv_gamma(rng, (n - 1) / 2.0, max(rss, 1e-300) / 2.0))
            coefs = w[:d]
            if not gaussian_prior and not pin_scales:
                rate_lam = nu / aux_a + coefs**2 / (2.0 * tau2)
                lam2_prop = _inv_gamma(rng, (nu + 1.0) / 2.0, rate_lam, size=d)
                if regularized:
                    # the proposal is exact for the unregularized prior; correct
                    # per coordinate by the slab density ratio
                    eff_c = tau2 * _effective_lambda2(lam2, tau2, slab2)
                    eff_p = tau2 * _effective_lambda2(lam2_prop, tau2, slab2)
                    log_acc = ((-0.5 * np.log(eff_p) - coefs**2 / (2.0 * eff_p)
                                + 0.5 * np.log(tau2 * lam2_prop) + coefs**2 / (2.0 * tau2 * lam2_prop))
                               - (-0.5 * np.log(eff_c) - coefs**2 / (2.0 * eff_c)
                                  + 0.5 * np.log(tau2 * lam2) + coefs**2 / (2.0 * tau2 * lam2)))
                    accept = np.log(rng.uniform(size=d)) < log_acc
                    lam2 = np.where(accept, lam2_prop, lam2)
                else:
                    lam2 = lam2_prop
                aux_a = _inv_gamma(rng, (nu + 1.0) / 2.0, 1.0 + nu / lam2, size=d)
                if pin_tau is None:
                    rate_tau = 1.0 / aux_b + float(np.sum(coefs**2 / (2.0 * lam2)))
                    tau2_prop = float(_inv_gamma(rng, (d + 1.0) / 2.0, rate_tau))
                    if regularized:
                        log_acc_t = (_slab_log_correction(coefs, lam2, tau2_prop, slab2)
                                     - _slab_log_correction(coefs, lam2, tau2, slab2))
                        if np.log(rng.uniform()) < log_acc_t:
                            tau2 = tau2_prop
                    else:
                        tau2 = tau2_prop
                    aux_b = float(_inv_gamma(rng, 1.0, 1.0 + 1.0 / tau2))
            if it >= warmup:
                k = it - warmup
                # map coefficients back to the original feature scale
                back = w.copy()
                back[:d] = w[:d] / col_sds
                if include_intercept:
                    back[-1] = w[-1] - float(np.sum(w[:d] * col_means / col_sds))
                coef_out[ch, k] = back
                sigma_out[ch, k] = np.sqrt(sigma2)
                tau_out[ch, k] = np.sqrt(tau2)
                lam_out[ch, k] = np.sqrt(lam2)
        if not (np.isfinite(coef_out[ch]).all() and np.isfinite(sigma_out[ch]).all()
                and np.isfinite(tau_out[ch]).all() and np.isfinite(lam_out[ch]).all()):
            raise DivergentChain(f"chain {ch} produced a non-finite draw")

    names = [f"w[{j}]" for j in range(d)]
    if include_intercept:
        names.append("intercept")
    result = PosteriorDraws(chains=chains, draws_per_chain=draws, warmup=warmup,
                            coef=coef_out, sigma=sigma_out, tau=tau_out, lam=lam_out,
                            include_intercept=include_intercept, param_names=names)
    if check_rhat and chains >= 2 and kept >= 4:
        rhats = np.array([split_rhat(coef_out[:, :, j]) for j in range(p)])
        finite = rhats[np.isfinite(rhats)]
        if finite.size and np.max(finite) > 1.05:
            warnings.warn(
                f"split-R-hat up to {np.max(finite):.3f} > 1.05 on coefficients",
                RHatWarning)
    return result


# --- prediction --------------------------------------------------------------

def predict_blr(posterior, features, seed: int = 0) -> list[PredictiveDistribution]:
    """Posterior predictive per row.

    Conjugate path: N(x' mu, x' Sigma x + sigma^2). MCMC path: one draw
    x' w + sigma * eps per kept posterior draw (seeded noise).
    """
    if isinstance(posterior, GaussianPosterior):
        xt = _design(features, posterior.include_intercept)
        if xt.shape[1] != posterior.mean.shape[0]:
            raise DimensionMismatch(
                f"design dim {xt.shape[1]} vs posterior dim {posterior.mean.shape[0]}")
        mean = xt @ posterior.mean
        var = np.einsum("ij,jk,ik->i", xt, posterior.cov, xt) + posterior.sigma2
        return [PredictiveDistribution.gaussian(m, v) for m, v in zip(mean, var)]
    if isinstance(posterior, PosteriorDraws):
        xt = _design(features, posterior.include_intercept)
        coef = posterior.coef_flat
        if xt.shape[1] != coef.shape[1]:
            raise DimensionMismatch(
                f"design dim {xt.shape[1]} vs posterior dim {coef.shape[1]}")
        rng = np.random.default_rng(seed)
        sigma = posterior.sigma_flat
        eps = rng.standard_normal((xt.shape[0], coef.shape[0]))
        draws = xt @ coef.T + eps * sigma
        return [PredictiveDistribution.from_samples(row) for row in draws]
    raise TypeError(f"unsupported posterior type {type(posterior)!r}")


# --- diagnostics ------------------------------------------------------------

def split_rhat(chain_draws: np.ndarray) -> float:
    """Split-R-hat of one scalar parameter; input shape (chains, draws)."""
    ary = np.asarray(chain_draws, dtype=np.float64)
    if ary.ndim != 2:
        raise ValueError("expected (chains, draws)")
    half = ary.shape[1] // 2
    if half < 2:
        return float("nan")
    split = np.vstack([ary[:, :half], ary[:, half:2 * half]])
    num_samples = split.shape[1]
    chain_mean = split.mean(axis=1)
    chain_var = split.var(axis=1, ddof=1)
    within = chain_var.mean()
    between = num_samples * np.var(chain_mean, ddof=1)
    if within == 0:
        return float("nan")
    var_hat = (num_samples - 1) / num_samples * within + between / num_samples
    return float(np.sqrt(var_hat / within))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = len(x)
    xc = x - x.mean()
    full = np.correlate(xc, xc, mode="full")[n - 1:]
    return full / n


def ess_bulk(chain_draws: np.ndarray) -> float:
    """Bulk effective sample size via Geyer's initial monotone sequence."""
    ary = np.asarray(chain_draws, dtype=np.float64)
    half = ary.shape[1] // 2
    if half < 2:
        return float("nan")
    split = np.vstack([ary[:, :half], ary[:, half:2 * half]])
    n_chain, n_draw = split.shape
    if np.allclose(split.var(axis=1), 0.0):
        return float(np.asarray(chain_draws).shape[0])  # one value per chain
    acov = np.array([_autocov(split[c]) for c in range(n_chain)])
    chain_mean = split.mean(axis=1)
    mean_var = float(np.mean(acov[:, 0])) * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += np.var(chain_mean, ddof=1)
    rho = np.zeros(n_draw)
    rho[0] = 1.0
    rho[1] = 1.0 - (mean_var - float(np.mean(acov[:, 1]))) / var_plus
    t = 1
    rho_even, rho_odd = 1.0, rho[1]
    while t < n_draw - 2 and (rho_even + rho_odd) >= 0.0:
        rho_even = 1.0 - (mean_var - float(np.mean(acov[:, t + 1]))) / var_plus
        rho_odd = 1.0 - (mean_var - float(np.mean(acov[:, t + 2]))) / var_plus
        rho[t + 1] = rho_even
        if rho_even + rho_odd >= 0:
            rho[t + 2] = rho_odd
        t += 2
    max_t = t
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    tau_hat = -1.0 + 2.0 * float(np.sum(rho[:max_t])) + float(np.sum(rho[max_t + 1:max_t + 2]))
    tau_hat = max(tau_hat, 1.0 / np.log10(n_chain * n_draw + 10.0))
    return float(n_chain * n_draw / tau_hat)


def diagnostics(draws: PosteriorDraws) -> dict:
    """Split-R-hat and bulk ESS per parameter block, with degeneracy flags."""
    blocks: dict[str, np.ndarray] = {}
    p = draws.coef.shape[-1]
    for j in range(p):
        name = draws.param_names[j] if j < len(draws.param_names) else f"w[{j}]"
        blocks[name] = draws.coef[:, :, j]
    blocks["sigma"] = draws.sigma
    blocks["tau"] = draws.tau

    per_param = {}
    flags: list[str] = []
    for name, arr in blocks.items():
        rhat = split_rhat(arr)
        ess = ess_bulk(arr)
        stuck = bool(np.allclose(arr.var(axis=1), 0.0))
        per_param[name] = {"rhat": rhat, "ess_bulk": ess, "stuck": stuck}
        if stuck and f"stuck:{name}" not in flags:
            flags.append(f"stuck:{name}")

    dup = False
    for a in range(draws.chains):
        for b in range(a + 1, draws.chains):
            if np.array_equal(draws.coef[a], draws.coef[b]):
                dup = True
    if dup:
        flags.append("duplicate_chains")
    coef_rhats = [per_param[n]["rhat"] for n in draws.param_names]
    finite = [r for r in coef_rhats if np.isfinite(r)]
    if finite and max(finite) > 1.05:
        flags.append("rhat_above_1.05")
    return {
        "chains": draws.chains,
        "kept_per_chain": draws.kept,
        "steps": {"draws_per_chain": draws.draws_per_chain, "warmup": draws.warmup,
                  "total_kept": draws.chains * draws.kept},
        "parameters": per_param,
        "max_coef_rhat": max(finite) if finite else float("nan"),
        "flags": flags,
    }


# --- persistence ----------------------------------------------------------

def save_draws(draws: PosteriorDraws, path: str | os.PathLike) -> None:
    """BTSR rank-3 (chains x kept x params) with a parameter-name sidecar."""
    d = draws.lam.shape[-1]
    stacked = np.concatenate([
        draws.coef,
        draws.sigma[:, :, None],
        draws.tau[:, :, None],
        draws.lam,
    ], axis=2)
    write_btsr(path, stacked)
    names = list(draws.param_names) + ["sigma", "tau"] + [f"lambda[{j}]" for j in range(d)]
    meta = {
        "param_names": names,
        "chains": draws.chains,
        "draws_per_chain": draws.draws_per_chain,
        "warmup": draws.warmup,
        "include_intercept": draws.include_intercept,
        "n_coef": draws.coef.shape[-1],
        "n_lambda": d,
    }
    sidecar = os.fspath(path) + ".params.json"
    with open(sidecar, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_draws(path: str | os.PathLike) -> PosteriorDraws:
    stacked = read_btsr(path)
    sidecar = os.fspath(path) + ".params.json"
    with open(sidecar) as fh:
        meta = json.load(fh)
    p = int(meta["n_coef"])
    d = int(meta["n_lambda"])
    coef = stacked[:, :, :p]
    sigma = stacked[:, :, p]
    tau = stacked[:, :, p + 1]
    lam = stacked[:, :, p + 2:p + 2 + d]
    return PosteriorDraws(chains=int(meta["chains"]),
                          draws_per_chain=int(meta["draws_per_chain"]),
                          warmup=int(meta["warmup"]), coef=coef, sigma=sigma,
                          tau=tau, lam=lam,
                          include_intercept=bool(meta["include_intercept"]),
                          param_names=list(meta["param_names"])[:p])
