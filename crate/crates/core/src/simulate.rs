//! Synthetic markets whose conditional VaR/ES dynamics are known exactly.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketSeries;
use crate::model::{gap_step, quantile_step, InitialState, ModelSpec, ParamVector, RiskPath};

fn check_al(q: f64, es: f64, alpha: f64) -> Result<()> {
    if !(es < 0.0 && es <= q && q.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "AL parameters need es < 0, es <= q, alpha in (0,1); got q = {q}, es = {es}, alpha = {alpha}"
        )));
    }
    Ok(())
}

/// Inverse CDF of the AL law with VaR `q` and ES parameter `es`.
///
/// The density is `((alpha-1)/es) exp((r-q)(alpha - I(r<=q))/(alpha es))`:
/// mass `alpha` lies below `q` on an exponential branch with rate
/// `(1-alpha)/(alpha |es|)`, and the rest above `q` with rate `1/|es|`.
pub fn al_quantile(u: f64, q: f64, es: f64, alpha: f64) -> f64 {
    let s = -es;
    if u < alpha {
        q + alpha * s / (1.0 - alpha) * (u / alpha).ln()
    } else {
        q - s * ((1.0 - u) / (1.0 - alpha)).ln()
    }
}

/// CDF matching [`al_quantile`].
pub fn al_cdf(r: f64, q: f64, es: f64, alpha: f64) -> f64 {
    let s = -es;
    if r <= q {
        alpha * ((1.0 - alpha) * (r - q) / (alpha * s)).exp()
    } else {
        1.0 - (1.0 - alpha) * (-(r - q) / s).exp()
    }
}

/// Mean of the AL law below `q`; differs from `es` unless `alpha` is 1/2.
pub fn al_tail_mean(q: f64, es: f64, alpha: f64) -> f64 {
    q + alpha * es / (1.0 - alpha)
}

/// Unconditional mean of the AL law.
pub fn al_mean(q: f64, es: f64, alpha: f64) -> f64 {
    alpha * al_tail_mean(q, es, alpha) + (1.0 - alpha) * (q - es)
}

/// One draw from the AL law.
pub fn al_sample<R: Rng + ?Sized>(q: f64, es: f64, alpha: f64, rng: &mut R) -> Result<f64> {
    check_al(q, es, alpha)?;
    Ok(al_quantile(open_unit(rng), q, es, alpha))
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Covariate processes: log RV is Gaussian AR(1), OC is iid Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateConfig {
    /// Mean of the RV level, `exp` of the AR(1) mean.
    pub rv_mean: f64,
    pub rv_persistence: f64,
    pub rv_innovation_sd: f64,
    pub oc_sd: f64,
}

impl Default for CovariateConfig {
    fn default() -> Self {
        Self {
            rv_mean: 0.4,
            rv_persistence: 0.9,
            rv_innovation_sd: 0.3,
            oc_sd: 0.8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub series: MarketSeries,
    /// True path over indices `1..len`; entry `i` refers to index `i + 1`.
    pub path: RiskPath,
    pub init: InitialState,
    /// Sample mean of the simulated returns; the AL law has nonzero mean.
    pub mean_return: f64,
}

/// Simulates `len` days. Index 0 carries covariates and a return drawn from
/// the AL law at the initial state; the recursion runs from index 1.
pub fn simulate_market<R: Rng + ?Sized>(
    spec: &ModelSpec,
    params: &ParamVector,
    init: &InitialState,
    len: usize,
    cov: &CovariateConfig,
    rng: &mut R,
) -> Result<Simulated> {
    params.check_dim(spec.variant)?;
    if !params.satisfies_constraints(spec.variant) {
        return Err(Error::InvalidArgument("true parameters violate the constraints".into()));
    }
    if len < 2 {
        return Err(Error::InvalidArgument("simulate at least two days".into()));
    }
    if !(cov.rv_mean > 0.0 && cov.rv_persistence.abs() < 1.0 && cov.rv_innovation_sd >= 0.0 && cov.oc_sd >= 0.0) {
        return Err(Error::InvalidArgument("invalid covariate configuration".into()));
    }
    let mu = cov.rv_mean.ln();
    let innov = Normal::new(0.0, cov.rv_innovation_sd).expect("checked sd");
    let oc_dist = Normal::new(0.0, cov.oc_sd).expect("checked sd");
    let stat_sd = cov.rv_innovation_sd / (1.0 - cov.rv_persistence.powi(2)).sqrt();

    let mut x = mu + stat_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
    let mut rv = Vec::with_capacity(len);
    let mut oc = Vec::with_capacity(len);
    let mut r = Vec::with_capacity(len);
    let mut path = RiskPath {
        q: Vec::with_capacity(len - 1),
        w: Vec::with_capacity(len - 1),
        es: Vec::with_capacity(len - 1),
    };

    rv.push(x.exp());
    oc.push(oc_dist.sample(rng));
    r.push(al_sample(init.q0, init.es0, spec.alpha, rng)?);
    let (mut q, mut w) = (init.q0, init.w0());
    for t in 1..len {
        x = mu + cov.rv_persistence * (x - mu) + innov.sample(rng);
        rv.push(x.exp());
        oc.push(oc_dist.sample(rng));
        let q_new = quantile_step(spec.variant, &params.beta, q, r[t - 1], rv[t - 1], oc[t]);
        let w_new = gap_step(&params.gamma, q, r[t - 1], w);
        let es = q_new - w_new;
        if !(q_new.is_finite() && es.is_finite()) || es >= 0.0 || es > q_new {
            return Err(Error::InvalidArgument(format!(
                "true path leaves the AL support at index {t} (q = {q_new}, es = {es}); \
                 pick parameters with a negative VaR"
            )));
        }
        r.push(al_sample(q_new, es, spec.alpha, rng)?);
        path.q.push(q_new);
        path.w.push(w_new);
        path.es.push(es);
        q = q_new;
        w = w_new;
    }
    let mean_return = crate::stats::mean(&r);
    let series = MarketSeries::with_synthetic_dates(r, oc, rv)?;
    Ok(Simulated {
        series,
        path,
        init: *init,
        mean_return,
    })
}
