//! Asymmetric-Laplace quasi-likelihood, flat constraint prior and the
//! resulting log-posterior.
//!
//! The likelihood treats `r_t` as AL-distributed with VaR `Q_t` and ES
//! parameter `ES_t`. The form relies on a zero conditional mean for returns;
//! this is not checked on data, see [`mean_return_diagnostic`].

use std::ops::Range;

use crate::error::{Error, Result};
use crate::market::MarketSeries;
use crate::model::{check_window, InitialState, ModelSpec, ParamVector, Recursion};

/// Log-density contribution of one observation.
#[inline]
pub fn al_log_density(alpha: f64, r: f64, q: f64, es: f64) -> f64 {
    let hit = if r <= q { 1.0 } else { 0.0 };
    ((alpha - 1.0) / es).ln() + (r - q) * (alpha - hit) / (alpha * es)
}

/// Sum of AL log-density terms along the recursion. Returns `-inf` as soon
/// as an ES value is non-negative.
pub fn al_loglik(
    spec: &ModelSpec,
    params: &ParamVector,
    series: &MarketSeries,
    init: &InitialState,
    window: Range<usize>,
) -> Result<f64> {
    params.check_dim(spec.variant)?;
    check_window(series, &window)?;
    let ll = al_loglik_unchecked(spec, params, series, init, window.clone());
    if ll.is_nan() {
        // locate the offending step for the error message
        let idx = Recursion::new(spec.variant, params, series, init, window)
            .find(|&(_, q, w)| !(q - w).is_finite())
            .map(|(t, _, _)| t)
            .unwrap_or(0);
        return Err(Error::NonFinite { index: idx });
    }
    Ok(ll)
}

/// Hot-path likelihood used by the sampler. Assumes dimensions and window were
/// validated. NaN signals non-finite intermediate values.
pub(crate) fn al_loglik_unchecked(
    spec: &ModelSpec,
    params: &ParamVector,
    series: &MarketSeries,
    init: &InitialState,
    window: Range<usize>,
) -> f64 {
    let alpha = spec.alpha;
    let r = series.r();
    let mut total = 0.0;
    for (t, q, w) in Recursion::new(spec.variant, params, series, init, window) {
        let es = q - w;
        if !es.is_finite() {
            return f64::NAN;
        }
        if es >= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += al_log_density(alpha, r[t], q, es);
    }
    total
}

/// Flat indicator prior: 0 inside the constraint set, `-inf` outside.
pub fn log_prior(spec: &ModelSpec, params: &ParamVector) -> f64 {
    if params.satisfies_constraints(spec.variant) {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

pub fn log_posterior(
    spec: &ModelSpec,
    params: &ParamVector,
    series: &MarketSeries,
    init: &InitialState,
    window: Range<usize>,
) -> Result<f64> {
    let lp = log_prior(spec, params);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(lp + al_loglik(spec, params, series, init, window)?)
}

/// Posterior of one model on one estimation window; the sampler's target.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    pub spec: ModelSpec,
    pub series: &'a MarketSeries,
    pub init: InitialState,
    pub window: Range<usize>,
}

impl<'a> Posterior<'a> {
    pub fn new(
        spec: ModelSpec,
        series: &'a MarketSeries,
        init: InitialState,
        window: Range<usize>,
    ) -> Result<Self> {
        check_window(series, &window)?;
        if window.is_empty() {
            return Err(Error::InsufficientData("empty estimation window".into()));
        }
        Ok(Self {
            spec,
            series,
            init,
            window,
        })
    }

    /// Log-posterior of a flattened `(beta', gamma')`; NaN maps to `-inf`.
    pub fn log_density_flat(&self, flat: &[f64]) -> f64 {
        let Ok(p) = ParamVector::from_flat(self.spec.variant, flat) else {
            return f64::NEG_INFINITY;
        };
        if !p.satisfies_constraints(self.spec.variant) {
            return f64::NEG_INFINITY;
        }
        let ll = al_loglik_unchecked(&self.spec, &p, self.series, &self.init, self.window.clone());
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll
        }
    }
}

/// Sample mean of returns over a window; the AL likelihood presumes this is
/// close to zero.
pub fn mean_return_diagnostic(series: &MarketSeries, window: Range<usize>) -> f64 {
    crate::stats::mean(&series.r()[window])
}
