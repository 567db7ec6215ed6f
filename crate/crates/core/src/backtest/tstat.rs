use serde::{Deserialize, Serialize};

use super::scores::{al_log_score, quantile_score};
use super::EvalSeries;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    Quantile,
    AlLog,
}

/// Long-run variance with Bartlett weights up to `lag`.
pub fn hac_variance(x: &[f64], lag: usize) -> f64 {
    let m = x.len();
    let mu = stats::mean(x);
    let dev: Vec<f64> = x.iter().map(|v| v - mu).collect();
    let gamma = |l: usize| dev[l..].iter().zip(&dev).map(|(a, b)| a * b).sum::<f64>() / m as f64;
    let mut v = gamma(0);
    for l in 1..=lag.min(m.saturating_sub(1)) {
        v += 2.0 * (1.0 - l as f64 / (lag as f64 + 1.0)) * gamma(l);
    }
    v
}

/// `sqrt(m) mean(delta) / sigma_HAC` with `delta_t = without_t - with_t`
/// and Bartlett lag `floor(m^(1/3))`. Positive values favour the model
/// with the extra information.
pub fn score_diff_tstat(with: &[f64], without: &[f64]) -> Result<f64> {
    if with.len() != without.len() || with.is_empty() {
        return Err(Error::InvalidArgument("score series must be aligned and nonempty".into()));
    }
    let delta: Vec<f64> = without.iter().zip(with).map(|(b, a)| b - a).collect();
    if delta.iter().all(|&d| d == 0.0) {
        return Ok(0.0);
    }
    let m = delta.len();
    let lag = (m as f64).cbrt().floor() as usize;
    let var = hac_variance(&delta, lag);
    if !(var > 0.0) {
        return Err(Error::InvalidArgument(
            "score differences have zero long-run variance".into(),
        ));
    }
    Ok((m as f64).sqrt() * stats::mean(&delta) / var.sqrt())
}

pub fn score_diff_tstat_eval(with: &EvalSeries, without: &EvalSeries, kind: ScoreKind) -> Result<f64> {
    with.check_aligned(without)?;
    let (a, b) = match kind {
        ScoreKind::Quantile => (quantile_score(with).values, quantile_score(without).values),
        ScoreKind::AlLog => (al_log_score(with)?.values, al_log_score(without)?.values),
    };
    score_diff_tstat(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_difference_gives_zero() {
        assert_eq!(score_diff_tstat(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn constant_nonzero_difference_is_an_error() {
        assert!(score_diff_tstat(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn hac_without_lags_is_population_variance() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let mu = 3.5;
        let pv = x.iter().map(|v: &f64| (v - mu).powi(2)).sum::<f64>() / 4.0;
        assert!((hac_variance(&x, 0) - pv).abs() < 1e-14);
    }
}
