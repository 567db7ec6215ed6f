use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{xlny, EvalSeries};
use crate::error::{Error, Result};

/// Hit lags in the DQ regression.
pub const DQ_LAGS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl TestResult {
    fn chi2(statistic: f64, dof: usize) -> Self {
        let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
        let p_value = if statistic <= 0.0 { 1.0 } else { dist.sf(statistic) };
        Self {
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
        }
    }

    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Violation indicators `r_t < Q_t` (strict).
pub fn hits(eval: &EvalSeries) -> Vec<bool> {
    eval.r().iter().zip(eval.q()).map(|(r, q)| r < q).collect()
}

/// Number and fraction of strict violations.
pub fn vrate(eval: &EvalSeries) -> (usize, f64) {
    let count = hits(eval).iter().filter(|&&h| h).count();
    (count, count as f64 / eval.len() as f64)
}

/// Kupiec unconditional-coverage likelihood ratio, chi-square(1).
pub fn uc_test(count: usize, m: usize, alpha: f64) -> Result<TestResult> {
    if count > m || m == 0 {
        return Err(Error::InvalidArgument(format!("count {count} with m = {m}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    let x = count as f64;
    let n = m as f64;
    let pi = x / n;
    let lr = -2.0 * (xlny(x, alpha) + xlny(n - x, 1.0 - alpha) - xlny(x, pi) - xlny(n - x, 1.0 - pi));
    Ok(TestResult::chi2(lr.max(0.0), 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcResult {
    pub uc: f64,
    pub independence: f64,
    pub statistic: f64,
    pub p_value: f64,
}

/// Christoffersen conditional coverage: UC plus the first-order Markov
/// independence ratio, chi-square(2).
pub fn cc_test(hits: &[bool], alpha: f64) -> Result<CcResult> {
    if hits.len() < 2 {
        return Err(Error::InsufficientData("conditional coverage needs m >= 2".into()));
    }
    let count = hits.iter().filter(|&&h| h).count();
    let uc = uc_test(count, hits.len(), alpha)?.statistic;
    let mut n = [[0.0f64; 2]; 2];
    for w in hits.windows(2) {
        n[w[0] as usize][w[1] as usize] += 1.0;
    }
    let [[n00, n01], [n10, n11]] = n;
    let pi01 = if n00 + n01 > 0.0 { n01 / (n00 + n01) } else { 0.0 };
    let pi11 = if n10 + n11 > 0.0 { n11 / (n10 + n11) } else { 0.0 };
    let pi = (n01 + n11) / (n00 + n01 + n10 + n11);
    let ll_null = xlny(n00 + n10, 1.0 - pi) + xlny(n01 + n11, pi);
    let ll_alt = xlny(n00, 1.0 - pi01) + xlny(n01, pi01) + xlny(n10, 1.0 - pi11) + xlny(n11, pi11);
    let independence = (-2.0 * (ll_null - ll_alt)).max(0.0);
    let t = TestResult::chi2(uc + independence, 2);
    Ok(CcResult {
        uc,
        independence,
        statistic: t.statistic,
        p_value: t.p_value,
    })
}

/// Dynamic quantile test: `Hit_t = I(r_t < Q_t) - alpha` regressed on a
/// constant, `lags` lagged hits and `Q_t`; chi-square(lags + 2).
pub fn dq_test(eval: &EvalSeries, lags: usize) -> Result<TestResult> {
    let m = eval.len();
    if m <= lags + 2 {
        return Err(Error::InsufficientData(format!(
            "DQ test with {lags} lags needs more than {} observations",
            lags + 2
        )));
    }
    let alpha = eval.alpha();
    let hit: Vec<f64> = hits(eval)
        .into_iter()
        .map(|h| if h { 1.0 - alpha } else { -alpha })
        .collect();
    let rows = m - lags;
    let cols = lags + 2;
    let x = DMatrix::from_fn(rows, cols, |i, j| {
        let t = i + lags;
        match j {
            0 => 1.0,
            j if j <= lags => hit[t - j],
            _ => eval.q()[t],
        }
    });
    let y = DVector::from_iterator(rows, hit[lags..].iter().copied());
    let svd = x.svd(true, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-10) {
        return Err(Error::Singular {
            condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        });
    }
    // y' X (X'X)^{-1} X' y is the squared norm of y projected on the column space
    let u = svd.u.expect("requested U");
    let stat = (u.transpose() * y).norm_squared() / (alpha * (1.0 - alpha));
    Ok(TestResult::chi2(stat, cols))
}
