use serde::{Deserialize, Serialize};

use super::EvalSeries;
use crate::error::{Error, Result};
use crate::stats;

/// Per-observation scores with their total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub values: Vec<f64>,
    pub sum: f64,
}

impl ScoreSeries {
    fn from_values(values: Vec<f64>) -> Self {
        let sum = values.iter().sum();
        Self { values, sum }
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.values.len() as f64
    }
}

/// Quantile (pinball) score `(alpha - I(r <= Q))(r - Q)`.
pub fn quantile_score(eval: &EvalSeries) -> ScoreSeries {
    let a = eval.alpha();
    ScoreSeries::from_values(
        eval.r()
            .iter()
            .zip(eval.q())
            .map(|(&r, &q)| (a - if r <= q { 1.0 } else { 0.0 }) * (r - q))
            .collect(),
    )
}

/// Negative AL log-density of each return; needs `ES_t < 0`.
pub fn al_log_score(eval: &EvalSeries) -> Result<ScoreSeries> {
    let a = eval.alpha();
    let mut values = Vec::with_capacity(eval.len());
    for (i, ((&r, &q), &es)) in eval.r().iter().zip(eval.q()).zip(eval.es()).enumerate() {
        if !(es < 0.0) {
            return Err(Error::NonNegativeEs { index: i, es });
        }
        let ind = if r <= q { 1.0 } else { 0.0 };
        values.push(-((a - 1.0) / es).ln() - (r - q) * (a - ind) / (a * es));
    }
    Ok(ScoreSeries::from_values(values))
}

/// ES accuracy measure built from `delta_t = r_t - ES_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VMeasure {
    /// Mean of `delta` over violations; `None` without violations.
    pub v1: Option<f64>,
    /// Mean of `delta` over its own lower alpha-tail.
    pub v2: f64,
    /// `(|v1| + |v2|) / 2`, or `|v2|` when `v1` is undefined.
    pub v: f64,
}

pub fn v_measure(eval: &EvalSeries) -> VMeasure {
    let delta: Vec<f64> = eval.r().iter().zip(eval.es()).map(|(r, es)| r - es).collect();
    let viol: Vec<f64> = delta
        .iter()
        .zip(eval.r().iter().zip(eval.q()))
        .filter(|(_, (r, q))| r < q)
        .map(|(d, _)| *d)
        .collect();
    let v1 = (!viol.is_empty()).then(|| stats::mean(&viol));
    let qa = stats::quantile(&delta, eval.alpha());
    let mut tail: Vec<f64> = delta.iter().copied().filter(|&d| d < qa).collect();
    if tail.is_empty() {
        tail = delta.iter().copied().filter(|&d| d <= qa).collect();
    }
    let v2 = stats::mean(&tail);
    let v = match v1 {
        Some(v1) => (v1.abs() + v2.abs()) / 2.0,
        None => v2.abs(),
    };
    VMeasure { v1, v2, v }
}
