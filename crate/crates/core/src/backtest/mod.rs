//! Forecast evaluation: coverage backtests, scoring rules, Murphy diagrams,
//! dominance tests, score-difference t-statistics and model ranking.

mod coverage;
mod dominance;
mod murphy;
mod ranking;
mod report;
mod scores;
mod tstat;

pub use coverage::{cc_test, dq_test, hits, uc_test, vrate, CcResult, TestResult, DQ_LAGS};
pub use dominance::{dominance_test, BootstrapConfig, DominanceResult};
pub use murphy::{default_grid, murphy, murphy_es, murphy_var, write_murphy_csv, Measure, MurphyCurve};
pub use ranking::{
    rank_criterion, rank_models, read_criteria_csv, total_ranks, write_criteria_csv, write_rank_csv,
    CriteriaRow,
    Criterion, CriterionKind, RankTable,
};
pub use report::{backtest, BacktestReport, SIGNIFICANCE};
pub use scores::{al_log_score, quantile_score, v_measure, ScoreSeries, VMeasure};
pub use tstat::{hac_variance, score_diff_tstat, score_diff_tstat_eval, ScoreKind};

use crate::error::{Error, Result};
use crate::forecast::ForecastRecord;

/// Aligned realized returns and VaR/ES forecasts at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSeries {
    r: Vec<f64>,
    q: Vec<f64>,
    es: Vec<f64>,
    alpha: f64,
}

impl EvalSeries {
    pub fn new(r: Vec<f64>, q: Vec<f64>, es: Vec<f64>, alpha: f64) -> Result<Self> {
        if r.len() != q.len() || r.len() != es.len() {
            return Err(Error::InvalidArgument(format!(
                "unequal lengths r = {}, q = {}, es = {}",
                r.len(),
                q.len(),
                es.len()
            )));
        }
        if r.is_empty() {
            return Err(Error::Empty);
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
        }
        for i in 0..r.len() {
            if !(r[i].is_finite() && q[i].is_finite() && es[i].is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
            if es[i] > q[i] {
                return Err(Error::InvalidArgument(format!(
                    "es {} above q {} at index {i}",
                    es[i], q[i]
                )));
            }
        }
        Ok(Self { r, q, es, alpha })
    }

    /// All records must share one alpha.
    pub fn from_records(records: &[ForecastRecord]) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::Empty);
        };
        if records.iter().any(|x| x.alpha != first.alpha) {
            return Err(Error::InvalidArgument("forecast file mixes alpha levels".into()));
        }
        Self::new(
            records.iter().map(|x| x.r).collect(),
            records.iter().map(|x| x.q).collect(),
            records.iter().map(|x| x.es).collect(),
            first.alpha,
        )
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn es(&self) -> &[f64] {
        &self.es
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Reorders the triples jointly: entry `i` of the result is entry
    /// `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        if order.len() != self.len() || order.iter().any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        Ok(Self {
            r: order.iter().map(|&i| self.r[i]).collect(),
            q: order.iter().map(|&i| self.q[i]).collect(),
            es: order.iter().map(|&i| self.es[i]).collect(),
            alpha: self.alpha,
        })
    }

    pub(crate) fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() || self.alpha != other.alpha {
            return Err(Error::InvalidArgument(
                "compared forecasts need equal length and alpha".into(),
            ));
        }
        Ok(())
    }
}

/// `x ln y` with `0 ln 0 = 0`.
pub(crate) fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}
