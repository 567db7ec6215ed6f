use std::io::Write;

use serde::{Deserialize, Serialize};

use super::coverage::{cc_test, dq_test, hits, uc_test, vrate, CcResult, TestResult, DQ_LAGS};
use super::ranking::CriteriaRow;
use super::scores::{al_log_score, quantile_score, v_measure, VMeasure};
use super::EvalSeries;
use crate::error::{Error, Result};

/// Level at which coverage tests count as rejected.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub m: usize,
    pub alpha: f64,
    pub violations: usize,
    pub vrate: f64,
    pub uc: TestResult,
    pub cc: CcResult,
    /// `None` when the DQ regression is singular (see `dq_error`).
    pub dq: Option<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dq_error: Option<String>,
    pub v_measure: VMeasure,
    pub quantile_score_sum: f64,
    pub quantile_score_mean: f64,
    pub al_log_score_sum: f64,
    pub al_log_score_mean: f64,
    pub uc_rejected: bool,
    pub cc_rejected: bool,
    pub dq_rejected: bool,
    /// Number of UC/CC/DQ rejections at [`SIGNIFICANCE`].
    pub rejections: usize,
}

pub fn backtest(eval: &EvalSeries) -> Result<BacktestReport> {
    let (violations, rate) = vrate(eval);
    let uc = uc_test(violations, eval.len(), eval.alpha())?;
    let cc = if eval.len() >= 2 {
        cc_test(&hits(eval), eval.alpha())?
    } else {
        CcResult { uc: uc.statistic, independence: 0.0, statistic: uc.statistic, p_value: 1.0 }
    };
    let (dq, dq_error) = match dq_test(eval, DQ_LAGS) {
        Ok(t) => (Some(t), None),
        Err(e @ (Error::Singular { .. } | Error::InsufficientData(_))) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let qs = quantile_score(eval);
    let al = al_log_score(eval)?;
    let uc_rejected = uc.rejects(SIGNIFICANCE);
    let cc_rejected = cc.p_value < SIGNIFICANCE;
    let dq_rejected = dq.is_some_and(|t| t.rejects(SIGNIFICANCE));
    Ok(BacktestReport {
        m: eval.len(),
        alpha: eval.alpha(),
        violations,
        vrate: rate,
        uc,
        cc,
        dq,
        dq_error,
        v_measure: v_measure(eval),
        quantile_score_sum: qs.sum,
        quantile_score_mean: qs.mean(),
        al_log_score_sum: al.sum,
        al_log_score_mean: al.mean(),
        uc_rejected,
        cc_rejected,
        dq_rejected,
        rejections: [uc_rejected, cc_rejected, dq_rejected].iter().filter(|&&b| b).count(),
    })
}

impl BacktestReport {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn criteria_row(&self, market: &str, model: &str) -> CriteriaRow {
        CriteriaRow {
            market: market.to_string(),
            model: model.to_string(),
            alpha: self.alpha,
            vrate: self.vrate,
            es_measure: self.v_measure.v,
            quantile_score: self.quantile_score_sum,
            al_log_score: self.al_log_score_sum,
            coverage_rejections: Some(self.rejections as f64),
            esr_rejections: None,
        }
    }
}
