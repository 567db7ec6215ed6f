use std::io::Write;

use serde::{Deserialize, Serialize};

use super::EvalSeries;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Var,
    Es,
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "var" => Ok(Measure::Var),
            "es" => Ok(Measure::Es),
            _ => Err(Error::InvalidArgument(format!("unknown measure `{s}` (var or es)"))),
        }
    }
}

/// Mean elementary score at each `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MurphyCurve {
    pub measure: Measure,
    pub eta: Vec<f64>,
    pub score: Vec<f64>,
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn var_elementary(alpha: f64, r: f64, q: f64, eta: f64) -> f64 {
    (ind(r <= q) - alpha) * (ind(eta <= q) - ind(eta <= r))
}

#[inline]
pub(crate) fn es_elementary(alpha: f64, r: f64, q: f64, es: f64, eta: f64) -> f64 {
    ind(eta <= es) * (ind(r <= q) * (q - r) / alpha - (q - eta)) + ind(eta <= r) * (r - eta)
}

pub(crate) fn elementary(measure: Measure, eval: &EvalSeries, t: usize, eta: f64) -> f64 {
    let (a, r, q) = (eval.alpha(), eval.r()[t], eval.q()[t]);
    match measure {
        Measure::Var => var_elementary(a, r, q, eta),
        Measure::Es => es_elementary(a, r, q, eval.es()[t], eta),
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty eta grid".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("eta grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

pub fn murphy(measure: Measure, eval: &EvalSeries, grid: &[f64]) -> Result<MurphyCurve> {
    check_grid(grid)?;
    let m = eval.len() as f64;
    let score = grid
        .iter()
        .map(|&eta| (0..eval.len()).map(|t| elementary(measure, eval, t, eta)).sum::<f64>() / m)
        .collect();
    Ok(MurphyCurve {
        measure,
        eta: grid.to_vec(),
        score,
    })
}

pub fn murphy_var(eval: &EvalSeries, grid: &[f64]) -> Result<MurphyCurve> {
    murphy(Measure::Var, eval, grid)
}

pub fn murphy_es(eval: &EvalSeries, grid: &[f64]) -> Result<MurphyCurve> {
    murphy(Measure::Es, eval, grid)
}

/// `points` equally spaced values over
/// `[min(r, Q, ES) - sd(r), max(r, Q) + sd(r)]`, pooled over all inputs.
pub fn default_grid(evals: &[&EvalSeries], points: usize) -> Result<Vec<f64>> {
    if evals.is_empty() || points < 2 {
        return Err(Error::InvalidArgument("grid needs inputs and at least 2 points".into()));
    }
    let sd = stats::sample_std(evals[0].r());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for e in evals {
        for v in e.r().iter().chain(e.q()).chain(e.es()) {
            lo = lo.min(*v);
        }
        for v in e.r().iter().chain(e.q()) {
            hi = hi.max(*v);
        }
    }
    lo -= sd;
    hi += sd;
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| if i == points - 1 { hi } else { lo + step * i as f64 })
        .collect())
}

/// Writes `eta,score,model` rows for several labelled curves.
pub fn write_murphy_csv<W: Write>(curves: &[(String, MurphyCurve)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["eta", "score", "model"])?;
    for (label, c) in curves {
        for (eta, s) in c.eta.iter().zip(&c.score) {
            // adding +0.0 turns a signed zero into 0
            w.write_record(&[eta.to_string(), (s + 0.0).to_string(), label.clone()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<murphy writer>", e))?;
    Ok(())
}
