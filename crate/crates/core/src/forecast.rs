//! One-step-ahead VaR/ES forecasting from posterior draws, and the rolling
//! out-of-sample loop.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketSeries, SampleSplit};
use crate::mcmc::{self, Chain, McmcConfig};
use crate::model::{
    check_window, gap_step, quantile_step, InitialState, ModelSpec, ParamVector, Variant,
};

/// Smallest in-sample length accepted by [`run_rolling`].
pub const MIN_IN_SAMPLE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum WindowMode {
    /// Estimation window anchored at the start of the sample.
    Expanding,
    /// Estimation window of fixed length ending at the forecast origin.
    Rolling { length: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingConfig {
    pub window_mode: WindowMode,
    /// Re-estimate every `refit_interval` out-of-sample steps.
    pub refit_interval: usize,
    /// Start each refit at the previous posterior mean.
    pub warm_start: bool,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            window_mode: WindowMode::Expanding,
            refit_interval: 1,
            warm_start: true,
        }
    }
}

impl RollingConfig {
    /// Desk-scale setting: refit every 20 days.
    pub fn fast() -> Self {
        Self {
            refit_interval: 20,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub date: NaiveDate,
    pub r: f64,
    pub q: f64,
    pub es: f64,
    pub variant: Variant,
    pub alpha: f64,
}

/// Point forecast together with the per-draw values it averages.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub q: f64,
    pub es: f64,
    pub q_draws: Vec<f64>,
    pub es_draws: Vec<f64>,
}

/// Per-draw recursion states carried through time.
#[derive(Debug, Clone)]
pub struct DrawEnsemble {
    variant: Variant,
    params: Vec<ParamVector>,
    q: Vec<f64>,
    w: Vec<f64>,
    /// Index of the observation the states refer to.
    t: usize,
}

impl DrawEnsemble {
    /// Runs each draw's own recursion over `window`; the resulting states
    /// refer to `window.end - 1`.
    pub fn from_draws(
        spec: &ModelSpec,
        draws: Vec<ParamVector>,
        series: &MarketSeries,
        init: &InitialState,
        window: Range<usize>,
    ) -> Result<Self> {
        check_window(series, &window)?;
        if draws.is_empty() {
            return Err(Error::InsufficientData("no posterior draws to forecast with".into()));
        }
        let mut ens = Self {
            variant: spec.variant,
            q: vec![init.q0; draws.len()],
            w: vec![init.w0(); draws.len()],
            params: draws,
            t: window.start - 1,
        };
        for p in &ens.params {
            p.check_dim(spec.variant)?;
        }
        for t in window {
            ens.advance(series)?;
            debug_assert_eq!(ens.t, t);
        }
        Ok(ens)
    }

    pub fn from_chain(
        spec: &ModelSpec,
        chain: &Chain,
        series: &MarketSeries,
        init: &InitialState,
        window: Range<usize>,
    ) -> Result<Self> {
        let draws = chain
            .draws
            .iter()
            .map(|d| ParamVector::from_flat(spec.variant, d))
            .collect::<Result<Vec<_>>>()?;
        Self::from_draws(spec, draws, series, init, window)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Index the current states refer to.
    pub fn time(&self) -> usize {
        self.t
    }

    fn step_values(&self, series: &MarketSeries, i: usize) -> (f64, f64) {
        let t = self.t;
        let p = &self.params[i];
        let r_prev = series.r()[t];
        let oc = if self.variant.uses_overnight() {
            series.oc()[t + 1]
        } else {
            0.0
        };
        let q = quantile_step(self.variant, &p.beta, self.q[i], r_prev, series.rv()[t], oc);
        let w = gap_step(&p.gamma, self.q[i], r_prev, self.w[i]);
        (q, w)
    }

    fn check_next(&self, series: &MarketSeries) -> Result<()> {
        let next = self.t + 1;
        let needs = if self.variant.uses_overnight() { next + 1 } else { next };
        if series.len() < needs {
            return Err(Error::InvalidArgument(format!(
                "forecasting index {next} needs data through index {}, series has {}",
                needs - 1,
                series.len()
            )));
        }
        Ok(())
    }

    /// Per-draw values at `time() + 1` averaged into a point forecast. Uses
    /// `r`, `rv` at `time()` and `oc` at `time() + 1`.
    pub fn forecast(&self, series: &MarketSeries) -> Result<Forecast> {
        self.check_next(series)?;
        let mut q_draws = Vec::with_capacity(self.len());
        let mut es_draws = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let (q, w) = self.step_values(series, i);
            let es = q - w;
            if !(q.is_finite() && es.is_finite()) {
                return Err(Error::NonFinite { index: self.t + 1 });
            }
            q_draws.push(q);
            es_draws.push(es);
        }
        let n = self.len() as f64;
        Ok(Forecast {
            q: q_draws.iter().sum::<f64>() / n,
            es: es_draws.iter().sum::<f64>() / n,
            q_draws,
            es_draws,
        })
    }

    /// Moves every state one observation forward.
    pub fn advance(&mut self, series: &MarketSeries) -> Result<()> {
        self.check_next(series)?;
        for i in 0..self.len() {
            let (q, w) = self.step_values(series, i);
            if !(q.is_finite() && w.is_finite()) {
                return Err(Error::NonFinite { index: self.t + 1 });
            }
            self.q[i] = q;
            self.w[i] = w;
        }
        self.t += 1;
        Ok(())
    }
}

/// Point forecast for `window.end` from a chain estimated on `window`.
/// Overnight variants need `oc` at `window.end` in `series`.
pub fn forecast_next(
    spec: &ModelSpec,
    series: &MarketSeries,
    init: &InitialState,
    window: Range<usize>,
    chain: &Chain,
) -> Result<Forecast> {
    DrawEnsemble::from_chain(spec, chain, series, init, window)?.forecast(series)
}

/// Seed for the refit with the given index.
pub fn refit_seed(root: u64, refit: usize) -> u64 {
    let mut z = root ^ (refit as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn estimation_window(mode: WindowMode, origin: usize) -> Range<usize> {
    match mode {
        WindowMode::Expanding => 1..origin,
        WindowMode::Rolling { length } => origin.saturating_sub(length).max(1)..origin,
    }
}

/// Fits on the window ending before `origin` and returns the ensemble
/// positioned at `origin - 1`, plus the posterior mean.
fn refit(
    spec: &ModelSpec,
    series: &MarketSeries,
    origin: usize,
    refit_index: usize,
    start: Option<&ParamVector>,
    mcmc_cfg: &McmcConfig,
    rolling: &RollingConfig,
) -> Result<(DrawEnsemble, ParamVector)> {
    let window = estimation_window(rolling.window_mode, origin);
    let init = InitialState::from_returns(&series.r()[window.start - 1..window.end], spec.alpha)?;
    let cfg = McmcConfig {
        seed: refit_seed(mcmc_cfg.seed, refit_index),
        ..mcmc_cfg.clone()
    };
    let chain = match mcmc::sample(spec, series, &init, window.clone(), start, &cfg) {
        Ok(c) => c,
        // a warm start can land outside the new posterior's support
        Err(Error::Sampler(_)) if start.is_some() => {
            mcmc::sample(spec, series, &init, window.clone(), None, &cfg)?
        }
        Err(e) => return Err(e),
    };
    let mean = ParamVector::from_flat(spec.variant, &chain.posterior_mean())?;
    let ens = DrawEnsemble::from_chain(spec, &chain, series, &init, window)?;
    Ok((ens, mean))
}

fn run_segment(
    spec: &ModelSpec,
    series: &MarketSeries,
    origins: Range<usize>,
    refit_index: usize,
    start: Option<&ParamVector>,
    mcmc_cfg: &McmcConfig,
    rolling: &RollingConfig,
) -> Result<(Vec<ForecastRecord>, ParamVector)> {
    let date = series.dates()[origins.start];
    let wrap = |e: Error| Error::Refit {
        date,
        source: Box::new(e),
    };
    let (mut ens, mean) =
        refit(spec, series, origins.start, refit_index, start, mcmc_cfg, rolling).map_err(wrap)?;
    let mut out = Vec::with_capacity(origins.len());
    for t in origins {
        if ens.time() + 1 < t {
            ens.advance(series).map_err(wrap)?;
        }
        let f = ens.forecast(series).map_err(wrap)?;
        out.push(ForecastRecord {
            date: series.dates()[t],
            r: series.r()[t],
            q: f.q,
            es: f.es,
            variant: spec.variant,
            alpha: spec.alpha,
        });
    }
    Ok((out, mean))
}

/// Forecasts every out-of-sample day `split.n .. split.n + split.m`.
pub fn run_rolling(
    spec: &ModelSpec,
    series: &MarketSeries,
    split: SampleSplit,
    mcmc_cfg: &McmcConfig,
    rolling: &RollingConfig,
) -> Result<Vec<ForecastRecord>> {
    if split.n < MIN_IN_SAMPLE {
        return Err(Error::InsufficientData(format!(
            "rolling forecasts need at least {MIN_IN_SAMPLE} in-sample observations, got {}",
            split.n
        )));
    }
    if split.m == 0 || split.total() != series.len() {
        return Err(Error::InvalidArgument(format!(
            "split {}+{} does not cover a series of length {}",
            split.n,
            split.m,
            series.len()
        )));
    }
    if rolling.refit_interval == 0 {
        return Err(Error::InvalidArgument("refit_interval must be at least 1".into()));
    }
    if let WindowMode::Rolling { length } = rolling.window_mode {
        if length < MIN_IN_SAMPLE {
            return Err(Error::InvalidArgument(format!(
                "rolling window length must be at least {MIN_IN_SAMPLE}"
            )));
        }
    }
    mcmc_cfg.validate()?;

    let end = split.total();
    let segments: Vec<Range<usize>> = (split.n..end)
        .step_by(rolling.refit_interval)
        .map(|s| s..(s + rolling.refit_interval).min(end))
        .collect();

    if rolling.warm_start {
        let mut out = Vec::with_capacity(split.m);
        let mut start: Option<ParamVector> = None;
        for (i, seg) in segments.into_iter().enumerate() {
            let (recs, mean) =
                run_segment(spec, series, seg, i, start.as_ref(), mcmc_cfg, rolling)?;
            out.extend(recs);
            start = Some(mean.project(spec.variant));
        }
        return Ok(out);
    }

    let run = |(i, seg): (usize, Range<usize>)| {
        run_segment(spec, series, seg, i, None, mcmc_cfg, rolling).map(|(r, _)| r)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<Vec<ForecastRecord>>> =
        segments.into_par_iter().enumerate().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<Vec<ForecastRecord>>> =
        segments.into_iter().enumerate().map(run).collect();
    let mut out = Vec::with_capacity(split.m);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ForecastRow {
    date: NaiveDate,
    r: f64,
    q: f64,
    es: f64,
    variant: String,
    alpha: f64,
}

/// Writes `date,r,q,es,variant,alpha`.
pub fn write_forecasts<W: Write>(records: &[ForecastRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for rec in records {
        w.serialize(ForecastRow {
            date: rec.date,
            r: rec.r,
            q: rec.q,
            es: rec.es,
            variant: rec.variant.id().to_string(),
            alpha: rec.alpha,
        })?;
    }
    if records.is_empty() {
        w.write_record(["date", "r", "q", "es", "variant", "alpha"])?;
    }
    w.flush().map_err(|e| Error::io("<forecast writer>", e))?;
    Ok(())
}

pub fn write_forecasts_path(records: &[ForecastRecord], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_forecasts(records, f)
}

pub fn read_forecasts<R: Read>(reader: R) -> Result<Vec<ForecastRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ForecastRow>().enumerate() {
        let row = row?;
        let variant = row.variant.parse::<Variant>().map_err(|e| Error::Parse {
            row: i + 2,
            message: e.to_string(),
        })?;
        if !(row.es <= row.q) {
            return Err(Error::Parse {
                row: i + 2,
                message: format!("es {} above q {}", row.es, row.q),
            });
        }
        out.push(ForecastRecord {
            date: row.date,
            r: row.r,
            q: row.q,
            es: row.es,
            variant,
            alpha: row.alpha,
        });
    }
    Ok(out)
}

pub fn read_forecasts_path(path: &Path) -> Result<Vec<ForecastRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_forecasts(f)
}
