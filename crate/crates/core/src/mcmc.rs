//! Two-phase adaptive Metropolis sampler with block updates.
//!
//! During burn-in each block is updated by a Gaussian random walk whose scale
//! is nudged every `adapt_interval` iterations toward the target acceptance
//! band. Once enough history exists the random-walk covariance is replaced by
//! the empirical covariance of the recent chain. After burn-in each block is
//! updated by an independence Metropolis-Hastings kernel: a two-component
//! Gaussian mixture (fitted mean/covariance, and the same with inflated
//! covariance) built from the second half of the burn-in draws.

use std::fs::File;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::Posterior;
use crate::market::MarketSeries;
use crate::model::{InitialState, ModelSpec, ParamVector};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    /// Total iterations `N`.
    pub n_iter: usize,
    /// Burn-in iterations `M`, all using the random-walk kernel.
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in iteration.
    pub thin: usize,
    pub target_accept_low: f64,
    pub target_accept_high: f64,
    pub seed: u64,
    /// Initial per-coordinate standard deviation of random-walk proposals.
    pub rw_initial_scale: f64,
    pub adapt_interval: usize,
    pub adapt_up: f64,
    pub adapt_down: f64,
    /// Iteration after which the random-walk covariance follows the chain.
    /// Values at or above `burn_in` keep the diagonal covariance throughout.
    pub empirical_cov_after: usize,
    pub heavy_tail_weight: f64,
    pub heavy_tail_inflation: f64,
    pub covariance_jitter: f64,
    /// Keep the full burn-in trace in the returned chain.
    pub keep_burn_in: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 20_000,
            burn_in: 8_000,
            thin: 4,
            target_accept_low: 0.25,
            target_accept_high: 0.50,
            seed: 1,
            rw_initial_scale: 0.05,
            adapt_interval: 200,
            adapt_up: 1.1,
            adapt_down: 0.9,
            empirical_cov_after: 1_000,
            heavy_tail_weight: 0.05,
            heavy_tail_inflation: 9.0,
            covariance_jitter: 1e-8,
            keep_burn_in: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.burn_in > 0 && self.burn_in < self.n_iter) {
            return bad("MCMC needs 0 < burn_in < n_iter");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if !(0.0 < self.target_accept_low
            && self.target_accept_low < self.target_accept_high
            && self.target_accept_high < 1.0)
        {
            return bad("acceptance band must satisfy 0 < low < high < 1");
        }
        if self.adapt_interval == 0 || !(self.rw_initial_scale > 0.0) {
            return bad("adapt_interval and rw_initial_scale must be positive");
        }
        if !(0.0..1.0).contains(&self.heavy_tail_weight) || !(self.heavy_tail_inflation >= 1.0) {
            return bad("heavy-tail weight must be in [0, 1) and inflation >= 1");
        }
        Ok(())
    }

    /// Number of retained draws.
    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Something with an (unnormalised) log-density over a flat parameter vector.
pub trait Target {
    fn log_density(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> Target for F {
    fn log_density(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

impl Target for Posterior<'_> {
    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_density_flat(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: String,
    /// Acceptance over the whole random-walk phase.
    pub rw: f64,
    /// Acceptance over the second half of the random-walk phase.
    pub rw_final: f64,
    /// Acceptance of the independence kernel.
    pub independent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub names: Vec<String>,
    pub blocks: Vec<Range<usize>>,
    /// Retained draws, one row per kept iteration.
    pub draws: Vec<Vec<f64>>,
    /// 1-based iteration number of each retained draw.
    pub iterations: Vec<usize>,
    pub acceptance: Vec<BlockAcceptance>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in_trace: Option<Vec<Vec<f64>>>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Draws of one coordinate.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        (0..self.names.len()).map(|j| stats::mean(&self.column(j))).collect()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(f)?)
    }
}

/// Gaussian with cached Cholesky factor.
#[derive(Debug, Clone)]
struct Gaussian {
    mean: DVector<f64>,
    chol_l: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl Gaussian {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Option<Self> {
        let chol = Cholesky::new(cov)?;
        let chol_l = chol.l();
        let log_det = 2.0 * chol_l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Some(Self {
            mean,
            chol_l,
            chol,
            log_det,
        })
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn draw_offset<R: Rng>(&self, rng: &mut R, scale: f64) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.chol_l * z) * scale
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    fn mahalanobis2(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.mean;
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&d)
            .expect("cholesky factor is non-singular");
        y.norm_squared()
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Independence proposal: `w0 N(mu, S) + w1 N(mu, c S)`.
#[derive(Debug, Clone)]
struct MixtureProposal {
    base: Gaussian,
    heavy_weight: f64,
    inflation: f64,
}

impl MixtureProposal {
    fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let scale = if rng.random::<f64>() < self.heavy_weight {
            self.inflation.sqrt()
        } else {
            1.0
        };
        (&self.base.mean + self.base.draw_offset(rng, scale))
            .iter()
            .copied()
            .collect()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.base.dim() as f64;
        let m2 = self.base.mahalanobis2(x);
        let c = -0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * self.base.log_det;
        let light = (1.0 - self.heavy_weight).ln() + c - 0.5 * m2;
        if self.heavy_weight == 0.0 {
            return light;
        }
        let heavy = self.heavy_weight.ln() + c - 0.5 * d * self.inflation.ln() - 0.5 * m2 / self.inflation;
        log_sum_exp(light, heavy)
    }
}

fn empirical_cov(rows: &[Vec<f64>], block: &Range<usize>, jitter: f64) -> (DVector<f64>, DMatrix<f64>) {
    let d = block.len();
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(d);
    for r in rows {
        for (i, j) in block.clone().enumerate() {
            mean[i] += r[j];
        }
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        let x = DVector::from_fn(d, |i, _| r[block.start + i] - mean[i]);
        cov += &x * x.transpose();
    }
    cov /= (n - 1.0).max(1.0);
    for i in 0..d {
        cov[(i, i)] += jitter;
    }
    (mean, cov)
}

struct BlockState {
    range: Range<usize>,
    rw: Gaussian,
    scale: f64,
    epoch_accepts: usize,
    epoch_total: usize,
    rw_accepts: usize,
    rw_total: usize,
    rw_late_accepts: usize,
    rw_late_total: usize,
    ik_accepts: usize,
    ik_total: usize,
    ik: Option<MixtureProposal>,
}

fn diag_gaussian(d: usize, sd: f64) -> Gaussian {
    Gaussian::new(DVector::zeros(d), DMatrix::from_diagonal_element(d, d, sd * sd))
        .expect("diagonal covariance is positive definite")
}

/// Runs the sampler on an arbitrary target. `blocks` partitions the
/// coordinates; blocks are updated in order within each iteration.
pub fn sample_target<T: Target + ?Sized>(
    target: &T,
    names: Vec<String>,
    blocks: Vec<Range<usize>>,
    start: &[f64],
    config: &McmcConfig,
) -> Result<Chain> {
    config.validate()?;
    let dim = start.len();
    if names.len() != dim {
        return Err(Error::InvalidArgument("names and start differ in length".into()));
    }
    let mut covered = vec![false; dim];
    for b in &blocks {
        if b.end > dim || b.is_empty() {
            return Err(Error::InvalidArgument(format!("bad block {b:?}")));
        }
        for c in &mut covered[b.clone()] {
            *c = true;
        }
    }
    if covered.iter().any(|c| !c) {
        return Err(Error::InvalidArgument("blocks do not cover every coordinate".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = start.to_vec();
    let mut lp = target.log_density(&x);
    if !lp.is_finite() {
        return Err(Error::Sampler(format!(
            "initial point has log-posterior {lp}; starting values {x:?}"
        )));
    }

    let mut states: Vec<BlockState> = blocks
        .iter()
        .map(|b| BlockState {
            range: b.clone(),
            rw: diag_gaussian(b.len(), config.rw_initial_scale),
            scale: 1.0,
            epoch_accepts: 0,
            epoch_total: 0,
            rw_accepts: 0,
            rw_total: 0,
            rw_late_accepts: 0,
            rw_late_total: 0,
            ik_accepts: 0,
            ik_total: 0,
            ik: None,
        })
        .collect();

    let mut history: Vec<Vec<f64>> = Vec::with_capacity(config.burn_in);
    let mut warnings = Vec::new();
    let mut draws = Vec::with_capacity(config.retained());
    let mut iterations = Vec::with_capacity(config.retained());
    let late_start = config.burn_in / 2;
    let mut proposal = x.clone();

    for j in 1..=config.n_iter {
        let burning = j <= config.burn_in;
        if j == config.burn_in + 1 {
            let fit_rows = &history[late_start.min(history.len().saturating_sub(2))..];
            for st in &mut states {
                let (mean, cov) = empirical_cov(fit_rows, &st.range, config.covariance_jitter);
                let base = Gaussian::new(mean.clone(), cov).or_else(|| {
                    let d = st.range.len();
                    Gaussian::new(mean, DMatrix::from_diagonal_element(d, d, config.rw_initial_scale.powi(2)))
                });
                let Some(base) = base else {
                    return Err(Error::Sampler("cannot fit independence proposal".into()));
                };
                st.ik = Some(MixtureProposal {
                    base,
                    heavy_weight: config.heavy_tail_weight,
                    inflation: config.heavy_tail_inflation,
                });
            }
        }

        for st in &mut states {
            proposal.copy_from_slice(&x);
            let accepted = if burning {
                let step = st.rw.draw_offset(&mut rng, st.scale);
                for (i, k) in st.range.clone().enumerate() {
                    proposal[k] = x[k] + step[i];
                }
                let lp_new = target.log_density(&proposal);
                let ok = metropolis_accept(&mut rng, lp_new - lp);
                if ok {
                    lp = lp_new;
                }
                st.rw_total += 1;
                st.epoch_total += 1;
                if j > late_start {
                    st.rw_late_total += 1;
                }
                if ok {
                    st.rw_accepts += 1;
                    st.epoch_accepts += 1;
                    if j > late_start {
                        st.rw_late_accepts += 1;
                    }
                }
                ok
            } else {
                let ik = st.ik.as_ref().expect("independence kernel fitted");
                let cand = ik.draw(&mut rng);
                proposal[st.range.clone()].copy_from_slice(&cand);
                let lp_new = target.log_density(&proposal);
                let log_ratio = if lp_new == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    (lp_new - lp) + ik.log_density(&x[st.range.clone()]) - ik.log_density(&cand)
                };
                let ok = metropolis_accept(&mut rng, log_ratio);
                if ok {
                    lp = lp_new;
                }
                st.ik_total += 1;
                if ok {
                    st.ik_accepts += 1;
                }
                ok
            };
            if accepted {
                x[st.range.clone()].copy_from_slice(&proposal[st.range.clone()]);
            }
        }

        if burning {
            history.push(x.clone());
            if j % config.adapt_interval == 0 {
                for st in &mut states {
                    adapt_block(st, j, &history, config, &mut warnings);
                }
            }
        } else if (j - config.burn_in).is_multiple_of(config.thin) {
            draws.push(x.clone());
            iterations.push(j);
        }
    }

    let rate = |a: usize, t: usize| if t == 0 { 0.0 } else { a as f64 / t as f64 };
    let acceptance = states
        .iter()
        .enumerate()
        .map(|(i, st)| BlockAcceptance {
            block: block_label(&names, &st.range, i),
            rw: rate(st.rw_accepts, st.rw_total),
            rw_final: rate(st.rw_late_accepts, st.rw_late_total),
            independent: rate(st.ik_accepts, st.ik_total),
        })
        .collect();

    Ok(Chain {
        names,
        blocks,
        draws,
        iterations,
        acceptance,
        warnings,
        burn_in_trace: config.keep_burn_in.then_some(history),
    })
}

fn block_label(names: &[String], range: &Range<usize>, i: usize) -> String {
    let first = names[range.start].trim_end_matches(char::is_numeric);
    if names[range.clone()].iter().all(|n| n.trim_end_matches(char::is_numeric) == first) {
        first.to_string()
    } else {
        format!("block{i}")
    }
}

fn metropolis_accept<R: Rng>(rng: &mut R, log_ratio: f64) -> bool {
    if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_ratio
}

fn adapt_block(
    st: &mut BlockState,
    j: usize,
    history: &[Vec<f64>],
    config: &McmcConfig,
    warnings: &mut Vec<String>,
) {
    let rate = st.epoch_accepts as f64 / st.epoch_total.max(1) as f64;
    if st.epoch_accepts == 0 {
        warnings.push(format!(
            "iteration {j}: no proposals accepted in block {:?} during the last epoch; scale shrunk",
            st.range
        ));
    }
    if j >= config.empirical_cov_after && config.empirical_cov_after < config.burn_in {
        let switching = j < config.empirical_cov_after + config.adapt_interval;
        let (_, cov) = empirical_cov(&history[j / 2..], &st.range, config.covariance_jitter);
        if let Some(g) = Gaussian::new(DVector::zeros(st.range.len()), cov) {
            st.rw = g;
            if switching {
                st.scale = 2.38 / (st.range.len() as f64).sqrt();
            }
        }
    }
    if rate > config.target_accept_high {
        st.scale *= config.adapt_up;
    } else if rate < config.target_accept_low {
        st.scale *= config.adapt_down;
    }
    st.epoch_accepts = 0;
    st.epoch_total = 0;
}

/// CAViaR posterior sampling with the `(beta, gamma)` block split.
/// `start` defaults to beta = -0.1, gamma = 0.1, projected into the
/// constraint set.
pub fn sample(
    spec: &ModelSpec,
    series: &MarketSeries,
    init: &InitialState,
    window: Range<usize>,
    start: Option<&ParamVector>,
    config: &McmcConfig,
) -> Result<Chain> {
    let posterior = Posterior::new(*spec, series, *init, window)?;
    let start = start
        .cloned()
        .unwrap_or_else(|| ParamVector::initial(spec.variant))
        .project(spec.variant);
    start.check_dim(spec.variant)?;
    let k = spec.k();
    sample_target(
        &posterior,
        spec.variant.param_names(),
        vec![0..k, k..k + 3],
        &start.to_flat(),
        config,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
}

impl PosteriorSummary {
    /// CSV with columns `parameter,mean,median,std,q2.5,q97.5`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["parameter", "mean", "median", "std", "q2.5", "q97.5"])?;
        for p in &self.params {
            w.write_record(&[
                p.name.clone(),
                format!("{:.4}", p.mean),
                format!("{:.4}", p.median),
                format!("{:.4}", p.std),
                format!("{:.4}", p.q025),
                format!("{:.4}", p.q975),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Mean, median, sample standard deviation and the 2.5%/97.5% type-7
/// quantiles of each coordinate.
pub fn summarize_chain(chain: &Chain) -> Result<PosteriorSummary> {
    if chain.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "posterior summary needs at least 10 draws, got {}",
            chain.len()
        )));
    }
    let params = chain
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut col = chain.column(j);
            col.sort_by(f64::total_cmp);
            ParamSummary {
                name: name.clone(),
                mean: stats::mean(&col),
                median: stats::quantile_sorted(&col, 0.5),
                std: stats::sample_std(&col),
                q025: stats::quantile_sorted(&col, 0.025),
                q975: stats::quantile_sorted(&col, 0.975),
            }
        })
        .collect();
    Ok(PosteriorSummary { params })
}

/// Sample autocorrelations for lags `0..=max_lag` (biased denominator).
pub fn acf(xs: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if xs.len() <= max_lag {
        return Err(Error::InsufficientData(format!(
            "acf needs more than {max_lag} values, got {}",
            xs.len()
        )));
    }
    let m = stats::mean(xs);
    let c0: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    if c0 == 0.0 {
        return Err(Error::InvalidArgument("acf of a constant series".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            let ck: f64 = xs[k..].iter().zip(xs).map(|(a, b)| (a - m) * (b - m)).sum();
            ck / c0
        })
        .collect())
}

/// Writes `iteration,parameter,value` trace rows and `lag,parameter,acf` rows.
/// Parameters with zero variance get no ACF rows.
pub fn export_diagnostics<W1: Write, W2: Write>(
    chain: &Chain,
    max_lag: usize,
    trace_out: W1,
    acf_out: W2,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(trace_out);
    w.write_record(["iteration", "parameter", "value"])?;
    for (j, name) in chain.names.iter().enumerate() {
        for (it, d) in chain.iterations.iter().zip(&chain.draws) {
            w.write_record(&[it.to_string(), name.clone(), d[j].to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<trace writer>", e))?;

    let mut w = csv::Writer::from_writer(acf_out);
    w.write_record(["lag", "parameter", "acf"])?;
    let lag = max_lag.min(chain.len().saturating_sub(1));
    for (j, name) in chain.names.iter().enumerate() {
        let Ok(rho) = acf(&chain.column(j), lag) else {
            continue;
        };
        for (k, r) in rho.iter().enumerate() {
            w.write_record(&[k.to_string(), name.clone(), format!("{r:.6}")])?;
        }
    }
    w.flush().map_err(|e| Error::io("<acf writer>", e))?;
    Ok(())
}

/// Writes `trace.csv` and `acf.csv` into `dir`.
pub fn export_diagnostics_to_dir(chain: &Chain, max_lag: usize, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tp = dir.join("trace.csv");
    let ap = dir.join("acf.csv");
    let t = File::create(&tp).map_err(|e| Error::io(&tp, e))?;
    let a = File::create(&ap).map_err(|e| Error::io(&ap, e))?;
    export_diagnostics(chain, max_lag, t, a)
}
