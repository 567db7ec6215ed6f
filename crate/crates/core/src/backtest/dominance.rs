use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::murphy::{elementary, Measure};
use super::EvalSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replications: usize,
    /// Expected block length of the stationary bootstrap.
    pub mean_block: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 999,
            mean_block: 50.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceResult {
    /// `sqrt(m) * max_eta (mean score of A - mean score of B)`.
    pub statistic: f64,
    pub p_value: f64,
}

/// Tests the null that forecast A dominates forecast B, i.e. A's mean
/// elementary score is no larger than B's at every grid point. Large values
/// of the statistic count against A; small p-values reject dominance.
///
/// The null distribution comes from the stationary bootstrap of the
/// per-observation score-difference vectors, recentred at the sample mean.
pub fn dominance_test(
    a: &EvalSeries,
    b: &EvalSeries,
    measure: Measure,
    grid: &[f64],
    config: &BootstrapConfig,
) -> Result<DominanceResult> {
    a.check_aligned(b)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty eta grid".into()));
    }
    if config.replications == 0 || !(config.mean_block >= 1.0) {
        return Err(Error::InvalidArgument(
            "bootstrap needs replications >= 1 and mean block length >= 1".into(),
        ));
    }
    let m = a.len();
    let g = grid.len();
    // d[t * g + k] = score_A(t, eta_k) - score_B(t, eta_k)
    let mut d = vec![0.0; m * g];
    for t in 0..m {
        for (k, &eta) in grid.iter().enumerate() {
            d[t * g + k] = elementary(measure, a, t, eta) - elementary(measure, b, t, eta);
        }
    }
    if d.iter().all(|&x| x == 0.0) {
        return Ok(DominanceResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }

    // prefix sums over the series repeated twice so circular blocks are one
    // subtraction
    let mut prefix = vec![0.0; (2 * m + 1) * g];
    for t in 0..2 * m {
        let src = (t % m) * g;
        for k in 0..g {
            prefix[(t + 1) * g + k] = prefix[t * g + k] + d[src + k];
        }
    }
    let mean: Vec<f64> = (0..g).map(|k| prefix[m * g + k] / m as f64).collect();
    let scale = (m as f64).sqrt();
    let statistic = scale * mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let geo = Geometric::new(1.0 / config.mean_block).expect("probability in (0, 1]");
    let replicate = |rep: usize| -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(rep as u64);
        let mut sums = vec![0.0; g];
        let mut filled = 0;
        while filled < m {
            let start = rng.random_range(0..m);
            let len = ((geo.sample(&mut rng) + 1) as usize).min(m - filled);
            let (lo, hi) = (start * g, (start + len) * g);
            for k in 0..g {
                sums[k] += prefix[hi + k] - prefix[lo + k];
            }
            filled += len;
        }
        (0..g)
            .map(|k| scale * (sums[k] / m as f64 - mean[k]))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    #[cfg(feature = "parallel")]
    let stars: Vec<f64> = (0..config.replications).into_par_iter().map(replicate).collect();
    #[cfg(not(feature = "parallel"))]
    let stars: Vec<f64> = (0..config.replications).map(replicate).collect();
    let exceed = stars.iter().filter(|&&s| s >= statistic).count();
    Ok(DominanceResult {
        statistic,
        p_value: exceed as f64 / config.replications as f64,
    })
}
