//! Browser bindings for the demo page in `www/`. Every export returns a JSON
//! string so the page can stay plain JavaScript.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rescaviar::backtest::{default_grid, murphy, EvalSeries, Measure};
use rescaviar::likelihood::al_log_density;
use rescaviar::simulate::{al_cdf, al_mean, al_quantile, al_tail_mean, simulate_market, CovariateConfig};
use rescaviar::{stats, InitialState, ModelSpec, ParamVector, Result, Variant};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct SimulatedPath {
    /// Returns for the days that have a forecast.
    r: Vec<f64>,
    q: Vec<f64>,
    es: Vec<f64>,
    violations: usize,
    vrate: f64,
    mean_return: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_path_json(
    variant: &str,
    alpha: f64,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    q0: f64,
    es0: f64,
    len: usize,
    seed: u64,
) -> Result<String> {
    let variant: Variant = variant.parse()?;
    let spec = ModelSpec::new(variant, alpha)?;
    let gamma: [f64; 3] = gamma.as_slice().try_into().map_err(|_| {
        rescaviar::Error::InvalidArgument(format!("gamma needs 3 values, got {}", gamma.len()))
    })?;
    let params = ParamVector::new(beta, gamma);
    let init = InitialState::new(q0, es0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = simulate_market(&spec, &params, &init, len, &CovariateConfig::default(), &mut rng)?;
    let r = sim.series.r()[1..].to_vec();
    let violations = r.iter().zip(&sim.path.q).filter(|(r, q)| r < q).count();
    let out = SimulatedPath {
        vrate: violations as f64 / r.len() as f64,
        violations,
        mean_return: sim.mean_return,
        r,
        q: sim.path.q,
        es: sim.path.es,
    };
    Ok(serde_json::to_string(&out)?)
}

#[derive(Serialize)]
struct Density {
    x: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
    /// Mean of the law below `q`; differs from the `es` parameter.
    tail_mean: f64,
    mean: f64,
}

pub fn al_density_json(q: f64, es: f64, alpha: f64, points: usize) -> Result<String> {
    ModelSpec::new(Variant::EsCaviar, alpha)?;
    if !(es < q && es < 0.0) || points < 2 {
        return Err(rescaviar::Error::InvalidArgument(
            "need es < min(q, 0) and at least 2 points".into(),
        ));
    }
    let lo = al_quantile(0.001, q, es, alpha);
    let hi = al_quantile(0.999, q, es, alpha);
    let step = (hi - lo) / (points - 1) as f64;
    let x: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let out = Density {
        density: x.iter().map(|&v| al_log_density(alpha, v, q, es).exp()).collect(),
        cdf: x.iter().map(|&v| al_cdf(v, q, es, alpha)).collect(),
        tail_mean: al_tail_mean(q, es, alpha),
        mean: al_mean(q, es, alpha),
        x,
    };
    Ok(serde_json::to_string(&out)?)
}

#[derive(Serialize)]
struct MurphyPair {
    eta: Vec<f64>,
    benchmark_q: f64,
    benchmark_es: f64,
    var_model: Vec<f64>,
    var_benchmark: Vec<f64>,
    es_model: Vec<f64>,
    es_benchmark: Vec<f64>,
}

/// Murphy curves of a forecast path against the unconditional benchmark:
/// the sample `alpha`-quantile of `r` and the mean of returns below it.
pub fn murphy_curves_json(r: Vec<f64>, q: Vec<f64>, es: Vec<f64>, alpha: f64, points: usize) -> Result<String> {
    let m = r.len();
    if m == 0 {
        return Err(rescaviar::Error::Empty);
    }
    let bq = stats::quantile(&r, alpha);
    let tail: Vec<f64> = r.iter().copied().filter(|v| *v <= bq).collect();
    let bes = stats::mean(&tail).min(bq);
    let model = EvalSeries::new(r.clone(), q, es, alpha)?;
    let bench = EvalSeries::new(r, vec![bq; m], vec![bes; m], alpha)?;
    let grid = default_grid(&[&model, &bench], points)?;
    let curve = |e: &EvalSeries, measure| murphy(measure, e, &grid).map(|c| c.score);
    let out = MurphyPair {
        var_model: curve(&model, Measure::Var)?,
        var_benchmark: curve(&bench, Measure::Var)?,
        es_model: curve(&model, Measure::Es)?,
        es_benchmark: curve(&bench, Measure::Es)?,
        benchmark_q: bq,
        benchmark_es: bes,
        eta: grid,
    };
    Ok(serde_json::to_string(&out)?)
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_path(
    variant: &str,
    alpha: f64,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    q0: f64,
    es0: f64,
    len: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(simulate_path_json(variant, alpha, beta, gamma, q0, es0, len, seed.into()))
}

#[wasm_bindgen]
pub fn al_density(q: f64, es: f64, alpha: f64, points: usize) -> std::result::Result<String, JsError> {
    js(al_density_json(q, es, alpha, points))
}

#[wasm_bindgen]
pub fn murphy_curves(
    r: Vec<f64>,
    q: Vec<f64>,
    es: Vec<f64>,
    alpha: f64,
    points: usize,
) -> std::result::Result<String, JsError> {
    js(murphy_curves_json(r, q, es, alpha, points))
}
