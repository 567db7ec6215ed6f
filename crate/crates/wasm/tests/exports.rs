use rescaviar_wasm::{al_density_json, murphy_curves_json, simulate_path_json};
use serde_json::Value;

fn numbers(v: &Value, key: &str) -> Vec<f64> {
    v[key].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn sim(seed: u64) -> Value {
    let text = simulate_path_json(
        "res-caviar-oc",
        0.025,
        vec![-0.5, 0.4, -1.2, 0.3, -1.0],
        vec![0.3, 0.4, 0.2],
        -2.2,
        -2.7,
        1500,
        seed,
    )
    .unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn simulated_path_is_aligned_and_seeded() {
    let a = sim(3);
    let (r, q, es) = (numbers(&a, "r"), numbers(&a, "q"), numbers(&a, "es"));
    assert_eq!(r.len(), 1499);
    assert_eq!(q.len(), r.len());
    assert!(q.iter().zip(&es).all(|(q, e)| e <= q));
    let hits = r.iter().zip(&q).filter(|(r, q)| r < q).count();
    assert_eq!(a["violations"].as_u64().unwrap() as usize, hits);
    assert_eq!(a, sim(3));
    assert_ne!(a, sim(4));
}

#[test]
fn bad_simulation_inputs_are_errors() {
    assert!(simulate_path_json("garch", 0.025, vec![], vec![0.1; 3], -2.0, -3.0, 10, 1).is_err());
    assert!(simulate_path_json("es-caviar", 0.025, vec![-0.5, 0.1, -0.2, 0.5], vec![0.1; 2], -2.0, -3.0, 10, 1).is_err());
}

#[test]
fn density_integrates_to_its_cdf() {
    let v: Value = serde_json::from_str(&al_density_json(-2.0, -3.0, 0.025, 2001).unwrap()).unwrap();
    let (x, f, cdf) = (numbers(&v, "x"), numbers(&v, "density"), numbers(&v, "cdf"));
    let mut area = 0.0;
    for i in 1..x.len() {
        area += 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
    }
    assert!((area - (cdf[cdf.len() - 1] - cdf[0])).abs() < 1e-3);
    assert!((v["tail_mean"].as_f64().unwrap() - (-2.0 + 0.025 * -3.0 / 0.975)).abs() < 1e-12);
    assert!(al_density_json(-2.0, -1.0, 0.025, 10).is_err());
}

#[test]
fn model_curves_sit_below_benchmark_on_average() {
    let a = sim(5);
    let text = murphy_curves_json(numbers(&a, "r"), numbers(&a, "q"), numbers(&a, "es"), 0.025, 101).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let model = numbers(&v, "var_model");
    let bench = numbers(&v, "var_benchmark");
    assert_eq!(model.len(), 101);
    assert_eq!(model[0], 0.0);
    assert_eq!(model[100], 0.0);
    assert!(model.iter().sum::<f64>() < bench.iter().sum::<f64>());
    assert!(murphy_curves_json(vec![], vec![], vec![], 0.025, 10).is_err());
}
