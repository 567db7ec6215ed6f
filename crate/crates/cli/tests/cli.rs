use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rescaviar::backtest::{read_criteria_csv, CriteriaRow};
use rescaviar::forecast::{run_rolling, write_forecasts, RollingConfig};
use rescaviar::market::{ingest_csv, split, Boundary, ColumnMap};
use rescaviar::mcmc::{self, summarize_chain, Chain, McmcConfig};
use rescaviar::{InitialState, ModelSpec, Variant};
use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rescaviar"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> Output {
    let o = run(args, out);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// 200 simulated days written by the `simulate` command.
fn synthetic(dir: &Path, len: usize) -> PathBuf {
    let sim = dir.join("sim");
    ok(
        &[
            "simulate",
            "--model",
            "res-caviar-oc",
            "--len",
            &len.to_string(),
            "--beta=-0.5,0.4,-1.2,0.3,-1.0",
            "--gamma",
            "0.3,0.4,0.2",
            "--alpha",
            "0.05",
            "--seed",
            "11",
        ],
        &sim,
    );
    sim.join("simulated.csv")
}

#[test]
fn summarize_returns_layout() {
    let dir = TempDir::new().unwrap();
    let o = ok(&["summarize", p(&fixture("returns.csv"))], dir.path());
    let golden = read(&fixture("summary_returns.golden.csv"));
    assert_eq!(read(&dir.path().join("summary.csv")), golden);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), golden);
}

#[test]
fn summarize_prices_layout() {
    let dir = TempDir::new().unwrap();
    ok(&["summarize", p(&fixture("prices.csv"))], dir.path());
    assert_eq!(read(&dir.path().join("summary.csv")), read(&fixture("summary_prices.golden.csv")));
}

#[test]
fn summarize_with_config_column_names_and_missing_rows() {
    let dir = TempDir::new().unwrap();
    let o = ok(
        &["summarize", "--config", p(&fixture("custom.toml")), p(&fixture("custom.csv"))],
        dir.path(),
    );
    assert_eq!(read(&dir.path().join("summary.csv")), read(&fixture("summary_custom.golden.csv")));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dropped 2"));
}

#[test]
fn summarize_without_column_is_usage_error() {
    let dir = TempDir::new().unwrap();
    // the custom file lacks the default column names
    let o = run(&["summarize", p(&fixture("custom.csv"))], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing column"));
}

#[test]
fn missing_input_file_is_runtime_error() {
    let dir = TempDir::new().unwrap();
    let o = run(&["summarize", "/nonexistent/file.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fit_is_deterministic_and_matches_library() {
    let dir = TempDir::new().unwrap();
    let input = synthetic(dir.path(), 200);
    let args = |out: &str| {
        vec![
            "fit".to_string(),
            "--input".into(),
            p(&input).into(),
            "--model".into(),
            "res-caviar-oc".into(),
            "--alpha".into(),
            "0.05".into(),
            "--n-iter".into(),
            "1500".into(),
            "--burn-in".into(),
            "500".into(),
            "--thin".into(),
            "2".into(),
            "--seed".into(),
            "4".into(),
            "--out".into(),
            out.into(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = Command::new(env!("CARGO_BIN_EXE_rescaviar")).args(args(p(out))).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let summary = read(&a.join("posterior_summary.csv"));
    assert_eq!(summary, read(&b.join("posterior_summary.csv")));
    assert_eq!(read(&a.join("chain.json")), read(&b.join("chain.json")));
    assert!(summary.starts_with("parameter,mean,median,std,q2.5,q97.5\n"));
    assert_eq!(summary.lines().count(), 9);
    for f in ["trace.csv", "acf.csv"] {
        assert!(a.join(f).exists());
    }

    let series = ingest_csv(&input, &ColumnMap::default()).unwrap().series;
    let spec = ModelSpec::new(Variant::ResCaviarOc, 0.05).unwrap();
    let init = InitialState::from_returns(series.r(), 0.05).unwrap();
    let cfg = McmcConfig { n_iter: 1500, burn_in: 500, thin: 2, seed: 4, ..McmcConfig::default() };
    let chain = mcmc::sample(&spec, &series, &init, 1..series.len(), None, &cfg).unwrap();
    assert_eq!(Chain::load_json(&a.join("chain.json")).unwrap(), chain);
    let mut buf = Vec::new();
    summarize_chain(&chain).unwrap().write_csv(&mut buf).unwrap();
    assert_eq!(summary.as_bytes(), buf.as_slice());
}

#[test]
fn invalid_model_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = run(&["fit", "--input", p(&fixture("returns.csv")), "--model", "garch"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["fit", "--input", p(&fixture("returns.csv"))], dir.path());
    assert_eq!(o.status.code(), Some(2), "model is required");
}

#[test]
fn unknown_command_and_bad_config_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["calibrate"], dir.path()).status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[model]\nvariant = \"garch\"\n").unwrap();
    let o = run(&["summarize", "--config", p(&cfg), p(&fixture("returns.csv"))], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn forecast_matches_library_and_honours_refit_interval() {
    let dir = TempDir::new().unwrap();
    let input = synthetic(dir.path(), 130);
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 3\n[model]\nvariant = \"es-caviar\"\nalpha = 0.05\n[mcmc]\nn_iter = 600\nburn_in = 300\nthin = 3\n[rolling]\nrefit_interval = 1\n",
    )
    .unwrap();
    let fc = |out: &Path, extra: &[&str]| {
        let mut a = vec!["forecast", "--config", p(&cfg), "--input", p(&input), "--split", "110"];
        a.extend_from_slice(extra);
        ok(&a, out);
        read(&out.join("forecasts.csv"))
    };
    let every_5 = fc(&dir.path().join("f5"), &["--refit-interval", "5"]);
    let every_20 = fc(&dir.path().join("f20"), &["--refit-interval", "20"]);
    assert_eq!(every_5.lines().count(), 21);
    assert_ne!(every_5, every_20);

    let series = ingest_csv(&input, &ColumnMap::default()).unwrap().series;
    let spec = ModelSpec::new(Variant::EsCaviar, 0.05).unwrap();
    let mcmc_cfg = McmcConfig { n_iter: 600, burn_in: 300, thin: 3, seed: 3, ..McmcConfig::default() };
    let sp = split(&series, Boundary::Index(110)).unwrap();
    for (text, k) in [(&every_5, 5), (&every_20, 20)] {
        let rolling = RollingConfig { refit_interval: k, ..RollingConfig::default() };
        let recs = run_rolling(&spec, &series, sp, &mcmc_cfg, &rolling).unwrap();
        let mut buf = Vec::new();
        write_forecasts(&recs, &mut buf).unwrap();
        assert_eq!(text.as_bytes(), buf.as_slice());
    }
}

#[test]
fn forecast_without_split_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = run(&["forecast", "--input", p(&fixture("returns.csv")), "--model", "es-caviar"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn backtest_golden_report() {
    let dir = TempDir::new().unwrap();
    ok(&["backtest", "--forecasts", p(&fixture("forecasts10.csv")), "--market", "FX"], dir.path());
    let json: Value = serde_json::from_str(&read(&dir.path().join("backtest.json"))).unwrap();
    let sections = json.as_array().unwrap();
    assert_eq!(sections.len(), 1);
    assert_eq!(sections[0]["model"], "es-caviar");
    let r = &sections[0]["report"];
    let close = |v: &Value, want: f64| (v.as_f64().unwrap() - want).abs() < 1e-9;
    assert_eq!(r["m"], 10);
    assert_eq!(r["violations"], 2);
    assert!(close(&r["vrate"], 0.2));
    assert!(close(&r["quantile_score_sum"], 2.225));
    assert!(close(&r["al_log_score_sum"], 19.912_688_190_176_57));
    assert!(close(&r["uc"]["statistic"], 0.888_060_151_737_645));
    assert!(close(&r["uc"]["p_value"], 0.346_003_530_256_174_7));

    let rows = read_criteria_csv(read(&dir.path().join("criteria.csv")).as_bytes()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].market.as_str(), rows[0].model.as_str()), ("FX", "es-caviar"));

    // VaR curves vanish at both ends of the default grid, ES curves at the right end
    for (f, ends) in [("murphy_var.csv", vec![1, 501]), ("murphy_es.csv", vec![501])] {
        let text = read(&dir.path().join(f));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "eta,score,model");
        assert_eq!(lines.len(), 502);
        for i in ends {
            assert_eq!(lines[i].split(',').nth(1), Some("0"), "{f}: {}", lines[i]);
        }
    }
}

#[test]
fn backtest_multiple_models_get_sections() {
    let dir = TempDir::new().unwrap();
    let other = dir.path().join("other.csv");
    std::fs::write(&other, read(&fixture("forecasts10.csv")).replace("es-caviar", "res-caviar")).unwrap();
    ok(
        &["backtest", "--forecasts", p(&fixture("forecasts10.csv")), p(&other), "--grid-points", "50"],
        dir.path(),
    );
    let json: Value = serde_json::from_str(&read(&dir.path().join("backtest.json"))).unwrap();
    let models: Vec<&str> = json.as_array().unwrap().iter().map(|s| s["model"].as_str().unwrap()).collect();
    assert_eq!(models, vec!["es-caviar", "res-caviar"]);
    assert_eq!(read(&dir.path().join("murphy_var.csv")).lines().count(), 101);

    // criteria written by backtest feed straight into rank
    let rank_dir = dir.path().join("rank");
    ok(&["rank", "--criteria", p(&dir.path().join("criteria.csv"))], &rank_dir);
    let ranks = read(&rank_dir.join("ranks.csv"));
    assert!(ranks.lines().any(|l| l == "market,Sum,5,5"), "{ranks}");
}

#[test]
fn murphy_with_two_forecasts_runs_dominance_tests() {
    let dir = TempDir::new().unwrap();
    let worse = dir.path().join("worse.csv");
    let text = read(&fixture("forecasts10.csv"));
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push_str(line);
        } else {
            let f: Vec<&str> = line.split(',').collect();
            let q: f64 = f[2].parse::<f64>().unwrap() - 1.0;
            let es: f64 = f[3].parse::<f64>().unwrap() - 1.0;
            out.push_str(&format!("{},{},{q},{es},res-caviar,0.1", f[0], f[1]));
        }
        out.push('\n');
    }
    std::fs::write(&worse, out).unwrap();
    ok(
        &["murphy", "--forecasts", p(&fixture("forecasts10.csv")), p(&worse), "--replications", "99", "--seed", "2"],
        dir.path(),
    );
    let json: Value = serde_json::from_str(&read(&dir.path().join("dominance.json"))).unwrap();
    let tests = json.as_array().unwrap();
    assert_eq!(tests.len(), 4);
    for t in tests {
        let pv = t["p_value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&pv));
    }
}

#[test]
fn rank_reproduces_published_us_block() {
    let dir = TempDir::new().unwrap();
    let o = ok(&["rank", "--criteria", p(&fixture("criteria_us.csv"))], dir.path());
    let golden = read(&fixture("ranks_us.golden.csv"));
    assert_eq!(read(&dir.path().join("ranks.csv")), golden);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), golden);
}

#[test]
fn rank_single_model_is_first_everywhere() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("one.csv");
    std::fs::write(
        &csv,
        "market,model,alpha,vrate,es_measure,quantile_score,al_log_score\nX,m,0.01,0.02,0.3,40,900\n",
    )
    .unwrap();
    ok(&["rank", "--criteria", p(&csv)], dir.path());
    let rows: Vec<String> = read(&dir.path().join("ranks.csv")).lines().map(String::from).collect();
    assert_eq!(rows[0], "market,rule,m");
    for r in &rows[1..5] {
        assert!(r.ends_with(",1"), "{r}");
    }
    assert_eq!(rows[5], "X,Sum,4");
}

#[test]
fn rank_missing_column_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("short.csv");
    std::fs::write(&csv, "market,model,alpha,vrate,quantile_score,al_log_score\nX,m,0.01,0.02,40,900\n").unwrap();
    let o = run(&["rank", "--criteria", p(&csv)], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("es_measure"));
}

#[test]
fn criteria_rows_survive_rank_input_parsing() {
    let rows = read_criteria_csv(read(&fixture("criteria_us.csv")).as_bytes()).unwrap();
    let tables = CriteriaRow::rank_markets(&rows).unwrap();
    assert_eq!(tables[0].1.sums, vec![14, 21, 16, 5, 8]);
}

#[test]
fn simulate_is_deterministic_and_ingestable() {
    let dir = TempDir::new().unwrap();
    let run_sim = |out: &str, seed: &str| {
        let o = dir.path().join(out);
        ok(
            &[
                "simulate", "--model", "res-caviar", "--len", "4000", "--beta=-0.4,0.5,-0.6",
                "--gamma", "0.2,0.3,0.4", "--alpha", "0.025", "--seed", seed,
            ],
            &o,
        );
        o
    };
    let a = run_sim("a", "9");
    let b = run_sim("b", "9");
    let c = run_sim("c", "10");
    let sim_a = read(&a.join("simulated.csv"));
    assert_eq!(sim_a, read(&b.join("simulated.csv")));
    assert_eq!(read(&a.join("true_path.csv")), read(&b.join("true_path.csv")));
    assert_ne!(sim_a, read(&c.join("simulated.csv")));
    assert!(sim_a.starts_with("date,r,oc,rv\n"));

    let series = ingest_csv(&a.join("simulated.csv"), &ColumnMap::default()).unwrap().series;
    assert_eq!(series.len(), 4000);
    let path = read(&a.join("true_path.csv"));
    let q: Vec<f64> = path.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(q.len(), 3999);
    let hits = q.iter().zip(&series.r()[1..]).filter(|(q, r)| r < q).count() as f64;
    let (n, alpha): (f64, f64) = (3999.0, 0.025);
    let sd = (n * alpha * (1.0 - alpha)).sqrt();
    assert!((hits - n * alpha).abs() < 4.0 * sd, "{hits} violations");
}

#[test]
fn flags_override_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sim.toml");
    std::fs::write(
        &cfg,
        "seed = 5\n[model]\nvariant = \"es-caviar\"\n[simulate]\nlen = 50\nbeta = [-0.4, 0.1, -0.3, 0.5]\ngamma = [0.1, 0.1, 0.5]\n",
    )
    .unwrap();
    let from_cfg = dir.path().join("cfg");
    ok(&["simulate", "--config", p(&cfg)], &from_cfg);
    assert_eq!(read(&from_cfg.join("simulated.csv")).lines().count(), 51);
    let flagged = dir.path().join("flag");
    ok(&["simulate", "--config", p(&cfg), "--len", "80", "--seed", "6"], &flagged);
    assert_eq!(read(&flagged.join("simulated.csv")).lines().count(), 81);
    // the seed flag wins over the config seed
    let same_len = dir.path().join("same");
    ok(&["simulate", "--config", p(&cfg), "--seed", "6"], &same_len);
    assert_ne!(read(&same_len.join("simulated.csv")), read(&from_cfg.join("simulated.csv")));
    // wrong beta length for the variant is a usage error
    let o = run(&["simulate", "--config", p(&cfg), "--model", "res-caviar-oc"], &dir.path().join("bad"));
    assert_eq!(o.status.code(), Some(2));
}
