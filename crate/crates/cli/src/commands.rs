use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rescaviar::backtest::{
    self, default_grid, dominance_test, murphy as murphy_curve, read_criteria_csv,
    write_criteria_csv, write_murphy_csv, write_rank_csv, BacktestReport, BootstrapConfig,
    CriteriaRow, DominanceResult, EvalSeries, Measure, MurphyCurve,
};
use rescaviar::forecast::{read_forecasts_path, run_rolling, write_forecasts_path, WindowMode};
use rescaviar::market::{self, split, Boundary, Field, MarketSeries};
use rescaviar::mcmc::{self, export_diagnostics_to_dir, summarize_chain, McmcConfig};
use rescaviar::simulate::simulate_market;
use rescaviar::{InitialState, ModelSpec, ParamVector};
use serde::Serialize;

use crate::config::{FileConfig, DEFAULT_ALPHA};
use crate::{
    BacktestArgs, FitArgs, ForecastArgs, McmcArgs, ModelArgs, MurphyArgs, RankArgs,
    SimulateArgs, SummarizeArgs, UsageError,
};

pub struct Context {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub cfg: FileConfig,
}

impl Context {
    fn out_file(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out_file(name)?;
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn spec(&self, args: &ModelArgs) -> Result<ModelSpec> {
        let Some(variant) = args.model.or(self.cfg.model.variant) else {
            bail!(UsageError("no model given; pass --model or set [model] variant".into()));
        };
        let alpha = args.alpha.or(self.cfg.model.alpha).unwrap_or(DEFAULT_ALPHA);
        Ok(ModelSpec::new(variant, alpha)?)
    }

    fn mcmc(&self, args: &McmcArgs) -> McmcConfig {
        let mut c = self.cfg.mcmc.clone();
        if let Some(v) = args.n_iter {
            c.n_iter = v;
        }
        if let Some(v) = args.burn_in {
            c.burn_in = v;
        }
        if let Some(v) = args.thin {
            c.thin = v;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c
    }

    fn input(&self, flag: Option<&PathBuf>) -> Result<PathBuf> {
        match flag.or(self.cfg.data.input.as_ref()) {
            Some(p) => Ok(p.clone()),
            None => bail!(UsageError("no input given; pass --input or set [data] input".into())),
        }
    }

    fn load(&self, path: &Path) -> Result<MarketSeries> {
        let ingested = market::ingest_csv(path, &self.cfg.data.columns)
            .with_context(|| format!("reading {}", path.display()))?;
        if ingested.dropped > 0 {
            eprintln!("{}: dropped {} incomplete rows", path.display(), ingested.dropped);
        }
        Ok(ingested.series)
    }

    fn boundary(&self, flag: Option<&String>) -> Result<Option<Boundary>> {
        flag.or(self.cfg.data.split.as_ref())
            .map(|s| s.parse::<Boundary>().map_err(|e| UsageError(e.to_string()).into()))
            .transpose()
    }

    fn bootstrap(&self) -> BootstrapConfig {
        let mut b = self.cfg.bootstrap;
        if let Some(s) = self.seed {
            b.seed = s;
        }
        b
    }
}

fn echo(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

pub fn summarize(ctx: &Context, args: SummarizeArgs) -> Result<()> {
    let inputs = if args.inputs.is_empty() {
        vec![ctx.input(None)?]
    } else {
        args.inputs
    };
    let mut rows = Vec::new();
    for path in &inputs {
        let series = ctx.load(path)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for field in Field::ALL {
            let label = if inputs.len() == 1 {
                field.label().to_string()
            } else {
                format!("{stem}:{}", field.label())
            };
            rows.push((label, market::summarize(&series, field)?));
        }
    }
    let path = ctx.out_file("summary.csv")?;
    let mut w = ctx.create("summary.csv")?;
    market::write_summary_csv(&rows, &mut w)?;
    w.flush()?;
    drop(w);
    echo(&path)
}

pub fn fit(ctx: &Context, args: FitArgs) -> Result<()> {
    let spec = ctx.spec(&args.model)?;
    let cfg = ctx.mcmc(&args.mcmc);
    let series = ctx.load(&ctx.input(args.input.as_ref())?)?;
    let n = match ctx.boundary(args.split.as_ref())? {
        Some(b) => split(&series, b)?.n,
        None => series.len(),
    };
    if n < 2 {
        bail!(UsageError("the in-sample window needs at least 2 rows".into()));
    }
    let init = InitialState::from_returns(&series.r()[..n], spec.alpha)?;
    let chain = mcmc::sample(&spec, &series, &init, 1..n, None, &cfg)?;
    for w in &chain.warnings {
        eprintln!("warning: {w}");
    }
    let summary = summarize_chain(&chain)?;
    chain.save_json(&ctx.out_file("chain.json")?)?;
    export_diagnostics_to_dir(&chain, args.acf_lags, &ctx.out)?;
    let path = ctx.out_file("posterior_summary.csv")?;
    let mut w = ctx.create("posterior_summary.csv")?;
    summary.write_csv(&mut w)?;
    w.flush()?;
    drop(w);
    for a in &chain.acceptance {
        eprintln!(
            "{}: random-walk acceptance {:.3}, independence acceptance {:.3}",
            a.block, a.rw_final, a.independent
        );
    }
    echo(&path)
}

pub fn forecast(ctx: &Context, args: ForecastArgs) -> Result<()> {
    let spec = ctx.spec(&args.model)?;
    let cfg = ctx.mcmc(&args.mcmc);
    let series = ctx.load(&ctx.input(args.input.as_ref())?)?;
    let Some(boundary) = ctx.boundary(args.split.as_ref())? else {
        bail!(UsageError("forecasting needs --split or [data] split".into()));
    };
    let sample_split = split(&series, boundary)?;
    let mut rolling = ctx.cfg.rolling;
    if let Some(k) = args.refit_interval {
        rolling.refit_interval = k;
    }
    if let Some(length) = args.window_length {
        rolling.window_mode = WindowMode::Rolling { length };
    }
    if args.no_warm_start {
        rolling.warm_start = false;
    }
    let records = run_rolling(&spec, &series, sample_split, &cfg, &rolling)?;
    let path = ctx.out_file("forecasts.csv")?;
    write_forecasts_path(&records, &path)?;
    eprintln!("wrote {} forecasts to {}", records.len(), path.display());
    Ok(())
}

/// Forecast files with a label per model: the variant id, or the file stem
/// when two files share a variant.
fn load_evals(paths: &[PathBuf]) -> Result<Vec<(String, EvalSeries)>> {
    let mut out = Vec::with_capacity(paths.len());
    let mut ids = Vec::with_capacity(paths.len());
    for p in paths {
        let recs = read_forecasts_path(p).with_context(|| format!("reading {}", p.display()))?;
        let eval = EvalSeries::from_records(&recs).with_context(|| format!("in {}", p.display()))?;
        ids.push(recs[0].variant.id().to_string());
        out.push(eval);
    }
    let names = paths.iter().zip(&ids).map(|(p, id)| {
        if ids.iter().filter(|x| *x == id).count() > 1 {
            p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| id.clone())
        } else {
            id.clone()
        }
    });
    Ok(names.zip(out).collect())
}

fn murphy_files(ctx: &Context, evals: &[(String, EvalSeries)], points: usize) -> Result<Vec<f64>> {
    let refs: Vec<&EvalSeries> = evals.iter().map(|(_, e)| e).collect();
    let grid = default_grid(&refs, points)?;
    for (measure, name) in [(Measure::Var, "murphy_var.csv"), (Measure::Es, "murphy_es.csv")] {
        let curves = evals
            .iter()
            .map(|(m, e)| Ok((m.clone(), murphy_curve(measure, e, &grid)?)))
            .collect::<Result<Vec<(String, MurphyCurve)>>>()?;
        let mut w = ctx.create(name)?;
        write_murphy_csv(&curves, &mut w)?;
        w.flush()?;
    }
    Ok(grid)
}

#[derive(Serialize)]
struct ModelReport<'a> {
    model: &'a str,
    source: String,
    report: BacktestReport,
}

pub fn backtest(ctx: &Context, args: BacktestArgs) -> Result<()> {
    let evals = load_evals(&args.forecasts)?;
    let market = args.market.or_else(|| ctx.cfg.data.market.clone()).unwrap_or_else(|| "market".into());
    let mut sections = Vec::with_capacity(evals.len());
    let mut rows: Vec<CriteriaRow> = Vec::with_capacity(evals.len());
    for ((model, eval), path) in evals.iter().zip(&args.forecasts) {
        let report = backtest::backtest(eval)?;
        rows.push(report.criteria_row(&market, model));
        eprintln!(
            "{model}: VRate {:.2}%, UC p {:.3}, CC p {:.3}, DQ p {}",
            100.0 * report.vrate,
            report.uc.p_value,
            report.cc.p_value,
            report.dq.map(|d| format!("{:.3}", d.p_value)).unwrap_or_else(|| "n/a".into()),
        );
        sections.push(ModelReport { model, source: path.display().to_string(), report });
    }
    let mut w = ctx.create("backtest.json")?;
    serde_json::to_writer_pretty(&mut w, &sections)?;
    writeln!(w)?;
    w.flush()?;
    let mut w = ctx.create("criteria.csv")?;
    write_criteria_csv(&rows, &mut w)?;
    w.flush()?;
    murphy_files(ctx, &evals, args.grid_points.unwrap_or(ctx.cfg.murphy.grid_points))?;
    Ok(())
}

#[derive(Serialize)]
struct Dominance<'a> {
    null: String,
    measure: &'a str,
    #[serde(flatten)]
    result: DominanceResult,
}

pub fn murphy(ctx: &Context, args: MurphyArgs) -> Result<()> {
    let evals = load_evals(&args.forecasts)?;
    let grid = murphy_files(ctx, &evals, args.grid_points.unwrap_or(ctx.cfg.murphy.grid_points))?;
    if evals.len() != 2 {
        return Ok(());
    }
    let mut boot = ctx.bootstrap();
    if let Some(b) = args.replications {
        boot.replications = b;
    }
    if let Some(l) = args.block {
        boot.mean_block = l;
    }
    let mut out = Vec::new();
    for (measure, label) in [(Measure::Var, "var"), (Measure::Es, "es")] {
        for (a, b) in [(0, 1), (1, 0)] {
            let result = dominance_test(&evals[a].1, &evals[b].1, measure, &grid, &boot)?;
            println!("{label}: {} dominates {}: p = {:.3}", evals[a].0, evals[b].0, result.p_value);
            out.push(Dominance {
                null: format!("{} dominates {}", evals[a].0, evals[b].0),
                measure: label,
                result,
            });
        }
    }
    let mut w = ctx.create("dominance.json")?;
    serde_json::to_writer_pretty(&mut w, &out)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn rank(ctx: &Context, args: RankArgs) -> Result<()> {
    let f = File::open(&args.criteria).with_context(|| format!("opening {}", args.criteria.display()))?;
    let rows = read_criteria_csv(f).with_context(|| format!("reading {}", args.criteria.display()))?;
    if rows.is_empty() {
        bail!(UsageError(format!("{} has no rows", args.criteria.display())));
    }
    let tables = CriteriaRow::rank_markets(&rows)?;
    let path = ctx.out_file("ranks.csv")?;
    let mut w = ctx.create("ranks.csv")?;
    write_rank_csv(&tables, &mut w)?;
    w.flush()?;
    drop(w);
    echo(&path)
}

pub fn simulate(ctx: &Context, args: SimulateArgs) -> Result<()> {
    let spec = ctx.spec(&args.model)?;
    let sim = &ctx.cfg.simulate;
    let len = args.len.or(sim.len).unwrap_or(3000);
    let Some(beta) = args.beta.or_else(|| sim.beta.clone()) else {
        bail!(UsageError("pass --beta or set [simulate] beta".into()));
    };
    let gamma = match args.gamma {
        Some(g) => <[f64; 3]>::try_from(g.as_slice())
            .map_err(|_| UsageError(format!("--gamma needs 3 values, got {}", g.len())))?,
        None => match sim.gamma {
            Some(g) => g,
            None => bail!(UsageError("pass --gamma or set [simulate] gamma".into())),
        },
    };
    let params = ParamVector::new(beta, gamma);
    params.check_dim(spec.variant)?;
    let init = InitialState::new(
        args.q0.or(sim.q0).unwrap_or(-2.0),
        args.es0.or(sim.es0).unwrap_or(-2.6),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed.unwrap_or(1));
    let out = simulate_market(&spec, &params, &init, len, &sim.covariates, &mut rng)?;
    out.series.write_csv_path(&ctx.out_file("simulated.csv")?)?;
    let mut w = ctx.create("true_path.csv")?;
    out.path.write_csv(&out.series, 1, &mut w)?;
    w.flush()?;
    let hits = out.path.q.iter().zip(&out.series.r()[1..]).filter(|(q, r)| r < q).count();
    eprintln!(
        "simulated {len} days; violation rate {:.4} (alpha {}), mean return {:.4}",
        hits as f64 / out.path.len() as f64,
        spec.alpha,
        out.mean_return
    );
    Ok(())
}
