use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use thp_core::evalkit::{matrix_losses, oriented_score, roc_area, save_metrics_csv, Losses, PairScorePanel};
use thp_core::harness::{
    model_n, run_estimation, run_testing, setting_dims, summarize_estimation, summarize_testing,
    table_study, StudyConfig,
};
use thp_core::inference::{default_alpha_grid, read_results_csv, write_results_csv};
use thp_core::nodewise::ResidualSource;
use thp_core::simgen::{simulate as sim_truth_and_sample, simulate_validation, Remainder};
use thp_core::{
    estimate_precision, fit_all_nodes, run_all_pairs, run_test, support_recover, true_edge_set,
    FitOptions, LambdaConfig, LambdaRule, Model, MultiNetworkSample, NodeFits, Noise, PrecisionSet, Sided,
    SimConfig, TestConfig, TestKind,
};

use crate::manifest::Recorder;
use crate::{
    DataArgs, EstimateArgs, EvaluateArgs, FitArgs, KindArg, KindArgs, LambdaArgs, ModelArg, NoiseArg,
    RemainderArg, ReplicateArgs, ResidualArg, RuleArg, SidedArg, SimulateArgs, TestArgs, TuneArgs,
};

fn model(m: ModelArg) -> Model {
    match m {
        ModelArg::I => Model::I,
        ModelArg::II => Model::II,
    }
}

fn model_label(m: Model) -> &'static str {
    match m {
        Model::I => "I",
        Model::II => "II",
    }
}

fn noise(n: NoiseArg) -> Noise {
    match n {
        NoiseArg::Gaussian => Noise::Gaussian,
        NoiseArg::Laplace => Noise::Laplace,
    }
}

fn lambda_rule(args: &LambdaArgs, seed: u64) -> LambdaRule {
    if let Some(lambda) = args.lambda {
        return LambdaRule::Fixed { lambda };
    }
    let cfg = LambdaConfig {
        delta: args.delta,
        xi: args.xi,
        reps: args.sim_reps,
        seed,
    };
    match args.lambda_rule {
        RuleArg::Theory => LambdaRule::Theory(cfg),
        RuleArg::Sim => LambdaRule::Sim(cfg),
    }
}

fn fit_options(args: &LambdaArgs) -> FitOptions {
    FitOptions {
        residuals: match args.residuals {
            ResidualArg::Refit => ResidualSource::Refit,
            ResidualArg::Raw => ResidualSource::Raw,
        },
        ..FitOptions::default()
    }
}

/// Parses `++-`, `+,+,-` or `1,1,-1`.
fn parse_signs(s: &str) -> Result<Vec<f64>> {
    let tokens: Vec<&str> = if s.contains(',') {
        s.split(',').map(str::trim).collect()
    } else {
        s.trim().split("").filter(|t| !t.is_empty()).collect()
    };
    tokens
        .into_iter()
        .map(|t| match t {
            "+" | "1" | "+1" => Ok(1.0),
            "-" | "-1" => Ok(-1.0),
            _ => Err(anyhow!(thp_core::Error::Invalid(format!("bad sign '{t}' in '{s}'")))),
        })
        .collect()
}

fn test_kind(args: &KindArgs, k: usize) -> Result<TestKind> {
    Ok(match args.kind {
        KindArg::Chi => TestKind::Chi,
        KindArg::Linfun => TestKind::Linfun {
            signs: match &args.signs {
                Some(s) => parse_signs(s)?,
                None => vec![1.0; k],
            },
            sided: match args.sided {
                SidedArg::One => Sided::One,
                SidedArg::Two => Sided::Two,
            },
        },
    })
}

fn class_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if let [dir] = paths {
        if dir.is_dir() {
            let files: Vec<PathBuf> = (0..)
                .map(|t| dir.join(format!("class_{t}.csv")))
                .take_while(|p| p.is_file())
                .collect();
            if files.is_empty() {
                bail!(thp_core::Error::Invalid(format!("no class_0.csv in {}", dir.display())));
            }
            return Ok(files);
        }
    }
    Ok(paths.to_vec())
}

fn load_sample(paths: &[PathBuf], center: bool) -> Result<MultiNetworkSample> {
    let files = class_paths(paths)?;
    let sample = MultiNetworkSample::load_csv(&files).context("loading class data")?;
    Ok(if center { sample.centered() } else { sample })
}

fn load_fits(data: &DataArgs, fits: &Path) -> Result<(MultiNetworkSample, NodeFits)> {
    let sample = load_sample(&data.data, data.center)?;
    let fits = NodeFits::load_json(fits, &sample).with_context(|| format!("loading fits {}", fits.display()))?;
    Ok((sample, fits))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn save_sample(sample: &MultiNetworkSample, rec: &mut Recorder, prefix: &str) -> Result<()> {
    for t in 0..sample.k() {
        let path = rec.output(&format!("{prefix}class_{t}.csv"));
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        sample.save_class_csv(t, &path)?;
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<PathBuf> {
    let config = SimConfig {
        k: args.k,
        p: args.p,
        n_per_class: args.n,
        block_size: args.block,
        model: model(args.model),
        noise: noise(args.noise),
        seed: args.seed,
        remainder: match args.remainder {
            RemainderArg::Reject => Remainder::Reject,
            RemainderArg::Diagonal => Remainder::Diagonal,
        },
    };
    config.validate()?;
    let mut rec = Recorder::new("simulate", &args.out, serde_json::to_value(&config)?, Some(args.seed))?;
    rec.start("generate");
    let (truth, sample) = sim_truth_and_sample(&config)?;
    rec.start("write");
    truth.save_json(rec.output("truth.json"))?;
    save_sample(&sample, &mut rec, "")?;
    if args.validation {
        let val = simulate_validation(&config, &truth)?;
        save_sample(&val, &mut rec, "validation/")?;
    }
    rec.write()
}

pub fn fit(args: &FitArgs) -> Result<PathBuf> {
    let sample = load_sample(&args.data.data, args.data.center)?;
    let rule = lambda_rule(&args.lambda, args.seed);
    let opts = fit_options(&args.lambda);
    let config = json!({
        "data": class_paths(&args.data.data)?,
        "center": args.data.center,
        "lambda_rule": rule,
        "fit": opts,
    });
    let mut rec = Recorder::new("fit", &args.out, config, Some(args.seed))?;
    rec.start("fit");
    let fits = fit_all_nodes(&sample, &rule, &opts)?;
    let unconverged: Vec<usize> = fits.iter().filter(|f| !f.meta.converged).map(|f| f.j).collect();
    log::info!(
        "lambda = {:.6}; {} of {} nodes converged",
        fits.lambda,
        fits.p() - unconverged.len(),
        fits.p()
    );
    if !unconverged.is_empty() {
        log::warn!("nodes without convergence: {unconverged:?}");
    }
    rec.start("write");
    fits.save_json(rec.output("fits.json"))?;
    rec.write()
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let bad = || anyhow!(thp_core::Error::Invalid(format!("pair must look like 'a,b', got '{s}'")));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

pub fn test(args: &TestArgs) -> Result<PathBuf> {
    let (sample, fits) = load_fits(&args.data, &args.fits)?;
    let config = TestConfig {
        alpha: args.alpha,
        kind: test_kind(&args.kind, sample.k())?,
    };
    config.validate(sample.k())?;
    let snapshot = json!({
        "fits": args.fits,
        "center": args.data.center,
        "test": config,
        "pair": args.pair,
        "recover": args.recover.then_some(args.rho),
    });
    let mut rec = Recorder::new("test", &args.out, snapshot, None)?;
    rec.start("test");
    let results = match &args.pair {
        Some(p) => {
            let (a, b) = parse_pair(p)?;
            vec![run_test(&fits, a, b, &config)?]
        }
        None => run_all_pairs(&fits, &config)?,
    };
    log::info!(
        "{} of {} pairs rejected",
        results.iter().filter(|r| r.reject).count(),
        results.len()
    );
    write_results_csv(&results, rec.output("results.csv"))?;
    if args.recover {
        rec.start("recover");
        let edges = support_recover(&fits, args.rho)?;
        log::info!("recovered {} edges", edges.len());
        std::fs::write(rec.output("edges.json"), edges.to_json()?)?;
    }
    rec.write()
}

pub fn estimate(args: &EstimateArgs) -> Result<PathBuf> {
    let (sample, fits) = load_fits(&args.data, &args.fits)?;
    let config = TestConfig {
        alpha: args.alpha,
        kind: test_kind(&args.kind, sample.k())?,
    };
    config.validate(sample.k())?;
    let snapshot = json!({ "fits": args.fits, "center": args.data.center, "test": config });
    let mut rec = Recorder::new("estimate", &args.out, snapshot, None)?;
    rec.start("estimate");
    let est = estimate_precision(&fits, &config)?;
    est.save_json(rec.output("precision.json"))?;
    rec.write()
}

pub fn tune_alpha(args: &TuneArgs) -> Result<PathBuf> {
    let (sample, fits) = load_fits(&args.data, &args.fits)?;
    let validation = load_sample(&args.validation, args.data.center)?;
    let kind = test_kind(&args.kind, sample.k())?;
    let grid = args.grid.clone().unwrap_or_else(default_alpha_grid);
    for &alpha in &grid {
        TestConfig { alpha, kind: kind.clone() }.validate(sample.k())?;
    }
    let snapshot = json!({ "fits": args.fits, "center": args.data.center, "kind": kind, "grid": grid });
    let mut rec = Recorder::new("tune-alpha", &args.out, snapshot, None)?;
    rec.start("tune");
    let tuned = thp_core::tune_alpha(&fits, &validation, &grid, &kind)?;
    if tuned.all_non_pd {
        log::warn!("no grid level gave positive definite estimates; picked alpha = {}", tuned.alpha);
    } else {
        log::info!("selected alpha = {}", tuned.alpha);
    }
    write_json(&tuned, &rec.output("tune.json"))?;
    let est = estimate_precision(&fits, &TestConfig { alpha: tuned.alpha, kind })?;
    est.save_json(rec.output("precision.json"))?;
    rec.write()
}

#[derive(Serialize)]
struct TestingEvaluation {
    pairs: usize,
    edges: usize,
    rejected: usize,
    fpr: f64,
    fnr: f64,
    roc_area: f64,
}

#[derive(Serialize)]
struct Evaluation {
    losses: Option<Losses>,
    testing: Option<TestingEvaluation>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate(args: &EvaluateArgs) -> Result<PathBuf> {
    if args.estimate.is_none() && args.results.is_none() {
        bail!(thp_core::Error::Invalid("give --estimate and/or --results".into()));
    }
    let truth = PrecisionSet::load_json(&args.truth)?;
    let snapshot = json!({
        "truth": args.truth,
        "estimate": args.estimate,
        "results": args.results,
        "kind": test_kind(&args.kind, truth.k())?,
    });
    let mut rec = Recorder::new("evaluate", &args.out, snapshot, None)?;
    rec.start("evaluate");
    let losses = match &args.estimate {
        Some(path) => Some(matrix_losses(&PrecisionSet::load_json(path)?, &truth)?),
        None => None,
    };
    let testing = match &args.results {
        Some(path) => {
            let results = read_results_csv(path)?;
            if results.is_empty() {
                bail!(thp_core::Error::Invalid("results file is empty".into()));
            }
            let k = truth.k();
            let kind = test_kind(&args.kind, k)?;
            let edges = true_edge_set(&truth, 0.0);
            let mut pairs = Vec::with_capacity(results.len());
            let mut scores = Vec::with_capacity(results.len());
            let (mut fp, mut fneg) = (0, 0);
            for r in &results {
                if r.a >= truth.p() || r.b >= truth.p() {
                    bail!(thp_core::Error::DimensionMismatch(format!(
                        "pair ({}, {}) outside p = {}",
                        r.a,
                        r.b,
                        truth.p()
                    )));
                }
                let edge = edges.contains(r.a, r.b);
                fp += usize::from(!edge && r.reject);
                fneg += usize::from(edge && !r.reject);
                pairs.push((r.a, r.b));
                scores.push(oriented_score(r.statistic, k, &kind));
            }
            let panel = PairScorePanel::new(pairs, scores, &edges, k, kind)?;
            let n_edges = panel.edge.iter().filter(|&&e| e).count();
            Some(TestingEvaluation {
                pairs: results.len(),
                edges: n_edges,
                rejected: results.iter().filter(|r| r.reject).count(),
                fpr: ratio(fp, results.len() - n_edges),
                fnr: ratio(fneg, n_edges),
                roc_area: roc_area(&panel).unwrap_or(f64::NAN),
            })
        }
        None => None,
    };
    write_json(&Evaluation { losses, testing }, &rec.output("evaluation.json"))?;
    rec.write()
}

pub fn replicate(args: &ReplicateArgs) -> Result<PathBuf> {
    let (m, estimation) = table_study(args.table)?;
    let (k, p) = setting_dims(args.setting)?;
    if args.reps == 0 {
        bail!(thp_core::Error::Invalid("reps must be >= 1".into()));
    }
    let sim = SimConfig {
        block_size: args.block,
        noise: noise(args.noise),
        ..SimConfig::new(k, p, args.n.unwrap_or_else(|| model_n(m)), m, args.seed)
    };
    sim.validate()?;
    let study = StudyConfig {
        sim,
        reps: args.reps,
        lambda: lambda_rule(&args.lambda, args.seed),
        fit: fit_options(&args.lambda),
        alpha: args.alpha,
        grid: default_alpha_grid(),
    };
    let snapshot = json!({ "table": args.table, "setting": args.setting, "study": study });
    let mut rec = Recorder::new("replicate", &args.out, snapshot, Some(args.seed))?;
    let (label, setting) = (model_label(m), args.setting.to_string());
    rec.start("replicate");
    let rows = if estimation {
        let outcomes = run_estimation(&study)?;
        report_failures(outcomes.iter().map(|o| (o.rep, o.result.as_ref().err())));
        write_json(&outcomes, &rec.output("replications.json"))?;
        summarize_estimation(label, &setting, &outcomes)
    } else {
        let outcomes = run_testing(&study)?;
        report_failures(outcomes.iter().map(|o| (o.rep, o.result.as_ref().err())));
        write_json(&outcomes, &rec.output("replications.json"))?;
        summarize_testing(label, &setting, &outcomes)
    };
    save_metrics_csv(&rows, rec.output("metrics.csv"))?;
    rec.write()
}

fn report_failures<'a>(outcomes: impl Iterator<Item = (usize, Option<&'a String>)>) {
    for (rep, err) in outcomes {
        if let Some(e) = err {
            log::warn!("replication {rep} failed: {e}");
        }
    }
}
