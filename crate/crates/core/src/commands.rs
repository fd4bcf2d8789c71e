//! The four CLI commands. Each one reads its inputs, runs the library,
//! writes delimited outputs plus a machine-readable summary and a run
//! manifest into the output directory, and reports progress on stdout.
//! Warnings go to stderr and never change the exit status; errors do.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};

use crate::error::{Error, Result};
use crate::io::{
    full, parse_config, read_table, sha256_hex, sig4, split_list, write_manifest, RunManifest,
};
use crate::isis::{run_dpd_isis, IsisConfig, Schedule, StopReason};
use crate::mdpde::FitOptions;
use crate::numeric::{mean, median};
use crate::penalized::{default_lambda, fit_penalized_dpd, PenalizedFit};
use crate::robustness::{
    are_curve, gross_error_sensitivity, influence_function, ModelTruth,
};
use crate::screeners::{
    rank_by_method, select_top, standardize_columns, Method, Ranking, StandardizeMode,
};
use crate::simbench::{
    default_isis_size, run_experiment, MethodSpec, SimConfig, Structure,
};

/// Shipped benchmark configs, usable via `simulate --preset <name>`.
pub const PRESETS: &[(&str, &str)] = &[
    ("smoke", include_str!("../presets/smoke.conf")),
    ("table1_desk", include_str!("../presets/table1_desk.conf")),
    ("table2_desk", include_str!("../presets/table2_desk.conf")),
    ("table3_desk", include_str!("../presets/table3_desk.conf")),
    ("table1_full", include_str!("../presets/table1_full.conf")),
    ("table2_full", include_str!("../presets/table2_full.conf")),
    ("table3_full", include_str!("../presets/table3_full.conf")),
];

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StdArg {
    Classical,
    Robust,
    None,
}

impl From<StdArg> for StandardizeMode {
    fn from(v: StdArg) -> Self {
        match v {
            StdArg::Classical => StandardizeMode::Classical,
            StdArg::Robust => StandardizeMode::Robust,
            StdArg::None => StandardizeMode::None,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    /// Input table, comma- or tab-delimited; header row optional.
    #[arg(long)]
    pub input: PathBuf,
    /// Response column, by 1-based position or by name.
    #[arg(long, default_value = "1")]
    pub response: String,
    /// dpd, pearson, reg, rank, spearman, gk, dcor, or mcp.
    #[arg(long, default_value = "dpd")]
    pub method: String,
    /// Robustness tuning for dpd screening and refitting.
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    /// Model size to keep; defaults to n - 1.
    #[arg(long)]
    pub d: Option<usize>,
    /// Column standardization applied before screening.
    #[arg(long, value_enum, default_value_t = StdArg::Classical)]
    pub standardize: StdArg,
    /// Penalty level for --refit; defaults to sqrt(ln p / n).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Refit the selected model with the l1-penalized joint estimator.
    #[arg(long)]
    pub refit: bool,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, created if absent.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct IsisArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Response column, by 1-based position or by name.
    #[arg(long, default_value = "1")]
    pub response: String,
    /// Robustness tuning of every marginal fit and refit.
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    /// Final model size; defaults to floor(n / ln n).
    #[arg(long)]
    pub d: Option<usize>,
    /// Fixed per-iteration screening budget; defaults to a shrinking
    /// schedule (two thirds of d first, then the remaining slots).
    #[arg(long)]
    pub d_prime: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub max_iter: usize,
    /// Column standardization applied before screening.
    #[arg(long, value_enum, default_value_t = StdArg::Classical)]
    pub standardize: StdArg,
    /// Penalty level for the refits; defaults to sqrt(ln p / n).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, created if absent.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Config file of `key = value` lines.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Shipped preset name: smoke, table1_desk, table2_desk, table3_desk,
    /// table1_full, table2_full, or table3_full.
    #[arg(long)]
    pub preset: Option<String>,
    /// Override the replication count of every cell.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, created if absent.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Comma list of alpha values, nonnegative and strictly increasing.
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub alphas: String,
    /// Comma list of standardized contamination distances.
    #[arg(long, default_value = "0.5,1,2")]
    pub deltas: String,
    /// intercept,slope,noise-sd of the reference marginal model.
    #[arg(long, default_value = "0,1,1")]
    pub truth: String,
    /// Covariate mean under the reference model.
    #[arg(long, default_value_t = 0.0)]
    pub ex: f64,
    /// Covariate variance under the reference model.
    #[arg(long, default_value_t = 1.0)]
    pub vx: f64,
    /// Covariate value the influence traces are evaluated at.
    #[arg(long, default_value_t = 1.0)]
    pub x_t: f64,
    /// Output directory, created if absent.
    #[arg(long)]
    pub output: PathBuf,
}

pub fn cmd_screen(args: &ScreenArgs) -> Result<()> {
    let t0 = Instant::now();
    init_threads(args.threads)?;
    let table = read_table(&args.input, &args.response)?;
    let (n, p) = (table.y.len(), table.x.n_cols());
    let method = parse_method(&args.method, args.alpha)?;
    let mut d = args.d.unwrap_or_else(|| n.saturating_sub(1)).max(1);
    if d > p {
        eprintln!("warning: model size {d} exceeds the {p} available covariates; clamping");
        d = p;
    }
    let opts = FitOptions::default();
    let mode = StandardizeMode::from(args.standardize);
    let held;
    let xref = match mode {
        StandardizeMode::None => &table.x,
        _ => {
            held = standardize_columns(&table.x, mode).x;
            &held
        }
    };
    let ranking = rank_by_method(&table.y, xref, method, &opts)?;
    fs::create_dir_all(&args.output)?;
    write_ranking(&args.output.join("ranking.csv"), &ranking, &table.names)?;
    let top = select_top(&ranking, d)?;
    write_top(&args.output.join("top.csv"), &top.indices, &ranking, &table.names)?;

    let lambda = args.lambda.unwrap_or_else(|| default_lambda(n, p));
    if args.refit {
        let mut picked = top.indices.clone();
        picked.sort_unstable();
        let fit =
            fit_penalized_dpd(&table.y, &xref.select_columns(&picked), args.alpha, lambda, &opts)?;
        write_model(&args.output.join("model.csv"), &picked, &fit, &table.names)?;
        println!(
            "screen: kept {} of {} covariates (d = {}), refit sigma = {}",
            nonzero_count(&fit),
            p,
            d,
            sig4(fit.sigma)
        );
    } else {
        println!("screen: ranked {p} covariates, kept the top {d}");
    }
    for &j in top.indices.iter().take(10) {
        println!("  {:>4}  {}  {}", j + 1, table.names[j], sig4(ranking.scores[j]));
    }

    let mut manifest = RunManifest::new("screen");
    manifest.option("input", args.input.display());
    manifest.option("response", &table.response_name);
    manifest.option("method", method.token());
    manifest.option("alpha", args.alpha);
    manifest.option("d", d);
    manifest.option("standardize", mode_token(mode));
    manifest.option("lambda", lambda);
    manifest.option("refit", args.refit);
    manifest.input_digest = Some(sha256_hex(&args.input)?);
    manifest.wall_time_s = t0.elapsed().as_secs_f64();
    write_manifest(&args.output, &manifest)
}

pub fn cmd_isis(args: &IsisArgs) -> Result<()> {
    let t0 = Instant::now();
    init_threads(args.threads)?;
    let table = read_table(&args.input, &args.response)?;
    let (n, p) = (table.y.len(), table.x.n_cols());
    let mut d = args.d.unwrap_or_else(|| default_isis_size(n)).max(1);
    if d > p {
        eprintln!("warning: model size {d} exceeds the {p} available covariates; clamping");
        d = p;
    }
    let mode = StandardizeMode::from(args.standardize);
    let held;
    let xref = match mode {
        StandardizeMode::None => &table.x,
        _ => {
            held = standardize_columns(&table.x, mode).x;
            &held
        }
    };
    let cfg = IsisConfig {
        alpha: args.alpha,
        d,
        schedule: match args.d_prime {
            Some(k) => Schedule::Fixed(k),
            None => Schedule::Van,
        },
        max_iter: args.max_iter,
        lambda: args.lambda,
    };
    let opts = FitOptions::default();
    let fit = run_dpd_isis(&table.y, xref, &cfg, &opts)?;

    fs::create_dir_all(&args.output)?;
    let mut iters = String::from("iteration,candidates,active\n");
    for (i, rec) in fit.iterations.iter().enumerate() {
        iters.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            join_indices(&rec.candidates),
            join_indices(&rec.active)
        ));
    }
    fs::write(args.output.join("iterations.csv"), iters)?;
    write_model(&args.output.join("model.csv"), &fit.final_columns, &fit.final_fit, &table.names)?;

    let model_1based: Vec<usize> = fit.final_model.indices.iter().map(|&j| j + 1).collect();
    let summary = serde_json::json!({
        "stop_reason": stop_token(fit.stop_reason),
        "iterations": fit.iterations.len(),
        "final_model": model_1based,
        "intercept": fit.final_fit.intercept,
        "sigma": fit.final_fit.sigma,
    });
    fs::write(args.output.join("summary.json"), summary.to_string() + "\n")?;

    println!(
        "isis: {} iterations, stopped on {}, final model has {} covariates",
        fit.iterations.len(),
        stop_token(fit.stop_reason),
        fit.final_model.indices.len()
    );
    for &j in &fit.final_model.indices {
        println!("  {:>4}  {}", j + 1, table.names[j]);
    }

    let mut manifest = RunManifest::new("isis");
    manifest.option("input", args.input.display());
    manifest.option("response", &table.response_name);
    manifest.option("alpha", args.alpha);
    manifest.option("d", d);
    if let Some(k) = args.d_prime {
        manifest.option("d_prime", k);
    }
    manifest.option("max_iter", args.max_iter);
    manifest.option("standardize", mode_token(mode));
    manifest.option("lambda", args.lambda.unwrap_or_else(|| default_lambda(n, p)));
    manifest.input_digest = Some(sha256_hex(&args.input)?);
    manifest.wall_time_s = t0.elapsed().as_secs_f64();
    write_manifest(&args.output, &manifest)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let t0 = Instant::now();
    init_threads(args.threads)?;
    let (source, text) = match (&args.config, &args.preset) {
        (Some(path), None) => (path.display().to_string(), fs::read_to_string(path)?),
        (None, Some(name)) => {
            let body = PRESETS
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| v.to_string())
                .ok_or_else(|| {
                    Error::Argument(format!(
                        "unknown preset '{name}'; shipped presets: {}",
                        PRESETS.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", ")
                    ))
                })?;
            (format!("preset:{name}"), body)
        }
        _ => {
            return Err(Error::Argument(
                "exactly one of --config and --preset is required".into(),
            ))
        }
    };
    let map = parse_config(&text)?;
    let (cells, methods) = build_cells(&map, args.reps, args.seed)?;

    fs::create_dir_all(&args.output)?;
    let mut summary_csv = String::from(
        "cell,n,p,s,coef,sigma,structure,contam_frac,d,method,reps,failures,ic_pct,tp_mean,mms_median\n",
    );
    let mut records = csv::Writer::from_writer(Vec::new());
    records
        .write_record(["cell", "method", "rep", "ic", "tp", "mms", "error"])
        .map_err(csv_err)?;
    let mut runtimes = String::from("cell,method,rep,runtime_s\n");
    let mut cells_json = Vec::new();

    for (idx, cfg) in cells.iter().enumerate() {
        let cell = idx + 1;
        let results = run_experiment(cfg, &methods)?;
        println!(
            "cell {cell}: n={} p={} s={} coef={} sigma={} structure={} contam={} d={}",
            cfg.n,
            cfg.p,
            cfg.s,
            cfg.coef,
            cfg.sigma,
            structure_token(cfg.structure),
            cfg.contam_frac,
            cfg.target_size()
        );
        println!(
            "  {:<10} {:>8} {:>10} {:>10} {:>6}",
            "method", "IC%", "TP(mean)", "MMS(med)", "fail"
        );
        let mut methods_json = Vec::new();
        for res in &results {
            let s = res.summarize();
            let tp_mean = if s.tp.is_empty() {
                f64::NAN
            } else {
                mean(&s.tp.iter().map(|&v| v as f64).collect::<Vec<_>>())
            };
            let mms_med = if s.mms.is_empty() {
                f64::NAN
            } else {
                median(&s.mms.iter().map(|&v| v as f64).collect::<Vec<_>>())
            };
            println!(
                "  {:<10} {:>8} {:>10} {:>10} {:>6}",
                s.label,
                sig4(s.ic_pct),
                sig4(tp_mean),
                sig4(mms_med),
                s.failures
            );
            summary_csv.push_str(&format!(
                "{cell},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                cfg.n,
                cfg.p,
                cfg.s,
                cfg.coef,
                cfg.sigma,
                structure_token(cfg.structure),
                cfg.contam_frac,
                cfg.target_size(),
                s.label,
                s.tp.len(),
                s.failures,
                full(s.ic_pct),
                full(tp_mean),
                full(mms_med)
            ));
            for rec in &res.records {
                let (ic, tp, mms) = match rec.metrics {
                    Some(m) => (
                        (m.ic as u8).to_string(),
                        m.tp.to_string(),
                        m.mms.map(|v| v.to_string()).unwrap_or_default(),
                    ),
                    None => (String::new(), String::new(), String::new()),
                };
                records
                    .write_record([
                        &cell.to_string(),
                        &s.label,
                        &(rec.rep + 1).to_string(),
                        &ic,
                        &tp,
                        &mms,
                        &rec.error.clone().unwrap_or_default(),
                    ])
                    .map_err(csv_err)?;
                runtimes.push_str(&format!(
                    "{cell},{},{},{}\n",
                    s.label,
                    rec.rep + 1,
                    full(rec.runtime_s)
                ));
            }
            methods_json.push(serde_json::json!({
                "method": s.label,
                "ic_pct": s.ic_pct,
                "tp": s.tp,
                "mms": s.mms,
                "failures": s.failures,
            }));
        }
        cells_json.push(serde_json::json!({
            "cell": cell,
            "n": cfg.n,
            "p": cfg.p,
            "s": cfg.s,
            "coef": cfg.coef,
            "sigma": cfg.sigma,
            "structure": structure_token(cfg.structure),
            "contam_frac": cfg.contam_frac,
            "contam_shift": cfg.contam_shift,
            "reps": cfg.reps,
            "seed": cfg.seed,
            "d": cfg.target_size(),
            "methods": methods_json,
        }));
    }

    fs::write(args.output.join("summary.csv"), summary_csv)?;
    let record_bytes = records.into_inner().map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(args.output.join("records.csv"), record_bytes)?;
    fs::write(args.output.join("runtimes.csv"), runtimes)?;
    let json = serde_json::json!({ "cells": cells_json });
    fs::write(
        args.output.join("summary.json"),
        serde_json::to_string_pretty(&json).map_err(|e| Error::Io(std::io::Error::other(e)))?
            + "\n",
    )?;

    let mut manifest = RunManifest::new("simulate");
    manifest.option("source", source);
    for (k, v) in &map {
        manifest.option(k, v);
    }
    if let Some(r) = args.reps {
        manifest.option("reps_override", r);
    }
    manifest.seed = Some(cells[0].seed);
    if args.config.is_some() {
        manifest.input_digest = Some(sha256_hex(args.config.as_ref().unwrap())?);
    }
    manifest.wall_time_s = t0.elapsed().as_secs_f64();
    write_manifest(&args.output, &manifest)
}

pub fn cmd_robustness_curves(args: &CurvesArgs) -> Result<()> {
    let t0 = Instant::now();
    let alphas = parse_f64_list(&args.alphas, "alphas")?;
    let deltas = parse_f64_list(&args.deltas, "deltas")?;
    let truth_vals = parse_f64_list(&args.truth, "truth")?;
    if truth_vals.len() != 3 {
        return Err(Error::Argument(
            "truth must be three numbers: intercept,slope,noise-sd".into(),
        ));
    }
    let truth = ModelTruth::new(truth_vals[0], truth_vals[1], truth_vals[2], args.ex, args.vx)?;
    fs::create_dir_all(&args.output)?;

    // influence traces over a wide residual sweep at x_t
    let eta = truth_vals[0] + truth_vals[1] * args.x_t;
    let sigma0 = truth_vals[2];
    let steps = 400;
    let mut if_csv = String::from("alpha,y_t,influence\n");
    for &a in &alphas {
        for k in 0..=steps {
            let y_t = eta - 8.0 * sigma0 + 16.0 * sigma0 * k as f64 / steps as f64;
            let v = influence_function(y_t, args.x_t, &truth, a);
            if_csv.push_str(&format!("{},{},{}\n", a, full(y_t), full(v)));
        }
    }
    fs::write(args.output.join("influence.csv"), if_csv)?;

    // alpha = 0 comes out unbounded and is written as inf
    let mut ges_csv = String::from("delta,alpha,ges\n");
    for &delta in &deltas {
        for &a in &alphas {
            let g = gross_error_sensitivity(&truth, a, delta)?;
            ges_csv.push_str(&format!("{delta},{a},{}\n", full(g)));
        }
    }
    fs::write(args.output.join("ges.csv"), ges_csv)?;

    let curve = are_curve(&truth, &alphas)?;
    let mut are_csv = String::from("alpha,are\n");
    for (a, v) in curve.alphas.iter().zip(&curve.values) {
        are_csv.push_str(&format!("{a},{}\n", full(*v)));
    }
    fs::write(args.output.join("are.csv"), are_csv)?;

    println!(
        "robustness-curves: wrote influence.csv ({} traces), ges.csv ({} grid points), are.csv",
        alphas.len(),
        alphas.len() * deltas.len()
    );

    let summary = serde_json::json!({
        "alphas": alphas,
        "deltas": deltas,
        "truth": { "intercept": truth_vals[0], "slope": truth_vals[1], "sigma": sigma0,
                   "ex": args.ex, "vx": args.vx },
        "x_t": args.x_t,
        "files": ["influence.csv", "ges.csv", "are.csv"],
    });
    fs::write(args.output.join("summary.json"), summary.to_string() + "\n")?;

    let mut manifest = RunManifest::new("robustness-curves");
    manifest.option("alphas", &args.alphas);
    manifest.option("deltas", &args.deltas);
    manifest.option("truth", &args.truth);
    manifest.option("ex", args.ex);
    manifest.option("vx", args.vx);
    manifest.option("x_t", args.x_t);
    manifest.wall_time_s = t0.elapsed().as_secs_f64();
    write_manifest(&args.output, &manifest)
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t < 1 {
            return Err(Error::Argument("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn parse_method(token: &str, alpha: f64) -> Result<Method> {
    match token {
        "dpd" => Ok(Method::Dpd(alpha)),
        "pearson" | "sis" => Ok(Method::Pearson),
        "reg" => Ok(Method::Reg),
        "rank" => Ok(Method::Rank),
        "spearman" => Ok(Method::Spearman),
        "gk" => Ok(Method::Gk),
        "dcor" => Ok(Method::Dcor),
        "mcp" => Ok(Method::Mcp),
        _ => Err(Error::Argument(format!(
            "unknown method '{token}'; valid methods: dpd, pearson, reg, rank, spearman, gk, dcor, mcp"
        ))),
    }
}

/// Method tokens in config files: screener names, dpd:<alpha>, isis:<alpha>;
/// bare dpd and isis mean alpha 0.3.
fn parse_spec_token(token: &str) -> Result<MethodSpec> {
    if let Some(rest) = token.strip_prefix("dpd:") {
        let alpha: f64 = rest
            .parse()
            .map_err(|_| Error::Config(format!("bad alpha in method '{token}'")))?;
        return Ok(MethodSpec::screen(Method::Dpd(alpha)));
    }
    if let Some(rest) = token.strip_prefix("isis:") {
        let alpha: f64 = rest
            .parse()
            .map_err(|_| Error::Config(format!("bad alpha in method '{token}'")))?;
        return Ok(MethodSpec::isis(alpha));
    }
    if token == "isis" {
        return Ok(MethodSpec::isis(0.3));
    }
    parse_method(token, 0.3).map(MethodSpec::screen)
}

const VALID_KEYS: &[&str] = &[
    "n", "p", "s", "coef", "sigma", "structure", "contam_frac", "contam_shift", "reps", "seed",
    "d", "scatter_active", "methods", "max_iter",
];

/// Expands a parsed config into one SimConfig per cell: the keys n, p, s,
/// coef, sigma, structure, and contam_frac may hold comma lists and are
/// crossed in that nesting order; the rest are single-valued.
fn build_cells(
    map: &BTreeMap<String, String>,
    reps_override: Option<usize>,
    seed_override: Option<u64>,
) -> Result<(Vec<SimConfig>, Vec<MethodSpec>)> {
    for key in map.keys() {
        if !VALID_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "unknown config key '{key}'; valid keys: {}",
                VALID_KEYS.join(", ")
            )));
        }
    }
    let need = |key: &str| -> Result<&String> {
        map.get(key).ok_or_else(|| Error::Config(format!("missing required config key '{key}'")))
    };
    let methods = split_list(need("methods")?)
        .iter()
        .map(|t| parse_spec_token(t))
        .collect::<Result<Vec<_>>>()?;
    let mut methods = methods;
    if methods.is_empty() {
        return Err(Error::Config("methods list is empty".into()));
    }
    if let Some(v) = map.get("max_iter") {
        let it: usize =
            v.parse().map_err(|_| Error::Config(format!("bad max_iter '{v}'")))?;
        for m in &mut methods {
            if let MethodSpec::Isis { max_iter, .. } = m {
                *max_iter = it;
            }
        }
    }

    let ns = parse_list::<usize>(need("n")?, "n")?;
    let ps = parse_list::<usize>(need("p")?, "p")?;
    let ss = parse_list::<usize>(map.get("s").map(String::as_str).unwrap_or("5"), "s")?;
    let coefs = parse_list::<f64>(map.get("coef").map(String::as_str).unwrap_or("1"), "coef")?;
    let sigmas = parse_list::<f64>(map.get("sigma").map(String::as_str).unwrap_or("1"), "sigma")?;
    let structures = split_list(map.get("structure").map(String::as_str).unwrap_or("independent"))
        .iter()
        .map(|t| parse_structure(t))
        .collect::<Result<Vec<_>>>()?;
    let fracs = parse_list::<f64>(
        map.get("contam_frac").map(String::as_str).unwrap_or("0"),
        "contam_frac",
    )?;

    let shift: f64 = parse_single(map, "contam_shift", -30.0)?;
    let reps: usize = reps_override.map(Ok).unwrap_or_else(|| parse_single(map, "reps", 100))?;
    let seed: u64 = seed_override.map(Ok).unwrap_or_else(|| parse_single(map, "seed", 0))?;
    let d: Option<usize> = match map.get("d") {
        Some(v) => Some(v.parse().map_err(|_| Error::Config(format!("bad d '{v}'")))?),
        None => None,
    };
    let scatter: bool = parse_single(map, "scatter_active", false)?;

    let mut cells = Vec::new();
    for &n in &ns {
        for &p in &ps {
            for &s in &ss {
                for &coef in &coefs {
                    for &sigma in &sigmas {
                        for &structure in &structures {
                            for &frac in &fracs {
                                let mut cfg = SimConfig::new(n, p);
                                cfg.s = s;
                                cfg.coef = coef;
                                cfg.sigma = sigma;
                                cfg.structure = structure;
                                cfg.contam_frac = frac;
                                cfg.contam_shift = shift;
                                cfg.reps = reps;
                                cfg.seed = seed;
                                cfg.d = d;
                                cfg.scatter_active = scatter;
                                cells.push(cfg);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((cells, methods))
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    let items = split_list(value);
    if items.is_empty() {
        return Err(Error::Config(format!("empty value for '{key}'")));
    }
    items
        .iter()
        .map(|v| v.parse().map_err(|_| Error::Config(format!("bad value '{v}' for '{key}'"))))
        .collect()
}

fn parse_single<T: std::str::FromStr + Copy>(
    map: &BTreeMap<String, String>,
    key: &str,
    default: T,
) -> Result<T> {
    match map.get(key) {
        Some(v) => v.parse().map_err(|_| Error::Config(format!("bad value '{v}' for '{key}'"))),
        None => Ok(default),
    }
}

/// independent, ar1(rho), or equicorr(rho).
fn parse_structure(token: &str) -> Result<Structure> {
    if token == "independent" {
        return Ok(Structure::Independent);
    }
    for (name, make) in
        [("ar1", Structure::Ar1 as fn(f64) -> Structure), ("equicorr", Structure::Equicorr)]
    {
        if let Some(rest) = token.strip_prefix(name) {
            let inner = rest
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| Error::Config(format!("bad structure '{token}'")))?;
            let rho: f64 = inner
                .parse()
                .map_err(|_| Error::Config(format!("bad correlation in '{token}'")))?;
            return Ok(make(rho));
        }
    }
    Err(Error::Config(format!(
        "unknown structure '{token}'; valid: independent, ar1(rho), equicorr(rho)"
    )))
}

fn structure_token(s: Structure) -> String {
    match s {
        Structure::Independent => "independent".into(),
        Structure::Ar1(rho) => format!("ar1({rho})"),
        Structure::Equicorr(rho) => format!("equicorr({rho})"),
    }
}

fn mode_token(mode: StandardizeMode) -> &'static str {
    match mode {
        StandardizeMode::Classical => "classical",
        StandardizeMode::Robust => "robust",
        StandardizeMode::None => "none",
    }
}

fn stop_token(reason: StopReason) -> &'static str {
    match reason {
        StopReason::SizeReached => "size_reached",
        StopReason::ActiveSetUnchanged => "active_set_unchanged",
        StopReason::MaxIter => "max_iter",
    }
}

fn parse_f64_list(value: &str, key: &str) -> Result<Vec<f64>> {
    parse_list::<f64>(value, key)
}

fn join_indices(indices: &[usize]) -> String {
    indices.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(";")
}

fn nonzero_count(fit: &PenalizedFit) -> usize {
    fit.coefficients.iter().filter(|&&c| c != 0.0).count()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_ranking(path: &Path, ranking: &Ranking, names: &[String]) -> Result<()> {
    let p = ranking.scores.len();
    let mut rank = vec![0usize; p];
    for (k, &j) in ranking.order.iter().enumerate() {
        rank[j] = k + 1;
    }
    let mut out = String::from("index,name,score,rank\n");
    for j in 0..p {
        out.push_str(&format!("{},{},{},{}\n", j + 1, names[j], full(ranking.scores[j]), rank[j]));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_top(path: &Path, indices: &[usize], ranking: &Ranking, names: &[String]) -> Result<()> {
    let mut out = String::from("rank,index,name,score\n");
    for (k, &j) in indices.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", k + 1, j + 1, names[j], full(ranking.scores[j])));
    }
    fs::write(path, out)?;
    Ok(())
}

/// The selected model: intercept, each kept covariate (ascending original
/// index, zeros dropped), then the scale, all at full precision. Shared by
/// `screen --refit` and `isis` so equal fits give byte-equal files.
fn write_model(path: &Path, columns: &[usize], fit: &PenalizedFit, names: &[String]) -> Result<()> {
    let mut out = String::from("term,index,coefficient\n");
    out.push_str(&format!("intercept,0,{}\n", full(fit.intercept)));
    for (k, &j) in columns.iter().enumerate() {
        if fit.coefficients[k] != 0.0 {
            out.push_str(&format!("{},{},{}\n", names[j], j + 1, full(fit.coefficients[k])));
        }
    }
    out.push_str(&format!("sigma,,{}\n", full(fit.sigma)));
    fs::write(path, out)?;
    Ok(())
}
