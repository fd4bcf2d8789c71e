//! Monte Carlo harness for screening benchmarks: Gaussian designs with
//! independent, AR(1), or equicorrelated columns, a sparse linear response,
//! optional additive shift contamination of the response, and the three
//! standard screening metrics (inclusion, true positives, minimum model
//! size) aggregated over replications.
//!
//! Every random draw comes from a counter-based stream keyed by
//! (seed, replication, purpose), so results are bit-identical across runs
//! and worker pool sizes, and replications stay comparable cell to cell
//! under common random numbers.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::ColMatrix;
use crate::error::{Error, Result};
use crate::isis::{run_dpd_isis, IsisConfig};
use crate::mdpde::FitOptions;
use crate::numeric::round_half_up;
use crate::screeners::{rank_by_method, standardize_columns, Method, Ranking, StandardizeMode};

const PURPOSE_DESIGN: u64 = 0;
const PURPOSE_NOISE: u64 = 1;
const PURPOSE_CONTAM: u64 = 2;
const PURPOSE_SCATTER: u64 = 3;

/// Correlation structure of the design columns; each column is marginally
/// standard normal under all three.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Structure {
    Independent,
    /// corr(x_i, x_j) = rho^|i - j|.
    Ar1(f64),
    /// corr(x_i, x_j) = rho for every pair.
    Equicorr(f64),
}

/// One simulation cell. `p` counts covariates; the design is n x p and the
/// true coefficient vector has p + 1 entries with the intercept first.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    /// Nonzero coefficients including the intercept; s - 1 covariates carry
    /// signal.
    pub s: usize,
    /// Common value of every nonzero coefficient, intercept included.
    pub coef: f64,
    /// Noise standard deviation.
    pub sigma: f64,
    pub structure: Structure,
    /// Fraction of responses shifted by `contam_shift`; 0 disables.
    pub contam_frac: f64,
    pub contam_shift: f64,
    pub reps: usize,
    pub seed: u64,
    /// Screening model size; None means n - 1 (capped at p).
    pub d: Option<usize>,
    /// Place the active covariates at random columns instead of the first
    /// s - 1, redrawn each replication.
    pub scatter_active: bool,
}

impl SimConfig {
    pub fn new(n: usize, p: usize) -> Self {
        SimConfig {
            n,
            p,
            s: 5,
            coef: 1.0,
            sigma: 1.0,
            structure: Structure::Independent,
            contam_frac: 0.0,
            contam_shift: -30.0,
            reps: 100,
            seed: 0,
            d: None,
            scatter_active: false,
        }
    }

    /// The model size metrics are judged at.
    pub fn target_size(&self) -> usize {
        self.d.unwrap_or_else(|| self.n.saturating_sub(1)).min(self.p).max(1)
    }
}

/// The data-generating coefficients for one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    /// Length p + 1; beta[0] is the intercept and beta[j + 1] multiplies
    /// design column j.
    pub beta: Vec<f64>,
    /// Design columns (0-based, ascending) with nonzero coefficients;
    /// beta is nonzero exactly on the intercept plus these.
    pub active: Vec<usize>,
}

impl TrueModel {
    /// Builds the coefficient vector for replication `rep`: the intercept
    /// and s - 1 covariates all equal to `coef`, at the first columns or at
    /// scattered ones when the flag is set.
    pub fn from_config(cfg: &SimConfig, rep: usize) -> Result<TrueModel> {
        validate_config(cfg)?;
        let k = cfg.s - 1;
        let active = if cfg.scatter_active {
            let mut rng = stream_rng(cfg.seed, rep, PURPOSE_SCATTER);
            let mut idx = rand::seq::index::sample(&mut rng, cfg.p, k).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..k).collect()
        };
        let mut beta = vec![0.0; cfg.p + 1];
        beta[0] = cfg.coef;
        for &j in &active {
            beta[j + 1] = cfg.coef;
        }
        Ok(TrueModel { beta, active })
    }
}

/// Draws the n x p design for replication `rep`. Rows are generated in
/// order; within a row the equicorrelated construction draws the shared
/// factor first, then one innovation per column, and the AR(1) construction
/// draws one innovation per column left to right.
pub fn gen_design(cfg: &SimConfig, rep: usize) -> Result<ColMatrix> {
    validate_config(cfg)?;
    let (n, p) = (cfg.n, cfg.p);
    let mut rng = stream_rng(cfg.seed, rep, PURPOSE_DESIGN);
    let mut cols = vec![vec![0.0f64; n]; p];
    match cfg.structure {
        Structure::Independent => {
            for i in 0..n {
                for col in cols.iter_mut() {
                    col[i] = rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        Structure::Ar1(rho) => {
            // x_j = rho x_{j-1} + sqrt(1 - rho^2) z_j keeps unit marginals
            let innov = (1.0 - rho * rho).sqrt();
            for i in 0..n {
                let mut prev: f64 = rng.sample(StandardNormal);
                cols[0][i] = prev;
                for col in cols.iter_mut().skip(1) {
                    prev = rho * prev + innov * rng.sample::<f64, _>(StandardNormal);
                    col[i] = prev;
                }
            }
        }
        Structure::Equicorr(rho) => {
            // x_j = sqrt(rho) w + sqrt(1 - rho) z_j with w shared per row
            let (sw, sz) = (rho.sqrt(), (1.0 - rho).sqrt());
            for i in 0..n {
                let w: f64 = rng.sample(StandardNormal);
                for col in cols.iter_mut() {
                    col[i] = sw * w + sz * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
    ColMatrix::from_columns(cols)
}

/// y_i = beta[0] + sum_j beta[j + 1] x_ij + sigma z_i, one standard normal
/// per observation in row order. `sigma` may be zero for an exact response.
pub fn gen_response(
    x: &ColMatrix,
    truth: &TrueModel,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if truth.beta.len() != x.n_cols() + 1 {
        return Err(Error::Dimension(format!(
            "coefficient vector has {} entries, expected {} for {} covariates",
            truth.beta.len(),
            x.n_cols() + 1,
            x.n_cols()
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Domain("noise standard deviation must be finite and nonnegative".into()));
    }
    let n = x.n_rows();
    let mut y = vec![truth.beta[0]; n];
    for (j, &b) in truth.beta[1..].iter().enumerate() {
        if b != 0.0 {
            for (yi, &xij) in y.iter_mut().zip(x.col(j)) {
                *yi += b * xij;
            }
        }
    }
    for yi in y.iter_mut() {
        *yi += sigma * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(y)
}

/// Shifts round-half-up(frac * n) distinct responses by `shift` and returns
/// the new vector along with the shifted indices in ascending order.
pub fn contaminate(
    y: &[f64],
    frac: f64,
    shift: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if !frac.is_finite() || !(0.0..1.0).contains(&frac) {
        return Err(Error::Argument("contamination fraction must lie in [0, 1)".into()));
    }
    if !shift.is_finite() {
        return Err(Error::Argument("contamination shift must be finite".into()));
    }
    let n = y.len();
    let count = round_half_up(frac * n as f64).min(n);
    let mut out = y.to_vec();
    let mut hit = rand::seq::index::sample(rng, n, count).into_vec();
    hit.sort_unstable();
    for &i in &hit {
        out[i] += shift;
    }
    Ok((out, hit))
}

/// Largest rank held by an active covariate (1-based); the smallest model
/// that keeps all of them. 0 when nothing is active.
pub fn metric_mms(ranking: &Ranking, truth: &TrueModel) -> usize {
    truth.active.iter().map(|&j| ranking.rank_of(j)).max().unwrap_or(0)
}

/// Whether the top-d model contains every active covariate.
pub fn metric_ic(ranking: &Ranking, truth: &TrueModel, d: usize) -> bool {
    metric_mms(ranking, truth) <= d
}

/// Number of active covariates inside the top-d model.
pub fn metric_tp(ranking: &Ranking, truth: &TrueModel, d: usize) -> usize {
    truth.active.iter().filter(|&&j| ranking.rank_of(j) <= d).count()
}

/// One competitor in a benchmark run.
#[derive(Debug, Clone)]
pub enum MethodSpec {
    /// Rank every column and judge the top target_size() of them.
    Screen { method: Method, standardize: StandardizeMode },
    /// Iterative screening with penalized refits; judged on its final
    /// model, so no minimum model size is defined.
    Isis {
        alpha: f64,
        standardize: StandardizeMode,
        /// Final model size; None means floor(n / ln n).
        d: Option<usize>,
        max_iter: usize,
    },
}

impl MethodSpec {
    /// A ranking screener with its usual standardization: classical
    /// centering and scaling for the fitted methods, none for the
    /// correlation methods (scale-invariant or internally robustly scaled).
    pub fn screen(method: Method) -> Self {
        let standardize = match method {
            Method::Dpd(_) | Method::Reg => StandardizeMode::Classical,
            _ => StandardizeMode::None,
        };
        MethodSpec::Screen { method, standardize }
    }

    pub fn isis(alpha: f64) -> Self {
        MethodSpec::Isis {
            alpha,
            standardize: StandardizeMode::Classical,
            d: None,
            max_iter: 10,
        }
    }

    pub fn label(&self) -> String {
        match self {
            MethodSpec::Screen { method, .. } => method.token(),
            MethodSpec::Isis { alpha, .. } => format!("isis:{alpha}"),
        }
    }
}

/// Usual iterative-screening model size floor(n / ln n), at least 1.
pub fn default_isis_size(n: usize) -> usize {
    let n = n as f64;
    ((n / n.ln()).floor() as usize).max(1)
}

/// Metrics for one method on one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepMetrics {
    pub ic: bool,
    pub tp: usize,
    /// None for methods judged on a final model rather than a full ranking.
    pub mms: Option<usize>,
}

/// Outcome of one method on one replication; a failed fit leaves `metrics`
/// empty and carries the error text instead of aborting the experiment.
#[derive(Debug, Clone)]
pub struct RepRecord {
    pub rep: usize,
    pub metrics: Option<RepMetrics>,
    pub runtime_s: f64,
    pub error: Option<String>,
}

/// All replications of one method, in replication order.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub label: String,
    pub records: Vec<RepRecord>,
}

/// Aggregates over the successful replications of one method.
#[derive(Debug, Clone)]
pub struct MetricsSummary {
    pub label: String,
    /// Percentage of successful replications whose model contained every
    /// active covariate; NaN when every replication failed.
    pub ic_pct: f64,
    pub tp: Vec<usize>,
    /// Only from replications where a full ranking was available.
    pub mms: Vec<usize>,
    pub runtimes: Vec<f64>,
    pub failures: usize,
}

impl MethodResult {
    pub fn summarize(&self) -> MetricsSummary {
        let mut ic_hits = 0usize;
        let mut ok = 0usize;
        let mut tp = Vec::new();
        let mut mms = Vec::new();
        let mut runtimes = Vec::new();
        let mut failures = 0usize;
        for rec in &self.records {
            runtimes.push(rec.runtime_s);
            match rec.metrics {
                Some(m) => {
                    ok += 1;
                    ic_hits += m.ic as usize;
                    tp.push(m.tp);
                    if let Some(v) = m.mms {
                        mms.push(v);
                    }
                }
                None => failures += 1,
            }
        }
        let ic_pct =
            if ok == 0 { f64::NAN } else { 100.0 * ic_hits as f64 / ok as f64 };
        MetricsSummary { label: self.label.clone(), ic_pct, tp, mms, runtimes, failures }
    }
}

/// Runs every method on the same generated dataset in each replication and
/// collects per-replication records per method. Replications run in
/// parallel; the output order and every number in it depend only on the
/// config, never on the worker count.
pub fn run_experiment(cfg: &SimConfig, methods: &[MethodSpec]) -> Result<Vec<MethodResult>> {
    validate_config(cfg)?;
    if methods.is_empty() {
        return Err(Error::Argument("at least one method is required".into()));
    }
    for spec in methods {
        validate_spec(spec)?;
    }
    let opts = FitOptions::default();
    let per_rep = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_rep(cfg, methods, rep, &opts))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<MethodResult> = methods
        .iter()
        .map(|m| MethodResult { label: m.label(), records: Vec::with_capacity(cfg.reps) })
        .collect();
    for row in per_rep {
        for (slot, rec) in out.iter_mut().zip(row) {
            slot.records.push(rec);
        }
    }
    Ok(out)
}

fn run_rep(
    cfg: &SimConfig,
    methods: &[MethodSpec],
    rep: usize,
    opts: &FitOptions,
) -> Result<Vec<RepRecord>> {
    let x = gen_design(cfg, rep)?;
    let truth = TrueModel::from_config(cfg, rep)?;
    let mut noise_rng = stream_rng(cfg.seed, rep, PURPOSE_NOISE);
    let clean = gen_response(&x, &truth, cfg.sigma, &mut noise_rng)?;
    let mut contam_rng = stream_rng(cfg.seed, rep, PURPOSE_CONTAM);
    let (y, _) = contaminate(&clean, cfg.contam_frac, cfg.contam_shift, &mut contam_rng)?;
    let d = cfg.target_size();
    Ok(methods.iter().map(|spec| run_method(&y, &x, &truth, spec, d, rep, opts)).collect())
}

fn run_method(
    y: &[f64],
    x: &ColMatrix,
    truth: &TrueModel,
    spec: &MethodSpec,
    d: usize,
    rep: usize,
    opts: &FitOptions,
) -> RepRecord {
    let start = Instant::now();
    let outcome = apply_method(y, x, truth, spec, d, opts);
    let runtime_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok(metrics) => RepRecord { rep, metrics: Some(metrics), runtime_s, error: None },
        Err(e) => RepRecord { rep, metrics: None, runtime_s, error: Some(e.to_string()) },
    }
}

fn apply_method(
    y: &[f64],
    x: &ColMatrix,
    truth: &TrueModel,
    spec: &MethodSpec,
    d: usize,
    opts: &FitOptions,
) -> Result<RepMetrics> {
    match spec {
        MethodSpec::Screen { method, standardize } => {
            let ranking = match standardize {
                StandardizeMode::None => rank_by_method(y, x, *method, opts)?,
                mode => rank_by_method(y, &standardize_columns(x, *mode).x, *method, opts)?,
            };
            Ok(RepMetrics {
                ic: metric_ic(&ranking, truth, d),
                tp: metric_tp(&ranking, truth, d),
                mms: Some(metric_mms(&ranking, truth)),
            })
        }
        MethodSpec::Isis { alpha, standardize, d: size, max_iter } => {
            let held;
            let xref = match standardize {
                StandardizeMode::None => x,
                mode => {
                    held = standardize_columns(x, *mode).x;
                    &held
                }
            };
            let mut icfg = IsisConfig::new(*alpha, size.unwrap_or_else(|| default_isis_size(y.len())));
            icfg.max_iter = *max_iter;
            let fit = run_dpd_isis(y, xref, &icfg, opts)?;
            let selected = &fit.final_model.indices;
            let tp = truth.active.iter().filter(|j| selected.contains(j)).count();
            Ok(RepMetrics { ic: tp == truth.active.len(), tp, mms: None })
        }
    }
}

fn validate_config(cfg: &SimConfig) -> Result<()> {
    if cfg.n < 3 {
        return Err(Error::Argument("need at least 3 observations".into()));
    }
    if cfg.p < 1 {
        return Err(Error::Argument("need at least 1 covariate".into()));
    }
    if cfg.s < 1 || cfg.s > cfg.p {
        return Err(Error::Argument(format!(
            "sparsity s = {} must lie in 1..=p = {}",
            cfg.s, cfg.p
        )));
    }
    if !cfg.coef.is_finite() {
        return Err(Error::Argument("coefficient value must be finite".into()));
    }
    if !(cfg.sigma > 0.0) || !cfg.sigma.is_finite() {
        return Err(Error::Domain("noise standard deviation must be finite and positive".into()));
    }
    if !cfg.contam_frac.is_finite() || !(0.0..1.0).contains(&cfg.contam_frac) {
        return Err(Error::Argument("contamination fraction must lie in [0, 1)".into()));
    }
    if !cfg.contam_shift.is_finite() {
        return Err(Error::Argument("contamination shift must be finite".into()));
    }
    if cfg.reps < 1 {
        return Err(Error::Argument("need at least 1 replication".into()));
    }
    if cfg.d == Some(0) {
        return Err(Error::Argument("model size d must be at least 1".into()));
    }
    match cfg.structure {
        Structure::Independent => {}
        Structure::Ar1(rho) => {
            if !rho.is_finite() || rho.abs() >= 1.0 {
                return Err(Error::Domain("AR(1) correlation must lie in (-1, 1)".into()));
            }
        }
        // the shared-factor construction needs a nonnegative correlation
        Structure::Equicorr(rho) => {
            if !rho.is_finite() || !(0.0..1.0).contains(&rho) {
                return Err(Error::Domain("equicorrelation must lie in [0, 1)".into()));
            }
        }
    }
    Ok(())
}

fn validate_spec(spec: &MethodSpec) -> Result<()> {
    match spec {
        MethodSpec::Screen { method: Method::Dpd(alpha), .. }
        | MethodSpec::Isis { alpha, .. } => {
            if !alpha.is_finite() || *alpha < 0.0 {
                return Err(Error::Domain("alpha must be finite and nonnegative".into()));
            }
        }
        MethodSpec::Screen { .. } => {}
    }
    if let MethodSpec::Isis { d, max_iter, .. } = spec {
        if *d == Some(0) {
            return Err(Error::Argument("final model size must be at least 1".into()));
        }
        if *max_iter < 1 {
            return Err(Error::Argument("max_iter must be at least 1".into()));
        }
    }
    Ok(())
}

fn stream_rng(seed: u64, rep: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((rep as u64) << 8) | purpose);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{mean, sample_sd};
    use proptest::prelude::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (&ai, &bi) in a.iter().zip(b) {
            sab += (ai - ma) * (bi - mb);
            saa += (ai - ma) * (ai - ma);
            sbb += (bi - mb) * (bi - mb);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let ok = SimConfig::new(50, 20);
        assert!(validate_config(&ok).is_ok());
        let cases: Vec<Box<dyn Fn(&mut SimConfig)>> = vec![
            Box::new(|c| c.n = 2),
            Box::new(|c| c.p = 0),
            Box::new(|c| c.s = 0),
            Box::new(|c| c.s = c.p + 1),
            Box::new(|c| c.coef = f64::NAN),
            Box::new(|c| c.sigma = 0.0),
            Box::new(|c| c.sigma = -1.0),
            Box::new(|c| c.contam_frac = 1.0),
            Box::new(|c| c.contam_frac = -0.1),
            Box::new(|c| c.contam_shift = f64::INFINITY),
            Box::new(|c| c.reps = 0),
            Box::new(|c| c.d = Some(0)),
            Box::new(|c| c.structure = Structure::Ar1(1.0)),
            Box::new(|c| c.structure = Structure::Equicorr(-0.2)),
            Box::new(|c| c.structure = Structure::Equicorr(1.0)),
        ];
        for mutate in cases {
            let mut bad = ok.clone();
            mutate(&mut bad);
            assert!(validate_config(&bad).is_err(), "accepted {:?}", bad);
        }
    }

    #[test]
    fn independent_design_is_standard_normal_and_uncorrelated() {
        let mut cfg = SimConfig::new(2000, 3);
        cfg.s = 1;
        cfg.seed = 7;
        let x = gen_design(&cfg, 0).unwrap();
        for j in 0..3 {
            assert!(mean(x.col(j)).abs() < 0.08);
            assert!((sample_sd(x.col(j)) - 1.0).abs() < 0.06);
        }
        assert!(corr(x.col(0), x.col(1)).abs() < 0.08);
        assert!(corr(x.col(0), x.col(2)).abs() < 0.08);
        assert!(corr(x.col(1), x.col(2)).abs() < 0.08);
    }

    #[test]
    fn ar1_design_matches_geometric_correlations() {
        let mut cfg = SimConfig::new(4000, 4);
        cfg.s = 1;
        cfg.structure = Structure::Ar1(0.5);
        cfg.seed = 3;
        let x = gen_design(&cfg, 1).unwrap();
        assert!((corr(x.col(0), x.col(1)) - 0.5).abs() < 0.05);
        assert!((corr(x.col(0), x.col(2)) - 0.25).abs() < 0.05);
        assert!((corr(x.col(0), x.col(3)) - 0.125).abs() < 0.05);
        for j in 0..4 {
            assert!((sample_sd(x.col(j)) - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn equicorr_design_is_exchangeable() {
        let mut cfg = SimConfig::new(4000, 50);
        cfg.structure = Structure::Equicorr(0.5);
        cfg.seed = 5;
        let x = gen_design(&cfg, 2).unwrap();
        // distance between columns must not matter
        assert!((corr(x.col(0), x.col(1)) - 0.5).abs() < 0.05);
        assert!((corr(x.col(0), x.col(49)) - 0.5).abs() < 0.05);
        assert!((corr(x.col(17), x.col(30)) - 0.5).abs() < 0.05);
        assert!((sample_sd(x.col(25)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn design_streams_are_rep_and_seed_specific() {
        let mut cfg = SimConfig::new(10, 4);
        cfg.s = 1;
        cfg.seed = 42;
        let a = gen_design(&cfg, 3).unwrap();
        let b = gen_design(&cfg, 3).unwrap();
        for j in 0..4 {
            assert_eq!(a.col(j), b.col(j));
        }
        let other_rep = gen_design(&cfg, 4).unwrap();
        assert_ne!(a.col(0), other_rep.col(0));
        let mut reseeded = cfg.clone();
        reseeded.seed = 43;
        let other_seed = gen_design(&reseeded, 3).unwrap();
        assert_ne!(a.col(0), other_seed.col(0));
    }

    #[test]
    fn response_is_exact_without_noise() {
        let mut cfg = SimConfig::new(30, 8);
        cfg.coef = 2.5;
        cfg.seed = 9;
        let x = gen_design(&cfg, 0).unwrap();
        let truth = TrueModel::from_config(&cfg, 0).unwrap();
        let mut rng = stream_rng(cfg.seed, 0, PURPOSE_NOISE);
        let y = gen_response(&x, &truth, 0.0, &mut rng).unwrap();
        for i in 0..cfg.n {
            let mut eta = 2.5;
            for j in 0..4 {
                eta += 2.5 * x.col(j)[i];
            }
            assert_eq!(y[i], eta);
        }
    }

    #[test]
    fn response_variance_tracks_signal_plus_noise() {
        // four unit coefficients: the signal variance is the sum of the
        // active block of the covariance, 10 under equicorrelation 0.5 and
        // 8.25 under AR(1) 0.5, plus unit noise
        for (structure, want) in [
            (Structure::Equicorr(0.5), 11.0),
            (Structure::Ar1(0.5), 9.25),
            (Structure::Independent, 5.0),
        ] {
            let mut cfg = SimConfig::new(20000, 5);
            cfg.structure = structure;
            cfg.seed = 21;
            let x = gen_design(&cfg, 0).unwrap();
            let truth = TrueModel::from_config(&cfg, 0).unwrap();
            let mut rng = stream_rng(cfg.seed, 0, PURPOSE_NOISE);
            let y = gen_response(&x, &truth, cfg.sigma, &mut rng).unwrap();
            let sd = sample_sd(&y);
            assert!(
                (sd * sd - want).abs() < 0.5,
                "{structure:?}: var {} want {want}",
                sd * sd
            );
        }
    }

    #[test]
    fn response_checks_coefficient_length() {
        let mut cfg = SimConfig::new(10, 4);
        cfg.s = 4;
        let x = gen_design(&cfg, 0).unwrap();
        let bad = TrueModel { beta: vec![1.0; 4], active: vec![0] };
        let mut rng = stream_rng(0, 0, PURPOSE_NOISE);
        assert!(matches!(gen_response(&x, &bad, 1.0, &mut rng), Err(Error::Dimension(_))));
        let neg = TrueModel { beta: vec![1.0; 5], active: vec![0] };
        assert!(gen_response(&x, &neg, -1.0, &mut rng).is_err());
    }

    #[test]
    fn contamination_touches_exactly_the_reported_rows() {
        let y: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let mut rng = stream_rng(17, 0, PURPOSE_CONTAM);
        let (y2, hit) = contaminate(&y, 0.1, -30.0, &mut rng).unwrap();
        assert_eq!(hit.len(), 10);
        assert!(hit.windows(2).all(|w| w[0] < w[1]));
        for i in 0..100 {
            if hit.contains(&i) {
                assert_eq!(y2[i], y[i] - 30.0);
            } else {
                assert_eq!(y2[i], y[i]);
            }
        }
    }

    #[test]
    fn contamination_count_rounds_half_up() {
        let mut rng = stream_rng(1, 0, PURPOSE_CONTAM);
        let y = vec![0.0; 50];
        // 0.05 * 50 = 2.5 rounds up to 3
        assert_eq!(contaminate(&y, 0.05, 1.0, &mut rng).unwrap().1.len(), 3);
        let y = vec![0.0; 10];
        assert_eq!(contaminate(&y, 0.25, 1.0, &mut rng).unwrap().1.len(), 3);
        assert_eq!(contaminate(&y, 0.24, 1.0, &mut rng).unwrap().1.len(), 2);
        let (same, hit) = contaminate(&y, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(same, y);
        assert!(hit.is_empty());
    }

    #[test]
    fn contamination_validates_arguments() {
        let y = vec![0.0; 10];
        let mut rng = stream_rng(1, 0, PURPOSE_CONTAM);
        assert!(contaminate(&y, 1.0, 1.0, &mut rng).is_err());
        assert!(contaminate(&y, -0.01, 1.0, &mut rng).is_err());
        assert!(contaminate(&y, f64::NAN, 1.0, &mut rng).is_err());
        assert!(contaminate(&y, 0.1, f64::NAN, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn contamination_count_matches_rounding(n in 1usize..200, frac in 0.0f64..0.999) {
            let y = vec![1.0; n];
            let mut rng = stream_rng(5, 0, PURPOSE_CONTAM);
            let (y2, hit) = contaminate(&y, frac, 2.0, &mut rng).unwrap();
            let want = ((frac * n as f64 + 0.5).floor() as usize).min(n);
            prop_assert_eq!(hit.len(), want);
            prop_assert!(hit.windows(2).all(|w| w[0] < w[1]));
            let moved = y2.iter().filter(|&&v| v != 1.0).count();
            prop_assert_eq!(moved, want);
        }
    }

    #[test]
    fn metrics_agree_with_a_rank_scan() {
        // hand ranking over 8 columns: order 5,2,7,0,...; actives at ranks
        // 2 and 4 give mms 4
        let ranking = Ranking {
            scores: vec![0.5, 0.1, 0.8, 0.2, 0.0, 0.9, 0.05, 0.7],
            order: vec![5, 2, 7, 0, 3, 1, 6, 4],
            method: Method::Pearson,
        };
        let truth = TrueModel { beta: vec![1.0; 9], active: vec![0, 2] };
        assert_eq!(metric_mms(&ranking, &truth), 4);
        let mut prev_tp = 0;
        let mut first_ic = None;
        for d in 1..=8 {
            let tp = metric_tp(&ranking, &truth, d);
            assert!(tp >= prev_tp, "tp must be nondecreasing in d");
            prev_tp = tp;
            let ic = metric_ic(&ranking, &truth, d);
            assert_eq!(ic, metric_mms(&ranking, &truth) <= d);
            if ic && first_ic.is_none() {
                first_ic = Some(d);
            }
        }
        // the scan finds inclusion exactly at the minimum model size
        assert_eq!(first_ic, Some(4));
        assert_eq!(metric_tp(&ranking, &truth, 8), truth.active.len());
    }

    #[test]
    fn experiment_is_deterministic_and_shape_correct() {
        let mut cfg = SimConfig::new(40, 12);
        cfg.reps = 4;
        cfg.seed = 11;
        cfg.sigma = 0.5;
        let methods = [MethodSpec::screen(Method::Pearson), MethodSpec::screen(Method::Gk)];
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_experiment(&cfg, &methods).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].label, "pearson");
        assert_eq!(a[1].label, "gk");
        for (ma, mb) in a.iter().zip(&b) {
            assert_eq!(ma.records.len(), 4);
            for (ra, rb) in ma.records.iter().zip(&mb.records) {
                assert_eq!(ra.rep, rb.rep);
                assert_eq!(ra.metrics, rb.metrics);
                assert!(ra.error.is_none());
            }
        }
        // d = n - 1 = 39 exceeds p, so every ranking keeps all columns and
        // inclusion is certain
        for rec in &a[0].records {
            let m = rec.metrics.unwrap();
            assert!(m.ic);
            assert_eq!(m.tp, 4);
            assert!(m.mms.unwrap() >= 4 && m.mms.unwrap() <= 12);
        }
    }

    #[test]
    fn experiment_records_failures_without_aborting() {
        // a NaN response cannot come out of the generator, so drive the
        // per-method runner directly to exercise the failure bookkeeping
        let mut cfg = SimConfig::new(10, 3);
        cfg.s = 3;
        let x = gen_design(&cfg, 0).unwrap();
        let truth = TrueModel::from_config(&cfg, 0).unwrap();
        let mut y = vec![1.0; 10];
        y[4] = f64::NAN;
        let spec = MethodSpec::screen(Method::Pearson);
        let rec = run_method(&y, &x, &truth, &spec, 3, 0, &FitOptions::default());
        assert!(rec.metrics.is_none());
        assert!(rec.error.is_some());
        let result = MethodResult { label: spec.label(), records: vec![rec] };
        let summary = result.summarize();
        assert_eq!(summary.failures, 1);
        assert!(summary.ic_pct.is_nan());
        assert!(summary.tp.is_empty());
    }

    #[test]
    fn isis_spec_recovers_a_strong_model() {
        let mut cfg = SimConfig::new(60, 12);
        cfg.reps = 2;
        cfg.seed = 23;
        cfg.coef = 2.0;
        cfg.sigma = 0.3;
        let methods = [MethodSpec::isis(0.3)];
        let results = run_experiment(&cfg, &methods).unwrap();
        assert_eq!(results[0].label, "isis:0.3");
        for rec in &results[0].records {
            let m = rec.metrics.expect("isis should fit");
            assert!(m.ic, "rep {} missed the active set", rec.rep);
            assert_eq!(m.tp, 4);
            assert_eq!(m.mms, None);
        }
        let summary = results[0].summarize();
        assert_eq!(summary.ic_pct, 100.0);
        assert!(summary.mms.is_empty());
    }

    #[test]
    fn scattered_actives_redraw_per_replication() {
        let mut cfg = SimConfig::new(20, 30);
        cfg.scatter_active = true;
        cfg.seed = 31;
        let t0 = TrueModel::from_config(&cfg, 0).unwrap();
        let t0_again = TrueModel::from_config(&cfg, 0).unwrap();
        assert_eq!(t0, t0_again);
        let t1 = TrueModel::from_config(&cfg, 1).unwrap();
        assert_ne!(t0.active, t1.active);
        for t in [&t0, &t1] {
            assert_eq!(t.active.len(), 4);
            assert!(t.active.windows(2).all(|w| w[0] < w[1]));
            assert!(t.active.iter().all(|&j| j < 30));
            let nonzero: Vec<usize> =
                (1..t.beta.len()).filter(|&j| t.beta[j] != 0.0).map(|j| j - 1).collect();
            assert_eq!(nonzero, t.active);
            assert_eq!(t.beta[0], 1.0);
        }
    }

    #[test]
    fn default_sizes_match_the_usual_rules() {
        assert_eq!(default_isis_size(54), 13);
        assert_eq!(default_isis_size(100), 21);
        let cfg = SimConfig::new(50, 1000);
        assert_eq!(cfg.target_size(), 49);
        let mut small = SimConfig::new(50, 10);
        assert_eq!(small.target_size(), 10);
        small.d = Some(5);
        assert_eq!(small.target_size(), 5);
    }
}
