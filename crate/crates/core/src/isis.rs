//! Iterative screening: marginal screening on residual responses alternating
//! with joint penalized refits against the original response.
//!
//! Each iteration screens the current working response over the still-available
//! columns, adds the top d' to the running candidate pool, refits the penalized
//! model on the whole pool, and keeps the nonzero support as the active set.
//! Because the refit always sees every candidate ever screened, a variable
//! picked early can be dropped later when better joint explanations arrive.
//! Three stop rules are always armed, checked in order: active set reached the
//! target size, active set size unchanged from the previous iteration, and the
//! iteration cap.

use crate::data::ColMatrix;
use crate::error::{Error, Result};
use crate::mdpde::FitOptions;
use crate::penalized::{default_lambda, fit_penalized_dpd, support, PenalizedFit};
use crate::screeners::{dpd_sis_scores, select_top, Method, ModelSet, Ranking};

/// Per-iteration candidate budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// floor(2d/3) in the first iteration, then d minus the current active
    /// size; shrinks the budget as the model fills up.
    Van,
    /// The same fixed budget every iteration.
    Fixed(usize),
}

#[derive(Debug, Clone)]
pub struct IsisConfig {
    pub alpha: f64,
    /// Target final model size.
    pub d: usize,
    pub schedule: Schedule,
    pub max_iter: usize,
    /// Penalty for every refit including the final one, quoted against the
    /// summed loss as in fit_penalized_dpd; None uses default_lambda(n, p)
    /// with p the full column count.
    pub lambda: Option<f64>,
}

impl IsisConfig {
    pub fn new(alpha: f64, d: usize) -> Self {
        IsisConfig { alpha, d, schedule: Schedule::Van, max_iter: 10, lambda: None }
    }
}

/// Which stop rule fired; all three are always active, first hit wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    SizeReached,
    ActiveSetUnchanged,
    MaxIter,
}

/// One screening/refit round. `union` lists the columns (ascending, original
/// indices) the refit coefficients are expressed over.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Columns screened in this round, in ranked order (original indices).
    pub candidates: Vec<usize>,
    /// Nonzero support of the refit, ascending original indices.
    pub active: Vec<usize>,
    pub union: Vec<usize>,
    pub refit: PenalizedFit,
}

#[derive(Debug, Clone)]
pub struct IsisResult {
    /// Selected covariates (ascending original indices); always the support
    /// of `final_fit`.
    pub final_model: ModelSet,
    pub final_fit: PenalizedFit,
    /// Columns `final_fit.coefficients` is expressed over (ascending).
    pub final_columns: Vec<usize>,
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

/// Residuals of a penalized fit: y_i - intercept - x_i . coefficients.
pub fn compute_residuals(y: &[f64], xsub: &ColMatrix, fit: &PenalizedFit) -> Result<Vec<f64>> {
    if y.len() != xsub.n_rows() {
        return Err(Error::Dimension(format!(
            "response has {} rows, covariates have {}",
            y.len(),
            xsub.n_rows()
        )));
    }
    if fit.coefficients.len() != xsub.n_cols() {
        return Err(Error::Dimension(format!(
            "fit has {} coefficients for {} columns",
            fit.coefficients.len(),
            xsub.n_cols()
        )));
    }
    let mut r: Vec<f64> = y.iter().map(|&v| v - fit.intercept).collect();
    for (j, &bj) in fit.coefficients.iter().enumerate() {
        if bj != 0.0 {
            for (ri, &xi) in r.iter_mut().zip(xsub.col(j)) {
                *ri -= bj * xi;
            }
        }
    }
    Ok(r)
}

/// Drops the lowest-scoring members of an oversized active set, keeping the d
/// highest by the given scores (ties kept by ascending index). Sets at or
/// under the target are returned unchanged.
pub fn trim_to_size(active: &ModelSet, ranking_last: &Ranking, d: usize) -> ModelSet {
    if active.indices.len() <= d {
        return active.clone();
    }
    let mut members = active.indices.clone();
    members.sort_unstable_by(|&a, &b| {
        ranking_last.scores[b]
            .partial_cmp(&ranking_last.scores[a])
            .unwrap()
            .then_with(|| a.cmp(&b))
    });
    members.truncate(d);
    members.sort_unstable();
    ModelSet { indices: members, d }
}

pub fn run_dpd_isis(
    y: &[f64],
    x: &ColMatrix,
    cfg: &IsisConfig,
    opts: &FitOptions,
) -> Result<IsisResult> {
    let p = x.n_cols();
    let n = y.len();
    if y.len() != x.n_rows() {
        return Err(Error::Dimension(format!(
            "response has {} rows, covariates have {}",
            y.len(),
            x.n_rows()
        )));
    }
    if cfg.d < 1 {
        return Err(Error::Argument("target model size d must be at least 1".into()));
    }
    if let Schedule::Fixed(k) = cfg.schedule {
        if k < 1 {
            return Err(Error::Argument("fixed schedule budget must be at least 1".into()));
        }
    }
    if cfg.max_iter < 1 {
        return Err(Error::Argument("max_iter must be at least 1".into()));
    }
    let d = cfg.d.min(p);
    let lambda = cfg.lambda.unwrap_or_else(|| default_lambda(n, p));

    let mut working = y.to_vec();
    let mut available: Vec<usize> = (0..p).collect();
    let mut union_cols: Vec<usize> = Vec::new();
    // most recent marginal score seen for each column; iteration 1 scores all
    let mut last_scores = vec![0.0; p];
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut stop = StopReason::MaxIter;

    for iter in 1..=cfg.max_iter {
        if available.is_empty() {
            break;
        }
        let prev_active_len = iterations.last().map(|r| r.active.len());
        let budget = match cfg.schedule {
            Schedule::Van => {
                if iter == 1 {
                    (2 * d / 3).max(1)
                } else {
                    d - prev_active_len.unwrap_or(0)
                }
            }
            Schedule::Fixed(k) => k,
        };
        let xsub = x.select_columns(&available);
        let ranking = dpd_sis_scores(&working, &xsub, cfg.alpha, opts)?;
        for (pos, &col) in available.iter().enumerate() {
            last_scores[col] = ranking.scores[pos];
        }
        let picked = select_top(&ranking, budget)?;
        let candidates: Vec<usize> = picked.indices.iter().map(|&pos| available[pos]).collect();
        for &c in &candidates {
            if let Err(slot) = union_cols.binary_search(&c) {
                union_cols.insert(slot, c);
            }
        }
        let refit = fit_penalized_dpd(y, &x.select_columns(&union_cols), cfg.alpha, lambda, opts)?;
        let active: Vec<usize> = support(&refit).into_iter().map(|j| union_cols[j]).collect();
        let active_len = active.len();
        iterations.push(IterationRecord {
            candidates,
            active: active.clone(),
            union: union_cols.clone(),
            refit,
        });
        if active_len >= d {
            stop = StopReason::SizeReached;
            break;
        }
        if prev_active_len == Some(active_len) {
            stop = StopReason::ActiveSetUnchanged;
            break;
        }
        if iter == cfg.max_iter {
            stop = StopReason::MaxIter;
            break;
        }
        let last = iterations.last().expect("just pushed");
        working = compute_residuals(y, &x.select_columns(&last.union), &last.refit)?;
        available = (0..p).filter(|c| !active.contains(c)).collect();
    }

    let last = iterations
        .last()
        .ok_or_else(|| Error::Degenerate("no screening iteration could run".into()))?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_unstable_by(|&a, &b| {
        last_scores[b].partial_cmp(&last_scores[a]).unwrap().then_with(|| a.cmp(&b))
    });
    let last_ranking = Ranking { scores: last_scores, order, method: Method::Dpd(cfg.alpha) };
    let active_set = ModelSet { indices: last.active.clone(), d };
    let (final_fit, final_columns) = if last.active.len() > d {
        let trimmed = trim_to_size(&active_set, &last_ranking, d);
        let fit = fit_penalized_dpd(y, &x.select_columns(&trimmed.indices), cfg.alpha, lambda, opts)?;
        (fit, trimmed.indices)
    } else {
        // restrict the last refit to its support: the restriction is already
        // a stationary point of the reduced problem, so no re-optimization
        let keep = support(&last.refit);
        let fit = PenalizedFit {
            intercept: last.refit.intercept,
            coefficients: keep.iter().map(|&j| last.refit.coefficients[j]).collect(),
            sigma: last.refit.sigma,
            lambda: last.refit.lambda,
            alpha: last.refit.alpha,
            objective: last.refit.objective,
            converged: last.refit.converged,
        };
        (fit, last.active.clone())
    };
    let final_model = ModelSet {
        indices: support(&final_fit).into_iter().map(|j| final_columns[j]).collect(),
        d: cfg.d,
    };
    Ok(IsisResult { final_model, final_fit, final_columns, iterations, stop_reason: stop })
}
