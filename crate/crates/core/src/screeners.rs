//! Per-covariate screening scores and top-d model selection.
//!
//! Every screener returns a `Ranking`: nonnegative scores (degenerate columns
//! score 0), the permutation sorting them in decreasing order with ties broken
//! by ascending column index, and a tag naming the method. Columns are scored
//! independently, so the work parallelizes over covariates; scores are written
//! by index and sorted once, making results identical to serial evaluation.

use rayon::prelude::*;

use crate::data::ColMatrix;
use crate::error::{Error, Result};
use crate::mdpde::{fit_marginal, FitOptions};
use crate::numeric::{mad_scale, mean, median, sample_sd};

/// Screening method tag carried by a `Ranking`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Absolute marginal MDPDE slope at this alpha.
    Dpd(f64),
    /// Absolute Pearson correlation.
    Pearson,
    /// Absolute marginal MLE slope (identical to Dpd(0)).
    Reg,
    /// Absolute Kendall tau-b.
    Rank,
    /// Absolute Spearman correlation.
    Spearman,
    /// Absolute Gnanadesikan-Kettenring robust correlation.
    Gk,
    /// Distance correlation.
    Dcor,
    /// Absolute median of componentwise products after robust standardization.
    Mcp,
}

impl Method {
    /// Stable token used in machine-readable outputs ("dpd:0.3", "pearson").
    pub fn token(&self) -> String {
        match self {
            Method::Dpd(a) => format!("dpd:{a}"),
            Method::Pearson => "pearson".into(),
            Method::Reg => "reg".into(),
            Method::Rank => "rank".into(),
            Method::Spearman => "spearman".into(),
            Method::Gk => "gk".into(),
            Method::Dcor => "dcor".into(),
            Method::Mcp => "mcp".into(),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Dpd(a) => write!(f, "dpd({a})"),
            _ => write!(f, "{}", self.token()),
        }
    }
}

/// Scores per covariate plus the induced permutation.
#[derive(Debug, Clone)]
pub struct Ranking {
    /// Nonnegative score per covariate (0 for degenerate columns).
    pub scores: Vec<f64>,
    /// Column indices (0-based) sorted by descending score, ties by index.
    pub order: Vec<usize>,
    pub method: Method,
}

impl Ranking {
    /// 1-based rank of covariate j under this ranking.
    pub fn rank_of(&self, j: usize) -> usize {
        self.order.iter().position(|&k| k == j).expect("covariate index out of range") + 1
    }
}

/// The selected top-d covariate set, in ranked order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSet {
    pub indices: Vec<usize>,
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StandardizeMode {
    Classical,
    Robust,
    None,
}

/// A standardized matrix with per-column degeneracy flags.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub x: ColMatrix,
    /// True where the column is constant under the chosen scale estimator;
    /// such columns pass through unchanged.
    pub degenerate: Vec<bool>,
}

/// Centers and scales every column; degenerate columns are flagged and left
/// unchanged rather than rejected.
pub fn standardize_columns(x: &ColMatrix, mode: StandardizeMode) -> Standardized {
    let p = x.n_cols();
    let mut out = x.clone();
    let mut degenerate = vec![false; p];
    for j in 0..p {
        let col = out.col_mut(j);
        match mode {
            StandardizeMode::Classical => {
                let m = mean(col);
                let s = sample_sd(col);
                if s > 0.0 {
                    for v in col.iter_mut() {
                        *v = (*v - m) / s;
                    }
                } else {
                    degenerate[j] = true;
                }
            }
            StandardizeMode::Robust => {
                let m = median(col);
                let s = mad_scale(col);
                if s > 0.0 {
                    for v in col.iter_mut() {
                        *v = (*v - m) / s;
                    }
                } else {
                    degenerate[j] = true;
                }
            }
            StandardizeMode::None => {
                let (lo, hi) = min_max(col);
                if lo == hi {
                    degenerate[j] = true;
                }
            }
        }
    }
    Standardized { x: out, degenerate }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo, hi)
}

fn validate_inputs(y: &[f64], x: &ColMatrix) -> Result<()> {
    if y.len() != x.n_rows() {
        return Err(Error::Dimension(format!(
            "response has {} rows, covariates have {}",
            y.len(),
            x.n_rows()
        )));
    }
    if !y.iter().all(|v| v.is_finite()) || !x.is_finite() {
        return Err(Error::Data("screening input contains non-finite values".into()));
    }
    Ok(())
}

/// Sorts scores into a Ranking (descending score, ties by ascending index).
fn build_ranking(scores: Vec<f64>, method: Method) -> Ranking {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap().then_with(|| a.cmp(&b))
    });
    Ranking { scores, order, method }
}

/// DPD-SIS scores: absolute marginal MDPDE slope per covariate. The matrix is
/// used as given; standardize first if slopes should be comparable as
/// correlations.
pub fn dpd_sis_scores(y: &[f64], x: &ColMatrix, alpha: f64, opts: &FitOptions) -> Result<Ranking> {
    validate_inputs(y, x)?;
    let scores: Result<Vec<f64>> = (0..x.n_cols())
        .into_par_iter()
        .map(|j| match fit_marginal(y, x.col(j), alpha, opts) {
            Ok(fit) => Ok(fit.params.beta.abs()),
            Err(Error::Degenerate(_)) => Ok(0.0),
            Err(e) => Err(e),
        })
        .collect();
    Ok(build_ranking(scores?, Method::Dpd(alpha)))
}

/// Marginal-MLE screening; same as `dpd_sis_scores` at alpha = 0.
pub fn reg_sis_scores(y: &[f64], x: &ColMatrix, opts: &FitOptions) -> Result<Ranking> {
    let mut r = dpd_sis_scores(y, x, 0.0, opts)?;
    r.method = Method::Reg;
    Ok(r)
}

/// Absolute Pearson correlation per covariate.
pub fn pearson_scores(y: &[f64], x: &ColMatrix) -> Result<Ranking> {
    validate_inputs(y, x)?;
    let scores: Vec<f64> = (0..x.n_cols())
        .into_par_iter()
        .map(|j| pearson_abs(y, x.col(j)))
        .collect();
    Ok(build_ranking(scores, Method::Pearson))
}

fn pearson_abs(y: &[f64], x: &[f64]) -> f64 {
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mx = x.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&yi, &xi) in y.iter().zip(x) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).abs().min(1.0)
}

/// Absolute Kendall tau-b per covariate (O(n log n) inversion counting).
pub fn rank_scores(y: &[f64], x: &ColMatrix) -> Result<Ranking> {
    validate_inputs(y, x)?;
    let scores: Vec<f64> = (0..x.n_cols())
        .into_par_iter()
        .map(|j| kendall_tau_b(x.col(j), y).abs())
        .collect();
    Ok(build_ranking(scores, Method::Rank))
}

/// Kendall tau-b between two vectors, handling ties; 0 when either vector is
/// constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| {
        x[a].partial_cmp(&x[b]).unwrap().then(y[a].partial_cmp(&y[b]).unwrap())
    });
    // tie counts: n1 over x, n2 over y, n3 joint
    let mut n1: u64 = 0;
    let mut n3: u64 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        let t = (j - i) as u64;
        n1 += t * (t - 1) / 2;
        let mut k = i;
        while k < j {
            let mut m = k + 1;
            while m < j && y[idx[m]] == y[idx[k]] {
                m += 1;
            }
            let t2 = (m - k) as u64;
            n3 += t2 * (t2 - 1) / 2;
            k = m;
        }
        i = j;
    }
    let mut ys: Vec<f64> = y.to_vec();
    ys.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let mut n2: u64 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && ys[j] == ys[i] {
            j += 1;
        }
        let t = (j - i) as u64;
        n2 += t * (t - 1) / 2;
        i = j;
    }
    // discordant pairs = inversions of y in (x, y) order
    let mut seq: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let q = count_inversions(&mut seq, &mut buf);
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let den = ((n0 - n1) as f64).sqrt() * ((n0 - n2) as f64).sqrt();
    if den == 0.0 {
        return 0.0;
    }
    // pairs untied in both = n0 + n3 - n1 - n2 by inclusion-exclusion;
    // summed in this order every intermediate value stays nonnegative
    let num = (n0 + n3 - n1 - n2) as f64 - 2.0 * q as f64;
    num / den
}

/// Counts strict inversions (a[i] > a[j], i < j) by merge sort.
fn count_inversions(a: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = a.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = a.split_at_mut(mid);
    let mut inv = count_inversions(left, buf) + count_inversions(right, buf);
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            buf[k] = left[i];
            i += 1;
        } else {
            inv += (left.len() - i) as u64;
            buf[k] = right[j];
            j += 1;
        }
        k += 1;
    }
    while i < left.len() {
        buf[k] = left[i];
        i += 1;
        k += 1;
    }
    while j < right.len() {
        buf[k] = right[j];
        j += 1;
        k += 1;
    }
    a.copy_from_slice(&buf[..n]);
    inv
}

/// Absolute Spearman correlation (Pearson on average ranks).
pub fn spearman_scores(y: &[f64], x: &ColMatrix) -> Result<Ranking> {
    validate_inputs(y, x)?;
    let ry = average_ranks(y);
    let scores: Vec<f64> = (0..x.n_cols())
        .into_par_iter()
        .map(|j| pearson_abs(&ry, &average_ranks(x.col(j))))
        .collect();
    Ok(build_ranking(scores, Method::Spearman))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1..=j
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Gnanadesikan-Kettenring robust correlation scores.
pub fn gk_scores(y: &[f64], x: &ColMatrix) -> Result<Ranking> {
    validate_inputs(y, x)?;
    let sy = mad_scale(y);
    let scores: Vec<f64> = (0..x.n_cols())
        .into_par_iter()
        .map(|j| {
            if sy == 0.0 {
                return 0.0;
            }
            let col = x.col(j);
            let sx = mad_scale(col);
            if sx == 0.0 {
                return 0.0;
            }
            let n = col.len();
            let mut sum = Vec::with_capacity(n);
            let mut diff = Vec::with_capacity(n);
            for i in 0..n {
                let u = y[i] / sy;
                let v = col[i] / sx;
                sum.push(u + v);
                diff.push(u - v);
            }
            let sp = mad_scale(&sum);
            let sm = mad_scale(&diff);
            let denom = sp * sp + sm * sm;
            if denom == 0.0 {
                return 0.0;
            }
            let r = ((sp * sp - sm * sm) / denom).clamp(-1.0, 1.0);
            r.abs()
        })
        .collect();
    Ok(build_ranking(scores, Method::Gk))
}

/// Distance correlation scores via the O(n^2) double-centering formula.
pub fn dcor_scores(y: &[f64], x: &ColMatrix) -> Result<Ranking> {
    validate_inputs(y, x)?;
    let centered_y = CenteredDist::new(y);
    let scores: Vec<f64> = (0..x.n_cols())
        .into_par_iter()
        .map(|j| centered_y.dcor_with(x.col(j)))
        .collect();
    Ok(build_ranking(scores, Method::Dcor))
}

/// Double-centered distance matrix of one vector, kept to pair against many
/// covariates without recomputation.
struct CenteredDist {
    b: Vec<f64>, // n x n row-major centered matrix
    dvar: f64,
    n: usize,
}

impl CenteredDist {
    fn new(v: &[f64]) -> Self {
        let n = v.len();
        let mut b = vec![0.0; n * n];
        let mut row = vec![0.0; n];
        let mut grand = 0.0;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                let d = (v[i] - v[j]).abs();
                b[i * n + j] = d;
                s += d;
            }
            row[i] = s / n as f64;
            grand += s;
        }
        grand /= (n * n) as f64;
        let mut dvar = 0.0;
        for i in 0..n {
            for j in 0..n {
                let c = b[i * n + j] - row[i] - row[j] + grand;
                b[i * n + j] = c;
                dvar += c * c;
            }
        }
        dvar /= (n * n) as f64;
        CenteredDist { b, dvar, n }
    }

    /// Distance correlation of the stored vector with `v`.
    fn dcor_with(&self, v: &[f64]) -> f64 {
        let n = self.n;
        if self.dvar <= 0.0 {
            return 0.0;
        }
        let mut row = vec![0.0; n];
        let mut grand = 0.0;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += (v[i] - v[j]).abs();
            }
            row[i] = s / n as f64;
            grand += s;
        }
        grand /= (n * n) as f64;
        let mut dcov2 = 0.0;
        let mut dvarx = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = (v[i] - v[j]).abs() - row[i] - row[j] + grand;
                dcov2 += a * self.b[i * n + j];
                dvarx += a * a;
            }
        }
        dcov2 /= (n * n) as f64;
        dvarx /= (n * n) as f64;
        if dvarx <= 0.0 {
            return 0.0;
        }
        let denom = (dvarx * self.dvar).sqrt();
        (dcov2.max(0.0) / denom).sqrt().min(1.0)
    }
}

/// Median-of-componentwise-products scores on robustly standardized data.
pub fn mcp_scores(y: &[f64], x: &ColMatrix) -> Result<Ranking> {
    validate_inputs(y, x)?;
    let my = median(y);
    let sy = mad_scale(y);
    let scores: Vec<f64> = (0..x.n_cols())
        .into_par_iter()
        .map(|j| {
            if sy == 0.0 {
                return 0.0;
            }
            let col = x.col(j);
            let mx = median(col);
            let sx = mad_scale(col);
            if sx == 0.0 {
                return 0.0;
            }
            let prod: Vec<f64> = y
                .iter()
                .zip(col)
                .map(|(&yi, &xi)| (yi - my) / sy * ((xi - mx) / sx))
                .collect();
            median(&prod).abs()
        })
        .collect();
    Ok(build_ranking(scores, Method::Mcp))
}

/// Routes to the scorer for `method`; `opts` only matters for the fitted
/// methods (dpd, reg).
pub fn rank_by_method(
    y: &[f64],
    x: &ColMatrix,
    method: Method,
    opts: &FitOptions,
) -> Result<Ranking> {
    match method {
        Method::Dpd(alpha) => dpd_sis_scores(y, x, alpha, opts),
        Method::Reg => reg_sis_scores(y, x, opts),
        Method::Pearson => pearson_scores(y, x),
        Method::Rank => rank_scores(y, x),
        Method::Spearman => spearman_scores(y, x),
        Method::Gk => gk_scores(y, x),
        Method::Dcor => dcor_scores(y, x),
        Method::Mcp => mcp_scores(y, x),
    }
}

/// First min(d, p) covariates of the ranking.
pub fn select_top(ranking: &Ranking, d: usize) -> Result<ModelSet> {
    if d < 1 {
        return Err(Error::Argument("model size d must be at least 1".into()));
    }
    let take = d.min(ranking.order.len());
    Ok(ModelSet { indices: ranking.order[..take].to_vec(), d })
}
