//! Marginal minimum density power divergence estimation.
//!
//! The marginal model is y = gamma + beta * x + eps with eps ~ N(0, sigma^2).
//! For alpha > 0 the per-observation loss is
//!
//!   l_a(y, eta, sigma) = sigma^-a (2 pi)^(-a/2) (1/sqrt(1+a)
//!                        - ((1+a)/a) exp(-a (y-eta)^2 / (2 sigma^2))) + 1/a
//!
//! and for alpha = 0 it is the negative log normal density, which is the
//! alpha -> 0 limit of the expression above up to the constant 1/a. Averaging
//! the loss over observations gives the estimation objective; its minimizer in
//! (gamma, beta, sigma) is the marginal MDPDE, which coincides with the MLE at
//! alpha = 0 and downweights large residuals exponentially for alpha > 0.

use crate::error::{Error, Result};
use crate::numeric::{mad, mad_scale, median, sample_sd};

pub(crate) const LN_2PI: f64 = 1.837877066409345483560659472811;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalParams {
    pub gamma: f64,
    pub beta: f64,
    pub sigma: f64,
}

/// Which multi-start point produced the returned fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StartPoint {
    Ols,
    Robust,
}

#[derive(Debug, Clone)]
pub struct MarginalFit {
    pub params: MarginalParams,
    pub alpha: f64,
    /// Attained mean loss.
    pub objective: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub start_used: StartPoint,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Lower clamp for sigma. `None` selects 1e-8 * MAD(y), or 1e-8 when the
    /// MAD vanishes.
    pub sigma_floor: Option<f64>,
    pub multi_start: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { grad_tol: 1e-8, max_iter: 500, sigma_floor: None, multi_start: true }
    }
}

impl FitOptions {
    pub fn resolve_sigma_floor(&self, y: &[f64]) -> f64 {
        match self.sigma_floor {
            Some(f) => f,
            None => {
                let m = mad(y);
                if m > 0.0 {
                    1e-8 * m
                } else {
                    1e-8
                }
            }
        }
    }
}

fn check_scalar_domain(sigma: f64, alpha: f64) -> Result<()> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Domain(format!("alpha must be nonnegative, got {alpha}")));
    }
    Ok(())
}

/// Per-observation DPD loss for the normal model.
pub fn dpd_loss(y: f64, eta: f64, sigma: f64, alpha: f64) -> Result<f64> {
    check_scalar_domain(sigma, alpha)?;
    let u = y - eta;
    if alpha == 0.0 {
        return Ok(0.5 * LN_2PI + sigma.ln() + u * u / (2.0 * sigma * sigma));
    }
    // c * sigma^-a = exp(-a (ln sigma + ln(2 pi)/2))
    let a = alpha;
    let pref = (-a * (sigma.ln() + 0.5 * LN_2PI)).exp();
    let e = (-a * u * u / (2.0 * sigma * sigma)).exp();
    Ok(pref * ((1.0 + a).sqrt().recip() - (1.0 + a) / a * e) + 1.0 / a)
}

fn check_vectors(y: &[f64], x: &[f64]) -> Result<()> {
    if y.len() != x.len() {
        return Err(Error::Dimension(format!(
            "response length {} != covariate length {}",
            y.len(),
            x.len()
        )));
    }
    if y.len() < 3 {
        return Err(Error::Argument(format!("need at least 3 observations, got {}", y.len())));
    }
    Ok(())
}

/// Mean DPD loss over observations with eta_i = gamma + beta x_i.
pub fn dpd_objective(y: &[f64], x: &[f64], params: &MarginalParams, alpha: f64) -> Result<f64> {
    check_vectors(y, x)?;
    check_scalar_domain(params.sigma, alpha)?;
    let prob = MarginalProblem { y, x, weights: None, alpha };
    Ok(prob.eval(params.gamma, params.beta, params.sigma.ln()).0)
}

/// Analytic gradient of `dpd_objective` in (gamma, beta, log sigma).
pub fn dpd_gradient(y: &[f64], x: &[f64], params: &MarginalParams, alpha: f64) -> Result<[f64; 3]> {
    check_vectors(y, x)?;
    check_scalar_domain(params.sigma, alpha)?;
    let prob = MarginalProblem { y, x, weights: None, alpha };
    Ok(prob.eval(params.gamma, params.beta, params.sigma.ln()).1)
}

/// Mean DPD loss of a residual vector at log-scale s.
pub(crate) fn mean_loss(u: &[f64], s: f64, alpha: f64) -> f64 {
    let a = alpha;
    let sigma = s.exp();
    let inv_s2 = (sigma * sigma).recip();
    let wn = (u.len() as f64).recip();
    if a == 0.0 {
        let base = 0.5 * LN_2PI + s;
        return u.iter().map(|&ui| wn * (base + 0.5 * ui * ui * inv_s2)).sum();
    }
    let pref = (-a * (s + 0.5 * LN_2PI)).exp();
    let k1 = pref / (1.0 + a).sqrt() + 1.0 / a;
    let k2 = pref * (1.0 + a) / a;
    u.iter().map(|&ui| wn * (k1 - k2 * (-0.5 * a * ui * ui * inv_s2).exp())).sum()
}

/// Derivative of `mean_loss` in s = log sigma.
pub(crate) fn mean_loss_sgrad(u: &[f64], s: f64, alpha: f64) -> f64 {
    let a = alpha;
    let sigma = s.exp();
    let inv_s2 = (sigma * sigma).recip();
    let wn = (u.len() as f64).recip();
    if a == 0.0 {
        return u.iter().map(|&ui| wn * (1.0 - ui * ui * inv_s2)).sum();
    }
    let pref = (-a * (s + 0.5 * LN_2PI)).exp();
    let k1 = pref / (1.0 + a).sqrt() + 1.0 / a;
    let k2 = pref * (1.0 + a) / a;
    u.iter()
        .map(|&ui| {
            let u2s = ui * ui * inv_s2;
            let e = (-0.5 * a * u2s).exp();
            let l = k1 - k2 * e;
            wn * (1.0 - a * l - (1.0 + a) * u2s * pref * e)
        })
        .sum()
}

/// Mean DPD loss plus the per-observation derivative in eta_i, written into
/// `deta` (already divided by n so gradients are plain sums of deta * x).
pub(crate) fn mean_loss_and_deta(u: &[f64], s: f64, alpha: f64, deta: &mut [f64]) -> f64 {
    let a = alpha;
    let sigma = s.exp();
    let inv_s2 = (sigma * sigma).recip();
    let wn = (u.len() as f64).recip();
    let mut f = 0.0;
    if a == 0.0 {
        let base = 0.5 * LN_2PI + s;
        for (i, &ui) in u.iter().enumerate() {
            f += wn * (base + 0.5 * ui * ui * inv_s2);
            deta[i] = wn * (-ui * inv_s2);
        }
        return f;
    }
    let pref = (-a * (s + 0.5 * LN_2PI)).exp();
    let k1 = pref / (1.0 + a).sqrt() + 1.0 / a;
    let k2 = pref * (1.0 + a) / a;
    for (i, &ui) in u.iter().enumerate() {
        let e = (-0.5 * a * ui * ui * inv_s2).exp();
        f += wn * (k1 - k2 * e);
        deta[i] = wn * (-(1.0 + a) * ui * inv_s2 * pref * e);
    }
    f
}

/// Textbook simple-regression solution; sigma is the root mean squared
/// residual, clamped away from zero on perfect fits.
pub fn ols_closed_form(y: &[f64], x: &[f64]) -> Result<MarginalParams> {
    check_vectors(y, x)?;
    if !y.iter().all(|v| v.is_finite()) || !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Data("non-finite values in marginal fit input".into()));
    }
    let n = y.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("constant covariate in simple regression".into()));
    }
    let beta = sxy / sxx;
    let gamma = my - beta * mx;
    let mse = y
        .iter()
        .zip(x)
        .map(|(&yi, &xi)| {
            let r = yi - gamma - beta * xi;
            r * r
        })
        .sum::<f64>()
        / n;
    let floor = FitOptions::default().resolve_sigma_floor(y);
    Ok(MarginalParams { gamma, beta, sigma: mse.sqrt().max(floor) })
}

/// The marginal objective as a smooth function of (gamma, beta, s = log sigma),
/// optionally with per-observation weights summing to 1.
struct MarginalProblem<'a> {
    y: &'a [f64],
    x: &'a [f64],
    weights: Option<&'a [f64]>,
    alpha: f64,
}

impl MarginalProblem<'_> {
    /// Returns (objective, gradient wrt (gamma, beta, s)).
    fn eval(&self, gamma: f64, beta: f64, s: f64) -> (f64, [f64; 3]) {
        let a = self.alpha;
        let sigma = s.exp();
        let inv_s2 = (sigma * sigma).recip();
        let n = self.y.len();
        let wn = (n as f64).recip();
        let mut f = 0.0;
        let mut g = [0.0; 3];
        if a == 0.0 {
            let base = 0.5 * LN_2PI + s;
            for i in 0..n {
                let w = self.weights.map_or(wn, |ws| ws[i]);
                let u = self.y[i] - gamma - beta * self.x[i];
                let u2s = u * u * inv_s2;
                f += w * (base + 0.5 * u2s);
                let deta = -u * inv_s2;
                g[0] += w * deta;
                g[1] += w * deta * self.x[i];
                g[2] += w * (1.0 - u2s);
            }
            return (f, g);
        }
        // pref = sigma^-a (2 pi)^(-a/2); fw = pref * exp(-a u^2/(2 sigma^2))
        // is the alpha-th power of the model density at the residual.
        let pref = (-a * (s + 0.5 * LN_2PI)).exp();
        let k1 = pref / (1.0 + a).sqrt() + 1.0 / a;
        let k2 = pref * (1.0 + a) / a;
        for i in 0..n {
            let w = self.weights.map_or(wn, |ws| ws[i]);
            let u = self.y[i] - gamma - beta * self.x[i];
            let u2s = u * u * inv_s2;
            let e = (-0.5 * a * u2s).exp();
            let l = k1 - k2 * e;
            let fw = pref * e;
            f += w * l;
            let deta = -(1.0 + a) * u * inv_s2 * fw;
            g[0] += w * deta;
            g[1] += w * deta * self.x[i];
            g[2] += w * (1.0 - a * l - (1.0 + a) * u2s * fw);
        }
        (f, g)
    }

    /// Objective only; skips gradient accumulation for line searches.
    fn value(&self, gamma: f64, beta: f64, s: f64) -> f64 {
        let a = self.alpha;
        let sigma = s.exp();
        let inv_s2 = (sigma * sigma).recip();
        let n = self.y.len();
        let wn = (n as f64).recip();
        let mut f = 0.0;
        if a == 0.0 {
            let base = 0.5 * LN_2PI + s;
            for i in 0..n {
                let w = self.weights.map_or(wn, |ws| ws[i]);
                let u = self.y[i] - gamma - beta * self.x[i];
                f += w * (base + 0.5 * u * u * inv_s2);
            }
            return f;
        }
        let pref = (-a * (s + 0.5 * LN_2PI)).exp();
        let k1 = pref / (1.0 + a).sqrt() + 1.0 / a;
        let k2 = pref * (1.0 + a) / a;
        for i in 0..n {
            let w = self.weights.map_or(wn, |ws| ws[i]);
            let u = self.y[i] - gamma - beta * self.x[i];
            let e = (-0.5 * a * u * u * inv_s2).exp();
            f += w * (k1 - k2 * e);
        }
        f
    }
}

/// BFGS with Armijo backtracking over (gamma, beta, s), with s clamped at
/// s_min. Convergence is on the projected gradient so a fit pinned at the
/// sigma floor still reports converged.
fn bfgs(prob: &MarginalProblem, start: [f64; 3], s_min: f64, opts: &FitOptions) -> ([f64; 3], f64, bool, usize) {
    let mut th = start;
    th[2] = th[2].max(s_min);
    let (mut f, mut grad) = prob.eval(th[0], th[1], th[2]);
    let mut h = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut iter = 0;
    let mut stalled = false;
    let mut converged = proj_grad_norm(&grad, th[2], s_min) <= opts.grad_tol;
    while !converged && iter < opts.max_iter {
        iter += 1;
        // d = -H g, reset to steepest descent if not a descent direction
        let mut d = [0.0; 3];
        for r in 0..3 {
            d[r] = -(h[r][0] * grad[0] + h[r][1] * grad[1] + h[r][2] * grad[2]);
        }
        let mut slope = d[0] * grad[0] + d[1] * grad[1] + d[2] * grad[2];
        if !(slope < 0.0) {
            h = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            d = [-grad[0], -grad[1], -grad[2]];
            slope = -(grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2]);
        }
        let mut t = 1.0;
        let mut accepted = false;
        let mut th_new = th;
        for _ in 0..60 {
            th_new = [th[0] + t * d[0], th[1] + t * d[1], (th[2] + t * d[2]).max(s_min)];
            let step = [th_new[0] - th[0], th_new[1] - th[1], th_new[2] - th[2]];
            let gstep = grad[0] * step[0] + grad[1] * step[1] + grad[2] * step[2];
            if gstep >= 0.0 {
                // the clamp removed all descent; shrink and retry
                t *= 0.5;
                continue;
            }
            let f_try = prob.value(th_new[0], th_new[1], th_new[2]);
            // Sufficient decrease, or any non-increase once the predicted
            // decrease is below float resolution (endgame polishing).
            if f_try <= f + 1e-4 * gstep
                || (gstep.abs() <= 1e-12 * (1.0 + f.abs()) && f_try <= f)
            {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let _ = slope;
        if !accepted {
            // Retry once from the same point with a fresh steepest-descent
            // metric; a second consecutive stall means no progress is
            // possible at float resolution.
            if stalled {
                break;
            }
            stalled = true;
            h = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            continue;
        }
        stalled = false;
        let (f_new, grad_new) = prob.eval(th_new[0], th_new[1], th_new[2]);
        let sk = [th_new[0] - th[0], th_new[1] - th[1], th_new[2] - th[2]];
        let yk = [grad_new[0] - grad[0], grad_new[1] - grad[1], grad_new[2] - grad[2]];
        let sy = sk[0] * yk[0] + sk[1] * yk[1] + sk[2] * yk[2];
        if sy > 1e-12 * norm3(&sk) * norm3(&yk) {
            // BFGS inverse update H <- (I - r s y') H (I - r y s') + r s s'
            let rho = 1.0 / sy;
            let mut hy = [0.0; 3];
            for r in 0..3 {
                hy[r] = h[r][0] * yk[0] + h[r][1] * yk[1] + h[r][2] * yk[2];
            }
            let yhy = yk[0] * hy[0] + yk[1] * hy[1] + yk[2] * hy[2];
            for r in 0..3 {
                for c in 0..3 {
                    h[r][c] += rho * ((1.0 + rho * yhy) * sk[r] * sk[c] - hy[r] * sk[c] - sk[r] * hy[c]);
                }
            }
        }
        th = th_new;
        f = f_new;
        grad = grad_new;
        converged = proj_grad_norm(&grad, th[2], s_min) <= opts.grad_tol;
    }
    (th, f, converged, iter)
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn proj_grad_norm(grad: &[f64; 3], s: f64, s_min: f64) -> f64 {
    let gs = if s <= s_min && grad[2] > 0.0 { 0.0 } else { grad[2] };
    grad[0].abs().max(grad[1].abs()).max(gs.abs())
}

fn robust_start(y: &[f64], floor: f64) -> [f64; 3] {
    let gamma = median(y);
    let scale = mad_scale(y);
    let sigma = if scale > 0.0 {
        scale
    } else {
        let sd = sample_sd(y);
        if sd > 0.0 {
            sd
        } else {
            1.0
        }
    };
    [gamma, 0.0, sigma.max(floor).ln()]
}

fn fit_from_starts(
    prob: &MarginalProblem,
    starts: &[([f64; 3], StartPoint)],
    s_min: f64,
    opts: &FitOptions,
) -> MarginalFit {
    let mut best: Option<(f64, [f64; 3], bool, usize, StartPoint)> = None;
    for &(start, label) in starts {
        let (th, f, conv, it) = bfgs(prob, start, s_min, opts);
        let better = match &best {
            None => true,
            // on a float-level tie keep the converged run
            Some((bf, _, bconv, ..)) => {
                if (f - bf).abs() <= 1e-10 * (1.0 + bf.abs()) {
                    conv && !bconv
                } else {
                    f < *bf
                }
            }
        };
        if better {
            best = Some((f, th, conv, it, label));
        }
    }
    let (f, th, conv, it, label) = best.unwrap();
    MarginalFit {
        params: MarginalParams { gamma: th[0], beta: th[1], sigma: th[2].exp() },
        alpha: prob.alpha,
        objective: f,
        converged: conv,
        n_iter: it,
        start_used: label,
    }
}

/// Marginal MDPDE of (gamma, beta, sigma) at the given alpha.
pub fn fit_marginal(y: &[f64], x: &[f64], alpha: f64, opts: &FitOptions) -> Result<MarginalFit> {
    check_vectors(y, x)?;
    if !(alpha >= 0.0) {
        return Err(Error::Domain(format!("alpha must be nonnegative, got {alpha}")));
    }
    let ols = ols_closed_form(y, x)?; // also validates finiteness and non-constant x
    let floor = opts.resolve_sigma_floor(y);
    let s_min = floor.ln();
    let prob = MarginalProblem { y, x, weights: None, alpha };
    let mut starts = vec![([ols.gamma, ols.beta, ols.sigma.max(floor).ln()], StartPoint::Ols)];
    if opts.multi_start {
        starts.push((robust_start(y, floor), StartPoint::Robust));
    }
    Ok(fit_from_starts(&prob, &starts, s_min, opts))
}

/// Weighted variant used by the finite-contamination diagnostics: weights must
/// be positive and sum to 1.
pub(crate) fn fit_marginal_weighted(
    y: &[f64],
    x: &[f64],
    weights: &[f64],
    alpha: f64,
    opts: &FitOptions,
) -> Result<MarginalFit> {
    check_vectors(y, x)?;
    if weights.len() != y.len() {
        return Err(Error::Dimension("weights length differs from data".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-8 || weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Argument("weights must be positive and sum to 1".into()));
    }
    let ols = ols_closed_form(y, x)?;
    let floor = opts.resolve_sigma_floor(y);
    let s_min = floor.ln();
    let prob = MarginalProblem { y, x, weights: Some(weights), alpha };
    let mut starts = vec![([ols.gamma, ols.beta, ols.sigma.max(floor).ln()], StartPoint::Ols)];
    if opts.multi_start {
        starts.push((robust_start(y, floor), StartPoint::Robust));
    }
    Ok(fit_from_starts(&prob, &starts, s_min, opts))
}

/// Intercept-plus-scale fit (no covariate); used for fully shrunk penalized
/// fits and as a reference for large-lambda behavior.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn fit_location(y: &[f64], alpha: f64, opts: &FitOptions) -> Result<(f64, f64, f64)> {
    if y.len() < 3 {
        return Err(Error::Argument(format!("need at least 3 observations, got {}", y.len())));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::Data("non-finite values in location fit input".into()));
    }
    let zeros = vec![0.0; y.len()];
    let floor = opts.resolve_sigma_floor(y);
    let s_min = floor.ln();
    let prob = MarginalProblem { y, x: &zeros, weights: None, alpha };
    // With x identically zero the beta coordinate has zero gradient and stays
    // at its start; both starts set beta = 0.
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / n).sqrt();
    let starts = [
        ([my, 0.0, sd.max(floor).ln()], StartPoint::Ols),
        (robust_start(y, floor), StartPoint::Robust),
    ];
    let fit = fit_from_starts(&prob, &starts, s_min, opts);
    Ok((fit.params.gamma, fit.params.sigma, fit.objective))
}
