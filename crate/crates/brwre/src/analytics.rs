//! Exact annealed quantities: kappa(theta), theta*, speed v, sigma_Q^2,
//! sigma_A^2, lambda and phi, plus the speed-inequality check. Everything here
//! is a finite probability-weighted sum over environment atoms; no sampling.

use serde::{Deserialize, Serialize};

use crate::env::EnvironmentModel;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnealedSummary {
    pub theta_star: f64,
    pub v: f64,
    pub sigma_q2: f64,
    pub sigma_a2: f64,
    pub gamma_hat: f64,
    pub lambda: f64,
    pub phi: f64,
}

#[derive(Clone, Debug)]
pub struct AnnealedLogLaplace {
    pub kappa: f64,
    pub d1: f64,
    pub d2: f64,
    /// per-atom (kappa, kappa', kappa'')
    pub per_atom: Vec<(f64, f64, f64)>,
}

/// Probability-weighted kappa(theta) = E kappa_1(theta) and derivatives.
pub fn annealed_log_laplace(model: &EnvironmentModel, theta: f64) -> Result<AnnealedLogLaplace> {
    let mut per_atom = Vec::with_capacity(model.atoms.len());
    let (mut k, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for (i, (p, law)) in model.atoms.iter().enumerate() {
        let ka = law
            .log_laplace(theta)
            .map_err(|e| Error::Numeric(format!("atom {i}: {e}")))?;
        let (a1, a2) = law
            .log_laplace_derivatives(theta)
            .map_err(|e| Error::Numeric(format!("atom {i}: {e}")))?;
        per_atom.push((ka, a1, a2));
        k += p * ka;
        d1 += p * a1;
        d2 += p * a2;
    }
    Ok(AnnealedLogLaplace { kappa: k, d1, d2, per_atom })
}

fn g(model: &EnvironmentModel, theta: f64) -> Result<f64> {
    let a = annealed_log_laplace(model, theta)?;
    Ok(theta * a.d1 - a.kappa)
}

/// Root of g(theta) = theta kappa'(theta) - kappa(theta). g is nondecreasing
/// (g' = theta kappa''), so bisection on an expanded bracket is safe.
pub fn solve_theta_star(model: &EnvironmentModel) -> Result<f64> {
    model.validate()?;
    solve_theta_star_for(|theta| g(model, theta), model.displacement_scale())
}

/// Generic solver over any nondecreasing g; `scale` caps the bracket at
/// theta_max = max(50, 700/scale).
pub fn solve_theta_star_for(
    mut gf: impl FnMut(f64) -> Result<f64>,
    scale: f64,
) -> Result<f64> {
    let theta_max = (700.0 / scale.max(1e-6)).max(50.0);
    let mut lo = 1e-8;
    let glo = gf(lo)?;
    if glo > 0.0 {
        return Err(Error::Config("g(0+) > 0: degenerate model".into()));
    }
    let mut hi = 1.0;
    loop {
        match gf(hi) {
            // strictly positive: boundary-case laws have g -> 0^- and reach
            // exact floating-point zero once kappa'' underflows
            Ok(v) if v > 0.0 => break,
            Ok(_) => {
                if hi >= theta_max {
                    return Err(Error::NoInteriorMinimizer(format!(
                        "g(theta) < 0 up to theta = {hi:.3e}"
                    )));
                }
                lo = hi;
                hi = (hi * 2.0).min(theta_max);
            }
            Err(_) => {
                return Err(Error::NoInteriorMinimizer(format!(
                    "kappa not finite before a root was bracketed (theta = {hi:.3e})"
                )))
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = gf(mid)?;
        if gm.abs() < 1e-13 || (hi - lo) < 1e-14 * mid.max(1.0) {
            return Ok(mid);
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact atom-sum summary. `gamma_hat` is the gamma(sigma_A/sigma_Q) estimate
/// (pass 0.5 exactly when sigma_A = 0).
pub fn annealed_summary(model: &EnvironmentModel, gamma_hat: f64) -> Result<AnnealedSummary> {
    let theta = solve_theta_star(model)?;
    let a = annealed_log_laplace(model, theta)?;
    let sigma_q2 = theta * theta * a.d2;
    if sigma_q2 <= 0.0 {
        return Err(Error::Config("sigma_Q^2 = 0: degenerate model".into()));
    }
    // Var over atoms of theta kappa_1'(theta) - kappa_1(theta)
    let mut mean = 0.0;
    for ((p, _), (ka, a1, _)) in model.atoms.iter().zip(&a.per_atom) {
        mean += p * (theta * a1 - ka);
    }
    let mut var = 0.0;
    for ((p, _), (ka, a1, _)) in model.atoms.iter().zip(&a.per_atom) {
        let x = theta * a1 - ka - mean;
        var += p * x * x;
    }
    let lambda = 2.0 * gamma_hat + 0.5;
    Ok(AnnealedSummary {
        theta_star: theta,
        v: a.d1,
        sigma_q2,
        sigma_a2: var,
        gamma_hat,
        lambda,
        phi: lambda / theta,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpeedInequality {
    pub v: f64,
    pub mean_atom_speed: f64,
    pub per_atom_speed: Vec<f64>,
    pub strict: bool,
}

/// v = kappa'(theta*) versus E(v_1) where v_1 is the per-atom speed
/// inf kappa_atom / theta (each atom solved on its own).
pub fn speed_inequality_report(model: &EnvironmentModel) -> Result<SpeedInequality> {
    let summary = annealed_summary(model, 0.5)?;
    let mut per_atom_speed = Vec::with_capacity(model.atoms.len());
    let mut mean = 0.0;
    for (i, (p, law)) in model.atoms.iter().enumerate() {
        let gi = |theta: f64| {
            let k = law.log_laplace(theta)?;
            let (d1, _) = law.log_laplace_derivatives(theta)?;
            Ok(theta * d1 - k)
        };
        let ti = solve_theta_star_for(gi, law.displacement_scale())
            .map_err(|e| Error::NoInteriorMinimizer(format!("atom {i}: {e}")))?;
        let (vi, _) = law.log_laplace_derivatives(ti)?;
        per_atom_speed.push(vi);
        mean += p * vi;
    }
    Ok(SpeedInequality {
        v: summary.v,
        mean_atom_speed: mean,
        per_atom_speed,
        strict: summary.v - mean > 1e-10,
    })
}
