//! Weighted least-squares fits: the common output of every exponent
//! experiment ("lim log p / log n" statements realized as finite regressions).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r2: f64,
    pub points_used: usize,
    pub dropped: usize,
}

/// Weighted straight-line fit y = a + b x with weights w (1/variance).
/// Slope stderr by the delta method: 1/sqrt(sum w (x - xbar)^2).
pub fn weighted_linear_fit(pts: &[(f64, f64, f64)]) -> Result<ExponentFit> {
    let usable: Vec<_> = pts.iter().filter(|(_, _, w)| *w > 0.0).copied().collect();
    let dropped = pts.len() - usable.len();
    if usable.len() < 3 {
        return Err(Error::UnderResolved(format!(
            "{} usable points, need >= 3",
            usable.len()
        )));
    }
    let sw: f64 = usable.iter().map(|(_, _, w)| w).sum();
    let xb: f64 = usable.iter().map(|(x, _, w)| w * x).sum::<f64>() / sw;
    let yb: f64 = usable.iter().map(|(_, y, w)| w * y).sum::<f64>() / sw;
    let sxx: f64 = usable.iter().map(|(x, _, w)| w * (x - xb) * (x - xb)).sum();
    if sxx <= 0.0 {
        return Err(Error::UnderResolved("degenerate abscissa".into()));
    }
    let sxy: f64 = usable.iter().map(|(x, y, w)| w * (x - xb) * (y - yb)).sum();
    let slope = sxy / sxx;
    let intercept = yb - slope * xb;
    let syy: f64 = usable.iter().map(|(_, y, w)| w * (y - yb) * (y - yb)).sum();
    let ss_res: f64 = usable
        .iter()
        .map(|(x, y, w)| {
            let e = y - intercept - slope * x;
            w * e * e
        })
        .sum();
    let r2 = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(ExponentFit {
        slope,
        intercept,
        slope_stderr: (1.0 / sxx).sqrt(),
        r2,
        points_used: usable.len(),
        dropped,
    })
}

/// Log-log regression over (n, estimate, stderr) points. Zero or negative
/// estimates are dropped; weights are 1/(relative stderr)^2 since
/// Var(log p) ~ (se/p)^2.
pub fn fit_exponent(points: &[(f64, f64, f64)]) -> Result<ExponentFit> {
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(n, p, se)| {
            if p > 0.0 && n > 0.0 {
                let rel = if se > 0.0 { se / p } else { 1e-9 };
                (n.ln(), p.ln(), 1.0 / (rel * rel))
            } else {
                (0.0, 0.0, 0.0) // dropped by the weight filter
            }
        })
        .collect();
    weighted_linear_fit(&pts)
}
