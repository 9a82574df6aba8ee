//! Monte Carlo estimation of the exponent gamma(beta): the decay rate of
//! P(B_s + 1 >= beta W_s for all s <= t) over two independent Brownian
//! motions, Euler-discretized. Also the backward-barrier variant
//! beta (W_t - W_{t-s}).

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_exponent, ExponentFit};
use crate::parallel::Executor;
use crate::rng::{self, STREAM_GAMMA_B, STREAM_GAMMA_W};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub beta: f64,
    pub gamma_hat: f64,
    pub stderr: f64,
    pub per_w: Vec<ExponentFit>,
    pub dt: f64,
    pub t_grid: Vec<f64>,
    /// zero-probability cells among the retained (post-transient) cells
    pub dropped_cells: usize,
    pub total_cells: usize,
    pub under_resolved: bool,
}

fn validate(beta: f64, t_grid: &[f64], dt: f64, n_w: usize, n_b: usize) -> Result<usize> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(Error::Config("beta must be >= 0".into()));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
        return Err(Error::Config("t grid must be positive and strictly increasing".into()));
    }
    if !(dt > 0.0) || n_w < 1 || n_b < 1 {
        return Err(Error::Config("require dt > 0, nW >= 1, nB >= 1".into()));
    }
    let m_max = (t_grid[t_grid.len() - 1] / dt).round() as usize;
    if m_max > 100_000_000 {
        return Err(Error::Resource(format!("{m_max} Euler steps exceed the memory budget")));
    }
    Ok(m_max)
}

/// Logarithmically spaced time grid.
pub fn log_grid(t_min: f64, t_max: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && t_max > t_min && t_min > 0.0);
    (0..points)
        .map(|i| t_min * (t_max / t_min).powf(i as f64 / (points - 1) as f64))
        .collect()
}

/// Index below which grid cells are treated as transient (smallest 20%).
fn transient_cut(len: usize) -> usize {
    (len as f64 * 0.2).floor() as usize
}

fn pool(
    beta: f64,
    t_grid: &[f64],
    dt: f64,
    per_w_raw: Vec<(Option<ExponentFit>, usize, usize)>,
) -> Result<GammaEstimate> {
    let mut per_w = Vec::new();
    let (mut dropped, mut total) = (0, 0);
    for (fit, d, t) in per_w_raw {
        dropped += d;
        total += t;
        if let Some(f) = fit {
            per_w.push(f);
        }
    }
    if per_w.is_empty() {
        return Err(Error::UnderResolved("no W replicate produced a usable fit".into()));
    }
    let gammas: Vec<f64> = per_w.iter().map(|f| -f.slope).collect();
    let k = gammas.len() as f64;
    let mean = gammas.iter().sum::<f64>() / k;
    let var = gammas.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (k - 1.0).max(1.0);
    let stderr = (var / k).sqrt().max(1e-12);
    Ok(GammaEstimate {
        beta,
        gamma_hat: mean,
        stderr,
        per_w,
        dt,
        t_grid: t_grid.to_vec(),
        dropped_cells: dropped,
        total_cells: total,
        under_resolved: dropped as f64 > 0.2 * total as f64,
    })
}

fn fit_one_w(t_grid: &[f64], surv: &[usize], n_b: usize) -> (Option<ExponentFit>, usize, usize) {
    let cut = transient_cut(t_grid.len());
    let mut pts = Vec::new();
    let mut dropped = 0;
    let mut total = 0;
    for (i, &t) in t_grid.iter().enumerate().skip(cut) {
        total += 1;
        let p = surv[i] as f64 / n_b as f64;
        if p == 0.0 {
            dropped += 1;
            continue;
        }
        let se = (p * (1.0 - p) / n_b as f64).sqrt();
        pts.push((t, p, se));
    }
    (fit_exponent(&pts).ok(), dropped, total)
}

/// Forward estimator: for each of n_w environment paths W, the survival
/// probability p_W(t) of n_b inner paths B, then the per-W log-log slope.
pub fn estimate_gamma(
    beta: f64,
    t_grid: &[f64],
    dt: f64,
    n_w: usize,
    n_b: usize,
    seed: u64,
    exec: &Executor,
) -> Result<GammaEstimate> {
    let m_max = validate(beta, t_grid, dt, n_w, n_b)?;
    let m_grid: Vec<usize> = t_grid.iter().map(|t| (t / dt).round() as usize).collect();
    let sdt = dt.sqrt();

    let per_w_raw = exec.map(n_w, |iw| {
        // barrier: beta * W_j - 1 at every Euler step
        let mut wrng = rng::stream(seed, &[STREAM_GAMMA_W, iw as u64]);
        let mut bar = vec![0.0f64; m_max + 1];
        let mut w = 0.0;
        for j in 1..=m_max {
            let z: f64 = StandardNormal.sample(&mut wrng);
            w += sdt * z;
            bar[j] = beta * w - 1.0;
        }
        bar[0] = -1.0;

        let mut surv = vec![0usize; m_grid.len()];
        for ib in 0..n_b {
            let mut brng = rng::stream(seed, &[STREAM_GAMMA_B, iw as u64, ib as u64]);
            let mut b = 0.0;
            let mut death = m_max + 1; // first step where B goes below the barrier
            for j in 1..=m_max {
                let z: f64 = StandardNormal.sample(&mut brng);
                b += sdt * z;
                if b < bar[j] {
                    death = j;
                    break;
                }
            }
            for (i, &m) in m_grid.iter().enumerate() {
                if death > m {
                    surv[i] += 1;
                }
            }
        }
        fit_one_w(t_grid, &surv, n_b)
    });
    pool(beta, t_grid, dt, per_w_raw)
}

/// Backward variant: barrier beta (W_t - W_{t-s}) - 1, which depends on the
/// horizon t, so each grid cell gets its own n_b fresh inner paths.
pub fn estimate_gamma_backward(
    beta: f64,
    t_grid: &[f64],
    dt: f64,
    n_w: usize,
    n_b: usize,
    seed: u64,
    exec: &Executor,
) -> Result<GammaEstimate> {
    let m_max = validate(beta, t_grid, dt, n_w, n_b)?;
    let m_grid: Vec<usize> = t_grid.iter().map(|t| (t / dt).round() as usize).collect();
    let sdt = dt.sqrt();

    let per_w_raw = exec.map(n_w, |iw| {
        let mut wrng = rng::stream(seed, &[STREAM_GAMMA_W, iw as u64]);
        let mut wpath = vec![0.0f64; m_max + 1];
        for j in 1..=m_max {
            let z: f64 = StandardNormal.sample(&mut wrng);
            wpath[j] = wpath[j - 1] + sdt * z;
        }

        let mut surv = vec![0usize; m_grid.len()];
        for (i, &m) in m_grid.iter().enumerate() {
            // barrier for horizon t = m*dt: beta (W_m - W_{m-j}) - 1
            let bar: Vec<f64> = (0..=m).map(|j| beta * (wpath[m] - wpath[m - j]) - 1.0).collect();
            for ib in 0..n_b {
                let mut brng = rng::stream(seed, &[STREAM_GAMMA_B, iw as u64, i as u64, ib as u64]);
                let mut b = 0.0;
                let mut alive = true;
                for (j, &bj) in bar.iter().enumerate().skip(1) {
                    let z: f64 = StandardNormal.sample(&mut brng);
                    b += sdt * z;
                    if b < bj {
                        alive = false;
                        break;
                    }
                    let _ = j;
                }
                if alive {
                    surv[i] += 1;
                }
            }
        }
        fit_one_w(t_grid, &surv, n_b)
    });
    pool(beta, t_grid, dt, per_w_raw)
}
