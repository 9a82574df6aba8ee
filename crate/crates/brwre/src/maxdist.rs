//! Exact quenched distribution of the recentered maximal displacement
//! M_n - K_n/theta via a backward recursion on the survival function
//! H_j(x) = P(recentered subtree max > x), evaluated on a uniform grid.
//!
//! Working with H (not the CDF) matters: near the front the CDF is
//! 1 - epsilon and the f64 floor acts like a Brunet-Derrida cutoff that
//! biases the front position; the survival values there are O(1e-300)-safe.
//! The grid extends a configurable lookahead of ~2 sqrt(n) ahead of the
//! front; a shorter window is itself a cutoff.

use crate::env::{EnvironmentSequence, MixtureAtom, PointProcessLaw};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct RecursionOpts {
    /// grid spacing
    pub dx: f64,
    /// grid extends lookahead * sqrt(n) above 0
    pub lookahead: f64,
    /// kernel truncation, in standard deviations
    pub tail_sigmas: f64,
}

impl Default for RecursionOpts {
    fn default() -> Self {
        RecursionOpts { dx: 0.05, lookahead: 2.0, tail_sigmas: 8.0 }
    }
}

/// Survival function of M_n - K_n/theta on a uniform grid; H = 1 left of the
/// grid and 0 right of it.
#[derive(Clone, Debug)]
pub struct MaxDistribution {
    pub lo: f64,
    pub dx: f64,
    pub h: Vec<f64>,
}

impl MaxDistribution {
    pub fn survival(&self, x: f64) -> f64 {
        let t = (x - self.lo) / self.dx;
        if t <= 0.0 {
            return 1.0;
        }
        let i = t.floor() as usize;
        if i + 1 >= self.h.len() {
            return 0.0;
        }
        let f = t - i as f64;
        self.h[i] * (1.0 - f) + self.h[i + 1] * f
    }

    /// x with H(x) = 1 - q (q-quantile), by linear interpolation.
    pub fn quantile(&self, q: f64) -> f64 {
        assert!((0.0..1.0).contains(&q) && q > 0.0);
        let target = 1.0 - q;
        // h is nonincreasing from ~1 to ~0
        let mut i = match self
            .h
            .binary_search_by(|v| target.partial_cmp(v).unwrap())
        {
            Ok(i) => i,
            Err(i) => i,
        };
        i = i.clamp(1, self.h.len() - 1);
        let (h0, h1) = (self.h[i - 1], self.h[i]);
        let x0 = self.lo + (i - 1) as f64 * self.dx;
        if (h0 - h1).abs() < 1e-300 {
            x0
        } else {
            x0 + (h0 - target) / (h0 - h1) * self.dx
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// E(M_n - K_n/theta) = int_0^inf H - int_-inf^0 (1-H), trapezoid rule.
    pub fn mean(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.h.len() - 1 {
            let x0 = self.lo + i as f64 * self.dx;
            let m0 = if x0 >= 0.0 { self.h[i] } else { self.h[i] - 1.0 };
            let m1 = if x0 + self.dx >= 0.0 { self.h[i + 1] } else { self.h[i + 1] - 1.0 };
            acc += 0.5 * (m0 + m1) * self.dx;
        }
        // left of the grid H = 1 exactly, right of it 0: both contribute 0
        acc
    }
}

struct Kernel {
    /// tap t has lattice offset kl + t
    kl: i64,
    w: Vec<f64>,
}

fn gaussian_kernel(mean: f64, sigma: f64, dx: f64, tail: f64) -> Kernel {
    let kl = ((mean - tail * sigma) / dx).floor() as i64;
    let kh = ((mean + tail * sigma) / dx).ceil() as i64;
    let mut w: Vec<f64> = (kl..=kh)
        .map(|k| {
            let z = (k as f64 * dx - mean) / sigma;
            (-0.5 * z * z).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    Kernel { kl, w }
}

enum LawPlan {
    Gaussian { b: u32, kernel: Kernel },
    Discrete { atoms: Vec<MixtureAtom>, shift: f64 },
}

/// Distribution of M_n - (sum_j kappa_j(theta))/theta for the given fixed
/// sequence of laws (generation 1 first), at tilt theta.
pub fn quenched_max_survival(
    laws: &[PointProcessLaw],
    theta: f64,
    opts: &RecursionOpts,
) -> Result<MaxDistribution> {
    let n = laws.len();
    if n == 0 {
        return Err(Error::Config("empty environment".into()));
    }
    if !(theta > 0.0) {
        return Err(Error::Config("theta must be > 0".into()));
    }
    let dx = opts.dx;
    if !(dx > 0.0 && dx < 1.0) {
        return Err(Error::Config("dx out of range".into()));
    }

    // distinct-law plan cache
    let mut cache: Vec<(PointProcessLaw, LawPlan, f64)> = Vec::new();
    let mut plan_idx = Vec::with_capacity(n);
    let mut max_reach = 0.0f64; // widest kernel/displacement extent, grid units
    for law in laws {
        if let Some(i) = cache.iter().position(|(l, _, _)| l == law) {
            plan_idx.push(i);
            continue;
        }
        let kappa = law.log_laplace(theta)?;
        let shift = kappa / theta;
        let plan = match law {
            PointProcessLaw::GaussianBranching { b, a, sigma } => {
                let mean = a - shift;
                max_reach = max_reach.max(mean.abs() + opts.tail_sigmas * sigma);
                LawPlan::Gaussian {
                    b: *b,
                    kernel: gaussian_kernel(mean, *sigma, dx, opts.tail_sigmas),
                }
            }
            PointProcessLaw::DiscreteMixture { atoms } => {
                for at in atoms {
                    for &d in &at.d {
                        max_reach = max_reach.max((d - shift).abs());
                    }
                }
                LawPlan::Discrete { atoms: atoms.clone(), shift }
            }
        };
        plan_idx.push(cache.len());
        cache.push((law.clone(), plan, kappa));
    }

    let hi = (opts.lookahead * (n as f64).sqrt()).max(10.0);
    let lo = -(12.0 + 2.4 * (n as f64).ln()).max(20.0);
    let npts = ((hi - lo) / dx).round() as usize + 1;
    let pad = (max_reach / dx).ceil() as usize + 2;
    if npts + 2 * pad > 50_000_000 {
        return Err(Error::Resource("recursion grid too large".into()));
    }

    // padded survival array: 1 on the left pad, 0 on the right pad
    let len = npts + 2 * pad;
    let mut h = vec![0.0f64; len];
    for (i, v) in h.iter_mut().enumerate() {
        let x = lo + (i as f64 - pad as f64) * dx;
        // midpoint value at the jump kills the half-cell discretization bias
        *v = if x < -0.5 * dx {
            1.0
        } else if x < 0.5 * dx {
            0.5
        } else {
            0.0
        };
    }
    let mut next = vec![0.0f64; len];

    // last generation in closed form when Gaussian: the initial condition is
    // a step function and the lumped kernel would smear its jump; afterwards
    // H is smooth and the lattice convolution is accurate
    let mut start = n;
    if let (_, LawPlan::Gaussian { b, .. }, kappa) = &cache[plan_idx[n - 1]] {
        if let PointProcessLaw::GaussianBranching { a, sigma, .. } = &laws[n - 1] {
            let mean = a - kappa / theta;
            let bf = *b as f64;
            for i in 0..npts {
                let x = lo + i as f64 * dx;
                // ch = P(child displacement - shift > x); the mirrored form
                // keeps full relative precision in the upper tail
                let ch = crate::special::normal_cdf((mean - x) / sigma).clamp(0.0, 1.0);
                h[pad + i] = (-(bf * (-ch).ln_1p()).exp_m1()).clamp(0.0, 1.0);
            }
            start = n - 1;
        }
    }

    for j in (0..start).rev() {
        let (_, plan, _) = &cache[plan_idx[j]];
        match plan {
            LawPlan::Gaussian { b, kernel } => {
                let off = pad as i64 - kernel.kl;
                let bf = *b as f64;
                for i in 0..npts {
                    // ch = E over child displacement of H(x - d + shift)
                    let base = (i as i64 + off) as usize;
                    let mut ch = 0.0;
                    for (t, &w) in kernel.w.iter().enumerate() {
                        ch += w * h[base - t];
                    }
                    let ch = ch.clamp(0.0, 1.0);
                    // 1 - (1-ch)^b, precise for tiny ch
                    next[pad + i] = (-(bf * (-ch).ln_1p()).exp_m1()).clamp(0.0, 1.0);
                }
            }
            LawPlan::Discrete { atoms, shift } => {
                let interp = |x: f64, h: &[f64]| -> f64 {
                    let t = (x - lo) / dx + pad as f64;
                    if t <= 0.0 {
                        return 1.0;
                    }
                    let i = t.floor() as usize;
                    if i + 1 >= h.len() {
                        return 0.0;
                    }
                    let f = t - i as f64;
                    h[i] * (1.0 - f) + h[i + 1] * f
                };
                for i in 0..npts {
                    let x = lo + i as f64 * dx;
                    let mut miss = 0.0; // P(no child's subtree exceeds x)
                    for at in atoms {
                        let mut prod = 1.0;
                        for &d in &at.d {
                            prod *= 1.0 - interp(x - d + shift, &h);
                        }
                        miss += at.w * prod;
                    }
                    next[pad + i] = (1.0 - miss).clamp(0.0, 1.0);
                }
            }
        }
        // restore pads and swap
        for (i, v) in next.iter_mut().enumerate() {
            if i < pad {
                *v = 1.0;
            } else if i >= pad + npts {
                *v = 0.0;
            }
        }
        std::mem::swap(&mut h, &mut next);
    }

    Ok(MaxDistribution {
        lo,
        dx,
        h: h[pad..pad + npts].to_vec(),
    })
}

/// Convenience wrapper over a tilted environment sequence.
pub fn env_max_survival(env: &EnvironmentSequence, opts: &RecursionOpts) -> Result<MaxDistribution> {
    quenched_max_survival(env.laws(), env.theta(), opts)
}
