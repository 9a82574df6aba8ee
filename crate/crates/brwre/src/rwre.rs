//! The tilted walk T_n = theta* S_n - K_n in a fixed or fresh environment:
//! path sampling, persistence/excursion probabilities against barriers,
//! time-reversed variants, local-limit window probabilities and a
//! Kolmogorov-distance normality diagnostic.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::solve_theta_star;
use crate::env::{EnvironmentModel, EnvironmentSequence, TiltedStep};
use crate::error::{Error, Result};
use crate::fit::{fit_exponent, ExponentFit};
use crate::parallel::Executor;
use crate::rng::{self, STREAM_WALK};
use crate::special::normal_cdf;

#[derive(Clone, Debug)]
pub struct WalkPath {
    /// environment time-shift: step j of the path uses generation offset+j
    pub offset: usize,
    /// T_0 .. T_m with T_0 = 0
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarrierShape {
    /// r_{n,j} = 0
    Constant,
    /// r_{n,j} = min(j, n-j)^alpha (0 at the endpoints)
    ExcursionCeiling { alpha: f64 },
    /// k^{1/3} - delta log n for k <= n/2, else (n-k)^{1/3} + (phi-delta) log n
    ProofShape { delta: f64, phi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarrierSide {
    StayBelow,
    StayAbove,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub shape: BarrierShape,
    pub side: BarrierSide,
}

impl BarrierSpec {
    pub fn constant(side: BarrierSide) -> Self {
        BarrierSpec { shape: BarrierShape::Constant, side }
    }

    pub fn validate(&self) -> Result<()> {
        if let BarrierShape::ExcursionCeiling { alpha } = self.shape {
            if !(0.0..0.5).contains(&alpha) {
                return Err(Error::Config(format!("alpha = {alpha} outside [0, 1/2)")));
            }
        }
        Ok(())
    }

    /// Barrier modulation r_{n,j}.
    pub fn r(&self, j: usize, n: usize) -> f64 {
        match self.shape {
            BarrierShape::Constant => 0.0,
            BarrierShape::ExcursionCeiling { alpha } => {
                let m = j.min(n - j) as f64;
                if m == 0.0 {
                    0.0
                } else {
                    m.powf(alpha)
                }
            }
            BarrierShape::ProofShape { delta, phi } => {
                let ln_n = (n as f64).ln();
                let k = j as f64;
                if 2 * j <= n {
                    k.cbrt() - delta * ln_n
                } else {
                    (n as f64 - k).cbrt() + (phi - delta) * ln_n
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Estimate {
    pub p: f64,
    pub stderr: f64,
    pub hits: u64,
    pub replicates: u64,
    /// one-sided 95% upper bound, meaningful when hits == 0
    pub upper95: f64,
}

impl Estimate {
    fn from_counts(hits: u64, replicates: u64) -> Self {
        let n = replicates as f64;
        let p = hits as f64 / n;
        Estimate {
            p,
            stderr: (p * (1.0 - p) / n).sqrt(),
            hits,
            replicates,
            upper95: if hits == 0 { 1.0 - 0.05f64.powf(1.0 / n) } else { p + 1.96 * (p * (1.0 - p) / n).sqrt() },
        }
    }
}

/// Precomputed per-generation tilted increments of T.
struct StepPlan {
    theta: f64,
    /// (kappa_j, sampler), index 0 = generation 1
    gens: Vec<(f64, TiltedStep)>,
}

impl StepPlan {
    fn from_env(env: &EnvironmentSequence) -> Self {
        let theta = env.theta();
        let gens = (1..=env.len())
            .map(|j| (env.kappa(j), env.tilted_step(j).clone()))
            .collect();
        StepPlan { theta, gens }
    }

    /// increment T_j - T_{j-1} for generation index j (1-based)
    #[inline]
    fn step(&self, j: usize, rng: &mut ChaCha8Rng) -> f64 {
        let (kappa, s) = &self.gens[j - 1];
        self.theta * s.sample(rng) - kappa
    }
}

/// Per-atom tilted increments for annealed (fresh-environment) walks.
struct AnnealedPlan {
    theta: f64,
    /// cumulative atom probabilities and per-atom (kappa, sampler)
    cum: Vec<f64>,
    atoms: Vec<(f64, TiltedStep)>,
}

impl AnnealedPlan {
    fn new(model: &EnvironmentModel) -> Result<Self> {
        let theta = solve_theta_star(model)?;
        let mut cum = Vec::new();
        let mut atoms = Vec::new();
        let mut acc = 0.0;
        for (p, law) in &model.atoms {
            acc += p;
            cum.push(acc);
            atoms.push((law.log_laplace(theta)?, law.tilted_step_law(theta)?));
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        Ok(AnnealedPlan { theta, cum, atoms })
    }

    #[inline]
    fn step(&self, rng: &mut ChaCha8Rng) -> f64 {
        use rand::RngExt;
        let u: f64 = rng.random();
        let i = self.cum.partition_point(|&c| c < u).min(self.atoms.len() - 1);
        let (kappa, s) = &self.atoms[i];
        self.theta * s.sample(rng) - kappa
    }
}

/// One tilted-walk path in a fixed environment, generations offset+1..offset+m.
pub fn sample_walk(
    env: &EnvironmentSequence,
    offset: usize,
    m: usize,
    seed: u64,
) -> Result<WalkPath> {
    if offset + m > env.len() {
        return Err(Error::Config(format!(
            "walk horizon {} exceeds environment length {}",
            offset + m,
            env.len()
        )));
    }
    let plan = StepPlan::from_env(env);
    let mut rng = rng::stream(seed, &[STREAM_WALK]);
    let mut values = Vec::with_capacity(m + 1);
    values.push(0.0);
    let mut t = 0.0;
    for j in 1..=m {
        t += plan.step(offset + j, &mut rng);
        values.push(t);
    }
    Ok(WalkPath { offset, values })
}

const CHUNK: u64 = 8192;

fn chunked_counts(
    replicates: u64,
    seed: u64,
    tag: u64,
    exec: &Executor,
    run_chunk: impl Fn(&mut ChaCha8Rng, u64) -> u64 + Sync + Send,
) -> u64 {
    let tasks = replicates.div_ceil(CHUNK);
    let hits = exec.map(tasks as usize, |task| {
        let lo = task as u64 * CHUNK;
        let hi = (lo + CHUNK).min(replicates);
        let mut rng = rng::stream(seed, &[STREAM_WALK, tag, task as u64]);
        run_chunk(&mut rng, hi - lo)
    });
    hits.iter().sum()
}

/// P_L(T_n >= x - y, T_j <= x - r_{n,j} for all j <= n) for a fixed
/// environment, by naive Monte Carlo with early termination.
pub fn excursion_probability(
    env: &EnvironmentSequence,
    n: usize,
    x: f64,
    y: f64,
    barrier: &BarrierSpec,
    replicates: u64,
    seed: u64,
    exec: &Executor,
) -> Result<Estimate> {
    barrier.validate()?;
    if n > env.len() || replicates < 1 {
        return Err(Error::Config("bad horizon or replicate count".into()));
    }
    if y < 0.0 || y > x {
        return Err(Error::Config("require 0 <= y <= x".into()));
    }
    let plan = StepPlan::from_env(env);
    let ceiling: Vec<f64> = (1..=n).map(|j| x - barrier.r(j, n)).collect();
    let hits = chunked_counts(replicates, seed, 0x0EC, exec, |rng, count| {
        let mut h = 0u64;
        for _ in 0..count {
            let mut t = 0.0;
            let mut ok = true;
            for j in 1..=n {
                t += plan.step(j, rng);
                if t > ceiling[j - 1] {
                    ok = false;
                    break;
                }
            }
            if ok && t >= x - y {
                h += 1;
            }
        }
        h
    });
    Ok(Estimate::from_counts(hits, replicates))
}

/// Same event for the time-reversed walk T^_j = T_m - T_{m-j} (environment
/// traversed backwards).
pub fn reversed_persistence(
    env: &EnvironmentSequence,
    m: usize,
    x: f64,
    y: f64,
    barrier: &BarrierSpec,
    replicates: u64,
    seed: u64,
    exec: &Executor,
) -> Result<Estimate> {
    barrier.validate()?;
    if m > env.len() {
        return Err(Error::Config("horizon exceeds environment".into()));
    }
    if m == 0 {
        return Ok(Estimate::from_counts(replicates, replicates));
    }
    let plan = StepPlan::from_env(env);
    let ceiling: Vec<f64> = (1..=m).map(|j| x - barrier.r(j, m)).collect();
    let hits = chunked_counts(replicates, seed, 0x0ED, exec, |rng, count| {
        let mut h = 0u64;
        for _ in 0..count {
            let mut t = 0.0;
            let mut ok = true;
            for j in 1..=m {
                // step of the reversed walk uses generation m-j+1
                t += plan.step(m - j + 1, rng);
                if t > ceiling[j - 1] {
                    ok = false;
                    break;
                }
            }
            if ok && t >= x - y {
                h += 1;
            }
        }
        h
    });
    Ok(Estimate::from_counts(hits, replicates))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetRule {
    LogN,
    Fixed(f64),
}

impl OffsetRule {
    pub fn value(&self, n: usize) -> f64 {
        match self {
            OffsetRule::LogN => (n as f64).ln(),
            OffsetRule::Fixed(x) => *x,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PersistenceResult {
    pub fit: ExponentFit,
    pub cells: Vec<(usize, Estimate)>,
}

/// Annealed persistence probability P(x_n + T_j >= r_{n,j} for j <= n) with a
/// fresh environment per replicate; slope of log p vs log n estimates
/// -gamma(sigma_A/sigma_Q).
pub fn persistence_exponent(
    model: &EnvironmentModel,
    n_grid: &[usize],
    x_rule: OffsetRule,
    barrier: &BarrierSpec,
    replicates: u64,
    seed: u64,
    exec: &Executor,
) -> Result<PersistenceResult> {
    barrier.validate()?;
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("n grid must be strictly increasing".into()));
    }
    let plan = AnnealedPlan::new(model)?;
    let mut cells = Vec::new();
    for (ni, &n) in n_grid.iter().enumerate() {
        let x = x_rule.value(n);
        let floor: Vec<f64> = (1..=n).map(|j| barrier.r(j, n) - x).collect();
        let hits = chunked_counts(replicates, seed, 0x0F0 + ni as u64, exec, |rng, count| {
            let mut h = 0u64;
            for _ in 0..count {
                let mut t = 0.0;
                let mut ok = true;
                for j in 1..=n {
                    t += plan.step(rng);
                    if t < floor[j - 1] {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    h += 1;
                }
            }
            h
        });
        cells.push((n, Estimate::from_counts(hits, replicates)));
    }
    let pts: Vec<_> = cells
        .iter()
        .map(|(n, e)| (*n as f64, e.p, e.stderr))
        .collect();
    Ok(PersistenceResult { fit: fit_exponent(&pts)?, cells })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowCenter {
    /// sup over window positions (sliding-window maximum of the histogram)
    Sup,
    At(f64),
}

/// Annealed Monte Carlo of P(T_n in [y, y + width]); Sup mode returns the
/// maximum over y on a width/4 lattice.
pub fn llt_window_probability(
    model: &EnvironmentModel,
    n: usize,
    width: f64,
    center: WindowCenter,
    replicates: u64,
    seed: u64,
    exec: &Executor,
) -> Result<Estimate> {
    if !(width > 0.0) || replicates < 1 {
        return Err(Error::Config("require width > 0, replicates >= 1".into()));
    }
    let plan = AnnealedPlan::new(model)?;
    match center {
        WindowCenter::At(y) => {
            let hits = chunked_counts(replicates, seed, 0x11E, exec, |rng, count| {
                let mut h = 0u64;
                for _ in 0..count {
                    let mut t = 0.0;
                    for _ in 0..n {
                        t += plan.step(rng);
                    }
                    if t >= y && t <= y + width {
                        h += 1;
                    }
                }
                h
            });
            Ok(Estimate::from_counts(hits, replicates))
        }
        WindowCenter::Sup => {
            // histogram endpoints on a width/4 lattice, take the best
            // 4-bin window; merge per-chunk histograms deterministically
            let h = width / 4.0;
            let tasks = replicates.div_ceil(CHUNK);
            let maps = exec.map(tasks as usize, |task| {
                let lo = task as u64 * CHUNK;
                let hi = (lo + CHUNK).min(replicates);
                let mut rng = rng::stream(seed, &[STREAM_WALK, 0x11F, task as u64]);
                let mut bins: std::collections::HashMap<i64, u64> = Default::default();
                for _ in 0..(hi - lo) {
                    let mut t = 0.0;
                    for _ in 0..n {
                        t += plan.step(&mut rng);
                    }
                    *bins.entry((t / h).floor() as i64).or_insert(0) += 1;
                }
                bins
            });
            let mut bins: std::collections::BTreeMap<i64, u64> = Default::default();
            for m in maps {
                for (k, v) in m {
                    *bins.entry(k).or_insert(0) += v;
                }
            }
            let keys: Vec<i64> = bins.keys().copied().collect();
            let mut best = 0u64;
            for &k in &keys {
                let mut s = 0;
                for d in 0..4 {
                    s += bins.get(&(k + d)).copied().unwrap_or(0);
                }
                best = best.max(s);
            }
            Ok(Estimate::from_counts(best, replicates))
        }
    }
}

/// Kolmogorov distance between the quenched-normalized endpoint
/// (T_n - E_L T_n)/sqrt(Var_L T_n) and the standard normal, with a fresh
/// environment per replicate. Decays like C/sqrt(n) under the Berry-Esseen
/// bound.
pub fn ks_normal_distance(
    model: &EnvironmentModel,
    n: usize,
    replicates: u64,
    seed: u64,
    exec: &Executor,
) -> Result<f64> {
    let theta = solve_theta_star(model)?;
    // per-atom conditional mean/variance of the T increment
    let mut atom_mv = Vec::new();
    let mut cum = Vec::new();
    let mut acc = 0.0;
    let mut steps = Vec::new();
    for (p, law) in &model.atoms {
        let k = law.log_laplace(theta)?;
        let (d1, d2) = law.log_laplace_derivatives(theta)?;
        atom_mv.push((theta * d1 - k, theta * theta * d2));
        steps.push((k, law.tilted_step_law(theta)?));
        acc += p;
        cum.push(acc);
    }
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    let tasks = replicates.div_ceil(CHUNK);
    let mut zs: Vec<f64> = exec
        .map(tasks as usize, |task| {
            use rand::RngExt;
            let lo = task as u64 * CHUNK;
            let hi = (lo + CHUNK).min(replicates);
            let mut rng = rng::stream(seed, &[STREAM_WALK, 0x135, task as u64]);
            let mut out = Vec::with_capacity((hi - lo) as usize);
            for _ in 0..(hi - lo) {
                let (mut t, mut mean, mut var) = (0.0, 0.0, 0.0);
                for _ in 0..n {
                    let u: f64 = rng.random();
                    let i = cum.partition_point(|&c| c < u).min(steps.len() - 1);
                    let (k, s) = &steps[i];
                    t += theta * s.sample(&mut rng) - k;
                    mean += atom_mv[i].0;
                    var += atom_mv[i].1;
                }
                out.push((t - mean) / var.sqrt());
            }
            out
        })
        .into_iter()
        .flatten()
        .collect();
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = zs.len() as f64;
    let mut ks = 0.0f64;
    for (i, &z) in zs.iter().enumerate() {
        let phi = normal_cdf(z);
        ks = ks.max((phi - i as f64 / m).abs());
        ks = ks.max(((i + 1) as f64 / m - phi).abs());
    }
    Ok(ks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::sample_environment;

    fn tilted_env(model: &EnvironmentModel, n: usize, seed: u64) -> EnvironmentSequence {
        let mut env = sample_environment(model, n, seed).unwrap();
        let theta = solve_theta_star(model).unwrap();
        env.attach_tilt(theta).unwrap();
        env
    }

    #[test]
    fn zero_length_walk() {
        let env = tilted_env(&EnvironmentModel::dyadic_gaussian(), 5, 1);
        let w = sample_walk(&env, 0, 0, 1).unwrap();
        assert_eq!(w.values, vec![0.0]);
    }

    #[test]
    fn homogeneous_t1_is_centered() {
        // T_1 ~ N(0, 2 log 2) for the dyadic model
        let env = tilted_env(&EnvironmentModel::dyadic_gaussian(), 1, 2);
        let plan = StepPlan::from_env(&env);
        let mut rng = crate::rng::stream(3, &[0]);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let t = plan.step(1, &mut rng);
            s1 += t;
            s2 += t * t;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let sq2 = 2.0 * 2f64.ln();
        assert!(mean.abs() < 4.0 * (sq2 / n as f64).sqrt(), "mean {mean}");
        assert!((var - sq2).abs() < 0.03, "var {var}");
    }

    #[test]
    fn quenched_mean_matches_exact_sum() {
        let model = EnvironmentModel::canonical_sigma();
        let env = tilted_env(&model, 100, 4);
        let theta = env.theta();
        // exact E_L T_100 = sum theta kappa'_j - kappa_j
        let exact: f64 = (1..=100)
            .map(|j| {
                let (d1, _) = env.law(j).log_laplace_derivatives(theta).unwrap();
                theta * d1 - env.kappa(j)
            })
            .sum();
        let reps = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for r in 0..reps {
            let w = sample_walk(&env, 0, 100, crate::rng::derive(5, &[r])).unwrap();
            let t = *w.values.last().unwrap();
            sum += t;
            sum2 += t * t;
        }
        let mean = sum / reps as f64;
        let var = sum2 / reps as f64 - mean * mean;
        assert!(
            (mean - exact).abs() < 4.0 * (var / reps as f64).sqrt(),
            "mean {mean} exact {exact}"
        );
    }

    #[test]
    fn single_step_excursion_closed_form() {
        // n=1, x=y=10: P(T_1 in [0,10]) for T_1 ~ N(0, 2 log 2)
        let env = tilted_env(&EnvironmentModel::dyadic_gaussian(), 1, 6);
        let b = BarrierSpec::constant(BarrierSide::StayBelow);
        let est = excursion_probability(&env, 1, 10.0, 10.0, &b, 400_000, 7, &Executor::new(0))
            .unwrap();
        let sd = (2.0 * 2f64.ln()).sqrt();
        let exact = normal_cdf(10.0 / sd) - 0.5;
        assert!((est.p - exact).abs() < 4.0 * est.stderr, "{} vs {exact}", est.p);
    }

    #[test]
    fn reversed_matches_forward_in_homogeneous_env() {
        let env = tilted_env(&EnvironmentModel::dyadic_gaussian(), 64, 8);
        let b = BarrierSpec::constant(BarrierSide::StayBelow);
        let e = Executor::new(0);
        let f = excursion_probability(&env, 64, 2.0, 2.0, &b, 300_000, 9, &e).unwrap();
        let r = reversed_persistence(&env, 64, 2.0, 2.0, &b, 300_000, 10, &e).unwrap();
        let comb = (f.stderr.powi(2) + r.stderr.powi(2)).sqrt();
        assert!((f.p - r.p).abs() < 3.0 * comb, "{} vs {}", f.p, r.p);
    }

    #[test]
    fn reversed_zero_horizon_is_one() {
        let env = tilted_env(&EnvironmentModel::dyadic_gaussian(), 4, 8);
        let b = BarrierSpec::constant(BarrierSide::StayBelow);
        let r = reversed_persistence(&env, 0, 1.0, 1.0, &b, 100, 1, &Executor::new(0)).unwrap();
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn quenched_forward_reverse_differ_in_random_env() {
        // paired diagnostic: per-environment forward vs reversed estimates
        // have genuinely nonzero spread (the in-probability-only phenomenon)
        let model = EnvironmentModel::canonical_sigma();
        let e = Executor::new(0);
        let b = BarrierSpec::constant(BarrierSide::StayBelow);
        let mut diffs = Vec::new();
        for s in 0..12 {
            let env = tilted_env(&model, 48, 100 + s);
            let f = excursion_probability(&env, 48, 2.0, 2.0, &b, 150_000, 11, &e).unwrap();
            let r = reversed_persistence(&env, 48, 2.0, 2.0, &b, 150_000, 12, &e).unwrap();
            diffs.push((f.p - r.p) / f.stderr.hypot(r.stderr).max(1e-12));
        }
        let spread = diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64;
        // if forward == reversed quenched, normalized diffs would be ~ chi^2(1)
        assert!(spread > 3.0, "normalized spread^2 = {spread}");
    }

    #[test]
    fn full_support_window_has_probability_one() {
        let model = EnvironmentModel::dyadic_gaussian();
        let n = 64;
        let sq = (2.0 * 2f64.ln() * n as f64).sqrt();
        let est = llt_window_probability(
            &model,
            n,
            10.0 * sq,
            WindowCenter::At(-5.0 * sq),
            20_000,
            13,
            &Executor::new(0),
        )
        .unwrap();
        assert!(est.p > 0.999, "p = {}", est.p);
    }

    #[test]
    fn sup_window_beats_off_center_window() {
        let model = EnvironmentModel::dyadic_gaussian();
        let e = Executor::new(0);
        let sup = llt_window_probability(&model, 64, 1.0, WindowCenter::Sup, 100_000, 14, &e).unwrap();
        let off = llt_window_probability(&model, 64, 1.0, WindowCenter::At(15.0), 100_000, 14, &e).unwrap();
        assert!(sup.p > off.p);
        // near the mode, density ~ 1/sqrt(2 pi sigma_Q^2 n)
        let exact = 1.0 / (2.0 * std::f64::consts::PI * 2.0 * 2f64.ln() * 64.0).sqrt();
        assert!((sup.p - exact).abs() < 0.2 * exact, "{} vs {exact}", sup.p);
    }

    #[test]
    fn annealed_mean_is_zero() {
        let model = EnvironmentModel::canonical_sigma();
        let plan = AnnealedPlan::new(&model).unwrap();
        let mut rng = crate::rng::stream(15, &[0]);
        let reps = 100_000;
        let n = 100;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..reps {
            let mut t = 0.0;
            for _ in 0..n {
                t += plan.step(&mut rng);
            }
            s1 += t;
            s2 += t * t;
        }
        let mean = s1 / reps as f64;
        let var = s2 / reps as f64 - mean * mean;
        assert!(mean.abs() < 4.0 * (var / reps as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn quenched_mean_variance_scales_with_sigma_a2() {
        // Var over environments of E_L(T_n) ~ sigma_A^2 n
        let model = EnvironmentModel::canonical_sigma();
        let theta = solve_theta_star(&model).unwrap();
        let n = 1000;
        let n_env = 4000;
        let mut vals = Vec::with_capacity(n_env);
        for s in 0..n_env {
            let env = sample_environment(&model, n, 1_000 + s as u64).unwrap();
            let mut m = 0.0;
            for j in 1..=n {
                let k = env.law(j).log_laplace(theta).unwrap();
                let (d1, _) = env.law(j).log_laplace_derivatives(theta).unwrap();
                m += theta * d1 - k;
            }
            vals.push(m);
        }
        let mean = vals.iter().sum::<f64>() / n_env as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n_env - 1) as f64;
        let sigma_a2 = (2.0 * 2f64.ln()).powi(2) / 16.0;
        assert!(
            (var - sigma_a2 * n as f64).abs() < 0.1 * sigma_a2 * n as f64,
            "var {var} vs {}",
            sigma_a2 * n as f64
        );
    }

    #[test]
    fn ks_distance_decays_like_inverse_sqrt() {
        // discrete steps: genuinely non-Gaussian increments, KS ~ C/sqrt(n)
        let model = EnvironmentModel::single(crate::env::PointProcessLaw::mixture(vec![
            (0.5, vec![1.0, -1.0]),
            (0.5, vec![0.0]),
        ]));
        let e = Executor::new(0);
        let mut pts = Vec::new();
        for &n in &[16usize, 64, 256] {
            let ks = ks_normal_distance(&model, n, 40_000, 16, &e).unwrap();
            // KS sampling floor ~ 1/sqrt(reps) = 0.005; keep n small enough
            pts.push((n as f64, ks, 0.1 * ks));
        }
        let f = fit_exponent(&pts).unwrap();
        assert!(f.slope <= -0.4, "KS decay slope {}", f.slope);
        assert!(f.slope >= -0.75, "KS decay slope {}", f.slope);
    }

    #[test]
    fn gaussian_steps_are_exactly_normal_after_quenched_scaling() {
        // with Gaussian displacement laws the normalized endpoint is exactly
        // N(0,1); the KS statistic should sit at the sampling floor
        let ks = ks_normal_distance(
            &EnvironmentModel::canonical_sigma(),
            128,
            40_000,
            17,
            &Executor::new(0),
        )
        .unwrap();
        assert!(ks < 3.0 * 0.82 / (40_000f64).sqrt(), "ks = {ks}");
    }

    #[test]
    fn proof_shape_barrier_values() {
        let b = BarrierSpec {
            shape: BarrierShape::ProofShape { delta: 0.3, phi: 1.27 },
            side: BarrierSide::StayBelow,
        };
        let n = 64;
        let ln_n = 64f64.ln();
        assert!((b.r(8, n) - (2.0 - 0.3 * ln_n)).abs() < 1e-12);
        assert!((b.r(56, n) - (2.0 + 0.97 * ln_n)).abs() < 1e-12);
    }

    #[test]
    fn excursion_alpha_validation() {
        let bad = BarrierSpec {
            shape: BarrierShape::ExcursionCeiling { alpha: 0.5 },
            side: BarrierSide::StayBelow,
        };
        assert!(bad.validate().is_err());
    }
}
