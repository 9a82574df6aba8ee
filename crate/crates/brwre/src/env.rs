//! Reproduction-law families, i.i.d. environment sampling, per-generation
//! log-Laplace transforms and tilted step laws.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, STREAM_ENV};

const WEIGHT_TOL: f64 = 1e-12;

/// One generation's reproduction law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PointProcessLaw {
    /// b children, each displaced independently by N(a, sigma^2).
    GaussianBranching { b: u32, a: f64, sigma: f64 },
    /// Finite mixture of deterministic displacement tuples.
    DiscreteMixture { atoms: Vec<MixtureAtom> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureAtom {
    pub w: f64,
    pub d: Vec<f64>,
}

impl PointProcessLaw {
    pub fn gaussian(b: u32, a: f64, sigma: f64) -> Self {
        PointProcessLaw::GaussianBranching { b, a, sigma }
    }

    pub fn mixture(atoms: Vec<(f64, Vec<f64>)>) -> Self {
        PointProcessLaw::DiscreteMixture {
            atoms: atoms.into_iter().map(|(w, d)| MixtureAtom { w, d }).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PointProcessLaw::GaussianBranching { b, a, sigma } => {
                if *b < 1 {
                    return Err(Error::Config("offspring count b must be >= 1".into()));
                }
                if !(*sigma > 0.0) || !a.is_finite() {
                    return Err(Error::Config("require sigma > 0 and finite drift".into()));
                }
            }
            PointProcessLaw::DiscreteMixture { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::Config("empty mixture".into()));
                }
                let mut tot = 0.0;
                for at in atoms {
                    if !(at.w > 0.0 && at.w <= 1.0) {
                        return Err(Error::Config(format!("weight {} out of (0,1]", at.w)));
                    }
                    if at.d.is_empty() {
                        // every realization must produce at least one child
                        return Err(Error::Config("atom with zero children".into()));
                    }
                    if at.d.iter().any(|x| !x.is_finite()) {
                        return Err(Error::Config("non-finite displacement".into()));
                    }
                    tot += at.w;
                }
                if (tot - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::Config(format!("weights sum to {tot}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// kappa(theta) = log E sum_children e^{theta * displacement}.
    pub fn log_laplace(&self, theta: f64) -> Result<f64> {
        let k = match self {
            PointProcessLaw::GaussianBranching { b, a, sigma } => {
                (*b as f64).ln() + theta * a + theta * theta * sigma * sigma / 2.0
            }
            PointProcessLaw::DiscreteMixture { atoms } => {
                // log sum_i w_i sum_j e^{theta d_ij}, via log-sum-exp
                let mut max = f64::NEG_INFINITY;
                for at in atoms {
                    for &d in &at.d {
                        max = max.max(theta * d + at.w.ln());
                    }
                }
                let mut s = 0.0;
                for at in atoms {
                    let lw = at.w.ln();
                    for &d in &at.d {
                        s += (theta * d + lw - max).exp();
                    }
                }
                max + s.ln()
            }
        };
        if k.is_finite() {
            Ok(k)
        } else {
            Err(Error::Numeric(format!("log_laplace overflow at theta={theta}")))
        }
    }

    /// Exact (kappa', kappa'').
    pub fn log_laplace_derivatives(&self, theta: f64) -> Result<(f64, f64)> {
        match self {
            PointProcessLaw::GaussianBranching { a, sigma, .. } => {
                Ok((a + theta * sigma * sigma, sigma * sigma))
            }
            PointProcessLaw::DiscreteMixture { atoms } => {
                // tilted mean/variance of the displacement point mass
                let kappa = self.log_laplace(theta)?;
                let (mut m1, mut m2) = (0.0, 0.0);
                for at in atoms {
                    let lw = at.w.ln();
                    for &d in &at.d {
                        let p = (theta * d + lw - kappa).exp();
                        m1 += p * d;
                        m2 += p * d * d;
                    }
                }
                Ok((m1, (m2 - m1 * m1).max(0.0)))
            }
        }
    }

    /// Sampler for the tilted one-step law mu(dx) proportional to
    /// (mean number of children at x) * e^{theta x}.
    pub fn tilted_step_law(&self, theta: f64) -> Result<TiltedStep> {
        match self {
            PointProcessLaw::GaussianBranching { a, sigma, .. } => Ok(TiltedStep::Gaussian {
                mean: a + theta * sigma * sigma,
                std: *sigma,
            }),
            PointProcessLaw::DiscreteMixture { atoms } => {
                let kappa = self.log_laplace(theta)?;
                let mut vals = Vec::new();
                let mut cum = Vec::new();
                let mut acc = 0.0;
                for at in atoms {
                    let lw = at.w.ln();
                    for &d in &at.d {
                        acc += (theta * d + lw - kappa).exp();
                        vals.push(d);
                        cum.push(acc);
                    }
                }
                // guard against rounding: force the last cumulative to 1
                if let Some(last) = cum.last_mut() {
                    *last = 1.0;
                }
                Ok(TiltedStep::Discrete { cum, vals })
            }
        }
    }

    /// Expected number of children (used by the f == 1 many-to-one identity).
    pub fn mean_offspring(&self) -> f64 {
        match self {
            PointProcessLaw::GaussianBranching { b, .. } => *b as f64,
            PointProcessLaw::DiscreteMixture { atoms } => {
                atoms.iter().map(|at| at.w * at.d.len() as f64).sum()
            }
        }
    }

    /// Scale used to cap the theta* bracket expansion.
    pub fn displacement_scale(&self) -> f64 {
        match self {
            PointProcessLaw::GaussianBranching { a, sigma, .. } => a.abs().max(*sigma),
            PointProcessLaw::DiscreteMixture { atoms } => atoms
                .iter()
                .flat_map(|at| at.d.iter())
                .fold(0.0f64, |m, &d| m.max(d.abs())),
        }
    }

    /// Can a single realization have more than one child?
    pub fn can_branch(&self) -> bool {
        match self {
            PointProcessLaw::GaussianBranching { b, .. } => *b > 1,
            PointProcessLaw::DiscreteMixture { atoms } => atoms.iter().any(|at| at.d.len() > 1),
        }
    }
}

#[derive(Clone, Debug)]
pub enum TiltedStep {
    Gaussian { mean: f64, std: f64 },
    Discrete { cum: Vec<f64>, vals: Vec<f64> },
}

impl TiltedStep {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            TiltedStep::Gaussian { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
            TiltedStep::Discrete { cum, vals } => {
                let u: f64 = rng.random();
                let i = cum.partition_point(|&c| c < u).min(vals.len() - 1);
                vals[i]
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            TiltedStep::Gaussian { mean, .. } => *mean,
            TiltedStep::Discrete { cum, vals } => {
                let mut m = 0.0;
                let mut prev = 0.0;
                for (c, v) in cum.iter().zip(vals) {
                    m += (c - prev) * v;
                    prev = *c;
                }
                m
            }
        }
    }
}

/// Finite-support i.i.d. sampling distribution over reproduction laws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentModel {
    pub atoms: Vec<(f64, PointProcessLaw)>,
}

impl EnvironmentModel {
    pub fn new(atoms: Vec<(f64, PointProcessLaw)>) -> Result<Self> {
        let m = EnvironmentModel { atoms };
        m.validate()?;
        Ok(m)
    }

    pub fn single(law: PointProcessLaw) -> Self {
        EnvironmentModel { atoms: vec![(1.0, law)] }
    }

    /// b=2, a=0, sigma=1: the time-homogeneous reference model.
    pub fn dyadic_gaussian() -> Self {
        Self::single(PointProcessLaw::gaussian(2, 0.0, 1.0))
    }

    /// b=2, sigma^2 in {0.5, 1.5} equiprobable: sigma_A > 0.
    pub fn canonical_sigma() -> Self {
        EnvironmentModel {
            atoms: vec![
                (0.5, PointProcessLaw::gaussian(2, 0.0, 0.5f64.sqrt())),
                (0.5, PointProcessLaw::gaussian(2, 0.0, 1.5f64.sqrt())),
            ],
        }
    }

    /// b=2, sigma=1, drift a in {-0.3, +0.3}: random but sigma_A = 0.
    pub fn drift_random() -> Self {
        EnvironmentModel {
            atoms: vec![
                (0.5, PointProcessLaw::gaussian(2, -0.3, 1.0)),
                (0.5, PointProcessLaw::gaussian(2, 0.3, 1.0)),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::Config("environment model has no atoms".into()));
        }
        let mut tot = 0.0;
        for (p, law) in &self.atoms {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(Error::Config(format!("atom probability {p} out of (0,1]")));
            }
            law.validate()?;
            tot += p;
        }
        if (tot - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Config(format!("atom probabilities sum to {tot}, not 1")));
        }
        if !self.atoms.iter().any(|(_, law)| law.can_branch()) {
            return Err(Error::Config(
                "model is not supercritical: no atom can produce more than one child".into(),
            ));
        }
        Ok(())
    }

    pub fn is_homogeneous(&self) -> bool {
        self.atoms.len() == 1
    }

    /// Atom index for a uniform draw u in [0,1).
    pub fn atom_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, (p, _)) in self.atoms.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.atoms.len() - 1
    }

    pub fn displacement_scale(&self) -> f64 {
        self.atoms
            .iter()
            .fold(0.0f64, |m, (_, law)| m.max(law.displacement_scale()))
    }
}

/// A realized environment: laws for generations 1..=n plus tilt caches.
#[derive(Clone, Debug)]
pub struct EnvironmentSequence {
    laws: Vec<PointProcessLaw>,
    seed: u64,
    tilt: Option<TiltCache>,
}

#[derive(Clone, Debug)]
struct TiltCache {
    theta: f64,
    kappa: Vec<f64>,
    /// K_j = sum_{k<=j} kappa_k(theta); prefix[0] = 0, len n+1.
    prefix: Vec<f64>,
    steps: Vec<TiltedStep>,
}

impl EnvironmentSequence {
    pub fn from_laws(laws: Vec<PointProcessLaw>, seed: u64) -> Self {
        EnvironmentSequence { laws, seed, tilt: None }
    }

    pub fn len(&self) -> usize {
        self.laws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laws.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Law of generation j, 1-based.
    pub fn law(&self, j: usize) -> &PointProcessLaw {
        &self.laws[j - 1]
    }

    pub fn laws(&self) -> &[PointProcessLaw] {
        &self.laws
    }

    /// Populate kappa_j(theta), prefix sums K_j and tilted samplers.
    pub fn attach_tilt(&mut self, theta: f64) -> Result<()> {
        let n = self.laws.len();
        let mut kappa = Vec::with_capacity(n);
        let mut prefix = Vec::with_capacity(n + 1);
        let mut steps = Vec::with_capacity(n);
        prefix.push(0.0);
        let mut acc = 0.0;
        for law in &self.laws {
            let k = law.log_laplace(theta)?;
            acc += k;
            kappa.push(k);
            prefix.push(acc);
            steps.push(law.tilted_step_law(theta)?);
        }
        self.tilt = Some(TiltCache { theta, kappa, prefix, steps });
        Ok(())
    }

    pub fn theta(&self) -> f64 {
        self.tilt.as_ref().expect("attach_tilt first").theta
    }

    /// kappa_j(theta*), 1-based.
    pub fn kappa(&self, j: usize) -> f64 {
        self.tilt.as_ref().expect("attach_tilt first").kappa[j - 1]
    }

    /// K_j for 0 <= j <= n.
    pub fn k_prefix(&self, j: usize) -> f64 {
        self.tilt.as_ref().expect("attach_tilt first").prefix[j]
    }

    /// Tilted step sampler of generation j, 1-based.
    pub fn tilted_step(&self, j: usize) -> &TiltedStep {
        &self.tilt.as_ref().expect("attach_tilt first").steps[j - 1]
    }
}

/// n i.i.d. law draws; deterministic in (model, n, seed).
pub fn sample_environment(model: &EnvironmentModel, n: usize, seed: u64) -> Result<EnvironmentSequence> {
    model.validate()?;
    if n < 1 {
        return Err(Error::Config("environment horizon must be >= 1".into()));
    }
    let mut rng = rng::stream(seed, &[STREAM_ENV]);
    let laws = (0..n)
        .map(|_| model.atoms[model.atom_index(rng.random())].1.clone())
        .collect();
    Ok(EnvironmentSequence::from_laws(laws, seed))
}

/// Antithetic pair of environments: the partner maps each uniform atom draw
/// u -> 1-u, mirroring the atom choice. For a symmetric two-atom model this
/// swaps the atoms generation by generation, which cancels most of the
/// environment-level noise in paired statistics.
pub fn sample_environment_pair(
    model: &EnvironmentModel,
    n: usize,
    seed: u64,
) -> Result<(EnvironmentSequence, EnvironmentSequence)> {
    model.validate()?;
    let mut rng = rng::stream(seed, &[STREAM_ENV]);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        a.push(model.atoms[model.atom_index(u)].1.clone());
        b.push(model.atoms[model.atom_index((1.0 - u).clamp(0.0, 1.0 - 1e-16))].1.clone());
    }
    Ok((
        EnvironmentSequence::from_laws(a, seed),
        EnvironmentSequence::from_laws(b, seed),
    ))
}
