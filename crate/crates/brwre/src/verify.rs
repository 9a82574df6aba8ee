//! Exact small-scale verification oracles: the many-to-one identity checked
//! by two independent enumeration routes, the Dekking-Host increment
//! inequality checked by nested Monte Carlo against a closed-form constant,
//! and the exact frontier-crossing probability against e^{-theta y}.

use serde::{Deserialize, Serialize};

use crate::analytics::solve_theta_star;
use crate::brw::{simulate_brw, PruneConfig};
use crate::env::{sample_environment, EnvironmentModel, EnvironmentSequence, PointProcessLaw};
use crate::error::{Error, Result};
use crate::parallel::Executor;
use crate::rng::{self, STREAM_BRANCH, STREAM_ENV};
use crate::special::normal_pdf;

/// A fixed environment small enough for exact enumeration: discrete laws
/// only, and the product of per-generation child counts bounded.
#[derive(Clone, Debug)]
pub struct EnumerableInstance {
    pub laws: Vec<PointProcessLaw>,
}

const MAX_REALIZATIONS: f64 = 1e7;

impl EnumerableInstance {
    pub fn new(laws: Vec<PointProcessLaw>) -> Result<Self> {
        let inst = EnumerableInstance { laws };
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&self) -> Result<()> {
        if self.laws.is_empty() || self.laws.len() > 8 {
            return Err(Error::Config("need 1..=8 generations".into()));
        }
        let mut total = 1.0f64;
        for law in &self.laws {
            match law {
                PointProcessLaw::GaussianBranching { .. } => {
                    return Err(Error::Config("enumeration needs discrete laws".into()));
                }
                PointProcessLaw::DiscreteMixture { atoms } => {
                    law.validate()?;
                    total *= atoms.iter().map(|a| a.d.len()).sum::<usize>() as f64;
                }
            }
        }
        if total > MAX_REALIZATIONS {
            return Err(Error::Resource(format!("{total:.2e} lineages to enumerate")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.laws.len()
    }

    /// equal-weight annealed model built from the instance's laws
    pub fn empirical_model(&self) -> EnvironmentModel {
        let w = 1.0 / self.laws.len() as f64;
        EnvironmentModel {
            atoms: self.laws.iter().map(|l| (w, l.clone())).collect(),
        }
    }
}

/// Path functionals used in the identity checks; paths are (V_1, ..., V_n).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum PathFunctional {
    /// 1 if V_n >= level
    EndpointAbove(f64),
    /// 1 if V_j <= slope * j + offset for every j
    StaysBelowLine { slope: f64, offset: f64 },
    /// exp(t * V_n), a Laplace-transform probe
    ExpEndpoint(f64),
}

impl PathFunctional {
    fn eval(&self, path: &[f64]) -> f64 {
        match *self {
            PathFunctional::EndpointAbove(l) => {
                if *path.last().unwrap() >= l { 1.0 } else { 0.0 }
            }
            PathFunctional::StaysBelowLine { slope, offset } => {
                for (j, &v) in path.iter().enumerate() {
                    if v > slope * (j + 1) as f64 + offset {
                        return 0.0;
                    }
                }
                1.0
            }
            PathFunctional::ExpEndpoint(t) => (t * path.last().unwrap()).exp(),
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Kahan {
    s: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.s + y;
        self.c = (t - self.s) - y;
        self.s = t;
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManyToOneReport {
    pub n: usize,
    pub theta: f64,
    pub functional: PathFunctional,
    /// direct route: E of the sum over particles, by tree recursion
    pub lhs: f64,
    /// spinal route: tilted-path enumeration with weight e^{K_n - theta S_n}
    pub rhs: f64,
    pub rel_gap: f64,
}

fn direct_route(laws: &[PointProcessLaw], j: usize, path: &mut Vec<f64>, f: &PathFunctional) -> f64 {
    if j == laws.len() {
        return f.eval(path);
    }
    let pos = path.last().copied().unwrap_or(0.0);
    let PointProcessLaw::DiscreteMixture { atoms } = &laws[j] else { unreachable!() };
    let mut acc = Kahan::default();
    for at in atoms {
        // all children of an atom contribute by linearity of expectation
        for &d in &at.d {
            path.push(pos + d);
            acc.add(at.w * direct_route(laws, j + 1, path, f));
            path.pop();
        }
    }
    acc.s
}

fn spinal_route(
    laws: &[PointProcessLaw],
    steps: &[Vec<(f64, f64)>], // per generation: (tilted prob, displacement)
    k_n: f64,
    theta: f64,
    j: usize,
    prob: f64,
    path: &mut Vec<f64>,
    f: &PathFunctional,
    acc: &mut Kahan,
) {
    if j == laws.len() {
        let s_n = *path.last().unwrap();
        acc.add(prob * (k_n - theta * s_n).exp() * f.eval(path));
        return;
    }
    let pos = path.last().copied().unwrap_or(0.0);
    for &(p, d) in &steps[j] {
        path.push(pos + d);
        spinal_route(laws, steps, k_n, theta, j + 1, prob * p, path, f, acc);
        path.pop();
    }
}

/// Checks E[sum_u f(V(u))] = E[e^{K_n - theta S_n} f(S)] exactly, with the
/// two sides enumerated through independent code paths.
pub fn verify_many_to_one(
    inst: &EnumerableInstance,
    theta: f64,
    f: &PathFunctional,
) -> Result<ManyToOneReport> {
    inst.validate()?;
    if !(theta > 0.0) {
        return Err(Error::Config("theta must be positive".into()));
    }
    let mut path = Vec::with_capacity(inst.n());
    let lhs = direct_route(&inst.laws, 0, &mut path, f);

    let mut k_n = 0.0;
    let mut steps = Vec::with_capacity(inst.n());
    for law in &inst.laws {
        let kappa = law.log_laplace(theta)?;
        k_n += kappa;
        let PointProcessLaw::DiscreteMixture { atoms } = law else { unreachable!() };
        let mut gen: Vec<(f64, f64)> = Vec::new();
        for at in atoms {
            for &d in &at.d {
                gen.push((at.w * (theta * d - kappa).exp(), d));
            }
        }
        // tilted step probabilities must already sum to one
        let tot: f64 = gen.iter().map(|g| g.0).sum();
        if (tot - 1.0).abs() > 1e-9 {
            return Err(Error::Numeric(format!("tilted law sums to {tot}")));
        }
        steps.push(gen);
    }
    let mut acc = Kahan::default();
    spinal_route(&inst.laws, &steps, k_n, theta, 0, 1.0, &mut path, f, &mut acc);
    let rhs = acc.s;

    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    Ok(ManyToOneReport {
        n: inst.n(),
        theta,
        functional: *f,
        lhs,
        rhs,
        rel_gap: (lhs - rhs).abs() / scale,
    })
}

/// Runs the identity over a catalogue of >= 50 instances, three tilts and
/// three functionals each; returns every report.
pub fn many_to_one_catalogue(seed: u64) -> Result<Vec<ManyToOneReport>> {
    use rand::RngExt;
    let base = vec![
        PointProcessLaw::mixture(vec![(0.5, vec![1.0, -1.0]), (0.5, vec![0.0])]),
        PointProcessLaw::mixture(vec![(1.0, vec![1.0, -1.0])]),
        PointProcessLaw::mixture(vec![(0.6, vec![0.5, -0.5, 0.0]), (0.4, vec![1.0])]),
        PointProcessLaw::mixture(vec![(0.3, vec![0.25]), (0.7, vec![0.75, -1.25])]),
    ];
    let mut rng = rng::stream(seed, &[0x3C]);
    let mut out = Vec::new();
    let mut instances = 0usize;
    while instances < 54 {
        let n = 2 + instances % 3; // 2, 3, 4
        let laws: Vec<PointProcessLaw> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < 0.7 {
                    base[rng.random_range(0..base.len())].clone()
                } else {
                    // a fresh random two-atom mixture
                    let w: f64 = rng.random_range(0.2..0.8);
                    PointProcessLaw::mixture(vec![
                        (w, vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]),
                        (1.0 - w, vec![rng.random_range(-1.0..1.0)]),
                    ])
                }
            })
            .collect();
        let inst = EnumerableInstance::new(laws)?;
        let theta_star = solve_theta_star(&inst.empirical_model()).unwrap_or(1.3);
        let fs = [
            PathFunctional::EndpointAbove(0.5),
            PathFunctional::StaysBelowLine { slope: 0.4, offset: 1.0 },
            PathFunctional::ExpEndpoint(0.3),
        ];
        for theta in [0.5, 1.0, theta_star] {
            for f in &fs {
                out.push(verify_many_to_one(&inst, theta, f)?);
            }
        }
        instances += 1;
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DekkingHostReport {
    pub n: usize,
    /// mean of M_{n+1} - max(M_n, M_n') with the pair sharing the shifted
    /// environment
    pub increment: f64,
    pub stderr: f64,
    /// closed-form E[min over children of the root displacement]
    pub c: f64,
    /// increment - c; the inequality says this is >= 0
    pub slack: f64,
}

/// E[min of b iid N(a, sigma^2)] = a - sigma * E[max of b std normals]
fn expected_min_gaussian(b: u32, a: f64, sigma: f64) -> f64 {
    // Simpson quadrature for E max of b std normals
    let (lo, hi, m) = (-9.0f64, 9.0f64, 3600usize);
    let h = (hi - lo) / m as f64;
    let g = |x: f64| x * b as f64 * normal_pdf(x) * crate::special::normal_cdf(x).powi(b as i32 - 1);
    let mut s = g(lo) + g(hi);
    for i in 1..m {
        s += g(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    a - sigma * s * h / 3.0
}

fn root_min_constant(model: &EnvironmentModel) -> Result<f64> {
    let mut c = 0.0;
    for (p, law) in &model.atoms {
        let e = match law {
            PointProcessLaw::GaussianBranching { b, a, sigma } => {
                if *b < 2 {
                    return Err(Error::Config("need >= 2 children per atom".into()));
                }
                expected_min_gaussian(*b, *a, *sigma)
            }
            PointProcessLaw::DiscreteMixture { atoms } => {
                let mut e = 0.0;
                for at in atoms {
                    if at.d.len() < 2 {
                        return Err(Error::Config("need >= 2 children per atom".into()));
                    }
                    e += at.w * at.d.iter().cloned().fold(f64::INFINITY, f64::min);
                }
                e
            }
        };
        c += p * e;
    }
    Ok(c)
}

/// Dekking-Host style increment bound, annealed over environments:
/// E M_{n+1} >= E max(M_n, M_n') + E[min child displacement], with the
/// sibling maxima run in the environment shifted by one generation.
pub fn dekking_host_check(
    model: &EnvironmentModel,
    n: usize,
    replicates: usize,
    cap: usize,
    seed: u64,
    exec: &Executor,
) -> Result<DekkingHostReport> {
    if n < 2 || replicates < 100 {
        return Err(Error::Config("need n >= 2 and >= 100 replicates".into()));
    }
    let c = root_min_constant(model)?;
    let theta = solve_theta_star(model)?;
    let prune = PruneConfig {
        upper_y: f64::INFINITY,
        lower_w: 40.0 / theta,
        cap,
    };
    let diffs = exec.map(replicates, |r| {
        let es = rng::derive(seed, &[STREAM_ENV, r as u64]);
        let mut env = sample_environment(model, n + 1, es).unwrap();
        env.attach_tilt(theta).unwrap();
        let full = simulate_brw(&env, n + 1, &prune, rng::derive(seed, &[STREAM_BRANCH, r as u64, 0]))
            .unwrap()
            .m_n;
        let mut shifted = EnvironmentSequence::from_laws(env.laws()[1..].to_vec(), es);
        shifted.attach_tilt(theta).unwrap();
        let m1 = simulate_brw(&shifted, n, &prune, rng::derive(seed, &[STREAM_BRANCH, r as u64, 1]))
            .unwrap()
            .m_n;
        let m2 = simulate_brw(&shifted, n, &prune, rng::derive(seed, &[STREAM_BRANCH, r as u64, 2]))
            .unwrap()
            .m_n;
        full - m1.max(m2)
    });
    let k = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / k;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (k - 1.0);
    let stderr = (var / k).sqrt();
    Ok(DekkingHostReport { n, increment: mean, stderr, c, slack: mean - c })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrontierExact {
    pub y: f64,
    /// exact P(some particle ever exceeds K_j/theta + y)
    pub p_exceed: f64,
    /// e^{-theta y}
    pub bound: f64,
}

fn no_cross_prob(
    laws: &[PointProcessLaw],
    ceilings: &[f64],
    j: usize,
    pos: f64,
) -> f64 {
    if j == laws.len() {
        return 1.0;
    }
    let PointProcessLaw::DiscreteMixture { atoms } = &laws[j] else { unreachable!() };
    let mut acc = Kahan::default();
    for at in atoms {
        let mut prod = 1.0;
        for &d in &at.d {
            let c = pos + d;
            if c > ceilings[j] {
                prod = 0.0;
                break;
            }
            prod *= no_cross_prob(laws, ceilings, j + 1, c);
            if prod == 0.0 {
                break;
            }
        }
        acc.add(at.w * prod);
    }
    acc.s
}

/// Exact quenched frontier-crossing probabilities by full-tree enumeration,
/// with theta taken from the instance's equal-weight annealed model. The
/// crossing probability must sit below e^{-theta y} for every y.
pub fn exact_frontier_probability(
    inst: &EnumerableInstance,
    ys: &[f64],
) -> Result<Vec<FrontierExact>> {
    inst.validate()?;
    let model = inst.empirical_model();
    let theta = solve_theta_star(&model)?;
    let mut k = 0.0;
    let mut prefixes = Vec::with_capacity(inst.n());
    for law in &inst.laws {
        k += law.log_laplace(theta)?;
        prefixes.push(k);
    }
    let mut out = Vec::with_capacity(ys.len());
    for &y in ys {
        if !(y > 0.0) {
            return Err(Error::Config("y must be positive".into()));
        }
        let ceilings: Vec<f64> = prefixes.iter().map(|k| k / theta + y).collect();
        let p = 1.0 - no_cross_prob(&inst.laws, &ceilings, 0, 0.0);
        out.push(FrontierExact { y, p_exceed: p, bound: (-theta * y).exp() });
    }
    Ok(out)
}
