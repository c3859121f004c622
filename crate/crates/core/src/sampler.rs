//! Euler–Maruyama paths of the target's diffusion and seeded synthetic
//! joint scenarios.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::discrepancy::JointSampleSet;
use crate::error::{Result, SteinError};
use crate::interval::Interval;
use crate::targets::DiffusionCoefficients;

/// Largest `|X|` before a path counts as exploded.
pub const EXPLOSION_LIMIT: f64 = 1e6;
/// Redraws allowed for one step before giving up.
pub const MAX_RETRIES: usize = 100;

/// What to do when a step leaves the support through a finite edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum BoundaryPolicy {
    /// Mirror the overshoot back inside.
    #[default]
    Reflect,
    /// Redraw the Gaussian increment.
    RejectStep,
}

/// Euler–Maruyama settings.
///
/// States are recorded every `thinning` steps after `burn_in` steps. With
/// `paths > 1` the output is split over independent paths, path `p` using
/// stream `p` of the ChaCha8 generator seeded with `seed`; their outputs
/// are concatenated in path order.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SimConfig {
    pub step: f64,
    pub burn_in: u64,
    pub thinning: u64,
    pub n_out: usize,
    pub seed: u64,
    pub boundary_policy: BoundaryPolicy,
    /// Starting point; the target mean when absent.
    pub x0: Option<f64>,
    pub paths: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            burn_in: 100_000,
            thinning: 10,
            n_out: 100_000,
            seed: 0,
            boundary_policy: BoundaryPolicy::Reflect,
            x0: None,
            paths: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, support: Interval) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(SteinError::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if self.thinning == 0 {
            return Err(SteinError::InvalidConfig("thinning must be at least 1".into()));
        }
        if self.paths == 0 {
            return Err(SteinError::InvalidConfig("paths must be at least 1".into()));
        }
        if let Some(x0) = self.x0 {
            if !support.contains(x0) {
                return Err(SteinError::InvalidConfig(format!("x0 = {x0} is not inside {support}")));
            }
        }
        Ok(())
    }

    /// Output count of each path; `n_out` is split as evenly as possible
    /// with the earlier paths taking the remainder.
    pub fn path_lengths(&self) -> Vec<usize> {
        let paths = self.paths.max(1);
        (0..paths)
            .map(|p| self.n_out / paths + usize::from(p < self.n_out % paths))
            .collect()
    }
}

/// Simulate `dX = b(X) dt + sqrt(a(X)) dW` by Euler–Maruyama.
pub fn simulate_sde(coeffs: &DiffusionCoefficients, cfg: &SimConfig) -> Result<Vec<f64>> {
    let support = coeffs.support();
    cfg.validate(support)?;
    if cfg.n_out == 0 {
        return Ok(Vec::new());
    }
    let x0 = cfg.x0.unwrap_or(coeffs.mean());
    let plan: Vec<(u64, usize)> = cfg
        .path_lengths()
        .into_iter()
        .enumerate()
        .map(|(p, share)| (p as u64, share))
        .filter(|&(_, share)| share > 0)
        .collect();
    let runs = crate::par::map_collect(&plan, |&(stream, share)| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        run_path(coeffs, cfg, x0, share, &mut rng)
    });
    let mut out = Vec::with_capacity(cfg.n_out);
    for r in runs {
        out.extend(r?);
    }
    Ok(out)
}

fn run_path<R: Rng>(coeffs: &DiffusionCoefficients, cfg: &SimConfig, x0: f64, n_out: usize, rng: &mut R) -> Result<Vec<f64>> {
    let support = coeffs.support();
    let dt = cfg.step;
    let mut x = x0;
    let mut a = coeffs
        .a(x)
        .map_err(|e| SteinError::InvalidConfig(format!("cannot start at {x0}: {e}")))?;
    let total = cfg.burn_in + n_out as u64 * cfg.thinning;
    let mut out = Vec::with_capacity(n_out);
    for step in 0..total {
        let drift = x + coeffs.b(x) * dt;
        let scale = (a * dt).sqrt();
        let mut accepted = false;
        for _ in 0..=MAX_RETRIES {
            let xi: f64 = StandardNormal.sample(rng);
            let mut y = drift + scale * xi;
            if !support.contains(y) && cfg.boundary_policy == BoundaryPolicy::Reflect {
                y = reflect(y, support);
            }
            if !support.contains(y) {
                continue;
            }
            if let Ok(ay) = coeffs.a(y) {
                x = y;
                a = ay;
                accepted = true;
                break;
            }
        }
        if !accepted || x.abs() > EXPLOSION_LIMIT {
            return Err(SteinError::ExplodedPath { step });
        }
        if step >= cfg.burn_in && (step - cfg.burn_in + 1) % cfg.thinning == 0 {
            out.push(x);
        }
    }
    Ok(out)
}

/// Mirror once across whichever finite edge was crossed.
fn reflect(y: f64, s: Interval) -> f64 {
    if y <= s.lo && s.lo.is_finite() {
        2.0 * s.lo - y
    } else if y >= s.hi && s.hi.is_finite() {
        2.0 * s.hi - y
    } else {
        y
    }
}

/// Synthetic joint laws with known population structure.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields))]
pub enum Scenario {
    /// `X ~ N(0, 1)` independent of `Y` uniform on `{1..k}`.
    IndependentNull { k: u32 },
    /// `X ~ N(delta, 1)` independent of `Y` uniform on `{1..k}`.
    MeanShift { delta: f64, k: u32 },
    /// `Y ~ Bernoulli(1/2)`, `X = (2Y - 1)|Z|`: `X ~ N(0, 1)` but not independent of `Y`.
    SignCoupled,
    /// `(X, Y)` standard bivariate normal with correlation `rho`.
    CorrelatedGaussian { rho: f64 },
    /// `Y` uniform on `{1..k}`, `X | Y = j ~ N(means[j-1], 1)`.
    CountableMixture { means: Vec<f64> },
}

impl Scenario {
    /// Build from a name and positional parameters:
    /// `independent-null [k]`, `mean-shift [delta, k]`, `sign-coupled`,
    /// `correlated-gaussian [rho]`, `countable-mixture [means...]`.
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let count = |v: Option<&f64>, default: u32| -> Result<u32> {
            match v {
                None => Ok(default),
                Some(&k) if k >= 1.0 && k.fract() == 0.0 && k <= u32::MAX as f64 => Ok(k as u32),
                Some(k) => Err(SteinError::InvalidParams(format!("k must be a positive integer, got {k}"))),
            }
        };
        let s = match name {
            "independent-null" => Scenario::IndependentNull {
                k: count(params.first(), 3)?,
            },
            "mean-shift" => Scenario::MeanShift {
                delta: params.first().copied().unwrap_or(0.5),
                k: count(params.get(1), 3)?,
            },
            "sign-coupled" => Scenario::SignCoupled,
            "correlated-gaussian" => Scenario::CorrelatedGaussian {
                rho: params.first().copied().unwrap_or(0.5),
            },
            "countable-mixture" => Scenario::CountableMixture {
                means: if params.is_empty() {
                    alloc::vec![0.0, 0.5, -0.5]
                } else {
                    params.to_vec()
                },
            },
            other => return Err(SteinError::UnknownScenario(other.into())),
        };
        s.check()?;
        Ok(s)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::IndependentNull { .. } => "independent-null",
            Scenario::MeanShift { .. } => "mean-shift",
            Scenario::SignCoupled => "sign-coupled",
            Scenario::CorrelatedGaussian { .. } => "correlated-gaussian",
            Scenario::CountableMixture { .. } => "countable-mixture",
        }
    }

    /// Whether `Y` takes countably many values.
    pub fn countable_y(&self) -> bool {
        !matches!(self, Scenario::CorrelatedGaussian { .. })
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(SteinError::InvalidParams(m.into()));
        match self {
            Scenario::IndependentNull { k } | Scenario::MeanShift { k, .. } if *k == 0 => bad("k must be at least 1"),
            Scenario::MeanShift { delta, .. } if !delta.is_finite() => bad("delta must be finite"),
            Scenario::CorrelatedGaussian { rho } if !(rho.abs() <= 1.0) => bad("rho must lie in [-1, 1]"),
            Scenario::CountableMixture { means } if means.is_empty() || means.iter().any(|m| !m.is_finite()) => {
                bad("means must be a nonempty list of finite numbers")
            }
            _ => Ok(()),
        }
    }
}

/// Draw `n` pairs from a scenario.
pub fn sample_scenario(scenario: &Scenario, n: usize, seed: u64) -> Result<JointSampleSet> {
    scenario.check()?;
    if n == 0 {
        return Err(SteinError::InvalidParams("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y) = match scenario {
            Scenario::IndependentNull { k } => {
                let y = rng.random_range(1..=*k) as f64;
                (StandardNormal.sample(&mut rng), y)
            }
            Scenario::MeanShift { delta, k } => {
                let y = rng.random_range(1..=*k) as f64;
                let z: f64 = StandardNormal.sample(&mut rng);
                (delta + z, y)
            }
            Scenario::SignCoupled => {
                let y = f64::from(u8::from(rng.random_bool(0.5)));
                let z: f64 = StandardNormal.sample(&mut rng);
                ((2.0 * y - 1.0) * z.abs(), y)
            }
            Scenario::CorrelatedGaussian { rho } => {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                (z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2)
            }
            Scenario::CountableMixture { means } => {
                let j = rng.random_range(0..means.len());
                let z: f64 = StandardNormal.sample(&mut rng);
                (means[j] + z, (j + 1) as f64)
            }
        };
        xs.push(x);
        ys.push(y);
    }
    Ok(JointSampleSet::new(xs, ys)?.with_countable_hint(scenario.countable_y()))
}
