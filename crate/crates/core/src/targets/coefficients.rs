use alloc::sync::Arc;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::TargetDistribution;
use crate::error::{Result, SteinError};
use crate::interval::Interval;

/// Drift and squared diffusion coefficients whose SDE
/// `dX = b(X) dt + sqrt(a(X)) dW` has the target as invariant law:
///
/// * `a(x) = 2θ ∫_l^x (m - y) p(y) dy / p(x)`
/// * `b(x) = -θ (x - m)`
#[derive(Debug, Clone)]
pub struct DiffusionCoefficients {
    theta: f64,
    mean: f64,
    target: Arc<TargetDistribution>,
}

impl DiffusionCoefficients {
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn target(&self) -> &TargetDistribution {
        &self.target
    }

    pub fn target_arc(&self) -> Arc<TargetDistribution> {
        self.target.clone()
    }

    pub fn support(&self) -> Interval {
        self.target.support()
    }

    pub fn b(&self, x: f64) -> f64 {
        -self.theta * (x - self.mean)
    }

    pub fn a(&self, x: f64) -> Result<f64> {
        let s = self.target.side_integrals(x)?;
        self.a_from(x, &s)
    }

    pub(crate) fn a_from(&self, x: f64, s: &super::SideIntegrals) -> Result<f64> {
        let a = 2.0 * self.theta * s.moment_over_density();
        if a > 0.0 && a.is_finite() {
            Ok(a)
        } else {
            Err(SteinError::NumericallyDegenerate { x })
        }
    }

    /// `(a(x), b(x))` in one call.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        Ok((self.a(x)?, self.b(x)))
    }

    /// The cached grid: nodes and `∫_l^x (m - y) p(y) dy` at each node.
    pub fn integral_cache(&self) -> (&[f64], &[f64]) {
        let c = &self.target.cache;
        (&c.nodes, &c.lower_moment)
    }

    /// `a(x) p(x)` at points approaching each finite or infinite edge, for
    /// checking that the flux vanishes there.
    pub fn edge_flux(&self, probes: usize) -> Vec<(f64, f64)> {
        let t = &self.target;
        let mut out = Vec::new();
        for k in 1..=probes {
            let p = (-(4.0 + 2.0 * k as f64)).exp();
            for x in [t.quantile(p), t.quantile(1.0 - p)] {
                if let Ok(s) = t.side_integrals(x) {
                    let flux = 2.0 * self.theta * s.moment * s.log_scale.exp();
                    out.push((x, flux));
                }
            }
        }
        out
    }
}

/// Build `(a, b)` for a validated target and a mean-reversion rate `θ > 0`.
pub fn construct_diffusion_coefficients(
    target: &TargetDistribution,
    theta: f64,
) -> Result<DiffusionCoefficients> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(SteinError::InvalidArgument(alloc::format!(
            "theta must be positive and finite, got {theta}"
        )));
    }
    Ok(DiffusionCoefficients {
        theta,
        mean: target.mean(),
        target: Arc::new(target.clone()),
    })
}
