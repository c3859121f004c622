//! Test functions and the Gaussian and diffusion Stein operators.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Result, SteinError};
use crate::interval::Interval;
use crate::stats::MeanEstimate;
use crate::targets::{DiffusionCoefficients, TargetDistribution};
use crate::RealFn;

/// Value and derivative evaluated together.
pub type JetFn = Arc<dyn Fn(f64) -> Result<(f64, f64)> + Send + Sync>;

#[derive(Clone)]
enum Shape {
    /// `level` on `(lo, hi]`, zero elsewhere.
    Indicator { lo: f64, hi: f64, level: f64 },
    Constant(f64),
    Smooth {
        value: RealFn,
        derivative: Option<RealFn>,
        bound: Option<f64>,
        breaks: Vec<f64>,
    },
    Jet { jet: JetFn, bound: Option<f64>, breaks: Vec<f64> },
    Combination(Vec<(f64, TestFunction)>),
}

/// A real test function with its derivative.
///
/// Derivatives that are not supplied are taken by central differences with
/// step `max(1e-6, 1e-7 |x|)`.
#[derive(Clone)]
pub struct TestFunction {
    label: String,
    domain: Interval,
    shape: Shape,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .finish()
    }
}

/// Central-difference step at `x`.
pub fn fd_step(x: f64) -> f64 {
    (1e-7 * x.abs()).max(1e-6)
}

impl TestFunction {
    /// Indicator of `(lo, hi]`. Either end may be infinite.
    pub fn indicator(lo: f64, hi: f64) -> Self {
        Self::scaled_indicator(lo, hi, 1.0)
    }

    /// `level` times the indicator of `(lo, hi]`.
    pub fn scaled_indicator(lo: f64, hi: f64, level: f64) -> Self {
        let label = if level == 1.0 {
            format!("1({}, {}]", fmt_end(lo), fmt_end(hi))
        } else {
            format!("{level}*1({}, {}]", fmt_end(lo), fmt_end(hi))
        };
        Self {
            label,
            domain: Interval::REAL_LINE,
            shape: Shape::Indicator { lo, hi, level },
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            label: format!("const {c}"),
            domain: Interval::REAL_LINE,
            shape: Shape::Constant(c),
        }
    }

    /// A function given by a closure; the derivative is numeric until
    /// [`with_derivative`](Self::with_derivative) supplies one.
    pub fn new<F>(label: impl Into<String>, domain: Interval, value: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            domain,
            shape: Shape::Smooth {
                value: Arc::new(value),
                derivative: None,
                bound: None,
                breaks: Vec::new(),
            },
        }
    }

    /// A function that evaluates value and derivative together.
    pub fn from_jet(label: impl Into<String>, domain: Interval, jet: JetFn, bound: Option<f64>) -> Self {
        Self {
            label: label.into(),
            domain,
            shape: Shape::Jet {
                jet,
                bound,
                breaks: Vec::new(),
            },
        }
    }

    pub fn with_derivative<F>(mut self, derivative: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if let Shape::Smooth { derivative: d, .. } = &mut self.shape {
            *d = Some(Arc::new(derivative));
        }
        self
    }

    /// Declare `sup |f|`.
    pub fn with_bound(mut self, b: f64) -> Self {
        match &mut self.shape {
            Shape::Smooth { bound, .. } | Shape::Jet { bound, .. } => *bound = Some(b),
            _ => {}
        }
        self
    }

    /// Declare points where the function may jump or kink.
    pub fn with_breaks(mut self, points: &[f64]) -> Self {
        match &mut self.shape {
            Shape::Smooth { breaks, .. } | Shape::Jet { breaks, .. } => {
                breaks.extend_from_slice(points);
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
            }
            _ => {}
        }
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `Σ αᵢ fᵢ` on the intersection of the domains.
    pub fn linear_combination(terms: &[(f64, TestFunction)]) -> Result<Self> {
        let mut domain = Interval::REAL_LINE;
        for (_, f) in terms {
            domain = Interval::new(domain.lo.max(f.domain.lo), domain.hi.min(f.domain.hi))
                .ok_or_else(|| SteinError::InvalidArgument("disjoint test function domains".into()))?;
        }
        let label = terms
            .iter()
            .map(|(a, f)| format!("{a}*[{}]", f.label))
            .collect::<Vec<_>>()
            .join(" + ");
        Ok(Self {
            label,
            domain,
            shape: Shape::Combination(terms.to_vec()),
        })
    }

    pub fn scale(&self, alpha: f64) -> Self {
        match self.shape {
            Shape::Indicator { lo, hi, level } => {
                let mut f = Self::scaled_indicator(lo, hi, alpha * level);
                f.domain = self.domain;
                f
            }
            Shape::Constant(c) => Self::constant(alpha * c),
            _ => Self {
                label: format!("{alpha}*[{}]", self.label),
                domain: self.domain,
                shape: Shape::Combination(alloc::vec![(alpha, self.clone())]),
            },
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    /// `(lo, hi, level)` when this is a scaled interval indicator.
    pub fn as_indicator(&self) -> Option<(f64, f64, f64)> {
        match self.shape {
            Shape::Indicator { lo, hi, level } => Some((lo, hi, level)),
            _ => None,
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.shape {
            Shape::Constant(c) => Some(c),
            Shape::Indicator { lo, hi, level } if lo == f64::NEG_INFINITY && hi == f64::INFINITY => {
                Some(level)
            }
            _ => None,
        }
    }

    /// Known `sup |f|`, if any.
    pub fn bound(&self) -> Option<f64> {
        match &self.shape {
            Shape::Indicator { level, .. } => Some(level.abs()),
            Shape::Constant(c) => Some(c.abs()),
            Shape::Smooth { bound, .. } | Shape::Jet { bound, .. } => *bound,
            Shape::Combination(terms) => terms
                .iter()
                .map(|(a, f)| f.bound().map(|b| a.abs() * b))
                .sum::<Option<f64>>(),
        }
    }

    /// Finite points where the function may be discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = match &self.shape {
            Shape::Indicator { lo, hi, .. } => [*lo, *hi].into_iter().filter(|v| v.is_finite()).collect(),
            Shape::Constant(_) => Vec::new(),
            Shape::Smooth { breaks, .. } | Shape::Jet { breaks, .. } => breaks.clone(),
            Shape::Combination(terms) => terms.iter().flat_map(|(_, f)| f.breakpoints()).collect(),
        };
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Value at `x`; NaN where a jet-backed function fails.
    pub fn value(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Indicator { lo, hi, level } => {
                if *lo < x && x <= *hi {
                    *level
                } else {
                    0.0
                }
            }
            Shape::Constant(c) => *c,
            Shape::Smooth { value, .. } => value(x),
            Shape::Jet { jet, .. } => jet(x).map_or(f64::NAN, |j| j.0),
            Shape::Combination(terms) => terms.iter().map(|(a, f)| a * f.value(x)).sum(),
        }
    }

    pub fn try_value(&self, x: f64) -> Result<f64> {
        match &self.shape {
            Shape::Jet { jet, .. } => jet(x).map(|j| j.0),
            Shape::Combination(terms) => {
                let mut s = 0.0;
                for (a, f) in terms {
                    s += a * f.try_value(x)?;
                }
                Ok(s)
            }
            _ => Ok(self.value(x)),
        }
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        self.jet(x).map(|j| j.1)
    }

    /// `(f(x), f'(x))`. Indicators have derivative zero away from their
    /// jumps.
    pub fn jet(&self, x: f64) -> Result<(f64, f64)> {
        match &self.shape {
            Shape::Indicator { .. } | Shape::Constant(_) => Ok((self.value(x), 0.0)),
            Shape::Smooth {
                value, derivative, ..
            } => {
                let v = value(x);
                let d = match derivative {
                    Some(d) => d(x),
                    None => self.central_difference(x)?,
                };
                Ok((v, d))
            }
            Shape::Jet { jet, .. } => jet(x),
            Shape::Combination(terms) => {
                let (mut v, mut d) = (0.0, 0.0);
                for (a, f) in terms {
                    let (fv, fd) = f.jet(x)?;
                    v += a * fv;
                    d += a * fd;
                }
                Ok((v, d))
            }
        }
    }

    fn central_difference(&self, x: f64) -> Result<f64> {
        let h = fd_step(x);
        if !self.domain.contains(x - h) || !self.domain.contains(x + h) {
            return Err(SteinError::DerivativeUnavailable { x });
        }
        Ok((self.try_value(x + h)? - self.try_value(x - h)?) / (2.0 * h))
    }
}

fn fmt_end(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.6}")
    }
}

/// Which Stein operator.
#[derive(Debug, Clone)]
pub enum OperatorKind {
    /// `f'(x) - x f(x)` for the standard normal.
    Gaussian,
    /// `a(x) f'(x) / 2 + b(x) f(x)`.
    Diffusion(Arc<DiffusionCoefficients>),
}

/// A Stein operator bound to its target law.
#[derive(Debug, Clone)]
pub struct SteinOperator {
    kind: OperatorKind,
    target: Arc<TargetDistribution>,
}

impl SteinOperator {
    /// The Gaussian operator. The target must be the standard normal law.
    pub fn gaussian(target: Arc<TargetDistribution>) -> Result<Self> {
        let ok = target.support() == Interval::REAL_LINE
            && (target.is_standard_normal()
                || (target.mean().abs() < 1e-6 && (target.variance() - 1.0).abs() < 1e-6));
        if !ok {
            return Err(SteinError::InvalidArgument(
                "the Gaussian operator needs a standard normal target".into(),
            ));
        }
        Ok(Self {
            kind: OperatorKind::Gaussian,
            target,
        })
    }

    pub fn diffusion(coeffs: DiffusionCoefficients) -> Self {
        let target = coeffs.target_arc();
        Self {
            kind: OperatorKind::Diffusion(Arc::new(coeffs)),
            target,
        }
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, OperatorKind::Gaussian)
    }

    pub fn coefficients(&self) -> Option<&Arc<DiffusionCoefficients>> {
        match &self.kind {
            OperatorKind::Diffusion(c) => Some(c),
            OperatorKind::Gaussian => None,
        }
    }

    pub fn target(&self) -> &Arc<TargetDistribution> {
        &self.target
    }

    pub fn support(&self) -> Interval {
        self.target.support()
    }

    /// `(a(x)/2, b(x))`; `(1, -x)` for the Gaussian operator.
    pub fn half_a_and_b(&self, x: f64) -> Result<(f64, f64)> {
        match &self.kind {
            OperatorKind::Gaussian => Ok((1.0, -x)),
            OperatorKind::Diffusion(c) => Ok((0.5 * c.a(x)?, c.b(x))),
        }
    }

    /// Apply the operator to a function given by its value and derivative
    /// at `x`.
    pub fn apply_jet(&self, x: f64, f: f64, df: f64) -> Result<f64> {
        let (ha, b) = self.half_a_and_b(x)?;
        Ok(ha * df + b * f)
    }
}

/// `𝒩f(x)`.
pub fn apply_stein_operator(op: &SteinOperator, f: &TestFunction, x: f64) -> Result<f64> {
    if !op.support().contains(x) || !f.domain().contains(x) {
        return Err(SteinError::OutOfSupport { x });
    }
    let (v, d) = f.jet(x)?;
    op.apply_jet(x, v, d)
}

/// Largest share of a sample that may fall outside the support and be
/// silently dropped.
pub const OUT_OF_SUPPORT_SLACK: f64 = 1e-3;

/// Indices of sample points inside `domain`, or an error when more than
/// the allowed share lies outside.
pub(crate) fn retained_indices(xs: &[f64], domain: Interval) -> Result<Vec<usize>> {
    let kept: Vec<usize> = (0..xs.len()).filter(|&i| domain.contains(xs[i])).collect();
    let excluded = xs.len() - kept.len();
    if excluded as f64 > OUT_OF_SUPPORT_SLACK * xs.len() as f64 {
        return Err(SteinError::TooManyOutOfSupport {
            excluded,
            n: xs.len(),
        });
    }
    Ok(kept)
}

/// Monte Carlo mean of `𝒩f` over a sample.
pub fn expected_stein(op: &SteinOperator, f: &TestFunction, xs: &[f64]) -> Result<MeanEstimate> {
    if xs.is_empty() {
        return Err(SteinError::EmptySample);
    }
    let domain = Interval::new(op.support().lo.max(f.domain().lo), op.support().hi.min(f.domain().hi))
        .ok_or(SteinError::EmptySample)?;
    let kept = retained_indices(xs, domain)?;
    let mut vals = Vec::with_capacity(kept.len());
    for &i in &kept {
        vals.push(apply_stein_operator(op, f, xs[i])?);
    }
    MeanEstimate::from_slice(&vals).ok_or(SteinError::EmptySample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{construct_diffusion_coefficients, validate_target, Density, QuadratureConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_target() -> Arc<TargetDistribution> {
        Arc::new(validate_target(Density::standard_normal(), &QuadratureConfig::default()).unwrap())
    }

    fn identity() -> TestFunction {
        TestFunction::new("x", Interval::REAL_LINE, |x| x)
    }

    #[test]
    fn gaussian_operator_on_polynomials() {
        let op = SteinOperator::gaussian(gaussian_target()).unwrap();
        let one = TestFunction::constant(1.0);
        for &x in &[-2.0, 0.0, 0.5, 3.0] {
            assert_eq!(apply_stein_operator(&op, &one, x).unwrap(), -x);
            let v = apply_stein_operator(&op, &identity(), x).unwrap();
            assert!((v - (1.0 - x * x)).abs() < 1e-8);
        }
    }

    #[test]
    fn exponential_diffusion_at_three() {
        let t = validate_target(Density::exponential(1.0), &QuadratureConfig::default()).unwrap();
        let op = SteinOperator::diffusion(construct_diffusion_coefficients(&t, 1.0).unwrap());
        let v = apply_stein_operator(&op, &TestFunction::constant(1.0), 3.0).unwrap();
        assert!((v + 2.0).abs() < 1e-12);
        assert!(matches!(
            apply_stein_operator(&op, &TestFunction::constant(1.0), -1.0),
            Err(SteinError::OutOfSupport { .. })
        ));
    }

    #[test]
    fn gaussian_rejects_other_targets() {
        let t = validate_target(Density::exponential(1.0), &QuadratureConfig::default()).unwrap();
        assert!(SteinOperator::gaussian(Arc::new(t)).is_err());
    }

    #[test]
    fn diffusion_with_gaussian_target_matches_gaussian_operator() {
        let t = gaussian_target();
        let g = SteinOperator::gaussian(t.clone()).unwrap();
        let d = SteinOperator::diffusion(construct_diffusion_coefficients(&t, 1.0).unwrap());
        let f = TestFunction::new("sin", Interval::REAL_LINE, |x| x.sin()).with_derivative(|x| x.cos());
        for i in 0..100 {
            let x = -5.0 + 0.1 * i as f64;
            let a = apply_stein_operator(&g, &f, x).unwrap();
            let b = apply_stein_operator(&d, &f, x).unwrap();
            assert!((a - b).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn expected_stein_edge_cases() {
        let op = SteinOperator::gaussian(gaussian_target()).unwrap();
        let m = expected_stein(&op, &identity(), &[0.0]).unwrap();
        assert!((m.value - 1.0).abs() < 1e-9);
        assert_eq!(m.std_error, 0.0);
        assert_eq!(expected_stein(&op, &identity(), &[]).unwrap_err(), SteinError::EmptySample);
    }

    #[test]
    fn expected_stein_out_of_support_slack() {
        let t = validate_target(Density::exponential(1.0), &QuadratureConfig::default()).unwrap();
        let op = SteinOperator::diffusion(construct_diffusion_coefficients(&t, 1.0).unwrap());
        let one = TestFunction::constant(1.0);
        let mut xs = alloc::vec![1.0; 2000];
        xs[0] = -1.0;
        xs[1] = 0.0;
        assert_eq!(expected_stein(&op, &one, &xs).unwrap().n, 1998);
        xs[2] = -2.0;
        assert!(matches!(
            expected_stein(&op, &one, &xs),
            Err(SteinError::TooManyOutOfSupport { excluded: 3, n: 2000 })
        ));
    }

    #[test]
    fn gaussian_null_mean_of_identity() {
        let op = SteinOperator::gaussian(gaussian_target()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = expected_stein(&op, &identity(), &xs).unwrap();
        assert!(m.value.abs() <= 3.0 * m.std_error, "{m:?}");
    }

    #[test]
    fn finite_difference_leaves_domain() {
        let f = TestFunction::new("sqrt", Interval::new(0.0, f64::INFINITY).unwrap(), |x| x.sqrt());
        assert!(matches!(f.derivative(1e-7), Err(SteinError::DerivativeUnavailable { .. })));
        assert!((f.derivative(4.0).unwrap() - 0.25).abs() < 1e-8);
    }

    #[test]
    fn indicator_is_left_open_right_closed() {
        let f = TestFunction::indicator(0.0, 1.0);
        assert_eq!(f.value(0.0), 0.0);
        assert_eq!(f.value(1.0), 1.0);
        assert_eq!(f.value(0.5), 1.0);
        assert_eq!(f.breakpoints(), alloc::vec![0.0, 1.0]);
        assert_eq!(TestFunction::indicator(f64::NEG_INFINITY, f64::INFINITY).as_constant(), Some(1.0));
    }

    proptest! {
        #[test]
        fn analytic_derivative_matches_central_difference(x in -5.0f64..5.0, w in 0.2f64..3.0) {
            let f = TestFunction::new("sin", Interval::REAL_LINE, move |x| (w * x).sin())
                .with_derivative(move |x| w * (w * x).cos());
            let h = 1e-5;
            let fd = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
            prop_assert!((f.derivative(x).unwrap() - fd).abs() <= 1e-6);
        }

        #[test]
        fn operator_is_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, x in -4.0f64..4.0, w in 0.1f64..2.0) {
            let op = SteinOperator::gaussian(shared_gaussian()).unwrap();
            let f = TestFunction::new("sin", Interval::REAL_LINE, move |x| (w * x).sin())
                .with_derivative(move |x| w * (w * x).cos());
            let g = TestFunction::new("sq", Interval::REAL_LINE, |x| x * x).with_derivative(|x| 2.0 * x);
            let combo = TestFunction::linear_combination(&[(alpha, f.clone()), (beta, g.clone())]).unwrap();
            let lhs = apply_stein_operator(&op, &combo, x).unwrap();
            let rhs = alpha * apply_stein_operator(&op, &f, x).unwrap()
                + beta * apply_stein_operator(&op, &g, x).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10);
        }
    }

    fn shared_gaussian() -> Arc<TargetDistribution> {
        use std::sync::OnceLock;
        static T: OnceLock<Arc<TargetDistribution>> = OnceLock::new();
        T.get_or_init(gaussian_target).clone()
    }
}
