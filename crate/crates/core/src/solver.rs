//! Bounded solutions of Stein equations, their norm certificates, and the
//! finite dictionaries of indicators and solutions.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SteinError};
use crate::interval::Interval;
use crate::operators::{OperatorKind, SteinOperator, TestFunction};
use crate::quadrature::{integrate, integrate_ray, Tolerance};
use crate::special::{mills_ratio, normal_cdf, normal_pdf, normal_quantile, normal_sf, SQRT_HALF_PI};
use crate::targets::{DiffusionCoefficients, TargetDistribution};

/// Residual tolerance of the certificate.
pub const RESIDUAL_TOL: f64 = 1e-6;
const QUANTILE_PROBES: usize = 512;
const RANDOM_PROBES: usize = 200;
const PROBE_SEED: u64 = 0x5ce7_1f1c_a7e5;

/// Which Stein equation a solution solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SolutionKind {
    Gaussian,
    Diffusion,
}

/// How the derivative bound of a function class is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DerivativeForm {
    /// `sup |f'|`
    Plain,
    /// `sup |a f'|`
    AWeighted,
}

/// `sup |f| <= c1` and `sup |f'| <= c2` (or `sup |a f'| <= c2`).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FunctionClassBounds {
    pub c1: f64,
    pub c2: f64,
    pub derivative_form: DerivativeForm,
}

impl FunctionClassBounds {
    /// Bounds for solutions of the Gaussian equation with an indicator
    /// right-hand side: `sqrt(pi/2)` and `2`.
    pub fn gaussian_indicator() -> Self {
        Self {
            c1: SQRT_HALF_PI,
            c2: 2.0,
            derivative_form: DerivativeForm::Plain,
        }
    }

    pub fn new(c1: f64, c2: f64, derivative_form: DerivativeForm) -> Result<Self> {
        if !(c1 > 0.0 && c2 > 0.0) {
            return Err(SteinError::InvalidArgument("class bounds must be positive".into()));
        }
        Ok(Self {
            c1,
            c2,
            derivative_form,
        })
    }

    /// Whether a certified solution lies in the class, with slack `1e-9`.
    pub fn contains(&self, s: &SteinSolution) -> bool {
        s.sup_f <= self.c1 + 1e-9 && s.sup_df <= self.c2 + 1e-9
    }
}

#[derive(Clone)]
enum Repr {
    Zero,
    /// Unit-level quantities for `1(a, b]`, scaled by `level`.
    GaussianIndicator {
        a: f64,
        b: f64,
        level: f64,
        p: f64,
        pbar: f64,
    },
    GaussianGeneral,
    DiffusionIndicator {
        coeffs: Arc<DiffusionCoefficients>,
        c: f64,
        d: f64,
        level: f64,
        p: f64,
        pbar: f64,
        f_c: f64,
        s_d: f64,
    },
    DiffusionGeneral(Arc<DiffusionCoefficients>),
}

/// A bounded solution `f` of `𝒩f = h - E h`.
#[derive(Clone)]
pub struct SteinSolution {
    h: TestFunction,
    eh: f64,
    kind: SolutionKind,
    repr: Repr,
    sup_f: f64,
    sup_df: f64,
    max_residual: f64,
}

impl fmt::Debug for SteinSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SteinSolution")
            .field("h", &self.h.label())
            .field("eh", &self.eh)
            .field("kind", &self.kind)
            .field("sup_f", &self.sup_f)
            .field("sup_df", &self.sup_df)
            .field("max_residual", &self.max_residual)
            .finish()
    }
}

impl SteinSolution {
    pub fn h(&self) -> &TestFunction {
        &self.h
    }

    pub fn h_label(&self) -> &str {
        self.h.label()
    }

    pub fn eh(&self) -> f64 {
        self.eh
    }

    pub fn kind(&self) -> SolutionKind {
        self.kind
    }

    /// Observed `sup |f|` over the probe grid.
    pub fn sup_f(&self) -> f64 {
        self.sup_f
    }

    /// Observed `sup |f'|` (Gaussian) or `sup |a f'|` (diffusion).
    pub fn sup_df(&self) -> f64 {
        self.sup_df
    }

    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    /// The certified sups as class bounds.
    pub fn bounds(&self) -> FunctionClassBounds {
        FunctionClassBounds {
            c1: self.sup_f,
            c2: self.sup_df,
            derivative_form: match self.kind {
                SolutionKind::Gaussian => DerivativeForm::Plain,
                SolutionKind::Diffusion => DerivativeForm::AWeighted,
            },
        }
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        self.eval(x).map(|e| e.f)
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        self.jet(x).map(|j| j.1)
    }

    /// `(f(x), f'(x))`, the derivative read off the equation itself.
    pub fn jet(&self, x: f64) -> Result<(f64, f64)> {
        let e = self.eval(x)?;
        let rhs = self.h.value(x) - self.eh;
        let df = match self.kind {
            SolutionKind::Gaussian => x * e.f + rhs,
            SolutionKind::Diffusion => 2.0 * (rhs - e.b * e.f) / e.a,
        };
        Ok((e.f, df))
    }

    /// `𝒩f(x)` for the operator this solution was built for.
    pub fn apply_operator(&self, x: f64) -> Result<f64> {
        let e = self.eval(x)?;
        let (f, df) = self.jet(x)?;
        Ok(match self.kind {
            SolutionKind::Gaussian => df - x * f,
            SolutionKind::Diffusion => 0.5 * e.a * df + e.b * f,
        })
    }

    /// The solution as a test function with its exact derivative.
    pub fn to_test_function(&self) -> TestFunction {
        let me = Arc::new(self.clone());
        let domain = match &self.repr {
            Repr::DiffusionIndicator { coeffs, .. } | Repr::DiffusionGeneral(coeffs) => coeffs.support(),
            _ => Interval::REAL_LINE,
        };
        let label = format!("f[{}]", self.h.label());
        TestFunction::from_jet(label, domain, Arc::new(move |x| me.jet(x)), Some(self.sup_f))
            .with_breaks(&self.h.breakpoints())
    }

    fn eval(&self, x: f64) -> Result<Eval> {
        match &self.repr {
            Repr::Zero => match self.kind {
                SolutionKind::Gaussian => Ok(Eval { f: 0.0, a: 2.0, b: -x }),
                SolutionKind::Diffusion => Err(SteinError::InvalidArgument(
                    "zero diffusion solution carries no coefficients".into(),
                )),
            },
            Repr::GaussianIndicator {
                a,
                b,
                level,
                p,
                pbar,
            } => Ok(Eval {
                f: level * gaussian_indicator_value(x, *a, *b, *p, *pbar),
                a: 2.0,
                b: -x,
            }),
            Repr::GaussianGeneral => Ok(Eval {
                f: gaussian_general_value(&self.h, self.eh, x)?,
                a: 2.0,
                b: -x,
            }),
            Repr::DiffusionIndicator {
                coeffs,
                c,
                d,
                level,
                p,
                pbar,
                f_c,
                s_d,
            } => {
                let t = coeffs.target();
                let s = t.side_integrals(x)?;
                let a = coeffs.a_from(x, &s)?;
                let inv = (-s.log_scale).exp();
                let g = if s.upper {
                    if x >= *d {
                        p * s.mass
                    } else if x >= *c {
                        s_d * inv - pbar * s.mass
                    } else {
                        -p * (inv - s.mass)
                    }
                } else if x <= *c {
                    -p * s.mass
                } else if x <= *d {
                    pbar * s.mass - f_c * inv
                } else {
                    p * (inv - s.mass)
                };
                Ok(Eval {
                    f: level * g / (coeffs.theta() * s.moment),
                    a,
                    b: coeffs.b(x),
                })
            }
            Repr::DiffusionGeneral(coeffs) => {
                let t = coeffs.target();
                let s = t.side_integrals(x)?;
                let a = coeffs.a_from(x, &s)?;
                let g = diffusion_general_scaled(t, &self.h, self.eh, x, s.upper, s.log_scale)?;
                Ok(Eval {
                    f: g / (coeffs.theta() * s.moment),
                    a,
                    b: coeffs.b(x),
                })
            }
        }
    }
}

struct Eval {
    f: f64,
    a: f64,
    b: f64,
}

/// Unit-level solution for `h = 1(a, b]` against the standard normal,
/// written with Mills ratios so that no exponential overflows.
fn gaussian_indicator_value(x: f64, a: f64, b: f64, p: f64, pbar: f64) -> f64 {
    if x <= 0.0 {
        let rho = mills_ratio(-x);
        // Φ(c) / φ(x) for c <= x <= 0.
        let t = |c: f64| {
            if c == f64::NEG_INFINITY {
                0.0
            } else {
                mills_ratio(-c) * (0.5 * (x - c) * (x + c)).exp()
            }
        };
        if x <= a {
            -p * rho
        } else if x <= b {
            pbar * rho - t(a)
        } else {
            let q = 1.0 - normal_pdf(x) * rho;
            q * (t(b) - t(a))
        }
    } else {
        let rho = mills_ratio(x);
        // Q(c) / φ(x) for 0 < x <= c.
        let u = |c: f64| {
            if c == f64::INFINITY {
                0.0
            } else {
                mills_ratio(c) * (0.5 * (x - c) * (x + c)).exp()
            }
        };
        if x >= b {
            p * rho
        } else if x >= a {
            u(b) - pbar * rho
        } else {
            let phi = 1.0 - normal_pdf(x) * rho;
            -phi * (u(a) - u(b))
        }
    }
}

/// `e^{x²/2} ∫_{-∞}^x (h - eh) e^{-t²/2} dt`, integrated outward from `x`
/// so the weight `e^{(x² - t²)/2}` never exceeds one.
fn gaussian_general_value(h: &TestFunction, eh: f64, x: f64) -> Result<f64> {
    let breaks = h.breakpoints();
    let integrand = |t: f64| [(h.value(t) - eh) * (-0.5 * (t - x) * (t + x)).exp()];
    let scale = 1.0f64.min(1.0 / x.abs());
    let scale_h = h.bound().unwrap_or(1.0).max(eh.abs()).max(1e-300);
    let tol = Tolerance::new(1e-15 * scale_h, 1e-12);
    if x <= 0.0 {
        Ok(integrate_ray(&integrand, x, -1.0, scale, &breaks, tol)?[0])
    } else {
        Ok(-integrate_ray(&integrand, x, 1.0, scale, &breaks, tol)?[0])
    }
}

/// `∫_l^x (h - eh) p` divided by `exp(log_scale)`, taken from the side of
/// `x` that keeps relative accuracy.
fn diffusion_general_scaled(
    t: &TargetDistribution,
    h: &TestFunction,
    eh: f64,
    x: f64,
    upper: bool,
    log_scale: f64,
) -> Result<f64> {
    let breaks = h.breakpoints();
    let integrand = |y: f64| [(h.value(y) - eh) * t.density_scaled(y, log_scale)];
    let sd = t.variance().sqrt();
    let scale = sd.min(sd * sd / (x - t.mean()).abs().max(1e-300));
    let tol = Tolerance::new(1e-300, 1e-12);
    let support = t.support();
    if upper {
        let v = if support.is_bounded_above() {
            integrate(&integrand, x, support.hi, &breaks, tol)?
        } else {
            integrate_ray(&integrand, x, 1.0, scale, &breaks, tol)?
        };
        Ok(-v[0])
    } else {
        let v = if support.is_bounded_below() {
            integrate(&integrand, support.lo, x, &breaks, tol)?
        } else {
            integrate_ray(&integrand, x, -1.0, scale, &breaks, tol)?
        };
        Ok(v[0])
    }
}

/// Standard normal probability of `(a, b]` and of its complement, each
/// without cancellation.
fn normal_interval(a: f64, b: f64) -> (f64, f64) {
    let p = if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else {
        1.0 - normal_cdf(a) - normal_sf(b)
    };
    (p.max(0.0), normal_cdf(a) + normal_sf(b))
}

/// Probe points: quantiles at `(i + 1/2) / 512` plus 200 seeded draws.
pub fn probe_grid(target: Option<&TargetDistribution>) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut pts: Vec<f64> = (0..QUANTILE_PROBES)
        .map(|i| {
            let p = (i as f64 + 0.5) / QUANTILE_PROBES as f64;
            match target {
                Some(t) => t.quantile(p),
                None => normal_quantile(p),
            }
        })
        .collect();
    for _ in 0..RANDOM_PROBES {
        pts.push(match target {
            Some(t) => t.sample(&mut rng),
            None => StandardNormal.sample(&mut rng),
        });
    }
    pts
}

/// Fill in the certificate fields, failing on a residual above tolerance.
///
/// The residual uses a central difference of the value, independent of
/// the derivative recovered from the equation.
fn certify(sol: &mut SteinSolution, probes: &[f64], support: Interval) -> Result<()> {
    let breaks = sol.h.breakpoints();
    let mut sup_f = 0.0f64;
    let mut sup_df = 0.0f64;
    let mut max_res = 0.0f64;
    for &x in probes {
        if !support.contains(x) {
            continue;
        }
        let e = sol.eval(x)?;
        let (f, df) = sol.jet(x)?;
        if !f.is_finite() || !df.is_finite() {
            return Err(SteinError::CertificateFailure {
                x,
                residual: f64::INFINITY,
            });
        }
        sup_f = sup_f.max(f.abs());
        sup_df = sup_df.max(match sol.kind {
            SolutionKind::Gaussian => df.abs(),
            SolutionKind::Diffusion => (e.a * df).abs(),
        });
        let edge = (x - support.lo).min(support.hi - x);
        let step = (1e-5 * x.abs().max(1.0)).min(0.25 * edge);
        if breaks.iter().any(|&c| (c - x).abs() < 2.0 * step) {
            continue;
        }
        let fd = (sol.value(x + step)? - sol.value(x - step)?) / (2.0 * step);
        let lhs = 0.5 * e.a * fd + e.b * f;
        let res = (lhs - (sol.h.value(x) - sol.eh)).abs();
        if !(res <= RESIDUAL_TOL) {
            return Err(SteinError::CertificateFailure { x, residual: res });
        }
        max_res = max_res.max(res);
    }
    sol.sup_f = sup_f;
    sol.sup_df = sup_df;
    sol.max_residual = max_res;
    Ok(())
}

fn check_bounded(h: &TestFunction, probes: &[f64]) -> Result<()> {
    if h.bound().is_some() {
        return Ok(());
    }
    for &x in probes {
        let v = h.value(x);
        if !v.is_finite() || v.abs() > 1e12 {
            return Err(SteinError::UnboundedTestFunction { x });
        }
    }
    Ok(())
}

/// Solve `f' - x f = h - eh` for the bounded `f`.
///
/// `eh` defaults to `E h(N)` computed by quadrature.
pub fn solve_gaussian_stein(h: &TestFunction, eh: Option<f64>) -> Result<SteinSolution> {
    solve_gaussian_with_probes(h, eh, &probe_grid(None))
}

fn solve_gaussian_with_probes(h: &TestFunction, eh: Option<f64>, probes: &[f64]) -> Result<SteinSolution> {
    check_bounded(h, probes)?;
    let (repr, eh) = if let Some(c) = h.as_constant() {
        (Repr::Zero, eh.unwrap_or(c))
    } else if let Some((a, b, level)) = h.as_indicator() {
        let (p, pbar) = normal_interval(a, b);
        if p == 0.0 && level != 0.0 && eh.map_or(true, |e| e == 0.0) {
            (Repr::Zero, 0.0)
        } else {
            let exact = level * p;
            match eh {
                Some(e) if (e - exact).abs() > 1e-12 * level.abs().max(1.0) => (Repr::GaussianGeneral, e),
                _ => (Repr::GaussianIndicator { a, b, level, p, pbar }, exact),
            }
        }
    } else {
        let eh = match eh {
            Some(e) => e,
            None => gaussian_expectation(h)?,
        };
        (Repr::GaussianGeneral, eh)
    };
    let mut sol = SteinSolution {
        h: h.clone(),
        eh,
        kind: SolutionKind::Gaussian,
        repr,
        sup_f: 0.0,
        sup_df: 0.0,
        max_residual: 0.0,
    };
    certify(&mut sol, probes, Interval::REAL_LINE)?;
    Ok(sol)
}

fn gaussian_expectation(h: &TestFunction) -> Result<f64> {
    let f = |t: f64| [h.value(t) * normal_pdf(t)];
    let breaks = h.breakpoints();
    let tol = Tolerance::new(1e-15, 1e-12);
    let lo = integrate_ray(&f, 0.0, -1.0, 1.0, &breaks, tol)?;
    let hi = integrate_ray(&f, 0.0, 1.0, 1.0, &breaks, tol)?;
    Ok(lo[0] + hi[0])
}

/// Solve `a f' / 2 + b f = h - eh` for the bounded `f`,
/// `f(x) = 2 ∫_l^x (h - eh) p / (a(x) p(x))`.
///
/// `eh` defaults to `E h(X)` under the target.
pub fn solve_diffusion_stein(
    coeffs: &DiffusionCoefficients,
    h: &TestFunction,
    eh: Option<f64>,
) -> Result<SteinSolution> {
    let probes = probe_grid(Some(coeffs.target()));
    solve_diffusion_with_probes(&Arc::new(coeffs.clone()), h, eh, &probes)
}

fn solve_diffusion_with_probes(
    coeffs: &Arc<DiffusionCoefficients>,
    h: &TestFunction,
    eh: Option<f64>,
    probes: &[f64],
) -> Result<SteinSolution> {
    check_bounded(h, probes)?;
    let t = coeffs.target();
    let support = t.support();
    let general = |eh: Option<f64>| -> Result<(Repr, f64)> {
        let eh = match eh {
            Some(e) => e,
            None => t.expectation(|x| h.value(x), &h.breakpoints())?,
        };
        Ok((Repr::DiffusionGeneral(coeffs.clone()), eh))
    };
    let (repr, eh) = if let Some((lo, hi, level)) = h.as_indicator() {
        let c = lo.max(support.lo);
        let d = hi.min(support.hi);
        let p = t.interval_probability(c, d);
        let exact = level * p;
        match eh {
            Some(e) if (e - exact).abs() > 1e-12 * level.abs().max(1.0) => general(Some(e))?,
            _ => {
                let f_c = if c <= support.lo { 0.0 } else { t.cdf(c) };
                let s_d = if d >= support.hi { 0.0 } else { t.sf(d) };
                (
                    Repr::DiffusionIndicator {
                        coeffs: coeffs.clone(),
                        c,
                        d,
                        level,
                        p,
                        pbar: f_c + s_d,
                        f_c,
                        s_d,
                    },
                    exact,
                )
            }
        }
    } else if let Some(c) = h.as_constant() {
        // A constant is the indicator of the whole line.
        let e = eh.unwrap_or(c);
        if (e - c).abs() > 1e-12 * c.abs().max(1.0) {
            general(Some(e))?
        } else {
            (
                Repr::DiffusionIndicator {
                    coeffs: coeffs.clone(),
                    c: support.lo,
                    d: support.hi,
                    level: c,
                    p: 1.0,
                    pbar: 0.0,
                    f_c: 0.0,
                    s_d: 0.0,
                },
                c,
            )
        }
    } else {
        general(eh)?
    };
    let mut sol = SteinSolution {
        h: h.clone(),
        eh,
        kind: SolutionKind::Diffusion,
        repr,
        sup_f: 0.0,
        sup_df: 0.0,
        max_residual: 0.0,
    };
    certify(&mut sol, probes, support)?;
    Ok(sol)
}

/// Solve against whichever operator is given.
pub fn solve_stein(op: &SteinOperator, h: &TestFunction, eh: Option<f64>) -> Result<SteinSolution> {
    let probes = probe_grid(match op.kind() {
        OperatorKind::Gaussian => None,
        OperatorKind::Diffusion(c) => Some(c.target()),
    });
    solve_with_probes(op, h, eh, &probes)
}

fn solve_with_probes(op: &SteinOperator, h: &TestFunction, eh: Option<f64>, probes: &[f64]) -> Result<SteinSolution> {
    match op.kind() {
        OperatorKind::Gaussian => solve_gaussian_with_probes(h, eh, probes),
        OperatorKind::Diffusion(c) => solve_diffusion_with_probes(c, h, eh, probes),
    }
}

/// What a dictionary holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DictionaryKind {
    Indicator,
    Solution,
    TwoArgSolution,
}

/// Indicators of intervals `(e_i, e_j]`, `i < j`, over sorted endpoints.
#[derive(Debug, Clone)]
pub struct IndicatorDictionary {
    entries: Vec<TestFunction>,
    endpoints: Vec<f64>,
}

impl IndicatorDictionary {
    /// All intervals between distinct sorted endpoints.
    pub fn from_endpoints(mut endpoints: Vec<f64>, cap: usize) -> Result<Self> {
        if endpoints.iter().any(|v| v.is_nan()) {
            return Err(SteinError::InvalidArgument("NaN dictionary endpoint".into()));
        }
        endpoints.sort_by(f64::total_cmp);
        endpoints.dedup();
        let k = endpoints.len();
        let count = k * k.saturating_sub(1) / 2;
        if count > cap {
            return Err(SteinError::SizeTooLarge { entries: count, cap });
        }
        let mut entries = Vec::with_capacity(count);
        for i in 0..k {
            for j in i + 1..k {
                entries.push(TestFunction::indicator(endpoints[i], endpoints[j]));
            }
        }
        Ok(Self { entries, endpoints })
    }

    /// A dictionary of arbitrary indicator-like entries.
    pub fn from_entries(entries: Vec<TestFunction>) -> Self {
        let mut endpoints: Vec<f64> = entries
            .iter()
            .filter_map(|e| e.as_indicator())
            .flat_map(|(a, b, _)| [a, b])
            .collect();
        endpoints.sort_by(f64::total_cmp);
        endpoints.dedup();
        Self { entries, endpoints }
    }

    pub fn entries(&self) -> &[TestFunction] {
        &self.entries
    }

    pub fn endpoints(&self) -> &[f64] {
        &self.endpoints
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The entries at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self::from_entries(idx.iter().map(|&i| self.entries[i].clone()).collect())
    }
}

/// Certified solutions, one per indicator.
#[derive(Debug, Clone)]
pub struct SolutionDictionary {
    entries: Vec<SteinSolution>,
    endpoints: Vec<f64>,
}

impl SolutionDictionary {
    pub fn entries(&self) -> &[SteinSolution] {
        &self.entries
    }

    pub fn endpoints(&self) -> &[f64] {
        &self.endpoints
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            entries: idx.iter().map(|&i| self.entries[i].clone()).collect(),
            endpoints: self.endpoints.clone(),
        }
    }
}

/// A test function of two arguments `h(x, y)`, solved in `x` at each `y`.
///
/// The solution at `y` solves `𝒩f = h(·, y) - E h(M, y)`.
#[derive(Clone)]
pub struct TwoArgSolution {
    label: String,
    op: SteinOperator,
    rule: Arc<dyn Fn(f64) -> TestFunction + Send + Sync>,
}

impl fmt::Debug for TwoArgSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoArgSolution").field("label", &self.label).finish()
    }
}

impl TwoArgSolution {
    /// `rule(y)` is the section `x -> h(x, y)`.
    pub fn new<F>(label: impl Into<String>, op: SteinOperator, rule: F) -> Self
    where
        F: Fn(f64) -> TestFunction + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            op,
            rule: Arc::new(rule),
        }
    }

    /// `h(x, y) = h1(x) h2(y)`.
    pub fn product<G>(op: SteinOperator, h1: TestFunction, h2: G) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let label = format!("{} x h2", h1.label());
        Self::new(label, op, move |y| h1.scale(h2(y)))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn section(&self, y: f64) -> TestFunction {
        (self.rule)(y)
    }

    pub fn solve_at(&self, y: f64) -> Result<SteinSolution> {
        solve_stein(&self.op, &self.section(y), None)
    }

    pub(crate) fn solve_at_with_probes(&self, y: f64, probes: &[f64]) -> Result<SteinSolution> {
        solve_with_probes(&self.op, &self.section(y), None, probes)
    }

    pub fn operator(&self) -> &SteinOperator {
        &self.op
    }
}

/// Two-argument solutions, materialized per `y` on demand.
#[derive(Debug, Clone)]
pub struct TwoArgDictionary {
    entries: Vec<TwoArgSolution>,
}

impl TwoArgDictionary {
    pub fn new(entries: Vec<TwoArgSolution>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[TwoArgSolution] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Any of the three dictionary kinds.
#[derive(Debug, Clone)]
pub enum Dictionary {
    Indicator(IndicatorDictionary),
    Solution(SolutionDictionary),
    TwoArg(TwoArgDictionary),
}

impl Dictionary {
    pub fn kind(&self) -> DictionaryKind {
        match self {
            Dictionary::Indicator(_) => DictionaryKind::Indicator,
            Dictionary::Solution(_) => DictionaryKind::Solution,
            Dictionary::TwoArg(_) => DictionaryKind::TwoArgSolution,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dictionary::Indicator(d) => d.len(),
            Dictionary::Solution(d) => d.len(),
            Dictionary::TwoArg(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            Dictionary::Indicator(d) => d.entries.iter().map(|e| String::from(e.label())).collect(),
            Dictionary::Solution(d) => d.entries.iter().map(|e| format!("f[{}]", e.h_label())).collect(),
            Dictionary::TwoArg(d) => d.entries.iter().map(|e| format!("f[{}]", e.label())).collect(),
        }
    }

    /// Interval endpoints the dictionary was built on (empty for two-arg).
    pub fn grid_spec(&self) -> &[f64] {
        match self {
            Dictionary::Indicator(d) => &d.endpoints,
            Dictionary::Solution(d) => &d.endpoints,
            Dictionary::TwoArg(_) => &[],
        }
    }
}

impl From<IndicatorDictionary> for Dictionary {
    fn from(d: IndicatorDictionary) -> Self {
        Dictionary::Indicator(d)
    }
}

impl From<SolutionDictionary> for Dictionary {
    fn from(d: SolutionDictionary) -> Self {
        Dictionary::Solution(d)
    }
}

impl From<TwoArgDictionary> for Dictionary {
    fn from(d: TwoArgDictionary) -> Self {
        Dictionary::TwoArg(d)
    }
}

/// Indicators of all intervals between the support edges and the target
/// quantiles `i / size`, `i = 1..size-1`: `size (size + 1) / 2` entries,
/// the whole support included.
pub fn build_indicator_dictionary(target: &TargetDistribution, size: usize, cap: usize) -> Result<IndicatorDictionary> {
    if size < 2 {
        return Err(SteinError::InvalidArgument(format!(
            "indicator dictionary size must be at least 2, got {size}"
        )));
    }
    let count = size * (size + 1) / 2;
    if count > cap {
        return Err(SteinError::SizeTooLarge { entries: count, cap });
    }
    let s = target.support();
    let mut endpoints = Vec::with_capacity(size + 1);
    endpoints.push(s.lo);
    for i in 1..size {
        endpoints.push(target.quantile(i as f64 / size as f64));
    }
    endpoints.push(s.hi);
    IndicatorDictionary::from_endpoints(endpoints, cap)
}

/// Indicators built on empirical quantiles `i / size` of `values`, with
/// infinite outer endpoints. Tied quantiles collapse.
pub fn build_sample_indicator_dictionary(values: &[f64], size: usize, cap: usize) -> Result<IndicatorDictionary> {
    if size < 2 {
        return Err(SteinError::InvalidArgument(format!(
            "indicator dictionary size must be at least 2, got {size}"
        )));
    }
    if values.is_empty() {
        return Err(SteinError::EmptySample);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut endpoints = alloc::vec![f64::NEG_INFINITY, f64::INFINITY];
    for i in 1..size {
        let k = ((i * n).div_ceil(size)).clamp(1, n) - 1;
        endpoints.push(sorted[k]);
    }
    IndicatorDictionary::from_endpoints(endpoints, cap)
}

/// Solve the operator's Stein equation for every indicator.
pub fn build_solution_dictionary(op: &SteinOperator, indicators: &IndicatorDictionary) -> Result<SolutionDictionary> {
    if indicators.is_empty() {
        return Ok(SolutionDictionary {
            entries: Vec::new(),
            endpoints: indicators.endpoints.clone(),
        });
    }
    let probes = probe_grid(match op.kind() {
        OperatorKind::Gaussian => None,
        OperatorKind::Diffusion(c) => Some(c.target()),
    });
    let solved = crate::par::map_collect(&indicators.entries, |h| solve_with_probes(op, h, None, &probes));
    let entries = solved.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SolutionDictionary {
        entries,
        endpoints: indicators.endpoints.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::apply_stein_operator;
    use crate::targets::{construct_diffusion_coefficients, validate_target, Density, QuadratureConfig};
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::OnceLock;

    fn gaussian_target() -> Arc<TargetDistribution> {
        static T: OnceLock<Arc<TargetDistribution>> = OnceLock::new();
        T.get_or_init(|| Arc::new(validate_target(Density::standard_normal(), &QuadratureConfig::default()).unwrap()))
            .clone()
    }

    fn exponential_coeffs() -> Arc<DiffusionCoefficients> {
        static C: OnceLock<Arc<DiffusionCoefficients>> = OnceLock::new();
        C.get_or_init(|| {
            let t = validate_target(Density::exponential(1.0), &QuadratureConfig::default()).unwrap();
            Arc::new(construct_diffusion_coefficients(&t, 1.0).unwrap())
        })
        .clone()
    }

    /// Plain double-precision quadrature of the defining integral, for
    /// moderate `x` only.
    fn naive_gaussian(a: f64, b: f64, x: f64) -> f64 {
        let (p, _) = normal_interval(a, b);
        let h = |t: f64| if a < t && t <= b { 1.0 } else { 0.0 };
        let f = |t: f64| [(h(t) - p) * (-0.5 * t * t).exp()];
        let mut breaks = alloc::vec![];
        for c in [a, b] {
            if c.is_finite() && c < x {
                breaks.push(c);
            }
        }
        let v = integrate(&f, -40.0, x, &breaks, Tolerance::new(1e-16, 1e-13)).unwrap()[0];
        v * (0.5 * x * x).exp()
    }

    #[test]
    fn constant_gives_zero() {
        let s = solve_gaussian_stein(&TestFunction::constant(3.0), None).unwrap();
        assert_eq!(s.value(1.3).unwrap(), 0.0);
        let s = solve_diffusion_stein(&exponential_coeffs(), &TestFunction::constant(3.0), None).unwrap();
        assert!(s.value(2.0).unwrap().abs() < 1e-12);
        assert!(s.value(0.01).unwrap().abs() < 1e-12);
    }

    #[test]
    fn identity_gives_minus_one() {
        let h = TestFunction::new("x", Interval::REAL_LINE, |x| x);
        let s = solve_gaussian_stein(&h, Some(0.0)).unwrap();
        for i in 0..=120 {
            let x = -6.0 + 0.1 * i as f64;
            assert!((s.value(x).unwrap() + 1.0).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn half_line_indicator_meets_class_bounds() {
        let h = TestFunction::indicator(f64::NEG_INFINITY, 0.0);
        let s = solve_gaussian_stein(&h, Some(0.5)).unwrap();
        assert!(FunctionClassBounds::gaussian_indicator().contains(&s), "{s:?}");
        assert!(s.max_residual() <= 1e-6);
    }

    #[test]
    fn closed_form_matches_naive_quadrature() {
        for &(a, b) in &[(-1.0, 0.5), (f64::NEG_INFINITY, -0.3), (0.2, f64::INFINITY), (1.0, 2.0), (-3.0, -2.0)] {
            let s = solve_gaussian_stein(&TestFunction::indicator(a, b), None).unwrap();
            for i in 0..=40 {
                let x = -4.0 + 0.2 * i as f64;
                let want = naive_gaussian(a, b, x);
                let got = s.value(x).unwrap();
                assert!((got - want).abs() < 1e-9, "({a}, {b}] at {x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn general_route_matches_closed_form() {
        let f = TestFunction::new("ind", Interval::REAL_LINE, |x| if -0.5 < x && x <= 1.5 { 1.0 } else { 0.0 })
            .with_breaks(&[-0.5, 1.5])
            .with_bound(1.0);
        let general = solve_gaussian_stein(&f, None).unwrap();
        let closed = solve_gaussian_stein(&TestFunction::indicator(-0.5, 1.5), None).unwrap();
        assert!((general.eh() - closed.eh()).abs() < 1e-12);
        for i in 0..=100 {
            let x = -10.0 + 0.2 * i as f64;
            let (g, c) = (general.value(x).unwrap(), closed.value(x).unwrap());
            assert!((g - c).abs() < 1e-10, "x = {x}: {g} vs {c}");
        }
    }

    #[test]
    fn far_tails_stay_finite_and_decay() {
        let s = solve_gaussian_stein(&TestFunction::indicator(-0.3, 0.8), None).unwrap();
        for &x in &[-60.0, -40.0, 8.0, 40.0, 200.0] {
            let v = s.value(x).unwrap();
            assert!(v.is_finite());
            assert!(v.abs() <= 2.0 / (1.0 + x.abs()), "x = {x}: {v}");
        }
    }

    #[test]
    fn unbounded_h_is_rejected() {
        let h = TestFunction::new("exp", Interval::REAL_LINE, |x| (x * x * x * x).exp());
        assert!(matches!(
            solve_gaussian_stein(&h, Some(0.0)),
            Err(SteinError::UnboundedTestFunction { .. })
        ));
    }

    #[test]
    fn diffusion_reduces_to_gaussian() {
        let t = gaussian_target();
        let c = construct_diffusion_coefficients(&t, 1.0).unwrap();
        let h = TestFunction::indicator(f64::NEG_INFINITY, 0.0);
        let d = solve_diffusion_stein(&c, &h, None).unwrap();
        let g = solve_gaussian_stein(&h, None).unwrap();
        for i in 0..=100 {
            let x = -5.0 + 0.1 * i as f64;
            assert!((d.value(x).unwrap() - g.value(x).unwrap()).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn exponential_indicator_residual() {
        let c = exponential_coeffs();
        let h = TestFunction::indicator(0.0, 1.0);
        let s = solve_diffusion_stein(&c, &h, Some(1.0 - (-1.0f64).exp())).unwrap();
        let op = SteinOperator::diffusion((*c).clone());
        let f = s.to_test_function();
        for i in 0..=199 {
            let x = 0.05 + (10.0 - 0.05) * i as f64 / 199.0;
            if (x - 1.0).abs() < 1e-4 {
                continue;
            }
            let step = 1e-5 * x.max(1.0);
            let fd = (f.value(x + step) - f.value(x - step)) / (2.0 * step);
            let (ha, b) = op.half_a_and_b(x).unwrap();
            let res = ha * fd + b * f.value(x) - (h.value(x) - s.eh());
            assert!(res.abs() < 1e-6, "x = {x}: {res}");
            let exact = apply_stein_operator(&op, &f, x).unwrap() - (h.value(x) - s.eh());
            assert!(exact.abs() < 1e-9);
        }
    }

    #[test]
    fn diffusion_general_route_matches_indicator_route() {
        let c = exponential_coeffs();
        let f = TestFunction::new("ind", Interval::REAL_LINE, |x| if 0.5 < x && x <= 2.0 { 1.0 } else { 0.0 })
            .with_breaks(&[0.5, 2.0])
            .with_bound(1.0);
        let general = solve_diffusion_stein(&c, &f, None).unwrap();
        let closed = solve_diffusion_stein(&c, &TestFunction::indicator(0.5, 2.0), None).unwrap();
        assert!((general.eh() - closed.eh()).abs() < 1e-10);
        for i in 1..=100 {
            let x = 0.08 * i as f64;
            let (g, k) = (general.value(x).unwrap(), closed.value(x).unwrap());
            assert!((g - k).abs() < 1e-8, "x = {x}: {g} vs {k}");
        }
    }

    #[test]
    fn indicator_dictionary_counts() {
        let t = gaussian_target();
        let d = build_indicator_dictionary(&t, 2, 1000).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.endpoints().len(), 3);
        assert!(d.endpoints()[1].abs() < 1e-12);
        assert_eq!(build_indicator_dictionary(&t, 4, 1000).unwrap().len(), 10);
        assert!(build_indicator_dictionary(&t, 1, 1000).is_err());
        assert!(matches!(
            build_indicator_dictionary(&t, 4, 9),
            Err(SteinError::SizeTooLarge { entries: 10, cap: 9 })
        ));
    }

    #[test]
    fn sample_dictionary_collapses_ties() {
        let ys = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let d = build_sample_indicator_dictionary(&ys, 4, 100).unwrap();
        assert_eq!(d.endpoints(), &[f64::NEG_INFINITY, 0.0, 1.0, f64::INFINITY]);
        assert_eq!(d.len(), 6);
    }

    #[test]
    fn solution_dictionaries() {
        let t = gaussian_target();
        let op = SteinOperator::gaussian(t.clone()).unwrap();
        let ind = build_indicator_dictionary(&t, 2, 100).unwrap();
        let sol = build_solution_dictionary(&op, &ind).unwrap();
        assert_eq!(sol.len(), 3);
        for s in sol.entries() {
            assert!(FunctionClassBounds::gaussian_indicator().contains(s));
        }
        let empty = build_solution_dictionary(&op, &IndicatorDictionary::from_entries(Vec::new())).unwrap();
        assert!(empty.is_empty());

        let c = exponential_coeffs();
        let op = SteinOperator::diffusion((*c).clone());
        let ind = build_indicator_dictionary(c.target(), 4, 100).unwrap();
        let sol = build_solution_dictionary(&op, &ind).unwrap();
        assert_eq!(sol.len(), 10);
        for s in sol.entries() {
            assert_eq!(s.bounds().derivative_form, DerivativeForm::AWeighted);
            assert!(s.max_residual() <= RESIDUAL_TOL);
        }
    }

    #[test]
    fn fresh_probe_residuals() {
        let c = exponential_coeffs();
        let op = SteinOperator::diffusion((*c).clone());
        let ind = build_indicator_dictionary(c.target(), 4, 100).unwrap();
        let sol = build_solution_dictionary(&op, &ind).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for s in sol.entries() {
            for _ in 0..200 {
                let x = c.target().sample(&mut rng);
                if s.h().breakpoints().iter().any(|b| (b - x).abs() < 1e-4) {
                    continue;
                }
                let step = (1e-5 * x.max(1.0)).min(0.25 * x);
                let fd = (s.value(x + step).unwrap() - s.value(x - step).unwrap()) / (2.0 * step);
                let (ha, b) = op.half_a_and_b(x).unwrap();
                let res = ha * fd + b * s.value(x).unwrap() - (s.h().value(x) - s.eh());
                assert!(res.abs() <= 1e-6, "{} at {x}: {res}", s.h_label());
            }
        }
    }

    #[test]
    fn two_arg_product_structure() {
        let op = SteinOperator::gaussian(gaussian_target()).unwrap();
        let h1 = TestFunction::indicator(-0.4, 1.1);
        let two = TwoArgSolution::product(op, h1.clone(), |y: f64| y.cos());
        let base = solve_gaussian_stein(&h1, None).unwrap();
        for &y in &[0.0, 0.7, 2.0, 3.0] {
            let s = two.solve_at(y).unwrap();
            for i in 0..=30 {
                let x = -3.0 + 0.2 * i as f64;
                let want = y.cos() * base.value(x).unwrap();
                assert!((s.value(x).unwrap() - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn homogeneous_branch_breaks_the_bound() {
        // f + c e^{x²/2} also solves the equation but is unbounded.
        let s = solve_gaussian_stein(&TestFunction::indicator(f64::NEG_INFINITY, 0.0), None).unwrap();
        let bumped = |x: f64| s.value(x).unwrap() + 1e-6 * (0.5 * x * x).exp();
        assert!(bumped(8.0).abs() > SQRT_HALF_PI);
        assert!(s.value(8.0).unwrap().abs() <= 2.0 / 9.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn random_gaussian_indicators_are_certified(u in 0.0f64..1.0, v in 0.0f64..1.0, seed in 0u64..1000) {
            let (a, b) = (normal_quantile(u.min(v) * 0.999 + 1e-4), normal_quantile(u.max(v) * 0.999 + 5e-4));
            prop_assume!(a < b);
            let s = solve_gaussian_stein(&TestFunction::indicator(a, b), None).unwrap();
            prop_assert!(FunctionClassBounds::gaussian_indicator().contains(&s));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                let x: f64 = StandardNormal.sample(&mut rng);
                let x = x * 1.5 + rng.random_range(-0.5..0.5);
                if (x - a).abs() < 1e-4 || (x - b).abs() < 1e-4 {
                    continue;
                }
                let step = 1e-5 * x.abs().max(1.0);
                let fd = (s.value(x + step).unwrap() - s.value(x - step).unwrap()) / (2.0 * step);
                let res = fd - x * s.value(x).unwrap() - (s.h().value(x) - s.eh());
                prop_assert!(res.abs() <= 1e-6);
            }
        }
    }
}
