//! Target laws and the diffusion coefficients that make them invariant.

mod coefficients;
mod density;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Result, SteinError};
use crate::interval::Interval;
use crate::quadrature::{gk15, integrate, integrate_ray, Tolerance};
use crate::RealFn;

pub use coefficients::{construct_diffusion_coefficients, DiffusionCoefficients};
pub use density::{Density, ExactSampler};

/// Numerical settings for [`validate_target`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadratureConfig {
    /// The cumulative cache spans `[q(tail), q(1 - tail)]`.
    pub tail_quantile: f64,
    /// Absolute tolerance for whole-support integrals (mass and moments).
    pub abs_tol: f64,
    /// Relative tolerance for every integral.
    pub rel_tol: f64,
    /// Number of quantile nodes in the cumulative cache.
    pub grid_nodes: usize,
    /// Largest `|integral - 1|` that is silently rescaled.
    pub normalization_slack: f64,
    /// Infinite sides are integrated out to where the density falls below
    /// this fraction of its observed peak.
    pub window_density_ratio: f64,
    /// Panels used for the whole-support integrals.
    pub window_panels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            tail_quantile: 1e-10,
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            grid_nodes: 4096,
            normalization_slack: 1e-3,
            window_density_ratio: 1e-30,
            window_panels: 2048,
        }
    }
}

/// A validated target law: normalized density, cdf, moments and the
/// cumulative integrals needed by the diffusion coefficients.
#[derive(Clone)]
pub struct TargetDistribution {
    label: String,
    support: Interval,
    raw_pdf: RealFn,
    raw_log_pdf: Option<RealFn>,
    inv_norm: f64,
    log_norm: f64,
    mean: f64,
    variance: f64,
    sampler: Option<ExactSampler>,
    standard_normal: bool,
    cache: Cache,
}

impl fmt::Debug for TargetDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetDistribution")
            .field("label", &self.label)
            .field("support", &self.support)
            .field("mean", &self.mean)
            .field("variance", &self.variance)
            .field("rescale_factor", &self.inv_norm)
            .field("cache_nodes", &self.cache.nodes.len())
            .finish()
    }
}

/// Cumulative integrals at the quantile nodes.
///
/// Lower quantities integrate from the left edge of the support, upper ones
/// from the right edge, so each keeps relative accuracy in its own tail.
#[derive(Debug, Clone)]
struct Cache {
    nodes: Vec<f64>,
    /// `∫_l^x p`
    lower_mass: Vec<f64>,
    /// `∫_l^x (m - y) p(y) dy`
    lower_moment: Vec<f64>,
    /// `∫_x^u p`
    upper_mass: Vec<f64>,
    /// `∫_x^u (y - m) p(y) dy`
    upper_moment: Vec<f64>,
}

/// One-sided integrals at a point, optionally rescaled by `exp(-log_scale)`
/// so that far-tail values do not underflow.
///
/// For a lower (`upper == false`) evaluation, `mass * exp(log_scale)` is
/// `F(x)` and `moment * exp(log_scale)` is `∫_l^x (m - y) p`; for an upper
/// one they are `1 - F(x)` and `∫_x^u (y - m) p`. Both moments equal the
/// same quantity `∫_l^x (m - y) p` because the centered density integrates
/// to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SideIntegrals {
    pub upper: bool,
    pub mass: f64,
    pub moment: f64,
    pub log_scale: f64,
    pub log_density: f64,
}

impl SideIntegrals {
    pub fn cdf(&self) -> f64 {
        let m = self.mass * self.log_scale.exp();
        if self.upper {
            1.0 - m
        } else {
            m
        }
    }

    pub fn sf(&self) -> f64 {
        let m = self.mass * self.log_scale.exp();
        if self.upper {
            m
        } else {
            1.0 - m
        }
    }

    /// `∫_l^x (m - y) p(y) dy / p(x)`.
    pub fn moment_over_density(&self) -> f64 {
        self.moment * (self.log_scale - self.log_density).exp()
    }
}

impl TargetDistribution {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> Interval {
        self.support
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Factor applied to the user density to make it integrate to one.
    pub fn rescale_factor(&self) -> f64 {
        self.inv_norm
    }

    pub fn is_standard_normal(&self) -> bool {
        self.standard_normal
    }

    pub fn has_log_density(&self) -> bool {
        self.raw_log_pdf.is_some()
    }

    pub fn has_exact_sampler(&self) -> bool {
        self.sampler.is_some()
    }

    /// Normalized density; zero outside the open support.
    pub fn density(&self, x: f64) -> f64 {
        if self.support.contains(x) {
            (self.raw_pdf)(x) * self.inv_norm
        } else {
            0.0
        }
    }

    /// Normalized log-density, when the source supplied one.
    pub fn log_density(&self, x: f64) -> Option<f64> {
        self.raw_log_pdf.as_ref().map(|f| f(x) - self.log_norm)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.support.lo {
            return 0.0;
        }
        if x >= self.support.hi {
            return 1.0;
        }
        match self.side_integrals(x) {
            Ok(s) => s.cdf().clamp(0.0, 1.0),
            Err(_) => {
                if x < self.mean {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn sf(&self, x: f64) -> f64 {
        if x <= self.support.lo {
            return 1.0;
        }
        if x >= self.support.hi {
            return 0.0;
        }
        match self.side_integrals(x) {
            Ok(s) => s.sf().clamp(0.0, 1.0),
            Err(_) => {
                if x < self.mean {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Inverse cdf. `p = 0` and `p = 1` give the support endpoints.
    pub fn quantile(&self, p: f64) -> f64 {
        if p.is_nan() || !(0.0..=1.0).contains(&p) {
            return f64::NAN;
        }
        if p == 0.0 {
            return self.support.lo;
        }
        if p == 1.0 {
            return self.support.hi;
        }
        let c = &self.cache;
        let n = c.nodes.len();
        if p <= 0.5 {
            if p < c.lower_mass[0] {
                return self.tail_quantile(p, false);
            }
            let k = upper_index(&c.lower_mass, p).min(n - 2);
            let pdf = |x: f64| self.density(x);
            invert_panel(&pdf, c.nodes[k], c.nodes[k + 1], p - c.lower_mass[k], false)
        } else {
            let q = 1.0 - p;
            if q < c.upper_mass[n - 1] {
                return self.tail_quantile(q, true);
            }
            // upper_mass is decreasing; find k with upper[k] >= q >= upper[k+1].
            let k = c
                .upper_mass
                .partition_point(|&s| s >= q)
                .saturating_sub(1)
                .min(n - 2);
            let pdf = |x: f64| self.density(x);
            invert_panel(&pdf, c.nodes[k], c.nodes[k + 1], q - c.upper_mass[k + 1], true)
        }
    }

    /// Bisection on the tail probability beyond the cached nodes.
    fn tail_quantile(&self, q: f64, upper: bool) -> f64 {
        let c = &self.cache;
        let sd = self.variance.sqrt();
        let tail = |x: f64| if upper { self.sf(x) } else { self.cdf(x) };
        let (mut inner, mut outer) = if upper {
            let inner = c.nodes[c.nodes.len() - 1];
            let mut step = sd;
            let mut outer = inner + step;
            while outer < self.support.hi && tail(outer) > q && step < 1e300 {
                step *= 2.0;
                outer = (inner + step).min(self.support.hi);
            }
            (inner, outer)
        } else {
            let inner = c.nodes[0];
            let mut step = sd;
            let mut outer = inner - step;
            while outer > self.support.lo && tail(outer) > q && step < 1e300 {
                step *= 2.0;
                outer = (inner - step).max(self.support.lo);
            }
            (inner, outer)
        };
        for _ in 0..200 {
            let mid = 0.5 * (inner + outer);
            if mid == inner || mid == outer {
                break;
            }
            if tail(mid) > q {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        0.5 * (inner + outer)
    }

    /// Draw from the target: closed form when available, inverse cdf otherwise.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if let Some(s) = &self.sampler {
            return s.sample(rng);
        }
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return self.quantile(u);
            }
        }
    }

    /// The normalized density, ready to be validated again.
    pub fn to_density(&self) -> Density {
        let raw = self.raw_pdf.clone();
        let inv = self.inv_norm;
        let mut d = Density::new(self.label.clone(), self.support, move |x| raw(x) * inv);
        if let Some(lp) = self.raw_log_pdf.clone() {
            let ln = self.log_norm;
            d = d.with_log_density(move |x| lp(x) - ln);
        }
        d.sampler = self.sampler;
        d.standard_normal = self.standard_normal;
        d
    }

    /// Natural log of the normalized density at an interior point.
    fn ln_density_at(&self, x: f64) -> f64 {
        match self.log_density(x) {
            Some(l) => l,
            None => self.density(x).ln(),
        }
    }

    /// `p(y) exp(-log_scale)`, through the log-density when one exists.
    pub(crate) fn density_scaled(&self, y: f64, log_scale: f64) -> f64 {
        if log_scale == 0.0 {
            return self.density(y);
        }
        if !self.support.contains(y) {
            return 0.0;
        }
        match self.log_density(y) {
            Some(l) => (l - log_scale).exp(),
            None => self.density(y) * (-log_scale).exp(),
        }
    }

    /// `E h(X)` by quadrature, split at the mean and at `breaks`.
    pub fn expectation<F: Fn(f64) -> f64>(&self, h: F, breaks: &[f64]) -> Result<f64> {
        let f = |y: f64| [h(y) * self.density(y)];
        let tol = Tolerance::new(1e-15, 1e-12);
        let m = self.mean;
        let sd = self.variance.sqrt();
        let lower = if self.support.is_bounded_below() {
            integrate(&f, self.support.lo, m, breaks, tol)?
        } else {
            integrate_ray(&f, m, -1.0, sd, breaks, tol)?
        };
        let upper = if self.support.is_bounded_above() {
            integrate(&f, m, self.support.hi, breaks, tol)?
        } else {
            integrate_ray(&f, m, 1.0, sd, breaks, tol)?
        };
        Ok(lower[0] + upper[0])
    }

    /// `P(lo < X <= hi)` without cancellation in either tail.
    pub fn interval_probability(&self, lo: f64, hi: f64) -> f64 {
        if !(lo < hi) {
            return 0.0;
        }
        let m = self.mean;
        if hi <= m {
            (self.cdf(hi) - self.cdf(lo)).max(0.0)
        } else if lo >= m {
            (self.sf(lo) - self.sf(hi)).max(0.0)
        } else {
            (1.0 - self.cdf(lo) - self.sf(hi)).max(0.0)
        }
    }

    pub(crate) fn side_integrals(&self, x: f64) -> Result<SideIntegrals> {
        if !self.support.contains(x) {
            return Err(SteinError::SupportEdgeEvaluation {
                x,
                lo: self.support.lo,
                hi: self.support.hi,
            });
        }
        let upper = x > self.mean;
        let c = &self.cache;
        let n = c.nodes.len();
        if x >= c.nodes[0] && x <= c.nodes[n - 1] {
            let k = upper_index(&c.nodes, x).min(n - 2);
            let m = self.mean;
            let sd = self.variance.sqrt();
            let p = self.density(x);
            if !(p > 0.0) {
                return Err(SteinError::NumericallyDegenerate { x });
            }
            let (mass, moment) = if upper {
                let b = c.nodes[k + 1];
                let v = local_pair(&|y| {
                    let d = self.density(y);
                    [d, (y - m) * d]
                }, x, b, sd + (b - m).abs());
                (c.upper_mass[k + 1] + v[0], c.upper_moment[k + 1] + v[1])
            } else {
                let a = c.nodes[k];
                let v = local_pair(&|y| {
                    let d = self.density(y);
                    [d, (m - y) * d]
                }, a, x, sd + (a - m).abs());
                (c.lower_mass[k] + v[0], c.lower_moment[k] + v[1])
            };
            return Ok(SideIntegrals {
                upper,
                mass,
                moment,
                log_scale: 0.0,
                log_density: self.ln_density_at(x),
            });
        }
        self.far_tail_integrals(x, upper)
    }

    /// Integrals beyond the cached nodes, scaled by the density at `x`.
    fn far_tail_integrals(&self, x: f64, upper: bool) -> Result<SideIntegrals> {
        let m = self.mean;
        let sd = self.variance.sqrt();
        let p = self.density(x);
        let log_p = if p > 1e-300 {
            self.ln_density_at(x)
        } else {
            match self.log_density(x) {
                Some(l) if l.is_finite() => l,
                _ => return Err(SteinError::NumericallyDegenerate { x }),
            }
        };
        let use_log = !(p > 1e-300);
        let weight = |y: f64| -> f64 {
            if !self.support.contains(y) {
                return 0.0;
            }
            if use_log {
                self.log_density(y).map_or(0.0, |l| (l - log_p).exp())
            } else {
                self.density(y) / p
            }
        };
        let sign = if upper { 1.0 } else { -1.0 };
        let f = |y: f64| {
            let w = weight(y);
            [w, sign * (y - m) * w]
        };
        let tol = Tolerance::new(1e-300, 1e-12);
        let dist = (x - m).abs().max(1e-300);
        let scale = sd.min(sd * sd / dist).max(1e-300);
        let v = if upper {
            if self.support.is_bounded_above() {
                integrate(&f, x, self.support.hi, &[], tol)?
            } else {
                integrate_ray(&f, x, 1.0, scale, &[], tol)?
            }
        } else if self.support.is_bounded_below() {
            integrate(&f, self.support.lo, x, &[], tol)?
        } else {
            integrate_ray(&f, x, -1.0, scale, &[], tol)?
        };
        Ok(SideIntegrals {
            upper,
            mass: v[0],
            moment: v[1],
            log_scale: log_p,
            log_density: log_p,
        })
    }
}

/// Index `k` of the last element `<= v` in an increasing slice (0 if none).
fn upper_index(sorted: &[f64], v: f64) -> usize {
    sorted.partition_point(|&s| s <= v).saturating_sub(1)
}

/// Integral of a two-component integrand over a short panel, refined
/// adaptively only when the single Gauss–Kronrod estimate is not tight.
fn local_pair<F>(f: &F, a: f64, b: f64, moment_scale: f64) -> [f64; 2]
where
    F: Fn(f64) -> [f64; 2],
{
    if a == b {
        return [0.0, 0.0];
    }
    let (v, e) = gk15(f, a, b);
    let tol0 = 1e-14 * v[0].abs();
    let tol1 = 1e-14 * (v[1].abs() + moment_scale * v[0].abs());
    if e[0] <= tol0 && e[1] <= tol1 {
        return v;
    }
    let tol = Tolerance {
        abs: 1e-15 * moment_scale * v[0].abs() + 1e-300,
        rel: 1e-13,
        max_panels: 400,
    };
    crate::quadrature::integrate_raw(f, a, b, &[], tol).value
}

/// Solve `∫_a^x p = mass` (`from_right == false`) or `∫_x^b p = mass`
/// for `x` in `[a, b]` by safeguarded Newton iteration.
fn invert_panel<F>(pdf: &F, a: f64, b: f64, mass: f64, from_right: bool) -> f64
where
    F: Fn(f64) -> f64,
{
    let scalar = |x: f64| [pdf(x)];
    let partial = |x: f64| -> f64 {
        let (lo, hi) = if from_right { (x, b) } else { (a, x) };
        let r = crate::quadrature::integrate_raw(
            &scalar,
            lo,
            hi,
            &[],
            Tolerance {
                abs: 1e-300,
                rel: 1e-14,
                max_panels: 200,
            },
        );
        r.value[0]
    };
    let total = partial(if from_right { a } else { b });
    if !(total > 0.0) {
        return 0.5 * (a + b);
    }
    let frac = (mass / total).clamp(0.0, 1.0);
    let mut lo = a;
    let mut hi = b;
    let mut x = if from_right {
        b - frac * (b - a)
    } else {
        a + frac * (b - a)
    };
    for _ in 0..100 {
        // g is increasing in x for the left form, decreasing for the right form.
        let g = partial(x) - mass;
        if g.abs() <= 1e-15 * mass.abs().max(1e-300) {
            return x;
        }
        let increasing_side = if from_right { g < 0.0 } else { g > 0.0 };
        if increasing_side {
            hi = x;
        } else {
            lo = x;
        }
        let d = pdf(x);
        let step = if from_right { -g / d } else { g / d };
        let mut next = x - step;
        if !(d > 0.0) || !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-16 * x.abs().max(1e-300) || next == lo || next == hi {
            return next;
        }
        x = next;
    }
    x
}

/// Check a density and precompute everything the rest of the crate needs.
///
/// Fails with `NonPositiveDensity` if the density is not strictly positive
/// and finite on the probe grid, `NotNormalizable` if it integrates to
/// something farther than `normalization_slack` from one, and
/// `DivergentMoment` if the variance integral keeps growing as the
/// integration window is doubled.
pub fn validate_target(density: Density, cfg: &QuadratureConfig) -> Result<TargetDistribution> {
    if !(cfg.tail_quantile > 0.0 && cfg.tail_quantile < 0.5) || cfg.grid_nodes < 8 {
        return Err(SteinError::InvalidConfig(
            "tail_quantile must be in (0, 0.5) and grid_nodes >= 8".into(),
        ));
    }
    let support = density.support;
    let raw = density.pdf.clone();
    let pdf = |x: f64| if support.contains(x) { raw(x) } else { 0.0 };

    let (center, peak) = probe_center(&pdf, support)?;
    let (scale_lo, scale_hi) = side_scales(&pdf, support, center, peak);
    let mut w_lo = window_edge(&pdf, support, center, scale_lo, peak, cfg, -1.0);
    let mut w_hi = window_edge(&pdf, support, center, scale_hi, peak, cfg, 1.0);

    // Whole-window integrals on asinh-spaced panels.
    let edges = asinh_edges(center, scale_lo, scale_hi, w_lo, w_hi, cfg.window_panels);
    for &x in edges.iter().skip(1).take(edges.len().saturating_sub(2)) {
        let v = pdf(x);
        if !(v > 0.0) || !v.is_finite() {
            return Err(SteinError::NonPositiveDensity { x });
        }
    }
    let moment = |y: f64| {
        let d = pdf(y);
        let t = y - center;
        [d, t * d, t * t * d]
    };
    let panel_tol = Tolerance {
        abs: cfg.abs_tol * 1e-8,
        rel: cfg.rel_tol,
        max_panels: 200,
    };
    let mut panel_mass = Vec::with_capacity(edges.len() - 1);
    let mut sums = [0.0; 3];
    for w in edges.windows(2) {
        let v = integrate(&moment, w[0], w[1], &[], panel_tol)?;
        for k in 0..3 {
            sums[k] += v[k];
        }
        panel_mass.push(v[0]);
    }

    let z = sums[0];
    if !z.is_finite() || (z - 1.0).abs() > cfg.normalization_slack {
        return Err(SteinError::NotNormalizable { integral: z });
    }

    // Double infinite sides until the second moment stops moving.
    let mut converged = support.is_bounded();
    for _ in 0..8 {
        if converged {
            break;
        }
        let mut inc = [0.0; 3];
        if !support.is_bounded_below() {
            let ext = center - 2.0 * (center - w_lo);
            let v = integrate(&moment, ext, w_lo, &[], panel_tol)?;
            inc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
            w_lo = ext;
        }
        if !support.is_bounded_above() {
            let ext = center + 2.0 * (w_hi - center);
            let v = integrate(&moment, w_hi, ext, &[], panel_tol)?;
            inc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
            w_hi = ext;
        }
        for k in 0..3 {
            sums[k] += inc[k];
        }
        converged = inc[2].abs() <= 1e-9 * sums[2].abs() && sums[2].is_finite();
    }
    if !converged {
        return Err(SteinError::DivergentMoment);
    }

    let z = sums[0];
    let inv_norm = 1.0 / z;
    let m1 = sums[1] / z;
    let mean = center + m1;
    let variance = sums[2] / z - m1 * m1;
    if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
        return Err(SteinError::DivergentMoment);
    }

    // Quantile nodes, uniform on the logit scale of probability.
    let norm_pdf = |x: f64| pdf(x) * inv_norm;
    let prelim = PrelimCdf::new(&edges, &panel_mass, inv_norm);
    let n = cfg.grid_nodes;
    let t_max = ((1.0 - cfg.tail_quantile) / cfg.tail_quantile).ln();
    let mut nodes: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let t = -t_max + 2.0 * t_max * (i as f64) / ((n - 1) as f64);
        let x = if t <= 0.0 {
            prelim.lower_quantile(&norm_pdf, 1.0 / (1.0 + t.exp()) * t.exp())
        } else {
            prelim.upper_quantile(&norm_pdf, 1.0 / (1.0 + t.exp()))
        };
        if support.contains(x) && nodes.last().map_or(true, |&l| x > l) {
            nodes.push(x);
        }
    }
    if nodes.len() < 2 {
        return Err(SteinError::QuadratureFailure {
            lo: support.lo,
            hi: support.hi,
            error: f64::NAN,
        });
    }

    let sd = variance.sqrt();
    let mut target = TargetDistribution {
        label: density.label.clone(),
        support,
        raw_pdf: density.pdf.clone(),
        raw_log_pdf: density.log_pdf.clone(),
        inv_norm,
        log_norm: z.ln(),
        mean,
        variance,
        sampler: density.sampler,
        standard_normal: density.standard_normal && support == Interval::REAL_LINE,
        cache: Cache {
            nodes: Vec::new(),
            lower_mass: Vec::new(),
            lower_moment: Vec::new(),
            upper_mass: Vec::new(),
            upper_moment: Vec::new(),
        },
    };
    target.cache = build_cache(&target, nodes, sd)?;
    Ok(target)
}

fn build_cache(t: &TargetDistribution, nodes: Vec<f64>, sd: f64) -> Result<Cache> {
    let m = t.mean;
    let support = t.support;
    let n = nodes.len();
    let lower = |y: f64| {
        let d = t.density(y);
        [d, (m - y) * d]
    };
    let upper = |y: f64| {
        let d = t.density(y);
        [d, (y - m) * d]
    };
    let tail_tol = Tolerance::new(1e-300, 1e-13);

    let x0 = nodes[0];
    let lower0 = if support.is_bounded_below() {
        integrate(&lower, support.lo, x0, &[], tail_tol)?
    } else {
        let scale = sd.min(sd * sd / (m - x0).abs().max(1e-300));
        integrate_ray(&lower, x0, -1.0, scale, &[], tail_tol)?
    };
    let xn = nodes[n - 1];
    let upper_n = if support.is_bounded_above() {
        integrate(&upper, xn, support.hi, &[], tail_tol)?
    } else {
        let scale = sd.min(sd * sd / (xn - m).abs().max(1e-300));
        integrate_ray(&upper, xn, 1.0, scale, &[], tail_tol)?
    };

    let mut lower_mass = Vec::with_capacity(n);
    let mut lower_moment = Vec::with_capacity(n);
    let mut panels = Vec::with_capacity(n - 1);
    for w in nodes.windows(2) {
        let v = local_pair(&lower, w[0], w[1], sd + (w[0] - m).abs());
        panels.push(v);
    }
    let (mut fm, mut im) = (lower0[0], lower0[1]);
    lower_mass.push(fm);
    lower_moment.push(im);
    for v in &panels {
        fm += v[0];
        im += v[1];
        lower_mass.push(fm);
        lower_moment.push(im);
    }
    let mut upper_mass = alloc::vec![0.0; n];
    let mut upper_moment = alloc::vec![0.0; n];
    let (mut sm, mut jm) = (upper_n[0], upper_n[1]);
    upper_mass[n - 1] = sm;
    upper_moment[n - 1] = jm;
    for k in (0..n - 1).rev() {
        // Same panel, moment sign flipped.
        sm += panels[k][0];
        jm -= panels[k][1];
        upper_mass[k] = sm;
        upper_moment[k] = jm;
    }
    let total = lower_mass[n - 1] + upper_mass[n - 1];
    if (total - 1.0).abs() > 1e-7 {
        return Err(SteinError::QuadratureFailure {
            lo: support.lo,
            hi: support.hi,
            error: (total - 1.0).abs(),
        });
    }
    Ok(Cache {
        nodes,
        lower_mass,
        lower_moment,
        upper_mass,
        upper_moment,
    })
}

/// Coarse cdf over the validation panels, used only to place quantile nodes.
struct PrelimCdf<'a> {
    edges: &'a [f64],
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> PrelimCdf<'a> {
    fn new(edges: &'a [f64], panel_mass: &[f64], inv_norm: f64) -> Self {
        let n = edges.len();
        let mut lower = Vec::with_capacity(n);
        let mut acc = 0.0;
        lower.push(0.0);
        for m in panel_mass {
            acc += m * inv_norm;
            lower.push(acc);
        }
        let mut upper = alloc::vec![0.0; n];
        let mut acc = 0.0;
        for k in (0..n - 1).rev() {
            acc += panel_mass[k] * inv_norm;
            upper[k] = acc;
        }
        Self {
            edges,
            lower,
            upper,
        }
    }

    fn lower_quantile<F: Fn(f64) -> f64>(&self, pdf: &F, p: f64) -> f64 {
        let n = self.edges.len();
        let k = upper_index(&self.lower, p).min(n - 2);
        invert_panel(pdf, self.edges[k], self.edges[k + 1], p - self.lower[k], false)
    }

    fn upper_quantile<F: Fn(f64) -> f64>(&self, pdf: &F, q: f64) -> f64 {
        let n = self.edges.len();
        let k = self
            .upper
            .partition_point(|&s| s >= q)
            .saturating_sub(1)
            .min(n - 2);
        invert_panel(pdf, self.edges[k], self.edges[k + 1], q - self.upper[k + 1], true)
    }
}

fn probe_center<F: Fn(f64) -> f64>(pdf: &F, support: Interval) -> Result<(f64, f64)> {
    let mut candidates: Vec<f64> = Vec::new();
    match (support.is_bounded_below(), support.is_bounded_above()) {
        (true, true) => {
            for j in 1..128 {
                candidates.push(support.lo + support.width() * (j as f64) / 128.0);
            }
        }
        (true, false) => {
            for k in -30..=60 {
                let d = (k as f64).exp2();
                candidates.push(support.lo + d);
                candidates.push(support.lo + 1.5 * d);
            }
        }
        (false, true) => {
            for k in -30..=60 {
                let d = (k as f64).exp2();
                candidates.push(support.hi - d);
                candidates.push(support.hi - 1.5 * d);
            }
        }
        (false, false) => {
            candidates.push(0.0);
            for k in -30..=60 {
                let d = (k as f64).exp2();
                for s in [d, 1.5 * d] {
                    candidates.push(s);
                    candidates.push(-s);
                }
            }
        }
    }
    let mut best = (f64::NAN, 0.0);
    for x in candidates {
        if !support.contains(x) {
            continue;
        }
        let v = pdf(x);
        if v.is_nan() || v < 0.0 || v.is_infinite() {
            return Err(SteinError::NonPositiveDensity { x });
        }
        if v > best.1 {
            best = (x, v);
        }
    }
    if !(best.1 > 0.0) {
        let x = if best.0.is_nan() { 0.0 } else { best.0 };
        return Err(SteinError::NonPositiveDensity { x });
    }
    Ok(best)
}

/// Distance from `center` at which the density drops by `e^2` on each side,
/// capped by the distance to a finite edge.
fn side_scales<F: Fn(f64) -> f64>(pdf: &F, support: Interval, center: f64, peak: f64) -> (f64, f64) {
    let base = 1e-9 * center.abs().max(1.0);
    let one_side = |dir: f64| {
        let edge = if dir < 0.0 { support.lo } else { support.hi };
        let to_edge = (edge - center).abs();
        let mut d = base;
        for _ in 0..200 {
            if d >= to_edge {
                return to_edge;
            }
            if pdf(center + dir * d) < peak * (-2.0f64).exp() {
                return d;
            }
            d *= 2.0;
        }
        d
    };
    (one_side(-1.0), one_side(1.0))
}

fn window_edge<F: Fn(f64) -> f64>(
    pdf: &F,
    support: Interval,
    center: f64,
    scale: f64,
    peak: f64,
    cfg: &QuadratureConfig,
    dir: f64,
) -> f64 {
    let edge = if dir < 0.0 { support.lo } else { support.hi };
    if edge.is_finite() {
        return edge;
    }
    let mut d = scale;
    while d < 1e18 * scale {
        let x = center + dir * d;
        if pdf(x) <= cfg.window_density_ratio * peak {
            return x;
        }
        d *= 2.0;
    }
    center + dir * d
}

/// Panel edges spaced uniformly in `asinh((x - center) / scale)` on each side.
fn asinh_edges(center: f64, s_lo: f64, s_hi: f64, lo: f64, hi: f64, panels: usize) -> Vec<f64> {
    let half = (panels / 2).max(1);
    let mut out = Vec::with_capacity(2 * half + 1);
    let u_lo = ((center - lo) / s_lo).asinh();
    for i in 0..half {
        let u = u_lo * (1.0 - i as f64 / half as f64);
        out.push(if i == 0 { lo } else { center - s_lo * u.sinh() });
    }
    out.push(center);
    let u_hi = ((hi - center) / s_hi).asinh();
    for i in 1..=half {
        let u = u_hi * (i as f64 / half as f64);
        out.push(if i == half { hi } else { center + s_hi * u.sinh() });
    }
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{normal_cdf, normal_quantile, normal_sf};

    fn validated(d: Density) -> TargetDistribution {
        validate_target(d, &QuadratureConfig::default()).unwrap()
    }

    #[test]
    fn standard_normal_moments() {
        let t = validated(Density::standard_normal());
        assert!(t.mean().abs() < 1e-6);
        assert!((t.variance() - 1.0).abs() < 1e-6);
        assert!(t.is_standard_normal());
    }

    #[test]
    fn exponential_moments() {
        let t = validated(Density::exponential(1.0));
        assert!((t.mean() - 1.0).abs() < 1e-6);
        assert!((t.variance() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn linear_density_is_not_normalizable() {
        let d = Density::new("ramp", Interval::new(0.0, 1.0).unwrap(), |x| x);
        match validate_target(d, &QuadratureConfig::default()) {
            Err(SteinError::NotNormalizable { integral }) => assert!((integral - 0.5).abs() < 1e-9),
            other => panic!("expected NotNormalizable, got {other:?}"),
        }
    }

    #[test]
    fn small_constant_deficit_is_rescaled() {
        let d = Density::new("scaled", Interval::REAL_LINE, |x| 0.9995 * crate::special::normal_pdf(x));
        let t = validated(d);
        assert!((t.rescale_factor() - 1.0 / 0.9995).abs() < 1e-9);
        assert!((t.density(0.0) - crate::special::normal_pdf(0.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_inside_support_is_rejected() {
        let d = Density::new("gap", Interval::REAL_LINE, |x| {
            if (0.0..1.0).contains(&x) {
                1.0
            } else {
                0.0
            }
        });
        assert!(matches!(
            validate_target(d, &QuadratureConfig::default()),
            Err(SteinError::NonPositiveDensity { .. })
        ));
    }

    #[test]
    fn negative_density_is_rejected() {
        let d = Density::new("neg", Interval::new(-1.0, 1.0).unwrap(), |x| x);
        assert!(matches!(
            validate_target(d, &QuadratureConfig::default()),
            Err(SteinError::NonPositiveDensity { .. })
        ));
    }

    #[test]
    fn cauchy_has_divergent_variance() {
        let d = Density::new("cauchy", Interval::REAL_LINE, |x| {
            1.0 / (core::f64::consts::PI * (1.0 + x * x))
        });
        assert_eq!(
            validate_target(d, &QuadratureConfig::default()).unwrap_err(),
            SteinError::DivergentMoment
        );
    }

    #[test]
    fn gaussian_cdf_and_quantile_match_closed_form() {
        let t = validated(Density::standard_normal());
        for &x in &[-9.0, -6.0, -3.0, -0.7, 0.0, 0.4, 2.5, 7.0, 10.0] {
            let got = t.cdf(x);
            let want = normal_cdf(x);
            assert!((got - want).abs() <= 1e-9 * want.max(1e-300) + 1e-15, "cdf({x})");
            let got = t.sf(x);
            let want = normal_sf(x);
            assert!((got - want).abs() <= 1e-9 * want.max(1e-300) + 1e-15, "sf({x})");
        }
        for &p in &[1e-12, 1e-10, 0.001, 0.3, 0.5, 0.9, 1.0 - 1e-9] {
            let got = t.quantile(p);
            let want = normal_quantile(p);
            assert!((got - want).abs() < 1e-8, "q({p}) = {got}, want {want}");
        }
    }

    #[test]
    fn cdf_edges() {
        let t = validated(Density::exponential(1.0));
        assert_eq!(t.cdf(0.0), 0.0);
        assert_eq!(t.cdf(-1.0), 0.0);
        assert!(t.cdf(1e-300) < 1e-9);
        assert!((t.cdf(60.0) - 1.0).abs() < 1e-9);
        assert_eq!(t.quantile(0.0), 0.0);
    }

    #[test]
    fn revalidation_is_idempotent() {
        let t = validated(Density::exponential(1.0));
        let again = validated(t.to_density());
        assert!((t.mean() - again.mean()).abs() < 1e-12);
        assert!((t.variance() - again.variance()).abs() < 1e-12);
        assert!((again.rescale_factor() - 1.0).abs() < 1e-12);
        for &x in &[0.01, 0.5, 1.0, 3.0, 12.0] {
            assert!((t.cdf(x) - again.cdf(x)).abs() < 1e-12);
            assert!((t.density(x) - again.density(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_and_table_validate() {
        let u = validated(Density::uniform(Interval::new(-1.0, 3.0).unwrap()).unwrap());
        assert!((u.mean() - 1.0).abs() < 1e-9);
        assert!((u.variance() - 16.0 / 12.0).abs() < 1e-9);
        assert!((u.quantile(0.25) - 0.0).abs() < 1e-9);

        let pts: Vec<(f64, f64)> = (0..=200)
            .map(|i| {
                let x = -8.0 + 0.08 * i as f64;
                (x, crate::special::normal_pdf(x))
            })
            .collect();
        let t = validated(Density::log_linear_table(&pts, None).unwrap());
        assert!(t.mean().abs() < 1e-6);
        assert!((t.variance() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn far_tail_uses_log_density() {
        let t = validated(Density::standard_normal());
        // density underflows at 40, the log-space route still answers.
        let s = t.side_integrals(-40.0).unwrap();
        let ratio = s.moment_over_density();
        // ∫_{-inf}^x (-y) phi(y) dy / phi(x) = 1 exactly.
        assert!((ratio - 1.0).abs() < 1e-10, "{ratio}");
        let no_log = validated(Density::new("n", Interval::REAL_LINE, crate::special::normal_pdf));
        assert!(matches!(
            no_log.side_integrals(-40.0),
            Err(SteinError::NumericallyDegenerate { .. })
        ));
    }
}
