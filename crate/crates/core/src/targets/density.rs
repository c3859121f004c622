use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};

use crate::error::{Result, SteinError};
use crate::interval::Interval;
use crate::special::{normal_log_pdf, normal_pdf};
use crate::RealFn;

/// Closed-form sampler attached to builtin densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactSampler {
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl ExactSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ExactSampler::Normal { mean, sd } => {
                if mean == 0.0 && sd == 1.0 {
                    StandardNormal.sample(rng)
                } else {
                    Normal::new(mean, sd).map(|d| d.sample(rng)).unwrap_or(f64::NAN)
                }
            }
            ExactSampler::Exponential { rate } => {
                Exp::new(rate).map(|d| d.sample(rng)).unwrap_or(f64::NAN)
            }
            ExactSampler::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

/// An unvalidated density on an open interval.
///
/// `pdf` may omit its normalizing constant by up to the configured slack;
/// [`validate_target`](super::validate_target) rescales it.
#[derive(Clone)]
pub struct Density {
    pub(crate) label: String,
    pub(crate) support: Interval,
    pub(crate) pdf: RealFn,
    pub(crate) log_pdf: Option<RealFn>,
    pub(crate) sampler: Option<ExactSampler>,
    pub(crate) standard_normal: bool,
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Density")
            .field("label", &self.label)
            .field("support", &self.support)
            .field("has_log_pdf", &self.log_pdf.is_some())
            .field("sampler", &self.sampler)
            .finish()
    }
}

impl Density {
    pub fn new<F>(label: impl Into<String>, support: Interval, pdf: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            support,
            pdf: Arc::new(pdf),
            log_pdf: None,
            sampler: None,
            standard_normal: false,
        }
    }

    pub fn with_log_density<F>(mut self, log_pdf: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.log_pdf = Some(Arc::new(log_pdf));
        self
    }

    pub fn with_sampler(mut self, sampler: ExactSampler) -> Self {
        self.sampler = Some(sampler);
        self
    }

    /// `N(0, 1)` on the real line.
    pub fn standard_normal() -> Self {
        let mut d = Self::new("gaussian", Interval::REAL_LINE, normal_pdf)
            .with_log_density(normal_log_pdf)
            .with_sampler(ExactSampler::Normal { mean: 0.0, sd: 1.0 });
        d.standard_normal = true;
        d
    }

    /// Standard normal density restricted to `support`; the validator
    /// renormalizes it. Unrestricted supports give [`Density::standard_normal`].
    pub fn gaussian_on(support: Interval) -> Self {
        if support == Interval::REAL_LINE {
            return Self::standard_normal();
        }
        Self::new("gaussian", support, normal_pdf).with_log_density(normal_log_pdf)
    }

    /// Exponential law with the given rate on `(0, inf)`.
    pub fn exponential(rate: f64) -> Self {
        Self::new(
            "exponential",
            Interval {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            move |x| rate * (-rate * x).exp(),
        )
        .with_log_density(move |x| rate.ln() - rate * x)
        .with_sampler(ExactSampler::Exponential { rate })
    }

    /// Uniform law on a bounded interval.
    pub fn uniform(support: Interval) -> Result<Self> {
        if !support.is_bounded() {
            return Err(SteinError::InvalidArgument(
                "uniform density needs a bounded support".into(),
            ));
        }
        let height = 1.0 / support.width();
        Ok(Self::new("uniform", support, move |_| height)
            .with_log_density(move |_| height.ln())
            .with_sampler(ExactSampler::Uniform {
                lo: support.lo,
                hi: support.hi,
            }))
    }

    /// Density interpolated log-linearly through `(x, density)` pairs.
    ///
    /// Outside the table the edge segments are extrapolated, so a support
    /// wider than the table gets exponential tails.
    pub fn log_linear_table(points: &[(f64, f64)], support: Option<Interval>) -> Result<Self> {
        let table = LogLinearTable::new(points)?;
        let support = support.unwrap_or(Interval {
            lo: table.xs[0],
            hi: table.xs[table.xs.len() - 1],
        });
        let t = Arc::new(table);
        let t2 = t.clone();
        Ok(Self::new("table", support, move |x| t.log_value(x).exp())
            .with_log_density(move |x| t2.log_value(x)))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> Interval {
        self.support
    }

    /// Density value, zero outside the open support.
    pub fn pdf(&self, x: f64) -> f64 {
        if self.support.contains(x) {
            (self.pdf)(x)
        } else {
            0.0
        }
    }

    pub fn has_log_density(&self) -> bool {
        self.log_pdf.is_some()
    }
}

#[derive(Debug)]
struct LogLinearTable {
    xs: Vec<f64>,
    logs: Vec<f64>,
}

impl LogLinearTable {
    fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(SteinError::InvalidArgument(
                "density table needs at least two points".into(),
            ));
        }
        let mut xs = Vec::with_capacity(points.len());
        let mut logs = Vec::with_capacity(points.len());
        for (i, &(x, d)) in points.iter().enumerate() {
            if !x.is_finite() || !d.is_finite() {
                return Err(SteinError::InvalidArgument(alloc::format!(
                    "density table row {i} is not finite"
                )));
            }
            if d <= 0.0 {
                return Err(SteinError::NonPositiveDensity { x });
            }
            if let Some(&prev) = xs.last() {
                if x <= prev {
                    return Err(SteinError::InvalidArgument(alloc::format!(
                        "density table abscissae must increase strictly (row {i})"
                    )));
                }
            }
            xs.push(x);
            logs.push(d.ln());
        }
        Ok(Self { xs, logs })
    }

    fn log_value(&self, x: f64) -> f64 {
        let n = self.xs.len();
        // Segment index; edge segments extend to infinity.
        let k = match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return self.logs[i],
            Err(0) => 0,
            Err(i) if i >= n => n - 2,
            Err(i) => i - 1,
        };
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let (l0, l1) = (self.logs[k], self.logs[k + 1]);
        l0 + (l1 - l0) * (x - x0) / (x1 - x0)
    }
}
