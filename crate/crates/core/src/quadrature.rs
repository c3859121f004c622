//! Adaptive Gauss–Kronrod (7/15) quadrature for small vector integrands.
//!
//! Integrands return `[f64; N]` so that several moments of the same density
//! share one set of function evaluations. Error control is global: the panel
//! with the largest error estimate is bisected until every component meets
//! `max(abs_tol, rel_tol * |I_k|)`.

#![allow(clippy::excessive_precision)]

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Result, SteinError};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights attach to the odd Kronrod abscissae (index 1, 3, 5) and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and work limits for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    /// Maximum number of panels kept alive.
    pub max_panels: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            max_panels: 2000,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-13, 1e-12)
    }
}

/// One Gauss–Kronrod panel: `(kronrod, |kronrod - gauss|)` per component.
pub fn gk15<const N: usize, F>(f: &F, a: f64, b: f64) -> ([f64; N], [f64; N])
where
    F: Fn(f64) -> [f64; N],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    for k in 0..N {
        kron[k] = fc[k] * WGK[7];
        gauss[k] = fc[k] * WG[3];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let lo = f(center - dx);
        let hi = f(center + dx);
        for k in 0..N {
            let s = lo[k] + hi[k];
            kron[k] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut err = [0.0; N];
    for k in 0..N {
        kron[k] *= half;
        gauss[k] *= half;
        err[k] = (kron[k] - gauss[k]).abs();
    }
    (kron, err)
}

struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    err: [f64; N],
    key: f64,
}

impl<const N: usize> PartialEq for Panel<N> {
    fn eq(&self, other: &Self) -> bool {
        self.key.total_cmp(&other.key) == Ordering::Equal
    }
}
impl<const N: usize> Eq for Panel<N> {}
impl<const N: usize> PartialOrd for Panel<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Panel<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

fn max_of<const N: usize>(v: &[f64; N]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(*x) })
}

/// Result of an adaptive integration: the estimate and its error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub converged: bool,
}

/// Adaptive integration over `[a, b]` (finite), split first at `breaks`.
///
/// Never fails; `converged` reports whether the tolerance was met.
pub fn integrate_raw<const N: usize, F>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Estimate<N>
where
    F: Fn(f64) -> [f64; N],
{
    if a == b {
        return Estimate {
            value: [0.0; N],
            error: [0.0; N],
            converged: true,
        };
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    cuts.push(lo);
    for &c in breaks {
        if c > lo && c < hi {
            cuts.push(c);
        }
    }
    cuts.push(hi);
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup();

    let mut heap: BinaryHeap<Panel<N>> = BinaryHeap::new();
    let mut total = [0.0; N];
    let mut total_err = [0.0; N];
    for w in cuts.windows(2) {
        let (v, e) = gk15(f, w[0], w[1]);
        for k in 0..N {
            total[k] += v[k];
            total_err[k] += e[k];
        }
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value: v,
            err: e,
            key: max_of(&e),
        });
    }

    let satisfied = |total: &[f64; N], err: &[f64; N]| {
        (0..N).all(|k| err[k] <= tol.abs.max(tol.rel * total[k].abs()))
    };

    let mut converged = satisfied(&total, &total_err);
    while !converged && heap.len() < tol.max_panels {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Panel cannot be split further in floating point.
            heap.push(Panel { key: 0.0, ..worst });
            if heap.peek().map_or(true, |p| p.key == 0.0) {
                break;
            }
            continue;
        }
        let (lv, le) = gk15(f, worst.a, mid);
        let (rv, re) = gk15(f, mid, worst.b);
        for k in 0..N {
            total[k] += lv[k] + rv[k] - worst.value[k];
            total_err[k] += le[k] + re[k] - worst.err[k];
        }
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: lv,
            err: le,
            key: max_of(&le),
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: rv,
            err: re,
            key: max_of(&re),
        });
        converged = satisfied(&total, &total_err);
    }

    // Re-sum from the panels to shed accumulated update round-off.
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for p in heap.iter() {
        for k in 0..N {
            value[k] += p.value[k];
            error[k] += p.err[k];
        }
    }
    for v in value.iter_mut() {
        *v *= sign;
    }
    Estimate {
        value,
        error,
        converged: converged || satisfied(&value, &error),
    }
}

/// Like [`integrate_raw`] but an unconverged estimate whose error exceeds
/// `1e3` times the requested tolerance becomes a `QuadratureFailure`.
pub fn integrate<const N: usize, F>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<[f64; N]>
where
    F: Fn(f64) -> [f64; N],
{
    let est = integrate_raw(f, a, b, breaks, tol);
    if est.value.iter().any(|v| !v.is_finite()) {
        return Err(SteinError::QuadratureFailure {
            lo: a,
            hi: b,
            error: f64::NAN,
        });
    }
    if !est.converged {
        let worst = (0..N)
            .map(|k| est.error[k] / tol.abs.max(tol.rel * est.value[k].abs()))
            .fold(0.0, f64::max);
        if worst > 1e3 {
            return Err(SteinError::QuadratureFailure {
                lo: a,
                hi: b,
                error: max_of(&est.error),
            });
        }
    }
    Ok(est.value)
}

/// Integral over `[a, a + dir * inf)` through `y = a + dir * scale * t / (1 - t)`.
///
/// `dir` is `+1.0` (upwards) or `-1.0` (downwards); the result is the
/// integral in the natural orientation, i.e. always `∫ f` over the ray.
/// `breaks` are points on the ray where the integrand has kinks.
pub fn integrate_ray<const N: usize, F>(
    f: &F,
    a: f64,
    dir: f64,
    scale: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<[f64; N]>
where
    F: Fn(f64) -> [f64; N],
{
    let mapped = |t: f64| {
        let one_minus = 1.0 - t;
        let y = a + dir * scale * t / one_minus;
        let jac = scale / (one_minus * one_minus);
        let mut v = f(y);
        for c in v.iter_mut() {
            *c *= jac;
            if !c.is_finite() && jac.is_infinite() {
                *c = 0.0;
            }
        }
        v
    };
    let tb: Vec<f64> = breaks
        .iter()
        .filter_map(|&c| {
            let s = (c - a) * dir / scale;
            (s > 0.0 && s.is_finite()).then(|| s / (1.0 + s))
        })
        .collect();
    integrate(&mapped, 0.0, 1.0, &tb, tol)
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F>(f: F, a: f64, b: f64, breaks: &[f64], tol: Tolerance) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate(&|x| [f(x)], a, b, breaks, tol).map(|v| v[0])
}
