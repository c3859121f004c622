//! Standard normal special functions.
//!
//! Everything here is evaluated in a form that keeps relative accuracy in
//! both tails: tail probabilities go through `erfc`, and the Mills ratio
//! switches to its continued fraction beyond `|x| = 3` so that quotients of
//! two underflowing quantities are never formed.

#[allow(unused_imports)]
use num_traits::Float;

pub const SQRT_2: f64 = core::f64::consts::SQRT_2;
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// `sqrt(pi / 2)`, the sup-norm bound of Gaussian indicator solutions.
pub const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_3;

/// Beyond this point the Mills ratio is taken from its continued fraction.
const MILLS_CF_THRESHOLD: f64 = 3.0;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

pub fn normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// `P(N <= x)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `P(N > x)`, accurate far into the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Mills ratio `R(x) = P(N > x) / phi(x)`.
///
/// Finite for every real `x` whose `phi(x)` does not underflow; returns
/// `+inf` for very negative `x`.
pub fn mills_ratio(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > MILLS_CF_THRESHOLD {
        mills_ratio_cf(x)
    } else {
        let pdf = normal_pdf(x);
        if pdf == 0.0 {
            return f64::INFINITY;
        }
        normal_sf(x) / pdf
    }
}

/// Continued fraction `1 / (x + 1/(x + 2/(x + 3/(x + ...))))`, evaluated by
/// the modified Lentz method. Only used for `x > 3`.
fn mills_ratio_cf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..2000 {
        let a = n as f64;
        d = x + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = x + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// Inverse of [`normal_cdf`] (Wichura's AS 241, then one Newton polish
/// step against the tail-accurate cdf).
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let x = as241(p);
    // Newton step on whichever tail is small.
    let pdf = normal_pdf(x);
    if pdf > 0.0 {
        let resid = if p < 0.5 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_sf(x)
        };
        x - resid / pdf
    } else {
        x
    }
}

#[allow(clippy::excessive_precision)]
fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_672_7e3 * r + 3.343_057_558_358_812_810_5e4) * r
            + 6.726_577_092_700_870_085_3e4)
            * r
            + 4.592_195_393_154_987_145_7e4)
            * r
            + 1.373_169_376_550_946_112_5e4)
            * r
            + 1.971_590_950_306_551_442_7e3)
            * r
            + 1.331_416_678_917_843_774_5e2)
            * r
            + 3.387_132_872_796_366_608_0;
        let den = ((((((5.226_495_278_852_854_561_0e3 * r + 2.872_908_573_572_194_267_4e4) * r
            + 3.930_789_580_009_271_061_0e4)
            * r
            + 2.121_379_430_158_659_586_7e4)
            * r
            + 5.394_196_021_424_751_107_7e3)
            * r
            + 6.871_870_074_920_579_083_0e2)
            * r
            + 4.231_333_070_160_091_125_2e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414_076_4e-4 * r + 2.272_384_498_926_918_458_3e-2)
            * r
            + 2.417_807_251_774_506_117_7e-1)
            * r
            + 1.270_458_252_452_368_382_58)
            * r
            + 3.647_848_324_763_204_605_04)
            * r
            + 5.769_497_221_460_691_405_5)
            * r
            + 4.630_337_846_156_545_295_9)
            * r
            + 1.423_437_110_749_683_577_34;
        let den = ((((((1.050_750_071_644_416_843_24e-9 * r + 5.475_938_084_995_344_946e-4)
            * r
            + 1.519_866_656_361_645_719_66e-2)
            * r
            + 1.481_039_764_274_800_745_9e-1)
            * r
            + 6.897_673_349_851_000_045_5e-1)
            * r
            + 1.676_384_830_183_803_849_4)
            * r
            + 2.053_191_626_637_758_821_87)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_132_65e-7 * r + 2.711_555_568_743_487_578_15e-5)
            * r
            + 1.242_660_947_388_078_438_6e-3)
            * r
            + 2.653_218_952_657_612_309_3e-2)
            * r
            + 2.965_605_718_285_048_912_3e-1)
            * r
            + 1.784_826_539_917_291_335_8)
            * r
            + 5.463_784_911_164_114_369_9)
            * r
            + 6.657_904_643_501_103_777_2;
        let den = ((((((2.044_263_103_389_939_785_64e-15 * r + 1.421_511_758_316_445_888_7e-7)
            * r
            + 1.846_318_317_510_054_681_8e-5)
            * r
            + 7.868_691_311_456_132_591e-4)
            * r
            + 1.487_536_129_085_061_485_25e-2)
            * r
            + 1.369_298_809_227_358_053_1e-1)
            * r
            + 5.998_322_065_558_879_376_9e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    // Reference values from 40-digit arithmetic.
    const MILLS: [(f64, f64); 8] = [
        (0.0, 1.253_314_137_315_500_251_2),
        (1.0, 0.655_679_542_418_798_471_54),
        (2.5, 0.354_265_111_329_793_666_78),
        (3.0, 0.304_590_298_710_103_295_73),
        (3.5, 0.266_567_768_968_223_757_15),
        (5.0, 0.192_808_104_715_315_764_88),
        (10.0, 0.099_028_596_471_731_921_395),
        (30.0, 0.033_296_419_072_497_213_382),
    ];

    #[test]
    fn mills_ratio_matches_reference() {
        for (x, r) in MILLS {
            let got = mills_ratio(x);
            assert!((got - r).abs() <= 1e-14 * r, "R({x}) = {got}, want {r}");
        }
    }

    #[test]
    fn continued_fraction_agrees_with_erfc_route_past_threshold() {
        for i in 0..60 {
            let x = 3.0 + 0.4 * i as f64;
            let direct = normal_sf(x) / normal_pdf(x);
            let cf = mills_ratio_cf(x);
            assert!((direct - cf).abs() <= 1e-12 * cf, "x={x}");
        }
    }

    #[test]
    fn cdf_tails() {
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_948_59).abs() < 1e-15);
        let lo = normal_cdf(-5.0);
        assert!((lo - 2.866_515_718_791_939_116_7e-7).abs() < 1e-14 * lo);
        let far = normal_cdf(-20.0);
        assert!((far - 2.753_624_118_606_233_695_1e-89).abs() < 1e-13 * far);
        assert_eq!(normal_sf(-3.0), normal_cdf(3.0));
    }

    #[test]
    fn quantile_reference_values() {
        let cases = [
            (1e-10, -6.361_340_902_404_056_204_7),
            (0.001, -3.090_232_306_167_813_541_5),
            (0.025, -1.959_963_984_540_054_235_5),
            (0.3, -0.524_400_512_708_040_784_04),
            (0.5, 0.0),
            (0.975, 1.959_963_984_540_054_235_5),
            (0.999_999, 4.753_424_308_822_898_948_2),
        ];
        for (p, q) in cases {
            let got = normal_quantile(p);
            // p itself carries half an ulp of rounding.
            let tol = 1e-12 * (1.0 + q.abs()) + f64::EPSILON * p / normal_pdf(q);
            assert!((got - q).abs() < tol, "q({p}) = {got}, want {q}");
        }
    }

    #[test]
    fn quantile_edges() {
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(normal_quantile(1.0), f64::INFINITY);
        assert!(normal_quantile(1.5).is_nan());
    }
}
