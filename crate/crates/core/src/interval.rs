use core::fmt;

/// Open interval `(lo, hi)` with possibly infinite endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interval {
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_ext::extended_f64"))]
    pub lo: f64,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_ext::extended_f64"))]
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Option<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return None;
        }
        Some(Self { lo, hi })
    }

    /// Strict membership.
    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn is_bounded_below(&self) -> bool {
        self.lo.is_finite()
    }

    pub fn is_bounded_above(&self) -> bool {
        self.hi.is_finite()
    }

    pub fn is_bounded(&self) -> bool {
        self.is_bounded_below() && self.is_bounded_above()
    }

    /// Width, `+inf` for unbounded intervals.
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}
