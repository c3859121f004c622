#[allow(unused_imports)]
use num_traits::Float;

/// Monte Carlo mean with its naive standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanEstimate {
    pub value: f64,
    /// Sample standard deviation divided by `sqrt(n)`; zero when `n == 1`.
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// Two-pass mean and standard error. `None` for an empty slice.
    pub fn from_slice(values: &[f64]) -> Option<Self> {
        Self::from_iter_twice(|| values.iter().copied(), values.len())
    }

    pub(crate) fn from_iter_twice<I, F>(make: F, n: usize) -> Option<Self>
    where
        F: Fn() -> I,
        I: Iterator<Item = f64>,
    {
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let mean = make().sum::<f64>() / nf;
        if n == 1 {
            return Some(Self {
                value: mean,
                std_error: 0.0,
                n,
            });
        }
        let ss: f64 = make().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (nf - 1.0)).sqrt();
        Some(Self {
            value: mean,
            std_error: sd / nf.sqrt(),
            n,
        })
    }
}

/// Standard error of the mean of an autocorrelated series by the method of
/// non-overlapping batch means (`batches` equal batches, tail dropped).
pub fn batch_means_std_error(values: &[f64], batches: usize) -> Option<f64> {
    if batches < 2 || values.len() < 2 * batches {
        return None;
    }
    let len = values.len() / batches;
    let means: alloc::vec::Vec<f64> = values
        .chunks_exact(len)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    MeanEstimate::from_slice(&means).map(|m| m.std_error)
}

/// Sample variance (denominator `n - 1`).
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_has_zero_error() {
        let m = MeanEstimate::from_slice(&[1.0]).unwrap();
        assert_eq!(m.value, 1.0);
        assert_eq!(m.std_error, 0.0);
    }

    #[test]
    fn empty_is_none() {
        assert!(MeanEstimate::from_slice(&[]).is_none());
    }

    #[test]
    fn std_error_is_sd_over_root_n() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let m = MeanEstimate::from_slice(&xs).unwrap();
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((m.std_error - sd / 2.0).abs() < 1e-15);
        assert!((sample_variance(&xs).unwrap() - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn batch_means_of_constant_blocks() {
        let mut xs = alloc::vec::Vec::new();
        for b in 0..4 {
            xs.extend(core::iter::repeat(b as f64).take(10));
        }
        let se = batch_means_std_error(&xs, 4).unwrap();
        let want = MeanEstimate::from_slice(&[0.0, 1.0, 2.0, 3.0]).unwrap().std_error;
        assert!((se - want).abs() < 1e-15);
    }
}
