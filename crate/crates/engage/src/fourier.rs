//! Multi-scale sin/cos encoding of scalar features.
//!
//! A scalar `x` is divided by a ladder of powers of two and each quotient is
//! passed through sin and cos. The result is bounded in [-1, 1] at every
//! scale, so raw counts and timestamps can be fed to the network without
//! explicit normalization.

use serde::{Deserialize, Serialize};

use crate::error::{EngageError, Result};

/// Inputs are clamped so that `x / 2^s` stays exactly representable.
const INPUT_CAP: f64 = 9007199254740992.0; // 2^53

/// Ordered list of power-of-two scale exponents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierScales {
    scales: Vec<i32>,
}

impl Default for FourierScales {
    fn default() -> Self {
        FourierScales {
            scales: vec![-1, 0, 1, 2, 3, 4, 5, 6],
        }
    }
}

impl FourierScales {
    pub fn new(scales: Vec<i32>) -> Result<Self> {
        if scales.is_empty() {
            return Err(EngageError::Config("fourier scales must be non-empty".into()));
        }
        if !scales.windows(2).all(|w| w[0] < w[1]) {
            return Err(EngageError::Config(
                "fourier scales must be strictly increasing".into(),
            ));
        }
        Ok(FourierScales { scales })
    }

    pub fn exponents(&self) -> &[i32] {
        &self.scales
    }

    /// Encoded width: one sin and one cos component per scale.
    pub fn width(&self) -> usize {
        2 * self.scales.len()
    }

    /// Encode one scalar into `out` (length `width()`): sines for all scales
    /// first, then cosines, both in scale order.
    pub fn encode_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        if !x.is_finite() {
            return Err(EngageError::Data(format!("non-finite fourier input: {x}")));
        }
        assert_eq!(out.len(), self.width());
        let x = x.clamp(-INPUT_CAP, INPUT_CAP);
        let n = self.scales.len();
        for (i, &s) in self.scales.iter().enumerate() {
            let v = x / (s as f64).exp2();
            out[i] = v.sin();
            out[n + i] = v.cos();
        }
        Ok(())
    }

    /// Same layout as [`encode_into`](Self::encode_into), in f32 for the
    /// inference path.
    pub fn encode_into_f32(&self, x: f64, out: &mut [f32]) {
        let x = x.clamp(-INPUT_CAP, INPUT_CAP);
        let n = self.scales.len();
        for (i, &s) in self.scales.iter().enumerate() {
            let v = (x / (s as f64).exp2()) as f32;
            out[i] = v.sin();
            out[n + i] = v.cos();
        }
    }

    pub fn encode_scalar(&self, x: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.width()];
        self.encode_into(x, &mut out)?;
        Ok(out)
    }

    /// Encode a column of scalars into a row-major matrix, one encoded row
    /// per input value.
    pub fn encode_column(&self, xs: &[f64]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|&x| self.encode_scalar(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_input_gives_zeros_then_ones() {
        let scales = FourierScales::default();
        let v = scales.encode_scalar(0.0).unwrap();
        assert_eq!(v.len(), 16);
        assert!(v[..8].iter().all(|&x| x == 0.0));
        assert!(v[8..].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn default_width_is_16() {
        let scales = FourierScales::default();
        assert_eq!(scales.width(), 16);
        assert_eq!(scales.encode_scalar(123.456).unwrap().len(), 16);
    }

    // Independent trig oracle: evaluate sin/cos of x * 2^-s directly, scale
    // by exact powers of two rather than through encode_into's exp2 path.
    fn oracle(x: f64, scales: &[i32]) -> Vec<f64> {
        let mut sins: Vec<f64> = scales
            .iter()
            .map(|&s| (x * 2f64.powi(-s)).sin())
            .collect();
        let coss: Vec<f64> = scales
            .iter()
            .map(|&s| (x * 2f64.powi(-s)).cos())
            .collect();
        sins.extend(coss);
        sins
    }

    #[test]
    fn matches_trig_oracle() {
        let scales = FourierScales::new(vec![-1, 0]).unwrap();
        let got = scales.encode_scalar(3.0).unwrap();
        let want = oracle(3.0, &[-1, 0]);
        assert_eq!(want.len(), 4);
        // want = [sin 6, sin 3, cos 6, cos 3]
        assert!((want[0] - 6f64.sin()).abs() < 1e-15);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn column_of_100_matches_oracle() {
        let scales = FourierScales::default();
        let m = scales.encode_column(&[100.0]).unwrap();
        let want = oracle(100.0, scales.exponents());
        for (g, w) in m[0].iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_column() {
        let scales = FourierScales::default();
        assert!(scales.encode_column(&[]).unwrap().is_empty());
    }

    #[test]
    fn identical_inputs_identical_rows() {
        let scales = FourierScales::default();
        let m = scales.encode_column(&[0.0, 0.0]).unwrap();
        assert_eq!(m[0], m[1]);
    }

    #[test]
    fn rejects_non_finite() {
        let scales = FourierScales::default();
        assert!(scales.encode_scalar(f64::NAN).is_err());
        assert!(scales.encode_scalar(f64::INFINITY).is_err());
    }

    #[test]
    fn rejects_bad_scales() {
        assert!(FourierScales::new(vec![]).is_err());
        assert!(FourierScales::new(vec![1, 1]).is_err());
        assert!(FourierScales::new(vec![2, 1]).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_pythagorean(x in -1e12f64..1e12f64) {
            let scales = FourierScales::default();
            let v = scales.encode_scalar(x).unwrap();
            let n = v.len() / 2;
            for c in &v {
                prop_assert!(c.abs() <= 1.0 + 1e-15);
            }
            for i in 0..n {
                let s = v[i] * v[i] + v[n + i] * v[n + i];
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn column_rows_agree_with_scalar(xs in proptest::collection::vec(-1e9f64..1e9, 0..20)) {
            let scales = FourierScales::default();
            let m = scales.encode_column(&xs).unwrap();
            for (row, &x) in m.iter().zip(&xs) {
                prop_assert_eq!(row, &scales.encode_scalar(x).unwrap());
            }
        }
    }
}
