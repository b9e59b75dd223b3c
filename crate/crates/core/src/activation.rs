//! The p-bit nonlinearity: exact `tanh` or a quantized lookup table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Exact,
    /// Table lookup with `bits` bits of output precision.
    Lut { bits: u32 },
}

/// `tanh` sampled on the grid `k 2^-(bits-1)`, `|k| <= K`, where the grid
/// reaches at least `R = (bits + 1) ln 2 / 2`. Rounding to the nearest grid
/// point and saturating beyond it both keep the error below `2^-bits`.
#[derive(Debug, Clone, PartialEq)]
pub struct TanhLut {
    bits: u32,
    half: i64,
    inv_step: f64,
    table: Vec<f64>,
}

impl TanhLut {
    pub fn new(bits: u32) -> Result<Self> {
        if !(2..=20).contains(&bits) {
            return Err(Error::InvalidArgument(format!(
                "LUT bit width must be in 2..=20, got {bits}"
            )));
        }
        let step = (-(bits as f64 - 1.0)).exp2();
        let range = (bits as f64 + 1.0) * std::f64::consts::LN_2 / 2.0;
        let half = (range / step).ceil() as i64;
        let table = (-half..=half).map(|k| (k as f64 * step).tanh()).collect();
        Ok(TanhLut {
            bits,
            half,
            inv_step: 1.0 / step,
            table,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Guaranteed bound on `|lut(x) - tanh(x)|`.
    pub fn error_bound(&self) -> f64 {
        (-(self.bits as f64 - 1.0)).exp2()
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let k = (x * self.inv_step).round().clamp(-self.half as f64, self.half as f64) as i64;
        self.table[(k + self.half) as usize]
    }
}

/// Evaluates the configured nonlinearity.
#[derive(Debug, Clone)]
pub(crate) enum Nonlinearity {
    Exact,
    Lut(TanhLut),
}

impl Nonlinearity {
    pub(crate) fn new(activation: Activation) -> Result<Self> {
        Ok(match activation {
            Activation::Exact => Nonlinearity::Exact,
            Activation::Lut { bits } => Nonlinearity::Lut(TanhLut::new(bits)?),
        })
    }

    #[inline]
    pub(crate) fn tanh(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Exact => x.tanh(),
            Nonlinearity::Lut(lut) => lut.eval(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lut_error_within_bound() {
        for bits in [4, 6, 8, 10, 12] {
            let lut = TanhLut::new(bits).unwrap();
            let worst = (-40_000..=40_000)
                .map(|k| k as f64 * 2e-4)
                .map(|x| (lut.eval(x) - x.tanh()).abs())
                .fold(0.0, f64::max);
            assert!(worst <= lut.error_bound(), "bits {bits}: {worst}");
        }
    }

    #[test]
    fn lut_is_odd_and_monotone() {
        let lut = TanhLut::new(8).unwrap();
        let mut prev = -1.0;
        for k in -500..=500 {
            let x = k as f64 * 0.01;
            let y = lut.eval(x);
            assert!(y >= prev);
            prev = y;
            assert!((lut.eval(-x) + y).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_width() {
        assert!(TanhLut::new(1).is_err());
        assert!(TanhLut::new(40).is_err());
    }
}
