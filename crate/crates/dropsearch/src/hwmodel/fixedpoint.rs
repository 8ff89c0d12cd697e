//! Q7.8 signed fixed-point emulation: 1 sign bit, 7 integer bits, 8 fraction
//! bits, round-half-to-even, saturating at the format bounds.

use serde::{Deserialize, Serialize};

use crate::tensor::{Real, Tensor};

/// Describes the 16-bit Q7.8 format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub total_bits: u32,
    pub sign_bits: u32,
    pub integer_bits: u32,
    pub fraction_bits: u32,
}

pub const Q7_8: FixedPointFormat = FixedPointFormat {
    total_bits: 16,
    sign_bits: 1,
    integer_bits: 7,
    fraction_bits: 8,
};

impl FixedPointFormat {
    pub fn resolution(&self) -> f64 {
        2.0f64.powi(-(self.fraction_bits as i32))
    }

    pub fn max_value(&self) -> f64 {
        let steps = (1i64 << (self.total_bits - 1)) - 1;
        steps as f64 * self.resolution()
    }

    pub fn min_value(&self) -> f64 {
        let steps = 1i64 << (self.total_bits - 1);
        -(steps as f64) * self.resolution()
    }
}

/// Quantizes one value to Q7.8: `clamp(round_half_even(x * 256), -32768,
/// 32767) / 256`.
pub fn quantize_value_q7_8(v: f64) -> f64 {
    let scaled = (v * 256.0).round_ties_even();
    scaled.clamp(-32768.0, 32767.0) / 256.0
}

/// Elementwise Q7.8 quantization of a tensor.
pub fn quantize_q7_8<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .map(|v| T::from_f64_exact(quantize_value_q7_8(v.to_f64().expect("finite"))))
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}
