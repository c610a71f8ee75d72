//! Sinusoidal positional encoding of normalized coordinates.
//!
//! Layout is frequency-major: for `k = 0..N_f`, for each input dimension `d`,
//! the pair `sin(2^k pi x_d), cos(2^k pi x_d)`. When
//! [`EncodingConfig::include_identity`] is set the raw coordinates are
//! prepended.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub num_frequencies: usize,
    pub include_identity: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            num_frequencies: 10,
            include_identity: false,
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_frequencies == 0 {
            return Err(Error::validation("encoding", "num_frequencies must be >= 1"));
        }
        Ok(())
    }

    pub fn output_len(&self, input_dims: usize) -> usize {
        2 * input_dims * self.num_frequencies + if self.include_identity { input_dims } else { 0 }
    }
}

/// Encode one point, appending to `out`.
pub fn positional_encode_into(x: &[f64], config: &EncodingConfig, out: &mut Vec<f64>) {
    out.reserve(config.output_len(x.len()));
    if config.include_identity {
        out.extend_from_slice(x);
    }
    let mut freq = PI;
    for _ in 0..config.num_frequencies {
        for &v in x {
            let (s, c) = libm::sincos(freq * v);
            out.push(s);
            out.push(c);
        }
        freq *= 2.0;
    }
}

pub fn positional_encode(x: &[f64], config: &EncodingConfig) -> Vec<f64> {
    let mut out = Vec::new();
    positional_encode_into(x, config, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn origin_encodes_to_zero_sines_unit_cosines() {
        let e = positional_encode(&[0.0; 3], &EncodingConfig::default());
        assert_eq!(e.len(), 60);
        for pair in e.chunks(2) {
            assert_eq!(pair, [0.0, 1.0]);
        }
    }

    #[test]
    fn quarter_and_half() {
        let one = EncodingConfig {
            num_frequencies: 1,
            include_identity: false,
        };
        let e = positional_encode(&[0.5], &one);
        assert!((e[0] - 1.0).abs() < 1e-12 && e[1].abs() < 1e-12);

        let three = EncodingConfig {
            num_frequencies: 3,
            include_identity: false,
        };
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let expect = [h, h, 1.0, 0.0, 0.0, -1.0];
        let e = positional_encode(&[0.25], &three);
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn identity_is_prepended() {
        let cfg = EncodingConfig {
            num_frequencies: 2,
            include_identity: true,
        };
        let e = positional_encode(&[0.1, -0.3], &cfg);
        assert_eq!(e.len(), 2 + 8);
        assert_eq!(&e[..2], &[0.1, -0.3]);
    }

    #[test]
    fn zero_frequencies_rejected() {
        let cfg = EncodingConfig {
            num_frequencies: 0,
            include_identity: false,
        };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn length_and_range(d in 1usize..6, nf in 1usize..12, id in any::<bool>(), seed in any::<u64>()) {
            let cfg = EncodingConfig { num_frequencies: nf, include_identity: id };
            let x: Vec<f64> = (0..d).map(|i| ((seed.rotate_left(i as u32 * 7) % 2000) as f64 / 1000.0) - 1.0).collect();
            let e = positional_encode(&x, &cfg);
            prop_assert_eq!(e.len(), 2 * d * nf + if id { d } else { 0 });
            let start = if id { d } else { 0 };
            prop_assert!(e[start..].iter().all(|v| (-1.0..=1.0).contains(v)));
        }

        #[test]
        fn frequency_doubling(x in -0.5f64..0.5, nf in 2usize..8) {
            let cfg = EncodingConfig { num_frequencies: nf, include_identity: false };
            let a = positional_encode(&[x], &cfg);
            let b = positional_encode(&[2.0 * x], &cfg);
            for k in 0..nf - 1 {
                prop_assert!((a[2 * (k + 1)] - b[2 * k]).abs() < 1e-9);
                prop_assert!((a[2 * (k + 1) + 1] - b[2 * k + 1]).abs() < 1e-9);
            }
        }

        #[test]
        fn injective_on_half_open_interval(x in -1.0f64..0.999, gap in 1e-6f64..0.5) {
            let y = (x + gap).min(0.999_999);
            prop_assume!(y - x >= 1e-6);
            let cfg = EncodingConfig::default();
            let a = positional_encode(&[x], &cfg);
            let b = positional_encode(&[y], &cfg);
            let linf = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            prop_assert!(linf > 0.0);
        }
    }
}
