//! Built-in test signals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::signal::{FieldTag, SignalVector};
use crate::vecops::C64;

const BLOCK_LEVELS: [f64; 8] = [0.0, 1.0, 0.3, 0.8, 0.0, 0.55, 1.0, 0.15];

/// Piecewise-constant nonnegative 1D signal: eight equal-width blocks with
/// fixed levels in `[0, 1]`.
pub fn blocks(n: usize) -> SignalVector {
    let values = (0..n)
        .map(|i| C64::new(BLOCK_LEVELS[i * BLOCK_LEVELS.len() / n], 0.0))
        .collect();
    SignalVector::projected(values, FieldTag::RealNonnegative, None)
}

/// `height x width` image equal to 1 inside a centered disk of radius
/// `min(height, width) / 3` and 0.1 outside.
pub fn disk(height: usize, width: usize) -> SignalVector {
    let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let r = height.min(width) as f64 / 3.0;
    let values = (0..height * width)
        .map(|k| {
            let (i, j) = ((k / width) as f64, (k % width) as f64);
            let inside = (i - cy).powi(2) + (j - cx).powi(2) <= r * r;
            C64::new(if inside { 1.0 } else { 0.1 }, 0.0)
        })
        .collect();
    SignalVector::projected(values, FieldTag::RealNonnegative, Some((height, width)))
}

/// Circularly-symmetric complex Gaussian entries with unit variance.
pub fn random_complex(n: usize, seed: u64) -> SignalVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let values = (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re * s, im * s)
        })
        .collect();
    SignalVector::projected(values, FieldTag::Complex, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_are_piecewise_constant() {
        let b = blocks(64);
        assert_eq!(b.len(), 64);
        let jumps = b.values().windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(jumps, 7);
        assert!(b.values().iter().all(|z| z.re >= 0.0 && z.im == 0.0));
    }

    #[test]
    fn disk_shape() {
        let d = disk(9, 12);
        assert_eq!(d.dims(), Some((9, 12)));
        assert_eq!(d.values()[4 * 12 + 6].re, 1.0);
        assert_eq!(d.values()[0].re, 0.1);
    }

    #[test]
    fn random_complex_is_seeded() {
        assert_eq!(random_complex(5, 3), random_complex(5, 3));
        assert_ne!(random_complex(5, 3), random_complex(5, 4));
    }
}
