//! Seeded randomness: the generator type, sub-seed derivation and a Laplace
//! sampler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Every randomized operation in the crate draws from this generator so that
/// runs are reproducible across platforms.
pub type PipelineRng = ChaCha20Rng;

/// Whether a mechanism adds its calibrated noise. `Disabled` exists for
/// oracle tests only; anything produced with it is not private.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Noise {
    #[default]
    Laplace,
    Disabled,
}

impl Noise {
    pub fn from_disabled_flag(disabled: bool) -> Self {
        if disabled {
            Noise::Disabled
        } else {
            Noise::Laplace
        }
    }

    pub fn is_disabled(self) -> bool {
        self == Noise::Disabled
    }
}

pub fn rng_from_seed(seed: u64) -> PipelineRng {
    PipelineRng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of tags (run index, stream id,
/// retry attempt, ...). Distinct paths give unrelated seeds; the function is
/// fixed so results never depend on scheduling.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &tag| splitmix64(acc ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

/// Draws from Laplace(0, scale) by inverting the CDF.
pub fn laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    // u ∈ (-0.5, 0.5]; reject the endpoint that would give ln(0).
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            return -scale * u.signum() * tail.ln();
        }
    }
}
