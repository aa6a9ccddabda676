//! Seeded Gaussian noise.
//!
//! Streams are xoshiro256++ generators seeded through SplitMix64
//! (`seed_from_u64`), so any implementation of those two published
//! algorithms reproduces the same draws. Normal deviates use the polar
//! (Marsaglia) form of Box-Muller; uniforms are the top 53 bits of a
//! 64-bit output.
//!
//! Independent streams for different roles (initial state, process noise,
//! measurement noise) and different Monte Carlo runs are derived from one
//! master seed by [`split_seed`], which XORs a fixed role tag and scrambles
//! the result with the SplitMix64 finalizer.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

use crate::smallmat::{Matrix4, Vector4};

/// Tolerance for negative pivots in the semidefinite Cholesky factorization.
pub const PSD_PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("variance must be non-negative, got {0}")]
    InvalidVariance(f64),
    #[error("covariance is not positive semidefinite (pivot {pivot:e} at {index})")]
    NotPsd { index: usize, pivot: f64 },
}

/// Role tags XORed into the seed before scrambling.
pub mod role {
    pub const INITIAL_STATE: u64 = 0x494e_4954_5354_4154; // "INITSTAT"
    pub const PROCESS: u64 = 0x5052_4f43_4e4f_4953; // "PROCNOIS"
    pub const MEASUREMENT: u64 = 0x4d45_4153_4e4f_4953; // "MEASNOIS"
    pub const RUN: u64 = 0x4d43_5255_4e53_4545; // "MCRUNSEE"
}

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed for a role.
pub fn split_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ tag)
}

/// Seed for Monte Carlo run `index`.
pub fn run_seed(master: u64, index: u64) -> u64 {
    split_seed(split_seed(master, role::RUN) ^ index, role::RUN)
}

/// A deterministic single-owner random stream.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { seed, inner: Xoshiro256PlusPlus::seed_from_u64(seed), spare: None }
    }

    /// A child stream for `tag`, independent of the parent's state.
    pub fn substream(&self, tag: u64) -> SeededRng {
        SeededRng::new(split_seed(self.seed, tag))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate (polar Box-Muller, pairs cached).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn gaussian(&mut self, mean: f64, variance: f64) -> Result<f64, NoiseError> {
        gaussian(self, mean, variance)
    }
}

/// One draw from `N(mean, variance)`. A zero variance returns `mean` without
/// consuming randomness.
pub fn gaussian(rng: &mut SeededRng, mean: f64, variance: f64) -> Result<f64, NoiseError> {
    if !(variance >= 0.0) {
        return Err(NoiseError::InvalidVariance(variance));
    }
    if variance == 0.0 {
        return Ok(mean);
    }
    Ok(mean + variance.sqrt() * rng.standard_normal())
}

/// One draw from `N(mean, covariance)` as `mean + L z`.
///
/// A zero covariance returns `mean` without consuming randomness.
pub fn gaussian_vec(
    rng: &mut SeededRng,
    mean: &Vector4,
    covariance: &Matrix4,
) -> Result<Vector4, NoiseError> {
    let l = cholesky_psd(covariance)?;
    if covariance.is_zero() {
        return Ok(*mean);
    }
    let z = Vector4::new(std::array::from_fn(|_| rng.standard_normal()));
    Ok(*mean + l * z)
}

/// Lower-triangular `L` with `L Lᵀ = m` for symmetric positive semidefinite `m`.
///
/// Pivots in `[-PSD_PIVOT_TOL, eps]` are treated as exact zeros and their
/// column of `L` is zeroed, which handles rank-deficient covariances.
pub fn cholesky_psd(m: &Matrix4) -> Result<Matrix4, NoiseError> {
    let scale = m.max_abs().max(1.0);
    let mut l = Matrix4::zeros();
    for j in 0..4 {
        let d = m[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d < -PSD_PIVOT_TOL || !d.is_finite() {
            return Err(NoiseError::NotPsd { index: j, pivot: d });
        }
        if d <= 1e-14 * scale {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..4 {
            let s = m[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Whether `m` is symmetric positive semidefinite: its asymmetry and most
/// negative eigenvalue are both within `rel_tol` of its largest entry.
pub fn is_psd(m: &Matrix4, rel_tol: f64) -> bool {
    let scale = m.max_abs();
    if scale == 0.0 {
        return true;
    }
    if !m.is_finite() || m.asymmetry() > rel_tol * scale {
        return false;
    }
    let eig = m.symmetrize().symmetric_eigenvalues();
    eig.0.iter().all(|&l| l >= -rel_tol * scale)
}
