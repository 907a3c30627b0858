//! Seeded random sampling. Every stochastic routine takes an explicit seed
//! and derives independent streams from it, so results never depend on
//! thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matcore::{orthonormal_columns, CMatrix, C64};

pub type Rng64 = ChaCha8Rng;

/// SplitMix64 finaliser, used to derive child seeds.
pub fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded(seed: u64, stream: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(mix(seed, stream))
}

pub fn gaussian(rng: &mut Rng64) -> f64 {
    rng.sample(StandardNormal)
}

/// Standard complex Gaussian entry (real and imaginary parts N(0, 1/2)).
pub fn complex_gaussian(rng: &mut Rng64) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(gaussian(rng) * s, gaussian(rng) * s)
}

pub fn random_gaussian(rng: &mut Rng64, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

pub fn random_real(rng: &mut Rng64, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| C64::new(gaussian(rng), 0.0))
}

pub fn random_hermitian(rng: &mut Rng64, n: usize) -> CMatrix {
    random_gaussian(rng, n, n).hermitian_part()
}

/// Haar-ish unitary from Gram-Schmidt of a Gaussian matrix.
pub fn random_unitary(rng: &mut Rng64, n: usize) -> CMatrix {
    loop {
        let q = orthonormal_columns(&random_gaussian(rng, n, n));
        if q.cols() == n {
            return q;
        }
    }
}

/// Isometry ℂ^cols → ℂ^rows (rows ≥ cols).
pub fn random_isometry(rng: &mut Rng64, rows: usize, cols: usize) -> CMatrix {
    assert!(rows >= cols);
    random_unitary(rng, rows).block(0, 0, rows, cols)
}

pub fn random_unit_vector(rng: &mut Rng64, n: usize) -> CMatrix {
    let v = random_gaussian(rng, n, 1);
    let nrm = v.frobenius_norm();
    v.scale_real(1.0 / nrm)
}

/// Contraction with operator norm exactly one (or zero matrix if empty).
pub fn random_contraction(rng: &mut Rng64, rows: usize, cols: usize) -> CMatrix {
    let g = random_gaussian(rng, rows, cols);
    let n = crate::matcore::op_norm(&g);
    if n == 0.0 {
        g
    } else {
        g.scale_real(1.0 / n)
    }
}

pub fn uniform(rng: &mut Rng64) -> f64 {
    rng.random::<f64>()
}

pub fn below(rng: &mut Rng64, n: usize) -> usize {
    rng.random_range(0..n)
}
