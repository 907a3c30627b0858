//! Fixtures shared by the criterion benches in `benches/`.

use std::sync::Arc;

use opsym::rng::{random_gaussian, seeded};
use opsym::{CMatrix, ConcreteOpSpace, KernelFunction, TensorElement};

pub fn m2() -> Arc<ConcreteOpSpace> {
    Arc::new(ConcreteOpSpace::full(2))
}

pub fn scalars() -> Arc<ConcreteOpSpace> {
    Arc::new(ConcreteOpSpace::scalars())
}

/// Hermitian test matrix of size n.
pub fn hermitian(n: usize, seed: u64) -> CMatrix {
    let g = random_gaussian(&mut seeded(seed, 0), n, n);
    (&g + &g.adjoint()).scale_real(0.5)
}

/// y*⊗1⊗x in M₂*⊙ℂ⊙M₂ with Gaussian y, x.
pub fn elementary(seed: u64) -> TensorElement {
    let mut rng = seeded(seed, 1);
    let y = random_gaussian(&mut rng, 2, 2);
    let x = random_gaussian(&mut rng, 2, 2);
    TensorElement::elementary(m2(), scalars(), &y, &CMatrix::identity(1), &x).expect("M₂ elements")
}

/// Random Hermitian kernel on |Ω| points with n×n values.
pub fn kernel(omega: usize, n: usize, seed: u64) -> KernelFunction {
    KernelFunction::from_block_matrix(omega, n, &hermitian(omega * n, seed)).expect("square grid")
}
