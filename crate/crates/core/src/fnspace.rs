//! Symmetrised function spaces over a finite Ω: tensors in Dₙ*⊗ₛDₙ seen as
//! kernels Ω×Ω → Mₙ, positivity through PSD kernels, and refutations.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cones::{refutation_from_pair, ConeCertificate};
use crate::cpmaps::{StinespringUcp, WittstockMap};
use crate::error::{Error, Result};
use crate::matcore::{herm_eig_of_part, CMatrix, C64, ZERO};
use crate::opspace::ConcreteOpSpace;
use crate::symnorm::{AdmissiblePair, TensorElement};

/// Blocks below this eigenvalue make a kernel non-positive.
pub const KERNEL_PSD_TOL: f64 = 1e-9;

/// u: Ω×Ω → Mₙ stored row-major by (x, y).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelJson", into = "KernelJson")]
pub struct KernelFunction {
    omega: usize,
    n: usize,
    blocks: Vec<CMatrix>,
}

#[derive(Serialize, Deserialize)]
struct KernelJson {
    omega: usize,
    n: usize,
    blocks: Vec<Vec<CMatrix>>,
}

impl TryFrom<KernelJson> for KernelFunction {
    type Error = Error;
    fn try_from(j: KernelJson) -> Result<Self> {
        KernelFunction::new(j.omega, j.n, j.blocks)
    }
}

impl From<KernelFunction> for KernelJson {
    fn from(k: KernelFunction) -> Self {
        let blocks = k.blocks.chunks(k.omega).map(|row| row.to_vec()).collect();
        KernelJson { omega: k.omega, n: k.n, blocks }
    }
}

impl KernelFunction {
    pub fn new(omega: usize, n: usize, blocks: Vec<Vec<CMatrix>>) -> Result<Self> {
        if omega == 0 || n == 0 {
            return Err(Error::ShapeMismatch("kernel needs |Ω| ≥ 1 and n ≥ 1".into()));
        }
        if blocks.len() != omega || blocks.iter().any(|r| r.len() != omega) {
            return Err(Error::ShapeMismatch(format!("kernel grid must be {omega}×{omega}")));
        }
        let blocks: Vec<CMatrix> = blocks.into_iter().flatten().collect();
        if let Some(b) = blocks.iter().find(|b| b.shape() != (n, n)) {
            return Err(Error::ShapeMismatch(format!("kernel value {:?}, expected ({n}, {n})", b.shape())));
        }
        Ok(KernelFunction { omega, n, blocks })
    }

    /// Scalar kernel from a real |Ω|×|Ω| table.
    pub fn from_real(rows: &[&[f64]]) -> Result<Self> {
        let omega = rows.len();
        let blocks = rows
            .iter()
            .map(|r| r.iter().map(|&v| CMatrix::from_real(&[&[v]])).collect())
            .collect();
        Self::new(omega, 1, blocks)
    }

    /// Kernel of the block matrix [u(x,y)]ₓᵧ.
    pub fn from_block_matrix(omega: usize, n: usize, big: &CMatrix) -> Result<Self> {
        if big.shape() != (omega * n, omega * n) {
            return Err(Error::ShapeMismatch("block matrix size".into()));
        }
        let blocks =
            (0..omega).map(|x| (0..omega).map(|y| big.block(x * n, y * n, n, n)).collect()).collect();
        Self::new(omega, n, blocks)
    }

    /// δₓᵧ·Iₙ.
    pub fn diagonal_unit(omega: usize, n: usize) -> Self {
        Self::from_block_matrix(omega, n, &CMatrix::identity(omega * n)).expect("square")
    }

    pub fn omega(&self) -> usize {
        self.omega
    }

    pub fn level(&self) -> usize {
        self.n
    }

    pub fn value(&self, x: usize, y: usize) -> &CMatrix {
        &self.blocks[x * self.omega + y]
    }

    /// u(y,x) = u(x,y)* blockwise.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        (0..self.omega).all(|x| (0..self.omega).all(|y| self.value(x, y).approx_eq(&self.value(y, x).adjoint(), tol)))
    }

    pub fn block_matrix(&self) -> CMatrix {
        let n = self.n;
        let mut out = CMatrix::zeros(self.omega * n, self.omega * n);
        for x in 0..self.omega {
            for y in 0..self.omega {
                out.set_block(x * n, y * n, self.value(x, y));
            }
        }
        out
    }

    pub fn add(&self, other: &KernelFunction) -> Result<Self> {
        if (self.omega, self.n) != (other.omega, other.n) {
            return Err(Error::ShapeMismatch("kernels on different grids".into()));
        }
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect();
        Ok(KernelFunction { omega: self.omega, n: self.n, blocks })
    }

    pub fn scale(&self, c: C64) -> Self {
        KernelFunction { omega: self.omega, n: self.n, blocks: self.blocks.iter().map(|b| b.scale(c)).collect() }
    }

    /// The element Σ u(a,c)ᵢⱼ δₐ*⊗1⊗δ_c of Mₙ(D*⊙ℂ⊙D) with this kernel.
    pub fn to_tensor(&self) -> TensorElement {
        let e = Arc::new(ConcreteOpSpace::diagonal(self.omega));
        let s = Arc::new(ConcreteOpSpace::scalars());
        let (n, w) = (self.n, self.omega);
        let mut coeffs = vec![ZERO; n * n * w * w];
        for i in 0..n {
            for j in 0..n {
                for a in 0..w {
                    for c in 0..w {
                        coeffs[((i * n + j) * w + a) * w + c] = self.value(a, c)[(i, j)];
                    }
                }
            }
        }
        TensorElement::from_coeffs(e, s, n, coeffs).expect("coefficient length")
    }
}

/// Finitely supported positive measure on Ω.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub support: Vec<usize>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(support: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::ShapeMismatch("support and weights differ in length".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::BadRange(format!("measure weight {w} is not positive")));
        }
        let mut seen = support.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != support.len() {
            return Err(Error::BadRange("repeated support point".into()));
        }
        Ok(DiscreteMeasure { support, weights })
    }

    pub fn dirac(x: usize) -> Self {
        DiscreteMeasure { support: vec![x], weights: vec![1.0] }
    }

    pub fn uniform(omega: usize) -> Self {
        DiscreteMeasure { support: (0..omega).collect(), weights: vec![1.0 / omega as f64; omega] }
    }

    pub fn is_probability(&self) -> bool {
        (self.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12
    }
}

/// Restricts E ⊆ D_|Ω| tensors with scalar middles to their kernels
/// u(x,y) = (δₓ⊗δ_y)(u).
pub fn kernel_of_tensor(u: &TensorElement) -> Result<KernelFunction> {
    let (e, s, n) = (u.e_space(), u.s_space(), u.level());
    if e.h() != e.k() {
        return Err(Error::UnsupportedSpace("E must sit inside a diagonal algebra".into()));
    }
    let diagonal = e.basis().iter().all(|b| {
        (0..b.rows()).all(|r| (0..b.cols()).all(|c| r == c || b[(r, c)].norm() <= 1e-14))
    });
    if !diagonal {
        return Err(Error::UnsupportedSpace("E has non-diagonal elements".into()));
    }
    if s.dim() != 1 || s.k() != 1 || s.h() != 1 {
        return Err(Error::UnsupportedSpace("kernels need scalar middles".into()));
    }
    let omega = e.k();
    let sval = s.basis()[0][(0, 0)];
    let de = e.dim();
    let mut big = CMatrix::zeros(omega * n, omega * n);
    for i in 0..n {
        for j in 0..n {
            for a in 0..de {
                for c in 0..de {
                    let coef = u.coeffs()[u.coeff_index(i, j, a, 0, c)] * sval;
                    if coef == ZERO {
                        continue;
                    }
                    let (ba, bc) = (&e.basis()[a], &e.basis()[c]);
                    for x in 0..omega {
                        for y in 0..omega {
                            big[(x * n + i, y * n + j)] += coef * ba[(x, x)].conj() * bc[(y, y)];
                        }
                    }
                }
            }
        }
    }
    KernelFunction::from_block_matrix(omega, n, &big)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelVerdict {
    pub positive: bool,
    pub min_eigenvalue: f64,
    /// Eigenvector of the block matrix for the least eigenvalue, when negative.
    pub witness: Option<CMatrix>,
}

/// Exact PSD test of the full block matrix [u(x,y)].
pub fn is_positive_kernel(k: &KernelFunction) -> Result<KernelVerdict> {
    let big = k.block_matrix();
    let skew = (&big - &big.adjoint()).max_abs();
    if skew > 1e-10 * big.max_abs().max(1.0) {
        return Err(Error::NotHermitian(skew));
    }
    let eig = herm_eig_of_part(&big);
    let positive = eig.min() >= -KERNEL_PSD_TOL;
    Ok(KernelVerdict {
        positive,
        min_eigenvalue: eig.min(),
        witness: (!positive).then(|| eig.vectors.col(0)),
    })
}

/// T_u^μ in the symmetric weighted form [√w_p u(x_p,x_q) √w_q], which is
/// similar to (T_u^μη)(x) = Σ u(x,y)η(y)μ(y) on the support.
pub fn integral_operator(k: &KernelFunction, mu: &DiscreteMeasure) -> Result<CMatrix> {
    if mu.support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if let Some(x) = mu.support.iter().find(|&&x| x >= k.omega) {
        return Err(Error::BadRange(format!("support point {x} outside Ω of size {}", k.omega)));
    }
    let (n, len) = (k.n, mu.support.len());
    let mut out = CMatrix::zeros(len * n, len * n);
    for (p, &x) in mu.support.iter().enumerate() {
        for (q, &y) in mu.support.iter().enumerate() {
            let w = (mu.weights[p] * mu.weights[q]).sqrt();
            out.set_block(p * n, q * n, &k.value(x, y).scale_real(w));
        }
    }
    Ok(out)
}

/// A refutation built from a negative eigenvector v of the block matrix:
/// μ on the failing points, φ(f) = c*·diag(f) with |c_x|² ∝ ‖v_x‖, and ψ
/// the identity on ℂ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelRefutation {
    pub pair: AdmissiblePair,
    pub measure: DiscreteMeasure,
    /// Least eigenvalue of T_u^μ for the weights of μ.
    pub operator_eigenvalue: f64,
    /// Least eigenvalue of the pair evaluated on the tensor preimage.
    pub pair_eigenvalue: f64,
}

pub fn refutation_pair_from_kernel(k: &KernelFunction) -> Result<KernelRefutation> {
    let verdict = is_positive_kernel(k)?;
    let v = match verdict.witness {
        Some(v) if !verdict.positive => v,
        _ => return Err(Error::KernelIsPositive),
    };
    let (omega, n) = (k.omega, k.n);
    let norms: Vec<f64> = (0..omega).map(|x| v.block(x * n, 0, n, 1).frobenius_norm()).collect();
    let total: f64 = norms.iter().sum();
    let c = CMatrix::from_fn(omega, 1, |x, _| C64::new((norms[x] / total).sqrt(), 0.0));
    let e = Arc::new(ConcreteOpSpace::diagonal(omega));
    let s = Arc::new(ConcreteOpSpace::scalars());
    let phi = WittstockMap::new(e, 1, CMatrix::identity(omega), c)?;
    let psi = StinespringUcp::identity(s);
    let pair = AdmissiblePair::new(phi, psi)?;
    let support: Vec<usize> = (0..omega).filter(|&x| norms[x] > 1e-12 * total).collect();
    let weights: Vec<f64> = support.iter().map(|&x| norms[x] / total).collect();
    let measure = DiscreteMeasure::new(support, weights)?;
    let operator_eigenvalue = herm_eig_of_part(&integral_operator(k, &measure)?).min();
    let val = crate::symnorm::eval_pair(&pair, &k.to_tensor())?;
    let pair_eigenvalue = herm_eig_of_part(&val).min();
    Ok(KernelRefutation { pair, measure, operator_eigenvalue, pair_eigenvalue })
}

/// Cone certificate for the tensor preimage, from the kernel refutation.
pub fn kernel_certificate(k: &KernelFunction) -> Result<ConeCertificate> {
    let r = refutation_pair_from_kernel(k)?;
    refutation_from_pair(&k.to_tensor(), r.pair)
}
