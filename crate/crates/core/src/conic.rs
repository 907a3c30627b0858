//! Feasibility of `P ⪰ 0` subject to linear constraints `L(P) = t`, by
//! alternating projections between the PSD cone and the affine set.

use crate::matcore::{herm_eig_of_part, pinv, CMatrix};

/// Linear constraints on n×n matrices: row q of `lmat` pairs with vec(P).
#[derive(Clone, Debug)]
pub struct AffinePsd {
    n: usize,
    lmat: CMatrix,
    lpinv: CMatrix,
    target: CMatrix,
}

#[derive(Clone, Debug)]
pub struct AffinePsdSolution {
    pub p: CMatrix,
    /// ‖L(P) − t‖ for the returned PSD matrix.
    pub residual: f64,
    pub iterations: usize,
}

impl AffinePsd {
    pub fn new(n: usize, lmat: CMatrix, target: CMatrix) -> Self {
        assert_eq!(lmat.cols(), n * n, "constraint matrix width");
        assert_eq!(lmat.rows(), target.rows(), "target length");
        let lpinv = pinv(&lmat);
        AffinePsd { n, lmat, lpinv, target }
    }

    pub fn residual(&self, p: &CMatrix) -> f64 {
        (&self.lmat.matmul(&p.vectorize()) - &self.target).frobenius_norm()
    }

    fn affine_projection(&self, p: &CMatrix) -> CMatrix {
        let r = &self.lmat.matmul(&p.vectorize()) - &self.target;
        let delta = self.lpinv.matmul(&r);
        let v = &p.vectorize() - &delta;
        v.reshape(self.n, self.n).expect("square").hermitian_part()
    }

    /// Runs alternating projections from the minimum-norm affine point.
    pub fn solve(&self, max_iter: usize, tol: f64) -> AffinePsdSolution {
        let mut a = self.affine_projection(&CMatrix::zeros(self.n, self.n));
        let mut best: Option<AffinePsdSolution> = None;
        for it in 0..max_iter {
            let p = herm_eig_of_part(&a).apply(|l| l.max(0.0));
            let residual = self.residual(&p);
            if best.as_ref().is_none_or(|b| residual < b.residual) {
                best = Some(AffinePsdSolution { p: p.clone(), residual, iterations: it + 1 });
            }
            if residual <= tol {
                break;
            }
            let next = self.affine_projection(&p);
            if (&next - &a).frobenius_norm() <= 1e-15 * (1.0 + a.frobenius_norm()) {
                break;
            }
            a = next;
        }
        best.expect("at least one iteration")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{is_psd, C64};

    #[test]
    fn finds_trace_one_psd() {
        // tr P = 1 and P₀₁ = 0.3 on 2×2.
        let mut l = CMatrix::zeros(2, 4);
        l[(0, 0)] = C64::new(1.0, 0.0);
        l[(0, 3)] = C64::new(1.0, 0.0);
        l[(1, 1)] = C64::new(1.0, 0.0);
        let t = CMatrix::column(&[C64::new(1.0, 0.0), C64::new(0.3, 0.0)]);
        let sol = AffinePsd::new(2, l, t).solve(500, 1e-12);
        assert!(sol.residual < 1e-10);
        assert!(is_psd(&sol.p));
    }

    #[test]
    fn infeasible_keeps_residual() {
        // tr P = −1 has no PSD solution.
        let mut l = CMatrix::zeros(1, 4);
        l[(0, 0)] = C64::new(1.0, 0.0);
        l[(0, 3)] = C64::new(1.0, 0.0);
        let t = CMatrix::column(&[C64::new(-1.0, 0.0)]);
        let sol = AffinePsd::new(2, l, t).solve(200, 1e-12);
        assert!(sol.residual > 0.5);
    }
}
