//! Operator-space duals of finite-dimensional spaces and the pairing
//! ι: E^{d*}⊗ₛE^d → (E*⊗ₛE)^d.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cert::{Budget, NormInterval};
use crate::cpmaps::{cb_norm, LinMap};
use crate::error::{Error, Result};
use crate::matcore::{svd, trace_norm, CMatrix, C64};
use crate::opspace::ConcreteOpSpace;
use crate::rng::{random_gaussian, seeded};
use crate::symnorm::{sym_norm, TensorElement};

/// E^d with the dual basis fₐ(b_c) = δₐ_c. A level-n element Φ is stored as
/// the map F_Φ: E → Mₙ, and ‖Φ‖ₙ = ‖F_Φ‖_cb.
#[derive(Clone, Debug)]
pub struct DualSpace {
    base: Arc<ConcreteOpSpace>,
    /// Row a holds the weights of fₐ against basis coefficients.
    functionals: CMatrix,
    pairing_residual: f64,
}

impl DualSpace {
    pub fn base(&self) -> &Arc<ConcreteOpSpace> {
        &self.base
    }

    pub fn functionals(&self) -> &CMatrix {
        &self.functionals
    }

    /// max |fₐ(b_c) − δₐ_c|.
    pub fn pairing_residual(&self) -> f64 {
        self.pairing_residual
    }

    /// fₐ(x) for x ∈ E.
    pub fn evaluate(&self, a: usize, x: &CMatrix) -> Result<C64> {
        let (coeffs, r) = self.base.project_onto(x)?;
        if r > 1e-9 * x.max_abs().max(1.0) {
            return Err(Error::InconsistentElement(r));
        }
        Ok((0..self.base.dim()).map(|c| self.functionals[(a, c)] * coeffs[c]).sum())
    }

    /// Dual basis functional fₐ as a map E → M₁.
    pub fn basis_functional(&self, a: usize) -> LinMap {
        let images: Vec<CMatrix> =
            (0..self.base.dim()).map(|c| CMatrix::from_fn(1, 1, |_, _| self.functionals[(a, c)])).collect();
        LinMap::from_images(self.base.clone(), &images).expect("one image per basis element")
    }

    /// F_Φ for Φ = Σₐ Wₐ⊗fₐ with Wₐ ∈ Mₙ.
    pub fn element(&self, weights: &[CMatrix]) -> Result<LinMap> {
        if weights.len() != self.base.dim() {
            return Err(Error::ShapeMismatch("one weight matrix per dual basis functional".into()));
        }
        LinMap::from_images(self.base.clone(), weights)
    }

    pub fn level_norm(&self, phi: &LinMap, budget: &Budget) -> Result<NormInterval> {
        if **phi.domain() != *self.base {
            return Err(Error::ShapeMismatch("map is not defined on the base space".into()));
        }
        Ok(cb_norm(phi, budget))
    }
}

/// Dual basis by inverting the pairing of basis coefficients.
pub fn dual_space(e: Arc<ConcreteOpSpace>) -> DualSpace {
    let d = e.dim();
    // Evaluation on coefficients is the identity pairing; inverting the
    // coefficient matrix of the basis keeps the construction honest for
    // spaces whose stored basis is not the coefficient basis.
    let coeff_matrix = CMatrix::from_fn(d, d, |c, a| e.project_onto(&e.basis()[a]).expect("basis").0[c]);
    let functionals = crate::matcore::pinv(&coeff_matrix);
    let pairing = functionals.matmul(&coeff_matrix);
    let pairing_residual = (&pairing - &CMatrix::identity(d)).max_abs();
    DualSpace { base: e, functionals, pairing_residual }
}

/// Φ ↦ (x* ↦ F_Φ(x)*): the map (E^d)* → (E*)^d on a level element.
pub fn dstar_identify(phi: &LinMap) -> Result<LinMap> {
    let adj = Arc::new(phi.domain().adjoint_space());
    let images: Vec<CMatrix> = phi.images().iter().map(|m| m.adjoint()).collect();
    LinMap::from_images(adj, &images)
}

/// ι(Ψ*⊗Φ) evaluated on u ∈ Mₙ(E*⊙ℂ⊙E): the (n·k)×(n·k) matrix with blocks
/// Σ coeff·Ψ*(bₐ*)Φ(b_c). `psi_star` lives on E*, `phi` on E.
pub fn iota_pair(psi_star: &LinMap, phi: &LinMap, u: &TensorElement) -> Result<CMatrix> {
    let e = u.e_space();
    if **phi.domain() != **e || **psi_star.domain() != e.adjoint_space() {
        return Err(Error::ShapeMismatch("maps are not defined on E and E*".into()));
    }
    let s = u.s_space();
    if s.dim() != 1 || s.k() != 1 {
        return Err(Error::ShapeMismatch("the pairing needs scalar middles".into()));
    }
    let (k1, k2) = psi_star.out_shape();
    let (k3, k4) = phi.out_shape();
    if k2 != k3 || k1 != k2 || k3 != k4 {
        return Err(Error::ShapeMismatch(format!("levels {k1}x{k2} and {k3}x{k4} do not compose")));
    }
    let (n, de, k) = (u.level(), e.dim(), k1);
    let sval = s.basis()[0][(0, 0)];
    let left: Vec<CMatrix> = psi_star.images();
    let right: Vec<CMatrix> = phi.images();
    let mut out = CMatrix::zeros(n * k, n * k);
    for i in 0..n {
        for j in 0..n {
            let mut blk = CMatrix::zeros(k, k);
            for a in 0..de {
                for c in 0..de {
                    let coef = u.coeffs()[u.coeff_index(i, j, a, 0, c)] * sval;
                    if coef.norm() > 0.0 {
                        blk += &left[a].matmul(&right[c]).scale(coef);
                    }
                }
            }
            out.set_block(i * k, j * k, &blk);
        }
    }
    Ok(out)
}

/// Σ_r ι(Φ_r*⊗Φ_r)(u): the pairing with the positive Γ = Σ Φ_r*⊙Φ_r.
pub fn iota_square(phis: &[LinMap], u: &TensorElement) -> Result<CMatrix> {
    let mut acc: Option<CMatrix> = None;
    for phi in phis {
        let v = iota_pair(&dstar_identify(phi)?, phi, u)?;
        acc = Some(match acc {
            Some(a) => a + v,
            None => v,
        });
    }
    acc.ok_or_else(|| Error::ShapeMismatch("no maps given".into()))
}

/// Matrix [ι(fₐ*⊗f_c)(bₐ'*⊗b_c')] between the basis of E^{d*}⊙E^d and the
/// evaluation basis of E*⊙E.
pub fn pairing_matrix(dual: &DualSpace) -> Result<CMatrix> {
    let e = dual.base().clone();
    let d = e.dim();
    let s = Arc::new(ConcreteOpSpace::scalars());
    let fs: Vec<LinMap> = (0..d).map(|a| dual.basis_functional(a)).collect();
    let stars: Vec<LinMap> = fs.iter().map(dstar_identify).collect::<Result<_>>()?;
    let mut out = CMatrix::zeros(d * d, d * d);
    for ap in 0..d {
        for cp in 0..d {
            let u = TensorElement::elementary(e.clone(), s.clone(), &e.basis()[ap], &CMatrix::identity(1), &e.basis()[cp])?;
            for a in 0..d {
                for c in 0..d {
                    out[(a * d + c, ap * d + cp)] = iota_pair(&stars[a], &fs[c], &u)?[(0, 0)];
                }
            }
        }
    }
    Ok(out)
}

pub fn pairing_rank(dual: &DualSpace) -> Result<usize> {
    Ok(svd(&pairing_matrix(dual)?).rank())
}

/// A candidate w ∈ E^{d*}⊙E^d with its symmetrised norm and the norm of
/// ι(w) as a functional.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IotaGap {
    /// Coefficients W_{ac} of w = Σ W_{ac} fₐ*⊗f_c.
    pub coefficients: CMatrix,
    pub sym_interval: NormInterval,
    pub image_norm: f64,
    /// The symmetrised interval lies strictly away from the image norm.
    pub disjoint: bool,
}

/// Searches for w with ‖w‖_s ≠ ‖ι(w)‖ when E is a row space with an
/// orthonormal basis. Then E^d is realised as a column space, E*⊗ₛE
/// collapses completely isometrically onto Mₕ, and ‖ι(w)‖ is the trace norm
/// of W.
pub fn iota_gap_search(e: &Arc<ConcreteOpSpace>, budget: &Budget) -> Result<Vec<IotaGap>> {
    if e.k() != 1 {
        return Err(Error::UnsupportedSpace("the realised dual needs a row space".into()));
    }
    let d = e.dim();
    let gram = CMatrix::from_fn(d, d, |a, c| e.basis()[c].hs_inner(&e.basis()[a]));
    if !gram.approx_eq(&CMatrix::identity(d), 1e-12) || d != e.h() {
        return Err(Error::UnsupportedSpace("basis must be an orthonormal basis of all rows".into()));
    }
    let dual = Arc::new(ConcreteOpSpace::column(d));
    let s = Arc::new(ConcreteOpSpace::scalars());
    let mut cands: Vec<CMatrix> = Vec::new();
    for a in 0..d {
        for c in 0..d {
            cands.push(CMatrix::unit(d, d, a, c));
        }
    }
    let mut rng = seeded(budget.seed, 0xd0a1);
    for _ in 0..budget.restarts.min(8) {
        cands.push(random_gaussian(&mut rng, d, d));
    }
    let mut out = Vec::with_capacity(cands.len());
    for w in cands {
        let coeffs: Vec<C64> = (0..d * d).map(|t| w[(t / d, t % d)]).collect();
        let elem = TensorElement::from_coeffs(dual.clone(), s.clone(), 1, coeffs)?;
        let sym_interval = sym_norm(&elem, budget);
        let image_norm = trace_norm(&w);
        let disjoint = sym_interval.upper < image_norm - 1e-9 || sym_interval.lower > image_norm + 1e-9;
        out.push(IotaGap { coefficients: w, sym_interval, image_norm, disjoint });
    }
    Ok(out)
}
