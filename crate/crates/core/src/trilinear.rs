//! Trilinear maps θ: E*×S×E → M_r stored on basis triples, their
//! amplifications, positivity checks and the GNS factorisation θ = φ*·ψ·φ.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cert::{Budget, LowerWitness, NormInterval, UpperWitness};
use crate::cpmaps::{
    best_contraction_in_subspace, is_completely_positive, random_level_hermitian, LinMap,
};
use crate::error::{Error, Result};
use crate::matcore::{herm_eig, herm_eig_of_part, op_norm, polar_isometry, CMatrix, C64, I, ONE, ZERO};
use crate::opspace::{ConcreteOpSpace, LevelElement};
use crate::rng::{below, random_gaussian, seeded};
use crate::symnorm::AdmissiblePair;

/// θ(b_i*, c_j, b_l) for bases (b) of E and (c) of S.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "TrilinearJson", into = "TrilinearJson")]
pub struct TrilinearForm {
    e: Arc<ConcreteOpSpace>,
    s: Arc<ConcreteOpSpace>,
    r: usize,
    /// Index (i·D_S + j)·D_E + l.
    tensor: Vec<CMatrix>,
}

#[derive(Serialize, Deserialize)]
struct TrilinearJson {
    #[serde(rename = "E")]
    e: ConcreteOpSpace,
    #[serde(rename = "S")]
    s: ConcreteOpSpace,
    r: usize,
    tensor: Vec<Vec<Vec<CMatrix>>>,
}

impl TryFrom<TrilinearJson> for TrilinearForm {
    type Error = Error;
    fn try_from(j: TrilinearJson) -> Result<Self> {
        let tensor = j.tensor.into_iter().flatten().flatten().collect();
        TrilinearForm::new(Arc::new(j.e), Arc::new(j.s), j.r, tensor)
    }
}

impl From<TrilinearForm> for TrilinearJson {
    fn from(t: TrilinearForm) -> Self {
        let (de, ds) = (t.e.dim(), t.s.dim());
        let tensor = (0..de)
            .map(|i| (0..ds).map(|j| (0..de).map(|l| t.tensor[(i * ds + j) * de + l].clone()).collect()).collect())
            .collect();
        TrilinearJson { e: (*t.e).clone(), s: (*t.s).clone(), r: t.r, tensor }
    }
}

impl TrilinearForm {
    pub fn new(e: Arc<ConcreteOpSpace>, s: Arc<ConcreteOpSpace>, r: usize, tensor: Vec<CMatrix>) -> Result<Self> {
        if tensor.len() != e.dim() * s.dim() * e.dim() || tensor.iter().any(|t| t.shape() != (r, r)) {
            return Err(Error::ShapeMismatch("tensor must hold D_E·D_S·D_E blocks of size r×r".into()));
        }
        Ok(TrilinearForm { e, s, r, tensor })
    }

    pub fn zero(e: Arc<ConcreteOpSpace>, s: Arc<ConcreteOpSpace>, r: usize) -> Self {
        let len = e.dim() * s.dim() * e.dim();
        TrilinearForm { e, s, r, tensor: vec![CMatrix::zeros(r, r); len] }
    }

    /// Stores f(b_i, c_j, b_l) as θ(b_i*, c_j, b_l).
    pub fn from_fn(
        e: Arc<ConcreteOpSpace>,
        s: Arc<ConcreteOpSpace>,
        f: impl Fn(&CMatrix, &CMatrix, &CMatrix) -> CMatrix,
    ) -> Result<Self> {
        let mut tensor = Vec::with_capacity(e.dim() * s.dim() * e.dim());
        for bi in e.basis() {
            for cj in s.basis() {
                for bl in e.basis() {
                    tensor.push(f(bi, cj, bl));
                }
            }
        }
        let r = tensor.first().map_or(0, |t| t.rows());
        Self::new(e, s, r, tensor)
    }

    /// θ(y*, s, x) = y* s x, with S acting on the codomain of E.
    pub fn multiplication(e: Arc<ConcreteOpSpace>, s: Arc<ConcreteOpSpace>) -> Result<Self> {
        if s.k() != e.k() {
            return Err(Error::ShapeMismatch("S must act on the codomain of E".into()));
        }
        Self::from_fn(e, s, |y, m, x| y.adjoint().matmul(m).matmul(x))
    }

    /// θ(y*, s, x) = φ₁(y)* ψ(s) φ₂(x).
    pub fn from_maps(phi1: &LinMap, psi: &LinMap, phi2: &LinMap) -> Result<Self> {
        if phi1.domain() != phi2.domain() {
            return Err(Error::ShapeMismatch("φ₁ and φ₂ must share a domain".into()));
        }
        let (k1, r1) = phi1.out_shape();
        let (k2, r2) = phi2.out_shape();
        if psi.out_shape() != (k1, k2) || r1 != r2 {
            return Err(Error::ShapeMismatch("φ₁*·ψ·φ₂ shapes do not compose".into()));
        }
        let e = phi1.domain().clone();
        let s = psi.domain().clone();
        let (ie1, ie2, is) = (phi1.images(), phi2.images(), psi.images());
        let mut tensor = Vec::with_capacity(e.dim() * s.dim() * e.dim());
        for y in &ie1 {
            for m in &is {
                for x in &ie2 {
                    tensor.push(y.adjoint().matmul(m).matmul(x));
                }
            }
        }
        Self::new(e, s, r1, tensor)
    }

    pub fn from_pair(pair: &AdmissiblePair) -> Result<Self> {
        let phi = pair.phi.to_linmap();
        Self::from_maps(&phi, &pair.psi.to_linmap(), &phi)
    }

    pub fn e_space(&self) -> &Arc<ConcreteOpSpace> {
        &self.e
    }

    pub fn s_space(&self) -> &Arc<ConcreteOpSpace> {
        &self.s
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn tensor(&self) -> &[CMatrix] {
        &self.tensor
    }

    pub fn entry(&self, i: usize, j: usize, l: usize) -> &CMatrix {
        &self.tensor[(i * self.s.dim() + j) * self.e.dim() + l]
    }

    /// Σ conj(Y_i) S_j X_l θ(b_i*, c_j, b_l).
    pub fn eval_coeffs(&self, y: &[C64], s: &[C64], x: &[C64]) -> CMatrix {
        let (de, ds) = (self.e.dim(), self.s.dim());
        let mut out = CMatrix::zeros(self.r, self.r);
        for (i, yi) in y.iter().enumerate().take(de) {
            if *yi == ZERO {
                continue;
            }
            for (j, sj) in s.iter().enumerate().take(ds) {
                let w = yi.conj() * sj;
                if w == ZERO {
                    continue;
                }
                for (l, xl) in x.iter().enumerate().take(de) {
                    if *xl != ZERO {
                        out += &self.entry(i, j, l).scale(w * xl);
                    }
                }
            }
        }
        out
    }

    /// θ(y*, s, x) for y, x ∈ E and s ∈ S.
    pub fn eval(&self, y: &CMatrix, s: &CMatrix, x: &CMatrix) -> Result<CMatrix> {
        let cy = member_coeffs(&self.e, y)?;
        let cs = member_coeffs(&self.s, s)?;
        let cx = member_coeffs(&self.e, x)?;
        Ok(self.eval_coeffs(&cy, &cs, &cx))
    }

    /// θ⁽ⁿ⁾(y*, s, x) for y, x ∈ M_{m,n}(E), s ∈ Mₘ(S); entry (i, j) is
    /// Σ_{p,q} θ(y_{pi}*, s_{pq}, x_{qj}).
    pub fn amplify(&self, y: &LevelElement, s: &LevelElement, x: &LevelElement) -> Result<CMatrix> {
        let (m, n) = y.shape();
        if x.shape() != (m, n) || s.shape() != (m, m) {
            return Err(Error::ShapeMismatch(format!("y {:?}, s {:?}, x {:?}", y.shape(), s.shape(), x.shape())));
        }
        if **y.space() != *self.e || **x.space() != *self.e || **s.space() != *self.s {
            return Err(Error::ShapeMismatch("arguments live in other spaces".into()));
        }
        let r = self.r;
        let mut out = CMatrix::zeros(n * r, n * r);
        for i in 0..n {
            for j in 0..n {
                let mut acc = CMatrix::zeros(r, r);
                for p in 0..m {
                    for q in 0..m {
                        acc += &self.eval_coeffs(y.coeff(p, i), s.coeff(p, q), x.coeff(q, j));
                    }
                }
                out.set_block(i * r, j * r, &acc);
            }
        }
        Ok(out)
    }

    /// `amplify` on concrete block matrices.
    pub fn amplify_concrete(&self, y: &CMatrix, s: &CMatrix, x: &CMatrix) -> Result<CMatrix> {
        let y = LevelElement::from_concrete(self.e.clone(), y.clone())?;
        let s = LevelElement::from_concrete(self.s.clone(), s.clone())?;
        let x = LevelElement::from_concrete(self.e.clone(), x.clone())?;
        self.amplify(&y, &s, &x)
    }

    fn same_shape(&self, other: &TrilinearForm) -> Result<()> {
        if self.r != other.r || *self.e != *other.e || *self.s != *other.s {
            return Err(Error::ShapeMismatch("forms differ in spaces or target".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &TrilinearForm) -> Result<Self> {
        self.same_shape(other)?;
        let tensor = self.tensor.iter().zip(&other.tensor).map(|(a, b)| a + b).collect();
        Ok(TrilinearForm { tensor, ..self.clone() })
    }

    pub fn scale(&self, c: C64) -> Self {
        TrilinearForm { tensor: self.tensor.iter().map(|t| t.scale(c)).collect(), ..self.clone() }
    }

    /// θ conjugated by a fixed matrix on the target: w* θ(·) w.
    pub fn conjugate(&self, w: &CMatrix) -> Result<Self> {
        if w.rows() != self.r {
            return Err(Error::ShapeMismatch("conjugating matrix must have r rows".into()));
        }
        let tensor = self.tensor.iter().map(|t| w.adjoint_mul(&t.matmul(w))).collect();
        Ok(TrilinearForm { r: w.cols(), tensor, ..self.clone() })
    }

    /// Largest entrywise deviation over basis triples.
    pub fn distance(&self, other: &TrilinearForm) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.tensor.iter().zip(&other.tensor).map(|(a, b)| (a - b).max_abs()).fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.tensor.iter().map(|t| t.max_abs()).fold(0.0, f64::max)
    }

    /// max ‖θ(b_i*, c_j, b_l)* − θ(b_l*, c_j*, b_i)‖ over basis triples.
    pub fn adjoint_law_residual(&self) -> Result<f64> {
        let (de, ds) = (self.e.dim(), self.s.dim());
        let mut worst: f64 = 0.0;
        for j in 0..ds {
            let cj_star = member_coeffs(&self.s, &self.s.basis()[j].adjoint())?;
            for i in 0..de {
                for l in 0..de {
                    let mut ei = vec![ZERO; de];
                    let mut el = vec![ZERO; de];
                    ei[i] = ONE;
                    el[l] = ONE;
                    let rhs = self.eval_coeffs(&el, &cj_star, &ei);
                    worst = worst.max((&self.entry(i, j, l).adjoint() - &rhs).max_abs());
                }
            }
        }
        Ok(worst)
    }

    /// θ(b_c*, 1, b_a) assembled into the Gram matrix on E⊗ℂʳ with entries
    /// G_{(c,η),(a,ξ)} = θ(b_c*, 1, b_a)_{ηξ}.
    pub fn gram(&self) -> Result<CMatrix> {
        let unit = self.s.unit_coeffs().ok_or_else(|| Error::InvalidSpace("S must be an operator system".into()))?.to_vec();
        Ok(self.slot_matrix(&unit))
    }

    /// Θ_s with entries θ(b_c*, s, b_a)_{ηξ} for s given by coefficients.
    pub fn slot_matrix(&self, s: &[C64]) -> CMatrix {
        let (de, r) = (self.e.dim(), self.r);
        let mut out = CMatrix::zeros(de * r, de * r);
        for c in 0..de {
            for a in 0..de {
                let mut blk = CMatrix::zeros(r, r);
                for (j, sj) in s.iter().enumerate() {
                    if *sj != ZERO {
                        blk += &self.entry(c, j, a).scale(*sj);
                    }
                }
                out.set_block(c * r, a * r, &blk);
            }
        }
        out
    }
}

fn member_coeffs(space: &ConcreteOpSpace, a: &CMatrix) -> Result<Vec<C64>> {
    let (c, r) = space.project_onto(a)?;
    if r > 1e-9 * a.frobenius_norm().max(1.0) {
        return Err(Error::InconsistentElement(r));
    }
    Ok(c)
}

/// The four terms θ((v₁ + iᵏv₂)*, s, v₁ + iᵏv₂) and weights i⁻ᵏ with
/// Σ weights·terms = 4θ(v₁*, s, v₂).
#[derive(Clone, Debug)]
pub struct Polarisation {
    pub terms: [CMatrix; 4],
    pub weights: [C64; 4],
}

impl Polarisation {
    /// θ(v₁*, s, v₂) recovered from the diagonal terms.
    pub fn recombine(&self) -> CMatrix {
        let mut acc = CMatrix::zeros(self.terms[0].rows(), self.terms[0].cols());
        for (t, w) in self.terms.iter().zip(&self.weights) {
            acc += &t.scale(*w);
        }
        acc.scale_real(0.25)
    }
}

pub fn polarise(theta: &TrilinearForm, s: &CMatrix, v1: &CMatrix, v2: &CMatrix) -> Result<Polarisation> {
    let skew = (s - &s.adjoint()).max_abs();
    if skew > 1e-10 * s.max_abs().max(1.0) {
        return Err(Error::NotHermitian(skew));
    }
    let mut terms: Vec<CMatrix> = Vec::with_capacity(4);
    let mut weights = [ZERO; 4];
    for (k, w) in weights.iter_mut().enumerate() {
        let ph = I.powu(k as u32);
        let v = v1 + &v2.scale(ph);
        terms.push(theta.eval(&v, s, &v)?);
        *w = ph.conj();
    }
    let terms: [CMatrix; 4] = terms.try_into().expect("four terms");
    Ok(Polarisation { terms, weights })
}

/// Outcome of sampling θ⁽ⁿ⁾(x*, s, x) over positive s.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PositivityReport {
    pub positive: bool,
    /// Smallest eigenvalue seen, relative to ‖x‖²‖s‖.
    pub worst: f64,
    pub samples: usize,
}

/// Samples x ∈ Mₘ,ₙ(E) and s ∈ Mₘ(S)⁺ for m, n ≤ `max_level`.
pub fn positivity_sample(theta: &TrilinearForm, samples: usize, max_level: usize, seed: u64) -> Result<PositivityReport> {
    let s_space = theta.s.clone();
    let unit = s_space.unit_matrix().ok_or_else(|| Error::InvalidSpace("S must be an operator system".into()))?;
    let scale = theta.max_abs().max(1e-300);
    let mut rng = seeded(seed, 0x9051);
    let mut worst = f64::INFINITY;
    for t in 0..samples {
        let m = 1 + below(&mut rng, max_level.max(1));
        let n = 1 + below(&mut rng, max_level.max(1));
        let coeffs = (0..m * n).map(|_| random_gaussian(&mut rng, theta.e.dim(), 1).as_slice().to_vec()).collect();
        let x = LevelElement::from_coeffs(theta.e.clone(), m, n, coeffs)?;
        let one_m = CMatrix::identity(m).kron(&unit);
        let s = if t % 4 == 0 {
            one_m
        } else {
            let h = random_level_hermitian(&s_space, m, &mut rng);
            let lam = herm_eig_of_part(&h).min();
            &h - &one_m.scale_real(lam)
        };
        let s_el = LevelElement::from_concrete(s_space.clone(), s.clone())?;
        let val = theta.amplify(&x, &s_el, &x)?;
        let norm = op_norm(x.concrete()).powi(2) * op_norm(&s).max(1e-300);
        let hermitian_gap = (&val - &val.adjoint()).max_abs();
        let lam = herm_eig_of_part(&val).min() / norm;
        worst = worst.min(lam - hermitian_gap / norm);
    }
    let positive = worst >= -1e-9 * scale;
    Ok(PositivityReport { positive, worst, samples })
}

/// θ = φ*·ψ·φ through the Gram quotient of E⊗ℂʳ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GnsFactorisation {
    pub k_dim: usize,
    /// E → M_{K, r}.
    pub phi: LinMap,
    /// S → M_K.
    pub psi: LinMap,
    pub gram: CMatrix,
    /// max over basis triples of ‖θ − φ*ψφ‖.
    pub reconstruction: f64,
    pub unital_residual: f64,
    /// Smallest Choi eigenvalue of ψ when S is a full matrix algebra.
    pub psi_choi_min: Option<f64>,
    /// Complete positivity of ψ when it could be decided.
    pub psi_cp: Option<bool>,
}

/// Rank threshold relative to ‖G‖ for the Gram quotient.
pub const GRAM_RANK_TOL: f64 = 1e-10;

pub fn gns_factorise(theta: &TrilinearForm) -> Result<GnsFactorisation> {
    let g = theta.gram()?;
    let (e, s, r) = (theta.e.clone(), theta.s.clone(), theta.r);
    let eig = herm_eig(&g).map_err(|_| Error::NotPositive("Gram matrix is not Hermitian".into()))?;
    let gnorm = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if eig.min() < -1e-9 * gnorm.max(1.0) {
        return Err(Error::NotPositive(format!("Gram matrix has eigenvalue {:.3e}", eig.min())));
    }
    let keep: Vec<usize> = (0..eig.values.len()).filter(|&i| eig.values[i] > GRAM_RANK_TOL * gnorm && gnorm > 0.0).collect();
    let k_dim = keep.len();
    if k_dim == 0 {
        return Ok(GnsFactorisation {
            k_dim,
            phi: LinMap::zero(e, 0, r),
            psi: LinMap::zero(s, 0, 0),
            gram: g,
            reconstruction: theta.max_abs(),
            unital_residual: 0.0,
            psi_choi_min: None,
            psi_cp: None,
        });
    }
    let dr = g.rows();
    let q = CMatrix::from_fn(dr, k_dim, |row, c| eig.vectors[(row, keep[c])]);
    let sq: Vec<f64> = keep.iter().map(|&i| eig.values[i].sqrt()).collect();
    // J = Λ^{1/2} Q*, and its pseudo-inverse side Λ^{-1/2} Q*.
    let j = CMatrix::from_fn(k_dim, dr, |a, b| q[(b, a)].conj() * sq[a]);
    let jinv = CMatrix::from_fn(k_dim, dr, |a, b| q[(b, a)].conj() / sq[a]);
    let phi_images: Vec<CMatrix> = (0..e.dim()).map(|a| j.block(0, a * r, k_dim, r)).collect();
    let phi = LinMap::from_images(e.clone(), &phi_images)?;
    let psi_images: Vec<CMatrix> = (0..s.dim())
        .map(|b| {
            let mut c = vec![ZERO; s.dim()];
            c[b] = ONE;
            jinv.matmul(&theta.slot_matrix(&c)).matmul(&jinv.adjoint())
        })
        .collect();
    let psi = LinMap::from_images(s.clone(), &psi_images)?;
    let rebuilt = TrilinearForm::from_maps(&phi, &psi, &phi)?;
    let reconstruction = rebuilt.distance(theta)?;
    let unit = s.unit_coeffs().expect("checked by gram").to_vec();
    let unital_residual = (&psi.apply_coeffs(&unit) - &CMatrix::identity(k_dim)).max_abs();
    let (psi_cp, psi_choi_min) = match is_completely_positive(&psi) {
        Ok(v) => (Some(v.completely_positive), v.min_eigenvalue.filter(|_| matches!(v.route, crate::cpmaps::CpRoute::Choi))),
        Err(_) => (None, None),
    };
    Ok(GnsFactorisation { k_dim, phi, psi, gram: g, reconstruction, unital_residual, psi_choi_min, psi_cp })
}

impl GnsFactorisation {
    /// max ‖ψ(s·a)φ(x) − ψ(s)φ(a·x)‖ over basis triples of S, A, E.
    pub fn balanced_residual(&self, a_space: &ConcreteOpSpace) -> Result<f64> {
        let (e, s) = (self.phi.domain().clone(), self.psi.domain().clone());
        let mut worst: f64 = 0.0;
        for a in a_space.basis() {
            for sb in s.basis() {
                let sa = self.psi.apply(&sb.matmul(a))?;
                let ps = self.psi.apply(sb)?;
                for x in e.basis() {
                    let lhs = sa.matmul(&self.phi.apply(x)?);
                    let rhs = ps.matmul(&self.phi.apply(&a.matmul(x))?);
                    worst = worst.max((&lhs - &rhs).max_abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Lower bound on ‖θ‖_cb for positive θ from sup ‖θ⁽ᴸ⁾(x*, 1, x)‖ over
/// contractions x ∈ M_L(E), by a monotone ascent of the quadratic form.
pub fn cb_lower_positive(theta: &TrilinearForm, level: usize, budget: &Budget) -> Result<NormInterval> {
    let unit = theta.s.unit_matrix().ok_or_else(|| Error::InvalidSpace("S must be an operator system".into()))?;
    let one = LevelElement::from_concrete(theta.s.clone(), CMatrix::identity(level).kron(&unit))?;
    if theta.max_abs() == 0.0 {
        return Ok(NormInterval::exact_zero());
    }
    let e = theta.e.clone();
    let runs: Vec<(f64, CMatrix)> = (0..budget.restarts.max(1))
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded(budget.seed, 0x7000 + i as u64);
            let coeffs = (0..level * level).map(|_| random_gaussian(&mut rng, e.dim(), 1).as_slice().to_vec()).collect();
            let x0 = LevelElement::from_coeffs(e.clone(), level, level, coeffs).expect("grid");
            let x0 = x0.concrete().scale_real(1.0 / op_norm(x0.concrete()).max(1e-300));
            quadratic_ascent(theta, &one, x0, budget.iterations)
        })
        .collect();
    let best = runs.into_iter().max_by(|a, b| a.0.total_cmp(&b.0)).expect("restarts");
    Ok(NormInterval {
        lower: best.0,
        upper: f64::INFINITY,
        upper_certified: false,
        lower_witness: Some(LowerWitness::LevelInput { level, input: best.1 }),
        upper_witness: Some(UpperWitness::Heuristic { agreeing_restarts: 0 }),
    })
}

fn quadratic_ascent(theta: &TrilinearForm, one: &LevelElement, x0: CMatrix, iterations: usize) -> (f64, CMatrix) {
    let e = theta.e.clone();
    let (de, r) = (e.dim(), theta.r);
    let (ke, h) = (e.k(), e.h());
    let level = one.shape().0;
    let unit = theta.s.unit_coeffs().expect("system").to_vec();
    // T_{a,c} = θ(b_a*, 1, b_c).
    let tmat: Vec<CMatrix> = (0..de * de)
        .map(|ac| {
            let mut ya = vec![ZERO; de];
            let mut xc = vec![ZERO; de];
            ya[ac / de] = ONE;
            xc[ac % de] = ONE;
            theta.eval_coeffs(&ya, &unit, &xc)
        })
        .collect();
    let gram = CMatrix::from_fn(de, de, |a, c| e.basis()[c].hs_inner(&e.basis()[a]));
    let gram_t_inv = crate::matcore::pinv(&gram.transpose());
    let full = e.is_full_ambient();
    let value = |x: &CMatrix| -> Option<(f64, CMatrix, LevelElement)> {
        let xl = LevelElement::from_concrete(e.clone(), x.clone()).ok()?;
        let q = theta.amplify(&xl, one, &xl).ok()?;
        let eig = herm_eig_of_part(&q);
        let v = eig.vectors.col(eig.values.len() - 1);
        Some((eig.max() / op_norm(x).max(1.0).powi(2), v, xl))
    };
    let Some((mut best, mut xi, mut xl)) = value(&x0) else { return (0.0, x0) };
    let mut x = x0;
    for _ in 0..iterations.max(1) {
        // g_{(p,j),c} = Σ_{i,a} conj(X_{pi,a}) ξ_i* T_{a,c} ξ_j.
        let mut g = CMatrix::zeros(level * ke, level * h);
        for p in 0..level {
            for jj in 0..level {
                let xij = xi.block(jj * r, 0, r, 1);
                let mut coeff = vec![ZERO; de];
                for i in 0..level {
                    let xii = xi.block(i * r, 0, r, 1);
                    for (a, xa) in xl.coeff(p, i).iter().enumerate() {
                        if *xa == ZERO {
                            continue;
                        }
                        for (c, slot) in coeff.iter_mut().enumerate() {
                            let t = xii.adjoint_mul(&tmat[a * de + c].matmul(&xij))[(0, 0)];
                            *slot += xa.conj() * t;
                        }
                    }
                }
                // G block in E with tr(G* b_c) = g_c.
                let gamma = gram_t_inv.matmul(&CMatrix::column(&coeff));
                let conj_gamma: Vec<C64> = gamma.as_slice().iter().map(|z| z.conj()).collect();
                g.set_block(p * ke, jj * h, &e.combine(&conj_gamma));
            }
        }
        if g.max_abs() == 0.0 {
            break;
        }
        let cand = if full { polar_isometry(&g) } else { best_contraction_in_subspace(&e, level, &g) };
        match value(&cand) {
            Some((v, nxi, nxl)) if v > best * (1.0 + 1e-12) => {
                best = v;
                xi = nxi;
                xl = nxl;
                x = cand;
            }
            _ => break,
        }
    }
    (best, x)
}

/// θ = φ₁*·ψ·φ₂ with φ₁, φ₂ completely contractive and ψ unital completely
/// positive.
#[derive(Clone, Debug)]
pub struct CspsFactorisation {
    pub phi1: LinMap,
    pub psi: LinMap,
    pub phi2: LinMap,
}

/// θ = Σₘ i⁻ᵐ θₘ with θₘ = ¼(φ₁ + iᵐφ₂)*·ψ·(φ₁ + iᵐφ₂), each completely positive.
#[derive(Clone, Debug)]
pub struct CcDecomposition {
    pub parts: Vec<TrilinearForm>,
    pub weights: [C64; 4],
}

impl CcDecomposition {
    pub fn sum(&self) -> Result<TrilinearForm> {
        let mut acc = self.parts[0].scale(self.weights[0]);
        for (p, w) in self.parts.iter().zip(&self.weights).skip(1) {
            acc = acc.add(&p.scale(*w))?;
        }
        Ok(acc)
    }
}

pub fn cc_decompose(theta: &TrilinearForm, csps: &CspsFactorisation) -> Result<CcDecomposition> {
    let rebuilt = TrilinearForm::from_maps(&csps.phi1, &csps.psi, &csps.phi2)?;
    let gap = rebuilt.distance(theta)?;
    if gap > 1e-8 * theta.max_abs().max(1.0) {
        return Err(Error::Precondition(format!("factorisation misses θ by {gap:.3e}")));
    }
    let mut parts = Vec::with_capacity(4);
    let mut weights = [ZERO; 4];
    for (m, w) in weights.iter_mut().enumerate() {
        let ph = I.powu(m as u32);
        let phi_m = csps.phi1.add(&csps.phi2.scale(ph))?.scale(C64::new(0.5, 0.0));
        parts.push(TrilinearForm::from_maps(&phi_m, &csps.psi, &phi_m)?);
        *w = ph.conj();
    }
    Ok(CcDecomposition { parts, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpmaps::{sample_cc_map, StinespringUcp};
    use crate::rng::{random_unitary, Rng64};

    fn m2() -> Arc<ConcreteOpSpace> {
        Arc::new(ConcreteOpSpace::full(2))
    }

    fn random_in(space: &Arc<ConcreteOpSpace>, rows: usize, cols: usize, rng: &mut Rng64) -> LevelElement {
        let coeffs = (0..rows * cols).map(|_| random_gaussian(rng, space.dim(), 1).as_slice().to_vec()).collect();
        LevelElement::from_coeffs(space.clone(), rows, cols, coeffs).unwrap()
    }

    #[test]
    fn amplified_multiplication_is_matrix_product() {
        let theta = TrilinearForm::multiplication(m2(), m2()).unwrap();
        let mut rng = seeded(11, 0);
        let y = random_in(&m2(), 2, 3, &mut rng);
        let s = random_in(&m2(), 2, 2, &mut rng);
        let x = random_in(&m2(), 2, 3, &mut rng);
        let got = theta.amplify(&y, &s, &x).unwrap();
        let want = y.concrete().adjoint().matmul(s.concrete()).matmul(x.concrete());
        assert!(got.approx_eq(&want, 1e-12));
        let y1 = random_in(&m2(), 1, 1, &mut rng);
        let s1 = random_in(&m2(), 1, 1, &mut rng);
        let direct = theta.eval(y1.concrete(), s1.concrete(), y1.concrete()).unwrap();
        assert!(theta.amplify(&y1, &s1, &y1).unwrap().approx_eq(&direct, 1e-12));
        let z = TrilinearForm::zero(m2(), m2(), 2);
        assert_eq!(z.amplify(&y, &s, &x).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn polarisation_identity() {
        let theta = TrilinearForm::multiplication(m2(), m2()).unwrap();
        let mut rng = seeded(12, 0);
        let v1 = random_gaussian(&mut rng, 2, 2);
        let v2 = random_gaussian(&mut rng, 2, 2);
        let h = crate::rng::random_hermitian(&mut rng, 2);
        let pol = polarise(&theta, &h, &v1, &v2).unwrap();
        assert!(pol.recombine().approx_eq(&theta.eval(&v1, &h, &v2).unwrap(), 1e-12));
        let zero = polarise(&theta, &CMatrix::zeros(2, 2), &v1, &v2).unwrap();
        assert!(zero.terms.iter().all(|t| t.max_abs() == 0.0));
        assert!(polarise(&theta, &random_gaussian(&mut rng, 2, 2), &v1, &v2).is_err());
    }

    #[test]
    fn gns_of_multiplication_form() {
        let theta = TrilinearForm::multiplication(m2(), m2()).unwrap();
        assert!(theta.adjoint_law_residual().unwrap() < 1e-12);
        let g = gns_factorise(&theta).unwrap();
        assert!(g.reconstruction <= 1e-8 && g.unital_residual <= 1e-10);
        assert_eq!(g.psi_cp, Some(true));
        let id = Arc::new(ConcreteOpSpace::full(2));
        assert!(g.balanced_residual(&id).unwrap() < 1e-8);
    }

    #[test]
    fn gns_of_planted_form_and_cb_agreement() {
        let mut rng = seeded(13, 0);
        let phi0 = sample_cc_map(m2(), (3, 2), 2, &mut rng).to_linmap();
        let psi0 = StinespringUcp::random(m2(), 2, 3, &mut rng).unwrap().to_linmap();
        let theta = TrilinearForm::from_maps(&phi0, &psi0, &phi0).unwrap();
        assert!(positivity_sample(&theta, 60, 3, 1).unwrap().positive);
        let g = gns_factorise(&theta).unwrap();
        assert!(g.k_dim <= 3);
        assert!(g.reconstruction <= 1e-8, "{}", g.reconstruction);
        assert!(g.unital_residual <= 1e-10);
        let b = Budget::quick();
        let (kk, rr) = g.phi.out_shape();
        let level = kk.max(rr);
        let phi_cb = crate::cpmaps::cb_norm(&g.phi, &b);
        let theta_cb = cb_lower_positive(&theta, level, &b).unwrap();
        assert!((phi_cb.lower.powi(2) - theta_cb.lower).abs() < 1e-4, "{} vs {}", phi_cb.lower.powi(2), theta_cb.lower);
    }

    #[test]
    fn degenerate_form() {
        let g = gns_factorise(&TrilinearForm::zero(m2(), m2(), 2)).unwrap();
        assert_eq!(g.k_dim, 0);
        assert_eq!(g.phi.action().max_abs(), 0.0);
    }

    #[test]
    fn non_positive_gram_is_rejected() {
        let theta = TrilinearForm::multiplication(m2(), m2()).unwrap().scale(C64::new(-1.0, 0.0));
        assert!(matches!(gns_factorise(&theta), Err(Error::NotPositive(_))));
        assert!(!positivity_sample(&theta, 20, 2, 3).unwrap().positive);
    }

    #[test]
    fn cc_decomposition_of_twisted_product() {
        let mut rng = seeded(14, 0);
        let u = random_unitary(&mut rng, 2);
        let id = LinMap::inclusion(m2());
        let twisted = LinMap::from_fn(m2(), |x| u.matmul(x)).unwrap();
        let theta = TrilinearForm::from_fn(m2(), m2(), |y, s, x| y.adjoint().matmul(s).matmul(&u.matmul(x))).unwrap();
        let dec = cc_decompose(&theta, &CspsFactorisation { phi1: id.clone(), psi: id.clone(), phi2: twisted }).unwrap();
        assert!(dec.sum().unwrap().distance(&theta).unwrap() <= 1e-8);
        for p in &dec.parts {
            assert!(positivity_sample(p, 30, 2, 5).unwrap().positive);
        }
        let zero = TrilinearForm::zero(m2(), m2(), 2);
        let z = LinMap::zero(m2(), 2, 2);
        let dec = cc_decompose(&zero, &CspsFactorisation { phi1: z.clone(), psi: id, phi2: z }).unwrap();
        assert!(dec.parts.iter().all(|p| p.max_abs() == 0.0));
    }

    #[test]
    fn json_round_trip() {
        let theta = TrilinearForm::multiplication(m2(), m2()).unwrap();
        let text = serde_json::to_string(&theta).unwrap();
        let back: TrilinearForm = serde_json::from_str(&text).unwrap();
        assert_eq!(back.distance(&theta).unwrap(), 0.0);
    }
}
