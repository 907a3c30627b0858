//! Linear maps out of concrete operator spaces: Choi duality, complete
//! positivity, cb-norm ascent and the dilation-form samplers.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cert::{Budget, LowerWitness, NormInterval, UpperWitness, EPS_REPORT};
use crate::conic::AffinePsd;
use crate::error::{Error, Result};
use crate::matcore::{
    herm_eig_of_part, op_norm, polar_isometry, top_singular, CMatrix, C64, ONE, PSD_TOL, ZERO,
};
use crate::opspace::{ConcreteOpSpace, LevelElement};
use crate::rng::{random_contraction, random_gaussian, random_isometry, seeded, Rng64};

/// A linear map E → M_{r,c} stored by the images of the basis of E.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinMap {
    domain: Arc<ConcreteOpSpace>,
    out_rows: usize,
    out_cols: usize,
    /// Column a is vec(φ(b_a)), row-major.
    action: CMatrix,
}

impl LinMap {
    pub fn new(domain: Arc<ConcreteOpSpace>, out_rows: usize, out_cols: usize, action: CMatrix) -> Result<Self> {
        if action.shape() != (out_rows * out_cols, domain.dim()) {
            return Err(Error::ShapeMismatch(format!(
                "action {:?} for a map of dimension {} into {out_rows}x{out_cols}",
                action.shape(),
                domain.dim()
            )));
        }
        Ok(LinMap { domain, out_rows, out_cols, action })
    }

    /// Map determined by the images of the basis.
    pub fn from_images(domain: Arc<ConcreteOpSpace>, images: &[CMatrix]) -> Result<Self> {
        if images.len() != domain.dim() || images.is_empty() {
            return Err(Error::ShapeMismatch("one image per basis element required".into()));
        }
        let (r, c) = images[0].shape();
        let cols: Vec<CMatrix> = images.iter().map(|m| m.vectorize()).collect();
        if images.iter().any(|m| m.shape() != (r, c)) {
            return Err(Error::ShapeMismatch("images differ in shape".into()));
        }
        Self::new(domain, r, c, CMatrix::hstack(&cols)?)
    }

    /// Map obtained by evaluating `f` on each basis element.
    pub fn from_fn(domain: Arc<ConcreteOpSpace>, f: impl Fn(&CMatrix) -> CMatrix) -> Result<Self> {
        let images: Vec<CMatrix> = domain.basis().iter().map(&f).collect();
        Self::from_images(domain, &images)
    }

    pub fn zero(domain: Arc<ConcreteOpSpace>, out_rows: usize, out_cols: usize) -> Self {
        let d = domain.dim();
        LinMap { domain, out_rows, out_cols, action: CMatrix::zeros(out_rows * out_cols, d) }
    }

    /// The inclusion of E into its ambient matrices.
    pub fn inclusion(domain: Arc<ConcreteOpSpace>) -> Self {
        Self::from_fn(domain, |b| b.clone()).expect("inclusion")
    }

    pub fn domain(&self) -> &Arc<ConcreteOpSpace> {
        &self.domain
    }

    pub fn out_shape(&self) -> (usize, usize) {
        (self.out_rows, self.out_cols)
    }

    pub fn action(&self) -> &CMatrix {
        &self.action
    }

    /// φ(b_a).
    pub fn image(&self, a: usize) -> CMatrix {
        self.action.col(a).reshape(self.out_rows, self.out_cols).expect("image shape")
    }

    pub fn images(&self) -> Vec<CMatrix> {
        (0..self.domain.dim()).map(|a| self.image(a)).collect()
    }

    pub fn apply_coeffs(&self, coeffs: &[C64]) -> CMatrix {
        self.action.matmul(&CMatrix::column(coeffs)).reshape(self.out_rows, self.out_cols).expect("image shape")
    }

    /// φ(x) for a matrix of the ambient shape lying in E.
    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        let (c, r) = self.domain.project_onto(x)?;
        if r > 1e-9 * x.frobenius_norm().max(1.0) {
            return Err(Error::ShapeMismatch(format!("argument is not in the domain (residual {r:.2e})")));
        }
        Ok(self.apply_coeffs(&c))
    }

    /// φ⁽ᵐ'ⁿ⁾ on a concrete block matrix with blocks in E.
    pub fn amplify(&self, x: &CMatrix) -> Result<CMatrix> {
        let (k, h) = (self.domain.k(), self.domain.h());
        if x.rows() % k != 0 || x.cols() % h != 0 {
            return Err(Error::ShapeMismatch(format!("{:?} is not a block matrix over ({k}, {h})", x.shape())));
        }
        let (m, n) = (x.rows() / k, x.cols() / h);
        let mut out = CMatrix::zeros(m * self.out_rows, n * self.out_cols);
        for i in 0..m {
            for j in 0..n {
                let (c, _) = self.domain.project_onto(&x.block(i * k, j * h, k, h))?;
                out.set_block(i * self.out_rows, j * self.out_cols, &self.apply_coeffs(&c));
            }
        }
        Ok(out)
    }

    /// φ⁽ᵐ'ⁿ⁾ on a level element, using its coefficients.
    pub fn amplify_element(&self, x: &LevelElement) -> CMatrix {
        let (m, n) = x.shape();
        let mut out = CMatrix::zeros(m * self.out_rows, n * self.out_cols);
        for i in 0..m {
            for j in 0..n {
                out.set_block(i * self.out_rows, j * self.out_cols, &self.apply_coeffs(x.coeff(i, j)));
            }
        }
        out
    }

    /// x ↦ a φ(x) b.
    pub fn sandwich(&self, a: &CMatrix, b: &CMatrix) -> Result<Self> {
        let images: Vec<CMatrix> = self.images().iter().map(|m| a.matmul(m).matmul(b)).collect();
        Self::from_images(self.domain.clone(), &images)
    }

    pub fn add(&self, other: &LinMap) -> Result<Self> {
        if self.out_shape() != other.out_shape() || self.action.shape() != other.action.shape() {
            return Err(Error::ShapeMismatch("maps differ in shape".into()));
        }
        Self::new(self.domain.clone(), self.out_rows, self.out_cols, &self.action + &other.action)
    }

    pub fn scale(&self, a: C64) -> Self {
        LinMap { action: self.action.scale(a), ..self.clone() }
    }

    /// Choi matrix Σ E_ij ⊗ φ(E_ij) for a full matrix-algebra domain.
    pub fn choi_matrix(&self) -> Result<CMatrix> {
        let d = self.domain.k();
        if !(self.domain.h() == d && self.domain.is_full_ambient()) {
            return Err(Error::UnsupportedDomain("Choi matrix needs a full matrix algebra".into()));
        }
        let mut choi = CMatrix::zeros(d * self.out_rows, d * self.out_cols);
        for i in 0..d {
            for j in 0..d {
                let img = self.apply(&CMatrix::unit(d, d, i, j))?;
                choi.set_block(i * self.out_rows, j * self.out_cols, &img);
            }
        }
        Ok(choi)
    }

    /// Gradient helper: the HS-gradient in M_L(E) of T ↦ Re ⟨φ⁽ᴸ⁾(T) v, u⟩.
    fn hs_gradient(&self, level: usize, u: &CMatrix, v: &CMatrix) -> CMatrix {
        let (k, h) = (self.domain.k(), self.domain.h());
        let frame = self.domain.dual_frame();
        let d = self.domain.dim();
        let images = self.images();
        let mut g = CMatrix::zeros(level * k, level * h);
        for i in 0..level {
            let ui = u.block(i * self.out_rows, 0, self.out_rows, 1);
            for j in 0..level {
                let vj = v.block(j * self.out_cols, 0, self.out_cols, 1);
                let w: Vec<C64> = (0..d).map(|a| ui.adjoint().matmul(&images[a]).matmul(&vj)[(0, 0)]).collect();
                let mut blk = CMatrix::zeros(k, h);
                for e in 0..k * h {
                    let mut acc = ZERO;
                    for (a, wa) in w.iter().enumerate() {
                        acc += frame[(a, e)] * wa;
                    }
                    blk.as_mut_slice()[e] = acc.conj();
                }
                g.set_block(i * k, j * h, &blk);
            }
        }
        g
    }
}

/// A linear functional on Mₙ(X): s(x) = Σ w[(i·n + j)·D + a] · x_ij^a.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelFunctional {
    domain: Arc<ConcreteOpSpace>,
    n: usize,
    weights: Vec<C64>,
}

impl LevelFunctional {
    pub fn new(domain: Arc<ConcreteOpSpace>, n: usize, weights: Vec<C64>) -> Result<Self> {
        if weights.len() != n * n * domain.dim() {
            return Err(Error::ShapeMismatch("functional weight count".into()));
        }
        Ok(LevelFunctional { domain, n, weights })
    }

    pub fn level(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[C64] {
        &self.weights
    }

    pub fn evaluate(&self, x: &LevelElement) -> Result<C64> {
        if x.shape() != (self.n, self.n) {
            return Err(Error::ShapeMismatch("functional level".into()));
        }
        let d = self.domain.dim();
        let mut acc = ZERO;
        for i in 0..self.n {
            for j in 0..self.n {
                for (a, c) in x.coeff(i, j).iter().enumerate() {
                    acc += self.weights[(i * self.n + j) * d + a] * c;
                }
            }
        }
        Ok(acc)
    }

    /// Evaluates on a concrete (n·k)×(n·h) block matrix over X.
    pub fn evaluate_concrete(&self, x: &CMatrix) -> Result<C64> {
        let el = LevelElement::from_concrete(self.domain.clone(), x.clone())?;
        self.evaluate(&el)
    }
}

/// The elementary level element b_a in slot (i, j) of Mₙ(X).
fn elementary(domain: &Arc<ConcreteOpSpace>, n: usize, i: usize, j: usize, a: usize) -> LevelElement {
    let d = domain.dim();
    let mut coeffs = vec![vec![ZERO; d]; n * n];
    coeffs[i * n + j][a] = ONE;
    LevelElement::from_coeffs(domain.clone(), n, n, coeffs).expect("elementary element")
}

/// s_φ(X) = ⟨φ⁽ⁿ⁾(X) e, e⟩ with e the concatenated standard basis vector.
pub fn functional_of_map(phi: &LinMap) -> Result<LevelFunctional> {
    let (r, c) = phi.out_shape();
    if r != c {
        return Err(Error::ShapeMismatch(format!("map into {r}x{c} is not into a square matrix algebra")));
    }
    let n = r;
    let mut e = CMatrix::zeros(n * n, 1);
    for i in 0..n {
        e[(i * n + i, 0)] = ONE;
    }
    let d = phi.domain.dim();
    let mut weights = Vec::with_capacity(n * n * d);
    for i in 0..n {
        for j in 0..n {
            for a in 0..d {
                let x = elementary(&phi.domain, n, i, j, a);
                let y = phi.amplify_element(&x);
                weights.push(e.adjoint().matmul(&y).matmul(&e)[(0, 0)]);
            }
        }
    }
    LevelFunctional::new(phi.domain.clone(), n, weights)
}

/// φ_s with ⟨φ_s(x) e_j, e_i⟩ = s(x ⊗ E_ij).
pub fn map_of_functional(s: &LevelFunctional) -> LinMap {
    let n = s.n;
    let d = s.domain.dim();
    let images: Vec<CMatrix> = (0..d)
        .map(|a| {
            CMatrix::from_fn(n, n, |i, j| s.evaluate(&elementary(&s.domain, n, i, j, a)).expect("level matches"))
        })
        .collect();
    LinMap::from_images(s.domain.clone(), &images).expect("images have equal shape")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CpRoute {
    Choi,
    FunctionalExtension,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CpVerdict {
    pub completely_positive: bool,
    pub route: CpRoute,
    /// Negative eigenvector of the Choi matrix, or a positive element of
    /// Mₙ(S) on which s_φ is negative or non-real.
    pub witness: Option<CMatrix>,
    pub min_eigenvalue: Option<f64>,
}

/// Complete positivity by the Choi matrix (full algebras) or by extending
/// s_φ to a positive functional (operator systems).
pub fn is_completely_positive(phi: &LinMap) -> Result<CpVerdict> {
    let dom = &phi.domain;
    if dom.h() == dom.k() && dom.is_full_ambient() {
        let (r, c) = phi.out_shape();
        if r != c {
            return Ok(CpVerdict { completely_positive: false, route: CpRoute::Choi, witness: None, min_eigenvalue: None });
        }
        let choi = phi.choi_matrix()?;
        let skew = (&choi - &choi.adjoint()).max_abs();
        let eig = herm_eig_of_part(&choi);
        let scale = eig.values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let min = eig.min();
        if skew > 1e-9 * scale {
            // Not Hermitian preserving: the anti-Hermitian part yields a witness.
            let anti = (&choi - &choi.adjoint()).scale(C64::new(0.0, -0.5));
            let e = herm_eig_of_part(&anti);
            let idx = if e.max().abs() >= e.min().abs() { e.values.len() - 1 } else { 0 };
            return Ok(CpVerdict {
                completely_positive: false,
                route: CpRoute::Choi,
                witness: Some(e.vectors.col(idx)),
                min_eigenvalue: Some(min),
            });
        }
        let ok = min >= -PSD_TOL * scale;
        return Ok(CpVerdict {
            completely_positive: ok,
            route: CpRoute::Choi,
            witness: if ok { None } else { Some(eig.vectors.col(0)) },
            min_eigenvalue: Some(min),
        });
    }
    if dom.is_system() {
        return cp_by_extension(phi);
    }
    Err(Error::UnsupportedDomain("domain is neither a full matrix algebra nor an operator system".into()))
}

/// s_φ ≥ 0 on Mₙ(S)⁺ iff it extends to a positive functional tr(P·) on
/// M_{n·d}; the extension is searched by alternating projections.
fn cp_by_extension(phi: &LinMap) -> Result<CpVerdict> {
    let s = functional_of_map(phi)?;
    let dom = phi.domain.clone();
    let (n, d, dim) = (s.n, dom.k(), dom.dim());
    let big = n * d;
    // Constraint rows: tr(P X_β) = s(X_β) over the elementary basis of Mₙ(S).
    let mut lmat = CMatrix::zeros(n * n * dim, big * big);
    let mut target = CMatrix::zeros(n * n * dim, 1);
    let mut row = 0;
    for i in 0..n {
        for j in 0..n {
            for a in 0..dim {
                let x = elementary(&dom, n, i, j, a);
                let xc = x.concrete();
                // tr(P X) = Σ_pq P_pq X_qp
                for p in 0..big {
                    for q in 0..big {
                        lmat[(row, p * big + q)] = xc[(q, p)];
                    }
                }
                target[(row, 0)] = s.weights[(i * n + j) * dim + a];
                row += 1;
            }
        }
    }
    let problem = AffinePsd::new(big, lmat, target);
    let sol = problem.solve(4000, 1e-10);
    let scale = s.weights.iter().map(|w| w.norm()).fold(1.0, f64::max);
    if sol.residual <= 1e-8 * scale {
        return Ok(CpVerdict { completely_positive: true, route: CpRoute::FunctionalExtension, witness: None, min_eigenvalue: None });
    }
    // Look for a positive element where s_φ is negative or non-real.
    let unit = dom.unit_matrix().expect("operator system");
    let one_n = CMatrix::identity(n).kron(&unit);
    let mut rng = seeded(0xC0DE, n as u64);
    let mut worst: Option<(f64, CMatrix)> = None;
    for t in 0..400 {
        let h = random_level_hermitian(&dom, n, &mut rng);
        let shifted = if t % 2 == 0 { h } else { &h - &one_n.scale_real(2.0 * herm_eig_of_part(&h).max()) };
        let lam = herm_eig_of_part(&shifted).min();
        let pos = &shifted - &one_n.scale_real(lam);
        let val = s.evaluate_concrete(&pos)?;
        let score = val.re.min(-val.im.abs());
        if worst.as_ref().is_none_or(|(w, _)| score < *w) {
            worst = Some((score, pos));
        }
    }
    let (score, pos) = worst.expect("samples drawn");
    let refuted = score < -1e-9 * scale;
    Ok(CpVerdict {
        completely_positive: false,
        route: CpRoute::FunctionalExtension,
        witness: if refuted { Some(pos) } else { None },
        min_eigenvalue: Some(score),
    })
    .and_then(|v| {
        if refuted {
            Ok(v)
        } else {
            Err(Error::UnsupportedDomain(format!(
                "extension search inconclusive (affine residual {:.2e})",
                sol.residual
            )))
        }
    })
}

/// Random Hermitian element of Mₙ(S) as a concrete matrix.
pub fn random_level_hermitian(space: &Arc<ConcreteOpSpace>, n: usize, rng: &mut Rng64) -> CMatrix {
    let d = space.dim();
    let coeffs: Vec<Vec<C64>> = (0..n * n).map(|_| random_gaussian(rng, d, 1).as_slice().to_vec()).collect();
    let x = LevelElement::from_coeffs(space.clone(), n, n, coeffs).expect("coefficient grid");
    let c = x.concrete();
    (c + &c.adjoint()).scale_real(0.5)
}

/// Positivity of s_φ judged by sampling positives of Mₙ(M_d): random
/// Gram matrices plus the rank-one positive at the bottom of the density
/// of s_φ. Returns the smallest real part seen and whether any value left
/// the closed right half line.
pub fn functional_positive_by_sampling(s: &LevelFunctional, samples: usize, seed: u64) -> Result<(bool, f64)> {
    let dom = s.domain.clone();
    if !(dom.h() == dom.k() && dom.is_full_ambient()) {
        return Err(Error::UnsupportedDomain("sampling route needs a full matrix algebra".into()));
    }
    let big = s.n * dom.k();
    // Density W with s(X) = tr(W X).
    let mut w = CMatrix::zeros(big, big);
    for p in 0..big {
        for q in 0..big {
            w[(q, p)] = s.evaluate_concrete(&CMatrix::unit(big, big, p, q))?;
        }
    }
    let scale = w.max_abs().max(1.0);
    let mut rng = seeded(seed, 0x5A);
    let mut candidates: Vec<CMatrix> = Vec::with_capacity(samples + 2);
    let eig = herm_eig_of_part(&w);
    let v = eig.vectors.col(0);
    candidates.push(v.matmul(&v.adjoint()));
    for t in 0..samples {
        let rank = 1 + t % big;
        let g = random_gaussian(&mut rng, big, rank);
        candidates.push(g.matmul(&g.adjoint()));
    }
    let mut min_re = f64::INFINITY;
    let mut ok = true;
    for x in &candidates {
        let val = s.evaluate_concrete(x)?;
        min_re = min_re.min(val.re);
        let nx = x.frobenius_norm().max(1e-300);
        if val.re < -PSD_TOL * scale * nx || val.im.abs() > 1e-9 * scale * nx {
            ok = false;
        }
    }
    Ok((ok, min_re))
}

/// ‖φ‖_cb estimated at level max(r, c) by multistart alternating ascent.
pub fn cb_norm(phi: &LinMap, budget: &Budget) -> NormInterval {
    let (r, c) = phi.out_shape();
    cb_norm_at_level(phi, r.max(c), budget)
}

pub fn cb_norm_at_level(phi: &LinMap, level: usize, budget: &Budget) -> NormInterval {
    if phi.action.max_abs() == 0.0 {
        return NormInterval {
            lower: 0.0,
            upper: 0.0,
            upper_certified: true,
            lower_witness: None,
            upper_witness: Some(UpperWitness::Formula { description: "zero map".into(), terms: vec![] }),
        };
    }
    let runs: Vec<(f64, CMatrix)> = (0..budget.restarts.max(1))
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded(budget.seed, i as u64);
            cb_ascent(phi, level, budget.iterations, &mut rng)
        })
        .collect();
    summarise_restarts(runs, |t| LowerWitness::LevelInput { level, input: t })
}

/// Max over restarts with the stabilisation rule for the heuristic upper end.
pub(crate) fn summarise_restarts<W>(runs: Vec<(f64, W)>, witness: impl FnOnce(W) -> LowerWitness) -> NormInterval {
    let best_idx = runs
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.0 > runs[b].0 { i } else { b });
    let best = runs[best_idx].0;
    let agreeing = runs.iter().filter(|r| r.0 >= best * (1.0 - 1e-7) - 1e-12).count();
    let (upper, stable) = if agreeing >= 2 || best == 0.0 {
        (best * (1.0 + EPS_REPORT), true)
    } else {
        (f64::INFINITY, false)
    };
    let w = runs.into_iter().nth(best_idx).map(|r| r.1).expect("non-empty");
    NormInterval {
        lower: best,
        upper,
        upper_certified: false,
        lower_witness: Some(witness(w)),
        upper_witness: Some(UpperWitness::Heuristic { agreeing_restarts: if stable { agreeing } else { 1 } }),
    }
}

/// One restart: returns the certified ratio ‖φ⁽ᴸ⁾(T)‖/max(1, ‖T‖) and T.
fn cb_ascent(phi: &LinMap, level: usize, iterations: usize, rng: &mut Rng64) -> (f64, CMatrix) {
    let dom = phi.domain.clone();
    let (k, h) = (dom.k(), dom.h());
    let full = dom.is_full_ambient();
    let mut t = if full {
        random_contraction(rng, level * k, level * h)
    } else {
        let coeffs = (0..level * level).map(|_| random_gaussian(rng, dom.dim(), 1).as_slice().to_vec()).collect();
        let x = LevelElement::from_coeffs(dom.clone(), level, level, coeffs).expect("grid");
        let n = op_norm(x.concrete()).max(1e-300);
        x.concrete().scale_real(1.0 / n)
    };
    let mut best = (0.0, t.clone());
    let mut stall = 0;
    for _ in 0..iterations.max(1) {
        let y = phi.amplify(&t).expect("level input in domain");
        let (sigma, u, v) = top_singular(&y);
        let val = sigma / op_norm(&t).max(1.0);
        if val > best.0 * (1.0 + 1e-13) + 1e-15 {
            stall = 0;
            best = (val, t.clone());
        } else {
            stall += 1;
            if stall >= 3 {
                break;
            }
        }
        let g = phi.hs_gradient(level, &u, &v);
        if g.max_abs() == 0.0 {
            break;
        }
        t = if full {
            polar_isometry(&g)
        } else {
            best_contraction_in_subspace(&dom, level, &g)
        };
    }
    best
}

/// A contraction in M_L(E) with large Re⟨T, G⟩; G itself lies in M_L(E).
pub(crate) fn best_contraction_in_subspace(dom: &ConcreteOpSpace, level: usize, g: &CMatrix) -> CMatrix {
    let (k, h) = (dom.k(), dom.h());
    let mut projected = CMatrix::zeros(level * k, level * h);
    let p = polar_isometry(g);
    for i in 0..level {
        for j in 0..level {
            let (c, _) = dom.project_onto(&p.block(i * k, j * h, k, h)).expect("block shape");
            projected.set_block(i * k, j * h, &dom.combine(&c));
        }
    }
    let a = projected.scale_real(1.0 / op_norm(&projected).max(1.0));
    let b = g.scale_real(1.0 / op_norm(g).max(1e-300));
    if a.hs_inner(g).re >= b.hs_inner(g).re {
        a
    } else {
        b
    }
}

/// φ(x) = Z₂*(x ⊗ Iₘ)Z₁ with contractions Z₁, Z₂; completely contractive.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WittstockMap {
    pub domain: Arc<ConcreteOpSpace>,
    pub mult: usize,
    /// (h·m) × h'.
    pub z1: CMatrix,
    /// (k·m) × k'.
    pub z2: CMatrix,
}

impl WittstockMap {
    pub fn new(domain: Arc<ConcreteOpSpace>, mult: usize, z1: CMatrix, z2: CMatrix) -> Result<Self> {
        if z1.rows() != domain.h() * mult || z2.rows() != domain.k() * mult {
            return Err(Error::ShapeMismatch("dilation shapes do not match the domain".into()));
        }
        Ok(WittstockMap { domain, mult, z1, z2 })
    }

    /// The inclusion x ↦ x.
    pub fn inclusion(domain: Arc<ConcreteOpSpace>) -> Self {
        let (h, k) = (domain.h(), domain.k());
        WittstockMap { domain, mult: 1, z1: CMatrix::identity(h), z2: CMatrix::identity(k) }
    }

    pub fn out_shape(&self) -> (usize, usize) {
        (self.z2.cols(), self.z1.cols())
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        self.z2.adjoint().matmul(&x.kron_identity(self.mult)).matmul(&self.z1)
    }

    pub fn to_linmap(&self) -> LinMap {
        LinMap::from_fn(self.domain.clone(), |b| self.apply(b)).expect("images share a shape")
    }

    /// max(‖Z₁‖, ‖Z₂‖) ≤ 1 implies complete contractivity.
    pub fn dilation_norms(&self) -> (f64, f64) {
        (op_norm(&self.z1), op_norm(&self.z2))
    }
}

/// ψ(s) = V*(s ⊗ I_r)V with V an isometry; unital completely positive.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StinespringUcp {
    pub domain: Arc<ConcreteOpSpace>,
    pub mult: usize,
    /// (d·r) × K with V*V = I_K.
    pub v: CMatrix,
}

impl StinespringUcp {
    pub fn new(domain: Arc<ConcreteOpSpace>, mult: usize, v: CMatrix) -> Result<Self> {
        if !domain.is_system() {
            return Err(Error::InvalidSpace("ψ needs an operator system domain".into()));
        }
        if v.rows() != domain.k() * mult {
            return Err(Error::ShapeMismatch("isometry rows must be d·r".into()));
        }
        let vv = v.adjoint_mul(&v);
        if (&vv - &CMatrix::identity(v.cols())).max_abs() > 1e-10 {
            return Err(Error::NotPositive("Stinespring V is not an isometry, ψ would not be unital".into()));
        }
        Ok(StinespringUcp { domain, mult, v })
    }

    pub fn identity(domain: Arc<ConcreteOpSpace>) -> Self {
        let d = domain.k();
        StinespringUcp { domain, mult: 1, v: CMatrix::identity(d) }
    }

    /// Vector state s ↦ ⟨(s⊗I_r) e, e⟩ for a unit vector e ∈ ℂ^{d·r}.
    pub fn vector_state(domain: Arc<ConcreteOpSpace>, mult: usize, e: CMatrix) -> Result<Self> {
        Self::new(domain, mult, e)
    }

    pub fn random(domain: Arc<ConcreteOpSpace>, mult: usize, out_dim: usize, rng: &mut Rng64) -> Result<Self> {
        let rows = domain.k() * mult;
        if out_dim > rows {
            return Err(Error::ShapeMismatch("output dimension exceeds d·r".into()));
        }
        let v = random_isometry(rng, rows, out_dim);
        Self::new(domain, mult, v)
    }

    pub fn out_dim(&self) -> usize {
        self.v.cols()
    }

    pub fn apply(&self, s: &CMatrix) -> CMatrix {
        self.v.adjoint().matmul(&s.kron_identity(self.mult)).matmul(&self.v)
    }

    pub fn to_linmap(&self) -> LinMap {
        LinMap::from_fn(self.domain.clone(), |b| self.apply(b)).expect("images share a shape")
    }

    pub fn unital_residual(&self) -> f64 {
        let e = self.domain.unit_matrix().expect("operator system");
        (&self.apply(&e) - &CMatrix::identity(self.out_dim())).max_abs()
    }
}

/// Random contraction: Gaussian entries, rescaled when the norm exceeds one.
pub fn sample_contraction(rng: &mut Rng64, rows: usize, cols: usize) -> CMatrix {
    let g = random_gaussian(rng, rows, cols);
    let n = op_norm(&g);
    if n > 1.0 {
        g.scale_real(1.0 / n)
    } else {
        g
    }
}

/// φ(x) = Z₂*(x ⊗ Iₘ)Z₁ with random contractions; out_shape = (k', h').
pub fn sample_cc_map(domain: Arc<ConcreteOpSpace>, out_shape: (usize, usize), mult: usize, rng: &mut Rng64) -> WittstockMap {
    assert!(mult >= 1, "multiplicity must be positive");
    let z1 = sample_contraction(rng, domain.h() * mult, out_shape.1);
    let z2 = sample_contraction(rng, domain.k() * mult, out_shape.0);
    WittstockMap { domain, mult, z1, z2 }
}
