//! Elements of Mₙ(E*⊙S⊙E), admissible pairs, and two-sided estimates of
//! the symmetrisation and Haagerup norms.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cert::{Budget, LowerWitness, NormInterval, UpperWitness};
use crate::cpmaps::{StinespringUcp, WittstockMap};
use crate::error::{Error, Result};
use crate::matcore::{
    clip_to_contraction, herm_eig_of_part, op_norm, psd_linear_max, psd_sqrt, range_basis, svd, top_singular,
    CMatrix, C64, I, ZERO,
};
use crate::opspace::{ConcreteOpSpace, LevelElement};
use crate::rng::{below, random_contraction, random_gaussian, random_unitary, seeded, Rng64};

const COEFF_TOL: f64 = 1e-10;

/// One summand y*·s·x with y, x ∈ M_{k,n}(E) and s ∈ M_k(S).
#[derive(Clone, Debug)]
pub struct TensorBlock {
    pub y: LevelElement,
    pub s: LevelElement,
    pub x: LevelElement,
}

impl TensorBlock {
    pub fn level(&self) -> usize {
        self.y.shape().0
    }
}

/// u ∈ Mₙ(E*⊙S⊙E) as a sum of blocks, with its coefficient tensor.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "TensorJson", into = "TensorJson")]
pub struct TensorElement {
    e: Arc<ConcreteOpSpace>,
    s: Arc<ConcreteOpSpace>,
    n: usize,
    blocks: Vec<TensorBlock>,
    coeffs: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct BlockJson {
    y: CMatrix,
    s: CMatrix,
    x: CMatrix,
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    #[serde(rename = "E")]
    e: ConcreteOpSpace,
    #[serde(rename = "S")]
    s: ConcreteOpSpace,
    n: usize,
    blocks: Vec<BlockJson>,
}

impl TryFrom<TensorJson> for TensorElement {
    type Error = Error;
    fn try_from(j: TensorJson) -> Result<Self> {
        let blocks = j.blocks.into_iter().map(|b| (b.y, b.s, b.x)).collect();
        TensorElement::from_blocks(Arc::new(j.e), Arc::new(j.s), j.n, blocks)
    }
}

impl From<TensorElement> for TensorJson {
    fn from(u: TensorElement) -> Self {
        let blocks = u
            .blocks
            .iter()
            .map(|b| BlockJson { y: b.y.concrete().clone(), s: b.s.concrete().clone(), x: b.x.concrete().clone() })
            .collect();
        TensorJson { e: (*u.e).clone(), s: (*u.s).clone(), n: u.n, blocks }
    }
}

impl TensorElement {
    /// Builds from concrete blocks (y, s, x); y, x are (k·k_E)×(n·h) and s is (k·d)×(k·d).
    pub fn from_blocks(
        e: Arc<ConcreteOpSpace>,
        s: Arc<ConcreteOpSpace>,
        n: usize,
        blocks: Vec<(CMatrix, CMatrix, CMatrix)>,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(blocks.len());
        for (y, mid, x) in blocks {
            let y = LevelElement::from_concrete(e.clone(), y)?;
            let x = LevelElement::from_concrete(e.clone(), x)?;
            let mid = LevelElement::from_concrete(s.clone(), mid)?;
            let k = y.shape().0;
            if y.shape() != (k, n) || x.shape() != (k, n) || mid.shape() != (k, k) {
                return Err(Error::ShapeMismatch(format!(
                    "block shapes y {:?}, s {:?}, x {:?} at level {n}",
                    y.shape(),
                    mid.shape(),
                    x.shape()
                )));
            }
            out.push(TensorBlock { y, s: mid, x });
        }
        Self::assemble(e, s, n, out)
    }

    /// The elementary tensor y*⊗s⊗x at level one.
    pub fn elementary(
        e: Arc<ConcreteOpSpace>,
        s: Arc<ConcreteOpSpace>,
        y: &CMatrix,
        mid: &CMatrix,
        x: &CMatrix,
    ) -> Result<Self> {
        Self::from_blocks(e, s, 1, vec![(y.clone(), mid.clone(), x.clone())])
    }

    /// Canonical element with the given coefficient tensor.
    pub fn from_coeffs(e: Arc<ConcreteOpSpace>, s: Arc<ConcreteOpSpace>, n: usize, coeffs: Vec<C64>) -> Result<Self> {
        let (de, ds) = (e.dim(), s.dim());
        if coeffs.len() != n * n * de * de * ds {
            return Err(Error::ShapeMismatch("coefficient tensor length".into()));
        }
        if coeffs.iter().all(|c| *c == ZERO) {
            return Self::assemble(e, s, n, vec![]);
        }
        let (y, mid, x) = canonical_matrices(&e, &s, n, &coeffs, e.basis());
        Self::from_blocks(e, s, n, vec![(y, mid, x)])
    }

    fn assemble(e: Arc<ConcreteOpSpace>, s: Arc<ConcreteOpSpace>, n: usize, blocks: Vec<TensorBlock>) -> Result<Self> {
        let mut coeffs = vec![ZERO; n * n * e.dim() * e.dim() * s.dim()];
        for b in &blocks {
            expand_block(e.dim(), s.dim(), n, b, &mut coeffs);
        }
        Ok(TensorElement { e, s, n, blocks, coeffs })
    }

    pub fn e_space(&self) -> &Arc<ConcreteOpSpace> {
        &self.e
    }

    pub fn s_space(&self) -> &Arc<ConcreteOpSpace> {
        &self.s
    }

    pub fn level(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[TensorBlock] {
        &self.blocks
    }

    /// Index layout ((((i·n + j)·D_E + a)·D_S + b)·D_E + c).
    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeff_index(&self, i: usize, j: usize, a: usize, b: usize, c: usize) -> usize {
        let (de, ds) = (self.e.dim(), self.s.dim());
        (((i * self.n + j) * de + a) * ds + b) * de + c
    }

    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() <= COEFF_TOL)
    }

    /// Coefficient-level equality.
    pub fn approx_eq(&self, other: &TensorElement, tol: f64) -> bool {
        self.n == other.n
            && self.coeffs.len() == other.coeffs.len()
            && self.coeffs.iter().zip(&other.coeffs).all(|(a, b)| (a - b).norm() <= tol)
    }

    fn same_spaces(&self, other: &TensorElement) -> Result<()> {
        if self.n != other.n || *self.e != *other.e || *self.s != *other.s {
            return Err(Error::ShapeMismatch("elements live in different tensor spaces".into()));
        }
        Ok(())
    }

    /// u* with blocks (x, s*, y).
    pub fn star(&self) -> Result<Self> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let s_star = LevelElement::from_concrete(self.s.clone(), b.s.concrete().adjoint())?;
            blocks.push(TensorBlock { y: b.x.clone(), s: s_star, x: b.y.clone() });
        }
        Self::assemble(self.e.clone(), self.s.clone(), self.n, blocks)
    }

    pub fn is_hermitian(&self, tol: f64) -> Result<bool> {
        Ok(self.approx_eq(&self.star()?, tol))
    }

    pub fn add(&self, other: &TensorElement) -> Result<Self> {
        self.same_spaces(other)?;
        let blocks = self.blocks.iter().chain(&other.blocks).cloned().collect();
        Self::assemble(self.e.clone(), self.s.clone(), self.n, blocks)
    }

    pub fn neg(&self) -> Self {
        self.scale(C64::new(-1.0, 0.0))
    }

    pub fn scale(&self, c: C64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| TensorBlock {
                y: b.y.clone(),
                s: LevelElement::from_concrete(self.s.clone(), b.s.concrete().scale(c)).expect("scaled member"),
                x: b.x.clone(),
            })
            .collect();
        Self::assemble(self.e.clone(), self.s.clone(), self.n, blocks).expect("same spaces")
    }

    /// α·u·β for scalar n×n matrices.
    pub fn sandwich_scalars(&self, alpha: &CMatrix, beta: &CMatrix) -> Result<Self> {
        let n = self.n;
        if alpha.shape() != (n, n) || beta.shape() != (n, n) {
            return Err(Error::ShapeMismatch("scalar multipliers must be n×n".into()));
        }
        let h = self.e.h();
        let a = alpha.adjoint().kron_identity(h);
        let bt = beta.kron_identity(h);
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                (b.y.concrete().matmul(&a), b.s.concrete().clone(), b.x.concrete().matmul(&bt))
            })
            .collect();
        Self::from_blocks(self.e.clone(), self.s.clone(), n, blocks)
    }

    /// [[0, u], [u*, 0]] at level 2n.
    pub fn offdiag(&self) -> Result<Self> {
        let (n, h, ke) = (self.n, self.e.h(), self.e.k());
        let pad = |m: &CMatrix, right: bool| {
            let k = m.rows() / ke;
            let mut out = CMatrix::zeros(k * ke, 2 * n * h);
            out.set_block(0, if right { n * h } else { 0 }, m);
            out
        };
        let mut blocks = Vec::new();
        for b in &self.blocks {
            blocks.push((pad(b.y.concrete(), false), b.s.concrete().clone(), pad(b.x.concrete(), true)));
            blocks.push((pad(b.x.concrete(), true), b.s.concrete().adjoint(), pad(b.y.concrete(), false)));
        }
        Self::from_blocks(self.e.clone(), self.s.clone(), 2 * n, blocks)
    }

    /// The concrete product Σ y*·s·x when S acts where E lands, or S = ℂ.
    pub fn mult(&self) -> Option<CMatrix> {
        let (ke, nh) = (self.e.k(), self.n * self.e.h());
        let scalar = self.s.h() == 1 && self.s.k() == 1;
        if !scalar && self.s.k() != ke {
            return None;
        }
        let mut acc = CMatrix::zeros(nh, nh);
        for b in &self.blocks {
            let mid = if scalar { b.s.concrete().kron_identity(ke) } else { b.s.concrete().clone() };
            acc += &b.y.concrete().adjoint_mul(&mid.matmul(b.x.concrete()));
        }
        Some(acc)
    }

    /// Rewrites u over S = ℂ when every middle entry is a multiple of 1_S.
    pub fn scalar_reduction(&self) -> Option<TensorElement> {
        if self.s.h() == 1 && self.s.k() == 1 {
            return Some(self.clone());
        }
        let w = self.s.unit_coeffs()?.to_vec();
        let ww: f64 = w.iter().map(|c| c.norm_sqr()).sum();
        let ratio = |c: &[C64]| -> Option<C64> {
            let lam = c.iter().zip(&w).map(|(a, b)| a * b.conj()).sum::<C64>() / ww;
            let resid: f64 = c.iter().zip(&w).map(|(a, b)| (a - lam * b).norm_sqr()).sum::<f64>().sqrt();
            let scale = c.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            (resid <= COEFF_TOL * (1.0 + scale)).then_some(lam)
        };
        let scalars = Arc::new(ConcreteOpSpace::scalars());
        let blockwise: Option<Vec<(CMatrix, CMatrix, CMatrix)>> = self
            .blocks
            .iter()
            .map(|b| {
                let k = b.level();
                let mut sigma = CMatrix::zeros(k, k);
                for p in 0..k {
                    for q in 0..k {
                        sigma[(p, q)] = ratio(b.s.coeff(p, q))?;
                    }
                }
                Some((b.y.concrete().clone(), sigma, b.x.concrete().clone()))
            })
            .collect();
        if let Some(blocks) = blockwise {
            return Self::from_blocks(self.e.clone(), scalars, self.n, blocks).ok();
        }
        let (de, ds) = (self.e.dim(), self.s.dim());
        let mut lam = Vec::with_capacity(self.coeffs.len() / ds);
        for chunk in 0..self.n * self.n * de {
            for c in 0..de {
                let v: Vec<C64> = (0..ds).map(|b| self.coeffs[(chunk * ds + b) * de + c]).collect();
                lam.push(ratio(&v)?);
            }
        }
        Self::from_coeffs(self.e.clone(), scalars, self.n, lam).ok()
    }
}

fn expand_block(de: usize, ds: usize, n: usize, b: &TensorBlock, out: &mut [C64]) {
    let k = b.level();
    for i in 0..n {
        for j in 0..n {
            for p in 0..k {
                let yv = b.y.coeff(p, i);
                for q in 0..k {
                    let sv = b.s.coeff(p, q);
                    let xv = b.x.coeff(q, j);
                    for (a, ya) in yv.iter().enumerate() {
                        if *ya == ZERO {
                            continue;
                        }
                        let ya = ya.conj();
                        for (bb, sb) in sv.iter().enumerate() {
                            if *sb == ZERO {
                                continue;
                            }
                            let ys = ya * sb;
                            let base = (((i * n + j) * de + a) * ds + bb) * de;
                            for (c, xc) in xv.iter().enumerate() {
                                out[base + c] += ys * xc;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// y_{(a,p),i} = b_a δ_{pi}, x alike, s_{(a,p),(c,q)} = Σ_b coeff_{pq}[a,b,c] s_b,
/// with `basis` an alternative basis of E in which `coeffs` are written.
fn canonical_matrices(
    e: &ConcreteOpSpace,
    s: &ConcreteOpSpace,
    n: usize,
    coeffs: &[C64],
    basis: &[CMatrix],
) -> (CMatrix, CMatrix, CMatrix) {
    let (de, ds, ke, h, d) = (e.dim(), s.dim(), e.k(), e.h(), s.k());
    let rows = de * n;
    let mut y = CMatrix::zeros(rows * ke, n * h);
    for a in 0..de {
        for p in 0..n {
            y.set_block((a * n + p) * ke, p * h, &basis[a]);
        }
    }
    let mut mid = CMatrix::zeros(rows * d, rows * d);
    for p in 0..n {
        for q in 0..n {
            for a in 0..de {
                for c in 0..de {
                    let sc: Vec<C64> =
                        (0..ds).map(|b| coeffs[(((p * n + q) * de + a) * ds + b) * de + c]).collect();
                    if sc.iter().any(|z| *z != ZERO) {
                        mid.set_block((a * n + p) * d, (c * n + q) * d, &s.combine(&sc));
                    }
                }
            }
        }
    }
    (y.clone(), mid, y)
}

/// u = y*⊙s⊙x with ‖y‖‖s‖‖x‖ = `value`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Factorization {
    pub n: usize,
    pub y: CMatrix,
    pub s: CMatrix,
    pub x: CMatrix,
    pub value: f64,
}

impl Factorization {
    fn new(n: usize, y: CMatrix, s: CMatrix, x: CMatrix) -> Self {
        let value = op_norm(&y) * op_norm(&s) * op_norm(&x);
        Factorization { n, y, s, x, value }
    }

    /// Coefficient distance between the factorization and `u`.
    pub fn residual(&self, u: &TensorElement) -> Result<f64> {
        if self.y.rows() == 0 {
            return Ok(u.coeff_norm());
        }
        let v = TensorElement::from_blocks(
            u.e.clone(),
            u.s.clone(),
            u.n,
            vec![(self.y.clone(), self.s.clone(), self.x.clone())],
        )?;
        Ok(v.coeffs.iter().zip(&u.coeffs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
    }
}

/// φ completely contractive and ψ unital completely positive, with ψ landing
/// where φ lands.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissiblePair {
    pub phi: WittstockMap,
    pub psi: StinespringUcp,
}

impl AdmissiblePair {
    pub fn new(phi: WittstockMap, psi: StinespringUcp) -> Result<Self> {
        let pair = AdmissiblePair { phi, psi };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi.out_shape().0 != self.psi.out_dim() {
            return Err(Error::ShapeMismatch("ψ must act on the codomain of φ".into()));
        }
        let (n1, n2) = self.phi.dilation_norms();
        if n1 > 1.0 + 1e-9 || n2 > 1.0 + 1e-9 {
            return Err(Error::Precondition(format!("φ dilation norms {n1}, {n2} exceed one")));
        }
        let r = self.psi.unital_residual();
        if r > 1e-10 {
            return Err(Error::Precondition(format!("ψ(1) deviates from I by {r}")));
        }
        Ok(())
    }

    /// The identity pair, available when S acts on the codomain of E.
    pub fn identity(e: Arc<ConcreteOpSpace>, s: Arc<ConcreteOpSpace>) -> Result<Self> {
        if s.k() != e.k() {
            return Err(Error::ShapeMismatch("S must act on the codomain of E".into()));
        }
        Self::new(WittstockMap::inclusion(e), StinespringUcp::identity(s))
    }

    /// φ(x) = C*(x⊗Iₘ), ψ(s) = s⊗I_r (or ω(s)·I_r through `state`).
    fn from_contraction(
        e: &Arc<ConcreteOpSpace>,
        s: &Arc<ConcreteOpSpace>,
        m: usize,
        c: &CMatrix,
        r: usize,
        state: Option<&CMatrix>,
    ) -> Result<Self> {
        let phi = WittstockMap::new(e.clone(), m, CMatrix::identity(e.h() * m), c.clone())?;
        let v = match state {
            Some(st) => st.kron_identity(r),
            None => CMatrix::identity(s.k() * r),
        };
        let psi = StinespringUcp::new(s.clone(), r, v)?;
        Self::new(phi, psi)
    }
}

/// (φ*·ψ·φ)⁽ⁿ⁾(u), computed blockwise through the dilations.
pub fn eval_pair(pair: &AdmissiblePair, u: &TensorElement) -> Result<CMatrix> {
    if *pair.phi.domain != *u.e || *pair.psi.domain != *u.s {
        return Err(Error::ShapeMismatch("pair and element use different spaces".into()));
    }
    let (m, r) = (pair.phi.mult, pair.psi.mult);
    let n = u.n;
    let z1n = CMatrix::identity(n).kron(&pair.phi.z1);
    let dim = z1n.cols();
    let mut acc = CMatrix::zeros(dim, dim);
    for b in &u.blocks {
        let k = b.level();
        let z2k = CMatrix::identity(k).kron(&pair.phi.z2);
        let vk = CMatrix::identity(k).kron(&pair.psi.v);
        let py = z2k.adjoint_mul(&b.y.concrete().kron_identity(m).matmul(&z1n));
        let px = z2k.adjoint_mul(&b.x.concrete().kron_identity(m).matmul(&z1n));
        let ps = vk.adjoint_mul(&b.s.concrete().kron_identity(r).matmul(&vk));
        acc += &py.adjoint_mul(&ps.matmul(&px));
    }
    Ok(acc)
}

fn kron_left(k: usize, a: &CMatrix) -> CMatrix {
    if k == 1 {
        a.clone()
    } else {
        CMatrix::identity(k).kron(a)
    }
}

/// Stacks y_b and x_b after amplification by Iₘ, with the middle kept apart.
struct Prepared {
    blocks: Vec<(CMatrix, CMatrix, CMatrix, usize)>,
    ke: usize,
}

impl Prepared {
    fn new(u: &TensorElement, m: usize) -> Self {
        let blocks = u
            .blocks
            .iter()
            .map(|b| {
                (b.y.concrete().kron_identity(m), b.s.concrete().clone(), b.x.concrete().kron_identity(m), b.level())
            })
            .collect();
        Prepared { blocks, ke: u.e.k() }
    }

    /// Σ A_b*(I⊗C)(s_b⊗I_r)(I⊗C*)X_b.
    fn q_general(&self, c: &CMatrix, r: usize) -> CMatrix {
        let mut acc: Option<CMatrix> = None;
        for (a, s, x, k) in &self.blocks {
            let ck = kron_left(*k, c);
            let mid = ck.matmul(&s.kron_identity(r)).matmul(&ck.adjoint());
            let t = a.adjoint_mul(&mid.matmul(x));
            acc = Some(match acc {
                Some(v) => v + t,
                None => t,
            });
        }
        acc.unwrap_or_else(|| CMatrix::zeros(0, 0))
    }

    /// Σ A_b*(σ_b⊗T)X_b for scalar middles.
    fn q_scalar(&self, t: &CMatrix) -> CMatrix {
        let mut acc: Option<CMatrix> = None;
        for (a, s, x, _) in &self.blocks {
            let mid = s.kron(t);
            let v = a.adjoint_mul(&mid.matmul(x));
            acc = Some(match acc {
                Some(w) => w + v,
                None => v,
            });
        }
        acc.unwrap_or_else(|| CMatrix::zeros(0, 0))
    }
}

fn split(v: &CMatrix, parts: usize) -> Vec<CMatrix> {
    let len = v.rows() / parts;
    (0..parts).map(|p| v.block(p * len, 0, len, 1)).collect()
}

/// Alternating ascent over 0 ⪯ T ⪯ I: exact T-step, then top singular pair.
fn ascend_scalar(prep: &Prepared, t0: CMatrix, iterations: usize) -> (f64, CMatrix) {
    let mut t = t0;
    let mut best = op_norm(&prep.q_scalar(&t));
    for _ in 0..iterations {
        let (_, u, v) = top_singular(&prep.q_scalar(&t));
        let dim = t.rows();
        let mut m = CMatrix::zeros(dim, dim);
        for (a, s, x, k) in &prep.blocks {
            let al = split(&a.matmul(&u), *k);
            let be = split(&x.matmul(&v), *k);
            for p in 0..*k {
                for q in 0..*k {
                    let c = s[(p, q)];
                    if c != ZERO {
                        m += &be[q].matmul(&al[p].adjoint()).scale(c);
                    }
                }
            }
        }
        let next = psd_linear_max(&m).projection;
        let val = op_norm(&prep.q_scalar(&next));
        if val <= best * (1.0 + 1e-13) + 1e-15 {
            if val > best {
                best = val;
                t = next;
            }
            break;
        }
        best = val;
        t = next;
    }
    (best, t)
}

/// Projected gradient ascent on the contraction C of the general form.
fn ascend_general(prep: &Prepared, c0: CMatrix, r: usize, iterations: usize) -> (f64, CMatrix) {
    let mut c = c0;
    let mut best = op_norm(&prep.q_general(&c, r));
    let mut step = 0.5;
    for _ in 0..iterations {
        let (_, u, v) = top_singular(&prep.q_general(&c, r));
        let mut g = CMatrix::zeros(c.rows(), c.cols());
        for (a, s, x, k) in &prep.blocks {
            let ck = kron_left(*k, &c.adjoint());
            let sr = s.kron_identity(r);
            let alpha = a.matmul(&u);
            let beta = x.matmul(&v);
            let w = split(&sr.matmul(&ck.matmul(&beta)), *k);
            let z = split(&sr.adjoint_mul(&ck.matmul(&alpha)), *k);
            let al = split(&alpha, *k);
            let be = split(&beta, *k);
            for p in 0..*k {
                g += &al[p].matmul(&w[p].adjoint());
                g += &be[p].matmul(&z[p].adjoint());
            }
        }
        let gn = op_norm(&g);
        if gn <= 1e-14 {
            break;
        }
        let mut improved = false;
        let mut eta = step / gn;
        for _ in 0..12 {
            let cand = clip_to_contraction(&(&c + &g.scale_real(eta)));
            let val = op_norm(&prep.q_general(&cand, r));
            if val > best * (1.0 + 1e-12) {
                best = val;
                c = cand;
                improved = true;
                step = (eta * gn * 2.0).min(4.0);
                break;
            }
            eta *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (best, c)
}

/// Random 0 ⪯ T ⪯ I: either a random projection or a squared contraction.
fn random_effect(rng: &mut Rng64, dim: usize) -> CMatrix {
    if below(rng, 2) == 0 {
        let rank = 1 + below(rng, dim);
        let u = random_unitary(rng, dim);
        let p = u.block(0, 0, dim, rank);
        p.matmul(&p.adjoint())
    } else {
        let c = random_contraction(rng, dim, dim);
        c.matmul(&c.adjoint())
    }
}

/// Lower bound on ‖u‖_s from ascent over admissible pairs; every value is
/// re-evaluated through `eval_pair`.
fn sym_lower(u: &TensorElement, budget: &Budget) -> Vec<(f64, AdmissiblePair)> {
    let mut found = Vec::new();
    let reduced = u.scalar_reduction();
    let max_m = budget.max_phi_mult.max(1);
    let max_r = budget.max_psi_mult.max(1);
    let state = (u.s.k() > 1 || u.s.h() > 1).then(|| CMatrix::basis_vector(u.s.k(), 0));
    if let Some(red) = &reduced {
        let preps: Vec<Prepared> = (1..=max_m).map(|m| Prepared::new(red, m)).collect();
        let runs: Vec<Option<(f64, AdmissiblePair)>> = (0..budget.restarts.max(1))
            .into_par_iter()
            .map(|i| {
                let m = 1 + i % max_m;
                let prep = &preps[m - 1];
                let dim = prep.ke * m;
                let mut rng = seeded(budget.seed, i as u64);
                let t0 = if i < max_m { CMatrix::identity(dim) } else { random_effect(&mut rng, dim) };
                let (_, t) = ascend_scalar(prep, t0, budget.iterations);
                let pair = AdmissiblePair::from_contraction(&u.e, &u.s, m, &psd_sqrt(&t), dim, state.as_ref()).ok()?;
                let val = op_norm(&eval_pair(&pair, u).ok()?);
                Some((val, pair))
            })
            .collect();
        found.extend(runs.into_iter().flatten());
    } else {
        let d = u.s.k();
        let preps: Vec<Prepared> = (1..=max_m).map(|m| Prepared::new(u, m)).collect();
        let runs: Vec<Option<(f64, AdmissiblePair)>> = (0..budget.restarts.max(1))
            .into_par_iter()
            .map(|i| {
                let m = 1 + i % max_m;
                let r = 1 + (i / max_m) % max_r;
                let prep = &preps[m - 1];
                let (rows, cols) = (prep.ke * m, d * r);
                let mut rng = seeded(budget.seed, i as u64);
                let c0 = if i == 0 && rows == cols {
                    CMatrix::identity(rows)
                } else {
                    random_contraction(&mut rng, rows, cols)
                };
                let (_, c) = ascend_general(prep, c0, r, budget.iterations);
                let pair = AdmissiblePair::from_contraction(&u.e, &u.s, m, &c, r, None).ok()?;
                let val = op_norm(&eval_pair(&pair, u).ok()?);
                Some((val, pair))
            })
            .collect();
        found.extend(runs.into_iter().flatten());
    }
    if let Ok(pair) = AdmissiblePair::identity(u.e.clone(), u.s.clone()) {
        if let Ok(v) = eval_pair(&pair, u) {
            found.push((op_norm(&v), pair));
        }
    }
    if let Some(pair) = elementary_polarised(u) {
        if let Ok(v) = eval_pair(&pair, u) {
            found.push((op_norm(&v), pair));
        }
    }
    found
}

/// The certified upper end of `sym_norm`.
pub(crate) fn sym_upper(u: &TensorElement) -> (f64, UpperWitness) {
    let (mut upper, fact) = haagerup_upper(u);
    let mut upper_witness = UpperWitness::Factorization(Box::new(fact));
    if let Some(red) = u.scalar_reduction() {
        let (h_red, f_red) = haagerup_upper(&red);
        let mult = red.mult().map(|m| op_norm(&m)).unwrap_or(f64::INFINITY);
        let formula = (mult + h_red) / 2.0;
        if h_red < upper && red.s.dim() == u.s.dim() {
            upper = h_red;
            upper_witness = UpperWitness::Factorization(Box::new(f_red));
        }
        if formula < upper {
            upper = formula;
            upper_witness = UpperWitness::Formula {
                description: "(‖mult(u)‖ + Haagerup factorization)/2 over scalar middles".into(),
                terms: vec![mult, h_red],
            };
        }
    }
    (upper, upper_witness)
}

/// Certified interval for ‖u‖_s: ascent below, Haagerup factorizations and,
/// over S = ℂ, (‖mult(u)‖ + ‖u‖_h)/2 above.
pub fn sym_norm(u: &TensorElement, budget: &Budget) -> NormInterval {
    if u.is_zero() {
        return NormInterval::exact_zero();
    }
    let (upper, upper_witness) = sym_upper(u);
    let found = sym_lower(u, budget);
    let best = found.into_iter().max_by(|a, b| a.0.total_cmp(&b.0));
    let (lower, lower_witness) = match best {
        Some((v, p)) => (v, Some(LowerWitness::Pair(Box::new(p)))),
        None => (0.0, None),
    };
    NormInterval { lower, upper, upper_certified: true, lower_witness, upper_witness: Some(upper_witness) }
}

/// Best factorization found among stacked, canonical and rank-revealing
/// candidates.
pub fn haagerup_upper(u: &TensorElement) -> (f64, Factorization) {
    if u.is_zero() {
        let e = CMatrix::zeros(0, 0);
        return (0.0, Factorization { n: u.n, y: e.clone(), s: e.clone(), x: e, value: 0.0 });
    }
    let mut cands = Vec::new();
    if let Some(f) = stacked_factorization(u) {
        cands.push(f);
    }
    let ortho = orthonormal_mixing(&u.e);
    for basis_change in [None, ortho.as_ref()] {
        cands.push(canonical_factorization(u, basis_change));
        if u.s.h() == 1 && u.s.k() == 1 {
            if let Some(f) = rank_revealing(u, basis_change) {
                cands.push(f);
            }
        }
    }
    if let Some(red) = u.scalar_reduction().filter(|_| u.s.k() > 1 || u.s.h() > 1) {
        let (_, f) = haagerup_upper(&red);
        if f.y.rows() > 0 {
            if let Some(unit) = u.s.unit_matrix() {
                cands.push(Factorization::new(u.n, f.y, f.s.kron(&unit), f.x));
            }
        }
    }
    let scale = 1e-8 * (1.0 + u.coeff_norm());
    let best = cands
        .into_iter()
        .filter(|f| f.residual(u).map(|r| r <= scale).unwrap_or(false))
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("the canonical factorization always reproduces u");
    (best.value, best)
}

/// Stored blocks stacked, each rescaled so its three factors share one size.
fn stacked_factorization(u: &TensorElement) -> Option<Factorization> {
    let (mut ys, mut ss, mut xs) = (Vec::new(), Vec::new(), Vec::new());
    for b in &u.blocks {
        let (ny, ns, nx) = (op_norm(b.y.concrete()), op_norm(b.s.concrete()), op_norm(b.x.concrete()));
        if ny == 0.0 || ns == 0.0 || nx == 0.0 {
            continue;
        }
        let tau = (ny * ns * nx).sqrt();
        ys.push(b.y.concrete().scale_real(tau / ny));
        ss.push(b.s.concrete().scale_real(1.0 / ns));
        xs.push(b.x.concrete().scale_real(tau / nx));
    }
    if ys.is_empty() {
        return None;
    }
    Some(Factorization::new(u.n, CMatrix::vstack(&ys).ok()?, CMatrix::direct_sum(&ss), CMatrix::vstack(&xs).ok()?))
}

/// W with columns mixing the basis of E into a Hilbert-Schmidt orthonormal one.
fn orthonormal_mixing(e: &ConcreteOpSpace) -> Option<CMatrix> {
    let de = e.dim();
    let gram = CMatrix::from_fn(de, de, |a, c| e.basis()[c].hs_inner(&e.basis()[a]));
    let eig = herm_eig_of_part(&gram);
    if eig.min() <= 1e-12 * eig.max() {
        return None;
    }
    Some(eig.apply(|l| 1.0 / l.sqrt()))
}

/// Coefficients rewritten in the basis o_α = Σ_a W_{aα} b_a.
fn coeffs_in_basis(u: &TensorElement, w: &CMatrix) -> (Vec<CMatrix>, Vec<C64>) {
    let (de, ds, n) = (u.e.dim(), u.s.dim(), u.n);
    let winv = crate::matcore::pinv(w);
    let basis: Vec<CMatrix> = (0..de)
        .map(|al| (0..de).fold(CMatrix::zeros(u.e.k(), u.e.h()), |acc, a| acc + u.e.basis()[a].scale(w[(a, al)])))
        .collect();
    let mut out = vec![ZERO; u.coeffs.len()];
    for ij in 0..n * n {
        for b in 0..ds {
            for al in 0..de {
                for ga in 0..de {
                    let mut acc = ZERO;
                    for a in 0..de {
                        let wa = winv[(al, a)].conj();
                        if wa == ZERO {
                            continue;
                        }
                        for c in 0..de {
                            acc += wa * u.coeffs[((ij * de + a) * ds + b) * de + c] * winv[(ga, c)];
                        }
                    }
                    out[((ij * de + al) * ds + b) * de + ga] = acc;
                }
            }
        }
    }
    (basis, out)
}

fn canonical_factorization(u: &TensorElement, mixing: Option<&CMatrix>) -> Factorization {
    let (y, s, x) = match mixing {
        None => canonical_matrices(&u.e, &u.s, u.n, &u.coeffs, u.e.basis()),
        Some(w) => {
            let (basis, coeffs) = coeffs_in_basis(u, w);
            canonical_matrices(&u.e, &u.s, u.n, &coeffs, &basis)
        }
    };
    Factorization::new(u.n, y, s, x)
}

/// Over S = ℂ: U = P*Q from the SVD of the ((a,i),(c,j)) coefficient matrix,
/// giving u = y*⊙I⊙x with y_{ρ,i} = Σ_a P_{ρ,(a,i)} b_a.
fn rank_revealing(u: &TensorElement, mixing: Option<&CMatrix>) -> Option<Factorization> {
    let (basis, coeffs) = match mixing {
        None => (u.e.basis().to_vec(), u.coeffs.clone()),
        Some(w) => coeffs_in_basis(u, w),
    };
    let (de, n, ke, h) = (u.e.dim(), u.n, u.e.k(), u.e.h());
    let big = CMatrix::from_fn(de * n, de * n, |ai, cj| {
        let (a, i) = (ai / n, ai % n);
        let (c, j) = (cj / n, cj % n);
        coeffs[((i * n + j) * de + a) * de + c]
    });
    let d = svd(&big);
    let rank = d.rank();
    if rank == 0 {
        return None;
    }
    let mut y = CMatrix::zeros(rank * ke, n * h);
    let mut x = CMatrix::zeros(rank * ke, n * h);
    for rho in 0..rank {
        let sq = d.s[rho].sqrt();
        for i in 0..n {
            let mut yb = CMatrix::zeros(ke, h);
            let mut xb = CMatrix::zeros(ke, h);
            for a in 0..de {
                // P = D^{1/2} W*, Q = D^{1/2} Z*.
                let p = d.u[(a * n + i, rho)].conj() * sq;
                let q = d.v[(a * n + i, rho)].conj() * sq;
                yb += &basis[a].scale(p);
                xb += &basis[a].scale(q);
            }
            y.set_block(rho * ke, i * h, &yb);
            x.set_block(rho * ke, i * h, &xb);
        }
    }
    Some(Factorization::new(n, y, CMatrix::identity(rank), x))
}

/// Evaluates ‖Σ (aᵢ*⊗I_k) T (bᵢ⊗I_k)‖.
fn plus_phi(pairs: &[(CMatrix, CMatrix)], k: usize, t: &CMatrix) -> CMatrix {
    let mut acc = CMatrix::zeros(t.rows(), t.cols());
    for (a, b) in pairs {
        acc += &a.kron_identity(k).adjoint_mul(&t.matmul(&b.kron_identity(k)));
    }
    acc
}

fn plus_ascent(pairs: &[(CMatrix, CMatrix)], k: usize, t0: CMatrix, iterations: usize) -> (f64, CMatrix) {
    let mut t = t0;
    let mut best = op_norm(&plus_phi(pairs, k, &t));
    for _ in 0..iterations {
        let (_, eta, xi) = top_singular(&plus_phi(pairs, k, &t));
        let dim = t.rows();
        let mut m = CMatrix::zeros(dim, dim);
        for (a, b) in pairs {
            let bx = b.kron_identity(k).matmul(&xi);
            let ae = a.kron_identity(k).matmul(&eta);
            m += &bx.matmul(&ae.adjoint());
        }
        let next = psd_linear_max(&m).projection;
        let val = op_norm(&plus_phi(pairs, k, &next));
        if val <= best * (1.0 + 1e-13) + 1e-15 {
            break;
        }
        best = val;
        t = next;
    }
    (best, t)
}

/// ‖Φ‖₊ at truncation k: sup over 0 ⪯ T ⪯ I on ℂ^{d·k} of ‖Σ (aᵢ*⊗I)T(bᵢ⊗I)‖.
pub fn plus_norm(pairs: &[(CMatrix, CMatrix)], k: usize, budget: &Budget) -> Result<NormInterval> {
    plus_norm_profile(pairs, k, budget)?.pop().ok_or_else(|| Error::BadRange("truncation must be ≥ 1".into()))
}

/// Intervals for truncations 1..=k; each level is seeded with the previous
/// optimum, so the lower ends never decrease.
pub fn plus_norm_profile(pairs: &[(CMatrix, CMatrix)], k: usize, budget: &Budget) -> Result<Vec<NormInterval>> {
    if k == 0 {
        return Err(Error::BadRange("truncation must be ≥ 1".into()));
    }
    let d = pairs.first().map(|p| p.0.rows()).ok_or(Error::EmptySupport)?;
    if pairs.iter().any(|(a, b)| a.shape() != (d, d) || b.shape() != (d, d)) {
        return Err(Error::ShapeMismatch("representation pairs must be d×d".into()));
    }
    let upper = plus_upper(pairs)?;
    let mut out: Vec<NormInterval> = Vec::with_capacity(k);
    let mut prev: Option<CMatrix> = None;
    for level in 1..=k {
        let dim = d * level;
        let seed_t = prev.as_ref().map(|t| {
            let j = CMatrix::identity(level).block(0, 0, level, level - 1);
            let emb = CMatrix::identity(d).kron(&j);
            emb.matmul(t).matmul(&emb.adjoint())
        });
        let runs: Vec<(f64, CMatrix)> = (0..budget.restarts.max(2))
            .into_par_iter()
            .map(|i| {
                let mut rng = seeded(budget.seed, (level * 1_000_003 + i) as u64);
                let t0 = match (i, &seed_t) {
                    (0, _) => CMatrix::identity(dim),
                    (1, Some(t)) => t.clone(),
                    _ => random_effect(&mut rng, dim),
                };
                plus_ascent(pairs, level, t0, budget.iterations)
            })
            .collect();
        let (_, t) = runs.into_iter().max_by(|a, b| a.0.total_cmp(&b.0)).expect("restarts");
        let phi_t = plus_phi(pairs, level, &t);
        let (val, eta, xi) = top_singular(&phi_t);
        let lower = eta.adjoint_mul(&phi_t.matmul(&xi))[(0, 0)].norm().min(val);
        prev = Some(t.clone());
        out.push(NormInterval {
            lower,
            upper: upper.0,
            upper_certified: true,
            lower_witness: Some(LowerWitness::PlusVectors { k: level, t, xi, eta }),
            upper_witness: Some(upper.1.clone()),
        });
    }
    Ok(out)
}

/// (‖Σ aᵢ*bᵢ‖ + h)/2 with h a Haagerup factorization value of Σ aᵢ*⊗bᵢ.
fn plus_upper(pairs: &[(CMatrix, CMatrix)]) -> Result<(f64, UpperWitness)> {
    let d = pairs[0].0.rows();
    let e = Arc::new(ConcreteOpSpace::full(d));
    let s = Arc::new(ConcreteOpSpace::scalars());
    let blocks = pairs.iter().map(|(a, b)| (a.clone(), CMatrix::identity(1), b.clone())).collect();
    let u = TensorElement::from_blocks(e, s, 1, blocks)?;
    let mult = op_norm(&u.mult().expect("scalar middle"));
    let (h, _) = haagerup_upper(&u);
    Ok(((mult + h) / 2.0, UpperWitness::Formula { description: "(‖Σ aᵢ*bᵢ‖ + Haagerup factorization)/2".into(), terms: vec![mult, h] }))
}

/// f(a) = η* a ξ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VectorFunctional {
    pub xi: CMatrix,
    pub eta: CMatrix,
}

impl VectorFunctional {
    pub fn new(xi: CMatrix, eta: CMatrix) -> Self {
        VectorFunctional { xi, eta }
    }

    pub fn eval(&self, a: &CMatrix) -> C64 {
        self.eta.adjoint_mul(&a.matmul(&self.xi))[(0, 0)]
    }

    pub fn norm(&self) -> f64 {
        self.xi.frobenius_norm() * self.eta.frobenius_norm()
    }
}

/// Unit vector functional vanishing on y and as large as possible on x.
fn annihilating_functional(x: &CMatrix, y: &CMatrix) -> (VectorFunctional, f64) {
    let (k, h) = x.shape();
    let ry = range_basis(y);
    let left = &CMatrix::identity(k) - &ry.matmul(&ry.adjoint());
    let (s1, eta1, xi1) = top_singular(&left.matmul(x));
    let cy = range_basis(&y.adjoint());
    let right = &CMatrix::identity(h) - &cy.matmul(&cy.adjoint());
    let (s2, eta2, xi2) = top_singular(&x.matmul(&right));
    let (f, s) = if s1 >= s2 { (VectorFunctional::new(xi1, eta1), s1) } else { (VectorFunctional::new(xi2, eta2), s2) };
    // Rotate the phase so that f(x) is real and positive.
    let fx = f.eval(x);
    let f = if fx.norm() > 0.0 { VectorFunctional::new(f.xi.scale(fx.conj() / fx.norm()), f.eta) } else { f };
    (f, s)
}

/// Contractive f, g with f(y) = g(x) = 0 and f(x), g(y) ≥ 1 − tol.
pub fn find_disjoint_functionals(x: &CMatrix, y: &CMatrix, tol: f64) -> Result<(VectorFunctional, VectorFunctional)> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch("targets must share a shape".into()));
    }
    let (f, sf) = annihilating_functional(x, y);
    let (g, sg) = annihilating_functional(y, x);
    if sf < 1.0 - tol || sg < 1.0 - tol {
        return Err(Error::WitnessUnavailable(format!("best separated values {sf:.3e}, {sg:.3e}")));
    }
    Ok((f, g))
}

fn polarised_pair(
    e: &Arc<ConcreteOpSpace>,
    s: &Arc<ConcreteOpSpace>,
    f: &VectorFunctional,
    g: &VectorFunctional,
    m: usize,
    state: &CMatrix,
) -> Result<AdmissiblePair> {
    let (k, h) = (e.k(), e.h());
    let root = std::f64::consts::FRAC_1_SQRT_2;
    let phase = I.powu(m as u32).conj();
    let mut z1 = CMatrix::zeros(2 * h, 1);
    let mut z2 = CMatrix::zeros(2 * k, 1);
    for r in 0..h {
        z1[(2 * r, 0)] = f.xi[(r, 0)] * root;
        z1[(2 * r + 1, 0)] = g.xi[(r, 0)] * root;
    }
    for r in 0..k {
        z2[(2 * r, 0)] = f.eta[(r, 0)] * root;
        z2[(2 * r + 1, 0)] = g.eta[(r, 0)] * phase * root;
    }
    let phi = WittstockMap::new(e.clone(), 2, z1, z2)?;
    let psi = StinespringUcp::vector_state(s.clone(), 1, state.clone())?;
    AdmissiblePair::new(phi, psi)
}

/// φ = (f + iᵐ g)/2 for the best m, paired with a vector state on S.
pub fn polarised_witness(
    e: &Arc<ConcreteOpSpace>,
    s: &Arc<ConcreteOpSpace>,
    f: &VectorFunctional,
    g: &VectorFunctional,
    x: &CMatrix,
    y: &CMatrix,
) -> Result<AdmissiblePair> {
    for (name, func) in [("f", f), ("g", g)] {
        if func.norm() > 1.0 + 1e-12 {
            return Err(Error::Precondition(format!("{name} has norm {} > 1", func.norm())));
        }
    }
    let (fx, fy, gx, gy) = (f.eval(x), f.eval(y), g.eval(x), g.eval(y));
    let best_m = (0..4)
        .max_by(|&a, &b| {
            let v = |m: u32| ((fy + I.powu(m) * gy).conj() * (fx + I.powu(m) * gx)).norm();
            v(a).total_cmp(&v(b))
        })
        .expect("four phases");
    polarised_pair(e, s, f, g, best_m as usize, &CMatrix::basis_vector(s.k(), 0))
}

/// Polarised pair for a single elementary block, with the state chosen to
/// keep |ω(s)| large.
fn elementary_polarised(u: &TensorElement) -> Option<AdmissiblePair> {
    if u.n != 1 || u.blocks.len() != 1 || u.blocks[0].level() != 1 {
        return None;
    }
    let b = &u.blocks[0];
    let (y, x, mid) = (b.y.concrete(), b.x.concrete(), b.s.concrete());
    let (ny, nx) = (op_norm(y), op_norm(x));
    if ny == 0.0 || nx == 0.0 {
        return None;
    }
    let (f, _) = annihilating_functional(&x.scale_real(1.0 / nx), &y.scale_real(1.0 / ny));
    let (g, _) = annihilating_functional(&y.scale_real(1.0 / ny), &x.scale_real(1.0 / nx));
    let mut state = CMatrix::basis_vector(u.s.k(), 0);
    let mut best = state.adjoint_mul(&mid.matmul(&state))[(0, 0)].norm();
    for step in 0..8 {
        let ph = C64::from_polar(1.0, std::f64::consts::PI * step as f64 / 4.0);
        let eig = herm_eig_of_part(&mid.scale(ph));
        let v = eig.vectors.col(eig.values.len() - 1);
        let val = v.adjoint_mul(&mid.matmul(&v))[(0, 0)].norm();
        if val > best {
            best = val;
            state = v;
        }
    }
    (0..4)
        .filter_map(|m| polarised_pair(&u.e, &u.s, &f, &g, m, &state).ok())
        .map(|p| (eval_pair(&p, u).map(|v| op_norm(&v)).unwrap_or(0.0), p))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p)| p)
}

fn bottom(q: &CMatrix) -> (f64, CMatrix) {
    let eig = herm_eig_of_part(q);
    (eig.min(), eig.vectors.col(0))
}

/// Descent on λmin over 0 ⪯ T ⪯ I: T jumps to the negative spectral
/// projection of the linearisation at the bottom eigenvector.
fn descend_scalar(prep: &Prepared, t0: CMatrix, iterations: usize) -> (f64, CMatrix) {
    let mut t = t0;
    let (mut best, _) = bottom(&prep.q_scalar(&t));
    for _ in 0..iterations {
        let (_, v) = bottom(&prep.q_scalar(&t));
        let dim = t.rows();
        let mut m = CMatrix::zeros(dim, dim);
        for (a, s, x, k) in &prep.blocks {
            let al = split(&a.matmul(&v), *k);
            let be = split(&x.matmul(&v), *k);
            for p in 0..*k {
                for q in 0..*k {
                    let c = s[(p, q)];
                    if c != ZERO {
                        m += &be[q].matmul(&al[p].adjoint()).scale(c);
                    }
                }
            }
        }
        let next = psd_linear_max(&m.scale_real(-1.0)).projection;
        let (val, _) = bottom(&prep.q_scalar(&next));
        if val >= best - 1e-14 * best.abs().max(1.0) {
            break;
        }
        best = val;
        t = next;
    }
    (best, t)
}

/// Projected gradient descent on λmin over contractions C.
fn descend_general(prep: &Prepared, c0: CMatrix, r: usize, iterations: usize) -> (f64, CMatrix) {
    let mut c = c0;
    let (mut best, _) = bottom(&prep.q_general(&c, r));
    let mut step = 0.5;
    for _ in 0..iterations {
        let (_, v) = bottom(&prep.q_general(&c, r));
        let mut g = CMatrix::zeros(c.rows(), c.cols());
        for (a, s, x, k) in &prep.blocks {
            let ck = kron_left(*k, &c.adjoint());
            let sr = s.kron_identity(r);
            let alpha = a.matmul(&v);
            let beta = x.matmul(&v);
            let w = split(&sr.matmul(&ck.matmul(&beta)), *k);
            let z = split(&sr.adjoint_mul(&ck.matmul(&alpha)), *k);
            let al = split(&alpha, *k);
            let be = split(&beta, *k);
            for p in 0..*k {
                g += &al[p].matmul(&w[p].adjoint());
                g += &be[p].matmul(&z[p].adjoint());
            }
        }
        let gn = op_norm(&g);
        if gn <= 1e-14 {
            break;
        }
        let mut improved = false;
        let mut eta = step / gn;
        for _ in 0..12 {
            let cand = clip_to_contraction(&(&c - &g.scale_real(eta)));
            let (val, _) = bottom(&prep.q_general(&cand, r));
            if val < best - 1e-12 * best.abs().max(1e-3) {
                best = val;
                c = cand;
                improved = true;
                step = (eta * gn * 2.0).min(4.0);
                break;
            }
            eta *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (best, c)
}

/// Admissible pairs driving λmin(eval) of a hermitian element down. Every
/// returned eigenpair is recomputed from `eval_pair`.
pub(crate) fn min_eig_search(u: &TensorElement, budget: &Budget) -> Vec<(f64, AdmissiblePair, CMatrix)> {
    let max_m = budget.max_phi_mult.max(1);
    let max_r = budget.max_psi_mult.max(1);
    let state = (u.s.k() > 1 || u.s.h() > 1).then(|| CMatrix::basis_vector(u.s.k(), 0));
    let mut pairs: Vec<AdmissiblePair> = Vec::new();
    if let Some(red) = u.scalar_reduction() {
        let preps: Vec<Prepared> = (1..=max_m).map(|m| Prepared::new(&red, m)).collect();
        let runs: Vec<Option<AdmissiblePair>> = (0..budget.restarts.max(1))
            .into_par_iter()
            .map(|i| {
                let m = 1 + i % max_m;
                let prep = &preps[m - 1];
                let dim = prep.ke * m;
                let mut rng = seeded(budget.seed ^ 0x5eed, i as u64);
                let t0 = if i < max_m { CMatrix::identity(dim) } else { random_effect(&mut rng, dim) };
                let (_, t) = descend_scalar(prep, t0, budget.iterations);
                AdmissiblePair::from_contraction(&u.e, &u.s, m, &psd_sqrt(&t), dim, state.as_ref()).ok()
            })
            .collect();
        pairs.extend(runs.into_iter().flatten());
    } else {
        let d = u.s.k();
        let preps: Vec<Prepared> = (1..=max_m).map(|m| Prepared::new(u, m)).collect();
        let runs: Vec<Option<AdmissiblePair>> = (0..budget.restarts.max(1))
            .into_par_iter()
            .map(|i| {
                let m = 1 + i % max_m;
                let r = 1 + (i / max_m) % max_r;
                let prep = &preps[m - 1];
                let (rows, cols) = (prep.ke * m, d * r);
                let mut rng = seeded(budget.seed ^ 0x5eed, i as u64);
                let c0 = if i == 0 && rows == cols {
                    CMatrix::identity(rows)
                } else {
                    random_contraction(&mut rng, rows, cols)
                };
                let (_, c) = descend_general(prep, c0, r, budget.iterations);
                AdmissiblePair::from_contraction(&u.e, &u.s, m, &c, r, None).ok()
            })
            .collect();
        pairs.extend(runs.into_iter().flatten());
    }
    if let Ok(pair) = AdmissiblePair::identity(u.e.clone(), u.s.clone()) {
        pairs.push(pair);
    }
    pairs
        .into_iter()
        .filter_map(|pair| {
            let val = eval_pair(&pair, u).ok()?;
            let (lam, v) = bottom(&val);
            Some((lam, pair, v))
        })
        .collect()
}

/// Random admissible pair with multiplicities (m, r) and K' = out_dim.
pub fn sample_admissible_pair(
    e: &Arc<ConcreteOpSpace>,
    s: &Arc<ConcreteOpSpace>,
    m: usize,
    r: usize,
    out_dim: usize,
    rng: &mut Rng64,
) -> Result<AdmissiblePair> {
    let z1 = random_contraction(rng, e.h() * m, e.h() * m);
    let z2 = random_contraction(rng, e.k() * m, out_dim);
    let phi = WittstockMap::new(e.clone(), m, z1, z2)?;
    let psi = StinespringUcp::random(s.clone(), r, out_dim, rng)?;
    AdmissiblePair::new(phi, psi)
}

/// Random element with `terms` level-k blocks; coefficients are Gaussian.
pub fn random_element(
    e: &Arc<ConcreteOpSpace>,
    s: &Arc<ConcreteOpSpace>,
    n: usize,
    terms: usize,
    rng: &mut Rng64,
) -> Result<TensorElement> {
    let mut blocks = Vec::with_capacity(terms);
    let gen = |space: &Arc<ConcreteOpSpace>, rows: usize, cols: usize, rng: &mut Rng64| {
        let mut out = CMatrix::zeros(rows * space.k(), cols * space.h());
        for i in 0..rows {
            for j in 0..cols {
                let c = random_gaussian(rng, space.dim(), 1);
                out.set_block(i * space.k(), j * space.h(), &space.combine(c.as_slice()));
            }
        }
        out
    };
    for _ in 0..terms {
        blocks.push((gen(e, 1, n, rng), gen(s, 1, 1, rng), gen(e, 1, n, rng)));
    }
    TensorElement::from_blocks(e.clone(), s.clone(), n, blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2() -> Arc<ConcreteOpSpace> {
        Arc::new(ConcreteOpSpace::full(2))
    }

    fn cplx() -> Arc<ConcreteOpSpace> {
        Arc::new(ConcreteOpSpace::scalars())
    }

    fn one() -> CMatrix {
        CMatrix::identity(1)
    }

    fn p() -> CMatrix {
        CMatrix::unit(2, 2, 0, 0)
    }

    fn u_t(t: f64) -> CMatrix {
        let c = (1.0 - t * t).sqrt();
        CMatrix::from_real(&[&[t, c], &[c, -t]])
    }

    fn q_t(t: f64) -> CMatrix {
        let u = u_t(t);
        u.matmul(&p()).matmul(&u.adjoint())
    }

    #[test]
    fn identity_pair_gives_product() {
        let mut rng = seeded(1, 0);
        let y = random_gaussian(&mut rng, 2, 2);
        let s = random_gaussian(&mut rng, 2, 2);
        let x = random_gaussian(&mut rng, 2, 2);
        let u = TensorElement::elementary(m2(), m2(), &y, &s, &x).unwrap();
        let pair = AdmissiblePair::identity(m2(), m2()).unwrap();
        let v = eval_pair(&pair, &u).unwrap();
        assert!(v.approx_eq(&y.adjoint().matmul(&s).matmul(&x), 1e-12));
        assert!(u.mult().unwrap().approx_eq(&v, 1e-12));
    }

    #[test]
    fn state_pair_factors_through_the_state() {
        let mut rng = seeded(2, 0);
        let e = m2();
        let s = m2();
        let u = random_element(&e, &s, 1, 3, &mut rng).unwrap();
        let z = random_contraction(&mut rng, 2, 2);
        let phi = WittstockMap::new(e.clone(), 1, CMatrix::identity(2), z.clone()).unwrap();
        let omega = CMatrix::basis_vector(2, 1);
        let psi = StinespringUcp::new(s.clone(), 2, omega.kron_identity(2)).unwrap();
        let pair = AdmissiblePair::new(phi.clone(), psi).unwrap();
        let got = eval_pair(&pair, &u).unwrap();
        let mut want = CMatrix::zeros(2, 2);
        for b in u.blocks() {
            let tau = b.s.concrete()[(1, 1)];
            want += &phi.apply(b.y.concrete()).adjoint_mul(&phi.apply(b.x.concrete())).scale(tau);
        }
        assert!(got.approx_eq(&want, 1e-12));
    }

    #[test]
    fn scalar_multipliers_pass_through() {
        let mut rng = seeded(3, 0);
        let (e, s) = (m2(), m2());
        let u = random_element(&e, &s, 2, 2, &mut rng).unwrap();
        let alpha = random_gaussian(&mut rng, 2, 2);
        let beta = random_gaussian(&mut rng, 2, 2);
        let pair = sample_admissible_pair(&e, &s, 2, 2, 3, &mut rng).unwrap();
        let lhs = eval_pair(&pair, &u.sandwich_scalars(&alpha, &beta).unwrap()).unwrap();
        let k = pair.phi.out_shape().1;
        let rhs = alpha.kron_identity(k).matmul(&eval_pair(&pair, &u).unwrap()).matmul(&beta.kron_identity(k));
        assert!(lhs.approx_eq(&rhs, 1e-10));
    }

    #[test]
    fn canonical_blocks_reproduce_coefficients_and_star_is_involutive() {
        let mut rng = seeded(4, 0);
        let u = random_element(&m2(), &m2(), 2, 3, &mut rng).unwrap();
        let v = TensorElement::from_coeffs(m2(), m2(), 2, u.coeffs().to_vec()).unwrap();
        assert!(u.approx_eq(&v, 1e-10));
        let back = u.star().unwrap().star().unwrap();
        assert!(u.approx_eq(&back, 1e-10));
        let json = serde_json::to_string(&u).unwrap();
        let w: TensorElement = serde_json::from_str(&json).unwrap();
        assert!(u.approx_eq(&w, 1e-12));
    }

    #[test]
    fn sym_norm_of_unit_and_projection_tensors() {
        let b = Budget::quick();
        let u = TensorElement::elementary(m2(), cplx(), &CMatrix::identity(2), &one(), &CMatrix::identity(2)).unwrap();
        let iv = sym_norm(&u, &b);
        assert!((iv.lower - 1.0).abs() < 1e-9 && (iv.upper - 1.0).abs() < 1e-9, "{iv:?}");
        let u = TensorElement::elementary(m2(), cplx(), &p(), &one(), &p()).unwrap();
        let iv = sym_norm(&u, &b);
        assert!((iv.lower - 1.0).abs() < 1e-9 && (iv.upper - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gamma_value_at_one_tenth() {
        let u = TensorElement::elementary(m2(), cplx(), &p(), &one(), &q_t(0.1)).unwrap();
        let iv = sym_norm(&u, &Budget::quick());
        assert!(iv.contains(0.55, 1e-9) && iv.width() <= 1e-3, "{iv:?}");
    }

    #[test]
    fn gamma_value_matches_rank_one_oracle() {
        // sup over unit ξ, η of (‖Bξ‖‖A*η‖ + |⟨Bξ, A*η⟩|)/2 with A = p, B = uₜp.
        let t = 0.3;
        let (a, b) = (p(), u_t(t).matmul(&p()));
        let mut rng = seeded(5, 0);
        let value = |xi: &CMatrix, eta: &CMatrix| {
            let bx = b.matmul(xi);
            let ae = a.adjoint().matmul(eta);
            (bx.frobenius_norm() * ae.frobenius_norm() + bx.hs_inner(&ae).norm()) / 2.0
        };
        // Random search followed by shrinking local perturbations.
        let mut xi = crate::rng::random_unit_vector(&mut rng, 2);
        let mut eta = crate::rng::random_unit_vector(&mut rng, 2);
        let mut oracle = value(&xi, &eta);
        for step in 0..20000 {
            let radius = if step < 2000 { 2.0 } else { 0.3 * (-(step as f64) / 3000.0).exp() };
            let nx = &xi + &random_gaussian(&mut rng, 2, 1).scale_real(radius);
            let ne = &eta + &random_gaussian(&mut rng, 2, 1).scale_real(radius);
            let (nx, ne) = (nx.scale_real(1.0 / nx.frobenius_norm()), ne.scale_real(1.0 / ne.frobenius_norm()));
            let v = value(&nx, &ne);
            if v > oracle {
                oracle = v;
                xi = nx;
                eta = ne;
            }
        }
        let iv = plus_norm(&[(a, b)], 2, &Budget::quick()).unwrap();
        assert!((oracle - (1.0 + t) / 2.0).abs() < 1e-6, "{oracle}");
        assert!((iv.lower - (1.0 + t) / 2.0).abs() < 1e-9 && (iv.upper - (1.0 + t) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn plus_norm_examples() {
        let b = Budget::quick();
        let iv = plus_norm(&[(CMatrix::identity(2), CMatrix::identity(2))], 2, &b).unwrap();
        assert!((iv.lower - 1.0).abs() < 1e-12);
        let iv = plus_norm(&[(p(), p())], 2, &b).unwrap();
        assert!((iv.lower - 1.0).abs() < 1e-12);
        let prof = plus_norm_profile(&[(p(), u_t(0.1).matmul(&p()))], 4, &b).unwrap();
        for iv in &prof {
            assert!((iv.lower - 0.55).abs() < 1e-9, "{}", iv.lower);
        }
        assert!(plus_norm(&[(p(), p())], 0, &b).is_err());
    }

    #[test]
    fn haagerup_examples() {
        let u = TensorElement::elementary(m2(), cplx(), &p(), &one(), &q_t(0.4)).unwrap();
        assert!((haagerup_upper(&u).0 - 1.0).abs() < 1e-10);
        let z = TensorElement::from_coeffs(m2(), cplx(), 1, vec![ZERO; 16]).unwrap();
        assert_eq!(haagerup_upper(&z).0, 0.0);
        let mut rng = seeded(6, 0);
        let (y, s, x) = (random_gaussian(&mut rng, 2, 2), random_gaussian(&mut rng, 2, 2), random_gaussian(&mut rng, 2, 2));
        let u = TensorElement::elementary(m2(), m2(), &y, &s, &x).unwrap();
        let (h, f) = haagerup_upper(&u);
        assert!(h <= op_norm(&y) * op_norm(&s) * op_norm(&x) + 1e-10);
        assert!(f.residual(&u).unwrap() < 1e-8);
    }

    #[test]
    fn polarised_witness_quarter() {
        let (e, s) = (m2(), cplx());
        let x = CMatrix::unit(2, 2, 0, 0);
        let y = CMatrix::unit(2, 2, 1, 1);
        let (f, g) = find_disjoint_functionals(&x, &y, 1e-9).unwrap();
        let pair = polarised_witness(&e, &s, &f, &g, &x, &y).unwrap();
        let u = TensorElement::elementary(e.clone(), s.clone(), &y, &one(), &x).unwrap();
        let v = eval_pair(&pair, &u).unwrap();
        assert!((op_norm(&v) - 0.25).abs() < 1e-12);
        let pair = polarised_witness(&e, &s, &f, &f, &x, &x).unwrap();
        let u = TensorElement::elementary(e.clone(), s.clone(), &x, &one(), &x).unwrap();
        assert!((op_norm(&eval_pair(&pair, &u).unwrap()) - 1.0).abs() < 1e-12);
        let big = VectorFunctional::new(f.xi.scale_real(2.0), f.eta.clone());
        assert!(matches!(polarised_witness(&e, &s, &big, &g, &x, &y), Err(Error::Precondition(_))));
    }

    #[test]
    fn sampled_pairs_stay_below_upper() {
        let mut rng = seeded(7, 0);
        let (e, s) = (m2(), m2());
        let u = random_element(&e, &s, 1, 2, &mut rng).unwrap();
        let iv = sym_norm(&u, &Budget::quick());
        assert!(iv.is_consistent());
        for _ in 0..20 {
            let pair = sample_admissible_pair(&e, &s, 2, 2, 2, &mut rng).unwrap();
            assert!(op_norm(&eval_pair(&pair, &u).unwrap()) <= iv.upper + 1e-9);
        }
    }

    #[test]
    fn unit_only_middles_reduce_to_scalars() {
        let s = m2();
        let u = TensorElement::elementary(m2(), s, &p(), &CMatrix::identity(2), &q_t(0.1)).unwrap();
        let red = u.scalar_reduction().unwrap();
        assert_eq!(red.s_space().dim(), 1);
        let iv = sym_norm(&u, &Budget::quick());
        assert!(iv.contains(0.55, 1e-9) && iv.width() <= 1e-3, "{iv:?}");
    }
}
