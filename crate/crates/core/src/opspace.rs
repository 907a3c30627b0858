//! Concrete operator spaces `E ⊆ B(ℂʰ, ℂᵏ)` and their matrix levels.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{herm_eig_of_part, op_norm, pinv, CMatrix, C64, ONE, ZERO};

/// Residual below which a matrix counts as a member of a span.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpaceTags {
    /// Coefficients of the unit when the space is an operator system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<Vec<C64>>,
    #[serde(default)]
    pub is_subalgebra: bool,
    #[serde(default)]
    pub is_tro: bool,
}

/// A finite-dimensional subspace of k×h matrices given by a basis.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SpaceJson", into = "SpaceJson")]
pub struct ConcreteOpSpace {
    h: usize,
    k: usize,
    basis: Vec<CMatrix>,
    tags: SpaceTags,
    // Vectorised basis (k·h × dim) and its pseudo-inverse for projections.
    stacked: CMatrix,
    stacked_pinv: CMatrix,
}

#[derive(Serialize, Deserialize)]
struct SpaceJson {
    h: usize,
    k: usize,
    basis: Vec<CMatrix>,
    #[serde(default)]
    tags: SpaceTags,
}

impl TryFrom<SpaceJson> for ConcreteOpSpace {
    type Error = Error;
    fn try_from(j: SpaceJson) -> Result<Self> {
        Self::new(j.h, j.k, j.basis, j.tags)
    }
}

impl From<ConcreteOpSpace> for SpaceJson {
    fn from(s: ConcreteOpSpace) -> Self {
        SpaceJson { h: s.h, k: s.k, basis: s.basis, tags: s.tags }
    }
}

impl PartialEq for ConcreteOpSpace {
    fn eq(&self, other: &Self) -> bool {
        self.h == other.h && self.k == other.k && self.basis == other.basis && self.tags == other.tags
    }
}

impl ConcreteOpSpace {
    /// Validates independence and the operator-system tag.
    pub fn new(h: usize, k: usize, basis: Vec<CMatrix>, tags: SpaceTags) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::InvalidSpace("empty basis".into()));
        }
        if let Some(b) = basis.iter().find(|b| b.shape() != (k, h)) {
            return Err(Error::ShapeMismatch(format!("basis element {:?}, expected ({k}, {h})", b.shape())));
        }
        let cols: Vec<CMatrix> = basis.iter().map(|b| b.vectorize()).collect();
        let stacked = CMatrix::hstack(&cols)?;
        let gram = stacked.adjoint_mul(&stacked);
        let eig = herm_eig_of_part(&gram);
        if eig.min() <= 1e-10 * eig.max().max(1e-300) {
            return Err(Error::InvalidSpace("basis is linearly dependent".into()));
        }
        let stacked_pinv = pinv(&stacked);
        let space = ConcreteOpSpace { h, k, basis, tags, stacked, stacked_pinv };
        if let Some(unit) = &space.tags.unit {
            if h != k {
                return Err(Error::InvalidSpace("operator system must be square".into()));
            }
            if unit.len() != space.dim() {
                return Err(Error::InvalidSpace("unit coefficient length".into()));
            }
            let e = space.combine(unit);
            if (&e - &CMatrix::identity(k)).max_abs() > 1e-10 {
                return Err(Error::InvalidSpace("unit coefficients do not give the identity".into()));
            }
            if !space.is_adjoint_closed(1e-10) {
                return Err(Error::InvalidSpace("operator system must be adjoint closed".into()));
            }
        }
        Ok(space)
    }

    /// Span of arbitrary matrices; dependent generators are pruned.
    pub fn span(h: usize, k: usize, generators: &[CMatrix]) -> Result<Self> {
        let mut kept: Vec<CMatrix> = Vec::new();
        for g in generators {
            if g.shape() != (k, h) {
                return Err(Error::ShapeMismatch(format!("generator {:?}, expected ({k}, {h})", g.shape())));
            }
            if g.frobenius_norm() < 1e-12 {
                continue;
            }
            let mut trial = kept.clone();
            trial.push(g.clone());
            if ConcreteOpSpace::new(h, k, trial, SpaceTags::default()).is_ok() {
                kept.push(g.clone());
            }
        }
        if kept.is_empty() {
            return Err(Error::InvalidSpace("span of zero matrices".into()));
        }
        ConcreteOpSpace::new(h, k, kept, SpaceTags::default())
    }

    /// Row space Rₙ = span{E₁ⱼ} ⊆ M₁,ₙ.
    pub fn row(n: usize) -> Self {
        let basis = (0..n).map(|j| CMatrix::unit(1, n, 0, j)).collect();
        Self::new(n, 1, basis, SpaceTags { is_tro: true, ..Default::default() }).expect("row space")
    }

    /// Column space Cₙ = span{Eⱼ₁} ⊆ Mₙ,₁.
    pub fn column(n: usize) -> Self {
        let basis = (0..n).map(|j| CMatrix::unit(n, 1, j, 0)).collect();
        Self::new(1, n, basis, SpaceTags { is_tro: true, ..Default::default() }).expect("column space")
    }

    /// Diagonal algebra Dₙ ⊆ Mₙ.
    pub fn diagonal(n: usize) -> Self {
        let basis = (0..n).map(|j| CMatrix::unit(n, n, j, j)).collect();
        let tags = SpaceTags { unit: Some(vec![ONE; n]), is_subalgebra: true, is_tro: true };
        Self::new(n, n, basis, tags).expect("diagonal algebra")
    }

    /// Rectangular matrices Mₖ,ₙ, i.e. all of B(ℂⁿ, ℂᵏ).
    pub fn rect(k: usize, n: usize) -> Self {
        let mut basis = Vec::with_capacity(k * n);
        for i in 0..k {
            for j in 0..n {
                basis.push(CMatrix::unit(k, n, i, j));
            }
        }
        let tags = if k == n {
            SpaceTags { unit: Some(identity_coeffs(n)), is_subalgebra: true, is_tro: true }
        } else {
            SpaceTags { is_tro: true, ..Default::default() }
        };
        Self::new(n, k, basis, tags).expect("rectangular matrices")
    }

    /// Full matrix algebra Mₙ.
    pub fn full(n: usize) -> Self {
        Self::rect(n, n)
    }

    /// The scalars ℂ = M₁.
    pub fn scalars() -> Self {
        Self::full(1)
    }

    /// Direct sum of spaces placed block-diagonally.
    pub fn direct_sum(parts: &[ConcreteOpSpace]) -> Result<Self> {
        let h: usize = parts.iter().map(|p| p.h).sum();
        let k: usize = parts.iter().map(|p| p.k).sum();
        let mut basis = Vec::new();
        let (mut r0, mut c0) = (0, 0);
        for p in parts {
            for b in &p.basis {
                let mut m = CMatrix::zeros(k, h);
                m.set_block(r0, c0, b);
                basis.push(m);
            }
            r0 += p.k;
            c0 += p.h;
        }
        let mut space = Self::new(h, k, basis, SpaceTags::default())?;
        space.tags = space.detect_tags();
        Ok(space)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("space serialises")
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    /// Pseudo-inverse of the vectorised basis: row a maps vec(x) to the
    /// a-th coefficient of the projection of x.
    pub fn dual_frame(&self) -> &CMatrix {
        &self.stacked_pinv
    }

    pub fn tags(&self) -> &SpaceTags {
        &self.tags
    }

    pub fn is_system(&self) -> bool {
        self.tags.unit.is_some()
    }

    pub fn unit_coeffs(&self) -> Option<&[C64]> {
        self.tags.unit.as_deref()
    }

    /// True when the space is all of B(ℂʰ, ℂᵏ).
    pub fn is_full_ambient(&self) -> bool {
        self.dim() == self.h * self.k
    }

    /// Σ cᵢ bᵢ.
    pub fn combine(&self, coeffs: &[C64]) -> CMatrix {
        debug_assert_eq!(coeffs.len(), self.dim());
        let mut out = CMatrix::zeros(self.k, self.h);
        for (c, b) in coeffs.iter().zip(&self.basis) {
            if *c != ZERO {
                out += &b.scale(*c);
            }
        }
        out
    }

    /// Least-squares coefficients and the Frobenius residual.
    pub fn project_onto(&self, a: &CMatrix) -> Result<(Vec<C64>, f64)> {
        if a.shape() != (self.k, self.h) {
            return Err(Error::ShapeMismatch(format!("{:?} vs ambient ({}, {})", a.shape(), self.k, self.h)));
        }
        let c = self.stacked_pinv.matmul(&a.vectorize());
        let coeffs: Vec<C64> = c.as_slice().to_vec();
        let resid = (&self.stacked.matmul(&c) - &a.vectorize()).frobenius_norm();
        Ok((coeffs, resid))
    }

    pub fn contains(&self, a: &CMatrix) -> bool {
        self.project_onto(a).map(|(_, r)| r <= MEMBERSHIP_TOL * a.frobenius_norm().max(1.0)).unwrap_or(false)
    }

    /// E* with basis of adjoints and swapped ambient dimensions.
    pub fn adjoint_space(&self) -> Self {
        let basis = self.basis.iter().map(|b| b.adjoint()).collect();
        let tags = SpaceTags {
            unit: self.tags.unit.as_ref().map(|u| u.iter().map(|c| c.conj()).collect()),
            ..self.tags.clone()
        };
        Self::new(self.k, self.h, basis, tags).expect("adjoint of a valid space is valid")
    }

    pub fn is_adjoint_closed(&self, tol: f64) -> bool {
        self.h == self.k
            && self.basis.iter().all(|b| {
                let (_, r) = self.project_onto(&b.adjoint()).expect("square");
                r <= tol * b.frobenius_norm().max(1.0)
            })
    }

    /// x y* z ∈ E for all basis triples.
    pub fn is_ternary_closed(&self) -> bool {
        for x in &self.basis {
            for y in &self.basis {
                let xy = x.matmul(&y.adjoint());
                for z in &self.basis {
                    if !self.contains(&xy.matmul(z)) {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn is_multiplicatively_closed(&self) -> bool {
        self.h == self.k
            && self.basis.iter().all(|x| self.basis.iter().all(|y| self.contains(&x.matmul(y))))
    }

    /// Recomputes tags from the basis: unit if Iₖ lies in an adjoint-closed
    /// span, subalgebra and TRO flags by closure tests.
    pub fn detect_tags(&self) -> SpaceTags {
        let mut tags = SpaceTags { is_tro: self.is_ternary_closed(), ..Default::default() };
        if self.h == self.k {
            tags.is_subalgebra = self.is_multiplicatively_closed();
            if self.is_adjoint_closed(1e-10) {
                let (c, r) = self.project_onto(&CMatrix::identity(self.k)).expect("square");
                if r <= 1e-10 {
                    tags.unit = Some(c);
                }
            }
        }
        tags
    }

    pub fn with_detected_tags(mut self) -> Self {
        self.tags = self.detect_tags();
        self
    }

    pub fn unit_matrix(&self) -> Option<CMatrix> {
        self.tags.unit.as_ref().map(|u| self.combine(u))
    }
}

fn identity_coeffs(n: usize) -> Vec<C64> {
    let mut c = vec![ZERO; n * n];
    for i in 0..n {
        c[i * n + i] = ONE;
    }
    c
}

/// An element of Mₘ,ₙ(E), held both concretely and by coefficients.
#[derive(Clone, Debug)]
pub struct LevelElement {
    space: Arc<ConcreteOpSpace>,
    m: usize,
    n: usize,
    concrete: CMatrix,
    coeffs: Vec<Vec<C64>>,
}

impl LevelElement {
    /// Builds from an m×n grid of coefficient vectors (row-major).
    pub fn from_coeffs(space: Arc<ConcreteOpSpace>, m: usize, n: usize, coeffs: Vec<Vec<C64>>) -> Result<Self> {
        if coeffs.len() != m * n || coeffs.iter().any(|c| c.len() != space.dim()) {
            return Err(Error::ShapeMismatch("coefficient grid does not match level".into()));
        }
        let (k, h) = (space.k(), space.h());
        let mut concrete = CMatrix::zeros(m * k, n * h);
        for i in 0..m {
            for j in 0..n {
                concrete.set_block(i * k, j * h, &space.combine(&coeffs[i * n + j]));
            }
        }
        Ok(LevelElement { space, m, n, concrete, coeffs })
    }

    /// Builds from a concrete (m·k)×(n·h) matrix whose blocks lie in E.
    pub fn from_concrete(space: Arc<ConcreteOpSpace>, concrete: CMatrix) -> Result<Self> {
        let (k, h) = (space.k(), space.h());
        if concrete.rows() % k != 0 || concrete.cols() % h != 0 {
            return Err(Error::ShapeMismatch(format!("{:?} is not a block matrix over ({k}, {h})", concrete.shape())));
        }
        let (m, n) = (concrete.rows() / k, concrete.cols() / h);
        let mut coeffs = Vec::with_capacity(m * n);
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..n {
                let (c, r) = space.project_onto(&concrete.block(i * k, j * h, k, h))?;
                worst = worst.max(r);
                coeffs.push(c);
            }
        }
        if worst > MEMBERSHIP_TOL * concrete.max_abs().max(1.0) {
            return Err(Error::InconsistentElement(worst));
        }
        Ok(LevelElement { space, m, n, concrete, coeffs })
    }

    pub fn space(&self) -> &Arc<ConcreteOpSpace> {
        &self.space
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn concrete(&self) -> &CMatrix {
        &self.concrete
    }

    pub fn coeffs(&self) -> &[Vec<C64>] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize, j: usize) -> &[C64] {
        &self.coeffs[i * self.n + j]
    }

    /// Max deviation between the concrete and coefficient forms.
    pub fn consistency_residual(&self) -> f64 {
        let (k, h) = (self.space.k(), self.space.h());
        let mut worst: f64 = 0.0;
        for i in 0..self.m {
            for j in 0..self.n {
                let b = self.concrete.block(i * k, j * h, k, h);
                worst = worst.max((&b - &self.space.combine(self.coeff(i, j))).max_abs());
            }
        }
        worst
    }

    /// Adjoint element of Mₙ,ₘ(E*).
    pub fn adjoint(&self) -> LevelElement {
        let space = Arc::new(self.space.adjoint_space());
        let mut coeffs = Vec::with_capacity(self.m * self.n);
        for j in 0..self.n {
            for i in 0..self.m {
                coeffs.push(self.coeff(i, j).iter().map(|c| c.conj()).collect());
            }
        }
        LevelElement { space, m: self.n, n: self.m, concrete: self.concrete.adjoint(), coeffs }
    }
}

/// Operator norm of the concrete matrix at level (m, n).
pub fn level_norm(x: &LevelElement) -> Result<f64> {
    let r = x.consistency_residual();
    if r > 1e-10 * x.concrete.max_abs().max(1.0) {
        return Err(Error::InconsistentElement(r));
    }
    Ok(op_norm(&x.concrete))
}

/// Free-function form of [`ConcreteOpSpace::project_onto`].
pub fn project_onto(space: &ConcreteOpSpace, a: &CMatrix) -> Result<(Vec<C64>, f64)> {
    space.project_onto(a)
}

/// Free-function form of [`ConcreteOpSpace::adjoint_space`].
pub fn adjoint_space(space: &ConcreteOpSpace) -> ConcreteOpSpace {
    space.adjoint_space()
}
