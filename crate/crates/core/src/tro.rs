//! Ternary rings of operators, A-balanced symmetrisations and the collapse
//! of M*⊗ₛS⊗ₛM onto the concrete space [M*SM].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cert::{Budget, LowerWitness, NormInterval, UpperWitness};
use crate::cpmaps::{StinespringUcp, WittstockMap};
use crate::error::{Error, Result};
use crate::matcore::{herm_eig_of_part, min_eigenvalue, op_norm, psd_pinv_sqrt, range_basis, CMatrix};
use crate::opspace::{ConcreteOpSpace, MEMBERSHIP_TOL};
use crate::rng::{random_contraction, random_gaussian, seeded, Rng64};
use crate::symnorm::{eval_pair, haagerup_upper, sym_norm, sym_upper, AdmissiblePair, TensorElement};

const MODULE_TOL: f64 = 1e-9;
const BEAM_WIDTH: usize = 6;
const REWRITE_DEPTH: usize = 3;

/// A basis triple (i, j, l) with bᵢ bⱼ* b_l outside the span.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TripleWitness {
    pub indices: [usize; 3],
    pub product: CMatrix,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TroCheck {
    pub is_tro: bool,
    pub counterexample: Option<TripleWitness>,
}

/// Exhaustive closure check of m₁m₂*m₃ over basis triples.
pub fn is_tro(m: &ConcreteOpSpace) -> TroCheck {
    let basis = m.basis();
    for (i, b1) in basis.iter().enumerate() {
        for (j, b2) in basis.iter().enumerate() {
            let left = b1.matmul(&b2.adjoint());
            for (l, b3) in basis.iter().enumerate() {
                let product = left.matmul(b3);
                let (_, residual) = m.project_onto(&product).expect("shapes agree");
                if residual > MEMBERSHIP_TOL * product.frobenius_norm().max(1.0) {
                    return TroCheck {
                        is_tro: false,
                        counterexample: Some(TripleWitness { indices: [i, j, l], product, residual }),
                    };
                }
            }
        }
    }
    TroCheck { is_tro: true, counterexample: None }
}

fn products_span(h: usize, gens: Vec<CMatrix>) -> Result<ConcreteOpSpace> {
    Ok(ConcreteOpSpace::span(h, h, &gens)?.with_detected_tags())
}

/// A TRO M together with its linking algebras [MM*] and [M*M].
#[derive(Clone, Debug)]
pub struct TroSpace {
    m: Arc<ConcreteOpSpace>,
    left: Arc<ConcreteOpSpace>,
    right: Arc<ConcreteOpSpace>,
}

impl TroSpace {
    pub fn new(m: Arc<ConcreteOpSpace>) -> Result<Self> {
        let check = is_tro(&m);
        if let Some(w) = check.counterexample {
            return Err(Error::InvalidSpace(format!(
                "not a TRO: b{} b{}* b{} leaves the span (residual {:.3e})",
                w.indices[0], w.indices[1], w.indices[2], w.residual
            )));
        }
        let b = m.basis();
        let left = b.iter().flat_map(|x| b.iter().map(move |y| x.matmul(&y.adjoint()))).collect();
        let right = b.iter().flat_map(|x| b.iter().map(move |y| x.adjoint_mul(y))).collect();
        let left = Arc::new(products_span(m.k(), left)?);
        let right = Arc::new(products_span(m.h(), right)?);
        Ok(TroSpace { m, left, right })
    }

    pub fn space(&self) -> &Arc<ConcreteOpSpace> {
        &self.m
    }

    /// [MM*].
    pub fn left_algebra(&self) -> &Arc<ConcreteOpSpace> {
        &self.left
    }

    /// [M*M].
    pub fn right_algebra(&self) -> &Arc<ConcreteOpSpace> {
        &self.right
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModuleReport {
    /// Worst relative residual of a·x outside E.
    pub left_action: f64,
    /// Worst relative residual of a·s·a' outside S.
    pub sandwich: f64,
}

/// Unital algebra A acting on the left of E and on both sides of S.
#[derive(Clone, Debug)]
pub struct BalancedContext {
    a: Arc<ConcreteOpSpace>,
    e: Arc<ConcreteOpSpace>,
    s: Arc<ConcreteOpSpace>,
    report: ModuleReport,
}

fn relative_residual(space: &ConcreteOpSpace, x: &CMatrix) -> f64 {
    let (_, r) = space.project_onto(x).expect("shapes agree");
    r / x.frobenius_norm().max(1.0)
}

impl BalancedContext {
    pub fn new(a: Arc<ConcreteOpSpace>, e: Arc<ConcreteOpSpace>, s: Arc<ConcreteOpSpace>) -> Result<Self> {
        let k = e.k();
        if a.k() != k || a.h() != k || s.k() != k || s.h() != k {
            return Err(Error::InvalidContext("A and S must act on the codomain of E".into()));
        }
        if !a.is_multiplicatively_closed() || !a.is_adjoint_closed(MODULE_TOL) {
            return Err(Error::InvalidContext("A is not a *-subalgebra".into()));
        }
        if relative_residual(&a, &CMatrix::identity(k)) > MODULE_TOL {
            return Err(Error::InvalidContext("A does not contain the identity".into()));
        }
        if !s.is_system() {
            return Err(Error::InvalidContext("S is not an operator system".into()));
        }
        let mut left_action: f64 = 0.0;
        let mut sandwich: f64 = 0.0;
        for p in a.basis() {
            for x in e.basis() {
                left_action = left_action.max(relative_residual(&e, &p.matmul(x)));
            }
            for q in a.basis() {
                for t in s.basis() {
                    sandwich = sandwich.max(relative_residual(&s, &p.matmul(t).matmul(q)));
                }
            }
        }
        if left_action > MODULE_TOL || sandwich > MODULE_TOL {
            return Err(Error::InvalidContext(format!(
                "module residuals A·E {left_action:.3e}, A·S·A {sandwich:.3e}"
            )));
        }
        Ok(BalancedContext { a, e, s, report: ModuleReport { left_action, sandwich } })
    }

    /// A = [MM*] for a TRO M.
    pub fn for_tro(m: &TroSpace, s: Arc<ConcreteOpSpace>) -> Result<Self> {
        Self::new(m.left_algebra().clone(), m.space().clone(), s)
    }

    pub fn algebra(&self) -> &Arc<ConcreteOpSpace> {
        &self.a
    }

    pub fn e_space(&self) -> &Arc<ConcreteOpSpace> {
        &self.e
    }

    pub fn s_space(&self) -> &Arc<ConcreteOpSpace> {
        &self.s
    }

    pub fn report(&self) -> &ModuleReport {
        &self.report
    }

    /// Membership of a k×k block matrix in M_k(A).
    fn in_algebra(&self, b: &CMatrix) -> bool {
        in_level(&self.a, b)
    }
}

fn in_level(space: &ConcreteOpSpace, b: &CMatrix) -> bool {
    let (k, h) = (space.k(), space.h());
    if b.rows() % k != 0 || b.cols() % h != 0 {
        return false;
    }
    let scale = b.max_abs().max(1.0);
    (0..b.rows() / k).all(|i| {
        (0..b.cols() / h).all(|j| {
            let blk = b.block(i * k, j * h, k, h);
            space.project_onto(&blk).map(|(_, r)| r <= MEMBERSHIP_TOL * scale).unwrap_or(false)
        })
    })
}

/// φ(x) = (x⊗Iₘ)W and ψ(s) = s⊗Iₘ; ψ(s·a)φ(x) = ψ(s)φ(a·x) holds for
/// every W because both sides equal (s·a·x⊗Iₘ)W.
pub fn amplification_pair(ctx: &BalancedContext, m: usize, w: &CMatrix) -> Result<AdmissiblePair> {
    let k = ctx.e.k();
    let phi = WittstockMap::new(ctx.e.clone(), m, w.clone(), CMatrix::identity(k * m))?;
    let psi = StinespringUcp::new(ctx.s.clone(), m, CMatrix::identity(k * m))?;
    AdmissiblePair::new(phi, psi)
}

/// max ‖ψ(s·a)φ(x) − ψ(s)φ(a·x)‖ over basis triples.
pub fn a_admissibility_residual(ctx: &BalancedContext, pair: &AdmissiblePair) -> f64 {
    let mut worst: f64 = 0.0;
    for s in ctx.s.basis() {
        for a in ctx.a.basis() {
            let lhs_psi = pair.psi.apply(&s.matmul(a));
            let rhs_psi = pair.psi.apply(s);
            for x in ctx.e.basis() {
                let lhs = lhs_psi.matmul(&pair.phi.apply(x));
                let rhs = rhs_psi.matmul(&pair.phi.apply(&a.matmul(x)));
                worst = worst.max((&lhs - &rhs).max_abs());
            }
        }
    }
    worst
}

type Blocks = Vec<(CMatrix, CMatrix, CMatrix)>;

fn concrete_blocks(u: &TensorElement) -> Blocks {
    u.blocks()
        .iter()
        .map(|b| (b.y.concrete().clone(), b.s.concrete().clone(), b.x.concrete().clone()))
        .collect()
}

fn range_projection(y: &CMatrix) -> Option<CMatrix> {
    if y.max_abs() == 0.0 {
        return None;
    }
    let q = range_basis(y);
    (q.cols() > 0).then(|| q.matmul(&q.adjoint()))
}

#[derive(Clone)]
struct RewriteState {
    blocks: Blocks,
    moves: Vec<String>,
    value: f64,
}

fn state_value(ctx: &BalancedContext, n: usize, blocks: &Blocks) -> Option<f64> {
    let live: Blocks = blocks
        .iter()
        .filter(|(y, s, x)| y.max_abs() > 1e-14 && s.max_abs() > 1e-14 && x.max_abs() > 1e-14)
        .cloned()
        .collect();
    let u = TensorElement::from_blocks(ctx.e.clone(), ctx.s.clone(), n, live).ok()?;
    Some(haagerup_upper(&u).0)
}

fn close(a: &CMatrix, b: &CMatrix) -> bool {
    (a - b).max_abs() <= 1e-10 * a.max_abs().max(1.0)
}

/// Single balanced moves on block `i`.
fn neighbours(ctx: &BalancedContext, blocks: &Blocks, i: usize) -> Vec<(Blocks, String)> {
    let (y, s, x) = &blocks[i];
    let ka = ctx.a.k();
    let k = s.rows() / ka;
    let mut cands: Vec<(CMatrix, String)> = Vec::new();
    let eye_k = CMatrix::identity(k);
    if let Some(unit) = ctx.a.unit_matrix() {
        cands.push((eye_k.kron(&unit), "1".into()));
    }
    for (j, a) in ctx.a.basis().iter().enumerate() {
        cands.push((eye_k.kron(a), format!("a{j}")));
    }
    for (name, m) in [("P_y", y), ("P_x", x)] {
        if let Some(p) = range_projection(m).filter(|p| ctx.in_algebra(p)) {
            cands.push((p, name.into()));
        }
    }
    let mut out = Vec::new();
    let mut push = |y2: CMatrix, s2: CMatrix, x2: CMatrix, label: String| {
        if !in_level(&ctx.s, &s2) {
            return;
        }
        let mut next = blocks.clone();
        next[i] = (y2, s2, x2);
        out.push((next, label));
    };
    for (b, name) in &cands {
        // y*⊙s⊙x = (b*y)*⊙s⊙x = y*⊙(b·s)⊙x when b*y = y
        if close(&b.adjoint_mul(y), y) {
            push(y.clone(), b.matmul(s), x.clone(), format!("block {i}: s ← {name}·s"));
        }
        if close(&b.matmul(x), x) {
            push(y.clone(), s.matmul(b), x.clone(), format!("block {i}: s ← s·{name}"));
        }
    }
    if ctx.in_algebra(s) {
        if let Some(one) = ctx.s.unit_matrix() {
            let ones = eye_k.kron(&one);
            push(s.adjoint_mul(y), ones.clone(), x.clone(), format!("block {i}: y* ← y*·s, s ← 1"));
            push(y.clone(), ones, s.matmul(x), format!("block {i}: x ← s·x, s ← 1"));
        }
    }
    out
}

/// Beam search over balanced moves; returns the best state found.
fn rewrite_search(ctx: &BalancedContext, u: &TensorElement) -> RewriteState {
    let n = u.level();
    let start = concrete_blocks(u);
    let value = state_value(ctx, n, &start).unwrap_or(f64::INFINITY);
    let mut best = RewriteState { blocks: start.clone(), moves: vec![], value };
    let mut beam = vec![best.clone()];
    for _ in 0..REWRITE_DEPTH {
        let mut next: Vec<RewriteState> = Vec::new();
        for state in &beam {
            for i in 0..state.blocks.len() {
                for (blocks, label) in neighbours(ctx, &state.blocks, i) {
                    if let Some(value) = state_value(ctx, n, &blocks) {
                        let mut moves = state.moves.clone();
                        moves.push(label);
                        next.push(RewriteState { blocks, moves, value });
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_by(|a, b| a.value.total_cmp(&b.value));
        next.truncate(BEAM_WIDTH);
        if next[0].value < best.value {
            best = next[0].clone();
        }
        beam = next;
    }
    best
}

/// Column c ⊆ E with Σ cᵢ*cᵢ = I: the basis corrected by G^{-1/2}, where
/// G = Σ bᵢ*bᵢ. None when G is singular or the corrected column leaves E.
pub fn semi_unit_column(e: &ConcreteOpSpace) -> Option<Vec<CMatrix>> {
    let h = e.h();
    let mut g = CMatrix::zeros(h, h);
    for b in e.basis() {
        g += &b.adjoint_mul(b);
    }
    let eig = herm_eig_of_part(&g);
    if eig.min() <= 1e-10 * eig.max() {
        return None;
    }
    let corr = psd_pinv_sqrt(&g, 1e-12);
    let column: Vec<CMatrix> = e.basis().iter().map(|b| b.matmul(&corr)).collect();
    if !column.iter().all(|c| e.contains(c)) {
        return None;
    }
    let mut total = CMatrix::zeros(h, h);
    for c in &column {
        total += &c.adjoint_mul(c);
    }
    close(&total, &CMatrix::identity(h)).then_some(column)
}

/// Finite column x over M with Σ xᵢ*xᵢ = 1, when [M*M] is unital.
pub fn find_semi_unit(m: &TroSpace) -> Option<Vec<CMatrix>> {
    m.right_algebra().unit_matrix()?;
    semi_unit_column(m.space())
}

/// u ≡ (Iₙ⊗c)*⊙[(Iₙ⊗c)·mult(u)·(Iₙ⊗c)*]⊙(Iₙ⊗c), valid when every
/// product of a block entry with some cₗ* lies in A.
fn column_collapse(ctx: &BalancedContext, u: &TensorElement, column: &[CMatrix]) -> Option<(Blocks, f64)> {
    let n = u.level();
    let (k, h) = (ctx.e.k(), ctx.e.h());
    for b in u.blocks() {
        for m in [b.y.concrete(), b.x.concrete()] {
            for i in 0..m.rows() / k {
                for j in 0..n {
                    let entry = m.block(i * k, j * h, k, h);
                    if column.iter().any(|c| !ctx.in_algebra(&entry.matmul(&c.adjoint()))) {
                        return None;
                    }
                }
            }
        }
    }
    let mult = u.mult()?;
    let c = CMatrix::vstack(column).ok()?;
    let cn = CMatrix::identity(n).kron(&c);
    let q = cn.matmul(&mult).matmul(&cn.adjoint());
    if !in_level(&ctx.s, &q) {
        return None;
    }
    let blocks = vec![(cn.clone(), q, cn)];
    let value = state_value(ctx, n, &blocks)?;
    Some((blocks, value))
}

/// Interval for the A-balanced seminorm.
///
/// The lower end maximises over the amplification family (which is
/// A-admissible by construction) and, for A = ℂ·1, over all admissible
/// pairs. The upper end is the best Haagerup value over witnessed balanced
/// rewrites, capped by the certified unbalanced bound.
pub fn balanced_seminorm(u: &TensorElement, ctx: &BalancedContext, budget: &Budget) -> Result<NormInterval> {
    if **u.e_space() != *ctx.e || **u.s_space() != *ctx.s {
        return Err(Error::InvalidContext("element is built over different spaces".into()));
    }
    if u.is_zero() {
        return Ok(NormInterval::exact_zero());
    }
    let (mut lower, mut lower_witness) = (0.0, None);
    let consider = |pair: AdmissiblePair, lower: &mut f64, witness: &mut Option<LowerWitness>| -> Result<()> {
        if a_admissibility_residual(ctx, &pair) > 1e-10 {
            return Ok(());
        }
        let v = op_norm(&eval_pair(&pair, u)?);
        if v > *lower {
            *lower = v;
            *witness = Some(LowerWitness::Pair(Box::new(pair)));
        }
        Ok(())
    };
    let h = ctx.e.h();
    for m in 1..=budget.max_phi_mult.max(1) {
        let dim = h * m;
        consider(amplification_pair(ctx, m, &CMatrix::identity(dim))?, &mut lower, &mut lower_witness)?;
        let mut rng: Rng64 = seeded(budget.seed, 0xba1 + m as u64);
        for _ in 0..budget.restarts.min(8) {
            let w = random_contraction(&mut rng, dim, dim);
            consider(amplification_pair(ctx, m, &w)?, &mut lower, &mut lower_witness)?;
        }
    }
    if ctx.a.dim() == 1 {
        let unbalanced = sym_norm(u, budget);
        if unbalanced.lower > lower {
            lower = unbalanced.lower;
            lower_witness = unbalanced.lower_witness;
        }
    }

    let (mut upper, mut upper_witness) = sym_upper(u);
    let best = rewrite_search(ctx, u);
    if best.value < upper {
        upper = best.value;
        upper_witness = UpperWitness::Formula {
            description: format!("balanced rewrite [{}]", best.moves.join("; ")),
            terms: vec![best.value],
        };
    }
    if let Some(column) = semi_unit_column(&ctx.e) {
        if let Some((_, value)) = column_collapse(ctx, u, &column) {
            if value < upper {
                upper = value;
                upper_witness = UpperWitness::Formula {
                    description: format!("column collapse through a {}-term semi-unit", column.len()),
                    terms: vec![value],
                };
            }
        }
    }
    Ok(NormInterval { lower, upper, upper_certified: true, lower_witness, upper_witness: Some(upper_witness) })
}

/// Outcome of the collapse check on sampled elements.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TroCollapseReport {
    pub samples: usize,
    /// dim [M*SM] and whether it is all of B(ℂʰ).
    pub target_dim: usize,
    pub target_is_full: bool,
    /// Largest excess of a sampled A-admissible value over ‖mult(u)‖.
    pub max_pair_excess: f64,
    /// Largest |‖eval_identity(u)‖ − ‖mult(u)‖|.
    pub identity_gap: f64,
    /// Largest deviation of the balanced interval ends from ‖mult(u)‖.
    pub balanced_gap: f64,
    /// Least eigenvalue of mult over synthesized positives.
    pub forward_min_eigenvalue: f64,
    /// Largest residual of mult(x*⊙Q⊙x) − P over PSD targets, if a
    /// semi-unit exists.
    pub backward_residual: Option<f64>,
    pub passed: bool,
}

fn random_level(space: &ConcreteOpSpace, rows: usize, cols: usize, rng: &mut Rng64) -> CMatrix {
    let mut out = CMatrix::zeros(rows * space.k(), cols * space.h());
    for i in 0..rows {
        for j in 0..cols {
            let c = random_gaussian(rng, space.dim(), 1);
            out.set_block(i * space.k(), j * space.h(), &space.combine(c.as_slice()));
        }
    }
    out
}

/// Random element of M_K(S)⁺ (PSD clip, then blockwise projection, then a
/// shift by the unit to restore positivity).
fn random_positive_middle(s: &ConcreteOpSpace, k: usize, rng: &mut Rng64) -> CMatrix {
    let g = random_level(s, k, k, rng);
    let herm = g.matmul(&g.adjoint());
    let mut proj = CMatrix::zeros(herm.rows(), herm.cols());
    let d = s.k();
    for p in 0..k {
        for q in 0..k {
            let (c, _) = s.project_onto(&herm.block(p * d, q * d, d, d)).expect("square");
            proj.set_block(p * d, q * d, &s.combine(&c));
        }
    }
    let proj = proj.hermitian_part();
    let shift = (-min_eigenvalue(&proj)).max(0.0);
    match s.unit_matrix() {
        Some(one) if shift > 0.0 => &proj + &CMatrix::identity(k).kron(&one).scale_real(shift),
        _ => proj,
    }
}

/// Samples elements of M*⊙S⊙M and checks that the balanced symmetrisation
/// collapses onto [M*SM].
pub fn tro_collapse_check(
    m: &TroSpace,
    s: Arc<ConcreteOpSpace>,
    samples: usize,
    budget: &Budget,
) -> Result<TroCollapseReport> {
    let ctx = BalancedContext::for_tro(m, s.clone()).map_err(|e| Error::ModuleConditionFailed(e.to_string()))?;
    let e = m.space().clone();
    let h = e.h();
    let mut gens = Vec::new();
    for y in e.basis() {
        for t in s.basis() {
            for x in e.basis() {
                gens.push(y.adjoint_mul(&t.matmul(x)));
            }
        }
    }
    let target = ConcreteOpSpace::span(h, h, &gens)?;
    let column = find_semi_unit(m);
    let mut rep = TroCollapseReport {
        samples,
        target_dim: target.dim(),
        target_is_full: target.is_full_ambient() || target.dim() == h * h,
        max_pair_excess: f64::NEG_INFINITY,
        identity_gap: 0.0,
        balanced_gap: 0.0,
        forward_min_eigenvalue: f64::INFINITY,
        backward_residual: column.as_ref().map(|_| 0.0),
        passed: false,
    };
    let identity = AdmissiblePair::identity(e.clone(), s.clone())?;
    let quick = Budget { restarts: budget.restarts.min(4), ..budget.clone() };
    for t in 0..samples {
        let mut rng = seeded(budget.seed, 0x7a0 + t as u64);
        let n = 1 + t % 2;
        let u = crate::symnorm::random_element(&e, &s, n, 2, &mut rng)?;
        let mult = u.mult().ok_or_else(|| Error::ShapeMismatch("S does not act on M".into()))?;
        let mn = op_norm(&mult);
        for mm in 1..=2 {
            let dim = h * mm;
            let w = random_contraction(&mut rng, dim, dim);
            let v = op_norm(&eval_pair(&amplification_pair(&ctx, mm, &w)?, &u)?);
            rep.max_pair_excess = rep.max_pair_excess.max(v - mn);
        }
        rep.identity_gap = rep.identity_gap.max((op_norm(&eval_pair(&identity, &u)?) - mn).abs());
        let iv = balanced_seminorm(&u, &ctx, &quick)?;
        rep.balanced_gap = rep.balanced_gap.max((iv.upper - mn).abs()).max((iv.lower - mn).abs());

        let kk = 1 + t % 3;
        let x = random_level(&e, kk, n, &mut rng);
        let mid = random_positive_middle(&s, kk, &mut rng);
        let pos = TensorElement::from_blocks(e.clone(), s.clone(), n, vec![(x.clone(), mid, x)])?;
        let pm = pos.mult().expect("S acts on M");
        rep.forward_min_eigenvalue = rep.forward_min_eigenvalue.min(min_eigenvalue(&pm) / op_norm(&pm).max(1.0));

        if let (Some(col), Some(res)) = (&column, rep.backward_residual.as_mut()) {
            let target_psd = if rep.target_is_full {
                let g = random_gaussian(&mut rng, n * h, n * h);
                g.matmul(&g.adjoint())
            } else {
                pm
            };
            match synthesize_from_column(&ctx, col, &target_psd) {
                Some(r) => *res = res.max(r),
                None => *res = f64::INFINITY,
            }
        }
    }
    rep.passed = rep.max_pair_excess <= 1e-9
        && rep.identity_gap <= 1e-9
        && rep.balanced_gap <= 1e-6
        && rep.forward_min_eigenvalue >= -1e-9
        && rep.backward_residual.is_none_or(|r| r <= 1e-9);
    Ok(rep)
}

/// x = Iₙ⊗c and Q = xPx* ⪰ 0; returns ‖mult(x*⊙Q⊙x) − P‖ when Q lies in
/// M(S) and the element builds.
fn synthesize_from_column(ctx: &BalancedContext, column: &[CMatrix], p: &CMatrix) -> Option<f64> {
    let h = ctx.e.h();
    let n = p.rows() / h;
    let c = CMatrix::vstack(column).ok()?;
    let x = CMatrix::identity(n).kron(&c);
    let q = x.matmul(p).matmul(&x.adjoint()).hermitian_part();
    if min_eigenvalue(&q) < -1e-9 * op_norm(&q).max(1.0) || !in_level(&ctx.s, &q) {
        return None;
    }
    let u = TensorElement::from_blocks(ctx.e.clone(), ctx.s.clone(), n, vec![(x.clone(), q, x)]).ok()?;
    Some(op_norm(&(&u.mult()? - p)))
}

/// The instance M = M_{2,2}⊕M_{2,2}, A = S = M₂⊕M₂, y = 0⊕E₂₂, x = E₁₁⊕0.
pub fn disjoint_corners_instance() -> Result<(BalancedContext, TensorElement, CMatrix, CMatrix)> {
    let m22 = ConcreteOpSpace::full(2);
    let e = Arc::new(ConcreteOpSpace::direct_sum(&[m22.clone(), m22.clone()])?);
    let a = Arc::new(ConcreteOpSpace::direct_sum(&[m22.clone(), m22])?.with_detected_tags());
    let ctx = BalancedContext::new(a.clone(), e.clone(), a.clone())?;
    let z = CMatrix::zeros(2, 2);
    let y = CMatrix::direct_sum(&[z.clone(), CMatrix::unit(2, 2, 1, 1)]);
    let x = CMatrix::direct_sum(&[CMatrix::unit(2, 2, 0, 0), z]);
    let u = TensorElement::elementary(e, a, &y, &CMatrix::identity(4), &x)?;
    Ok((ctx, u, y, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symnorm::{polarised_witness, find_disjoint_functionals};

    fn arc(s: ConcreteOpSpace) -> Arc<ConcreteOpSpace> {
        Arc::new(s)
    }

    #[test]
    fn tro_closure_examples() {
        assert!(is_tro(&ConcreteOpSpace::rect(2, 3)).is_tro);
        assert!(is_tro(&ConcreteOpSpace::row(2)).is_tro);
        let corner = ConcreteOpSpace::span(
            2,
            2,
            &[CMatrix::unit(2, 2, 0, 0), CMatrix::unit(2, 2, 0, 1), CMatrix::unit(2, 2, 1, 0)],
        )
        .unwrap();
        let check = is_tro(&corner);
        assert!(!check.is_tro);
        let w = check.counterexample.unwrap();
        let [i, j, l] = w.indices;
        let b = corner.basis();
        assert_eq!(b[i].matmul(&b[j].adjoint()).matmul(&b[l]), w.product);
        assert!(!corner.contains(&w.product));
    }

    #[test]
    fn linking_algebras_of_rows_and_columns() {
        let rows = TroSpace::new(arc(ConcreteOpSpace::row(2))).unwrap();
        assert_eq!(rows.left_algebra().dim(), 1);
        assert_eq!(rows.right_algebra().dim(), 4);
        let cols = TroSpace::new(arc(ConcreteOpSpace::column(2))).unwrap();
        assert_eq!(cols.left_algebra().dim(), 4);
        assert_eq!(cols.right_algebra().dim(), 1);
    }

    #[test]
    fn amplification_pairs_are_a_admissible() {
        let m = TroSpace::new(arc(ConcreteOpSpace::column(2))).unwrap();
        let ctx = BalancedContext::for_tro(&m, arc(ConcreteOpSpace::full(2))).unwrap();
        let mut rng = seeded(1, 1);
        for mm in 1..=3 {
            let w = random_contraction(&mut rng, mm, mm);
            let pair = amplification_pair(&ctx, mm, &w).unwrap();
            assert!(a_admissibility_residual(&ctx, &pair) <= 1e-10);
        }
    }

    #[test]
    fn disjoint_corners_collapse_to_zero() {
        let (ctx, u, y, x) = disjoint_corners_instance().unwrap();
        let iv = balanced_seminorm(&u, &ctx, &Budget::quick()).unwrap();
        assert_eq!(iv.upper, 0.0);
        let (f, g) = find_disjoint_functionals(&x, &y, 1e-9).unwrap();
        let pair = polarised_witness(ctx.e_space(), ctx.s_space(), &f, &g, &x, &y).unwrap();
        let val = op_norm(&eval_pair(&pair, &u).unwrap());
        assert!(val >= 0.25 - 1e-6, "{val}");
        assert!(sym_norm(&u, &Budget::quick()).lower >= 0.25 - 1e-6);
    }

    #[test]
    fn tro_elementary_interval_is_exact() {
        let m = TroSpace::new(arc(ConcreteOpSpace::column(2))).unwrap();
        let s = arc(ConcreteOpSpace::full(2));
        let ctx = BalancedContext::for_tro(&m, s.clone()).unwrap();
        let m1 = CMatrix::from_real(&[&[1.0], &[0.5]]);
        let m2 = CMatrix::from_real(&[&[-0.3], &[2.0]]);
        let mid = CMatrix::from_real(&[&[0.2, 1.0], &[-0.7, 0.4]]);
        let u = TensorElement::elementary(m.space().clone(), s, &m1, &mid, &m2).unwrap();
        let want = m1.adjoint_mul(&mid.matmul(&m2))[(0, 0)].norm();
        let iv = balanced_seminorm(&u, &ctx, &Budget::quick()).unwrap();
        assert!((iv.lower - want).abs() < 1e-9, "{} vs {want}", iv.lower);
        assert!((iv.upper - want).abs() < 1e-9, "{} vs {want}", iv.upper);
    }

    #[test]
    fn scalar_algebra_matches_unbalanced_norm() {
        let e = arc(ConcreteOpSpace::full(2));
        let a = arc(ConcreteOpSpace::span(2, 2, &[CMatrix::identity(2)]).unwrap().with_detected_tags());
        let s2 = arc(ConcreteOpSpace::span(2, 2, &[CMatrix::identity(2)]).unwrap().with_detected_tags());
        let ctx = BalancedContext::new(a, e.clone(), s2.clone()).unwrap();
        let mut rng = seeded(3, 3);
        let u = crate::symnorm::random_element(&e, &s2, 1, 2, &mut rng).unwrap();
        let b = balanced_seminorm(&u, &ctx, &Budget::quick()).unwrap();
        let plain = sym_norm(&u, &Budget::quick());
        assert!(b.overlaps(&plain, 1e-6));
        assert!(b.upper <= plain.upper + 1e-12);
    }

    #[test]
    fn collapse_checks_pass_for_standard_pairs() {
        let cases = [
            (ConcreteOpSpace::column(2), ConcreteOpSpace::full(2), 1),
            (ConcreteOpSpace::row(2), ConcreteOpSpace::scalars(), 4),
            (ConcreteOpSpace::full(2), ConcreteOpSpace::full(2), 4),
        ];
        for (mspace, s, dim) in cases {
            let m = TroSpace::new(arc(mspace)).unwrap();
            let rep = tro_collapse_check(&m, arc(s), 8, &Budget::quick()).unwrap();
            assert_eq!(rep.target_dim, dim);
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn module_condition_failure_is_reported() {
        let m = TroSpace::new(arc(ConcreteOpSpace::column(2))).unwrap();
        let s = arc(ConcreteOpSpace::diagonal(2));
        assert!(matches!(
            tro_collapse_check(&m, s, 1, &Budget::quick()),
            Err(Error::ModuleConditionFailed(_))
        ));
    }

    #[test]
    fn semi_units() {
        let rows = TroSpace::new(arc(ConcreteOpSpace::row(2))).unwrap();
        let col = find_semi_unit(&rows).unwrap();
        assert_eq!(col, vec![CMatrix::unit(1, 2, 0, 0), CMatrix::unit(1, 2, 0, 1)]);
        let full = TroSpace::new(arc(ConcreteOpSpace::full(2))).unwrap();
        let col = find_semi_unit(&full).unwrap();
        let mut total = CMatrix::zeros(2, 2);
        for c in &col {
            total += &c.adjoint_mul(c);
        }
        assert!(total.approx_eq(&CMatrix::identity(2), 1e-12));
        let corner = TroSpace::new(arc(ConcreteOpSpace::span(2, 2, &[CMatrix::unit(2, 2, 0, 0)]).unwrap())).unwrap();
        assert!(find_semi_unit(&corner).is_none());
    }
}
