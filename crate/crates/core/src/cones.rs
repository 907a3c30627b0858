//! Membership in the matricial cones of E*⊗ₛS⊗ₛE: synthesis certificates
//! from inside, refutations by admissible pairs from outside, and the
//! dimension obstruction to being an operator system.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cert::Budget;
use crate::conic::AffinePsd;
use crate::cpmaps::WittstockMap;
use crate::error::{Error, Result};
use crate::matcore::{herm_eig_of_part, lstsq, min_eigenvalue, op_norm, pinv, svd, CMatrix, C64, ZERO};
use crate::opspace::ConcreteOpSpace;
use crate::rng::{random_gaussian, seeded};
use crate::symnorm::{eval_pair, min_eig_search, AdmissiblePair, TensorElement};

/// Coefficient-norm tolerance for u = u*.
pub const HERMITIAN_TOL: f64 = 1e-9;
/// Largest coefficient residual accepted for a synthesis.
pub const SYNTHESIS_TOL: f64 = 1e-7;
/// An eigenvalue at or below this refutes positivity.
pub const REFUTE_TOL: f64 = -1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Positive,
    Refuted,
    Undecided,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ConeWitness {
    /// u ≈ x*⊙s⊙x with x ∈ M_{k,n}(E), s ∈ M_k(S)⁺ given concretely.
    Synthesis { rank: usize, x: CMatrix, s: CMatrix, residual: f64 },
    /// ⟨eval_pair(u)v, v⟩ = eigenvalue < 0.
    Refutation { pair: Box<AdmissiblePair>, vector: CMatrix, eigenvalue: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeCertificate {
    pub verdict: Verdict,
    pub witness: Option<ConeWitness>,
}

impl ConeCertificate {
    pub fn undecided() -> Self {
        ConeCertificate { verdict: Verdict::Undecided, witness: None }
    }

    /// Recomputes the witness against `u` from scratch.
    pub fn replay(&self, u: &TensorElement) -> Result<bool> {
        match (&self.verdict, &self.witness) {
            (Verdict::Undecided, _) => Ok(true),
            (Verdict::Positive, Some(ConeWitness::Synthesis { x, s, .. })) => {
                if min_eigenvalue(s) < -1e-9 {
                    return Ok(false);
                }
                let planted = TensorElement::from_blocks(
                    u.e_space().clone(),
                    u.s_space().clone(),
                    u.level(),
                    vec![(x.clone(), s.clone(), x.clone())],
                )?;
                Ok(coeff_distance(u, &planted) <= SYNTHESIS_TOL)
            }
            (Verdict::Refuted, Some(ConeWitness::Refutation { pair, vector, .. })) => {
                let val = eval_pair(pair, u)?;
                let q = vector.adjoint_mul(&val.matmul(vector))[(0, 0)].re / vector.frobenius_norm().powi(2);
                Ok(q <= REFUTE_TOL)
            }
            _ => Ok(false),
        }
    }
}

fn coeff_distance(u: &TensorElement, v: &TensorElement) -> f64 {
    u.coeffs().iter().zip(v.coeffs()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
}

fn require_hermitian(u: &TensorElement) -> Result<()> {
    let d = coeff_distance(u, &u.star()?);
    if d > HERMITIAN_TOL * u.coeff_norm().max(1.0) {
        return Err(Error::NotHermitian(d));
    }
    Ok(())
}

/// Wraps a pair as a refutation if it produces an eigenvalue ≤ −1e-9.
pub fn refutation_from_pair(u: &TensorElement, pair: AdmissiblePair) -> Result<ConeCertificate> {
    let val = eval_pair(&pair, u)?;
    let eig = herm_eig_of_part(&val);
    if eig.min() > REFUTE_TOL {
        return Ok(ConeCertificate::undecided());
    }
    Ok(ConeCertificate {
        verdict: Verdict::Refuted,
        witness: Some(ConeWitness::Refutation {
            pair: Box::new(pair),
            vector: eig.vectors.col(0),
            eigenvalue: eig.min(),
        }),
    })
}

/// Searches admissible pairs for a negative eigenvalue of (φ*·ψ·φ)⁽ⁿ⁾(u).
/// Never answers Positive.
pub fn refute_positive(u: &TensorElement, budget: &Budget) -> Result<ConeCertificate> {
    require_hermitian(u)?;
    if u.is_zero() {
        return Ok(ConeCertificate::undecided());
    }
    let best = min_eig_search(u, budget)
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((lam, pair, _)) if lam <= REFUTE_TOL => refutation_from_pair(u, pair),
        _ => Ok(ConeCertificate::undecided()),
    }
}

/// Ambient coefficient matrix U[(i,a,α),(j,c,β)] over matrix units E_αβ of S's ambient.
fn ambient_coefficients(u: &TensorElement) -> CMatrix {
    let (e, s, n) = (u.e_space(), u.s_space(), u.level());
    let (de, ds, d) = (e.dim(), s.dim(), s.k());
    let dim = n * de * d;
    let mut out = CMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            for a in 0..de {
                for b in 0..ds {
                    for c in 0..de {
                        let coef = u.coeffs()[u.coeff_index(i, j, a, b, c)];
                        if coef == ZERO {
                            continue;
                        }
                        let sb = &s.basis()[b];
                        for al in 0..d {
                            for be in 0..d {
                                let row = (i * de + a) * d + al;
                                let col = (j * de + c) * d + be;
                                out[(row, col)] += coef * sb[(al, be)];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Concrete x ∈ M_{K,n}(E) from coefficients X[p][(j,c)].
fn concrete_x(e: &ConcreteOpSpace, n: usize, xc: &CMatrix) -> CMatrix {
    let (k, h, de) = (e.k(), e.h(), e.dim());
    let rank = xc.rows();
    let mut out = CMatrix::zeros(rank * k, n * h);
    for p in 0..rank {
        for j in 0..n {
            let coeffs: Vec<C64> = (0..de).map(|c| xc[(p, j * de + c)]).collect();
            out.set_block(p * k, j * h, &e.combine(&coeffs));
        }
    }
    out
}

/// Exact synthesis through the spectral decomposition of the ambient
/// coefficient matrix; valid as a certificate when S is all of M_d.
fn spectral_synthesis(u: &TensorElement) -> Option<(CMatrix, CMatrix)> {
    let (e, s, n) = (u.e_space(), u.s_space(), u.level());
    let (de, d) = (e.dim(), s.k());
    let big = ambient_coefficients(u);
    let eig = herm_eig_of_part(&big);
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let kept: Vec<usize> = (0..eig.values.len()).filter(|&t| eig.values[t] > 1e-12 * scale).collect();
    if kept.is_empty() {
        return None;
    }
    let rows = kept.len() * d;
    let mut xc = CMatrix::zeros(rows, n * de);
    for (rho, &t) in kept.iter().enumerate() {
        let w = eig.values[t].sqrt();
        for be in 0..d {
            for j in 0..n {
                for c in 0..de {
                    xc[(rho * d + be, j * de + c)] = eig.vectors[((j * de + c) * d + be, t)].conj() * w;
                }
            }
        }
    }
    // s = I_R ⊗ [E_ββ']_{β,β'}
    let mut omega = CMatrix::zeros(d * d, d * d);
    for b1 in 0..d {
        for b2 in 0..d {
            omega[(b1 * d + b1, b2 * d + b2)] = C64::new(1.0, 0.0);
        }
    }
    let mid = CMatrix::identity(kept.len()).kron(&omega);
    Some((concrete_x(e, n, &xc), mid))
}

struct Als<'a> {
    u: &'a TensorElement,
    targets: Vec<CMatrix>,
}

impl<'a> Als<'a> {
    fn new(u: &'a TensorElement) -> Self {
        let (de, ds, n) = (u.e_space().dim(), u.s_space().dim(), u.level());
        let targets = (0..ds)
            .map(|b| {
                CMatrix::from_fn(n * de, n * de, |r, c| {
                    let (i, a, j, cc) = (r / de, r % de, c / de, c % de);
                    u.coeffs()[u.coeff_index(i, j, a, b, cc)]
                })
            })
            .collect();
        Als { u, targets }
    }

    fn residual(&self, xc: &CMatrix, sb: &[CMatrix]) -> f64 {
        self.targets
            .iter()
            .zip(sb)
            .map(|(t, s)| (t - &xc.adjoint_mul(&s.matmul(xc))).frobenius_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Least-squares middle, clipped to M_k(S)⁺ through the concrete form.
    fn middle_step(&self, xc: &CMatrix) -> Result<Vec<CMatrix>> {
        let pi = pinv(xc);
        let raw: Vec<CMatrix> = self.targets.iter().map(|t| pi.adjoint().matmul(t).matmul(&pi)).collect();
        let concrete = assemble_middle(self.u.s_space(), &raw);
        let clipped = herm_eig_of_part(&concrete).apply(|l| l.max(0.0));
        split_middle(self.u.s_space(), xc.rows(), &clipped)
    }

    fn x_step(&self, xc: &CMatrix, sb: &[CMatrix]) -> Result<CMatrix> {
        let lhs: Vec<CMatrix> = sb.iter().map(|s| xc.adjoint_mul(s)).collect();
        let a = CMatrix::vstack(&lhs)?;
        let rhs = CMatrix::vstack(&self.targets)?;
        let next = lstsq(&a, &rhs);
        Ok((&next + xc).scale_real(0.5))
    }
}

fn assemble_middle(s: &ConcreteOpSpace, sb: &[CMatrix]) -> CMatrix {
    let (k, d) = (sb[0].rows(), s.k());
    let mut out = CMatrix::zeros(k * d, k * d);
    for p in 0..k {
        for q in 0..k {
            let coeffs: Vec<C64> = sb.iter().map(|m| m[(p, q)]).collect();
            out.set_block(p * d, q * d, &s.combine(&coeffs));
        }
    }
    out
}

fn split_middle(s: &ConcreteOpSpace, k: usize, concrete: &CMatrix) -> Result<Vec<CMatrix>> {
    let d = s.k();
    let mut sb = vec![CMatrix::zeros(k, k); s.dim()];
    for p in 0..k {
        for q in 0..k {
            let (coeffs, _) = s.project_onto(&concrete.block(p * d, q * d, d, d))?;
            for (b, c) in coeffs.into_iter().enumerate() {
                sb[b][(p, q)] = c;
            }
        }
    }
    Ok(sb)
}

fn als_synthesis(u: &TensorElement, rank: usize, budget: &Budget) -> Result<Option<(CMatrix, CMatrix, f64)>> {
    let (e, s, n) = (u.e_space(), u.s_space(), u.level());
    let als = Als::new(u);
    let width = n * e.dim();
    let mut best: Option<(CMatrix, Vec<CMatrix>, f64)> = None;
    for restart in 0..budget.restarts.clamp(1, 8) {
        let mut rng = seeded(budget.seed, 0xa15 + restart as u64);
        let mut xc = random_gaussian(&mut rng, rank, width);
        let mut sb = als.middle_step(&xc)?;
        for _ in 0..budget.iterations.max(50) * 4 {
            xc = als.x_step(&xc, &sb)?;
            sb = als.middle_step(&xc)?;
            if als.residual(&xc, &sb) <= 1e-11 {
                break;
            }
        }
        let res = als.residual(&xc, &sb);
        if best.as_ref().is_none_or(|b| res < b.2) {
            best = Some((xc, sb, res));
        }
        if res <= 1e-11 {
            break;
        }
    }
    Ok(best.map(|(xc, sb, res)| (concrete_x(e, n, &xc), assemble_middle(s, &sb), res)))
}

fn synthesis_certificate(u: &TensorElement, x: CMatrix, s: CMatrix) -> Result<ConeCertificate> {
    let s = s.hermitian_part();
    if min_eigenvalue(&s) < -1e-9 {
        return Ok(ConeCertificate::undecided());
    }
    let rank = s.rows() / u.s_space().k();
    let planted =
        TensorElement::from_blocks(u.e_space().clone(), u.s_space().clone(), u.level(), vec![(x.clone(), s.clone(), x.clone())])?;
    let residual = coeff_distance(u, &planted);
    if residual > SYNTHESIS_TOL {
        return Ok(ConeCertificate::undecided());
    }
    Ok(ConeCertificate {
        verdict: Verdict::Positive,
        witness: Some(ConeWitness::Synthesis { rank, x, s, residual }),
    })
}

/// Looks for u = x*⊙s⊙x with s ⪰ 0. When S is a full matrix algebra the
/// spectral synthesis is exact and its rank is whatever the data needs;
/// otherwise alternating least squares runs at ranks k, 2k, 4k.
pub fn synthesize_positive(u: &TensorElement, k: usize, budget: &Budget) -> Result<ConeCertificate> {
    require_hermitian(u)?;
    if u.is_zero() {
        let (e, s, n) = (u.e_space(), u.s_space(), u.level());
        let x = CMatrix::zeros(e.k(), n * e.h());
        let mid = CMatrix::zeros(s.k(), s.k());
        return synthesis_certificate(u, x, mid);
    }
    let spectral = spectral_synthesis(u);
    if u.s_space().is_full_ambient() {
        if let Some((x, s)) = spectral {
            return synthesis_certificate(u, x, s);
        }
        return Ok(ConeCertificate::undecided());
    }
    for rank in [k.max(1), 2 * k.max(1), 4 * k.max(1)] {
        if let Some((x, s, res)) = als_synthesis(u, rank, budget)? {
            if res <= SYNTHESIS_TOL {
                let cert = synthesis_certificate(u, x, s)?;
                if cert.verdict == Verdict::Positive {
                    return Ok(cert);
                }
            }
        }
    }
    Ok(ConeCertificate::undecided())
}

/// dim span(E*E) < (dim E)²: then E*⊗ₛE cannot be an operator system.
pub fn not_operator_system_by_dimension(e: &ConcreteOpSpace) -> bool {
    span_dim_of_products(e) < e.dim() * e.dim()
}

/// dim span{b_a* b_c} inside B(ℂʰ).
pub fn span_dim_of_products(e: &ConcreteOpSpace) -> usize {
    let cols: Vec<CMatrix> = e
        .basis()
        .iter()
        .flat_map(|a| e.basis().iter().map(move |c| a.adjoint_mul(c).vectorize()))
        .collect();
    let stacked = CMatrix::hstack(&cols).expect("equal lengths");
    svd(&stacked).rank()
}

/// Finitely supported column x = (x₁, …, x_K) over E with Σ φ(xᵢ)*φ(xᵢ) = I.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemiUnit {
    pub column: Vec<CMatrix>,
    pub residual: f64,
    /// x*⊙(1⊗I)⊙x, when S is unital.
    #[serde(skip)]
    pub unit_candidate: Option<TensorElement>,
}

/// Searches for a semi-unit of E through the embedding φ of `pair`.
/// φ must be isometric on E; that is checked on the basis and on a few
/// random combinations.
pub fn semi_unit_probe(
    e: &Arc<ConcreteOpSpace>,
    s: &Arc<ConcreteOpSpace>,
    pair: &AdmissiblePair,
    budget: &Budget,
) -> Result<Option<SemiUnit>> {
    let phi = &pair.phi;
    check_isometric(e, phi, budget)?;
    let images: Vec<CMatrix> = e.basis().iter().map(|b| phi.apply(b)).collect();
    let de = e.dim();
    let hp = images[0].cols();
    let mut lmat = CMatrix::zeros(hp * hp, de * de);
    for a in 0..de {
        for c in 0..de {
            let prod = images[a].adjoint_mul(&images[c]);
            for r in 0..hp {
                for t in 0..hp {
                    lmat[(r * hp + t, a * de + c)] = prod[(r, t)];
                }
            }
        }
    }
    let target = CMatrix::identity(hp).vectorize();
    let sol = AffinePsd::new(de, lmat, target).solve(budget.iterations.max(200) * 10, 1e-12);
    if sol.residual > 1e-9 {
        return Ok(None);
    }
    let eig = herm_eig_of_part(&sol.p);
    let top = eig.max().max(1e-300);
    let mut column = Vec::new();
    for (t, &lam) in eig.values.iter().enumerate() {
        if lam <= 1e-13 * top {
            continue;
        }
        let coeffs: Vec<C64> = (0..de).map(|c| eig.vectors[(c, t)].conj() * lam.sqrt()).collect();
        column.push(e.combine(&coeffs));
    }
    let mut total = CMatrix::zeros(hp, hp);
    for x in &column {
        let fx = phi.apply(x);
        total += &fx.adjoint_mul(&fx);
    }
    let residual = op_norm(&(&total - &CMatrix::identity(hp)));
    if residual > 1e-9 {
        return Ok(None);
    }
    let unit_candidate = s.unit_matrix().and_then(|one| {
        let x = CMatrix::vstack(&column).ok()?;
        let mid = CMatrix::identity(column.len()).kron(&one);
        TensorElement::from_blocks(e.clone(), s.clone(), 1, vec![(x.clone(), mid, x)]).ok()
    });
    Ok(Some(SemiUnit { column, residual, unit_candidate }))
}

fn check_isometric(e: &ConcreteOpSpace, phi: &WittstockMap, budget: &Budget) -> Result<()> {
    let mut rng = seeded(budget.seed, 0x150);
    let mut probes: Vec<CMatrix> = e.basis().to_vec();
    for _ in 0..4 {
        let g = random_gaussian(&mut rng, e.dim(), 1);
        let coeffs: Vec<C64> = (0..e.dim()).map(|i| g[(i, 0)]).collect();
        probes.push(e.combine(&coeffs));
    }
    for x in &probes {
        let (a, b) = (op_norm(&phi.apply(x)), op_norm(x));
        if (a - b).abs() > 1e-8 * b.max(1.0) {
            return Err(Error::Precondition(format!("φ is not isometric: ‖φ(x)‖ = {a}, ‖x‖ = {b}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::random_contraction;

    fn arc(s: ConcreteOpSpace) -> Arc<ConcreteOpSpace> {
        Arc::new(s)
    }

    fn planted(e: &Arc<ConcreteOpSpace>, s: &Arc<ConcreteOpSpace>, n: usize, k: usize, seed: u64) -> TensorElement {
        let mut rng = seeded(seed, 1);
        let xc = random_gaussian(&mut rng, k, n * e.dim());
        let x = concrete_x(e, n, &xc);
        let g = random_gaussian(&mut rng, k * s.k(), k * s.k());
        let mut mid = g.matmul(&g.adjoint());
        if !s.is_full_ambient() {
            let sb = split_middle(s, k, &mid).unwrap();
            mid = assemble_middle(s, &sb);
        }
        TensorElement::from_blocks(e.clone(), s.clone(), n, vec![(x.clone(), mid, x)]).unwrap()
    }

    #[test]
    fn negated_square_is_refuted() {
        let e = arc(ConcreteOpSpace::full(2));
        let s = arc(ConcreteOpSpace::full(2));
        let x = CMatrix::from_real(&[&[1.0, 0.5], &[0.0, 0.3]]);
        let u = TensorElement::elementary(e, s, &x, &CMatrix::identity(2), &x).unwrap().neg();
        let cert = refute_positive(&u, &Budget::quick()).unwrap();
        assert_eq!(cert.verdict, Verdict::Refuted);
        assert!(cert.replay(&u).unwrap());
        assert_eq!(synthesize_positive(&u, 1, &Budget::quick()).unwrap().verdict, Verdict::Undecided);
    }

    #[test]
    fn planted_positive_is_never_refuted_and_is_synthesised() {
        let e = arc(ConcreteOpSpace::rect(2, 3));
        let s = arc(ConcreteOpSpace::full(2));
        let u = planted(&e, &s, 2, 2, 7);
        let refute = refute_positive(&u, &Budget::default()).unwrap();
        assert_eq!(refute.verdict, Verdict::Undecided);
        let cert = synthesize_positive(&u, 2, &Budget::quick()).unwrap();
        assert_eq!(cert.verdict, Verdict::Positive);
        match &cert.witness {
            Some(ConeWitness::Synthesis { residual, .. }) => assert!(*residual <= 1e-9),
            w => panic!("unexpected witness {w:?}"),
        }
        assert!(cert.replay(&u).unwrap());
    }

    #[test]
    fn sum_of_planted_positives_uses_the_summed_rank() {
        let e = arc(ConcreteOpSpace::row(3));
        let s = arc(ConcreteOpSpace::scalars());
        let u1 = planted(&e, &s, 2, 1, 3);
        let u2 = planted(&e, &s, 2, 2, 4);
        let u = u1.add(&u2).unwrap();
        let cert = synthesize_positive(&u, 3, &Budget::quick()).unwrap();
        match &cert.witness {
            Some(ConeWitness::Synthesis { rank, residual, .. }) => {
                assert_eq!(*rank, 3);
                assert!(*residual <= 1e-9);
            }
            w => panic!("unexpected witness {w:?}"),
        }
    }

    #[test]
    fn als_handles_a_diagonal_middle() {
        let e = arc(ConcreteOpSpace::column(2));
        let s = arc(ConcreteOpSpace::diagonal(2));
        let u = planted(&e, &s, 1, 1, 11);
        let cert = synthesize_positive(&u, 1, &Budget::quick()).unwrap();
        assert_eq!(cert.verdict, Verdict::Positive);
        assert!(cert.replay(&u).unwrap());
    }

    #[test]
    fn diagonal_kernel_with_negative_entry_is_refuted_at_minus_one() {
        let e = arc(ConcreteOpSpace::diagonal(2));
        let s = arc(ConcreteOpSpace::scalars());
        let mut coeffs = vec![ZERO; 4];
        coeffs[0] = C64::new(-1.0, 0.0);
        coeffs[3] = C64::new(1.0, 0.0);
        let u = TensorElement::from_coeffs(e, s, 1, coeffs).unwrap();
        let cert = refute_positive(&u, &Budget::quick()).unwrap();
        match &cert.witness {
            Some(ConeWitness::Refutation { eigenvalue, .. }) => assert!(*eigenvalue <= -1.0 + 1e-6),
            w => panic!("unexpected witness {w:?}"),
        }
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let e = arc(ConcreteOpSpace::full(2));
        let s = arc(ConcreteOpSpace::scalars());
        let u = TensorElement::elementary(
            e,
            s,
            &CMatrix::unit(2, 2, 0, 0),
            &CMatrix::identity(1),
            &CMatrix::unit(2, 2, 0, 1),
        )
        .unwrap();
        assert!(matches!(refute_positive(&u, &Budget::quick()), Err(Error::NotHermitian(_))));
        assert!(matches!(synthesize_positive(&u, 1, &Budget::quick()), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn conjugating_a_positive_by_scalars_stays_positive() {
        let e = arc(ConcreteOpSpace::full(2));
        let s = arc(ConcreteOpSpace::scalars());
        let u = planted(&e, &s, 2, 2, 21);
        let mut rng = seeded(5, 5);
        let alpha = random_contraction(&mut rng, 2, 2);
        let v = u.sandwich_scalars(&alpha.adjoint(), &alpha).unwrap();
        assert_eq!(synthesize_positive(&v, 2, &Budget::quick()).unwrap().verdict, Verdict::Positive);
    }

    #[test]
    fn dimension_obstruction_examples() {
        assert!(not_operator_system_by_dimension(&ConcreteOpSpace::diagonal(2)));
        assert_eq!(span_dim_of_products(&ConcreteOpSpace::rect(3, 2)), 4);
        assert!(not_operator_system_by_dimension(&ConcreteOpSpace::rect(3, 2)));
        assert!(!not_operator_system_by_dimension(&ConcreteOpSpace::row(2)));
        assert!(!not_operator_system_by_dimension(&ConcreteOpSpace::row(3)));
    }

    fn identity_embedding(e: &Arc<ConcreteOpSpace>) -> AdmissiblePair {
        let s = arc(ConcreteOpSpace::full(e.k()));
        AdmissiblePair::identity(e.clone(), s).unwrap()
    }

    #[test]
    fn semi_units_for_standard_spaces() {
        for e in [ConcreteOpSpace::column(2), ConcreteOpSpace::row(2), ConcreteOpSpace::full(2)] {
            let e = arc(e);
            let s = arc(ConcreteOpSpace::full(e.k()));
            let pair = identity_embedding(&e);
            let unit = semi_unit_probe(&e, &s, &pair, &Budget::quick()).unwrap().expect("semi-unit");
            let mut total = CMatrix::zeros(e.h(), e.h());
            for x in &unit.column {
                total += &x.adjoint_mul(x);
            }
            assert!(total.approx_eq(&CMatrix::identity(e.h()), 1e-9));
            assert!(unit.unit_candidate.is_some());
        }
    }

    #[test]
    fn no_semi_unit_for_the_diagonal_corner() {
        let e = arc(ConcreteOpSpace::span(2, 2, &[CMatrix::unit(2, 2, 0, 0)]).unwrap());
        let s = arc(ConcreteOpSpace::full(2));
        let pair = identity_embedding(&e);
        assert!(semi_unit_probe(&e, &s, &pair, &Budget::quick()).unwrap().is_none());
    }

    #[test]
    fn certificate_json_round_trip() {
        let e = arc(ConcreteOpSpace::full(2));
        let s = arc(ConcreteOpSpace::full(2));
        let x = CMatrix::identity(2);
        let u = TensorElement::elementary(e, s, &x, &CMatrix::identity(2), &x).unwrap().neg();
        let cert = refute_positive(&u, &Budget::quick()).unwrap();
        let text = serde_json::to_string(&cert).unwrap();
        let back: ConeCertificate = serde_json::from_str(&text).unwrap();
        assert!(back.replay(&u).unwrap());
    }
}
