use std::path::{Path, PathBuf};
use std::sync::Arc;

use opsym::cones::{not_operator_system_by_dimension, span_dim_of_products};
use opsym::cpmaps::cb_norm;
use opsym::dualops::{dual_space, iota_gap_search, iota_square, pairing_rank, IotaGap};
use opsym::fnspace::{is_positive_kernel, kernel_certificate, refutation_pair_from_kernel};
use opsym::matcore::{min_eigenvalue, op_norm};
use opsym::rng::{random_gaussian, seeded, Rng64};
use opsym::symnorm::{eval_pair, find_disjoint_functionals, haagerup_upper, plus_norm_profile, polarised_witness, sym_norm};
use opsym::trilinear::{cb_lower_positive, gns_factorise, positivity_sample};
use opsym::tro::{balanced_seminorm, disjoint_corners_instance, tro_collapse_check, TroCollapseReport};
use opsym::{
    CMatrix, ConcreteOpSpace, ConeCertificate, Error, KernelFunction, LinMap, NormInterval, TensorElement,
    TrilinearForm, TroSpace, UpperWitness, Verdict,
};
use serde::{Deserialize, Serialize};

use crate::builtins::{obstruction_space, space};
use crate::{fmt_f64, load_json, write_file, CliError, CliResult, RunConfig, Tabular};

/// Slack on the gap flag: the estimate must sit this far below 1.
pub const GAP_MARGIN: f64 = 1e-3;

// ---------------------------------------------------------------- gamma-curve

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaRow {
    pub t: f64,
    pub k: usize,
    pub lower: f64,
    pub estimate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaPoint {
    pub t: f64,
    pub rows: Vec<GammaRow>,
    /// max − min of the lower ends over k.
    pub k_spread: f64,
    pub upper_certified: bool,
    pub haagerup: f64,
    pub gap: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GammaCurve {
    pub points: Vec<GammaPoint>,
}

impl Tabular for GammaCurve {
    fn header(&self) -> Vec<&'static str> {
        vec!["t", "k", "lower", "estimate"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.points
            .iter()
            .flat_map(|p| p.rows.iter())
            .map(|r| vec![fmt_f64(r.t), r.k.to_string(), fmt_f64(r.lower), fmt_f64(r.estimate)])
            .collect()
    }
}

/// p = E₁₁ and the reflection uₜ = [[t, √(1−t²)], [√(1−t²), −t]].
pub fn gamma_pair(t: f64) -> (CMatrix, CMatrix) {
    let c = (1.0 - t * t).sqrt();
    let u = CMatrix::from_real(&[&[t, c], &[c, -t]]);
    let p = CMatrix::unit(2, 2, 0, 0);
    let b = u.matmul(&p);
    (p, b)
}

pub fn cmd_gamma_curve(ts: &[f64], cfg: &RunConfig) -> CliResult<GammaCurve> {
    if let Some(t) = ts.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::BadRange(format!("t = {t} is outside (0, 1)")).into());
    }
    let budget = cfg.budget();
    let m2 = Arc::new(ConcreteOpSpace::full(2));
    let scalars = Arc::new(ConcreteOpSpace::scalars());
    let mut points = Vec::with_capacity(ts.len());
    for &t in ts {
        let (p, b) = gamma_pair(t);
        let profile = plus_norm_profile(&[(p.clone(), b.clone())], cfg.truncation, &budget)?;
        let rows: Vec<GammaRow> = profile
            .iter()
            .enumerate()
            .map(|(i, iv)| GammaRow { t, k: i + 1, lower: iv.lower, estimate: iv.upper })
            .collect();
        let lo = rows.iter().map(|r| r.lower).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.lower).fold(f64::NEG_INFINITY, f64::max);
        let q = b.matmul(&b.adjoint());
        let u = TensorElement::elementary(m2.clone(), scalars.clone(), &p, &CMatrix::identity(1), &q)?;
        let (haagerup, _) = haagerup_upper(&u);
        let last = rows.last().expect("truncation ≥ 1");
        let gap = last.estimate < 1.0 - GAP_MARGIN;
        points.push(GammaPoint {
            t,
            k_spread: hi - lo,
            upper_certified: profile.iter().all(|iv| iv.upper_certified),
            haagerup,
            gap,
            rows,
        });
    }
    Ok(GammaCurve { points })
}

// -------------------------------------------------------------- kernel-check

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelCheck {
    pub omega: usize,
    pub n: usize,
    pub positive: bool,
    /// Least eigenvalue of the block matrix [K(x, y)].
    pub min_eigenvalue: f64,
    /// Least eigenvalue of T_K^μ for the refuting measure μ.
    pub operator_eigenvalue: Option<f64>,
    /// Least eigenvalue of the refuting pair on the tensor preimage.
    pub pair_eigenvalue: Option<f64>,
    pub witness_file: Option<PathBuf>,
}

impl Tabular for KernelCheck {
    fn header(&self) -> Vec<&'static str> {
        vec!["omega", "n", "positive", "min_eigenvalue", "operator_eigenvalue", "pair_eigenvalue"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        vec![vec![
            self.omega.to_string(),
            self.n.to_string(),
            self.positive.to_string(),
            fmt_f64(self.min_eigenvalue),
            opt(self.operator_eigenvalue),
            opt(self.pair_eigenvalue),
        ]]
    }
}

/// Self-contained refutation: the element and the certificate that refutes it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessFile {
    pub element: TensorElement,
    pub certificate: ConeCertificate,
}

pub fn default_witness_path(kernel_file: &Path) -> PathBuf {
    let mut name = kernel_file.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".witness.json");
    kernel_file.with_file_name(name)
}

pub fn cmd_kernel_check(file: &Path, witness: Option<&Path>, _cfg: &RunConfig) -> CliResult<KernelCheck> {
    let k: KernelFunction = load_json(file)?;
    let verdict = is_positive_kernel(&k)?;
    let mut report = KernelCheck {
        omega: k.omega(),
        n: k.level(),
        positive: verdict.positive,
        min_eigenvalue: verdict.min_eigenvalue,
        operator_eigenvalue: None,
        pair_eigenvalue: None,
        witness_file: None,
    };
    if !verdict.positive {
        let refutation = refutation_pair_from_kernel(&k)?;
        let certificate = kernel_certificate(&k)?;
        let path = witness.map(Path::to_path_buf).unwrap_or_else(|| default_witness_path(file));
        let body = WitnessFile { element: k.to_tensor(), certificate };
        write_file(&path, &serde_json::to_string_pretty(&body).expect("witness serialises"))?;
        report.operator_eigenvalue = Some(refutation.operator_eigenvalue);
        report.pair_eigenvalue = Some(refutation.pair_eigenvalue);
        report.witness_file = Some(path);
    }
    Ok(report)
}

// -------------------------------------------------------------------- replay

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplayReport {
    pub verdict: Verdict,
    pub replayed: bool,
}

impl Tabular for ReplayReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["verdict", "replayed"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![format!("{:?}", self.verdict), self.replayed.to_string()]]
    }
}

pub fn cmd_replay(file: &Path, _cfg: &RunConfig) -> CliResult<ReplayReport> {
    let w: WitnessFile = load_json(file)?;
    let replayed = w.certificate.replay(&w.element)?;
    Ok(ReplayReport { verdict: w.certificate.verdict, replayed })
}

// ---------------------------------------------------------------------- dims

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TroCrossCheck {
    pub target_dim: usize,
    pub target_is_full: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimsEntry {
    pub name: String,
    pub realised_as: String,
    pub dim: usize,
    pub span_dim: usize,
    pub not_operator_system: bool,
    pub tro_cross_check: Option<TroCrossCheck>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DimsReport {
    pub entries: Vec<DimsEntry>,
}

impl Tabular for DimsReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["name", "realised_as", "dim", "span_dim", "not_operator_system", "tro_collapse"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.entries
            .iter()
            .map(|e| {
                vec![
                    e.name.clone(),
                    e.realised_as.clone(),
                    e.dim.to_string(),
                    e.span_dim.to_string(),
                    e.not_operator_system.to_string(),
                    e.tro_cross_check.as_ref().map(|c| c.passed.to_string()).unwrap_or_default(),
                ]
            })
            .collect()
    }
}

pub const DEFAULT_DIMS: [&str; 7] = ["D2", "D3", "M3x2", "M4x2", "C2", "C3", "M2"];

fn dims_entry(name: String, realised_as: String, e: ConcreteOpSpace, tro_samples: usize, cfg: &RunConfig) -> CliResult<DimsEntry> {
    let span_dim = span_dim_of_products(&e);
    let not_operator_system = not_operator_system_by_dimension(&e);
    let tro_cross_check = if tro_samples > 0 && e.is_ternary_closed() {
        let m = TroSpace::new(Arc::new(e.clone()))?;
        let s = m.left_algebra().clone();
        let r = tro_collapse_check(&m, s, tro_samples, &cfg.budget())?;
        Some(TroCrossCheck { target_dim: r.target_dim, target_is_full: r.target_is_full, passed: r.passed })
    } else {
        None
    };
    Ok(DimsEntry { name, realised_as, dim: e.dim(), span_dim, not_operator_system, tro_cross_check })
}

pub fn cmd_dims(builtins: &[String], files: &[PathBuf], tro_samples: usize, cfg: &RunConfig) -> CliResult<DimsReport> {
    let mut entries = Vec::new();
    let names: Vec<String> = if builtins.is_empty() && files.is_empty() {
        DEFAULT_DIMS.iter().map(|s| s.to_string()).collect()
    } else {
        builtins.to_vec()
    };
    for name in names {
        let (e, realised_as) = obstruction_space(&name)?;
        entries.push(dims_entry(name, realised_as, e, tro_samples, cfg)?);
    }
    for f in files {
        let e: ConcreteOpSpace = load_json(f)?;
        let label = f.display().to_string();
        entries.push(dims_entry(label.clone(), label, e, tro_samples, cfg)?);
    }
    Ok(DimsReport { entries })
}

// ----------------------------------------------------------------------- gns

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GnsReport {
    pub k_dim: usize,
    pub reconstruction: f64,
    pub unital_residual: f64,
    pub psi_choi_min: Option<f64>,
    pub psi_cp: Option<bool>,
    pub phi_cb: Option<NormInterval>,
    pub theta_cb: Option<NormInterval>,
    /// ‖φ‖²_cb is compatible with the cb interval of θ (slack 1e-4).
    pub cb_consistent: Option<bool>,
    pub files: Vec<PathBuf>,
}

impl Tabular for GnsReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["k_dim", "reconstruction", "unital_residual", "psi_choi_min", "cb_consistent"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.k_dim.to_string(),
            fmt_f64(self.reconstruction),
            fmt_f64(self.unital_residual),
            self.psi_choi_min.map(fmt_f64).unwrap_or_default(),
            self.cb_consistent.map(|b| b.to_string()).unwrap_or_default(),
        ]]
    }
}

pub const CB_SLACK: f64 = 1e-4;

/// Factorisation plus the cb cross-check, without touching the filesystem.
pub fn gns_analyse(theta: &TrilinearForm, cfg: &RunConfig) -> CliResult<(GnsReport, opsym::trilinear::GnsFactorisation)> {
    let pre = positivity_sample(theta, 40, 2, cfg.seed)?;
    if !pre.positive {
        return Err(Error::NotPositive(format!("sampled amplification has eigenvalue {:.3e}", pre.worst)).into());
    }
    let g = gns_factorise(theta)?;
    let (mut phi_cb, mut theta_cb, mut cb_consistent) = (None, None, None);
    if g.k_dim > 0 && theta.s_space().unit_matrix().is_some() {
        let budget = cfg.budget();
        let (kk, rr) = g.phi.out_shape();
        let p = cb_norm(&g.phi, &budget);
        let t = cb_lower_positive(theta, kk.max(rr), &budget)?;
        cb_consistent =
            Some(p.lower.powi(2) <= t.upper + CB_SLACK && p.upper.powi(2) >= t.lower - CB_SLACK);
        phi_cb = Some(p);
        theta_cb = Some(t);
    }
    let report = GnsReport {
        k_dim: g.k_dim,
        reconstruction: g.reconstruction,
        unital_residual: g.unital_residual,
        psi_choi_min: g.psi_choi_min,
        psi_cp: g.psi_cp,
        phi_cb,
        theta_cb,
        cb_consistent,
        files: Vec::new(),
    };
    Ok((report, g))
}

pub fn cmd_gns(file: &Path, out_dir: &Path, cfg: &RunConfig) -> CliResult<GnsReport> {
    let theta: TrilinearForm = load_json(file)?;
    let (mut report, g) = gns_analyse(&theta, cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|source| CliError::Io { path: out_dir.to_path_buf(), source })?;
    let mut write = |name: &str, text: String| -> CliResult<()> {
        let p = out_dir.join(name);
        write_file(&p, &text)?;
        report.files.push(p);
        Ok(())
    };
    write("phi.json", serde_json::to_string_pretty(&g.phi).expect("map serialises"))?;
    write("psi.json", serde_json::to_string_pretty(&g.psi).expect("map serialises"))?;
    write("gram.json", serde_json::to_string_pretty(&g.gram).expect("matrix serialises"))?;
    Ok(report)
}

// --------------------------------------------------------------------- norms

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormsReport {
    pub level: usize,
    pub sym: NormInterval,
    pub haagerup_upper: f64,
    pub mult_norm: Option<f64>,
}

impl Tabular for NormsReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["level", "sym_lower", "sym_upper", "haagerup_upper", "mult_norm"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.level.to_string(),
            fmt_f64(self.sym.lower),
            fmt_f64(self.sym.upper),
            fmt_f64(self.haagerup_upper),
            self.mult_norm.map(fmt_f64).unwrap_or_default(),
        ]]
    }
}

pub fn cmd_norms(file: &Path, cfg: &RunConfig) -> CliResult<NormsReport> {
    let u: TensorElement = load_json(file)?;
    let sym = sym_norm(&u, &cfg.budget());
    let (haagerup_upper, _) = haagerup_upper(&u);
    let mult_norm = u.mult().map(|m| op_norm(&m));
    Ok(NormsReport { level: u.level(), sym, haagerup_upper, mult_norm })
}

// ---------------------------------------------------------------- tro-verify

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TroEntry {
    pub m: String,
    pub s: String,
    /// Ambient size h of M ⊆ B(ℂʰ, ℂᵏ); the collapse lands in Mₕ.
    pub h: usize,
    pub report: TroCollapseReport,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TroVerifyReport {
    pub entries: Vec<TroEntry>,
    pub truncated_by_budget: bool,
}

impl Tabular for TroVerifyReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["m", "s", "samples", "target_dim", "max_pair_excess", "identity_gap", "forward_min_eigenvalue", "backward_residual", "passed"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.entries
            .iter()
            .map(|e| {
                let r = &e.report;
                vec![
                    e.m.clone(),
                    e.s.clone(),
                    r.samples.to_string(),
                    r.target_dim.to_string(),
                    fmt_f64(r.max_pair_excess),
                    fmt_f64(r.identity_gap),
                    fmt_f64(r.forward_min_eigenvalue),
                    r.backward_residual.map(fmt_f64).unwrap_or_default(),
                    r.passed.to_string(),
                ]
            })
            .collect()
    }
}

pub const DEFAULT_TRO_PAIRS: [(&str, &str); 3] = [("C2", "M2"), ("R2", "C"), ("M2", "M2")];

pub fn cmd_tro_verify(pairs: &[(String, String)], samples: usize, cfg: &RunConfig) -> CliResult<TroVerifyReport> {
    let deadline = cfg.deadline();
    let mut out = TroVerifyReport::default();
    let pairs: Vec<(String, String)> = if pairs.is_empty() {
        DEFAULT_TRO_PAIRS.iter().map(|(m, s)| (m.to_string(), s.to_string())).collect()
    } else {
        pairs.to_vec()
    };
    for (m_name, s_name) in pairs {
        if deadline.expired() {
            out.truncated_by_budget = true;
            break;
        }
        let m = TroSpace::new(Arc::new(space(&m_name)?))?;
        let s = Arc::new(space(&s_name)?.with_detected_tags());
        let report = tro_collapse_check(&m, s, samples, &cfg.budget())?;
        out.entries.push(TroEntry { m: m_name, s: s_name, h: m.space().h(), report });
    }
    Ok(out)
}

pub fn parse_tro_pair(text: &str) -> Result<(String, String), String> {
    text.split_once(':')
        .map(|(m, s)| (m.to_string(), s.to_string()))
        .ok_or_else(|| format!("expected M:S, got {text:?}"))
}

// ---------------------------------------------------------------- dual-check

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualEntry {
    pub space: String,
    pub samples: usize,
    /// Least eigenvalue of ι(Γ)(u) relative to its norm, over all samples.
    pub worst_min_eigenvalue: f64,
    pub transfer_holds: bool,
    pub pairing_rank: usize,
    pub pairing_full_rank: bool,
    pub gaps: Option<Vec<IotaGap>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DualReport {
    pub entries: Vec<DualEntry>,
    pub truncated_by_budget: bool,
}

impl Tabular for DualReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["space", "samples", "worst_min_eigenvalue", "transfer_holds", "pairing_rank", "pairing_full_rank", "disjoint_gaps"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.entries
            .iter()
            .map(|e| {
                vec![
                    e.space.clone(),
                    e.samples.to_string(),
                    fmt_f64(e.worst_min_eigenvalue),
                    e.transfer_holds.to_string(),
                    e.pairing_rank.to_string(),
                    e.pairing_full_rank.to_string(),
                    e.gaps.as_ref().map(|g| g.iter().filter(|g| g.disjoint).count().to_string()).unwrap_or_default(),
                ]
            })
            .collect()
    }
}

pub const DEFAULT_DUAL_SPACES: [&str; 3] = ["C", "R2", "C2"];

fn random_level(e: &ConcreteOpSpace, rows: usize, cols: usize, rng: &mut Rng64) -> CMatrix {
    let mut out = CMatrix::zeros(rows * e.k(), cols * e.h());
    for i in 0..rows {
        for j in 0..cols {
            let c = random_gaussian(rng, e.dim(), 1);
            out.set_block(i * e.k(), j * e.h(), &e.combine(c.as_slice()));
        }
    }
    out
}

/// x*⊙1⊙x at level n with x ∈ M_{k,n}(E), and Γ = Σ Φᵣ*⊙Φᵣ at level q.
pub fn dual_sample(e: &Arc<ConcreteOpSpace>, index: usize, seed: u64) -> CliResult<CMatrix> {
    let mut rng = seeded(seed, 0xd1a1 + index as u64);
    let s = Arc::new(ConcreteOpSpace::scalars());
    let (n, k, q, terms) = (1 + index % 2, 1 + index % 3, 1 + (index / 2) % 2, 1 + index % 2);
    let x = random_level(e, k, n, &mut rng);
    let u = TensorElement::from_blocks(e.clone(), s, n, vec![(x.clone(), CMatrix::identity(k), x)])?;
    let phis: Vec<LinMap> = (0..terms)
        .map(|_| {
            let imgs: Vec<CMatrix> = (0..e.dim()).map(|_| random_gaussian(&mut rng, q, q)).collect();
            LinMap::from_images(e.clone(), &imgs)
        })
        .collect::<opsym::Result<_>>()?;
    Ok(iota_square(&phis, &u)?)
}

pub fn cmd_dual_check(spaces: &[String], samples: usize, cfg: &RunConfig) -> CliResult<DualReport> {
    let deadline = cfg.deadline();
    let mut out = DualReport::default();
    let names: Vec<String> =
        if spaces.is_empty() { DEFAULT_DUAL_SPACES.iter().map(|s| s.to_string()).collect() } else { spaces.to_vec() };
    for name in names {
        let e = Arc::new(space(&name)?);
        let mut worst = f64::INFINITY;
        let mut done = 0;
        for t in 0..samples {
            if deadline.expired() {
                out.truncated_by_budget = true;
                break;
            }
            let v = dual_sample(&e, t, cfg.seed)?;
            worst = worst.min(min_eigenvalue(&v) / op_norm(&v).max(1.0));
            done += 1;
        }
        let dual = dual_space(e.clone());
        let rank = pairing_rank(&dual)?;
        let gaps = match iota_gap_search(&e, &cfg.budget()) {
            Ok(g) => Some(g),
            Err(Error::UnsupportedSpace(_)) => None,
            Err(err) => return Err(err.into()),
        };
        out.entries.push(DualEntry {
            space: name,
            samples: done,
            worst_min_eigenvalue: worst,
            transfer_holds: worst >= -cfg.tol,
            pairing_rank: rank,
            pairing_full_rank: rank == e.dim() * e.dim(),
            gaps,
        });
    }
    Ok(out)
}

// ------------------------------------------------------------- balanced-demo

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BalancedDemo {
    pub balanced: NormInterval,
    pub rewrite: Option<String>,
    pub sym: NormInterval,
    pub polarised_value: f64,
    pub mult_norm: f64,
    pub collapse_holds: bool,
}

impl Tabular for BalancedDemo {
    fn header(&self) -> Vec<&'static str> {
        vec!["balanced_lower", "balanced_upper", "sym_lower", "sym_upper", "polarised_value", "collapse_holds"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            fmt_f64(self.balanced.lower),
            fmt_f64(self.balanced.upper),
            fmt_f64(self.sym.lower),
            fmt_f64(self.sym.upper),
            fmt_f64(self.polarised_value),
            self.collapse_holds.to_string(),
        ]]
    }
}

pub fn cmd_balanced_demo(cfg: &RunConfig) -> CliResult<BalancedDemo> {
    let (ctx, u, y, x) = disjoint_corners_instance()?;
    let budget = cfg.budget();
    let balanced = balanced_seminorm(&u, &ctx, &budget)?;
    let rewrite = match &balanced.upper_witness {
        Some(UpperWitness::Formula { description, .. }) => Some(description.clone()),
        _ => None,
    };
    let sym = sym_norm(&u, &budget);
    let (f, g) = find_disjoint_functionals(&x, &y, cfg.tol)?;
    let pair = polarised_witness(ctx.e_space(), ctx.s_space(), &f, &g, &x, &y)?;
    let polarised_value = op_norm(&eval_pair(&pair, &u)?);
    let mult_norm = u.mult().map(|m| op_norm(&m)).unwrap_or(0.0);
    let collapse_holds = balanced.upper == 0.0 && sym.lower.max(polarised_value) >= 0.25 - 1e-6;
    Ok(BalancedDemo { balanced, rewrite, sym, polarised_value, mult_norm, collapse_holds })
}
