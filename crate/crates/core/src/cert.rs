//! Norm intervals, search budgets and the witnesses that back them.

use serde::{Deserialize, Serialize};

use crate::matcore::CMatrix;
use crate::symnorm::{AdmissiblePair, Factorization};

/// Effort knobs shared by every randomised search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub seed: u64,
    pub restarts: usize,
    pub iterations: usize,
    /// Largest multiplicity m in φ(x) = Z₂*(x⊗Iₘ)Z₁.
    pub max_phi_mult: usize,
    /// Largest Stinespring multiplicity r for ψ.
    pub max_psi_mult: usize,
    /// Largest truncation level k for the ‖Φ‖₊ ascent.
    pub truncation: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { seed: 0x5eed, restarts: 32, iterations: 200, max_phi_mult: 4, max_psi_mult: 4, truncation: 4 }
    }
}

impl Budget {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    /// A cheap budget for inner loops and tests.
    pub fn quick() -> Self {
        Budget { restarts: 6, iterations: 60, max_phi_mult: 2, max_psi_mult: 2, ..Default::default() }
    }
}

/// Relative stabilisation slack used for heuristic upper ends.
pub const EPS_REPORT: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum LowerWitness {
    /// A contraction at some matrix level whose image attains the bound.
    LevelInput { level: usize, input: CMatrix },
    /// An admissible pair whose evaluation attains the bound.
    Pair(Box<AdmissiblePair>),
    /// 0 ⪯ T ⪯ I and unit vectors with |⟨Φ(T)ξ, η⟩| equal to the bound.
    PlusVectors { k: usize, t: CMatrix, xi: CMatrix, eta: CMatrix },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum UpperWitness {
    /// u = y*⊙s⊙x with ‖y‖‖s‖‖x‖ equal to the bound.
    Factorization(Box<Factorization>),
    /// Closed-form bound assembled from listed quantities.
    Formula { description: String, terms: Vec<f64> },
    /// Stabilised ascent; not a certificate.
    Heuristic { agreeing_restarts: usize },
}

/// A two-sided estimate of a norm.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormInterval {
    pub lower: f64,
    pub upper: f64,
    pub upper_certified: bool,
    pub lower_witness: Option<LowerWitness>,
    pub upper_witness: Option<UpperWitness>,
}

impl NormInterval {
    pub fn exact_zero() -> Self {
        NormInterval {
            lower: 0.0,
            upper: 0.0,
            upper_certified: true,
            lower_witness: None,
            upper_witness: Some(UpperWitness::Formula { description: "zero element".into(), terms: vec![] }),
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lower - slack && x <= self.upper + slack
    }

    pub fn overlaps(&self, other: &NormInterval, slack: f64) -> bool {
        self.lower <= other.upper + slack && other.lower <= self.upper + slack
    }

    pub fn is_consistent(&self) -> bool {
        self.lower <= self.upper + 1e-9
    }
}
