//! Numerical toolkit for symmetrised tensor products of operator spaces.
//!
//! Spaces are concrete matrix subspaces `E ⊆ B(ℂʰ, ℂᵏ)`. Norms of tensors in
//! `E* ⊙ S ⊙ E` are bracketed by certified intervals, positivity in the
//! matricial cones is certified or refuted with replayable witnesses, and
//! completely positive trilinear maps are factorised constructively.

pub mod cert;
pub mod conic;
pub mod cones;
pub mod cpmaps;
pub mod dualops;
pub mod error;
pub mod fnspace;
pub mod matcore;
pub mod opspace;
pub mod rng;
pub mod symnorm;
pub mod trilinear;
pub mod tro;

pub use cert::{Budget, LowerWitness, NormInterval, UpperWitness};
pub use cones::{ConeCertificate, ConeWitness, Verdict};
pub use cpmaps::{LinMap, StinespringUcp, WittstockMap};
pub use dualops::DualSpace;
pub use error::{Error, Result};
pub use fnspace::{DiscreteMeasure, KernelFunction};
pub use matcore::{CMatrix, HermEig, Svd, C64};
pub use opspace::{ConcreteOpSpace, LevelElement, SpaceTags};
pub use symnorm::{AdmissiblePair, TensorElement};
pub use trilinear::TrilinearForm;
pub use tro::{BalancedContext, TroSpace};
