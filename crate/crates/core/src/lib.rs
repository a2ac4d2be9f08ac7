//! Deconvolution of electron-transfer fragmentation spectra.
//!
//! The pipeline goes from a centroided spectrum to reaction estimates:
//! candidate species of a precursor are enumerated ([`chemistry`]), their
//! isotopic envelopes computed ([`isotopes`]), matched against the peaks
//! ([`assignment`]), their intensities estimated by a penalized least-squares
//! fit ([`solver`]) and finally c/z fragments paired to count PTR, ETnoD and
//! ETD events ([`pairing`]). [`simulator`] produces synthetic spectra with
//! known ground truth and [`bootstrap`] quantifies estimator variability.

pub mod assignment;
pub mod bootstrap;
pub mod chemistry;
pub mod error;
pub mod evaluation;
pub mod interval_tree;
pub mod isotopes;
pub mod maxflow;
pub mod pairing;
pub mod pipeline;
pub mod qp;
pub mod report;
pub mod simulator;
pub mod solver;
pub mod spectrum;

pub use chemistry::{Composition, FragmentKind, Precursor, SpeciesKey, SpeciesKind};
pub use error::{Error, Result};
pub use isotopes::IsotopeTable;
pub use pairing::{PairingAlgorithm, ReactionSummary};
pub use pipeline::{Analysis, AnalysisConfig, Analyzer, TrimMode};
pub use simulator::{GroundTruth, SimConfig};
pub use solver::Penalties;
pub use spectrum::{Peak, Spectrum};
