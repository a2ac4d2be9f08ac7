//! End-to-end analysis of one spectrum: trimming, rounding, peak
//! assignment, deconvolution, fragment pairing and reaction summary.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{build_graph_indexed, connected_components, prune_unsupported, Assignment, IsotopologueIndex};
use crate::chemistry::{generate_species, FormulaDelta, MolecularSpecies, Precursor, SpeciesKey, SpeciesKind, DEFAULT_MAX_Q_PER_BLOCK};
use crate::error::{invalid, Result};
use crate::isotopes::{envelope, Envelope, IsotopeTable};
use crate::pairing::{
    pair_advanced, pair_basic, pair_intermediate, reaction_summary, FragmentObservation, PairingAlgorithm,
    PairingResult, PrecursorObservation, ReactionSummary,
};
use crate::qp::{QpSettings, SolveStatus};
use crate::solver::{l1_mismatch, solve_component, FitDiagnostics, Penalties, SolverSettings};
use crate::spectrum::{decimal_places_for_tolerance, mz_bin, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum TrimMode {
    None,
    /// Drop peaks below an absolute intensity.
    Intensity(f64),
    /// Keep the smallest set of highest peaks covering this fraction of the
    /// total intensity.
    JointCoverage(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub sequence: String,
    pub charge: u32,
    /// Formula deltas keyed by 0-based residue index.
    pub modifications: BTreeMap<usize, FormulaDelta>,
    pub tol: f64,
    pub coverage: f64,
    /// Minimal supported envelope probability for a species to stay in the
    /// graph.
    pub min_support: f64,
    pub trim: TrimMode,
    pub penalties: Penalties,
    pub pairing: PairingAlgorithm,
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_q_per_block: u32,
    pub parallel: bool,
    pub qp: QpSettings,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            sequence: "RPKPQQFFGLM".to_string(),
            charge: 3,
            modifications: BTreeMap::new(),
            tol: 0.05,
            coverage: 0.999,
            min_support: 0.7,
            trim: TrimMode::None,
            penalties: Penalties::default(),
            pairing: PairingAlgorithm::Intermediate,
            lambda1: 0.0,
            lambda2: 0.0,
            max_q_per_block: DEFAULT_MAX_Q_PER_BLOCK,
            parallel: false,
            qp: QpSettings::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return invalid("tol must be positive");
        }
        if !(self.coverage > 0.0 && self.coverage < 1.0) {
            return invalid("coverage must lie in (0, 1)");
        }
        if !(self.min_support > 0.0 && self.min_support <= 1.0) {
            return invalid("min_support must lie in (0, 1]");
        }
        match self.trim {
            TrimMode::None => {}
            TrimMode::Intensity(c) if c >= 0.0 => {}
            TrimMode::JointCoverage(f) if (0.0..=1.0).contains(&f) => {}
            _ => return invalid("trimming value out of range"),
        }
        let p = self.penalties;
        if [p.l1_x, p.l1_alpha, p.l2_x, p.l2_alpha, self.lambda1, self.lambda2]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return invalid("penalties must be non-negative");
        }
        if self.max_q_per_block < 1 {
            return invalid("max_q_per_block must be at least 1");
        }
        Ok(())
    }

    pub fn decimal_places(&self) -> u32 {
        decimal_places_for_tolerance(self.tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesEstimate {
    pub id: usize,
    pub key: SpeciesKey,
    pub label: String,
    pub alpha: f64,
}

/// Observed versus fitted intensity of one grouping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupingFit {
    pub mz_lo: f64,
    pub mz_hi: f64,
    pub observed: f64,
    pub fitted: f64,
    pub pruned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityBudget {
    pub total: f64,
    pub trimmed: f64,
    pub orphan: f64,
    pub pruned: f64,
    /// Intensity inside some tolerance interval before pruning.
    pub explainable: f64,
    pub trim_cutoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub species: Vec<SpeciesEstimate>,
    pub groupings: Vec<GroupingFit>,
    pub diagnostics: FitDiagnostics,
    /// Normalized l1 distance between the rounded spectrum and the fitted
    /// isotopologue intensities.
    pub spectrum_mismatch: f64,
    pub budget: IntensityBudget,
    pub pairing: PairingResult,
    pub summary: ReactionSummary,
    pub components: usize,
    pub status: SolveStatus,
    #[serde(skip)]
    pub assignment: Option<Assignment>,
}

impl Analysis {
    /// True when nothing in the spectrum could be explained.
    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    pub fn alpha_by_key(&self) -> BTreeMap<SpeciesKey, f64> {
        self.species.iter().map(|s| (s.key, s.alpha)).collect()
    }
}

/// Species, envelopes and interval index for one precursor, reusable across
/// spectra.
pub struct Analyzer {
    config: AnalysisConfig,
    precursor: Precursor,
    species: Vec<MolecularSpecies>,
    envelopes: Vec<Envelope>,
    index: IsotopologueIndex,
}

impl Analyzer {
    pub fn new(config: AnalysisConfig, table: &IsotopeTable) -> Result<Self> {
        config.validate().map_err(|e| e.in_stage("config"))?;
        let precursor = Precursor::with_modifications(&config.sequence, config.charge, config.modifications.clone())
            .map_err(|e| e.in_stage("chemistry"))?;
        let species = generate_species(&precursor, config.max_q_per_block).map_err(|e| e.in_stage("chemistry"))?;
        let places = config.decimal_places();
        let build = |(i, s): (usize, &MolecularSpecies)| envelope(i, s, table, config.coverage, places);
        let envelopes: Vec<Envelope> = if config.parallel {
            species.par_iter().enumerate().map(build).collect::<Result<_>>()
        } else {
            species.iter().enumerate().map(build).collect::<Result<_>>()
        }
        .map_err(|e| e.in_stage("isotopes"))?;
        let index = IsotopologueIndex::new(&envelopes, config.tol);
        Ok(Analyzer {
            config,
            precursor,
            species,
            envelopes,
            index,
        })
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.config
    }

    pub fn precursor(&self) -> &Precursor {
        &self.precursor
    }

    pub fn species(&self) -> &[MolecularSpecies] {
        &self.species
    }

    pub fn envelopes(&self) -> &[Envelope] {
        &self.envelopes
    }

    pub fn analyze(&self, spectrum: &Spectrum) -> Result<Analysis> {
        self.analyze_with(spectrum, self.config.parallel)
    }

    /// Runs the analysis, solving components concurrently when `parallel`.
    pub fn analyze_with(&self, spectrum: &Spectrum, parallel: bool) -> Result<Analysis> {
        let cfg = &self.config;
        let total = spectrum.total_intensity();
        let (trimmed, trim_cutoff) = match cfg.trim {
            TrimMode::None => (spectrum.clone(), None),
            TrimMode::Intensity(c) => (spectrum.trim_by_intensity(c).0, Some(c)),
            TrimMode::JointCoverage(f) => {
                let (s, c) = spectrum.trim_by_joint_coverage(f);
                (s, c.is_finite().then_some(c))
            }
        };
        let places = cfg.decimal_places();
        let rounded = trimmed.round_and_aggregate(places);

        let raw = build_graph_indexed(&self.index, &self.envelopes, &rounded);
        let explainable = raw.graph.grouping_intensity();
        let pruned = prune_unsupported(&raw, cfg.min_support);
        let components = connected_components(&pruned.graph);

        let settings = SolverSettings {
            penalties: cfg.penalties,
            qp: cfg.qp,
            ..SolverSettings::default()
        };
        let solutions: Vec<_> = if parallel {
            components.par_iter().map(|c| solve_component(c, &settings)).collect()
        } else {
            components.iter().map(|c| solve_component(c, &settings)).collect()
        };

        let mut alpha: BTreeMap<usize, f64> = BTreeMap::new();
        let mut groupings = Vec::new();
        let mut fitted_peaks = std::collections::BTreeSet::new();
        let mut fitted_bins: BTreeMap<i64, f64> = BTreeMap::new();
        let mut status = SolveStatus::Optimal;
        for (graph, sol) in components.iter().zip(&solutions) {
            if sol.status != SolveStatus::Optimal && status == SolveStatus::Optimal {
                status = sol.status;
            }
            alpha.extend(sol.alpha.iter().map(|(&k, &v)| (k, v)));
            for (g, out) in graph.groupings.iter().zip(sol.outflows(graph)) {
                fitted_peaks.insert(g.peaks[0]);
                groupings.push(GroupingFit {
                    mz_lo: g.mz_lo,
                    mz_hi: g.mz_hi,
                    observed: g.intensity,
                    fitted: out,
                    pruned: false,
                });
            }
            for node in &graph.species {
                let a = sol.alpha[&node.id];
                for &i in &node.isotopologues {
                    let iso = &graph.isotopologues[i];
                    *fitted_bins.entry(mz_bin(iso.mz, places)).or_insert(0.0) += a * iso.probability;
                }
            }
        }
        // Groupings that lost all their species to pruning are fitted by
        // nothing.
        for g in &raw.graph.groupings {
            if !fitted_peaks.contains(&g.peaks[0]) {
                groupings.push(GroupingFit {
                    mz_lo: g.mz_lo,
                    mz_hi: g.mz_hi,
                    observed: g.intensity,
                    fitted: 0.0,
                    pruned: true,
                });
            }
        }
        groupings.sort_by(|a, b| a.mz_lo.total_cmp(&b.mz_lo));
        let diagnostics =
            FitDiagnostics::from_residuals(groupings.iter().map(|g| (g.observed, g.fitted)), total, explainable);
        let observed_bins: BTreeMap<i64, f64> =
            rounded.peaks().iter().map(|p| (mz_bin(p.mz, places), p.intensity)).collect();
        let spectrum_mismatch = l1_mismatch(&observed_bins, &fitted_bins);

        let len = self.precursor.len();
        let species: Vec<SpeciesEstimate> = alpha
            .iter()
            .map(|(&id, &a)| {
                let key = self.species[id].key;
                SpeciesEstimate {
                    id,
                    key,
                    label: key.label(len),
                    alpha: a,
                }
            })
            .collect();

        let (pairing, summary) = self.reactions(&species).map_err(|e| e.in_stage("pairing"))?;
        Ok(Analysis {
            species,
            groupings,
            diagnostics,
            spectrum_mismatch,
            budget: IntensityBudget {
                total,
                trimmed: total - trimmed.total_intensity(),
                orphan: raw.orphan_intensity,
                pruned: pruned.pruned_intensity,
                explainable,
                trim_cutoff,
            },
            pairing,
            summary,
            components: components.len(),
            status,
            assignment: Some(pruned),
        })
    }

    fn reactions(&self, species: &[SpeciesEstimate]) -> Result<(PairingResult, ReactionSummary)> {
        let cfg = &self.config;
        let mut precursors = Vec::new();
        let mut fragments = Vec::new();
        for s in species.iter().filter(|s| s.alpha > 0.0) {
            let k = s.key;
            match k.kind {
                SpeciesKind::Precursor => precursors.push(PrecursorObservation {
                    q: k.q,
                    g: k.g,
                    intensity: s.alpha,
                }),
                SpeciesKind::C | SpeciesKind::Z => fragments.push(FragmentObservation {
                    kind: if k.kind == SpeciesKind::C {
                        crate::chemistry::FragmentKind::C
                    } else {
                        crate::chemistry::FragmentKind::Z
                    },
                    site: k.site,
                    q: k.q,
                    g: k.g,
                    intensity: s.alpha,
                }),
            }
        }
        let pairing = match cfg.pairing {
            PairingAlgorithm::Basic => pair_basic(&fragments, cfg.charge),
            PairingAlgorithm::Intermediate => pair_intermediate(&fragments, cfg.charge),
            PairingAlgorithm::Advanced => pair_advanced(&fragments, cfg.charge, cfg.lambda1, cfg.lambda2, cfg.qp)?,
        };
        let summary = reaction_summary(&precursors, &pairing, cfg.charge)?;
        Ok((pairing, summary))
    }
}

/// One-shot convenience wrapper around [`Analyzer`].
pub fn analyze(spectrum: &Spectrum, config: AnalysisConfig, table: &IsotopeTable) -> Result<Analysis> {
    Analyzer::new(config, table)?.analyze(spectrum)
}
