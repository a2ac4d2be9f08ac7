//! Penalized least-squares deconvolution of one graph component.
//!
//! For every component the species intensities `α` and isotopologue flows
//! `x` minimize
//!
//! ```text
//! Σ_G (G_intensity − Σ_{I↔G} x_G^I)² + L1x·Σx + L1α·Σα + L2x·Σx² + L2α·Σα²
//! ```
//!
//! subject to `α_M·p_M^I = Σ_G x_G^I` and `x ≥ 0`. Flows of isotopologues
//! with a single grouping are substituted by `α·p` before solving. An
//! isotopologue with no grouping sends its intensity to an implicit grouping
//! of zero intensity, so predicted signal where nothing was observed is
//! penalized instead of forcing `α = 0`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assignment::DeconvolutionGraph;
use crate::qp::{self, QpProblem, QpSettings, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub l1_x: f64,
    pub l1_alpha: f64,
    pub l2_x: f64,
    pub l2_alpha: f64,
}

impl Default for Penalties {
    fn default() -> Self {
        Penalties::uniform(0.001)
    }
}

impl Penalties {
    pub fn uniform(value: f64) -> Self {
        Penalties {
            l1_x: value,
            l1_alpha: value,
            l2_x: value,
            l2_alpha: value,
        }
    }

    pub fn zero() -> Self {
        Penalties::uniform(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub penalties: Penalties,
    pub qp: QpSettings,
    /// Estimates below this fraction of the component intensity are reported
    /// as exactly zero.
    pub zero_threshold: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            penalties: Penalties::default(),
            qp: QpSettings::default(),
            zero_threshold: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub isotopologue: usize,
    pub grouping: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeconvolutionSolution {
    /// External species id → estimated intensity.
    pub alpha: BTreeMap<usize, f64>,
    /// Flows on `I–G` edges; indices are local to the component.
    pub flows: Vec<Flow>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl DeconvolutionSolution {
    /// Total flow out of every grouping.
    pub fn outflows(&self, graph: &DeconvolutionGraph) -> Vec<f64> {
        let mut out = vec![0.0; graph.groupings.len()];
        for f in &self.flows {
            out[f.grouping] += f.value;
        }
        out
    }
}

/// Value of the penalized objective for given `α` (by local species index)
/// and flows.
pub fn objective_value(
    graph: &DeconvolutionGraph,
    alpha: &[f64],
    flows: &[Flow],
    penalties: &Penalties,
) -> f64 {
    let mut outflow = vec![0.0; graph.groupings.len()];
    let mut iso_flow = vec![0.0; graph.isotopologues.len()];
    for f in flows {
        outflow[f.grouping] += f.value;
        iso_flow[f.isotopologue] += f.value;
    }
    let mut total = 0.0;
    for (g, grp) in graph.groupings.iter().enumerate() {
        total += (grp.intensity - outflow[g]).powi(2);
    }
    let mut sum_x = 0.0;
    let mut sum_x2: f64 = flows.iter().map(|f| f.value * f.value).sum();
    for (i, iso) in graph.isotopologues.iter().enumerate() {
        if iso.groupings.is_empty() {
            let phantom = alpha[iso.species] * iso.probability;
            total += phantom * phantom;
            sum_x += phantom;
            sum_x2 += phantom * phantom;
        } else {
            sum_x += iso_flow[i];
        }
    }
    total
        + penalties.l1_x * sum_x
        + penalties.l2_x * sum_x2
        + penalties.l1_alpha * alpha.iter().sum::<f64>()
        + penalties.l2_alpha * alpha.iter().map(|a| a * a).sum::<f64>()
}

/// Solves the deconvolution problem of one connected component.
pub fn solve_component(graph: &DeconvolutionGraph, settings: &SolverSettings) -> DeconvolutionSolution {
    let pen = settings.penalties;
    let ns = graph.species.len();
    if ns == 0 {
        return DeconvolutionSolution {
            alpha: BTreeMap::new(),
            flows: Vec::new(),
            objective: 0.0,
            status: SolveStatus::Optimal,
            iterations: 0,
        };
    }

    // Explicit flow variables exist only for isotopologues with ≥ 2 groupings.
    let mut edge_vars: Vec<(usize, usize)> = Vec::new();
    let mut multi: Vec<usize> = Vec::new();
    for (i, iso) in graph.isotopologues.iter().enumerate() {
        if iso.groupings.len() >= 2 {
            multi.push(i);
            for &g in &iso.groupings {
                edge_vars.push((i, g));
            }
        }
    }
    let nv = ns + edge_vars.len();
    let component_intensity = graph.grouping_intensity();
    let scale = graph
        .groupings
        .iter()
        .map(|g| g.intensity)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    // Rows of the design: outflow of each grouping as a linear form in v.
    let mut design = DMatrix::<f64>::zeros(graph.groupings.len(), nv);
    let mut quad_diag = DVector::<f64>::zeros(nv);
    let mut lin = DVector::<f64>::zeros(nv);
    for iso in &graph.isotopologues {
        let s = iso.species;
        let p = iso.probability;
        match iso.groupings.len() {
            0 => {
                quad_diag[s] += (1.0 + pen.l2_x) * p * p;
                lin[s] += pen.l1_x * p / scale;
            }
            1 => {
                design[(iso.groupings[0], s)] += p;
                quad_diag[s] += pen.l2_x * p * p;
                lin[s] += pen.l1_x * p / scale;
            }
            _ => {}
        }
    }
    for (k, &(_, g)) in edge_vars.iter().enumerate() {
        let v = ns + k;
        design[(g, v)] += 1.0;
        quad_diag[v] += pen.l2_x;
        lin[v] += pen.l1_x / scale;
    }
    for s in 0..ns {
        quad_diag[s] += pen.l2_alpha;
        lin[s] += pen.l1_alpha / scale;
    }
    let target = DVector::from_iterator(
        graph.groupings.len(),
        graph.groupings.iter().map(|g| g.intensity / scale),
    );
    let mut h = design.transpose() * &design;
    for v in 0..nv {
        h[(v, v)] += quad_diag[v];
    }
    h *= 2.0;
    let c = lin - 2.0 * design.transpose() * target;

    let mut a = DMatrix::<f64>::zeros(multi.len(), nv);
    let mut row_of = vec![usize::MAX; graph.isotopologues.len()];
    for (r, &i) in multi.iter().enumerate() {
        row_of[i] = r;
        let iso = &graph.isotopologues[i];
        a[(r, iso.species)] = iso.probability;
    }
    for (k, &(i, _)) in edge_vars.iter().enumerate() {
        a[(row_of[i], ns + k)] = -1.0;
    }
    let b = DVector::zeros(multi.len());

    let sol = qp::solve(&QpProblem::new(h, c, a, b), settings.qp);

    // Unscale, clip, and make the flow equalities exact.
    let zero_floor = settings.zero_threshold * component_intensity;
    let alpha: Vec<f64> = (0..ns)
        .map(|s| {
            let v = sol.x[s].max(0.0) * scale;
            if v < zero_floor {
                0.0
            } else {
                v
            }
        })
        .collect();
    let mut flows = Vec::new();
    let mut k = 0;
    for (i, iso) in graph.isotopologues.iter().enumerate() {
        let target = alpha[iso.species] * iso.probability;
        match iso.groupings.len() {
            0 => {}
            1 => flows.push(Flow {
                isotopologue: i,
                grouping: iso.groupings[0],
                value: target,
            }),
            d => {
                let raw: Vec<f64> = (0..d).map(|j| sol.x[ns + k + j].max(0.0)).collect();
                let total: f64 = raw.iter().sum();
                for (j, &g) in iso.groupings.iter().enumerate() {
                    let value = if total > 0.0 {
                        raw[j] / total * target
                    } else {
                        target / d as f64
                    };
                    flows.push(Flow {
                        isotopologue: i,
                        grouping: g,
                        value,
                    });
                }
                k += d;
            }
        }
    }
    let objective = objective_value(graph, &alpha, &flows, &pen);
    DeconvolutionSolution {
        alpha: graph
            .species
            .iter()
            .zip(&alpha)
            .map(|(node, &a)| (node.id, a))
            .collect(),
        flows,
        objective,
        status: sol.status,
        iterations: sol.iterations,
    }
}

/// Residual statistics of a fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub abs_error: f64,
    pub overestimates: f64,
    pub underestimates: f64,
    pub abs_error_over_tic: f64,
    pub abs_error_over_explainable: f64,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub undefined_ratio: bool,
}

impl FitDiagnostics {
    /// Diagnostics from per-grouping `(observed, fitted)` pairs.
    pub fn from_residuals(
        pairs: impl IntoIterator<Item = (f64, f64)>,
        tic: f64,
        explainable: f64,
    ) -> Self {
        let mut d = FitDiagnostics::default();
        for (observed, fitted) in pairs {
            let r = fitted - observed;
            if r > 0.0 {
                d.overestimates += r;
            } else {
                d.underestimates -= r;
            }
        }
        d.abs_error = d.overestimates + d.underestimates;
        let ratio = |den: f64, undefined: &mut bool| {
            if den > 0.0 {
                d.abs_error / den
            } else {
                *undefined = true;
                0.0
            }
        };
        let mut undefined = false;
        d.abs_error_over_tic = ratio(tic, &mut undefined);
        d.abs_error_over_explainable = ratio(explainable, &mut undefined);
        d.undefined_ratio = undefined;
        d
    }
}

pub fn fit_diagnostics(
    solution: &DeconvolutionSolution,
    graph: &DeconvolutionGraph,
    tic: f64,
    explainable: f64,
) -> FitDiagnostics {
    let out = solution.outflows(graph);
    FitDiagnostics::from_residuals(
        graph.groupings.iter().zip(out).map(|(g, o)| (g.intensity, o)),
        tic,
        explainable,
    )
}

/// Normalized l1 distance `Σ|p_k − q_k| / (Σp_k + Σq_k)`; missing keys
/// count as zero and two empty maps are at distance 0.
pub fn l1_mismatch<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut num = 0.0;
    for (k, &pv) in p {
        num += (pv - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &qv) in q {
        if !p.contains_key(k) {
            num += qv.abs();
        }
    }
    let den: f64 = p.values().sum::<f64>() + q.values().sum::<f64>();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}
