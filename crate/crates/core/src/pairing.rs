//! Reaction accounting: PTR/ETnoD counts from precursors and pairing of
//! complementary c/z fragments.
//!
//! Fragments are paired so as to minimize the number of reactions needed to
//! explain them. Every c–z pair and every fragment left with an unobserved
//! (charge-depleted) cofragment costs `Q − q_c − q_z` (with `q = 0` for the
//! missing side), so the total cost equals a constant minus `Q` times the
//! matched c–z intensity, and the minimization reduces to a maximum flow.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chemistry::FragmentKind;
use crate::error::{invalid, Result};
use crate::maxflow::FlowNetwork;
use crate::qp::{self, QpProblem, QpSettings, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecursorObservation {
    pub q: u32,
    pub g: i32,
    pub intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragmentObservation {
    pub kind: FragmentKind,
    pub site: usize,
    pub q: u32,
    pub g: i32,
    pub intensity: f64,
}

/// Reactions undergone by an unfragmented precursor: `(N_PTR, N_ETnoD)`.
pub fn precursor_reaction_counts(q: u32, g: i32, big_q: u32) -> Result<(u32, u32)> {
    if q < 1 || g < 0 || q + g as u32 > big_q {
        return invalid(format!("precursor state q={q}, g={g} impossible for Q={big_q}"));
    }
    Ok((big_q - q - g as u32, g as u32))
}

/// Reactions undergone by a c/z pair in total: `(N_PTR, N_ETnoD)`, or `None`
/// when the pair is inconsistent with the precursor charge.
pub fn pair_reaction_counts(q_c: u32, g_c: i32, q_z: u32, g_z: i32, big_q: u32) -> Option<(u32, u32)> {
    let etnod = g_c as i64 + g_z as i64;
    let ptr = big_q as i64 - 1 - q_c as i64 - q_z as i64 - etnod;
    (ptr >= 0 && etnod >= 0).then_some((ptr as u32, etnod as u32))
}

/// `Σ N_ETnoD·I / Σ (N_ETnoD + N_PTR)·I` over precursor species, `None` when
/// no observed precursor reacted.
pub fn etnod_probability_from_precursors(
    observations: &[PrecursorObservation],
    big_q: u32,
) -> Result<Option<f64>> {
    let (mut num, mut den) = (0.0, 0.0);
    for o in observations {
        let (ptr, etnod) = precursor_reaction_counts(o.q, o.g, big_q)?;
        num += etnod as f64 * o.intensity;
        den += (etnod + ptr) as f64 * o.intensity;
    }
    Ok((den > 0.0).then(|| num / den))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingAlgorithm {
    Basic,
    Intermediate,
    Advanced,
}

impl std::str::FromStr for PairingAlgorithm {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(PairingAlgorithm::Basic),
            "intermediate" => Ok(PairingAlgorithm::Intermediate),
            "advanced" => Ok(PairingAlgorithm::Advanced),
            other => invalid(format!("unknown pairing algorithm `{other}`")),
        }
    }
}

/// Observed fragment in the pairing graph. `g` is `None` when quenched
/// charges were aggregated away.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingNode {
    pub kind: FragmentKind,
    pub site: usize,
    pub q: u32,
    pub g: Option<i32>,
    pub intensity: f64,
}

/// Intensity assigned to one pairing; `c` or `z` is `None` for an
/// unobserved cofragment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFlow {
    pub site: usize,
    pub c: Option<usize>,
    pub z: Option<usize>,
    pub flow: f64,
    /// `Q − q_c − q_z`: reactions plus the fragmentation itself.
    pub cost: u32,
    pub n_ptr: Option<u32>,
    pub n_etnod: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub algorithm: PairingAlgorithm,
    pub precursor_charge: u32,
    pub nodes: Vec<PairingNode>,
    pub pairs: Vec<PairFlow>,
    /// Intensity routed along observed c–z edges.
    pub matched_flow: f64,
    /// `Σ cost·flow` over all pairings, unobserved cofragments included.
    pub total_cost: f64,
    /// PTR and ETnoD intensities implied by observed c–z pairs.
    pub fragment_ptr: f64,
    pub fragment_etnod: f64,
    pub etd_by_site: BTreeMap<usize, f64>,
    /// Intensity of c fragments that lost a hydrogen (g = −1), folded into
    /// g = 0 before pairing.
    pub htr_c_intensity: f64,
    pub status: SolveStatus,
}

impl PairingResult {
    pub fn etd_intensity(&self) -> f64 {
        self.etd_by_site.values().sum()
    }

    /// `Σ (N_PTR + N_ETnoD)·flow` over all pairings.
    pub fn reaction_count(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| (p.cost as f64 - 1.0) * p.flow)
            .sum()
    }

    fn empty(algorithm: PairingAlgorithm, big_q: u32) -> Self {
        PairingResult {
            algorithm,
            precursor_charge: big_q,
            nodes: Vec::new(),
            pairs: Vec::new(),
            matched_flow: 0.0,
            total_cost: 0.0,
            fragment_ptr: 0.0,
            fragment_etnod: 0.0,
            etd_by_site: BTreeMap::new(),
            htr_c_intensity: 0.0,
            status: SolveStatus::Optimal,
        }
    }
}

struct Graph {
    nodes: Vec<PairingNode>,
    /// `(c node, z node)` of admissible observed pairs.
    edges: Vec<(usize, usize)>,
    htr: f64,
}

fn build_graph(fragments: &[FragmentObservation], big_q: u32, keep_g: bool) -> Graph {
    let mut htr = 0.0;
    let mut agg: BTreeMap<(usize, FragmentKind, u32, Option<i32>), f64> = BTreeMap::new();
    for f in fragments {
        if f.intensity <= 0.0 {
            continue;
        }
        let g = if f.kind == FragmentKind::C && f.g < 0 {
            htr += f.intensity;
            0
        } else {
            f.g
        };
        *agg.entry((f.site, f.kind, f.q, keep_g.then_some(g))).or_insert(0.0) += f.intensity;
    }
    let nodes: Vec<PairingNode> = agg
        .into_iter()
        .map(|((site, kind, q, g), intensity)| PairingNode {
            kind,
            site,
            q,
            g,
            intensity,
        })
        .collect();
    let mut edges = Vec::new();
    for (ci, c) in nodes.iter().enumerate().filter(|(_, n)| n.kind == FragmentKind::C) {
        for (zi, z) in nodes.iter().enumerate() {
            if z.kind != FragmentKind::Z || z.site != c.site {
                continue;
            }
            let ok = match (c.g, z.g) {
                (Some(gc), Some(gz)) => pair_reaction_counts(c.q, gc, z.q, gz, big_q).is_some(),
                _ => c.q + z.q < big_q,
            };
            if ok {
                edges.push((ci, zi));
            }
        }
    }
    Graph { nodes, edges, htr }
}

/// Turns observed-edge flows into the full set of pairings: leftover node
/// intensity goes to an unobserved cofragment.
fn assemble(
    algorithm: PairingAlgorithm,
    graph: Graph,
    edge_flows: &[f64],
    big_q: u32,
    status: SolveStatus,
) -> PairingResult {
    let mut result = PairingResult::empty(algorithm, big_q);
    result.status = status;
    let mut used = vec![0.0; graph.nodes.len()];
    let eps = 1e-12 * graph.nodes.iter().map(|n| n.intensity).fold(0.0, f64::max);
    for (&(ci, zi), &flow) in graph.edges.iter().zip(edge_flows) {
        if flow <= eps {
            continue;
        }
        let (c, z) = (&graph.nodes[ci], &graph.nodes[zi]);
        used[ci] += flow;
        used[zi] += flow;
        let counts = match (c.g, z.g) {
            (Some(gc), Some(gz)) => pair_reaction_counts(c.q, gc, z.q, gz, big_q),
            _ => None,
        };
        result.pairs.push(PairFlow {
            site: c.site,
            c: Some(ci),
            z: Some(zi),
            flow,
            cost: big_q - c.q - z.q,
            n_ptr: counts.map(|x| x.0),
            n_etnod: counts.map(|x| x.1),
        });
        result.matched_flow += flow;
        if let Some((ptr, etnod)) = counts {
            result.fragment_ptr += ptr as f64 * flow;
            result.fragment_etnod += etnod as f64 * flow;
        }
    }
    for (i, n) in graph.nodes.iter().enumerate() {
        let rest = n.intensity - used[i];
        if rest <= eps {
            continue;
        }
        let (c, z) = match n.kind {
            FragmentKind::C => (Some(i), None),
            FragmentKind::Z => (None, Some(i)),
        };
        result.pairs.push(PairFlow {
            site: n.site,
            c,
            z,
            flow: rest,
            cost: big_q - n.q,
            n_ptr: None,
            n_etnod: None,
        });
    }
    for p in &result.pairs {
        result.total_cost += p.cost as f64 * p.flow;
        *result.etd_by_site.entry(p.site).or_insert(0.0) += p.flow;
    }
    result.nodes = graph.nodes;
    result.htr_c_intensity = graph.htr;
    result
}

fn max_flow_pairing(algorithm: PairingAlgorithm, graph: Graph, big_q: u32) -> PairingResult {
    // Source 0, sink 1, fragment nodes from 2 on.
    let mut net = FlowNetwork::new(graph.nodes.len() + 2);
    for (i, n) in graph.nodes.iter().enumerate() {
        match n.kind {
            FragmentKind::C => net.add_edge(0, i + 2, n.intensity),
            FragmentKind::Z => net.add_edge(i + 2, 1, n.intensity),
        };
    }
    let ids: Vec<usize> = graph
        .edges
        .iter()
        .map(|&(c, z)| net.add_edge(c + 2, z + 2, f64::INFINITY))
        .collect();
    net.max_flow(0, 1);
    let flows: Vec<f64> = ids.iter().map(|&e| net.flow(e)).collect();
    assemble(algorithm, graph, &flows, big_q, SolveStatus::Optimal)
}

/// Pairing with quenched charges aggregated away: nodes are `(site, kind,
/// q)`, edges require `q_c + q_z + 1 ≤ Q`.
pub fn pair_basic(fragments: &[FragmentObservation], big_q: u32) -> PairingResult {
    max_flow_pairing(PairingAlgorithm::Basic, build_graph(fragments, big_q, false), big_q)
}

/// Pairing over `(site, kind, q, g)` nodes; an edge is admissible when both
/// implied reaction counts are non-negative.
pub fn pair_intermediate(fragments: &[FragmentObservation], big_q: u32) -> PairingResult {
    max_flow_pairing(PairingAlgorithm::Intermediate, build_graph(fragments, big_q, true), big_q)
}

/// Intermediate pairing with lasso (`lambda1`) and ridge (`lambda2`)
/// penalties on observed c–z flows, solved as a convex QP:
///
/// ```text
/// minimize Σ_e (λ1 − Q)·f_e + λ2·f_e²   s.t.  Σ_{e∋n} f_e ≤ I_n,  f ≥ 0
/// ```
///
/// The `−Q` term is the reaction cost saved by each unit of pairing.
pub fn pair_advanced(
    fragments: &[FragmentObservation],
    big_q: u32,
    lambda1: f64,
    lambda2: f64,
    settings: QpSettings,
) -> Result<PairingResult> {
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return invalid("pairing penalties must be non-negative");
    }
    let graph = build_graph(fragments, big_q, true);
    if graph.edges.is_empty() {
        let flows = vec![];
        return Ok(assemble(PairingAlgorithm::Advanced, graph, &flows, big_q, SolveStatus::Optimal));
    }
    let ne = graph.edges.len();
    let nn = graph.nodes.len();
    let n = ne + nn;
    let scale = graph.nodes.iter().map(|x| x.intensity).fold(0.0, f64::max);
    let mut h = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for e in 0..ne {
        h[(e, e)] = 2.0 * lambda2 * scale;
        c[e] = lambda1 - big_q as f64;
    }
    let mut a = DMatrix::zeros(nn, n);
    for (e, &(ci, zi)) in graph.edges.iter().enumerate() {
        a[(ci, e)] = 1.0;
        a[(zi, e)] = 1.0;
    }
    for i in 0..nn {
        a[(i, ne + i)] = 1.0;
    }
    let b = DVector::from_iterator(nn, graph.nodes.iter().map(|x| x.intensity / scale));
    let sol = qp::solve(&QpProblem::new(h, c, a, b), settings);

    // Clip to the capacities so leftover intensities stay non-negative.
    let mut flows: Vec<f64> = (0..ne).map(|e| sol.x[e].max(0.0) * scale).collect();
    let mut load = vec![0.0; nn];
    for (e, &(ci, zi)) in graph.edges.iter().enumerate() {
        load[ci] += flows[e];
        load[zi] += flows[e];
    }
    for (e, &(ci, zi)) in graph.edges.iter().enumerate() {
        let shrink = [ci, zi]
            .iter()
            .map(|&i| {
                if load[i] > graph.nodes[i].intensity {
                    graph.nodes[i].intensity / load[i]
                } else {
                    1.0
                }
            })
            .fold(1.0, f64::min);
        flows[e] *= shrink;
    }
    Ok(assemble(PairingAlgorithm::Advanced, graph, &flows, big_q, sol.status))
}

/// Reaction-level estimates combining precursor and fragment evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionSummary {
    pub intensity_ptr: f64,
    pub intensity_etnod: f64,
    pub intensity_etd: f64,
    pub precursor_ptr: f64,
    pub precursor_etnod: f64,
    pub fragment_ptr: f64,
    pub fragment_etnod: f64,
    /// Reacted but unfragmented precursor intensity.
    pub reacted_precursor_intensity: f64,
    pub unreacted_precursor_intensity: f64,
    pub htr_c_intensity: f64,
    /// `ETnoD / (ETnoD + PTR)`; `None` when neither was observed.
    pub p_etnod_given_reaction: Option<f64>,
    /// ETD intensity per cleavage site, normalized to sum to one.
    pub frag_prob: BTreeMap<usize, f64>,
    /// `ETD / (ETD + reacted unfragmented precursors)`.
    pub p_fragmentation: Option<f64>,
}

impl ReactionSummary {
    /// `p_ptr_given_reaction`, the complement of the ETnoD branching ratio.
    pub fn p_ptr_given_reaction(&self) -> Option<f64> {
        self.p_etnod_given_reaction.map(|p| 1.0 - p)
    }
}

pub fn reaction_summary(
    precursors: &[PrecursorObservation],
    pairing: &PairingResult,
    big_q: u32,
) -> Result<ReactionSummary> {
    if pairing.precursor_charge != big_q {
        return invalid("pairing was computed for a different precursor charge");
    }
    let (mut precursor_ptr, mut precursor_etnod) = (0.0, 0.0);
    let (mut reacted, mut unreacted) = (0.0, 0.0);
    for o in precursors {
        let (ptr, etnod) = precursor_reaction_counts(o.q, o.g, big_q)?;
        precursor_ptr += ptr as f64 * o.intensity;
        precursor_etnod += etnod as f64 * o.intensity;
        if ptr + etnod > 0 {
            reacted += o.intensity;
        } else {
            unreacted += o.intensity;
        }
    }
    let intensity_ptr = precursor_ptr + pairing.fragment_ptr;
    let intensity_etnod = precursor_etnod + pairing.fragment_etnod;
    let intensity_etd = pairing.etd_intensity();
    let ratio = |num: f64, den: f64| (den > 0.0).then(|| (num / den).clamp(0.0, 1.0));
    let frag_prob = if intensity_etd > 0.0 {
        pairing
            .etd_by_site
            .iter()
            .map(|(&s, &v)| (s, v / intensity_etd))
            .collect()
    } else {
        BTreeMap::new()
    };
    Ok(ReactionSummary {
        intensity_ptr,
        intensity_etnod,
        intensity_etd,
        precursor_ptr,
        precursor_etnod,
        fragment_ptr: pairing.fragment_ptr,
        fragment_etnod: pairing.fragment_etnod,
        reacted_precursor_intensity: reacted,
        unreacted_precursor_intensity: unreacted,
        htr_c_intensity: pairing.htr_c_intensity,
        p_etnod_given_reaction: ratio(intensity_etnod, intensity_etnod + intensity_ptr),
        frag_prob,
        p_fragmentation: ratio(intensity_etd, intensity_etd + reacted),
    })
}
