//! Peak assignment: the tripartite deconvolution graph of species,
//! isotopologues and experimental groupings.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::interval_tree::{Interval, IntervalTree};
use crate::isotopes::Envelope;
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesNode {
    /// External species identifier (index into the species list).
    pub id: usize,
    pub isotopologues: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotopologueNode {
    pub species: usize,
    pub mz: f64,
    pub probability: f64,
    pub groupings: Vec<usize>,
}

/// Experimental peaks stabbed by the same set of tolerance intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    pub peaks: Vec<usize>,
    pub mz_lo: f64,
    pub mz_hi: f64,
    pub intensity: f64,
    pub isotopologues: Vec<usize>,
}

/// Species `M`, isotopologues `I` and groupings `G`. Edges `M–I` carry the
/// isotopologue probability; edges `I–G` carry the flow variables of the
/// deconvolution problem. All indices are local to the graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeconvolutionGraph {
    pub species: Vec<SpeciesNode>,
    pub isotopologues: Vec<IsotopologueNode>,
    pub groupings: Vec<Grouping>,
}

impl DeconvolutionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    /// Adds a species with its `(mz, probability)` isotopologues; returns the
    /// local index of its first isotopologue.
    pub fn add_species(&mut self, id: usize, isotopologues: &[(f64, f64)]) -> usize {
        let local = self.species.len();
        let first = self.isotopologues.len();
        let mut iso_idx = Vec::with_capacity(isotopologues.len());
        for &(mz, probability) in isotopologues {
            iso_idx.push(self.isotopologues.len());
            self.isotopologues.push(IsotopologueNode {
                species: local,
                mz,
                probability,
                groupings: Vec::new(),
            });
        }
        self.species.push(SpeciesNode {
            id,
            isotopologues: iso_idx,
        });
        first
    }

    /// Adds a grouping adjacent to the given isotopologues.
    pub fn add_grouping(&mut self, intensity: f64, isotopologues: &[usize], peaks: Vec<usize>) -> usize {
        let g = self.groupings.len();
        let (lo, hi) = isotopologues.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let mz = self.isotopologues[i].mz;
            (lo.min(mz), hi.max(mz))
        });
        for &i in isotopologues {
            self.isotopologues[i].groupings.push(g);
        }
        self.groupings.push(Grouping {
            peaks,
            mz_lo: lo,
            mz_hi: hi,
            intensity,
            isotopologues: isotopologues.to_vec(),
        });
        g
    }

    pub fn grouping_intensity(&self) -> f64 {
        self.groupings.iter().map(|g| g.intensity).sum()
    }

    /// Total probability of a species' isotopologues adjacent to a grouping.
    pub fn support(&self, species: usize) -> f64 {
        self.species[species]
            .isotopologues
            .iter()
            .map(|&i| &self.isotopologues[i])
            .filter(|i| !i.groupings.is_empty())
            .map(|i| i.probability)
            .sum()
    }

    /// Keeps species flagged in `keep`. Groupings left without neighbours are
    /// dropped; their total intensity is returned.
    pub fn retain_species(&self, keep: &[bool]) -> (DeconvolutionGraph, f64) {
        let mut out = DeconvolutionGraph::new();
        let mut iso_map = vec![usize::MAX; self.isotopologues.len()];
        for (s, node) in self.species.iter().enumerate() {
            if !keep[s] {
                continue;
            }
            let isos: Vec<(f64, f64)> = node
                .isotopologues
                .iter()
                .map(|&i| (self.isotopologues[i].mz, self.isotopologues[i].probability))
                .collect();
            let first = out.add_species(node.id, &isos);
            for (k, &i) in node.isotopologues.iter().enumerate() {
                iso_map[i] = first + k;
            }
        }
        let mut dropped = 0.0;
        for g in &self.groupings {
            let isos: Vec<usize> = g
                .isotopologues
                .iter()
                .map(|&i| iso_map[i])
                .filter(|&i| i != usize::MAX)
                .collect();
            if isos.is_empty() {
                dropped += g.intensity;
            } else {
                let idx = out.add_grouping(g.intensity, &isos, g.peaks.clone());
                out.groupings[idx].mz_lo = g.mz_lo;
                out.groupings[idx].mz_hi = g.mz_hi;
            }
        }
        (out, dropped)
    }

    /// Node table for visualization: `node,type,label,value`.
    pub fn write_nodes_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "node,type,label,value")?;
        for (s, n) in self.species.iter().enumerate() {
            writeln!(w, "M{s},species,{},", n.id)?;
        }
        for (i, n) in self.isotopologues.iter().enumerate() {
            writeln!(w, "I{i},isotopologue,{},{}", n.mz, n.probability)?;
        }
        for (g, n) in self.groupings.iter().enumerate() {
            writeln!(w, "G{g},grouping,{}-{},{}", n.mz_lo, n.mz_hi, n.intensity)?;
        }
        Ok(())
    }

    /// Edge table for visualization: `source,target,weight`.
    pub fn write_edges_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "source,target,weight")?;
        for (i, n) in self.isotopologues.iter().enumerate() {
            writeln!(w, "M{},I{i},{}", n.species, n.probability)?;
            for &g in &n.groupings {
                writeln!(w, "I{i},G{g},")?;
            }
        }
        Ok(())
    }
}

/// Tolerance intervals `[mz - tol, mz + tol]` of every isotopologue, keyed by
/// `(envelope index, isotopologue index)`.
#[derive(Debug, Clone)]
pub struct IsotopologueIndex {
    tree: IntervalTree<(usize, usize)>,
}

impl IsotopologueIndex {
    pub fn new(envelopes: &[Envelope], tol: f64) -> Self {
        assert!(tol > 0.0, "tolerance must be positive");
        let intervals = envelopes
            .iter()
            .enumerate()
            .flat_map(|(e, env)| {
                env.isotopologues.iter().enumerate().map(move |(i, iso)| Interval {
                    lo: iso.mz - tol,
                    hi: iso.mz + tol,
                    value: (e, i),
                })
            })
            .collect();
        IsotopologueIndex {
            tree: IntervalTree::new(intervals),
        }
    }

    pub fn stab(&self, mz: f64) -> Vec<(usize, usize)> {
        let mut hits: Vec<(usize, usize)> = self.tree.stab(mz).into_iter().copied().collect();
        hits.sort_unstable();
        hits
    }
}

/// A deconvolution graph plus the intensity it leaves unexplained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub graph: DeconvolutionGraph,
    /// Intensity of peaks outside every tolerance interval.
    pub orphan_intensity: f64,
    /// Intensity of groupings dropped by pruning.
    pub pruned_intensity: f64,
    pub total_intensity: f64,
}

impl Assignment {
    pub fn unexplained_intensity(&self) -> f64 {
        self.orphan_intensity + self.pruned_intensity
    }
}

pub fn build_graph(envelopes: &[Envelope], spectrum: &Spectrum, tol: f64) -> Assignment {
    build_graph_indexed(&IsotopologueIndex::new(envelopes, tol), envelopes, spectrum)
}

/// Builds the graph for a spectrum already rounded to the envelopes'
/// granularity. Peaks with identical stabbing sets form one grouping.
pub fn build_graph_indexed(
    index: &IsotopologueIndex,
    envelopes: &[Envelope],
    spectrum: &Spectrum,
) -> Assignment {
    let mut orphan = 0.0;
    let mut groups: BTreeMap<Vec<(usize, usize)>, usize> = BTreeMap::new();
    let mut members: Vec<(Vec<(usize, usize)>, Vec<usize>, f64)> = Vec::new();
    for (p, peak) in spectrum.peaks().iter().enumerate() {
        if peak.intensity <= 0.0 {
            continue;
        }
        let hits = index.stab(peak.mz);
        if hits.is_empty() {
            orphan += peak.intensity;
            continue;
        }
        let slot = *groups.entry(hits.clone()).or_insert_with(|| {
            members.push((hits, Vec::new(), 0.0));
            members.len() - 1
        });
        members[slot].1.push(p);
        members[slot].2 += peak.intensity;
    }

    let mut graph = DeconvolutionGraph::new();
    let mut iso_base: BTreeMap<usize, usize> = BTreeMap::new();
    let mut touched: Vec<usize> = members
        .iter()
        .flat_map(|(hits, _, _)| hits.iter().map(|&(e, _)| e))
        .collect();
    touched.sort_unstable();
    touched.dedup();
    for e in touched {
        let env = &envelopes[e];
        let isos: Vec<(f64, f64)> = env.isotopologues.iter().map(|i| (i.mz, i.probability)).collect();
        iso_base.insert(e, graph.add_species(env.species, &isos));
    }
    for (hits, peaks, intensity) in members {
        let isos: Vec<usize> = hits.iter().map(|&(e, i)| iso_base[&e] + i).collect();
        let (lo, hi) = peaks.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
            let mz = spectrum.peaks()[p].mz;
            (lo.min(mz), hi.max(mz))
        });
        let g = graph.add_grouping(intensity, &isos, peaks);
        graph.groupings[g].mz_lo = lo;
        graph.groupings[g].mz_hi = hi;
    }
    Assignment {
        graph,
        orphan_intensity: orphan,
        pruned_intensity: 0.0,
        total_intensity: spectrum.total_intensity(),
    }
}

/// Repeatedly removes species whose supported isotopologue probability is
/// below `min_support`, until no species is removed.
pub fn prune_unsupported(assignment: &Assignment, min_support: f64) -> Assignment {
    let mut graph = assignment.graph.clone();
    let mut pruned = assignment.pruned_intensity;
    loop {
        let keep: Vec<bool> = (0..graph.species.len())
            .map(|s| graph.support(s) >= min_support - 1e-12)
            .collect();
        if keep.iter().all(|&k| k) {
            break;
        }
        let (next, dropped) = graph.retain_species(&keep);
        graph = next;
        pruned += dropped;
    }
    Assignment {
        graph,
        orphan_intensity: assignment.orphan_intensity,
        pruned_intensity: pruned,
        total_intensity: assignment.total_intensity,
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Splits the graph into maximal connected subgraphs, ordered by their first
/// species.
pub fn connected_components(graph: &DeconvolutionGraph) -> Vec<DeconvolutionGraph> {
    let ns = graph.species.len();
    let mut dsu = DisjointSet::new(ns);
    for g in &graph.groupings {
        let mut it = g.isotopologues.iter().map(|&i| graph.isotopologues[i].species);
        if let Some(first) = it.next() {
            for s in it {
                dsu.union(first, s);
            }
        }
    }
    let mut roots: BTreeMap<usize, usize> = BTreeMap::new();
    let mut labels = vec![0; ns];
    for (s, label) in labels.iter_mut().enumerate() {
        let r = dsu.find(s);
        let next = roots.len();
        *label = *roots.entry(r).or_insert(next);
    }
    (0..roots.len())
        .map(|c| {
            let keep: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            graph.retain_species(&keep).0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isotopes::Isotopologue;
    use crate::spectrum::Peak;

    fn env(species: usize, isos: &[(f64, f64)]) -> Envelope {
        Envelope {
            species,
            isotopologues: isos
                .iter()
                .map(|&(mz, probability)| Isotopologue { mz, probability })
                .collect(),
            coverage: isos.iter().map(|x| x.1).sum(),
        }
    }

    fn spectrum(peaks: &[(f64, f64)]) -> Spectrum {
        Spectrum::new(peaks.iter().map(|&(m, i)| Peak::new(m, i)).collect()).unwrap()
    }

    #[test]
    fn single_interval_merges_peaks() {
        let a = build_graph(&[env(0, &[(100.0, 1.0)])], &spectrum(&[(100.01, 7.0), (99.98, 3.0)]), 0.05);
        assert_eq!(a.graph.groupings.len(), 1);
        assert_eq!(a.graph.groupings[0].intensity, 10.0);
        assert_eq!(a.orphan_intensity, 0.0);
    }

    #[test]
    fn orphan_peak_is_unexplained() {
        let a = build_graph(&[env(0, &[(100.0, 1.0)])], &spectrum(&[(100.0, 2.0), (500.0, 4.0)]), 0.05);
        assert_eq!(a.graph.groupings.len(), 1);
        assert_eq!(a.orphan_intensity, 4.0);
        assert_eq!(a.graph.grouping_intensity() + a.unexplained_intensity(), a.total_intensity);
    }

    #[test]
    fn overlapping_isotopologues_share_a_grouping() {
        // Species A: I_A0 at 100.0, I_A1 at 100.5; species B: I_B0 at 100.52.
        let envs = [env(0, &[(100.0, 0.6), (100.5, 0.4)]), env(1, &[(100.52, 0.7), (101.0, 0.3)])];
        let s = spectrum(&[(100.0, 6.0), (100.51, 5.0), (100.56, 2.0), (101.0, 3.0)]);
        let a = build_graph(&envs, &s, 0.05);
        let shared: Vec<&Grouping> = a
            .graph
            .groupings
            .iter()
            .filter(|g| {
                let species: std::collections::BTreeSet<usize> =
                    g.isotopologues.iter().map(|&i| a.graph.isotopologues[i].species).collect();
                species.len() == 2
            })
            .collect();
        assert_eq!(shared.len(), 1);
        assert_eq!(shared[0].intensity, 5.0);
        assert_eq!(connected_components(&a.graph).len(), 1);
    }

    #[test]
    fn pruning_threshold() {
        let e = env(0, &[(100.0, 0.5), (101.0, 0.3), (102.0, 0.2)]);
        let only_first = build_graph(std::slice::from_ref(&e), &spectrum(&[(100.0, 5.0)]), 0.05);
        let pruned = prune_unsupported(&only_first, 0.7);
        assert!(pruned.graph.is_empty());
        assert_eq!(pruned.pruned_intensity, 5.0);

        let two = build_graph(std::slice::from_ref(&e), &spectrum(&[(100.0, 5.0), (101.0, 3.0)]), 0.05);
        assert_eq!(prune_unsupported(&two, 0.7).graph.species.len(), 1);

        let full = env(0, &[(100.0, 0.5), (101.0, 0.5)]);
        let all = build_graph(&[full], &spectrum(&[(100.0, 5.0), (101.0, 5.0)]), 0.05);
        assert_eq!(prune_unsupported(&all, 1.0 - 1e-9).graph.species.len(), 1);
    }

    #[test]
    fn pruning_keeps_shared_groupings() {
        let envs = [env(0, &[(100.0, 0.5), (200.0, 0.5)]), env(1, &[(100.0, 0.9), (300.0, 0.1)])];
        let a = build_graph(&envs, &spectrum(&[(100.0, 9.0)]), 0.05);
        let p = prune_unsupported(&a, 0.7);
        assert_eq!(p.graph.species.len(), 1);
        assert_eq!(p.graph.species[0].id, 1);
        assert_eq!(p.graph.grouping_intensity(), 9.0);
    }

    #[test]
    fn components_split_and_empty() {
        let envs = [env(0, &[(100.0, 1.0)]), env(1, &[(200.0, 1.0)])];
        let a = build_graph(&envs, &spectrum(&[(100.0, 1.0), (200.0, 2.0)]), 0.05);
        let comps = connected_components(&a.graph);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].species[0].id, 0);
        assert_eq!(comps[1].groupings[0].intensity, 2.0);
        assert!(connected_components(&DeconvolutionGraph::new()).is_empty());
    }
}
