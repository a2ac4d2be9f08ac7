//! Isotopic fine structure and coarse-grained m/z envelopes.
//!
//! Each element's isotope counts follow a multinomial law. The per-element
//! configurations are enumerated, sorted by probability and then combined by
//! an ordered traversal of their product: a max-heap pops joint
//! configurations in non-increasing probability until the requested coverage
//! is reached.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::chemistry::{Composition, MolecularSpecies};
use crate::error::{invalid, Error, Result};
use crate::spectrum::{bin_center, mz_bin};

pub const PROTON_MASS: f64 = 1.007_276_466_88;

/// Configurations of a single element whose probability falls below this
/// floor are dropped before the product traversal.
const ELEMENT_PROBABILITY_FLOOR: f64 = 1e-40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isotope {
    pub mass: f64,
    pub abundance: f64,
}

/// Isotope masses and natural abundances per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotopeTable {
    elements: BTreeMap<String, Vec<Isotope>>,
}

// (symbol, [(mass, abundance)]) from the IUPAC isotopic composition tables.
const STANDARD: &[(&str, &[(f64, f64)])] = &[
    ("H", &[(1.007_825_032_07, 0.999_885), (2.014_101_777_8, 0.000_115)]),
    ("C", &[(12.0, 0.9893), (13.003_354_837_8, 0.0107)]),
    ("N", &[(14.003_074_004_8, 0.996_36), (15.000_108_898_2, 0.003_64)]),
    (
        "O",
        &[
            (15.994_914_619_56, 0.997_57),
            (16.999_131_70, 0.000_38),
            (17.999_161_0, 0.002_05),
        ],
    ),
    (
        "S",
        &[
            (31.972_071_00, 0.9499),
            (32.971_458_76, 0.0075),
            (33.967_866_90, 0.0425),
            (35.967_080_76, 0.0001),
        ],
    ),
    ("P", &[(30.973_761_63, 1.0)]),
    ("F", &[(18.998_403_22, 1.0)]),
    ("Na", &[(22.989_769_280_9, 1.0)]),
    ("Cl", &[(34.968_852_68, 0.7576), (36.965_902_59, 0.2424)]),
    ("K", &[(38.963_706_68, 0.932_581), (39.963_998_48, 0.000_117), (40.961_825_76, 0.067_302)]),
    ("I", &[(126.904_473, 1.0)]),
];

impl Default for IsotopeTable {
    fn default() -> Self {
        let elements = STANDARD
            .iter()
            .map(|(sym, isos)| {
                let v = isos
                    .iter()
                    .map(|&(mass, abundance)| Isotope { mass, abundance })
                    .collect();
                (sym.to_string(), v)
            })
            .collect();
        IsotopeTable { elements }
    }
}

impl IsotopeTable {
    pub fn new(elements: BTreeMap<String, Vec<Isotope>>) -> Result<Self> {
        for (el, isos) in &elements {
            if isos.is_empty() {
                return invalid(format!("element {el} has no isotopes"));
            }
            let total: f64 = isos.iter().map(|i| i.abundance).sum();
            if (total - 1.0).abs() > 1e-9 {
                return invalid(format!("abundances of {el} sum to {total}, not 1"));
            }
            if isos.iter().any(|i| !(i.abundance >= 0.0 && i.mass > 0.0)) {
                return invalid(format!("element {el} has a negative abundance or mass"));
            }
            if isos.windows(2).any(|w| w[0].mass >= w[1].mass) {
                return invalid(format!("isotope masses of {el} are not increasing"));
            }
        }
        Ok(IsotopeTable { elements })
    }

    /// Parses override lines `element isotope_mass abundance`; the listed
    /// elements replace the defaults, the rest are kept.
    pub fn with_overrides<R: BufRead>(mut self, reader: R) -> Result<Self> {
        let mut parsed: BTreeMap<String, Vec<Isotope>> = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = t.split_whitespace().collect();
            let err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            if f.len() != 3 {
                return Err(err(format!("expected `element mass abundance`, got `{t}`")));
            }
            let mass: f64 = f[1].parse().map_err(|_| err(format!("bad mass `{}`", f[1])))?;
            let abundance: f64 = f[2]
                .parse()
                .map_err(|_| err(format!("bad abundance `{}`", f[2])))?;
            parsed
                .entry(f[0].to_string())
                .or_default()
                .push(Isotope { mass, abundance });
        }
        for isos in parsed.values_mut() {
            isos.sort_by(|a, b| a.mass.total_cmp(&b.mass));
        }
        self.elements.extend(parsed);
        IsotopeTable::new(self.elements)
    }

    pub fn isotopes(&self, element: &str) -> Result<&[Isotope]> {
        self.elements
            .get(element)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UnknownElement(element.to_string()))
    }

    pub fn monoisotopic_mass(&self, composition: &Composition) -> Result<f64> {
        let mut mass = 0.0;
        for (el, n) in composition.elements() {
            let lightest = self.isotopes(el)?[0].mass;
            mass += n as f64 * lightest;
        }
        Ok(mass)
    }
}

/// One isotopologue at infinite resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinePeak {
    pub mass: f64,
    pub probability: f64,
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// All count vectors of length `k` summing to `n`, in lexicographic order.
fn compositions_of(n: u32, k: usize, out: &mut Vec<Vec<u32>>) {
    fn rec(n: u32, k: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=n).rev() {
            prefix.push(first);
            rec(n - first, k - 1, prefix, out);
            prefix.pop();
        }
    }
    rec(n, k, &mut Vec::with_capacity(k), out);
}

/// Multinomial configurations of one element, sorted by decreasing
/// probability.
fn element_configurations(n: u32, isotopes: &[Isotope]) -> Vec<FinePeak> {
    let present: Vec<&Isotope> = isotopes.iter().filter(|i| i.abundance > 0.0).collect();
    let lf = ln_factorials(n as usize);
    let ln_p: Vec<f64> = present.iter().map(|i| i.abundance.ln()).collect();
    let mut counts = Vec::new();
    compositions_of(n, present.len(), &mut counts);
    let mut out: Vec<FinePeak> = counts
        .iter()
        .filter_map(|c| {
            let mut lp = lf[n as usize];
            let mut mass = 0.0;
            for (j, &cj) in c.iter().enumerate() {
                lp += cj as f64 * ln_p[j] - lf[cj as usize];
                mass += cj as f64 * present[j].mass;
            }
            let probability = lp.exp();
            (probability >= ELEMENT_PROBABILITY_FLOOR).then_some(FinePeak { mass, probability })
        })
        .collect();
    out.sort_by(|a, b| b.probability.total_cmp(&a.probability).then(a.mass.total_cmp(&b.mass)));
    out
}

struct Node {
    probability: f64,
    index: Vec<u32>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.probability
            .total_cmp(&other.probability)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Isotopologues of `composition` in non-increasing probability whose total
/// probability reaches `coverage`. Peaks tied with the last one are kept.
pub fn fine_structure(
    composition: &Composition,
    table: &IsotopeTable,
    coverage: f64,
) -> Result<Vec<FinePeak>> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return invalid(format!("coverage must lie in (0, 1), got {coverage}"));
    }
    let mut dims: Vec<Vec<FinePeak>> = Vec::new();
    for (el, n) in composition.elements() {
        let isotopes = table.isotopes(el)?;
        if n > 0 {
            dims.push(element_configurations(n, isotopes));
        }
    }
    if dims.is_empty() {
        return invalid("empty composition");
    }
    let m = dims.len();
    let joint = |index: &[u32]| -> (f64, f64) {
        let mut p = 1.0;
        let mut mass = 0.0;
        for (d, &i) in dims.iter().zip(index) {
            let peak = &d[i as usize];
            p *= peak.probability;
            mass += peak.mass;
        }
        (p, mass)
    };

    let mut heap = BinaryHeap::new();
    let start = vec![0u32; m];
    heap.push(Node {
        probability: joint(&start).0,
        index: start,
    });
    let mut out = Vec::new();
    let mut acc = 0.0;
    let mut last = f64::INFINITY;
    while let Some(node) = heap.pop() {
        if acc >= coverage && node.probability < last {
            break;
        }
        let (probability, mass) = joint(&node.index);
        acc += probability;
        last = probability;
        out.push(FinePeak { mass, probability });

        // Each joint index has a unique parent (decrement its first non-zero
        // coordinate), so children only bump coordinates up to that one.
        let first_nonzero = node.index.iter().position(|&i| i > 0).unwrap_or(m - 1);
        for j in 0..=first_nonzero {
            if (node.index[j] as usize) + 1 < dims[j].len() {
                let mut child = node.index.clone();
                child[j] += 1;
                heap.push(Node {
                    probability: joint(&child).0,
                    index: child,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isotopologue {
    pub mz: f64,
    pub probability: f64,
}

/// Coarse-grained isotopic envelope of a charged species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub species: usize,
    pub isotopologues: Vec<Isotopologue>,
    pub coverage: f64,
}

impl Envelope {
    pub fn total_probability(&self) -> f64 {
        self.isotopologues.iter().map(|i| i.probability).sum()
    }

    /// Isotopologue with the highest probability.
    pub fn most_probable(&self) -> Option<&Isotopologue> {
        self.isotopologues
            .iter()
            .max_by(|a, b| a.probability.total_cmp(&b.probability))
    }
}

pub fn mz_of(neutral_mass: f64, q: u32) -> f64 {
    (neutral_mass + q as f64 * PROTON_MASS) / q as f64
}

/// Envelope of `species` (identified downstream by `species_id`): fine peaks
/// shifted to m/z, rounded to `decimal_places` and merged.
pub fn envelope(
    species_id: usize,
    species: &MolecularSpecies,
    table: &IsotopeTable,
    coverage: f64,
    decimal_places: u32,
) -> Result<Envelope> {
    let q = species.key.q;
    if q < 1 {
        return invalid("species charge must be at least 1");
    }
    let fine = fine_structure(&species.composition, table, coverage)?;
    let mut bins: BTreeMap<i64, f64> = BTreeMap::new();
    for p in &fine {
        *bins.entry(mz_bin(mz_of(p.mass, q), decimal_places)).or_insert(0.0) += p.probability;
    }
    let isotopologues: Vec<Isotopologue> = bins
        .into_iter()
        .map(|(b, probability)| Isotopologue {
            mz: bin_center(b, decimal_places),
            probability,
        })
        .collect();
    let coverage = isotopologues.iter().map(|i| i.probability).sum();
    Ok(Envelope {
        species: species_id,
        isotopologues,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_isotope_element() {
        let f = Composition::parse("F").unwrap();
        let peaks = fine_structure(&f, &IsotopeTable::default(), 0.999).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].mass - 18.9984).abs() < 1e-4);
        assert_eq!(peaks[0].probability, 1.0);
    }

    #[test]
    fn dicarbon_matches_enumeration() {
        let table = IsotopeTable::default();
        let peaks = fine_structure(&Composition::parse("C2").unwrap(), &table, 0.999).unwrap();
        // All three outcomes: 12C12C, 12C13C, 13C13C.
        let (a, b) = (0.9893_f64, 0.0107_f64);
        let brute = [a * a, 2.0 * a * b, b * b];
        assert!((peaks[0].probability - brute[0]).abs() < 1e-15);
        assert!((peaks[0].probability - 0.9786).abs() < 2e-4);
        assert_eq!(peaks.len(), 2); // a² + 2ab ≥ 0.999
        assert!((peaks[1].probability - brute[1]).abs() < 1e-15);
    }

    #[test]
    fn unknown_element_is_reported() {
        let c = Composition::parse("Xe2").unwrap();
        assert!(matches!(
            fine_structure(&c, &IsotopeTable::default(), 0.9),
            Err(Error::UnknownElement(_))
        ));
    }

    #[test]
    fn coverage_bounds() {
        let c = Composition::parse("C10H20").unwrap();
        let t = IsotopeTable::default();
        assert!(fine_structure(&c, &t, 0.0).is_err());
        assert!(fine_structure(&c, &t, 1.0).is_err());
        let peaks = fine_structure(&c, &t, 0.99).unwrap();
        let total: f64 = peaks.iter().map(|p| p.probability).sum();
        assert!((0.99..=1.0 + 1e-12).contains(&total));
        assert!(peaks.windows(2).all(|w| w[0].probability >= w[1].probability));
    }

    #[test]
    fn table_overrides() {
        let text = "# deuterium-enriched hydrogen\nH 1.00782503207 0.5\nH 2.0141017778 0.5\n";
        let t = IsotopeTable::default().with_overrides(text.as_bytes()).unwrap();
        assert_eq!(t.isotopes("H").unwrap()[1].abundance, 0.5);
        assert_eq!(t.isotopes("C").unwrap().len(), 2);
        let bad = "H 1.0078 0.5\n";
        assert!(IsotopeTable::default().with_overrides(bad.as_bytes()).is_err());
    }

    #[test]
    fn envelope_is_sorted_and_conserves_probability() {
        let sp = crate::chemistry::Precursor::new("RPKPQQFFGLM", 3).unwrap();
        let species = MolecularSpecies {
            key: crate::chemistry::SpeciesKey::precursor(2, 0),
            composition: sp.composition().unwrap(),
        };
        let t = IsotopeTable::default();
        let env = envelope(0, &species, &t, 0.999, 3).unwrap();
        let fine = fine_structure(&species.composition, &t, 0.999).unwrap();
        let fine_total: f64 = fine.iter().map(|p| p.probability).sum();
        assert!((env.total_probability() - fine_total).abs() < 1e-12);
        assert!(env.isotopologues.windows(2).all(|w| w[0].mz < w[1].mz));
        assert!(env.coverage >= 0.999);
    }
}
