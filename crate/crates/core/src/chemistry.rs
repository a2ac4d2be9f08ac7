//! Elemental compositions and enumeration of candidate reaction products.
//!
//! Species compositions are neutral formulas that already include any
//! quenched-charge hydrogens; protons carrying charge are added only when an
//! m/z value is computed.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Signed element counts, e.g. a modification delta such as `H-1`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaDelta(pub BTreeMap<String, i64>);

impl FormulaDelta {
    /// Parses Hill-style formulas: element symbols followed by optional signed
    /// counts, e.g. `C2H3NO`, `H-1`, `C2H2O1`.
    pub fn parse(text: &str) -> Result<Self> {
        let chars: Vec<char> = text.trim().chars().collect();
        if chars.is_empty() {
            return invalid("empty formula");
        }
        let mut counts: BTreeMap<String, i64> = BTreeMap::new();
        let mut i = 0;
        while i < chars.len() {
            if !chars[i].is_ascii_uppercase() {
                return invalid(format!("bad formula `{text}` at position {i}"));
            }
            let mut symbol = chars[i].to_string();
            i += 1;
            while i < chars.len() && chars[i].is_ascii_lowercase() {
                symbol.push(chars[i]);
                i += 1;
            }
            let start = i;
            if i < chars.len() && (chars[i] == '-' || chars[i] == '+') {
                i += 1;
            }
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            let count = match digits.as_str() {
                "" => 1,
                "-" | "+" => return invalid(format!("dangling sign in formula `{text}`")),
                d => d
                    .parse::<i64>()
                    .map_err(|_| Error::Validation(format!("bad count in formula `{text}`")))?,
            };
            *counts.entry(symbol).or_insert(0) += count;
        }
        counts.retain(|_, c| *c != 0);
        Ok(FormulaDelta(counts))
    }
}

/// Non-negative element counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Composition(BTreeMap<String, u32>);

impl Composition {
    pub fn new() -> Self {
        Composition::default()
    }

    pub fn from_pairs(pairs: &[(&str, u32)]) -> Self {
        let mut c = Composition::new();
        for &(el, n) in pairs {
            c.add_element(el, n);
        }
        c
    }

    /// Parses a formula with non-negative counts.
    pub fn parse(text: &str) -> Result<Self> {
        Composition::new().apply(&FormulaDelta::parse(text)?)
    }

    pub fn count(&self, element: &str) -> u32 {
        self.0.get(element).copied().unwrap_or(0)
    }

    pub fn elements(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(e, &n)| (e.as_str(), n))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn add_element(&mut self, element: &str, n: u32) {
        if n > 0 {
            *self.0.entry(element.to_string()).or_insert(0) += n;
        }
    }

    pub fn remove_element(&mut self, element: &str, n: u32) -> Result<()> {
        let have = self.count(element);
        if have < n {
            return Err(Error::Underflow(format!(
                "cannot remove {n} {element} from {self}"
            )));
        }
        if have == n {
            self.0.remove(element);
        } else {
            self.0.insert(element.to_string(), have - n);
        }
        Ok(())
    }

    pub fn plus(&self, other: &Composition) -> Composition {
        let mut out = self.clone();
        for (el, n) in other.elements() {
            out.add_element(el, n);
        }
        out
    }

    pub fn minus(&self, other: &Composition) -> Result<Composition> {
        let mut out = self.clone();
        for (el, n) in other.elements() {
            out.remove_element(el, n)?;
        }
        Ok(out)
    }

    pub fn apply(&self, delta: &FormulaDelta) -> Result<Composition> {
        let mut out = self.clone();
        for (el, &n) in &delta.0 {
            if n >= 0 {
                out.add_element(el, n as u32);
            } else {
                out.remove_element(el, n.unsigned_abs() as u32)?;
            }
        }
        Ok(out)
    }

    /// Adds (`n > 0`) or removes (`n < 0`) hydrogens.
    pub fn with_hydrogens(&self, n: i64) -> Result<Composition> {
        let mut delta = BTreeMap::new();
        delta.insert("H".to_string(), n);
        self.apply(&FormulaDelta(delta))
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Hill order: C, H, then alphabetical.
        let mut keys: Vec<&String> = self.0.keys().collect();
        keys.sort_by_key(|k| match k.as_str() {
            "C" => (0, String::new()),
            "H" => (1, String::new()),
            other => (2, other.to_string()),
        });
        for k in keys {
            let n = self.0[k];
            if n == 1 {
                write!(f, "{k}")?;
            } else {
                write!(f, "{k}{n}")?;
            }
        }
        Ok(())
    }
}

/// Monomer (water-free) formula of a proteinogenic residue.
pub fn residue_composition(letter: char) -> Result<Composition> {
    let formula = match letter {
        'G' => "C2H3NO",
        'A' => "C3H5NO",
        'S' => "C3H5NO2",
        'P' => "C5H7NO",
        'V' => "C5H9NO",
        'T' => "C4H7NO2",
        'C' => "C3H5NOS",
        'L' => "C6H11NO",
        'I' => "C6H11NO",
        'N' => "C4H6N2O2",
        'D' => "C4H5NO3",
        'Q' => "C5H8N2O2",
        'K' => "C6H12N2O",
        'E' => "C5H7NO3",
        'M' => "C5H9NOS",
        'H' => "C6H7N3O",
        'F' => "C9H9NO",
        'R' => "C6H12N4O",
        'Y' => "C9H9NO2",
        'W' => "C11H10N2O",
        other => return invalid(format!("unknown amino-acid code `{other}`")),
    };
    Composition::parse(formula)
}

/// The isolated precursor: sequence, charge and per-residue modifications
/// (0-based residue index → composition delta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precursor {
    sequence: String,
    charge: u32,
    modifications: BTreeMap<usize, FormulaDelta>,
}

impl Precursor {
    pub fn new(sequence: &str, charge: u32) -> Result<Self> {
        Precursor::with_modifications(sequence, charge, BTreeMap::new())
    }

    pub fn with_modifications(
        sequence: &str,
        charge: u32,
        modifications: BTreeMap<usize, FormulaDelta>,
    ) -> Result<Self> {
        let sequence = sequence.trim().to_ascii_uppercase();
        if sequence.is_empty() {
            return invalid("empty sequence");
        }
        for c in sequence.chars() {
            residue_composition(c)?;
        }
        if charge < 1 {
            return invalid("precursor charge must be at least 1");
        }
        if let Some((&idx, _)) = modifications.iter().find(|(&i, _)| i >= sequence.len()) {
            return invalid(format!(
                "modification index {idx} outside sequence of length {}",
                sequence.len()
            ));
        }
        let p = Precursor {
            sequence,
            charge,
            modifications,
        };
        // Surface underflowing modifications at construction time.
        p.residues_composition(0, p.len())?;
        Ok(p)
    }

    pub fn sequence(&self) -> &str {
        &self.sequence
    }

    pub fn charge(&self) -> u32 {
        self.charge
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn modifications(&self) -> &BTreeMap<usize, FormulaDelta> {
        &self.modifications
    }

    /// Modified residues in `[start, end)`.
    fn residues_composition(&self, start: usize, end: usize) -> Result<Composition> {
        let mut total = Composition::new();
        for (i, c) in self.sequence.chars().enumerate().take(end).skip(start) {
            total = total.plus(&residue_composition(c)?);
            if let Some(delta) = self.modifications.get(&i) {
                total = total.apply(delta)?;
            }
        }
        Ok(total)
    }

    /// Neutral precursor: residues, modifications and one water (free acid).
    pub fn composition(&self) -> Result<Composition> {
        Ok(self
            .residues_composition(0, self.len())?
            .plus(&Composition::from_pairs(&[("H", 2), ("O", 1)])))
    }

    /// Cleavage sites `k` (bond between residues `k` and `k + 1`, 1-based)
    /// that electron transfer can break: the acceptor residue must not be
    /// proline.
    pub fn cleavage_sites(&self) -> Vec<usize> {
        let bytes = self.sequence.as_bytes();
        (1..self.len()).filter(|&k| bytes[k] != b'P').collect()
    }

    pub fn is_cleavable(&self, site: usize) -> bool {
        site >= 1 && site < self.len() && self.sequence.as_bytes()[site] != b'P'
    }

    /// Neutral c or z• fragment at cleavage site `k`. The pair satisfies
    /// `c + z = M + H`.
    pub fn fragment_composition(&self, site: usize, kind: FragmentKind) -> Result<Composition> {
        if site < 1 || site >= self.len() {
            return invalid(format!(
                "cleavage site {site} outside 1..{}",
                self.len() - 1
            ));
        }
        if !self.is_cleavable(site) {
            return invalid(format!("cleavage site {site} is N-terminal to proline"));
        }
        let c = self
            .residues_composition(0, site)?
            .plus(&Composition::from_pairs(&[("N", 1), ("H", 3)]));
        match kind {
            FragmentKind::C => Ok(c),
            FragmentKind::Z => self.composition()?.with_hydrogens(1)?.minus(&c),
        }
    }

    /// Residue count of a fragment.
    pub fn fragment_length(&self, site: usize, kind: FragmentKind) -> usize {
        match kind {
            FragmentKind::C => site,
            FragmentKind::Z => self.len() - site,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FragmentKind {
    C,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeciesKind {
    Precursor,
    C,
    Z,
}

impl From<FragmentKind> for SpeciesKind {
    fn from(k: FragmentKind) -> Self {
        match k {
            FragmentKind::C => SpeciesKind::C,
            FragmentKind::Z => SpeciesKind::Z,
        }
    }
}

impl fmt::Display for SpeciesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpeciesKind::Precursor => "precursor",
            SpeciesKind::C => "c",
            SpeciesKind::Z => "z",
        })
    }
}

/// Identity of a reaction product: kind, cleavage site (0 for the
/// precursor), charge `q` and quenched charge `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpeciesKey {
    pub kind: SpeciesKind,
    pub site: usize,
    pub q: u32,
    pub g: i32,
}

impl SpeciesKey {
    pub fn precursor(q: u32, g: i32) -> Self {
        SpeciesKey {
            kind: SpeciesKind::Precursor,
            site: 0,
            q,
            g,
        }
    }

    pub fn fragment(kind: FragmentKind, site: usize, q: u32, g: i32) -> Self {
        SpeciesKey {
            kind: kind.into(),
            site,
            q,
            g,
        }
    }

    /// Label such as `M_q3_g0`, `c5_q2_g1` or `z6_q1_g0`; z fragments are
    /// numbered from the C-terminus.
    pub fn label(&self, sequence_len: usize) -> String {
        match self.kind {
            SpeciesKind::Precursor => format!("M_q{}_g{}", self.q, self.g),
            SpeciesKind::C => format!("c{}_q{}_g{}", self.site, self.q, self.g),
            SpeciesKind::Z => format!(
                "z{}_q{}_g{}",
                sequence_len - self.site,
                self.q,
                self.g
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolecularSpecies {
    pub key: SpeciesKey,
    pub composition: Composition,
}

/// Composition of `key` for `precursor`, including quenched hydrogens.
pub fn species_composition(precursor: &Precursor, key: SpeciesKey) -> Result<Composition> {
    let base = match key.kind {
        SpeciesKind::Precursor => precursor.composition()?,
        SpeciesKind::C => precursor.fragment_composition(key.site, FragmentKind::C)?,
        SpeciesKind::Z => precursor.fragment_composition(key.site, FragmentKind::Z)?,
    };
    base.with_hydrogens(key.g as i64)
}

pub const DEFAULT_MAX_Q_PER_BLOCK: u32 = 5;

/// Highest charge a fragment of `length` residues may carry.
pub fn max_fragment_charge(length: usize, max_q_per_block: u32) -> u32 {
    (length as u32) / max_q_per_block.max(1) + 1
}

/// All candidate products: precursors with `q + g <= Q`, and c/z fragments at
/// every cleavable site with `q + max(g, 0) <= Q - 1`, subject to the charge
/// density limit. Only c fragments carry `g = -1`.
pub fn generate_species(
    precursor: &Precursor,
    max_q_per_block: u32,
) -> Result<Vec<MolecularSpecies>> {
    let big_q = precursor.charge();
    let mut out = Vec::new();
    let m = precursor.composition()?;
    for q in (1..=big_q).rev() {
        for g in 0..=(big_q - q) {
            out.push(MolecularSpecies {
                key: SpeciesKey::precursor(q, g as i32),
                composition: m.with_hydrogens(g as i64)?,
            });
        }
    }
    if big_q < 2 {
        return Ok(out);
    }
    for site in precursor.cleavage_sites() {
        for kind in [FragmentKind::C, FragmentKind::Z] {
            let base = precursor.fragment_composition(site, kind)?;
            let qmax = max_fragment_charge(precursor.fragment_length(site, kind), max_q_per_block)
                .min(big_q - 1);
            let gmin: i32 = if kind == FragmentKind::C { -1 } else { 0 };
            for q in 1..=qmax {
                for g in gmin..=((big_q - 1 - q) as i32) {
                    let composition = match base.with_hydrogens(g as i64) {
                        Ok(c) => c,
                        Err(_) => continue,
                    };
                    out.push(MolecularSpecies {
                        key: SpeciesKey::fragment(kind, site, q, g),
                        composition,
                    });
                }
            }
        }
    }
    Ok(out)
}
