//! Stochastic in-silico ETD spectra with known ground truth.
//!
//! Individual ions are tracked through a Gillespie process on the time
//! horizon `[0, 1)`. An ion of charge `q` reacts with rate `rate_scale·q²`;
//! the reaction is PTR, ETnoD or ETD with the configured probabilities.
//! Survivors then draw isotope counts atom by atom, receive Gaussian mass
//! noise and are binned into a spectrum.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Binomial, Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::chemistry::{species_composition, Precursor, SpeciesKey, SpeciesKind};
use crate::error::{invalid, Result};
use crate::isotopes::{mz_of, IsotopeTable};
use crate::spectrum::{mz_bin, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub sequence: String,
    pub charge: u32,
    pub n_ions: u64,
    pub p_ptr: f64,
    pub p_etnod: f64,
    pub p_etd: f64,
    /// Reaction rate per squared charge.
    pub rate_scale: f64,
    /// Standard deviation of the neutral-mass noise, in u.
    pub sigma: f64,
    pub seed: u64,
    pub bin_places: u32,
    /// Relative cleavage weight per site; sites missing from the map, and
    /// all sites when it is `None`, get weight 1.
    pub site_weights: Option<BTreeMap<usize, f64>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sequence: "RPKPQQFFGLM".to_string(),
            charge: 3,
            n_ions: 100_000,
            p_ptr: 0.3,
            p_etnod: 0.3,
            p_etd: 0.4,
            rate_scale: 0.1,
            sigma: 0.01,
            seed: 1,
            bin_places: 3,
            site_weights: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let p = [self.p_ptr, self.p_etnod, self.p_etd];
        if p.iter().any(|x| !(*x >= 0.0)) {
            return invalid("reaction probabilities must be non-negative");
        }
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("reaction probabilities must sum to 1");
        }
        if self.n_ions < 1 {
            return invalid("at least one precursor ion is required");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return invalid("sigma must be non-negative");
        }
        if !(self.rate_scale >= 0.0 && self.rate_scale.is_finite()) {
            return invalid("rate scale must be non-negative");
        }
        if self.charge < 1 || self.charge as usize > self.sequence.len() {
            return invalid("precursor charge must be between 1 and the sequence length");
        }
        if let Some(w) = &self.site_weights {
            if w.values().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return invalid("site weights must be non-negative");
            }
        }
        Ok(())
    }

    /// `p_ETnoD / (p_ETnoD + p_PTR)`, `None` when both are zero.
    pub fn etnod_given_reaction(&self) -> Option<f64> {
        let den = self.p_etnod + self.p_ptr;
        (den > 0.0).then(|| self.p_etnod / den)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    pub ptr: u64,
    pub etnod: u64,
    pub etd: u64,
    pub etd_by_site: BTreeMap<usize, u64>,
    /// Ions hit by a second ETD and removed, with the charge they carried.
    pub discarded_ions: u64,
    pub discarded_charge: u64,
    /// Ions and fragments that ended with no charge.
    pub neutralized: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeciesCount {
    #[serde(flatten)]
    pub key: SpeciesKey,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub species: Vec<SpeciesCount>,
    pub events: EventCounts,
}

impl GroundTruth {
    pub fn counts(&self) -> BTreeMap<SpeciesKey, u64> {
        self.species.iter().map(|s| (s.key, s.count)).collect()
    }

    /// Charge carried by the surviving ions.
    pub fn surviving_charge(&self) -> u64 {
        self.species.iter().map(|s| s.key.q as u64 * s.count).sum()
    }
}

/// `charge` distinct residue positions drawn uniformly, in increasing order.
pub fn place_charges<R: Rng + ?Sized>(length: usize, charge: u32, rng: &mut R) -> Result<Vec<usize>> {
    if charge as usize > length {
        return invalid(format!("cannot place {charge} charges on {length} residues"));
    }
    let mut pos = sample(rng, length, charge as usize).into_vec();
    pos.sort_unstable();
    Ok(pos)
}

#[derive(Debug, Clone)]
struct Ion {
    kind: SpeciesKind,
    site: usize,
    charges: Vec<usize>,
    g: u32,
}

impl Ion {
    fn key(&self) -> SpeciesKey {
        SpeciesKey {
            kind: self.kind,
            site: self.site,
            q: self.charges.len() as u32,
            g: self.g as i32,
        }
    }
}

/// Ions bucketed by charge so that selection proportional to `q²` is cheap.
struct Pool {
    buckets: Vec<Vec<Ion>>,
}

impl Pool {
    fn insert(&mut self, ion: Ion) {
        let q = ion.charges.len();
        self.buckets[q].push(ion);
    }

    fn rate(&self) -> f64 {
        self.buckets
            .iter()
            .enumerate()
            .map(|(q, b)| (q * q * b.len()) as f64)
            .sum()
    }

    fn take<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Ion {
        let total = self.rate();
        let mut u = rng.random::<f64>() * total;
        let mut q = self.buckets.len() - 1;
        for (c, b) in self.buckets.iter().enumerate().skip(1) {
            let w = (c * c * b.len()) as f64;
            if u < w {
                q = c;
                break;
            }
            u -= w;
        }
        // Rounding can leave u past the last weight; fall back to the
        // highest non-empty bucket.
        while self.buckets[q].is_empty() {
            q -= 1;
        }
        let i = rng.random_range(0..self.buckets[q].len());
        self.buckets[q].swap_remove(i)
    }
}

enum Reaction {
    Ptr,
    Etnod,
    Etd,
}

/// Runs the reaction process and returns the binned spectrum of surviving
/// ions with their exact species counts.
pub fn simulate(cfg: &SimConfig, table: &IsotopeTable) -> Result<(Spectrum, GroundTruth)> {
    cfg.validate()?;
    let precursor = Precursor::new(&cfg.sequence, cfg.charge)?;
    let length = precursor.len();
    let sites = precursor.cleavage_sites();
    let weights: Vec<f64> = sites
        .iter()
        .map(|s| {
            cfg.site_weights
                .as_ref()
                .and_then(|w| w.get(s).copied())
                .unwrap_or(1.0)
        })
        .collect();
    let site_law = if sites.is_empty() || weights.iter().sum::<f64>() <= 0.0 {
        None
    } else {
        Some(WeightedIndex::new(&weights).map_err(|e| crate::error::Error::Validation(e.to_string()))?)
    };
    if cfg.p_etd > 0.0 && site_law.is_none() {
        return invalid("ETD requested but the sequence has no cleavable site with positive weight");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pool = Pool {
        buckets: vec![Vec::new(); cfg.charge as usize + 1],
    };
    for _ in 0..cfg.n_ions {
        pool.insert(Ion {
            kind: SpeciesKind::Precursor,
            site: 0,
            charges: place_charges(length, cfg.charge, &mut rng)?,
            g: 0,
        });
    }

    let mut events = EventCounts::default();
    let mut t = 0.0;
    if cfg.rate_scale > 0.0 {
        loop {
            let rate = cfg.rate_scale * pool.rate();
            if rate <= 0.0 {
                break;
            }
            t += Exp::new(rate).expect("positive rate").sample(&mut rng);
            if t >= 1.0 {
                break;
            }
            let mut ion = pool.take(&mut rng);
            let u: f64 = rng.random();
            let reaction = if u < cfg.p_ptr {
                Reaction::Ptr
            } else if u < cfg.p_ptr + cfg.p_etnod {
                Reaction::Etnod
            } else {
                Reaction::Etd
            };
            match reaction {
                Reaction::Ptr | Reaction::Etnod => {
                    let i = rng.random_range(0..ion.charges.len());
                    ion.charges.remove(i);
                    if matches!(reaction, Reaction::Ptr) {
                        events.ptr += 1;
                    } else {
                        events.etnod += 1;
                        ion.g += 1;
                    }
                    if ion.charges.is_empty() {
                        events.neutralized += 1;
                    } else {
                        pool.insert(ion);
                    }
                }
                Reaction::Etd if ion.kind != SpeciesKind::Precursor => {
                    events.discarded_ions += 1;
                    events.discarded_charge += ion.charges.len() as u64;
                }
                Reaction::Etd => {
                    events.etd += 1;
                    let i = rng.random_range(0..ion.charges.len());
                    ion.charges.remove(i);
                    let site = sites[site_law.as_ref().expect("checked above").sample(&mut rng)];
                    *events.etd_by_site.entry(site).or_insert(0) += 1;
                    let split = ion.charges.partition_point(|&p| p < site);
                    let z_charges = ion.charges.split_off(split);
                    let c_share = site as f64 / length as f64;
                    let g_c = (0..ion.g).filter(|_| rng.random::<f64>() < c_share).count() as u32;
                    for (kind, charges, g) in [
                        (SpeciesKind::C, ion.charges, g_c),
                        (SpeciesKind::Z, z_charges, ion.g - g_c),
                    ] {
                        if charges.is_empty() {
                            events.neutralized += 1;
                        } else {
                            pool.insert(Ion {
                                kind,
                                site,
                                charges,
                                g,
                            });
                        }
                    }
                }
            }
        }
    }

    let mut counts: BTreeMap<SpeciesKey, u64> = BTreeMap::new();
    for b in &pool.buckets {
        for ion in b {
            *counts.entry(ion.key()).or_insert(0) += 1;
        }
    }

    let noise = Normal::new(0.0, cfg.sigma).map_err(|e| crate::error::Error::Validation(e.to_string()))?;
    let mut bins: BTreeMap<i64, f64> = BTreeMap::new();
    for (&key, &count) in &counts {
        let composition = species_composition(&precursor, key)?;
        let elements: Vec<(u32, Vec<(f64, f64)>)> = composition
            .elements()
            .map(|(el, n)| {
                table
                    .isotopes(el)
                    .map(|iso| (n, iso.iter().map(|i| (i.mass, i.abundance)).collect()))
            })
            .collect::<Result<_>>()?;
        for _ in 0..count {
            let mut mass = 0.0;
            for (n, isotopes) in &elements {
                mass += sample_element_mass(*n, isotopes, &mut rng);
            }
            if cfg.sigma > 0.0 {
                mass += noise.sample(&mut rng);
            }
            *bins.entry(mz_bin(mz_of(mass, key.q), cfg.bin_places)).or_insert(0.0) += 1.0;
        }
    }
    let spectrum = Spectrum::from_bins(&bins, cfg.bin_places);
    let truth = GroundTruth {
        species: counts
            .into_iter()
            .map(|(key, count)| SpeciesCount { key, count })
            .collect(),
        events,
    };
    Ok((spectrum, truth))
}

/// Total mass of `n` atoms whose isotopes are drawn from a multinomial law,
/// one binomial per isotope.
fn sample_element_mass<R: Rng + ?Sized>(n: u32, isotopes: &[(f64, f64)], rng: &mut R) -> f64 {
    let mut left = n as u64;
    let mut rest = 1.0;
    let mut mass = 0.0;
    for (i, &(m, p)) in isotopes.iter().enumerate() {
        if left == 0 {
            break;
        }
        let k = if i + 1 == isotopes.len() || rest <= p {
            left
        } else {
            Binomial::new(left, (p / rest).min(1.0))
                .expect("probability in [0, 1]")
                .sample(rng)
        };
        mass += k as f64 * m;
        left -= k;
        rest -= p;
    }
    mass
}

/// True fraction of ETD events per cleavage site.
pub fn true_site_frequencies(truth: &GroundTruth) -> BTreeMap<usize, f64> {
    let total = truth.events.etd as f64;
    truth
        .events
        .etd_by_site
        .iter()
        .map(|(&s, &n)| (s, n as f64 / total))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SimConfig {
        SimConfig {
            n_ions: 2000,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn validation() {
        let mut c = small(1);
        c.p_etd = 0.5;
        assert!(c.validate().is_err());
        let mut c = small(1);
        c.n_ions = 0;
        assert!(c.validate().is_err());
        let mut c = small(1);
        c.sigma = -1.0;
        assert!(c.validate().is_err());
        let mut c = small(1);
        c.charge = 12;
        assert!(c.validate().is_err());
    }

    #[test]
    fn charge_placement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(place_charges(4, 4, &mut rng).unwrap(), vec![0, 1, 2, 3]);
        assert!(place_charges(2, 3, &mut rng).is_err());
        let mut first = 0;
        for _ in 0..10_000 {
            if place_charges(2, 1, &mut rng).unwrap()[0] == 0 {
                first += 1;
            }
        }
        assert!((first as f64 / 10_000.0 - 0.5).abs() < 0.02);
        let a = place_charges(11, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = place_charges(11, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_reaction_limit() {
        let cfg = SimConfig {
            rate_scale: 0.0,
            sigma: 0.0,
            ..small(2)
        };
        let (spec, truth) = simulate(&cfg, &IsotopeTable::default()).unwrap();
        assert_eq!(truth.species.len(), 1);
        assert_eq!(truth.species[0].key, SpeciesKey::precursor(3, 0));
        assert_eq!(truth.species[0].count, 2000);
        assert_eq!(spec.total_intensity(), 2000.0);
        // Monoisotopic 3+ peak of the precursor dominates.
        let top = spec.peaks().iter().max_by(|a, b| a.intensity.total_cmp(&b.intensity)).unwrap();
        assert!((top.mz - 450.245).abs() < 0.002);
    }

    #[test]
    fn fragment_free_limit() {
        let cfg = SimConfig {
            p_ptr: 0.5,
            p_etnod: 0.5,
            p_etd: 0.0,
            sigma: 0.0,
            n_ions: 1000,
            ..small(4)
        };
        let (_, truth) = simulate(&cfg, &IsotopeTable::default()).unwrap();
        for s in &truth.species {
            assert_eq!(s.key.kind, SpeciesKind::Precursor);
            assert!(s.key.g >= 0 && s.key.q + s.key.g as u32 <= 3);
        }
        assert_eq!(truth.events.etd, 0);
    }

    #[test]
    fn charge_is_conserved() {
        for seed in 0..5 {
            let cfg = SimConfig {
                rate_scale: 0.3,
                ..small(seed)
            };
            let (_, t) = simulate(&cfg, &IsotopeTable::default()).unwrap();
            let e = &t.events;
            assert_eq!(
                cfg.n_ions * 3,
                t.surviving_charge() + e.ptr + e.etnod + e.etd + e.discarded_charge
            );
            assert_eq!(e.etd, e.etd_by_site.values().sum::<u64>());
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let table = IsotopeTable::default();
        let a = simulate(&small(7), &table).unwrap();
        let b = simulate(&small(7), &table).unwrap();
        assert_eq!(a, b);
        let c = simulate(&small(8), &table).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn site_weights_restrict_cleavage() {
        let mut w = BTreeMap::new();
        for s in [2, 4, 5, 6, 7, 8, 9] {
            w.insert(s, 0.0);
        }
        let cfg = SimConfig {
            site_weights: Some(w),
            ..small(5)
        };
        let (_, t) = simulate(&cfg, &IsotopeTable::default()).unwrap();
        assert!(t.events.etd > 0);
        assert_eq!(t.events.etd_by_site.keys().copied().collect::<Vec<_>>(), vec![10]);
        assert!(t.species.iter().all(|s| s.key.kind == SpeciesKind::Precursor || s.key.site == 10));
    }

    #[test]
    fn element_sampling_matches_abundance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let iso = [(12.0, 0.9893), (13.003_354_837_8, 0.0107)];
        let n = 20_000;
        let heavy: f64 = (0..n)
            .map(|_| sample_element_mass(10, &iso, &mut rng) - 120.0)
            .sum::<f64>()
            / 1.003_354_837_8;
        let rate = heavy / (10.0 * n as f64);
        assert!((rate - 0.0107).abs() < 0.001, "{rate}");
    }
}
