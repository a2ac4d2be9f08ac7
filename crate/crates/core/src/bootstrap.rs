//! Multinomial resampling of spectra and re-analysis of each replicate.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pipeline::{Analysis, Analyzer};
use crate::spectrum::{Peak, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub n_molecules: u64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 250,
            n_molecules: 100_000,
            seed: 1,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return invalid("at least one replicate is required");
        }
        if self.n_molecules < 1 {
            return invalid("n_molecules must be at least 1");
        }
        Ok(())
    }
}

/// Draws `n_molecules` peaks with probabilities proportional to intensity.
/// The result keeps the original m/z support, with integer intensities.
pub fn resample<R: Rng + ?Sized>(spectrum: &Spectrum, n_molecules: u64, rng: &mut R) -> Result<Spectrum> {
    let total = spectrum.total_intensity();
    if !(total > 0.0) {
        return invalid("cannot resample a spectrum with zero total intensity");
    }
    let mut left = n_molecules;
    let mut rest = total;
    let mut peaks = Vec::with_capacity(spectrum.len());
    for (i, p) in spectrum.peaks().iter().enumerate() {
        if left == 0 {
            break;
        }
        let k = if i + 1 == spectrum.len() || p.intensity >= rest {
            left
        } else {
            let prob = (p.intensity / rest).clamp(0.0, 1.0);
            Binomial::new(left, prob).expect("probability in [0, 1]").sample(rng)
        };
        rest -= p.intensity;
        left -= k;
        if k > 0 {
            peaks.push(Peak::new(p.mz, k as f64));
        }
    }
    Spectrum::new(peaks)
}

/// Generator of replicate `r`: the master seed with stream `r`, so that
/// results do not depend on scheduling.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Named scalar estimates of one analysis; `None` marks an undefined value.
pub fn quantities(a: &Analysis) -> BTreeMap<String, Option<f64>> {
    let s = &a.summary;
    let mut out = BTreeMap::new();
    out.insert("p_etnod_given_reaction".to_string(), s.p_etnod_given_reaction);
    out.insert("p_ptr_given_reaction".to_string(), s.p_ptr_given_reaction());
    out.insert("p_fragmentation".to_string(), s.p_fragmentation);
    out.insert("intensity_ptr".to_string(), Some(s.intensity_ptr));
    out.insert("intensity_etnod".to_string(), Some(s.intensity_etnod));
    out.insert("intensity_etd".to_string(), Some(s.intensity_etd));
    let d = &a.diagnostics;
    let defined = |den: f64, v: f64| (den > 0.0).then_some(v);
    out.insert("abs_error_over_tic".to_string(), defined(a.budget.total, d.abs_error_over_tic));
    out.insert(
        "abs_error_over_explainable".to_string(),
        defined(a.budget.explainable, d.abs_error_over_explainable),
    );
    for (site, p) in &s.frag_prob {
        out.insert(format!("frag_prob_{site}"), Some(*p));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantityStats {
    pub n: usize,
    pub missing: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub p2_5: Option<f64>,
    pub p97_5: Option<f64>,
}

impl QuantityStats {
    pub fn from_values(values: &[Option<f64>]) -> Self {
        let mut v: Vec<f64> = values.iter().flatten().copied().collect();
        let missing = values.len() - v.len();
        if v.is_empty() {
            return QuantityStats {
                n: 0,
                missing,
                mean: None,
                sd: None,
                p2_5: None,
                p97_5: None,
            };
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        QuantityStats {
            n,
            missing,
            mean: Some(mean),
            sd: Some(sd),
            p2_5: Some(percentile(&v, 0.025)),
            p97_5: Some(percentile(&v, 0.975)),
        }
    }
}

/// Linearly interpolated percentile of sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Estimates on the spectrum as given.
    pub point_estimate: BTreeMap<String, Option<f64>>,
    /// One map per replicate, over the union of quantity names.
    pub replicates: Vec<BTreeMap<String, Option<f64>>>,
    pub stats: BTreeMap<String, QuantityStats>,
}

pub fn bootstrap_analyze(
    analyzer: &Analyzer,
    spectrum: &Spectrum,
    cfg: &BootstrapConfig,
    parallel: bool,
) -> Result<BootstrapResult> {
    cfg.validate()?;
    let point_estimate = quantities(&analyzer.analyze_with(spectrum, false)?);
    let run = |r: usize| -> Result<BTreeMap<String, Option<f64>>> {
        let mut rng = replicate_rng(cfg.seed, r);
        let sample = resample(spectrum, cfg.n_molecules, &mut rng)?;
        Ok(quantities(&analyzer.analyze_with(&sample, false)?))
    };
    let mut replicates: Vec<BTreeMap<String, Option<f64>>> = if parallel {
        (0..cfg.replicates).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..cfg.replicates).map(run).collect::<Result<_>>()?
    };
    let mut names: Vec<String> = point_estimate.keys().cloned().collect();
    for r in &replicates {
        names.extend(r.keys().cloned());
    }
    names.sort();
    names.dedup();
    for r in &mut replicates {
        for n in &names {
            r.entry(n.clone()).or_insert(None);
        }
    }
    let stats = names
        .iter()
        .map(|n| {
            let values: Vec<Option<f64>> = replicates.iter().map(|r| r[n]).collect();
            (n.clone(), QuantityStats::from_values(&values))
        })
        .collect();
    Ok(BootstrapResult {
        point_estimate,
        replicates,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_peaks() -> Spectrum {
        Spectrum::new(vec![Peak::new(100.0, 5.0), Peak::new(200.0, 5.0)]).unwrap()
    }

    #[test]
    fn single_peak_gets_everything() {
        let s = Spectrum::new(vec![Peak::new(100.0, 3.0)]).unwrap();
        let r = resample(&s, 1234, &mut replicate_rng(1, 0)).unwrap();
        assert_eq!(r.peaks(), &[Peak::new(100.0, 1234.0)]);
    }

    #[test]
    fn balanced_counts() {
        let r = resample(&two_peaks(), 100_000, &mut replicate_rng(2, 0)).unwrap();
        assert_eq!(r.total_intensity(), 100_000.0);
        for p in r.peaks() {
            assert!((p.intensity - 50_000.0).abs() < 1000.0);
        }
    }

    #[test]
    fn deterministic_streams() {
        let a = resample(&two_peaks(), 1000, &mut replicate_rng(3, 7)).unwrap();
        let b = resample(&two_peaks(), 1000, &mut replicate_rng(3, 7)).unwrap();
        let c = resample(&two_peaks(), 1000, &mut replicate_rng(3, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_intensity_rejected() {
        let s = Spectrum::new(vec![Peak::new(100.0, 0.0)]).unwrap();
        assert!(resample(&s, 10, &mut replicate_rng(1, 0)).is_err());
        assert!(resample(&Spectrum::empty(), 10, &mut replicate_rng(1, 0)).is_err());
    }

    #[test]
    fn statistics() {
        let s = QuantityStats::from_values(&[Some(1.0), None, Some(3.0), Some(2.0)]);
        assert_eq!(s.n, 3);
        assert_eq!(s.missing, 1);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.sd, Some(1.0));
        assert_eq!(s.p2_5, Some(1.05));
        assert_eq!(s.p97_5, Some(2.95));
        let one = QuantityStats::from_values(&[Some(4.0)]);
        assert_eq!((one.mean, one.sd, one.p2_5), (Some(4.0), Some(0.0), Some(4.0)));
        assert_eq!(QuantityStats::from_values(&[None]).mean, None);
    }
}
