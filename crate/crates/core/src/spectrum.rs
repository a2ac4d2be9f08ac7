//! Experimental spectra: parsing, intensity trimming and m/z coarse-graining.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A single centroided signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub mz: f64,
    pub intensity: f64,
}

impl Peak {
    pub fn new(mz: f64, intensity: f64) -> Self {
        Peak { mz, intensity }
    }
}

/// Peaks sorted strictly ascending in m/z.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    peaks: Vec<Peak>,
}

/// Number of decimal places used to coarse-grain m/z values for a given
/// matching tolerance: one order of magnitude finer than the tolerance itself.
pub fn decimal_places_for_tolerance(tol: f64) -> u32 {
    let places = (-tol.log10()).ceil() + 1.0;
    places.max(0.0) as u32
}

/// Integer bin index of `mz` at the given number of decimal places,
/// rounding half away from zero.
pub fn mz_bin(mz: f64, decimal_places: u32) -> i64 {
    (mz * 10f64.powi(decimal_places as i32)).round() as i64
}

pub fn bin_center(bin: i64, decimal_places: u32) -> f64 {
    bin as f64 / 10f64.powi(decimal_places as i32)
}

impl Spectrum {
    /// Builds a spectrum from unordered peaks. Peaks with exactly equal m/z
    /// are summed.
    pub fn new(mut peaks: Vec<Peak>) -> Result<Self> {
        for p in &peaks {
            if !(p.mz.is_finite() && p.mz > 0.0) {
                return invalid(format!("m/z must be positive and finite, got {}", p.mz));
            }
            if !(p.intensity.is_finite() && p.intensity >= 0.0) {
                return invalid(format!(
                    "intensity must be non-negative and finite, got {} at m/z {}",
                    p.intensity, p.mz
                ));
            }
        }
        peaks.sort_by(|a, b| a.mz.total_cmp(&b.mz));
        let mut merged: Vec<Peak> = Vec::with_capacity(peaks.len());
        for p in peaks {
            match merged.last_mut() {
                Some(last) if last.mz == p.mz => last.intensity += p.intensity,
                _ => merged.push(p),
            }
        }
        Ok(Spectrum { peaks: merged })
    }

    pub fn empty() -> Self {
        Spectrum::default()
    }

    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn total_intensity(&self) -> f64 {
        self.peaks.iter().map(|p| p.intensity).sum()
    }

    pub fn max_intensity(&self) -> f64 {
        self.peaks.iter().map(|p| p.intensity).fold(0.0, f64::max)
    }

    /// Reads two-column text: `mz intensity` separated by whitespace or a
    /// comma. Empty lines and lines starting with `#` are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut peaks = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected `mz intensity`, got `{trimmed}`"),
                });
            }
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("`{s}` is not a number"),
                })
            };
            let mz = num(fields[0])?;
            let intensity = num(fields[1])?;
            if intensity < 0.0 {
                return invalid(format!("line {lineno}: negative intensity {intensity}"));
            }
            peaks.push(Peak::new(mz, intensity));
        }
        Spectrum::new(peaks)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Spectrum::parse(text.as_bytes())
    }

    /// Writes the two-column text format with `decimal_places` digits of m/z.
    pub fn write<W: Write>(&self, mut out: W, decimal_places: u32) -> std::io::Result<()> {
        let places = decimal_places as usize;
        for p in &self.peaks {
            writeln!(out, "{:.places$} {}", p.mz, p.intensity)?;
        }
        Ok(())
    }

    /// Keeps peaks with `intensity >= cutoff`; returns the removed intensity.
    pub fn trim_by_intensity(&self, cutoff: f64) -> (Spectrum, f64) {
        let kept: Vec<Peak> = self
            .peaks
            .iter()
            .copied()
            .filter(|p| p.intensity >= cutoff)
            .collect();
        let kept = Spectrum { peaks: kept };
        let removed = self.total_intensity() - kept.total_intensity();
        (kept, removed.max(0.0))
    }

    /// Keeps the smallest set of highest peaks whose joint intensity reaches
    /// `fraction` of the total. Peaks tied with the smallest kept intensity are
    /// kept too. Also returns the implied intensity cutoff; it is infinite when
    /// nothing is kept.
    pub fn trim_by_joint_coverage(&self, fraction: f64) -> (Spectrum, f64) {
        let fraction = fraction.clamp(0.0, 1.0);
        let mut intensities: Vec<f64> = self.peaks.iter().map(|p| p.intensity).collect();
        intensities.sort_by(|a, b| b.total_cmp(a));
        // Summed in the same order as the running total so that fraction = 1
        // reaches the last peak exactly.
        let total: f64 = intensities.iter().sum();
        let target = fraction * total;
        let mut cutoff = f64::INFINITY;
        if target > 0.0 {
            let mut acc = 0.0;
            for &x in &intensities {
                acc += x;
                cutoff = x;
                if acc >= target {
                    break;
                }
            }
        }
        let (kept, _) = self.trim_by_intensity(cutoff);
        (kept, cutoff)
    }

    /// Rounds every m/z to `decimal_places` and merges peaks falling on the
    /// same rounded value.
    pub fn round_and_aggregate(&self, decimal_places: u32) -> Spectrum {
        let mut bins: BTreeMap<i64, f64> = BTreeMap::new();
        for p in &self.peaks {
            *bins.entry(mz_bin(p.mz, decimal_places)).or_insert(0.0) += p.intensity;
        }
        Spectrum::from_bins(&bins, decimal_places)
    }

    /// Spectrum from integer m/z bins; bins must have positive m/z.
    pub fn from_bins(bins: &BTreeMap<i64, f64>, decimal_places: u32) -> Spectrum {
        let peaks = bins
            .iter()
            .filter(|(&b, _)| b > 0)
            .map(|(&b, &i)| Peak::new(bin_center(b, decimal_places), i))
            .collect();
        Spectrum { peaks }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(pairs: &[(f64, f64)]) -> Spectrum {
        Spectrum::new(pairs.iter().map(|&(m, i)| Peak::new(m, i)).collect()).unwrap()
    }

    fn three() -> Spectrum {
        spec(&[(100.0, 1000.0), (200.0, 990.0), (300.0, 10.0)])
    }

    fn intensities(s: &Spectrum) -> Vec<f64> {
        s.peaks().iter().map(|p| p.intensity).collect()
    }

    #[test]
    fn parse_reads_sorts_and_merges() {
        assert_eq!(
            Spectrum::parse_str("100.0 5.0\n200.0 7.0").unwrap(),
            spec(&[(100.0, 5.0), (200.0, 7.0)])
        );
        assert_eq!(
            Spectrum::parse_str("200.0 7.0\n100.0 5.0").unwrap(),
            spec(&[(100.0, 5.0), (200.0, 7.0)])
        );
        assert_eq!(
            Spectrum::parse_str("100.0 5.0\n100.0 1.0").unwrap(),
            spec(&[(100.0, 6.0)])
        );
        let commented = "# header\n\n100.0, 5.0\n  200.0\t7.0  \n";
        assert_eq!(Spectrum::parse_str(commented).unwrap().len(), 2);
    }

    #[test]
    fn parse_errors_name_the_line() {
        match Spectrum::parse_str("100 1\nabc 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match Spectrum::parse_str("100 1 3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Spectrum::parse_str("100 -1\n"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn intensity_trimming() {
        let (kept, removed) = three().trim_by_intensity(991.0);
        assert_eq!(intensities(&kept), vec![1000.0]);
        assert_eq!(removed, 1000.0);

        let (kept, removed) = three().trim_by_intensity(0.0);
        assert_eq!(kept.len(), 3);
        assert_eq!(removed, 0.0);

        let (kept, removed) = three().trim_by_intensity(990.0);
        assert_eq!(intensities(&kept), vec![1000.0, 990.0]);
        assert_eq!(removed, 10.0);
    }

    #[test]
    fn joint_coverage_trimming() {
        let (kept, cutoff) = three().trim_by_joint_coverage(0.99);
        assert_eq!(intensities(&kept), vec![1000.0, 990.0]);
        assert_eq!(cutoff, 990.0);

        let (kept, cutoff) = three().trim_by_joint_coverage(0.5);
        assert_eq!(intensities(&kept), vec![1000.0]);
        assert_eq!(cutoff, 1000.0);

        let (kept, _) = three().trim_by_joint_coverage(1.0);
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn joint_coverage_keeps_ties() {
        let s = spec(&[(1.0, 5.0), (2.0, 5.0), (3.0, 5.0), (4.0, 1.0)]);
        let (kept, cutoff) = s.trim_by_joint_coverage(0.3);
        assert_eq!(cutoff, 5.0);
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn rounding_merges_within_granularity() {
        let r = spec(&[(675.3681, 5.0), (675.3679, 3.0)]).round_and_aggregate(3);
        assert_eq!(r, spec(&[(675.368, 8.0)]));

        let r = spec(&[(675.3684, 5.0), (675.3666, 3.0)]).round_and_aggregate(3);
        assert_eq!(r, spec(&[(675.367, 3.0), (675.368, 5.0)]));

        let r = spec(&[(100.4, 1.0), (100.6, 2.0)]).round_and_aggregate(0);
        assert_eq!(r, spec(&[(100.0, 1.0), (101.0, 2.0)]));
    }

    #[test]
    fn tolerance_to_places() {
        assert_eq!(decimal_places_for_tolerance(0.05), 3);
        assert_eq!(decimal_places_for_tolerance(0.5), 2);
        assert_eq!(decimal_places_for_tolerance(0.01), 3);
    }

    #[test]
    fn write_round_trips() {
        let s = spec(&[(100.123, 5.0), (200.5, 7.5)]);
        let mut buf = Vec::new();
        s.write(&mut buf, 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "100.123 5\n200.500 7.5\n");
        assert_eq!(Spectrum::parse_str(&text).unwrap(), s);
    }
}
