//! Flat `key = value` configuration files merged with command-line
//! overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use etdecon::bootstrap::BootstrapConfig;
use etdecon::chemistry::FormulaDelta;
use etdecon::pairing::PairingAlgorithm;
use etdecon::pipeline::{AnalysisConfig, TrimMode};
use etdecon::simulator::SimConfig;

pub type Settings = BTreeMap<String, String>;

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_settings(text: &str) -> Result<Settings> {
    let mut out = Settings::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
        let k = k.trim();
        if k.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn load_settings(path: Option<&Path>) -> Result<Settings> {
    match path {
        None => Ok(Settings::new()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            parse_settings(&text).with_context(|| format!("in {}", p.display()))
        }
    }
}

/// First record of a FASTA file, or the whole file when it has no header.
pub fn read_fasta(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut seq = String::new();
    let mut seen_header = false;
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with('>') {
            if seen_header || !seq.is_empty() {
                break;
            }
            seen_header = true;
        } else if !line.starts_with(';') {
            seq.extend(line.chars().filter(|c| !c.is_whitespace()));
        }
    }
    if seq.is_empty() {
        bail!("{} holds no sequence", path.display());
    }
    Ok(seq.to_ascii_uppercase())
}

/// Typed access to settings, remembering which keys were consumed so that
/// misspelled keys are reported.
pub struct Reader {
    settings: Settings,
    used: std::collections::BTreeSet<String>,
}

impl Reader {
    pub fn new(settings: Settings) -> Self {
        Reader {
            settings,
            used: Default::default(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        let v = self.settings.get(key).cloned();
        if v.is_some() {
            self.used.insert(key.to_string());
        }
        v
    }

    pub fn get<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("key `{key}`: cannot parse `{v}`: {e}")),
        }
    }

    pub fn or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Entries `prefix.<index> = value`.
    pub fn indexed(&mut self, prefix: &str) -> Result<BTreeMap<usize, String>> {
        let keys: Vec<String> = self
            .settings
            .keys()
            .filter(|k| k.starts_with(&format!("{prefix}.")))
            .cloned()
            .collect();
        let mut out = BTreeMap::new();
        for k in keys {
            let idx: usize = k[prefix.len() + 1..]
                .parse()
                .map_err(|_| anyhow!("key `{k}`: expected `{prefix}.<index>`"))?;
            out.insert(idx, self.raw(&k).expect("key exists"));
        }
        Ok(out)
    }

    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&String> = self.settings.keys().filter(|k| !self.used.contains(*k)).collect();
        if !unknown.is_empty() {
            bail!(
                "unknown configuration keys: {}",
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            );
        }
        Ok(())
    }
}

fn sequence(r: &mut Reader) -> Result<Option<String>> {
    let seq: Option<String> = r.get("sequence")?;
    let fasta: Option<String> = r.get("fasta")?;
    match (seq, fasta) {
        (Some(_), Some(_)) => bail!("give either `sequence` or `fasta`, not both"),
        (Some(s), None) => Ok(Some(s.to_ascii_uppercase())),
        (None, Some(f)) => Ok(Some(read_fasta(Path::new(&f))?)),
        (None, None) => Ok(None),
    }
}

pub fn analysis_config(r: &mut Reader) -> Result<AnalysisConfig> {
    let d = AnalysisConfig::default();
    let trim_mode: String = r.or("trim_mode", "none".to_string())?;
    let trim_value: Option<f64> = r.get("trim_value")?;
    let trim = match (trim_mode.as_str(), trim_value) {
        ("none", _) => TrimMode::None,
        ("intensity", Some(v)) => TrimMode::Intensity(v),
        ("joint_coverage", Some(v)) => TrimMode::JointCoverage(v),
        ("intensity" | "joint_coverage", None) => bail!("trim_mode `{trim_mode}` needs trim_value"),
        (other, _) => bail!("unknown trim_mode `{other}` (none, intensity, joint_coverage)"),
    };
    let mut modifications = BTreeMap::new();
    for (i, f) in r.indexed("mod")? {
        modifications.insert(i, FormulaDelta::parse(&f).with_context(|| format!("key `mod.{i}`"))?);
    }
    let mut penalties = d.penalties;
    penalties.l1_x = r.or("l1_x", penalties.l1_x)?;
    penalties.l1_alpha = r.or("l1_alpha", penalties.l1_alpha)?;
    penalties.l2_x = r.or("l2_x", penalties.l2_x)?;
    penalties.l2_alpha = r.or("l2_alpha", penalties.l2_alpha)?;
    let cfg = AnalysisConfig {
        sequence: sequence(r)?.unwrap_or(d.sequence),
        charge: r.or("charge", d.charge)?,
        modifications,
        tol: r.or("tol", d.tol)?,
        coverage: r.or("coverage", d.coverage)?,
        min_support: r.or("min_support", d.min_support)?,
        trim,
        penalties,
        pairing: r.or::<PairingAlgorithm>("pairing", d.pairing)?,
        lambda1: r.or("lambda1", d.lambda1)?,
        lambda2: r.or("lambda2", d.lambda2)?,
        max_q_per_block: r.or("max_q_per_block", d.max_q_per_block)?,
        parallel: r.or("parallel", d.parallel)?,
        qp: d.qp,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn sim_config(r: &mut Reader) -> Result<SimConfig> {
    let d = SimConfig::default();
    let weights = r.indexed("site")?;
    let site_weights = if weights.is_empty() {
        None
    } else {
        let mut w = BTreeMap::new();
        for (k, v) in weights {
            w.insert(k, v.parse::<f64>().map_err(|e| anyhow!("key `site.{k}`: {e}"))?);
        }
        Some(w)
    };
    let cfg = SimConfig {
        sequence: sequence(r)?.unwrap_or(d.sequence),
        charge: r.or("charge", d.charge)?,
        n_ions: r.or("n_ions", d.n_ions)?,
        p_ptr: r.or("p_ptr", d.p_ptr)?,
        p_etnod: r.or("p_etnod", d.p_etnod)?,
        p_etd: r.or("p_etd", d.p_etd)?,
        rate_scale: r.or("rate_scale", d.rate_scale)?,
        sigma: r.or("sigma", d.sigma)?,
        seed: r.or("seed", d.seed)?,
        bin_places: r.or("bin_places", d.bin_places)?,
        site_weights,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn bootstrap_config(r: &mut Reader) -> Result<BootstrapConfig> {
    let d = BootstrapConfig::default();
    let cfg = BootstrapConfig {
        replicates: r.or("replicates", d.replicates)?,
        n_molecules: r.or("n_molecules", d.n_molecules)?,
        seed: r.or("seed", d.seed)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_files() {
        let s = parse_settings("# comment\ntol = 0.02\n\nsequence=GG # trailing\nmod.0 = H-1\n").unwrap();
        assert_eq!(s["tol"], "0.02");
        assert_eq!(s["sequence"], "GG");
        assert!(parse_settings("tol 0.02").is_err());
        let mut r = Reader::new(s);
        let cfg = analysis_config(&mut r).unwrap();
        assert_eq!(cfg.tol, 0.02);
        assert_eq!(cfg.modifications.len(), 1);
        r.finish().unwrap();
    }

    #[test]
    fn unknown_keys_are_errors() {
        let mut r = Reader::new(parse_settings("tolerance = 1").unwrap());
        analysis_config(&mut r).unwrap();
        assert!(r.finish().unwrap_err().to_string().contains("tolerance"));
    }

    #[test]
    fn rejects_bad_values() {
        let mut r = Reader::new(parse_settings("tol = -1").unwrap());
        assert!(analysis_config(&mut r).is_err());
        let mut r = Reader::new(parse_settings("trim_mode = intensity").unwrap());
        assert!(analysis_config(&mut r).is_err());
        let mut r = Reader::new(parse_settings("p_etd = 0.9").unwrap());
        assert!(sim_config(&mut r).is_err());
    }
}
