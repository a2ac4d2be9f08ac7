//! JSON report and CSV exports of an analysis.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use crate::bootstrap::BootstrapResult;
use crate::chemistry::SpeciesKind;
use crate::evaluation::ErrorReport;
use crate::pipeline::{Analysis, AnalysisConfig, Analyzer};

pub const REPORT_VERSION: u32 = 1;

fn kind_name(kind: SpeciesKind) -> &'static str {
    match kind {
        SpeciesKind::Precursor => "precursor",
        SpeciesKind::C => "c",
        SpeciesKind::Z => "z",
    }
}

pub fn report_json(analysis: &Analysis, config: &AnalysisConfig, evaluation: Option<&ErrorReport>) -> Value {
    let s = &analysis.summary;
    let p = &analysis.pairing;
    let d = &analysis.diagnostics;
    let b = &analysis.budget;
    let sites: serde_json::Map<String, Value> =
        s.frag_prob.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let etd_sites: serde_json::Map<String, Value> =
        p.etd_by_site.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let species: Vec<Value> = analysis
        .species
        .iter()
        .map(|e| {
            json!({
                "id": e.id,
                "label": e.label,
                "kind": kind_name(e.key.kind),
                "site": e.key.site,
                "q": e.key.q,
                "g": e.key.g,
                "alpha": e.alpha,
            })
        })
        .collect();
    let mut report = json!({
        "report_version": REPORT_VERSION,
        "config": {
            "sequence": config.sequence,
            "charge": config.charge,
            "tol": config.tol,
            "coverage": config.coverage,
            "min_support": config.min_support,
            "trim": config.trim,
            "penalties": config.penalties,
            "pairing": config.pairing,
            "lambda1": config.lambda1,
            "lambda2": config.lambda2,
            "max_q_per_block": config.max_q_per_block,
        },
        "branching": {
            "p_etnod_given_reaction": s.p_etnod_given_reaction,
            "p_ptr_given_reaction": s.p_ptr_given_reaction(),
            "defined": s.p_etnod_given_reaction.is_some(),
        },
        "fragmentation": {
            "p_fragmentation": s.p_fragmentation,
            "frag_prob": sites,
            "etd_by_site": etd_sites,
        },
        "intensities": {
            "ptr": s.intensity_ptr,
            "etnod": s.intensity_etnod,
            "etd": s.intensity_etd,
            "precursor_ptr": s.precursor_ptr,
            "precursor_etnod": s.precursor_etnod,
            "fragment_ptr": s.fragment_ptr,
            "fragment_etnod": s.fragment_etnod,
            "reacted_precursor": s.reacted_precursor_intensity,
            "unreacted_precursor": s.unreacted_precursor_intensity,
            "htr_c": s.htr_c_intensity,
            "total": b.total,
            "trimmed": b.trimmed,
            "orphan": b.orphan,
            "pruned": b.pruned,
            "explainable": b.explainable,
            "trim_cutoff": b.trim_cutoff,
        },
        "diagnostics": {
            "abs_error": d.abs_error,
            "overestimates": d.overestimates,
            "underestimates": d.underestimates,
            "abs_error_over_tic": d.abs_error_over_tic,
            "abs_error_over_explainable": d.abs_error_over_explainable,
            "undefined_ratio": d.undefined_ratio,
            "spectrum_mismatch": analysis.spectrum_mismatch,
            "components": analysis.components,
            "solver_status": analysis.status,
            "pairing_algorithm": p.algorithm,
            "pairing_status": p.status,
            "matched_flow": p.matched_flow,
            "pairing_cost": p.total_cost,
        },
        "species": species,
    });
    if let Some(e) = evaluation {
        report["evaluation"] = json!(e);
    }
    report
}

pub fn write_species_csv<W: Write>(mut w: W, analysis: &Analysis) -> std::io::Result<()> {
    writeln!(w, "species_id,label,kind,site,q,g,alpha")?;
    for e in &analysis.species {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.id,
            e.label,
            kind_name(e.key.kind),
            e.key.site,
            e.key.q,
            e.key.g,
            e.alpha
        )?;
    }
    Ok(())
}

/// Pairing flows; an unobserved cofragment is written as `-`.
pub fn write_flows_csv<W: Write>(mut w: W, analysis: &Analysis, sequence_len: usize) -> std::io::Result<()> {
    let p = &analysis.pairing;
    let label = |i: Option<usize>| match i {
        Some(i) => {
            let n = &p.nodes[i];
            let base = match n.kind {
                crate::chemistry::FragmentKind::C => format!("c{}_q{}", n.site, n.q),
                crate::chemistry::FragmentKind::Z => format!("z{}_q{}", sequence_len - n.site, n.q),
            };
            match n.g {
                Some(g) => format!("{base}_g{g}"),
                None => base,
            }
        }
        None => "-".to_string(),
    };
    let opt = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
    writeln!(w, "site,c,z,flow,cost,n_ptr,n_etnod")?;
    for f in &p.pairs {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            f.site,
            label(f.c),
            label(f.z),
            f.flow,
            f.cost,
            opt(f.n_ptr),
            opt(f.n_etnod)
        )?;
    }
    Ok(())
}

/// Fit errors per grouping, fragmentation per site and reaction intensities,
/// one CSV each under `dir`.
pub fn write_plotdata(dir: &Path, analysis: &Analysis, sequence_len: usize) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("fit_errors.csv"))?);
    writeln!(w, "mz_lo,mz_hi,observed,fitted,pruned")?;
    for g in &analysis.groupings {
        writeln!(w, "{},{},{},{},{}", g.mz_lo, g.mz_hi, g.observed, g.fitted, g.pruned)?;
    }
    w.flush()?;

    let s = &analysis.summary;
    let mut w = BufWriter::new(File::create(dir.join("fragmentation.csv"))?);
    writeln!(w, "site,c,z,etd_intensity,probability")?;
    for (site, p) in &s.frag_prob {
        let etd = analysis.pairing.etd_by_site.get(site).copied().unwrap_or(0.0);
        writeln!(w, "{site},c{site},z{},{etd},{p}", sequence_len - site)?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join("reactions.csv"))?);
    writeln!(w, "reaction,source,intensity")?;
    writeln!(w, "ptr,precursor,{}", s.precursor_ptr)?;
    writeln!(w, "ptr,fragment,{}", s.fragment_ptr)?;
    writeln!(w, "etnod,precursor,{}", s.precursor_etnod)?;
    writeln!(w, "etnod,fragment,{}", s.fragment_etnod)?;
    writeln!(w, "etd,fragment,{}", s.intensity_etd)?;
    w.flush()
}

pub fn write_envelopes_csv<W: Write>(mut w: W, analyzer: &Analyzer) -> std::io::Result<()> {
    let len = analyzer.precursor().len();
    writeln!(w, "species_id,label,mz,probability")?;
    for (sp, env) in analyzer.species().iter().zip(analyzer.envelopes()) {
        let label = sp.key.label(len);
        for iso in &env.isotopologues {
            writeln!(w, "{},{},{},{}", env.species, label, iso.mz, iso.probability)?;
        }
    }
    Ok(())
}

/// One row per replicate and quantity; undefined values are left empty.
pub fn write_bootstrap_csv<W: Write>(mut w: W, result: &BootstrapResult) -> std::io::Result<()> {
    writeln!(w, "replicate,quantity,value")?;
    for (r, values) in result.replicates.iter().enumerate() {
        for (name, v) in values {
            match v {
                Some(x) => writeln!(w, "{r},{name},{x}")?,
                None => writeln!(w, "{r},{name},")?,
            }
        }
    }
    Ok(())
}

pub fn bootstrap_json(result: &BootstrapResult, replicates: usize, n_molecules: u64, seed: u64) -> Value {
    json!({
        "report_version": REPORT_VERSION,
        "replicates": replicates,
        "n_molecules": n_molecules,
        "seed": seed,
        "point_estimate": result.point_estimate,
        "stats": result.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isotopes::IsotopeTable;
    use crate::spectrum::{Peak, Spectrum};

    #[test]
    fn report_has_stable_keys() {
        let table = IsotopeTable::default();
        let analyzer = Analyzer::new(AnalysisConfig::default(), &table).unwrap();
        let env = &analyzer.envelopes()[0];
        let peaks = env.isotopologues.iter().map(|i| Peak::new(i.mz, 100.0 * i.probability)).collect();
        let a = analyzer.analyze(&Spectrum::new(peaks).unwrap()).unwrap();
        let r = report_json(&a, analyzer.config(), None);
        for key in ["report_version", "branching", "fragmentation", "intensities", "diagnostics", "species"] {
            assert!(r.get(key).is_some(), "{key}");
        }
        assert_eq!(r["report_version"], 1);
        // Only unreacted precursor: the branching ratio is undefined.
        assert!(r["branching"]["p_etnod_given_reaction"].is_null());
        assert_eq!(r["branching"]["defined"], false);

        let mut csv = Vec::new();
        write_species_csv(&mut csv, &a).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("species_id,label,kind,site,q,g,alpha\n0,M_q3_g0,precursor,0,3,0,"));
    }
}
