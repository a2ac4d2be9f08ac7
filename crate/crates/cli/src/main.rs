mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use etdecon::bootstrap::bootstrap_analyze;
use etdecon::evaluation::{deconvolution_error, probability_error, ErrorReport};
use etdecon::isotopes::IsotopeTable;
use etdecon::pipeline::Analyzer;
use etdecon::report;
use etdecon::simulator::{simulate, GroundTruth, SimConfig};
use etdecon::spectrum::Spectrum;
use serde::{Deserialize, Serialize};

use config::{Reader, Settings};

#[derive(Parser)]
#[command(name = "etdecon", version, about = "Deconvolution and reaction analysis of ETD mass spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a centroided spectrum.
    Analyze {
        /// Two-column `mz intensity` text file.
        spectrum: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Ground truth written by `simulate`; adds error metrics to the report.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also write the deconvolution graph as node/edge CSV files.
        #[arg(long)]
        export_graph: bool,
        /// Also write all theoretical envelopes.
        #[arg(long)]
        export_envelopes: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate a synthetic spectrum with known ground truth.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Resample a spectrum and re-run the analysis on every replicate.
    Bootstrap {
        spectrum: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long)]
        replicates: Option<String>,
        #[arg(long)]
        n_molecules: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Flat `key = value` configuration file; command-line options win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting, e.g. `mod.0=H-1` or `site.5=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads; above 1 components and replicates run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    /// Isotope table overrides, lines `element mass abundance`.
    #[arg(long)]
    isotopes: Option<PathBuf>,
}

#[derive(Args)]
struct AnalysisArgs {
    #[arg(long)]
    sequence: Option<String>,
    #[arg(long)]
    fasta: Option<String>,
    #[arg(long)]
    charge: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    coverage: Option<String>,
    #[arg(long)]
    min_support: Option<String>,
    /// none, intensity or joint_coverage.
    #[arg(long)]
    trim_mode: Option<String>,
    #[arg(long)]
    trim_value: Option<String>,
    #[arg(long)]
    l1_x: Option<String>,
    #[arg(long)]
    l1_alpha: Option<String>,
    #[arg(long)]
    l2_x: Option<String>,
    #[arg(long)]
    l2_alpha: Option<String>,
    /// basic, intermediate or advanced.
    #[arg(long)]
    pairing: Option<String>,
    #[arg(long)]
    lambda1: Option<String>,
    #[arg(long)]
    lambda2: Option<String>,
    #[arg(long)]
    max_q_per_block: Option<String>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    sequence: Option<String>,
    #[arg(long)]
    fasta: Option<String>,
    #[arg(long)]
    charge: Option<String>,
    #[arg(long)]
    n_ions: Option<String>,
    #[arg(long)]
    p_ptr: Option<String>,
    #[arg(long)]
    p_etnod: Option<String>,
    #[arg(long)]
    p_etd: Option<String>,
    #[arg(long)]
    rate_scale: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    bin_places: Option<String>,
}

macro_rules! overrides {
    ($settings:expr, $args:expr, [$($field:ident),* $(,)?]) => {
        $(
            if let Some(v) = &$args.$field {
                $settings.insert(stringify!($field).to_string(), v.clone());
            }
        )*
    };
}

impl AnalysisArgs {
    fn apply(&self, s: &mut Settings) {
        overrides!(s, self, [
            sequence, fasta, charge, tol, coverage, min_support, trim_mode, trim_value,
            l1_x, l1_alpha, l2_x, l2_alpha, pairing, lambda1, lambda2, max_q_per_block,
        ]);
    }
}

impl SimArgs {
    fn apply(&self, s: &mut Settings) {
        overrides!(s, self, [
            sequence, fasta, charge, n_ions, p_ptr, p_etnod, p_etd, rate_scale, sigma, bin_places,
        ]);
    }
}

impl CommonArgs {
    fn settings(&self) -> Result<Settings> {
        let mut s = config::load_settings(self.config.as_deref())?;
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            s.insert(k.trim().to_string(), v.trim().to_string());
        }
        if let Some(seed) = &self.seed {
            s.insert("seed".to_string(), seed.clone());
        }
        if self.jobs > 1 {
            s.insert("parallel".to_string(), "true".to_string());
        }
        Ok(s)
    }

    fn isotope_table(&self) -> Result<IsotopeTable> {
        let table = IsotopeTable::default();
        match &self.isotopes {
            None => Ok(table),
            Some(p) => {
                let f = File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
                Ok(table.with_overrides(BufReader::new(f))?)
            }
        }
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(self.jobs.max(1)).build()?)
    }
}

/// Simulation parameters stored next to their ground truth.
#[derive(Serialize, Deserialize)]
struct SimulationRecord {
    config: SimConfig,
    truth: GroundTruth,
}

enum Outcome {
    Done,
    Empty,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.with_context(|| name.to_string())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Spectrum::parse(BufReader::new(f))?)
}

fn analysis_setup(analysis: &AnalysisArgs, common: &CommonArgs) -> Result<Analyzer> {
    let mut settings = stage("config", common.settings())?;
    analysis.apply(&mut settings);
    settings.remove("seed");
    let mut reader = Reader::new(settings);
    let cfg = stage("config", config::analysis_config(&mut reader))?;
    stage("config", reader.finish())?;
    let table = stage("isotopes", common.isotope_table())?;
    Ok(Analyzer::new(cfg, &table)?)
}

fn cmd_analyze(
    spectrum: &Path,
    analysis: &AnalysisArgs,
    truth: Option<&Path>,
    export_graph: bool,
    export_envelopes: bool,
    common: &CommonArgs,
) -> Result<Outcome> {
    let analyzer = analysis_setup(analysis, common)?;
    let spectrum = stage("spectrum", read_spectrum(spectrum))?;
    let record: Option<SimulationRecord> = match truth {
        None => None,
        Some(p) => {
            let f = File::open(p).with_context(|| format!("cannot open {}", p.display()));
            let f = stage("truth", f)?;
            Some(stage("truth", serde_json::from_reader(BufReader::new(f)).map_err(Into::into))?)
        }
    };
    let pool = common.thread_pool()?;
    let result = pool.install(|| analyzer.analyze(&spectrum))?;

    let evaluation = record.map(|r| {
        let decon = deconvolution_error(&r.truth.counts(), &result.alpha_by_key(), r.config.n_ions);
        let (perr, dir) = match (r.config.etnod_given_reaction(), result.summary.p_etnod_given_reaction) {
            (Some(t), Some(e)) => {
                let (d, dir) = probability_error((t, 1.0 - t), (e, 1.0 - e));
                (Some(d), Some(dir))
            }
            _ => (None, None),
        };
        ErrorReport {
            deconvolution_error: decon,
            probability_error: perr,
            favored_reaction: dir,
        }
    });

    let out = &common.output_dir;
    let len = analyzer.precursor().len();
    stage("report", (|| -> Result<()> {
        fs::create_dir_all(out)?;
        write_json(&out.join("report.json"), &report::report_json(&result, analyzer.config(), evaluation.as_ref()))?;
        write_file(&out.join("species.csv"), |w| report::write_species_csv(w, &result))?;
        write_file(&out.join("flows.csv"), |w| report::write_flows_csv(w, &result, len))?;
        report::write_plotdata(&out.join("plotdata"), &result, len)?;
        if export_graph {
            if let Some(a) = &result.assignment {
                write_file(&out.join("graph_nodes.csv"), |w| a.graph.write_nodes_csv(w))?;
                write_file(&out.join("graph_edges.csv"), |w| a.graph.write_edges_csv(w))?;
            }
        }
        if export_envelopes {
            write_file(&out.join("envelopes.csv"), |w| report::write_envelopes_csv(w, &analyzer))?;
        }
        Ok(())
    })())?;
    Ok(if result.is_empty() { Outcome::Empty } else { Outcome::Done })
}

fn cmd_simulate(sim: &SimArgs, common: &CommonArgs) -> Result<Outcome> {
    let mut settings = stage("config", common.settings())?;
    sim.apply(&mut settings);
    settings.remove("parallel");
    let mut reader = Reader::new(settings);
    let cfg = stage("config", config::sim_config(&mut reader))?;
    stage("config", reader.finish())?;
    let table = stage("isotopes", common.isotope_table())?;
    let (spectrum, truth) = simulate(&cfg, &table).map_err(|e| e.in_stage("simulate"))?;
    let out = &common.output_dir;
    stage("report", (|| -> Result<()> {
        fs::create_dir_all(out)?;
        write_file(&out.join("spectrum.txt"), |w| spectrum.write(w, cfg.bin_places))?;
        write_json(&out.join("ground_truth.json"), &SimulationRecord { config: cfg.clone(), truth })
    })())?;
    Ok(Outcome::Done)
}

fn cmd_bootstrap(
    spectrum: &Path,
    analysis: &AnalysisArgs,
    replicates: Option<&String>,
    n_molecules: Option<&String>,
    common: &CommonArgs,
) -> Result<Outcome> {
    let mut settings = stage("config", common.settings())?;
    analysis.apply(&mut settings);
    if let Some(r) = replicates {
        settings.insert("replicates".to_string(), r.clone());
    }
    if let Some(n) = n_molecules {
        settings.insert("n_molecules".to_string(), n.clone());
    }
    let mut reader = Reader::new(settings);
    let bcfg = stage("config", config::bootstrap_config(&mut reader))?;
    let mut acfg = stage("config", config::analysis_config(&mut reader))?;
    stage("config", reader.finish())?;
    let parallel = acfg.parallel;
    acfg.parallel = false;
    let table = stage("isotopes", common.isotope_table())?;
    let analyzer = Analyzer::new(acfg, &table)?;
    let spectrum = stage("spectrum", read_spectrum(spectrum))?;
    let pool = common.thread_pool()?;
    let result = pool
        .install(|| bootstrap_analyze(&analyzer, &spectrum, &bcfg, parallel))
        .map_err(|e| e.in_stage("bootstrap"))?;
    let out = &common.output_dir;
    stage("report", (|| -> Result<()> {
        fs::create_dir_all(out)?;
        write_file(&out.join("bootstrap.csv"), |w| report::write_bootstrap_csv(w, &result))?;
        write_json(
            &out.join("bootstrap.json"),
            &report::bootstrap_json(&result, bcfg.replicates, bcfg.n_molecules, bcfg.seed),
        )
    })())?;
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Analyze {
            spectrum,
            analysis,
            truth,
            export_graph,
            export_envelopes,
            common,
        } => cmd_analyze(spectrum, analysis, truth.as_deref(), *export_graph, *export_envelopes, common),
        Command::Simulate { sim, common } => cmd_simulate(sim, common),
        Command::Bootstrap {
            spectrum,
            analysis,
            replicates,
            n_molecules,
            common,
        } => cmd_bootstrap(spectrum, analysis, replicates.as_ref(), n_molecules.as_ref(), common),
    };
    match outcome {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Empty) => {
            eprintln!("warning: no species could be explained");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
