use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use etdecon::assignment::{build_graph, connected_components};
use etdecon::chemistry::Precursor;
use etdecon::isotopes::{fine_structure, IsotopeTable};
use etdecon::pairing::{pair_advanced, pair_intermediate, FragmentObservation};
use etdecon::qp::QpSettings;
use etdecon::simulator::{simulate, SimConfig};
use etdecon::solver::{solve_component, SolverSettings};
use etdecon::{AnalysisConfig, Analyzer, FragmentKind};

fn isotopes(c: &mut Criterion) {
    let table = IsotopeTable::default();
    let m = Precursor::new("RPKPQQFFGLM", 3).unwrap().composition().unwrap();
    c.bench_function("fine_structure/substance_p", |b| {
        b.iter(|| fine_structure(black_box(&m), &table, 0.999).unwrap())
    });
    let big = Precursor::new(&"RPKPQQFFGLM".repeat(4), 6).unwrap().composition().unwrap();
    c.bench_function("fine_structure/44_residues", |b| {
        b.iter(|| fine_structure(black_box(&big), &table, 0.999).unwrap())
    });
}

fn deconvolution(c: &mut Criterion) {
    let table = IsotopeTable::default();
    let (spectrum, _) = simulate(&SimConfig::default(), &table).unwrap();
    let analyzer = Analyzer::new(AnalysisConfig::default(), &table).unwrap();
    let rounded = spectrum.round_and_aggregate(analyzer.config().decimal_places());
    let assignment = build_graph(analyzer.envelopes(), &rounded, analyzer.config().tol);
    let largest = connected_components(&assignment.graph)
        .into_iter()
        .max_by_key(|g| g.isotopologues.len())
        .unwrap();
    let settings = SolverSettings::default();
    c.bench_function("solve_component/largest", |b| {
        b.iter(|| solve_component(black_box(&largest), &settings))
    });
    c.bench_function("build_graph", |b| {
        b.iter(|| build_graph(analyzer.envelopes(), black_box(&rounded), 0.05))
    });
    c.bench_function("analyze/sequential", |b| b.iter(|| analyzer.analyze(black_box(&spectrum)).unwrap()));
    c.bench_function("analyze/concurrent", |b| {
        b.iter(|| analyzer.analyze_with(black_box(&spectrum), true).unwrap())
    });
}

fn pairing(c: &mut Criterion) {
    let frags: Vec<FragmentObservation> = (1..=10)
        .flat_map(|site| {
            (1..=2u32).flat_map(move |q| {
                [FragmentKind::C, FragmentKind::Z].into_iter().map(move |kind| FragmentObservation {
                    kind,
                    site,
                    q,
                    g: (site % 2) as i32,
                    intensity: 100.0 * site as f64 / q as f64,
                })
            })
        })
        .collect();
    c.bench_function("pairing/max_flow", |b| b.iter(|| pair_intermediate(black_box(&frags), 4)));
    c.bench_function("pairing/qp", |b| {
        b.iter(|| pair_advanced(black_box(&frags), 4, 0.1, 0.01, QpSettings::default()).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let table = IsotopeTable::default();
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    group.bench_function("10k_ions", |b| {
        b.iter_batched(
            || SimConfig {
                n_ions: 10_000,
                ..SimConfig::default()
            },
            |cfg| simulate(&cfg, &table).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, isotopes, deconvolution, pairing, simulation);
criterion_main!(benches);
