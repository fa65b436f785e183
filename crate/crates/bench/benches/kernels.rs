use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ipsplice_bench::{critical_annulus, field, SEED};
use ipsplice_core::splice::{build_tranche, resample_sequence, DerivationMode, SpliceSetup};
use ipsplice_core::{
    count_disjoint_crossings, detect_four_arm, invade, min_defect_circuit, ArmEventSpec, StopRule,
};

fn invasion(c: &mut Criterion) {
    let mut g = c.benchmark_group("invade_to_exit");
    for r in [64, 128, 256] {
        let wf = field(r + 1, SEED);
        g.bench_with_input(BenchmarkId::from_parameter(r), &r, |b, &r| {
            b.iter(|| invade(&wf, StopRule::exit(r)).unwrap())
        });
    }
    g.finish();
}

fn crossings(c: &mut Criterion) {
    let mut g = c.benchmark_group("annulus");
    for n in [32, 64, 128] {
        let (ann, config) = critical_annulus(n, SEED);
        g.bench_with_input(BenchmarkId::new("max_flow", n), &n, |b, _| {
            b.iter(|| count_disjoint_crossings(&config, &ann).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("min_defect_circuit", n), &n, |b, _| {
            b.iter(|| min_defect_circuit(&config, &ann).unwrap())
        });
    }
    g.finish();
}

fn four_arm(c: &mut Criterion) {
    let mut g = c.benchmark_group("four_arm");
    for n in [32, 64, 128] {
        let spec = ArmEventSpec::new(0.5, 0.5, 2, n).unwrap();
        let wf = field(n, SEED);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| detect_four_arm(&wf, &spec).unwrap())
        });
    }
    g.finish();
}

fn sequence(c: &mut Criterion) {
    let setup = SpliceSetup::new(64, DerivationMode::Threshold).unwrap();
    let tranche = build_tranche(64, 0.125).unwrap();
    let wf = setup.field(SEED);
    c.bench_function("resample_sequence/64", |b| {
        b.iter(|| resample_sequence(&setup, &wf, &tranche, SEED + 1).unwrap())
    });
}

criterion_group!(benches, invasion, crossings, four_arm, sequence);
criterion_main!(benches);
