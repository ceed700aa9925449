//! Parallel vs sequential execution of the three data-parallel hot spots:
//! Monte Carlo shots, optimizer candidate evaluation and Clifford-level
//! sweeps. Build with `--no-default-features` to see the fallback alone
//! (both variants then run sequentially).

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use mlti::costs::{MagicCatalog, MagicEntry};
use mlti::exec::Execution;
use mlti::level1mc::{build_gadget, run, McNoise};
use mlti::noise::PhysicalNoise;
use mlti::optimizer::{
    exhaustive_oracle, optimize_with, Bounds, LevelBounds, SearchOptions, SearchSpace,
};
use mlti::pipeline::{Target, PUMP_WINDOW};
use mlti::sweep::{sweep, SweepConfig};

const MODES: [(&str, Execution); 2] = [
    ("parallel", Execution::Parallel),
    ("sequential", Execution::Sequential),
];

fn mc_shots(c: &mut Criterion) {
    let circuit = build_gadget(3, 9).unwrap();
    let noise = McNoise::circuit_level(PhysicalNoise::new(1e-3).unwrap());
    let shots = 50_000;
    let mut g = c.benchmark_group("mc_shots");
    g.throughput(Throughput::Elements(shots));
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, shots), &exec, |b, &exec| {
            b.iter(|| run(&circuit, &noise, black_box(shots), 7, exec).unwrap())
        });
    }
    g.finish();
}

fn small_space() -> SearchSpace {
    SearchSpace {
        levels: vec![
            LevelBounds {
                k: Bounds::new(1, 8),
                d_x: Bounds::new(3, 9),
                d_z: Bounds::new(3, 24),
                magic: vec![],
            },
            LevelBounds {
                k: Bounds::new(2, 8),
                d_x: Bounds::new(3, 9),
                d_z: Bounds::new(3, 9),
                magic: vec!["cheap".into(), "clean".into()],
            },
        ],
        anchor: 31,
        k_window: PUMP_WINDOW,
    }
}

fn optimizer_candidates(c: &mut Criterion) {
    let e = |label: &str, infidelity, volume| MagicEntry {
        label: label.into(),
        infidelity,
        volume,
    };
    let cat = MagicCatalog::new(vec![e("cheap", 1e-9, 2e4), e("clean", 1e-12, 6e4)]).unwrap();
    let space = small_space();
    let noise = PhysicalNoise::new(5e-4).unwrap();
    let target = Target::Clifford(6);
    let placeholder = MagicCatalog::placeholder();
    let standard = SearchSpace::standard(2, Target::Clifford(20), 1e-12, &placeholder).unwrap();

    let mut g = c.benchmark_group("optimizer_candidates");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = SearchOptions {
            exec,
            ..SearchOptions::default()
        };
        g.bench_with_input(BenchmarkId::new("exhaustive", name), &opts, |b, opts| {
            b.iter(|| exhaustive_oracle(1e-6, target, noise, &cat, &space, opts).unwrap())
        });
        g.bench_with_input(
            BenchmarkId::new("standard_r2_l20", name),
            &opts,
            |b, opts| {
                b.iter(|| {
                    optimize_with(
                        1e-12,
                        Target::Clifford(20),
                        noise,
                        &placeholder,
                        &standard,
                        opts,
                    )
                    .unwrap()
                })
            },
        );
    }
    g.finish();
}

fn sweeps(c: &mut Criterion) {
    let cat = MagicCatalog::placeholder();
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        let mut cfg = SweepConfig::standard(PhysicalNoise::new(5e-4).unwrap());
        cfg.l_min = 16;
        cfg.l_max = 22;
        cfg.levels = vec![1, 2];
        cfg.search.exec = exec;
        g.bench_with_input(BenchmarkId::new("l16_22_r12", name), &cfg, |b, cfg| {
            b.iter(|| sweep(cfg, &cat).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, mc_shots, optimizer_candidates, sweeps);
criterion_main!(benches);
