use criterion::{criterion_group, criterion_main, Criterion};
use snowgrow_core::phase1::{run_until_target, DeviceConfig, Strategy};
use snowgrow_core::phase2::{build_successful_snowball, fresh_flakes, optimize_schedule, AttemptModel};
use snowgrow_core::phase3::{generate_bonds_with_probability, percolation_report};
use snowgrow_core::trials::trial_rng;

fn phase1(c: &mut Criterion) {
    for strategy in [Strategy::NoBuffer, Strategy::Buffer, Strategy::Recycle] {
        let cfg = DeviceConfig::new(0.125, strategy).unwrap();
        let mut i = 0;
        c.bench_function(&format!("phase1 p=1/8 {strategy}"), |b| {
            b.iter(|| {
                i += 1;
                run_until_target(&cfg, &mut trial_rng(0, i)).unwrap()
            })
        });
    }
}

fn phase2(c: &mut Criterion) {
    let p = 1.0 / 16.0;
    c.bench_function("optimize schedule p=1/16", |b| {
        b.iter(|| optimize_schedule(p, AttemptModel::ParallelBurst, 4.07, 0).unwrap())
    });
    let schedule = optimize_schedule(p, AttemptModel::ParallelBurst, 4.07, 0).unwrap().schedule;
    let flakes = fresh_flakes(p).unwrap();
    let mut i = 0;
    c.bench_function("successful snowball p=1/16", |b| {
        b.iter(|| {
            i += 1;
            build_successful_snowball(flakes.clone(), &schedule, p, &mut trial_rng(1, i)).unwrap()
        })
    });
}

fn phase3(c: &mut Criterion) {
    let mut i = 0;
    c.bench_function("percolation 50x50", |b| {
        b.iter(|| {
            i += 1;
            let bonds = generate_bonds_with_probability(50, 50, 0.5, &mut trial_rng(2, i)).unwrap();
            percolation_report(&bonds)
        })
    });
}

criterion_group!(benches, phase1, phase2, phase3);
criterion_main!(benches);
