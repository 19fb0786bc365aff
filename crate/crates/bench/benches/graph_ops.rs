use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use snowgrow_bench::{random_graph, snowflake_graph};
use snowgrow_core::graph::QubitId;
use snowgrow_core::stabilizer::tableau_from_graph;
use snowgrow_core::union_find::UnionFind;

fn measurements(c: &mut Criterion) {
    let g = random_graph(64, 0.2, 1);
    let v = QubitId(0);
    c.bench_function("measure_y dense 64", |b| {
        b.iter_batched(|| g.clone(), |mut g| g.measure_y(v).unwrap(), BatchSize::SmallInput)
    });
    c.bench_function("measure_z dense 64", |b| {
        b.iter_batched(|| g.clone(), |mut g| g.measure_z(v).unwrap(), BatchSize::SmallInput)
    });
    let small = random_graph(10, 0.4, 2);
    c.bench_function("tableau from graph 10", |b| b.iter(|| tableau_from_graph(&small).unwrap()));
}

fn diameters(c: &mut Criterion) {
    let tree = snowflake_graph(10);
    c.bench_function("diameter snowflake 1024", |b| b.iter(|| tree.diameter()));
    let g = random_graph(200, 0.02, 3);
    c.bench_function("diameter sparse 200", |b| b.iter(|| g.diameter()));
}

fn union_find(c: &mut Criterion) {
    let n = 2500;
    c.bench_function("union-find grid 50x50", |b| {
        b.iter(|| {
            let mut uf = UnionFind::new(n);
            for i in 0..n {
                if i % 50 != 49 {
                    uf.union(i, i + 1);
                }
                if i + 50 < n {
                    uf.union(i, i + 50);
                }
            }
            uf.set_count()
        })
    });
}

criterion_group!(benches, measurements, diameters, union_find);
criterion_main!(benches);
