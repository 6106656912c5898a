use criterion::{criterion_group, criterion_main, Criterion};
use fano_core::catalog;
use fano_core::divisor::conic_angle_report;
use fano_core::potential::normalization_constant;

fn exact(c: &mut Criterion) {
    for name in ["blp_p2", "blpq_p2", "blp_p3", "blp_p5"] {
        let p = catalog::by_name(name).unwrap();
        c.bench_function(&format!("fano_invariants/{name}"), |b| {
            b.iter(|| p.fano_invariants())
        });
    }
    let p = catalog::blpq_p2();
    c.bench_function("conic_angle_report/blpq_p2", |b| {
        b.iter(|| conic_angle_report(&p).unwrap())
    });
    c.bench_function("hull/blp_p3", |b| {
        let q = catalog::blp_p3();
        b.iter(|| fano_core::LatticePolytope::new(None, 3, q.vertices().to_vec(), None).unwrap())
    });
}

fn normalization(c: &mut Criterion) {
    let mut group = c.benchmark_group("normalization_constant");
    group.sample_size(10);
    for name in ["p1", "blp_p2"] {
        let p = catalog::by_name(name).unwrap();
        group.bench_function(name, |b| b.iter(|| normalization_constant(&p).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, exact, normalization);
criterion_main!(benches);
