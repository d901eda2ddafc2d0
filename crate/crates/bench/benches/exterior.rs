use criterion::{criterion_group, criterion_main, Criterion};
use minka_core::ensemble::random_gaussian_matrix;
use minka_core::exterior::{mc, minors};
use std::hint::black_box;

fn bench_minor_enumeration(c: &mut Criterion) {
    let mut group = c.benchmark_group("minors");
    for &(p, q, h) in &[(4usize, 4usize, 2usize), (6, 6, 3), (8, 8, 4), (10, 10, 3)] {
        let m = random_gaussian_matrix(p, q, 7);
        group.bench_function(format!("{p}x{q}_h{h}"), |b| {
            b.iter(|| minors(black_box(&m), h).unwrap())
        });
    }
    group.finish();
}

fn bench_concentration(c: &mut Criterion) {
    let mut group = c.benchmark_group("mc");
    for &(p, q, h) in &[(6usize, 6usize, 3usize), (8, 8, 4)] {
        let m = random_gaussian_matrix(p, q, 11);
        group.bench_function(format!("{p}x{q}_h{h}"), |b| {
            b.iter(|| mc(black_box(&m), h).unwrap())
        });
    }
    group.finish();
}

fn bench_table_product(c: &mut Criterion) {
    let a = minors(&random_gaussian_matrix(6, 6, 3), 3).unwrap();
    let b_table = minors(&random_gaussian_matrix(6, 6, 4), 3).unwrap();
    c.bench_function("minor_table_product_6x6_h3", |b| {
        b.iter(|| black_box(&a).product(black_box(&b_table)).unwrap())
    });
}

criterion_group!(benches, bench_minor_enumeration, bench_concentration, bench_table_product);
criterion_main!(benches);
