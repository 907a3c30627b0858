use criterion::{criterion_group, criterion_main, Criterion};
use opsym::cert::Budget;
use opsym::cpmaps::{cb_norm, LinMap};
use opsym::fnspace::is_positive_kernel;
use opsym::matcore::herm_eig;
use opsym::rng::{random_gaussian, seeded};
use opsym::symnorm::{haagerup_upper, plus_norm, sym_norm};
use opsym::CMatrix;
use opsym_bench::{elementary, hermitian, kernel, m2};
use std::hint::black_box;

fn eigen(c: &mut Criterion) {
    for n in [4, 16, 32] {
        let a = hermitian(n, 1);
        c.bench_function(&format!("herm_eig {n}"), |b| b.iter(|| herm_eig(black_box(&a)).unwrap()));
    }
}

fn norms(c: &mut Criterion) {
    let u = elementary(3);
    let budget = Budget::quick();
    c.bench_function("sym_norm elementary M2", |b| b.iter(|| sym_norm(black_box(&u), &budget)));
    c.bench_function("haagerup_upper elementary M2", |b| b.iter(|| haagerup_upper(black_box(&u))));
    let p = CMatrix::unit(2, 2, 0, 0);
    let pairs = [(p.clone(), p)];
    c.bench_function("plus_norm k=2", |b| b.iter(|| plus_norm(black_box(&pairs), 2, &budget).unwrap()));
    let mut rng = seeded(4, 0);
    let images: Vec<CMatrix> = (0..4).map(|_| random_gaussian(&mut rng, 2, 2)).collect();
    let phi = LinMap::from_images(m2(), &images).unwrap();
    c.bench_function("cb_norm M2 -> M2", |b| b.iter(|| cb_norm(black_box(&phi), &budget)));
}

fn kernels(c: &mut Criterion) {
    let k = kernel(4, 2, 5);
    c.bench_function("is_positive_kernel 4x2", |b| b.iter(|| is_positive_kernel(black_box(&k)).unwrap()));
}

criterion_group!(benches, eigen, norms, kernels);
criterion_main!(benches);
