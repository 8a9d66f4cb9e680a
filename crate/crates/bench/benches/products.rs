use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use tnn_core::network::LeapfrogBlock;
use tnn_core::tensor::{facewise_product, mode3_product};
use tnn_core::transform::dct_matrix;
use tnn_core::{
    m_product, t_product_with, tubal_exp, Activation, TProductPath, Tensor3, Transform,
};

/// Deterministic filler so runs are comparable without a random source.
fn filled(ell: usize, m: usize, n: usize, phase: f64) -> Tensor3 {
    Tensor3::from_fn(ell, m, n, |i, j, k| {
        ((i * 31 + j * 17 + k * 7) as f64 + phase).sin()
    })
}

fn t_product_paths(c: &mut Criterion) {
    let mut g = c.benchmark_group("t_product");
    for n in [4, 16, 28, 64] {
        let a = filled(28, 28, n, 0.1);
        let b = filled(28, 100, n, 0.7);
        for path in [TProductPath::Direct, TProductPath::Fourier] {
            g.bench_with_input(BenchmarkId::new(format!("{path:?}"), n), &n, |bch, _| {
                bch.iter(|| t_product_with(black_box(&a), black_box(&b), path).unwrap())
            });
        }
    }
    g.finish();
}

fn m_products(c: &mut Criterion) {
    let mut g = c.benchmark_group("m_product");
    let a = filled(28, 28, 28, 0.3);
    let b = filled(28, 100, 28, 0.9);
    for (name, t) in [
        ("dct", Transform::dct(28)),
        ("identity", Transform::identity(28)),
        ("circulant", Transform::circulant(28)),
    ] {
        g.bench_function(name, |bch| {
            bch.iter(|| m_product(black_box(&a), black_box(&b), &t).unwrap())
        });
    }
    g.bench_function("facewise", |bch| {
        bch.iter(|| facewise_product(black_box(&a), black_box(&b)).unwrap())
    });
    g.finish();
}

fn transforms(c: &mut Criterion) {
    let mut g = c.benchmark_group("transform");
    let a = filled(28, 100, 28, 0.5).scale(0.1);
    let m = dct_matrix(28);
    g.bench_function("mode3_dct", |bch| {
        bch.iter(|| mode3_product(black_box(&a), &m).unwrap())
    });
    for (name, t) in [
        ("circulant", Transform::circulant(28)),
        ("dct", Transform::dct(28)),
    ] {
        g.bench_function(format!("tubal_exp_{name}"), |bch| {
            bch.iter(|| tubal_exp(black_box(&a), &t).unwrap())
        });
    }
    g.finish();
}

fn leapfrog_forward(c: &mut Criterion) {
    let t = Transform::dct(28);
    let ws: Vec<Tensor3> = (0..4)
        .map(|s| filled(28, 28, 28, s as f64).scale(0.05))
        .collect();
    let bs: Vec<Tensor3> = (0..4).map(|_| Tensor3::zeros(28, 1, 28)).collect();
    let a = filled(28, 100, 28, 0.2);
    let mut block = LeapfrogBlock::new(ws, bs, 4, 0.1, Activation::Tanh).unwrap();
    c.bench_function("leapfrog_4_steps_batch_100", |bch| {
        bch.iter(|| block.forward(black_box(&a), &t).unwrap())
    });
}

criterion_group!(
    benches,
    t_product_paths,
    m_products,
    transforms,
    leapfrog_forward
);
criterion_main!(benches);
