mod common;

use common::{randn, rng};
use proptest::prelude::*;
use tnn_core::loss::{cross_entropy, scalar_tubal_softmax, tubal_softmax_h};
use tnn_core::network::{LeapfrogBlock, TLinearLayer};
use tnn_core::spectrum::antisymmetric_spectrum;
use tnn_core::tensor::{bcirc, bdiag, circ, facewise_product, fold, mode3_product, unfold};
use tnn_core::{
    m_product, t_product, t_product_with, t_transpose, Activation, Matrix, Reduction, TProductPath,
    Tensor3, Transform,
};

fn dims(max: usize) -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1..=max, 1..=max, 1..=max, 1..=max)
}

fn random_orthogonal(n: usize, seed: u64) -> Matrix {
    // Gram-Schmidt on a Gaussian matrix
    let g = randn(&mut rng(seed), n, n, 1, 1.0);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for c in 0..n {
        let mut v: Vec<f64> = (0..n).map(|r| g.get(r, c, 0)).collect();
        for q in &cols {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    Matrix::from_fn(n, n, |r, c| cols[c][r])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn t_product_matches_block_circulant((l, m, p, n) in dims(6), seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = randn(&mut r, l, m, n, 1.0);
        let b = randn(&mut r, m, p, n, 1.0);
        let c = t_product(&a, &b).unwrap();
        let oracle = fold(&bcirc(&a).unwrap().matmul(&unfold(&b)).unwrap(), (l, p, n)).unwrap();
        prop_assert!(c.max_abs_diff(&oracle) <= 1e-12);
    }

    #[test]
    fn product_paths_agree((l, m, p, n) in dims(8), seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = randn(&mut r, l, m, n, 1.0);
        let b = randn(&mut r, m, p, n, 1.0);
        let direct = t_product_with(&a, &b, TProductPath::Direct).unwrap();
        let fourier = t_product_with(&a, &b, TProductPath::Fourier).unwrap();
        prop_assert!(direct.max_abs_diff(&fourier) <= 1e-10);
    }

    #[test]
    fn t_product_is_associative((l, m, p, n) in dims(5), q in 1usize..=5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = randn(&mut r, l, m, n, 1.0);
        let b = randn(&mut r, m, p, n, 1.0);
        let c = randn(&mut r, p, q, n, 1.0);
        let left = t_product(&t_product(&a, &b).unwrap(), &c).unwrap();
        let right = t_product(&a, &t_product(&b, &c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) <= 1e-10);
    }

    #[test]
    fn m_product_is_associative((l, m, p, n) in dims(5), q in 1usize..=5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = randn(&mut r, l, m, n, 1.0);
        let b = randn(&mut r, m, p, n, 1.0);
        let c = randn(&mut r, p, q, n, 1.0);
        for t in [Transform::dct(n), Transform::orthogonal(random_orthogonal(n, seed ^ 7)).unwrap()] {
            let left = m_product(&m_product(&a, &b, &t).unwrap(), &c, &t).unwrap();
            let right = m_product(&a, &m_product(&b, &c, &t).unwrap(), &t).unwrap();
            prop_assert!(left.max_abs_diff(&right) <= 1e-10);
        }
    }

    #[test]
    fn identity_transform_is_facewise((l, m, p, n) in dims(6), seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = randn(&mut r, l, m, n, 1.0);
        let b = randn(&mut r, m, p, n, 1.0);
        let mp = m_product(&a, &b, &Transform::identity(n)).unwrap();
        prop_assert!(mp.max_abs_diff(&facewise_product(&a, &b).unwrap()) <= 1e-14);
    }

    #[test]
    fn facewise_matches_block_diagonal((l, m, p, n) in dims(6), seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = randn(&mut r, l, m, n, 1.0);
        let b = randn(&mut r, m, p, n, 1.0);
        let f = facewise_product(&a, &b).unwrap();
        let oracle = bdiag(&a).unwrap().matmul(&unfold(&b)).unwrap();
        prop_assert!(unfold(&f).max_abs_diff(&oracle) <= 1e-13);
    }

    #[test]
    fn orthogonal_mode3_preserves_norm((l, m, _p, n) in dims(6), seed in any::<u64>()) {
        let a = randn(&mut rng(seed), l, m, n, 1.0);
        for q in [tnn_core::transform::dct_matrix(n), random_orthogonal(n, seed ^ 3)] {
            let b = mode3_product(&a, &q).unwrap();
            prop_assert!((b.frobenius_norm() - a.frobenius_norm()).abs() <= 1e-11);
        }
    }

    #[test]
    fn mode3_product_composes((l, m, _p, n) in dims(6), seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = randn(&mut r, l, m, n, 1.0);
        let m1 = Matrix::from_vec(n, n, randn(&mut r, n, n, 1, 1.0).into_vec()).unwrap();
        let m2 = Matrix::from_vec(n, n, randn(&mut r, n, n, 1, 1.0).into_vec()).unwrap();
        let once = mode3_product(&a, &m1.matmul(&m2).unwrap()).unwrap();
        let twice = mode3_product(&mode3_product(&a, &m2).unwrap(), &m1).unwrap();
        prop_assert!(once.max_abs_diff(&twice) <= 1e-12);
    }

    #[test]
    fn fold_unfold_keeps_bcirc((l, m, _p, n) in dims(6), seed in any::<u64>()) {
        let a = randn(&mut rng(seed), l, m, n, 1.0);
        let back = fold(&unfold(&a), (l, m, n)).unwrap();
        prop_assert_eq!(bcirc(&back).unwrap(), bcirc(&a).unwrap());
    }

    #[test]
    fn transpose_is_bcirc_transpose((l, m, _p, n) in dims(6), seed in any::<u64>()) {
        let a = randn(&mut rng(seed), l, m, n, 1.0);
        let lhs = bcirc(&t_transpose(&a)).unwrap();
        prop_assert!(lhs.max_abs_diff(&bcirc(&a).unwrap().transpose()) <= 1e-12);
    }

    #[test]
    fn circulant_softmax_sums_to_identity_tube((p, m, _q, n) in dims(6), seed in any::<u64>()) {
        let t = Transform::circulant(n);
        let x = randn(&mut rng(seed), p, m, n, 2.0);
        let h = tubal_softmax_h(&x, &t).unwrap();
        for j in 0..m {
            for k in 0..n {
                let total: f64 = (0..p).map(|i| h.get(i, j, k)).sum();
                let want = if k == 0 { 1.0 } else { 0.0 };
                prop_assert!((total - want).abs() <= 1e-12);
            }
        }
        let pm = scalar_tubal_softmax(&x, &t).unwrap();
        for j in 0..m {
            let s: f64 = (0..p).map(|i| pm.probs.get(i, j)).sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn cross_entropy_is_permutation_equivariant(
        (p, n) in (1usize..=6, 1usize..=6),
        perm in Just((0..12).collect::<Vec<usize>>()).prop_shuffle(),
        seed in any::<u64>(),
    ) {
        let m = perm.len();
        let mut r = rng(seed);
        let x = randn(&mut r, p, m, n, 1.0);
        let labels: Vec<usize> = (0..m).map(|j| 1 + (j * 7 + seed as usize) % p).collect();
        for t in [Transform::circulant(n), Transform::dct(n)] {
            let pm = scalar_tubal_softmax(&x, &t).unwrap();
            let ps = scalar_tubal_softmax(&x.select_lateral(&perm), &t).unwrap();
            let shuffled: Vec<usize> = perm.iter().map(|&j| labels[j]).collect();
            let a = cross_entropy(&pm, &labels, Reduction::Sum).unwrap().loss;
            let b = cross_entropy(&ps, &shuffled, Reduction::Sum).unwrap().loss;
            prop_assert!(a.is_finite());
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn tlinear_matches_matrix_form((l, m, p, n) in dims(5), seed in any::<u64>()) {
        let mut r = rng(seed);
        let w = randn(&mut r, l, m, n, 1.0);
        let b = randn(&mut r, l, 1, n, 1.0);
        let a = randn(&mut r, m, p, n, 1.0);
        let t = Transform::circulant(n);
        let out = TLinearLayer::new(w.clone(), b.clone(), Activation::Tanh).unwrap().forward(&a, &t).unwrap();
        let mut pre = fold(&bcirc(&w).unwrap().matmul(&unfold(&a)).unwrap(), (l, p, n)).unwrap();
        pre.add_lateral_broadcast(&b).unwrap();
        prop_assert!(out.max_abs_diff(&pre.map(f64::tanh)) <= 1e-11);
    }

    #[test]
    fn antisymmetric_system_is_imaginary(m in 1usize..=6, n in 1usize..=6, seed in any::<u64>()) {
        let w = randn(&mut rng(seed), m, m, n, 1.0);
        for t in [Transform::circulant(n), Transform::dct(n)] {
            let report = antisymmetric_spectrum(&w, &t).unwrap();
            prop_assert!(report.max_abs_real() <= 1e-10);
        }
    }

    #[test]
    fn linear_leapfrog_nearly_conserves_energy(
        ell in 1usize..=4, n in 1usize..=4, steps in 1usize..=8, h in 0.01f64..0.2, seed in any::<u64>()
    ) {
        let mut r = rng(seed);
        let t = Transform::circulant(n);
        // unit operator norm bound so h is the effective step
        let mut w = randn(&mut r, ell, ell, n, 1.0);
        let scale = bcirc(&w).unwrap().as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        w = w.scale(1.0 / scale.max(1e-12));
        let b = Tensor3::zeros(ell, 1, n);
        let a0 = randn(&mut r, ell, 3, n, 1.0);
        let mut lf = LeapfrogBlock::new(vec![w], vec![b], steps, h, Activation::Identity).unwrap();
        lf.forward(&a0, &t).unwrap();
        let states = lf.states().unwrap();
        let momenta = lf.momenta().unwrap();
        // A_k pairs with the staggered Z_{k-1/2}, and Z_{-1/2} = 0
        let energy = |k: usize| {
            let z = if k == 0 { 0.0 } else { momenta[k - 1].frobenius_norm().powi(2) };
            states[k].frobenius_norm().powi(2) + z
        };
        let e0 = energy(0);
        let band = 5.0 * h * h * steps as f64;
        for k in 0..=steps {
            prop_assert!((energy(k) - e0).abs() <= band * e0, "step {} energy {} vs {}", k, energy(k), e0);
        }
    }
}

#[test]
fn circ_columns_are_cyclic_shifts() {
    for n in 1..=8 {
        for e in 0..n {
            let mut tube = vec![0.0; n];
            tube[e] = 1.0;
            let c = circ(&tube);
            for col in 0..n {
                for row in 0..n {
                    let want = if row == (e + col) % n { 1.0 } else { 0.0 };
                    assert_eq!(c.get(row, col), want, "n={n} e={e} col={col} row={row}");
                }
            }
        }
    }
}
