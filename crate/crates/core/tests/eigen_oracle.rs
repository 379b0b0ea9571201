//! Hermitian eigenvalues checked against nalgebra and against Sylvester inertia counts.

use bsl_core::eigen::{hermitian_eigenvalues, CMatrix};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random PSD matrix B·Bᴴ with a spread of scales.
fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> CMatrix {
    let b = DMatrix::from_fn(n, rank, |_, j| {
        let s = 10f64.powf(-(j as f64) * 6.0 / rank as f64);
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * s
    });
    &b * b.adjoint()
}

/// Number of eigenvalues of `m` below `x`, from the signs of LDLᴴ pivots of m − x·I.
fn count_below(m: &CMatrix, x: f64) -> usize {
    let n = m.nrows();
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] -= x;
    }
    let mut negative = 0;
    for k in 0..n {
        let mut pivot = a[(k, k)].re;
        if pivot == 0.0 {
            pivot = -f64::EPSILON * m.norm();
        }
        if pivot < 0.0 {
            negative += 1;
        }
        for i in (k + 1)..n {
            let l = a[(i, k)] / pivot;
            for j in (k + 1)..n {
                let akj = a[(k, j)];
                a[(i, j)] -= l * akj;
            }
        }
    }
    negative
}

#[test]
fn hundred_random_psd_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..100 {
        let n = rng.random_range(2..48);
        let rank = rng.random_range(1..=n);
        let m = random_psd(&mut rng, n, rank);
        let ours = hermitian_eigenvalues(&m).unwrap();
        let mut reference: Vec<f64> = nalgebra::linalg::SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
        reference.sort_by(|a, b| b.total_cmp(a));
        let scale = ours[0].abs().max(1e-300);
        for (a, b) in ours.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-10 * scale, "case {case}: {a} vs {b}");
        }
        // Inertia: exactly k eigenvalues lie above λ_k + η and at most k below-or-at λ_k − η (ascending view).
        let eta = 1e-8 * scale;
        for (k, &l) in ours.iter().enumerate() {
            let above = n - count_below(&m, l + eta);
            let at_or_above = n - count_below(&m, l - eta);
            assert!(above <= k && at_or_above >= k + 1, "case {case}, index {k}: {above} / {at_or_above}");
        }
    }
}

#[test]
fn large_matrices_use_the_fallback_consistently() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = random_psd(&mut rng, 340, 340);
    let ours = hermitian_eigenvalues(&m).unwrap();
    let trace: f64 = (0..340).map(|i| m[(i, i)].re).sum();
    let sum: f64 = ours.iter().sum();
    assert!((sum - trace).abs() < 1e-9 * trace);
    assert!(ours.windows(2).all(|w| w[0] >= w[1]));
}
