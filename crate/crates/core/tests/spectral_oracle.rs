mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uniformity::sequences::{generate_n, random_walk_measure_spectrum, SequenceSpec};
use uniformity::spectral::{
    build_spectrum, default_cutoff, default_t_grid, heat_diaphony, lemma1_sum, random_walk_w2_bound, w2_upper_bound,
    zinterhof_diaphony, DEFAULT_C_SMOOTH,
};
use uniformity::torus::{empirical_from_points, PointSet};
use uniformity::transport::w2_circle_exact;

/// `sum_{l != 0} |c_l|^2 / l^2 = 4 pi^2 Var(F(x) - x)` for the CDF `F` of
/// atoms `ys` with weights `ws`, integrated piecewise in closed form.
fn h_minus_one_sq(ys: &[f64], ws: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..ys.len()).collect();
    idx.sort_by(|a, b| ys[*a].total_cmp(&ys[*b]));
    let mut knots = vec![0.0];
    let mut levels = vec![0.0];
    let mut mass = 0.0;
    for i in idx {
        mass += ws[i];
        knots.push(ys[i]);
        levels.push(mass);
    }
    knots.push(1.0);
    // on [knots[j], knots[j+1]) F equals levels[j]
    let (mut first, mut second) = (0.0, 0.0);
    for j in 0..levels.len() {
        let (a, b, c) = (knots[j], knots[j + 1], levels[j]);
        first += c * (b - a) - (b * b - a * a) / 2.0;
        second += ((b - c).powi(3) - (a - c).powi(3)) / 3.0;
    }
    4.0 * PI * PI * (second - first * first)
}

fn random_set(rng: &mut ChaCha8Rng, d: usize, n: usize) -> PointSet {
    PointSet::from_flat(d, (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect(), "r").unwrap()
}

#[test]
fn spectrum_matches_naive_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (d, n, l) in [(1, 300, 200), (1, 5, 70), (2, 40, 9), (3, 12, 3)] {
        let ps = random_set(&mut rng, d, n);
        let s = build_spectrum(&ps, l).unwrap();
        let pts: Vec<Vec<f64>> = ps.iter().map(|x| x.to_vec()).collect();
        for (k, c) in s.iter_nonzero() {
            let want = common::naive_exponential_sum(&pts, &k);
            assert!((c - want).norm() < 1e-12, "d={d} k={k:?}: {c} vs {want}");
        }
    }
}

#[test]
fn diaphony_matches_cdf_variance() {
    for spec in ["vdc:base=2", "random:d=1,seed=3", "kron:d=1"] {
        let spec: SequenceSpec = spec.parse().unwrap();
        for n in [1usize, 3, 50] {
            let ps = generate_n(&spec, Some(n)).unwrap();
            let w = vec![1.0 / n as f64; n];
            let want = h_minus_one_sq(ps.flat(), &w).sqrt();
            let r = zinterhof_diaphony(&build_spectrum(&ps, 4000).unwrap()).unwrap();
            // the reported value adds the certified tail of the omitted shells
            assert!(r.value >= want - 1e-12, "{} N={n}", spec);
            assert!(r.value * r.value <= want * want + r.truncation_tail + 1e-12);
        }
    }
}

#[test]
fn random_walk_matches_binomial_walk() {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    for k in [1u64, 2, 5, 12, 30] {
        // positions (2j - k) phi with binomial weights
        let mut w = vec![1.0f64];
        for _ in 0..k {
            let mut next = vec![0.0; w.len() + 1];
            for (i, x) in w.iter().enumerate() {
                next[i] += x / 2.0;
                next[i + 1] += x / 2.0;
            }
            w = next;
        }
        let ys: Vec<f64> = (0..=k).map(|j| ((2 * j as i64 - k as i64) as f64 * phi).rem_euclid(1.0)).collect();
        let want = h_minus_one_sq(&ys, &w).sqrt();
        let b = random_walk_w2_bound(phi, k, 20000).unwrap();
        assert!(b.value >= want - 1e-9, "k={k}: {} vs {want}", b.value);
        assert!(b.value * b.value <= want * want + b.truncation_tail + 1e-9);
        let s = random_walk_measure_spectrum(phi, k, 20000).unwrap();
        let z = zinterhof_diaphony(&s).unwrap();
        assert!((z.value - b.value).abs() < 1e-9);
    }
}

#[test]
fn lattice_sums_match_box_sums() {
    for (m, d, t) in [(0, 1usize, 0.05), (0, 2, 0.05), (-1, 2, 0.1), (1, 2, 0.02), (2, 3, 0.3), (-1, 1, 0.01)] {
        let r = 60i64;
        let mut acc = 0.0;
        let side = (2 * r + 1) as usize;
        for idx in 0..side.pow(d as u32) {
            let mut rest = idx;
            let mut n2 = 0i64;
            for _ in 0..d {
                let kj = (rest % side) as i64 - r;
                rest /= side;
                n2 += kj * kj;
            }
            if n2 > 0 {
                let n = n2 as f64;
                acc += (-n * t).exp() * n.powf(m as f64 / 2.0);
            }
        }
        let s = lemma1_sum(m, d, t).unwrap();
        assert!((s.value - acc).abs() <= 1e-10 * acc, "m={m} d={d} t={t}: {} vs {acc}", s.value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn upper_bound_dominates_exact(coords in prop::collection::vec(0.0f64..1.0, 1..40)) {
        let n = coords.len();
        let ps = PointSet::from_flat(1, coords, "p").unwrap();
        let exact = w2_circle_exact(&empirical_from_points(&ps)).unwrap();
        let s = build_spectrum(&ps, default_cutoff(n, 1)).unwrap();
        let b = w2_upper_bound(&s, &default_t_grid(n), DEFAULT_C_SMOOTH).unwrap();
        prop_assert!(b.value >= exact - 1e-12);
    }

    #[test]
    fn heat_diaphony_decreases_in_t(coords in prop::collection::vec(0.0f64..1.0, 2..30), t in 1e-4f64..0.5) {
        let ps = PointSet::from_flat(2, coords[..coords.len() / 2 * 2].to_vec(), "p").unwrap();
        let s = build_spectrum(&ps, 12).unwrap();
        let a = heat_diaphony(&s, t).unwrap();
        let b = heat_diaphony(&s, 2.0 * t).unwrap();
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn coefficients_are_bounded_and_hermitian(coords in prop::collection::vec(0.0f64..1.0, 1..60)) {
        let ps = PointSet::from_flat(1, coords, "p").unwrap();
        let s = build_spectrum(&ps, 50).unwrap();
        prop_assert!(s.max_modulus() <= 1.0 + 1e-12);
        prop_assert!(s.symmetry_defect() < 1e-15);
    }
}
