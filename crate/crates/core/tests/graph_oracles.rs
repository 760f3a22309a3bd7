use mlanet::graph::{bessel_rbf, build_neighbor_list, long_range_feature, AtomicStructure, Mat3};
use mlanet::verify::{brute_force_neighbors, RigidMotion};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_structure(rng: &mut impl Rng) -> AtomicStructure {
    let n = rng.random_range(1..=8);
    let periodic = rng.random_bool(0.7);
    let cell: Mat3 = std::array::from_fn(|i| {
        std::array::from_fn(|j| if i == j { rng.random_range(3.0..6.0) } else { rng.random_range(-1.0..1.0) })
    });
    let frac: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-0.5..1.5))).collect();
    let positions = frac
        .iter()
        .map(|f| std::array::from_fn(|m| (0..3).map(|k| f[k] * cell[k][m]).sum()))
        .collect();
    let species = (0..n).map(|_| rng.random_range(1..=8)).collect();
    let s = AtomicStructure::new(positions, species).unwrap();
    if periodic {
        let mut pbc = [rng.random_bool(0.8), rng.random_bool(0.8), rng.random_bool(0.8)];
        if !pbc.contains(&true) {
            pbc[0] = true;
        }
        s.with_cell(cell, pbc).unwrap()
    } else {
        s
    }
}

#[test]
fn neighbor_list_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut total = 0;
    for _ in 0..200 {
        let s = random_structure(&mut rng);
        let r_cut = rng.random_range(1.5..5.0);
        let nl = build_neighbor_list(&s, r_cut).unwrap();
        let brute = brute_force_neighbors(&s, r_cut, 5).unwrap();
        let got: Vec<(usize, usize, [i32; 3])> = (0..nl.num_edges()).map(|e| (nl.dst[e], nl.src[e], nl.shift[e])).collect();
        let want: Vec<(usize, usize, [i32; 3])> = brute.iter().map(|e| (e.0, e.1, e.2)).collect();
        assert_eq!(got, want);
        for (e, b) in brute.iter().enumerate() {
            assert!((nl.len[e] - b.3).abs() < 1e-10);
        }
        total += got.len();
    }
    assert!(total > 500, "too few edges exercised: {total}");
}

#[test]
fn brute_force_below_min_distance_is_empty() {
    let s = AtomicStructure::new(vec![[0.0; 3], [2.0, 0.0, 0.0], [0.0, 2.5, 0.0]], vec![1, 1, 1]).unwrap();
    assert!(brute_force_neighbors(&s, 1.9, 0).unwrap().is_empty());
    assert_eq!(build_neighbor_list(&s, 1.9).unwrap().num_edges(), 0);
}

#[test]
fn doubled_cell_keeps_per_atom_edge_counts() {
    let cell = [[3.1, 0.0, 0.0], [0.4, 2.9, 0.0], [0.2, -0.3, 3.3]];
    let single = AtomicStructure::new(vec![[0.1, 0.2, 0.3]], vec![14]).unwrap().with_cell(cell, [true; 3]).unwrap();
    let double = single.supercell([2, 1, 1]).unwrap();
    for r_cut in [2.0, 3.2, 4.5, 6.0] {
        let one = brute_force_neighbors(&single, r_cut, 4).unwrap().len();
        let two = brute_force_neighbors(&double, r_cut, 4).unwrap().len();
        assert_eq!(two, 2 * one);
        assert_eq!(build_neighbor_list(&double, r_cut).unwrap().num_edges(), two);
    }
}

fn sorted_lengths(s: &AtomicStructure, r_cut: f64) -> Vec<f64> {
    let mut l = build_neighbor_list(s, r_cut).unwrap().len;
    l.sort_by(f64::total_cmp);
    l
}

#[test]
fn translations_leave_edges_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let s = random_structure(&mut rng);
        let base = sorted_lengths(&s, 4.0);
        let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-7.0..7.0));
        let mut moved = s.clone();
        for p in &mut moved.positions {
            for k in 0..3 {
                p[k] += t[k];
            }
        }
        let l = sorted_lengths(&moved, 4.0);
        assert_eq!(l.len(), base.len());
        for (a, b) in l.iter().zip(&base) {
            assert!((a - b).abs() < 1e-10);
        }
        if let (Some(c), true) = (s.cell, s.pbc.iter().all(|&p| p)) {
            // moving one atom by a lattice vector relabels a shift only
            let mut lat = s.clone();
            for k in 0..3 {
                lat.positions[0][k] += c[1][k] - 2.0 * c[2][k];
            }
            let l = sorted_lengths(&lat, 4.0);
            assert_eq!(l.len(), base.len());
            for (a, b) in l.iter().zip(&base) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn permutation_relabels_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let s = random_structure(&mut rng);
        let n = s.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let p = s.permuted(&perm).unwrap();
        let a = build_neighbor_list(&s, 3.5).unwrap();
        let b = build_neighbor_list(&p, 3.5).unwrap();
        let mut mapped: Vec<(usize, usize, [i32; 3])> =
            (0..b.num_edges()).map(|e| (perm[b.dst[e]], perm[b.src[e]], b.shift[e])).collect();
        mapped.sort();
        let orig: Vec<(usize, usize, [i32; 3])> = (0..a.num_edges()).map(|e| (a.dst[e], a.src[e], a.shift[e])).collect();
        assert_eq!(mapped, orig);
    }
}

#[test]
fn bessel_orthonormality_by_quadrature() {
    let r_cut = 5.0;
    let n_rbf = 8;
    let k = 10_000;
    let h = r_cut / k as f64;
    let xs: Vec<f64> = (1..=k).map(|i| i as f64 * h).collect();
    let t = bessel_rbf(&xs, r_cut, n_rbf).unwrap();
    // x→0 limit of RBF_m(x)·x is 0, so the integrand vanishes at the origin
    for m in 0..n_rbf {
        for n in 0..n_rbf {
            let mut s = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let w = if i == k - 1 { 0.5 } else { 1.0 };
                s += w * t.get2(i, m) * t.get2(i, n) * x * x;
            }
            s *= h;
            let want = if m == n { 1.0 } else { 0.0 };
            assert!((s - want).abs() < 1e-3, "({m},{n}) {s}");
        }
        assert_eq!(t.get2(k - 1, m), 0.0);
    }
}

#[test]
fn long_range_is_rigid_motion_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let n = rng.random_range(2..8);
        let positions: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-4.0..4.0))).collect();
        let s = AtomicStructure::new(positions, vec![15; n]).unwrap();
        let motion = RigidMotion::random(&mut rng);
        let mut moved = s.clone();
        moved.positions = s.positions.iter().map(|p| motion.apply(*p)).collect();
        let a = long_range_feature(&s).unwrap();
        let b = long_range_feature(&moved).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

proptest! {
    #[test]
    fn edge_vectors_have_edge_lengths(seed in 0u64..10_000, r_cut in 1.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_structure(&mut rng);
        let nl = build_neighbor_list(&s, r_cut).unwrap();
        for e in 0..nl.num_edges() {
            let v = nl.vec[e];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            prop_assert!((n - nl.len[e]).abs() < 1e-10);
            prop_assert!(nl.len[e] > 0.0 && nl.len[e] <= r_cut);
        }
    }

    #[test]
    fn rbf_vanishes_continuously_at_cutoff(eps in 1e-12f64..1e-6) {
        let t = bessel_rbf(&[5.0 - eps], 5.0, 8).unwrap();
        for v in t.data() {
            prop_assert!(v.abs() < 10.0 * eps);
        }
    }
}
