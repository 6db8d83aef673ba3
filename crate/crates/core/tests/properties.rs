mod common;

use common::oracle_sym_normalize;
use gaa::analysis;
use gaa::featgraph;
use gaa::graphio::{self, Graph};
use gaa::losses;
use gaa::numcore::{Matrix, Tape};
use gaa::train::{adam_step, AdamState};
use proptest::prelude::*;

fn matrix(rows: std::ops::RangeInclusive<usize>, cols: std::ops::RangeInclusive<usize>, mag: f64) -> impl Strategy<Value = Matrix> {
    (rows, cols).prop_flat_map(move |(r, c)| {
        prop::collection::vec(-mag..mag, r * c).prop_map(move |v| Matrix::from_vec(r, c, v).unwrap())
    })
}

fn adjacency(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Matrix> {
    n.prop_flat_map(|n| {
        prop::collection::vec(prop_oneof![Just(0.0), 0.1f64..3.0], n * n).prop_map(move |v| {
            Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
                std::cmp::Ordering::Less => v[i * n + j],
                std::cmp::Ordering::Greater => v[j * n + i],
                std::cmp::Ordering::Equal => 0.0,
            })
        })
    })
}

fn probs(n: usize, c: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(0.0f64..1.0, n * c).prop_map(move |v| {
        let mut m = Matrix::from_vec(n, c, v).unwrap();
        for i in 0..n {
            let s: f64 = m.row(i).iter().sum::<f64>() + 1e-9;
            m.row_mut(i).iter_mut().for_each(|x| *x = (*x + 1e-9 / c as f64) / s);
        }
        m
    })
}

/// Largest eigenvalue magnitude by power iteration from a positive start.
fn spectral_radius(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut v = Matrix::ones(n, 1);
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = a.matmul(&v).unwrap();
        let norm = w.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.map(|x| x / norm);
    }
    lambda
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn softmax_rows_sum_to_one(x in matrix(1..=8, 1..=8, 800.0)) {
        let mut t = Tape::new();
        let id = t.constant(x);
        let s = t.row_softmax(id).unwrap();
        let v = t.value(s);
        for i in 0..v.rows() {
            let total: f64 = v.row(i).iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(v.row(i).iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(x in matrix(1..=10, 1..=6, 5.0)) {
        let s = featgraph::cosine_similarity_matrix(&x);
        prop_assert!(s.is_symmetric(0.0));
        prop_assert!(s.as_slice().iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn knn_selects_exactly_k(x in matrix(2..=12, 1..=5, 3.0), k_frac in 0.0f64..1.0) {
        let n = x.rows();
        let k = 1 + (k_frac * (n - 1) as f64) as usize % (n - 1);
        let sm = featgraph::cosine_similarity_matrix(&x);
        let sel = featgraph::knn_select(&sm, k).unwrap();
        for (i, nbrs) in sel.iter().enumerate() {
            prop_assert_eq!(nbrs.len(), k);
            prop_assert!(!nbrs.contains(&i));
            let mut dedup = nbrs.clone();
            dedup.sort_unstable();
            dedup.dedup();
            prop_assert_eq!(dedup.len(), k);
        }
        let a = featgraph::knn_graph(&sm, k).unwrap();
        prop_assert!(a.is_symmetric(0.0));
        for i in 0..n {
            prop_assert_eq!(a.get(i, i), 0.0);
            let deg = a.row(i).iter().filter(|&&v| v == 1.0).count();
            prop_assert!(deg >= k);
            prop_assert!(a.row(i).iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn normalized_propagation_has_spectral_radius_at_most_one(a in adjacency(1..=10)) {
        let norm = featgraph::sym_normalize(&a, true).unwrap();
        prop_assert!(norm.max_abs_diff(&oracle_sym_normalize(&a)) <= 1e-14);
        prop_assert!(norm.is_symmetric(1e-15));
        prop_assert!(spectral_radius(&norm) <= 1.0 + 1e-9);
    }

    #[test]
    fn alignment_is_symmetric_in_domains(
        s in matrix(1..=6, 3..=3, 2.0),
        t in matrix(1..=6, 3..=3, 2.0),
        fs in matrix(1..=6, 3..=3, 2.0),
        ft in matrix(1..=6, 3..=3, 2.0),
    ) {
        let mut tape = Tape::new();
        let [a, b, c, d] = [s, t, fs, ft].map(|m| tape.constant(m));
        let fwd = losses::alignment_loss(&mut tape, a, b, c, d).unwrap();
        let rev = losses::alignment_loss(&mut tape, b, a, d, c).unwrap();
        prop_assert_eq!(tape.scalar(fwd), tape.scalar(rev));
        prop_assert!(tape.scalar(fwd) >= 0.0);
    }

    #[test]
    fn entropy_between_zero_and_log_classes(p in (1usize..=8, 2usize..=5).prop_flat_map(|(n, c)| probs(n, c))) {
        let c = p.cols() as f64;
        let mut tape = Tape::new();
        let id = tape.constant(p);
        let h = losses::target_entropy(&mut tape, id).unwrap();
        let h = tape.scalar(h);
        prop_assert!(h >= -1e-12);
        prop_assert!(h <= c.ln() + 1e-12);
    }

    #[test]
    fn margin_loss_monotone_in_gamma(
        scores in matrix(1..=10, 3..=3, 1.0),
        seed in any::<u64>(),
        g1 in 0.0f64..1.0,
        g2 in 0.0f64..1.0,
    ) {
        let labels: Vec<usize> = (0..scores.rows()).map(|i| ((seed >> (i % 32)) % 3) as usize).collect();
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = analysis::empirical_margin_loss(&scores, &labels, lo).unwrap();
        let b = analysis::empirical_margin_loss(&scores, &labels, hi).unwrap();
        prop_assert!(a <= b);
    }

    #[test]
    fn bound_attr_term_invariant_to_source_permutation(
        (a, x, perm, xt) in (2usize..=8, 1usize..=4).prop_flat_map(|(n, d)| {
            (
                adjacency(n..=n),
                matrix(n..=n, d..=d, 3.0),
                Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
                matrix(3..=3, d..=d, 3.0),
            )
        }),
    ) {
        let n = x.rows();
        let gs = Graph::new(a.clone(), x.clone(), None, 1).unwrap();
        let pa = Matrix::from_fn(n, n, |i, j| a.get(perm[i], perm[j]));
        let px = Matrix::from_fn(n, x.cols(), |i, j| x.get(perm[i], j));
        let gp = Graph::new(pa, px, None, 1).unwrap();
        let gt = Graph::new(Matrix::zeros(3, 3), xt, None, 1).unwrap();
        let r1 = analysis::proposition1_bound(&gs, &gt, 3).unwrap();
        let r2 = analysis::proposition1_bound(&gp, &gt, 3).unwrap();
        prop_assert!((r1.attr_term - r2.attr_term).abs() <= 1e-9 * r1.attr_term.max(1.0));
        prop_assert!((r1.topo_term - r2.topo_term).abs() <= 1e-9 * r1.topo_term.max(1.0));
    }

    #[test]
    fn adam_with_zero_lr_never_moves(
        (w, g) in (1usize..=4, 1usize..=4).prop_flat_map(|(r, c)| (matrix(r..=r, c..=c, 5.0), matrix(r..=r, c..=c, 5.0)))
    ) {
        let mut p = w.clone();
        let mut state = AdamState::new([&p]);
        for _ in 0..3 {
            let mut grads = vec![g.clone()];
            adam_step(&mut [&mut p], &mut grads, &mut state, 0.0, 1e-3);
        }
        prop_assert_eq!(p, w);
    }

    #[test]
    fn graph_files_round_trip(a in adjacency(1..=7), seed in any::<u64>()) {
        let n = a.rows();
        let x = Matrix::from_fn(n, 3, |i, j| ((seed >> ((i + j) % 40)) & 0xff) as f64 / 7.0 - 9.0);
        let labels: Vec<usize> = (0..n).map(|i| (seed as usize >> i) & 1).collect();
        let g = Graph::new(a, x, Some(labels), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        graphio::save_graph_dir(&g, dir.path()).unwrap();
        let back = graphio::load_graph_dir(dir.path()).unwrap();
        prop_assert_eq!(back.adjacency(), g.adjacency());
        prop_assert_eq!(back.features(), g.features());
        prop_assert_eq!(back.labels(), g.labels());
    }

    #[test]
    fn transpose_is_an_involution_and_matmul_associates(
        a in matrix(1..=5, 3..=3, 2.0),
        b in matrix(3..=3, 4..=4, 2.0),
        c in matrix(4..=4, 1..=5, 2.0),
    ) {
        prop_assert_eq!(a.transpose().transpose(), a.clone());
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) <= 1e-11);
    }
}
