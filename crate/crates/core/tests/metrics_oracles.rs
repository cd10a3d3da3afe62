mod support;

use dpsc_core::metrics::{self, full_report};
use dpsc_core::Partition;
use proptest::prelude::*;
use support::oracles;

fn small_pairs() -> Vec<(Partition, Partition)> {
    let mut out = Vec::new();
    for n in 2..=5 {
        let parts = oracles::all_partitions(&oracles::ids(n));
        for g in &parts {
            for h in &parts {
                out.push((g.clone(), h.clone()));
            }
        }
    }
    out
}

#[test]
fn exhaustive_agreement_with_oracles() {
    for (g, h) in small_pairs() {
        let pc = metrics::pair_counts(&g, &h).unwrap();
        assert_eq!((pc.n11, pc.n00, pc.n10, pc.n01), oracles::pair_oracle(&g, &h));
        let r = full_report(&g, &h).unwrap();
        assert!((r.rand_index - oracles::rand_oracle(&g, &h)).abs() <= 1e-12);
        let (p, rc, f) = oracles::prf_oracle(&g, &h);
        assert!((r.precision - p).abs() <= 1e-12);
        assert!((r.recall - rc).abs() <= 1e-12);
        assert!((r.f_score - f).abs() <= 1e-12);
        let gh = oracles::ced_bfs(&g, &h);
        let hg = oracles::ced_bfs(&h, &g);
        assert_eq!(r.ced_gh, gh, "CED {:?} {:?}", g, h);
        assert_eq!(r.ced_hg, hg);
        let n = g.len() as f64;
        assert!((r.nes - (1.0 - (gh + hg) as f64 / (2.0 * n))).abs() <= 1e-12);
        let (vi, nvi) = oracles::vi_oracle(&g, &h);
        assert!((r.vi - vi).abs() <= 1e-12);
        assert!((r.nvi - nvi).abs() <= 1e-12);
    }
}

#[test]
fn vi_triangle_inequality_exhaustive() {
    for n in 2..=5 {
        let parts = oracles::all_partitions(&oracles::ids(n));
        let k = parts.len();
        let mut d = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                d[i][j] = metrics::variation_of_information(&parts[i], &parts[j]).unwrap().0;
            }
        }
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    assert!(d[a][c] <= d[a][b] + d[b][c] + 1e-12);
                }
            }
        }
    }
}

#[test]
fn zero_distance_iff_equal() {
    for (g, h) in small_pairs() {
        let r = full_report(&g, &h).unwrap();
        let same = g == h;
        assert_eq!(r.vi.abs() < 1e-12, same);
        assert_eq!(r.rand_index == 1.0, same);
    }
}

#[test]
fn table_conventions() {
    let gold = Partition::from_blocks(&[vec!["a", "b", "c"], vec!["d", "e"], vec!["f"]]).unwrap();
    let coarse = Partition::coarse(gold.items()).unwrap();
    let fine = Partition::fine(gold.items()).unwrap();
    assert_eq!(metrics::precision_recall_f(&gold, &coarse).unwrap().1, 1.0);
    assert_eq!(metrics::precision_recall_f(&gold, &fine).unwrap(), (1.0, 0.0, 0.0));
    assert!((metrics::f_score(0.229, 1.0) - 0.372).abs() < 1e-3);
}

#[test]
fn mismatched_items_rejected() {
    let g = Partition::from_blocks(&[vec!["a", "b"]]).unwrap();
    let h = Partition::from_blocks(&[vec!["a", "c"]]).unwrap();
    let err = full_report(&g, &h).unwrap_err().to_string();
    assert!(err.contains('b') && err.contains('c'), "{err}");
    let one = Partition::from_blocks(&[vec!["a"]]).unwrap();
    assert!(full_report(&one, &one).is_err());
}

fn arb_labels(n: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0..n, n)
}

fn build(labels: &[usize], order: &[usize]) -> Partition {
    Partition::from_assignments(order.iter().map(|&i| (format!("i{i:02}"), labels[i]))).unwrap()
}

proptest! {
    #[test]
    fn symmetric_metrics(g in arb_labels(8), h in arb_labels(8)) {
        let order: Vec<usize> = (0..8).collect();
        let (g, h) = (build(&g, &order), build(&h, &order));
        let a = full_report(&g, &h).unwrap();
        let b = full_report(&h, &g).unwrap();
        prop_assert!((a.rand_index - b.rand_index).abs() < 1e-12);
        prop_assert!((a.vi - b.vi).abs() < 1e-12);
        prop_assert!((a.nes - b.nes).abs() < 1e-12);
        prop_assert_eq!(a.ced_gh, b.ced_hg);
        prop_assert!((a.precision - b.recall).abs() < 1e-12);
    }

    #[test]
    fn relabeling_and_reordering_invariant(
        g in arb_labels(7),
        h in arb_labels(7),
        shift in 1usize..50,
        order in Just((0..7).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let id: Vec<usize> = (0..7).collect();
        let base = full_report(&build(&g, &id), &build(&h, &id)).unwrap();
        let relabeled: Vec<usize> = h.iter().map(|l| (l + shift) * 7).collect();
        let other = full_report(&build(&g, &order), &build(&relabeled, &order)).unwrap();
        prop_assert_eq!(base, other);
    }

    #[test]
    fn report_ranges(g in arb_labels(9), h in arb_labels(9)) {
        let order: Vec<usize> = (0..9).collect();
        let r = full_report(&build(&g, &order), &build(&h, &order)).unwrap();
        let pc = metrics::pair_counts(&build(&g, &order), &build(&h, &order)).unwrap();
        prop_assert_eq!(pc.total(), 36);
        for v in [r.rand_index, r.precision, r.recall, r.f_score, r.nes, r.nvi] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(r.vi >= 0.0 && r.vi <= 9f64.ln() + 1e-12);
        prop_assert!(r.ced_gh <= 9 && r.ced_hg <= 9);
    }
}
