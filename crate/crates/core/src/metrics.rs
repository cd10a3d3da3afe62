//! Agreement measures between a gold and a hypothesis partition.
//!
//! Everything is derived from the contingency table of the two partitions:
//! pair counts for the Rand index and pairwise precision/recall, a
//! plurality matching for the cluster edit distance, and cell proportions
//! for the variation of information.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Partition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Same cluster in both.
    pub n11: u64,
    /// Different clusters in both.
    pub n00: u64,
    /// Same in gold, different in hypothesis.
    pub n10: u64,
    /// Different in gold, same in hypothesis.
    pub n01: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.n11 + self.n00 + self.n10 + self.n01
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rand_index: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub ced_gh: usize,
    pub ced_hg: usize,
    pub nes: f64,
    /// Variation of information in nats.
    pub vi: f64,
    pub nvi: f64,
}

/// Sparse contingency table: `cells[(g, h)]` counts items in gold class `g`
/// and hypothesis cluster `h`.
struct Contingency {
    n: usize,
    gold_sizes: Vec<usize>,
    hyp_sizes: Vec<usize>,
    /// (gold, hyp, count) for every non-empty cell.
    cells: Vec<(usize, usize, usize)>,
}

impl Contingency {
    fn new(gold: &Partition, hyp: &Partition) -> Result<Self> {
        gold.check_same_items(hyp)?;
        let n = gold.len();
        if n < 2 {
            return Err(Error::domain(format!("metrics need at least 2 items, got {n}")));
        }
        let mut map = std::collections::HashMap::new();
        for (&g, &h) in gold.labels().iter().zip(hyp.labels()) {
            *map.entry((g, h)).or_insert(0usize) += 1;
        }
        let mut cells: Vec<_> = map.into_iter().map(|((g, h), c)| (g, h, c)).collect();
        cells.sort_unstable();
        Ok(Contingency {
            n,
            gold_sizes: gold.cluster_sizes(),
            hyp_sizes: hyp.cluster_sizes(),
            cells,
        })
    }

    fn transposed(&self) -> Self {
        let mut cells: Vec<_> = self.cells.iter().map(|&(g, h, c)| (h, g, c)).collect();
        cells.sort_unstable();
        Contingency {
            n: self.n,
            gold_sizes: self.hyp_sizes.clone(),
            hyp_sizes: self.gold_sizes.clone(),
            cells,
        }
    }
}

fn choose2(k: usize) -> u64 {
    let k = k as u64;
    k * k.saturating_sub(1) / 2
}

fn pair_counts_of(t: &Contingency) -> PairCounts {
    let n11: u64 = t.cells.iter().map(|&(_, _, c)| choose2(c)).sum();
    let same_gold: u64 = t.gold_sizes.iter().map(|&a| choose2(a)).sum();
    let same_hyp: u64 = t.hyp_sizes.iter().map(|&b| choose2(b)).sum();
    let n10 = same_gold - n11;
    let n01 = same_hyp - n11;
    let n00 = choose2(t.n) - n11 - n10 - n01;
    PairCounts { n11, n00, n10, n01 }
}

pub fn pair_counts(gold: &Partition, hyp: &Partition) -> Result<PairCounts> {
    Ok(pair_counts_of(&Contingency::new(gold, hyp)?))
}

fn rand_from(pc: &PairCounts) -> f64 {
    (pc.n11 + pc.n00) as f64 / pc.total() as f64
}

pub fn rand_index(gold: &Partition, hyp: &Partition) -> Result<f64> {
    Ok(rand_from(&pair_counts(gold, hyp)?))
}

fn prf_from(pc: &PairCounts) -> (f64, f64, f64) {
    // An all-singleton side has no positive pairs; treat the empty ratio as 1.
    let p = if pc.n11 + pc.n01 == 0 {
        1.0
    } else {
        pc.n11 as f64 / (pc.n11 + pc.n01) as f64
    };
    let r = if pc.n11 + pc.n10 == 0 {
        1.0
    } else {
        pc.n11 as f64 / (pc.n11 + pc.n10) as f64
    };
    (p, r, f_score(p, r))
}

/// Harmonic mean of precision and recall; 0 when both vanish.
pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Pairwise precision, recall and F-score of `hyp` against `gold`.
pub fn precision_recall_f(gold: &Partition, hyp: &Partition) -> Result<(f64, f64, f64)> {
    Ok(prf_from(&pair_counts(gold, hyp)?))
}

/// Maximum bipartite matching (Kuhn's augmenting paths) from left vertices
/// to right vertices over `adj`.
fn max_matching(adj: &[Vec<usize>], n_right: usize) -> usize {
    fn augment(
        u: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }

    let mut owner = vec![None; n_right];
    let mut seen = vec![false; n_right];
    let mut size = 0;
    for u in 0..adj.len() {
        seen.iter_mut().for_each(|s| *s = false);
        if augment(u, adj, &mut seen, &mut owner) {
            size += 1;
        }
    }
    size
}

/// Minimum number of moves plus merges turning the hypothesis into gold.
///
/// Elements of a hypothesis cluster that are never moved must end up in a
/// single gold class, so every kept cluster is assigned one class and only
/// the first cluster per class avoids a merge. The optimum keeps each
/// cluster's plurality elements and pays one extra operation per cluster
/// that cannot be matched to a distinct plurality class.
fn ced_of(t: &Contingency) -> usize {
    let n_hyp = t.hyp_sizes.len();
    let mut best = vec![0usize; n_hyp];
    for &(_, h, c) in &t.cells {
        best[h] = best[h].max(c);
    }
    let mut adj = vec![Vec::new(); n_hyp];
    for &(g, h, c) in &t.cells {
        if c == best[h] {
            adj[h].push(g);
        }
    }
    let moves: usize = t.hyp_sizes.iter().zip(&best).map(|(s, b)| s - b).sum();
    let matched = max_matching(&adj, t.gold_sizes.len());
    moves + (n_hyp - matched)
}

/// Cluster edit distance: operations needed to turn `hyp` into `gold`.
/// Not symmetric.
pub fn cluster_edit_distance(gold: &Partition, hyp: &Partition) -> Result<usize> {
    Ok(ced_of(&Contingency::new(gold, hyp)?))
}

fn nes_from(ced_gh: usize, ced_hg: usize, n: usize) -> f64 {
    1.0 - (ced_gh + ced_hg) as f64 / (2 * n) as f64
}

pub fn normalized_edit_score(gold: &Partition, hyp: &Partition) -> Result<f64> {
    let t = Contingency::new(gold, hyp)?;
    Ok(nes_from(ced_of(&t), ced_of(&t.transposed()), t.n))
}

fn vi_of(t: &Contingency) -> (f64, f64) {
    let n = t.n as f64;
    // VI = sum over cells of p_gh [log(p_g / p_gh) + log(p_h / p_gh)];
    // each term is non-negative and vanishes for identical partitions.
    let vi: f64 = t
        .cells
        .iter()
        .map(|&(g, h, c)| {
            let c = c as f64;
            let a = t.gold_sizes[g] as f64;
            let b = t.hyp_sizes[h] as f64;
            c / n * ((a / c).ln() + (b / c).ln())
        })
        .sum();
    (vi, 1.0 - vi / n.ln())
}

/// Variation of information (nats) and its `1 - VI / log N` normalization.
pub fn variation_of_information(gold: &Partition, hyp: &Partition) -> Result<(f64, f64)> {
    Ok(vi_of(&Contingency::new(gold, hyp)?))
}

pub fn full_report(gold: &Partition, hyp: &Partition) -> Result<MetricReport> {
    let t = Contingency::new(gold, hyp)?;
    let pc = pair_counts_of(&t);
    let (precision, recall, f) = prf_from(&pc);
    let ced_gh = ced_of(&t);
    let ced_hg = ced_of(&t.transposed());
    let (vi, nvi) = vi_of(&t);
    Ok(MetricReport {
        rand_index: rand_from(&pc),
        precision,
        recall,
        f_score: f,
        ced_gh,
        ced_hg,
        nes: nes_from(ced_gh, ced_hg, t.n),
        vi,
        nvi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(blocks: &[&[&str]]) -> Partition {
        let owned: Vec<Vec<&str>> = blocks.iter().map(|b| b.to_vec()).collect();
        Partition::from_blocks(&owned).unwrap()
    }

    #[test]
    fn pair_count_examples() {
        let g = p(&[&["a", "b"], &["c"]]);
        let h = p(&[&["a"], &["b", "c"]]);
        let pc = pair_counts(&g, &h).unwrap();
        assert_eq!((pc.n11, pc.n00, pc.n10, pc.n01), (0, 1, 1, 1));
        let pc = pair_counts(&g, &g).unwrap();
        assert_eq!((pc.n11, pc.n00, pc.n10, pc.n01), (1, 2, 0, 0));
        let pc = pair_counts(&g, &p(&[&["a", "b", "c"]])).unwrap();
        assert_eq!((pc.n11, pc.n00, pc.n10, pc.n01), (1, 0, 0, 2));
    }

    #[test]
    fn pair_counts_errors() {
        let g = p(&[&["a"]]);
        assert!(matches!(pair_counts(&g, &g), Err(Error::Domain(_))));
        let h = p(&[&["a", "b"]]);
        let k = p(&[&["a", "c"]]);
        assert!(matches!(pair_counts(&h, &k), Err(Error::Domain(_))));
    }

    #[test]
    fn rand_index_examples() {
        let g = p(&[&["a", "b"], &["c"]]);
        assert_eq!(rand_index(&g, &g).unwrap(), 1.0);
        let h = p(&[&["a"], &["b", "c"]]);
        assert_abs_diff_eq!(rand_index(&g, &h).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        let coarse = p(&[&["a", "b", "c"]]);
        assert_abs_diff_eq!(rand_index(&g, &coarse).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn prf_examples() {
        let g = p(&[&["a", "b"], &["c"]]);
        let (pr, re, f) = precision_recall_f(&g, &p(&[&["a", "b", "c"]])).unwrap();
        assert_abs_diff_eq!(pr, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(re, 1.0);
        assert_abs_diff_eq!(f, 0.5, epsilon = 1e-15);

        let (pr, re, f) = precision_recall_f(&g, &p(&[&["a"], &["b"], &["c"]])).unwrap();
        assert_eq!((pr, re, f), (1.0, 0.0, 0.0));
        assert_eq!(precision_recall_f(&g, &g).unwrap(), (1.0, 1.0, 1.0));
    }

    #[test]
    fn f_matches_coarse_row_pattern() {
        assert_abs_diff_eq!(f_score(0.229, 1.0), 0.372, epsilon = 0.001);
    }

    #[test]
    fn ced_examples() {
        let g = p(&[&["a", "b", "c", "d"]]);
        let h = p(&[&["a", "b"], &["c", "d"]]);
        assert_eq!(cluster_edit_distance(&g, &g).unwrap(), 0);
        assert_eq!(cluster_edit_distance(&g, &h).unwrap(), 1);
        assert_eq!(cluster_edit_distance(&h, &g).unwrap(), 2);
        assert_abs_diff_eq!(normalized_edit_score(&h, &g).unwrap(), 0.625, epsilon = 1e-15);
    }

    #[test]
    fn ced_tie_needs_matching() {
        // Plain plurality with a smallest-id tie-break would report 3 here.
        let g = p(&[&["a", "b", "c"], &["d", "e"]]);
        let h = p(&[&["a", "b", "d", "e"], &["c"]]);
        assert_eq!(cluster_edit_distance(&g, &h).unwrap(), 2);
    }

    #[test]
    fn vi_examples() {
        let g = p(&[&["a", "b"], &["c", "d"]]);
        let (vi, nvi) = variation_of_information(&g, &g).unwrap();
        assert_eq!((vi, nvi), (0.0, 1.0));
        let h = p(&[&["a", "c"], &["b", "d"]]);
        let (vi, nvi) = variation_of_information(&g, &h).unwrap();
        assert_abs_diff_eq!(vi, 2.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(nvi, 0.0, epsilon = 1e-12);

        let g = p(&[&["a", "b"], &["c"]]);
        let fine = p(&[&["a"], &["b"], &["c"]]);
        let expected = (2.0 / 3.0) * 2f64.ln();
        let (vi, _) = variation_of_information(&g, &fine).unwrap();
        assert_abs_diff_eq!(vi, expected, epsilon = 1e-12);
    }

    #[test]
    fn report_for_identical() {
        let g = p(&[&["a", "b"], &["c"], &["d", "e"]]);
        let r = full_report(&g, &g).unwrap();
        assert_eq!(
            (r.rand_index, r.precision, r.recall, r.f_score, r.ced_gh, r.ced_hg, r.nes, r.vi, r.nvi),
            (1.0, 1.0, 1.0, 1.0, 0, 0, 1.0, 0.0, 1.0)
        );
    }
}
