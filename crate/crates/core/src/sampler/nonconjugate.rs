//! Model 3: types conditioned on the ranked publications.
//!
//! With `J` publications ranked by size, `L` types and rate `lambda`, the
//! conditional prior of all types together is
//! `sum_d log G_t(t_d) + L*W + L*C(J,2)*ln(lambda) - lambda * sum_f T_f S_f`
//! where `W = sum_rank (2 rank - J) log G_p(p)`, `T_f = sum_d t_df` and
//! `S_f = J sum_j p_jf^2 - (sum_j p_jf)^2` is the sum of squared pairwise
//! differences. Every update below works from that summary.

use std::cmp::Reverse;

use super::state::{sample_log_weights, ChainState};
use super::Variant;
use crate::error::{Error, Result};
use crate::gaussian::{self, Publication, ReferenceType};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CandidateKind {
    Publication,
    Type,
}

/// Auxiliary parameters for one indicator update. When the item's current
/// parameter is held by it alone, that value comes first.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidates {
    pub values: Vec<Vec<f64>>,
    pub m_tilde: usize,
    pub includes_old: bool,
}

/// Ranked publication summary for the conditional prior.
#[derive(Clone, Debug)]
pub(crate) struct PriorSummary {
    keys: Vec<(Reverse<usize>, u64)>,
    /// `log G_p` of each publication in rank order.
    g: Vec<f64>,
    prefix: Vec<f64>,
    w: f64,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    t_sum: Vec<f64>,
    n_types: usize,
    log_rate: f64,
    rate: f64,
}

impl PriorSummary {
    fn j(&self) -> usize {
        self.keys.len()
    }

    fn pairs(&self) -> f64 {
        let j = self.j() as f64;
        0.5 * j * (j - 1.0)
    }

    fn s(&self, f: usize) -> f64 {
        self.j() as f64 * self.sumsq[f] - self.sum[f] * self.sum[f]
    }

    /// Prior terms beyond the independent base densities.
    fn extra(&self) -> f64 {
        let l = self.n_types as f64;
        let spread: f64 = (0..self.t_sum.len()).map(|f| self.t_sum[f] * self.s(f)).sum();
        l * self.w + l * self.pairs() * self.log_rate - self.rate * spread
    }

    /// Change in `W` when publication `id` (of size `size`) gains a member.
    fn grow_delta_w(&self, id: u64, size: usize) -> f64 {
        let r = self
            .keys
            .binary_search(&(Reverse(size), id))
            .expect("publication in summary");
        let moved = (Reverse(size + 1), id);
        let r_new = self.keys.partition_point(|k| *k < moved);
        2.0 * (r_new as f64 - r as f64) * self.g[r] + 2.0 * (self.prefix[r] - self.prefix[r_new])
    }

    /// Change in the extra terms when a new publication at `x` joins (it
    /// ranks last).
    fn new_publication_delta(&self, x: &[f64], gx: f64) -> f64 {
        let l = self.n_types as f64;
        let j = self.j() as f64;
        let total_g = self.prefix[self.j()];
        let mut spread = 0.0;
        for (f, &v) in x.iter().enumerate() {
            spread += self.t_sum[f] * (j * v * v - 2.0 * v * self.sum[f] + self.sumsq[f]);
        }
        l * (-total_g + (j - 1.0) * gx) + l * j * self.log_rate - self.rate * spread
    }

    /// Change in the extra terms when a new type `x` is added.
    fn new_type_delta(&self, x: &[f64]) -> f64 {
        let spread: f64 = x.iter().enumerate().map(|(f, v)| v * self.s(f)).sum();
        self.w + self.pairs() * self.log_rate - self.rate * spread
    }
}

impl ChainState {
    fn conditional_active(&self) -> bool {
        self.config.conditional_prior.is_some() && !self.config.freeze_types
    }

    pub(crate) fn prior_summary(&self) -> PriorSummary {
        let dim = self.data.dim;
        let mut ranked: Vec<(Reverse<usize>, u64, f64)> = self
            .pubs
            .iter()
            .map(|(&id, e)| (Reverse(e.count), id, self.pub_base.log_density(&e.p)))
            .collect();
        ranked.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let j = ranked.len() as f64;
        let mut prefix = Vec::with_capacity(ranked.len() + 1);
        prefix.push(0.0);
        let mut w = 0.0;
        for (rank, (_, _, g)) in ranked.iter().enumerate() {
            prefix.push(prefix[rank] + g);
            w += (2.0 * rank as f64 - j) * g;
        }
        let mut sum = vec![0.0; dim];
        let mut sumsq = vec![0.0; dim];
        for e in self.pubs.values() {
            for (f, &v) in e.p.mean.iter().enumerate() {
                sum[f] += v;
                sumsq[f] += v * v;
            }
        }
        let mut t_sum = vec![0.0; dim];
        for e in self.types.values() {
            for (f, &v) in e.t.precision.iter().enumerate() {
                t_sum[f] += v;
            }
        }
        let rate = self.config.conditional_prior.map_or(1.0, |c| c.rate);
        PriorSummary {
            keys: ranked.iter().map(|&(k, id, _)| (k, id)).collect(),
            g: ranked.iter().map(|r| r.2).collect(),
            prefix,
            w,
            sum,
            sumsq,
            t_sum,
            n_types: self.types.len(),
            log_rate: rate.ln(),
            rate,
        }
    }

    /// Conditional-prior terms of the joint score beyond the independent
    /// base densities; zero without a conditional prior.
    pub(crate) fn conditional_prior_extra(&self) -> f64 {
        if !self.conditional_active() {
            return 0.0;
        }
        self.prior_summary().extra()
    }

    /// Auxiliary candidates for item `n`'s publication or type: `M` fresh
    /// base draws, preceded by the current value when `n` holds it alone.
    pub fn algorithm8_candidates(&mut self, n: usize, kind: CandidateKind) -> Result<Candidates> {
        if self.config.variant != Variant::M3 {
            return Err(Error::config("auxiliary candidates are only used by Model 3"));
        }
        if n >= self.n_items() {
            return Err(Error::domain(format!("item {n} out of range")));
        }
        let m = self.config.aux_samples;
        let mut values = Vec::with_capacity(m + 1);
        let includes_old = match kind {
            CandidateKind::Publication => {
                let e = &self.pubs[&self.c[n]];
                let unique = e.count == 1;
                if unique {
                    values.push(e.p.mean.clone());
                }
                for _ in 0..m {
                    values.push(self.pub_base.sample(&mut self.rng).mean);
                }
                unique
            }
            CandidateKind::Type => {
                let e = &self.types[&self.d[n]];
                let unique = e.count == 1;
                if unique {
                    values.push(e.t.precision.clone());
                }
                for _ in 0..m {
                    values.push(self.type_base.sample(&mut self.rng).precision);
                }
                unique
            }
        };
        Ok(Candidates {
            m_tilde: values.len(),
            values,
            includes_old,
        })
    }

    /// Log weights for placing detached test item `n`: eligible existing
    /// publications first (ids returned), then each candidate.
    pub(crate) fn c_log_weights(&self, n: usize, cands: &Candidates) -> (Vec<u64>, Vec<f64>) {
        let t = &self.types[&self.d[n]].t.precision;
        let r = self.row(n);
        let summary = self.conditional_active().then(|| self.prior_summary());
        let l = self.types.len() as f64;
        let mut ids = Vec::with_capacity(self.pubs.len());
        let mut lw = Vec::with_capacity(self.pubs.len() + cands.m_tilde);
        for (&id, e) in &self.pubs {
            if !self.eligible(e) {
                continue;
            }
            let mut w = (e.count as f64).ln() + gaussian::loglik(r, &e.p.mean, t);
            if let Some(s) = &summary {
                w += l * s.grow_delta_w(id, e.count);
            }
            ids.push(id);
            lw.push(w);
        }
        let new_mass = (self.alpha_p / cands.m_tilde as f64).ln();
        for x in &cands.values {
            let mut w = new_mass + gaussian::loglik(r, x, t);
            if let Some(s) = &summary {
                let gx = self.pub_base.log_density(&Publication::new(x.clone()));
                w += s.new_publication_delta(x, gx);
            }
            lw.push(w);
        }
        (ids, lw)
    }

    pub(crate) fn sample_c_nonconjugate(&mut self, n: usize) {
        let cands = self
            .algorithm8_candidates(n, CandidateKind::Publication)
            .expect("Model 3 state");
        self.detach_c(n);
        let (ids, lw) = self.c_log_weights(n, &cands);
        let pick = sample_log_weights(&lw, &mut self.rng);
        let id = match ids.get(pick) {
            Some(&id) => id,
            None => {
                let x = cands.values[pick - ids.len()].clone();
                self.insert_pub(Publication::new(x), false)
            }
        };
        self.attach_c(n, id);
    }

    pub(crate) fn sample_d_nonconjugate(&mut self, n: usize) {
        let cands = self.algorithm8_candidates(n, CandidateKind::Type).expect("Model 3 state");
        self.detach_d(n);
        let mean = &self.pubs[&self.c[n]].p.mean;
        let r = self.row(n);
        let summary = self.conditional_active().then(|| self.prior_summary());
        let mut ids = Vec::with_capacity(self.types.len());
        let mut lw = Vec::with_capacity(self.types.len() + cands.m_tilde);
        for (&id, e) in &self.types {
            ids.push(id);
            lw.push((e.count as f64).ln() + gaussian::loglik(r, mean, &e.t.precision));
        }
        let new_mass = (self.alpha_t / cands.m_tilde as f64).ln();
        for x in &cands.values {
            let mut w = new_mass + gaussian::loglik(r, mean, x);
            if let Some(s) = &summary {
                w += s.new_type_delta(x);
            }
            lw.push(w);
        }
        let pick = sample_log_weights(&lw, &mut self.rng);
        let id = match ids.get(pick) {
            Some(&id) => id,
            None => {
                let x = cands.values[pick - ids.len()].clone();
                self.insert_type(ReferenceType { precision: x })
            }
        };
        self.attach_d(n, id);
    }

    /// Independence updates of every publication and then every type: each
    /// picks among its current value and `candidate_count` base draws with
    /// weight proportional to target over base density.
    pub(crate) fn resample_parameters_nonconjugate(&mut self) {
        let dim = self.data.dim;
        let k = self.config.candidate_count;
        let active = self.conditional_active();
        let mut summary = self.prior_summary();
        let l = self.types.len() as f64;
        let j = summary.j() as f64;

        let pub_ids: Vec<u64> = self.pubs.keys().copied().collect();
        for id in pub_ids {
            let mut a = vec![0.0; dim];
            let mut b = vec![0.0; dim];
            for n in (0..self.n_items()).filter(|&n| self.c[n] == id) {
                let t = &self.types[&self.d[n]].t.precision;
                for f in 0..dim {
                    a[f] += t[f];
                    b[f] += t[f] * self.data.rows[n][f];
                }
            }
            let count = self.pubs[&id].count;
            let rank = summary
                .keys
                .binary_search(&(Reverse(count), id))
                .expect("publication in summary");
            let coef = 2.0 * rank as f64 - j;
            let current = self.pubs[&id].p.clone();
            let rest_sum: Vec<f64> = (0..dim).map(|f| summary.sum[f] - current.mean[f]).collect();
            let rest_sq: Vec<f64> = (0..dim).map(|f| summary.sumsq[f] - current.mean[f].powi(2)).collect();
            let score = |x: &Publication, g: f64| {
                let mut s = 0.0;
                for f in 0..dim {
                    let v = x.mean[f];
                    s -= 0.5 * (a[f] * v * v - 2.0 * b[f] * v);
                    if active {
                        let spread = j * (rest_sq[f] + v * v) - (rest_sum[f] + v).powi(2);
                        s -= summary.rate * summary.t_sum[f] * spread;
                    }
                }
                if active {
                    s += l * coef * g;
                }
                s
            };
            let mut xs = Vec::with_capacity(k + 1);
            xs.push(current);
            for _ in 0..k {
                xs.push(self.pub_base.sample(&mut self.rng));
            }
            let gs: Vec<f64> = xs.iter().map(|x| self.pub_base.log_density(x)).collect();
            let lw: Vec<f64> = xs.iter().zip(&gs).map(|(x, &g)| score(x, g)).collect();
            let pick = sample_log_weights(&lw, &mut self.rng);
            let chosen = xs.swap_remove(pick);
            for f in 0..dim {
                summary.sum[f] = rest_sum[f] + chosen.mean[f];
                summary.sumsq[f] = rest_sq[f] + chosen.mean[f].powi(2);
            }
            let old_g = summary.g[rank];
            summary.w += coef * (gs[pick] - old_g);
            summary.g[rank] = gs[pick];
            self.pubs.get_mut(&id).expect("active publication").p = chosen;
        }

        if self.config.freeze_types {
            return;
        }
        let spread: Vec<f64> = (0..dim).map(|f| summary.s(f)).collect();
        let type_ids: Vec<u64> = self.types.keys().copied().collect();
        for id in type_ids {
            let mut q = vec![0.0; dim];
            let mut count = 0.0;
            for n in (0..self.n_items()).filter(|&n| self.d[n] == id) {
                let p = &self.pubs[&self.c[n]].p.mean;
                count += 1.0;
                for f in 0..dim {
                    q[f] += (self.data.rows[n][f] - p[f]).powi(2);
                }
            }
            let score = |x: &ReferenceType| {
                let mut s = 0.0;
                for f in 0..dim {
                    let v = x.precision[f];
                    s += 0.5 * count * v.ln() - 0.5 * v * q[f];
                    if active {
                        s -= summary.rate * v * spread[f];
                    }
                }
                s
            };
            let mut xs = Vec::with_capacity(k + 1);
            xs.push(self.types[&id].t.clone());
            for _ in 0..k {
                xs.push(self.type_base.sample(&mut self.rng));
            }
            let lw: Vec<f64> = xs.iter().map(score).collect();
            let pick = sample_log_weights(&lw, &mut self.rng);
            self.types.get_mut(&id).expect("active type").t = xs.swap_remove(pick);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Item, Split};
    use crate::gaussian::{conditional_type_logprior, rank_publications, ConditionalPriorConfig, RankedPublication};
    use crate::sampler::{chain_rng, SamplerConfig};

    fn dataset() -> Dataset {
        let pts = [
            ("a", Split::Train, Some("x"), [0.1, 0.3]),
            ("b", Split::Train, Some("x"), [-0.2, 0.1]),
            ("c", Split::Train, Some("y"), [2.5, 1.9]),
            ("d", Split::Train, Some("y"), [2.2, 2.4]),
            ("e", Split::Train, Some("z"), [-2.0, 1.0]),
            ("f", Split::Test, None, [0.0, 0.2]),
            ("g", Split::Test, None, [2.4, 2.0]),
            ("h", Split::Test, None, [-1.8, 1.2]),
            ("i", Split::Test, None, [1.0, -1.0]),
        ];
        Dataset::new(
            pts.iter()
                .map(|(id, split, label, x)| Item {
                    id: id.to_string(),
                    split: *split,
                    label: label.map(str::to_string),
                    features: x.to_vec(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn m3_state(seed: u64, share: bool) -> ChainState {
        let cfg = SamplerConfig {
            variant: Variant::M3,
            share_train_test: share,
            conditional_prior: Some(ConditionalPriorConfig { rate: 0.7 }),
            candidate_count: 4,
            ..Default::default()
        };
        let mut st = ChainState::init_state(&dataset(), &cfg, chain_rng(seed, 0)).unwrap();
        for _ in 0..5 {
            st.gibbs_sweep();
        }
        st
    }

    fn reference_extra(st: &ChainState) -> f64 {
        let mut ranked: Vec<RankedPublication> = st
            .pubs
            .iter()
            .map(|(&id, e)| RankedPublication {
                publication: &e.p,
                size: e.count,
                id,
            })
            .collect();
        rank_publications(&mut ranked);
        let cfg = st.config.conditional_prior.unwrap();
        st.types
            .values()
            .map(|e| {
                conditional_type_logprior(&e.t, &ranked, &st.type_base, &st.pub_base, &cfg).unwrap()
                    - st.type_base.log_density(&e.t)
            })
            .sum()
    }

    #[test]
    fn fast_prior_matches_pairwise_form() {
        for seed in 0..5 {
            let st = m3_state(seed, seed % 2 == 0);
            let fast = st.conditional_prior_extra();
            let slow = reference_extra(&st);
            assert!((fast - slow).abs() < 1e-8 * (1.0 + slow.abs()), "{fast} vs {slow}");
        }
    }

    #[test]
    fn incremental_weights_match_full_recomputation() {
        for seed in 0..4 {
            let mut st = m3_state(seed, true);
            let test_items: Vec<usize> = (0..st.n_items()).filter(|&n| st.is_test(n)).collect();
            for n in test_items {
                let cands = st.algorithm8_candidates(n, CandidateKind::Publication).unwrap();
                let mut base = st.clone();
                base.detach_c(n);
                let (ids, lw) = base.c_log_weights(n, &cands);
                let baseline = base.conditional_prior_extra();
                let t = base.types[&base.d[n]].t.precision.clone();
                let new_mass = (base.alpha_p / cands.m_tilde as f64).ln();
                let mut check = Vec::new();
                for &id in &ids {
                    let mut moved = base.clone();
                    let count = moved.pubs[&id].count as f64;
                    moved.attach_c(n, id);
                    let p = &moved.pubs[&id].p.mean;
                    check.push(count.ln() + gaussian::loglik(moved.row(n), p, &t) + moved.conditional_prior_extra() - baseline);
                }
                for x in &cands.values {
                    let mut moved = base.clone();
                    let id = moved.insert_pub(Publication::new(x.clone()), false);
                    moved.attach_c(n, id);
                    check.push(new_mass + gaussian::loglik(moved.row(n), x, &t) + moved.conditional_prior_extra() - baseline);
                }
                for (a, b) in lw.iter().zip(&check) {
                    assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn candidate_count_follows_uniqueness() {
        let mut st = m3_state(3, false);
        let m = st.config.aux_samples;
        for n in 0..st.n_items() {
            let unique = st.pubs[&st.c[n]].count == 1;
            let c = st.algorithm8_candidates(n, CandidateKind::Publication).unwrap();
            assert_eq!(c.includes_old, unique);
            assert_eq!(c.m_tilde, if unique { m + 1 } else { m });
            if unique {
                assert_eq!(c.values[0], st.pubs[&st.c[n]].p.mean);
            }
        }
    }

    #[test]
    fn single_candidate_still_valid() {
        let cfg = SamplerConfig {
            variant: Variant::M3,
            candidate_count: 1,
            aux_samples: 1,
            ..Default::default()
        };
        let mut st = ChainState::init_state(&dataset(), &cfg, chain_rng(9, 0)).unwrap();
        for _ in 0..20 {
            st.gibbs_sweep();
            st.check_invariants().unwrap();
            assert!(st.joint_log_score().is_finite());
        }
    }
}
