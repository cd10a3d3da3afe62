use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use super::{SamplerConfig, Variant};
use crate::data::{Dataset, Split};
use crate::dp::{self, ObservationPair};
use crate::error::{Error, Result};
use crate::gaussian::{self, Publication, PublicationBase, ReferenceType, TypeBase};
use crate::partition::Partition;

/// Immutable per-chain view of the dataset.
#[derive(Debug)]
pub(crate) struct ChainData {
    pub rows: Vec<Vec<f64>>,
    /// Items whose publication indicator is sampled.
    pub is_test: Vec<bool>,
    /// Sorted ids of the items reported in the test partition.
    pub report_ids: Arc<[String]>,
    /// Item index behind each entry of `report_ids`.
    pub report_idx: Vec<usize>,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct PubEntry {
    pub p: Publication,
    pub count: usize,
    /// Holds training items (created from a gold class).
    pub training: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct TypeEntry {
    pub t: ReferenceType,
    pub count: usize,
}

/// Full latent state of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub(crate) data: Arc<ChainData>,
    pub(crate) config: Arc<SamplerConfig>,
    pub(crate) c: Vec<u64>,
    pub(crate) d: Vec<u64>,
    /// Publication each training item is pinned to.
    pub(crate) pinned: Vec<Option<u64>>,
    pub(crate) pubs: BTreeMap<u64, PubEntry>,
    pub(crate) types: BTreeMap<u64, TypeEntry>,
    pub(crate) next_pub: u64,
    pub(crate) next_type: u64,
    pub(crate) alpha_p: f64,
    pub(crate) alpha_t: f64,
    pub(crate) pub_base: PublicationBase,
    pub(crate) type_base: TypeBase,
    pub(crate) iteration: usize,
    pub(crate) rng: ChaCha8Rng,
}

/// Exponentiates and normalizes log weights after subtracting their maximum.
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "log weights must contain a finite maximum: {log_weights:?}");
    let mut w: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

pub(crate) fn sample_log_weights<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    debug_assert!(log_weights.iter().all(|w| !w.is_nan()), "NaN log weight");
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "log weights must contain a finite maximum: {log_weights:?}");
    let w: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    dp::sample_weighted(&w, rng)
}

/// Log EPPF of a CRP partition with the given block sizes.
pub(crate) fn log_eppf(sizes: impl IntoIterator<Item = usize>, alpha: f64) -> f64 {
    let (mut k, mut n, mut acc) = (0usize, 0usize, 0.0);
    for s in sizes {
        k += 1;
        n += s;
        acc += ln_gamma(s as f64);
    }
    if n == 0 {
        return 0.0;
    }
    k as f64 * alpha.ln() + acc + ln_gamma(alpha) - ln_gamma(alpha + n as f64)
}

impl ChainData {
    fn build(dataset: &Dataset, use_labels: bool) -> (Self, Vec<Option<String>>) {
        let mut rows = Vec::with_capacity(dataset.len());
        let mut is_test = Vec::with_capacity(dataset.len());
        let mut gold = Vec::with_capacity(dataset.len());
        let mut report: Vec<(String, usize)> = Vec::new();
        for (i, item) in dataset.items().iter().enumerate() {
            rows.push(item.features.clone());
            let train = use_labels && item.split == Split::Train;
            is_test.push(!train);
            gold.push(if train { item.label.clone() } else { None });
            if item.split == Split::Test {
                report.push((item.id.clone(), i));
            }
        }
        report.sort();
        let (ids, idx): (Vec<String>, Vec<usize>) = report.into_iter().unzip();
        (
            ChainData {
                rows,
                is_test,
                report_ids: ids.into(),
                report_idx: idx,
                dim: dataset.dim(),
            },
            gold,
        )
    }
}

impl ChainState {
    /// Builds the initial state: training items in their gold classes, each
    /// test item alone in a new cluster, one shared type, and parameters from
    /// one round of parameter updates.
    pub fn init_state(dataset: &Dataset, config: &SamplerConfig, rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let (data, gold) = ChainData::build(dataset, config.use_training_labels);
        if config.resample_alphas && !data.is_test.iter().any(|t| !t) {
            return Err(Error::config(
                "resampling the precisions needs labeled training items",
            ));
        }
        let dim = data.dim;
        let pub_base = PublicationBase::isotropic(dim, config.publication_variance)?;
        let type_base = TypeBase::uniform(dim, config.type_shape, config.type_scale)?;
        let n = data.rows.len();

        let mut state = ChainState {
            c: vec![0; n],
            d: vec![0; n],
            pinned: vec![None; n],
            pubs: BTreeMap::new(),
            types: BTreeMap::new(),
            next_pub: 0,
            next_type: 0,
            alpha_p: config.alpha_p,
            alpha_t: config.alpha_t,
            pub_base,
            type_base,
            iteration: 0,
            rng,
            data: Arc::new(data),
            config: Arc::new(config.clone()),
        };

        let first_type = if config.freeze_types {
            ReferenceType::identity(dim)
        } else {
            ReferenceType::new(state.type_base.mean())?
        };
        let t0 = state.insert_type(first_type);
        let mut class_pub: HashMap<String, u64> = HashMap::new();
        for i in 0..n {
            state.d[i] = t0;
            state.types.get_mut(&t0).expect("type exists").count += 1;
            let placeholder = Publication::new(state.pub_base.prior_mean.clone());
            let id = match &gold[i] {
                Some(label) => match class_pub.get(label) {
                    Some(&id) => id,
                    None => {
                        let id = state.insert_pub(placeholder, true);
                        class_pub.insert(label.clone(), id);
                        id
                    }
                },
                None => state.insert_pub(placeholder, false),
            };
            if gold[i].is_some() {
                state.pinned[i] = Some(id);
            }
            state.c[i] = id;
            state.pubs.get_mut(&id).expect("publication exists").count += 1;
        }

        match config.variant {
            Variant::M1 | Variant::M2 => state.resample_parameters_conjugate(),
            Variant::M3 => {
                let ids: Vec<u64> = state.pubs.keys().copied().collect();
                for id in ids {
                    let p = state.pub_base.sample(&mut state.rng);
                    state.pubs.get_mut(&id).expect("publication exists").p = p;
                }
                state.resample_parameters_nonconjugate();
            }
        }
        Ok(state)
    }

    pub(crate) fn insert_pub(&mut self, p: Publication, training: bool) -> u64 {
        let id = self.next_pub;
        self.next_pub += 1;
        self.pubs.insert(id, PubEntry { p, count: 0, training });
        id
    }

    pub(crate) fn insert_type(&mut self, t: ReferenceType) -> u64 {
        let id = self.next_type;
        self.next_type += 1;
        self.types.insert(id, TypeEntry { t, count: 0 });
        id
    }

    /// Detaches item `n` from its publication, dropping the publication
    /// (and returning it) when it becomes empty.
    pub(crate) fn detach_c(&mut self, n: usize) -> Option<Publication> {
        let id = self.c[n];
        let entry = self.pubs.get_mut(&id).expect("item points at an active publication");
        entry.count -= 1;
        if entry.count == 0 {
            self.pubs.remove(&id).map(|e| e.p)
        } else {
            None
        }
    }

    pub(crate) fn attach_c(&mut self, n: usize, id: u64) {
        self.c[n] = id;
        self.pubs.get_mut(&id).expect("publication exists").count += 1;
    }

    pub(crate) fn detach_d(&mut self, n: usize) -> Option<ReferenceType> {
        let id = self.d[n];
        let entry = self.types.get_mut(&id).expect("item points at an active type");
        entry.count -= 1;
        if entry.count == 0 {
            self.types.remove(&id).map(|e| e.t)
        } else {
            None
        }
    }

    pub(crate) fn attach_d(&mut self, n: usize, id: u64) {
        self.d[n] = id;
        self.types.get_mut(&id).expect("type exists").count += 1;
    }

    pub(crate) fn row(&self, n: usize) -> &[f64] {
        &self.data.rows[n]
    }

    /// Whether a test item may join publication `entry`.
    pub(crate) fn eligible(&self, entry: &PubEntry) -> bool {
        self.config.share_train_test || !entry.training
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn n_items(&self) -> usize {
        self.c.len()
    }

    pub fn is_test(&self, n: usize) -> bool {
        self.data.is_test[n]
    }

    pub fn n_publications(&self) -> usize {
        self.pubs.len()
    }

    pub fn n_types(&self) -> usize {
        self.types.len()
    }

    pub fn alpha_p(&self) -> f64 {
        self.alpha_p
    }

    pub fn alpha_t(&self) -> f64 {
        self.alpha_t
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn publication_of(&self, n: usize) -> u64 {
        self.c[n]
    }

    pub fn type_of(&self, n: usize) -> u64 {
        self.d[n]
    }

    pub fn publication(&self, id: u64) -> Option<&Publication> {
        self.pubs.get(&id).map(|e| &e.p)
    }

    pub fn reference_type(&self, id: u64) -> Option<&ReferenceType> {
        self.types.get(&id).map(|e| &e.t)
    }

    pub fn publications(&self) -> impl Iterator<Item = (u64, &Publication, usize)> {
        self.pubs.iter().map(|(&id, e)| (id, &e.p, e.count))
    }

    pub fn types(&self) -> impl Iterator<Item = (u64, &ReferenceType, usize)> {
        self.types.iter().map(|(&id, e)| (id, &e.t, e.count))
    }

    pub fn type_base(&self) -> &TypeBase {
        &self.type_base
    }

    pub fn publication_base(&self) -> &PublicationBase {
        &self.pub_base
    }

    /// Overwrites an active publication's mean.
    pub fn set_publication(&mut self, id: u64, p: Publication) -> Result<()> {
        let entry = self
            .pubs
            .get_mut(&id)
            .ok_or_else(|| Error::domain(format!("no active publication {id}")))?;
        if p.dim() != self.data.dim {
            return Err(Error::domain("publication dimension mismatch"));
        }
        entry.p = p;
        Ok(())
    }

    /// Reassigns every sampled item: item `items[i]` goes to block
    /// `labels[i]`, whose publication is `means[labels[i]]`. The listed items
    /// must be exactly the sampled (test) items, and no training clusters may
    /// be involved.
    pub fn set_test_clusters(&mut self, items: &[usize], labels: &[usize], means: &[Publication]) -> Result<()> {
        let sampled: Vec<usize> = (0..self.n_items()).filter(|&n| self.is_test(n)).collect();
        let mut given = items.to_vec();
        given.sort_unstable();
        if given != sampled || labels.len() != items.len() {
            return Err(Error::domain("set_test_clusters must cover exactly the sampled items"));
        }
        if labels.iter().any(|&l| l >= means.len()) {
            return Err(Error::domain("label without a publication"));
        }
        for &n in items {
            self.detach_c(n);
        }
        let ids: Vec<u64> = means.iter().map(|p| self.insert_pub(p.clone(), false)).collect();
        for (&n, &l) in items.iter().zip(labels) {
            self.attach_c(n, ids[l]);
        }
        self.pubs.retain(|_, e| e.count > 0);
        Ok(())
    }

    /// Partition of the reported test items by publication.
    pub fn test_partition(&self) -> Partition {
        let labels: Vec<u64> = self.data.report_idx.iter().map(|&n| self.c[n]).collect();
        Partition::from_sorted(self.data.report_ids.clone(), &labels)
    }

    /// Resamples `c_n` for a test item.
    pub fn sample_c(&mut self, n: usize) -> Result<()> {
        if n >= self.n_items() {
            return Err(Error::domain(format!("item {n} out of range")));
        }
        if !self.is_test(n) {
            return Err(Error::domain(format!("item {n} is a training item; its publication is fixed")));
        }
        match self.config.variant {
            Variant::M1 | Variant::M2 => self.sample_c_conjugate(n),
            Variant::M3 => self.sample_c_nonconjugate(n),
        }
        Ok(())
    }

    /// Resamples `d_n`; a no-op while types are frozen.
    pub fn sample_d(&mut self, n: usize) -> Result<()> {
        if n >= self.n_items() {
            return Err(Error::domain(format!("item {n} out of range")));
        }
        if self.config.freeze_types {
            return Ok(());
        }
        match self.config.variant {
            Variant::M1 | Variant::M2 => self.sample_d_conjugate(n),
            Variant::M3 => self.sample_d_nonconjugate(n),
        }
        Ok(())
    }

    /// One full iteration: parameters, then every test `c`, then every `d`,
    /// then (optionally) the two precisions.
    pub fn gibbs_sweep(&mut self) {
        match self.config.variant {
            Variant::M1 | Variant::M2 => self.resample_parameters_conjugate(),
            Variant::M3 => self.resample_parameters_nonconjugate(),
        }
        for n in 0..self.n_items() {
            if self.is_test(n) {
                self.sample_c(n).expect("test item");
            }
        }
        for n in 0..self.n_items() {
            self.sample_d(n).expect("item in range");
        }
        if self.config.resample_alphas {
            self.resample_alphas();
        }
        self.iteration += 1;
        debug_assert!(self.check_invariants().is_ok(), "{:?}", self.check_invariants());
    }

    /// Observation pair of the labeled training portion: item count and
    /// number of gold classes.
    fn training_pair(&self) -> Option<ObservationPair> {
        let pins: BTreeSet<u64> = self.pinned.iter().flatten().copied().collect();
        let n = self.pinned.iter().flatten().count();
        (n > 0).then_some(ObservationPair { n, k: pins.len() })
    }

    fn resample_alphas(&mut self) {
        let pair = self.training_pair().expect("training items present when resampling");
        let prior = self.config.alpha_prior_p;
        self.alpha_p = dp::sample_precision_single(self.alpha_p, pair.n, pair.k, &prior, &mut self.rng)
            .expect("valid observation pair");
        if !self.config.freeze_types {
            let prior = self.config.alpha_prior_t;
            self.alpha_t = dp::sample_precision_single(
                self.alpha_t,
                self.n_items(),
                self.types.len(),
                &prior,
                &mut self.rng,
            )
            .expect("valid observation pair");
        }
    }

    /// Unnormalized log posterior at the current point: CRP terms for both
    /// indicator vectors, base-measure terms for the active parameters, and
    /// the data log likelihood.
    pub fn joint_log_score(&self) -> f64 {
        let mut score = 0.0;
        if self.config.share_train_test {
            score += log_eppf(self.pubs.values().map(|e| e.count), self.alpha_p);
        } else {
            let part = |training: bool| {
                log_eppf(
                    self.pubs.values().filter(|e| e.training == training).map(|e| e.count),
                    self.alpha_p,
                )
            };
            score += part(true) + part(false);
        }
        if !self.config.freeze_types {
            score += log_eppf(self.types.values().map(|e| e.count), self.alpha_t);
        }
        score += self
            .pubs
            .values()
            .map(|e| self.pub_base.log_density(&e.p))
            .sum::<f64>();
        if !self.config.freeze_types {
            score += self
                .types
                .values()
                .map(|e| self.type_base.log_density(&e.t))
                .sum::<f64>();
            if self.config.variant == Variant::M3 {
                score += self.conditional_prior_extra();
            }
        }
        for n in 0..self.n_items() {
            let p = &self.pubs[&self.c[n]].p;
            let t = &self.types[&self.d[n]].t;
            score += gaussian::loglik(self.row(n), &p.mean, &t.precision);
        }
        score
    }

    /// Verifies the bookkeeping invariants of the state.
    pub fn check_invariants(&self) -> Result<()> {
        let mut pub_counts: HashMap<u64, usize> = HashMap::new();
        let mut type_counts: HashMap<u64, usize> = HashMap::new();
        for n in 0..self.n_items() {
            *pub_counts.entry(self.c[n]).or_default() += 1;
            *type_counts.entry(self.d[n]).or_default() += 1;
            if let Some(pin) = self.pinned[n] {
                if self.c[n] != pin {
                    return Err(Error::domain(format!("training item {n} left its gold class")));
                }
            }
        }
        if pub_counts.len() != self.pubs.len() || type_counts.len() != self.types.len() {
            return Err(Error::domain("empty or dangling cluster"));
        }
        for (id, e) in &self.pubs {
            if pub_counts.get(id) != Some(&e.count) {
                return Err(Error::domain(format!("publication {id} count mismatch")));
            }
            if e.p.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("publication {id} not finite")));
            }
        }
        for (id, e) in &self.types {
            if type_counts.get(id) != Some(&e.count) {
                return Err(Error::domain(format!("type {id} count mismatch")));
            }
            if e.t.precision.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::domain(format!("type {id} has invalid precision")));
            }
        }
        if !(self.alpha_p > 0.0 && self.alpha_t > 0.0) {
            return Err(Error::domain("precisions must stay positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_weights_sum_to_one() {
        let w = normalize_log_weights(&[-1000.0, -1001.5, -999.2, f64::NEG_INFINITY]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(w[3], 0.0);
    }

    #[test]
    fn eppf_matches_sequential_rule() {
        // {a,b},{c} under alpha=2: 1 * 1/3 * 2/4.
        let v = log_eppf([2, 1], 2.0);
        assert!((v - (1.0f64 / 3.0 * 0.5).ln()).abs() < 1e-12);
        assert_eq!(log_eppf(std::iter::empty(), 1.0), 0.0);
    }
}
