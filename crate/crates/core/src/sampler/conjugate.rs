//! Conjugate updates for Models 1 and 2.

use std::collections::BTreeMap;

use super::state::{sample_log_weights, ChainState};
use super::Variant;
use crate::gaussian::{self, PublicationStats, TypeStats};

impl ChainState {
    /// Exact posterior draws of every active publication and then every
    /// active type. Model 2 first re-fits the type base.
    pub(crate) fn resample_parameters_conjugate(&mut self) {
        let dim = self.data.dim;
        let mut pstats: BTreeMap<u64, PublicationStats> =
            self.pubs.keys().map(|&id| (id, PublicationStats::new(dim))).collect();
        for n in 0..self.n_items() {
            let t = &self.types[&self.d[n]].t;
            pstats
                .get_mut(&self.c[n])
                .expect("active publication")
                .add(self.row(n), &t.precision);
        }
        for (id, st) in pstats {
            let p = st.posterior(&self.pub_base).sample(&mut self.rng);
            self.pubs.get_mut(&id).expect("active publication").p = p;
        }

        if self.config.freeze_types {
            return;
        }
        if self.config.variant == Variant::M2 {
            self.adapt_type_base();
        }
        let mut tstats: BTreeMap<u64, TypeStats> =
            self.types.keys().map(|&id| (id, TypeStats::new(dim))).collect();
        for n in 0..self.n_items() {
            let p = &self.pubs[&self.c[n]].p;
            tstats.get_mut(&self.d[n]).expect("active type").add(self.row(n), &p.mean);
        }
        for (id, st) in tstats {
            let t = st.posterior(&self.type_base).sample(&mut self.rng);
            self.types.get_mut(&id).expect("active type").t = t;
        }
    }

    fn adapt_type_base(&mut self) {
        let index: BTreeMap<u64, usize> = self.pubs.keys().enumerate().map(|(i, &id)| (id, i)).collect();
        let pubs: Vec<_> = self.pubs.values().map(|e| e.p.clone()).collect();
        let assignments: Vec<usize> = self.c.iter().map(|id| index[id]).collect();
        self.type_base = gaussian::adapt_type_base(&self.data.rows, &assignments, &pubs)
            .expect("adapted base from a valid state");
    }

    pub(crate) fn sample_c_conjugate(&mut self, n: usize) {
        self.detach_c(n);
        let t = self.types[&self.d[n]].t.precision.clone();
        let r = self.row(n);
        let mut ids = Vec::with_capacity(self.pubs.len());
        let mut lw = Vec::with_capacity(self.pubs.len() + 1);
        for (&id, e) in &self.pubs {
            if self.eligible(e) {
                ids.push(id);
                lw.push((e.count as f64).ln() + gaussian::loglik(r, &e.p.mean, &t));
            }
        }
        lw.push(self.alpha_p.ln() + gaussian::new_publication_loglik(r, &t, &self.pub_base));
        let pick = sample_log_weights(&lw, &mut self.rng);
        let id = match ids.get(pick) {
            Some(&id) => id,
            None => {
                let mut st = PublicationStats::new(self.data.dim);
                st.add(self.row(n), &t);
                let p = st.posterior(&self.pub_base).sample(&mut self.rng);
                self.insert_pub(p, false)
            }
        };
        self.attach_c(n, id);
    }

    pub(crate) fn sample_d_conjugate(&mut self, n: usize) {
        self.detach_d(n);
        let mean = self.pubs[&self.c[n]].p.mean.clone();
        let r = self.row(n);
        let mut ids = Vec::with_capacity(self.types.len());
        let mut lw = Vec::with_capacity(self.types.len() + 1);
        for (&id, e) in &self.types {
            ids.push(id);
            lw.push((e.count as f64).ln() + gaussian::loglik(r, &mean, &e.t.precision));
        }
        lw.push(self.alpha_t.ln() + gaussian::new_type_loglik(r, &mean, &self.type_base));
        let pick = sample_log_weights(&lw, &mut self.rng);
        let id = match ids.get(pick) {
            Some(&id) => id,
            None => {
                let mut st = TypeStats::new(self.data.dim);
                st.add(self.row(n), &mean);
                let t = st.posterior(&self.type_base).sample(&mut self.rng);
                self.insert_type(t)
            }
        };
        self.attach_d(n, id);
    }
}
