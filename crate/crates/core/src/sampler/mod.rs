//! MCMC inference for the supervised clustering model.
//!
//! A chain keeps publication indicators `c` (fixed to the gold classes for
//! training items), type indicators `d`, the active publications and types,
//! and the two DP precisions. Models 1 and 2 use conjugate updates; Model 3
//! conditions types on publications and uses auxiliary-candidate updates.

mod conjugate;
mod nonconjugate;
mod state;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dp::GammaPrior;
use crate::error::{Error, Result};
use crate::gaussian::ConditionalPriorConfig;
use crate::partition::Partition;

pub use nonconjugate::{CandidateKind, Candidates};
pub use state::{normalize_log_weights, ChainState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Conjugate Normal / Gamma base measures.
    M1,
    /// Model 1 with the type base re-fitted to within-cluster spread every sweep.
    M2,
    /// Types conditioned on publications; non-conjugate updates.
    M3,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::M1 => "m1",
            Variant::M2 => "m2",
            Variant::M3 => "m3",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" | "1" => Ok(Variant::M1),
            "m2" | "2" => Ok(Variant::M2),
            "m3" | "3" => Ok(Variant::M3),
            other => Err(Error::config(format!("unknown variant `{other}` (expected m1, m2 or m3)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub variant: Variant,
    pub iterations: usize,
    pub burn_in: usize,
    /// Fresh auxiliary candidates per indicator update (Model 3).
    pub aux_samples: usize,
    /// Fresh proposals per parameter update (Model 3).
    pub candidate_count: usize,
    /// Let test items join clusters that contain training items.
    pub share_train_test: bool,
    pub resample_alphas: bool,
    /// Initial (or fixed) publication precision.
    pub alpha_p: f64,
    /// Initial (or fixed) type precision.
    pub alpha_t: f64,
    pub alpha_prior_p: GammaPrior,
    pub alpha_prior_t: GammaPrior,
    pub n_chains: usize,
    pub seed: u64,
    /// When false every item is treated as unlabeled.
    pub use_training_labels: bool,
    /// Keep a single identity type and never update types.
    pub freeze_types: bool,
    /// Model 3 type prior; `None` gives independent base measures.
    pub conditional_prior: Option<ConditionalPriorConfig>,
    /// Isotropic variance of the publication base measure.
    pub publication_variance: f64,
    pub type_shape: f64,
    pub type_scale: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            variant: Variant::M1,
            iterations: 1000,
            burn_in: 500,
            aux_samples: 8,
            candidate_count: 32,
            share_train_test: false,
            resample_alphas: false,
            alpha_p: 1.0,
            alpha_t: 1.0,
            alpha_prior_p: GammaPrior::default(),
            alpha_prior_t: GammaPrior::default(),
            n_chains: 1,
            seed: 0,
            use_training_labels: true,
            freeze_types: false,
            conditional_prior: Some(ConditionalPriorConfig::default()),
            publication_variance: 1.0,
            type_shape: 1.0,
            type_scale: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn with_variant(variant: Variant) -> Self {
        SamplerConfig {
            variant,
            ..Default::default()
        }
    }

    /// Every problem with the configuration, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if self.iterations == 0 {
            out.push("iterations must be at least 1".into());
        }
        if self.burn_in >= self.iterations {
            out.push(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if self.aux_samples == 0 {
            out.push("aux samples M must be at least 1".into());
        }
        if self.candidate_count == 0 {
            out.push("candidate count must be at least 1".into());
        }
        if self.n_chains == 0 {
            out.push("need at least one chain".into());
        }
        if !pos(self.alpha_p) || !pos(self.alpha_t) {
            out.push(format!(
                "precisions must be positive, got alpha_p={} alpha_t={}",
                self.alpha_p, self.alpha_t
            ));
        }
        for (name, prior) in [("alpha_p", &self.alpha_prior_p), ("alpha_t", &self.alpha_prior_t)] {
            if let Err(e) = prior.validate() {
                out.push(format!("{name} prior: {e}"));
            }
        }
        if let Some(cp) = &self.conditional_prior {
            if !pos(cp.rate) {
                out.push(format!("conditional prior rate must be positive, got {}", cp.rate));
            }
        }
        if !pos(self.publication_variance) {
            out.push(format!(
                "publication prior variance must be positive, got {}",
                self.publication_variance
            ));
        }
        if !pos(self.type_shape) || !pos(self.type_scale) {
            out.push(format!(
                "type prior shape and scale must be positive, got ({}, {})",
                self.type_shape, self.type_scale
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }
}

/// One retained post-burn-in iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub chain: usize,
    pub iteration: usize,
    pub test_partition: Partition,
    pub joint_log_score: f64,
    pub n_publications: usize,
    pub n_types: usize,
}

/// The RNG of chain `chain_index`: one ChaCha stream per chain under a
/// common seed, so results do not depend on how chains are scheduled.
pub fn chain_rng(seed: u64, chain_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_index as u64);
    rng
}

/// Runs one chain and returns its post-burn-in records.
pub fn run_chain(dataset: &Dataset, config: &SamplerConfig, chain_index: usize) -> Result<Vec<SampleRecord>> {
    config.validate()?;
    let mut state = ChainState::init_state(dataset, config, chain_rng(config.seed, chain_index))?;
    let mut records = Vec::with_capacity(config.iterations - config.burn_in);
    for it in 0..config.iterations {
        state.gibbs_sweep();
        if it >= config.burn_in {
            let score = state.joint_log_score();
            assert!(score.is_finite(), "non-finite joint score at iteration {it}");
            records.push(SampleRecord {
                chain: chain_index,
                iteration: it,
                test_partition: state.test_partition(),
                joint_log_score: score,
                n_publications: state.n_publications(),
                n_types: state.n_types(),
            });
        }
    }
    Ok(records)
}

/// The test partition of the highest-scoring record; ties go to the
/// earliest `(chain, iteration)`.
pub fn extract_prediction(records: &[SampleRecord]) -> Result<Partition> {
    let best = records
        .iter()
        .min_by(|a, b| {
            b.joint_log_score
                .total_cmp(&a.joint_log_score)
                .then((a.chain, a.iteration).cmp(&(b.chain, b.iteration)))
        })
        .ok_or_else(|| Error::domain("no sample records to extract a prediction from"))?;
    Ok(best.test_partition.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(chain: usize, iteration: usize, score: f64, blocks: &[Vec<&str>]) -> SampleRecord {
        SampleRecord {
            chain,
            iteration,
            test_partition: Partition::from_blocks(blocks).unwrap(),
            joint_log_score: score,
            n_publications: blocks.len(),
            n_types: 1,
        }
    }

    #[test]
    fn config_problems_are_exhaustive() {
        let cfg = SamplerConfig {
            iterations: 10,
            burn_in: 10,
            aux_samples: 0,
            candidate_count: 0,
            alpha_p: -1.0,
            ..Default::default()
        };
        assert_eq!(cfg.problems().len(), 4);
        assert!(SamplerConfig::default().validate().is_ok());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("M3".parse::<Variant>().unwrap(), Variant::M3);
        assert!("m4".parse::<Variant>().is_err());
    }

    #[test]
    fn extraction_picks_max_with_tie_break() {
        let a = vec![vec!["x", "y"]];
        let b = vec![vec!["x"], vec!["y"]];
        assert!(extract_prediction(&[]).is_err());
        let single = [record(0, 3, -5.0, &a)];
        assert_eq!(extract_prediction(&single).unwrap(), single[0].test_partition);
        let recs = [record(1, 4, -1.0, &a), record(0, 9, -1.0, &b), record(0, 2, -3.0, &a)];
        assert_eq!(extract_prediction(&recs).unwrap(), Partition::from_blocks(&b).unwrap());
    }
}
