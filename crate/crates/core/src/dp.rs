//! Dirichlet process utilities: the Chinese restaurant process, its
//! cluster-count moments, the Antoniak prior over cluster counts, and
//! auxiliary-variable resampling of the precision parameter.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::partition::Partition;

/// Default number of indicator sweeps in [`sample_precision_multi`].
pub const DEFAULT_GIBBS_ITERS: usize = 200;

/// Gamma prior in shape/scale form (mean `shape * scale`).
///
/// All posterior arithmetic works with the rate `1 / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        let p = GammaPrior { shape, scale };
        p.validate()?;
        Ok(p)
    }

    pub fn from_rate(shape: f64, rate: f64) -> Result<Self> {
        Self::new(shape, 1.0 / rate)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.shape) || !ok(self.scale) {
            return Err(Error::config(format!(
                "gamma prior needs positive finite shape and scale, got ({}, {})",
                self.shape, self.scale
            )));
        }
        Ok(())
    }

    pub fn rate(&self) -> f64 {
        1.0 / self.scale
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }
}

impl Default for GammaPrior {
    fn default() -> Self {
        GammaPrior {
            shape: 1.0,
            scale: 1.0,
        }
    }
}

/// `n` items observed in `k` clusters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationPair {
    pub n: usize,
    pub k: usize,
}

impl ObservationPair {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::domain(format!(
                "observation pair needs 1 <= k <= n, got n={n}, k={k}"
            )));
        }
        Ok(ObservationPair { n, k })
    }
}

/// Expected and observed cluster counts at one sample size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub dp_mean: f64,
    pub dp_std: f64,
    pub empirical_mean: f64,
    pub empirical_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterCountCurve {
    /// Precision estimate the DP curve was computed with.
    pub alpha: f64,
    pub points: Vec<CurvePoint>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::domain(format!("precision must be positive, got {alpha}")));
    }
    Ok(())
}

/// Unnormalized CRP predictive weights: one per existing cluster (its
/// size), then `alpha` for a new cluster.
pub fn crp_predictive_weights(cluster_sizes: &[usize], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if cluster_sizes.contains(&0) {
        return Err(Error::domain("cluster sizes must be positive"));
    }
    let mut w: Vec<f64> = cluster_sizes.iter().map(|&s| s as f64).collect();
    w.push(alpha);
    Ok(w)
}

/// Draws an index with probability proportional to `weights`.
pub(crate) fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // Rounding can leave u marginally above the last cumulative weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Cluster labels of `n` sequential CRP draws.
pub fn crp_sample_labels<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    check_alpha(alpha)?;
    let mut sizes: Vec<usize> = Vec::new();
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let w = crp_predictive_weights(&sizes, alpha)?;
        let j = sample_weighted(&w, rng);
        if j == sizes.len() {
            sizes.push(1);
        } else {
            sizes[j] += 1;
        }
        labels.push(j);
    }
    Ok(labels)
}

/// Zero-padded item ids `i0..i{n-1}` that sort in numeric order.
pub fn numbered_items(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("i{i:0width$}")).collect()
}

/// A partition of `n` items drawn from CRP(alpha).
pub fn crp_sample<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Result<Partition> {
    if n == 0 {
        return Err(Error::domain("crp_sample needs n >= 1"));
    }
    let labels = crp_sample_labels(alpha, n, rng)?;
    Ok(Partition::from_sorted(numbered_items(n).into(), &labels))
}

/// Mean and standard deviation of the number of clusters among `n` CRP draws.
pub fn expected_clusters(alpha: f64, n: usize) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::domain("expected_clusters needs n >= 1"));
    }
    let (mut mean, mut var) = (0.0, 0.0);
    for i in 0..n {
        let i = i as f64;
        // The (i+1)-th draw opens a new cluster with probability alpha/(alpha+i).
        mean += alpha / (alpha + i);
        var += alpha * i / ((alpha + i) * (alpha + i));
    }
    Ok((mean, var.sqrt()))
}

/// `log p(k | alpha, n)` up to the alpha-free constant `log(c_n(k) n!)`.
pub fn antoniak_log_prior(k: usize, alpha: f64, n: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if k == 0 || k > n {
        return Err(Error::domain(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    Ok(k as f64 * alpha.ln() + ln_gamma(alpha) - ln_gamma(alpha + n as f64))
}

fn draw_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let x = Beta::new(a, b).expect("beta parameters positive").sample(rng);
    x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let v = Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters positive")
        .sample(rng);
    v.max(f64::MIN_POSITIVE)
}

/// One auxiliary-variable update of the precision given a single `(n, k)`
/// observation, after West.
pub fn sample_precision_single<R: Rng + ?Sized>(
    alpha_old: f64,
    n: usize,
    k: usize,
    prior: &GammaPrior,
    rng: &mut R,
) -> Result<f64> {
    check_alpha(alpha_old)?;
    prior.validate()?;
    ObservationPair::new(n, k)?;
    let x = draw_beta(alpha_old + 1.0, n as f64, rng);
    let rate = prior.rate() - x.ln();
    let shape = prior.shape + k as f64;
    // pi / (1 - pi) = (a + k - 1) / (n * rate)
    let odds = (shape - 1.0) / (n as f64 * rate);
    let pi = odds / (1.0 + odds);
    let shape = if rng.random::<f64>() < pi { shape } else { shape - 1.0 };
    Ok(draw_gamma(shape, rate, rng))
}

/// Precision update from several independent `(n_m, k_m)` observations.
///
/// Draws one beta auxiliary per pair, then picks a gamma mixture component
/// through a Gibbs chain over the binary indicator vector (the mixture has
/// `2^M` terms), and finally draws the precision from that component.
pub fn sample_precision_multi<R: Rng + ?Sized>(
    alpha_old: f64,
    pairs: &[ObservationPair],
    prior: &GammaPrior,
    gibbs_iters: usize,
    rng: &mut R,
) -> Result<f64> {
    check_alpha(alpha_old)?;
    prior.validate()?;
    if pairs.is_empty() {
        return Err(Error::domain("sample_precision_multi needs at least one pair"));
    }
    for p in pairs {
        ObservationPair::new(p.n, p.k)?;
    }
    if gibbs_iters == 0 {
        return Err(Error::config("gibbs_iters must be at least 1"));
    }
    let m = pairs.len() as f64;
    let sum_k: f64 = pairs.iter().map(|p| p.k as f64).sum();
    // Component shape is base_shape + sum(i).
    let base_shape = prior.shape - m + sum_k;
    if base_shape <= 0.0 {
        return Err(Error::config(format!(
            "gamma shape a - M + sum(k) = {base_shape} is not positive; raise the prior shape"
        )));
    }

    let mut log_x_sum = 0.0;
    for p in pairs {
        log_x_sum += draw_beta(alpha_old + 1.0, p.n as f64, rng).ln();
    }
    let rate = prior.rate() - log_x_sum;

    let mut ind = vec![false; pairs.len()];
    let mut on = 0usize;
    let mut trace = Vec::with_capacity(gibbs_iters);
    for _ in 0..gibbs_iters {
        for (slot, p) in ind.iter_mut().zip(pairs) {
            let others = on - usize::from(*slot);
            let s = base_shape + others as f64;
            let p_on = s / (s + p.n as f64 * rate);
            let new = rng.random::<f64>() < p_on;
            on = others + usize::from(new);
            *slot = new;
        }
        trace.push(on);
    }
    let kept = &trace[gibbs_iters / 2..];
    let chosen = kept[rng.random_range(0..kept.len())];
    Ok(draw_gamma(base_shape + chosen as f64, rate, rng))
}

/// Posterior mean of the precision from a chain of `draws` multi-pair
/// updates after `burn_in` discarded ones, starting at 1.
pub fn estimate_precision<R: Rng + ?Sized>(
    pairs: &[ObservationPair],
    prior: &GammaPrior,
    burn_in: usize,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::config("need at least one draw"));
    }
    let mut alpha = 1.0;
    let mut total = 0.0;
    for it in 0..burn_in + draws {
        alpha = sample_precision_multi(alpha, pairs, prior, DEFAULT_GIBBS_ITERS, rng)?;
        if it >= burn_in {
            total += alpha;
        }
    }
    Ok(total / draws as f64)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// DP-predicted versus resampled cluster counts for each size in `ns`.
///
/// The precision is estimated from the pools' `(n, k)` pairs; the empirical
/// curve subsamples `n` items uniformly from the union of all pools, where
/// classes from different pools are always distinct.
pub fn appropriateness_curve<R: Rng + ?Sized>(
    pools: &[Partition],
    ns: &[usize],
    resamples: usize,
    prior: &GammaPrior,
    rng: &mut R,
) -> Result<ClusterCountCurve> {
    if pools.is_empty() {
        return Err(Error::domain("need at least one labeled pool"));
    }
    if resamples == 0 {
        return Err(Error::domain("resamples must be at least 1"));
    }
    let mut classes: Vec<(usize, usize)> = Vec::new();
    let mut pairs = Vec::with_capacity(pools.len());
    for (pi, pool) in pools.iter().enumerate() {
        pairs.push(ObservationPair::new(pool.len(), pool.n_clusters())?);
        classes.extend(pool.labels().iter().map(|&l| (pi, l)));
    }
    let total = classes.len();
    if let Some(&bad) = ns.iter().find(|&&n| n == 0 || n > total) {
        return Err(Error::domain(format!(
            "sample size {bad} outside 1..={total} pooled items"
        )));
    }

    let alpha = estimate_precision(&pairs, prior, 200, 1000, rng)?;

    let mut points = Vec::with_capacity(ns.len());
    for &n in ns {
        let (dp_mean, dp_std) = expected_clusters(alpha, n)?;
        let counts: Vec<f64> = (0..resamples)
            .map(|_| {
                let distinct: HashSet<(usize, usize)> = index::sample(rng, total, n)
                    .iter()
                    .map(|i| classes[i])
                    .collect();
                distinct.len() as f64
            })
            .collect();
        let (empirical_mean, empirical_std) = mean_std(&counts);
        points.push(CurvePoint {
            n,
            dp_mean,
            dp_std,
            empirical_mean,
            empirical_std,
        });
    }
    Ok(ClusterCountCurve { alpha, points })
}
