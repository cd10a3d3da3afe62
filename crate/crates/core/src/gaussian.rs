//! Diagonal-Gaussian observation model.
//!
//! An item `r` is drawn from a Normal whose mean is its publication `p` and
//! whose diagonal precision is its reference type `t`. Publications have an
//! isotropic Normal base measure; type precisions have independent Gamma
//! base measures per dimension. Both are conjugate, so new-cluster
//! marginals and posterior draws are closed form.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// A cluster mean in feature space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Publication {
    pub mean: Vec<f64>,
}

/// Per-dimension precisions shared by all items of one reference type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceType {
    pub precision: Vec<f64>,
}

impl Publication {
    pub fn new(mean: Vec<f64>) -> Self {
        Publication { mean }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

impl ReferenceType {
    pub fn new(precision: Vec<f64>) -> Result<Self> {
        if precision.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::domain("reference type precisions must be positive and finite"));
        }
        Ok(ReferenceType { precision })
    }

    pub fn identity(dim: usize) -> Self {
        ReferenceType {
            precision: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.precision.len()
    }
}

/// Normal base measure over publications: mean `prior_mean`, covariance
/// `variance * I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublicationBase {
    pub prior_mean: Vec<f64>,
    pub variance: f64,
}

impl PublicationBase {
    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::config(format!("publication prior variance must be positive, got {variance}")));
        }
        Ok(PublicationBase {
            prior_mean: vec![0.0; dim],
            variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Publication {
        let sd = self.variance.sqrt();
        Publication {
            mean: self
                .prior_mean
                .iter()
                .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }

    pub fn log_density(&self, p: &Publication) -> f64 {
        let inv = 1.0 / self.variance;
        self.prior_mean
            .iter()
            .zip(&p.mean)
            .map(|(m, x)| 0.5 * (inv.ln() - LN_2PI) - 0.5 * inv * (x - m).powi(2))
            .sum()
    }
}

/// Independent Gamma(shape, scale) base measures over type precisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeBase {
    pub shape: Vec<f64>,
    pub scale: Vec<f64>,
}

impl TypeBase {
    pub fn uniform(dim: usize, shape: f64, scale: f64) -> Result<Self> {
        let tb = TypeBase {
            shape: vec![shape; dim],
            scale: vec![scale; dim],
        };
        tb.validate()?;
        Ok(tb)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: &f64| v.is_finite() && *v > 0.0;
        if self.shape.len() != self.scale.len() || !self.shape.iter().all(ok) || !self.scale.iter().all(ok) {
            return Err(Error::config("type base needs positive shape and scale in every dimension"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Prior mean precision per dimension.
    pub fn mean(&self) -> Vec<f64> {
        self.shape.iter().zip(&self.scale).map(|(a, b)| a * b).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ReferenceType {
        ReferenceType {
            precision: self
                .shape
                .iter()
                .zip(&self.scale)
                .map(|(&a, &b)| draw_gamma(a, 1.0 / b, rng))
                .collect(),
        }
    }

    pub fn log_density(&self, t: &ReferenceType) -> f64 {
        self.shape
            .iter()
            .zip(&self.scale)
            .zip(&t.precision)
            .map(|((&a, &b), &x)| {
                let rate = 1.0 / b;
                a * rate.ln() - ln_gamma(a) + (a - 1.0) * x.ln() - rate * x
            })
            .sum()
    }
}

/// Rate of the exponential density on weighted squared distances between
/// publications under the conditional type prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPriorConfig {
    pub rate: f64,
}

impl Default for ConditionalPriorConfig {
    fn default() -> Self {
        ConditionalPriorConfig { rate: 1.0 }
    }
}

pub(crate) fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters positive")
        .sample(rng)
        .max(f64::MIN_POSITIVE)
}

fn check_dims(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::domain(format!("{what}: dimension mismatch ({a} vs {b})")));
    }
    Ok(())
}

/// Unchecked diagonal-Normal log density; slices must share a length.
#[inline]
pub(crate) fn loglik(r: &[f64], mean: &[f64], precision: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&x, &m), &t) in r.iter().zip(mean).zip(precision) {
        let d = x - m;
        acc += 0.5 * (t.ln() - LN_2PI) - 0.5 * t * d * d;
    }
    acc
}

/// `log F(r | p, t)`.
pub fn data_loglik(r: &[f64], p: &Publication, t: &ReferenceType) -> Result<f64> {
    check_dims("data_loglik", r.len(), p.dim())?;
    check_dims("data_loglik", r.len(), t.dim())?;
    Ok(loglik(r, &p.mean, &t.precision))
}

#[inline]
pub(crate) fn new_publication_loglik(r: &[f64], precision: &[f64], base: &PublicationBase) -> f64 {
    let mut acc = 0.0;
    for ((&x, &t), &m) in r.iter().zip(precision).zip(&base.prior_mean) {
        let var = base.variance + 1.0 / t;
        acc += -0.5 * (LN_2PI + var.ln()) - 0.5 * (x - m).powi(2) / var;
    }
    acc
}

/// Log marginal of `r` under a fresh publication drawn from `base`.
pub fn marginal_loglik_new_publication(r: &[f64], t: &ReferenceType, base: &PublicationBase) -> Result<f64> {
    check_dims("marginal_loglik_new_publication", r.len(), t.dim())?;
    check_dims("marginal_loglik_new_publication", r.len(), base.dim())?;
    Ok(new_publication_loglik(r, &t.precision, base))
}

#[inline]
pub(crate) fn new_type_loglik(r: &[f64], mean: &[f64], base: &TypeBase) -> f64 {
    let mut acc = 0.0;
    for (((&x, &m), &a), &b) in r.iter().zip(mean).zip(&base.shape).zip(&base.scale) {
        let rate = 1.0 / b;
        let half_sq = 0.5 * (x - m).powi(2);
        acc += ln_gamma(a + 0.5) - ln_gamma(a) + a * rate.ln() - 0.5 * LN_2PI - (a + 0.5) * (rate + half_sq).ln();
    }
    acc
}

/// Log marginal of `r` under a fresh reference type drawn from `base`
/// (a Student-t per dimension).
pub fn marginal_loglik_new_type(r: &[f64], p: &Publication, base: &TypeBase) -> Result<f64> {
    check_dims("marginal_loglik_new_type", r.len(), p.dim())?;
    check_dims("marginal_loglik_new_type", r.len(), base.dim())?;
    Ok(new_type_loglik(r, &p.mean, base))
}

/// Per-dimension Normal posterior of a publication.
#[derive(Clone, Debug, PartialEq)]
pub struct PublicationPosterior {
    pub mean: Vec<f64>,
    pub precision: Vec<f64>,
}

/// Accumulates `sum t_f` and `sum t_f r_f` for a publication's members.
#[derive(Clone, Debug)]
pub(crate) struct PublicationStats {
    pub prec_sum: Vec<f64>,
    pub weighted_sum: Vec<f64>,
}

impl PublicationStats {
    pub fn new(dim: usize) -> Self {
        PublicationStats {
            prec_sum: vec![0.0; dim],
            weighted_sum: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, r: &[f64], precision: &[f64]) {
        for f in 0..r.len() {
            self.prec_sum[f] += precision[f];
            self.weighted_sum[f] += precision[f] * r[f];
        }
    }

    pub fn posterior(&self, base: &PublicationBase) -> PublicationPosterior {
        let inv = 1.0 / base.variance;
        let precision: Vec<f64> = self.prec_sum.iter().map(|s| inv + s).collect();
        let mean = base
            .prior_mean
            .iter()
            .zip(&self.weighted_sum)
            .zip(&precision)
            .map(|((m, w), p)| (m * inv + w) / p)
            .collect();
        PublicationPosterior { mean, precision }
    }
}

impl PublicationPosterior {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Publication {
        Publication {
            mean: self
                .mean
                .iter()
                .zip(&self.precision)
                .map(|(m, p)| m + rng.sample::<f64, _>(StandardNormal) / p.sqrt())
                .collect(),
        }
    }
}

/// Conjugate posterior of a publication given observations and the
/// precisions of the types that generated them.
pub fn publication_posterior(
    targets: &[(&[f64], &ReferenceType)],
    base: &PublicationBase,
) -> Result<PublicationPosterior> {
    let mut stats = PublicationStats::new(base.dim());
    for (r, t) in targets {
        check_dims("publication_posterior", r.len(), base.dim())?;
        check_dims("publication_posterior", t.dim(), base.dim())?;
        stats.add(r, &t.precision);
    }
    Ok(stats.posterior(base))
}

/// Exact draw from the publication posterior (the base itself when empty).
pub fn posterior_sample_publication<R: Rng + ?Sized>(
    targets: &[(&[f64], &ReferenceType)],
    base: &PublicationBase,
    rng: &mut R,
) -> Result<Publication> {
    Ok(publication_posterior(targets, base)?.sample(rng))
}

/// Per-dimension Gamma posterior (shape, rate) of a reference type.
#[derive(Clone, Debug, PartialEq)]
pub struct TypePosterior {
    pub shape: Vec<f64>,
    pub rate: Vec<f64>,
}

impl TypePosterior {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ReferenceType {
        ReferenceType {
            precision: self
                .shape
                .iter()
                .zip(&self.rate)
                .map(|(&a, &r)| draw_gamma(a, r, rng))
                .collect(),
        }
    }
}

/// Accumulates member counts and squared residuals for a type.
#[derive(Clone, Debug)]
pub(crate) struct TypeStats {
    pub count: usize,
    pub sq_sum: Vec<f64>,
}

impl TypeStats {
    pub fn new(dim: usize) -> Self {
        TypeStats {
            count: 0,
            sq_sum: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, r: &[f64], mean: &[f64]) {
        self.count += 1;
        for f in 0..r.len() {
            self.sq_sum[f] += (r[f] - mean[f]).powi(2);
        }
    }

    pub fn posterior(&self, base: &TypeBase) -> TypePosterior {
        let half_n = 0.5 * self.count as f64;
        TypePosterior {
            shape: base.shape.iter().map(|a| a + half_n).collect(),
            rate: base
                .scale
                .iter()
                .zip(&self.sq_sum)
                .map(|(b, s)| 1.0 / b + 0.5 * s)
                .collect(),
        }
    }
}

pub fn type_posterior(residuals: &[(&[f64], &Publication)], base: &TypeBase) -> Result<TypePosterior> {
    let mut stats = TypeStats::new(base.dim());
    for (r, p) in residuals {
        check_dims("type_posterior", r.len(), base.dim())?;
        check_dims("type_posterior", p.dim(), base.dim())?;
        stats.add(r, &p.mean);
    }
    Ok(stats.posterior(base))
}

/// Exact draw from the type posterior (the base itself when empty).
pub fn posterior_sample_type<R: Rng + ?Sized>(
    residuals: &[(&[f64], &Publication)],
    base: &TypeBase,
    rng: &mut R,
) -> Result<ReferenceType> {
    Ok(type_posterior(residuals, base)?.sample(rng))
}

pub(crate) const ADAPT_MIN_VARIANCE: f64 = 1e-8;
pub(crate) const ADAPT_MIN_SCALE: f64 = 1e-3;

/// Adaptive type base: per dimension, the Gamma prior whose mean is half the
/// average within-cluster variance and whose variance is the variance of
/// those within-cluster variances.
///
/// Within-cluster variance is measured around the cluster's current mean
/// and only clusters with at least two members count. With fewer than two
/// such clusters the base falls back to Gamma(1, 1).
pub fn adapt_type_base(
    data: &[Vec<f64>],
    assignments: &[usize],
    publications: &[Publication],
) -> Result<TypeBase> {
    if data.len() != assignments.len() {
        return Err(Error::domain("one assignment per data row required"));
    }
    let dim = publications
        .first()
        .map(Publication::dim)
        .or_else(|| data.first().map(Vec::len))
        .unwrap_or(0);
    let mut counts = vec![0usize; publications.len()];
    let mut sq = vec![vec![0.0; dim]; publications.len()];
    for (r, &c) in data.iter().zip(assignments) {
        let p = publications
            .get(c)
            .ok_or_else(|| Error::domain(format!("assignment {c} has no publication")))?;
        check_dims("adapt_type_base", r.len(), dim)?;
        counts[c] += 1;
        for f in 0..dim {
            sq[c][f] += (r[f] - p.mean[f]).powi(2);
        }
    }
    let usable: Vec<usize> = (0..publications.len()).filter(|&c| counts[c] >= 2).collect();
    if usable.len() < 2 {
        return TypeBase::uniform(dim, 1.0, 1.0);
    }
    let m = usable.len() as f64;
    let mut shape = Vec::with_capacity(dim);
    let mut scale = Vec::with_capacity(dim);
    for f in 0..dim {
        let vs: Vec<f64> = usable
            .iter()
            .map(|&c| (sq[c][f] / counts[c] as f64).max(ADAPT_MIN_VARIANCE))
            .collect();
        let mean = vs.iter().sum::<f64>() / m;
        let var = vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        let (a, b) = if var < ADAPT_MIN_VARIANCE {
            (0.5 * mean / ADAPT_MIN_SCALE, ADAPT_MIN_SCALE)
        } else {
            (mean * mean / (4.0 * var), 2.0 * var / mean)
        };
        shape.push(a);
        scale.push(b);
    }
    let tb = TypeBase { shape, scale };
    tb.validate()?;
    Ok(tb)
}

/// `sum_f t_f (x_f - y_f)^2`.
pub fn weighted_sq_distance(x: &[f64], y: &[f64], t: &ReferenceType) -> Result<f64> {
    check_dims("weighted_sq_distance", x.len(), y.len())?;
    check_dims("weighted_sq_distance", x.len(), t.dim())?;
    Ok(x.iter()
        .zip(y)
        .zip(&t.precision)
        .map(|((a, b), w)| w * (a - b).powi(2))
        .sum())
}

/// A publication together with the size and id that fix its rank in the
/// conditional type prior.
#[derive(Clone, Copy, Debug)]
pub struct RankedPublication<'a> {
    pub publication: &'a Publication,
    pub size: usize,
    pub id: u64,
}

/// Sorts by descending class size, then ascending id.
pub fn rank_publications(pubs: &mut [RankedPublication<'_>]) {
    pubs.sort_by(|a, b| b.size.cmp(&a.size).then(a.id.cmp(&b.id)));
}

/// Log prior of a type conditioned on the ranked publications.
///
/// `log G_t(t) + sum_j [(2(j-1) - J) log G_p(p_j) + sum_{k<j} log(lambda exp(-lambda |p_j - p_k|_t^2))]`
pub fn conditional_type_logprior(
    t: &ReferenceType,
    publications: &[RankedPublication<'_>],
    base_t: &TypeBase,
    base_p: &PublicationBase,
    cfg: &ConditionalPriorConfig,
) -> Result<f64> {
    check_dims("conditional_type_logprior", t.dim(), base_t.dim())?;
    if publications
        .windows(2)
        .any(|w| (w[1].size, std::cmp::Reverse(w[1].id)) > (w[0].size, std::cmp::Reverse(w[0].id)))
    {
        return Err(Error::domain(
            "publications must be ordered by descending size, ties by ascending id",
        ));
    }
    let big_j = publications.len() as f64;
    let log_rate = cfg.rate.ln();
    let mut total = base_t.log_density(t);
    for (j, pj) in publications.iter().enumerate() {
        check_dims("conditional_type_logprior", pj.publication.dim(), t.dim())?;
        total += (2.0 * j as f64 - big_j) * base_p.log_density(pj.publication);
        for pk in &publications[..j] {
            let d = weighted_sq_distance(&pj.publication.mean, &pk.publication.mean, t)?;
            total += log_rate - cfg.rate * d;
        }
    }
    Ok(total)
}

/// Univariate Normal log density.
pub fn normal_logpdf(x: f64, mean: f64, variance: f64) -> f64 {
    -0.5 * (2.0 * PI * variance).ln() - 0.5 * (x - mean).powi(2) / variance
}
