//! Reference clusterings: everything together, everything apart, k-means
//! with an oracle `k`, and the unsupervised DP preset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::sampler::{SamplerConfig, Variant};

/// All items in a single cluster.
pub fn coarse<S: AsRef<str>>(items: &[S]) -> Result<Partition> {
    if items.is_empty() {
        return Err(Error::domain("coarse baseline needs at least one item"));
    }
    Partition::from_blocks(&[items.iter().map(|s| s.as_ref().to_string()).collect::<Vec<_>>()])
}

/// Every item in its own cluster.
pub fn fine<S: AsRef<str>>(items: &[S]) -> Result<Partition> {
    if items.is_empty() {
        return Err(Error::domain("fine baseline needs at least one item"));
    }
    let blocks: Vec<Vec<String>> = items.iter().map(|s| vec![s.as_ref().to_string()]).collect();
    Partition::from_blocks(&blocks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            restarts: 10,
            max_iters: 300,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub partition: Partition,
    pub wcss: f64,
    pub centroids: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Farthest-point seeding: a random first centre, then repeatedly the
/// point farthest from every chosen centre (lowest index on ties).
fn seed_centroids<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let next = d2
            .iter()
            .enumerate()
            .fold(0, |best, (i, &d)| if d > d2[best] { i } else { best });
        centroids.push(points[next].clone());
        for (d, x) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(x, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iters: usize) -> (Vec<usize>, Vec<Vec<f64>>, f64) {
    let dim = points[0].len();
    let k = centroids.len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..max_iters {
        let mut changed = false;
        for (a, x) in assign.iter_mut().zip(points) {
            let (j, _) = nearest(x, &centroids);
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (&a, x) in assign.iter().zip(points) {
            counts[a] += 1;
            for f in 0..dim {
                sums[a][f] += x[f];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // Reseed each empty cluster with the point farthest from its centre,
        // taken from a cluster that can spare it.
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..points.len())
                .filter(|&i| counts[assign[i]] > 1)
                .max_by(|&a, &b| {
                    sq_dist(&points[a], &centroids[assign[a]]).total_cmp(&sq_dist(&points[b], &centroids[assign[b]]))
                });
            if let Some(i) = far {
                counts[assign[i]] -= 1;
                assign[i] = j;
                counts[j] = 1;
                centroids[j] = points[i].clone();
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let wcss = assign
        .iter()
        .zip(points)
        .map(|(&a, x)| sq_dist(x, &centroids[a]))
        .sum();
    (assign, centroids, wcss)
}

/// Lloyd's algorithm from farthest-point starts; the restart with the smallest
/// within-cluster sum of squares wins.
pub fn kmeans<S: AsRef<str>>(ids: &[S], points: &[Vec<f64>], config: &KMeansConfig) -> Result<KMeansResult> {
    if ids.len() != points.len() {
        return Err(Error::domain("one id per point required"));
    }
    if config.k == 0 || config.restarts == 0 {
        return Err(Error::config("k-means needs k >= 1 and restarts >= 1"));
    }
    if config.k > points.len() {
        return Err(Error::domain(format!(
            "k = {} exceeds the number of points ({})",
            config.k,
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::domain("points must share a dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(Vec<usize>, Vec<Vec<f64>>, f64)> = None;
    for _ in 0..config.restarts {
        let start = seed_centroids(points, config.k, &mut rng);
        let run = lloyd(points, start, config.max_iters.max(1));
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (assign, centroids, wcss) = best.expect("at least one restart");
    let partition = Partition::from_assignments(
        ids.iter()
            .zip(&assign)
            .map(|(id, &a)| (id.as_ref().to_string(), a)),
    )?;
    Ok(KMeansResult {
        partition,
        wcss,
        centroids,
    })
}

/// The unsupervised DP baseline: Model 1 with a fixed precision of 1, one
/// frozen identity type and training labels ignored.
pub fn cdp_preset() -> SamplerConfig {
    SamplerConfig {
        variant: Variant::M1,
        alpha_p: 1.0,
        resample_alphas: false,
        freeze_types: true,
        use_training_labels: false,
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_baselines() {
        let ids = ["a", "b", "c"];
        assert_eq!(coarse(&ids).unwrap().n_clusters(), 1);
        assert_eq!(fine(&ids).unwrap().n_clusters(), 3);
        assert!(coarse::<&str>(&[]).is_err());
        assert!(fine::<&str>(&[]).is_err());
    }

    #[test]
    fn kmeans_exact_fit_and_single_centroid() {
        let ids = ["a", "b", "c", "d"];
        let pts = vec![vec![0.0], vec![1.0], vec![5.0], vec![9.0]];
        let r = kmeans(&ids, &pts, &KMeansConfig::new(4, 1)).unwrap();
        assert_eq!(r.partition.n_clusters(), 4);
        assert_eq!(r.wcss, 0.0);
        let r = kmeans(&ids, &pts, &KMeansConfig::new(1, 1)).unwrap();
        assert_eq!(r.partition.n_clusters(), 1);
        let mean = 15.0 / 4.0;
        let tss: f64 = pts.iter().map(|p| (p[0] - mean).powi(2)).sum();
        assert!((r.wcss - tss).abs() < 1e-12);
        assert!(kmeans(&ids, &pts, &KMeansConfig::new(5, 1)).is_err());
    }

    #[test]
    fn kmeans_splits_separated_blobs() {
        let ids: Vec<String> = (0..10).map(|i| format!("p{i}")).collect();
        let pts: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![if i < 5 { i as f64 * 0.1 } else { 100.0 + i as f64 * 0.1 }])
            .collect();
        let r = kmeans(&ids, &pts, &KMeansConfig::new(2, 3)).unwrap();
        let blocks: Vec<Vec<String>> = vec![ids[..5].to_vec(), ids[5..].to_vec()];
        assert_eq!(r.partition, Partition::from_blocks(&blocks).unwrap());
    }

    #[test]
    fn preset_freezes_everything() {
        let c = cdp_preset();
        assert!(c.freeze_types && !c.resample_alphas && !c.use_training_labels);
        assert_eq!(c.alpha_p, 1.0);
        assert_eq!(c.variant, Variant::M1);
    }
}
