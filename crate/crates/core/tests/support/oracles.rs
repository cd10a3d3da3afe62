//! Brute-force reference implementations shared by the integration tests.
//! Nothing here reuses library internals beyond the `Partition` container.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::f64::consts::PI;

use dpsc_core::Partition;
use statrs::function::gamma::ln_gamma;

/// Every set partition of `items`, via restricted growth strings.
pub fn all_partitions(items: &[String]) -> Vec<Partition> {
    let n = items.len();
    let mut out = Vec::new();
    let mut rgs = vec![0usize; n];
    fn rec(i: usize, max: usize, rgs: &mut Vec<usize>, items: &[String], out: &mut Vec<Partition>) {
        if i == rgs.len() {
            let pairs = items.iter().cloned().zip(rgs.iter().copied());
            out.push(Partition::from_assignments(pairs).unwrap());
            return;
        }
        for l in 0..=max + 1 {
            if i == 0 && l > 0 {
                break;
            }
            rgs[i] = l;
            rec(i + 1, max.max(l), rgs, items, out);
        }
    }
    if n == 0 {
        return out;
    }
    rec(0, 0, &mut rgs, items, &mut out);
    out
}

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
}

/// (n11, n00, n10, n01) by looking at every unordered pair.
pub fn pair_oracle(gold: &Partition, hyp: &Partition) -> (u64, u64, u64, u64) {
    let items = gold.items();
    let (mut n11, mut n00, mut n10, mut n01) = (0, 0, 0, 0);
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let g = gold.cluster_of(&items[i]) == gold.cluster_of(&items[j]);
            let h = hyp.cluster_of(&items[i]) == hyp.cluster_of(&items[j]);
            match (g, h) {
                (true, true) => n11 += 1,
                (false, false) => n00 += 1,
                (true, false) => n10 += 1,
                (false, true) => n01 += 1,
            }
        }
    }
    (n11, n00, n10, n01)
}

pub fn rand_oracle(gold: &Partition, hyp: &Partition) -> f64 {
    let (n11, n00, n10, n01) = pair_oracle(gold, hyp);
    (n11 + n00) as f64 / (n11 + n00 + n10 + n01) as f64
}

pub fn prf_oracle(gold: &Partition, hyp: &Partition) -> (f64, f64, f64) {
    let (n11, _, n10, n01) = pair_oracle(gold, hyp);
    let p = if n11 + n01 == 0 { 1.0 } else { n11 as f64 / (n11 + n01) as f64 };
    let r = if n11 + n10 == 0 { 1.0 } else { n11 as f64 / (n11 + n10) as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn canon(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Fewest moves (one element to any cluster, possibly new) and merges (two
/// clusters into one) turning `hyp` into `gold`, by breadth-first search.
pub fn ced_bfs(gold: &Partition, hyp: &Partition) -> usize {
    let target = canon(gold.labels());
    let start = canon(hyp.labels());
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back((start, 0usize));
    while let Some((state, dist)) = queue.pop_front() {
        if state == target {
            return dist;
        }
        let k = state.iter().max().map_or(0, |m| m + 1);
        let mut next = Vec::new();
        for i in 0..state.len() {
            for to in 0..=k {
                if to != state[i] {
                    let mut s = state.clone();
                    s[i] = to;
                    next.push(canon(&s));
                }
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                let s: Vec<usize> = state.iter().map(|&l| if l == b { a } else { l }).collect();
                next.push(canon(&s));
            }
        }
        for s in next {
            if seen.insert(s.clone()) {
                queue.push_back((s, dist + 1));
            }
        }
    }
    unreachable!("every partition reaches every other")
}

/// VI and NVI from explicitly tabulated joint and marginal proportions.
pub fn vi_oracle(gold: &Partition, hyp: &Partition) -> (f64, f64) {
    let items = gold.items();
    let n = items.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pg: BTreeMap<usize, f64> = BTreeMap::new();
    let mut ph: BTreeMap<usize, f64> = BTreeMap::new();
    for it in items {
        let g = gold.cluster_of(it).unwrap();
        let h = hyp.cluster_of(it).unwrap();
        *joint.entry((g, h)).or_default() += 1.0 / n;
        *pg.entry(g).or_default() += 1.0 / n;
        *ph.entry(h).or_default() += 1.0 / n;
    }
    let entropy = |m: &BTreeMap<usize, f64>| -m.values().map(|p| p * p.ln()).sum::<f64>();
    let mi: f64 = joint
        .iter()
        .map(|(&(g, h), &p)| p * (p / (pg[&g] * ph[&h])).ln())
        .sum();
    let vi = entropy(&pg) + entropy(&ph) - 2.0 * mi;
    (vi, 1.0 - vi / n.ln())
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Integral over `(0, inf)` via `x = u^2`, truncated at `x = upper`.
pub fn integrate_positive(f: impl Fn(f64) -> f64, upper: f64, n: usize) -> f64 {
    simpson(|u| if u == 0.0 { 0.0 } else { 2.0 * u * f(u * u) }, 0.0, upper.sqrt(), n)
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

pub fn gamma_pdf_rate(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x).exp()
}

/// `int N(p; mu0, var0) prod_i N(x_i; p, 1/prec) dp` by quadrature.
pub fn block_marginal(xs: &[f64], mu0: f64, var0: f64, prec: f64) -> f64 {
    let sd = var0.sqrt();
    simpson(
        |p| normal_pdf(p, mu0, var0) * xs.iter().map(|&x| normal_pdf(x, p, 1.0 / prec)).product::<f64>(),
        mu0 - 12.0 * sd - 10.0,
        mu0 + 12.0 * sd + 10.0,
        20_000,
    )
}

/// CRP probability of a partition built by seating items one at a time.
pub fn crp_sequential(p: &Partition, alpha: f64) -> f64 {
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    let mut prob = 1.0;
    for (i, &l) in p.labels().iter().enumerate() {
        let s = sizes.entry(l).or_default();
        prob *= if *s == 0 { alpha } else { *s as f64 } / (alpha + i as f64);
        *s += 1;
    }
    prob
}

/// Posterior over every partition of 1-D points under a CRP(`alpha`) prior,
/// publication prior `N(0, var0)` and unit observation precision.
pub fn enumeration_posterior(ids: &[String], xs: &[f64], alpha: f64, var0: f64) -> Vec<(Partition, f64)> {
    let parts = all_partitions(ids);
    let mut weighted: Vec<(Partition, f64)> = parts
        .into_iter()
        .map(|p| {
            let mut w = crp_sequential(&p, alpha);
            for block in p.clusters() {
                let bx: Vec<f64> = block.iter().map(|&i| xs[i]).collect();
                w *= block_marginal(&bx, 0.0, var0, 1.0);
            }
            (p, w)
        })
        .collect();
    let total: f64 = weighted.iter().map(|(_, w)| w).sum();
    for (_, w) in &mut weighted {
        *w /= total;
    }
    weighted
}

/// Posterior mean of a DP precision given `(n, k)` pairs and a
/// Gamma(shape, rate) prior, by quadrature of the Antoniak likelihood
/// `alpha^k Gamma(alpha) / Gamma(alpha + n)`.
pub fn alpha_posterior_mean(pairs: &[(usize, usize)], shape: f64, rate: f64) -> f64 {
    let log_post = |a: f64| {
        let mut lp = (shape - 1.0) * a.ln() - rate * a;
        for &(n, k) in pairs {
            lp += k as f64 * a.ln() + ln_gamma(a) - ln_gamma(a + n as f64);
        }
        lp
    };
    let upper = 200.0;
    let grid = 40_000;
    let peak = (1..=grid)
        .map(|i| log_post(upper * i as f64 / grid as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    let dens = |a: f64| if a <= 0.0 { 0.0 } else { (log_post(a) - peak).exp() };
    let z = integrate_positive(dens, upper, grid);
    let m = integrate_positive(|a| a * dens(a), upper, grid);
    m / z
}

/// Total variation distance between two distributions over partitions.
pub fn total_variation(p: &[(Partition, f64)], q: &BTreeMap<Vec<usize>, f64>) -> f64 {
    let mut keys: HashSet<Vec<usize>> = q.keys().cloned().collect();
    keys.extend(p.iter().map(|(x, _)| x.labels().to_vec()));
    keys.iter()
        .map(|k| {
            let a = p.iter().find(|(x, _)| x.labels() == k.as_slice()).map_or(0.0, |x| x.1);
            let b = q.get(k).copied().unwrap_or(0.0);
            (a - b).abs()
        })
        .sum::<f64>()
        * 0.5
}
