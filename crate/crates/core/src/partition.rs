//! Hard partitions of a finite item set.
//!
//! A [`Partition`] is stored in canonical form: items sorted ascending and
//! clusters numbered in order of their smallest member. Two partitions that
//! differ only by cluster relabeling are therefore equal under `==`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    items: Arc<[String]>,
    labels: Vec<usize>,
    n_clusters: usize,
}

impl Partition {
    /// Builds a partition from `(item, cluster)` pairs. Cluster ids are opaque.
    pub fn from_assignments<I, S, C>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, C)>,
        S: Into<String>,
        C: Hash + Eq,
    {
        let mut by_item: BTreeMap<String, C> = BTreeMap::new();
        for (item, cluster) in pairs {
            let item = item.into();
            if by_item.contains_key(&item) {
                return Err(Error::domain(format!("item `{item}` assigned twice")));
            }
            by_item.insert(item, cluster);
        }
        let (items, clusters): (Vec<String>, Vec<C>) = by_item.into_iter().unzip();
        Ok(Self::from_sorted(items.into(), &clusters))
    }

    /// Builds a partition from explicit blocks of item ids.
    pub fn from_blocks<S: AsRef<str>>(blocks: &[Vec<S>]) -> Result<Self> {
        let mut pairs = Vec::new();
        for (k, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::domain("empty cluster"));
            }
            pairs.extend(block.iter().map(|s| (s.as_ref().to_string(), k)));
        }
        Self::from_assignments(pairs)
    }

    /// Builds a partition over `items`, which must be sorted and unique, with
    /// `labels[i]` the (opaque) cluster of `items[i]`.
    pub fn from_sorted<C: Hash + Eq>(items: Arc<[String]>, labels: &[C]) -> Self {
        assert_eq!(items.len(), labels.len(), "one label per item");
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]), "items sorted and unique");
        let mut remap: HashMap<&C, usize> = HashMap::new();
        let canonical: Vec<usize> = labels
            .iter()
            .map(|c| {
                let next = remap.len();
                *remap.entry(c).or_insert(next)
            })
            .collect();
        Partition {
            items,
            labels: canonical,
            n_clusters: remap.len(),
        }
    }

    /// Single cluster over `items`.
    pub fn coarse<S: AsRef<str>>(items: &[S]) -> Result<Self> {
        Self::from_assignments(items.iter().map(|s| (s.as_ref().to_string(), 0usize)))
    }

    /// One singleton cluster per item.
    pub fn fine<S: AsRef<str>>(items: &[S]) -> Result<Self> {
        Self::from_assignments(
            items
                .iter()
                .enumerate()
                .map(|(i, s)| (s.as_ref().to_string(), i)),
        )
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// Sorted item ids.
    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// Canonical cluster index of each item, aligned with [`Partition::items`].
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn cluster_of(&self, item: &str) -> Option<usize> {
        self.items
            .binary_search_by(|probe| probe.as_str().cmp(item))
            .ok()
            .map(|i| self.labels[i])
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Item indices of each cluster, in canonical cluster order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Checks that `other` covers exactly the same items, naming any
    /// missing or extra ids on failure.
    pub fn check_same_items(&self, other: &Partition) -> Result<()> {
        if Arc::ptr_eq(&self.items, &other.items) || self.items == other.items {
            return Ok(());
        }
        let missing: Vec<&str> = self
            .items
            .iter()
            .filter(|i| other.cluster_of(i).is_none())
            .map(String::as_str)
            .collect();
        let extra: Vec<&str> = other
            .items
            .iter()
            .filter(|i| self.cluster_of(i).is_none())
            .map(String::as_str)
            .collect();
        Err(Error::domain(format!(
            "item sets differ: missing from hypothesis [{}], extra in hypothesis [{}]",
            missing.join(", "),
            extra.join(", ")
        )))
    }

    /// Restricts the partition to the given items.
    pub fn restrict<S: AsRef<str>>(&self, items: &[S]) -> Result<Self> {
        let mut pairs = Vec::with_capacity(items.len());
        for item in items {
            let item = item.as_ref();
            let label = self
                .cluster_of(item)
                .ok_or_else(|| Error::domain(format!("unknown item `{item}`")))?;
            pairs.push((item.to_string(), label));
        }
        Self::from_assignments(pairs)
    }

    /// Tab-separated `item<TAB>cluster` lines, one per item, in item order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (item, label) in self.items.iter().zip(&self.labels) {
            let _ = writeln!(out, "{item}\tc{label}");
        }
        out
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_tsv().as_bytes())?;
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (item, cluster) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(line_no, "expected `item<TAB>cluster`"))?;
            if item.is_empty() {
                return Err(Error::parse(line_no, "empty item id"));
            }
            if cluster.is_empty() {
                return Err(Error::parse(line_no, format!("item `{item}` has no cluster label")));
            }
            pairs.push((item.to_string(), cluster.to_string()));
        }
        if pairs.is_empty() {
            return Err(Error::parse(0, "partition file is empty"));
        }
        Self::from_assignments(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_tsv(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }
}
