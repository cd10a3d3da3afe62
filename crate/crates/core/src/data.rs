//! Datasets: file formats, standardization, synthetic generation and the
//! distance-only mean identity.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::partition::Partition;

/// Standard deviations below this are clamped during standardization.
pub const MIN_STD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::domain(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub split: Split,
    #[serde(default)]
    pub label: Option<String>,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    items: Vec<Item>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::domain(format!("unknown dataset format `{other}`"))),
        }
    }
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

impl Dataset {
    /// Validates and wraps `items`. An empty label string counts as missing.
    pub fn new(mut items: Vec<Item>) -> Result<Self> {
        let dim = items.first().map_or(0, |i| i.features.len());
        let mut seen = HashSet::new();
        for (row, item) in items.iter_mut().enumerate() {
            if item.label.as_deref() == Some("") {
                item.label = None;
            }
            if item.id.is_empty() {
                return Err(Error::domain(format!("row {}: empty item id", row + 1)));
            }
            if !seen.insert(item.id.clone()) {
                return Err(Error::domain(format!("duplicate item id `{}`", item.id)));
            }
            if item.features.len() != dim {
                return Err(Error::domain(format!(
                    "item `{}` has {} features, expected {dim}",
                    item.id,
                    item.features.len()
                )));
            }
            if item.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("item `{}` has a non-finite feature", item.id)));
            }
            if item.split == Split::Train && item.label.is_none() {
                return Err(Error::domain(format!("training item `{}` has no label", item.id)));
            }
        }
        Ok(Dataset { dim, items })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(move |i| i.split == split)
    }

    /// Copy with every item moved to the test split.
    pub fn all_as_test(&self) -> Dataset {
        let items = self
            .items
            .iter()
            .cloned()
            .map(|mut i| {
                i.split = Split::Test;
                i
            })
            .collect();
        Dataset { dim: self.dim, items }
    }

    /// Gold partition of the labeled items of one split.
    pub fn gold_partition(&self, split: Split) -> Result<Partition> {
        let mut pairs = Vec::new();
        for item in self.split(split) {
            let label = item
                .label
                .as_ref()
                .ok_or_else(|| Error::domain(format!("item `{}` has no gold label", item.id)))?;
            pairs.push((item.id.clone(), label.clone()));
        }
        if pairs.is_empty() {
            return Err(Error::domain(format!("no {split} items")));
        }
        Partition::from_assignments(pairs)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse(1, e.to_string()))?
            .clone();
        let fixed = ["id", "split", "label"];
        if headers.len() < 3 || headers.iter().take(3).ne(fixed.iter().copied()) {
            return Err(Error::parse(1, "header must start with `id,split,label`"));
        }
        let dim = headers.len() - 3;
        let mut items = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::parse(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != dim + 3 {
                return Err(Error::parse(
                    line,
                    format!("row has {} features, header declares {dim}", record.len().saturating_sub(3)),
                ));
            }
            let split = record[1].parse().map_err(|e: Error| Error::parse(line, e.to_string()))?;
            let features = record
                .iter()
                .skip(3)
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::parse(line, format!("bad feature `{v}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let label = Some(record[2].to_string()).filter(|l| !l.is_empty());
            items.push(Item {
                id: record[0].to_string(),
                split,
                label,
                features,
            });
        }
        Self::new(items)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "split".to_string(), "label".to_string()];
        header.extend((1..=self.dim).map(|f| format!("f{f}")));
        w.write_record(&header).map_err(csv_io)?;
        for item in &self.items {
            let mut row = vec![
                item.id.clone(),
                item.split.to_string(),
                item.label.clone().unwrap_or_default(),
            ];
            // `{:?}` prints the shortest representation that round-trips.
            row.extend(item.features.iter().map(|v| format!("{v:?}")));
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            items: Vec<Item>,
        }
        let raw: Raw = serde_json::from_reader(reader).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        Self::new(raw.items)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self).map_err(|e| Error::Io(e.into()))
    }

    pub fn load(path: impl AsRef<Path>, format: Option<Format>) -> Result<Self> {
        let path = path.as_ref();
        let format = format
            .or_else(|| Format::from_path(path))
            .ok_or_else(|| Error::domain(format!("cannot infer dataset format of {}", path.display())))?;
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        match format {
            Format::Csv => Self::read_csv(file),
            Format::Json => Self::read_json(file),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, format: Option<Format>) -> Result<()> {
        let path = path.as_ref();
        let format = format.or_else(|| Format::from_path(path)).unwrap_or(Format::Csv);
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        match format {
            Format::Csv => self.write_csv(file),
            Format::Json => self.write_json(file),
        }
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Per-dimension affine map fitted on training items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Centers and scales every item with training-set statistics.
pub fn standardize(dataset: &Dataset) -> Result<(Dataset, Standardizer)> {
    let train: Vec<&Item> = dataset.split(Split::Train).collect();
    if train.len() < 2 {
        return Err(Error::domain(format!(
            "standardization needs at least 2 training items, got {}",
            train.len()
        )));
    }
    let n = train.len() as f64;
    let dim = dataset.dim();
    let mut mean = vec![0.0; dim];
    for item in &train {
        for (m, v) in mean.iter_mut().zip(&item.features) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; dim];
    for item in &train {
        for f in 0..dim {
            std[f] += (item.features[f] - mean[f]).powi(2) / n;
        }
    }
    for s in &mut std {
        *s = s.sqrt().max(MIN_STD);
    }
    let transform = Standardizer { mean, std };
    let items = dataset
        .items()
        .iter()
        .map(|item| Item {
            features: transform.apply(&item.features),
            ..item.clone()
        })
        .collect();
    Ok((Dataset { dim, items }, transform))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_train_classes: usize,
    pub n_test_classes: usize,
    pub dim: usize,
    pub min_class_size: usize,
    pub max_class_size: usize,
    /// Expected distance between class centers, in within-class standard
    /// deviations.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train_classes: 5,
            n_test_classes: 5,
            dim: 2,
            min_class_size: 30,
            max_class_size: 300,
            separation: 5.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_train_classes == 0 || self.n_test_classes == 0 {
            problems.push("class counts must be at least 1".to_string());
        }
        if self.dim == 0 {
            problems.push("dim must be at least 1".to_string());
        }
        if self.min_class_size == 0 || self.min_class_size > self.max_class_size {
            problems.push(format!(
                "need 1 <= min size <= max size, got {}..{}",
                self.min_class_size, self.max_class_size
            ));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            problems.push(format!("separation must be non-negative, got {}", self.separation));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }
}

/// `E|X|` for `X` a standard Normal vector in `dim` dimensions.
fn mean_chi(dim: usize) -> f64 {
    let k = dim as f64;
    2f64.sqrt() * (ln_gamma((k + 1.0) / 2.0) - ln_gamma(k / 2.0)).exp()
}

/// Gaussian classes with unit within-class variance. Training and test
/// classes never share a label, and class sizes are uniform on
/// `[min_class_size, max_class_size]`.
pub fn synth_gaussian(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Centers ~ N(0, s^2 I): the difference of two is N(0, 2 s^2 I).
    let s = config.separation / (2f64.sqrt() * mean_chi(config.dim));
    let total_classes = config.n_train_classes + config.n_test_classes;
    let mut classes = Vec::with_capacity(total_classes);
    for c in 0..total_classes {
        let (split, label) = if c < config.n_train_classes {
            (Split::Train, format!("train{c}"))
        } else {
            (Split::Test, format!("test{}", c - config.n_train_classes))
        };
        let center: Vec<f64> = (0..config.dim)
            .map(|_| s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let size = rng.random_range(config.min_class_size..=config.max_class_size);
        classes.push((split, label, center, size));
    }
    let total: usize = classes.iter().map(|c| c.3).sum();
    let width = total.saturating_sub(1).to_string().len();
    let mut items = Vec::with_capacity(total);
    for (split, label, center, size) in classes {
        for _ in 0..size {
            let features = center
                .iter()
                .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                .collect();
            items.push(Item {
                id: format!("x{:0width$}", items.len()),
                split,
                label: Some(label.clone()),
                features,
            });
        }
    }
    Dataset::new(items)
}

fn check_square(name: &str, m: &[Vec<f64>], n: usize) -> Result<()> {
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        return Err(Error::domain(format!("{name} must be {n}x{n}")));
    }
    Ok(())
}

/// Squared distance between the means of two point sets computed from
/// pairwise squared distances only.
///
/// `ab` is `I x J`, `aa` is `I x I` and `bb` is `J x J`; only the upper
/// triangles of `aa` and `bb` are read.
pub fn squared_mean_distance(ab: &[Vec<f64>], aa: &[Vec<f64>], bb: &[Vec<f64>]) -> Result<f64> {
    let i = ab.len();
    let j = ab.first().map_or(0, Vec::len);
    if i == 0 || j == 0 || ab.iter().any(|row| row.len() != j) {
        return Err(Error::domain("cross-distance matrix must be non-empty and rectangular"));
    }
    check_square("within-A distance matrix", aa, i)?;
    check_square("within-B distance matrix", bb, j)?;
    let upper = |m: &[Vec<f64>]| -> f64 {
        m.iter()
            .enumerate()
            .map(|(r, row)| row[r + 1..].iter().sum::<f64>())
            .sum()
    };
    let cross: f64 = ab.iter().flatten().sum();
    let (fi, fj) = (i as f64, j as f64);
    Ok(cross / (fi * fj) - upper(aa) / (fi * fi) - upper(bb) / (fj * fj))
}

/// Pairwise squared Euclidean distances between two point sets.
pub fn sq_distance_matrix(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|x| {
            b.iter()
                .map(|y| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum())
                .collect()
        })
        .collect()
}
