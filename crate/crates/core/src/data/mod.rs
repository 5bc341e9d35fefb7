//! Dataset ingestion and the preprocessing pipeline: binarize, split, PCA
//! for wide sets, min-max scaling, and the unlabeled feedback subset.

mod load;
mod transform;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use load::{load, load_delimited, parse_delimited, parse_sparse, Format, RawDataset, Schema};
pub use transform::{apply_pca, binarize_labels, fit_pca, minmax_normalize, BinarizeRule, BinaryDataset, MinMax, PcaModel};

use crate::error::{Error, Result};
use crate::hypothesis::LabeledSample;

/// Datasets wider than this are reduced to this many principal components.
pub const PCA_COMPONENTS: usize = 10;
/// Share of the training split used as the unlabeled feedback subset.
pub const SUBSET_FRACTION: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessedDataset {
    pub name: String,
    pub dim: usize,
    pub minority_fraction: f64,
    pub train_fraction: f64,
    pub seed: u64,
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    /// Features of a seeded tenth of `train`.
    pub subset: Vec<Vec<f64>>,
}

/// Fitted transforms, exposed so callers can check they depend on the
/// training rows only.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedTransforms {
    pub pca: Option<PcaModel>,
    pub ranges: MinMax,
}

pub fn split(ds: &BinaryDataset, train_fraction: f64, seed: u64) -> Result<ProcessedDataset> {
    split_with_transforms(ds, train_fraction, seed).map(|(p, _)| p)
}

pub fn split_with_transforms(
    ds: &BinaryDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(ProcessedDataset, FittedTransforms)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid("train_fraction", format!("must lie in (0, 1), got {train_fraction}")));
    }
    let n = ds.rows.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::invalid("train_fraction", format!("leaves an empty split of {n} rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (train_idx, test_idx) = order.split_at(n_train);

    let train_raw: Vec<Vec<f64>> = train_idx.iter().map(|&i| ds.rows[i].clone()).collect();
    let test_raw: Vec<Vec<f64>> = test_idx.iter().map(|&i| ds.rows[i].clone()).collect();
    let (pca, train_raw, test_raw) = if ds.dim > PCA_COMPONENTS {
        let model = fit_pca(&train_raw, PCA_COMPONENTS)?;
        let tr = apply_pca(&model, &train_raw);
        let te = apply_pca(&model, &test_raw);
        (Some(model), tr, te)
    } else {
        (None, train_raw, test_raw)
    };
    let ranges = MinMax::fit(&train_raw)?;
    let train: Vec<LabeledSample> = train_idx
        .iter()
        .zip(&train_raw)
        .map(|(&i, x)| LabeledSample::new(ranges.apply(x), ds.labels[i]))
        .collect();
    let test: Vec<LabeledSample> = test_idx
        .iter()
        .zip(&test_raw)
        .map(|(&i, x)| LabeledSample::new(ranges.apply(x), ds.labels[i]))
        .collect();

    let n_subset = ((SUBSET_FRACTION * n_train as f64).round() as usize).max(1);
    let subset = sample(&mut rng, n_train, n_subset)
        .iter()
        .map(|i| train[i].x.clone())
        .collect();

    let processed = ProcessedDataset {
        name: ds.name.clone(),
        dim: ds.dim.min(PCA_COMPONENTS),
        minority_fraction: ds.minority_fraction(),
        train_fraction,
        seed,
        train,
        test,
        subset,
    };
    Ok((processed, FittedTransforms { pca, ranges }))
}

/// One dataset entry; `path` is relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: Schema,
    pub binarize: BinarizeRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(skip)]
    pub root: PathBuf,
    pub datasets: BTreeMap<String, DatasetEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

impl Manifest {
    /// Reads `<root>/manifest.toml`.
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut m: Manifest = toml::from_str(&text)?;
        m.root = root.to_path_buf();
        Ok(m)
    }

    pub fn entry(&self, name: &str) -> Result<&DatasetEntry> {
        self.datasets.get(name).ok_or_else(|| Error::UnknownDataset(name.to_string()))
    }

    pub fn load_binary(&self, name: &str) -> Result<BinaryDataset> {
        let entry = self.entry(name)?;
        let raw = load(&self.root.join(&entry.path), &entry.schema, name)?;
        binarize_labels(raw, &entry.binarize)
    }
}

const CACHE_HEADER: &str = "btal-processed-dataset v1";

/// Writes the processed dataset behind a versioned header line, atomically.
pub fn write_cache(path: &Path, ds: &ProcessedDataset) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    writeln!(tmp, "{CACHE_HEADER}").map_err(|e| Error::io(path, e))?;
    serde_json::to_writer(&mut tmp, ds)?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<ProcessedDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader.read_line(&mut header).map_err(|e| Error::io(path, e))?;
    if header.trim_end() != CACHE_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("expected header `{CACHE_HEADER}`, found `{}`", header.trim_end()),
        });
    }
    Ok(serde_json::from_reader(reader)?)
}

/// Loads `name` through the manifest, reusing a cache file under
/// `cache_dir` when one matches the split parameters.
pub fn prepare(
    manifest: &Manifest,
    name: &str,
    train_fraction: f64,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<ProcessedDataset> {
    let cache = cache_dir.map(|d| d.join(format!("{name}-{train_fraction}-{seed}.cache")));
    if let Some(path) = &cache {
        if path.exists() {
            if let Ok(ds) = read_cache(path) {
                if ds.name == name && ds.train_fraction == train_fraction && ds.seed == seed {
                    return Ok(ds);
                }
            }
        }
    }
    let ds = split(&manifest.load_binary(name)?, train_fraction, seed)?;
    if let Some(path) = &cache {
        write_cache(path, &ds)?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::Label;

    fn toy(n: usize, dim: usize) -> BinaryDataset {
        let rows = (0..n)
            .map(|i| (0..dim).map(|j| ((i * 7 + j * 13) % 17) as f64 + 0.1 * j as f64).collect())
            .collect();
        let labels = (0..n).map(|i| if i % 3 == 0 { Label::Pos } else { Label::Neg }).collect();
        BinaryDataset {
            name: "toy".into(),
            rows,
            labels,
            dim,
        }
    }

    #[test]
    fn split_sizes() {
        let p = split(&toy(100, 3), 0.7, 1).unwrap();
        assert_eq!((p.train.len(), p.test.len(), p.subset.len()), (70, 30, 7));
        assert_eq!(p, split(&toy(100, 3), 0.7, 1).unwrap());
        assert_ne!(p.train, split(&toy(100, 3), 0.7, 2).unwrap().train);
        assert!(split(&toy(100, 3), 1.0, 1).is_err());
    }

    #[test]
    fn processed_features_lie_in_unit_box() {
        let p = split(&toy(200, 12), 0.5, 3).unwrap();
        assert_eq!(p.dim, 10);
        for s in p.train.iter().chain(&p.test) {
            assert_eq!(s.x.len(), 10);
            assert!(s.x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        // subset rows come from the training split
        for x in &p.subset {
            assert!(p.train.iter().any(|s| &s.x == x));
        }
    }

    #[test]
    fn transforms_ignore_test_rows() {
        let base = toy(150, 14);
        let (_, fitted) = split_with_transforms(&base, 0.6, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut order: Vec<usize> = (0..150).collect();
        order.shuffle(&mut rng);
        let mut perturbed = base.clone();
        for &i in &order[90..] {
            perturbed.rows[i].iter_mut().for_each(|v| *v = *v * 3.0 + 100.0);
        }
        let (_, fitted2) = split_with_transforms(&perturbed, 0.6, 4).unwrap();
        assert_eq!(fitted, fitted2);
    }

    #[test]
    fn cache_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = split(&toy(40, 2), 0.5, 5).unwrap();
        let path = dir.path().join("toy.cache");
        write_cache(&path, &p).unwrap();
        assert_eq!(read_cache(&path).unwrap(), p);
        fs::write(&path, "btal-processed-dataset v0\n{}").unwrap();
        assert!(matches!(read_cache(&path), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn manifest_resolves_entries() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("d.csv"), "1,2,x\n3,4,y\n5,6,x\n0,1,y\n").unwrap();
        fs::write(
            dir.path().join(MANIFEST_FILE),
            "[datasets.d]\npath = \"d.csv\"\nbinarize = { rule = \"majority-vs-rest\" }\n\n\
             [datasets.pair]\npath = \"d.csv\"\nlabel_column = -1\nbinarize = { rule = \"explicit-pair\", positive = \"y\", negative = \"x\" }\n",
        )
        .unwrap();
        let m = Manifest::load(dir.path()).unwrap();
        let d = m.load_binary("d").unwrap();
        assert_eq!(d.labels, vec![Label::Pos, Label::Neg, Label::Pos, Label::Neg]);
        let pair = m.load_binary("pair").unwrap();
        assert_eq!(pair.labels[0], Label::Neg);
        assert!(matches!(m.load_binary("nope"), Err(Error::UnknownDataset(_))));
    }
}
