//! Loading datasets and producing reduced, rescaled feature matrices.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use qcnn::data::{load_binary, split_paths};
use qcnn::preprocess::{cache_file_name, rescale, AutoencoderConfig};
use qcnn::{Dataset, DatasetName, FittedReducer, ReductionMethod, ReductionSpec, Split};
use sha2::{Digest, Sha256};

use crate::config::{hex, FeatureKey};
use crate::error::{CliError, CliResult};

/// Env var naming the dataset root.
pub const DATA_ROOT_ENV: &str = "QCNN_DATA_ROOT";

/// Explicit path, else `QCNN_DATA_ROOT`, else the config value, else `./data`.
pub fn resolve_data_root(explicit: Option<&Path>, from_config: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(DATA_ROOT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    from_config.map_or_else(|| PathBuf::from("data"), Path::to_path_buf)
}

/// Fails with exit code 3 if any IDX file for `name` is absent.
pub fn check_data(root: &Path, name: DatasetName) -> CliResult<()> {
    for split in [Split::Train, Split::Test] {
        let (images, labels) = split_paths(root, name, split);
        for p in [images, labels] {
            if !p.exists() {
                return Err(CliError::MissingData(format!(
                    "{} not found (set {DATA_ROOT_ENV} or --data-root)",
                    p.display()
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FeatureSet {
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<u8>,
    pub test_x: Vec<Vec<f64>>,
    pub test_y: Vec<u8>,
}

/// Reducer cache location; autoencoders get a subdirectory per training setup.
pub fn reducer_cache_path(
    cache_dir: &Path,
    dataset: DatasetName,
    method: ReductionMethod,
    dim: usize,
    ae: &AutoencoderConfig,
) -> PathBuf {
    match method {
        ReductionMethod::AutoEnc => {
            let tag = format!(
                "{:?},{},{},{:e}",
                ae.latent_activation, ae.epochs, ae.batch_size, ae.learning_rate
            );
            let dir = cache_dir.join(format!("ae-{}", &hex(&Sha256::digest(tag.as_bytes()))[..8]));
            dir.join(cache_file_name(dataset.as_str(), method, dim, ae.seed))
        }
        _ => cache_dir.join(cache_file_name(dataset.as_str(), method, dim, 0)),
    }
}

/// Loads a cached reducer or fits and caches one.
pub fn fitted_reducer(
    cache_dir: Option<&Path>,
    dataset: DatasetName,
    spec: &ReductionSpec,
    train_images: &[Vec<f64>],
    ae: &AutoencoderConfig,
) -> CliResult<FittedReducer> {
    let path = cache_dir.map(|d| reducer_cache_path(d, dataset, spec.method, spec.out_dim, ae));
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        if let Ok(r) = FittedReducer::load(p) {
            return Ok(r);
        }
    }
    let reducer = FittedReducer::fit(spec, train_images, ae)?;
    if let Some(p) = path {
        reducer
            .save(&p)
            .with_context(|| format!("writing reducer cache {}", p.display()))?;
    }
    Ok(reducer)
}

/// Memoizes datasets and feature matrices across cells.
pub struct FeatureStore {
    root: PathBuf,
    cache_dir: Option<PathBuf>,
    datasets: HashMap<DatasetName, (Dataset, Dataset)>,
    features: Vec<(FeatureKey, AutoencoderConfig, Arc<FeatureSet>)>,
}

impl FeatureStore {
    pub fn new(root: PathBuf, cache_dir: Option<PathBuf>) -> Self {
        Self {
            root,
            cache_dir,
            datasets: HashMap::new(),
            features: Vec::new(),
        }
    }

    fn datasets(&mut self, name: DatasetName) -> CliResult<&(Dataset, Dataset)> {
        if !self.datasets.contains_key(&name) {
            check_data(&self.root, name)?;
            let train = load_binary(&self.root, name, Split::Train)?;
            let test = load_binary(&self.root, name, Split::Test)?;
            self.datasets.insert(name, (train, test));
        }
        Ok(&self.datasets[&name])
    }

    pub fn get(&mut self, key: &FeatureKey, ae: &AutoencoderConfig) -> CliResult<Arc<FeatureSet>> {
        let matches = |(k, a, _): &(FeatureKey, AutoencoderConfig, Arc<FeatureSet>)| {
            k == key && (key.reduction != ReductionMethod::AutoEnc || a == ae)
        };
        if let Some(i) = self.features.iter().position(matches) {
            return Ok(Arc::clone(&self.features[i].2));
        }
        let cache_dir = self.cache_dir.clone();
        let (train, test) = self.datasets(key.dataset)?;
        let spec = ReductionSpec::new(key.reduction, key.dim, key.rescale)?;
        let train_images = train.scaled_images();
        let reducer = fitted_reducer(cache_dir.as_deref(), key.dataset, &spec, &train_images, ae)?;
        let mut train_x = reducer.apply_all(&train_images)?;
        let mut test_x = reducer.apply_all(&test.scaled_images())?;
        if let Some((lo, hi)) = key.rescale {
            (train_x, test_x) = rescale(&train_x, &test_x, lo, hi)?;
        }
        let set = FeatureSet {
            train_x,
            train_y: train.labels.clone(),
            test_x,
            test_y: test.labels.clone(),
        };
        let set = Arc::new(set);
        self.features.push((*key, *ae, Arc::clone(&set)));
        Ok(set)
    }
}
