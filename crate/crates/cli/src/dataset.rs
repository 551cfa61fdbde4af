use std::path::PathBuf;

use bmlp::data::{binarize, load_feature_matrix, load_idx, median_thresholds};
use bmlp::{BinarizedDataset, RawDataset};

use crate::config::{DatasetKind, RunConfig};
use crate::error::{CliError, Result};

pub const IDX_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const IDX_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const IDX_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const IDX_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Training and test splits binarized at the training-set medians.
pub struct Datasets {
    pub train: BinarizedDataset,
    pub test: Option<BinarizedDataset>,
}

fn required(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    path.clone().ok_or_else(|| CliError::Config(format!("dataset = features requires {key}")))
}

fn load_raw(cfg: &RunConfig) -> Result<(RawDataset, Option<RawDataset>)> {
    match cfg.dataset {
        DatasetKind::Mnist | DatasetKind::Fashion => {
            let dir = cfg.idx_dir();
            let train = load_idx(dir.join(IDX_TRAIN_IMAGES), dir.join(IDX_TRAIN_LABELS))?;
            let test = load_idx(dir.join(IDX_TEST_IMAGES), dir.join(IDX_TEST_LABELS))?;
            Ok((train, Some(test)))
        }
        DatasetKind::Features => {
            let train = load_feature_matrix(
                required(&cfg.train_features, "train-features")?,
                required(&cfg.train_labels, "train-labels")?,
            )?;
            let test = match (&cfg.test_features, &cfg.test_labels) {
                (Some(f), Some(l)) => Some(load_feature_matrix(f, l)?),
                (None, None) => None,
                _ => return Err(CliError::Config("test-features and test-labels must be given together".into())),
            };
            Ok((train, test))
        }
    }
}

pub fn load_datasets(cfg: &RunConfig) -> Result<Datasets> {
    let (train, test) = load_raw(cfg)?;
    let thresholds = median_thresholds(&train);
    let test = test.map(|t| binarize(&t, &thresholds)).transpose()?;
    Ok(Datasets { train: binarize(&train, &thresholds)?, test })
}
