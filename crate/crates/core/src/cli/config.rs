//! Layered settings: command-line flag, then config file, then built-in default.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{PhantomConfig, MIN_LESION_FRACTION, SLICE_EXTENT};
use crate::error::{Error, IoContext, Result};
use crate::models::{ModelSpec, Variant};
use crate::train::TrainConfig;

/// Environment variable naming the default dataset root.
pub const DATA_ENV: &str = "STROKESEG_DATA";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub root: Option<PathBuf>,
    /// Side of the square 2D model input.
    pub slice_extent: Option<usize>,
    /// Extents 3D model inputs are resampled to.
    pub volume_extents: Option<[usize; 3]>,
    pub min_lesion_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub width_scale: Option<usize>,
    pub dropout: Option<f64>,
    pub heads: Option<usize>,
}

/// Config file contents. `[train]` and `[phantom]` hold partial overrides
/// of the per-model training defaults and of the phantom generator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: toml::Table,
    pub phantom: toml::Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p).at(p)?;
                toml::from_str(&text).map_err(|e| Error::format(p, e.to_string()))
            }
        }
    }
}

/// Applies the keys of `table` on top of `base`.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, table: &toml::Table) -> Result<T> {
    let mut merged = toml::Table::try_from(base).map_err(|e| Error::Invalid(e.to_string()))?;
    for (k, v) in table {
        merged.insert(k.clone(), v.clone());
    }
    toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::Usage(format!("config: {e}")))
}

/// Settings shared by the data-reading commands, after layering.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSettings {
    pub root: PathBuf,
    pub slice_extent: usize,
    pub volume_extents: [usize; 3],
    pub min_lesion_fraction: f64,
}

impl DataSettings {
    pub fn resolve(flag_root: Option<PathBuf>, flag_slice: Option<usize>, flag_volume: Option<Vec<usize>>, file: &FileConfig) -> Result<Self> {
        let root = flag_root
            .or_else(|| file.data.root.clone())
            .or_else(|| env::var_os(DATA_ENV).map(PathBuf::from))
            .ok_or_else(|| Error::Usage(format!("no dataset root: pass --data, set [data] root, or set {DATA_ENV}")))?;
        let volume_extents = match flag_volume {
            Some(v) => <[usize; 3]>::try_from(v.as_slice()).map_err(|_| Error::Usage("--volume-extents takes three values".into()))?,
            None => file.data.volume_extents.unwrap_or([144, 172, 128]),
        };
        Ok(DataSettings {
            root,
            slice_extent: flag_slice.or(file.data.slice_extent).unwrap_or(SLICE_EXTENT),
            volume_extents,
            min_lesion_fraction: file.data.min_lesion_fraction.unwrap_or(MIN_LESION_FRACTION),
        })
    }

    pub fn input_extents(&self, variant: Variant) -> Vec<usize> {
        if variant.is_3d() {
            self.volume_extents.to_vec()
        } else {
            vec![self.slice_extent; 2]
        }
    }
}

/// Model spec from flag, file and the variant's defaults.
pub fn model_spec(variant: Variant, flag_scale: Option<usize>, file: &FileConfig, data: &DataSettings) -> Result<ModelSpec> {
    let mut spec = ModelSpec::new(variant)
        .with_width_scale(flag_scale.or(file.model.width_scale).unwrap_or(1))?
        .with_input_extents(data.input_extents(variant));
    if let Some(p) = file.model.dropout {
        spec = spec.with_dropout(p);
    }
    if let Some(h) = file.model.heads {
        spec.heads = h;
    }
    spec.validate()?;
    Ok(spec)
}

/// Command-line overrides for training.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainFlags {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
}

pub fn train_config(variant: Variant, flags: &TrainFlags, file: &FileConfig) -> Result<TrainConfig> {
    let mut cfg = overlay(&TrainConfig::for_variant(variant), &file.train)?;
    if let Some(s) = flags.seed {
        cfg.master_seed = s;
    }
    if let Some(e) = flags.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = flags.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = flags.lr {
        cfg.lr = lr;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn phantom_config(file: &FileConfig, flag_extents: Option<Vec<usize>>) -> Result<PhantomConfig> {
    let mut cfg = overlay(&PhantomConfig::default(), &file.phantom)?;
    if let Some(v) = flag_extents {
        cfg.extents = <[usize; 3]>::try_from(v.as_slice()).map_err(|_| Error::Usage("--extents takes three values".into()))?;
    }
    Ok(cfg)
}
