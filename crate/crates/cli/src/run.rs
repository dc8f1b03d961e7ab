//! Layout and metadata of a run directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hecgcn::dataset::{DatasetManifest, InteractionDataset};
use hecgcn::model::Ablations;
use hecgcn::trainer::{EpochRecord, TrainConfig};
use serde::{Deserialize, Serialize};

pub const CHECKPOINT: &str = "checkpoint.bin";
pub const HISTORY: &str = "history.csv";
pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.json";
pub const REPORT_VAL: &str = "report_val.json";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub run_id: String,
    pub config: TrainConfig,
    /// Absolute path of the dataset manifest.
    pub data: PathBuf,
    pub out: PathBuf,
    pub ablations: Ablations,
    /// Hex digest of config and dataset; also stored in the checkpoint.
    pub config_hash: String,
    pub checkpoint_format: u32,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST), &serde_json::to_value(self)?)
    }
}

pub fn hash_hex(hash: u64) -> String {
    format!("{hash:016x}")
}

pub fn load_dataset(path: &Path, cfg: &TrainConfig) -> Result<InteractionDataset> {
    let manifest = DatasetManifest::from_path(path)
        .with_context(|| format!("loading dataset manifest {}", path.display()))?;
    Ok(manifest.load(cfg.min_target_interactions)?)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,loss_bpr,loss_gb,loss_gh,loss_bh,val_hr10,val_ndcg10\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch, r.loss.bpr, r.loss.gb, r.loss.gh, r.loss.bh, r.val.hr, r.val.ndcg
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}
