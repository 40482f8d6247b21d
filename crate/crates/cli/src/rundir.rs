//! Run-directory layout and the reproducibility manifest.
//!
//! Layout under the output directory:
//!
//! ```text
//! models/   trained artifacts (*.dnra)
//! curves/   CSV output (security curves, sweeps, attack traces)
//! plots/    SVG output
//! manifest.txt
//! ```
//!
//! The manifest is a pure function of the config, so every subcommand
//! writes byte-identical content: config hash, dataset, all seeds, grids,
//! and the tool/format versions — enough to re-run the pipeline
//! bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use dnr_core::archive::FORMAT_VERSION;
use dnr_core::eval::format_manifest;

use crate::config::{DatasetSection, LoadedConfig};
use crate::fail::Failure;

pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    /// Creates the directory tree (idempotent) and writes the manifest.
    pub fn prepare(loaded: &LoadedConfig) -> Result<RunDir, Failure> {
        let root = loaded.config.out_dir();
        for sub in ["models", "curves", "plots"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| Failure::io(&dir, e))?;
        }
        let dir = RunDir { root };
        dir.write(Path::new("manifest.txt"), manifest_text(loaded).as_bytes())?;
        Ok(dir)
    }

    pub fn models(&self, name: &str) -> PathBuf {
        self.root.join("models").join(name)
    }

    pub fn curves(&self, name: &str) -> PathBuf {
        self.root.join("curves").join(name)
    }

    pub fn plots(&self, name: &str) -> PathBuf {
        self.root.join("plots").join(name)
    }

    pub fn write(&self, rel: &Path, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.root.join(rel);
        fs::write(&path, bytes).map_err(|e| Failure::io(&path, e))
    }

    pub fn network_path(&self) -> PathBuf {
        self.models("network.dnra")
    }

    pub fn model_path(&self, kind: &str, run: usize) -> PathBuf {
        self.models(&format!("{kind}_run{run}.dnra"))
    }
}

fn manifest_text(loaded: &LoadedConfig) -> String {
    let cfg = &loaded.config;
    let dataset = match &cfg.dataset {
        DatasetSection::SyntheticDigits { samples, seed } => {
            format!("synthetic-digits samples={samples} seed={seed}")
        }
        DatasetSection::Blobs { per_class, seed } => {
            format!("blobs per_class={per_class} seed={seed}")
        }
        DatasetSection::MnistIdx { images, labels } => {
            format!("mnist-idx images={} labels={}", images.display(), labels.display())
        }
        DatasetSection::Cifar10 { batches } => format!("cifar10 batches={}", batches.len()),
    };
    let splits = cfg
        .splits
        .iter()
        .map(|s| format!("{}/{}@{}", s.train, s.test, s.seed))
        .collect::<Vec<_>>()
        .join(" ");
    let eps = cfg
        .eval
        .eps_grid
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let fit = cfg.fit_config();
    let entries = vec![
        ("tool".to_string(), format!("dnr {}", env!("CARGO_PKG_VERSION"))),
        ("archive_format".to_string(), FORMAT_VERSION.to_string()),
        ("config_sha256".to_string(), loaded.hash.clone()),
        ("config_path".to_string(), loaded.path.display().to_string()),
        ("dataset".to_string(), dataset),
        ("pretrain_rows".to_string(), cfg.pretrain.rows.to_string()),
        ("splits".to_string(), splits),
        ("network_seed".to_string(), cfg.network.seed.to_string()),
        ("pretrain_seed".to_string(), cfg.pretrain.seed.to_string()),
        ("svm_seed".to_string(), fit.seed.to_string()),
        ("subsample_seed".to_string(), cfg.eval.subsample_seed.to_string()),
        ("rho".to_string(), cfg.calibration.rho.to_string()),
        ("eps_grid".to_string(), eps),
    ];
    format_manifest(&entries)
}
