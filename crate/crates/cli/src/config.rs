//! TOML run configuration: the single source of truth for a pipeline run.
//!
//! Every subcommand loads the same file, so artifacts produced by one
//! stage line up with what the next stage expects: splits are re-drawn
//! from the recorded seeds rather than stored. The schema is documented
//! in `docs/config.md`; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use dnr_core::attack::{AttackConfig, AttackNorm};
use dnr_core::data::{
    load_cifar10, load_mnist_idx, make_synthetic_digits, make_toy_blobs, Dataset, SplitSpec,
};
use dnr_core::dnr::DnrFitConfig;
use dnr_core::eval::sha256_hex;
use dnr_core::nn::{
    cifar_paper_specs, mnist_desk_specs, mnist_paper_specs, LayerSpec, Network, TrainConfig,
};

use crate::fail::Failure;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    /// One entry per run; run `i` draws splits[i] on permutation stream `i`.
    #[serde(rename = "split")]
    pub splits: Vec<SplitSection>,
    pub network: NetworkSection,
    pub pretrain: PretrainSection,
    #[serde(default)]
    pub taps: TapsSection,
    #[serde(default)]
    pub svm: SvmSection,
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSection {
    /// Procedural 10-class 28x28 digits; no files needed.
    SyntheticDigits { samples: usize, seed: u64 },
    /// Three Gaussian blobs in 2-D.
    Blobs { per_class: usize, seed: u64 },
    /// Standard IDX pair (big-endian, as distributed for MNIST).
    MnistIdx { images: PathBuf, labels: PathBuf },
    /// CIFAR-10 binary batches.
    Cifar10 { batches: Vec<PathBuf> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub arch: Arch,
    #[serde(default)]
    pub dropout: f64,
    pub seed: u64,
    /// Hidden widths; `dense` only.
    #[serde(default)]
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    MnistDesk,
    MnistPaper,
    CifarPaper,
    Dense,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainSection {
    /// Leading rows of the pool reserved for network training; splits are
    /// drawn from the remainder so the SVM stage never sees them.
    pub rows: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapsSection {
    /// Explicit layer indices; empty means "suggest `count` taps".
    #[serde(default)]
    pub layers: Vec<usize>,
    #[serde(default)]
    pub count: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmSection {
    /// Leading rows of each train split fed to the SVM stage; absent
    /// means all rows not held out for calibration.
    #[serde(default)]
    pub fit_rows: Option<usize>,
    #[serde(default)]
    pub folds: Option<usize>,
    #[serde(default)]
    pub hyper_folds: Option<usize>,
    #[serde(default)]
    pub c_grid: Vec<f64>,
    #[serde(default)]
    pub gamma_scale_grid: Vec<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub grid_subsample: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    /// Target clean rejection rate.
    pub rho: f64,
    /// Trailing rows of each train split held out for threshold
    /// calibration (never seen by the SVM stage).
    pub holdout: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    #[serde(default = "default_norm")]
    pub norm: NormName,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_doublings")]
    pub step_doublings: usize,
    #[serde(default = "default_attack_tol")]
    pub tolerance: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub extra_projection_rounds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormName {
    L1,
    L2,
    Linf,
}

fn default_norm() -> NormName {
    NormName::L2
}
fn default_step() -> f64 {
    0.05
}
fn default_doublings() -> usize {
    10
}
fn default_attack_tol() -> f64 {
    1e-6
}
fn default_max_iters() -> usize {
    50
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            norm: default_norm(),
            step_size: default_step(),
            step_doublings: default_doublings(),
            tolerance: default_attack_tol(),
            max_iters: default_max_iters(),
            extra_projection_rounds: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<f64>,
    /// Cap on attacked samples per run; absent attacks the whole split.
    #[serde(default)]
    pub attack_subsample: Option<usize>,
    #[serde(default)]
    pub subsample_seed: u64,
    /// Extra attack descents per sample, seeded at the nearest test
    /// exemplars of the highest-scoring competitor classes. Guards the
    /// curves against the flat far field of saturated kernel machines.
    #[serde(default = "default_anchor_restarts")]
    pub anchor_restarts: usize,
    /// Reject thresholds for `sweep`; empty derives deciles of the clean
    /// top scores on the test split.
    #[serde(default)]
    pub theta_grid: Vec<f64>,
}

fn default_eps_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0]
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            eps_grid: default_eps_grid(),
            attack_subsample: None,
            subsample_seed: 0,
            anchor_restarts: default_anchor_restarts(),
            theta_grid: Vec::new(),
        }
    }
}

fn default_anchor_restarts() -> usize {
    3
}

/// A parsed config plus the exact bytes it came from (for hashing).
pub struct LoadedConfig {
    pub config: RunConfig,
    pub hash: String,
    pub path: PathBuf,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, Failure> {
    let bytes = fs::read(path).map_err(|e| {
        Failure::config(
            format!("cannot read config {}", path.display()),
            e.to_string(),
        )
    })?;
    let text = std::str::from_utf8(&bytes).map_err(|e| {
        Failure::config(
            format!("config {} is not UTF-8", path.display()),
            e.to_string(),
        )
    })?;
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        Failure::config(
            format!("config {} does not parse", path.display()),
            e.to_string(),
        )
    })?;
    config.validate()?;
    Ok(LoadedConfig {
        config,
        hash: sha256_hex(&bytes),
        path: path.to_path_buf(),
    })
}

impl RunConfig {
    fn validate(&self) -> Result<(), Failure> {
        if self.splits.is_empty() {
            return Err(Failure::config(
                "config needs at least one [[split]]",
                "each [[split]] entry defines one run's train/test draw",
            ));
        }
        for (i, s) in self.splits.iter().enumerate() {
            if s.train == 0 || s.test == 0 {
                return Err(Failure::config(
                    format!("split {i} has an empty side (train {}, test {})", s.train, s.test),
                    "",
                ));
            }
            if self.svm.fit_rows.map_or(false, |r| r + self.calibration.holdout > s.train)
                || self.calibration.holdout >= s.train
            {
                return Err(Failure::config(
                    format!(
                        "split {i}: fit_rows {:?} + calibration holdout {} exceed train {}",
                        self.svm.fit_rows, self.calibration.holdout, s.train
                    ),
                    "the calibration holdout comes out of the train split",
                ));
            }
        }
        if !(0.0..1.0).contains(&self.calibration.rho) {
            return Err(Failure::config(
                format!("calibration.rho {} outside [0, 1)", self.calibration.rho),
                "",
            ));
        }
        if self.network.arch == Arch::Dense && self.network.hidden.is_empty() {
            return Err(Failure::config(
                "network.arch = \"dense\" needs network.hidden",
                "give the hidden layer widths, e.g. hidden = [32, 32]",
            ));
        }
        if self.network.arch != Arch::Dense && !self.network.hidden.is_empty() {
            return Err(Failure::config(
                "network.hidden only applies to arch = \"dense\"",
                "",
            ));
        }
        match &self.eval.eps_grid[..] {
            [] => {
                return Err(Failure::config("eval.eps_grid is empty", ""));
            }
            [first, ..] if *first != 0.0 => {
                return Err(Failure::config(
                    "eval.eps_grid must start at 0",
                    "the clean operating point anchors every curve",
                ));
            }
            grid => {
                if grid.windows(2).any(|w| w[0] >= w[1]) || grid.iter().any(|e| !e.is_finite()) {
                    return Err(Failure::config(
                        "eval.eps_grid must be finite and strictly increasing",
                        "",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Loads the full sample pool for this config's dataset.
    pub fn load_pool(&self) -> Result<Dataset, Failure> {
        let data = match &self.dataset {
            DatasetSection::SyntheticDigits { samples, seed } => {
                make_synthetic_digits(*samples, *seed)
            }
            DatasetSection::Blobs { per_class, seed } => make_toy_blobs(*per_class, *seed),
            DatasetSection::MnistIdx { images, labels } => {
                require_file(images)?;
                require_file(labels)?;
                load_mnist_idx(images, labels)
            }
            DatasetSection::Cifar10 { batches } => {
                for b in batches {
                    require_file(b)?;
                }
                load_cifar10(batches)
            }
        }
        .map_err(Failure::from)?;
        if self.pretrain.rows >= data.len() {
            return Err(Failure::config(
                format!(
                    "pretrain.rows {} leaves no data for splits (pool holds {})",
                    self.pretrain.rows,
                    data.len()
                ),
                "",
            ));
        }
        Ok(data)
    }

    /// The pool minus the pretraining slice: what splits draw from.
    pub fn split_pool(&self, pool: &Dataset) -> Result<Dataset, Failure> {
        let rest: Vec<usize> = (self.pretrain.rows..pool.len()).collect();
        pool.subset(&rest).map_err(Failure::from)
    }

    /// The pretraining slice.
    pub fn pretrain_slice(&self, pool: &Dataset) -> Result<Dataset, Failure> {
        let rows: Vec<usize> = (0..self.pretrain.rows).collect();
        pool.subset(&rows).map_err(Failure::from)
    }

    pub fn split_spec(&self, run: usize) -> Result<SplitSpec, Failure> {
        let s = self.splits.get(run).ok_or_else(|| {
            Failure::config(
                format!("run {run} out of range ({} splits configured)", self.splits.len()),
                "",
            )
        })?;
        Ok(SplitSpec {
            train: s.train,
            test: s.test,
            seed: s.seed,
        })
    }

    pub fn network(&self, sample_shape: &[usize]) -> Result<Network, Failure> {
        let specs = match self.network.arch {
            Arch::MnistDesk => mnist_desk_specs(self.network.dropout),
            Arch::MnistPaper => mnist_paper_specs(self.network.dropout),
            Arch::CifarPaper => cifar_paper_specs(self.network.dropout),
            Arch::Dense => {
                let mut specs = Vec::new();
                if sample_shape.len() > 1 {
                    specs.push(LayerSpec::Flatten);
                }
                for &u in &self.network.hidden {
                    specs.push(LayerSpec::Dense { units: u });
                    specs.push(LayerSpec::Relu);
                    if self.network.dropout > 0.0 {
                        specs.push(LayerSpec::Dropout { p: self.network.dropout });
                    }
                }
                specs.push(LayerSpec::Dense { units: 10 });
                specs.push(LayerSpec::Softmax);
                specs
            }
        };
        Network::new(sample_shape.to_vec(), &specs, self.network.seed).map_err(Failure::from)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.pretrain.learning_rate,
            momentum: self.pretrain.momentum,
            dropout: self.network.dropout,
            batch_size: self.pretrain.batch_size,
            epochs: self.pretrain.epochs,
            seed: self.pretrain.seed,
        }
    }

    pub fn fit_config(&self) -> DnrFitConfig {
        let mut cfg = DnrFitConfig::default();
        if let Some(f) = self.svm.folds {
            cfg.folds = f;
        }
        if let Some(f) = self.svm.hyper_folds {
            cfg.hyper_folds = f;
        }
        if !self.svm.c_grid.is_empty() {
            cfg.c_grid = self.svm.c_grid.clone();
        }
        if !self.svm.gamma_scale_grid.is_empty() {
            cfg.gamma_scale_grid = self.svm.gamma_scale_grid.clone();
        }
        if let Some(t) = self.svm.tolerance {
            cfg.tolerance = t;
        }
        cfg.grid_subsample = self.svm.grid_subsample;
        if let Some(s) = self.svm.seed {
            cfg.seed = s;
        }
        cfg
    }

    /// Attack settings at a given budget.
    pub fn attack_config(&self, epsilon: f64) -> AttackConfig {
        AttackConfig {
            epsilon,
            norm: match self.attack.norm {
                NormName::L1 => AttackNorm::L1,
                NormName::L2 => AttackNorm::L2,
                NormName::Linf => AttackNorm::LInf,
            },
            step_size: self.attack.step_size,
            step_doublings: self.attack.step_doublings,
            tolerance: self.attack.tolerance,
            max_iters: self.attack.max_iters,
            extra_projection_rounds: self.attack.extra_projection_rounds,
        }
    }

    /// The output directory, honoring the `DNR_OUT_DIR` override.
    pub fn out_dir(&self) -> PathBuf {
        match std::env::var_os("DNR_OUT_DIR") {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::config(
            format!("missing file {}", path.display()),
            "referenced by the dataset section of the config",
        ))
    }
}
