//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corruption::{parse_kinds, CorruptionKind};
use crate::denoiser::DenoiserConfig;
use crate::error::{Error, Result};
use crate::gcn::GcnParams;
use crate::pooltrans::{PoolParams, TransformerParams};
use crate::synth::SynthConfig;
use crate::trainer::{ExperimentConfig, ModelConfig, TrainConfig};

/// `(key, default, description)` in echo order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "base seed for splits, corruption, initialization"),
    ("out_dir", "out", "output directory"),
    (
        "images_dir",
        "",
        "input images (labels.csv + PNGs); empty means <out_dir>/images",
    ),
    ("graph_dir", "", "graph files; empty means <out_dir>/graphs"),
    (
        "checkpoint",
        "",
        "model checkpoint for eval; empty means <out_dir>/model.rgp",
    ),
    ("synth.n_per_class", "40", "images per class"),
    ("synth.n_classes", "5", "number of classes"),
    ("synth.width", "1024", "image width in pixels"),
    ("synth.height", "1024", "image height in pixels"),
    ("graph.patch_side", "256", "patch side in pixels"),
    ("graph.k", "8", "neighbours per node"),
    ("corrupt.fraction", "0.25", "fraction of images to corrupt"),
    (
        "corrupt.kinds",
        "bright,saturate,hue,pixelate,defocus,motion",
        "corruption kinds to draw from",
    ),
    ("corrupt.severity_min", "1", "lowest severity drawn"),
    ("corrupt.severity_max", "5", "highest severity drawn"),
    ("model.gcn_dims", "64,128,128", "GCN widths, input first"),
    ("model.n_keep", "100", "nodes kept by pooling"),
    ("model.n_layers", "2", "transformer layers"),
    ("model.n_heads", "4", "attention heads"),
    ("model.mlp_ratio", "4", "transformer MLP expansion"),
    ("model.n_classes", "5", "output classes"),
    ("train.epochs", "60", "training epochs"),
    ("train.learning_rate", "0.001", "Adam learning rate"),
    ("train.weight_decay", "0.00005", "decoupled weight decay"),
    ("train.train_fraction", "0.8", "stratified train share"),
    ("train.test_fraction", "0.2", "stratified test share"),
    ("train.denoiser", "false", "run the denoiser in train and eval"),
    ("eval.split", "test", "graphs to evaluate: train, test or all"),
    ("denoiser.hidden_width", "256", "generator width"),
    ("denoiser.n_layers", "2", "generator layers"),
    ("denoiser.max_iters", "200", "iteration budget"),
    ("denoiser.learning_rate", "0.01", "gradient descent step"),
    (
        "denoiser.stop_rel_tol",
        "0.0001",
        "plateau threshold on relative improvement",
    ),
    ("denoiser.stop_patience", "10", "plateau length; 0 disables"),
    ("denoiser.z_std", "0.1", "std of the fixed generator input"),
    ("denoiser.seed", "0", "base seed for generator initialization"),
    (
        "experiment.source",
        "synth",
        "synth (generated in memory) or images (images_dir)",
    ),
    ("experiment.fractions", "0,0.1,0.25,0.5", "perturbed test fractions"),
    (
        "experiment.per_kind_fractions",
        "0.1,0.5",
        "fractions for the per-kind sweep; empty skips it",
    ),
    ("experiment.denoiser_flags", "off,on", "denoiser settings to evaluate"),
    ("experiment.seeds", "0,1,2,3,4", "seeds; each trains one model"),
    ("experiment.corrupt_train", "false", "also corrupt the train split"),
    ("experiment.record_runtime", "false", "write wall time instead of 0"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, v, _)| (k, v.to_string())).collect(),
        }
    }
}

fn config_err(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{key} = {value:?}: expected {what}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", n + 1)));
            }
            cfg.set(key, value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let slot = KEYS
            .iter()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?
            .0;
        self.values.insert(slot, value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    /// Every key with its resolved value, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, _, doc) in KEYS {
            let _ = writeln!(s, "# {doc}\n{k} = {}", self.get(k));
        }
        s
    }

    /// Typed views are built once so that bad values fail at load time.
    pub fn validate(&self) -> Result<()> {
        self.synth()?;
        self.train()?;
        self.experiment()?;
        self.corruption()?;
        self.eval_split()?;
        Ok(())
    }

    fn num<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse().map_err(|_| config_err(key, v, std::any::type_name::<T>()))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "on" | "1" => Ok(true),
            "false" | "off" | "0" => Ok(false),
            v => Err(config_err(key, v, "true or false")),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let v = self.get(key);
        v.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().map_err(|_| config_err(key, v, "a comma-separated list")))
            .collect()
    }

    pub fn seed(&self) -> Result<u64> {
        self.num("seed")
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out_dir"))
    }

    fn dir_or(&self, key: &str, fallback: &str) -> PathBuf {
        match self.get(key) {
            "" => self.out_dir().join(fallback),
            v => PathBuf::from(v),
        }
    }

    pub fn images_dir(&self) -> PathBuf {
        self.dir_or("images_dir", "images")
    }

    pub fn graph_dir(&self) -> PathBuf {
        self.dir_or("graph_dir", "graphs")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir_or("checkpoint", "model.rgp")
    }

    pub fn patch_side(&self) -> Result<usize> {
        self.num("graph.patch_side")
    }

    pub fn k(&self) -> Result<usize> {
        self.num("graph.k")
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        Ok(SynthConfig {
            n_per_class: self.num("synth.n_per_class")?,
            n_classes: self.num("synth.n_classes")?,
            width: self.num("synth.width")?,
            height: self.num("synth.height")?,
            seed: self.seed()?,
        })
    }

    pub fn corruption(&self) -> Result<(f64, Vec<CorruptionKind>, std::ops::RangeInclusive<u8>)> {
        let kinds = parse_kinds(self.get("corrupt.kinds"))?;
        let lo: u8 = self.num("corrupt.severity_min")?;
        let hi: u8 = self.num("corrupt.severity_max")?;
        Ok((self.num("corrupt.fraction")?, kinds, lo..=hi))
    }

    pub fn denoiser(&self) -> Result<DenoiserConfig> {
        Ok(DenoiserConfig {
            hidden_width: self.num("denoiser.hidden_width")?,
            n_layers: self.num("denoiser.n_layers")?,
            max_iters: self.num("denoiser.max_iters")?,
            learning_rate: self.num("denoiser.learning_rate")?,
            stop_rel_tol: self.num("denoiser.stop_rel_tol")?,
            stop_patience: self.num("denoiser.stop_patience")?,
            z_std: self.num("denoiser.z_std")?,
            seed: self.num("denoiser.seed")?,
        })
    }

    pub fn model(&self) -> Result<ModelConfig> {
        let gcn = GcnParams::new(self.list("model.gcn_dims")?)?;
        let model = ModelConfig {
            transformer: TransformerParams {
                n_layers: self.num("model.n_layers")?,
                n_heads: self.num("model.n_heads")?,
                model_dim: gcn.out_dim(),
                mlp_ratio: self.num("model.mlp_ratio")?,
                n_classes: self.num("model.n_classes")?,
            },
            pool: PoolParams {
                n_keep: self.num("model.n_keep")?,
            },
            gcn,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.num("train.epochs")?,
            learning_rate: self.num("train.learning_rate")?,
            weight_decay: self.num("train.weight_decay")?,
            seed: self.seed()?,
            denoiser_enabled: self.flag("train.denoiser")?,
            denoiser: self.denoiser()?,
            train_fraction: self.num("train.train_fraction")?,
            test_fraction: self.num("train.test_fraction")?,
            model: self.model()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval_split(&self) -> Result<EvalSplit> {
        match self.get("eval.split") {
            "train" => Ok(EvalSplit::Train),
            "test" => Ok(EvalSplit::Test),
            "all" => Ok(EvalSplit::All),
            v => Err(config_err("eval.split", v, "train, test or all")),
        }
    }

    pub fn experiment_uses_images(&self) -> Result<bool> {
        match self.get("experiment.source") {
            "synth" => Ok(false),
            "images" => Ok(true),
            v => Err(config_err("experiment.source", v, "synth or images")),
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        self.experiment_uses_images()?;
        let flags = self
            .get("experiment.denoiser_flags")
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| match p {
                "on" | "true" => Ok(true),
                "off" | "false" => Ok(false),
                _ => Err(config_err("experiment.denoiser_flags", p, "on or off")),
            })
            .collect::<Result<Vec<_>>>()?;
        let (_, kinds, severities) = self.corruption()?;
        Ok(ExperimentConfig {
            fractions: self.list("experiment.fractions")?,
            kinds,
            severities,
            denoiser_flags: flags,
            seeds: self.list("experiment.seeds")?,
            per_kind_fractions: self.list("experiment.per_kind_fractions")?,
            corrupt_train: self.flag("experiment.corrupt_train")?,
            patch_side: self.patch_side()?,
            k: self.k()?,
            record_runtime: self.flag("experiment.record_runtime")?,
            train: self.train()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Train,
    Test,
    All,
}
