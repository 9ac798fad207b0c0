//! Perturbation fraction × denoiser flag × seed experiment matrix.
//!
//! For every seed the dataset is split, a model is trained on clean train
//! graphs, and the test split is evaluated after corrupting a fraction of its
//! images and rebuilding their graphs. A per-kind sweep repeats the
//! evaluation with one corruption kind at a time.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::Path;
use std::time::Instant;

use super::metrics::MetricsReport;
use super::model::ModelConfig;
use super::split::stratified_split;
use super::train::{predict, train, TrainConfig};
use crate::corruption::{plan_corruption, CorruptionKind, ImagePatch};
use crate::denoiser::DenoiserConfig;
use crate::error::{Error, Result};
use crate::graphbuild::{build_patch_graph, PatchGraph, DEFAULT_K, DEFAULT_PATCH_SIDE};
use crate::numcore::ParamSet;
use crate::util::{atomic_write, derive_seed};

pub const ALL_KINDS_LABEL: &str = "all";
pub const RESULTS_HEADER: &str = "fraction,kind,denoiser,seed,accuracy,kappa,epochs,runtime_s";

/// Random access to a labelled image collection.
pub trait ImageSource {
    fn len(&self) -> usize;
    fn id(&self, index: usize) -> String;
    fn label(&self, index: usize) -> usize;
    fn image(&self, index: usize) -> Result<ImagePatch>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub fractions: Vec<f64>,
    pub kinds: Vec<CorruptionKind>,
    pub severities: RangeInclusive<u8>,
    pub denoiser_flags: Vec<bool>,
    pub seeds: Vec<u64>,
    /// Fractions for the one-kind-at-a-time sweep; empty skips it.
    pub per_kind_fractions: Vec<f64>,
    /// Corrupt the train split as well, training one model per cell.
    pub corrupt_train: bool,
    pub patch_side: usize,
    pub k: usize,
    /// Write measured wall time; otherwise the runtime column is 0.
    pub record_runtime: bool,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            fractions: vec![0.0, 0.10, 0.25, 0.50],
            kinds: CorruptionKind::EXPERIMENT.to_vec(),
            severities: 1..=5,
            denoiser_flags: vec![false, true],
            seeds: vec![0],
            per_kind_fractions: vec![0.10, 0.50],
            corrupt_train: false,
            patch_side: DEFAULT_PATCH_SIDE,
            k: DEFAULT_K,
            record_runtime: false,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub fraction: f64,
    pub kind: String,
    pub denoiser: bool,
    pub seed: u64,
    pub accuracy: f64,
    pub kappa: f64,
    pub epochs: usize,
    pub runtime_s: f64,
}

/// One trained model. `fraction`/`kind` describe the train-side corruption
/// (0 and `none` for clean training).
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub seed: u64,
    pub fraction: f64,
    pub kind: String,
    pub params: ParamSet,
    pub loss_history: Vec<f64>,
}

impl TrainedRun {
    pub fn file_stem(&self) -> String {
        if self.kind == "none" {
            format!("seed{}", self.seed)
        } else {
            format!("seed{}_{}_{}", self.seed, self.kind, self.fraction)
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Sorted by kind, fraction, denoiser flag, seed.
    pub rows: Vec<ExperimentRow>,
    pub runs: Vec<TrainedRun>,
    /// Reports in row order.
    pub reports: Vec<MetricsReport>,
}

struct CellSpec {
    fraction: f64,
    kinds: Vec<CorruptionKind>,
    label: String,
}

fn cells(config: &ExperimentConfig) -> Vec<CellSpec> {
    let mut out: Vec<CellSpec> = config
        .fractions
        .iter()
        .map(|&fraction| CellSpec {
            fraction,
            kinds: config.kinds.clone(),
            label: ALL_KINDS_LABEL.to_string(),
        })
        .collect();
    for &kind in &config.kinds {
        for &fraction in &config.per_kind_fractions {
            out.push(CellSpec {
                fraction,
                kinds: vec![kind],
                label: kind.name().to_string(),
            });
        }
    }
    out
}

fn build_graph(
    source: &dyn ImageSource,
    index: usize,
    image: &ImagePatch,
    config: &ExperimentConfig,
) -> Result<PatchGraph> {
    build_patch_graph(
        image,
        source.id(index),
        source.label(index),
        config.patch_side,
        config.k,
    )
}

/// Copies of `graphs[i]` for `indices`, with a planned fraction of them
/// rebuilt from corrupted images.
fn corrupted_graphs(
    source: &dyn ImageSource,
    clean: &[PatchGraph],
    indices: &[usize],
    cell: &CellSpec,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<Vec<(usize, Option<PatchGraph>)>> {
    let ids: Vec<String> = indices.iter().map(|&i| clean[i].id.clone()).collect();
    let manifest = plan_corruption(&ids, cell.fraction, &cell.kinds, config.severities.clone(), seed)?;
    let by_id: HashMap<&str, _> = manifest.iter().map(|e| (e.item_id.as_str(), e.spec())).collect();
    indices
        .iter()
        .map(|&i| match by_id.get(clean[i].id.as_str()) {
            Some(spec) => {
                let img = spec.apply(&source.image(i)?);
                Ok((i, Some(build_graph(source, i, &img, config)?)))
            }
            None => Ok((i, None)),
        })
        .collect()
}

/// Predictions of one trained model; clean-graph predictions are cached.
struct Evaluator {
    denoiser: DenoiserConfig,
    clean_cache: HashMap<(usize, bool), usize>,
}

impl Evaluator {
    fn new(denoiser: &DenoiserConfig) -> Self {
        Self {
            denoiser: denoiser.clone(),
            clean_cache: HashMap::new(),
        }
    }

    fn predict(
        &mut self,
        params: &ParamSet,
        model: &ModelConfig,
        clean: &[PatchGraph],
        index: usize,
        corrupted: Option<&PatchGraph>,
        flag: bool,
    ) -> Result<usize> {
        let den = flag.then_some(&self.denoiser);
        match corrupted {
            Some(g) => predict(params, model, g, den),
            None => {
                if let Some(&p) = self.clean_cache.get(&(index, flag)) {
                    return Ok(p);
                }
                let p = predict(params, model, &clean[index], den)?;
                self.clean_cache.insert((index, flag), p);
                Ok(p)
            }
        }
    }
}

pub fn experiment_matrix(source: &dyn ImageSource, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    if source.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if config.seeds.is_empty() || config.denoiser_flags.is_empty() {
        return Err(Error::InvalidArgument(
            "experiment needs at least one seed and one flag".into(),
        ));
    }
    config.train.validate()?;
    let n_classes = config.train.model.n_classes();

    log::info!("building {} clean graphs", source.len());
    let clean = (0..source.len())
        .map(|i| build_graph(source, i, &source.image(i)?, config))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = clean.iter().map(|g| g.label).collect();
    let cells = cells(config);

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut runs = Vec::new();

    for &seed in &config.seeds {
        let (train_idx, test_idx) = stratified_split(&labels, config.train.train_fraction, seed)?;
        let train_cfg = TrainConfig {
            seed,
            denoiser_enabled: false,
            ..config.train.clone()
        };
        let denoiser = DenoiserConfig {
            seed: derive_seed(seed, "denoiser"),
            ..config.train.denoiser.clone()
        };

        let fit = |fraction: f64, kind: &str, graphs: &[PatchGraph]| -> Result<(TrainedRun, f64)> {
            log::info!("seed {seed}: training on {} graphs ({kind} {fraction})", graphs.len());
            let start = Instant::now();
            let (params, report) = train(graphs, &train_cfg)?;
            let run = TrainedRun {
                seed,
                fraction,
                kind: kind.to_string(),
                params,
                loss_history: report.loss_history,
            };
            Ok((run, start.elapsed().as_secs_f64()))
        };

        let shared = if config.corrupt_train {
            None
        } else {
            let graphs: Vec<PatchGraph> = train_idx.iter().map(|&i| clean[i].clone()).collect();
            Some(fit(0.0, "none", &graphs)?)
        };

        let mut shared_eval = Evaluator::new(&denoiser);

        let mut cell_runs = Vec::new();
        for cell in &cells {
            let corrupt_seed = derive_seed(seed, &format!("corrupt-{}-{}", cell.label, cell.fraction));
            let test = corrupted_graphs(source, &clean, &test_idx, cell, corrupt_seed, config)?;

            let mut own: Option<(TrainedRun, f64)> = None;
            if config.corrupt_train {
                let train_seed = derive_seed(seed, &format!("corrupt-train-{}-{}", cell.label, cell.fraction));
                let graphs = corrupted_graphs(source, &clean, &train_idx, cell, train_seed, config)?
                    .into_iter()
                    .map(|(i, g)| g.unwrap_or_else(|| clean[i].clone()))
                    .collect::<Vec<_>>();
                own = Some(fit(cell.fraction, &cell.label, &graphs)?);
            }
            let mut own_eval = Evaluator::new(&denoiser);
            let (evaluator, params, train_secs) = match (&own, &shared) {
                (Some((run, secs)), _) => (&mut own_eval, &run.params, *secs),
                (None, Some((run, _))) => (&mut shared_eval, &run.params, 0.0),
                (None, None) => unreachable!("a model is trained per seed or per cell"),
            };

            for &flag in &config.denoiser_flags {
                let start = Instant::now();
                let mut pred = Vec::with_capacity(test.len());
                for (i, g) in &test {
                    pred.push(evaluator.predict(params, &config.train.model, &clean, *i, g.as_ref(), flag)?);
                }
                let truth: Vec<usize> = test.iter().map(|(i, _)| labels[*i]).collect();
                let mut report = MetricsReport::from_predictions(&truth, &pred, n_classes)?;
                report.cell = Some(super::metrics::Cell {
                    fraction: cell.fraction,
                    kinds: cell.label.clone(),
                    denoiser: flag,
                    seed,
                });
                log::info!(
                    "seed {seed} {} {} denoiser={flag}: accuracy {:.4} kappa {:.4}",
                    cell.label,
                    cell.fraction,
                    report.accuracy,
                    report.kappa_quadratic
                );
                rows.push(ExperimentRow {
                    fraction: cell.fraction,
                    kind: cell.label.clone(),
                    denoiser: flag,
                    seed,
                    accuracy: report.accuracy,
                    kappa: report.kappa_quadratic,
                    epochs: config.train.epochs,
                    runtime_s: if config.record_runtime {
                        start.elapsed().as_secs_f64() + train_secs
                    } else {
                        0.0
                    },
                });
                reports.push(report);
            }
            if let Some((run, _)) = own {
                cell_runs.push(run);
            }
        }
        if let Some((run, _)) = shared {
            runs.push(run);
        }
        runs.extend(cell_runs);
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&rows[a], &rows[b]);
        x.kind
            .cmp(&y.kind)
            .then(x.fraction.total_cmp(&y.fraction))
            .then(x.denoiser.cmp(&y.denoiser))
            .then(x.seed.cmp(&y.seed))
    });
    Ok(ExperimentOutput {
        rows: order.iter().map(|&i| rows[i].clone()).collect(),
        reports: order.iter().map(|&i| reports[i].clone()).collect(),
        runs,
    })
}

pub fn results_csv(rows: &[ExperimentRow]) -> String {
    let mut s = format!("{RESULTS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.fraction,
            r.kind,
            if r.denoiser { "on" } else { "off" },
            r.seed,
            r.accuracy,
            r.kappa,
            r.epochs,
            r.runtime_s
        );
    }
    s
}

pub fn write_results_csv(path: &Path, rows: &[ExperimentRow]) -> Result<()> {
    atomic_write(path, results_csv(rows).as_bytes())
}

/// `seed,fraction,kind,epoch,loss` for every trained run.
pub fn write_loss_csv(path: &Path, runs: &[TrainedRun]) -> Result<()> {
    let mut s = String::from("seed,fraction,kind,epoch,loss\n");
    for r in runs {
        for (e, l) in r.loss_history.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{},{}", r.seed, r.fraction, r.kind, e + 1, l);
        }
    }
    atomic_write(path, s.as_bytes())
}
