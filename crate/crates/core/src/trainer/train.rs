//! Training loop and evaluation.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::metrics::MetricsReport;
use super::model::{argmax, ModelConfig};
use crate::denoiser::DenoiserConfig;
use crate::error::{Error, Result};
use crate::graphbuild::PatchGraph;
use crate::numcore::{adam_step, cross_entropy, OptimizerState, ParamSet};
use crate::util::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub denoiser_enabled: bool,
    pub denoiser: DenoiserConfig,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            learning_rate: 1e-3,
            weight_decay: 5e-5,
            seed: 0,
            denoiser_enabled: false,
            denoiser: DenoiserConfig::default(),
            train_fraction: 0.8,
            test_fraction: 0.2,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if (self.train_fraction + self.test_fraction - 1.0).abs() > 1e-9 || !(0.0..=1.0).contains(&self.train_fraction)
        {
            return Err(Error::InvalidArgument(format!(
                "split fractions {} + {} must sum to 1",
                self.train_fraction, self.test_fraction
            )));
        }
        self.model.validate()
    }

    pub fn active_denoiser(&self) -> Option<&DenoiserConfig> {
        self.denoiser_enabled.then_some(&self.denoiser)
    }
}

fn check_graphs(graphs: &[PatchGraph], model: &ModelConfig) -> Result<()> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    for g in graphs {
        if g.feature_dim() != model.input_dim() {
            return Err(Error::shape(
                "graph features",
                g.features.dim(),
                (g.n_nodes(), model.input_dim()),
            ));
        }
        if g.label >= model.n_classes() {
            return Err(Error::LabelOutOfRange {
                label: g.label,
                classes: model.n_classes(),
            });
        }
    }
    Ok(())
}

/// Trains from a fresh seeded initialization, one graph per Adam step.
///
/// Parameters are rounded to f32 at the end so that in-memory weights equal
/// the checkpointed ones. The report holds train-set metrics.
pub fn train(graphs: &[PatchGraph], config: &TrainConfig) -> Result<(ParamSet, MetricsReport)> {
    config.validate()?;
    check_graphs(graphs, &config.model)?;
    let classes: BTreeSet<usize> = graphs.iter().map(|g| g.label).collect();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument("training needs at least two classes".into()));
    }

    let mut params = config.model.init_params(derive_seed(config.seed, "init"))?;
    let mut opt = OptimizerState::adam(config.learning_rate, config.weight_decay);
    let mut order_rng = rng(derive_seed(config.seed, "order"));
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for &i in &order {
            let bound = params.bind();
            let logits = config.model.forward(&graphs[i], &bound, config.active_denoiser())?;
            let loss = cross_entropy(&logits, graphs[i].label)?;
            total += loss.item();
            loss.backward()?;
            adam_step(params.values_mut(), &bound.grads(), &mut opt)?;
        }
        let mean = total / graphs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        history.push(mean);
    }
    params.round_to_f32();

    let mut report = evaluate(&params, &config.model, graphs, config.active_denoiser())?;
    report.loss_history = history;
    Ok((params, report))
}

pub fn predict(
    params: &ParamSet,
    model: &ModelConfig,
    graph: &PatchGraph,
    denoiser: Option<&DenoiserConfig>,
) -> Result<usize> {
    Ok(argmax(&model.forward(graph, &params.bind(), denoiser)?))
}

/// Argmax predictions over `graphs` with confusion, accuracy and kappa.
pub fn evaluate(
    params: &ParamSet,
    model: &ModelConfig,
    graphs: &[PatchGraph],
    denoiser: Option<&DenoiserConfig>,
) -> Result<MetricsReport> {
    check_graphs(graphs, model)?;
    let pred = graphs
        .iter()
        .map(|g| predict(params, model, g, denoiser))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<usize> = graphs.iter().map(|g| g.label).collect();
    MetricsReport::from_predictions(&truth, &pred, model.n_classes())
}
