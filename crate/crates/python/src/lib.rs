//! Python bindings. Matrices cross the boundary as lists of lists of floats
//! and images as `(bytes, width, height)` with packed RGB rows.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use rgp_core::corruption::{CorruptionKind, CorruptionSpec, ImagePatch};
use rgp_core::denoiser::{fit_denoise as core_fit_denoise, DenoiserConfig, StopReason};
use rgp_core::gcn::GcnParams;
use rgp_core::graphbuild;
use rgp_core::numcore::ParamSet;
use rgp_core::pooltrans::{PoolParams, TransformerParams};
use rgp_core::synth::SynthConfig;
use rgp_core::trainer::{self, MetricsReport, ModelConfig, TrainConfig};
use rgp_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Missing(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).expect("checked shape"))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn to_image(pixels: &[u8], width: usize, height: usize) -> PyResult<ImagePatch> {
    ImagePatch::new(width, height, pixels.to_vec()).map_err(py_err)
}

fn report_dict<'py>(py: Python<'py>, r: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("accuracy", r.accuracy)?;
    d.set_item("kappa", r.kappa_quadratic)?;
    let conf: Vec<Vec<u64>> = r.confusion.rows().into_iter().map(|row| row.to_vec()).collect();
    d.set_item("confusion", conf)?;
    d.set_item("loss_history", r.loss_history.clone())?;
    Ok(d)
}

/// A patch graph: node features, grid coordinates and undirected edges.
#[pyclass(name = "PatchGraph", module = "rgp", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPatchGraph {
    inner: graphbuild::PatchGraph,
}

#[pymethods]
impl PyPatchGraph {
    #[new]
    fn new(
        id: String,
        label: usize,
        features: Vec<Vec<f64>>,
        coords: Vec<(i32, i32)>,
        edges: Vec<(usize, usize)>,
    ) -> PyResult<Self> {
        let inner = graphbuild::PatchGraph::new(id, label, to_array(features)?, coords, edges).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Tiles an RGB image, featurizes the patches and links k nearest neighbours.
    #[staticmethod]
    #[pyo3(signature = (pixels, width, height, id, label, patch_side=256, k=8))]
    fn from_image(
        pixels: &[u8],
        width: usize,
        height: usize,
        id: String,
        label: usize,
        patch_side: usize,
        k: usize,
    ) -> PyResult<Self> {
        let img = to_image(pixels, width, height)?;
        let inner = graphbuild::build_patch_graph(&img, id, label, patch_side, k).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: graphbuild::read_graph(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        graphbuild::write_graph(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn label(&self) -> usize {
        self.inner.label
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.features)
    }

    #[getter]
    fn coords(&self) -> Vec<(i32, i32)> {
        self.inner.coords.clone()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges.clone()
    }

    #[getter]
    fn adjacency(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.adjacency_norm)
    }

    fn __repr__(&self) -> String {
        format!(
            "PatchGraph(id={:?}, label={}, nodes={}, edges={})",
            self.inner.id,
            self.inner.label,
            self.inner.n_nodes(),
            self.inner.edges.len()
        )
    }
}

fn graphs_from(graphs: &[Py<PyPatchGraph>], py: Python<'_>) -> Vec<graphbuild::PatchGraph> {
    graphs.iter().map(|g| g.borrow(py).inner.clone()).collect()
}

/// Trained classifier parameters together with the architecture they fit.
#[pyclass(name = "Model", module = "rgp")]
struct PyModel {
    params: ParamSet,
    config: ModelConfig,
}

fn model_config(
    gcn_dims: Vec<usize>,
    n_layers: usize,
    n_heads: usize,
    n_keep: usize,
    n_classes: usize,
) -> PyResult<ModelConfig> {
    let gcn = GcnParams::new(gcn_dims).map_err(py_err)?;
    let cfg = ModelConfig {
        transformer: TransformerParams {
            n_layers,
            n_heads,
            model_dim: gcn.out_dim(),
            mlp_ratio: 4,
            n_classes,
        },
        pool: PoolParams { n_keep },
        gcn,
    };
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Reads the architecture back from parameter shapes.
fn infer_config(params: &ParamSet, n_heads: usize, n_keep: usize) -> PyResult<ModelConfig> {
    let shape = |name: &str| {
        params
            .get(name)
            .map(Array2::dim)
            .ok_or_else(|| PyValueError::new_err(format!("checkpoint lacks {name}")))
    };
    let mut dims = vec![shape("gcn.0.w")?.0];
    let mut l = 0;
    while let Some(w) = params.get(&GcnParams::weight_name(l)) {
        dims.push(w.ncols());
        l += 1;
    }
    let n_layers = (0..)
        .take_while(|&l| params.get(&TransformerParams::tensor_name(l, "wq")).is_some())
        .count();
    let n_classes = shape("head.1.w")?.1;
    let mlp_ratio = shape("tf.0.mlp.w1").map_or(4, |(d, h)| h / d.max(1));
    let mut cfg = model_config(dims, n_layers, n_heads, n_keep, n_classes)?;
    cfg.transformer.mlp_ratio = mlp_ratio;
    Ok(cfg)
}

fn denoiser_if(flag: bool, seed: u64) -> Option<DenoiserConfig> {
    flag.then(|| DenoiserConfig {
        seed,
        ..Default::default()
    })
}

#[pymethods]
impl PyModel {
    /// Fresh, untrained parameters.
    #[new]
    #[pyo3(signature = (seed=0, gcn_dims=vec![64, 128, 128], n_layers=2, n_heads=4, n_keep=100, n_classes=5))]
    fn new(
        seed: u64,
        gcn_dims: Vec<usize>,
        n_layers: usize,
        n_heads: usize,
        n_keep: usize,
        n_classes: usize,
    ) -> PyResult<Self> {
        let config = model_config(gcn_dims, n_layers, n_heads, n_keep, n_classes)?;
        let params = config.init_params(seed).map_err(py_err)?;
        Ok(Self { params, config })
    }

    #[staticmethod]
    #[pyo3(signature = (path, n_heads=4, n_keep=100))]
    fn load(path: PathBuf, n_heads: usize, n_keep: usize) -> PyResult<Self> {
        let params = ParamSet::load(&path).map_err(py_err)?;
        let config = infer_config(&params, n_heads, n_keep)?;
        Ok(Self { params, config })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.params.save(&path).map_err(py_err)
    }

    #[getter]
    fn parameter_names(&self) -> Vec<String> {
        self.params.names().to_vec()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    #[pyo3(signature = (graph, denoiser=false, denoiser_seed=0))]
    fn logits(&self, graph: &PyPatchGraph, denoiser: bool, denoiser_seed: u64) -> PyResult<Vec<f64>> {
        let den = denoiser_if(denoiser, denoiser_seed);
        let out = self
            .config
            .forward(&graph.inner, &self.params.bind(), den.as_ref())
            .map_err(py_err)?;
        Ok(out.value().iter().copied().collect())
    }

    #[pyo3(signature = (graph, denoiser=false, denoiser_seed=0))]
    fn predict(&self, graph: &PyPatchGraph, denoiser: bool, denoiser_seed: u64) -> PyResult<usize> {
        let den = denoiser_if(denoiser, denoiser_seed);
        trainer::predict(&self.params, &self.config, &graph.inner, den.as_ref()).map_err(py_err)
    }

    #[pyo3(signature = (graphs, denoiser=false, denoiser_seed=0))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        graphs: Vec<Py<PyPatchGraph>>,
        denoiser: bool,
        denoiser_seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let den = denoiser_if(denoiser, denoiser_seed);
        let r =
            trainer::evaluate(&self.params, &self.config, &graphs_from(&graphs, py), den.as_ref()).map_err(py_err)?;
        report_dict(py, &r)
    }
}

/// Trains a classifier; returns `(model, train_report)`.
#[pyfunction]
#[pyo3(signature = (graphs, epochs=60, learning_rate=1e-3, weight_decay=5e-5, seed=0, denoiser=false, n_classes=5, gcn_dims=vec![64, 128, 128], n_layers=2, n_heads=4, n_keep=100))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    graphs: Vec<Py<PyPatchGraph>>,
    epochs: usize,
    learning_rate: f64,
    weight_decay: f64,
    seed: u64,
    denoiser: bool,
    n_classes: usize,
    gcn_dims: Vec<usize>,
    n_layers: usize,
    n_heads: usize,
    n_keep: usize,
) -> PyResult<(PyModel, Bound<'py, PyDict>)> {
    let config = model_config(gcn_dims, n_layers, n_heads, n_keep, n_classes)?;
    let tc = TrainConfig {
        epochs,
        learning_rate,
        weight_decay,
        seed,
        denoiser_enabled: denoiser,
        model: config.clone(),
        ..Default::default()
    };
    let (params, report) = trainer::train(&graphs_from(&graphs, py), &tc).map_err(py_err)?;
    Ok((PyModel { params, config }, report_dict(py, &report)?))
}

/// Applies one corruption to an RGB image; returns the new pixel bytes.
#[pyfunction]
#[pyo3(signature = (pixels, width, height, kind, severity, seed=0))]
fn corrupt<'py>(
    py: Python<'py>,
    pixels: &[u8],
    width: usize,
    height: usize,
    kind: &str,
    severity: u8,
    seed: u64,
) -> PyResult<Bound<'py, PyBytes>> {
    let kind: CorruptionKind = kind.parse().map_err(py_err)?;
    let spec = CorruptionSpec::new(kind, severity, seed).map_err(py_err)?;
    let out = spec.apply(&to_image(pixels, width, height)?);
    Ok(PyBytes::new(py, &out.pixels))
}

#[pyfunction]
fn corruption_kinds() -> Vec<&'static str> {
    CorruptionKind::ALL.iter().map(|k| k.name()).collect()
}

#[pyfunction]
fn normalized_adjacency(edges: Vec<(usize, usize)>, n_nodes: usize) -> PyResult<Vec<Vec<f64>>> {
    if edges.iter().any(|&(u, v)| u >= n_nodes || v >= n_nodes) {
        return Err(PyValueError::new_err("edge endpoint out of range"));
    }
    Ok(to_rows(&graphbuild::normalized_adjacency(&edges, n_nodes)))
}

#[pyfunction]
fn knn_graph(coords: Vec<(i32, i32)>, k: usize) -> PyResult<Vec<(usize, usize)>> {
    graphbuild::knn_graph(&coords, k).map_err(py_err)
}

#[pyfunction]
fn quadratic_kappa(confusion: Vec<Vec<u64>>) -> PyResult<f64> {
    let n = confusion.len();
    if confusion.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("confusion matrix must be square"));
    }
    let m = Array2::from_shape_vec((n, n), confusion.into_iter().flatten().collect()).expect("square");
    trainer::quadratic_kappa(&m).map_err(py_err)
}

/// Untrained-prior denoising of a node signal on a normalized adjacency.
#[pyfunction]
#[pyo3(signature = (x, adjacency, seed=0, max_iters=200, hidden_width=256, learning_rate=0.01))]
fn fit_denoise<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    adjacency: Vec<Vec<f64>>,
    seed: u64,
    max_iters: usize,
    hidden_width: usize,
    learning_rate: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = DenoiserConfig {
        seed,
        max_iters,
        hidden_width,
        learning_rate,
        ..Default::default()
    };
    let r = core_fit_denoise(&to_array(x)?, &to_array(adjacency)?, &cfg).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("x_denoised", to_rows(&r.x_denoised))?;
    d.set_item("iterations_run", r.iterations_run)?;
    d.set_item("loss_history", r.loss_history)?;
    d.set_item(
        "stop_reason",
        match r.stop_reason {
            StopReason::Budget => "budget",
            StopReason::Plateau => "plateau",
        },
    )?;
    Ok(d)
}

/// The seeded synthetic dataset; images are generated on demand.
#[pyclass(name = "SynthDataset", module = "rgp", frozen)]
struct PySynthDataset {
    inner: SynthConfig,
}

#[pymethods]
impl PySynthDataset {
    #[new]
    #[pyo3(signature = (n_per_class=40, n_classes=5, width=1024, height=1024, seed=0))]
    fn new(n_per_class: usize, n_classes: usize, width: usize, height: usize, seed: u64) -> Self {
        Self {
            inner: SynthConfig {
                n_per_class,
                n_classes,
                width,
                height,
                seed,
            },
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn id(&self, index: usize) -> PyResult<String> {
        self.check(index)?;
        Ok(self.inner.id(index))
    }

    fn label(&self, index: usize) -> PyResult<usize> {
        self.check(index)?;
        Ok(self.inner.label(index))
    }

    /// `(pixels, width, height)`.
    fn image<'py>(&self, py: Python<'py>, index: usize) -> PyResult<(Bound<'py, PyBytes>, usize, usize)> {
        self.check(index)?;
        let img = self.inner.generate(index);
        Ok((PyBytes::new(py, &img.pixels), img.width, img.height))
    }

    #[pyo3(signature = (index, patch_side=256, k=8))]
    fn graph(&self, index: usize, patch_side: usize, k: usize) -> PyResult<PyPatchGraph> {
        self.check(index)?;
        let g = graphbuild::build_patch_graph(
            &self.inner.generate(index),
            self.inner.id(index),
            self.inner.label(index),
            patch_side,
            k,
        )
        .map_err(py_err)?;
        Ok(PyPatchGraph { inner: g })
    }
}

impl PySynthDataset {
    fn check(&self, index: usize) -> PyResult<()> {
        if index >= self.inner.len() {
            return Err(pyo3::exceptions::PyIndexError::new_err(index));
        }
        Ok(())
    }
}

#[pymodule]
fn rgp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPatchGraph>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySynthDataset>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt, m)?)?;
    m.add_function(wrap_pyfunction!(corruption_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_adjacency, m)?)?;
    m.add_function(wrap_pyfunction!(knn_graph, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(fit_denoise, m)?)?;
    m.add("FEATURE_DIM", graphbuild::FEATURE_DIM)?;
    Ok(())
}
