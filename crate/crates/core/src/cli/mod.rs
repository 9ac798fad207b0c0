//! `rgp` command line: synth, corrupt, build, train, eval, experiment.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use config::{EvalSplit, RunConfig, KEYS};

use crate::corruption::{parse_kinds, plan_corruption, write_manifest};
use crate::error::{Error, Result};
use crate::graphbuild::{build_patch_graph, read_graph, write_graph, PatchGraph};
use crate::imageio::{read_png, write_png};
use crate::numcore::ParamSet;
use crate::synth::{write_labels, PngDir, LABELS_FILE};
use crate::trainer::{
    evaluate, experiment_matrix, stratified_split, train, write_loss_csv, write_results_csv, ImageSource, MetricsReport,
};
use crate::util::atomic_write;

pub const GRAPH_EXT: &str = "pgr";

#[derive(Debug, Parser)]
#[command(
    name = "rgp",
    version,
    about = "Artifact-robust graph classification of tiled images"
)]
pub struct Cli {
    /// Flat key = value run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base seed; overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker count. Work currently runs on one thread; outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic image dataset.
    Synth,
    /// Write corrupted copies of the images plus a manifest.
    Corrupt {
        #[arg(long)]
        fraction: Option<f64>,
        /// Comma-separated kinds, e.g. `bright,motion`.
        #[arg(long)]
        kinds: Option<String>,
    },
    /// Tile, featurize and connect every image into a graph file.
    Build,
    /// Train on the train split of the graphs.
    Train,
    /// Evaluate a checkpoint.
    Eval,
    /// Run the perturbation × denoiser experiment matrix.
    Experiment,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Corrupt { .. } => "corrupt",
            Command::Build => "build",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Experiment => "experiment",
        }
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let env = env_logger::Env::new().filter_or("RGP_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.set("out_dir", &out.to_string_lossy())?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Command::Corrupt { fraction, kinds } = &cli.command {
        if let Some(f) = fraction {
            cfg.set("corrupt.fraction", &f.to_string())?;
        }
        if let Some(k) = kinds {
            parse_kinds(k)?;
            cfg.set("corrupt.kinds", k)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    atomic_write(
        &out.join(format!("config.{}.txt", cli.command.name())),
        cfg.to_text().as_bytes(),
    )?;
    log::debug!("workers requested: {}", cli.workers);
    match cli.command {
        Command::Synth => cmd_synth(&cfg),
        Command::Corrupt { .. } => cmd_corrupt(&cfg),
        Command::Build => cmd_build(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Eval => cmd_eval(&cfg),
        Command::Experiment => cmd_experiment(&cfg),
    }
}

/// `<out>/images`: one PNG per image and `labels.csv`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let synth = cfg.synth()?;
    let dir = cfg.out_dir().join("images");
    std::fs::create_dir_all(&dir)?;
    for i in 0..synth.len() {
        write_png(&dir.join(format!("{}.png", synth.id(i))), &synth.generate(i))?;
    }
    write_labels(&dir.join(LABELS_FILE), &synth.labels())?;
    log::info!("wrote {} images to {}", synth.len(), dir.display());
    Ok(())
}

/// `<out>/corrupted`: every input image, a planned fraction of them
/// corrupted, with `labels.csv` and `manifest.csv`.
pub fn cmd_corrupt(cfg: &RunConfig) -> Result<()> {
    let src = PngDir::open(&cfg.images_dir())?;
    let (fraction, kinds, severities) = cfg.corruption()?;
    let ids: Vec<String> = (0..src.len()).map(|i| src.id(i)).collect();
    let manifest = plan_corruption(&ids, fraction, &kinds, severities, cfg.seed()?)?;
    let dir = cfg.out_dir().join("corrupted");
    std::fs::create_dir_all(&dir)?;
    for (i, id) in ids.iter().enumerate() {
        let dst = dir.join(format!("{id}.png"));
        match manifest.iter().find(|e| &e.item_id == id) {
            Some(e) => write_png(&dst, &e.spec().apply(&src.image(i)?))?,
            None => atomic_write(&dst, &std::fs::read(src.path(i))?)?,
        }
    }
    write_labels(&dir.join(LABELS_FILE), &src.items)?;
    write_manifest(&dir.join("manifest.csv"), &manifest)?;
    log::info!("corrupted {} of {} images", manifest.len(), src.len());
    Ok(())
}

/// `<out>/graphs/<id>.pgr` for every image.
pub fn cmd_build(cfg: &RunConfig) -> Result<()> {
    let src = PngDir::open(&cfg.images_dir())?;
    let dir = cfg.out_dir().join("graphs");
    std::fs::create_dir_all(&dir)?;
    for i in 0..src.len() {
        let g = build_patch_graph(
            &read_png(&src.path(i))?,
            src.id(i),
            src.label(i),
            cfg.patch_side()?,
            cfg.k()?,
        )?;
        write_graph(&dir.join(format!("{}.{GRAPH_EXT}", g.id)), &g)?;
    }
    write_labels(&dir.join(LABELS_FILE), &src.items)?;
    log::info!("built {} graphs in {}", src.len(), dir.display());
    Ok(())
}

/// Graphs listed in `labels.csv` of the graph directory, in that order.
pub fn load_graphs(dir: &Path) -> Result<Vec<PatchGraph>> {
    let labels = crate::synth::read_labels(&dir.join(LABELS_FILE))?;
    labels
        .iter()
        .map(|(id, _)| read_graph(&dir.join(format!("{id}.{GRAPH_EXT}"))))
        .collect()
}

fn split_graphs(cfg: &RunConfig, graphs: &[PatchGraph]) -> Result<(Vec<usize>, Vec<usize>)> {
    let labels: Vec<usize> = graphs.iter().map(|g| g.label).collect();
    stratified_split(&labels, cfg.train()?.train_fraction, cfg.seed()?)
}

fn pick(graphs: &[PatchGraph], idx: &[usize]) -> Vec<PatchGraph> {
    idx.iter().map(|&i| graphs[i].clone()).collect()
}

fn metrics_csv(rows: &[(&str, bool, &MetricsReport)]) -> String {
    let mut s = String::from("split,denoiser,n,accuracy,kappa\n");
    for (split, den, r) in rows {
        let n: u64 = r.confusion.sum();
        let _ = writeln!(
            s,
            "{split},{},{n},{},{}",
            if *den { "on" } else { "off" },
            r.accuracy,
            r.kappa_quadratic
        );
    }
    s
}

fn confusion_csv(r: &MetricsReport) -> String {
    let c = r.confusion.ncols();
    let mut s = String::from("truth");
    for j in 0..c {
        let _ = write!(s, ",pred{j}");
    }
    s.push('\n');
    for (i, row) in r.confusion.rows().into_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "{i},{}", cells.join(","));
    }
    s
}

/// `<out>/model.rgp`, `train_metrics.csv`, `train_loss.csv`, `split.csv`.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let tc = cfg.train()?;
    let graphs = load_graphs(&cfg.graph_dir())?;
    let (train_idx, test_idx) = split_graphs(cfg, &graphs)?;
    let (params, report) = train(&pick(&graphs, &train_idx), &tc)?;
    let out = cfg.out_dir();
    params.save(&out.join("model.rgp"))?;
    atomic_write(
        &out.join("train_metrics.csv"),
        metrics_csv(&[("train", tc.denoiser_enabled, &report)]).as_bytes(),
    )?;
    let mut loss = String::from("epoch,loss\n");
    for (e, l) in report.loss_history.iter().enumerate() {
        let _ = writeln!(loss, "{},{l}", e + 1);
    }
    atomic_write(&out.join("train_loss.csv"), loss.as_bytes())?;
    let mut split = String::from("id,split\n");
    for (idx, name) in [(&train_idx, "train"), (&test_idx, "test")] {
        for &i in idx {
            let _ = writeln!(split, "{},{name}", graphs[i].id);
        }
    }
    atomic_write(&out.join("split.csv"), split.as_bytes())?;
    println!("train accuracy {} kappa {}", report.accuracy, report.kappa_quadratic);
    Ok(())
}

/// `<out>/eval_metrics.csv` and `eval_confusion.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let tc = cfg.train()?;
    let ckpt = cfg.checkpoint();
    if !ckpt.exists() {
        return Err(Error::Missing(ckpt));
    }
    let params = ParamSet::load(&ckpt)?;
    let graphs = load_graphs(&cfg.graph_dir())?;
    let (train_idx, test_idx) = split_graphs(cfg, &graphs)?;
    let (name, subset) = match cfg.eval_split()? {
        EvalSplit::Train => ("train", pick(&graphs, &train_idx)),
        EvalSplit::Test => ("test", pick(&graphs, &test_idx)),
        EvalSplit::All => ("all", graphs),
    };
    let report = evaluate(&params, &tc.model, &subset, tc.active_denoiser())?;
    let out = cfg.out_dir();
    atomic_write(
        &out.join("eval_metrics.csv"),
        metrics_csv(&[(name, tc.denoiser_enabled, &report)]).as_bytes(),
    )?;
    atomic_write(&out.join("eval_confusion.csv"), confusion_csv(&report).as_bytes())?;
    println!("{name} accuracy {} kappa {}", report.accuracy, report.kappa_quadratic);
    Ok(())
}

/// `<out>/results.csv`, `loss_history.csv` and `checkpoints/`.
pub fn cmd_experiment(cfg: &RunConfig) -> Result<()> {
    let exp = cfg.experiment()?;
    let output = if cfg.experiment_uses_images()? {
        experiment_matrix(&PngDir::open(&cfg.images_dir())?, &exp)?
    } else {
        experiment_matrix(&cfg.synth()?, &exp)?
    };
    let out = cfg.out_dir();
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    for run in &output.runs {
        run.params.save(&ckpt_dir.join(format!("{}.rgp", run.file_stem())))?;
    }
    write_loss_csv(&out.join("loss_history.csv"), &output.runs)?;
    write_results_csv(&out.join("results.csv"), &output.rows)?;
    println!(
        "wrote {} result rows to {}",
        output.rows.len(),
        out.join("results.csv").display()
    );
    Ok(())
}
