use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use topoproj::baselines::{dbscan_sweep, write_cluster_stats_csv};
use topoproj::umatrix::{render_umatrix, RenderOptions};
use topoproj::{FitSpec, Method, ModelBundle, Normalizer, NormalizerKind, ProjectionConfig, UMatrix};
use topoproj_harness::config::DataFormat;
use topoproj_harness::data::{write_dataset_csv, write_table_csv};
use topoproj_harness::experiment::repeat_seed;
use topoproj_harness::{
    generate_synthetic_spectra, load_csv, run_loo_eval, run_split_eval, run_sweep, ExperimentConfig, Grid, Inputs,
    RunManifest, Schema, SynthParams,
};

#[derive(Parser)]
#[command(name = "topoproj", version, about = "Topological projection on self-organizing maps")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides `protocol.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model bundle on the configured data.
    Train {
        #[command(flatten)]
        over: Overrides,
        /// Output bundle file name inside the output directory.
        #[arg(long, default_value = "model.json")]
        model: String,
    },
    /// Predict targets for a CSV of feature rows.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Column holding sample ids in the input.
        #[arg(long)]
        id_column: Option<String>,
        #[arg(long, default_value = "predictions.csv")]
        output: String,
    },
    /// Train/test split evaluation with cross-validated model selection.
    Eval {
        #[command(flatten)]
        over: Overrides,
    },
    /// Leave-one-out evaluation of every map cell.
    Loo {
        #[command(flatten)]
        over: Overrides,
    },
    /// Grid size x N x normalizer x method sweep.
    Sweep {
        #[command(flatten)]
        over: Overrides,
    },
    /// Render a bundle's U-matrix with its anchors.
    Umatrix {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 8)]
        scale: usize,
        #[arg(long, default_value = "umatrix.pgm")]
        output: String,
    },
    /// Generate synthetic labeled and unlabeled spectra.
    Synth {
        #[arg(long, default_value_t = 5000)]
        n_unlabeled: usize,
        #[arg(long, default_value_t = 67)]
        n_labeled: usize,
        #[arg(long, default_value_t = 512)]
        channels: usize,
        #[arg(long, default_value_t = 13)]
        targets: usize,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
    },
    /// DBSCAN cluster statistics over a list of eps values.
    DbscanSweep {
        #[command(flatten)]
        over: Overrides,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        min_samples: usize,
    },
}

/// Command-line overrides for configuration keys.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    /// Read the data as the appliance-energy CSV.
    #[arg(long)]
    energy: bool,
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<String>>,
    #[arg(long)]
    id_column: Option<String>,
    #[arg(long, value_delimiter = ',')]
    normalizers: Option<Vec<NormalizerKind>>,
    #[arg(long, value_delimiter = ',')]
    grids: Option<Vec<Grid>>,
    #[arg(long, value_delimiter = ',')]
    n_neighbors: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    labeled_size: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    pca_threshold: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let d = &mut cfg.data;
        if let Some(v) = &self.data {
            d.path = Some(v.clone());
        }
        if let Some(v) = &self.unlabeled {
            d.unlabeled_path = Some(v.clone());
        }
        if self.energy {
            d.format = DataFormat::Energy;
        }
        if let Some(v) = &self.targets {
            d.target_columns = v.clone();
        }
        if let Some(v) = &self.id_column {
            d.id_column = Some(v.clone());
        }
        let p = &mut cfg.protocol;
        if let Some(v) = &self.normalizers {
            p.normalizers = v.clone();
        }
        if let Some(v) = &self.grids {
            p.grids = v.clone();
        }
        if let Some(v) = &self.n_neighbors {
            p.n_neighbors = v.clone();
        }
        if let Some(v) = &self.methods {
            p.methods = v.clone();
        }
        if self.labeled_size.is_some() {
            p.labeled_size = self.labeled_size;
        }
        if let Some(v) = self.repeats {
            p.repeats = v;
        }
        if let Some(v) = self.folds {
            p.folds = v;
        }
        if self.pca_threshold.is_some() {
            p.pca_threshold = self.pca_threshold;
        }
        if self.jobs.is_some() {
            p.jobs = self.jobs;
        }
        if let Some(v) = self.iterations {
            cfg.som.iterations = v;
        }
    }
}

struct Run {
    cli_args: Vec<String>,
    out_dir: PathBuf,
    started: Instant,
    outputs: Vec<PathBuf>,
    inputs: Vec<PathBuf>,
}

impl Run {
    fn out(&mut self, name: &str) -> PathBuf {
        let p = self.out_dir.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn finish(mut self, command: &str, cfg: Option<&ExperimentConfig>) -> Result<()> {
        let seeds =
            cfg.map_or_else(Vec::new, |c| (0..c.protocol.repeats).map(|r| repeat_seed(c.protocol.seed, r)).collect());
        let path = self.out("manifest.json");
        RunManifest {
            tool: "topoproj".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: self.cli_args.clone(),
            config: cfg.cloned(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            repeat_seeds: seeds,
            elapsed_seconds: self.started.elapsed().as_secs_f64(),
        }
        .write(&path)?;
        for p in &self.outputs {
            println!("wrote {}", p.display());
        }
        Ok(())
    }
}

fn load_config(cli: &Cli, over: Option<&Overrides>) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = over {
        o.apply(&mut cfg);
    }
    if let Some(s) = cli.seed {
        cfg.protocol.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn data_inputs(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    cfg.data.path.iter().chain(&cfg.data.unlabeled_path).cloned().collect()
}

fn train(cli: &Cli, run: &mut Run, over: &Overrides, model: &str) -> Result<ExperimentConfig> {
    let cfg = load_config(cli, Some(over))?;
    let inputs = Inputs::load(&cfg.data)?;
    run.inputs = data_inputs(&cfg);
    let p = &cfg.protocol;
    let labeled = inputs.labeled();
    let pool = inputs.unlabeled().unwrap_or(labeled);
    let grid = p.grids[0];
    let mut projection = ProjectionConfig::new(p.methods[0], p.n_neighbors[0]);
    projection.poly_degree = p.poly_degree;
    projection.seed = p.seed;
    let bundle = ModelBundle::fit(FitSpec {
        unlabeled: &pool.features,
        x_labeled: &labeled.features,
        y_labeled: labeled.targets()?,
        labeled_ids: Some(&labeled.ids),
        normalizer: p.normalizers[0],
        pca_threshold: if p.pca_before_som { p.pca_threshold } else { None },
        som: cfg.som.config(grid, p.seed),
        projection,
    })?;
    bundle.save(run.out(model))?;
    bundle.normalizer.write_csv(run.out("normalizer.csv"), &bundle.feature_names)?;
    if let Some(pca) = &bundle.pca {
        pca.write_csv(run.out("pca.csv"))?;
    }
    bundle.geodesic.write_csv(run.out("geodesic.csv"))?;
    let rendered = render_umatrix(
        &UMatrix::from_som(&bundle.som)?,
        &bundle.anchors,
        run.out("umatrix.pgm"),
        &RenderOptions::default(),
    )?;
    run.outputs.push(rendered.anchors_csv);
    run.outputs.extend(rendered.svg);
    eprintln!(
        "trained {grid} map on {} rows, {} anchors, quantization error {:.4}",
        pool.n_rows(),
        bundle.anchors.len(),
        bundle.som.quantization_error(&bundle.transform(&pool.features)?)?
    );
    Ok(cfg)
}

fn predict(run: &mut Run, model: &Path, input: &Path, id_column: Option<&str>, output: &str) -> Result<()> {
    let bundle = ModelBundle::load(model).with_context(|| format!("loading {}", model.display()))?;
    let schema = Schema {
        feature_columns: Some(bundle.feature_names.clone()),
        target_columns: Vec::new(),
        id_column: id_column.map(str::to_string),
        ignore_columns: Vec::new(),
    };
    let table = load_csv(input, &schema)?;
    run.inputs = vec![model.to_path_buf(), input.to_path_buf()];
    let pred = bundle.predict_dataset(&table.features)?;
    let mut w = csv::Writer::from_path(run.out(output))?;
    let mut header = vec!["id".to_string()];
    header.extend(bundle.target_names.iter().cloned());
    w.write_record(&header)?;
    for (id, row) in table.ids.iter().zip(pred.rows()) {
        let mut rec = vec![id.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let mut run = Run {
        cli_args: std::env::args().collect(),
        out_dir: cli.out_dir.clone(),
        started: Instant::now(),
        outputs: Vec::new(),
        inputs: Vec::new(),
    };
    match &cli.command {
        Command::Train { over, model } => {
            let cfg = train(&cli, &mut run, over, model)?;
            run.finish("train", Some(&cfg))
        }
        Command::Predict { model, input, id_column, output } => {
            predict(&mut run, model, input, id_column.as_deref(), output)?;
            run.finish("predict", None)
        }
        Command::Eval { over } => {
            let cfg = load_config(&cli, Some(over))?;
            let inputs = Inputs::load(&cfg.data)?;
            run.inputs = data_inputs(&cfg);
            let report = run_split_eval(&cfg, &inputs)?;
            report.write_csv(run.out("eval_records.csv"))?;
            report.write_summary_csv(run.out("eval_summary.csv"))?;
            run.finish("eval", Some(&cfg))
        }
        Command::Loo { over } => {
            let cfg = load_config(&cli, Some(over))?;
            let inputs = Inputs::load(&cfg.data)?;
            run.inputs = data_inputs(&cfg);
            let report = run_loo_eval(&cfg, &inputs)?;
            report.write_csv(run.out("loo_records.csv"))?;
            report.write_summary_csv(run.out("loo_summary.csv"))?;
            run.finish("loo", Some(&cfg))
        }
        Command::Sweep { over } => {
            let cfg = load_config(&cli, Some(over))?;
            let inputs = Inputs::load(&cfg.data)?;
            run.inputs = data_inputs(&cfg);
            let table = run_sweep(&cfg, &inputs)?;
            table.write_csv(run.out("sweep.csv"))?;
            table.write_layout_csv(run.out("sweep_table.csv"))?;
            run.finish("sweep", Some(&cfg))
        }
        Command::Umatrix { model, scale, output } => {
            let bundle = ModelBundle::load(model).with_context(|| format!("loading {}", model.display()))?;
            run.inputs = vec![model.clone()];
            let opts = RenderOptions { scale: *scale, ..Default::default() };
            let rendered = render_umatrix(&UMatrix::from_som(&bundle.som)?, &bundle.anchors, run.out(output), &opts)?;
            run.outputs.push(rendered.anchors_csv);
            run.outputs.extend(rendered.svg);
            run.finish("umatrix", None)
        }
        Command::Synth { n_unlabeled, n_labeled, channels, targets, noise } => {
            let seed = cli.seed.unwrap_or(0);
            let data = generate_synthetic_spectra(&SynthParams {
                n_unlabeled: *n_unlabeled,
                n_labeled: *n_labeled,
                n_channels: *channels,
                n_targets: *targets,
                noise: *noise,
                seed,
            })?;
            write_table_csv(&data.labeled, run.out("labeled.csv"))?;
            write_table_csv(&data.unlabeled.without_targets(), run.out("unlabeled.csv"))?;
            let truth = topoproj_harness::LabeledTable {
                ids: data.unlabeled.ids.clone(),
                features: data.latent_unlabeled.clone(),
                targets: data.unlabeled.targets.clone(),
            };
            write_table_csv(&truth, run.out("unlabeled_truth.csv"))?;
            write_dataset_csv(&data.latent_labeled, run.out("labeled_latents.csv"))?;
            let mut cfg = ExperimentConfig::default();
            cfg.data.path = Some("labeled.csv".into());
            cfg.data.unlabeled_path = Some("unlabeled.csv".into());
            cfg.data.id_column = Some("id".into());
            cfg.data.target_columns = data.labeled.targets()?.columns().to_vec();
            cfg.protocol.seed = seed;
            std::fs::write(run.out("experiment.toml"), cfg.to_toml_string())?;
            run.finish("synth", None)
        }
        Command::DbscanSweep { over, eps, min_samples } => {
            let cfg = load_config(&cli, Some(over))?;
            let inputs = Inputs::load(&cfg.data)?;
            run.inputs = data_inputs(&cfg);
            let x = match inputs.unlabeled() {
                Some(u) => &u.features,
                None => &inputs.labeled().features,
            };
            let Some(&kind) = cfg.protocol.normalizers.first() else { bail!("no normalizer configured") };
            let z = Normalizer::fit(x, kind)?.apply(x)?;
            let stats = dbscan_sweep(&z, eps, *min_samples)?;
            write_cluster_stats_csv(&stats, run.out("dbscan_sweep.csv"))?;
            run.finish("dbscan-sweep", Some(&cfg))
        }
    }
}
