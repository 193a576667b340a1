//! Command-line front end.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::block::{default_forests, BlockConfig};
use crate::cascade::{self, CascadeConfig, CascadeMode, CascadeModel, DepthSchedule};
use crate::dataset::{self, CategoricalEncoding, CsvOptions, Dataset, LabelColumn, Schema, SplitKind, SplitSpec};
use crate::error::{Error, Result};
use crate::forest::SampleWeighting;
use crate::margin::{AlphaConfig, AlphaOptimizer, MarginStats, MdLossParams, GAMMA_GRID, MU_GRID};
use crate::matrix::argmax;
use crate::{model_io, oracle};

#[derive(Debug, Parser)]
#[command(name = "mddf", version, about = "Margin-distribution deep forest")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Run the built-in oracle comparisons and exit.
    #[arg(long)]
    pub self_check: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a cascade and write the model and a per-layer report.
    Train(TrainArgs),
    /// Score a saved model on labelled data.
    Evaluate(EvaluateArgs),
    /// Write predicted classes and scores for a data file.
    Predict(PredictArgs),
    /// Search gamma, mu and depth schedule by held-out accuracy.
    GridSearch(GridArgs),
    /// Write the layer-wise representation [x, f_t(x)] of a data file.
    ExportFeatures(ExportArgs),
    /// Run the built-in oracle comparisons.
    SelfCheck,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Libsvm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Weighting {
    Resample,
    WeightedImpurity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Optimizer {
    Gradient,
    Bisection,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Data file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// CSV label column: header name, 0-based index, or `last`.
    #[arg(long, default_value = "last")]
    pub label_col: String,
    /// The CSV file has no header row.
    #[arg(long)]
    pub no_header: bool,
    /// One-hot encode categorical CSV columns.
    #[arg(long)]
    pub one_hot: bool,
    /// LIBSVM feature count (defaults to the largest index seen).
    #[arg(long)]
    pub n_features: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 10)]
    pub layers: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Trees per forest.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 0.8)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
    /// One of 2t+2, 4t+4, 8t+8, 16t+16.
    #[arg(long, default_value = "4t+4", value_parser = parse_schedule)]
    pub depth_schedule: DepthSchedule,
    /// full, same_forests, stacking_only, no_preconc or baseline_rf.
    #[arg(long, default_value = "full", value_parser = parse_mode)]
    pub mode: CascadeMode,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Layers without improvement before stopping; 0 trains all layers.
    #[arg(long, default_value_t = 2)]
    pub patience: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub min_improvement: f64,
    /// Share of the training data held out to drive early stopping.
    #[arg(long, default_value_t = 0.0)]
    pub validation_fraction: f64,
    #[arg(long, default_value_t = 4.0)]
    pub alpha_max: f64,
    #[arg(long, value_enum, default_value_t = Optimizer::Gradient)]
    pub alpha_optimizer: Optimizer,
    #[arg(long, value_enum, default_value_t = Weighting::Resample)]
    pub weighting: Weighting,
    /// Deal folds per class.
    #[arg(long)]
    pub stratified_folds: bool,
    /// Pass each forest's class vector forward instead of their mean.
    #[arg(long)]
    pub per_forest_concat: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Separate test file, parsed with the training file's encodings.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Hold out this share of --data as the test set instead.
    #[arg(long, conflicts_with = "test_data")]
    pub holdout: Option<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    /// Line-delimited JSON report.
    #[arg(long)]
    pub out_report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Metrics file (JSON); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Prediction CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Score candidates on this file instead of a split of --data.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Share of --data held out for scoring when --test-data is absent.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Comma-separated gamma values.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    /// Comma-separated mu values.
    #[arg(long, value_delimiter = ',')]
    pub mus: Option<Vec<f64>>,
    /// Comma-separated depth schedules.
    #[arg(long, value_delimiter = ',', value_parser = parse_schedule)]
    pub schedules: Option<Vec<DepthSchedule>>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Retrain the best candidate on all of --data and save it here.
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    #[arg(long)]
    pub out_report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory receiving layer_<t>.csv files.
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_schedule(s: &str) -> Result<DepthSchedule> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<CascadeMode> {
    s.parse()
}

impl ModelArgs {
    pub fn config(&self) -> Result<CascadeConfig> {
        let weighting = match self.weighting {
            Weighting::Resample => SampleWeighting::Resample,
            Weighting::WeightedImpurity => SampleWeighting::WeightedImpurity,
        };
        let mut forests = default_forests(self.trees, usize::MAX);
        for f in &mut forests {
            f.weighting = weighting;
        }
        let config = CascadeConfig {
            max_layers: self.layers,
            block: BlockConfig {
                k_folds: self.folds,
                forests,
                stratified_folds: self.stratified_folds,
                per_forest_concat: self.per_forest_concat,
                seed: 0,
            },
            loss: MdLossParams::new(self.gamma, self.mu)?,
            depth_schedule: self.depth_schedule,
            mode: self.mode,
            early_stop_patience: self.patience,
            min_improvement: self.min_improvement,
            validation_fraction: self.validation_fraction,
            alpha: AlphaConfig {
                alpha_max: self.alpha_max,
                optimizer: match self.alpha_optimizer {
                    Optimizer::Gradient => AlphaOptimizer::GradientDescent { max_iter: 200 },
                    Optimizer::Bisection => AlphaOptimizer::Bisection,
                },
            },
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

fn load(args: &DataArgs, path: &Path, schema: Option<&Schema>) -> Result<Dataset> {
    match args.format {
        Format::Csv => dataset::parse_csv_with(
            path,
            &CsvOptions {
                label_column: LabelColumn::parse(&args.label_col),
                has_header: !args.no_header,
                encoding: if args.one_hot {
                    CategoricalEncoding::OneHot
                } else {
                    CategoricalEncoding::Ordinal
                },
                schema: schema.cloned(),
                ..CsvOptions::default()
            },
        ),
        Format::Libsvm => {
            let n = args.n_features.or_else(|| schema.map(Schema::n_features));
            dataset::parse_libsvm_with(path, n, schema)
        }
    }
}

/// Size and content hash of a data source.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fingerprint {
    pub path: String,
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub sha256: String,
}

fn fingerprint(path: &Path, data: &Dataset) -> Result<Fingerprint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Fingerprint {
        path: path.display().to_string(),
        m: data.n_samples(),
        n: data.n_features(),
        s: data.n_classes(),
        sha256,
    })
}

/// One line of the training report.
#[derive(Clone, Debug, Serialize)]
pub struct LayerRecord {
    pub record: &'static str,
    pub layer: usize,
    pub alpha: f64,
    pub max_depth: usize,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub train_objective: f64,
    pub train_margin: MarginStats,
    pub train_aggregate_margin: MarginStats,
    pub test_margin: Option<MarginStats>,
    pub test_aggregate_margin: Option<MarginStats>,
    pub validation_accuracy: Option<f64>,
    pub wall_time_ms: u64,
}

/// Final line of the training report.
#[derive(Clone, Debug, Serialize)]
pub struct SummaryRecord {
    pub record: &'static str,
    pub n_layers: usize,
    pub alphas: Vec<f64>,
    pub final_accuracy: Option<f64>,
    pub final_train_accuracy: f64,
    pub seed: u64,
    pub config: CascadeConfig,
    pub train_data: Fingerprint,
    pub test_data: Option<Fingerprint>,
    pub wall_time_ms: u64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub layers: Vec<LayerRecord>,
    pub summary: SummaryRecord,
}

impl RunReport {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for l in &self.layers {
            out.push_str(&serde_json::to_string(l).expect("report serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.summary).expect("report serializes"));
        out.push('\n');
        out
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn holdout_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    dataset::split(
        data,
        &SplitSpec {
            kind: SplitKind::StratifiedHoldout { fraction },
            seed,
        },
    )
}

/// Trains per the arguments and returns the model with its report.
pub fn run_train(args: &TrainArgs) -> Result<(CascadeModel, RunReport)> {
    let config = args.model.config()?;
    let full = load(&args.data, &args.data.data, None)?;
    let train_fp = fingerprint(&args.data.data, &full)?;
    let (train, test, test_fp) = match (&args.test_data, args.holdout) {
        (Some(path), _) => {
            let test = load(&args.data, path, Some(full.schema()))?;
            let fp = fingerprint(path, &test)?;
            (full, Some(test), Some(fp))
        }
        (None, Some(fraction)) => {
            let (tr, te) = holdout_split(&full, fraction, config.seed)?;
            let fp = Fingerprint {
                path: format!("{} (holdout {fraction})", train_fp.path),
                m: te.n_samples(),
                ..train_fp.clone()
            };
            (tr, Some(te), Some(fp))
        }
        (None, None) => (full, None, None),
    };

    let started = std::time::Instant::now();
    let training = cascade::train_timed(&train, &config)?;
    let model = training.model;
    let prefixes = match &test {
        Some(t) => Some(model.evaluate_prefixes(t)?),
        None => None,
    };

    let layers: Vec<LayerRecord> = model
        .training_report()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let p = prefixes.as_ref().map(|p| &p[i]);
            LayerRecord {
                record: "layer",
                layer: r.layer,
                alpha: r.alpha,
                max_depth: r.max_depth,
                train_accuracy: r.train_accuracy,
                test_accuracy: p.map(|p| p.accuracy),
                train_objective: r.train_objective,
                train_margin: r.margin.clone(),
                train_aggregate_margin: r.aggregate_margin.clone(),
                test_margin: p.map(|p| p.margin.clone()),
                test_aggregate_margin: p.map(|p| p.aggregate_margin.clone()),
                validation_accuracy: r.validation_accuracy,
                wall_time_ms: training.layer_times_ms[i],
            }
        })
        .collect();
    let summary = SummaryRecord {
        record: "summary",
        n_layers: model.n_layers(),
        alphas: model.alphas(),
        final_accuracy: prefixes.as_ref().and_then(|p| p.last()).map(|p| p.accuracy),
        final_train_accuracy: model.accuracy(&train)?,
        seed: config.seed,
        config,
        train_data: train_fp,
        test_data: test_fp,
        wall_time_ms: started.elapsed().as_millis() as u64,
    };
    Ok((model, RunReport { layers, summary }))
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let (model, report) = run_train(args)?;
    if let Some(path) = &args.out_model {
        model_io::save(&model, path)?;
    }
    let jsonl = report.to_jsonl();
    match &args.out_report {
        Some(path) => write_file(path, &jsonl)?,
        None => print!("{jsonl}"),
    }
    let s = &report.summary;
    log::info!(
        "{} layers, train accuracy {:.4}{}",
        s.n_layers,
        s.final_train_accuracy,
        s.final_accuracy
            .map_or(String::new(), |a| format!(", test accuracy {a:.4}"))
    );
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub n_samples: usize,
    pub class_names: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub prefixes: Vec<cascade::PrefixEvaluation>,
}

fn load_for_model(model: &CascadeModel, args: &DataArgs) -> Result<Dataset> {
    let data = load(args, &args.data, model.schema())?;
    if data.n_features() != model.raw_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.raw_dim(),
            got: data.n_features(),
        });
    }
    if data.n_classes() > model.n_classes() {
        return Err(Error::Data(format!(
            "data has {} classes, model knows {}",
            data.n_classes(),
            model.n_classes()
        )));
    }
    Ok(data)
}

pub fn evaluate(model: &CascadeModel, data: &Dataset) -> Result<Evaluation> {
    let s = model.n_classes();
    let pred = model.predict_batch(data.features())?;
    let mut confusion = vec![vec![0; s]; s];
    for (&p, &y) in pred.iter().zip(data.labels()) {
        confusion[y][p] += 1;
    }
    let correct = (0..s).map(|c| confusion[c][c]).sum::<usize>();
    Ok(Evaluation {
        accuracy: correct as f64 / data.n_samples() as f64,
        n_samples: data.n_samples(),
        class_names: model
            .schema()
            .map(|sc| sc.class_names.clone())
            .unwrap_or_else(|| (0..s).map(|c| c.to_string()).collect()),
        confusion,
        prefixes: model.evaluate_prefixes(data)?,
    })
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let model = model_io::load(&args.model)?;
    let data = load_for_model(&model, &args.data)?;
    let eval = evaluate(&model, &data)?;
    let mut out = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &eval).map_err(|e| Error::Runtime(e.to_string()))?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::Runtime(e.to_string()))
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model = model_io::load(&args.model)?;
    let data = load_for_model(&model, &args.data)?;
    let scores = model.predict_scores_batch(data.features())?;
    let names: Vec<String> = model
        .schema()
        .map(|s| s.class_names.clone())
        .unwrap_or_else(|| (0..model.n_classes()).map(|c| c.to_string()).collect());
    let mut writer = csv::Writer::from_writer(output(args.out.as_deref())?);
    let csv_err = |e: csv::Error| Error::Runtime(e.to_string());
    let mut header = vec!["prediction".to_string()];
    header.extend(names.iter().map(|n| format!("score_{n}")));
    writer.write_record(&header).map_err(csv_err)?;
    for row in scores.iter_rows() {
        let mut rec = vec![names[argmax(row)].clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        writer.write_record(&rec).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::Runtime(e.to_string()))
}

/// One scored grid point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub gamma: f64,
    pub mu: f64,
    pub depth_schedule: DepthSchedule,
    pub accuracy: f64,
    pub n_layers: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridReport {
    pub best: Candidate,
    pub candidates: Vec<Candidate>,
    pub scored_on: String,
    pub seed: u64,
}

/// Every `(gamma, mu, schedule)` combination in tie-break order.
pub fn grid(gammas: &[f64], mus: &[f64], schedules: &[DepthSchedule]) -> Vec<(f64, f64, DepthSchedule)> {
    let mut gammas = gammas.to_vec();
    let mut mus = mus.to_vec();
    let mut schedules = schedules.to_vec();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    mus.sort_by(f64::total_cmp);
    mus.dedup();
    schedules.sort();
    schedules.dedup();
    let mut out = Vec::with_capacity(gammas.len() * mus.len() * schedules.len());
    for &g in &gammas {
        for &m in &mus {
            for &d in &schedules {
                out.push((g, m, d));
            }
        }
    }
    out
}

/// Best of the scored candidates; the earliest in grid order wins ties.
pub fn select(candidates: &[Candidate]) -> Option<&Candidate> {
    candidates.iter().fold(None, |best: Option<&Candidate>, c| match best {
        Some(b) if c.accuracy <= b.accuracy => Some(b),
        _ => Some(c),
    })
}

pub fn run_grid_search(args: &GridArgs) -> Result<(GridReport, Option<CascadeModel>)> {
    let base = args.model.config()?;
    let full = load(&args.data, &args.data.data, None)?;
    let (train, test, scored_on) = match &args.test_data {
        Some(path) => {
            let test = load(&args.data, path, Some(full.schema()))?;
            (full.clone(), test, path.display().to_string())
        }
        None => {
            let (tr, te) = holdout_split(&full, args.holdout, base.seed)?;
            (
                tr,
                te,
                format!("holdout {} of {}", args.holdout, args.data.data.display()),
            )
        }
    };
    let points = grid(
        args.gammas.as_deref().unwrap_or(&GAMMA_GRID),
        args.mus.as_deref().unwrap_or(&MU_GRID),
        args.schedules.as_deref().unwrap_or(&DepthSchedule::ALL),
    );
    let mut candidates = Vec::with_capacity(points.len());
    for (gamma, mu, schedule) in points {
        let config = CascadeConfig {
            loss: MdLossParams::new(gamma, mu)?,
            depth_schedule: schedule,
            ..base.clone()
        };
        let model = cascade::train(&train, &config)?;
        let accuracy = model.accuracy(&test)?;
        log::info!("gamma={gamma} mu={mu} depth={schedule}: accuracy {accuracy:.4}");
        candidates.push(Candidate {
            gamma,
            mu,
            depth_schedule: schedule,
            accuracy,
            n_layers: model.n_layers(),
        });
    }
    let best = select(&candidates)
        .cloned()
        .ok_or_else(|| Error::Config("the search grid is empty".into()))?;
    let model = match &args.out_model {
        Some(_) => Some(cascade::train(
            &full,
            &CascadeConfig {
                loss: MdLossParams::new(best.gamma, best.mu)?,
                depth_schedule: best.depth_schedule,
                ..base.clone()
            },
        )?),
        None => None,
    };
    Ok((
        GridReport {
            best,
            candidates,
            scored_on,
            seed: base.seed,
        },
        model,
    ))
}

fn cmd_grid_search(args: &GridArgs) -> Result<()> {
    let (report, model) = run_grid_search(args)?;
    if let (Some(path), Some(model)) = (&args.out_model, &model) {
        model_io::save(model, path)?;
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Runtime(e.to_string()))? + "\n";
    match &args.out_report {
        Some(path) => write_file(path, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

/// Writes `layer_<t>.csv` with columns `[x, f_t(x), label]` for each layer.
pub fn export_features(model: &CascadeModel, data: &Dataset, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows: Vec<Vec<Vec<f64>>> = (0..data.n_samples())
        .map(|r| model.augmented_features(data.features().row(r)))
        .collect::<Result<_>>()?;
    let feature_names = data
        .feature_names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| (0..data.n_features()).map(|j| format!("x{j}")).collect());
    let class_names = &data.schema().class_names;
    let csv_err = |e: csv::Error| Error::Runtime(e.to_string());
    let mut paths = Vec::with_capacity(model.n_layers());
    for t in 0..model.n_layers() {
        let path = dir.join(format!("layer_{}.csv", t + 1));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let mut header = feature_names.clone();
        header.extend((0..model.feature_width()).map(|j| format!("f{j}")));
        header.push("label".into());
        w.write_record(&header).map_err(csv_err)?;
        for (r, feats) in rows.iter().enumerate() {
            let mut rec: Vec<String> = data.features().row(r).iter().map(f64::to_string).collect();
            rec.extend(feats[t].iter().map(f64::to_string));
            rec.push(class_names[data.labels()[r]].clone());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

fn cmd_export(args: &ExportArgs) -> Result<()> {
    let model = model_io::load(&args.model)?;
    let data = load_for_model(&model, &args.data)?;
    for p in export_features(&model, &data, &args.out_dir)? {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_self_check() -> Result<()> {
    let outcomes = oracle::self_check();
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    if outcomes.iter().all(|o| o.passed) {
        Ok(())
    } else {
        Err(Error::Runtime("self-check failed".into()))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    if cli.self_check {
        return cmd_self_check();
    }
    match cli.command {
        Some(Command::Train(a)) => cmd_train(&a),
        Some(Command::Evaluate(a)) => cmd_evaluate(&a),
        Some(Command::Predict(a)) => cmd_predict(&a),
        Some(Command::GridSearch(a)) => cmd_grid_search(&a),
        Some(Command::ExportFeatures(a)) => cmd_export(&a),
        Some(Command::SelfCheck) => cmd_self_check(),
        None => Err(Error::Config("no command given (see --help)".into())),
    }
}

/// Process entry point: parses arguments, runs, and maps errors to exit codes.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
