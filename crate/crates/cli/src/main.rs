//! Command-line pipeline: synthetic data, training, evaluation, bin
//! statistics, localization, gradient checks and bin ranking.

mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wpal::gradcheck::{layer_suite, model_suite, SuiteResult};
use wpal::image::{encode_overlay_ppm, load_image};
use wpal::localization::{
    body_region, localize_image, location_rows, rank_bins, ScoreMatrix, StatsTable, LOCATIONS_HEADER,
};
use wpal::metrics::{binarize_rows, EvalReport};
use wpal::model::{ModelConfig, ModelState};
use wpal::nn::BinPlace;
use wpal::synth::{generate, read_dataset, write_dataset, AttributeSchema, Dataset, GenerateOptions};
use wpal::train::{log_csv, positive_proportions, EpochLog, LossKind, TrainConfig, Trainer};
use wpal::{Tensor, WpalError};

use manifest::RunManifest;

const CHECKPOINT_FILE: &str = "model.ckpt";
const LOG_LOSS_KEY: &str = "log.mean_loss";
const LOG_MA_KEY: &str = "log.mA_train";

#[derive(Parser)]
#[command(name = "wpal", version, about = "Weakly-supervised pedestrian attribute recognition and localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic pedestrian dataset with planted attribute locations.
    GenData {
        /// Attribute schema file; the built-in 8-attribute schema if omitted.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Smallest image height in pixels.
        #[arg(long = "min-h", default_value_t = 64)]
        min_h: usize,
        /// Largest image height in pixels.
        #[arg(long = "max-h", default_value_t = 128)]
        max_h: usize,
    },
    /// Train a model; writes a checkpoint after every epoch and a CSV log.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Model config file; defaults sized to the dataset's attribute count.
        #[arg(long)]
        model_config: Option<PathBuf>,
        /// Training config file; built-in defaults if omitted.
        #[arg(long)]
        train_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override the total number of epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Override the loss (`weighted` or `plain`).
        #[arg(long)]
        loss: Option<LossKind>,
        /// Override the learning rate.
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Override both the initialization and the shuffling seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint: mA, example-based metrics and per-attribute counts.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the bin-attribute relationship statistics over a dataset.
    Estrel {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write possibility maps, overlays and clustered locations.
    Localize {
        /// A single P6 image.
        #[arg(long, conflicts_with = "data", required_unless_present = "data")]
        image: Option<PathBuf>,
        /// A dataset directory; every sample (up to --limit) is processed.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated attribute indices or names; all if omitted.
        #[arg(long, value_delimiter = ',')]
        attributes: Vec<String>,
        /// Also write the informative-region (body) map.
        #[arg(long)]
        body: bool,
        /// Process at most this many dataset samples.
        #[arg(long)]
        limit: Option<usize>,
        /// Schema giving attribute names and candidate counts (defaults to the dataset's).
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Finite-difference gradient checks of layers or the tiny end-to-end model.
    Gradcheck {
        #[arg(long, value_enum, default_value_t = Scope::Layer)]
        scope: Scope,
        /// Relative-error bound; 1e-5 for layers, 1e-4 for the model by default.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Number of random seeds per fragment.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Optional directory for the manifest and the table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the detector bins most strongly related to one attribute.
    RankBins {
        #[arg(long)]
        stats: PathBuf,
        /// Attribute index, or a name when --schema is given.
        #[arg(long)]
        attribute: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, conflicts_with = "model_config")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Optional directory for the manifest and the ranking CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Scope {
    Layer,
    Model,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(WpalError),
    /// A check ran to completion and found a numeric failure.
    Numeric(String),
}

impl From<WpalError> for CliError {
    fn from(e: WpalError) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_numeric() => 3,
            CliError::Numeric(_) => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(s) | CliError::Numeric(s) => f.write_str(s),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| {
        CliError::Lib(WpalError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| {
        CliError::Lib(WpalError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::GenData {
            schema,
            count,
            out,
            seed,
            min_h,
            max_h,
        } => gen_data(schema.as_deref(), count, &out, seed, min_h, max_h),
        Command::Train {
            data,
            model_config,
            train_config,
            out,
            resume,
            epochs,
            loss,
            learning_rate,
            seed,
        } => train(TrainArgs {
            data,
            model_config,
            train_config,
            out,
            resume,
            epochs,
            loss,
            learning_rate,
            seed,
        }),
        Command::Eval { data, checkpoint, out } => eval(&data, &checkpoint, &out),
        Command::Estrel { data, checkpoint, out } => estrel(&data, &checkpoint, &out),
        Command::Localize {
            image,
            data,
            checkpoint,
            stats,
            out,
            attributes,
            body,
            limit,
            schema,
        } => localize(LocalizeArgs {
            image,
            data,
            checkpoint,
            stats,
            out,
            attributes,
            body,
            limit,
            schema,
        }),
        Command::Gradcheck {
            scope,
            tolerance,
            seeds,
            out,
        } => gradcheck(scope, tolerance, seeds, out.as_deref()),
        Command::RankBins {
            stats,
            attribute,
            k,
            checkpoint,
            model_config,
            schema,
            out,
        } => rank(RankArgs {
            stats,
            attribute,
            k,
            checkpoint,
            model_config,
            schema,
            out,
        }),
    }
}

fn gen_data(schema_path: Option<&Path>, count: usize, out: &Path, seed: u64, min_h: usize, max_h: usize) -> CliResult<()> {
    let schema = match schema_path {
        Some(p) => AttributeSchema::read(p)?,
        None => AttributeSchema::default(),
    };
    schema.validate()?;
    let opts = GenerateOptions {
        count,
        min_height: min_h,
        max_height: max_h,
        seed,
    };
    opts.validate()?;
    let mut m = RunManifest::new("gen-data");
    m.set("seed", seed)
        .set("count", count)
        .set("min_height", min_h)
        .set("max_height", max_h)
        .set("schema", schema_path.map_or("default".to_string(), |p| p.display().to_string()))
        .path("out", out);
    m.write(out)?;
    let dataset = generate(&schema, &opts)?;
    write_dataset(&dataset, out)?;
    log::info!("wrote {count} samples to {}", out.display());
    Ok(())
}

struct TrainArgs {
    data: PathBuf,
    model_config: Option<PathBuf>,
    train_config: Option<PathBuf>,
    out: PathBuf,
    resume: Option<PathBuf>,
    epochs: Option<usize>,
    loss: Option<LossKind>,
    learning_rate: Option<f64>,
    seed: Option<u64>,
}

fn log_extras(log: &[EpochLog]) -> Vec<(String, Tensor)> {
    let n = log.len();
    let loss = log.iter().map(|e| e.mean_loss).collect();
    let ma = log.iter().map(|e| e.ma_train.unwrap_or(f64::NAN)).collect();
    vec![
        (LOG_LOSS_KEY.to_string(), Tensor::new(vec![n], loss).unwrap()),
        (LOG_MA_KEY.to_string(), Tensor::new(vec![n], ma).unwrap()),
    ]
}

fn restore_log(extras: &[(String, Tensor)]) -> Vec<EpochLog> {
    let get = |k: &str| extras.iter().find(|(n, _)| n == k).map(|(_, t)| t.data().to_vec());
    match (get(LOG_LOSS_KEY), get(LOG_MA_KEY)) {
        (Some(loss), Some(ma)) => loss
            .into_iter()
            .zip(ma)
            .enumerate()
            .map(|(i, (l, m))| EpochLog {
                epoch: i + 1,
                mean_loss: l,
                ma_train: (!m.is_nan()).then_some(m),
            })
            .collect(),
        _ => Vec::new(),
    }
}

fn train(args: TrainArgs) -> CliResult<()> {
    let mut tc = match &args.train_config {
        Some(p) => TrainConfig::read(p)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = args.epochs {
        tc.epochs = e;
    }
    if let Some(l) = args.loss {
        tc.loss = l;
    }
    if let Some(lr) = args.learning_rate {
        tc.learning_rate = lr;
    }
    if let Some(s) = args.seed {
        tc.seed = s;
    }
    tc.validate()?;
    let dataset = read_dataset(&args.data)?;

    let (model, extras) = match &args.resume {
        Some(ckpt) => {
            if args.model_config.is_some() {
                return Err(CliError::Usage(
                    "--model-config cannot be combined with --resume; the checkpoint fixes the model".into(),
                ));
            }
            ModelState::load_with_extras(ckpt)?
        }
        None => {
            let mut mc = match &args.model_config {
                Some(p) => ModelConfig::read(p)?,
                None => ModelConfig {
                    num_attributes: dataset.schema.len(),
                    ..ModelConfig::default()
                },
            };
            if let Some(s) = args.seed {
                mc.seed = s;
            }
            (ModelState::build(mc)?, Vec::new())
        }
    };
    let mc = model.config().clone();
    if mc.num_attributes != dataset.schema.len() {
        return Err(CliError::Usage(format!(
            "model predicts {} attributes but the dataset has {}",
            mc.num_attributes,
            dataset.schema.len()
        )));
    }

    let mut m = RunManifest::new("train");
    m.path("data", &args.data).path("out", &args.out);
    if let Some(r) = &args.resume {
        m.path("resume", r);
    }
    m.set("seed", tc.seed).config("model", &mc.to_text()).config("train", &tc.to_text());
    m.write(&args.out)?;
    write_file(&args.out.join("model_config.txt"), mc.to_text())?;
    write_file(&args.out.join("train_config.txt"), tc.to_text())?;

    let examples = dataset.examples(mc.input_size)?;
    let weights = positive_proportions(&dataset.labels())?;
    let mut log = restore_log(&extras);
    let mut trainer = match &args.resume {
        Some(_) => Trainer::resume(model, &extras, tc.clone(), weights)?,
        None => Trainer::new(model, tc.clone(), weights)?,
    };
    log.truncate(trainer.epochs_done());
    let ckpt = args.out.join(CHECKPOINT_FILE);
    let mut ran = false;
    while !ran || trainer.epochs_done() < tc.epochs {
        ran = true;
        if trainer.epochs_done() < tc.epochs {
            log.push(trainer.run_epoch(&examples)?);
        }
        let mut extras = trainer.checkpoint_extras();
        extras.extend(log_extras(&log));
        trainer.model().save_with_extras(&ckpt, &extras)?;
        write_file(&args.out.join("train_log.csv"), log_csv(&log))?;
    }
    log::info!("checkpoint written to {}", ckpt.display());
    Ok(())
}

fn load_checked(data: &Path, checkpoint: &Path) -> CliResult<(Dataset, ModelState)> {
    let dataset = read_dataset(data)?;
    let model = ModelState::load(checkpoint)?;
    if model.config().num_attributes != dataset.schema.len() {
        return Err(CliError::Usage(format!(
            "checkpoint predicts {} attributes but the dataset has {}",
            model.config().num_attributes,
            dataset.schema.len()
        )));
    }
    Ok((dataset, model))
}

fn eval(data: &Path, checkpoint: &Path, out: &Path) -> CliResult<()> {
    let (dataset, model) = load_checked(data, checkpoint)?;
    let mut m = RunManifest::new("eval");
    m.path("data", data).path("checkpoint", checkpoint).path("out", out);
    m.config("model", &model.config().to_text());
    m.write(out)?;

    let size = model.config().input_size;
    let mut scores = Vec::with_capacity(dataset.len());
    let mut csv = String::from("image");
    for i in 0..dataset.schema.len() {
        write!(csv, ",p_{i}").unwrap();
    }
    csv.push('\n');
    for (i, s) in dataset.samples.iter().enumerate() {
        let (img, _) = s.network_input(size)?;
        let p = model.forward(&img)?.scores;
        csv.push_str(&wpal::synth::image_name(i));
        for v in &p {
            write!(csv, ",{v}").unwrap();
        }
        csv.push('\n');
        scores.push(p);
    }
    let truth: Vec<Vec<bool>> = dataset
        .labels()
        .iter()
        .map(|r| r.iter().map(|&v| v == 1.0).collect())
        .collect();
    let report = EvalReport::compute(&binarize_rows(&scores), &truth)?;
    write_file(&out.join("report.txt"), report.to_text())?;
    write_file(&out.join("per_attribute.csv"), report.per_attribute_csv(&dataset.schema.names()))?;
    write_file(&out.join("predictions.csv"), csv)?;
    print!("{}", report.to_text());
    Ok(())
}

fn estrel(data: &Path, checkpoint: &Path, out: &Path) -> CliResult<()> {
    let (dataset, model) = load_checked(data, checkpoint)?;
    let mut m = RunManifest::new("estrel");
    m.path("data", data).path("checkpoint", checkpoint).path("out", out);
    m.config("model", &model.config().to_text());
    m.write(out)?;
    let examples = dataset.examples(model.config().input_size)?;
    let scores = ScoreMatrix::collect(&model, examples.iter().map(|e| &e.image))?;
    let stats = StatsTable::estimate(&scores, &dataset.labels())?;
    write_file(&out.join("stats.csv"), stats.to_csv(model.config()))?;
    log::info!("relationship statistics for {} attributes written", stats.attributes.len());
    Ok(())
}

struct LocalizeArgs {
    image: Option<PathBuf>,
    data: Option<PathBuf>,
    checkpoint: PathBuf,
    stats: PathBuf,
    out: PathBuf,
    attributes: Vec<String>,
    body: bool,
    limit: Option<usize>,
    schema: Option<PathBuf>,
}

/// Name and candidate count for every attribute the model predicts.
fn attribute_table(schema: Option<&AttributeSchema>, n: usize) -> CliResult<Vec<(String, usize)>> {
    match schema {
        Some(s) if s.len() != n => Err(CliError::Usage(format!(
            "schema has {} attributes but the checkpoint predicts {n}",
            s.len()
        ))),
        Some(s) => Ok(s.attributes.iter().map(|a| (a.name.clone(), a.k)).collect()),
        None => Ok((0..n).map(|i| (format!("attr{i}"), 1)).collect()),
    }
}

fn resolve_attribute(token: &str, names: &[(String, usize)]) -> CliResult<usize> {
    if let Ok(i) = token.parse::<usize>() {
        if i < names.len() {
            return Ok(i);
        }
        return Err(CliError::Usage(format!("attribute index {i} out of range 0..{}", names.len())));
    }
    names
        .iter()
        .position(|(n, _)| n == token)
        .ok_or_else(|| CliError::Usage(format!("unknown attribute `{token}`")))
}

fn localize(args: LocalizeArgs) -> CliResult<()> {
    let model = ModelState::load(&args.checkpoint)?;
    let stats = StatsTable::read(&args.stats)?;
    stats.check_against(model.config())?;
    let size = model.config().input_size;
    let n_attr = model.config().num_attributes;

    let schema = match (&args.schema, &args.data) {
        (Some(p), _) => Some(AttributeSchema::read(p)?),
        (None, Some(d)) => Some(AttributeSchema::read(&d.join(wpal::synth::SCHEMA_FILE))?),
        (None, None) => None,
    };
    let table = attribute_table(schema.as_ref(), n_attr)?;
    let selected: Vec<usize> = if args.attributes.is_empty() {
        (0..n_attr).collect()
    } else {
        args.attributes
            .iter()
            .map(|t| resolve_attribute(t.trim(), &table))
            .collect::<CliResult<_>>()?
    };

    let mut inputs: Vec<(String, Tensor)> = Vec::new();
    if let Some(p) = &args.image {
        let stem = p
            .file_stem()
            .map_or_else(|| "image".to_string(), |s| s.to_string_lossy().into_owned());
        inputs.push((stem, load_image(p, Some(size))?));
    } else if let Some(d) = &args.data {
        let dataset = read_dataset(d)?;
        let limit = args.limit.unwrap_or(dataset.len()).min(dataset.len());
        for (i, s) in dataset.samples.iter().take(limit).enumerate() {
            inputs.push((format!("{i:05}"), s.network_input(size)?.0));
        }
    }

    let mut m = RunManifest::new("localize");
    if let Some(p) = &args.image {
        m.path("image", p);
    }
    if let Some(d) = &args.data {
        m.path("data", d);
    }
    m.path("checkpoint", &args.checkpoint)
        .path("stats", &args.stats)
        .path("out", &args.out)
        .set(
            "attributes",
            selected.iter().map(|&a| table[a].0.as_str()).collect::<Vec<_>>().join(","),
        )
        .set("body", args.body)
        .set("images", inputs.len());
    m.write(&args.out)?;

    let mut summary = String::from("image,attribute,name,prediction,rank,y,x,mass\n");
    for (stem, img) in &inputs {
        let pred = model.forward(img)?;
        let mut wanted: Vec<(usize, usize)> = selected.iter().map(|&a| (a, table[a].1)).collect();
        if args.body {
            for (a, &p) in pred.scores.iter().enumerate() {
                if p >= 0.5 && !selected.contains(&a) {
                    wanted.push((a, table[a].1));
                }
            }
        }
        let (pred, results) = localize_image(&model, &stats, img, &wanted)?;
        let dir = args.out.join(stem);
        create_dir(&dir)?;
        for r in results.iter().filter(|r| selected.contains(&r.attribute)) {
            let name = &table[r.attribute].0;
            write_file(&dir.join(format!("{name}.pgm")), r.map.to_pgm())?;
            write_file(&dir.join(format!("{name}_overlay.ppm")), encode_overlay_ppm(img, r.map.data())?)?;
            let rows = location_rows(r.attribute, &r.locations);
            write_file(
                &dir.join(format!("{name}_locations.csv")),
                format!("{LOCATIONS_HEADER}\n{rows}"),
            )?;
            for line in rows.lines() {
                let rest = line.split_once(',').map_or("", |(_, rest)| rest);
                writeln!(summary, "{stem},{},{name},{},{rest}", r.attribute, r.prediction).unwrap();
            }
        }
        if args.body {
            let positives: Vec<_> = results
                .iter()
                .filter(|r| pred.scores[r.attribute] >= 0.5)
                .map(|r| r.map.clone())
                .collect();
            if positives.is_empty() {
                if args.image.is_some() {
                    return Err(CliError::Usage("no attribute is predicted present; body region undefined".into()));
                }
                log::warn!("{stem}: no positive prediction, body region skipped");
            } else {
                let body = body_region(&positives)?;
                write_file(&dir.join("body.pgm"), body.to_pgm())?;
                write_file(&dir.join("body_overlay.ppm"), encode_overlay_ppm(img, body.data())?)?;
            }
        }
    }
    write_file(&args.out.join("locations.csv"), summary)?;
    log::info!("localized {} image(s) into {}", inputs.len(), args.out.display());
    Ok(())
}

fn gradcheck_table(results: &[SuiteResult], tolerance: f64) -> (String, bool) {
    let mut fragments: Vec<&'static str> = Vec::new();
    for r in results {
        if !fragments.contains(&r.fragment) {
            fragments.push(r.fragment);
        }
    }
    let mut s = format!("{:<14} {:>6} {:>14} {:>8}\n", "fragment", "seeds", "max_rel_error", "result");
    let mut all = true;
    for f in fragments {
        let rs: Vec<_> = results.iter().filter(|r| r.fragment == f).collect();
        let worst = rs.iter().map(|r| r.report.max_rel_error()).fold(0.0, f64::max);
        let ok = rs.iter().all(|r| r.report.passed());
        all &= ok;
        writeln!(
            s,
            "{f:<14} {:>6} {worst:>14.3e} {:>8}",
            rs.len(),
            if ok { "PASS" } else { "FAIL" }
        )
        .unwrap();
    }
    writeln!(s, "tolerance {tolerance:e}: {}", if all { "all passed" } else { "FAILED" }).unwrap();
    (s, all)
}

fn gradcheck(scope: Scope, tolerance: Option<f64>, seeds: u64, out: Option<&Path>) -> CliResult<()> {
    let tol = tolerance.unwrap_or(match scope {
        Scope::Layer => 1e-5,
        Scope::Model => 1e-4,
    });
    if tol.is_nan() || tol <= 0.0 || seeds == 0 {
        return Err(CliError::Usage("tolerance must be positive and seeds at least 1".into()));
    }
    if let Some(dir) = out {
        let mut m = RunManifest::new("gradcheck");
        m.set("scope", format!("{scope:?}").to_lowercase())
            .set("tolerance", tol)
            .set("seeds", seeds)
            .path("out", dir);
        m.write(dir)?;
    }
    let results = match scope {
        Scope::Layer => layer_suite(0..seeds, tol)?,
        Scope::Model => model_suite(0..seeds, tol)?,
    };
    let (table, ok) = gradcheck_table(&results, tol);
    print!("{table}");
    if let Some(dir) = out {
        write_file(&dir.join("gradcheck.txt"), &table)?;
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::Numeric("gradient check failed".into()))
    }
}

struct RankArgs {
    stats: PathBuf,
    attribute: String,
    k: usize,
    checkpoint: Option<PathBuf>,
    model_config: Option<PathBuf>,
    schema: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn rank(args: RankArgs) -> CliResult<()> {
    let stats = StatsTable::read(&args.stats)?;
    let config = match (&args.checkpoint, &args.model_config) {
        (Some(c), _) => ModelState::load(c)?.config().clone(),
        (None, Some(p)) => ModelConfig::read(p)?,
        (None, None) => ModelConfig {
            num_attributes: stats.attributes.len(),
            ..ModelConfig::default()
        },
    };
    stats.check_against(&config)?;
    if args.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let schema = args.schema.as_deref().map(AttributeSchema::read).transpose()?;
    let table = attribute_table(schema.as_ref(), config.num_attributes)?;
    let a = resolve_attribute(&args.attribute, &table)?;
    if let Some(dir) = &args.out {
        let mut m = RunManifest::new("rank-bins");
        m.path("stats", &args.stats)
            .set("attribute", &table[a].0)
            .set("k", args.k)
            .config("model", &config.to_text())
            .path("out", dir);
        m.write(dir)?;
    }
    let mut csv = String::from("rank,bin,branch,channel,level,row,col,RS\n");
    for (i, r) in rank_bins(&stats.attributes[a], &config, args.k).iter().enumerate() {
        let (row, col) = match r.info.place {
            BinPlace::Global => ("-".to_string(), "-".to_string()),
            BinPlace::Cell { row, col } => (row.to_string(), col.to_string()),
        };
        writeln!(
            csv,
            "{},{},{},{},{},{row},{col},{}",
            i + 1,
            r.bin,
            r.info.branch + 1,
            r.info.channel,
            r.info.place.level(),
            r.rs
        )
        .unwrap();
    }
    print!("{csv}");
    if let Some(dir) = &args.out {
        write_file(&dir.join("ranked_bins.csv"), &csv)?;
    }
    Ok(())
}
