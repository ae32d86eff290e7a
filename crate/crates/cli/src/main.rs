//! `ooc`: generate data, train, decode, evaluate and render culprit reports.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ooc_core::checkpoint::{load_params, save_params};
use ooc_core::{
    chunk, decode_batch, evaluate, generate_dataset, grad_check, init_params, read_dataset, render_report, sweep,
    train, write_dataset, ChunkLexicon, Coverage, Error, Instance, RunConfig,
};

#[derive(Parser)]
#[command(name = "ooc", version, about = "Out-of-context caption detection with phrase-level culprits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON with optional synth/model/train/decode sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic benchmark as train/val/test JSONL files.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Chunk captions (one per line) into phrases; prints JSON lines.
    Chunk {
        /// Input file; stdin when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Alternative lexicon file.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write a checkpoint.
    Train {
        /// Dataset file, or a directory containing train.jsonl.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Overrides train.lambda.
        #[arg(long)]
        lambda: Option<f64>,
        /// Where to write the training report (stdout when omitted).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Decode every instance; writes one JSON result per line.
    Decode {
        #[arg(long)]
        model: PathBuf,
        /// Dataset file, or a directory containing test.jsonl.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Decode and score; writes the metrics report as JSON.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Dataset file, or a directory containing test.jsonl.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Render per-instance culprit reports.
    Report {
        #[arg(long)]
        model: PathBuf,
        /// Dataset file, or a directory containing test.jsonl.
        #[arg(long)]
        data: PathBuf,
        /// Output directory; one file per instance.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
        /// Only these instance ids (repeatable).
        #[arg(long)]
        id: Vec<String>,
        /// At most this many reports.
        #[arg(long)]
        limit: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        /// Instances to check against; synthetic ones when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        cases: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Coordinates sampled per case; 0 checks every parameter.
        #[arg(long, default_value_t = 600)]
        coords: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Train once per λ and tabulate test metrics.
    Sweep {
        /// Directory with train.jsonl and test.jsonl.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        lambdas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Html,
}

fn run_config(common: &Common) -> ooc_core::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset_at(path: &Path, split: &str) -> ooc_core::Result<Vec<Instance>> {
    if path.is_dir() {
        read_dataset(path.join(format!("{split}.jsonl")))
    } else {
        read_dataset(path)
    }
}

fn emit(text: &str, out: Option<&Path>) -> ooc_core::Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text)?;
        }
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn run(command: Command) -> ooc_core::Result<()> {
    match command {
        Command::Gen { out, common } => {
            let cfg = run_config(&common)?;
            let data = generate_dataset(&cfg.synth)?;
            fs::create_dir_all(&out)?;
            write_dataset(&data.train, out.join("train.jsonl"))?;
            write_dataset(&data.val, out.join("val.jsonl"))?;
            write_dataset(&data.test, out.join("test.jsonl"))?;
        }
        Command::Chunk { input, lexicon, common } => {
            run_config(&common)?;
            let lexicon = match lexicon {
                Some(path) => ChunkLexicon::load(path)?,
                None => ChunkLexicon::bundled(),
            };
            let mut text = String::new();
            match input {
                Some(path) => text = fs::read_to_string(path)?,
                None => {
                    io::stdin().read_to_string(&mut text)?;
                }
            }
            let mut out = String::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                out.push_str(&serde_json::to_string(&chunk(line, &lexicon)?).expect("serializable"));
                out.push('\n');
            }
            emit(&out, None)?;
        }
        Command::Train { data, out, lambda, report, common } => {
            let mut cfg = run_config(&common)?;
            if let Some(lambda) = lambda {
                cfg.train.lambda = lambda;
                cfg.train.validate()?;
            }
            let dataset = dataset_at(&data, "train")?;
            let d = dataset.first().ok_or(Error::EmptyDataset)?.dim();
            let init = init_params(cfg.model.seed, d, cfg.model.h, cfg.model.max_phrases)?;
            let (params, train_report) = train(&init, &dataset, &cfg.train)?;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            save_params(&params, &out)?;
            emit(&pretty(&train_report), report.as_deref())?;
        }
        Command::Decode { model, data, out, common } => {
            let cfg = run_config(&common)?;
            let params = load_params(&model)?;
            let results = decode_batch(&params, &dataset_at(&data, "test")?, &cfg.decode)?;
            let mut text = String::new();
            for r in &results {
                text.push_str(&serde_json::to_string(r).expect("serializable"));
                text.push('\n');
            }
            emit(&text, out.as_deref())?;
        }
        Command::Eval { model, data, out, common } => {
            let cfg = run_config(&common)?;
            let params = load_params(&model)?;
            let metrics = evaluate(&params, &dataset_at(&data, "test")?, &cfg.decode)?;
            emit(&pretty(&metrics), out.as_deref())?;
        }
        Command::Report { model, data, out, format, id, limit, common } => {
            let cfg = run_config(&common)?;
            let params = load_params(&model)?;
            let mut dataset = dataset_at(&data, "test")?;
            if !id.is_empty() {
                dataset.retain(|inst| id.contains(&inst.id));
            }
            if let Some(limit) = limit {
                dataset.truncate(limit);
            }
            let (fmt, ext) = match format {
                Format::Md => (ooc_core::ReportFormat::Markdown, "md"),
                Format::Html => (ooc_core::ReportFormat::Html, "html"),
            };
            let results = decode_batch(&params, &dataset, &cfg.decode)?;
            fs::create_dir_all(&out)?;
            for (inst, result) in dataset.iter().zip(&results) {
                fs::write(out.join(format!("{}.{ext}", inst.id)), render_report(inst, result, fmt)?)?;
            }
        }
        Command::Gradcheck { data, cases, step, coords, tolerance, common } => {
            let cfg = run_config(&common)?;
            let instances = match data {
                Some(path) => dataset_at(&path, "test")?,
                None => generate_dataset(&cfg.synth)?.train,
            };
            if instances.is_empty() {
                return Err(Error::EmptyDataset);
            }
            let lambdas = [0.0, 0.5, 1.0];
            let mut rows = Vec::with_capacity(cases);
            let mut worst: f64 = 0.0;
            for case in 0..cases {
                let inst = &instances[case % instances.len()];
                let case_seed = cfg.model.seed.wrapping_add(case as u64);
                let params = init_params(case_seed, inst.dim(), cfg.model.h, cfg.model.max_phrases)?;
                let lambda = lambdas[case % lambdas.len()];
                let coverage = if coords == 0 { Coverage::All } else { Coverage::Sample { n: coords, seed: case_seed } };
                let report = grad_check(&params, inst, inst.label, lambda, step, coverage)?;
                worst = worst.max(report.max_rel_error);
                rows.push(GradRow { case, id: inst.id.clone(), lambda, report });
            }
            emit(&pretty(&GradSummary { max_rel_error: worst, tolerance, cases: rows }), None)?;
            if !(worst < tolerance) {
                return Err(Error::InvalidConfig(format!("max relative error {worst:e} exceeds {tolerance:e}")));
            }
        }
        Command::Sweep { data, lambdas, out, common } => {
            let cfg = run_config(&common)?;
            if lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
                return Err(Error::InvalidConfig("every lambda must lie in [0, 1]".into()));
            }
            let train_set = dataset_at(&data, "train")?;
            let test_set = dataset_at(&data, "test")?;
            let rows = sweep(&train_set, &test_set, &lambdas, &cfg.model, &cfg.train, &cfg.decode)?;
            emit(&pretty(&rows), out.as_deref())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GradRow {
    case: usize,
    id: String,
    lambda: f64,
    #[serde(flatten)]
    report: ooc_core::GradCheckReport,
}

#[derive(Serialize)]
struct GradSummary {
    max_rel_error: f64,
    tolerance: f64,
    cases: Vec<GradRow>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
