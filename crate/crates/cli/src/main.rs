//! `puea`: simulate sensing data, train and evaluate one-class PUEA detectors,
//! and run the full experiment grid.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use puea::eval::experiment::{attack_dataset, cells, cv_seed, detector_params, pu_dataset};
use puea::eval::{evaluate, kfold_cv, run_experiment};
use puea::features::{read_csv, write_csv};
use puea::oneclass::{read_model, write_model};
use puea::{Detector, DetectorKind, Label, MetricsReport, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "puea", version, about = "Primary user emulation attack detection with one-class classifiers")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// `key = value` configuration file applied on top of the defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Number of PU sensing slots (training-set size).
    #[arg(long, global = true, value_name = "N")]
    n_slots: Option<usize>,
    /// Override any configuration key, e.g. `--set d_list=5,10`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the PU training set and the attack/test sets of every cell.
    Simulate,
    /// Fit and calibrate a detector on a PU-only dataset.
    Train {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        /// if, svm, mcd or lof.
        #[arg(long)]
        detector: DetectorKind,
        /// Model file; defaults to `{out}/{detector}.model`.
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
    },
    /// Score a labelled dataset with a trained model.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        /// Metrics CSV to append to; defaults to `{out}/evaluate.csv`.
        #[arg(long, value_name = "CSV")]
        report: Option<PathBuf>,
    },
    /// k-fold cross-validation on a labelled dataset.
    Cv {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[arg(long)]
        detector: DetectorKind,
        /// Number of folds.
        #[arg(long)]
        k: usize,
        /// Metrics CSV to append to; defaults to `{out}/cv.csv`.
        #[arg(long, value_name = "CSV")]
        report: Option<PathBuf>,
    },
    /// Run the configured experiment grid and write the table and plot data.
    Report {
        /// List the cells without computing anything.
        #[arg(long)]
        dry_run: bool,
    },
}

/// Error class deciding the exit code.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(g: &GlobalArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for kv in &g.overrides {
        let (key, value) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(key, value).with_context(|| format!("--set {kv}"))?;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.out_dir = out.clone();
    }
    if let Some(n) = g.n_slots {
        cfg.n_slots = n;
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn simulate(cfg: &RunConfig) -> CmdResult {
    for &placement in &cfg.placements {
        let dir = cfg.out_dir.join(placement.as_str());
        create_dir(&dir)?;
        let train = pu_dataset(cfg, placement)?;
        write_csv(&train, dir.join("train_pu.csv"))?;
        for cell in cells(cfg).into_iter().filter(|c| c.placement == placement) {
            let attack = attack_dataset(cfg, placement, cell.d, cell.sigma2_attacker, cfg.attack_slots(cell.puea_pct))
                .map_err(|e| e.in_cell(cell.to_string()))?;
            write_csv(&attack, dir.join(format!("attack_{}.csv", cell.stem())))?;
            write_csv(&train.concat(&attack), dir.join(format!("test_{}.csv", cell.stem())))?;
        }
        println!("wrote {} ({} training rows)", dir.display(), train.len());
    }
    Ok(())
}

fn train(cfg: &RunConfig, data: &Path, kind: DetectorKind, model: Option<PathBuf>) -> CmdResult {
    let ds = read_csv(data)?;
    ds.require_non_empty()?;
    let attacks = ds.count(Label::Attack);
    if attacks > 0 {
        let first = ds.examples.iter().find(|e| e.label == Label::Attack).map_or(0, |e| e.slot_id);
        return Err(Failure::Data(anyhow::anyhow!(
            "{}: one-class training requires PU-only data (all labels +1), found {attacks} rows labelled -1 (first at slot {first})",
            data.display()
        )));
    }
    let det = Detector::fit(kind, ds.feature_matrix().view(), &detector_params(cfg))?;
    let path = model.unwrap_or_else(|| cfg.out_dir.join(format!("{}.model", kind.tag())));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_model(&det, &path)?;
    println!(
        "trained {kind} on {} rows; threshold {}; model written to {}",
        ds.len(),
        det.threshold.map_or("none".into(), |t| t.to_string()),
        path.display()
    );
    Ok(())
}

fn print_metrics(prefix: &str, m: &MetricsReport) {
    let flag = |undefined: bool| if undefined { " (undefined)" } else { "" };
    println!(
        "{prefix}accuracy {:.2}%  precision {:.2}%{}  recall {:.2}%{}  f1 {:.2}%{}",
        100.0 * m.accuracy,
        100.0 * m.precision,
        flag(m.precision_undefined),
        100.0 * m.recall,
        flag(m.recall_undefined),
        100.0 * m.f1,
        flag(m.f1_undefined),
    );
}

/// Appends `rows` under `header`, writing the header only to a new file.
fn append_csv(path: &Path, header: &str, rows: &[String]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut text = String::new();
    if fresh {
        text.push_str(header);
        text.push('\n');
    }
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    f.write_all(text.as_bytes()).with_context(|| format!("cannot write {}", path.display()))
}

fn metric_fields(m: &MetricsReport) -> String {
    format!("{},{},{},{}", m.accuracy, m.precision, m.recall, m.f1)
}

fn evaluate_cmd(cfg: &RunConfig, model: &Path, data: &Path, report: Option<PathBuf>) -> CmdResult {
    let det = read_model(model)?;
    let ds = read_csv(data)?;
    let m = evaluate(&det, &ds).with_context(|| format!("evaluating {} on {}", model.display(), data.display()))?;
    print_metrics(&format!("{} on {} ({} rows): ", det.kind(), data.display(), ds.len()), &m);
    let path = report.unwrap_or_else(|| cfg.out_dir.join("evaluate.csv"));
    let row = format!("{},{},{},{}", det.kind().tag(), model.display(), data.display(), metric_fields(&m));
    append_csv(&path, "detector,model,data,accuracy,precision,recall,f1", &[row])?;
    Ok(())
}

fn cv_cmd(cfg: &RunConfig, data: &Path, kind: DetectorKind, k: usize, report: Option<PathBuf>) -> CmdResult {
    let ds = read_csv(data)?;
    if k < 2 || k >= ds.len() {
        return Err(Failure::Usage(anyhow::anyhow!(
            "--k must satisfy 2 <= k < {} (rows in {}), got {k}",
            ds.len(),
            data.display()
        )));
    }
    let cv = kfold_cv(&ds, k, kind, &detector_params(cfg), cv_seed(cfg))?;
    let mut rows = Vec::new();
    for (f, m) in cv.per_fold.iter().enumerate() {
        print_metrics(&format!("{kind} fold {}/{k}: ", f + 1), m);
        rows.push(format!("{},{},{k},{},{}", kind.tag(), data.display(), f + 1, metric_fields(m)));
    }
    print_metrics(&format!("{kind} mean over {k} folds: "), &cv.mean);
    rows.push(format!("{},{},{k},mean,{}", kind.tag(), data.display(), metric_fields(&cv.mean)));
    let path = report.unwrap_or_else(|| cfg.out_dir.join("cv.csv"));
    append_csv(&path, "detector,data,k,fold,accuracy,precision,recall,f1", &rows)?;
    Ok(())
}

fn report_cmd(cfg: &RunConfig, dry_run: bool) -> CmdResult {
    let grid = cells(cfg);
    if dry_run {
        for cell in &grid {
            println!("{}", cell.stem());
        }
        println!("{} cells x {} detectors, holdout plus k in {:?}", grid.len(), cfg.detectors.len(), cfg.k_list);
        return Ok(());
    }
    let report = run_experiment(cfg)?;
    create_dir(&cfg.out_dir)?;
    let table = report.to_table();
    print!("{table}");
    let table_path = cfg.out_dir.join("report.txt");
    fs::write(&table_path, &table).with_context(|| format!("cannot write {}", table_path.display()))?;
    let csv_path = cfg.out_dir.join("report.csv");
    report.write_csv(&csv_path)?;
    println!("wrote {} and {}", table_path.display(), csv_path.display());
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    let cfg = load_config(&cli.global).map_err(Failure::Usage)?;
    match cli.command {
        Command::Simulate => simulate(&cfg),
        Command::Train { data, detector, model } => train(&cfg, &data, detector, model),
        Command::Evaluate { model, data, report } => evaluate_cmd(&cfg, &model, &data, report),
        Command::Cv { data, detector, k, report } => cv_cmd(&cfg, &data, detector, k, report),
        Command::Report { dry_run } => report_cmd(&cfg, dry_run),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
