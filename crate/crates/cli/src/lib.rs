//! Command-line front end: `split`, `simulate`, `train` and `report`.
//!
//! Exit codes: 0 on success, 2 for user or input errors, 3 when training
//! breaks down numerically.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use mozart::data::{
    stratified_split, synth_base_learners, PredictionTable, Registry, SplitAssignment, SplitRatios,
    SynthConfig,
};
use mozart::metrics::percent_half_up;
use mozart::stacker::{compare_runs, run_mozart, StackRun, HISTORY_FILE};
use mozart::{Error, Result};

use config::{read_text, DatasetSource, RunConfigDocument, DEFAULT_OUTPUT};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

pub const SPLIT_OUTPUT: &str = "split.json";
pub const PREDICTIONS_OUTPUT: &str = "predictions.csv";
pub const COMPARISON_OUTPUT: &str = "comparison.csv";

#[derive(Debug, Parser)]
#[command(
    name = "mozart",
    version,
    about = "Stacked-ensemble meta-learner for binary classification"
)]
pub struct Cli {
    /// TOML run configuration document.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed used by the command (split seed, preset seed, or synth seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: the document's `output`, else `mozart-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stratified train/validation/test split; writes split.json.
    Split {
        /// Registry CSV (`id,label[,source_path]`); overrides the document's dataset.
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, requires_all = ["validation", "test"])]
        train: Option<f64>,
        #[arg(long, requires_all = ["train", "test"])]
        validation: Option<f64>,
        #[arg(long, requires_all = ["train", "validation"])]
        test: Option<f64>,
    },
    /// Draws synthetic base-model predictions; writes predictions.csv.
    Simulate {
        /// TOML synth configuration; defaults to the document's [dataset.synth].
        synth: Option<PathBuf>,
    },
    /// Trains every configured preset; writes one run directory per preset
    /// and comparison.csv.
    Train,
    /// Rebuilds the comparison table and history exports from run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

/// Runs a parsed command, printing to stdout. Returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let doc = match &cli.config {
        Some(p) => RunConfigDocument::load(p)?,
        None => RunConfigDocument::default(),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| doc.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    match &cli.command {
        Command::Split {
            registry,
            train,
            validation,
            test,
        } => {
            let registry = match registry {
                Some(p) => load_registry(p)?,
                None => registry_from_doc(&doc)?,
            };
            let ratios = match (train, validation, test) {
                (Some(t), Some(v), Some(s)) => SplitRatios {
                    train: *t,
                    validation: *v,
                    test: *s,
                },
                _ => doc.split.ratios.unwrap_or_default(),
            };
            let seed = cli.seed.or(doc.split.seed).unwrap_or(0);
            cmd_split(&registry, ratios, seed, &out)
        }
        Command::Simulate { synth } => {
            let mut cfg = match synth {
                Some(p) => toml::from_str::<SynthConfig>(&read_text(p)?)
                    .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?,
                None => match doc.dataset.source()? {
                    Some(DatasetSource::Synth(s)) => s,
                    _ => {
                        return Err(Error::InvalidArgument(
                            "simulate needs a synth config file or a [dataset.synth] table".into(),
                        ))
                    }
                },
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            cmd_simulate(&cfg, &out)
        }
        Command::Train => cmd_train(&doc, cli.seed, &out),
        Command::Report { runs } => cmd_report(runs, &out),
    }
}

fn load_registry(path: &Path) -> Result<Registry> {
    Registry::from_csv(&read_text(path)?)
}

fn load_predictions(path: &Path) -> Result<PredictionTable> {
    PredictionTable::parse(&read_text(path)?)
}

fn registry_from_doc(doc: &RunConfigDocument) -> Result<Registry> {
    match doc.dataset.source()? {
        Some(DatasetSource::Registry(p)) => load_registry(&p),
        Some(DatasetSource::Predictions(p)) => Ok(load_predictions(&p)?.to_registry()),
        Some(DatasetSource::Synth(s)) => Ok(synth_base_learners(&s)?.to_registry()),
        None => Err(Error::InvalidArgument(
            "no dataset given; pass --registry or set [dataset] in --config".into(),
        )),
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)
        .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}

fn class_counts(registry: &Registry, ids: &[String]) -> [usize; 2] {
    let mut c = [0; 2];
    for id in ids {
        if let Some(l) = registry.label_of(id) {
            c[l as usize] += 1;
        }
    }
    c
}

pub fn cmd_split(registry: &Registry, ratios: SplitRatios, seed: u64, out: &Path) -> Result<()> {
    let split = stratified_split(registry, ratios, seed)?;
    let path = out.join(SPLIT_OUTPUT);
    write(&path, &split.to_json())?;
    println!("split       total   class0   class1");
    for (name, ids) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        let [c0, c1] = class_counts(registry, ids);
        println!("{name:<10} {:>6} {c0:>8} {c1:>8}", ids.len());
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_simulate(cfg: &SynthConfig, out: &Path) -> Result<()> {
    let table = synth_base_learners(cfg)?;
    let path = out.join(PREDICTIONS_OUTPUT);
    write(&path, &table.to_csv())?;
    println!("model        accuracy");
    for (m, name) in table.model_names().iter().enumerate() {
        let correct = table
            .model_column(m)
            .iter()
            .zip(table.labels())
            .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
            .count();
        let acc = correct as f64 / table.len() as f64;
        println!("{name:<12} {acc:.4}");
    }
    println!("wrote {} ({} rows)", path.display(), table.len());
    Ok(())
}

pub fn cmd_train(doc: &RunConfigDocument, seed: Option<u64>, out: &Path) -> Result<()> {
    let preds = match doc.dataset.source()? {
        Some(DatasetSource::Predictions(p)) => load_predictions(&p)?,
        Some(DatasetSource::Synth(s)) => {
            let t = synth_base_learners(&s)?;
            write(&out.join(PREDICTIONS_OUTPUT), &t.to_csv())?;
            t
        }
        Some(DatasetSource::Registry(_)) => {
            return Err(Error::InvalidArgument(
                "train needs base-model predictions, not a registry".into(),
            ))
        }
        None => {
            return Err(Error::InvalidArgument(
                "train needs [dataset] in --config".into(),
            ))
        }
    };
    let split = match &doc.split.manifest {
        Some(p) => SplitAssignment::from_json(&read_text(p)?)?,
        None => {
            let ratios = doc.split.ratios.unwrap_or_default();
            let s = stratified_split(
                &preds.to_registry(),
                ratios,
                seed.or(doc.split.seed).unwrap_or(0),
            )?;
            write(&out.join(SPLIT_OUTPUT), &s.to_json())?;
            s
        }
    };
    let presets = doc.preset.resolve(seed)?;
    let mut runs = Vec::with_capacity(presets.len());
    for preset in &presets {
        let run = run_mozart(preset, &preds, &split)?;
        let dir = out.join(&preset.name);
        run.save(&dir)?;
        print_run(&run, &dir);
        runs.push(run);
    }
    let report = compare_runs(&runs)?;
    let path = out.join(COMPARISON_OUTPUT);
    write(&path, &report)?;
    println!("\n{report}wrote {}", path.display());
    Ok(())
}

fn print_run(run: &StackRun, dir: &Path) {
    println!(
        "{}: best epoch {} of {} (val loss {:.6})",
        run.preset.name,
        run.best_epoch,
        run.history.len(),
        run.best_val_loss
    );
    println!("  set          accuracy precision   recall       f1");
    for (set, s) in [
        ("meta_train", &run.meta_train),
        ("meta_val", &run.meta_val),
        ("test", &run.test),
    ] {
        let m = s.metrics;
        println!(
            "  {set:<10} {:>9} {:>9} {:>8} {:>8}",
            percent_half_up(m.accuracy),
            percent_half_up(m.precision),
            percent_half_up(m.recall),
            percent_half_up(m.f1)
        );
    }
    println!("  wrote {}", dir.display());
}

pub fn cmd_report(dirs: &[PathBuf], out: &Path) -> Result<()> {
    let mut runs = Vec::with_capacity(dirs.len());
    for d in dirs {
        if !d.is_dir() {
            return Err(Error::InvalidArgument(format!(
                "{} is not a run directory",
                d.display()
            )));
        }
        runs.push(StackRun::load(d)?);
    }
    let report = compare_runs(&runs)?;
    write(&out.join(COMPARISON_OUTPUT), &report)?;
    for (i, (run, dir)) in runs.iter().zip(dirs).enumerate() {
        let stem = if runs[..i].iter().any(|r| r.preset.name == run.preset.name) {
            format!("{}_{i}", run.preset.name)
        } else {
            run.preset.name.clone()
        };
        let text = read_text(&dir.join(HISTORY_FILE))?;
        write(&out.join(format!("{stem}_history.csv")), &text)?;
    }
    print!("{report}");
    println!("wrote {}", out.join(COMPARISON_OUTPUT).display());
    Ok(())
}
