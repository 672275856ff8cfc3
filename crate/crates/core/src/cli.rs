//! Command-line front end: `run`, `compare`, `serve` and `gen`.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on an invalid
//! configuration or usage.

use std::ffi::OsString;
use std::path::Path;

use clap::{Parser, Subcommand};

use crate::config::RunConfigDocument;
use crate::error::{Error, Result};
use crate::experiment::output::{write_csv_records, write_outputs};
use crate::experiment::{run_simulated, ExperimentResult};
use crate::oracle::OracleKind;
use crate::policy::StrategyKind;
use crate::synth::generate_synthetic;

pub const EXIT_OK: u8 = 0;
pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

pub const COMPARISON_FILE: &str = "comparison.csv";

#[derive(Debug, Parser)]
#[command(name = "aqua", version, about = "Active selection and reannotation for noisy QA labels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment with a simulated oracle.
    Run {
        /// Config file or preset name.
        config: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run several configs that differ only in strategy or oracle.
    Compare {
        #[arg(required = true)]
        configs: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run with a human oracle answering through the HTTP API.
    Serve {
        config: String,
        #[arg(long)]
        port: u16,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the synthetic corpus, rules and dataset of a config.
    Gen {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
    },
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, seed } => cmd_run(&config, seed).map(|_| ()),
        Command::Compare { configs, seed } => cmd_compare(&configs, seed).map(|_| ()),
        Command::Serve { config, port, seed } => cmd_serve(&config, port, seed).map(|_| ()),
        Command::Gen { config, seed } => cmd_gen(&config, seed),
    }
}

fn load(arg: &str, seed: Option<u64>) -> Result<RunConfigDocument> {
    Ok(RunConfigDocument::load(arg)?.with_seed(seed))
}

fn run_document(doc: &RunConfigDocument) -> Result<ExperimentResult> {
    if doc.loop_config.oracle.kind == OracleKind::RemoteHuman {
        return Err(Error::Config(format!(
            "{}: the remote_human oracle runs under `serve`",
            doc.label()
        )));
    }
    let data = doc.load_data()?;
    run_simulated(&doc.loop_config(), data.records, &data.bundle)
}

fn summarize(label: &str, result: &ExperimentResult, dir: &Path) {
    match &result.final_metrics {
        Some(m) => println!(
            "{label}: final EM@1 {:.2}, best {:.2}, AUC {:.2} -> {}",
            m.em1,
            m.best_em1,
            result.auc,
            dir.display()
        ),
        None => println!("{label}: no epochs run -> {}", dir.display()),
    }
}

pub fn cmd_run(arg: &str, seed: Option<u64>) -> Result<ExperimentResult> {
    let doc = load(arg, seed)?;
    let result = run_document(&doc)?;
    let dir = doc.resolved_output_dir();
    write_outputs(&dir, &result)?;
    summarize(&doc.label(), &result, &dir);
    Ok(result)
}

/// `1 − cost / cost_reference`; absent when either cost is.
pub fn reduction(cost: Option<usize>, reference: Option<usize>) -> Option<f64> {
    match (cost, reference) {
        (Some(c), Some(0)) => (c == 0).then_some(0.0),
        (Some(c), Some(r)) => Some(1.0 - c as f64 / r as f64),
        _ => None,
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| v.to_string())
}

/// Runs every config into `<out>/<label>/` and writes `<out>/comparison.csv`.
/// Reductions are taken against the first random-strategy run, or the first
/// run when there is none.
pub fn cmd_compare(args: &[String], seed: Option<u64>) -> Result<Vec<(String, ExperimentResult)>> {
    let docs: Vec<RunConfigDocument> = args.iter().map(|a| load(a, seed)).collect::<Result<_>>()?;
    if docs.len() < 2 {
        return Err(Error::Config("compare needs at least two configs".into()));
    }
    let first = &docs[0];
    let key = first.comparison_key();
    for (arg, doc) in args.iter().zip(&docs).skip(1) {
        if doc.comparison_key() != key {
            return Err(Error::Config(format!(
                "{arg} differs from {} in more than strategy and oracle",
                args[0]
            )));
        }
    }
    let out = first.resolved_output_dir();
    let mut labels: Vec<String> = Vec::new();
    for doc in &docs {
        let base = doc.label();
        let mut label = base.clone();
        let mut n = 2;
        while labels.contains(&label) {
            label = format!("{base}-{n}");
            n += 1;
        }
        labels.push(label);
    }

    let mut runs = Vec::new();
    for (doc, label) in docs.iter().zip(labels) {
        let result = run_document(doc)?;
        let dir = out.join(&label);
        write_outputs(&dir, &result)?;
        summarize(&label, &result, &dir);
        runs.push((label, result));
    }

    let reference = runs
        .iter()
        .position(|(_, r)| r.strategy == StrategyKind::Random)
        .unwrap_or(0);
    let thresholds = &first.loop_config.score_thresholds;
    let mut header: Vec<String> = ["label", "strategy", "oracle", "auc", "final_em1", "best_em1"]
        .map(String::from)
        .to_vec();
    for t in thresholds {
        header.push(format!("cost_{t}"));
        header.push(format!("reduction_{t}"));
    }
    let mut rows = Vec::new();
    for (label, r) in &runs {
        let mut row = vec![
            label.clone(),
            r.strategy.as_str().to_string(),
            r.oracle.as_str().to_string(),
            r.auc.to_string(),
            fmt_opt(r.final_metrics.as_ref().map(|m| m.em1)),
            fmt_opt(r.final_metrics.as_ref().map(|m| m.best_em1)),
        ];
        for (i, c) in r.cost_to_threshold.iter().enumerate() {
            let reference_cost = runs[reference].1.cost_to_threshold[i].epoch;
            row.push(fmt_opt(c.epoch));
            row.push(fmt_opt(reduction(c.epoch, reference_cost)));
        }
        rows.push(row);
    }
    let path = out.join(COMPARISON_FILE);
    write_csv_records(&path, &header, &rows)?;

    println!("reduction vs {}:", runs[reference].0);
    for row in &rows {
        let cells: Vec<String> = thresholds
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{t}: {}", row[7 + 2 * i]))
            .collect();
        println!("  {:<28} {}", row[0], cells.join("  "));
    }
    println!("wrote {}", path.display());
    Ok(runs)
}

pub fn cmd_gen(arg: &str, seed: Option<u64>) -> Result<()> {
    let doc = load(arg, seed)?;
    let gen = doc
        .gen_config()
        .ok_or_else(|| Error::Config("gen needs a config with a generated data source".into()))?;
    let data = generate_synthetic(&gen)?;
    let dir = doc.resolved_output_dir();
    data.write(&dir)?;
    println!(
        "wrote {} instances and {} terms to {}",
        data.records.len(),
        data.bundle.corpus.len(),
        dir.display()
    );
    Ok(())
}

pub fn cmd_serve(arg: &str, port: u16, seed: Option<u64>) -> Result<ExperimentResult> {
    let doc = load(arg, seed)?;
    let config = doc.loop_config();
    if config.oracle.kind != OracleKind::RemoteHuman {
        return Err(Error::Config(format!(
            "{}: serve needs oracle.kind = remote_human, got {}",
            doc.label(),
            config.oracle.kind.as_str()
        )));
    }
    let data = doc.load_data()?;
    println!("serving on http://127.0.0.1:{port}");
    let result = crate::service::serve(&config, data.records, data.bundle, port)?;
    let dir = doc.resolved_output_dir();
    write_outputs(&dir, &result)?;
    summarize(&doc.label(), &result, &dir);
    Ok(result)
}
