use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlmem::harness::{ablate, evaluate, write_curve_csv, EvalReport, Policy, ScenarioParams};
use mlmem::memory::read_sessions_jsonl;
use mlmem::retention::{tune, write_grid_csv, TuneGrid};
use mlmem::{Engine, EngineConfig, Error, Result, Snapshot, TemplateResponder};
use serde_json::json;

#[derive(Parser)]
#[command(name = "mlmem", version, about = "Multi-layer memory engine for long dialogues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Consolidate sessions from a JSONL file into a state snapshot.
    ///
    /// An existing snapshot is resumed; its sessions must be continued in order.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Answer a question against a snapshot.
    Query {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        top_j: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Evaluate one policy on a synthetic scenario.
    Eval {
        #[arg(long)]
        scenario_seed: u64,
        #[arg(long, default_value_t = 20)]
        personas: usize,
        #[arg(long, default_value_t = 8)]
        periods: usize,
        #[arg(long, default_value = "mlmf")]
        policy: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the full engine and each single-mechanism ablation.
    Ablate {
        #[arg(long)]
        scenario_seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search alpha, beta and lambda; writes one CSV row per point.
    Sweep {
        #[arg(long)]
        scenario_seed: u64,
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        betas: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit `period,retention` rows from an eval report.
    Plotdata {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    match path {
        Some(p) => EngineConfig::from_json(&std::fs::read_to_string(p)?),
        None => Ok(EngineConfig::default()),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn scenario(seed: u64, personas: usize, periods: usize) -> Result<mlmem::harness::Scenario> {
    ScenarioParams {
        n_personas: personas,
        periods,
        seed,
        ..ScenarioParams::default()
    }
    .generate()
}

fn ingest(input: &Path, snapshot: &Path, config: Option<&Path>) -> Result<()> {
    let sessions = read_sessions_jsonl(BufReader::new(File::open(input)?))?;
    let (cfg, mut state) = if snapshot.exists() {
        let snap = Snapshot::load(snapshot)?;
        if let Some(path) = config {
            if load_config(Some(path))? != snap.config {
                return Err(Error::InvalidConfig(format!(
                    "{} differs from the configuration stored in {}",
                    path.display(),
                    snapshot.display()
                )));
            }
        }
        (snap.config, snap.state)
    } else {
        let cfg = load_config(config)?;
        let state = Engine::new(cfg.clone())?.fresh_state()?;
        (cfg, state)
    };

    let engine = Engine::new(cfg.clone())?;
    let mut usage = Vec::with_capacity(sessions.len());
    for session in &sessions {
        let out = engine
            .step(&state, session, None, &TemplateResponder)
            .map_err(|e| Error::Step {
                index: session.index(),
                source: Box::new(e),
            })?;
        usage.push(out.context_usage);
        state = out.state;
    }
    let summary = json!({
        "sessions_ingested": sessions.len(),
        "session_cursor": state.session_cursor,
        "working_entries": state.working.entries().len(),
        "episodic_summaries": state.episodic.log().len(),
        "semantic_nodes": state.semantic.nodes().len(),
        "context_usage": usage,
    });
    Snapshot::new(cfg, state).save(snapshot)?;
    println!("{summary}");
    Ok(())
}

fn query(snapshot: &Path, text: &str, top_j: Option<usize>, budget: Option<usize>) -> Result<()> {
    let snap = Snapshot::load(snapshot)?;
    let mut cfg = snap.config;
    if let Some(j) = top_j {
        cfg.top_j = j;
    }
    if let Some(b) = budget {
        cfg.token_budget = b;
    }
    let engine = Engine::new(cfg)?;
    let query = engine.query(text, snap.state.session_cursor.unwrap_or(0))?;
    let answer = engine.answer(&snap.state, &query, &TemplateResponder)?;
    let items: Vec<_> = answer
        .retrieval
        .items()
        .map(|i| json!({"layer": i.layer, "text": i.text, "score": i.global_score}))
        .collect();
    let out = json!({
        "response": answer.response,
        "context": answer.fused.context_text,
        "weights": answer.retrieval.weights.as_array(),
        "entropy": answer.fused.entropy,
        "token_cost": answer.retrieval.token_cost,
        "items": items,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            input,
            snapshot,
            config,
        } => ingest(&input, &snapshot, config.as_deref()),
        Command::Query {
            snapshot,
            text,
            top_j,
            budget,
        } => query(&snapshot, &text, top_j, budget),
        Command::Eval {
            scenario_seed,
            personas,
            periods,
            policy,
            config,
            out,
        } => {
            let policy: Policy = policy.parse()?;
            let cfg = load_config(config.as_deref())?;
            let report = evaluate(&scenario(scenario_seed, personas, periods)?, &cfg, policy)?;
            write_json(&out, &report)
        }
        Command::Ablate {
            scenario_seed,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let defaults = ScenarioParams::default();
            let scenario = scenario(scenario_seed, defaults.n_personas, defaults.periods)?;
            write_json(&out, &ablate(&scenario, &cfg)?)
        }
        Command::Sweep {
            scenario_seed,
            alphas,
            betas,
            lambdas,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let defaults = ScenarioParams::default();
            let scenario = scenario(scenario_seed, defaults.n_personas, defaults.periods)?;
            let grid = TuneGrid {
                alphas,
                betas,
                lambdas,
            };
            let result = tune(&scenario, &cfg, &grid)?;
            write_grid_csv(&result, BufWriter::new(File::create(&out)?))?;
            let (alpha, beta, lambda) = result.best;
            println!(
                "{}",
                json!({"alpha": alpha, "beta": beta, "lambda": lambda, "objective": result.objective.total})
            );
            Ok(())
        }
        Command::Plotdata { report, out } => {
            let report: EvalReport = serde_json::from_reader(BufReader::new(File::open(report)?))?;
            write_curve_csv(&report, BufWriter::new(File::create(out)?))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
