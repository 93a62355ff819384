//! Metric suite: retention@N, false-memory rate, context usage, success rate.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::scenario::{Probe, ProbeKind, Scenario};
use crate::embedding::{cosine, tokenize};
use crate::engine::{Engine, EngineConfig, LayerSwitches, TemplateResponder};
use crate::error::{Error, Result};
use crate::memory::MemoryState;
use crate::retention::{objective, ObjectiveValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// All three layers with adaptive gating.
    Mlmf,
    /// Working memory only.
    WindowOnly,
    /// Episodic summaries only.
    SummaryOnly,
}

impl Policy {
    pub fn apply(self, cfg: &EngineConfig) -> EngineConfig {
        let layers = match self {
            Policy::Mlmf => cfg.layers,
            Policy::WindowOnly => LayerSwitches {
                working: true,
                episodic: false,
                semantic: false,
            },
            Policy::SummaryOnly => LayerSwitches {
                working: false,
                episodic: true,
                semantic: false,
            },
        };
        EngineConfig {
            layers,
            ..cfg.clone()
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Policy::Mlmf => "mlmf",
            Policy::WindowOnly => "window_only",
            Policy::SummaryOnly => "summary_only",
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlmf" => Ok(Policy::Mlmf),
            "window_only" => Ok(Policy::WindowOnly),
            "summary_only" => Ok(Policy::SummaryOnly),
            other => Err(Error::Contract(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Period gap to fraction of true probes retained.
    pub retention_at: BTreeMap<u64, f64>,
    /// False-memory rate.
    pub fmr: f64,
    pub mean_context_usage: f64,
    pub success_rate: f64,
    /// Per-session retention drift.
    pub drift_curve: Vec<f64>,
    /// Per-session `(w, e, s)` gating weights.
    pub gating_curve: Vec<[f64; 3]>,
    /// Tuning objective evaluated on this run.
    pub objective: ObjectiveValue,
    pub config_echo: EngineConfig,
}

/// True when `needle`'s tokens occur contiguously in `haystack`'s tokens.
pub(crate) fn contains_phrase(haystack: &str, needle: &str) -> bool {
    let needle: Vec<String> = tokenize(needle).collect();
    if needle.is_empty() {
        return false;
    }
    let hay: Vec<String> = tokenize(haystack).collect();
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

fn in_graph(probe: &Probe, state: &MemoryState) -> bool {
    state
        .semantic
        .current_value(&probe.subject, &probe.attribute)
        .is_some_and(|v| v.eq_ignore_ascii_case(&probe.gold_value))
}

/// Whether the probe's gold value is recoverable from the context or graph.
fn recalled(probe: &Probe, state: &MemoryState, context: &str) -> bool {
    in_graph(probe, state) || contains_phrase(context, &probe.gold_value)
}

/// Whether the system asserts the probe's value about the probe's subject:
/// as the graph's current value, or as `"subject attribute value"` in the
/// context. A value stated only about another entity does not count.
fn asserted(probe: &Probe, state: &MemoryState, context: &str) -> bool {
    let claim = format!("{} {} {}", probe.subject, probe.attribute, probe.gold_value);
    in_graph(probe, state) || contains_phrase(context, &claim)
}

#[derive(Default)]
struct Tally {
    retained: BTreeMap<u64, (usize, usize)>,
    false_hits: usize,
    false_total: usize,
    usage: Vec<f64>,
    drift: Vec<f64>,
    gating: Vec<[f64; 3]>,
    gen_terms: Vec<f64>,
}

fn run_from(engine: &Engine, scenario: &Scenario, mut state: MemoryState) -> Result<Tally> {
    let start = state.next_session_index();
    let mut by_period: BTreeMap<u64, Vec<&Probe>> = BTreeMap::new();
    for probe in &scenario.probes {
        by_period.entry(probe.period).or_default().push(probe);
    }

    let mut tally = Tally::default();
    for session in scenario.sessions.iter().filter(|s| s.index() >= start) {
        let out = engine
            .step(&state, session, None, &TemplateResponder)
            .map_err(|e| Error::Step {
                index: session.index(),
                source: Box::new(e),
            })?;
        tally.usage.push(out.context_usage);
        tally.drift.push(out.drift.total);
        tally.gating.push(out.retrieval.weights.as_array());
        state = out.state;

        for probe in by_period.get(&session.index()).into_iter().flatten() {
            let query = engine.query(probe.question.clone(), session.index())?;
            let answer = engine.answer(&state, &query, &TemplateResponder)?;
            let context = &answer.fused.context_text;
            match probe.kind {
                ProbeKind::TrueFact => {
                    let hit = recalled(probe, &state, context);
                    let gap = probe.gap().expect("true probes carry introduction period");
                    let slot = tally.retained.entry(gap).or_default();
                    slot.0 += usize::from(hit);
                    slot.1 += 1;
                    let gold = engine.embedder().embed(&probe.gold_value)?;
                    tally.gen_terms.push(1.0 - cosine(&answer.fused.vector, &gold)?);
                }
                ProbeKind::FalseFact => {
                    tally.false_hits += usize::from(asserted(probe, &state, context));
                    tally.false_total += 1;
                }
            }
        }
    }
    Ok(tally)
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn report(engine: &Engine, tally: Tally, gaps: impl Iterator<Item = u64>) -> Result<EvalReport> {
    let mut retention_at: BTreeMap<u64, f64> = gaps.map(|g| (g, 0.0)).collect();
    let (mut hits, mut total) = (0, 0);
    for (gap, (h, n)) in &tally.retained {
        retention_at.insert(*gap, fraction(*h, *n));
        hits += h;
        total += n;
    }
    let gen_loss = mean(&tally.gen_terms);
    let ret_loss: f64 = tally.drift.iter().sum();
    Ok(EvalReport {
        retention_at,
        fmr: fraction(tally.false_hits, tally.false_total),
        mean_context_usage: mean(&tally.usage),
        success_rate: fraction(hits, total),
        drift_curve: tally.drift,
        gating_curve: tally.gating,
        objective: objective(gen_loss, ret_loss, engine.config().lambda)?,
        config_echo: engine.config().clone(),
    })
}

/// Runs `policy` over the whole scenario from the empty state.
pub fn evaluate(scenario: &Scenario, cfg: &EngineConfig, policy: Policy) -> Result<EvalReport> {
    let engine = Engine::new(policy.apply(cfg))?;
    let tally = run_from(&engine, scenario, engine.fresh_state()?)?;
    report(&engine, tally, 1..scenario.periods as u64)
}

/// Continues evaluation from `state`, covering only the sessions and probes
/// after its cursor. `cfg` is used as given.
pub fn evaluate_from(scenario: &Scenario, cfg: &EngineConfig, state: MemoryState) -> Result<EvalReport> {
    let engine = Engine::new(cfg.clone())?;
    let tally = run_from(&engine, scenario, state)?;
    report(&engine, tally, std::iter::empty())
}

/// Generation-loss proxy and cumulative retention drift of one full run.
pub fn scenario_losses(scenario: &Scenario, cfg: &EngineConfig) -> Result<(f64, f64)> {
    let engine = Engine::new(cfg.clone())?;
    let tally = run_from(&engine, scenario, engine.fresh_state()?)?;
    Ok((mean(&tally.gen_terms), tally.drift.iter().sum()))
}

/// Variant names produced by [`ablate`].
pub const ABLATION_VARIANTS: [&str; 5] = [
    "full",
    "no_semantic",
    "no_episodic",
    "no_retention_loss",
    "no_gating",
];

/// Full engine plus one report per single removed mechanism.
pub fn ablate(scenario: &Scenario, cfg: &EngineConfig) -> Result<BTreeMap<String, EvalReport>> {
    let base = Policy::Mlmf.apply(cfg);
    let variant = |name: &str| -> EngineConfig {
        let mut c = base.clone();
        match name {
            "no_semantic" => c.layers.semantic = false,
            "no_episodic" => c.layers.episodic = false,
            "no_retention_loss" => c.lambda = 0.0,
            "no_gating" => c.uniform_gating = true,
            _ => {}
        }
        c
    };
    ABLATION_VARIANTS
        .iter()
        .map(|name| {
            let report = evaluate(scenario, &variant(name), Policy::Mlmf)?;
            Ok((name.to_string(), report))
        })
        .collect()
}

/// `period,retention` rows, one per gap.
pub fn write_curve_csv(report: &EvalReport, writer: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["period", "retention"])?;
    for (gap, value) in &report.retention_at {
        out.write_record([gap.to_string(), value.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
