//! Synthetic long-horizon dialogues and the metric suite run over them.

mod eval;
mod scenario;

pub use eval::{
    ablate, evaluate, evaluate_from, scenario_losses, write_curve_csv, EvalReport, Policy,
    ABLATION_VARIANTS,
};
pub use scenario::{
    generate_scenario, Persona, Probe, ProbeKind, Scenario, ScenarioParams,
    RESTATEMENT_PROBABILITY,
};
