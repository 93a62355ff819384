//! Retention drift between consecutive semantic graphs, the combined
//! objective, and a grid-search tuner over `(alpha, beta, lambda)`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::harness::{scenario_losses, Scenario};
use crate::memory::SemanticGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DriftReport {
    /// Squared embedding displacement of every entity present on both sides.
    pub per_entity: BTreeMap<String, f64>,
    pub total: f64,
    pub born: BTreeSet<String>,
    pub died: BTreeSet<String>,
}

/// Entity id to node embedding.
pub fn entity_projection(graph: &SemanticGraph) -> BTreeMap<String, Embedding> {
    graph
        .nodes()
        .iter()
        .map(|(id, node)| (id.clone(), node.embedding.clone()))
        .collect()
}

/// Drift from `prev` to `curr`. Entities present on one side only are
/// reported as born or died and add nothing to the total.
pub fn drift(prev: &SemanticGraph, curr: &SemanticGraph) -> Result<DriftReport> {
    let before = entity_projection(prev);
    let after = entity_projection(curr);
    let mut report = DriftReport::default();
    for (id, new) in &after {
        match before.get(id) {
            Some(old) => {
                let d = old.distance_sq(new)?;
                report.total += d;
                report.per_entity.insert(id.clone(), d);
            }
            None => {
                report.born.insert(id.clone());
            }
        }
    }
    report.died = before
        .keys()
        .filter(|id| !after.contains_key(*id))
        .cloned()
        .collect();
    Ok(report)
}

/// Sum of drift totals over consecutive graphs.
pub fn cumulative_retention_loss(trajectory: &[SemanticGraph]) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::Contract("trajectory must hold at least one graph".into()));
    }
    trajectory
        .windows(2)
        .map(|pair| drift(&pair[0], &pair[1]).map(|d| d.total))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub gen_loss: f64,
    pub ret_loss: f64,
    pub lambda: f64,
    pub total: f64,
}

/// `gen_loss + lambda * ret_loss`.
pub fn objective(gen_loss: f64, ret_loss: f64, lambda: f64) -> Result<ObjectiveValue> {
    for (name, v) in [("gen_loss", gen_loss), ("ret_loss", ret_loss), ("lambda", lambda)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Contract(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    Ok(ObjectiveValue {
        gen_loss,
        ret_loss,
        lambda,
        total: gen_loss + lambda * ret_loss,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl TuneGrid {
    /// Grid points in evaluation order: alpha outermost, lambda innermost.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.alphas.len() * self.betas.len() * self.lambdas.len());
        for &a in &self.alphas {
            for &b in &self.betas {
                for &l in &self.lambdas {
                    out.push((a, b, l));
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.betas.is_empty() || self.lambdas.is_empty() {
            return Err(Error::InvalidConfig("every grid axis needs at least one value".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidConfig(format!("grid alpha {a} outside [0, 1]")));
        }
        if let Some(b) = self.betas.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::InvalidConfig(format!("grid beta {b} must be > 0")));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::InvalidConfig(format!("grid lambda {l} must be >= 0")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub objective: ObjectiveValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: (f64, f64, f64),
    pub objective: ObjectiveValue,
    pub grid: Vec<GridPoint>,
}

/// Runs the engine on `scenario` for every grid point and keeps the lowest
/// objective. Ties go to the lexicographically smallest `(alpha, beta,
/// lambda)`. Points are evaluated in parallel; results keep grid order.
pub fn tune(scenario: &Scenario, base: &EngineConfig, grid: &TuneGrid) -> Result<TuneResult> {
    grid.validate()?;
    let evaluated: Vec<GridPoint> = grid
        .points()
        .into_par_iter()
        .map(|(alpha, beta, lambda)| {
            let cfg = EngineConfig {
                alpha,
                beta,
                lambda,
                ..base.clone()
            };
            scenario_losses(scenario, &cfg)
                .and_then(|(gen, ret)| objective(gen, ret, lambda))
                .map(|objective| GridPoint {
                    alpha,
                    beta,
                    lambda,
                    objective,
                })
                .map_err(|e| Error::Sweep {
                    alpha,
                    beta,
                    lambda,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;

    let best = evaluated
        .iter()
        .min_by(|a, b| {
            a.objective
                .total
                .total_cmp(&b.objective.total)
                .then(a.alpha.total_cmp(&b.alpha))
                .then(a.beta.total_cmp(&b.beta))
                .then(a.lambda.total_cmp(&b.lambda))
        })
        .expect("grid is non-empty");
    Ok(TuneResult {
        best: (best.alpha, best.beta, best.lambda),
        objective: best.objective,
        grid: evaluated,
    })
}

/// `alpha,beta,lambda,gen_loss,ret_loss,total`, one row per grid point.
pub fn write_grid_csv(result: &TuneResult, writer: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["alpha", "beta", "lambda", "gen_loss", "ret_loss", "total"])?;
    for p in &result.grid {
        out.write_record([
            p.alpha.to_string(),
            p.beta.to_string(),
            p.lambda.to_string(),
            p.objective.gen_loss.to_string(),
            p.objective.ret_loss.to_string(),
            p.objective.total.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
