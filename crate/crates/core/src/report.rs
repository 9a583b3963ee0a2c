//! Machine-readable run reports shared by the solvers and the CLI.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instance::Instance;
use crate::matching::Matching;
use crate::multilinear::Estimate;
use crate::rounding::{CycleStep, FractionalAllocation, IntegralAllocation};
use crate::valuations::{AgentId, GoodId, GoodSet};

/// Geometric mean of `values`; zero if any value is zero.
pub fn nash_welfare(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|&v| v <= 0.0) {
        return 0.0;
    }
    let n = values.len() as f64;
    let product: f64 = values.iter().product();
    if product.is_normal() {
        product.powf(1.0 / n)
    } else {
        (values.iter().map(|v| v.ln()).sum::<f64>() / n).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub min_value: f64,
    pub nsw: f64,
    /// `v_i(A_i) / MMS_i` per agent, when the brute-force oracle was feasible.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mms_ratios: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub target: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    StepUnderflow,
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionEntry {
    pub agent: AgentId,
    pub good: GoodId,
    pub value: f64,
    /// `½ V_i(uniform)` on the residual instance at allocation time.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificates {
    Santa {
        /// Largest grid target accepted by the feasibility test.
        b_star: f64,
        max_singleton: f64,
        /// `(1 − 1/e − eps)·B* − Max`.
        guarantee: f64,
        grid_ratio: f64,
        grid_low: f64,
        grid_high: f64,
        probes: Vec<Probe>,
        probes_monotone: bool,
        fractional: FractionalAllocation,
        fractional_values: Vec<Estimate>,
        trace: Vec<CycleStep>,
    },
    Nsw {
        initial_matching: Matching,
        matched_goods: Vec<GoodId>,
        residual_goods: Vec<GoodId>,
        /// Local-search point over the residual goods.
        fractional: Option<FractionalAllocation>,
        fractional_values: Vec<f64>,
        gap: f64,
        stop: StopReason,
        locally_optimal: bool,
        floor_used: bool,
        rounded: Vec<Vec<GoodId>>,
        rematching: Matching,
        degenerate: bool,
        trace: Vec<CycleStep>,
    },
    Mms {
        reduction: Vec<ReductionEntry>,
        residual_agents: Vec<AgentId>,
        residual_goods: Vec<GoodId>,
        uniform_values: Vec<Estimate>,
        mms: Option<Vec<f64>>,
        trace: Vec<CycleStep>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    pub instance_digest: String,
    pub params: serde_json::Value,
    pub allocation: Vec<Vec<GoodId>>,
    pub per_agent_values: Vec<f64>,
    pub objective: Objective,
    pub certificates: Certificates,
    pub iterations: u64,
    pub wall_time_ms: u64,
}

impl RunReport {
    pub(crate) fn build(
        algorithm: &str,
        instance: &Instance,
        params: serde_json::Value,
        allocation: &IntegralAllocation,
        certificates: Certificates,
        iterations: u64,
        started: std::time::Instant,
    ) -> Result<Self> {
        let values = allocation.values(instance.valuations())?;
        Ok(RunReport {
            algorithm: algorithm.to_string(),
            instance_digest: instance.digest(),
            params,
            allocation: allocation.to_lists(),
            objective: Objective {
                min_value: values.iter().cloned().fold(f64::INFINITY, f64::min),
                nsw: nash_welfare(&values),
                mms_ratios: None,
            },
            per_agent_values: values,
            certificates,
            iterations,
            wall_time_ms: started.elapsed().as_millis() as u64,
        })
    }

    /// Rebuilds the integral allocation from the reported bundles.
    pub fn integral(&self, goods: usize) -> Result<IntegralAllocation> {
        let bundles = self
            .allocation
            .iter()
            .map(|b| GoodSet::from_indices(goods, b.iter().copied()))
            .collect::<Result<Vec<_>>>()?;
        IntegralAllocation::new(goods, bundles)
    }
}
