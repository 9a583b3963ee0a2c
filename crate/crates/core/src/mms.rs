//! Maximin share: single-good reduction followed by pipage rounding of the
//! uniform point on the residual instance.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::multilinear::{EvalMode, Estimate};
use crate::reference::{mms_values, BruteLimits};
use crate::report::{Certificates, ReductionEntry, RunReport};
use crate::rounding::{
    nonuniform_pipage, CancelOptions, FractionalAllocation, IntegralAllocation, DEFAULT_ETA, DEFAULT_TAU_ZERO,
};
use crate::valuations::{AgentId, GoodId, ValuationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmsParams {
    pub mode: EvalMode,
    pub seed: u64,
    pub eta: f64,
    pub tau_zero: f64,
    /// Compute `MMS_i` by brute force (when within `oracle_limits`) and
    /// report the ratios.
    pub oracle: bool,
    pub oracle_limits: BruteLimits,
}

impl Default for MmsParams {
    fn default() -> Self {
        MmsParams {
            mode: EvalMode::Exact,
            seed: 0,
            eta: DEFAULT_ETA,
            tau_zero: DEFAULT_TAU_ZERO,
            oracle: true,
            oracle_limits: BruteLimits::default(),
        }
    }
}

/// Every entry `1/n'`, the last row absorbing the residue.
pub fn uniform_point(agents: usize, goods: usize) -> Result<FractionalAllocation> {
    FractionalAllocation::uniform(agents, goods)
}

/// Agents and goods left after the reduction, with valuations restricted
/// to the remaining goods (renumbered in order).
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub agents: Vec<AgentId>,
    pub goods: Vec<GoodId>,
    pub valuations: Vec<ValuationSpec>,
}

impl Residual {
    /// `V_i` at the uniform point of the residual instance.
    pub fn uniform_values(&self, mode: EvalMode) -> Result<Vec<Estimate>> {
        if self.agents.is_empty() {
            return Ok(Vec::new());
        }
        uniform_point(self.agents.len(), self.goods.len())?.agent_values(&self.valuations, mode)
    }
}

/// Repeatedly hands a single good `g` to an agent `i` with
/// `v_i({g}) ≥ ½ V_i(uniform)` on the residual instance. Pairs are scanned
/// in lexicographic `(agent, good)` order.
pub fn single_good_reduction(instance: &Instance, mode: EvalMode) -> Result<(Vec<ReductionEntry>, Residual)> {
    let mut residual = Residual {
        agents: (0..instance.agents()).collect(),
        goods: (0..instance.goods()).collect(),
        valuations: instance.valuations().to_vec(),
    };
    let mut trace = Vec::new();
    for round in 0.. {
        if residual.agents.is_empty() || residual.goods.is_empty() {
            break;
        }
        let uniform = residual.uniform_values(mode.rekey(round))?;
        let mut pick = None;
        'scan: for (k, est) in uniform.iter().enumerate() {
            let threshold = 0.5 * est.value;
            for (l, _) in residual.goods.iter().enumerate() {
                let value = residual.valuations[k].singleton(l);
                if value >= threshold {
                    pick = Some((k, l, value, threshold));
                    break 'scan;
                }
            }
        }
        let Some((k, l, value, threshold)) = pick else { break };
        trace.push(ReductionEntry {
            agent: residual.agents[k],
            good: residual.goods[l],
            value,
            threshold,
        });
        residual.agents.remove(k);
        residual.goods.remove(l);
        residual.valuations = residual
            .agents
            .iter()
            .map(|&i| instance.valuation(i).restrict(&residual.goods))
            .collect();
    }
    Ok((trace, residual))
}

pub fn solve_mms(instance: &Instance, params: &MmsParams) -> Result<RunReport> {
    let started = Instant::now();
    if !(params.eta > 0.0 && params.tau_zero >= 0.0) {
        return Err(Error::input("eta must be positive and tau_zero non-negative"));
    }
    let n = instance.agents();
    let m = instance.goods();
    let mode = params.mode.rekey(params.seed);
    let (reduction, residual) = single_good_reduction(instance, mode)?;

    let mut owners: Vec<Option<AgentId>> = vec![None; m];
    for e in &reduction {
        owners[e.good] = Some(e.agent);
    }
    let uniform_values = residual.uniform_values(mode.rekey(u64::MAX))?;
    let mut trace = Vec::new();
    if !residual.agents.is_empty() && !residual.goods.is_empty() {
        let x = uniform_point(residual.agents.len(), residual.goods.len())?;
        let opts = CancelOptions {
            mode: mode.rekey(0xc0ffee),
            tau_zero: params.tau_zero,
            eta: params.eta,
        };
        let out = nonuniform_pipage(&x, &residual.valuations, &opts)?;
        for (k, bundle) in out.allocation.bundles().iter().enumerate() {
            for l in bundle.iter() {
                owners[residual.goods[l]] = Some(residual.agents[k]);
            }
        }
        trace = out.trace;
    }
    // with no agents left, unclaimed goods go to agent 0
    let owners: Vec<AgentId> = owners.into_iter().map(|o| o.unwrap_or(0)).collect();
    let allocation = IntegralAllocation::from_owners(n, &owners)?;

    let mms = if params.oracle {
        match mms_values(instance, &params.oracle_limits) {
            Ok(v) => Some(v),
            Err(Error::Capacity(msg)) => {
                log::info!("skipping MMS oracle: {msg}");
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let iterations = (reduction.len() + trace.len()) as u64;
    let certificates = Certificates::Mms {
        reduction,
        residual_agents: residual.agents.clone(),
        residual_goods: residual.goods.clone(),
        uniform_values,
        mms: mms.clone(),
        trace,
    };
    let echo = serde_json::to_value(params).expect("params serialize");
    let mut report = RunReport::build("mms", instance, echo, &allocation, certificates, iterations, started)?;
    report.objective.mms_ratios = mms.map(|mms| {
        report
            .per_agent_values
            .iter()
            .zip(&mms)
            .map(|(&v, &s)| if s > 0.0 { v / s } else { 1.0 })
            .collect()
    });
    Ok(report)
}
