//! Nash social welfare: initial matching, continuous local search on
//! `Σ log V_i`, non-uniform pipage rounding of the residual goods, and a
//! final rematching of the matched goods.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::matching::{max_weight_matching, Matching, WeightMatrix};
use crate::multilinear::{self, EvalMode};
use crate::report::{Certificates, RunReport, StopReason};
use crate::rounding::{nonuniform_pipage, CancelOptions, FractionalAllocation, IntegralAllocation};
use crate::valuations::{AgentId, GoodId, GoodSet, ValuationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NswParams {
    /// Frank-Wolfe step `ε` in `x + ε(y − x)`.
    pub step_eps: f64,
    /// Gap threshold; `None` means `1e-3 · n`.
    pub stop_delta: Option<f64>,
    pub max_iters: usize,
    pub value_floor: f64,
    pub mode: EvalMode,
    pub seed: u64,
}

impl Default for NswParams {
    fn default() -> Self {
        NswParams {
            step_eps: 0.05,
            stop_delta: None,
            max_iters: 10_000,
            value_floor: 1e-12,
            mode: EvalMode::Exact,
            seed: 0,
        }
    }
}

impl NswParams {
    fn validate(&self) -> Result<()> {
        if !(self.step_eps > 0.0 && self.step_eps < 1.0) {
            return Err(Error::input(format!("step_eps must lie in (0, 1), got {}", self.step_eps)));
        }
        if let Some(d) = self.stop_delta {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::input(format!("stop_delta must be non-negative, got {d}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::input("max_iters must be positive"));
        }
        if !(self.value_floor > 0.0 && self.value_floor.is_finite()) {
            return Err(Error::input("value_floor must be positive"));
        }
        Ok(())
    }

    pub fn stop_delta_for(&self, agents: usize) -> f64 {
        self.stop_delta.unwrap_or(1e-3 * agents as f64)
    }
}

/// `τ` maximizing `Σ_i log v_i({τ(i)})`, the matched goods `H` and the rest.
pub fn initial_matching(instance: &Instance) -> Result<(Matching, GoodSet, GoodSet)> {
    let n = instance.agents();
    let m = instance.goods();
    if n > m {
        return Err(Error::input(format!("{n} agents need at least {n} goods, got {m}")));
    }
    if let Some(i) = (0..n).find(|&i| (0..m).all(|g| instance.valuation(i).singleton(g) <= 0.0)) {
        return Err(Error::Degenerate(format!("agent {i} values no good")));
    }
    let w = WeightMatrix::from_fn(n, m, |i, j| log_or_forbidden(instance.valuation(i).singleton(j)))?;
    let (tau, _) = max_weight_matching(&w)?;
    let matched = GoodSet::from_indices(m, tau.assign.iter().copied())?;
    let rest = GoodSet::from_indices(m, (0..m).filter(|&g| !matched.contains(g)))?;
    Ok((tau, matched, rest))
}

fn log_or_forbidden(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchOutcome {
    pub x: FractionalAllocation,
    /// `max_y (y − x)·∇F(x)` at the returned point.
    pub gap: f64,
    pub stop: StopReason,
    pub iterations: usize,
    /// Some agent's value dropped below `value_floor` during the run.
    pub floor_used: bool,
    /// Smallest objective change over accepted steps.
    pub min_accepted_change: f64,
    /// Number of times the step was halved.
    pub halvings: usize,
}

impl LocalSearchOutcome {
    pub fn locally_optimal(&self) -> bool {
        matches!(self.stop, StopReason::Converged | StopReason::Trivial)
    }
}

/// Frank-Wolfe ascent on `F(x) = Σ_i log max(V_i(x_i), floor)` over the
/// assignment polytope, from the uniform point.
///
/// A step that would lower `F` is rejected and `ε` halved.
pub fn continuous_local_search(valuations: &[ValuationSpec], params: &NswParams) -> Result<LocalSearchOutcome> {
    params.validate()?;
    let n = valuations.len();
    if n == 0 {
        return Err(Error::input("local search needs at least one agent"));
    }
    let m = valuations[0].goods();
    if valuations.iter().any(|v| v.goods() != m) {
        return Err(Error::input("valuations disagree on the number of goods"));
    }
    let floor = params.value_floor;
    let stop_delta = params.stop_delta_for(n);
    let mode = params.mode.rekey(params.seed ^ 0x2a5f);
    let mut x = FractionalAllocation::uniform(n, m)?.as_slice().to_vec();
    if m == 0 {
        return Ok(LocalSearchOutcome {
            x: FractionalAllocation::new(n, 0, x)?,
            gap: 0.0,
            stop: StopReason::Trivial,
            iterations: 0,
            floor_used: false,
            min_accepted_change: 0.0,
            halvings: 0,
        });
    }

    let objective = |x: &[f64], mode: EvalMode| -> Result<(f64, Vec<f64>)> {
        let values = (0..n)
            .into_par_iter()
            .map(|i| Ok(multilinear::eval(&valuations[i], &x[i * m..(i + 1) * m], mode.rekey(i as u64))?.value))
            .collect::<Result<Vec<f64>>>()?;
        Ok((values.iter().map(|v| v.max(floor).ln()).sum(), values))
    };

    let mut eps = params.step_eps;
    let mut floor_used = false;
    let mut min_change = f64::INFINITY;
    let mut halvings = 0;
    let mut stop = StopReason::MaxIters;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..params.max_iters {
        iterations = it + 1;
        // one stream per iteration shared by value, gradient and trial point
        let it_mode = mode.rekey(it as u64);
        let (f_now, values) = objective(&x, it_mode)?;
        floor_used |= values.iter().any(|&v| v < floor);
        let grads = (0..n)
            .into_par_iter()
            .map(|i| {
                let denom = values[i].max(floor);
                Ok(multilinear::gradient(&valuations[i], &x[i * m..(i + 1) * m], it_mode.rekey(i as u64))?
                    .into_iter()
                    .map(|e| e.value / denom)
                    .collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut target = vec![0.0; n * m];
        gap = 0.0;
        for j in 0..m {
            let mut best = 0;
            for i in 1..n {
                if grads[i][j] > grads[best][j] {
                    best = i;
                }
            }
            target[best * m + j] = 1.0;
            let current: f64 = (0..n).map(|i| x[i * m + j] * grads[i][j]).sum();
            gap += grads[best][j] - current;
        }
        if gap <= stop_delta {
            stop = StopReason::Converged;
            break;
        }
        let trial: Vec<f64> = x.iter().zip(&target).map(|(a, b)| a + eps * (b - a)).collect();
        let (f_trial, _) = objective(&trial, it_mode)?;
        if f_trial < f_now {
            eps /= 2.0;
            halvings += 1;
            if eps < 1e-12 {
                stop = StopReason::StepUnderflow;
                break;
            }
            continue;
        }
        min_change = min_change.min(f_trial - f_now);
        x = trial;
    }
    log::debug!("local search stopped after {iterations} iterations ({stop:?}), gap {gap}");
    Ok(LocalSearchOutcome {
        x: FractionalAllocation::closing_columns(n, m, x)?,
        gap,
        stop,
        iterations,
        floor_used,
        min_accepted_change: if min_change.is_finite() { min_change } else { 0.0 },
        halvings,
    })
}

/// `σ` maximizing `Σ_i log v_i(S_i + σ(i))` over matchings into `matched`.
///
/// `bundles` are over the full good set. An agent that values every
/// `S_i + h` at zero gets a row of zero weights instead of `-inf`.
pub fn rematch(bundles: &[GoodSet], matched: &[GoodId], valuations: &[ValuationSpec]) -> Result<Matching> {
    let n = bundles.len();
    if matched.len() < n {
        return Err(Error::input(format!("{n} agents need at least {n} matched goods")));
    }
    let mut w = Vec::with_capacity(n * matched.len());
    for (i, s) in bundles.iter().enumerate() {
        let row = matched
            .iter()
            .map(|&h| {
                let mut b = s.clone();
                b.insert(h)?;
                valuations[i].value(&b)
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.iter().all(|&v| v <= 0.0) {
            w.extend(std::iter::repeat(0.0).take(row.len()));
        } else {
            w.extend(row.into_iter().map(log_or_forbidden));
        }
    }
    let (sigma, _) = max_weight_matching(&WeightMatrix::new(n, matched.len(), w)?)?;
    Ok(sigma)
}

pub fn solve_nsw(instance: &Instance, params: &NswParams) -> Result<RunReport> {
    let started = Instant::now();
    params.validate()?;
    let n = instance.agents();
    let m = instance.goods();
    let vals = instance.valuations();
    let stop_delta = params.stop_delta_for(n);
    let echo = serde_json::json!({
        "step_eps": params.step_eps,
        "stop_delta": stop_delta,
        "max_iters": params.max_iters,
        "value_floor": params.value_floor,
        "mode": params.mode,
        "seed": params.seed,
    });

    let (tau, matched, rest) = match initial_matching(instance) {
        Ok(found) => found,
        Err(Error::Degenerate(msg)) | Err(Error::Infeasible(msg)) => {
            log::warn!("degenerate NSW instance: {msg}");
            return degenerate_report(instance, echo, started);
        }
        Err(Error::Input(msg)) if n > m => {
            log::warn!("degenerate NSW instance: {msg}");
            return degenerate_report(instance, echo, started);
        }
        Err(e) => return Err(e),
    };
    let residual = rest.to_vec();
    let matched_list = tau.assign.clone();
    let sub_vals = instance.restricted_valuations(&(0..n).collect::<Vec<_>>(), &residual);

    let search = continuous_local_search(&sub_vals, params)?;
    let fractional_values = search
        .x
        .agent_values(&sub_vals, params.mode.rekey(params.seed ^ 0x77))?
        .into_iter()
        .map(|e| e.value)
        .collect();
    let opts = CancelOptions::with_mode(params.mode.rekey(params.seed ^ 0x9e37));
    let rounded = nonuniform_pipage(&search.x, &sub_vals, &opts)?;
    let bundles = rounded
        .allocation
        .bundles()
        .iter()
        .map(|b| GoodSet::from_indices(m, b.iter().map(|k| residual[k])))
        .collect::<Result<Vec<_>>>()?;
    let sigma = rematch(&bundles, &matched_list, vals)?;
    let mut finals = bundles.clone();
    for (i, b) in finals.iter_mut().enumerate() {
        b.insert(matched_list[sigma.assign[i]])?;
    }
    let allocation = IntegralAllocation::new(m, finals)?;
    let iterations = (search.iterations + rounded.trace.len()) as u64;
    let certificates = Certificates::Nsw {
        initial_matching: tau,
        matched_goods: matched.to_vec(),
        residual_goods: residual,
        locally_optimal: search.locally_optimal(),
        fractional: Some(search.x),
        fractional_values,
        gap: search.gap,
        stop: search.stop,
        floor_used: search.floor_used,
        rounded: bundles.iter().map(GoodSet::to_vec).collect(),
        rematching: sigma,
        degenerate: false,
        trace: rounded.trace,
    };
    RunReport::build("nsw", instance, echo, &allocation, certificates, iterations, started)
}

fn degenerate_report(instance: &Instance, echo: serde_json::Value, started: Instant) -> Result<RunReport> {
    let m = instance.goods();
    let owners: Vec<AgentId> = vec![0; m];
    let allocation = IntegralAllocation::from_owners(instance.agents(), &owners)?;
    let certificates = Certificates::Nsw {
        initial_matching: Matching { assign: Vec::new() },
        matched_goods: Vec::new(),
        residual_goods: (0..m).collect(),
        fractional: None,
        fractional_values: Vec::new(),
        gap: 0.0,
        stop: StopReason::Trivial,
        locally_optimal: false,
        floor_used: false,
        rounded: Vec::new(),
        rematching: Matching { assign: Vec::new() },
        degenerate: true,
        trace: Vec::new(),
    };
    let mut report = RunReport::build("nsw", instance, echo, &allocation, certificates, 0, started)?;
    report.objective.nsw = 0.0;
    Ok(report)
}
