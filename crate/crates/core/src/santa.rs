//! Submodular Santa Claus (max-min) solver.
//!
//! A multiplicative binary search guesses the optimum `B`; each guess is
//! tested by a multi-objective continuous greedy over the assignment
//! polytope, and the accepted fractional point is rounded by cycle
//! cancellation and tree pipage.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::multilinear::{self, EvalMode, Estimate};
use crate::report::{Certificates, Probe, RunReport};
use crate::rounding::{nonuniform_pipage, CancelOptions, FractionalAllocation};
use crate::valuations::GoodSet;

/// `1 − 1/e`.
pub const ONE_MINUS_INV_E: f64 = 1.0 - 1.0 / std::f64::consts::E;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SantaParams {
    pub eps: f64,
    /// Continuous-greedy time steps.
    pub cg_steps: usize,
    /// Multiplicative-weights learning rate over agents.
    pub mwu_rate: f64,
    /// Multiplicative-weights rounds per greedy step.
    pub mwu_rounds: usize,
    pub bs_rel_precision: f64,
    pub mode: EvalMode,
    pub seed: u64,
}

impl Default for SantaParams {
    fn default() -> Self {
        SantaParams {
            eps: 0.05,
            cg_steps: 100,
            mwu_rate: 0.5,
            mwu_rounds: 40,
            bs_rel_precision: 0.02,
            mode: EvalMode::Exact,
            seed: 0,
        }
    }
}

impl SantaParams {
    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < ONE_MINUS_INV_E) {
            return Err(Error::input(format!("eps must lie in (0, 1 - 1/e), got {}", self.eps)));
        }
        if self.cg_steps == 0 || self.mwu_rounds == 0 {
            return Err(Error::input("cg_steps and mwu_rounds must be positive"));
        }
        if !(self.mwu_rate > 0.0 && self.mwu_rate.is_finite()) {
            return Err(Error::input("mwu_rate must be positive"));
        }
        if !(self.bs_rel_precision > 0.0 && self.bs_rel_precision.is_finite()) {
            return Err(Error::input("bs_rel_precision must be positive"));
        }
        Ok(())
    }

    /// Fraction of each target a feasible point must certify.
    pub fn guarantee_factor(&self) -> f64 {
        ONE_MINUS_INV_E - self.eps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FeasibilityOutcome {
    /// `x` with `V_i(x_i) ≥ (1 − 1/e − eps)·B_i` certified for every agent.
    Point { x: FractionalAllocation, values: Vec<Estimate> },
    /// The greedy run fell short for some agent. In Sampled mode this is a
    /// refutation at the confidence of the sampling parameters.
    Infeasible { values: Vec<Estimate> },
}

impl FeasibilityOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, FeasibilityOutcome::Point { .. })
    }
}

/// Continuous greedy for the targets `B_i`.
///
/// At each step the direction is a vertex mixture found by multiplicative
/// weights over agents with outstanding shortfall: each good goes to the
/// agent maximizing `λ_i·∂V_i/∂x_ij / (B_i − V_i)`.
pub fn cg_feasibility(instance: &Instance, targets: &[f64], params: &SantaParams) -> Result<FeasibilityOutcome> {
    params.validate()?;
    let n = instance.agents();
    let m = instance.goods();
    if targets.len() != n {
        return Err(Error::input(format!("expected {n} targets, got {}", targets.len())));
    }
    if let Some(b) = targets.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return Err(Error::input(format!("targets must be positive, got {b}")));
    }
    let vals = instance.valuations();
    let mode = params.mode.rekey(params.seed);
    let steps = params.cg_steps;
    let mut y = vec![0.0; n * m];

    for t in 0..steps {
        let step_mode = mode.rekey(t as u64);
        let (values, grads): (Vec<f64>, Vec<Vec<f64>>) = (0..n)
            .into_par_iter()
            .map(|i| {
                let row = &y[i * m..(i + 1) * m];
                let agent_mode = step_mode.rekey(i as u64);
                let v = multilinear::eval(&vals[i], row, agent_mode)?.value;
                let g = multilinear::gradient(&vals[i], row, agent_mode)?
                    .into_iter()
                    .map(|e| e.value.max(0.0))
                    .collect();
                Ok((v, g))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let deficit: Vec<f64> = (0..n).map(|i| targets[i] - values[i]).collect();
        let direction = mwu_direction(&grads, &deficit, targets, params);
        for (yv, dv) in y.iter_mut().zip(&direction) {
            *yv += dv / steps as f64;
        }
    }

    let x = FractionalAllocation::closing_columns(n, m, y)?;
    let values = x.agent_values(vals, mode.rekey(u64::MAX))?;
    let factor = params.guarantee_factor();
    let certified = values
        .iter()
        .zip(targets)
        .all(|(v, b)| v.value - sampled_slack(v) >= factor * b);
    Ok(if certified {
        FeasibilityOutcome::Point { x, values }
    } else {
        FeasibilityOutcome::Infeasible { values }
    })
}

fn sampled_slack(e: &Estimate) -> f64 {
    if e.half_width.is_finite() {
        e.half_width
    } else {
        0.0
    }
}

/// Averaged LMO vertex (row-major `n × m`, columns sum to one).
fn mwu_direction(grads: &[Vec<f64>], deficit: &[f64], targets: &[f64], params: &SantaParams) -> Vec<f64> {
    let n = grads.len();
    let m = grads.first().map_or(0, Vec::len);
    let active: Vec<usize> = (0..n).filter(|&i| deficit[i] > 0.0).collect();
    let mut direction = vec![0.0; n * m];
    if active.is_empty() {
        // every target met: keep growing value proportionally to the targets
        for j in 0..m {
            let best = argmax((0..n).map(|i| grads[i][j] / targets[i]));
            direction[best * m + j] = 1.0;
        }
        return direction;
    }
    let mut weight = vec![1.0; n];
    let rounds = params.mwu_rounds;
    for _ in 0..rounds {
        let mut gain = vec![0.0; n];
        for j in 0..m {
            let scores = active.iter().map(|&i| weight[i] * grads[i][j] / deficit[i]);
            let pick = if active.iter().all(|&i| grads[i][j] <= 0.0) {
                // nobody gains: hand it to the heaviest agent
                active[argmax(active.iter().map(|&i| weight[i]))]
            } else {
                active[argmax(scores)]
            };
            direction[pick * m + j] += 1.0 / rounds as f64;
            gain[pick] += grads[pick][j];
        }
        let mut total = 0.0;
        for &i in &active {
            let ratio = (gain[i] / deficit[i]).min(1.0);
            weight[i] *= (-params.mwu_rate * ratio).exp();
            total += weight[i];
        }
        for &i in &active {
            weight[i] /= total;
        }
    }
    direction
}

/// First index of the maximum.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, v) in values.enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Targets probed by the binary search: `low·(1+p)^k` capped at `high`.
fn grid(low: f64, high: f64, p: f64) -> Vec<f64> {
    let mut g = vec![low];
    while let Some(&last) = g.last() {
        let next = last * (1.0 + p);
        if next >= high {
            if last < high {
                g.push(high);
            }
            break;
        }
        g.push(next);
    }
    g
}

pub fn solve_santa(instance: &Instance, params: &SantaParams) -> Result<RunReport> {
    let started = Instant::now();
    params.validate()?;
    let n = instance.agents();
    let m = instance.goods();
    let vals = instance.valuations();
    let max_singleton = instance.max_singleton();
    if max_singleton <= 0.0 {
        return Err(Error::Degenerate("no agent values any good".into()));
    }
    let low = vals
        .iter()
        .flat_map(|v| (0..m).map(move |g| v.singleton(g)))
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let full = GoodSet::full(m);
    let high = vals
        .iter()
        .map(|v| v.value(&full))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let targets = grid(low, high, params.bs_rel_precision);

    let mut probes = Vec::new();
    let mut best: Option<(f64, FractionalAllocation, Vec<Estimate>)> = None;
    let (mut lo, mut hi) = (-1isize, targets.len() as isize);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        let b = targets[mid as usize];
        let outcome = cg_feasibility(instance, &vec![b; n], params)?;
        log::debug!("santa probe B = {b}: {}", outcome.is_feasible());
        probes.push(Probe {
            target: b,
            accepted: outcome.is_feasible(),
        });
        match outcome {
            FeasibilityOutcome::Point { x, values } => {
                lo = mid;
                best = Some((b, x, values));
            }
            FeasibilityOutcome::Infeasible { .. } => hi = mid,
        }
    }
    let max_accepted = probes
        .iter()
        .filter(|p| p.accepted)
        .map(|p| p.target)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_rejected = probes
        .iter()
        .filter(|p| !p.accepted)
        .map(|p| p.target)
        .fold(f64::INFINITY, f64::min);
    let probes_monotone = max_accepted < min_rejected;

    let (b_star, x, fractional_values) = match best {
        Some(found) => found,
        None => {
            let x = FractionalAllocation::uniform(n, m)?;
            let values = x.agent_values(vals, params.mode.rekey(params.seed))?;
            (0.0, x, values)
        }
    };
    let opts = CancelOptions::with_mode(params.mode.rekey(params.seed ^ 0x5a17a));
    let rounded = nonuniform_pipage(&x, vals, &opts)?;
    let guarantee = params.guarantee_factor() * b_star - max_singleton;
    let iterations = (probes.len() * params.cg_steps + rounded.trace.len()) as u64;
    let certificates = Certificates::Santa {
        b_star,
        max_singleton,
        guarantee,
        grid_ratio: 1.0 + params.bs_rel_precision,
        grid_low: low,
        grid_high: high,
        probes,
        probes_monotone,
        fractional: x,
        fractional_values,
        trace: rounded.trace,
    };
    RunReport::build(
        "santa",
        instance,
        serde_json::to_value(params).expect("params serialize"),
        &rounded.allocation,
        certificates,
        iterations,
        started,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuations::ValuationSpec;

    fn additive(rows: &[&[f64]]) -> Instance {
        Instance::new(
            rows.iter()
                .map(|w| ValuationSpec::Additive { weights: w.to_vec() })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_agent_takes_everything() {
        let inst = additive(&[&[1.0, 2.0, 3.0]]);
        let out = cg_feasibility(&inst, &[6.0], &SantaParams::default()).unwrap();
        let FeasibilityOutcome::Point { x, .. } = out else { panic!("infeasible") };
        assert_eq!(x.as_slice(), &[1.0, 1.0, 1.0]);
        let r = solve_santa(&inst, &SantaParams::default()).unwrap();
        assert_eq!(r.allocation, vec![vec![0, 1, 2]]);
        assert_eq!(r.per_agent_values, vec![6.0]);
    }

    #[test]
    fn two_identical_agents_split() {
        let inst = additive(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let p = SantaParams::default();
        let out = cg_feasibility(&inst, &[1.0, 1.0], &p).unwrap();
        let FeasibilityOutcome::Point { x, .. } = out else { panic!("infeasible") };
        for v in x.agent_values(inst.valuations(), EvalMode::Exact).unwrap() {
            assert!(v.value >= p.guarantee_factor());
        }
        let r = solve_santa(&inst, &p).unwrap();
        assert_eq!(r.objective.min_value, 1.0);
    }

    #[test]
    fn unattainable_target_refuted() {
        let inst = additive(&[&[1.0, 2.0], &[2.0, 1.0]]);
        let out = cg_feasibility(&inst, &[30.0, 30.0], &SantaParams::default()).unwrap();
        assert!(!out.is_feasible());
    }

    #[test]
    fn all_zero_is_degenerate() {
        let inst = additive(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(
            solve_santa(&inst, &SantaParams::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn grid_is_geometric_and_capped() {
        let g = grid(1.0, 1.1, 0.02);
        assert_eq!(g.first(), Some(&1.0));
        assert_eq!(g.last(), Some(&1.1));
        assert!(g.windows(2).all(|w| w[1] > w[0] && w[1] <= w[0] * 1.02 + 1e-12));
        assert_eq!(grid(2.0, 2.0, 0.02), vec![2.0]);
    }

    #[test]
    fn bad_params_rejected() {
        let inst = additive(&[&[1.0]]);
        let p = SantaParams {
            eps: 0.7,
            ..SantaParams::default()
        };
        assert!(matches!(solve_santa(&inst, &p), Err(Error::Input(_))));
    }
}
