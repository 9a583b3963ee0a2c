use serde::{Deserialize, Serialize};

use super::graph::{find_cycle, support_graph, Cycle};
use super::{check_dims, FractionalAllocation, DEFAULT_ETA, DEFAULT_TAU_ZERO};
use crate::error::{Error, Result};
use crate::multilinear::{self, EvalMode};
use crate::valuations::{AgentId, GoodId, ValuationSpec};

/// Entries this close to 0 or 1 after a move are snapped.
const SNAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CancelOptions {
    pub mode: EvalMode,
    /// Partials at or below this are treated as zero. In Sampled mode each
    /// estimate uses `max(tau_zero, 3 × half_width)`.
    pub tau_zero: f64,
    /// Support threshold.
    pub eta: f64,
}

impl Default for CancelOptions {
    fn default() -> Self {
        CancelOptions {
            mode: EvalMode::Exact,
            tau_zero: DEFAULT_TAU_ZERO,
            eta: DEFAULT_ETA,
        }
    }
}

impl CancelOptions {
    pub fn with_mode(mode: EvalMode) -> Self {
        CancelOptions {
            mode,
            ..CancelOptions::default()
        }
    }
}

/// One cancellation: shares of `goods[k]` move by `+deltas[k]` on edge
/// `(agents[k], goods[k])` and by `−deltas[k]` on `(agents[k+1], goods[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleStep {
    pub agents: Vec<AgentId>,
    pub goods: Vec<GoodId>,
    pub deltas: Vec<f64>,
    pub limiting_edge: (AgentId, GoodId),
    pub snapped_value: f64,
}

/// Direction coefficients along the cycle, before scaling.
///
/// Agent `a_k` sees `+c_k` on `g_k` and `−c_{k−1}` on `g_{k−1}`; its
/// first-order gain is `c_k·D(a_k, g_k) − c_{k−1}·D(a_k, g_{k−1})`.
fn direction(cycle: &Cycle, out: &[(f64, f64)], inn: &[(f64, f64)], tau_zero: f64) -> Result<Vec<f64>> {
    let l = cycle.len();
    let zero = |(d, hw): (f64, f64)| d <= tau_zero.max(3.0 * hw);
    let mut c = vec![0.0; l];

    for k in 0..l {
        if zero(out[k]) {
            // a_k is indifferent to g_k: hand g_k towards a_{k+1}
            c[k] = -1.0;
            return Ok(c);
        }
        if zero(inn[k]) {
            // a_k is indifferent to g_{k−1}: hand it towards a_{k−1}
            c[(k + l - 1) % l] = 1.0;
            return Ok(c);
        }
    }

    // balance agents 1..ℓ−1 exactly: c_k = c_{k−1} · D(a_k, g_{k−1}) / D(a_k, g_k),
    // accumulated in logs and rescaled so max |c| = 1
    let mut logc = vec![0.0; l];
    for k in 1..l {
        logc[k] = logc[k - 1] + inn[k].0.ln() - out[k].0.ln();
    }
    let top = logc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for k in 0..l {
        c[k] = (logc[k] - top).exp();
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite cycle coefficients {c:?}")));
    }
    // remaining freedom is the sign, chosen so a_0 does not lose
    let gain0 = c[0] * out[0].0 - c[l - 1] * inn[0].0;
    if !gain0.is_finite() {
        return Err(Error::Numeric("non-finite gain for the closing agent".into()));
    }
    if gain0 < 0.0 {
        for v in &mut c {
            *v = -*v;
        }
    }
    Ok(c)
}

/// Cancels the first cycle of the support of `x`.
///
/// Column sums are preserved, at least one cycle entry ends at exactly 0 or
/// 1, and (with exact partials) no agent on the cycle loses multilinear
/// value.
pub fn cancel_one_cycle(
    x: &FractionalAllocation,
    valuations: &[ValuationSpec],
    opts: &CancelOptions,
) -> Result<(FractionalAllocation, CycleStep)> {
    check_dims(x, valuations)?;
    let graph = support_graph(x, opts.eta);
    let cycle = find_cycle(&graph)
        .ok_or_else(|| Error::Precondition("support graph has no cycle".into()))?;
    cancel_cycle(x, valuations, &cycle, opts)
}

fn cancel_cycle(
    x: &FractionalAllocation,
    valuations: &[ValuationSpec],
    cycle: &Cycle,
    opts: &CancelOptions,
) -> Result<(FractionalAllocation, CycleStep)> {
    let l = cycle.len();
    let mut out = Vec::with_capacity(l);
    let mut inn = Vec::with_capacity(l);
    for k in 0..l {
        let a = cycle.agents[k];
        let spec = &valuations[a];
        // both partials of one agent share a sample stream
        let mode = opts.mode.rekey(a as u64);
        let d_out = multilinear::partial(spec, x.row(a), cycle.goods[k], mode)?;
        let d_in = multilinear::partial(spec, x.row(a), cycle.goods[(k + l - 1) % l], mode)?;
        out.push((d_out.value, d_out.half_width));
        inn.push((d_in.value, d_in.half_width));
    }
    let c = direction(cycle, &out, &inn, opts.tau_zero)?;

    // largest feasible step; ties go to the lexicographically smallest edge
    let mut best: Option<(f64, (AgentId, GoodId), f64)> = None;
    for k in 0..l {
        if c[k] == 0.0 {
            continue;
        }
        let g = cycle.goods[k];
        for (a, d) in [(cycle.agents[k], c[k]), (cycle.agents[(k + 1) % l], -c[k])] {
            let v = x.get(a, g);
            let (limit, bound) = if d > 0.0 { ((1.0 - v) / d, 1.0) } else { (v / -d, 0.0) };
            let better = match best {
                None => true,
                Some((s, e, _)) => limit < s || (limit == s && (a, g) < e),
            };
            if better {
                best = Some((limit, (a, g), bound));
            }
        }
    }
    let (step, limiting_edge, snapped_value) =
        best.ok_or_else(|| Error::Numeric("cycle direction is identically zero".into()))?;
    if !step.is_finite() || step < 0.0 {
        return Err(Error::Numeric(format!("invalid cycle step {step}")));
    }

    let mut y = x.clone();
    let mut deltas = vec![0.0; l];
    for k in 0..l {
        if c[k] == 0.0 {
            continue;
        }
        let delta = step * c[k];
        deltas[k] = delta;
        let g = cycle.goods[k];
        let up = cycle.agents[k];
        let down = cycle.agents[(k + 1) % l];
        let mut snapped = [false; 2];
        for (slot, (a, d)) in [(up, delta), (down, -delta)].into_iter().enumerate() {
            let mut v = x.get(a, g) + d;
            if (a, g) == limiting_edge {
                v = snapped_value;
                snapped[slot] = true;
            } else if v.abs() <= SNAP_TOL {
                v = 0.0;
                snapped[slot] = true;
            } else if (1.0 - v).abs() <= SNAP_TOL {
                v = 1.0;
                snapped[slot] = true;
            }
            y.set(a, g, v.clamp(0.0, 1.0));
        }
        // restore the column sum exactly through an unsnapped partner
        let partner = if !snapped[1] {
            Some(down)
        } else if !snapped[0] {
            Some(up)
        } else {
            None
        };
        if let Some(p) = partner {
            let rest: f64 = (0..y.rows()).filter(|&i| i != p).map(|i| y.get(i, g)).sum();
            y.set(p, g, (1.0 - rest).clamp(0.0, 1.0));
        }
    }

    Ok((
        y,
        CycleStep {
            agents: cycle.agents.clone(),
            goods: cycle.goods.clone(),
            deltas,
            limiting_edge,
            snapped_value,
        },
    ))
}

/// Cancels cycles until the support is a forest.
///
/// Each step makes at least one fractional entry integral, so at most
/// `n·m` steps are taken; exceeding that is reported as a numeric failure.
pub fn cancel_all_cycles(
    x: &FractionalAllocation,
    valuations: &[ValuationSpec],
    opts: &CancelOptions,
) -> Result<(FractionalAllocation, Vec<CycleStep>)> {
    check_dims(x, valuations)?;
    let max_steps = x.rows() * x.cols();
    let mut cur = x.clone();
    let mut trace = Vec::new();
    loop {
        let graph = support_graph(&cur, opts.eta);
        let Some(cycle) = find_cycle(&graph) else {
            break;
        };
        if trace.len() >= max_steps {
            return Err(Error::Numeric(format!(
                "cycle cancellation did not terminate within {max_steps} steps"
            )));
        }
        let step_opts = CancelOptions {
            mode: opts.mode.rekey(trace.len() as u64),
            ..*opts
        };
        let (next, step) = cancel_cycle(&cur, valuations, &cycle, &step_opts)?;
        log::debug!(
            "cancelled cycle of {} agents, limiting edge {:?}",
            cycle.len(),
            step.limiting_edge
        );
        cur = next;
        trace.push(step);
    }
    Ok((cur, trace))
}
