//! Brute-force optima for desk-scale instances.
//!
//! Every assignment of goods to agents is enumerated with a base-`n`
//! counter; agent values are looked up in per-agent tables over the subset
//! lattice. Ranges are split across rayon workers and merged by
//! `(score desc, index asc)`, so results never depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::rounding::IntegralAllocation;
use crate::valuations::{GoodSet, ValuationSpec};

/// Largest ground set for which value tables are materialized.
pub const MAX_TABLE_GOODS: usize = 24;

const CHUNK: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BruteLimits {
    /// Cap on the number of enumerated assignments.
    pub max_assignments: u64,
}

impl Default for BruteLimits {
    fn default() -> Self {
        BruteLimits {
            max_assignments: 2_000_000,
        }
    }
}

fn count_assignments(parts: usize, goods: usize) -> Option<u64> {
    (parts as u64).checked_pow(goods as u32)
}

fn check_capacity(parts: usize, goods: usize, limits: &BruteLimits) -> Result<u64> {
    if limits.max_assignments == 0 {
        return Err(Error::input("max_assignments must be positive"));
    }
    match count_assignments(parts, goods) {
        Some(c) if c <= limits.max_assignments && goods <= MAX_TABLE_GOODS => Ok(c),
        _ => Err(Error::Capacity(format!(
            "{parts}^{goods} assignments exceed the limit of {}",
            limits.max_assignments
        ))),
    }
}

fn value_table(spec: &ValuationSpec) -> Vec<f64> {
    let m = spec.goods();
    (0..1u64 << m).map(|mask| spec.value_mask(mask)).collect()
}

/// Maximizes `score(masks)` over all maps from `goods` goods to `parts`
/// parts. With `pin_first`, good 0 always sits in part 0 (for symmetric
/// objectives). Returns the best score and the owner of each good.
fn enumerate_best<S>(parts: usize, goods: usize, pin_first: bool, score: S) -> (f64, Vec<usize>)
where
    S: Fn(&[u64]) -> f64 + Sync,
{
    let free = if pin_first && goods > 0 { goods - 1 } else { goods };
    let offset = goods - free;
    let total = (parts as u64).pow(free as u32);
    let chunks = total.div_ceil(CHUNK);
    let decode = |t: u64| -> Vec<usize> {
        let mut owners = vec![0usize; goods];
        let mut rest = t;
        for o in owners.iter_mut().skip(offset) {
            *o = (rest % parts as u64) as usize;
            rest /= parts as u64;
        }
        owners
    };
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(total);
            let mut owners = decode(start);
            let mut masks = vec![0u64; parts];
            for (g, &o) in owners.iter().enumerate() {
                masks[o] |= 1 << g;
            }
            let mut best: Option<(f64, u64)> = None;
            for t in start..end {
                let s = score(&masks);
                if best.map_or(true, |(b, _)| s > b) {
                    best = Some((s, t));
                }
                // increment the base-`parts` counter
                for g in offset..goods {
                    let o = owners[g];
                    masks[o] &= !(1 << g);
                    if o + 1 < parts {
                        owners[g] = o + 1;
                        masks[o + 1] |= 1 << g;
                        break;
                    }
                    owners[g] = 0;
                    masks[0] |= 1 << g;
                }
            }
            best
        })
        .reduce(
            || None,
            |a, b| match (a, b) {
                (None, x) | (x, None) => x,
                (Some(a), Some(b)) => {
                    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                        Some(b)
                    } else {
                        Some(a)
                    }
                }
            },
        );
    let (score, t) = best.unwrap_or((f64::NEG_INFINITY, 0));
    (score, decode(t))
}

fn instance_tables(instance: &Instance) -> Vec<Vec<f64>> {
    instance.valuations().par_iter().map(value_table).collect()
}

fn single_agent(instance: &Instance) -> Result<(f64, IntegralAllocation)> {
    let m = instance.goods();
    let v = instance.valuation(0).value(&GoodSet::full(m))?;
    Ok((v, IntegralAllocation::new(m, vec![GoodSet::full(m)])?))
}

/// Exact `max_A min_i v_i(A_i)`.
pub fn brute_opt_maxmin(instance: &Instance, limits: &BruteLimits) -> Result<(f64, IntegralAllocation)> {
    if instance.agents() == 1 {
        return single_agent(instance);
    }
    check_capacity(instance.agents(), instance.goods(), limits)?;
    let tables = instance_tables(instance);
    let (value, owners) = enumerate_best(instance.agents(), instance.goods(), false, |masks| {
        masks
            .iter()
            .zip(&tables)
            .map(|(&s, t)| t[s as usize])
            .fold(f64::INFINITY, f64::min)
    });
    Ok((value, IntegralAllocation::from_owners(instance.agents(), &owners)?))
}

/// Exact maximum Nash social welfare (geometric mean); zero when every
/// allocation leaves some agent with nothing.
pub fn brute_opt_nsw(instance: &Instance, limits: &BruteLimits) -> Result<(f64, IntegralAllocation)> {
    if instance.agents() == 1 {
        return single_agent(instance);
    }
    check_capacity(instance.agents(), instance.goods(), limits)?;
    let n = instance.agents();
    let tables = instance_tables(instance);
    let (log_sum, owners) = enumerate_best(n, instance.goods(), false, |masks| {
        let mut s = 0.0;
        for (&mask, t) in masks.iter().zip(&tables) {
            let v = t[mask as usize];
            if v <= 0.0 {
                return f64::NEG_INFINITY;
            }
            s += v.ln();
        }
        s
    });
    let value = if log_sum == f64::NEG_INFINITY {
        0.0
    } else {
        (log_sum / n as f64).exp()
    };
    Ok((value, IntegralAllocation::from_owners(n, &owners)?))
}

/// `max` over partitions of `goods` into `k` parts of the worst part value.
pub fn mms_bruteforce(spec: &ValuationSpec, k: usize, goods: &GoodSet, limits: &BruteLimits) -> Result<f64> {
    if k == 0 {
        return Err(Error::input("MMS needs at least one part"));
    }
    if goods.universe() != spec.goods() {
        return Err(Error::input(format!(
            "good set over {} goods, valuation over {}",
            goods.universe(),
            spec.goods()
        )));
    }
    if k == 1 {
        return spec.value(goods);
    }
    let list = goods.to_vec();
    check_capacity(k, list.len(), limits)?;
    let table = value_table(&spec.restrict(&list));
    let (value, _) = enumerate_best(k, list.len(), true, |masks| {
        masks
            .iter()
            .map(|&s| table[s as usize])
            .fold(f64::INFINITY, f64::min)
    });
    Ok(value)
}

/// `MMS_i` of every agent with `k = n` over all goods.
pub fn mms_values(instance: &Instance, limits: &BruteLimits) -> Result<Vec<f64>> {
    let full = GoodSet::full(instance.goods());
    instance
        .valuations()
        .iter()
        .map(|v| mms_bruteforce(v, instance.agents(), &full, limits))
        .collect()
}
