//! Multilinear extension `F(x) = Σ_S f(S) Π_{j∈S} x_j Π_{j∉S} (1 − x_j)`
//! and its coordinate partials.
//!
//! Exact mode enumerates only the strictly fractional coordinates; goods at
//! 0 or 1 are folded out of / into the base set. Sampled mode draws
//! independent sets from a counter-based stream keyed by `(seed, sample)`, so
//! results do not depend on how samples are spread across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::valuations::{GoodId, ValuationSpec};

/// Largest number of fractional coordinates Exact mode will enumerate.
pub const MAX_EXACT_FRACTIONAL: usize = 20;

/// Slack allowed on point coordinates outside `[0, 1]`.
pub const COORD_TOL: f64 = 1e-12;

/// z-value for the 95% normal confidence half-width.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalMode {
    Exact,
    Sampled { samples: u64, seed: u64 },
}

impl EvalMode {
    pub fn is_exact(&self) -> bool {
        matches!(self, EvalMode::Exact)
    }

    /// Same mode with the sampling stream re-keyed by `tag`; Exact is unchanged.
    pub fn rekey(&self, tag: u64) -> EvalMode {
        match *self {
            EvalMode::Exact => EvalMode::Exact,
            EvalMode::Sampled { samples, seed } => EvalMode::Sampled {
                samples,
                seed: derive_seed(seed, tag),
            },
        }
    }

    /// Exact when every point over `goods` goods fits the enumeration budget.
    pub fn auto(goods: usize, samples: u64, seed: u64) -> EvalMode {
        if goods <= MAX_EXACT_FRACTIONAL {
            EvalMode::Exact
        } else {
            EvalMode::Sampled { samples, seed }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// 95% normal-approximation half-width; zero for exact values.
    pub half_width: f64,
    pub samples_used: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            half_width: 0.0,
            samples_used: 0,
        }
    }

    fn from_samples(draws: &[f64]) -> Self {
        let n = draws.len();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let half_width = if n < 2 {
            f64::INFINITY
        } else {
            let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
            Z95 * (var / n as f64).sqrt()
        };
        Estimate {
            value: mean,
            half_width,
            samples_used: n as u64,
        }
    }
}

/// SplitMix64 finalizer over `(seed, tag)`; used to derive independent
/// sampling streams for successive algorithm steps.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Validates a point for `spec`: right length, finite, inside `[0, 1]` up to
/// [`COORD_TOL`].
pub fn check_point(spec: &ValuationSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.goods() {
        return Err(Error::input(format!(
            "point has {} coordinates, valuation has {} goods",
            x.len(),
            spec.goods()
        )));
    }
    for (j, &v) in x.iter().enumerate() {
        if !v.is_finite() || !(-COORD_TOL..=1.0 + COORD_TOL).contains(&v) {
            return Err(Error::input(format!("coordinate {j} = {v} outside [0, 1]")));
        }
    }
    Ok(())
}

fn check_samples(mode: &EvalMode) -> Result<()> {
    if let EvalMode::Sampled { samples: 0, .. } = mode {
        return Err(Error::input("sampled mode needs at least one sample"));
    }
    Ok(())
}

/// Base set (coordinates at 1) and strictly fractional coordinates.
fn split(x: &[f64]) -> (Vec<GoodId>, Vec<GoodId>) {
    let mut base = Vec::new();
    let mut frac = Vec::new();
    for (j, &v) in x.iter().enumerate() {
        if v >= 1.0 {
            base.push(j);
        } else if v > 0.0 {
            frac.push(j);
        }
    }
    (base, frac)
}

/// `table[s] = Π_b (x_b if bit b of s else 1 − x_b)`.
fn prob_table(probs: &[f64]) -> Vec<f64> {
    let mut table = Vec::with_capacity(1 << probs.len());
    table.push(1.0);
    for &p in probs {
        let len = table.len();
        for s in 0..len {
            let t = table[s];
            table.push(t * p);
            table[s] = t * (1.0 - p);
        }
    }
    table
}

fn check_budget(frac: usize) -> Result<()> {
    if frac > MAX_EXACT_FRACTIONAL {
        return Err(Error::Capacity(format!(
            "exact evaluation supports at most {MAX_EXACT_FRACTIONAL} fractional coordinates, got {frac}"
        )));
    }
    Ok(())
}

fn members<'a>(base: &'a [GoodId], frac: &'a [GoodId], s: usize) -> impl Iterator<Item = GoodId> + 'a {
    base.iter()
        .copied()
        .chain(frac.iter().enumerate().filter(move |(b, _)| s >> b & 1 == 1).map(|(_, &g)| g))
}

fn eval_exact(spec: &ValuationSpec, x: &[f64]) -> Result<f64> {
    if let ValuationSpec::Additive { weights } = spec {
        return Ok(weights.iter().zip(x).map(|(w, &v)| w * v.clamp(0.0, 1.0)).sum());
    }
    let (base, frac) = split(x);
    check_budget(frac.len())?;
    let probs: Vec<f64> = frac.iter().map(|&g| x[g]).collect();
    let table = prob_table(&probs);
    Ok(table
        .iter()
        .enumerate()
        .filter(|(_, p)| **p != 0.0)
        .map(|(s, p)| p * spec.value_of(members(&base, &frac, s)))
        .sum())
}

/// Draws the included-goods list of one sample.
fn draw(x: &[f64], seed: u64, index: u64, out: &mut Vec<GoodId>) {
    out.clear();
    let mut rng = sample_rng(seed, index);
    for (j, &v) in x.iter().enumerate() {
        let u: f64 = rng.gen();
        if u < v {
            out.push(j);
        }
    }
}

/// Evaluates `F(x)` for one agent's row `x`.
pub fn eval(spec: &ValuationSpec, x: &[f64], mode: EvalMode) -> Result<Estimate> {
    check_point(spec, x)?;
    check_samples(&mode)?;
    match mode {
        EvalMode::Exact => eval_exact(spec, x).map(Estimate::exact),
        EvalMode::Sampled { samples, seed } => {
            let draws: Vec<f64> = (0..samples)
                .into_par_iter()
                .map_init(Vec::new, |buf, s| {
                    draw(x, seed, s, buf);
                    spec.value_of(buf.iter().copied())
                })
                .collect();
            Ok(Estimate::from_samples(&draws))
        }
    }
}

/// `∂F/∂x_g = F(x | x_g←1) − F(x | x_g←0)`.
///
/// Sampled mode evaluates both endpoints on the same sample stream.
pub fn partial(spec: &ValuationSpec, x: &[f64], g: GoodId, mode: EvalMode) -> Result<Estimate> {
    check_point(spec, x)?;
    check_samples(&mode)?;
    if g >= x.len() {
        return Err(Error::input(format!("good {g} out of range for {} goods", x.len())));
    }
    match mode {
        EvalMode::Exact => {
            if let ValuationSpec::Additive { weights } = spec {
                return Ok(Estimate::exact(weights[g]));
            }
            let mut y = x.to_vec();
            y[g] = 1.0;
            let hi = eval_exact(spec, &y)?;
            y[g] = 0.0;
            let lo = eval_exact(spec, &y)?;
            Ok(Estimate::exact(hi - lo))
        }
        EvalMode::Sampled { samples, seed } => {
            let draws: Vec<f64> = (0..samples)
                .into_par_iter()
                .map_init(Vec::new, |buf, s| {
                    draw(x, seed, s, buf);
                    sample_partial(spec, buf, g)
                })
                .collect();
            Ok(Estimate::from_samples(&draws))
        }
    }
}

fn sample_partial(spec: &ValuationSpec, set: &[GoodId], g: GoodId) -> f64 {
    let without = set.iter().copied().filter(|&h| h != g);
    let lo = spec.value_of(without.clone());
    let hi = spec.value_of(without.chain(std::iter::once(g)));
    hi - lo
}

/// All coordinate partials of `F` at `x`.
///
/// Exact mode shares one value table across the fractional coordinates;
/// Sampled mode uses one common sample stream for every good.
pub fn gradient(spec: &ValuationSpec, x: &[f64], mode: EvalMode) -> Result<Vec<Estimate>> {
    check_point(spec, x)?;
    check_samples(&mode)?;
    match mode {
        EvalMode::Exact => gradient_exact(spec, x),
        EvalMode::Sampled { samples, seed } => {
            let m = x.len();
            let rows: Vec<Vec<f64>> = (0..samples)
                .into_par_iter()
                .map_init(Vec::new, |buf, s| {
                    draw(x, seed, s, buf);
                    (0..m).map(|g| sample_partial(spec, buf, g)).collect()
                })
                .collect();
            Ok((0..m)
                .map(|g| {
                    let col: Vec<f64> = rows.iter().map(|r| r[g]).collect();
                    Estimate::from_samples(&col)
                })
                .collect())
        }
    }
}

fn gradient_exact(spec: &ValuationSpec, x: &[f64]) -> Result<Vec<Estimate>> {
    if let ValuationSpec::Additive { weights } = spec {
        return Ok(weights.iter().map(|&w| Estimate::exact(w)).collect());
    }
    let (base, frac) = split(x);
    let k = frac.len();
    check_budget(k)?;
    let probs: Vec<f64> = frac.iter().map(|&g| x[g]).collect();
    let vals: Vec<f64> = (0..1usize << k)
        .map(|s| spec.value_of(members(&base, &frac, s)))
        .collect();

    let mut grad = vec![0.0; x.len()];
    // fractional coordinates: F is linear in x_b, so ∂ = F1 − F0 over the
    // other coordinates' distribution
    for b in 0..k {
        let others: Vec<f64> = probs
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != b)
            .map(|(_, &p)| p)
            .collect();
        let q = prob_table(&others);
        let low = (1usize << b) - 1;
        let bit = 1usize << b;
        let mut d = 0.0;
        for (t, &p) in q.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let s = (t & low) | ((t & !low) << 1);
            d += p * (vals[s | bit] - vals[s]);
        }
        grad[frac[b]] = d;
    }
    // integral coordinates need the toggled base
    let full = prob_table(&probs);
    let mut is_frac = vec![false; x.len()];
    for &g in &frac {
        is_frac[g] = true;
    }
    for g in 0..x.len() {
        if is_frac[g] {
            continue;
        }
        let in_base = x[g] >= 1.0;
        let mut d = 0.0;
        for (s, &p) in full.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let toggled = if in_base {
                spec.value_of(members(&base, &frac, s).filter(|&h| h != g))
            } else {
                spec.value_of(members(&base, &frac, s).chain(std::iter::once(g)))
            };
            d += p * if in_base { vals[s] - toggled } else { toggled - vals[s] };
        }
        grad[g] = d;
    }
    Ok(grad.into_iter().map(Estimate::exact).collect())
}

/// First-order lower bound `t_i ∂F/∂x_i − t_j ∂F/∂x_j` on the change of `F`
/// when good `i` is raised by `t_i` and good `j` lowered by `t_j`.
///
/// For submodular `f` the true change is never below this bound.
pub fn direction_gain_bound(
    spec: &ValuationSpec,
    x: &[f64],
    i: GoodId,
    j: GoodId,
    t_i: f64,
    t_j: f64,
    mode: EvalMode,
) -> Result<f64> {
    check_point(spec, x)?;
    if i == j || i >= x.len() || j >= x.len() {
        return Err(Error::input(format!("need two distinct goods in range, got {i} and {j}")));
    }
    if !(t_i >= 0.0 && t_j >= 0.0 && t_i.is_finite() && t_j.is_finite()) {
        return Err(Error::input("step lengths must be finite and nonnegative"));
    }
    if x[i] + t_i > 1.0 + COORD_TOL || x[j] - t_j < -COORD_TOL {
        return Err(Error::input("perturbed point leaves [0, 1]"));
    }
    let di = partial(spec, x, i, mode)?.value;
    let dj = partial(spec, x, j, mode)?.value;
    Ok(t_i * di - t_j * dj)
}
