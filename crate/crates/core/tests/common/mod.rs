//! Independent oracles and fixtures shared by the integration tests.
//!
//! Nothing here calls the library's own evaluators or enumerators: the
//! oracles recurse over assignments and sum over subsets directly from
//! `ValuationSpec::value`.

#![allow(dead_code)]

use cyclecancel::{generate, Family, FractionalAllocation, GenConfig, GoodSet, Instance, ValuationSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn set_value(spec: &ValuationSpec, goods: &[usize]) -> f64 {
    let s = GoodSet::from_indices(spec.goods(), goods.iter().copied()).unwrap();
    spec.value(&s).unwrap()
}

/// `F(x) = Σ_S f(S) Π_{j∈S} x_j Π_{j∉S} (1 − x_j)`.
pub fn naive_multilinear(spec: &ValuationSpec, x: &[f64]) -> f64 {
    let m = x.len();
    let mut total = 0.0;
    for mask in 0u64..1 << m {
        let mut p = 1.0;
        let mut members = Vec::new();
        for (j, &xj) in x.iter().enumerate() {
            if mask >> j & 1 == 1 {
                p *= xj;
                members.push(j);
            } else {
                p *= 1.0 - xj;
            }
        }
        if p != 0.0 {
            total += p * set_value(spec, &members);
        }
    }
    total
}

/// Visits every assignment of `goods` goods to `parts` parts.
fn each_assignment(parts: usize, goods: usize, visit: &mut dyn FnMut(&[Vec<usize>])) {
    fn go(g: usize, goods: usize, bundles: &mut Vec<Vec<usize>>, visit: &mut dyn FnMut(&[Vec<usize>])) {
        if g == goods {
            visit(bundles);
            return;
        }
        for k in 0..bundles.len() {
            bundles[k].push(g);
            go(g + 1, goods, bundles, visit);
            bundles[k].pop();
        }
    }
    let mut bundles = vec![Vec::new(); parts];
    go(0, goods, &mut bundles, visit);
}

pub fn naive_maxmin(instance: &Instance) -> f64 {
    let mut best = f64::NEG_INFINITY;
    each_assignment(instance.agents(), instance.goods(), &mut |bundles| {
        let v = bundles
            .iter()
            .enumerate()
            .map(|(i, b)| set_value(instance.valuation(i), b))
            .fold(f64::INFINITY, f64::min);
        best = best.max(v);
    });
    best
}

pub fn naive_nsw(instance: &Instance) -> f64 {
    let n = instance.agents() as f64;
    let mut best = 0.0f64;
    each_assignment(instance.agents(), instance.goods(), &mut |bundles| {
        let product: f64 = bundles
            .iter()
            .enumerate()
            .map(|(i, b)| set_value(instance.valuation(i), b))
            .product();
        best = best.max(product.powf(1.0 / n));
    });
    best
}

pub fn naive_mms(spec: &ValuationSpec, k: usize, goods: &[usize]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    each_assignment(k, goods.len(), &mut |parts| {
        let v = parts
            .iter()
            .map(|p| set_value(spec, &p.iter().map(|&l| goods[l]).collect::<Vec<_>>()))
            .fold(f64::INFINITY, f64::min);
        best = best.max(v);
    });
    best
}

pub fn mixed_instance(agents: usize, goods: usize, seed: u64) -> Instance {
    generate(&GenConfig {
        family: Family::Mixed,
        agents,
        goods,
        seed,
        small_goods: None,
    })
    .unwrap()
}

/// Random point of the assignment polytope; each entry is zeroed with
/// probability `sparsity` (every column keeps at least one entry).
pub fn random_point(rng: &mut ChaCha8Rng, agents: usize, goods: usize, sparsity: f64) -> FractionalAllocation {
    let mut x = vec![0.0; agents * goods];
    for j in 0..goods {
        let mut w: Vec<f64> = (0..agents)
            .map(|_| if rng.gen_bool(sparsity) { 0.0 } else { rng.gen_range(0.05..1.0) })
            .collect();
        if w.iter().all(|&v| v == 0.0) {
            w[rng.gen_range(0..agents)] = 1.0;
        }
        let s: f64 = w.iter().sum();
        for i in 0..agents {
            x[i * goods + j] = w[i] / s;
        }
    }
    FractionalAllocation::new(agents, goods, x).unwrap()
}
