use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cancel::{cancel_all_cycles, CancelOptions, CycleStep};
use super::graph::{find_cycle, support_graph};
use super::{FractionalAllocation, IntegralAllocation};
use crate::error::{Error, Result};
use crate::valuations::{AgentId, ValuationSpec};

/// Rounds a fractional allocation with forest support.
///
/// Each tree is rooted at its lowest-indexed agent and every good goes to
/// its parent agent. Goods held (above `eta`) by a single agent therefore go
/// to that agent, and each agent forfeits at most its own parent good.
pub fn pipage_round(x: &FractionalAllocation, eta: f64) -> Result<IntegralAllocation> {
    let graph = support_graph(x, eta);
    if find_cycle(&graph).is_some() {
        return Err(Error::Precondition("support graph has a cycle".into()));
    }
    let n = x.rows();
    let m = x.cols();
    let mut owner: Vec<Option<AgentId>> = vec![None; m];
    let mut seen_agent = vec![false; n];
    let mut queue = VecDeque::new();
    for root in 0..n {
        if seen_agent[root] {
            continue;
        }
        seen_agent[root] = true;
        queue.push_back(root);
        while let Some(a) = queue.pop_front() {
            for &g in graph.goods_of(a) {
                if owner[g].is_some() {
                    continue;
                }
                owner[g] = Some(a);
                for &b in graph.agents_of(g) {
                    if !seen_agent[b] {
                        seen_agent[b] = true;
                        queue.push_back(b);
                    }
                }
            }
        }
    }
    let owners = owner
        .into_iter()
        .enumerate()
        .map(|(g, o)| o.ok_or_else(|| Error::Precondition(format!("good {g} has no support edge"))))
        .collect::<Result<Vec<_>>>()?;
    IntegralAllocation::from_owners(n, &owners)
}

#[derive(Debug, Clone)]
pub struct PipageOutcome {
    pub allocation: IntegralAllocation,
    /// The acyclic point that was rounded.
    pub acyclic: FractionalAllocation,
    pub trace: Vec<CycleStep>,
}

/// Cycle cancellation followed by tree rounding.
pub fn nonuniform_pipage(
    x: &FractionalAllocation,
    valuations: &[ValuationSpec],
    opts: &CancelOptions,
) -> Result<PipageOutcome> {
    let (acyclic, trace) = cancel_all_cycles(x, valuations, opts)?;
    let allocation = pipage_round(&acyclic, opts.eta)?;
    Ok(PipageOutcome {
        allocation,
        acyclic,
        trace,
    })
}

/// Independent rounding: good `j` goes to agent `i` with probability `x_ij`.
pub fn randomized_round(x: &FractionalAllocation, seed: u64) -> IntegralAllocation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let owners: Vec<AgentId> = (0..x.cols())
        .map(|j| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last = 0;
            for i in 0..x.rows() {
                let p = x.get(i, j);
                if p > 0.0 {
                    last = i;
                    acc += p;
                    if u < acc {
                        return i;
                    }
                }
            }
            last
        })
        .collect();
    IntegralAllocation::from_owners(x.rows(), &owners).expect("owners are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multilinear::EvalMode;

    #[test]
    fn integral_point_rounds_to_itself() {
        let x = FractionalAllocation::new(2, 3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let a = pipage_round(&x, 1e-9).unwrap();
        assert_eq!(a.to_lists(), vec![vec![0, 2], vec![1]]);
        for seed in 0..5 {
            assert_eq!(randomized_round(&x, seed), a);
        }
    }

    #[test]
    fn path_goes_to_root() {
        let vals = [
            ValuationSpec::Additive { weights: vec![1.0] },
            ValuationSpec::Additive { weights: vec![3.0] },
        ];
        let x = FractionalAllocation::new(2, 1, vec![0.4, 0.6]).unwrap();
        let a = pipage_round(&x, 1e-9).unwrap();
        assert_eq!(a.to_lists(), vec![vec![0], vec![]]);
        let v1 = a.values(&vals).unwrap()[1];
        let f1 = x.agent_values(&vals, EvalMode::Exact).unwrap()[1].value;
        assert!(v1 >= f1 - 3.0);
    }

    #[test]
    fn rejects_cycles() {
        let x = FractionalAllocation::new(2, 2, vec![0.5; 4]).unwrap();
        assert!(matches!(pipage_round(&x, 1e-9), Err(Error::Precondition(_))));
    }

    #[test]
    fn worked_example_end_to_end() {
        let vals = [
            ValuationSpec::Additive { weights: vec![2.0, 1.0] },
            ValuationSpec::Additive { weights: vec![1.0, 2.0] },
        ];
        let x = FractionalAllocation::new(2, 2, vec![0.5; 4]).unwrap();
        let out = nonuniform_pipage(&x, &vals, &CancelOptions::default()).unwrap();
        assert_eq!(out.acyclic.as_slice(), &[1.0, 0.25, 0.0, 0.75]);
        assert_eq!(out.allocation.to_lists(), vec![vec![0, 1], vec![]]);
        let fractional = out.acyclic.agent_values(&vals, EvalMode::Exact).unwrap();
        let integral = out.allocation.values(&vals).unwrap();
        // agent 1 loses its parent good g1 (worth 2)
        assert!(integral[0] >= fractional[0].value - 2.0);
        assert!(integral[1] >= fractional[1].value - 2.0);
    }

    #[test]
    fn randomized_counts_binomial() {
        let x = FractionalAllocation::uniform(2, 1000).unwrap();
        let a = randomized_round(&x, 7);
        let c = a.bundle(0).len() as f64;
        // sd = sqrt(1000 / 4)
        assert!((c - 500.0).abs() <= 5.0 * 250f64.sqrt(), "count {c}");
        assert_eq!(randomized_round(&x, 7), a);
    }
}
