//! Fractional and integral allocations, the support graph, cycle
//! cancellation under the multilinear extension and non-uniform pipage
//! rounding.

mod cancel;
mod graph;
mod pipage;

pub use cancel::{cancel_all_cycles, cancel_one_cycle, CancelOptions, CycleStep};
pub use graph::{find_cycle, support_graph, Cycle, SupportGraph};
pub use pipage::{nonuniform_pipage, pipage_round, randomized_round, PipageOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multilinear::{self, EvalMode, Estimate};
use crate::valuations::{AgentId, GoodId, GoodSet, ValuationSpec};

/// Column sums must equal one within this tolerance.
pub const COLUMN_TOL: f64 = 1e-9;

/// Default support threshold: entries at or below it are not edges.
pub const DEFAULT_ETA: f64 = 1e-9;

/// Default threshold below which a partial derivative is treated as zero.
pub const DEFAULT_TAU_ZERO: f64 = 1e-9;

/// A point of the assignment polytope: `rows × cols` entries in `[0, 1]`
/// with every column summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAllocation")]
pub struct FractionalAllocation {
    rows: usize,
    cols: usize,
    x: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAllocation {
    rows: usize,
    cols: usize,
    x: Vec<f64>,
}

impl TryFrom<RawAllocation> for FractionalAllocation {
    type Error = Error;

    fn try_from(raw: RawAllocation) -> Result<Self> {
        FractionalAllocation::new(raw.rows, raw.cols, raw.x)
    }
}

impl FractionalAllocation {
    /// Validates and clamps a row-major matrix.
    pub fn new(rows: usize, cols: usize, mut x: Vec<f64>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::schema("/rows", "need at least one agent row"));
        }
        if x.len() != rows * cols {
            return Err(Error::schema(
                "/x",
                format!("expected {} entries for {rows}x{cols}, got {}", rows * cols, x.len()),
            ));
        }
        for (k, v) in x.iter_mut().enumerate() {
            if !v.is_finite() || *v < -multilinear::COORD_TOL || *v > 1.0 + multilinear::COORD_TOL {
                return Err(Error::schema(format!("/x/{k}"), format!("entry {v} outside [0, 1]")));
            }
            *v = v.clamp(0.0, 1.0);
        }
        let alloc = FractionalAllocation { rows, cols, x };
        for j in 0..cols {
            let s = alloc.column_sum(j);
            if (s - 1.0).abs() > COLUMN_TOL {
                return Err(Error::input(format!("column {j} sums to {s}, expected 1")));
            }
        }
        Ok(alloc)
    }

    /// Every entry `1/rows`; the last row absorbs the rounding residue so
    /// columns sum to one exactly.
    pub fn uniform(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 {
            return Err(Error::input("uniform point needs at least one agent"));
        }
        let share = 1.0 / rows as f64;
        let mut acc = 0.0;
        for _ in 1..rows {
            acc += share;
        }
        // exact by Sterbenz since acc ≥ 1/2 whenever rows ≥ 2
        let residue = 1.0 - acc;
        let mut x = vec![share; rows * cols];
        for j in 0..cols {
            x[(rows - 1) * cols + j] = residue;
        }
        Ok(FractionalAllocation { rows, cols, x })
    }

    /// Builds a point from a row-major matrix whose columns sum to one up to
    /// accumulated floating error; each column's largest share absorbs the
    /// residue.
    pub(crate) fn closing_columns(rows: usize, cols: usize, mut x: Vec<f64>) -> Result<Self> {
        for j in 0..cols {
            let mut big = 0;
            for i in 1..rows {
                if x[i * cols + j] > x[big * cols + j] {
                    big = i;
                }
            }
            let rest: f64 = (0..rows).filter(|&i| i != big).map(|i| x[i * cols + j]).sum();
            x[big * cols + j] = (1.0 - rest).max(0.0);
        }
        FractionalAllocation::new(rows, cols, x)
    }

    pub fn from_integral(alloc: &IntegralAllocation) -> Self {
        let rows = alloc.agents();
        let cols = alloc.goods();
        let mut x = vec![0.0; rows * cols];
        for (i, bundle) in alloc.bundles().iter().enumerate() {
            for g in bundle.iter() {
                x[i * cols + g] = 1.0;
            }
        }
        FractionalAllocation { rows, cols, x }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: AgentId, j: GoodId) -> f64 {
        self.x[i * self.cols + j]
    }

    pub(crate) fn set(&mut self, i: AgentId, j: GoodId, v: f64) {
        self.x[i * self.cols + j] = v;
    }

    pub fn row(&self, i: AgentId) -> &[f64] {
        &self.x[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn column_sum(&self, j: GoodId) -> f64 {
        (0..self.rows).map(|i| self.get(i, j)).sum()
    }

    /// Number of entries in `(eta, 1 − eta)`.
    pub fn fractional_entries(&self, eta: f64) -> usize {
        self.x.iter().filter(|&&v| v > eta && v < 1.0 - eta).count()
    }

    /// Goods with at least one entry in `(eta, 1 − eta)`.
    pub fn fractional_goods(&self, eta: f64) -> Vec<GoodId> {
        (0..self.cols)
            .filter(|&j| (0..self.rows).any(|i| {
                let v = self.get(i, j);
                v > eta && v < 1.0 - eta
            }))
            .collect()
    }

    /// Multilinear value `V_i(x_i)` of every agent.
    pub fn agent_values(&self, valuations: &[ValuationSpec], mode: EvalMode) -> Result<Vec<Estimate>> {
        check_dims(self, valuations)?;
        valuations
            .iter()
            .enumerate()
            .map(|(i, v)| multilinear::eval(v, self.row(i), mode.rekey(i as u64)))
            .collect()
    }
}

pub(crate) fn check_dims(x: &FractionalAllocation, valuations: &[ValuationSpec]) -> Result<()> {
    if valuations.len() != x.rows() {
        return Err(Error::input(format!(
            "{} valuations for an allocation with {} agents",
            valuations.len(),
            x.rows()
        )));
    }
    if let Some(v) = valuations.iter().find(|v| v.goods() != x.cols()) {
        return Err(Error::input(format!(
            "valuation over {} goods for an allocation with {} goods",
            v.goods(),
            x.cols()
        )));
    }
    Ok(())
}

/// A partition of the goods into one (possibly empty) bundle per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralAllocation {
    goods: usize,
    bundles: Vec<GoodSet>,
}

impl IntegralAllocation {
    pub fn new(goods: usize, bundles: Vec<GoodSet>) -> Result<Self> {
        let mut seen = GoodSet::empty(goods);
        for (i, b) in bundles.iter().enumerate() {
            if b.universe() != goods {
                return Err(Error::input(format!("bundle {i} is over the wrong number of goods")));
            }
            for g in b.iter() {
                if !seen.insert(g)? {
                    return Err(Error::input(format!("good {g} allocated twice")));
                }
            }
        }
        if seen.len() != goods {
            return Err(Error::input(format!(
                "{} of {goods} goods allocated",
                seen.len()
            )));
        }
        Ok(IntegralAllocation { goods, bundles })
    }

    /// Builds the partition from an owner per good.
    pub fn from_owners(agents: usize, owners: &[AgentId]) -> Result<Self> {
        let goods = owners.len();
        let mut bundles = vec![GoodSet::empty(goods); agents];
        for (g, &a) in owners.iter().enumerate() {
            if a >= agents {
                return Err(Error::input(format!("good {g} assigned to missing agent {a}")));
            }
            bundles[a].insert(g)?;
        }
        Ok(IntegralAllocation { goods, bundles })
    }

    pub fn agents(&self) -> usize {
        self.bundles.len()
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn bundles(&self) -> &[GoodSet] {
        &self.bundles
    }

    pub fn bundle(&self, i: AgentId) -> &GoodSet {
        &self.bundles[i]
    }

    pub fn owner(&self, g: GoodId) -> Option<AgentId> {
        self.bundles.iter().position(|b| b.contains(g))
    }

    pub fn to_lists(&self) -> Vec<Vec<GoodId>> {
        self.bundles.iter().map(GoodSet::to_vec).collect()
    }

    pub fn values(&self, valuations: &[ValuationSpec]) -> Result<Vec<f64>> {
        if valuations.len() != self.agents() {
            return Err(Error::input("valuation count does not match agent count"));
        }
        valuations
            .iter()
            .zip(&self.bundles)
            .map(|(v, b)| v.value(b))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_columns_exact() {
        for n in 1..8 {
            let u = FractionalAllocation::uniform(n, 3).unwrap();
            for j in 0..3 {
                assert_eq!(u.column_sum(j), 1.0, "n = {n}");
            }
        }
        let u = FractionalAllocation::uniform(2, 3).unwrap();
        assert!(u.as_slice().iter().all(|&v| v == 0.5));
        assert!(FractionalAllocation::uniform(0, 3).is_err());
    }

    #[test]
    fn new_rejects_bad_columns() {
        assert!(FractionalAllocation::new(2, 1, vec![0.5, 0.4]).is_err());
        assert!(FractionalAllocation::new(2, 1, vec![1.5, -0.5]).is_err());
        let ok = FractionalAllocation::new(2, 1, vec![1.0 + 1e-13, -1e-13]).unwrap();
        assert_eq!(ok.get(0, 0), 1.0);
        assert_eq!(ok.get(1, 0), 0.0);
    }

    #[test]
    fn integral_partition_checked() {
        let a = IntegralAllocation::from_owners(2, &[0, 1, 1]).unwrap();
        assert_eq!(a.to_lists(), vec![vec![0], vec![1, 2]]);
        let dup = vec![
            GoodSet::from_indices(2, [0]).unwrap(),
            GoodSet::from_indices(2, [0, 1]).unwrap(),
        ];
        assert!(IntegralAllocation::new(2, dup).is_err());
        let missing = vec![GoodSet::from_indices(2, [0]).unwrap(), GoodSet::empty(2)];
        assert!(IntegralAllocation::new(2, missing).is_err());
    }

    #[test]
    fn json_shape() {
        let x = FractionalAllocation::new(2, 1, vec![0.25, 0.75]).unwrap();
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, r#"{"rows":2,"cols":1,"x":[0.25,0.75]}"#);
        let back: FractionalAllocation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
        assert!(serde_json::from_str::<FractionalAllocation>(r#"{"rows":2,"cols":1,"x":[0.2,0.2]}"#).is_err());
    }
}
