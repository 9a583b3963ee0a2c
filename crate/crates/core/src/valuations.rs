//! Value-oracle model and the concrete monotone submodular families.
//!
//! Every family is normalized (`v(∅) = 0`), monotone and submodular for
//! nonnegative parameters. Values are computed in a single pass over the
//! members of a set, so callers can feed any iterator of good indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type GoodId = usize;
pub type AgentId = usize;

/// Largest ground set accepted by [`check_submodular`].
pub const MAX_CHECK_GOODS: usize = 12;

/// Subset of goods `0..universe`.
///
/// Backed by a 64-bit mask when the universe fits, a sorted index list
/// otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GoodSet {
    universe: usize,
    repr: Repr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Repr {
    Mask(u64),
    List(Vec<GoodId>),
}

impl GoodSet {
    pub fn empty(universe: usize) -> Self {
        let repr = if universe <= 64 {
            Repr::Mask(0)
        } else {
            Repr::List(Vec::new())
        };
        GoodSet { universe, repr }
    }

    pub fn full(universe: usize) -> Self {
        let mut s = GoodSet::empty(universe);
        for g in 0..universe {
            s.insert_unchecked(g);
        }
        s
    }

    pub fn from_indices(universe: usize, goods: impl IntoIterator<Item = GoodId>) -> Result<Self> {
        let mut s = GoodSet::empty(universe);
        for g in goods {
            if g >= universe {
                return Err(Error::input(format!(
                    "good {g} out of range for {universe} goods"
                )));
            }
            if !s.insert(g)? {
                return Err(Error::input(format!("duplicate good {g}")));
            }
        }
        Ok(s)
    }

    /// Builds a set from a mask; bits at or above `universe` are rejected.
    pub fn from_mask(universe: usize, mask: u64) -> Result<Self> {
        if universe < 64 && mask >> universe != 0 {
            return Err(Error::input(format!(
                "mask {mask:#x} has bits outside {universe} goods"
            )));
        }
        if universe <= 64 {
            Ok(GoodSet {
                universe,
                repr: Repr::Mask(mask),
            })
        } else {
            GoodSet::from_indices(universe, MaskIter(mask))
        }
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        match &self.repr {
            Repr::Mask(m) => m.count_ones() as usize,
            Repr::List(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, g: GoodId) -> bool {
        match &self.repr {
            Repr::Mask(m) => g < 64 && m & (1u64 << g) != 0,
            Repr::List(v) => v.binary_search(&g).is_ok(),
        }
    }

    /// Inserts `g`, returning whether it was newly added.
    pub fn insert(&mut self, g: GoodId) -> Result<bool> {
        if g >= self.universe {
            return Err(Error::input(format!(
                "good {g} out of range for {} goods",
                self.universe
            )));
        }
        Ok(self.insert_unchecked(g))
    }

    fn insert_unchecked(&mut self, g: GoodId) -> bool {
        match &mut self.repr {
            Repr::Mask(m) => {
                let bit = 1u64 << g;
                let fresh = *m & bit == 0;
                *m |= bit;
                fresh
            }
            Repr::List(v) => match v.binary_search(&g) {
                Ok(_) => false,
                Err(pos) => {
                    v.insert(pos, g);
                    true
                }
            },
        }
    }

    pub fn remove(&mut self, g: GoodId) -> bool {
        match &mut self.repr {
            Repr::Mask(m) => {
                if g >= 64 {
                    return false;
                }
                let bit = 1u64 << g;
                let present = *m & bit != 0;
                *m &= !bit;
                present
            }
            Repr::List(v) => match v.binary_search(&g) {
                Ok(pos) => {
                    v.remove(pos);
                    true
                }
                Err(_) => false,
            },
        }
    }

    /// Mask view, available when the universe has at most 64 goods.
    pub fn as_mask(&self) -> Option<u64> {
        match &self.repr {
            Repr::Mask(m) => Some(*m),
            Repr::List(_) => None,
        }
    }

    /// Members in increasing order.
    pub fn iter(&self) -> GoodSetIter<'_> {
        match &self.repr {
            Repr::Mask(m) => GoodSetIter::Mask(MaskIter(*m)),
            Repr::List(v) => GoodSetIter::List(v.iter()),
        }
    }

    pub fn to_vec(&self) -> Vec<GoodId> {
        self.iter().collect()
    }
}

/// Iterates the set bits of a mask from lowest to highest.
#[derive(Debug, Clone, Copy)]
pub struct MaskIter(pub u64);

impl Iterator for MaskIter {
    type Item = GoodId;

    fn next(&mut self) -> Option<GoodId> {
        if self.0 == 0 {
            return None;
        }
        let g = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(g)
    }
}

#[derive(Debug, Clone)]
pub enum GoodSetIter<'a> {
    Mask(MaskIter),
    List(std::slice::Iter<'a, GoodId>),
}

impl Iterator for GoodSetIter<'_> {
    type Item = GoodId;

    fn next(&mut self) -> Option<GoodId> {
        match self {
            GoodSetIter::Mask(it) => it.next(),
            GoodSetIter::List(it) => it.next().copied(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concave {
    Sqrt,
    Log1p,
}

impl Concave {
    fn apply(self, t: f64) -> f64 {
        match self {
            Concave::Sqrt => t.sqrt(),
            Concave::Log1p => t.ln_1p(),
        }
    }
}

/// Description of one agent's monotone submodular valuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValuationSpec {
    Additive {
        weights: Vec<f64>,
    },
    /// Weighted coverage: a bundle is worth the total weight of the
    /// universe elements covered by its goods.
    Coverage {
        element_weights: Vec<f64>,
        covers: Vec<Vec<usize>>,
    },
    BudgetAdditive {
        weights: Vec<f64>,
        cap: f64,
    },
    /// A concave function of an additive score.
    ConcaveAdditive {
        weights: Vec<f64>,
        concave: Concave,
    },
}

impl ValuationSpec {
    /// Number of goods the spec is defined over.
    pub fn goods(&self) -> usize {
        match self {
            ValuationSpec::Additive { weights }
            | ValuationSpec::BudgetAdditive { weights, .. }
            | ValuationSpec::ConcaveAdditive { weights, .. } => weights.len(),
            ValuationSpec::Coverage { covers, .. } => covers.len(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            ValuationSpec::Additive { .. } => "additive",
            ValuationSpec::Coverage { .. } => "coverage",
            ValuationSpec::BudgetAdditive { .. } => "budget_additive",
            ValuationSpec::ConcaveAdditive { .. } => "concave_additive",
        }
    }

    pub fn is_additive(&self) -> bool {
        matches!(self, ValuationSpec::Additive { .. })
    }

    /// Checks parameter invariants. Errors carry a JSON pointer relative to
    /// the spec object.
    pub fn validate(&self) -> Result<()> {
        fn nonneg(vals: &[f64], field: &str) -> Result<()> {
            for (k, &w) in vals.iter().enumerate() {
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::schema(
                        format!("/{field}/{k}"),
                        format!("expected a finite nonnegative number, got {w}"),
                    ));
                }
            }
            Ok(())
        }
        match self {
            ValuationSpec::Additive { weights } => nonneg(weights, "weights"),
            ValuationSpec::ConcaveAdditive { weights, .. } => nonneg(weights, "weights"),
            ValuationSpec::BudgetAdditive { weights, cap } => {
                nonneg(weights, "weights")?;
                if !cap.is_finite() || *cap < 0.0 {
                    return Err(Error::schema(
                        "/cap",
                        format!("expected a finite nonnegative number, got {cap}"),
                    ));
                }
                Ok(())
            }
            ValuationSpec::Coverage {
                element_weights,
                covers,
            } => {
                nonneg(element_weights, "element_weights")?;
                let universe = element_weights.len();
                for (g, cover) in covers.iter().enumerate() {
                    for (k, &e) in cover.iter().enumerate() {
                        if e >= universe {
                            return Err(Error::schema(
                                format!("/covers/{g}/{k}"),
                                format!("element {e} out of range for universe of {universe}"),
                            ));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Value of the set whose members are yielded by `members`.
    ///
    /// Members must be distinct and in range; this is the unchecked hot path
    /// used by the enumerators.
    pub fn value_of(&self, members: impl Iterator<Item = GoodId>) -> f64 {
        match self {
            ValuationSpec::Additive { weights } => members.map(|g| weights[g]).sum(),
            ValuationSpec::BudgetAdditive { weights, cap } => {
                let total: f64 = members.map(|g| weights[g]).sum();
                total.min(*cap)
            }
            ValuationSpec::ConcaveAdditive { weights, concave } => {
                let total: f64 = members.map(|g| weights[g]).sum();
                concave.apply(total)
            }
            ValuationSpec::Coverage {
                element_weights,
                covers,
            } => {
                if element_weights.len() <= 64 {
                    let mut covered = 0u64;
                    for g in members {
                        for &e in &covers[g] {
                            covered |= 1u64 << e;
                        }
                    }
                    MaskIter(covered).map(|e| element_weights[e]).sum()
                } else {
                    let mut covered = vec![false; element_weights.len()];
                    for g in members {
                        for &e in &covers[g] {
                            covered[e] = true;
                        }
                    }
                    covered
                        .iter()
                        .zip(element_weights)
                        .filter(|(c, _)| **c)
                        .map(|(_, w)| w)
                        .sum()
                }
            }
        }
    }

    pub fn value_mask(&self, mask: u64) -> f64 {
        self.value_of(MaskIter(mask))
    }

    pub fn value(&self, s: &GoodSet) -> Result<f64> {
        self.check_universe(s)?;
        Ok(self.value_of(s.iter()))
    }

    /// `value(s ∪ {g}) − value(s)`; `g` must not already be in `s`.
    pub fn marginal(&self, s: &GoodSet, g: GoodId) -> Result<f64> {
        self.check_universe(s)?;
        if g >= self.goods() {
            return Err(Error::input(format!(
                "good {g} out of range for {} goods",
                self.goods()
            )));
        }
        if s.contains(g) {
            return Err(Error::input(format!("good {g} is already in the set")));
        }
        let with = self.value_of(s.iter().chain(std::iter::once(g)));
        Ok(with - self.value_of(s.iter()))
    }

    pub fn singleton(&self, g: GoodId) -> f64 {
        self.value_of(std::iter::once(g))
    }

    pub fn total(&self) -> f64 {
        self.value_of(0..self.goods())
    }

    /// The same valuation seen on the goods `keep` (renumbered `0..keep.len()`).
    pub fn restrict(&self, keep: &[GoodId]) -> ValuationSpec {
        let pick = |w: &[f64]| keep.iter().map(|&g| w[g]).collect::<Vec<_>>();
        match self {
            ValuationSpec::Additive { weights } => ValuationSpec::Additive {
                weights: pick(weights),
            },
            ValuationSpec::BudgetAdditive { weights, cap } => ValuationSpec::BudgetAdditive {
                weights: pick(weights),
                cap: *cap,
            },
            ValuationSpec::ConcaveAdditive { weights, concave } => {
                ValuationSpec::ConcaveAdditive {
                    weights: pick(weights),
                    concave: *concave,
                }
            }
            ValuationSpec::Coverage {
                element_weights,
                covers,
            } => ValuationSpec::Coverage {
                element_weights: element_weights.clone(),
                covers: keep.iter().map(|&g| covers[g].clone()).collect(),
            },
        }
    }

    fn check_universe(&self, s: &GoodSet) -> Result<()> {
        if s.universe() != self.goods() {
            return Err(Error::input(format!(
                "set over {} goods used with a valuation over {} goods",
                s.universe(),
                self.goods()
            )));
        }
        Ok(())
    }
}

/// A set function over a small ground set, addressed by bitmask.
pub trait SetFunction {
    fn ground_size(&self) -> usize;
    fn eval_mask(&self, mask: u64) -> f64;
}

impl SetFunction for ValuationSpec {
    fn ground_size(&self) -> usize {
        self.goods()
    }

    fn eval_mask(&self, mask: u64) -> f64 {
        self.value_mask(mask)
    }
}

/// Explicit value table indexed by mask; lets tests inject arbitrary set
/// functions (including non-submodular ones) into [`check_submodular`].
#[derive(Debug, Clone, PartialEq)]
pub struct TableFunction {
    ground: usize,
    values: Vec<f64>,
}

impl TableFunction {
    pub fn new(ground: usize, values: Vec<f64>) -> Result<Self> {
        if ground >= 32 || values.len() != 1usize << ground {
            return Err(Error::input(format!(
                "table for {ground} goods needs {} entries, got {}",
                1u64.checked_shl(ground as u32).unwrap_or(0),
                values.len()
            )));
        }
        Ok(TableFunction { ground, values })
    }
}

impl SetFunction for TableFunction {
    fn ground_size(&self) -> usize {
        self.ground
    }

    fn eval_mask(&self, mask: u64) -> f64 {
        self.values[mask as usize]
    }
}

/// Exhaustively verifies normalization, monotonicity and submodularity
/// (`f(A+g) − f(A) ≥ f(B+g) − f(B)` for every `A ⊆ B`, `g ∉ B`).
pub fn check_submodular<F: SetFunction + ?Sized>(f: &F) -> Result<bool> {
    let m = f.ground_size();
    if m > MAX_CHECK_GOODS {
        return Err(Error::Capacity(format!(
            "exhaustive submodularity check supports at most {MAX_CHECK_GOODS} goods, got {m}"
        )));
    }
    let size = 1usize << m;
    let table: Vec<f64> = (0..size as u64).map(|s| f.eval_mask(s)).collect();
    let scale = table.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-12 * scale;

    if table[0].abs() > tol {
        return Ok(false);
    }
    let full = size - 1;
    for s in 0..size {
        let mut free = full & !s;
        while free != 0 {
            let bit = free & free.wrapping_neg();
            free &= free - 1;
            if table[s | bit] < table[s] - tol {
                return Ok(false);
            }
        }
    }
    for b in 0..size {
        // every submask a of b, including b itself and ∅
        let mut a = b;
        loop {
            let mut free = full & !b;
            while free != 0 {
                let bit = free & free.wrapping_neg();
                free &= free - 1;
                let gain_a = table[a | bit] - table[a];
                let gain_b = table[b | bit] - table[b];
                if gain_a < gain_b - tol {
                    return Ok(false);
                }
            }
            if a == 0 {
                break;
            }
            a = (a - 1) & b;
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coverage_example() -> ValuationSpec {
        ValuationSpec::Coverage {
            element_weights: vec![1.0, 1.0, 1.0],
            covers: vec![vec![0, 1], vec![1, 2]],
        }
    }

    #[test]
    fn additive_value_sums_weights() {
        let v = ValuationSpec::Additive {
            weights: vec![1.0, 2.0, 3.0],
        };
        let s = GoodSet::from_indices(3, [0, 2]).unwrap();
        assert_eq!(v.value(&s).unwrap(), 4.0);
        assert_eq!(v.value(&GoodSet::empty(3)).unwrap(), 0.0);
    }

    #[test]
    fn coverage_value_counts_union() {
        let v = coverage_example();
        assert_eq!(v.value(&GoodSet::full(2)).unwrap(), 3.0);
        let s0 = GoodSet::from_indices(2, [0]).unwrap();
        assert_eq!(v.marginal(&s0, 1).unwrap(), 1.0);
    }

    #[test]
    fn marginal_examples() {
        let add = ValuationSpec::Additive {
            weights: vec![1.0, 2.0],
        };
        assert_eq!(add.marginal(&GoodSet::empty(2), 1).unwrap(), 2.0);
        let budget = ValuationSpec::BudgetAdditive {
            weights: vec![3.0, 3.0],
            cap: 4.0,
        };
        let s0 = GoodSet::from_indices(2, [0]).unwrap();
        assert_eq!(budget.marginal(&s0, 1).unwrap(), 1.0);
    }

    #[test]
    fn marginal_rejects_member() {
        let add = ValuationSpec::Additive {
            weights: vec![1.0, 2.0],
        };
        let s = GoodSet::from_indices(2, [1]).unwrap();
        assert!(matches!(add.marginal(&s, 1), Err(Error::Input(_))));
    }

    #[test]
    fn out_of_range_is_input_error() {
        assert!(GoodSet::from_indices(2, [2]).is_err());
        assert!(GoodSet::from_indices(2, [1, 1]).is_err());
        let add = ValuationSpec::Additive { weights: vec![1.0] };
        assert!(add.value(&GoodSet::full(2)).is_err());
    }

    #[test]
    fn large_universe_uses_list() {
        let mut s = GoodSet::empty(100);
        assert!(s.as_mask().is_none());
        s.insert(70).unwrap();
        s.insert(3).unwrap();
        assert!(!s.insert(70).unwrap());
        assert_eq!(s.to_vec(), vec![3, 70]);
        assert!(s.remove(3));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn check_submodular_accepts_families() {
        let add = ValuationSpec::Additive {
            weights: vec![0.5, 1.0, 2.0, 0.0],
        };
        assert!(check_submodular(&add).unwrap());
        assert!(check_submodular(&coverage_example()).unwrap());
        let conc = ValuationSpec::ConcaveAdditive {
            weights: vec![1.0, 4.0, 0.25],
            concave: Concave::Sqrt,
        };
        assert!(check_submodular(&conc).unwrap());
    }

    #[test]
    fn check_submodular_rejects_complements() {
        let table = TableFunction::new(2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(!check_submodular(&table).unwrap());
    }

    #[test]
    fn check_submodular_rejects_unnormalized_and_decreasing() {
        let shifted = TableFunction::new(1, vec![1.0, 2.0]).unwrap();
        assert!(!check_submodular(&shifted).unwrap());
        let decreasing = TableFunction::new(1, vec![0.0, -1.0]).unwrap();
        assert!(!check_submodular(&decreasing).unwrap());
    }

    #[test]
    fn check_submodular_capacity() {
        let add = ValuationSpec::Additive {
            weights: vec![1.0; 13],
        };
        assert!(matches!(check_submodular(&add), Err(Error::Capacity(_))));
    }

    #[test]
    fn restrict_renumbers() {
        let cov = coverage_example();
        let r = cov.restrict(&[1]);
        assert_eq!(r.goods(), 1);
        assert_eq!(r.singleton(0), 2.0);
    }

    #[test]
    fn validate_reports_pointer() {
        let bad = ValuationSpec::BudgetAdditive {
            weights: vec![1.0, -2.0],
            cap: 1.0,
        };
        match bad.validate() {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/weights/1"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
