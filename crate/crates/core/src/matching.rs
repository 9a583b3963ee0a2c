//! Maximum-weight agent-perfect bipartite matching.
//!
//! Shortest-augmenting-path Hungarian method with potentials, O(n²k) per
//! solve. Weights of `-inf` mark forbidden pairs. Among optimal matchings
//! the lexicographically smallest assignment vector is returned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != rows * cols {
            return Err(Error::input(format!(
                "weight matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                w.len()
            )));
        }
        if let Some(bad) = w.iter().find(|v| v.is_nan() || **v == f64::INFINITY) {
            return Err(Error::input(format!("invalid weight {bad}")));
        }
        Ok(WeightMatrix { rows, cols, w })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let w = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        WeightMatrix::new(rows, cols, w)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.cols + j]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    /// Column matched to each row.
    pub assign: Vec<usize>,
}

/// Min-cost assignment of `rows` into `cols` (`rows.len() ≤ cols.len()`),
/// cost `−w`. Returns the column (index into `cols`) per row, or `None` when
/// no finite assignment exists.
fn hungarian(w: &WeightMatrix, rows: &[usize], cols: &[usize]) -> Option<Vec<usize>> {
    let n = rows.len();
    let k = cols.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let cost = |i: usize, j: usize| -w.get(rows[i - 1], cols[j - 1]);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let c = cost(i0, j);
                if c.is_finite() {
                    let cur = c - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if !delta.is_finite() {
                return None;
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=k {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    Some(assign)
}

fn total(w: &WeightMatrix, rows: &[usize], cols: &[usize], assign: &[usize]) -> f64 {
    rows.iter().zip(assign).map(|(&i, &c)| w.get(i, cols[c])).sum()
}

/// Maximum-weight matching of every row to a distinct column.
///
/// Errors with [`Error::Infeasible`] when every agent-perfect matching uses
/// a forbidden pair.
pub fn max_weight_matching(w: &WeightMatrix) -> Result<(Matching, f64)> {
    let n = w.rows();
    let k = w.cols();
    if n > k {
        return Err(Error::input(format!("{n} agents cannot be matched into {k} columns")));
    }
    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..k).collect();
    let first = hungarian(w, &all_rows, &all_cols)
        .ok_or_else(|| Error::Infeasible("no finite agent-perfect matching".into()))?;
    let best = total(w, &all_rows, &all_cols, &first);
    let scale = 1.0
        + w.w
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |a, v| a.max(v.abs()))
            * n as f64;
    let tol = 1e-12 * scale;

    // lexicographic refinement: fix rows in order to the smallest column
    // that still admits an optimal completion
    let mut assign: Vec<usize> = first.clone();
    let mut fixed_sum = 0.0;
    let mut taken = vec![false; k];
    for r in 0..n {
        let incumbent = assign[r];
        let rest_rows: Vec<usize> = (r + 1..n).collect();
        let mut chosen = None;
        for c in 0..incumbent {
            if taken[c] || !w.get(r, c).is_finite() {
                continue;
            }
            let rest_cols: Vec<usize> = (0..k).filter(|&j| !taken[j] && j != c).collect();
            if let Some(sub) = hungarian(w, &rest_rows, &rest_cols) {
                let t = fixed_sum + w.get(r, c) + total(w, &rest_rows, &rest_cols, &sub);
                if t >= best - tol {
                    for (q, &s) in sub.iter().enumerate() {
                        assign[r + 1 + q] = rest_cols[s];
                    }
                    chosen = Some(c);
                    break;
                }
            }
        }
        let c = chosen.unwrap_or(incumbent);
        assign[r] = c;
        taken[c] = true;
        fixed_sum += w.get(r, c);
    }
    let sum = (0..n).map(|i| w.get(i, assign[i])).sum();
    Ok((Matching { assign }, sum))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one() {
        let w = WeightMatrix::new(1, 1, vec![5.0]).unwrap();
        let (m, t) = max_weight_matching(&w).unwrap();
        assert_eq!(m.assign, vec![0]);
        assert_eq!(t, 5.0);
    }

    #[test]
    fn two_by_two() {
        let w = WeightMatrix::new(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        let (m, t) = max_weight_matching(&w).unwrap();
        assert_eq!(m.assign, vec![0, 1]);
        assert_eq!(t, 5.0);
    }

    #[test]
    fn forbidden_row_infeasible() {
        let ninf = f64::NEG_INFINITY;
        let w = WeightMatrix::new(2, 3, vec![1.0, 2.0, 3.0, ninf, ninf, ninf]).unwrap();
        assert!(matches!(max_weight_matching(&w), Err(Error::Infeasible(_))));
    }

    #[test]
    fn forbidden_pairs_avoided() {
        let ninf = f64::NEG_INFINITY;
        let w = WeightMatrix::new(2, 2, vec![10.0, ninf, 1.0, 0.0]).unwrap();
        let (m, t) = max_weight_matching(&w).unwrap();
        assert_eq!(m.assign, vec![0, 1]);
        assert_eq!(t, 10.0);
        let w = WeightMatrix::new(2, 2, vec![10.0, 1.0, 20.0, ninf]).unwrap();
        let (m, _) = max_weight_matching(&w).unwrap();
        assert_eq!(m.assign, vec![1, 0]);
    }

    #[test]
    fn ties_take_smallest_assignment() {
        let w = WeightMatrix::new(2, 3, vec![1.0; 6]).unwrap();
        let (m, t) = max_weight_matching(&w).unwrap();
        assert_eq!(m.assign, vec![0, 1]);
        assert_eq!(t, 2.0);
    }

    #[test]
    fn more_rows_than_columns() {
        let w = WeightMatrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        assert!(matches!(max_weight_matching(&w), Err(Error::Input(_))));
    }
}
