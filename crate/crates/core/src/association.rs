//! Gated optimal assignment.
//!
//! Pairs whose cost exceeds the gate are forbidden. Among all one-to-one
//! matchings over the remaining pairs the solver returns one with the largest
//! number of pairs and, among those, the smallest total cost. Unmatched rows
//! and columns carry no penalty.
//!
//! The solver pads the problem to a square matrix in which forbidden and
//! padding entries cost more than every finite pair combined, then runs a
//! Jonker-Volgenant style shortest-augmenting-path search with dual potentials.

use nalgebra::{Cholesky, Matrix2};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::sensing::Detection;
use crate::tracking::GaussianEstimate;

/// 99% chi-square quantile for two degrees of freedom.
pub const DEFAULT_GATE: f64 = 9.21;

/// Anything carrying a Gaussian position estimate.
pub trait PositionGaussian {
    fn position(&self) -> Vec3;
    fn position_covariance(&self) -> Mat3;
}

impl PositionGaussian for GaussianEstimate {
    fn position(&self) -> Vec3 {
        self.mean.fixed_rows::<3>(0).into_owned()
    }

    fn position_covariance(&self) -> Mat3 {
        self.covariance.fixed_view::<3, 3>(0, 0).into_owned()
    }
}

impl PositionGaussian for Detection {
    fn position(&self) -> Vec3 {
        self.position
    }

    fn position_covariance(&self) -> Mat3 {
        self.covariance
    }
}

/// Squared Mahalanobis distance between two position estimates under the
/// combined covariance `Pa + Pb`, over the ground-plane (x, y) block so that
/// it matches the two-dof gate.
pub fn mahalanobis_cost(a: &impl PositionGaussian, b: &impl PositionGaussian) -> Result<f64> {
    let s = a.position_covariance() + b.position_covariance();
    let s: Matrix2<f64> = s.fixed_view::<2, 2>(0, 0).into_owned();
    let s = (s + s.transpose()) * 0.5;
    let chol = Cholesky::new(s).ok_or(Error::SingularCovariance)?;
    let d = (a.position() - b.position()).fixed_rows::<2>(0).into_owned();
    Ok(d.dot(&chol.solve(&d)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentProblem {
    /// Row-major `rows × cols`; `+inf` marks forbidden pairs.
    pub cost: Vec<Vec<f64>>,
    /// Kept explicitly so problems with zero rows still know their width.
    pub cols: usize,
    pub gate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentResult {
    /// Sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unassigned_rows: Vec<usize>,
    pub unassigned_cols: Vec<usize>,
}

impl AssignmentProblem {
    /// Builds a problem; entries above the gate (or NaN) become forbidden.
    pub fn new(mut cost: Vec<Vec<f64>>, gate: f64) -> Self {
        for row in &mut cost {
            for c in row.iter_mut() {
                if !(c.is_finite() && *c <= gate) {
                    *c = f64::INFINITY;
                }
            }
        }
        let cols = cost.first().map_or(0, Vec::len);
        assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
        AssignmentProblem { cost, cols, gate }
    }

    pub fn from_fn(rows: usize, cols: usize, gate: f64, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let cost = (0..rows).map(|i| (0..cols).map(|j| f(i, j)).collect()).collect();
        AssignmentProblem {
            cols,
            ..AssignmentProblem::new(cost, gate)
        }
    }

    pub fn rows(&self) -> usize {
        self.cost.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

impl AssignmentResult {
    pub fn total_cost(&self, p: &AssignmentProblem) -> f64 {
        self.pairs.iter().map(|&(i, j)| p.cost[i][j]).sum()
    }

    pub fn col_of_row(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }
}

/// Minimum-cost perfect matching on a square matrix; returns the column of each row.
fn shortest_augmenting_path(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        // Flip the augmenting path.
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        if row_of_col[j] > 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}

pub fn solve_assignment(p: &AssignmentProblem) -> AssignmentResult {
    let (rows, cols) = (p.rows(), p.cols());
    let finite_sum: f64 = p
        .cost
        .iter()
        .flatten()
        .filter(|c| c.is_finite())
        .map(|c| c.abs())
        .sum();
    let mut result = AssignmentResult::default();
    if rows == 0 || cols == 0 || finite_sum.is_nan() {
        result.unassigned_rows = (0..rows).collect();
        result.unassigned_cols = (0..cols).collect();
        return result;
    }
    let n = rows.max(cols);
    let forbidden = 2.0 * finite_sum + 1.0;
    let square: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match p.cost.get(i).and_then(|r| r.get(j)) {
                    Some(c) if c.is_finite() => *c,
                    _ => forbidden,
                })
                .collect()
        })
        .collect();
    let col_of_row = shortest_augmenting_path(&square);
    let mut col_used = vec![false; cols];
    for (i, &j) in col_of_row.iter().enumerate().take(rows) {
        if j < cols && p.cost[i][j].is_finite() {
            result.pairs.push((i, j));
            col_used[j] = true;
        } else {
            result.unassigned_rows.push(i);
        }
    }
    result.unassigned_cols = (0..cols).filter(|&j| !col_used[j]).collect();
    result
}
