//! Exact discrete optimal transport.
//!
//! The transportation problem is solved by the primal network simplex on the
//! bipartite supply/demand graph (u-v potentials, cycle pivots), with Bland's
//! smallest-index rule for both entering and leaving cells so that degenerate
//! pivots cannot cycle.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Result, SgotError};

/// Tolerance on marginal sums.
pub const MARGINAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub entries: DMatrix<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl TransportPlan {
    /// Largest deviation of row/column sums from the marginals.
    pub fn marginal_error(&self) -> f64 {
        let mut err = 0.0_f64;
        for (i, &ai) in self.a.iter().enumerate() {
            err = err.max((self.entries.row(i).sum() - ai).abs());
        }
        for (j, &bj) in self.b.iter().enumerate() {
            err = err.max((self.entries.column(j).sum() - bj).abs());
        }
        err
    }

    pub fn support_size(&self) -> usize {
        self.entries.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn cost(&self, c: &DMatrix<f64>) -> f64 {
        self.entries.component_mul(c).sum()
    }
}

fn validate_marginal(name: &str, m: &[f64]) -> Result<()> {
    if m.is_empty() {
        return Err(SgotError::Marginal(format!("marginal {name} is empty")));
    }
    if let Some(v) = m.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(SgotError::Marginal(format!("marginal {name} has invalid mass {v}")));
    }
    let s: f64 = m.iter().sum();
    if (s - 1.0).abs() > MARGINAL_TOL {
        return Err(SgotError::Marginal(format!("marginal {name} sums to {s}, expected 1")));
    }
    Ok(())
}

/// Solve `min <C, P>` over couplings of `a` and `b`.
pub fn solve_ot(c: &DMatrix<f64>, a: &[f64], b: &[f64]) -> Result<(TransportPlan, f64)> {
    if c.nrows() != a.len() || c.ncols() != b.len() {
        return Err(SgotError::Dimension(format!(
            "cost is {}x{} but marginals have lengths {} and {}",
            c.nrows(),
            c.ncols(),
            a.len(),
            b.len()
        )));
    }
    validate_marginal("a", a)?;
    validate_marginal("b", b)?;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(SgotError::Parameter("cost matrix has non-finite entries".into()));
    }
    if c.iter().any(|&v| v < 0.0) {
        return Err(SgotError::Parameter("cost matrix has negative entries".into()));
    }
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let sub = DMatrix::from_fn(rows.len(), cols.len(), |i, j| c[(rows[i], cols[j])]);
    let sa: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let sb: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
    let flow = network_simplex(&sub, &sa, &sb)?;
    let mut entries = DMatrix::zeros(a.len(), b.len());
    for (i, &ri) in rows.iter().enumerate() {
        for (j, &cj) in cols.iter().enumerate() {
            entries[(ri, cj)] = flow[(i, j)];
        }
    }
    let plan = TransportPlan { entries, a: a.to_vec(), b: b.to_vec() };
    let value = plan.cost(c);
    Ok((plan, value))
}

/// Transportation simplex on strictly positive marginals.
fn network_simplex(c: &DMatrix<f64>, a: &[f64], b: &[f64]) -> Result<DMatrix<f64>> {
    let m = a.len();
    let n = b.len();
    let mut x = DMatrix::zeros(m, n);
    let mut basic = vec![vec![false; n]; m];

    // Northwest-corner start; degenerate steps keep a zero basic cell so the
    // basis is always a spanning tree of m + n - 1 cells.
    let mut ra = a.to_vec();
    let mut rb = b.to_vec();
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let q = ra[i].min(rb[j]);
        x[(i, j)] = q;
        basic[i][j] = true;
        ra[i] -= q;
        rb[j] -= q;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if (ra[i] <= rb[j] && i < m - 1) || j == n - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    let scale = c.iter().cloned().fold(0.0_f64, f64::max).max(1.0);
    let tol = 1e-12 * scale;
    let max_pivots = 50 * (m + n) * (m + n) + 100;

    for _ in 0..max_pivots {
        let (u, v) = potentials(c, &basic, m, n);
        let mut entering = None;
        'search: for i in 0..m {
            for j in 0..n {
                if !basic[i][j] && c[(i, j)] - u[i] - v[j] < -tol {
                    entering = Some((i, j));
                    break 'search;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok(x);
        };
        let path = tree_path(&basic, m, n, ej, ei);
        // path runs column ej -> ... -> row ei through basic cells; cells on it
        // alternate minus/plus starting with minus next to the entering cell.
        let mut cycle: Vec<(usize, usize)> = Vec::with_capacity(path.len());
        for w in path.windows(2) {
            let (p, q) = (w[0], w[1]);
            let cell = if p >= m { (q, p - m) } else { (p, q - m) };
            cycle.push(cell);
        }
        // cycle[0] touches column ej: minus. cycle[1]: plus, and so on.
        let mut leave: Option<(usize, usize)> = None;
        let mut theta = f64::INFINITY;
        for (k, &(ci, cj)) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                let val = x[(ci, cj)];
                let better = match leave {
                    None => true,
                    Some(l) => val < theta || (val == theta && (ci, cj) < l),
                };
                if better {
                    theta = val;
                    leave = Some((ci, cj));
                }
            }
        }
        let leave = leave.ok_or_else(|| SgotError::Numerical("empty pivot cycle".into()))?;
        x[(ei, ej)] += theta;
        for (k, &(ci, cj)) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                x[(ci, cj)] -= theta;
            } else {
                x[(ci, cj)] += theta;
            }
        }
        x[leave] = 0.0;
        basic[leave.0][leave.1] = false;
        basic[ei][ej] = true;
    }
    Err(SgotError::NonConvergence("network simplex exceeded its pivot budget".into()))
}

/// Dual potentials with `u_0 = 0` and `u_i + v_j = c_ij` on basic cells.
fn potentials(c: &DMatrix<f64>, basic: &[Vec<bool>], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    u[0] = 0.0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(node) = queue.pop_front() {
        if node < m {
            for j in 0..n {
                if basic[node][j] && v[j].is_nan() {
                    v[j] = c[(node, j)] - u[node];
                    queue.push_back(m + j);
                }
            }
        } else {
            let j = node - m;
            for i in 0..m {
                if basic[i][j] && u[i].is_nan() {
                    u[i] = c[(i, j)] - v[j];
                    queue.push_back(i);
                }
            }
        }
    }
    (u, v)
}

/// Node path in the basis tree from column `from_col` to row `to_row`. Rows
/// are nodes `0..m`, columns `m..m+n`.
fn tree_path(basic: &[Vec<bool>], m: usize, n: usize, from_col: usize, to_row: usize) -> Vec<usize> {
    let start = m + from_col;
    let mut parent = vec![usize::MAX; m + n];
    parent[start] = start;
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == to_row {
            break;
        }
        if node < m {
            for j in 0..n {
                if basic[node][j] && parent[m + j] == usize::MAX {
                    parent[m + j] = node;
                    queue.push_back(m + j);
                }
            }
        } else {
            let j = node - m;
            for i in 0..m {
                if basic[i][j] && parent[i] == usize::MAX {
                    parent[i] = node;
                    queue.push_back(i);
                }
            }
        }
    }
    let mut path = vec![to_row];
    let mut cur = to_row;
    while cur != start {
        cur = parent[cur];
        path.push(cur);
    }
    path.reverse();
    path
}

/// `W_p = (OT(C^p))^{1/p}` for a matrix of ground distances.
pub fn wasserstein(c: &DMatrix<f64>, a: &[f64], b: &[f64], p: u32) -> Result<f64> {
    let (_, v) = wasserstein_with_plan(c, a, b, p)?;
    Ok(v)
}

pub fn wasserstein_with_plan(c: &DMatrix<f64>, a: &[f64], b: &[f64], p: u32) -> Result<(TransportPlan, f64)> {
    if p < 1 {
        return Err(SgotError::Parameter("Wasserstein order p must be >= 1".into()));
    }
    let cp = if p == 1 { c.clone() } else { c.map(|v| v.powi(p as i32)) };
    let (plan, value) = solve_ot(&cp, a, b)?;
    Ok((plan, value.max(0.0).powf(1.0 / p as f64)))
}
