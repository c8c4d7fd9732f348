//! Dense two-phase simplex over bounded-row linear programs.
//!
//! The polyhedra in this crate are tiny (one row per agent plus a pin), so
//! the solver favors simplicity over sparse-matrix machinery: free variables
//! are split into nonnegative pairs, every row gets an artificial variable
//! for phase 1, and pivoting uses Bland's rule, which rules out cycling.
//! Optimal certificates are re-checked by substitution before they are
//! returned.

use crate::{Error, Result};

/// One two-sided row `lower ≤ a·x ≤ upper`; either bound may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct LpConstraint {
    pub coeffs: Vec<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl LpConstraint {
    pub fn range(coeffs: Vec<f64>, lower: f64, upper: f64) -> Self {
        LpConstraint {
            coeffs,
            lower: Some(lower),
            upper: Some(upper),
        }
    }

    pub fnat_most(coeffs: Vec<f64>, upper: f64) -> Self {
        LpConstraint {
            coeffs,
            lower: None,
            upper: Some(upper),
        }
    }
}

/// Maximize `objective · x` subject to the constraint rows; variables are
/// free (unbounded unless constrained by rows).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<LpConstraint>,
}

/// Three-way outcome of a solve.
#[derive(Debug, Clone, PartialEq)]
pub enum LpSolution {
    Optimal { value: f64, point: Vec<f64> },
    Unbounded,
    Infeasible,
}

const PIVOT_EPS: f64 = 1e-10;
const FEAS_EPS: f64 = 1e-8;
const VERIFY_EPS: f64 = 1e-9;
const MAX_ITERS: usize = 100_000;

/// Solve the program with a dense two-phase simplex (Bland's rule).
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.objective.len();
    if n == 0 {
        return Err(Error::InvalidArgument("objective has no variables".into()));
    }
    if lp.constraints.is_empty() {
        return Err(Error::InvalidArgument("at least one constraint is required".into()));
    }
    for c in &lp.constraints {
        if c.coeffs.len() != n {
            return Err(Error::InvalidArgument("constraint arity mismatch".into()));
        }
        if c.lower.is_none() && c.upper.is_none() {
            return Err(Error::InvalidArgument("constraint with no bounds".into()));
        }
        for b in [c.lower, c.upper].into_iter().flatten() {
            if !b.is_finite() {
                return Err(Error::InvalidArgument("constraint bounds must be finite".into()));
            }
        }
        if let (Some(l), Some(u)) = (c.lower, c.upper) {
            if l > u {
                return Err(Error::InvalidArgument(format!(
                    "constraint bounds reversed: {l} > {u}"
                )));
            }
        }
    }

    // Rows in `a·z <= b` form over split variables z = (x+, x-).
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in &lp.constraints {
        if let Some(u) = c.upper {
            let mut a = Vec::with_capacity(2 * n);
            a.extend(c.coeffs.iter().copied());
            a.extend(c.coeffs.iter().map(|v| -v));
            rows.push((a, u));
        }
        if let Some(l) = c.lower {
            let mut a = Vec::with_capacity(2 * n);
            a.extend(c.coeffs.iter().map(|v| -v));
            a.extend(c.coeffs.iter().copied());
            rows.push((a, -l));
        }
    }

    let m = rows.len();
    let nv = 2 * n; // split structural variables
    let total = nv + m + m; // + slacks + artificials
    // Tableau rows 0..m are constraints; row m is the phase objective.
    let mut t = vec![vec![0.0f64; total + 1]; m + 1];
    for (r, (a, b)) in rows.iter().enumerate() {
        let flip = if *b < 0.0 { -1.0 } else { 1.0 };
        for (j, &v) in a.iter().enumerate() {
            t[r][j] = flip * v;
        }
        t[r][nv + r] = flip; // slack
        t[r][nv + m + r] = 1.0; // artificial
        t[r][total] = flip * b;
    }
    let mut basis: Vec<usize> = (0..m).map(|r| nv + m + r).collect();

    // Phase 1: minimize the sum of artificials. Cost row = -(sum of
    // constraint rows) restricted to non-artificial columns.
    for j in 0..=total {
        let mut s = 0.0;
        for r in 0..m {
            s += t[r][j];
        }
        t[m][j] = -s;
    }
    for r in 0..m {
        let art = nv + m + r;
        t[m][art] = 0.0;
    }

    pivot_loop(&mut t, &mut basis, total, |_| true)?;
    let phase1 = -t[m][total];
    if phase1 > FEAS_EPS {
        return Ok(LpSolution::Infeasible);
    }

    // Drive leftover basic artificials out of the basis where possible.
    for r in 0..m {
        if basis[r] >= nv + m {
            if let Some(j) = (0..nv + m).find(|&j| t[r][j].abs() > PIVOT_EPS) {
                pivot(&mut t, &mut basis, r, j);
            }
        }
    }

    // Phase 2: maximize the original objective = minimize its negation.
    for j in 0..=total {
        t[m][j] = 0.0;
    }
    for (j, &c) in lp.objective.iter().enumerate() {
        t[m][j] = -c;
        t[m][n + j] = c;
    }
    for r in 0..m {
        let b = basis[r];
        let coef = t[m][b];
        if coef != 0.0 {
            for j in 0..=total {
                t[m][j] -= coef * t[r][j];
            }
        }
    }
    let artificial_start = nv + m;
    let bounded = pivot_loop(&mut t, &mut basis, total, |j| j < artificial_start)?;
    if !bounded {
        return Ok(LpSolution::Unbounded);
    }

    let mut point = vec![0.0f64; n];
    for (r, &b) in basis.iter().enumerate() {
        if b < n {
            point[b] += t[r][total];
        } else if b < nv {
            point[b - n] -= t[r][total];
        }
    }
    let value: f64 = lp
        .objective
        .iter()
        .zip(&point)
        .map(|(c, x)| c * x)
        .sum();

    // Certificate check by substitution.
    for c in &lp.constraints {
        let ax: f64 = c.coeffs.iter().zip(&point).map(|(a, x)| a * x).sum();
        let scale = 1.0f64.max(ax.abs());
        if let Some(u) = c.upper {
            if ax > u + VERIFY_EPS * scale.max(u.abs()) {
                return Err(Error::Internal(format!(
                    "simplex certificate violates upper bound: {ax} > {u}"
                )));
            }
        }
        if let Some(l) = c.lower {
            if ax < l - VERIFY_EPS * scale.max(l.abs()) {
                return Err(Error::Internal(format!(
                    "simplex certificate violates lower bound: {ax} < {l}"
                )));
            }
        }
    }
    let tableau_value = t[m][total];
    if (tableau_value - value).abs() > 1e-7 * 1.0f64.max(value.abs()) {
        return Err(Error::Internal(format!(
            "simplex objective mismatch: tableau {tableau_value}, substitution {value}"
        )));
    }

    Ok(LpSolution::Optimal { value, point })
}

/// Run Bland-rule pivots until optimal; returns false when the phase
/// detects an unbounded direction.
fn pivot_loop(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    total: usize,
    allowed: impl Fn(usize) -> bool,
) -> Result<bool> {
    let m = basis.len();
    for _ in 0..MAX_ITERS {
        // Entering: smallest-index allowed column with a negative reduced
        // cost (we minimize the cost row).
        let mut entering = None;
        for j in 0..total {
            if allowed(j) && t[m][j] < -PIVOT_EPS {
                entering = Some(j);
                break;
            }
        }
        let Some(col) = entering else {
            return Ok(true);
        };
        // Leaving: minimum ratio, ties broken by smallest basic variable.
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            if t[r][col] > PIVOT_EPS {
                let ratio = t[r][total] / t[r][col];
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((br, best)) => {
                        if ratio < best - 1e-12
                            || (ratio <= best + 1e-12 && basis[r] < basis[br])
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let Some((row, _)) = leave else {
            return Ok(false);
        };
        pivot(t, basis, row, col);
    }
    Err(Error::Internal("simplex iteration limit exceeded".into()))
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let total = t[row].len() - 1;
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[row].clone();
    for (r, tr) in t.iter_mut().enumerate() {
        if r == row {
            continue;
        }
        let factor = tr[col];
        if factor != 0.0 {
            for j in 0..=total {
                tr[j] -= factor * pivot_row[j];
            }
        }
    }
    basis[row] = col;
}
