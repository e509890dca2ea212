//! Dense two-phase primal simplex over non-negative variables.
//!
//! Small and self-contained: the degree-design LPs have a few hundred rows
//! and columns, all dense, so a tableau method is the right tool. Entering
//! variables follow Dantzig's rule with a permanent switch to Bland's rule
//! after a stall, which keeps the heavily degenerate design LPs from cycling.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint<S: Scalar> {
    pub coeffs: Vec<S>,
    pub relation: Relation,
    pub rhs: S,
}

impl<S: Scalar> Constraint<S> {
    pub fn new(coeffs: Vec<S>, relation: Relation, rhs: S) -> Self {
        Self {
            coeffs,
            relation,
            rhs,
        }
    }
}

/// `maximize objective . x` subject to the constraints and `x >= 0`.
#[derive(Clone, Debug)]
pub struct LpProblem<S: Scalar> {
    pub objective: Vec<S>,
    pub constraints: Vec<Constraint<S>>,
}

#[derive(Clone, Debug)]
pub enum LpSolution<S: Scalar> {
    Optimal { x: Vec<S>, value: S },
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error)]
pub enum SimplexError {
    #[error("simplex iteration limit {0} exceeded")]
    IterationLimit(usize),
    #[error("constraint {index} has {got} coefficients, expected {expected}")]
    BadConstraint {
        index: usize,
        got: usize,
        expected: usize,
    },
}

struct Tableau<S: Scalar> {
    rows: Vec<Vec<S>>, // m rows, each ncols wide; last entry is rhs
    cost: Vec<S>,      // reduced-cost row (maximize), last entry is -objective value
    basis: Vec<usize>,
    ncols: usize, // structural + slack + artificial (exclusive of rhs)
    banned: Vec<bool>,
    eps: S,
}

impl<S: Scalar> Tableau<S> {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.rows[row][col];
        let inv = S::one() / piv;
        for v in self.rows[row].iter_mut() {
            *v *= inv;
        }
        let pivot_row = self.rows[row].clone();
        for (r, other) in self.rows.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let factor = other[col];
            if factor != S::zero() {
                for (o, &p) in other.iter_mut().zip(pivot_row.iter()) {
                    *o -= factor * p;
                }
            }
        }
        let factor = self.cost[col];
        if factor != S::zero() {
            for (o, &p) in self.cost.iter_mut().zip(pivot_row.iter()) {
                *o -= factor * p;
            }
        }
        self.basis[row] = col;
    }

    /// Runs primal simplex until no improving column remains.
    fn optimize(&mut self, max_iter: usize) -> Result<bool, SimplexError> {
        let m = self.rows.len();
        let stall_limit = 4 * (m + self.ncols);
        let mut stall = 0usize;
        let mut bland = false;
        let mut last_value = -self.cost[self.ncols];
        for _ in 0..max_iter {
            let mut entering = None;
            if bland {
                for j in 0..self.ncols {
                    if !self.banned[j] && self.cost[j] > self.eps {
                        entering = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = self.eps;
                for j in 0..self.ncols {
                    if !self.banned[j] && self.cost[j] > best {
                        best = self.cost[j];
                        entering = Some(j);
                    }
                }
            }
            let Some(col) = entering else {
                return Ok(true); // optimal
            };
            // ratio test with a column-relative pivot tolerance; among tied
            // minimal ratios prefer the largest pivot (numerical stability)
            // or, in Bland mode, the smallest basis index (anti-cycling)
            let col_scale = (0..m)
                .map(|r| self.rows[r][col].abs())
                .fold(S::one(), |a, b| if b > a { b } else { a });
            let piv_tol = self.eps * col_scale;
            let mut min_ratio: Option<S> = None;
            for r in 0..m {
                let a = self.rows[r][col];
                if a > piv_tol {
                    let ratio = self.rows[r][self.ncols] / a;
                    if min_ratio.is_none_or(|m| ratio < m) {
                        min_ratio = Some(ratio);
                    }
                }
            }
            let Some(min_ratio) = min_ratio else {
                return Ok(false); // unbounded
            };
            let tie = min_ratio + self.eps * (S::one() + min_ratio.abs());
            let mut leaving: Option<usize> = None;
            for r in 0..m {
                let a = self.rows[r][col];
                if a > piv_tol && self.rows[r][self.ncols] / a <= tie {
                    leaving = Some(match leaving {
                        None => r,
                        Some(lr) => {
                            if bland {
                                if self.basis[r] < self.basis[lr] {
                                    r
                                } else {
                                    lr
                                }
                            } else if a > self.rows[lr][col] {
                                r
                            } else {
                                lr
                            }
                        }
                    });
                }
            }
            let row = leaving.expect("a minimal ratio row exists");
            self.pivot(row, col);
            let value = -self.cost[self.ncols];
            if value > last_value + self.eps {
                stall = 0;
                last_value = value;
            } else {
                stall += 1;
                if stall > stall_limit {
                    bland = true;
                }
            }
        }
        Err(SimplexError::IterationLimit(max_iter))
    }
}

/// Solves the linear program with a two-phase dense simplex.
pub fn solve<S: Scalar>(lp: &LpProblem<S>) -> Result<LpSolution<S>, SimplexError> {
    let n = lp.objective.len();
    let m = lp.constraints.len();
    for (index, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(SimplexError::BadConstraint {
                index,
                got: c.coeffs.len(),
                expected: n,
            });
        }
    }
    let eps = S::from_f(1e-9);

    // Count auxiliary columns after normalizing each row to rhs >= 0.
    let mut n_slack = 0usize;
    let mut n_art = 0usize;
    let mut normalized = Vec::with_capacity(m);
    for c in &lp.constraints {
        // a >= row with zero rhs flips to <= so its slack can start basic;
        // this keeps artificials out of heavily degenerate problems
        let flip = c.rhs < S::zero() || (c.relation == Relation::Ge && c.rhs == S::zero());
        let rel = match (c.relation, flip) {
            (Relation::Le, false) | (Relation::Ge, true) => Relation::Le,
            (Relation::Ge, false) | (Relation::Le, true) => Relation::Ge,
            (Relation::Eq, _) => Relation::Eq,
        };
        match rel {
            Relation::Le => n_slack += 1,
            Relation::Ge => {
                n_slack += 1;
                n_art += 1;
            }
            Relation::Eq => n_art += 1,
        }
        normalized.push((rel, flip));
    }
    let ncols = n + n_slack + n_art;
    let mut rows = vec![vec![S::zero(); ncols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut slack_at = n;
    let mut art_at = n + n_slack;
    let mut art_cols = Vec::with_capacity(n_art);
    for (r, c) in lp.constraints.iter().enumerate() {
        let (rel, flip) = normalized[r];
        let sign = if flip { -S::one() } else { S::one() };
        for (j, &a) in c.coeffs.iter().enumerate() {
            rows[r][j] = sign * a;
        }
        rows[r][ncols] = sign * c.rhs;
        match rel {
            Relation::Le => {
                rows[r][slack_at] = S::one();
                basis[r] = slack_at;
                slack_at += 1;
            }
            Relation::Ge => {
                rows[r][slack_at] = -S::one();
                slack_at += 1;
                rows[r][art_at] = S::one();
                basis[r] = art_at;
                art_cols.push(art_at);
                art_at += 1;
            }
            Relation::Eq => {
                rows[r][art_at] = S::one();
                basis[r] = art_at;
                art_cols.push(art_at);
                art_at += 1;
            }
        }
    }

    let max_iter = 10_000usize.max(60 * (m + ncols));
    let mut tab = Tableau {
        rows,
        cost: vec![S::zero(); ncols + 1],
        basis,
        ncols,
        banned: vec![false; ncols],
        eps,
    };

    // Phase 1: maximize -(sum of artificials).
    if n_art > 0 {
        for &j in &art_cols {
            tab.cost[j] = -S::one();
        }
        // price out the basic artificials
        for r in 0..m {
            if art_cols.contains(&tab.basis[r]) {
                let row = tab.rows[r].clone();
                for (cst, &v) in tab.cost.iter_mut().zip(row.iter()) {
                    *cst += v;
                }
            }
        }
        if !tab.optimize(max_iter)? {
            // phase-1 objective is bounded by zero, so this cannot trigger
            return Ok(LpSolution::Infeasible);
        }
        let infeasibility = -(-tab.cost[ncols]);
        if infeasibility.abs() > S::from_f(1e-7) {
            return Ok(LpSolution::Infeasible);
        }
        // drive remaining artificials out of the basis where possible
        for r in 0..m {
            if art_cols.contains(&tab.basis[r]) {
                let col = (0..n + n_slack).find(|&j| tab.rows[r][j].abs() > eps);
                if let Some(col) = col {
                    tab.pivot(r, col);
                }
            }
        }
        for &j in &art_cols {
            tab.banned[j] = true;
        }
    }

    // Phase 2: rebuild the reduced costs for the true objective.
    for v in tab.cost.iter_mut() {
        *v = S::zero();
    }
    for (j, &c) in lp.objective.iter().enumerate() {
        tab.cost[j] = c;
    }
    for r in 0..m {
        let b = tab.basis[r];
        let cb = if b < n { lp.objective[b] } else { S::zero() };
        if cb != S::zero() {
            let row = tab.rows[r].clone();
            for (cst, &v) in tab.cost.iter_mut().zip(row.iter()) {
                *cst -= cb * v;
            }
        }
    }
    if !tab.optimize(max_iter)? {
        return Ok(LpSolution::Unbounded);
    }

    let mut x = vec![S::zero(); n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rows[r][ncols];
        }
    }
    let value = x
        .iter()
        .zip(lp.objective.iter())
        .map(|(&xi, &ci)| xi * ci)
        .sum();
    Ok(LpSolution::Optimal { x, value })
}
