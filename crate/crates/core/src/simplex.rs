//! Dense two-phase simplex method with Bland's anti-cycling rule, for the
//! small linear programs that arise from time sharing among hover points.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `max c^T x` subject to the rows and `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const EPS: f64 = 1e-11;

struct Tableau {
    /// `rows x (cols + 1)`, last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

enum Status {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.a[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Maximizes `cost` over the current basis; columns with `allowed[j] ==
    /// false` never enter.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Status {
        let m = self.a.len();
        let max_iter = 50 * (m + self.cols) + 1000;
        for _ in 0..max_iter {
            // reduced costs; Bland: first improving column
            let entering = (0..self.cols).find(|&j| {
                if !allowed[j] || self.basis.contains(&j) {
                    return false;
                }
                let z: f64 = (0..m).map(|i| cost[self.basis[i]] * self.a[i][j]).sum();
                z - cost[j] < -EPS
            });
            let Some(c) = entering else {
                return Status::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let aic = self.a[i][c];
                if aic > EPS {
                    let ratio = self.rhs(i) / aic;
                    let better = match leave {
                        None => true,
                        Some((l, best)) => {
                            ratio < best - EPS
                                || (ratio <= best + EPS && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                None => return Status::Unbounded,
                Some((r, _)) => self.pivot(r, c),
            }
        }
        // Bland's rule terminates; reaching here means round-off stalled the
        // pivots, and the current basis is the best available
        Status::Optimal
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    let n = lp.objective.len();
    if lp.rows.iter().any(|r| r.coeffs.len() != n) {
        return Err(Error::InvalidArgument(
            "every constraint row needs one coefficient per variable".into(),
        ));
    }
    if lp
        .rows
        .iter()
        .any(|r| !r.rhs.is_finite() || r.coeffs.iter().any(|c| !c.is_finite()))
        || lp.objective.iter().any(|c| !c.is_finite())
    {
        return Err(Error::InvalidArgument("non-finite LP data".into()));
    }
    let rows: Vec<Row> = lp
        .rows
        .iter()
        .map(|r| {
            if r.rhs < 0.0 {
                Row {
                    coeffs: r.coeffs.iter().map(|c| -c).collect(),
                    relation: match r.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    },
                    rhs: -r.rhs,
                }
            } else {
                r.clone()
            }
        })
        .collect();
    let m = rows.len();
    let slacks = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    let artificials = rows.iter().filter(|r| r.relation != Relation::Le).count();
    let cols = n + slacks + artificials;
    let mut a = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    let mut is_artificial = vec![false; cols];
    let (mut s, mut art) = (n, n + slacks);
    for (i, r) in rows.iter().enumerate() {
        a[i][..n].copy_from_slice(&r.coeffs);
        a[i][cols] = r.rhs;
        match r.relation {
            Relation::Le => {
                a[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Relation::Ge => {
                a[i][s] = -1.0;
                s += 1;
                a[i][art] = 1.0;
                basis[i] = art;
                is_artificial[art] = true;
                art += 1;
            }
            Relation::Eq => {
                a[i][art] = 1.0;
                basis[i] = art;
                is_artificial[art] = true;
                art += 1;
            }
        }
    }
    let mut tab = Tableau { a, basis, cols };

    if artificials > 0 {
        let cost: Vec<f64> = is_artificial.iter().map(|&b| if b { -1.0 } else { 0.0 }).collect();
        let all = vec![true; cols];
        tab.optimize(&cost, &all);
        let infeas: f64 = (0..m)
            .filter(|&i| is_artificial[tab.basis[i]])
            .map(|i| tab.rhs(i))
            .sum();
        let scale = 1.0 + rows.iter().map(|r| r.rhs).fold(0.0, f64::max);
        if infeas > 1e-9 * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // drive zero-level artificials out of the basis where possible
        for i in 0..m {
            if is_artificial[tab.basis[i]] {
                if let Some(c) = (0..cols).find(|&j| !is_artificial[j] && tab.a[i][j].abs() > 1e-9) {
                    tab.pivot(i, c);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    let allowed: Vec<bool> = is_artificial.iter().map(|&b| !b).collect();
    match tab.optimize(&cost, &allowed) {
        Status::Unbounded => Ok(LpOutcome::Unbounded),
        Status::Optimal => {
            let mut x = vec![0.0; n];
            for (i, &b) in tab.basis.iter().enumerate() {
                if b < n {
                    x[b] = tab.rhs(i).max(0.0);
                }
            }
            let value = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
            Ok(LpOutcome::Optimal { x, value })
        }
    }
}
