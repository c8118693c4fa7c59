//! Log-barrier interior-point method for maximizing a linear objective over
//! an intersection of concave inequality constraints `f_i(z) > 0`.
//!
//! Variables are split into *local* ones, whose Hessian couplings are
//! confined to a band, and a handful of *global* ones (epigraph variables).
//! Constraints whose gradient spans more than the band (sums over all slots)
//! enter the Newton system as rank-one updates, which are eliminated through
//! a small dense Schur complement. This keeps a Newton step linear in the
//! number of local variables.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub locals: usize,
    pub globals: usize,
    /// Half-bandwidth of the Hessian restricted to local variables, counting
    /// only constraints whose local support fits in the band.
    pub bandwidth: usize,
}

impl Layout {
    pub fn total(&self) -> usize {
        self.locals + self.globals
    }
}

/// Sparse first and second derivatives of one constraint.
#[derive(Debug, Default, Clone)]
pub struct Derivatives {
    /// Gradient entries `(index, value)`; indices must be distinct.
    pub grad: Vec<(usize, f64)>,
    /// Hessian entries `(i, j, value)`, each unordered pair listed once.
    pub hess: Vec<(usize, usize, f64)>,
}

impl Derivatives {
    pub fn clear(&mut self) {
        self.grad.clear();
        self.hess.clear();
    }
}

/// A convex program `max c^T z  s.t.  f_i(z) > 0` with concave `f_i`.
pub trait ConvexProgram {
    fn layout(&self) -> Layout;
    /// Dense objective coefficients over all variables.
    fn objective(&self) -> Vec<f64>;
    fn num_constraints(&self) -> usize;
    /// Writes every constraint value into `out`. Points outside a
    /// constraint's domain must yield a non-positive or NaN value.
    fn values(&self, z: &[f64], out: &mut [f64]);
    fn derivatives(&self, i: usize, z: &[f64], out: &mut Derivatives);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    pub initial_t: f64,
    /// Factor by which `t` grows between centering steps.
    pub growth: f64,
    /// Stop once the duality measure `m / t` falls below this.
    pub gap_tol: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            initial_t: 1.0,
            growth: 5.0,
            gap_tol: 1e-8,
            newton_tol: 1e-10,
            max_newton: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    /// Duality measure `m / t` at termination.
    pub gap: f64,
    pub newton_steps: usize,
    pub converged: bool,
}

/// Maximizes `prog` starting from `z0`. A phase-I problem is solved first
/// when `z0` is not strictly feasible.
pub fn maximize<P: ConvexProgram + ?Sized>(
    prog: &P,
    z0: &[f64],
    opts: &BarrierOptions,
) -> Result<BarrierSolution> {
    let layout = prog.layout();
    if z0.len() != layout.total() {
        return Err(Error::InvalidArgument(format!(
            "starting point has {} entries, program has {} variables",
            z0.len(),
            layout.total()
        )));
    }
    let mut vals = vec![0.0; prog.num_constraints()];
    prog.values(z0, &mut vals);
    let start = if vals.iter().all(|&v| v > 0.0) {
        z0.to_vec()
    } else {
        phase_one(prog, z0, &vals, opts)?
    };
    let c = prog.objective();
    let run = centering_path(prog, &c, start, opts, |_| false)?;
    let objective = dot(&c, &run.z);
    Ok(BarrierSolution {
        objective,
        ..run
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Finds a strictly feasible point by maximizing a common slack `s` with
/// `f_i(z) - s > 0`. Global variables are boxed around their starting values
/// so that free epigraph variables cannot run away.
fn phase_one<P: ConvexProgram + ?Sized>(
    prog: &P,
    z0: &[f64],
    vals: &[f64],
    opts: &BarrierOptions,
) -> Result<Vec<f64>> {
    let worst = vals
        .iter()
        .map(|&v| if v.is_nan() { f64::NEG_INFINITY } else { v })
        .fold(f64::INFINITY, f64::min);
    if !worst.is_finite() {
        return Err(Error::Solver(
            "starting point lies outside the constraint domain".into(),
        ));
    }
    let aux = PhaseOne::new(prog, z0);
    let mut z = z0.to_vec();
    z.push(worst - 1.0);
    let slack = aux.slack_index();
    let c = aux.objective();
    let run = centering_path(&aux, &c, z, opts, |z| z[slack] > 0.0)?;
    if run.z[slack] > 0.0 {
        Ok(run.z[..slack].to_vec())
    } else {
        Err(Error::Solver(format!(
            "no strictly feasible point (best common slack {:.3e})",
            run.z[slack]
        )))
    }
}

struct PhaseOne<'a, P: ?Sized> {
    inner: &'a P,
    layout: Layout,
    /// Box half-widths for the original global variables.
    global_box: Vec<(f64, f64)>,
}

impl<'a, P: ConvexProgram + ?Sized> PhaseOne<'a, P> {
    fn new(inner: &'a P, z0: &[f64]) -> Self {
        let l = inner.layout();
        let global_box = z0[l.locals..]
            .iter()
            .map(|&g| {
                let w = 1e3 * (1.0 + g.abs());
                (g - w, g + w)
            })
            .collect();
        Self {
            inner,
            layout: Layout {
                globals: l.globals + 1,
                ..l
            },
            global_box,
        }
    }

    fn slack_index(&self) -> usize {
        self.layout.total() - 1
    }
}

impl<P: ConvexProgram + ?Sized> ConvexProgram for PhaseOne<'_, P> {
    fn layout(&self) -> Layout {
        self.layout
    }

    fn objective(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.layout.total()];
        c[self.slack_index()] = 1.0;
        c
    }

    fn num_constraints(&self) -> usize {
        // inner constraints, the slack cap, and two box sides per global
        self.inner.num_constraints() + 1 + 2 * self.global_box.len()
    }

    fn values(&self, z: &[f64], out: &mut [f64]) {
        let m = self.inner.num_constraints();
        let s = z[self.slack_index()];
        self.inner.values(&z[..self.slack_index()], &mut out[..m]);
        for v in &mut out[..m] {
            *v -= s;
        }
        out[m] = 1.0 - s;
        let g0 = self.inner.layout().locals;
        for (j, &(lo, hi)) in self.global_box.iter().enumerate() {
            out[m + 1 + 2 * j] = z[g0 + j] - lo;
            out[m + 2 + 2 * j] = hi - z[g0 + j];
        }
    }

    fn derivatives(&self, i: usize, z: &[f64], out: &mut Derivatives) {
        out.clear();
        let m = self.inner.num_constraints();
        let s = self.slack_index();
        if i < m {
            self.inner.derivatives(i, &z[..s], out);
            out.grad.push((s, -1.0));
        } else if i == m {
            out.grad.push((s, -1.0));
        } else {
            let j = (i - m - 1) / 2;
            let sign = if (i - m - 1).is_multiple_of(2) { 1.0 } else { -1.0 };
            out.grad.push((self.inner.layout().locals + j, sign));
        }
    }
}

struct Workspace {
    band: BandMatrix,
    /// Local-global block, column-major (`locals x globals`).
    cross: Vec<f64>,
    /// Global-global block, row-major.
    glob: Vec<f64>,
    /// Rank-one terms: dense gradient and weight `1 / f^2`.
    low_rank: Vec<(Vec<f64>, f64)>,
    grad: Vec<f64>,
    derivs: Derivatives,
}

impl Workspace {
    fn new(l: Layout) -> Self {
        Self {
            band: BandMatrix::zeros(l.locals, l.bandwidth),
            cross: vec![0.0; l.locals * l.globals],
            glob: vec![0.0; l.globals * l.globals],
            low_rank: Vec::new(),
            grad: vec![0.0; l.total()],
            derivs: Derivatives::default(),
        }
    }

    fn reset(&mut self) {
        self.band.clear();
        self.cross.iter_mut().for_each(|v| *v = 0.0);
        self.glob.iter_mut().for_each(|v| *v = 0.0);
        self.low_rank.clear();
        self.grad.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn add_hess(&mut self, l: &Layout, a: usize, b: usize, v: f64) {
        let n = l.locals;
        match (a < n, b < n) {
            (true, true) => self.band.add(a, b, v),
            (true, false) => self.cross[(b - n) * n + a] += v,
            (false, true) => self.cross[(a - n) * n + b] += v,
            (false, false) => {
                let p = l.globals;
                let (i, j) = (a - n, b - n);
                self.glob[i * p + j] += v;
                if i != j {
                    self.glob[j * p + i] += v;
                }
            }
        }
    }
}

/// Gradient and Hessian of `-t c^T z - sum log f_i(z)`.
fn assemble<P: ConvexProgram + ?Sized>(
    prog: &P,
    l: &Layout,
    c: &[f64],
    t: f64,
    z: &[f64],
    vals: &[f64],
    ws: &mut Workspace,
) {
    ws.reset();
    for (g, &ci) in ws.grad.iter_mut().zip(c) {
        *g = -t * ci;
    }
    let mut derivs = std::mem::take(&mut ws.derivs);
    for (i, &f) in vals.iter().enumerate() {
        prog.derivatives(i, z, &mut derivs);
        let inv = 1.0 / f;
        for &(j, g) in &derivs.grad {
            ws.grad[j] -= g * inv;
        }
        for &(a, b, h) in &derivs.hess {
            ws.add_hess(l, a, b, -h * inv);
        }
        let (mut lo, mut hi) = (usize::MAX, 0);
        for &(j, _) in &derivs.grad {
            if j < l.locals {
                lo = lo.min(j);
                hi = hi.max(j);
            }
        }
        let banded = lo == usize::MAX || hi - lo <= l.bandwidth;
        let w = inv * inv;
        if banded {
            let g = &derivs.grad;
            for p in 0..g.len() {
                for q in p..g.len() {
                    ws.add_hess(l, g[p].0, g[q].0, w * g[p].1 * g[q].1);
                }
            }
        } else {
            let mut u = vec![0.0; l.total()];
            for &(j, g) in &derivs.grad {
                u[j] = g;
            }
            ws.low_rank.push((u, w));
        }
    }
    ws.derivs = derivs;
}

/// Solves `H d = -grad` for the assembled Hessian.
fn newton_direction(l: &Layout, ws: &mut Workspace) -> Result<Vec<f64>> {
    let n = l.locals;
    let p = l.globals;
    let m = ws.low_rank.len();
    let rhs: Vec<f64> = ws.grad.iter().map(|g| -g).collect();

    // factor the banded block, regularizing if needed
    let base = ws.band.clone();
    let scale = base.max_diagonal().max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    let mut factor = base.clone();
    let mut attempts = 0;
    while n > 0 && !factor.cholesky_in_place() {
        attempts += 1;
        if attempts > 12 {
            return Err(Error::Solver("local Hessian block is not positive definite".into()));
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 100.0 };
        factor = base.clone();
        factor.add_diagonal(ridge);
    }
    let solve = |v: &mut Vec<f64>| {
        if n > 0 {
            factor.cholesky_solve(v)
        }
    };

    let mut y_r = rhs[..n].to_vec();
    solve(&mut y_r);
    if p + m == 0 {
        return Ok(y_r);
    }
    let y_b: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let mut v = ws.cross[j * n..(j + 1) * n].to_vec();
            solve(&mut v);
            v
        })
        .collect();
    let y_u: Vec<Vec<f64>> = ws
        .low_rank
        .iter()
        .map(|(u, _)| {
            let mut v = u[..n].to_vec();
            solve(&mut v);
            v
        })
        .collect();

    let k = p + m;
    let mut s = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    let col = |j: usize| &ws.cross[j * n..(j + 1) * n];
    for i in 0..p {
        for j in 0..p {
            s[(i, j)] = ws.glob[i * p + j] - dot(col(i), &y_b[j]);
        }
        for (r, (u, _)) in ws.low_rank.iter().enumerate() {
            let v = u[n + i] - dot(col(i), &y_u[r]);
            s[(i, p + r)] = v;
            s[(p + r, i)] = v;
        }
        b[i] = rhs[n + i] - dot(col(i), &y_r);
    }
    for (r, (u, w)) in ws.low_rank.iter().enumerate() {
        for (q, (_, _)) in ws.low_rank.iter().enumerate().skip(r) {
            let v = -dot(&u[..n], &y_u[q]);
            s[(p + r, p + q)] = v;
            s[(p + q, p + r)] = v;
        }
        s[(p + r, p + r)] -= 1.0 / w;
        b[p + r] = -dot(&u[..n], &y_r);
    }
    let sol = s
        .full_piv_lu()
        .solve(&b)
        .ok_or_else(|| Error::Solver("reduced Newton system is singular".into()))?;

    let mut d = vec![0.0; n + p];
    for i in 0..n {
        let mut v = y_r[i];
        for j in 0..p {
            v -= y_b[j][i] * sol[j];
        }
        for r in 0..m {
            v -= y_u[r][i] * sol[p + r];
        }
        d[i] = v;
    }
    for j in 0..p {
        d[n + j] = sol[j];
    }
    Ok(d)
}

fn barrier_value(c: &[f64], t: f64, z: &[f64], vals: &[f64]) -> f64 {
    -t * dot(c, z) - vals.iter().map(|v| v.ln()).sum::<f64>()
}

fn centering_path<P: ConvexProgram + ?Sized>(
    prog: &P,
    c: &[f64],
    mut z: Vec<f64>,
    opts: &BarrierOptions,
    stop: impl Fn(&[f64]) -> bool,
) -> Result<BarrierSolution> {
    let l = prog.layout();
    let m = prog.num_constraints() as f64;
    let mut ws = Workspace::new(l);
    let mut vals = vec![0.0; prog.num_constraints()];
    let mut trial_vals = vals.clone();
    let mut trial = z.clone();
    let mut t = opts.initial_t;
    let mut steps = 0;
    prog.values(&z, &mut vals);
    loop {
        // centering
        let mut inner = 0;
        loop {
            assemble(prog, &l, c, t, &z, &vals, &mut ws);
            let d = newton_direction(&l, &mut ws)?;
            let slope = dot(&ws.grad, &d);
            if !slope.is_finite() {
                return Err(Error::Solver("non-finite Newton direction".into()));
            }
            if -slope / 2.0 <= opts.newton_tol {
                break;
            }
            let phi0 = barrier_value(c, t, &z, &vals);
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                for ((zt, zi), di) in trial.iter_mut().zip(&z).zip(&d) {
                    *zt = zi + step * di;
                }
                prog.values(&trial, &mut trial_vals);
                if trial_vals.iter().all(|&v| v > 0.0)
                    && barrier_value(c, t, &trial, &trial_vals) <= phi0 + 0.25 * step * slope
                {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            steps += 1;
            inner += 1;
            if !accepted {
                // no measurable progress at this t; treat as centered
                break;
            }
            std::mem::swap(&mut z, &mut trial);
            std::mem::swap(&mut vals, &mut trial_vals);
            if stop(&z) {
                return Ok(BarrierSolution {
                    z,
                    objective: f64::NAN,
                    gap: m / t,
                    newton_steps: steps,
                    converged: true,
                });
            }
            if inner >= opts.max_newton {
                break;
            }
        }
        let gap = m / t;
        if gap < opts.gap_tol {
            return Ok(BarrierSolution {
                z,
                objective: f64::NAN,
                gap,
                newton_steps: steps,
                converged: true,
            });
        }
        if t > 1e30 {
            return Ok(BarrierSolution {
                z,
                objective: f64::NAN,
                gap,
                newton_steps: steps,
                converged: false,
            });
        }
        t *= opts.growth;
    }
}
