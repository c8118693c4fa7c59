//! Global solution of the relaxed problem, in which the UAV may hover
//! anywhere for any fraction of the period with no travel cost.
//!
//! The Lagrange dual decomposes over time instants. For fixed multipliers
//! the per-instant problem is either pure power transfer from the maximizer
//! of a weighted gain sum, or pure uplink of one user with the UAV directly
//! above it at a closed-form power. The dual is minimized with the ellipsoid
//! method and the primal solution is recovered by a small time-sharing LP.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Position2D, Scenario, Schedule, Slot};
use crate::neldermead;
use crate::simplex::{self, LinearProgram, LpOutcome, Relation, Row};

/// Smallest admissible energy price; keeps the closed-form uplink power
/// finite.
pub const MU_FLOOR: f64 = 1e-9;

/// Relative tolerance for grid points to count as near-maximizers of the
/// weighted gain sum during dual iterations.
const CANDIDATE_TOL: f64 = 1e-6;

/// Looser tolerance used once at the dual optimum, where approximate
/// multipliers leave the true maximizers slightly unbalanced.
const FINAL_CANDIDATE_TOL: f64 = 1e-3;

const REFINE_XTOL: f64 = 1e-4;

/// Lagrange multipliers: rate weights `lambda` on the simplex and energy
/// prices `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVariables {
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

impl DualVariables {
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        if lambda.len() != mu.len() || lambda.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "need one rate weight and one energy price per user, got {} and {}",
                lambda.len(),
                mu.len()
            )));
        }
        if lambda.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::InvalidArgument("rate weights must be nonnegative".into()));
        }
        let sum: f64 = lambda.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "rate weights must sum to one, got {sum}"
            )));
        }
        if let Some(m) = mu.iter().find(|&&m| !(m >= MU_FLOOR) || !m.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "energy price {m} is below the floor {MU_FLOOR}"
            )));
        }
        Ok(Self { lambda, mu })
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Wpt,
    Wit(usize),
}

/// Solution of the per-instant problem for fixed multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub mode: Mode,
    pub position: Position2D,
    pub power: f64,
    /// `max(wpt_value, max_k wit_values[k])`.
    pub objective: f64,
    /// Maximum of the weighted gain sum over the search region.
    pub wpt_value: f64,
    /// Uplink objective of each user at its own location.
    pub wit_values: Vec<f64>,
}

/// Resolution of the exhaustive search for power-transfer locations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub step: f64,
}

impl GridSpec {
    pub fn new(step: f64) -> Result<Self> {
        if step.is_finite() && step > 0.0 {
            Ok(Self { step })
        } else {
            Err(Error::InvalidArgument(format!(
                "grid resolution must be positive, got {step}"
            )))
        }
    }

    /// `max(0.1 m, span / 400)` over the users' bounding box.
    pub fn for_scenario(scn: &Scenario) -> Self {
        let (lo, hi) = scn.bounding_box();
        let span = (hi.x - lo.x).max(hi.y - lo.y);
        Self {
            step: (span / 400.0).max(0.1),
        }
    }
}

/// Weighted sum of harvested powers `sum_k eta P mu_k h_k(q)`.
pub fn phi(scn: &Scenario, q: &Position2D, mu: &[f64]) -> f64 {
    let ep = scn.efficiency() * scn.power();
    mu.iter()
        .enumerate()
        .map(|(k, &m)| ep * m * scn.gain_unchecked(q, k))
        .sum()
}

/// Precomputed gains on a rectangular grid over the users' bounding box.
pub(crate) struct WptSearch<'a> {
    scn: &'a Scenario,
    lo: Position2D,
    hi: Position2D,
    xs: Vec<f64>,
    ys: Vec<f64>,
    step: f64,
    /// Point-major: `gains[p * K + k]`.
    gains: Vec<f64>,
}

fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let span = hi - lo;
    if span <= 0.0 {
        return vec![lo];
    }
    let n = (span / step).ceil() as usize + 1;
    (0..n)
        .map(|i| lo + span * i as f64 / (n - 1) as f64)
        .collect()
}

impl<'a> WptSearch<'a> {
    pub(crate) fn new(scn: &'a Scenario, grid: GridSpec) -> Self {
        let (lo, hi) = scn.bounding_box();
        let xs = axis(lo.x, hi.x, grid.step);
        let ys = axis(lo.y, hi.y, grid.step);
        let k_users = scn.num_users();
        let mut gains = vec![0.0; xs.len() * ys.len() * k_users];
        gains
            .par_chunks_mut(k_users)
            .enumerate()
            .for_each(|(p, out)| {
                let q = Position2D::new(xs[p % xs.len()], ys[p / xs.len()]);
                for (k, g) in out.iter_mut().enumerate() {
                    *g = scn.gain_unchecked(&q, k);
                }
            });
        Self {
            scn,
            lo,
            hi,
            xs,
            ys,
            step: grid.step,
            gains,
        }
    }

    fn point(&self, p: usize) -> Position2D {
        Position2D::new(self.xs[p % self.xs.len()], self.ys[p / self.xs.len()])
    }

    fn clamp(&self, q: Position2D) -> Position2D {
        Position2D::new(q.x.clamp(self.lo.x, self.hi.x), q.y.clamp(self.lo.y, self.hi.y))
    }

    /// Refined local maximizers of the weighted gain sum whose grid value is
    /// within `rel_tol` of the grid maximum, sorted lexicographically, with
    /// their values.
    pub(crate) fn search(&self, mu: &[f64], rel_tol: f64) -> Vec<(Position2D, f64)> {
        let k_users = self.scn.num_users();
        let ep = self.scn.efficiency() * self.scn.power();
        let weights: Vec<f64> = mu.iter().map(|m| ep * m).collect();
        let values: Vec<f64> = self
            .gains
            .par_chunks(k_users)
            .map(|g| g.iter().zip(&weights).map(|(a, b)| a * b).sum())
            .collect();
        let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let cut = best - rel_tol * best.abs();
        let candidates: Vec<usize> = (0..values.len()).filter(|&p| values[p] >= cut).collect();

        // group candidates closer than the merge radius
        let radius = 10.0 * self.step;
        let mut cluster = vec![usize::MAX; candidates.len()];
        let mut n_clusters = 0;
        for seed in 0..candidates.len() {
            if cluster[seed] != usize::MAX {
                continue;
            }
            cluster[seed] = n_clusters;
            let mut stack = vec![seed];
            while let Some(i) = stack.pop() {
                let qi = self.point(candidates[i]);
                for j in 0..candidates.len() {
                    if cluster[j] == usize::MAX && qi.dist(&self.point(candidates[j])) <= radius {
                        cluster[j] = n_clusters;
                        stack.push(j);
                    }
                }
            }
            n_clusters += 1;
        }

        let free_x = self.hi.x > self.lo.x;
        let free_y = self.hi.y > self.lo.y;
        let mut refined: Vec<(Position2D, f64)> = (0..n_clusters)
            .map(|c| {
                let start = (0..candidates.len())
                    .filter(|&i| cluster[i] == c)
                    .map(|i| candidates[i])
                    .max_by(|&a, &b| values[a].total_cmp(&values[b]).then(b.cmp(&a)))
                    .expect("clusters are non-empty");
                let q0 = self.point(start);
                let embed = |x: &[f64]| {
                    let mut it = x.iter();
                    let qx = if free_x { *it.next().unwrap() } else { q0.x };
                    let qy = if free_y { *it.next().unwrap() } else { q0.y };
                    self.clamp(Position2D::new(qx, qy))
                };
                let mut x0 = Vec::with_capacity(2);
                if free_x {
                    x0.push(q0.x);
                }
                if free_y {
                    x0.push(q0.y);
                }
                let (x, v) = neldermead::maximize(
                    |x| phi(self.scn, &embed(x), mu),
                    &x0,
                    self.step,
                    REFINE_XTOL,
                    2000,
                );
                let q = embed(&x);
                if v >= values[start] {
                    (q, phi(self.scn, &q, mu))
                } else {
                    (q0, values[start])
                }
            })
            .collect();

        // clusters that converged onto the same maximizer collapse into one
        refined.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut distinct: Vec<(Position2D, f64)> = Vec::new();
        for (q, v) in refined {
            if distinct.iter().all(|(p, _)| p.dist(&q) > 1e-3) {
                distinct.push((q, v));
            }
        }
        distinct.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.0.y.total_cmp(&b.0.y)));
        distinct
    }

    /// Lexicographically smallest among the maximizers of the weighted gain
    /// sum, with its value.
    pub(crate) fn argmax(&self, mu: &[f64]) -> (Position2D, f64) {
        let found = self.search(mu, CANDIDATE_TOL);
        let best = found.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
        *found
            .iter()
            .find(|(_, v)| *v >= best - 1e-12 * best.abs())
            .expect("search returns at least one point")
    }
}

fn check_mu(scn: &Scenario, mu: &[f64]) -> Result<()> {
    if mu.len() != scn.num_users() {
        return Err(Error::InvalidArgument(format!(
            "{} energy prices for {} users",
            mu.len(),
            scn.num_users()
        )));
    }
    if mu.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
        return Err(Error::InvalidArgument("energy prices must be nonnegative".into()));
    }
    Ok(())
}

/// All power-transfer locations maximizing the weighted gain sum for prices
/// `mu`, sorted lexicographically. Always returns at least one location.
pub fn search_wpt_locations(scn: &Scenario, mu: &[f64], grid: GridSpec) -> Result<Vec<Position2D>> {
    check_mu(scn, mu)?;
    GridSpec::new(grid.step)?;
    let search = WptSearch::new(scn, grid);
    Ok(search
        .search(mu, CANDIDATE_TOL)
        .into_iter()
        .map(|(q, _)| q)
        .collect())
}

/// Uplink power maximizing `lambda/T log2(1 + Q gamma / H^2) - mu Q`.
pub fn optimal_uplink_power(scn: &Scenario, lambda_k: f64, mu_k: f64) -> Result<f64> {
    if !(mu_k >= MU_FLOOR) {
        return Err(Error::InvalidArgument(format!(
            "energy price {mu_k} is below the floor {MU_FLOOR}"
        )));
    }
    if !(lambda_k >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rate weight must be nonnegative, got {lambda_k}"
        )));
    }
    let h2 = scn.altitude() * scn.altitude();
    let q = lambda_k / (scn.period() * mu_k * std::f64::consts::LN_2) - h2 / scn.gamma();
    Ok(q.max(0.0))
}

fn wit_value(scn: &Scenario, lambda_k: f64, mu_k: f64, power: f64) -> f64 {
    let h2 = scn.altitude() * scn.altitude();
    lambda_k / scn.period() * (power * scn.gamma() / h2).ln_1p() / std::f64::consts::LN_2 - mu_k * power
}

fn subproblem_with(scn: &Scenario, search: &WptSearch, duals: &DualVariables) -> SubproblemSolution {
    let (q, wpt_value) = search.argmax(duals.mu());
    let powers: Vec<f64> = duals
        .lambda()
        .iter()
        .zip(duals.mu())
        .map(|(&l, &m)| optimal_uplink_power(scn, l, m).expect("duals are validated"))
        .collect();
    let wit_values: Vec<f64> = (0..scn.num_users())
        .map(|k| wit_value(scn, duals.lambda()[k], duals.mu()[k], powers[k]))
        .collect();
    // ties favor power transfer, then the lowest user index
    let mut mode = Mode::Wpt;
    let mut objective = wpt_value;
    for (k, &v) in wit_values.iter().enumerate() {
        if v > objective {
            objective = v;
            mode = Mode::Wit(k);
        }
    }
    let (position, power) = match mode {
        Mode::Wpt => (q, 0.0),
        Mode::Wit(k) => (scn.users()[k], powers[k]),
    };
    SubproblemSolution {
        mode,
        position,
        power,
        objective,
        wpt_value,
        wit_values,
    }
}

pub fn solve_subproblem(scn: &Scenario, duals: &DualVariables) -> Result<SubproblemSolution> {
    if duals.mu().len() != scn.num_users() {
        return Err(Error::InvalidArgument("dual dimension does not match the user count".into()));
    }
    let search = WptSearch::new(scn, GridSpec::for_scenario(scn));
    Ok(subproblem_with(scn, &search, duals))
}

fn value_and_subgradient(scn: &Scenario, sub: &SubproblemSolution) -> (f64, Vec<f64>) {
    let k_users = scn.num_users();
    let t = scn.period();
    let mut s = vec![0.0; 2 * k_users];
    match sub.mode {
        Mode::Wpt => {
            let ep = scn.efficiency() * scn.power();
            for k in 0..k_users {
                s[k_users + k] = t * ep * scn.gain_unchecked(&sub.position, k);
            }
        }
        Mode::Wit(k) => {
            let h2 = scn.altitude() * scn.altitude();
            s[k] = (sub.power * scn.gamma() / h2).ln_1p() / std::f64::consts::LN_2;
            s[k_users + k] = -t * sub.power;
        }
    }
    (t * sub.objective, s)
}

/// Dual function value and a subgradient ordered as `(lambda_1..lambda_K,
/// mu_1..mu_K)`.
pub fn dual_value_and_subgradient(scn: &Scenario, duals: &DualVariables) -> Result<(f64, Vec<f64>)> {
    let sub = solve_subproblem(scn, duals)?;
    Ok(value_and_subgradient(scn, &sub))
}

fn equalization(sub: &SubproblemSolution) -> f64 {
    let scale = sub.wpt_value.abs().max(f64::MIN_POSITIVE);
    sub.wit_values
        .iter()
        .map(|v| (sub.wpt_value - v).abs())
        .fold(0.0, f64::max)
        / scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualOptions {
    /// Relative gap between the best dual value and the ellipsoid lower
    /// bound at which iteration stops. The location search limits the
    /// attainable accuracy to roughly `1e-7` on spread-out layouts; the
    /// default is tighter so that small symmetric instances resolve their
    /// locations to well below a millimeter.
    pub tol: f64,
    pub max_iters: usize,
    pub grid: Option<GridSpec>,
    /// Upper end of the initial price box, as a multiple of the price scale.
    pub price_spread: f64,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 200_000,
            grid: None,
            price_spread: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualTraceRow {
    pub iteration: usize,
    pub value: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualOutcome {
    pub duals: DualVariables,
    /// Best (smallest) dual value found.
    pub value: f64,
    /// Certified lower bound on the dual optimum.
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    /// One row per evaluated feasible iterate.
    pub trace: Vec<DualTraceRow>,
}

/// Maps reduced coordinates `(lambda_1..lambda_{K-1}, mu_1/s..mu_K/s)` to
/// multipliers.
struct Reduced {
    k: usize,
    price_scale: f64,
}

impl Reduced {
    fn dim(&self) -> usize {
        2 * self.k - 1
    }

    fn duals(&self, x: &[f64]) -> DualVariables {
        let k = self.k;
        let mut lambda = x[..k - 1].to_vec();
        lambda.push(1.0 - lambda.iter().sum::<f64>());
        let mu = x[k - 1..].iter().map(|m| m * self.price_scale).collect();
        DualVariables { lambda, mu }
    }

    /// Most violated domain constraint `h(x) <= 0` as `(h, grad h)`.
    fn violation(&self, x: &[f64], shape: &nalgebra::DMatrix<f64>) -> Option<(f64, Vec<f64>)> {
        let k = self.k;
        let n = self.dim();
        let floor = MU_FLOOR / self.price_scale;
        let mut cuts: Vec<(f64, Vec<f64>)> = Vec::new();
        for j in 0..k - 1 {
            if x[j] < 0.0 {
                let mut g = vec![0.0; n];
                g[j] = -1.0;
                cuts.push((-x[j], g));
            }
        }
        let sum: f64 = x[..k - 1].iter().sum();
        if sum > 1.0 {
            let mut g = vec![0.0; n];
            g[..k - 1].iter_mut().for_each(|v| *v = 1.0);
            cuts.push((sum - 1.0, g));
        }
        for j in k - 1..n {
            if x[j] < floor {
                let mut g = vec![0.0; n];
                g[j] = -1.0;
                cuts.push((floor - x[j], g));
            }
        }
        // deepest cut in the ellipsoid metric
        cuts.into_iter().max_by(|a, b| {
            let depth = |c: &(f64, Vec<f64>)| c.0 / quad(shape, &c.1).sqrt();
            depth(a).total_cmp(&depth(b))
        })
    }

    fn reduce_subgradient(&self, s: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut r = Vec::with_capacity(self.dim());
        for j in 0..k - 1 {
            r.push(s[j] - s[k - 1]);
        }
        r.extend(s[k..].iter().map(|v| v * self.price_scale));
        r
    }
}

fn quad(a: &nalgebra::DMatrix<f64>, g: &[f64]) -> f64 {
    let v = nalgebra::DVector::from_column_slice(g);
    (v.transpose() * a * &v)[(0, 0)]
}

/// Price scale `1 / (T eta P h_mean)` with `h_mean` the mean gain at the
/// users' centroid.
fn price_scale(scn: &Scenario) -> f64 {
    let c = scn.centroid();
    let h_mean = (0..scn.num_users())
        .map(|k| scn.gain_unchecked(&c, k))
        .sum::<f64>()
        / scn.num_users() as f64;
    1.0 / (scn.period() * scn.efficiency() * scn.power() * h_mean)
}

/// Minimizes the dual function with the ellipsoid method (interval
/// bisection for a single user).
pub fn solve_dual(scn: &Scenario, opts: &DualOptions) -> Result<DualOutcome> {
    let grid = opts.grid.unwrap_or_else(|| GridSpec::for_scenario(scn));
    GridSpec::new(grid.step)?;
    let search = WptSearch::new(scn, grid);
    let red = Reduced {
        k: scn.num_users(),
        price_scale: price_scale(scn),
    };
    if red.k == 1 {
        return bisect_single_user(scn, &search, &red, opts);
    }
    let n = red.dim();
    let mut x = vec![1.0 / red.k as f64; red.k - 1];
    x.extend(std::iter::repeat_n(1.0, red.k));
    let root_n = (n as f64).sqrt();
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let half = if j < red.k - 1 { 1.0 } else { opts.price_spread };
        a[(j, j)] = (root_n * half).powi(2);
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let nf = n as f64;
    while iterations < opts.max_iters {
        iterations += 1;
        let (g, depth_num) = match red.violation(&x, &a) {
            Some((h, g)) => (g, h),
            None => {
                let duals = red.duals(&x);
                let sub = subproblem_with(scn, &search, &duals);
                let (f, s) = value_and_subgradient(scn, &sub);
                trace.push(DualTraceRow {
                    iteration: iterations,
                    value: f,
                    residual: equalization(&sub),
                });
                let g = red.reduce_subgradient(&s);
                let gag = quad(&a, &g);
                lower = lower.max(f - gag.max(0.0).sqrt());
                let improved = best.as_ref().is_none_or(|(fb, _)| f < *fb);
                if improved {
                    best = Some((f, x.clone()));
                }
                let fb = best.as_ref().unwrap().0;
                if fb - lower <= opts.tol * fb.abs() {
                    converged = true;
                    break;
                }
                (g, f - fb)
            }
        };
        let gag = quad(&a, &g);
        if !(gag > 0.0) || !gag.is_finite() {
            break;
        }
        let root = gag.sqrt();
        let alpha = depth_num / root;
        if alpha >= 1.0 {
            // the cut removes the whole ellipsoid; round-off has caught up
            break;
        }
        let ag = &a * nalgebra::DVector::from_column_slice(&g) / root;
        let tau = (1.0 + nf * alpha) / (nf + 1.0);
        for j in 0..n {
            x[j] -= tau * ag[j];
        }
        let sigma = 2.0 * (1.0 + nf * alpha) / ((nf + 1.0) * (1.0 + alpha));
        let delta = nf * nf / (nf * nf - 1.0) * (1.0 - alpha * alpha);
        a = (&a - sigma * &ag * ag.transpose()) * delta;
        a = (&a + a.transpose()) * 0.5;
    }
    let (value, xb) = best.ok_or_else(|| {
        Error::Solver("ellipsoid method never reached a feasible multiplier".into())
    })?;
    Ok(DualOutcome {
        duals: red.duals(&xb),
        value,
        lower_bound: lower,
        iterations,
        converged,
        trace,
    })
}

fn bisect_single_user(
    scn: &Scenario,
    search: &WptSearch,
    red: &Reduced,
    opts: &DualOptions,
) -> Result<DualOutcome> {
    let mut lo = MU_FLOOR / red.price_scale;
    let mut hi = opts.price_spread;
    let mut best: Option<(f64, f64)> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let x = 0.5 * (lo + hi);
        let sub = subproblem_with(scn, search, &red.duals(&[x]));
        let (f, s) = value_and_subgradient(scn, &sub);
        let slope = red.reduce_subgradient(&s)[0];
        trace.push(DualTraceRow {
            iteration: iterations,
            value: f,
            residual: equalization(&sub),
        });
        lower = lower.max(f - slope.abs() * (x - lo).max(hi - x));
        if best.is_none_or(|(fb, _)| f < fb) {
            best = Some((f, x));
        }
        if slope > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let fb = best.unwrap().0;
        if fb - lower <= opts.tol * fb.abs() || hi - lo <= 1e-15 * hi {
            converged = fb - lower <= opts.tol * fb.abs();
            break;
        }
    }
    let (value, x) = best.expect("at least one iteration runs");
    Ok(DualOutcome {
        duals: red.duals(&[x]),
        value,
        lower_bound: lower,
        iterations,
        converged,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WptHover {
    pub position: Position2D,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitHover {
    pub position: Position2D,
    pub duration: f64,
    pub power: f64,
}

/// Multi-location hovering: power transfer from `wpt` locations, then each
/// user's uplink with the UAV directly above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoveringSolution {
    pub wpt: Vec<WptHover>,
    pub wit: Vec<WitHover>,
    pub common_rate: f64,
}

impl HoveringSolution {
    pub fn hover_count(&self) -> usize {
        self.wpt.len() + self.wit.len()
    }

    /// Per-user average rates implied by the WIT entries.
    pub fn rates(&self, scn: &Scenario) -> Vec<f64> {
        self.wit
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let snr = w.power * scn.gain_unchecked(&w.position, k) / scn.noise_power();
                w.duration / scn.period() * snr.ln_1p() / std::f64::consts::LN_2
            })
            .collect()
    }

    /// Slot-level view: one slot per location with positive duration,
    /// power-transfer locations first. Slot positions do not follow a
    /// flyable trajectory.
    pub fn to_schedule(&self, scn: &Scenario) -> Schedule {
        let k_users = scn.num_users();
        let mut slots = Vec::new();
        let mut clock = 0.0;
        for w in &self.wpt {
            if w.duration > 0.0 {
                slots.push(Slot::charging(clock, w.duration, w.position, k_users));
                clock += w.duration;
            }
        }
        for (k, w) in self.wit.iter().enumerate() {
            if w.duration > 0.0 {
                let mut wit = vec![0.0; k_users];
                let mut powers = vec![0.0; k_users];
                wit[k] = w.duration;
                powers[k] = w.power;
                slots.push(Slot {
                    start: clock,
                    duration: w.duration,
                    position: w.position,
                    wpt_duration: 0.0,
                    wit_durations: wit,
                    powers,
                });
                clock += w.duration;
            }
        }
        Schedule::new(slots)
    }
}

/// Optimal hovering durations for fixed power-transfer locations and
/// uplink powers.
pub fn time_sharing_lp(
    scn: &Scenario,
    wpt_locations: &[Position2D],
    powers: &[f64],
) -> Result<HoveringSolution> {
    let k_users = scn.num_users();
    let omega = wpt_locations.len();
    let t = scn.period();
    if omega == 0 {
        return Err(Error::InvalidArgument("at least one power-transfer location is required".into()));
    }
    if powers.len() != k_users || powers.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument(
            "need one nonnegative uplink power per user".into(),
        ));
    }
    let wit_entry = |k: usize, duration: f64, power: f64| WitHover {
        position: scn.users()[k],
        duration,
        power,
    };
    if powers.contains(&0.0) {
        let mut wpt: Vec<WptHover> = wpt_locations
            .iter()
            .map(|&q| WptHover { position: q, duration: 0.0 })
            .collect();
        wpt[0].duration = t;
        return Ok(HoveringSolution {
            wpt,
            wit: (0..k_users).map(|k| wit_entry(k, 0.0, powers[k])).collect(),
            common_rate: 0.0,
        });
    }

    // variables: normalized durations u_w (omega), s_k (K), then R
    let n = omega + k_users + 1;
    let ep = scn.efficiency() * scn.power();
    let h2 = scn.altitude() * scn.altitude();
    let mut rows = Vec::with_capacity(2 * k_users + 1);
    for k in 0..k_users {
        let mut c = vec![0.0; n];
        c[omega + k] = (powers[k] * scn.gamma() / h2).ln_1p() / std::f64::consts::LN_2;
        c[n - 1] = -1.0;
        rows.push(Row { coeffs: c, relation: Relation::Ge, rhs: 0.0 });
    }
    for k in 0..k_users {
        let mut c = vec![0.0; n];
        for (w, q) in wpt_locations.iter().enumerate() {
            c[w] = -ep * scn.gain_unchecked(q, k);
        }
        c[omega + k] = powers[k];
        let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        c.iter_mut().for_each(|v| *v /= scale);
        rows.push(Row { coeffs: c, relation: Relation::Le, rhs: 0.0 });
    }
    let mut c = vec![1.0; n];
    c[n - 1] = 0.0;
    rows.push(Row { coeffs: c, relation: Relation::Eq, rhs: 1.0 });
    let mut objective = vec![0.0; n];
    objective[n - 1] = 1.0;
    let x = match simplex::solve(&LinearProgram { objective, rows })? {
        LpOutcome::Optimal { x, .. } => x,
        other => {
            return Err(Error::Solver(format!("time-sharing LP ended as {other:?}")));
        }
    };

    let wpt: Vec<WptHover> = wpt_locations
        .iter()
        .enumerate()
        .map(|(w, &q)| WptHover { position: q, duration: x[w] * t })
        .collect();
    // renormalize so the durations tile the period despite round-off
    let total: f64 = x[..n - 1].iter().sum();
    let wpt: Vec<WptHover> = wpt
        .into_iter()
        .map(|w| WptHover { duration: w.duration / total, ..w })
        .collect();
    let mut wit: Vec<WitHover> = (0..k_users)
        .map(|k| wit_entry(k, x[omega + k] * t / total, powers[k]))
        .collect();
    // clip any residual round-off excess so neutrality holds exactly
    for (k, w) in wit.iter_mut().enumerate() {
        let harvested: f64 = wpt
            .iter()
            .map(|p| ep * scn.gain_unchecked(&p.position, k) * p.duration)
            .sum();
        if w.duration * w.power > harvested && w.duration > 0.0 {
            w.power = harvested / w.duration;
        }
    }
    let mut sol = HoveringSolution { wpt, wit, common_rate: 0.0 };
    sol.common_rate = sol.rates(scn).into_iter().fold(f64::INFINITY, f64::min);
    Ok(sol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedDiagnostics {
    pub dual: DualOutcome,
    /// Largest gap between the weighted gain sum at the reported
    /// power-transfer locations and each user's uplink objective, relative
    /// to the former.
    pub equalization_residual: f64,
    /// Candidate locations offered to the time-sharing LP.
    pub candidates: usize,
}

/// Solves the relaxed problem: dual minimization, location search at the
/// optimal prices, closed-form powers and the time-sharing LP.
pub fn solve_relaxed(scn: &Scenario, opts: &DualOptions) -> Result<(HoveringSolution, RelaxedDiagnostics)> {
    let dual = solve_dual(scn, opts)?;
    let grid = opts.grid.unwrap_or_else(|| GridSpec::for_scenario(scn));
    let search = WptSearch::new(scn, grid);
    let mu = dual.duals.mu();
    let candidates = search.search(mu, FINAL_CANDIDATE_TOL);
    let positions: Vec<Position2D> = candidates.iter().map(|(q, _)| *q).collect();
    let powers: Vec<f64> = dual
        .duals
        .lambda()
        .iter()
        .zip(mu)
        .map(|(&l, &m)| optimal_uplink_power(scn, l, m))
        .collect::<Result<_>>()?;
    let mut sol = time_sharing_lp(scn, &positions, &powers)?;

    let t = scn.period();
    let best_candidate = candidates
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let active: Vec<usize> = (0..sol.wpt.len())
        .filter(|&w| sol.wpt[w].duration > 1e-9 * t)
        .collect();
    let keep = if active.is_empty() { vec![best_candidate] } else { active };
    let dropped: f64 = (0..sol.wpt.len())
        .filter(|w| !keep.contains(w))
        .map(|w| sol.wpt[w].duration)
        .sum();
    let mut wpt: Vec<WptHover> = keep.iter().map(|&w| sol.wpt[w].clone()).collect();
    // time on inactive candidates is below the reporting threshold; hand it
    // to the longest remaining location so the period stays tiled
    if let Some(longest) = wpt
        .iter_mut()
        .max_by(|a, b| a.duration.total_cmp(&b.duration))
    {
        longest.duration += dropped;
    }
    sol.wpt = wpt;

    let lambda = dual.duals.lambda();
    let wit_values: Vec<f64> = (0..scn.num_users())
        .map(|k| wit_value(scn, lambda[k], mu[k], powers[k]))
        .collect();
    let phis: Vec<f64> = sol.wpt.iter().map(|w| phi(scn, &w.position, mu)).collect();
    let scale = phis[0].abs().max(f64::MIN_POSITIVE);
    let equalization_residual = phis
        .iter()
        .flat_map(|p| wit_values.iter().map(move |v| (p - v).abs()))
        .fold(0.0, f64::max)
        / scale;

    Ok((
        sol,
        RelaxedDiagnostics {
            dual,
            equalization_residual,
            candidates: positions.len(),
        },
    ))
}
