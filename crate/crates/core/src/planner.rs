//! Hover-and-fly trajectory construction: an open tour through the hover
//! locations of the relaxed solution flown at full speed, the time-scaled
//! variant for periods too short to complete the tour, and the static
//! single-location baseline.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{self, AllocationSolution, SlotSpec};
use crate::dual::HoveringSolution;
use crate::error::{Error, Result};
use crate::model::{Position2D, Scenario, Schedule, Slot, Trajectory, Waypoint, TOLERANCES};
use crate::neldermead;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HoverRole {
    /// Power-transfer location with its index in the relaxed solution.
    Wpt(usize),
    /// Uplink location directly above the user.
    User(usize),
}

/// Hover locations: power-transfer points first, then the users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoverPointSet {
    pub points: Vec<Position2D>,
    pub roles: Vec<HoverRole>,
}

impl HoverPointSet {
    pub fn from_solution(scn: &Scenario, sol: &HoveringSolution) -> Self {
        let mut points: Vec<Position2D> = sol.wpt.iter().map(|w| w.position).collect();
        if points.is_empty() {
            // nothing to charge from; keep one transfer option so the
            // allocation stays well-formed
            points.push(scn.centroid());
        }
        let mut roles: Vec<HoverRole> = (0..points.len()).map(HoverRole::Wpt).collect();
        points.extend_from_slice(scn.users());
        roles.extend((0..scn.num_users()).map(HoverRole::User));
        Self { points, roles }
    }

    pub fn wpt_points(&self) -> Vec<Position2D> {
        self.points
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| matches!(r, HoverRole::Wpt(_)))
            .map(|(p, _)| *p)
            .collect()
    }
}

/// Open path visiting every hover point once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TourPlan {
    /// Visiting order as indices into the point list.
    pub order: Vec<usize>,
    pub legs: Vec<f64>,
    pub distance: f64,
    /// `distance / max_speed`.
    pub flight_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TourOptions {
    /// Largest instance solved exactly by dynamic programming.
    pub exact_limit: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for TourOptions {
    fn default() -> Self {
        Self {
            exact_limit: 16,
            restarts: 50,
            seed: 0,
        }
    }
}

fn path_length(points: &[Position2D], order: &[usize]) -> f64 {
    order
        .windows(2)
        .map(|w| points[w[0]].dist(&points[w[1]]))
        .sum()
}

/// Shortest open path through `points`. The open path is the closed tour
/// through the points plus a zero-distance dummy city, with the two dummy
/// edges removed.
pub fn plan_tour(points: &[Position2D], max_speed: f64, opts: &TourOptions) -> Result<TourPlan> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("a tour needs at least one point".into()));
    }
    if !(max_speed > 0.0) {
        return Err(Error::InvalidArgument(format!("speed must be positive, got {max_speed}")));
    }
    let order = if points.len() <= opts.exact_limit.min(20) {
        held_karp(points)
    } else {
        two_opt_restarts(points, opts)
    };
    let legs: Vec<f64> = order
        .windows(2)
        .map(|w| points[w[0]].dist(&points[w[1]]))
        .collect();
    let distance = legs.iter().sum();
    Ok(TourPlan {
        order,
        legs,
        distance,
        flight_time: distance / max_speed,
    })
}

/// Exact open-path DP. `rest[S][j]` is the cheapest way to visit every point
/// outside `S` starting from `j` (in `S`); the path is then rebuilt forward
/// choosing the smallest index at every tie, which yields the
/// lexicographically smallest optimal order.
fn held_karp(points: &[Position2D]) -> Vec<usize> {
    let n = points.len();
    if n == 1 {
        return vec![0];
    }
    let full = (1usize << n) - 1;
    let d = |a: usize, b: usize| points[a].dist(&points[b]);
    let mut rest = vec![f64::INFINITY; (full + 1) * n];
    for j in 0..n {
        rest[full * n + j] = 0.0;
    }
    for s in (1..full).rev() {
        for j in 0..n {
            if s & (1 << j) == 0 {
                continue;
            }
            let mut best = f64::INFINITY;
            for k in 0..n {
                if s & (1 << k) == 0 {
                    best = best.min(d(j, k) + rest[(s | 1 << k) * n + k]);
                }
            }
            rest[s * n + j] = best;
        }
    }
    let total = (0..n)
        .map(|j| rest[(1 << j) * n + j])
        .fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (1.0 + total);
    let first = (0..n)
        .find(|&j| rest[(1 << j) * n + j] <= total + tol)
        .expect("some start attains the minimum");
    let mut order = vec![first];
    let mut s = 1usize << first;
    let mut cur = first;
    while s != full {
        let target = rest[s * n + cur];
        let next = (0..n)
            .filter(|&k| s & (1 << k) == 0)
            .find(|&k| d(cur, k) + rest[(s | 1 << k) * n + k] <= target + tol)
            .expect("some successor attains the minimum");
        order.push(next);
        s |= 1 << next;
        cur = next;
    }
    order
}

fn nearest_neighbor(points: &[Position2D], start: usize) -> Vec<usize> {
    let n = points.len();
    let mut used = vec![false; n];
    let mut order = vec![start];
    used[start] = true;
    let mut cur = start;
    for _ in 1..n {
        let next = (0..n)
            .filter(|&k| !used[k])
            .min_by(|&a, &b| {
                points[cur]
                    .dist(&points[a])
                    .total_cmp(&points[cur].dist(&points[b]))
            })
            .unwrap();
        used[next] = true;
        order.push(next);
        cur = next;
    }
    order
}

/// 2-opt for open paths: reversing `order[i..=j]` replaces the edges
/// entering `i` and leaving `j`; a missing neighbor costs nothing.
fn two_opt(points: &[Position2D], order: &mut [usize]) {
    let n = order.len();
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..n {
            for j in i + 1..n {
                let d = |a: usize, b: usize| points[order[a]].dist(&points[order[b]]);
                let before = if i > 0 { d(i - 1, i) } else { 0.0 }
                    + if j + 1 < n { d(j, j + 1) } else { 0.0 };
                let after = if i > 0 { d(i - 1, j) } else { 0.0 }
                    + if j + 1 < n { d(i, j + 1) } else { 0.0 };
                if after < before - 1e-12 {
                    order[i..=j].reverse();
                    improved = true;
                }
            }
        }
    }
}

fn two_opt_restarts(points: &[Position2D], opts: &TourOptions) -> Vec<usize> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<usize> = (0..n).collect();
    starts.shuffle(&mut rng);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 0..opts.restarts.max(1) {
        let mut order = if r < n {
            nearest_neighbor(points, starts[r])
        } else {
            let mut o: Vec<usize> = (0..n).collect();
            o.shuffle(&mut rng);
            o
        };
        two_opt(points, &mut order);
        // orient so that the smaller endpoint comes first
        if order[n - 1] < order[0] {
            order.reverse();
        }
        let len = path_length(points, &order);
        let better = match &best {
            None => true,
            Some((bl, bo)) => len < bl - 1e-9 || (len <= bl + 1e-9 && order < *bo),
        };
        if better {
            best = Some((len, order));
        }
    }
    best.unwrap().1
}

/// Alternate hovering at the tour's points for `hover[i]` seconds (indexed
/// by point) with full-speed straight flights between consecutive points.
pub fn build_hover_and_fly(
    scn: &Scenario,
    points: &[Position2D],
    tour: &TourPlan,
    hover: &[f64],
) -> Result<Trajectory> {
    let t = scn.period();
    if t < tour.flight_time * (1.0 - TOLERANCES.structural) {
        return Err(Error::Precondition(format!(
            "period {t} s is shorter than the tour's flight time {} s",
            tour.flight_time
        )));
    }
    if hover.len() != points.len() || hover.iter().any(|&h| !(h >= 0.0)) {
        return Err(Error::InvalidArgument("need one nonnegative hover time per point".into()));
    }
    let total = hover.iter().sum::<f64>() + tour.flight_time;
    if (total - t).abs() > 1e-9 * t {
        return Err(Error::Precondition(format!(
            "hover and flight times add up to {total} s, period is {t} s"
        )));
    }
    let vmax = scn.max_speed();
    let mut wps = vec![Waypoint {
        t: 0.0,
        position: points[tour.order[0]],
    }];
    let mut clock = 0.0;
    let push = |wps: &mut Vec<Waypoint>, time: f64, q: Position2D| {
        if time > wps.last().unwrap().t {
            wps.push(Waypoint { t: time, position: q });
        }
    };
    for (i, &p) in tour.order.iter().enumerate() {
        clock += hover[p];
        push(&mut wps, clock, points[p]);
        if let Some(&next) = tour.order.get(i + 1) {
            clock += points[p].dist(&points[next]) / vmax;
            push(&mut wps, clock, points[next]);
        }
    }
    // absorb round-off so the trajectory ends exactly at the period
    let last = wps.len() - 1;
    if last == 0 {
        push(&mut wps, t, points[tour.order[0]]);
    } else {
        wps[last].t = t;
    }
    Trajectory::new(wps)
}

/// Shrinks `base` (spanning its own duration) toward `q_fix` so that it
/// fits into `period` at unchanged speed.
pub fn scale_trajectory(base: &Trajectory, q_fix: Position2D, period: f64) -> Result<Trajectory> {
    let nu = period / base.duration();
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::Precondition(format!(
            "scaling factor must lie in (0, 1), got {nu}"
        )));
    }
    let wps = base
        .waypoints()
        .iter()
        .map(|w| Waypoint {
            t: nu * w.t,
            position: Position2D::new(
                q_fix.x + nu * (w.position.x - q_fix.x),
                q_fix.y + nu * (w.position.y - q_fix.y),
            ),
        })
        .collect();
    Trajectory::new(wps)
}

/// Splits each flight leg of the tour into equal slots no longer than
/// `slot_max`, positioned at the slot midpoints. Returns per-leg slot lists
/// as `(duration, position)`.
fn flight_slots(scn: &Scenario, points: &[Position2D], tour: &TourPlan, slot_max: f64) -> Vec<Vec<(f64, Position2D)>> {
    let vmax = scn.max_speed();
    tour.order
        .windows(2)
        .map(|w| {
            let (a, b) = (points[w[0]], points[w[1]]);
            let dur = a.dist(&b) / vmax;
            if dur <= 0.0 {
                return Vec::new();
            }
            let n = (dur / slot_max).ceil().max(1.0) as usize;
            (0..n)
                .map(|i| (dur / n as f64, a.lerp(&b, (i as f64 + 0.5) / n as f64)))
                .collect()
        })
        .collect()
}

/// Static hover baseline: best single hover location by grid search over
/// the users' bounding box (step `grid`, default `max(0.5 m, span / 40)`)
/// with local refinement of the best cell.
pub fn static_hover_search(scn: &Scenario, grid: Option<f64>) -> Result<(Position2D, f64)> {
    let (lo, hi) = scn.bounding_box();
    let span = (hi.x - lo.x).max(hi.y - lo.y);
    let step = grid.unwrap_or((span / 40.0).max(0.5));
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("grid resolution must be positive, got {step}")));
    }
    let axis = |a: f64, b: f64| -> Vec<f64> {
        if b <= a {
            return vec![a];
        }
        let n = ((b - a) / step).ceil() as usize + 1;
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    };
    let xs = axis(lo.x, hi.x);
    let ys = axis(lo.y, hi.y);
    let cells: Vec<Position2D> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| Position2D::new(x, y)))
        .collect();
    let rates: Vec<f64> = cells
        .par_iter()
        .map(|q| allocation::solve_static(scn, *q).map(|(_, r)| r))
        .collect::<Result<_>>()?;
    let best = (0..cells.len())
        .max_by(|&a, &b| rates[a].total_cmp(&rates[b]).then(b.cmp(&a)))
        .unwrap();
    let q0 = cells[best];
    let (free_x, free_y) = (hi.x > lo.x, hi.y > lo.y);
    let embed = |x: &[f64]| {
        let mut it = x.iter();
        let qx = if free_x { *it.next().unwrap() } else { q0.x };
        let qy = if free_y { *it.next().unwrap() } else { q0.y };
        Position2D::new(qx.clamp(lo.x, hi.x), qy.clamp(lo.y, hi.y))
    };
    let mut x0 = Vec::new();
    if free_x {
        x0.push(q0.x);
    }
    if free_y {
        x0.push(q0.y);
    }
    let (x, r) = neldermead::maximize(
        |x| allocation::solve_static(scn, embed(x)).map_or(f64::NEG_INFINITY, |(_, r)| r),
        &x0,
        0.5 * step,
        1e-3,
        200,
    );
    if r > rates[best] {
        Ok((embed(&x), r))
    } else {
        Ok((q0, rates[best]))
    }
}

/// Schedule and trajectory for hovering at `q` for the whole period.
pub fn static_plan(scn: &Scenario, q: Position2D) -> Result<(Trajectory, Schedule, AllocationSolution)> {
    let slots = [SlotSpec {
        start: 0.0,
        duration: scn.period(),
        position: q,
    }];
    let sol = allocation::solve_slot_allocation(scn, &slots)?;
    Ok((Trajectory::hover(q, scn.period())?, sol.slot_schedule(&slots), sol))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOptions {
    /// Longest slot used to discretize flight.
    pub slot_max: f64,
    pub tour: TourOptions,
    /// Hover location for the scaled branch; searched when absent.
    pub q_fix: Option<Position2D>,
    /// Grid step for that search.
    pub static_grid: Option<f64>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            slot_max: 0.2,
            tour: TourOptions::default(),
            q_fix: None,
            static_grid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Branch {
    /// The tour fits: hover at every point, fly between them at full speed.
    HoverFly,
    /// The period is too short: the tour is shrunk by `nu` toward `q_fix`.
    Scaled { nu: f64, q_fix: Position2D },
}

#[derive(Debug, Clone)]
pub struct HoverFlyPlan {
    pub points: HoverPointSet,
    pub tour: TourPlan,
    pub branch: Branch,
    /// Hover time at each point (zero in the scaled branch).
    pub hover: Vec<f64>,
    pub trajectory: Trajectory,
    pub schedule: Schedule,
    pub allocation: AllocationSolution,
    pub common_rate: f64,
}

/// Turns the relaxed solution into a flyable plan: tour through its hover
/// locations, then either the hover-and-fly allocation or, when the tour
/// does not fit into the period, a scaled tour with per-slot allocation.
pub fn plan_hover_and_fly(scn: &Scenario, relaxed: &HoveringSolution, opts: &PlanOptions) -> Result<HoverFlyPlan> {
    if !(opts.slot_max > 0.0) {
        return Err(Error::InvalidArgument("slot length must be positive".into()));
    }
    let points = HoverPointSet::from_solution(scn, relaxed);
    let tour = plan_tour(&points.points, scn.max_speed(), &opts.tour)?;
    let t = scn.period();
    let k_users = scn.num_users();
    if t >= tour.flight_time {
        let legs = flight_slots(scn, &points.points, &tour, opts.slot_max);
        let flat: Vec<(f64, Position2D)> = legs.iter().flatten().copied().collect();
        let wpt_points = points.wpt_points();
        let budget = (t - tour.flight_time).max(0.0);
        let sol = allocation::solve_p3(scn, &wpt_points, budget, &flat)?;
        let hover_block = &sol.blocks[0];
        let mut hover = vec![0.0; points.points.len()];
        for (i, role) in points.roles.iter().enumerate() {
            hover[i] = match *role {
                HoverRole::Wpt(w) => hover_block.wpt[w],
                HoverRole::User(k) => hover_block.wit[k],
            };
        }
        // the allocation tiles the hover budget; restate it exactly
        let sum: f64 = hover.iter().sum();
        if sum > 0.0 {
            hover.iter_mut().for_each(|h| *h *= budget / sum);
        }
        let trajectory = build_hover_and_fly(scn, &points.points, &tour, &hover)?;

        let mut slots = Vec::new();
        let mut clock = 0.0;
        let mut block = 1;
        for (i, &p) in tour.order.iter().enumerate() {
            if hover[p] > 0.0 {
                let q = points.points[p];
                let slot = match points.roles[p] {
                    HoverRole::Wpt(_) => Slot::charging(clock, hover[p], q, k_users),
                    HoverRole::User(k) => {
                        let mut wit = vec![0.0; k_users];
                        let mut powers = vec![0.0; k_users];
                        wit[k] = hover[p];
                        powers[k] = hover_block.energy[k] / hover[p];
                        Slot {
                            start: clock,
                            duration: hover[p],
                            position: q,
                            wpt_duration: 0.0,
                            wit_durations: wit,
                            powers,
                        }
                    }
                };
                slots.push(slot);
                clock += hover[p];
            }
            if i + 1 < tour.order.len() {
                for &(d, q) in &legs[i] {
                    let a = &sol.blocks[block];
                    slots.push(Slot {
                        start: clock,
                        duration: d,
                        position: q,
                        wpt_duration: a.wpt[0],
                        wit_durations: a.wit.clone(),
                        powers: a.power.clone(),
                    });
                    clock += d;
                    block += 1;
                }
            }
        }
        let common_rate = sol.common_rate;
        Ok(HoverFlyPlan {
            points,
            tour,
            branch: Branch::HoverFly,
            hover,
            trajectory,
            schedule: Schedule::new(slots),
            allocation: sol,
            common_rate,
        })
    } else {
        let q_fix = match opts.q_fix {
            Some(q) => q,
            None => static_hover_search(scn, opts.static_grid)?.0,
        };
        let base_scn = scn.with_period(tour.flight_time)?;
        let zero = vec![0.0; points.points.len()];
        let base = build_hover_and_fly(&base_scn, &points.points, &tour, &zero)?;
        let trajectory = scale_trajectory(&base, q_fix, t)?;
        let n = (t / opts.slot_max).ceil().max(1.0) as usize;
        let delta = t / n as f64;
        let slots: Vec<SlotSpec> = (0..n)
            .map(|i| SlotSpec {
                start: i as f64 * delta,
                duration: delta,
                position: trajectory.position_at((i as f64 + 0.5) * delta),
            })
            .collect();
        let sol = allocation::solve_slot_allocation(scn, &slots)?;
        let schedule = sol.slot_schedule(&slots);
        let common_rate = sol.common_rate;
        Ok(HoverFlyPlan {
            hover: zero,
            points,
            tour,
            branch: Branch::Scaled {
                nu: t / base.duration(),
                q_fix,
            },
            trajectory,
            schedule,
            allocation: sol,
            common_rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate_schedule, validate_plan, ScenarioParams};
    use itertools::Itertools;
    use rand::Rng;

    fn scenario(users: Vec<Position2D>, period: f64) -> Scenario {
        Scenario::new(ScenarioParams {
            users,
            altitude: 5.0,
            beta0: 1e-3,
            noise_power: 1e-11,
            efficiency: 0.5,
            power: 10.0,
            max_speed: 10.0,
            period,
        })
        .unwrap()
    }

    fn brute_force(points: &[Position2D]) -> f64 {
        (0..points.len())
            .permutations(points.len())
            .map(|p| path_length(points, &p))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn singleton_tour() {
        let t = plan_tour(&[Position2D::new(1.0, 1.0)], 10.0, &TourOptions::default()).unwrap();
        assert_eq!(t.order, vec![0]);
        assert_eq!(t.distance, 0.0);
    }

    #[test]
    fn collinear_tour() {
        let pts = [Position2D::new(5.0, 0.0), Position2D::new(10.0, 0.0), Position2D::new(0.0, 0.0)];
        let t = plan_tour(&pts, 10.0, &TourOptions::default()).unwrap();
        assert_eq!(t.order, vec![1, 0, 2]);
        assert!((t.distance - 10.0).abs() < 1e-12);
        assert!((t.flight_time - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_tour_matches_permutations_and_beats_heuristic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=8 {
            let pts: Vec<Position2D> = (0..n)
                .map(|_| Position2D::new(rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0)))
                .collect();
            let exact = plan_tour(&pts, 10.0, &TourOptions::default()).unwrap();
            let oracle = brute_force(&pts);
            assert!((exact.distance - oracle).abs() < 1e-9);
            let heuristic = plan_tour(&pts, 10.0, &TourOptions { exact_limit: 0, ..Default::default() }).unwrap();
            assert!(exact.distance <= heuristic.distance + 1e-9);
            let legs: f64 = exact.legs.iter().sum();
            assert!((legs - exact.distance).abs() < 1e-12);
            let mut seen = exact.order.clone();
            seen.sort();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn tie_break_is_lexicographic() {
        // a square: several optimal open paths of length 3
        let pts = [
            Position2D::new(0.0, 0.0),
            Position2D::new(1.0, 0.0),
            Position2D::new(1.0, 1.0),
            Position2D::new(0.0, 1.0),
        ];
        let t = plan_tour(&pts, 1.0, &TourOptions::default()).unwrap();
        assert_eq!(t.order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn heuristic_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Position2D> = (0..25)
            .map(|_| Position2D::new(rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)))
            .collect();
        let a = plan_tour(&pts, 10.0, &TourOptions::default()).unwrap();
        let b = plan_tour(&pts, 10.0, &TourOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pure_flight_and_single_point() {
        let users = vec![Position2D::new(-5.0, 0.0), Position2D::new(5.0, 0.0)];
        let scn = scenario(users.clone(), 1.0);
        let tour = plan_tour(&users, 10.0, &TourOptions::default()).unwrap();
        let traj = build_hover_and_fly(&scn, &users, &tour, &[0.0, 0.0]).unwrap();
        assert_eq!(traj.waypoints().len(), 2);
        assert!((traj.path_length() - 10.0).abs() < 1e-12);
        assert!((traj.max_speed() - 10.0).abs() < 1e-9);

        let scn = scenario(vec![Position2D::new(2.0, 3.0)], 7.0);
        let pts = [Position2D::new(2.0, 3.0)];
        let tour = plan_tour(&pts, 10.0, &TourOptions::default()).unwrap();
        let traj = build_hover_and_fly(&scn, &pts, &tour, &[7.0]).unwrap();
        assert_eq!(traj.position_at(3.0), pts[0]);
        assert_eq!(traj.duration(), 7.0);

        let short = scenario(users.clone(), 0.5);
        let tour = plan_tour(&users, 10.0, &TourOptions::default()).unwrap();
        assert!(matches!(
            build_hover_and_fly(&short, &users, &tour, &[0.0, 0.0]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn four_point_geometry() {
        let eps = 4.5509;
        let users = vec![Position2D::new(-5.0, 0.0), Position2D::new(5.0, 0.0)];
        let pts = vec![Position2D::new(-eps, 0.0), Position2D::new(eps, 0.0), users[0], users[1]];
        let tour = plan_tour(&pts, 10.0, &TourOptions::default()).unwrap();
        assert!((tour.distance - 10.0).abs() < 1e-12);
        assert!((tour.flight_time - 1.0).abs() < 1e-12);
        let scn = scenario(users, 3.0);
        let traj = build_hover_and_fly(&scn, &pts, &tour, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!((traj.path_length() - 10.0).abs() < 1e-12);
        let xs: Vec<f64> = traj.waypoints().iter().map(|w| w.position.x).collect();
        assert!(xs.iter().all(|x| (-5.0..=5.0).contains(x)));
    }

    #[test]
    fn scaling_limits() {
        let base = Trajectory::new(vec![
            Waypoint { t: 0.0, position: Position2D::new(-5.0, 0.0) },
            Waypoint { t: 1.0, position: Position2D::new(5.0, 0.0) },
        ])
        .unwrap();
        let half = scale_trajectory(&base, Position2D::new(0.0, 0.0), 0.5).unwrap();
        assert_eq!(half.waypoints()[0].position, Position2D::new(-2.5, 0.0));
        assert_eq!(half.waypoints()[1].position, Position2D::new(2.5, 0.0));
        assert!((half.path_length() - 5.0).abs() < 1e-12);
        assert!((half.max_speed() - base.max_speed()).abs() < 1e-9);
        let tiny = scale_trajectory(&base, Position2D::new(1.0, 1.0), 1e-9).unwrap();
        assert!(tiny.waypoints().iter().all(|w| w.position.dist(&Position2D::new(1.0, 1.0)) < 1e-8));
        assert!(scale_trajectory(&base, Position2D::default(), 1.0).is_err());
        let nearly = scale_trajectory(&base, Position2D::new(3.0, 3.0), 1.0 - 1e-12).unwrap();
        assert!(nearly.waypoints()[1].position.dist(&Position2D::new(5.0, 0.0)) < 1e-10);
    }

    #[test]
    fn static_search_basics() {
        let w = Position2D::new(3.0, 4.0);
        let (q, r) = static_hover_search(&scenario(vec![w], 1.0), None).unwrap();
        assert_eq!(q, w);
        assert!(r > 0.0);
        let pair = scenario(vec![Position2D::new(-5.0, 0.0), Position2D::new(5.0, 0.0)], 1.0);
        let (q, _) = static_hover_search(&pair, None).unwrap();
        assert!(q.x.abs() < 1e-2, "{q:?}");
    }

    fn pair_relaxed(scn: &Scenario) -> HoveringSolution {
        crate::dual::solve_relaxed(scn, &Default::default()).unwrap().0
    }

    #[test]
    fn hover_fly_plan_validates() {
        let users = vec![Position2D::new(-5.0, 0.0), Position2D::new(5.0, 0.0)];
        for &t in &[0.5, 1.0, 4.0] {
            let scn = scenario(users.clone(), t);
            let relaxed = pair_relaxed(&scn);
            let plan = plan_hover_and_fly(&scn, &relaxed, &PlanOptions::default()).unwrap();
            let rep = validate_plan(&scn, &plan.trajectory, &plan.schedule).unwrap();
            assert!((rep.common_rate - plan.common_rate).abs() <= 1e-9 * (1.0 + plan.common_rate));
            assert!(plan.common_rate <= relaxed.common_rate + 1e-6);
            if t < 1.0 {
                assert!(matches!(plan.branch, Branch::Scaled { .. }));
                assert!((plan.trajectory.path_length() - 10.0 * t).abs() < 1e-6);
            } else {
                assert_eq!(plan.branch, Branch::HoverFly);
            }
            let _ = evaluate_schedule(&scn, &plan.trajectory, &plan.schedule).unwrap();
        }
    }
}
