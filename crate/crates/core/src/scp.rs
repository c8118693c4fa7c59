//! Local refinement of a flyable plan by alternating between per-slot
//! resource allocation and a convex trajectory update built from concave
//! minorants of the harvested energy and uplink rate.

use std::f64::consts::LOG2_E;

use serde::{Deserialize, Serialize};

use crate::allocation::{self, SlotSpec};
use crate::barrier::{self, BarrierOptions, ConvexProgram, Derivatives, Layout};
use crate::error::{Error, Result};
use crate::model::{
    evaluate_slots, Position2D, Scenario, Schedule, Slot, ThroughputReport, Trajectory, Waypoint, TOLERANCES,
};

/// Concave minorant of the energy user `k` harvests during a transfer of
/// length `tau0` at `q`, tight at `q_ref`. Joules.
pub fn energy_surrogate(scn: &Scenario, k: usize, tau0: f64, q: &Position2D, q_ref: &Position2D) -> f64 {
    let (a, b, s_ref) = energy_coefficients(scn, k, tau0, q_ref);
    a - b * (q.dist2(&scn.users()[k]) - s_ref)
}

/// `(value at q_ref, slope in the squared distance, squared distance at q_ref)`.
fn energy_coefficients(scn: &Scenario, k: usize, tau0: f64, q_ref: &Position2D) -> (f64, f64, f64) {
    let h2 = scn.altitude() * scn.altitude();
    let s_ref = q_ref.dist2(&scn.users()[k]);
    let d = h2 + s_ref;
    let c = scn.efficiency() * scn.beta0() * scn.power() * tau0;
    (c / d, c / (d * d), s_ref)
}

/// Concave minorant of the bits user `k` sends in an uplink of length `tau`
/// at power `power` from `q`, tight at `q_ref`. Bits per Hz.
pub fn rate_surrogate(
    scn: &Scenario,
    k: usize,
    tau: f64,
    power: f64,
    q: &Position2D,
    q_ref: &Position2D,
) -> f64 {
    let (a, b, s_ref) = rate_coefficients(scn, k, tau, power, q_ref);
    a - b * (q.dist2(&scn.users()[k]) - s_ref)
}

fn rate_coefficients(scn: &Scenario, k: usize, tau: f64, power: f64, q_ref: &Position2D) -> (f64, f64, f64) {
    let h2 = scn.altitude() * scn.altitude();
    let s_ref = q_ref.dist2(&scn.users()[k]);
    let d = h2 + s_ref;
    let g = scn.gamma() * power;
    if tau == 0.0 || g == 0.0 {
        return (0.0, 0.0, s_ref);
    }
    (tau * (g / d).ln_1p() * LOG2_E, tau * g * LOG2_E / (d * (d + g)), s_ref)
}

/// Slots tiling the period; the trajectory passes through each slot's
/// position at the slot midpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedTrajectory {
    pub slots: Vec<SlotSpec>,
}

impl DiscretizedTrajectory {
    pub fn from_schedule(sched: &Schedule) -> Self {
        Self {
            slots: sched
                .slots
                .iter()
                .map(|s| SlotSpec {
                    start: s.start,
                    duration: s.duration,
                    position: s.position,
                })
                .collect(),
        }
    }

    /// Largest distance between consecutive positions relative to what
    /// the speed limit allows over the time between their midpoints.
    pub fn speed_ratio(&self, max_speed: f64) -> f64 {
        self.slots
            .windows(2)
            .map(|w| {
                let allowed = max_speed * 0.5 * (w[0].duration + w[1].duration);
                w[0].position.dist(&w[1].position) / allowed
            })
            .fold(0.0, f64::max)
    }

    pub fn satisfies_speed(&self, max_speed: f64) -> bool {
        self.speed_ratio(max_speed) <= 1.0 + TOLERANCES.structural
    }

    /// Piecewise-linear trajectory through the slot midpoints, hovering
    /// before the first and after the last.
    pub fn to_trajectory(&self) -> Result<Trajectory> {
        let (first, last) = match (self.slots.first(), self.slots.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::InvalidArgument("trajectory needs at least one slot".into())),
        };
        let mut wps = vec![Waypoint {
            t: first.start,
            position: first.position,
        }];
        for s in &self.slots {
            wps.push(Waypoint {
                t: s.start + 0.5 * s.duration,
                position: s.position,
            });
        }
        wps.push(Waypoint {
            t: last.start + last.duration,
            position: last.position,
        });
        Trajectory::new(wps)
    }
}

/// Splits every slot longer than `slot_max` into equal pieces at the same
/// position, dividing its sub-slots proportionally. Rates and energies are
/// unchanged.
pub fn refine_schedule(sched: &Schedule, slot_max: f64) -> Schedule {
    let mut out = Vec::with_capacity(sched.slots.len());
    for s in &sched.slots {
        let n = (s.duration / slot_max).ceil().max(1.0) as usize;
        let f = 1.0 / n as f64;
        for i in 0..n {
            out.push(Slot {
                start: s.start + s.duration * i as f64 * f,
                duration: s.duration * f,
                position: s.position,
                wpt_duration: s.wpt_duration * f,
                wit_durations: s.wit_durations.iter().map(|t| t * f).collect(),
                powers: s.powers.clone(),
            });
        }
    }
    Schedule::new(out)
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// The reference schedule moved to the new positions, with uplink
    /// powers reduced by a relative `1e-9` to leave room for the solver.
    pub schedule: Schedule,
    pub common_rate: f64,
    /// Common rate of the reduced-power schedule at the reference positions.
    pub reference_rate: f64,
    /// `false` when the solver failed or every trial step lost throughput;
    /// the reference positions are returned then.
    pub accepted: bool,
}

const POWER_BACKOFF: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
enum Con {
    Speed(usize),
    Lower(usize),
    Upper(usize),
    Rate(usize),
    Energy(usize),
}

/// `(slot, value at the reference, slope in the squared distance, squared
/// distance at the reference)` for each contributing slot.
type Terms = Vec<(usize, f64, f64, f64)>;

/// Trajectory update with the schedule held fixed. Variables: `x_n, y_n`
/// per slot, then the common rate.
struct StepProgram<'a> {
    scn: &'a Scenario,
    sched: &'a Schedule,
    /// Per user, every slot that uplinks.
    rate_terms: Vec<Terms>,
    /// Per user, every slot that charges, and the energy to cover.
    energy_terms: Vec<(Terms, f64)>,
    energy_unit: f64,
    lo: Position2D,
    hi: Position2D,
    cons: Vec<Con>,
}

impl<'a> StepProgram<'a> {
    fn new(scn: &'a Scenario, sched: &'a Schedule) -> Self {
        let k_users = scn.num_users();
        let period = scn.period();
        let n = sched.slots.len();
        let mut rate_terms = vec![Vec::new(); k_users];
        let mut energy_terms = vec![(Vec::new(), 0.0); k_users];
        for (i, s) in sched.slots.iter().enumerate() {
            for k in 0..k_users {
                let (tau, p) = (s.wit_durations[k], s.powers[k]);
                if tau > 0.0 && p > 0.0 {
                    let (a, b, s_ref) = rate_coefficients(scn, k, tau, p, &s.position);
                    rate_terms[k].push((i, a, b, s_ref));
                    energy_terms[k].1 += tau * p;
                }
                if s.wpt_duration > 0.0 {
                    let (a, b, s_ref) = energy_coefficients(scn, k, s.wpt_duration, &s.position);
                    energy_terms[k].0.push((i, a, b, s_ref));
                }
            }
        }
        let h2 = scn.altitude() * scn.altitude();
        let energy_unit = scn.efficiency() * scn.power() * scn.beta0() / h2 * period;
        let (blo, bhi) = scn.bounding_box();
        let margin = (0.05 * (bhi.x - blo.x).max(bhi.y - blo.y)).max(1.0);
        let mut lo = Position2D::new(blo.x - margin, blo.y - margin);
        let mut hi = Position2D::new(bhi.x + margin, bhi.y + margin);
        for s in &sched.slots {
            lo = Position2D::new(lo.x.min(s.position.x - margin), lo.y.min(s.position.y - margin));
            hi = Position2D::new(hi.x.max(s.position.x + margin), hi.y.max(s.position.y + margin));
        }
        let mut cons: Vec<Con> = (0..n.saturating_sub(1)).map(Con::Speed).collect();
        cons.extend((0..2 * n).map(Con::Lower));
        cons.extend((0..2 * n).map(Con::Upper));
        cons.extend((0..k_users).filter(|&k| !rate_terms[k].is_empty()).map(Con::Rate));
        cons.extend(
            (0..k_users)
                .filter(|&k| energy_terms[k].1 > 0.0)
                .map(Con::Energy),
        );
        Self {
            scn,
            sched,
            rate_terms,
            energy_terms,
            energy_unit,
            lo,
            hi,
            cons,
        }
    }

    fn n(&self) -> usize {
        self.sched.slots.len()
    }

    fn pos(z: &[f64], i: usize) -> Position2D {
        Position2D::new(z[2 * i], z[2 * i + 1])
    }

    fn speed_limit(&self, i: usize) -> f64 {
        let s = &self.sched.slots;
        self.scn.max_speed() * 0.5 * (s[i].duration + s[i + 1].duration)
    }

    fn box_bounds(&self, j: usize) -> (f64, f64) {
        if j.is_multiple_of(2) {
            (self.lo.x, self.hi.x)
        } else {
            (self.lo.y, self.hi.y)
        }
    }

    fn term_sum(&self, z: &[f64], k: usize, terms: &[(usize, f64, f64, f64)]) -> f64 {
        let w = &self.scn.users()[k];
        terms
            .iter()
            .map(|&(i, a, b, s_ref)| a - b * (Self::pos(z, i).dist2(w) - s_ref))
            .sum()
    }

    /// Gradient and Hessian of `scale * sum(a - b (|q_i - w|^2 - s_ref))`.
    fn term_derivs(&self, z: &[f64], k: usize, terms: &[(usize, f64, f64, f64)], scale: f64, out: &mut Derivatives) {
        let w = &self.scn.users()[k];
        for &(i, _, b, _) in terms {
            let q = Self::pos(z, i);
            let c = -2.0 * b * scale;
            out.grad.push((2 * i, c * (q.x - w.x)));
            out.grad.push((2 * i + 1, c * (q.y - w.y)));
            out.hess.push((2 * i, 2 * i, c));
            out.hess.push((2 * i + 1, 2 * i + 1, c));
        }
    }

    fn rates(&self, z: &[f64]) -> Vec<f64> {
        (0..self.scn.num_users())
            .map(|k| self.term_sum(z, k, &self.rate_terms[k]) / self.scn.period())
            .collect()
    }
}

impl ConvexProgram for StepProgram<'_> {
    fn layout(&self) -> Layout {
        Layout {
            locals: 2 * self.n(),
            globals: 1,
            bandwidth: 3,
        }
    }

    fn objective(&self) -> Vec<f64> {
        let mut c = vec![0.0; 2 * self.n() + 1];
        c[2 * self.n()] = 1.0;
        c
    }

    fn num_constraints(&self) -> usize {
        self.cons.len()
    }

    fn values(&self, z: &[f64], out: &mut [f64]) {
        let r = z[2 * self.n()];
        for (v, con) in out.iter_mut().zip(&self.cons) {
            *v = match *con {
                Con::Speed(i) => {
                    let l = self.speed_limit(i);
                    1.0 - Self::pos(z, i).dist2(&Self::pos(z, i + 1)) / (l * l)
                }
                Con::Lower(j) => {
                    let (lo, hi) = self.box_bounds(j);
                    (z[j] - lo) / (hi - lo)
                }
                Con::Upper(j) => {
                    let (lo, hi) = self.box_bounds(j);
                    (hi - z[j]) / (hi - lo)
                }
                Con::Rate(k) => self.term_sum(z, k, &self.rate_terms[k]) / self.scn.period() - r,
                Con::Energy(k) => {
                    let (terms, need) = &self.energy_terms[k];
                    (self.term_sum(z, k, terms) - need) / self.energy_unit
                }
            };
        }
    }

    fn derivatives(&self, ci: usize, z: &[f64], out: &mut Derivatives) {
        out.clear();
        match self.cons[ci] {
            Con::Speed(i) => {
                let l2 = self.speed_limit(i).powi(2);
                let (a, b) = (Self::pos(z, i), Self::pos(z, i + 1));
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                let c = 2.0 / l2;
                out.grad.extend([(2 * i, c * dx), (2 * i + 1, c * dy), (2 * i + 2, -c * dx), (2 * i + 3, -c * dy)]);
                out.hess.extend([
                    (2 * i, 2 * i, -c),
                    (2 * i + 2, 2 * i + 2, -c),
                    (2 * i, 2 * i + 2, c),
                    (2 * i + 1, 2 * i + 1, -c),
                    (2 * i + 3, 2 * i + 3, -c),
                    (2 * i + 1, 2 * i + 3, c),
                ]);
            }
            Con::Lower(j) => {
                let (lo, hi) = self.box_bounds(j);
                out.grad.push((j, 1.0 / (hi - lo)));
            }
            Con::Upper(j) => {
                let (lo, hi) = self.box_bounds(j);
                out.grad.push((j, -1.0 / (hi - lo)));
            }
            Con::Rate(k) => {
                self.term_derivs(z, k, &self.rate_terms[k], 1.0 / self.scn.period(), out);
                out.grad.push((2 * self.n(), -1.0));
            }
            Con::Energy(k) => {
                self.term_derivs(z, k, &self.energy_terms[k].0, 1.0 / self.energy_unit, out);
            }
        }
    }
}

fn with_positions(sched: &Schedule, positions: &[Position2D]) -> Schedule {
    Schedule::new(
        sched
            .slots
            .iter()
            .zip(positions)
            .map(|(s, q)| Slot {
                position: *q,
                ..s.clone()
            })
            .collect(),
    )
}

fn feasible_rate(scn: &Scenario, sched: &Schedule) -> Option<f64> {
    evaluate_slots(scn, sched)
        .ok()
        .filter(|r| r.neutral_within(TOLERANCES.physical))
        .map(|r| r.common_rate)
}

/// One trajectory update with the transmission schedule held fixed:
/// maximizes the worst user's minorized rate subject to minorized energy
/// neutrality, the speed limit between consecutive slots, and a box around
/// the users.
pub fn trajectory_step(scn: &Scenario, sched: &Schedule) -> Result<StepOutcome> {
    let reference = Schedule::new(
        sched
            .slots
            .iter()
            .map(|s| Slot {
                powers: s.powers.iter().map(|p| p * (1.0 - POWER_BACKOFF)).collect(),
                ..s.clone()
            })
            .collect(),
    );
    let reference_rate = evaluate_slots(scn, &reference)?.common_rate;
    let q_ref: Vec<Position2D> = reference.slots.iter().map(|s| s.position).collect();
    let unchanged = StepOutcome {
        schedule: reference.clone(),
        common_rate: reference_rate,
        reference_rate,
        accepted: false,
    };
    let prog = StepProgram::new(scn, &reference);
    let n = q_ref.len();
    let mut z0: Vec<f64> = q_ref.iter().flat_map(|q| [q.x, q.y]).collect();
    let rates = prog.rates(&z0);
    let worst = rates.iter().copied().fold(f64::INFINITY, f64::min);
    z0.push(worst - 0.1 * worst.abs() - 1e-12);
    let sol = match barrier::maximize(&prog, &z0, &BarrierOptions::default()) {
        Ok(s) => s,
        Err(_) => return Ok(unchanged),
    };
    let q_new: Vec<Position2D> = (0..n).map(|i| StepProgram::pos(&sol.z, i)).collect();
    let mut theta = 1.0;
    for _ in 0..30 {
        let trial: Vec<Position2D> = q_ref.iter().zip(&q_new).map(|(a, b)| a.lerp(b, theta)).collect();
        let cand = with_positions(&reference, &trial);
        if let Some(r) = feasible_rate(scn, &cand) {
            if r >= reference_rate - TOLERANCES.structural * reference_rate.abs().max(1.0) {
                return Ok(StepOutcome {
                    schedule: cand,
                    common_rate: r,
                    reference_rate,
                    accepted: true,
                });
            }
        }
        theta *= 0.5;
    }
    Ok(unchanged)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScpOptions {
    /// Stop once an iteration improves the common rate by less than this,
    /// relative.
    pub tol: f64,
    pub max_iters: usize,
    /// Hover segments of the initial plan are split into slots no longer
    /// than this.
    pub slot_max: f64,
}

impl Default for ScpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iters: 50,
            slot_max: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScpIterate {
    pub iteration: usize,
    pub common_rate: f64,
    /// Euclidean norm of the change in stacked slot positions.
    pub step_norm: f64,
}

#[derive(Debug, Clone)]
pub struct ScpOutcome {
    pub trajectory: Trajectory,
    pub schedule: Schedule,
    pub report: ThroughputReport,
    /// Row 0 is the initial plan.
    pub trace: Vec<ScpIterate>,
    pub converged: bool,
}

impl ScpOutcome {
    pub fn common_rate(&self) -> f64 {
        self.report.common_rate
    }
}

/// Alternates per-slot allocation and trajectory updates starting from a
/// feasible schedule, keeping whichever of the two results is better at
/// every stage so that the common rate never decreases.
pub fn alternating_optimize(scn: &Scenario, init: &Schedule, opts: &ScpOptions) -> Result<ScpOutcome> {
    if !(opts.slot_max > 0.0) || !(opts.tol >= 0.0) {
        return Err(Error::InvalidArgument("slot length must be positive and tolerance nonnegative".into()));
    }
    let init_report = evaluate_slots(scn, init)?;
    if !init_report.neutral_within(TOLERANCES.physical) {
        return Err(Error::Precondition(format!(
            "initial schedule violates energy neutrality by {:.3e}",
            init_report.max_neutrality_violation
        )));
    }
    let mut current = refine_schedule(init, opts.slot_max);
    if !DiscretizedTrajectory::from_schedule(&current).satisfies_speed(scn.max_speed()) {
        return Err(Error::Precondition("initial slot positions violate the speed limit".into()));
    }
    let mut rate = evaluate_slots(scn, &current)?.common_rate;
    let mut trace = vec![ScpIterate {
        iteration: 0,
        common_rate: rate,
        step_norm: 0.0,
    }];
    let mut converged = false;
    for it in 1..=opts.max_iters {
        let grid = DiscretizedTrajectory::from_schedule(&current);
        let mut next = current.clone();
        let mut next_rate = rate;
        if let Ok(sol) = allocation::solve_slot_allocation(scn, &grid.slots) {
            let cand = sol.slot_schedule(&grid.slots);
            if let Some(r) = feasible_rate(scn, &cand) {
                if r > next_rate {
                    next = cand;
                    next_rate = r;
                }
            }
        }
        let step = trajectory_step(scn, &next)?;
        if step.accepted && step.common_rate > next_rate {
            next = step.schedule;
            next_rate = step.common_rate;
        }
        let step_norm = current
            .slots
            .iter()
            .zip(&next.slots)
            .map(|(a, b)| a.position.dist2(&b.position))
            .sum::<f64>()
            .sqrt();
        let improvement = next_rate - rate;
        current = next;
        rate = next_rate;
        trace.push(ScpIterate {
            iteration: it,
            common_rate: rate,
            step_norm,
        });
        if improvement <= opts.tol * rate.abs() {
            converged = true;
            break;
        }
    }
    let trajectory = DiscretizedTrajectory::from_schedule(&current).to_trajectory()?;
    let report = evaluate_slots(scn, &current)?;
    Ok(ScpOutcome {
        trajectory,
        schedule: current,
        report,
        trace,
        converged,
    })
}
