//! Convex time and power allocation along a fixed trajectory.
//!
//! The period is divided into *blocks*. Each block has a duration, one or
//! more candidate UAV positions for power transfer, and for every user the
//! channel it would see while transmitting. Within a block the UAV splits
//! time between power transfer (across its options) and one uplink
//! sub-slot per user. With uplink energies `e = tau * Q` as variables the
//! rate terms become perspective functions and the max-min problem is
//! convex; it is solved with the interior-point method in [`crate::barrier`].

use serde::{Deserialize, Serialize};

use crate::barrier::{self, BarrierOptions, ConvexProgram, Derivatives, Layout};
use crate::error::{Error, Result};
use crate::model::{Position2D, Scenario, Schedule, Slot};

/// Durations and energies below this fraction of the period are zeroed in
/// the final allocation.
const CLEANUP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    /// Length of the block in seconds.
    pub duration: f64,
    /// `harvest[j][k]`: power (W) harvested by user `k` while the UAV
    /// radiates from power-transfer option `j`.
    pub harvest: Vec<Vec<f64>>,
    /// Channel gain over noise power (1/W) of each user's uplink.
    pub wit_snr: Vec<f64>,
}

impl Block {
    /// Block whose transfer and uplink all happen at one position.
    pub fn at(scn: &Scenario, duration: f64, q: &Position2D) -> Self {
        let ep = scn.efficiency() * scn.power();
        let k_users = scn.num_users();
        Self {
            duration,
            harvest: vec![(0..k_users).map(|k| ep * scn.gain_unchecked(q, k)).collect()],
            wit_snr: (0..k_users)
                .map(|k| scn.gain_unchecked(q, k) / scn.noise_power())
                .collect(),
        }
    }

    /// Hover block: power transfer from any of `wpt_points`, each user's
    /// uplink with the UAV directly above that user.
    pub fn hover(scn: &Scenario, duration: f64, wpt_points: &[Position2D]) -> Self {
        let ep = scn.efficiency() * scn.power();
        let k_users = scn.num_users();
        Self {
            duration,
            harvest: wpt_points
                .iter()
                .map(|q| (0..k_users).map(|k| ep * scn.gain_unchecked(q, k)).collect())
                .collect(),
            wit_snr: (0..k_users)
                .map(|k| scn.gain_unchecked(&scn.users()[k], k) / scn.noise_power())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub period: f64,
    pub users: usize,
    pub blocks: Vec<Block>,
}

impl AllocationProblem {
    /// Hover-and-fly problem: a hover block of length `hover_budget` plus
    /// one block per flight slot `(duration, position)`.
    pub fn hover_and_fly(
        scn: &Scenario,
        wpt_points: &[Position2D],
        hover_budget: f64,
        flight: &[(f64, Position2D)],
    ) -> Self {
        let mut blocks = vec![Block::hover(scn, hover_budget, wpt_points)];
        blocks.extend(flight.iter().map(|(d, q)| Block::at(scn, *d, q)));
        Self {
            period: scn.period(),
            users: scn.num_users(),
            blocks,
        }
    }

    /// One block per slot, each at a fixed position.
    pub fn slots(scn: &Scenario, slots: &[SlotSpec]) -> Self {
        Self {
            period: scn.period(),
            users: scn.num_users(),
            blocks: slots
                .iter()
                .map(|s| Block::at(scn, s.duration, &s.position))
                .collect(),
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.period > 0.0) || self.users == 0 {
            return Err(Error::InvalidArgument("allocation needs a positive period and users".into()));
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            if !(blk.duration >= 0.0) || blk.wit_snr.len() != self.users {
                return Err(Error::InvalidArgument(format!("block {b} is malformed")));
            }
            if blk.harvest.is_empty() || blk.harvest.iter().any(|h| h.len() != self.users) {
                return Err(Error::InvalidArgument(format!(
                    "block {b} needs at least one power-transfer option with one entry per user"
                )));
            }
            let finite_nonneg = |v: &f64| v.is_finite() && *v >= 0.0;
            if !blk.harvest.iter().flatten().all(finite_nonneg) || !blk.wit_snr.iter().all(finite_nonneg) {
                return Err(Error::InvalidArgument(format!("block {b} has invalid gains")));
            }
        }
        Ok(())
    }
}

/// Fixed-position slot for slot-level allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub start: f64,
    pub duration: f64,
    pub position: Position2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAllocation {
    /// Seconds of power transfer from each option.
    pub wpt: Vec<f64>,
    /// Seconds of uplink per user.
    pub wit: Vec<f64>,
    /// Uplink energy per user (J).
    pub energy: Vec<f64>,
    /// Uplink power per user (W), `energy / wit` or zero.
    pub power: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSolution {
    pub blocks: Vec<BlockAllocation>,
    pub rates: Vec<f64>,
    pub common_rate: f64,
    pub harvested: Vec<f64>,
    pub consumed: Vec<f64>,
    /// Duality measure reported by the interior-point solver (zero when the
    /// solution was obtained in closed form).
    pub gap: f64,
    pub converged: bool,
}

impl AllocationSolution {
    /// Schedule for a slot-level problem whose blocks are `slots`.
    pub fn slot_schedule(&self, slots: &[SlotSpec]) -> Schedule {
        Schedule::new(
            slots
                .iter()
                .zip(&self.blocks)
                .map(|(s, a)| Slot {
                    start: s.start,
                    duration: s.duration,
                    position: s.position,
                    wpt_duration: a.wpt[0],
                    wit_durations: a.wit.clone(),
                    powers: a.power.clone(),
                })
                .collect(),
        )
    }
}

/// `tau log2(1 + a e / tau)`, continuous at `tau = 0` with value 0 when
/// `e = 0`. Returns `None` for `tau = 0, e > 0` (unbounded power) and for
/// negative arguments.
pub fn perspective_rate(tau: f64, energy: f64, snr: f64) -> Option<f64> {
    if tau < 0.0 || energy < 0.0 {
        return None;
    }
    if tau == 0.0 {
        return (energy == 0.0).then_some(0.0);
    }
    Some(tau * (snr * energy / tau).ln_1p() / std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy)]
enum Con {
    Positive(usize),
    Budget(usize),
    Rate(usize),
    Energy(usize),
}

struct BlockVars {
    offset: usize,
    options: usize,
    /// Normalized duration `delta / T`.
    duration: f64,
}

/// The normalized program: durations in units of the period, energies in
/// units of `period * unit_power`.
struct Program<'a> {
    prob: &'a AllocationProblem,
    /// Indices of blocks with positive duration.
    active: Vec<usize>,
    vars: Vec<BlockVars>,
    locals: usize,
    bandwidth: usize,
    unit_power: f64,
    cons: Vec<Con>,
}

impl<'a> Program<'a> {
    fn new(prob: &'a AllocationProblem) -> Self {
        let k = prob.users;
        let active: Vec<usize> = (0..prob.blocks.len())
            .filter(|&b| prob.blocks[b].duration > 0.0)
            .collect();
        let unit_power = active
            .iter()
            .flat_map(|&b| prob.blocks[b].harvest.iter().flatten())
            .fold(0.0f64, |m, &v| m.max(v));
        let mut vars = Vec::with_capacity(active.len());
        let mut offset = 0;
        let mut bandwidth = 0;
        let mut cons = Vec::new();
        for &b in &active {
            let blk = &prob.blocks[b];
            let size = blk.harvest.len() + 2 * k;
            for v in offset..offset + size {
                cons.push(Con::Positive(v));
            }
            cons.push(Con::Budget(vars.len()));
            vars.push(BlockVars {
                offset,
                options: blk.harvest.len(),
                duration: blk.duration / prob.period,
            });
            offset += size;
            bandwidth = bandwidth.max(size - 1);
        }
        cons.extend((0..k).map(Con::Rate));
        cons.extend((0..k).map(Con::Energy));
        Self {
            prob,
            active,
            vars,
            locals: offset,
            bandwidth,
            unit_power,
            cons,
        }
    }

    fn block(&self, i: usize) -> &Block {
        &self.prob.blocks[self.active[i]]
    }

    #[inline]
    fn tau_idx(&self, i: usize, k: usize) -> usize {
        self.vars[i].offset + self.vars[i].options + k
    }

    #[inline]
    fn e_idx(&self, i: usize, k: usize) -> usize {
        self.vars[i].offset + self.vars[i].options + self.prob.users + k
    }

    fn snr(&self, i: usize, k: usize) -> f64 {
        self.block(i).wit_snr[k] * self.unit_power
    }

    fn coef(&self, i: usize, j: usize, k: usize) -> f64 {
        self.block(i).harvest[j][k] / self.unit_power
    }

    fn rate(&self, z: &[f64], k: usize) -> f64 {
        (0..self.vars.len())
            .map(|i| {
                let tau = z[self.tau_idx(i, k)];
                let e = z[self.e_idx(i, k)];
                if tau <= 0.0 || e < 0.0 {
                    f64::NAN
                } else {
                    tau * (self.snr(i, k) * e / tau).ln_1p() / std::f64::consts::LN_2
                }
            })
            .sum()
    }

    fn energy_margin(&self, z: &[f64], k: usize) -> f64 {
        let mut m = 0.0;
        for (i, v) in self.vars.iter().enumerate() {
            for j in 0..v.options {
                m += self.coef(i, j, k) * z[v.offset + j];
            }
            m -= z[self.e_idx(i, k)];
        }
        m
    }

    fn budget(&self, z: &[f64], i: usize) -> f64 {
        let v = &self.vars[i];
        let used: f64 = z[v.offset..v.offset + v.options + self.prob.users].iter().sum();
        v.duration - used
    }

    fn initial_point(&self) -> Vec<f64> {
        let k = self.prob.users;
        let mut z = vec![0.0; self.locals + 1];
        for v in &self.vars {
            for j in 0..v.options {
                z[v.offset + j] = 0.5 * v.duration / v.options as f64;
            }
            for u in 0..k {
                z[v.offset + v.options + u] = 0.4 * v.duration / k as f64;
            }
        }
        for u in 0..k {
            let available: f64 = (0..self.vars.len())
                .map(|i| {
                    (0..self.vars[i].options)
                        .map(|j| self.coef(i, j, u) * z[self.vars[i].offset + j])
                        .sum::<f64>()
                })
                .sum();
            let tau_total: f64 = (0..self.vars.len()).map(|i| z[self.tau_idx(i, u)]).sum();
            for i in 0..self.vars.len() {
                z[self.e_idx(i, u)] = 0.5 * available * z[self.tau_idx(i, u)] / tau_total;
            }
        }
        let min_rate = (0..k).map(|u| self.rate(&z, u)).fold(f64::INFINITY, f64::min);
        z[self.locals] = min_rate - 0.1 * min_rate.abs() - 1e-12;
        z
    }
}

impl ConvexProgram for Program<'_> {
    fn layout(&self) -> Layout {
        Layout {
            locals: self.locals,
            globals: 1,
            bandwidth: self.bandwidth,
        }
    }

    fn objective(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.locals + 1];
        c[self.locals] = 1.0;
        c
    }

    fn num_constraints(&self) -> usize {
        self.cons.len()
    }

    fn values(&self, z: &[f64], out: &mut [f64]) {
        let r = z[self.locals];
        for (o, c) in out.iter_mut().zip(&self.cons) {
            *o = match *c {
                Con::Positive(v) => z[v],
                Con::Budget(i) => self.budget(z, i),
                Con::Rate(k) => self.rate(z, k) - r,
                Con::Energy(k) => self.energy_margin(z, k),
            };
        }
    }

    fn derivatives(&self, i: usize, z: &[f64], d: &mut Derivatives) {
        d.clear();
        match self.cons[i] {
            Con::Positive(v) => d.grad.push((v, 1.0)),
            Con::Budget(b) => {
                let v = &self.vars[b];
                for idx in v.offset..v.offset + v.options + self.prob.users {
                    d.grad.push((idx, -1.0));
                }
            }
            Con::Rate(k) => {
                let ln2 = std::f64::consts::LN_2;
                for b in 0..self.vars.len() {
                    let a = self.snr(b, k);
                    if a == 0.0 {
                        continue;
                    }
                    let (ti, ei) = (self.tau_idx(b, k), self.e_idx(b, k));
                    let (tau, e) = (z[ti], z[ei]);
                    let v = e / tau;
                    let av = a * v;
                    d.grad.push((ti, (av.ln_1p() - av / (1.0 + av)) / ln2));
                    d.grad.push((ei, a / ((1.0 + av) * ln2)));
                    let w = -a * a / ((1.0 + av).powi(2) * ln2 * tau);
                    d.hess.push((ti, ti, w * v * v));
                    d.hess.push((ti, ei, -w * v));
                    d.hess.push((ei, ei, w));
                }
                d.grad.push((self.locals, -1.0));
            }
            Con::Energy(k) => {
                for (b, v) in self.vars.iter().enumerate() {
                    for j in 0..v.options {
                        let c = self.coef(b, j, k);
                        if c != 0.0 {
                            d.grad.push((v.offset + j, c));
                        }
                    }
                    d.grad.push((self.e_idx(b, k), -1.0));
                }
            }
        }
    }
}

fn zero_rate_solution(prob: &AllocationProblem) -> AllocationSolution {
    let k = prob.users;
    let mut harvested = vec![0.0; k];
    let blocks = prob
        .blocks
        .iter()
        .map(|blk| {
            let mut wpt = vec![0.0; blk.harvest.len()];
            wpt[0] = blk.duration;
            for (u, h) in harvested.iter_mut().enumerate() {
                *h += blk.harvest[0][u] * blk.duration;
            }
            BlockAllocation {
                wpt,
                wit: vec![0.0; k],
                energy: vec![0.0; k],
                power: vec![0.0; k],
            }
        })
        .collect();
    AllocationSolution {
        blocks,
        rates: vec![0.0; k],
        common_rate: 0.0,
        harvested,
        consumed: vec![0.0; k],
        gap: 0.0,
        converged: true,
    }
}

/// Maximizes the common rate over all blocks of `prob`.
pub fn solve(prob: &AllocationProblem) -> Result<AllocationSolution> {
    solve_with(prob, &BarrierOptions::default())
}

pub fn solve_with(prob: &AllocationProblem, opts: &BarrierOptions) -> Result<AllocationSolution> {
    prob.check()?;
    let k = prob.users;
    let total: f64 = prob.blocks.iter().map(|b| b.duration).sum();
    if !(total > 0.0) {
        return Err(Error::EmptyProblem);
    }
    // a user that can never harvest or never be heard pins the common rate
    // at zero
    let hopeless = (0..k).any(|u| {
        let harvest = prob
            .blocks
            .iter()
            .filter(|b| b.duration > 0.0)
            .any(|b| b.harvest.iter().any(|h| h[u] > 0.0));
        let heard = prob
            .blocks
            .iter()
            .filter(|b| b.duration > 0.0)
            .any(|b| b.wit_snr[u] > 0.0);
        !(harvest && heard)
    });
    if hopeless {
        return Ok(zero_rate_solution(prob));
    }

    let program = Program::new(prob);
    let z0 = program.initial_point();
    let sol = barrier::maximize(&program, &z0, opts)?;
    Ok(extract(&program, &sol.z, sol.gap, sol.converged))
}

fn extract(program: &Program, z: &[f64], gap: f64, converged: bool) -> AllocationSolution {
    let prob = program.prob;
    let k = prob.users;
    let t = prob.period;
    let e_unit = t * program.unit_power;
    let cut = CLEANUP_TOL * t;
    let mut blocks: Vec<BlockAllocation> = prob
        .blocks
        .iter()
        .map(|blk| BlockAllocation {
            wpt: vec![0.0; blk.harvest.len()],
            wit: vec![0.0; k],
            energy: vec![0.0; k],
            power: vec![0.0; k],
        })
        .collect();
    for (i, &b) in program.active.iter().enumerate() {
        let v = &program.vars[i];
        let blk = &prob.blocks[b];
        let out = &mut blocks[b];
        for j in 0..v.options {
            let d = z[v.offset + j] * t;
            out.wpt[j] = if d < cut { 0.0 } else { d };
        }
        for u in 0..k {
            let tau = z[program.tau_idx(i, u)] * t;
            if tau >= cut {
                out.wit[u] = tau;
                out.energy[u] = z[program.e_idx(i, u)] * e_unit;
                out.power[u] = out.energy[u] / tau;
            }
        }
        // leftover time goes to the dominant power-transfer option
        let used: f64 = out.wpt.iter().sum::<f64>() + out.wit.iter().sum::<f64>();
        let slack = blk.duration - used;
        let j_max = (0..v.options)
            .max_by(|&a, &b| out.wpt[a].total_cmp(&out.wpt[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        if slack > 0.0 {
            out.wpt[j_max] += slack;
        } else if slack < 0.0 {
            // round-off overshoot; trim the same option without going negative
            out.wpt[j_max] = (out.wpt[j_max] + slack).max(0.0);
        }
    }
    let mut harvested = vec![0.0; k];
    let mut consumed = vec![0.0; k];
    let mut bits = vec![0.0; k];
    for (blk, a) in prob.blocks.iter().zip(&blocks) {
        for u in 0..k {
            for (j, d) in a.wpt.iter().enumerate() {
                harvested[u] += blk.harvest[j][u] * d;
            }
            consumed[u] += a.energy[u];
            bits[u] += perspective_rate(a.wit[u], a.energy[u], blk.wit_snr[u]).unwrap_or(0.0);
        }
    }
    // the interior solution is strictly neutral; guard against round-off in
    // the unit conversion by trimming energies proportionally
    for u in 0..k {
        if consumed[u] > harvested[u] {
            let s = harvested[u] / consumed[u];
            bits[u] = 0.0;
            for (blk, a) in prob.blocks.iter().zip(blocks.iter_mut()) {
                a.energy[u] *= s;
                a.power[u] *= s;
                bits[u] += perspective_rate(a.wit[u], a.energy[u], blk.wit_snr[u]).unwrap_or(0.0);
            }
            consumed[u] = blocks.iter().map(|a| a.energy[u]).sum();
        }
    }
    let rates: Vec<f64> = bits.iter().map(|b| b / t).collect();
    let common_rate = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    AllocationSolution {
        blocks,
        rates,
        common_rate,
        harvested,
        consumed,
        gap,
        converged,
    }
}

/// Hover-and-fly allocation: hover time shared among `wpt_points` (power
/// transfer) and the users' own positions (uplink), plus per-slot
/// allocation on the flight legs. Block 0 of the result is the hover block.
pub fn solve_p3(
    scn: &Scenario,
    wpt_points: &[Position2D],
    hover_budget: f64,
    flight: &[(f64, Position2D)],
) -> Result<AllocationSolution> {
    solve(&AllocationProblem::hover_and_fly(scn, wpt_points, hover_budget, flight))
}

/// Per-slot allocation along a discretized trajectory.
pub fn solve_slot_allocation(scn: &Scenario, slots: &[SlotSpec]) -> Result<AllocationSolution> {
    solve(&AllocationProblem::slots(scn, slots))
}

/// Optimal allocation while hovering at `q` for the whole period.
pub fn solve_static(scn: &Scenario, q: Position2D) -> Result<(AllocationSolution, f64)> {
    let sol = solve_slot_allocation(
        scn,
        &[SlotSpec {
            start: 0.0,
            duration: scn.period(),
            position: q,
        }],
    )?;
    let r = sol.common_rate;
    Ok((sol, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate_slots, ScenarioParams};
    use proptest::prelude::*;

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

    /// Best common rate of one user charged from `c` (W) and transmitting
    /// with gain-over-noise `a`, by scanning the uplink time.
    pub(crate) fn single_user_oracle(t: f64, budget: f64, c: f64, a: f64) -> f64 {
        let n = 10_000;
        (1..n)
            .map(|i| {
                let s = budget * i as f64 / n as f64;
                let energy = (budget - s) * c;
                s / t * (1.0 + a * energy / s).log2()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_user_hover_matches_oracle() {
        let w = Position2D::new(1.0, 1.0);
        let scn = scenario(vec![w], 10.0);
        let sol = solve_p3(&scn, &[w], 10.0, &[]).unwrap();
        let c = 0.5 * 10.0 * 4e-5;
        let a = 4e-5 / 1e-11;
        let oracle = single_user_oracle(10.0, 10.0, c, a);
        assert!((sol.common_rate - oracle).abs() <= 1e-3 * oracle, "{} vs {oracle}", sol.common_rate);
        assert!(sol.common_rate >= oracle * (1.0 - 1e-9));
    }

    #[test]
    fn static_matches_single_user_oracle() {
        let w = Position2D::new(0.0, 0.0);
        let scn = scenario(vec![w], 4.0);
        let (_, r) = solve_static(&scn, Position2D::new(2.0, 0.0)).unwrap();
        let h = 1e-3 / 29.0;
        let oracle = single_user_oracle(4.0, 4.0, 5.0 * h, h / 1e-11);
        assert!((r - oracle).abs() <= 1e-3 * oracle);
    }

    #[test]
    fn symmetric_pair_is_fair() {
        let users = vec![Position2D::new(-5.0, 0.0), Position2D::new(5.0, 0.0)];
        let scn = scenario(users, 10.0);
        let wpt = [Position2D::new(-4.551, 0.0), Position2D::new(4.551, 0.0)];
        let sol = solve_p3(&scn, &wpt, 9.0, &[(0.5, Position2D::new(-2.5, 0.0)), (0.5, Position2D::new(2.5, 0.0))]).unwrap();
        let h = &sol.blocks[0];
        assert!((h.wit[0] - h.wit[1]).abs() < 1e-6 * 10.0);
        assert!((sol.rates[0] - sol.rates[1]).abs() < 1e-6 * sol.rates[0]);
        let (_, r) = solve_static(&scn, Position2D::new(0.0, 0.0)).unwrap();
        assert!(r > 0.0);
        let (mid, _) = solve_static(&scn, Position2D::new(0.0, 0.0)).unwrap();
        assert!((mid.blocks[0].wit[0] - mid.blocks[0].wit[1]).abs() < 1e-6 * 10.0);
        for q in [Position2D::new(1.0, 0.0), Position2D::new(0.0, 2.0), Position2D::new(-3.0, 1.0)] {
            let (_, rq) = solve_static(&scn, q).unwrap();
            assert!(rq <= r * (1.0 + 1e-9));
        }
    }

    #[test]
    fn solution_is_neutral_and_consistent() {
        let users = vec![
            Position2D::new(0.0, 0.0),
            Position2D::new(6.0, 2.0),
            Position2D::new(2.0, 9.0),
        ];
        let scn = scenario(users, 3.0);
        let slots: Vec<SlotSpec> = (0..6)
            .map(|n| SlotSpec {
                start: 0.5 * n as f64,
                duration: 0.5,
                position: Position2D::new(n as f64, 1.5 * n as f64),
            })
            .collect();
        let sol = solve_slot_allocation(&scn, &slots).unwrap();
        assert!(sol.converged);
        let rep = evaluate_slots(&scn, &sol.slot_schedule(&slots)).unwrap();
        assert!(rep.neutral);
        assert!((rep.common_rate - sol.common_rate).abs() < 1e-9);
        // at an interior optimum every user attains the common rate
        for r in &sol.rates {
            assert!((r - sol.common_rate).abs() < 1e-6 * sol.common_rate);
        }
    }

    #[test]
    fn identical_slots_get_identical_allocations() {
        let users = vec![Position2D::new(0.0, 0.0), Position2D::new(4.0, 0.0)];
        let scn = scenario(users, 2.0);
        let q = Position2D::new(1.0, 0.0);
        let slots: Vec<SlotSpec> = (0..4)
            .map(|n| SlotSpec { start: 0.5 * n as f64, duration: 0.5, position: q })
            .collect();
        let sol = solve_slot_allocation(&scn, &slots).unwrap();
        for b in &sol.blocks[1..] {
            for u in 0..2 {
                assert!((b.wit[u] - sol.blocks[0].wit[u]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn relabeling_users_and_permuting_slots() {
        let users = vec![Position2D::new(0.0, 0.0), Position2D::new(7.0, 3.0)];
        let swapped = vec![users[1], users[0]];
        let slots: Vec<SlotSpec> = (0..3)
            .map(|n| SlotSpec {
                start: n as f64,
                duration: 1.0,
                position: Position2D::new(2.0 * n as f64, n as f64),
            })
            .collect();
        let mut reversed = slots.clone();
        reversed.reverse();
        for (n, s) in reversed.iter_mut().enumerate() {
            s.start = n as f64;
        }
        let a = solve_slot_allocation(&scenario(users, 3.0), &slots).unwrap();
        let b = solve_slot_allocation(&scenario(swapped, 3.0), &reversed).unwrap();
        assert!((a.common_rate - b.common_rate).abs() < 1e-7 * a.common_rate);
    }

    #[test]
    fn far_away_trajectory_is_still_feasible() {
        let scn = scenario(vec![Position2D::new(0.0, 0.0)], 1.0);
        let (sol, r) = solve_static(&scn, Position2D::new(5e4, 0.0)).unwrap();
        assert!((0.0..1e-3).contains(&r));
        assert!(sol.consumed[0] <= sol.harvested[0]);
    }

    #[test]
    fn dead_flight_slots_add_nothing() {
        let w = Position2D::new(0.0, 0.0);
        let scn = scenario(vec![w], 10.0);
        let base = solve_p3(&scn, &[w], 9.0, &[]).unwrap();
        let mut prob = AllocationProblem::hover_and_fly(&scn, &[w], 9.0, &[(1.0, w)]);
        prob.blocks[1].harvest = vec![vec![0.0]];
        prob.blocks[1].wit_snr = vec![0.0];
        let dead = solve(&prob).unwrap();
        assert!((dead.common_rate - base.common_rate).abs() < 1e-7 * base.common_rate);
    }

    #[test]
    fn empty_problem_rejected() {
        let w = Position2D::new(0.0, 0.0);
        let scn = scenario(vec![w], 1.0);
        assert_eq!(solve_p3(&scn, &[w], 0.0, &[]), Err(Error::EmptyProblem));
    }

    #[test]
    fn perspective_boundary() {
        assert_eq!(perspective_rate(0.0, 0.0, 5.0), Some(0.0));
        assert_eq!(perspective_rate(0.0, 1.0, 5.0), None);
        assert_eq!(perspective_rate(-1.0, 0.0, 5.0), None);
    }

    proptest! {
        #[test]
        fn perspective_midpoint_concave(
            t1 in 1e-6..10.0f64, e1 in 0.0..10.0f64,
            t2 in 1e-6..10.0f64, e2 in 0.0..10.0f64,
            a in 1e-3..1e4f64,
        ) {
            let f = |t, e| perspective_rate(t, e, a).unwrap();
            let mid = f(0.5 * (t1 + t2), 0.5 * (e1 + e2));
            prop_assert!(mid >= 0.5 * (f(t1, e1) + f(t2, e2)) - 1e-12 * (1.0 + mid.abs()));
        }
    }
}
