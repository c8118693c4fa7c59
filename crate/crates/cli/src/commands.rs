use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use uav_wpcn::dual::{self, DualOptions, DualTraceRow, GridSpec, HoveringSolution};
use uav_wpcn::planner::{self, Branch, PlanOptions, TourOptions};
use uav_wpcn::scp::{self, ScpIterate, ScpOptions};
use uav_wpcn::{
    evaluate_slots, validate_plan, Position2D, Scenario, Schedule, ThroughputReport, Trajectory, TOLERANCES,
};

use crate::scenario::ScenarioFile;
use crate::CliError;

pub const DEFAULT_SWEEP: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Relaxed,
    HoverFly,
    Scp,
    Static,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Relaxed => "relaxed",
            Method::HoverFly => "hover-fly",
            Method::Scp => "scp",
            Method::Static => "static",
        }
    }
}

/// Command-line settings that override the scenario file.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub seed: u64,
    /// Number of slots the period is divided into at most.
    pub slots: Option<usize>,
    pub tol: Option<f64>,
    pub grid: Option<f64>,
}

/// Everything a command needs: the parsed file, the scenario and the
/// resolved solver settings.
#[derive(Debug, Clone)]
pub struct Context {
    pub name: String,
    pub file: ScenarioFile,
    pub scenario: Scenario,
    pub seed: u64,
    pub dual: DualOptions,
    pub plan: PlanOptions,
    pub scp: ScpOptions,
    /// Longest slot as requested by `--slots`, if given.
    slots: Option<usize>,
}

impl Context {
    pub fn new(name: &str, file: ScenarioFile, flags: &Flags) -> Result<Self, CliError> {
        let scenario = file.to_scenario()?;
        let s = &file.solver;
        let grid = flags.grid.or(s.grid_m);
        let mut dual = DualOptions::default();
        dual.tol = flags.tol.or(s.dual_tol).unwrap_or(dual.tol);
        dual.max_iters = s.dual_max_iters.unwrap_or(dual.max_iters);
        dual.grid = grid.map(GridSpec::new).transpose()?;
        if dual.tol.is_nan() || dual.tol <= 0.0 {
            return Err(CliError::Core(uav_wpcn::error::Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                dual.tol
            ))));
        }
        let mut ctx = Self {
            name: name.to_string(),
            scenario: scenario.clone(),
            seed: flags.seed,
            dual,
            plan: PlanOptions {
                tour: TourOptions {
                    seed: flags.seed,
                    ..TourOptions::default()
                },
                static_grid: grid,
                ..PlanOptions::default()
            },
            scp: ScpOptions {
                tol: s.scp_tol.unwrap_or(ScpOptions::default().tol),
                max_iters: s.scp_max_iters.unwrap_or(ScpOptions::default().max_iters),
                ..ScpOptions::default()
            },
            slots: flags.slots,
            file,
        };
        if flags.slots == Some(0) {
            return Err(CliError::Core(uav_wpcn::error::Error::InvalidArgument(
                "slot count must be positive".into(),
            )));
        }
        ctx.set_period(scenario.period())?;
        Ok(ctx)
    }

    pub fn load(path: &Path, flags: &Flags) -> Result<Self, CliError> {
        let file = ScenarioFile::load(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        Self::new(&name, file, flags)
    }

    /// Changes the flight period, keeping every other setting.
    pub fn set_period(&mut self, period: f64) -> Result<(), CliError> {
        self.scenario = self.scenario.with_period(period)?;
        let slot_max = match self.slots {
            Some(n) => period / n as f64,
            None => self.file.solver.slot_max_s.unwrap_or(0.2),
        };
        self.plan.slot_max = slot_max;
        self.scp.slot_max = slot_max;
        Ok(())
    }

    pub fn with_period(&self, period: f64) -> Result<Self, CliError> {
        let mut c = self.clone();
        c.set_period(period)?;
        Ok(c)
    }

    pub fn sweep_periods(&self) -> Vec<f64> {
        self.file
            .solver
            .sweep_periods_s
            .clone()
            .unwrap_or_else(|| DEFAULT_SWEEP.to_vec())
    }
}

#[derive(Debug, Clone)]
pub enum Trace {
    Dual(Vec<DualTraceRow>),
    Scp(Vec<ScpIterate>),
}

/// Result of one method on one scenario, validated and ready to write.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub method: Method,
    pub throughput: ThroughputReport,
    pub converged: bool,
    pub solution: Value,
    pub diagnostics: Value,
    pub trajectory: Option<Trajectory>,
    pub schedule: Schedule,
    pub hovering: Option<HoveringSolution>,
    pub trace: Option<Trace>,
}

impl Artifacts {
    pub fn common_rate(&self) -> f64 {
        self.throughput.common_rate
    }
}

fn validated(scn: &Scenario, traj: &Trajectory, sched: &Schedule) -> Result<ThroughputReport, CliError> {
    Ok(validate_plan(scn, traj, sched)?)
}

fn point(q: &Position2D) -> Value {
    json!([q.x, q.y])
}

/// Relaxed problem: hovering locations, durations and powers.
pub fn run_relaxed(ctx: &Context) -> Result<Artifacts, CliError> {
    let scn = &ctx.scenario;
    let (sol, diag) = dual::solve_relaxed(scn, &ctx.dual)?;
    let schedule = sol.to_schedule(scn);
    let throughput = evaluate_slots(scn, &schedule)?;
    if !throughput.neutral_within(TOLERANCES.physical) {
        return Err(uav_wpcn::error::Error::Validation(format!(
            "relaxed schedule violates energy neutrality by {:.3e}",
            throughput.max_neutrality_violation
        ))
        .into());
    }
    let solution = json!({
        "common_rate": sol.common_rate,
        "wpt": sol.wpt.iter().map(|w| json!({"position": point(&w.position), "duration_s": w.duration})).collect::<Vec<_>>(),
        "wit": sol.wit.iter().map(|w| json!({"position": point(&w.position), "duration_s": w.duration, "power_w": w.power})).collect::<Vec<_>>(),
    });
    let diagnostics = json!({
        "dual_iterations": diag.dual.iterations,
        "dual_value": diag.dual.value,
        "dual_lower_bound": diag.dual.lower_bound,
        "lambda": diag.dual.duals.lambda(),
        "mu": diag.dual.duals.mu(),
        "equalization_residual": diag.equalization_residual,
        "candidates": diag.candidates,
    });
    Ok(Artifacts {
        method: Method::Relaxed,
        throughput,
        converged: diag.dual.converged,
        solution,
        diagnostics,
        trajectory: None,
        schedule,
        hovering: Some(sol),
        trace: Some(Trace::Dual(diag.dual.trace)),
    })
}

/// Hover-and-fly plan from a relaxed solution already at hand.
pub fn plan_from(ctx: &Context, relaxed: &HoveringSolution) -> Result<(Artifacts, planner::HoverFlyPlan), CliError> {
    let scn = &ctx.scenario;
    let plan = planner::plan_hover_and_fly(scn, relaxed, &ctx.plan)?;
    let throughput = validated(scn, &plan.trajectory, &plan.schedule)?;
    let branch = match plan.branch {
        Branch::HoverFly => json!({"kind": "hover-fly"}),
        Branch::Scaled { nu, q_fix } => json!({"kind": "scaled", "nu": nu, "q_fix": point(&q_fix)}),
    };
    let solution = json!({
        "common_rate": throughput.common_rate,
        "branch": branch,
        "hover_points": plan.tour.order.iter().map(|&i| json!({
            "position": point(&plan.points.points[i]),
            "role": plan.points.roles[i],
            "hover_s": plan.hover[i],
        })).collect::<Vec<_>>(),
        "tour_length_m": plan.tour.distance,
        "flight_time_s": plan.tour.flight_time,
    });
    let diagnostics = json!({
        "allocation_gap": plan.allocation.gap,
        "slots": plan.schedule.slots.len(),
        "seed": ctx.seed,
    });
    let art = Artifacts {
        method: Method::HoverFly,
        throughput,
        converged: plan.allocation.converged,
        solution,
        diagnostics,
        trajectory: Some(plan.trajectory.clone()),
        schedule: plan.schedule.clone(),
        hovering: None,
        trace: None,
    };
    Ok((art, plan))
}

pub fn run_plan(ctx: &Context) -> Result<Artifacts, CliError> {
    let (relaxed, _) = dual::solve_relaxed(&ctx.scenario, &ctx.dual)?;
    Ok(plan_from(ctx, &relaxed)?.0)
}

/// Alternating refinement starting from a hover-and-fly schedule.
pub fn optimize_from(ctx: &Context, init: &Schedule) -> Result<Artifacts, CliError> {
    let scn = &ctx.scenario;
    let out = scp::alternating_optimize(scn, init, &ctx.scp)?;
    let throughput = validated(scn, &out.trajectory, &out.schedule)?;
    let initial = out.trace.first().map_or(0.0, |r| r.common_rate);
    let solution = json!({
        "common_rate": throughput.common_rate,
        "initial_common_rate": initial,
        "iterations": out.trace.len() - 1,
        "path_length_m": out.trajectory.path_length(),
    });
    let diagnostics = json!({
        "slots": out.schedule.slots.len(),
        "tol": ctx.scp.tol,
        "max_iters": ctx.scp.max_iters,
        "seed": ctx.seed,
    });
    Ok(Artifacts {
        method: Method::Scp,
        throughput,
        converged: out.converged,
        solution,
        diagnostics,
        trajectory: Some(out.trajectory),
        schedule: out.schedule,
        hovering: None,
        trace: Some(Trace::Scp(out.trace)),
    })
}

pub fn run_optimize(ctx: &Context) -> Result<Artifacts, CliError> {
    let (relaxed, _) = dual::solve_relaxed(&ctx.scenario, &ctx.dual)?;
    let (_, plan) = plan_from(ctx, &relaxed)?;
    optimize_from(ctx, &plan.schedule)
}

/// Static hovering at a given location.
pub fn static_at(ctx: &Context, q: Position2D) -> Result<Artifacts, CliError> {
    let scn = &ctx.scenario;
    let (trajectory, schedule, sol) = planner::static_plan(scn, q)?;
    let throughput = validated(scn, &trajectory, &schedule)?;
    Ok(Artifacts {
        method: Method::Static,
        throughput,
        converged: sol.converged,
        solution: json!({"common_rate": sol.common_rate, "position": point(&q)}),
        diagnostics: json!({"allocation_gap": sol.gap}),
        trajectory: Some(trajectory),
        schedule,
        hovering: None,
        trace: None,
    })
}

pub fn run_baseline(ctx: &Context) -> Result<Artifacts, CliError> {
    let (q, _) = planner::static_hover_search(&ctx.scenario, ctx.plan.static_grid)?;
    static_at(ctx, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub period: f64,
    pub flight_time: f64,
    pub relaxed: f64,
    pub hover_fly: f64,
    pub scp: f64,
    pub static_hover: f64,
    pub converged: bool,
}

/// All four methods over a list of periods. The relaxed solution and the
/// static hover location do not depend on the period and are computed once;
/// the periods then run in parallel.
pub fn run_sweep(ctx: &Context, periods: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    let (relaxed, diag) = dual::solve_relaxed(&ctx.scenario, &ctx.dual)?;
    let (q_fix, _) = planner::static_hover_search(&ctx.scenario, ctx.plan.static_grid)?;
    periods
        .par_iter()
        .map(|&t| {
            let mut c = ctx.with_period(t)?;
            c.plan.q_fix = Some(q_fix);
            // relaxed hover durations scale with the period
            let scale = t / ctx.scenario.period();
            let scaled = HoveringSolution {
                wpt: relaxed
                    .wpt
                    .iter()
                    .map(|w| dual::WptHover { duration: w.duration * scale, ..w.clone() })
                    .collect(),
                wit: relaxed
                    .wit
                    .iter()
                    .map(|w| dual::WitHover { duration: w.duration * scale, ..w.clone() })
                    .collect(),
                common_rate: relaxed.common_rate,
            };
            let relaxed_rate = evaluate_slots(&c.scenario, &scaled.to_schedule(&c.scenario))?.common_rate;
            let (hf, plan) = plan_from(&c, &scaled)?;
            let scp = optimize_from(&c, &plan.schedule)?;
            let stat = static_at(&c, q_fix)?;
            Ok(SweepRow {
                period: t,
                flight_time: plan.tour.flight_time,
                relaxed: relaxed_rate,
                hover_fly: hf.common_rate(),
                scp: scp.common_rate(),
                static_hover: stat.common_rate(),
                converged: diag.dual.converged && hf.converged && scp.converged && stat.converged,
            })
        })
        .collect()
}
