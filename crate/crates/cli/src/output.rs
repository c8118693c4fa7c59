//! Writes run artifacts under `<out>/<scenario>/<method>/`.
//!
//! `report.json` holds no wall-clock data so that identical inputs give
//! byte-identical reports; run time goes to `timing.json` next to it.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::json;

use crate::commands::{Artifacts, Context, SweepRow, Trace};
use crate::CliError;

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_timing(dir: &Path, elapsed: Duration) -> Result<(), CliError> {
    write_json(&dir.join("timing.json"), &json!({"seconds": elapsed.as_secs_f64()}))
}

/// The report document for `art`.
pub fn report_json(ctx: &Context, art: &Artifacts) -> serde_json::Value {
    json!({
        "method": art.method.tag(),
        "scenario": {
            "name": ctx.name,
            "digest": ctx.file.digest(),
            "period_s": ctx.scenario.period(),
            "file": ctx.file,
        },
        "seed": ctx.seed,
        "converged": art.converged,
        "throughput": art.throughput,
        "solution": art.solution,
        "diagnostics": art.diagnostics,
    })
}

pub fn write_artifacts(out: &Path, ctx: &Context, art: &Artifacts, elapsed: Duration) -> Result<PathBuf, CliError> {
    let dir = out.join(&ctx.name).join(art.method.tag());
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("report.json"), &report_json(ctx, art))?;
    write_json(&dir.join("schedule.json"), &art.schedule)?;
    if let Some(traj) = &art.trajectory {
        let mut w = csv::Writer::from_path(dir.join("trajectory.csv"))?;
        w.write_record(["t_s", "x_m", "y_m"])?;
        for wp in traj.waypoints() {
            w.serialize((wp.t, wp.position.x, wp.position.y))?;
        }
        w.flush()?;
    }
    match &art.trace {
        Some(Trace::Dual(rows)) => {
            let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
            w.write_record(["iteration", "dual_value", "residual"])?;
            for r in rows {
                w.serialize((r.iteration, r.value, r.residual))?;
            }
            w.flush()?;
        }
        Some(Trace::Scp(rows)) => {
            let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
            w.write_record(["iteration", "common_rate", "step_norm"])?;
            for r in rows {
                w.serialize((r.iteration, r.common_rate, r.step_norm))?;
            }
            w.flush()?;
        }
        None => {}
    }
    if let Some(h) = &art.hovering {
        let mut w = csv::Writer::from_path(dir.join("hovering.csv"))?;
        w.write_record(["kind", "user", "x_m", "y_m", "duration_s", "power_w"])?;
        for p in &h.wpt {
            w.serialize(("wpt", "", p.position.x, p.position.y, p.duration, 0.0))?;
        }
        for (k, p) in h.wit.iter().enumerate() {
            w.serialize(("wit", k, p.position.x, p.position.y, p.duration, p.power))?;
        }
        w.flush()?;
    }
    write_timing(&dir, elapsed)?;
    Ok(dir)
}

pub fn write_sweep(out: &Path, ctx: &Context, rows: &[SweepRow], elapsed: Duration) -> Result<PathBuf, CliError> {
    let dir = out.join(&ctx.name).join("sweep");
    fs::create_dir_all(&dir)?;
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    w.write_record(["method", "period_s", "common_rate"])?;
    for r in rows {
        for (m, v) in [
            ("static", r.static_hover),
            ("hover-fly", r.hover_fly),
            ("scp", r.scp),
            ("relaxed", r.relaxed),
        ] {
            w.serialize((m, r.period, v))?;
        }
    }
    w.flush()?;
    write_json(
        &dir.join("report.json"),
        &json!({
            "method": "sweep",
            "scenario": {"name": ctx.name, "digest": ctx.file.digest(), "file": ctx.file},
            "seed": ctx.seed,
            "rows": rows,
        }),
    )?;
    write_timing(&dir, elapsed)?;
    Ok(dir)
}

