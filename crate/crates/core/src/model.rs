//! Physical and information-theoretic model of the network: line-of-sight
//! channel gains, harvested power, uplink rates and the per-period energy
//! accounting shared by every solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances shared by the validators and solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative tolerance for structural identities (slot tiling, duration
    /// sums, speed bound).
    pub structural: f64,
    /// Relative tolerance for physical constraints (energy neutrality).
    pub physical: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    structural: 1e-9,
    physical: 1e-6,
};

/// Horizontal position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position2D {
    pub x: f64,
    pub y: f64,
}

impl Position2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(&self, other: &Position2D) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Position2D) -> f64 {
        self.dist2(other).sqrt()
    }

    /// Point at fraction `s` of the way from `self` to `other`.
    pub fn lerp(&self, other: &Position2D, s: f64) -> Position2D {
        Position2D::new(
            self.x + s * (other.x - self.x),
            self.y + s * (other.y - self.y),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Scenario inputs in linear units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub users: Vec<Position2D>,
    /// Flight altitude `H` in meters.
    pub altitude: f64,
    /// Channel power gain at the 1 m reference distance.
    pub beta0: f64,
    /// Receiver noise power in Watts.
    pub noise_power: f64,
    /// RF-to-DC conversion efficiency.
    pub efficiency: f64,
    /// UAV downlink transmit power in Watts.
    pub power: f64,
    /// Maximum horizontal speed in m/s.
    pub max_speed: f64,
    /// Flight period in seconds.
    pub period: f64,
}

/// Validated, immutable problem instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    params: ScenarioParams,
}

impl Scenario {
    pub fn new(params: ScenarioParams) -> Result<Self> {
        let p = &params;
        let positive = [
            ("altitude", p.altitude),
            ("beta0", p.beta0),
            ("noise_power", p.noise_power),
            ("power", p.power),
            ("max_speed", p.max_speed),
            ("period", p.period),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if !(p.efficiency > 0.0 && p.efficiency <= 1.0) {
            return Err(Error::InvalidScenario(format!(
                "efficiency must lie in (0, 1], got {}",
                p.efficiency
            )));
        }
        if p.users.is_empty() {
            return Err(Error::InvalidScenario("at least one user is required".into()));
        }
        if let Some(k) = p.users.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "user {k} has a non-finite coordinate"
            )));
        }
        let gamma = p.beta0 / p.noise_power;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "reference SNR beta0/noise_power = {gamma} is not finite and positive"
            )));
        }
        Ok(Self { params })
    }

    /// Same instance with a different flight period.
    pub fn with_period(&self, period: f64) -> Result<Self> {
        let mut params = self.params.clone();
        params.period = period;
        Self::new(params)
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn users(&self) -> &[Position2D] {
        &self.params.users
    }

    pub fn num_users(&self) -> usize {
        self.params.users.len()
    }

    pub fn altitude(&self) -> f64 {
        self.params.altitude
    }

    pub fn beta0(&self) -> f64 {
        self.params.beta0
    }

    pub fn noise_power(&self) -> f64 {
        self.params.noise_power
    }

    pub fn efficiency(&self) -> f64 {
        self.params.efficiency
    }

    pub fn power(&self) -> f64 {
        self.params.power
    }

    pub fn max_speed(&self) -> f64 {
        self.params.max_speed
    }

    pub fn period(&self) -> f64 {
        self.params.period
    }

    /// Reference SNR `beta0 / noise_power`.
    pub fn gamma(&self) -> f64 {
        self.params.beta0 / self.params.noise_power
    }

    /// Axis-aligned bounding box of the users as `(min, max)` corners.
    pub fn bounding_box(&self) -> (Position2D, Position2D) {
        let mut lo = Position2D::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Position2D::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for w in self.users() {
            lo.x = lo.x.min(w.x);
            lo.y = lo.y.min(w.y);
            hi.x = hi.x.max(w.x);
            hi.y = hi.y.max(w.y);
        }
        (lo, hi)
    }

    pub fn centroid(&self) -> Position2D {
        let n = self.num_users() as f64;
        let (sx, sy) = self
            .users()
            .iter()
            .fold((0.0, 0.0), |(sx, sy), w| (sx + w.x, sy + w.y));
        Position2D::new(sx / n, sy / n)
    }

    /// Gain without index validation; used on hot paths.
    #[inline]
    pub(crate) fn gain_unchecked(&self, q: &Position2D, k: usize) -> f64 {
        let h2 = self.params.altitude * self.params.altitude;
        self.params.beta0 / (q.dist2(&self.params.users[k]) + h2)
    }

    fn check_user(&self, k: usize) -> Result<()> {
        if k < self.num_users() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "user index {k} out of range for {} users",
                self.num_users()
            )))
        }
    }
}

/// Line-of-sight channel power gain `beta0 / (||q - w_k||^2 + H^2)`.
pub fn channel_gain(scn: &Scenario, q: &Position2D, k: usize) -> Result<f64> {
    scn.check_user(k)?;
    Ok(scn.gain_unchecked(q, k))
}

/// Power harvested by user `k` while the UAV radiates from `q`.
pub fn harvested_power(scn: &Scenario, q: &Position2D, k: usize) -> Result<f64> {
    Ok(scn.efficiency() * scn.power() * channel_gain(scn, q, k)?)
}

/// Uplink spectral efficiency (bps/Hz) of user `k` transmitting with `power`
/// Watts while the UAV is at `q`.
pub fn instantaneous_rate(scn: &Scenario, q: &Position2D, k: usize, power: f64) -> Result<f64> {
    if !(power >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "uplink power must be nonnegative, got {power}"
        )));
    }
    let h = channel_gain(scn, q, k)?;
    Ok((power * h / scn.noise_power()).ln_1p() / std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub position: Position2D,
}

/// Piecewise-linear UAV path over `[0, T]`. Repeated consecutive positions
/// encode hovering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::Structure(
                "a trajectory needs at least two waypoints".into(),
            ));
        }
        if waypoints[0].t != 0.0 {
            return Err(Error::Structure(format!(
                "trajectory must start at t = 0, got {}",
                waypoints[0].t
            )));
        }
        for (i, pair) in waypoints.windows(2).enumerate() {
            if !(pair[1].t > pair[0].t) {
                return Err(Error::Structure(format!(
                    "waypoint times must increase strictly (index {})",
                    i + 1
                )));
            }
        }
        if waypoints.iter().any(|w| !w.position.is_finite()) {
            return Err(Error::Structure("non-finite waypoint position".into()));
        }
        Ok(Self { waypoints })
    }

    /// Stationary trajectory at `q` for the whole period.
    pub fn hover(q: Position2D, period: f64) -> Result<Self> {
        Self::new(vec![
            Waypoint { t: 0.0, position: q },
            Waypoint { t: period, position: q },
        ])
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn duration(&self) -> f64 {
        self.waypoints.last().map(|w| w.t).unwrap_or(0.0)
    }

    /// Position at time `t`, clamped to the trajectory's time span.
    pub fn position_at(&self, t: f64) -> Position2D {
        let wps = &self.waypoints;
        if t <= wps[0].t {
            return wps[0].position;
        }
        let last = wps[wps.len() - 1];
        if t >= last.t {
            return last.position;
        }
        // first waypoint with time > t
        let i = wps.partition_point(|w| w.t <= t);
        let (a, b) = (wps[i - 1], wps[i]);
        a.position.lerp(&b.position, (t - a.t) / (b.t - a.t))
    }

    pub fn path_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|p| p[0].position.dist(&p[1].position))
            .sum()
    }

    /// Largest speed over all legs.
    pub fn max_speed(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|p| p[0].position.dist(&p[1].position) / (p[1].t - p[0].t))
            .fold(0.0, f64::max)
    }

    pub fn satisfies_speed(&self, vmax: f64) -> bool {
        self.max_speed() <= vmax * (1.0 + TOLERANCES.structural)
    }
}

/// One TDMA slot: a WPT sub-slot followed by one WIT sub-slot per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub start: f64,
    pub duration: f64,
    pub position: Position2D,
    pub wpt_duration: f64,
    pub wit_durations: Vec<f64>,
    pub powers: Vec<f64>,
}

impl Slot {
    /// Pure WPT slot.
    pub fn charging(start: f64, duration: f64, position: Position2D, users: usize) -> Self {
        Self {
            start,
            duration,
            position,
            wpt_duration: duration,
            wit_durations: vec![0.0; users],
            powers: vec![0.0; users],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub slots: Vec<Slot>,
}

impl Schedule {
    pub fn new(slots: Vec<Slot>) -> Self {
        Self { slots }
    }

    pub fn total_duration(&self) -> f64 {
        self.slots.iter().map(|s| s.duration).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    /// Energy harvested by each user over the period (J).
    pub harvested: Vec<f64>,
    /// Energy spent on uplink transmission by each user (J).
    pub consumed: Vec<f64>,
    /// Average rate of each user over the period (bps/Hz).
    pub rates: Vec<f64>,
    /// Minimum of `rates`.
    pub common_rate: f64,
    /// Worst relative excess of consumed over harvested energy (<= 0 when
    /// every user is energy neutral).
    pub max_neutrality_violation: f64,
    /// Neutrality holds for every user at the structural tolerance.
    pub neutral: bool,
}

impl ThroughputReport {
    pub fn neutral_within(&self, rel_tol: f64) -> bool {
        self.max_neutrality_violation <= rel_tol
    }
}

/// Relative excess of `consumed` over `harvested`.
fn neutrality_excess(consumed: f64, harvested: f64) -> f64 {
    if harvested > 0.0 {
        (consumed - harvested) / harvested
    } else if consumed > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Energy and rate accounting for a schedule whose slot positions are taken
/// as given. Checks per-slot structure and tiling of `[0, T]` but not
/// consistency with any trajectory.
pub fn evaluate_slots(scn: &Scenario, sched: &Schedule) -> Result<ThroughputReport> {
    let k_users = scn.num_users();
    let period = scn.period();
    let tol = TOLERANCES.structural;
    if sched.slots.is_empty() {
        return Err(Error::Structure("schedule has no slots".into()));
    }
    let mut harvested = vec![0.0; k_users];
    let mut consumed = vec![0.0; k_users];
    let mut bits = vec![0.0; k_users];
    let mut clock = 0.0;
    let ep = scn.efficiency() * scn.power();
    for (n, slot) in sched.slots.iter().enumerate() {
        if slot.wit_durations.len() != k_users || slot.powers.len() != k_users {
            return Err(Error::Structure(format!(
                "slot {n} carries {} WIT durations and {} powers for {k_users} users",
                slot.wit_durations.len(),
                slot.powers.len()
            )));
        }
        if (slot.start - clock).abs() > tol * period {
            return Err(Error::Structure(format!(
                "slot {n} starts at {} but previous slot ended at {clock}",
                slot.start
            )));
        }
        if !(slot.duration >= 0.0) || !slot.position.is_finite() {
            return Err(Error::Structure(format!("slot {n} is malformed")));
        }
        let nonneg = slot.wpt_duration >= 0.0
            && slot.wit_durations.iter().all(|&d| d >= 0.0)
            && slot.powers.iter().all(|&q| q >= 0.0);
        if !nonneg {
            return Err(Error::Structure(format!(
                "slot {n} has a negative duration or power"
            )));
        }
        let used = slot.wpt_duration + slot.wit_durations.iter().sum::<f64>();
        if (used - slot.duration).abs() > tol * slot.duration.max(period * 1e-3) {
            return Err(Error::Structure(format!(
                "slot {n}: sub-slot durations sum to {used}, slot lasts {}",
                slot.duration
            )));
        }
        for k in 0..k_users {
            let h = scn.gain_unchecked(&slot.position, k);
            harvested[k] += ep * h * slot.wpt_duration;
            let tau = slot.wit_durations[k];
            if tau > 0.0 {
                let q = slot.powers[k];
                consumed[k] += tau * q;
                bits[k] += tau * (q * h / scn.noise_power()).ln_1p() / std::f64::consts::LN_2;
            }
        }
        clock = slot.start + slot.duration;
    }
    if (clock - period).abs() > tol * period {
        return Err(Error::Structure(format!(
            "slots end at {clock}, flight period is {period}"
        )));
    }
    let rates: Vec<f64> = bits.iter().map(|b| b / period).collect();
    let common_rate = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_neutrality_violation = consumed
        .iter()
        .zip(&harvested)
        .map(|(&c, &h)| neutrality_excess(c, h))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ThroughputReport {
        neutral: max_neutrality_violation <= TOLERANCES.structural,
        harvested,
        consumed,
        rates,
        common_rate,
        max_neutrality_violation,
    })
}

/// Evaluates a schedule flown along `traj`. Every slot's position must match
/// the trajectory at the slot midpoint.
pub fn evaluate_schedule(
    scn: &Scenario,
    traj: &Trajectory,
    sched: &Schedule,
) -> Result<ThroughputReport> {
    let period = scn.period();
    if (traj.duration() - period).abs() > TOLERANCES.structural * period {
        return Err(Error::Structure(format!(
            "trajectory spans {} s, flight period is {period} s",
            traj.duration()
        )));
    }
    // positions are compared at a millimeter-scale floor so that coordinate
    // round-off on long paths does not trip the check
    let scale = {
        let (lo, hi) = scn.bounding_box();
        1.0 + (hi.x - lo.x).abs().max((hi.y - lo.y).abs())
    };
    for (n, slot) in sched.slots.iter().enumerate() {
        let mid = traj.position_at(slot.start + 0.5 * slot.duration);
        if mid.dist(&slot.position) > 1e-6 * scale {
            return Err(Error::Structure(format!(
                "slot {n} position ({:.6}, {:.6}) differs from trajectory midpoint ({:.6}, {:.6})",
                slot.position.x, slot.position.y, mid.x, mid.y
            )));
        }
    }
    evaluate_slots(scn, sched)
}

/// Full validation of an emitted plan: structure, speed bound and energy
/// neutrality at the physical tolerance.
pub fn validate_plan(
    scn: &Scenario,
    traj: &Trajectory,
    sched: &Schedule,
) -> Result<ThroughputReport> {
    if !traj.satisfies_speed(scn.max_speed()) {
        return Err(Error::Validation(format!(
            "trajectory reaches {} m/s, limit is {} m/s",
            traj.max_speed(),
            scn.max_speed()
        )));
    }
    let report = evaluate_schedule(scn, traj, sched)?;
    if !report.neutral_within(TOLERANCES.physical) {
        return Err(Error::Validation(format!(
            "energy neutrality violated by {:.3e} (relative)",
            report.max_neutrality_violation
        )));
    }
    Ok(report)
}
