//! Scenario files: TOML or JSON documents with the network layout and
//! link budget in engineering units.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uav_wpcn::{Position2D, Scenario, ScenarioParams};

use crate::CliError;

/// Optional solver settings; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_max_iters: Option<usize>,
    /// Location search grid step in meters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_m: Option<f64>,
    /// Longest slot in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_max_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scp_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scp_max_iters: Option<usize>,
    /// Periods visited by `sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_periods_s: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Ground user positions `[x, y]` in meters.
    pub users: Vec<[f64; 2]>,
    pub altitude_m: f64,
    /// Channel power gain at 1 m.
    pub beta0_db: f64,
    pub sigma2_dbm: f64,
    /// Energy harvesting efficiency in `(0, 1]`.
    pub eta: f64,
    pub p_dbm: f64,
    pub vmax_mps: f64,
    pub period_s: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub solver: SolverOverrides,
}

fn is_default(s: &SolverOverrides) -> bool {
    *s == SolverOverrides::default()
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

impl ScenarioFile {
    pub fn parse(text: &str, json: bool) -> Result<Self, CliError> {
        if json {
            serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
        }
    }

    /// Reads `path`; files ending in `.json` are JSON, everything else TOML.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, json).map_err(|e| match e {
            CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_scenario(&self) -> Result<Scenario, CliError> {
        Scenario::new(ScenarioParams {
            users: self.users.iter().map(|&[x, y]| Position2D::new(x, y)).collect(),
            altitude: self.altitude_m,
            beta0: db_to_linear(self.beta0_db),
            noise_power: dbm_to_watts(self.sigma2_dbm),
            efficiency: self.eta,
            power: dbm_to_watts(self.p_dbm),
            max_speed: self.vmax_mps,
            period: self.period_s,
        })
        .map_err(|e| CliError::Parse(e.to_string()))
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_USER: &str = r#"
users = [[-5.0, 0.0], [5.0, 0.0]]
altitude_m = 5.0
beta0_db = -30.0
sigma2_dbm = -80.0
eta = 0.5
p_dbm = 40.0
vmax_mps = 10.0
period_s = 4.0
"#;

    #[test]
    fn units_convert() {
        let scn = ScenarioFile::parse(TWO_USER, false).unwrap().to_scenario().unwrap();
        assert!((scn.beta0() - 1e-3).abs() < 1e-15);
        assert!((scn.noise_power() - 1e-11).abs() < 1e-24);
        assert!((scn.power() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn json_and_toml_agree() {
        let a = ScenarioFile::parse(TWO_USER, false).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = ScenarioFile::parse(&json, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn missing_key_is_named() {
        let text = TWO_USER.replace("altitude_m = 5.0\n", "");
        let err = ScenarioFile::parse(&text, false).unwrap_err().to_string();
        assert!(err.contains("altitude_m"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{TWO_USER}colour = 3\n");
        assert!(ScenarioFile::parse(&text, false).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let text = TWO_USER.replace("eta = 0.5", "eta = 1.5");
        let file = ScenarioFile::parse(&text, false).unwrap();
        assert!(matches!(file.to_scenario(), Err(CliError::Parse(_))));
    }
}
