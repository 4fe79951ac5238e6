//! Preflight report: config invariants, delay-tier magnitudes at median
//! geometry, and a network gradient self-check.

use super::config::SimConfig;
use crate::neural;
use crate::radio::{
    delay_cloud_to_fap, delay_fap_to_fap, delay_fap_to_user, validate_delay_ordering,
    wireless_rate, DelayOrdering,
};

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
    pub config_echo: String,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "ok  " } else { "FAIL" };
            out.push_str(&format!("[{status}] {}: {}\n", c.name, c.detail));
        }
        out.push_str("\nresolved config:\n");
        out.push_str(&self.config_echo);
        out
    }
}

/// Runs every preflight check; failures land in the report instead of
/// aborting, so a bad config can still be inspected.
pub fn validate(config: &SimConfig) -> ValidationReport {
    let mut checks = Vec::new();

    match config.validate() {
        Ok(()) => checks.push(CheckOutcome {
            name: "config invariants".into(),
            passed: true,
            detail: "all fields within bounds".into(),
        }),
        Err(e) => checks.push(CheckOutcome {
            name: "config invariants".into(),
            passed: false,
            detail: e.to_string(),
        }),
    }

    // Z1 at median geometry: unit channel gain at the disk's median distance.
    let params = config.radio_params();
    let median_distance = config.cell_radius / 2.0_f64.sqrt();
    let rate = wireless_rate(&params, 1.0, median_distance).max(params.rate_floor);
    match delay_fap_to_user(&params, rate) {
        Ok(z1) => {
            let z2 = delay_fap_to_fap(&params, 1, config.coop_delay_mode);
            let z3 = delay_cloud_to_fap(&params);
            let detail = format!("Z1 {z1:.3e} s, Z2 {z2:.3e} s, Z3 {z3:.3e} s");
            match validate_delay_ordering(z1, z2, z3) {
                DelayOrdering::Ok => checks.push(CheckOutcome {
                    name: "delay ordering".into(),
                    passed: true,
                    detail,
                }),
                DelayOrdering::Warning(w) => checks.push(CheckOutcome {
                    name: "delay ordering".into(),
                    passed: false,
                    detail: format!("{detail}; {w}"),
                }),
            }
        }
        Err(e) => checks.push(CheckOutcome {
            name: "delay ordering".into(),
            passed: false,
            detail: e.to_string(),
        }),
    }

    let max_err = neural::gradient_self_check(config.seed);
    checks.push(CheckOutcome {
        name: "gradient check".into(),
        passed: max_err < 1e-5,
        detail: format!("max relative backprop error {max_err:.3e}"),
    });

    ValidationReport {
        checks,
        config_echo: config.to_toml(),
    }
}
