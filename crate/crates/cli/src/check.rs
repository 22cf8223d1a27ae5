//! The `oracle-check` verb.

use equilibria_core::frictionless::nash_returns;
use equilibria_core::model::Regime;
use equilibria_core::oracle::{nash_fixed_point, nash_linear_solve, random_battery, verify_clearing, BatteryOptions};
use equilibria_core::regimes::{is_supported, solve};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};
use crate::run::{oracle_summary, OracleSummary, CLEARING_TOL};

pub const GAP_TOL: f64 = 1e-8;
pub const QP_TOL: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatterySummary {
    pub scenarios: usize,
    pub regimes_solved: usize,
    pub max_clearing_violation: f64,
    pub max_fixed_point_gap: f64,
    pub max_linear_solve_gap: f64,
    pub max_contraction: f64,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub scenario: OracleSummary,
    pub battery: Option<BatterySummary>,
    pub failures: Vec<String>,
    pub passed: bool,
}

pub fn battery_summary(options: &BatteryOptions) -> CliResult<BatterySummary> {
    let battery = random_battery(options).map_err(CliError::Compute)?;
    let mut summary = BatterySummary {
        scenarios: battery.len(),
        regimes_solved: 0,
        max_clearing_violation: 0.0,
        max_fixed_point_gap: 0.0,
        max_linear_solve_gap: 0.0,
        max_contraction: 0.0,
        failures: Vec::new(),
    };
    for (i, s) in battery.iter().enumerate() {
        for regime in Regime::ALL.into_iter().filter(|&r| is_supported(r, s)) {
            let res = solve(regime, s, i % s.num_investors()).map_err(CliError::Compute)?;
            let report = verify_clearing(&res, s.noise(), CLEARING_TOL);
            let worst = report.demand_violation.max(report.rate_violation.unwrap_or(0.0));
            summary.max_clearing_violation = summary.max_clearing_violation.max(worst);
            summary.regimes_solved += 1;
            if !report.passed {
                summary.failures.push(format!("scenario {i}: {} does not clear ({worst:e})", regime.name()));
            }
        }
        let exact = nash_returns(s);
        match nash_fixed_point(s, 10_000, 1e-11, false) {
            Ok(fp) => {
                let gap = fp.returns.sup_distance(&exact).map_err(CliError::Compute)?;
                summary.max_fixed_point_gap = summary.max_fixed_point_gap.max(gap);
                if fp.contraction.is_finite() {
                    summary.max_contraction = summary.max_contraction.max(fp.contraction);
                }
                if gap > GAP_TOL {
                    summary.failures.push(format!("scenario {i}: fixed point off by {gap:e}"));
                }
            }
            Err(e) => summary.failures.push(format!("scenario {i}: {e}")),
        }
        let gap = nash_linear_solve(s)
            .and_then(|l| l.sup_distance(&exact))
            .map_err(CliError::Compute)?;
        summary.max_linear_solve_gap = summary.max_linear_solve_gap.max(gap);
        if gap > GAP_TOL {
            summary.failures.push(format!("scenario {i}: linear solve off by {gap:e}"));
        }
    }
    Ok(summary)
}

pub fn oracle_check(config: &ScenarioConfig, battery: Option<BatteryOptions>) -> CliResult<CheckReport> {
    let scenario = config.scenario()?;
    let summary = oracle_summary(&scenario, config.run.strategic)?;
    let mut failures = Vec::new();
    if summary.pointwise_best_response_gap > GAP_TOL {
        failures.push(format!("pointwise best response off by {:e}", summary.pointwise_best_response_gap));
    }
    match summary.fixed_point_gap {
        Some(gap) if gap > GAP_TOL => failures.push(format!("fixed point off by {gap:e}")),
        None => failures.push("fixed point did not converge".into()),
        _ => {}
    }
    if summary.linear_solve_gap > GAP_TOL {
        failures.push(format!("linear solve off by {:e}", summary.linear_solve_gap));
    }
    if let Some(gap) = summary.qp_relative_gap.filter(|g| *g > QP_TOL) {
        failures.push(format!("discretized program off by {gap:e} relative"));
    }
    let battery = battery.map(|opts| battery_summary(&opts)).transpose()?;
    if let Some(b) = &battery {
        failures.extend(b.failures.iter().cloned());
    }
    Ok(CheckReport {
        scenario: summary,
        battery,
        passed: failures.is_empty(),
        failures,
    })
}
