//! The `sweep` verb: one row of premia, surpluses and oracle gaps per value.

use std::collections::BTreeMap;
use std::path::Path;

use equilibria_core::frictional::{frictional_nash, frictional_nash_two_investors, nash_friction_coefficient};
use equilibria_core::frictionless::{liquidity_premium, nash_returns, nash_surplus_limit};
use equilibria_core::model::{InvestorSet, Regime, Scenario};
use equilibria_core::oracle::nash_linear_solve;
use equilibria_core::quadrature::{log_log_slope, trend, Trend};
use equilibria_core::regimes::{is_supported, surplus_estimate};
use serde::Serialize;

use crate::config::{ScenarioConfig, SweepParameter};
use crate::error::{CliError, CliResult};
use crate::output::{number, Bundle};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub price_impact_premium: f64,
    pub friction_premium: Option<f64>,
    pub friction_coefficient: Option<f64>,
    pub competitive_surplus: f64,
    pub nash_surplus: f64,
    pub nash_surplus_limit: f64,
    pub nash_oracle_gap: f64,
}

impl SweepRow {
    const COLUMNS: [&'static str; 8] = [
        "value",
        "price_impact_premium",
        "friction_premium",
        "friction_coefficient",
        "competitive_surplus",
        "nash_surplus",
        "nash_surplus_limit",
        "nash_oracle_gap",
    ];

    fn cells(&self) -> [Option<f64>; 8] {
        [
            Some(self.value),
            Some(self.price_impact_premium),
            self.friction_premium,
            self.friction_coefficient,
            Some(self.competitive_surplus),
            Some(self.nash_surplus),
            Some(self.nash_surplus_limit),
            Some(self.nash_oracle_gap),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
    /// Log-log slope of each strictly positive column against the swept value.
    pub slopes: BTreeMap<String, f64>,
    pub trends: BTreeMap<String, String>,
}

fn check_value(parameter: SweepParameter, value: f64) -> CliResult<()> {
    let bad = |reason: &str| {
        Err(CliError::BadSweepValue {
            value,
            reason: reason.into(),
        })
    };
    if !value.is_finite() {
        return bad("not finite");
    }
    match parameter {
        SweepParameter::LambdaScale | SweepParameter::Delta1 if value <= 0.0 => bad("must be positive"),
        SweepParameter::NInvestors if value.fract() != 0.0 || value < 2.0 => bad("must be an integer of at least 2"),
        _ => Ok(()),
    }
}

fn swept_scenario(base: &Scenario, parameter: SweepParameter, value: f64) -> CliResult<Scenario> {
    let investors = base.investors();
    let scenario = match parameter {
        SweepParameter::LambdaScale => base
            .market()
            .with_cost_scale(value)
            .and_then(|m| base.with_market(m)),
        SweepParameter::Delta1 => investors.with_tolerance(0, value).and_then(|i| base.with_investors(i)),
        SweepParameter::NInvestors => {
            let n = value as usize;
            let tolerance = investors.tolerance(0);
            let exposures = (0..n).map(|m| investors.exposures()[m % investors.len()].clone()).collect();
            InvestorSet::new(vec![tolerance; n], exposures).and_then(|i| base.with_investors(i))
        }
    };
    scenario.map_err(CliError::Compute)
}

fn row(scenario: &Scenario, value: f64, mc_paths: usize) -> CliResult<SweepRow> {
    let compute = |e| CliError::Compute(e);
    let nash = nash_returns(scenario);
    let frictional = if is_supported(Regime::FrictionalNash, scenario) {
        Some((frictional_nash(scenario).map_err(compute)?, nash_friction_coefficient(scenario.num_investors())))
    } else if is_supported(Regime::FrictionalNashTwoInvestor, scenario) {
        Some((frictional_nash_two_investors(scenario).map_err(compute)?, 1.0))
    } else {
        None
    };
    let friction_premium = match &frictional {
        Some((res, _)) => Some(res.returns.sup_distance(&nash).map_err(compute)?),
        None => None,
    };
    let competitive = surplus_estimate(Regime::FrictionlessCompetitive, scenario, 0, mc_paths).map_err(compute)?;
    let nash_surplus = surplus_estimate(Regime::FrictionlessNash, scenario, 0, mc_paths).map_err(compute)?;
    Ok(SweepRow {
        value,
        price_impact_premium: liquidity_premium(scenario).map_err(compute)?.direct.sup_norm(),
        friction_premium,
        friction_coefficient: frictional.map(|(_, c)| c),
        competitive_surplus: competitive.mean[0],
        nash_surplus: nash_surplus.mean[0],
        nash_surplus_limit: nash_surplus_limit(scenario).map_err(compute)?,
        nash_oracle_gap: nash_linear_solve(scenario)
            .and_then(|l| l.sup_distance(&nash))
            .map_err(compute)?,
    })
}

pub fn compute_sweep(config: &ScenarioConfig, parameter: SweepParameter, values: &[f64]) -> CliResult<SweepReport> {
    if values.is_empty() {
        return Err(CliError::Validation("sweep needs at least one value".into()));
    }
    for &v in values {
        check_value(parameter, v)?;
    }
    let base = config.scenario()?;
    if parameter == SweepParameter::NInvestors && base.investors().common_tolerance().is_none() {
        return Err(CliError::Validation("the investor-count sweep needs equal tolerances".into()));
    }
    let rows = values
        .iter()
        .map(|&v| row(&swept_scenario(&base, parameter, v)?, v, config.run.mc_paths))
        .collect::<CliResult<Vec<_>>>()?;
    let mut slopes = BTreeMap::new();
    let mut trends = BTreeMap::new();
    let xs: Vec<f64> = rows.iter().map(|r| r.value).collect();
    for (c, name) in SweepRow::COLUMNS.iter().enumerate().skip(1) {
        let ys: Option<Vec<f64>> = rows.iter().map(|r| r.cells()[c]).collect();
        let Some(ys) = ys else { continue };
        let label = match trend(&ys) {
            Trend::Increasing => "increasing",
            Trend::Decreasing => "decreasing",
            Trend::Constant => "constant",
            Trend::Mixed => "mixed",
        };
        trends.insert(name.to_string(), label.to_string());
        if rows.len() > 1 && ys.iter().all(|&y| y > 0.0) && trend(&xs) != Trend::Constant {
            slopes.insert(name.to_string(), log_log_slope(&xs, &ys));
        }
    }
    Ok(SweepReport {
        parameter,
        rows,
        slopes,
        trends,
    })
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = SweepRow::COLUMNS.join(",");
    out.push('\n');
    for row in &report.rows {
        let cells: Vec<String> = row.cells().iter().map(|c| c.map(number).unwrap_or_default()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn run_sweep(
    config: &ScenarioConfig,
    parameter: SweepParameter,
    values: &[f64],
    out: &Path,
) -> CliResult<SweepReport> {
    let report = compute_sweep(config, parameter, values)?;
    let mut bundle = Bundle::default();
    bundle.add(format!("sweep_{}.csv", parameter.name()), sweep_csv(&report));
    bundle.add_json(format!("sweep_{}.json", parameter.name()), &report);
    bundle.write(out)?;
    Ok(report)
}
