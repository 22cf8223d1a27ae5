//! The `run` verb: every requested regime on one scenario.

use std::path::Path;

use equilibria_core::frictional::{
    best_response_friction_coefficient, friction_coefficient_ratio, friction_premium, nash_friction_coefficient,
};
use equilibria_core::frictionless::{best_response_demand, liquidity_premium, nash_returns, premium_noise_alignment};
use equilibria_core::model::{EquilibriumResult, Regime, Scenario};
use equilibria_core::oracle::{
    nash_fixed_point, nash_linear_solve, solve_frictional_qp, solve_frictionless_best_response_pointwise,
    verify_clearing,
};
use equilibria_core::frictional::frictional_best_response;
use equilibria_core::regimes::{is_supported, solve, surplus_estimate};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};
use crate::output::Bundle;

pub const CLEARING_TOL: f64 = 1e-8;
const FIXED_POINT_TOL: f64 = 1e-11;
const FIXED_POINT_ITERS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeSummary {
    pub regime: Regime,
    pub demand_clearing_violation: f64,
    pub rate_clearing_violation: Option<f64>,
    pub returns_sup_norm: f64,
    pub surplus: Vec<f64>,
    pub surplus_standard_error: Vec<f64>,
    pub surplus_paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PriceImpactPremium {
    pub sup_norm: f64,
    /// Direct difference against the weighted-demand decomposition.
    pub decomposition_gap: f64,
    /// Largest node value of `(mu_nash - mu)' psi`.
    pub max_noise_alignment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrictionPremium {
    /// Coefficient of `Lambda (a - r psi_dot)` in the Nash returns.
    pub coefficient: f64,
    pub best_response_coefficient: Option<f64>,
    pub competitive_coefficient: Option<f64>,
    pub ratio_to_competitive: Option<f64>,
    pub sup_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSummary {
    pub pointwise_best_response_gap: f64,
    pub fixed_point_gap: Option<f64>,
    pub fixed_point_iterations: Option<usize>,
    pub fixed_point_contraction: Option<f64>,
    pub linear_solve_gap: f64,
    /// Sup-norm gap of the discretized best-response program relative to the
    /// explicit demand; deterministic scenarios only.
    pub qp_relative_gap: Option<f64>,
    pub qp_terminal_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub assets: usize,
    pub investors: usize,
    pub steps: usize,
    pub seed: Option<u64>,
    pub deterministic: bool,
    pub regimes: Vec<RegimeSummary>,
    pub price_impact_premium: PriceImpactPremium,
    pub friction_premium: Option<FrictionPremium>,
    pub max_clearing_violation: f64,
    /// Largest sup-norm distance between the returns of two requested regimes.
    pub max_regime_return_gap: Option<f64>,
    pub oracle: Option<OracleSummary>,
}

fn compute<T>(r: equilibria_core::Result<T>) -> CliResult<T> {
    r.map_err(CliError::Compute)
}

/// Coefficient of the friction premium when a frictional Nash closed form exists.
pub fn nash_coefficient(scenario: &Scenario) -> Option<f64> {
    if is_supported(Regime::FrictionalNash, scenario) {
        Some(nash_friction_coefficient(scenario.num_investors()))
    } else if is_supported(Regime::FrictionalNashTwoInvestor, scenario) {
        Some(1.0)
    } else {
        None
    }
}

pub fn oracle_summary(scenario: &Scenario, strategic: usize) -> CliResult<OracleSummary> {
    let pointwise = compute(solve_frictionless_best_response_pointwise(scenario, strategic))?;
    let exact_br = compute(best_response_demand(scenario, strategic))?;
    let exact_nash = nash_returns(scenario);
    let fixed = nash_fixed_point(scenario, FIXED_POINT_ITERS, FIXED_POINT_TOL, false).ok();
    let fixed_point_gap = match &fixed {
        Some(fp) => Some(compute(fp.returns.sup_distance(&exact_nash))?),
        None => None,
    };
    let linear = compute(nash_linear_solve(scenario))?;
    let (qp_relative_gap, qp_terminal_rate) =
        if scenario.is_deterministic() && is_supported(Regime::FrictionalBestResponse, scenario) {
            let qp = compute(solve_frictional_qp(scenario, strategic))?;
            let exact = compute(frictional_best_response(scenario, strategic))?;
            let gap = compute(qp.demand.sup_distance(&exact.demand))?;
            let scale = exact.demand.sup_norm();
            (Some(if scale > 0.0 { gap / scale } else { gap }), Some(qp.terminal_rate))
        } else {
            (None, None)
        };
    Ok(OracleSummary {
        pointwise_best_response_gap: compute(pointwise.sup_distance(&exact_br))?,
        fixed_point_gap,
        fixed_point_iterations: fixed.as_ref().map(|f| f.iterations),
        fixed_point_contraction: fixed.as_ref().map(|f| f.contraction).filter(|c| c.is_finite()),
        linear_solve_gap: compute(linear.sup_distance(&exact_nash))?,
        qp_relative_gap,
        qp_terminal_rate,
    })
}

fn add_result(bundle: &mut Bundle, result: &EquilibriumResult) {
    let name = result.regime.name();
    bundle.add_path(format!("returns_{name}.csv"), &result.returns);
    for (m, phi) in result.demands.iter().enumerate() {
        bundle.add_path(format!("demand_{name}_{m}.csv"), phi);
    }
    if let Some(rates) = &result.rates {
        for (m, rate) in rates.iter().enumerate() {
            bundle.add_path(format!("rate_{name}_{m}.csv"), rate);
        }
    }
}

/// Computes the report and every output file without touching the disk.
pub fn compute_run(config: &ScenarioConfig) -> CliResult<(RunReport, Bundle)> {
    let scenario = config.scenario()?;
    let run = &config.run;
    let mut bundle = Bundle::default();
    let mut regimes = Vec::new();
    let mut results = Vec::new();
    for &regime in &run.regimes {
        let result = compute(solve(regime, &scenario, run.strategic))?;
        let clearing = verify_clearing(&result, scenario.noise(), CLEARING_TOL);
        let surplus = compute(surplus_estimate(regime, &scenario, run.strategic, run.mc_paths))?;
        regimes.push(RegimeSummary {
            regime,
            demand_clearing_violation: clearing.demand_violation,
            rate_clearing_violation: clearing.rate_violation,
            returns_sup_norm: result.returns.sup_norm(),
            surplus: surplus.mean,
            surplus_standard_error: surplus.standard_error,
            surplus_paths: surplus.paths,
        });
        add_result(&mut bundle, &result);
        results.push(result);
    }

    let premium = compute(liquidity_premium(&scenario))?;
    bundle.add_path("liquidity_premium.csv", &premium.direct);
    let alignment = compute(premium_noise_alignment(&scenario))?;
    let price_impact_premium = PriceImpactPremium {
        sup_norm: premium.direct.sup_norm(),
        decomposition_gap: premium.discrepancy(),
        max_noise_alignment: alignment.into_iter().fold(f64::NEG_INFINITY, f64::max),
    };

    let friction = nash_coefficient(&scenario).map(|coefficient| {
        let path = friction_premium(&scenario, coefficient);
        let equal = scenario.investors().common_tolerance().is_some();
        let n = scenario.num_investors();
        let summary = FrictionPremium {
            coefficient,
            best_response_coefficient: equal.then(|| best_response_friction_coefficient(n)),
            competitive_coefficient: run.competitive_friction_coefficient,
            ratio_to_competitive: run
                .competitive_friction_coefficient
                .filter(|_| equal)
                .map(|c| friction_coefficient_ratio(n, c)),
            sup_norm: path.sup_norm(),
        };
        (summary, path)
    });
    let friction_premium = friction.map(|(summary, path)| {
        bundle.add_path("friction_premium.csv", &path);
        summary
    });

    let mut max_regime_return_gap: Option<f64> = None;
    for (i, a) in results.iter().enumerate() {
        for b in &results[i + 1..] {
            let gap = compute(a.returns.sup_distance(&b.returns))?;
            max_regime_return_gap = Some(max_regime_return_gap.map_or(gap, |g| g.max(gap)));
        }
    }
    let max_clearing_violation = regimes
        .iter()
        .flat_map(|r| std::iter::once(r.demand_clearing_violation).chain(r.rate_clearing_violation))
        .fold(0.0, f64::max);
    let oracle = if run.oracle {
        Some(oracle_summary(&scenario, run.strategic)?)
    } else {
        None
    };

    let report = RunReport {
        assets: scenario.num_assets(),
        investors: scenario.num_investors(),
        steps: scenario.grid().steps(),
        seed: scenario.seed(),
        deterministic: scenario.is_deterministic(),
        regimes,
        price_impact_premium,
        friction_premium,
        max_clearing_violation,
        max_regime_return_gap,
        oracle,
    };
    bundle.add_json("summary.json", &report);
    bundle.add("config.toml", config.to_toml());
    Ok((report, bundle))
}

pub fn run_scenario(config: &ScenarioConfig, out: &Path) -> CliResult<RunReport> {
    let (report, bundle) = compute_run(config)?;
    bundle.write(out)?;
    Ok(report)
}
