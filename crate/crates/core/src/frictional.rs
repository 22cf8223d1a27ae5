//! Equilibria under quadratic transaction costs: the single strategic
//! investor's best response, the Nash equilibrium for equal tolerances and
//! the two-investor Nash equilibrium with arbitrary tolerances.

use nalgebra::{DMatrix, DVector};

use crate::affine::Affine;
use crate::error::{Error, Result};
use crate::frictionless::{
    best_response_demand_map, best_response_returns_map, competitive_demand_map, nash_returns_map,
};
use crate::kernel::{fbsde_residual, solve_tracking, Coupling, FrictionKernel, ModalSystem, TrackingSolution};
use crate::model::{EquilibriumResult, InvestorSet, MarketParams, Regime, Scenario};
use crate::paths::PathGrid;

pub fn build_kernel(market: &MarketParams, tolerance: f64) -> Result<FrictionKernel> {
    FrictionKernel::for_tolerance(market, tolerance)
}

/// Coefficient of `Lambda (a - r psi_dot)` in the best-response returns.
pub fn best_response_friction_coefficient(n: usize) -> f64 {
    let n = n as f64;
    2.0 * n / (n * n - 1.0)
}

/// Coefficient of `Lambda (a - r psi_dot)` in the Nash returns.
pub fn nash_friction_coefficient(n: usize) -> f64 {
    let n = n as f64;
    2.0 / (n * (n - 1.0))
}

/// Nash friction coefficient relative to a competitive benchmark coefficient
/// supplied from outside the model.
pub fn friction_coefficient_ratio(n: usize, competitive_coefficient: f64) -> f64 {
    nash_friction_coefficient(n) / competitive_coefficient
}

fn require_supported(investors: &InvestorSet) -> Result<()> {
    if investors.len() > 2 && investors.common_tolerance().is_none() {
        return Err(Error::UnequalToleranceUnsupported);
    }
    Ok(())
}

fn require_equal(investors: &InvestorSet) -> Result<f64> {
    investors.common_tolerance().ok_or(Error::UnequalToleranceUnsupported)
}

/// Kernel of investor `n`'s best response: `B = Lambda^{-1} Sigma k (N - 1) / (2 (N + 1))`
/// with `k = 2 / delta_{-n} + 1 / delta_n`, which is `Lambda^{-1} Sigma / (2 delta_bar)`
/// for equal tolerances.
pub fn best_response_kernel(market: &MarketParams, investors: &InvestorSet, n: usize) -> Result<FrictionKernel> {
    investors.check_index(n)?;
    require_supported(investors)?;
    let big_n = investors.len() as f64;
    let scale = investors.curvature(n) * (big_n - 1.0) / (2.0 * (big_n + 1.0));
    FrictionKernel::new(market, scale)
}

/// Tracking target `TP_n`: the frictionless best response plus
/// `2 delta_n delta_{-n} / ((N - 1)(2 delta_n + delta_{-n})) Sigma^{-1} Lambda (a - r psi_dot)`.
pub fn tracking_target_map(market: &MarketParams, investors: &InvestorSet, n: usize) -> Result<Affine> {
    investors.check_index(n)?;
    require_supported(investors)?;
    let dn = investors.tolerance(n);
    let dm = investors.total_without(n);
    let big_n = investors.len() as f64;
    let coeff = 2.0 * dn * dm / ((big_n - 1.0) * (2.0 * dn + dm));
    let noise_tilt = market.sigma_inv() * market.cost() * coeff;
    Ok(best_response_demand_map(market, investors, n)?.add_drive(&noise_tilt, market.discount_rate()))
}

/// Target `TP` and its filtered version on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingTarget {
    pub target: PathGrid,
    pub filtered: PathGrid,
}

pub fn tracking_target(scenario: &Scenario, n: usize) -> Result<TrackingTarget> {
    let target = tracking_target_map(scenario.market(), scenario.investors(), n)?;
    let kernel = best_response_kernel(scenario.market(), scenario.investors(), n)?;
    let solution = solve_tracking(&ModalSystem::single(&kernel), &target, scenario)?;
    Ok(TrackingTarget {
        target: target.path(scenario),
        filtered: solution.filtered_target,
    })
}

/// Optimal demand and trading rate of strategic investor `n` facing
/// frictional price takers.
pub fn frictional_best_response(scenario: &Scenario, n: usize) -> Result<TrackingSolution> {
    scenario.require_admissible_noise()?;
    let target = tracking_target_map(scenario.market(), scenario.investors(), n)?;
    let kernel = best_response_kernel(scenario.market(), scenario.investors(), n)?;
    solve_tracking(&ModalSystem::single(&kernel), &target, scenario)
}

/// `mu_n + 2 N Lambda / (N^2 - 1) (a - r psi_dot)`; equal tolerances only.
pub fn frictional_best_response_returns_map(
    market: &MarketParams,
    investors: &InvestorSet,
    n: usize,
) -> Result<Affine> {
    require_equal(investors)?;
    let coeff = market.cost() * best_response_friction_coefficient(investors.len());
    Ok(best_response_returns_map(market, investors, n)?.add_drive(&coeff, market.discount_rate()))
}

pub fn frictional_best_response_returns(scenario: &Scenario, n: usize) -> Result<PathGrid> {
    Ok(frictional_best_response_returns_map(scenario.market(), scenario.investors(), n)?.path(scenario))
}

fn split_blocks(stacked: &PathGrid, n: usize, d: usize) -> Vec<PathGrid> {
    (0..n)
        .map(|m| stacked.map(|v| v.rows(m * d, d).into_owned()))
        .collect()
}

fn equilibrium_from(
    regime: Regime,
    scenario: &Scenario,
    returns: &Affine,
    solution: TrackingSolution,
) -> EquilibriumResult {
    let n = scenario.num_investors();
    let d = scenario.num_assets();
    EquilibriumResult {
        regime,
        returns: returns.path(scenario),
        demands: split_blocks(&solution.demand, n, d),
        rates: Some(split_blocks(&solution.rate, n, d)),
    }
}

/// Equilibrium in which investor `n` is strategic and everybody else trades
/// as a frictional price taker tracking `delta_bar Sigma^{-1} nu - zeta_m`.
pub fn frictional_best_response_equilibrium(scenario: &Scenario, n: usize) -> Result<EquilibriumResult> {
    scenario.require_admissible_noise()?;
    let market = scenario.market();
    let investors = scenario.investors();
    let tolerance = require_equal(investors)?;
    let returns = frictional_best_response_returns_map(market, investors, n)?;
    let targets = (0..investors.len())
        .map(|m| {
            if m == n {
                tracking_target_map(market, investors, n)
            } else {
                competitive_demand_map(market, investors, &returns, m)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let kernel = build_kernel(market, tolerance)?;
    let system = ModalSystem::coupled(&Coupling::identity(investors.len()), &kernel);
    let solution = solve_tracking(&system, &Affine::stack(&targets), scenario)?;
    Ok(equilibrium_from(Regime::FrictionalBestResponse, scenario, &returns, solution))
}

/// `mu_nash + 2 Lambda / (N (N - 1)) (a - r psi_dot)`; equal tolerances only.
pub fn frictional_nash_returns_map(market: &MarketParams, investors: &InvestorSet) -> Result<Affine> {
    require_equal(investors)?;
    let coeff = market.cost() * nash_friction_coefficient(investors.len());
    Ok(nash_returns_map(market, investors).add_drive(&coeff, market.discount_rate()))
}

/// `mu_nash + Lambda (a - r psi_dot)` for two investors.
pub fn frictional_nash_two_investor_returns_map(market: &MarketParams, investors: &InvestorSet) -> Result<Affine> {
    if investors.len() != 2 {
        return Err(Error::WrongInvestorCount(investors.len()));
    }
    Ok(nash_returns_map(market, investors).add_drive(market.cost(), market.discount_rate()))
}

fn couple_targets(coupling: &Coupling, parts: &[Affine], d: usize, scale: f64) -> Affine {
    let mix = coupling.inverse_matrix().kronecker(&DMatrix::<f64>::identity(d, d)) * scale;
    Affine::stack(parts).left_mul(&mix)
}

/// Nash equilibrium for equal tolerances, from the coupled block system
/// `C (x) B` with `C` holding ones on the diagonal and `1 / (N + 1)` elsewhere.
pub fn frictional_nash(scenario: &Scenario) -> Result<EquilibriumResult> {
    scenario.require_admissible_noise()?;
    let market = scenario.market();
    let investors = scenario.investors();
    let tolerance = require_equal(investors)?;
    let n = investors.len();
    let d = market.num_assets();
    let r = market.discount_rate();
    let returns = frictional_nash_returns_map(market, investors)?;
    let scaled_returns = returns.left_mul(&(market.sigma_inv() * ((n as f64 - 1.0) * tolerance)));
    let tilt = market.sigma_inv() * market.cost() * (2.0 * tolerance);
    let eye = DMatrix::identity(d, d);
    let parts: Vec<Affine> = (0..n)
        .map(|m| {
            scaled_returns
                .clone()
                .add_level(&(-&eye))
                .add_exposure(m, &(&eye * -(n as f64 - 1.0)))
                .add_drive(&tilt, r)
        })
        .collect();
    let coupling = Coupling::equal_tolerance(n)?;
    let target = couple_targets(&coupling, &parts, d, 1.0 / (n as f64 + 1.0));
    let kernel = build_kernel(market, tolerance)?;
    let solution = solve_tracking(&ModalSystem::coupled(&coupling, &kernel), &target, scenario)?;
    Ok(equilibrium_from(Regime::FrictionalNash, scenario, &returns, solution))
}

/// Two-investor Nash equilibrium with arbitrary tolerances, from the block
/// system `C (x) Lambda^{-1} Sigma / (6 delta_1 delta_2)` with
/// `C = [[delta + delta_1, delta_1], [delta_2, delta + delta_2]]`.
pub fn frictional_nash_two_investors(scenario: &Scenario) -> Result<EquilibriumResult> {
    scenario.require_admissible_noise()?;
    let market = scenario.market();
    let investors = scenario.investors();
    let returns = frictional_nash_two_investor_returns_map(market, investors)?;
    let d = market.num_assets();
    let r = market.discount_rate();
    let (d1, d2) = (investors.tolerance(0), investors.tolerance(1));
    let eye = DMatrix::identity(d, d);
    let tilt = market.sigma_inv() * market.cost() * (2.0 * d1 * d2);
    let parts: Vec<Affine> = (0..2)
        .map(|m| {
            let own = investors.tolerance(m);
            let other = investors.total_without(m);
            returns
                .left_mul(&(market.sigma_inv() * (own * other)))
                .add_level(&(&eye * -own))
                .add_exposure(m, &(&eye * -other))
                .add_drive(&tilt, r)
        })
        .collect();
    let coupling = Coupling::two_investor(d1, d2);
    let target = couple_targets(&coupling, &parts, d, 1.0);
    let kernel = FrictionKernel::new(market, 1.0 / (6.0 * d1 * d2))?;
    let solution = solve_tracking(&ModalSystem::coupled(&coupling, &kernel), &target, scenario)?;
    Ok(equilibrium_from(Regime::FrictionalNashTwoInvestor, scenario, &returns, solution))
}

/// Residual of a frictional price taker's optimality system
/// `d phi_dot/dt - Lambda^{-1} Sigma / (2 delta_m) (phi - (delta_m Sigma^{-1} nu - zeta_m)) - r phi_dot`.
pub fn frictional_competitive_residual(
    scenario: &Scenario,
    nu: &PathGrid,
    phi: &PathGrid,
    phi_dot: &PathGrid,
    m: usize,
) -> Result<PathGrid> {
    let investors = scenario.investors();
    investors.check_index(m)?;
    let market = scenario.market();
    let kernel = build_kernel(market, investors.tolerance(m))?;
    let target = nu
        .transform(&(market.sigma_inv() * investors.tolerance(m)))
        .sub(scenario.exposure_path(m))?;
    fbsde_residual(kernel.b(), market.discount_rate(), &target, phi, phi_dot)
}

/// Residual of investor `n`'s best-response system with its own kernel and target.
pub fn best_response_residual(scenario: &Scenario, n: usize, solution: &TrackingSolution) -> Result<PathGrid> {
    let kernel = best_response_kernel(scenario.market(), scenario.investors(), n)?;
    let target = tracking_target_map(scenario.market(), scenario.investors(), n)?.path(scenario);
    fbsde_residual(
        kernel.b(),
        scenario.market().discount_rate(),
        &target,
        &solution.demand,
        &solution.rate,
    )
}

/// Node-wise friction premium `Lambda (a - r psi_dot)` scaled by `coefficient`.
pub fn friction_premium(scenario: &Scenario, coefficient: f64) -> PathGrid {
    let cost = scenario.market().cost() * coefficient;
    scenario.friction_drive().transform(&cost)
}

#[doc(hidden)]
pub fn unit(d: usize, i: usize) -> DVector<f64> {
    DVector::from_fn(d, |j, _| if i == j { 1.0 } else { 0.0 })
}
