//! Closed forms of the frictionless market: competitive and Nash equilibria,
//! single-investor price impact, revealed exposures, liquidity premium and
//! utility surplus.

use nalgebra::DMatrix;

use crate::affine::Affine;
use crate::error::{Error, Result};
use crate::model::{EquilibriumResult, InvestorSet, MarketParams, Regime, Scenario};
use crate::paths::PathGrid;
use crate::quadrature::trapezoid;

fn eye(d: usize) -> DMatrix<f64> {
    DMatrix::identity(d, d)
}

/// `Sigma (zeta - psi) / delta`.
pub fn competitive_returns_map(market: &MarketParams, investors: &InvestorSet) -> Affine {
    let d = market.num_assets();
    let n = investors.len();
    let coeff = market.sigma() / investors.total();
    (0..n)
        .fold(Affine::zero(d, d, n), |a, m| a.add_exposure(m, &coeff))
        .add_level(&(-&coeff))
}

/// Competitive returns without investor `n`: `Sigma (zeta_{-n} - psi) / delta_{-n}`.
pub fn excluded_returns_map(market: &MarketParams, investors: &InvestorSet, n: usize) -> Result<Affine> {
    investors.check_index(n)?;
    let d = market.num_assets();
    let coeff = market.sigma() / investors.total_without(n);
    Ok((0..investors.len())
        .filter(|&m| m != n)
        .fold(Affine::zero(d, d, investors.len()), |a, m| a.add_exposure(m, &coeff))
        .add_level(&(-&coeff)))
}

/// `(lambda_n (zeta_{-n} - psi) - lambda_{-n} zeta_n) / (lambda_n + 1)`.
pub fn best_response_demand_map(market: &MarketParams, investors: &InvestorSet, n: usize) -> Result<Affine> {
    investors.check_index(n)?;
    let d = market.num_assets();
    let lam = investors.relative(n);
    let w = lam / (lam + 1.0);
    let own = -(1.0 - lam) / (lam + 1.0);
    let a = (0..investors.len()).fold(Affine::zero(d, d, investors.len()), |a, m| {
        let c = if m == n { own } else { w };
        a.add_exposure(m, &(eye(d) * c))
    });
    Ok(a.add_level(&(eye(d) * -w)))
}

/// `lambda_n / (lambda_n + 1) mu_{-n} + mu / (lambda_n + 1)`.
pub fn best_response_returns_map(market: &MarketParams, investors: &InvestorSet, n: usize) -> Result<Affine> {
    let lam = investors.relative(n);
    let excluded = excluded_returns_map(market, investors, n)?;
    let competitive = competitive_returns_map(market, investors);
    Ok(excluded
        .scale(lam / (lam + 1.0))
        .plus(&competitive.scale(1.0 / (lam + 1.0))))
}

/// `(Sigma / delta) [(zeta - psi) - sum lambda_m zeta_m] / (1 - sum lambda_m^2)`.
pub fn nash_returns_map(market: &MarketParams, investors: &InvestorSet) -> Affine {
    let d = market.num_assets();
    let lams = investors.relatives();
    let denom = 1.0 - lams.iter().map(|l| l * l).sum::<f64>();
    let base = market.sigma() / (investors.total() * denom);
    lams.iter()
        .enumerate()
        .fold(Affine::zero(d, d, investors.len()), |a, (m, lam)| {
            a.add_exposure(m, &(&base * (1.0 - lam)))
        })
        .add_level(&(-&base))
}

/// `lambda_m delta_{-m} Sigma^{-1} nu - lambda_{-m} zeta_m` for a returns map `nu`.
pub fn nash_demand_map(market: &MarketParams, investors: &InvestorSet, nu: &Affine, m: usize) -> Result<Affine> {
    investors.check_index(m)?;
    let d = market.num_assets();
    let lam = investors.relative(m);
    Ok(nu
        .left_mul(&(market.sigma_inv() * (lam * investors.total_without(m))))
        .add_exposure(m, &(eye(d) * -(1.0 - lam))))
}

/// `delta_m Sigma^{-1} nu - zeta_m` for a returns map `nu`.
pub fn competitive_demand_map(market: &MarketParams, investors: &InvestorSet, nu: &Affine, m: usize) -> Result<Affine> {
    investors.check_index(m)?;
    let d = market.num_assets();
    Ok(nu
        .left_mul(&(market.sigma_inv() * investors.tolerance(m)))
        .add_exposure(m, &(-eye(d))))
}

pub fn competitive_returns(scenario: &Scenario) -> PathGrid {
    competitive_returns_map(scenario.market(), scenario.investors()).path(scenario)
}

/// `delta_m Sigma^{-1} nu - zeta_m` node-wise for every investor.
pub fn competitive_demands(scenario: &Scenario, nu: &PathGrid) -> Result<Vec<PathGrid>> {
    let market = scenario.market();
    (0..scenario.num_investors())
        .map(|m| {
            let merton = nu.transform(&(market.sigma_inv() * scenario.investors().tolerance(m)));
            merton.sub(scenario.exposure_path(m))
        })
        .collect()
}

/// Returns when investor `n` holds `phi` and everybody else is a price taker.
pub fn price_impact_returns(scenario: &Scenario, n: usize, phi: &PathGrid) -> Result<PathGrid> {
    let excluded = excluded_returns_map(scenario.market(), scenario.investors(), n)?.path(scenario);
    let slope = scenario.market().sigma() / scenario.investors().total_without(n);
    excluded.sub(&phi.transform(&slope))
}

pub fn best_response_demand(scenario: &Scenario, n: usize) -> Result<PathGrid> {
    Ok(best_response_demand_map(scenario.market(), scenario.investors(), n)?.path(scenario))
}

pub fn best_response_returns(scenario: &Scenario, n: usize) -> Result<PathGrid> {
    Ok(best_response_returns_map(scenario.market(), scenario.investors(), n)?.path(scenario))
}

/// Competitive returns without investor `n`.
pub fn excluded_returns(scenario: &Scenario, n: usize) -> Result<PathGrid> {
    Ok(excluded_returns_map(scenario.market(), scenario.investors(), n)?.path(scenario))
}

/// `delta_m Sigma^{-1} nu - phi`.
pub fn revealed_exposure(
    market: &MarketParams,
    investors: &InvestorSet,
    nu: &PathGrid,
    phi: &PathGrid,
    m: usize,
) -> Result<PathGrid> {
    investors.check_index(m)?;
    nu.transform(&(market.sigma_inv() * investors.tolerance(m))).sub(phi)
}

/// Closed form of the exposure revealed by a best-responding investor:
/// `lambda_n^2 / (1 - lambda_n^2) (zeta_{-n} - psi) + zeta_n / (1 + lambda_n)`.
pub fn best_response_revealed(scenario: &Scenario, n: usize) -> Result<PathGrid> {
    let investors = scenario.investors();
    investors.check_index(n)?;
    let lam = investors.relative(n);
    let w = lam * lam / (1.0 - lam * lam);
    let psi = scenario.noise_level();
    let mut out = scenario.exposure_path(n).scale(1.0 / (1.0 + lam));
    for m in (0..investors.len()).filter(|&m| m != n) {
        out = out.add(&scenario.exposure_path(m).scale(w))?;
    }
    out.sub(&psi.scale(w))
}

pub fn nash_returns(scenario: &Scenario) -> PathGrid {
    nash_returns_map(scenario.market(), scenario.investors()).path(scenario)
}

/// `lambda_m delta_{-m} Sigma^{-1} nu - lambda_{-m} zeta_m` node-wise.
pub fn nash_demands(scenario: &Scenario, nu: &PathGrid) -> Result<Vec<PathGrid>> {
    let investors = scenario.investors();
    let market = scenario.market();
    (0..investors.len())
        .map(|m| {
            let lam = investors.relative(m);
            let merton = nu.transform(&(market.sigma_inv() * (lam * investors.total_without(m))));
            merton.sub(&scenario.exposure_path(m).scale(1.0 - lam))
        })
        .collect()
}

/// Liquidity premium of the Nash over the competitive equilibrium, computed
/// as a difference of returns and from the weighted competitive demands.
#[derive(Clone, Debug, PartialEq)]
pub struct LiquidityPremium {
    pub direct: PathGrid,
    pub decomposed: PathGrid,
}

impl LiquidityPremium {
    pub fn discrepancy(&self) -> f64 {
        self.direct.sup_distance(&self.decomposed).expect("aligned premia")
    }
}

pub fn liquidity_premium(scenario: &Scenario) -> Result<LiquidityPremium> {
    let competitive = competitive_returns(scenario);
    let direct = nash_returns(scenario).sub(&competitive)?;
    let investors = scenario.investors();
    let lams = investors.relatives();
    let denom = 1.0 - lams.iter().map(|l| l * l).sum::<f64>();
    let demands = competitive_demands(scenario, &competitive)?;
    let weighted = PathGrid::sum(
        demands
            .iter()
            .zip(&lams)
            .map(|(phi, lam)| phi.scale(*lam))
            .collect::<Vec<_>>()
            .iter(),
    )?;
    let decomposed = weighted.transform(&(scenario.market().sigma() / (investors.total() * denom)));
    Ok(LiquidityPremium { direct, decomposed })
}

/// Surplus over the zero strategy: trapezoid quadrature of
/// `exp(-rt) [phi' nu - (phi' Sigma phi + 2 phi' Sigma zeta) / (2 delta_m)]`.
pub fn utility_surplus(
    market: &MarketParams,
    tolerance: f64,
    exposure: &PathGrid,
    nu: &PathGrid,
    phi: &PathGrid,
) -> Result<f64> {
    nu.check_aligned(phi)?;
    nu.check_aligned(exposure)?;
    let grid = nu.grid();
    let r = market.discount_rate();
    let sigma = market.sigma();
    let values: Vec<f64> = (0..grid.len())
        .map(|k| {
            let p = phi.at(k);
            let sp = sigma * p;
            let quad = p.dot(&sp) + 2.0 * sp.dot(exposure.at(k));
            (-r * grid.node(k)).exp() * (p.dot(nu.at(k)) - quad / (2.0 * tolerance))
        })
        .collect();
    Ok(trapezoid(&values, grid.dt()))
}

/// Limit of investor 0's Nash surplus as its tolerance grows:
/// quadrature of `exp(-rt) (zeta_{-0} - psi)' Sigma (zeta_{-0} - psi) / (4 delta_{-0})`.
pub fn nash_surplus_limit(scenario: &Scenario) -> Result<f64> {
    let investors = scenario.investors();
    let mut others = scenario.noise_level().scale(-1.0);
    for m in 1..investors.len() {
        others = others.add(scenario.exposure_path(m))?;
    }
    let grid = scenario.grid();
    let r = scenario.market().discount_rate();
    let sigma = scenario.market().sigma();
    let scale = 1.0 / (4.0 * investors.total_without(0));
    let values: Vec<f64> = (0..grid.len())
        .map(|k| {
            let x = others.at(k);
            (-r * grid.node(k)).exp() * scale * x.dot(&(sigma * x))
        })
        .collect();
    Ok(trapezoid(&values, grid.dt()))
}

pub fn competitive_equilibrium(scenario: &Scenario) -> Result<EquilibriumResult> {
    let returns = competitive_returns(scenario);
    let demands = competitive_demands(scenario, &returns)?;
    Ok(EquilibriumResult {
        regime: Regime::FrictionlessCompetitive,
        returns,
        demands,
        rates: None,
    })
}

pub fn nash_equilibrium(scenario: &Scenario) -> Result<EquilibriumResult> {
    let returns = nash_returns(scenario);
    let demands = nash_demands(scenario, &returns)?;
    Ok(EquilibriumResult {
        regime: Regime::FrictionlessNash,
        returns,
        demands,
        rates: None,
    })
}

/// Per-investor surpluses of an equilibrium.
pub fn surpluses(scenario: &Scenario, result: &EquilibriumResult) -> Result<Vec<f64>> {
    if result.demands.len() != scenario.num_investors() {
        return Err(Error::BadDimension("one demand per investor expected".into()));
    }
    result
        .demands
        .iter()
        .enumerate()
        .map(|(m, phi)| {
            utility_surplus(
                scenario.market(),
                scenario.investors().tolerance(m),
                scenario.exposure_path(m),
                &result.returns,
                phi,
            )
        })
        .collect()
}

/// Node-wise `sum_m lambda_m phi_m`, the demand weighting behind the premium.
pub fn weighted_demand(investors: &InvestorSet, demands: &[PathGrid]) -> Result<PathGrid> {
    let lams = investors.relatives();
    let scaled: Vec<PathGrid> = demands.iter().zip(&lams).map(|(p, l)| p.scale(*l)).collect();
    PathGrid::sum(scaled.iter())
}

/// Node-wise `(mu_nash - mu)' psi`.
pub fn premium_noise_alignment(scenario: &Scenario) -> Result<Vec<f64>> {
    let premium = liquidity_premium(scenario)?.direct;
    let psi = scenario.noise_level();
    Ok((0..premium.len())
        .map(|k| premium.at(k).dot(psi.at(k)))
        .collect::<Vec<f64>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{NoiseSpec, ProcessSpec};
    use crate::timefn::TimeFn;

    fn scalar(deltas: Vec<f64>, zetas: &[f64], noise: NoiseSpec) -> Scenario {
        let market = MarketParams::scalar(0.04, 0.1, 0.0, 1.0).unwrap();
        let exposures = zetas.iter().map(|z| ProcessSpec::constant(&[*z])).collect();
        let investors = InvestorSet::new(deltas, exposures).unwrap();
        Scenario::new(market, investors, noise, 20, None).unwrap()
    }

    fn none() -> NoiseSpec {
        NoiseSpec::none(1, 1.0)
    }

    fn tapered() -> NoiseSpec {
        NoiseSpec::tapered(vec![TimeFn::poly(vec![0.8, -0.5])], 1.0)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn competitive_hand_example() {
        let s = scalar(vec![1.0, 1.0], &[1.0, 1.0], none());
        let nu = competitive_returns(&s);
        assert!(nu.values().iter().all(|v| close(v[0], 0.04)));
        let demands = competitive_demands(&s, &nu).unwrap();
        assert!(demands.iter().all(|p| p.sup_norm() < 1e-14));
    }

    #[test]
    fn matching_noise_gives_zero_returns() {
        let market = MarketParams::scalar(0.04, 0.1, 0.0, 1.0).unwrap();
        let noise = NoiseSpec::raw_rate(vec![TimeFn::constant(1.0)], 1.0);
        let investors = InvestorSet::new(
            vec![1.0, 2.0],
            vec![
                ProcessSpec::Deterministic {
                    components: vec![TimeFn::poly(vec![0.0, 1.0])],
                },
                ProcessSpec::zero(1),
            ],
        )
        .unwrap();
        let s = Scenario::new(market, investors, noise, 10, None).unwrap();
        assert!(competitive_returns(&s).sup_norm() < 1e-15);
    }

    #[test]
    fn zero_returns_give_pure_hedging() {
        let s = scalar(vec![1.0, 3.0], &[0.7, -0.2], none());
        let zero = PathGrid::zeros(s.grid(), 1);
        let d = competitive_demands(&s, &zero).unwrap();
        assert!(close(d[0].at(3)[0], -0.7));
        assert!(close(d[1].at(3)[0], 0.2));
    }

    #[test]
    fn doubling_tolerances_halves_returns() {
        let a = competitive_returns(&scalar(vec![1.0, 2.0], &[1.0, 0.5], tapered()));
        let b = competitive_returns(&scalar(vec![2.0, 4.0], &[1.0, 0.5], tapered()));
        assert!(a.scale(0.5).sup_distance(&b).unwrap() < 1e-15);
    }

    #[test]
    fn best_response_hand_example() {
        let s = scalar(vec![1.0, 1.0], &[0.0, 3.0], none());
        let phi = best_response_demand(&s, 0).unwrap();
        assert!(phi.values().iter().all(|v| close(v[0], 1.0)));
        let mu = best_response_returns(&s, 0).unwrap();
        assert!(mu.values().iter().all(|v| close(v[0], 0.08)));
        let nash = nash_returns(&s);
        assert!(nash.values().iter().all(|v| close(v[0], 0.06)));
    }

    #[test]
    fn price_impact_at_zero_is_excluded_competitive() {
        let s = scalar(vec![1.0, 2.0], &[0.3, 0.9], tapered());
        let zero = PathGrid::zeros(s.grid(), 1);
        let nu = price_impact_returns(&s, 0, &zero).unwrap();
        assert!(nu.sup_distance(&excluded_returns(&s, 0).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn price_impact_at_competitive_demand_is_competitive() {
        let s = scalar(vec![1.0, 2.0, 0.5], &[0.3, 0.9, -0.4], tapered());
        let mu = competitive_returns(&s);
        let phi = &competitive_demands(&s, &mu).unwrap()[1];
        let nu = price_impact_returns(&s, 1, phi).unwrap();
        assert!(nu.sup_distance(&mu).unwrap() < 1e-14);
    }

    #[test]
    fn price_impact_at_best_response_is_best_response_returns() {
        let s = scalar(vec![1.0, 2.0, 0.5], &[0.3, 0.9, -0.4], tapered());
        for n in 0..3 {
            let phi = best_response_demand(&s, n).unwrap();
            let nu = price_impact_returns(&s, n, &phi).unwrap();
            assert!(nu.sup_distance(&best_response_returns(&s, n).unwrap()).unwrap() < 1e-12);
        }
    }

    #[test]
    fn best_response_is_shrunk_competitive_demand() {
        let s = scalar(vec![1.0, 2.0, 0.5], &[0.3, 0.9, -0.4], tapered());
        let comp = competitive_demands(&s, &competitive_returns(&s)).unwrap();
        for (n, c) in comp.iter().enumerate() {
            let lam = s.investors().relative(n);
            let phi = best_response_demand(&s, n).unwrap();
            assert!(phi.sub(&c.scale(1.0 / (lam + 1.0))).unwrap().sup_norm() < 1e-12);
        }
    }

    #[test]
    fn revealed_exposure_closed_form() {
        let s = scalar(vec![1.0, 2.0, 0.5], &[0.3, 0.9, -0.4], tapered());
        for n in 0..3 {
            let mu = best_response_returns(&s, n).unwrap();
            let phi = best_response_demand(&s, n).unwrap();
            let revealed = revealed_exposure(s.market(), s.investors(), &mu, &phi, n).unwrap();
            let closed = best_response_revealed(&s, n).unwrap();
            assert!(revealed.sup_distance(&closed).unwrap() < 1e-12);
        }
    }

    #[test]
    fn competitive_pair_reveals_true_exposure() {
        let s = scalar(vec![1.0, 2.0], &[0.3, 0.9], tapered());
        let mu = competitive_returns(&s);
        let phi = competitive_demands(&s, &mu).unwrap();
        for (m, p) in phi.iter().enumerate() {
            let z = revealed_exposure(s.market(), s.investors(), &mu, p, m).unwrap();
            assert!(z.sup_distance(s.exposure_path(m)).unwrap() < 1e-14);
        }
    }

    #[test]
    fn clearing_of_frictionless_regimes() {
        let s = scalar(vec![1.0, 2.0, 0.5], &[0.3, 0.9, -0.4], tapered());
        let psi = s.noise_level();
        for result in [competitive_equilibrium(&s).unwrap(), nash_equilibrium(&s).unwrap()] {
            let total = PathGrid::sum(result.demands.iter()).unwrap().add(&psi).unwrap();
            assert!(total.sup_norm() < 1e-12);
        }
    }

    #[test]
    fn equal_tolerance_premium() {
        let s = scalar(vec![1.5; 3], &[0.3, 0.9, -0.4], tapered());
        let premium = liquidity_premium(&s).unwrap();
        let expect = s.noise_level().scale(-0.04 / (1.5 * 3.0 * 2.0));
        assert!(premium.direct.sup_distance(&expect).unwrap() < 1e-12);
        assert!(premium.discrepancy() < 1e-12);
        assert!(premium_noise_alignment(&s).unwrap().iter().all(|x| *x <= 0.0));
    }

    #[test]
    fn premium_vanishes_on_weighted_exposure() {
        // zeta = sum lambda_m zeta_m / sum lambda_m^2 with psi = 0.
        let deltas = vec![1.0, 3.0];
        let lams = [0.25, 0.75];
        let z1 = 1.0;
        // Solve zeta_1 + zeta_2 = (l1 z1 + l2 z2) / (l1^2 + l2^2) for z2.
        let q = lams[0] * lams[0] + lams[1] * lams[1];
        let z2 = (lams[0] * z1 - q * z1) / (q - lams[1]);
        let s = scalar(deltas, &[z1, z2], none());
        assert!(liquidity_premium(&s).unwrap().direct.sup_norm() < 1e-14);
    }

    #[test]
    fn zero_strategy_has_zero_surplus() {
        let s = scalar(vec![1.0, 2.0], &[0.3, 0.9], tapered());
        let mu = competitive_returns(&s);
        let zero = PathGrid::zeros(s.grid(), 1);
        assert_eq!(utility_surplus(s.market(), 1.0, s.exposure_path(0), &mu, &zero).unwrap(), 0.0);
    }

    #[test]
    fn covariance_scaling_is_linear() {
        let s = scalar(vec![1.0, 2.0, 0.5], &[0.3, 0.9, -0.4], tapered());
        let scaled = s.with_market(s.market().with_covariance_scale(3.0).unwrap()).unwrap();
        assert!(competitive_returns(&s).scale(3.0).sup_distance(&competitive_returns(&scaled)).unwrap() < 1e-14);
        assert!(nash_returns(&s).scale(3.0).sup_distance(&nash_returns(&scaled)).unwrap() < 1e-14);
        let p1 = liquidity_premium(&s).unwrap().direct.scale(3.0);
        let p2 = liquidity_premium(&scaled).unwrap().direct;
        assert!(p1.sup_distance(&p2).unwrap() < 1e-14);
    }
}
