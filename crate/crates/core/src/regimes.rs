//! Dispatch over the five market structures and per-investor surpluses.

use crate::error::{Error, Result};
use crate::frictional::{
    frictional_best_response_equilibrium, frictional_nash, frictional_nash_two_investors,
};
use crate::frictionless::{competitive_equilibrium, nash_equilibrium, utility_surplus};
use crate::model::{EquilibriumResult, Regime, Scenario};
use crate::quadrature::trapezoid;

/// Whether `regime` has a closed form for this investor population.
pub fn is_supported(regime: Regime, scenario: &Scenario) -> bool {
    let investors = scenario.investors();
    match regime {
        Regime::FrictionlessCompetitive | Regime::FrictionlessNash => true,
        Regime::FrictionalBestResponse | Regime::FrictionalNash => investors.common_tolerance().is_some(),
        Regime::FrictionalNashTwoInvestor => investors.len() == 2,
    }
}

/// Solves one regime; `strategic` picks the strategic investor of the
/// best-response regime and is ignored otherwise.
pub fn solve(regime: Regime, scenario: &Scenario, strategic: usize) -> Result<EquilibriumResult> {
    match regime {
        Regime::FrictionlessCompetitive => competitive_equilibrium(scenario),
        Regime::FrictionlessNash => nash_equilibrium(scenario),
        Regime::FrictionalBestResponse => frictional_best_response_equilibrium(scenario, strategic),
        Regime::FrictionalNash => frictional_nash(scenario),
        Regime::FrictionalNashTwoInvestor => frictional_nash_two_investors(scenario),
    }
}

/// Surplus over the zero strategy on one realized path. Frictional regimes
/// also pay `int exp(-rt) phi_dot' Lambda phi_dot dt`.
pub fn path_surpluses(scenario: &Scenario, result: &EquilibriumResult) -> Result<Vec<f64>> {
    let investors = scenario.investors();
    if result.demands.len() != investors.len() {
        return Err(Error::BadDimension("one demand per investor expected".into()));
    }
    let market = scenario.market();
    let grid = scenario.grid();
    let r = market.discount_rate();
    (0..investors.len())
        .map(|m| {
            let mut value = utility_surplus(
                market,
                investors.tolerance(m),
                scenario.exposure_path(m),
                &result.returns,
                &result.demands[m],
            )?;
            if let Some(rates) = &result.rates {
                let costs: Vec<f64> = (0..grid.len())
                    .map(|k| {
                        let v = rates[m].at(k);
                        (-r * grid.node(k)).exp() * v.dot(&(market.cost() * v))
                    })
                    .collect();
                value -= trapezoid(&costs, grid.dt());
            }
            Ok(value)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurplusEstimate {
    pub mean: Vec<f64>,
    /// Zero for deterministic scenarios.
    pub standard_error: Vec<f64>,
    pub paths: usize,
}

/// Surplus per investor: a single evaluation for deterministic scenarios,
/// otherwise the sample mean over `paths` realizations seeded `seed + p`.
pub fn surplus_estimate(
    regime: Regime,
    scenario: &Scenario,
    strategic: usize,
    paths: usize,
) -> Result<SurplusEstimate> {
    let n = scenario.num_investors();
    if scenario.is_deterministic() {
        let mean = path_surpluses(scenario, &solve(regime, scenario, strategic)?)?;
        return Ok(SurplusEstimate {
            mean,
            standard_error: vec![0.0; n],
            paths: 1,
        });
    }
    if paths < 2 {
        return Err(Error::BadParameter("Monte Carlo needs at least two paths".into()));
    }
    let seed = scenario.seed().ok_or(Error::BadSeed)?;
    let mut samples = vec![Vec::with_capacity(paths); n];
    for p in 0..paths {
        let path = Scenario::new(
            scenario.market().clone(),
            scenario.investors().clone(),
            scenario.noise().clone(),
            scenario.grid().steps(),
            Some(seed.wrapping_add(p as u64)),
        )?;
        let values = path_surpluses(&path, &solve(regime, &path, strategic)?)?;
        for (m, v) in values.into_iter().enumerate() {
            samples[m].push(v);
        }
    }
    let count = paths as f64;
    let mean: Vec<f64> = samples.iter().map(|s| s.iter().sum::<f64>() / count).collect();
    let standard_error = samples
        .iter()
        .zip(&mean)
        .map(|(s, mu)| {
            let var = s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (count - 1.0);
            (var / count).sqrt()
        })
        .collect();
    Ok(SurplusEstimate {
        mean,
        standard_error,
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InvestorSet, MarketParams};
    use crate::paths::{NoiseSpec, ProcessSpec};
    use crate::timefn::TimeFn;

    fn scenario(deltas: Vec<f64>, stochastic: bool) -> Scenario {
        let market = MarketParams::scalar(0.04, 0.1, 0.1, 1.0).unwrap();
        let ou = ProcessSpec::Ou {
            initial: vec![1.0],
            mean: vec![0.5],
            reversion: 1.0,
            scale: vec![vec![if stochastic { 0.3 } else { 0.0 }]],
        };
        let n = deltas.len();
        let investors = InvestorSet::new(deltas, vec![ou; n]).unwrap();
        let noise = NoiseSpec::tapered(vec![TimeFn::constant(0.4)], 1.0);
        Scenario::new(market, investors, noise, 40, Some(9)).unwrap()
    }

    #[test]
    fn support_matrix() {
        let equal = scenario(vec![1.0; 3], false);
        let mixed = scenario(vec![1.0, 2.0, 3.0], false);
        let pair = scenario(vec![1.0, 2.0], false);
        assert!(is_supported(Regime::FrictionalNash, &equal));
        assert!(!is_supported(Regime::FrictionalNash, &mixed));
        assert!(!is_supported(Regime::FrictionalNashTwoInvestor, &equal));
        assert!(is_supported(Regime::FrictionalNashTwoInvestor, &pair));
        assert!(solve(Regime::FrictionalNash, &mixed, 0).is_err());
    }

    #[test]
    fn deterministic_surplus_has_zero_error() {
        let s = scenario(vec![1.0, 1.0], false);
        let est = surplus_estimate(Regime::FrictionlessNash, &s, 0, 10).unwrap();
        assert_eq!(est.paths, 1);
        assert_eq!(est.standard_error, vec![0.0, 0.0]);
    }

    #[test]
    fn monte_carlo_surplus_is_reproducible() {
        let s = scenario(vec![1.0, 1.0], true);
        let a = surplus_estimate(Regime::FrictionalNash, &s, 0, 8).unwrap();
        let b = surplus_estimate(Regime::FrictionalNash, &s, 0, 8).unwrap();
        assert_eq!(a, b);
        assert!(a.standard_error.iter().all(|e| *e > 0.0));
    }

    #[test]
    fn friction_costs_lower_surplus() {
        let s = scenario(vec![1.0, 1.0], false);
        let res = solve(Regime::FrictionalNash, &s, 0).unwrap();
        let with_cost = path_surpluses(&s, &res).unwrap();
        let mut free = res.clone();
        free.rates = None;
        let without = path_surpluses(&s, &free).unwrap();
        for (a, b) in with_cost.iter().zip(&without) {
            assert!(a < b);
        }
    }
}
