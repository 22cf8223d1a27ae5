use equilibria_core::frictional::{frictional_best_response, frictional_nash};
use equilibria_core::frictionless::{liquidity_premium, nash_equilibrium, premium_noise_alignment};
use equilibria_core::kernel::FrictionKernel;
use equilibria_core::model::{InvestorSet, MarketParams, Scenario};
use equilibria_core::oracle::verify_clearing;
use equilibria_core::paths::{NoiseSpec, ProcessSpec};
use equilibria_core::timefn::TimeFn;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn market(d: usize, entries: &[f64], costs: &[f64], r: f64) -> MarketParams {
    let a = DMatrix::from_fn(d, d, |i, j| entries[i * 3 + j]);
    let sigma = &a * a.transpose() + DMatrix::identity(d, d) * 0.02;
    let cost = DMatrix::from_diagonal(&DVector::from_fn(d, |i, _| costs[i]));
    MarketParams::new(sigma, cost, r, 1.0).unwrap()
}

fn scenario(d: usize, entries: &[f64], costs: &[f64], r: f64, deltas: Vec<f64>, noise: &[f64]) -> Scenario {
    let market = market(d, entries, costs, r);
    let exposures = deltas
        .iter()
        .enumerate()
        .map(|(m, _)| ProcessSpec::Deterministic {
            components: (0..d)
                .map(|i| TimeFn::poly(vec![0.3 * (m + i) as f64 - 0.5, 0.4]))
                .collect(),
        })
        .collect();
    let investors = InvestorSet::new(deltas, exposures).unwrap();
    let noise = NoiseSpec::tapered(
        (0..d).map(|i| TimeFn::poly(vec![noise[i], noise[i + 3]])).collect(),
        1.0,
    );
    Scenario::new(market, investors, noise, 40, None).unwrap()
}

fn entries() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.4..0.4f64, 9)
}

fn costs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.02..0.6f64, 3)
}

fn noise() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5..1.5f64, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn equal_tolerance_premium_is_scaled_noise(
        d in 1usize..=3, n in 2usize..=6, delta in 0.2..5.0f64,
        e in entries(), c in costs(), z in noise(),
    ) {
        let s = scenario(d, &e, &c, 0.0, vec![delta; n], &z);
        let premium = liquidity_premium(&s).unwrap().direct;
        let expect = s.noise_level().transform(&(s.market().sigma() * (-1.0 / (delta * (n * (n - 1)) as f64))));
        prop_assert!(premium.sup_distance(&expect).unwrap() < 1e-12);
    }

    #[test]
    fn premium_leans_against_noise(
        d in 1usize..=3, n in 2usize..=6, delta in 0.1..10.0f64,
        e in entries(), c in costs(), z in noise(),
    ) {
        let s = scenario(d, &e, &c, 0.0, vec![delta; n], &z);
        for v in premium_noise_alignment(&s).unwrap() {
            prop_assert!(v <= 1e-14);
        }
    }

    #[test]
    fn frictionless_nash_clears(
        d in 1usize..=3, deltas in prop::collection::vec(0.1..10.0f64, 2..6),
        e in entries(), c in costs(), z in noise(),
    ) {
        let s = scenario(d, &e, &c, 0.0, deltas, &z);
        prop_assert!(verify_clearing(&nash_equilibrium(&s).unwrap(), s.noise(), 1e-10).passed);
    }

    #[test]
    fn frictional_nash_clears_with_boundaries(
        d in 1usize..=3, n in 2usize..=5, delta in 0.2..5.0f64, r in 0.0..0.5f64,
        e in entries(), c in costs(), z in noise(),
    ) {
        let s = scenario(d, &e, &c, r, vec![delta; n], &z);
        let res = frictional_nash(&s).unwrap();
        prop_assert!(verify_clearing(&res, s.noise(), 1e-8).passed);
        let k = s.grid().steps();
        for (phi, rate) in res.demands.iter().zip(res.rates.as_ref().unwrap()) {
            prop_assert!(phi.at(0).amax() < 1e-9);
            prop_assert!(rate.at(k).amax() < 1e-9);
        }
    }

    #[test]
    fn best_response_rate_vanishes_at_horizon(
        d in 1usize..=3, delta in 0.2..5.0f64, r in 0.0..0.5f64,
        e in entries(), c in costs(), z in noise(),
    ) {
        let s = scenario(d, &e, &c, r, vec![delta; 3], &z);
        let sol = frictional_best_response(&s, 1).unwrap();
        prop_assert!(sol.rate.at(s.grid().steps()).amax() < 1e-9);
        prop_assert!(sol.demand.at(0).amax() < 1e-9);
    }

    #[test]
    fn kernel_boundary_values(
        d in 1usize..=3, delta in 0.2..5.0f64, r in 0.0..0.5f64,
        e in entries(), c in costs(),
    ) {
        let m = market(d, &e, &c, r);
        let k = FrictionKernel::for_tolerance(&m, delta).unwrap();
        prop_assert!((k.g(1.0) - DMatrix::identity(d, d)).amax() < 1e-14);
        prop_assert!(k.g_dot(1.0).amax() < 1e-14);
        prop_assert!(k.f(1.0).amax() < 1e-14);
        prop_assert!(k.eigenvalues().iter().all(|&b| b > 0.0));
    }
}
