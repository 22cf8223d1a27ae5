//! Processes that are linear in the exposures and the noise terms.
//!
//! Every return and target process of the model has the form
//! `sum_m A_m zeta_m(t) + A_psi psi(t) + A_rate psi_dot(t) + A_drift a(t)`,
//! so its realized path and its conditional means follow from the scenario.

use nalgebra::{DMatrix, DVector};

use crate::model::Scenario;
use crate::paths::PathGrid;

#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    exposure: Vec<DMatrix<f64>>,
    level: DMatrix<f64>,
    rate: DMatrix<f64>,
    drift: DMatrix<f64>,
}

/// Exposure means and noise terms at one instant, shared by every [`Affine`]
/// evaluated there.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub exposures: Vec<DVector<f64>>,
    pub level: DVector<f64>,
    pub rate: DVector<f64>,
    pub drift: DVector<f64>,
}

impl Inputs {
    /// Deterministic part of the conditional means at time `u`.
    pub fn mean_at(scenario: &Scenario, u: f64) -> Self {
        let d = scenario.num_assets();
        let noise = scenario.noise();
        Self {
            exposures: scenario
                .investors()
                .exposures()
                .iter()
                .map(|spec| spec.mean_function(u, d))
                .collect(),
            level: noise.level(u),
            rate: noise.rate(u),
            drift: noise.rate_drift(u),
        }
    }

    /// Realized values at node `k`.
    pub fn realized_at(scenario: &Scenario, k: usize) -> Self {
        let t = scenario.grid().node(k);
        let noise = scenario.noise();
        Self {
            exposures: (0..scenario.num_investors())
                .map(|m| scenario.exposure_path(m).at(k).clone())
                .collect(),
            level: noise.level(t),
            rate: noise.rate(t),
            drift: noise.rate_drift(t),
        }
    }
}

/// A stochastic leaf seen through an [`Affine`] map.
#[derive(Clone, Debug)]
pub struct LoadedFactor<'a> {
    pub decay: f64,
    pub loading: DMatrix<f64>,
    pub deviation: &'a PathGrid,
}

impl Affine {
    pub fn zero(rows: usize, d: usize, n: usize) -> Self {
        Self {
            exposure: vec![DMatrix::zeros(rows, d); n],
            level: DMatrix::zeros(rows, d),
            rate: DMatrix::zeros(rows, d),
            drift: DMatrix::zeros(rows, d),
        }
    }

    pub fn rows(&self) -> usize {
        self.level.nrows()
    }

    pub fn num_investors(&self) -> usize {
        self.exposure.len()
    }

    pub fn exposure_coeff(&self, m: usize) -> &DMatrix<f64> {
        &self.exposure[m]
    }

    pub fn level_coeff(&self) -> &DMatrix<f64> {
        &self.level
    }

    pub fn rate_coeff(&self) -> &DMatrix<f64> {
        &self.rate
    }

    pub fn drift_coeff(&self) -> &DMatrix<f64> {
        &self.drift
    }

    pub fn add_exposure(mut self, m: usize, coeff: &DMatrix<f64>) -> Self {
        self.exposure[m] += coeff;
        self
    }

    pub fn add_level(mut self, coeff: &DMatrix<f64>) -> Self {
        self.level += coeff;
        self
    }

    /// Adds `coeff (a - r psi_dot)`.
    pub fn add_drive(mut self, coeff: &DMatrix<f64>, discount_rate: f64) -> Self {
        self.drift += coeff;
        self.rate -= coeff * discount_rate;
        self
    }

    pub fn plus(&self, other: &Affine) -> Self {
        Self {
            exposure: self
                .exposure
                .iter()
                .zip(&other.exposure)
                .map(|(a, b)| a + b)
                .collect(),
            level: &self.level + &other.level,
            rate: &self.rate + &other.rate,
            drift: &self.drift + &other.drift,
        }
    }

    pub fn minus(&self, other: &Affine) -> Self {
        self.plus(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|a| a * c)
    }

    pub fn left_mul(&self, m: &DMatrix<f64>) -> Self {
        self.map(|a| m * a)
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            exposure: self.exposure.iter().map(&f).collect(),
            level: f(&self.level),
            rate: f(&self.rate),
            drift: f(&self.drift),
        }
    }

    /// Stacks several maps with equal column structure on top of each other.
    pub fn stack(parts: &[Affine]) -> Self {
        let rows: usize = parts.iter().map(Affine::rows).sum();
        let d = parts[0].level.ncols();
        let n = parts[0].num_investors();
        let mut out = Affine::zero(rows, d, n);
        let mut offset = 0;
        for part in parts {
            let r = part.rows();
            for m in 0..n {
                out.exposure[m].rows_mut(offset, r).copy_from(&part.exposure[m]);
            }
            out.level.rows_mut(offset, r).copy_from(&part.level);
            out.rate.rows_mut(offset, r).copy_from(&part.rate);
            out.drift.rows_mut(offset, r).copy_from(&part.drift);
            offset += r;
        }
        out
    }

    /// Rows `offset..offset + len`.
    pub fn block(&self, offset: usize, len: usize) -> Self {
        self.map(|a| a.rows(offset, len).into_owned())
    }

    pub fn apply(&self, inputs: &Inputs) -> DVector<f64> {
        let mut out = &self.level * &inputs.level + &self.rate * &inputs.rate + &self.drift * &inputs.drift;
        for (a, z) in self.exposure.iter().zip(&inputs.exposures) {
            out += a * z;
        }
        out
    }

    pub fn evaluate(&self, scenario: &Scenario, k: usize) -> DVector<f64> {
        self.apply(&Inputs::realized_at(scenario, k))
    }

    pub fn path(&self, scenario: &Scenario) -> PathGrid {
        PathGrid::from_fn(scenario.grid(), |k, _| self.evaluate(scenario, k))
    }

    pub fn factors<'a>(&self, scenario: &'a Scenario) -> Vec<LoadedFactor<'a>> {
        let mut out = Vec::new();
        for (m, coeff) in self.exposure.iter().enumerate() {
            if coeff.iter().all(|&c| c == 0.0) {
                continue;
            }
            for factor in &scenario.exposure(m).factors {
                out.push(LoadedFactor {
                    decay: factor.decay,
                    loading: coeff.clone(),
                    deviation: &factor.deviation,
                });
            }
        }
        out
    }

    /// `E[X(u) | F(t_k)]`.
    pub fn conditional_mean(&self, scenario: &Scenario, k: usize, u: f64) -> DVector<f64> {
        let t = scenario.grid().node(k);
        let mut out = self.apply(&Inputs::mean_at(scenario, u));
        for f in self.factors(scenario) {
            out += &f.loading * f.deviation.at(k) * (-f.decay * (u - t)).exp();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InvestorSet, MarketParams};
    use crate::paths::{NoiseSpec, ProcessSpec};
    use crate::timefn::TimeFn;

    fn scenario() -> Scenario {
        let market = MarketParams::scalar(0.04, 0.1, 0.3, 1.0).unwrap();
        let ou = ProcessSpec::Ou {
            initial: vec![2.0],
            mean: vec![1.0],
            reversion: 1.5,
            scale: vec![vec![0.4]],
        };
        let investors = InvestorSet::new(vec![1.0, 2.0], vec![ou, ProcessSpec::constant(&[0.5])]).unwrap();
        let noise = NoiseSpec::tapered(vec![TimeFn::poly(vec![0.3, 0.1])], 1.0);
        Scenario::new(market, investors, noise, 50, Some(4)).unwrap()
    }

    #[test]
    fn conditional_mean_at_current_node_is_realized_value() {
        let s = scenario();
        let a = Affine::zero(1, 1, 2)
            .add_exposure(0, &DMatrix::from_element(1, 1, 2.0))
            .add_exposure(1, &DMatrix::from_element(1, 1, -1.0))
            .add_level(&DMatrix::from_element(1, 1, 3.0))
            .add_drive(&DMatrix::from_element(1, 1, 0.7), 0.3);
        for k in [0, 10, 50] {
            let t = s.grid().node(k);
            let lhs = a.conditional_mean(&s, k, t);
            let rhs = a.evaluate(&s, k);
            assert!((lhs[0] - rhs[0]).abs() < 1e-13);
        }
    }

    #[test]
    fn drive_term_combines_drift_and_rate() {
        let s = scenario();
        let a = Affine::zero(1, 1, 2).add_drive(&DMatrix::from_element(1, 1, 1.0), 0.3);
        let drive = s.friction_drive();
        for k in [0, 25, 50] {
            assert!((a.evaluate(&s, k)[0] - drive.at(k)[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn stack_and_block_invert() {
        let a = Affine::zero(1, 1, 2).add_level(&DMatrix::from_element(1, 1, 1.0));
        let b = Affine::zero(1, 1, 2).add_exposure(1, &DMatrix::from_element(1, 1, 2.0));
        let st = Affine::stack(&[a.clone(), b.clone()]);
        assert_eq!(st.rows(), 2);
        assert_eq!(st.block(0, 1), a);
        assert_eq!(st.block(1, 1), b);
    }
}
