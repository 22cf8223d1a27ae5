//! TOML scenario files.

use equilibria_core::model::{validate_market, InvestorSet, MarketParams, Regime, Scenario};
use equilibria_core::paths::{NoiseSpec, ProcessSpec};
use equilibria_core::regimes::is_supported;
use equilibria_core::timefn::TimeFn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub market: MarketConfig,
    pub investors: Vec<InvestorConfig>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub assets: usize,
    /// Row-major covariance matrix.
    pub covariance: Vec<Vec<f64>>,
    /// Diagonal of the transaction cost matrix.
    pub cost: Vec<f64>,
    pub discount_rate: f64,
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvestorConfig {
    pub tolerance: f64,
    pub exposure: ProcessSpec,
}

/// Noise-trader demand. Rates are `(T - t) g_i(t)` so they vanish at the horizon.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    #[default]
    None,
    Tapered { shapes: Vec<TimeFn> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    LambdaScale,
    NInvestors,
    Delta1,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::LambdaScale => "lambda_scale",
            SweepParameter::NInvestors => "n_investors",
            SweepParameter::Delta1 => "delta1",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

fn default_regimes() -> Vec<Regime> {
    vec![Regime::FrictionlessCompetitive, Regime::FrictionlessNash]
}

fn default_oracle() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_regimes")]
    pub regimes: Vec<Regime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Monte Carlo paths for surplus estimates of stochastic scenarios.
    #[serde(default)]
    pub mc_paths: usize,
    /// Strategic investor of the best-response regime.
    #[serde(default)]
    pub strategic: usize,
    #[serde(default = "default_oracle")]
    pub oracle: bool,
    /// Friction coefficient of the competitive frictional benchmark, used only
    /// for the reported ratio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub competitive_friction_coefficient: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweeps: Vec<SweepConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            regimes: default_regimes(),
            seed: None,
            mc_paths: 0,
            strategic: 0,
            oracle: true,
            competitive_friction_coefficient: None,
            sweeps: Vec::new(),
        }
    }
}

/// Command-line overrides of the run block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid_steps: Option<usize>,
    pub regimes: Option<Vec<Regime>>,
    pub mc_paths: Option<usize>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::ConfigParse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.run.seed = Some(seed);
        }
        if let Some(steps) = overrides.grid_steps {
            self.market.steps = steps;
        }
        if let Some(regimes) = &overrides.regimes {
            self.run.regimes = regimes.clone();
        }
        if let Some(paths) = overrides.mc_paths {
            self.run.mc_paths = paths;
        }
    }

    pub fn market(&self) -> CliResult<MarketParams> {
        let m = &self.market;
        let d = m.assets;
        if d == 0 || m.covariance.len() != d || m.covariance.iter().any(|row| row.len() != d) {
            return Err(CliError::Validation(format!("covariance must be {d} x {d}")));
        }
        if m.cost.len() != d {
            return Err(CliError::Validation(format!("cost must have {d} entries")));
        }
        let sigma = DMatrix::from_fn(d, d, |i, j| m.covariance[i][j]);
        let cost = DMatrix::from_diagonal(&DVector::from_column_slice(&m.cost));
        MarketParams::new(sigma, cost, m.discount_rate, m.horizon).map_err(CliError::validation)
    }

    pub fn investor_set(&self) -> CliResult<InvestorSet> {
        InvestorSet::new(
            self.investors.iter().map(|i| i.tolerance).collect(),
            self.investors.iter().map(|i| i.exposure.clone()).collect(),
        )
        .map_err(CliError::validation)
    }

    pub fn noise(&self) -> NoiseSpec {
        match &self.noise {
            NoiseConfig::None => NoiseSpec::none(self.market.assets, self.market.horizon),
            NoiseConfig::Tapered { shapes } => NoiseSpec::tapered(shapes.clone(), self.market.horizon),
        }
    }

    /// Builds the scenario and checks everything the requested run needs
    /// before any computation starts.
    pub fn scenario(&self) -> CliResult<Scenario> {
        let market = self.market()?;
        let investors = self.investor_set()?;
        let noise = self.noise();
        let frictional = self.run.regimes.iter().any(|r| r.is_frictional());
        validate_market(&market, &investors, &noise, frictional).map_err(CliError::validation)?;
        let scenario =
            Scenario::new(market, investors, noise, self.market.steps, self.run.seed).map_err(CliError::validation)?;
        for &regime in &self.run.regimes {
            if !is_supported(regime, &scenario) {
                return Err(CliError::Validation(format!(
                    "regime {} is not available for these investors",
                    regime.name()
                )));
            }
        }
        if self.run.strategic >= scenario.num_investors() {
            return Err(CliError::Validation(format!(
                "strategic investor {} out of range",
                self.run.strategic
            )));
        }
        if !scenario.is_deterministic() && self.run.mc_paths < 2 {
            return Err(CliError::Validation(
                "stochastic exposures need mc_paths >= 2 for surplus estimates".into(),
            ));
        }
        if let Some(c) = self.run.competitive_friction_coefficient {
            if !(c.is_finite() && c > 0.0) {
                return Err(CliError::Validation("competitive_friction_coefficient must be positive".into()));
            }
        }
        Ok(scenario)
    }

    /// A small two-asset scenario exercising every config block.
    pub fn template() -> Self {
        Self {
            market: MarketConfig {
                assets: 2,
                covariance: vec![vec![0.04, 0.01], vec![0.01, 0.09]],
                cost: vec![0.1, 0.2],
                discount_rate: 0.05,
                horizon: 1.0,
                steps: 200,
            },
            investors: vec![
                InvestorConfig {
                    tolerance: 1.0,
                    exposure: ProcessSpec::constant(&[0.5, -0.2]),
                },
                InvestorConfig {
                    tolerance: 1.0,
                    exposure: ProcessSpec::Deterministic {
                        components: vec![TimeFn::poly(vec![0.2, 0.3]), TimeFn::sine(0.1, 3.0, 0.0)],
                    },
                },
                InvestorConfig {
                    tolerance: 1.0,
                    exposure: ProcessSpec::Ou {
                        initial: vec![0.4, 0.1],
                        mean: vec![0.0, 0.2],
                        reversion: 1.5,
                        scale: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                    },
                },
            ],
            noise: NoiseConfig::Tapered {
                shapes: vec![TimeFn::poly(vec![0.6, -0.3]), TimeFn::constant(-0.2)],
            },
            run: RunConfig {
                regimes: Regime::ALL
                    .into_iter()
                    .filter(|r| *r != Regime::FrictionalNashTwoInvestor)
                    .collect(),
                seed: Some(7),
                mc_paths: 32,
                strategic: 0,
                oracle: true,
                competitive_friction_coefficient: None,
                sweeps: vec![
                    SweepConfig {
                        parameter: SweepParameter::LambdaScale,
                        values: vec![1.0, 0.1, 0.01],
                    },
                    SweepConfig {
                        parameter: SweepParameter::NInvestors,
                        values: vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
                    },
                ],
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_round_trips() {
        let text = ScenarioConfig::template().to_toml();
        let parsed = ScenarioConfig::parse(&text).unwrap();
        assert_eq!(parsed, ScenarioConfig::template());
        assert_eq!(parsed.to_toml(), text);
        parsed.scenario().unwrap();
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        let text = ScenarioConfig::template().to_toml().replace("discount_rate", "discount");
        assert!(matches!(ScenarioConfig::parse(&text), Err(CliError::ConfigParse(_))));
    }

    #[test]
    fn asymmetric_covariance_is_a_validation_error() {
        let mut cfg = ScenarioConfig::template();
        cfg.market.covariance[0][1] = 0.02;
        assert!(matches!(cfg.scenario(), Err(CliError::Validation(_))));
    }

    #[test]
    fn overrides_replace_run_settings() {
        let mut cfg = ScenarioConfig::template();
        cfg.apply(&Overrides {
            seed: Some(99),
            grid_steps: Some(50),
            regimes: Some(vec![Regime::FrictionlessNash]),
            mc_paths: None,
        });
        assert_eq!(cfg.run.seed, Some(99));
        assert_eq!(cfg.market.steps, 50);
        assert_eq!(cfg.run.regimes, vec![Regime::FrictionlessNash]);
        assert_eq!(cfg.run.mc_paths, 32);
    }

    #[test]
    fn unsupported_regime_fails_validation() {
        let mut cfg = ScenarioConfig::template();
        cfg.run.regimes = vec![Regime::FrictionalNashTwoInvestor];
        assert!(matches!(cfg.scenario(), Err(CliError::Validation(_))));
    }
}
