//! Market primitives, investors, time grids and realized scenarios.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{realize, realize_with_driver, BrownianDriver, NoiseSpec, PathGrid, ProcessSpec, RealizedProcess};

const SYMMETRY_TOL: f64 = 1e-12;
const TERMINAL_RATE_TOL: f64 = 1e-12;
const EQUAL_TOLERANCE_RTOL: f64 = 1e-12;

/// Uniform grid `t_k = k T / K`, `k = 0..=K`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::BadParameter("grid needs at least one step".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::BadParameter("horizon must be positive".into()));
        }
        Ok(Self { steps, horizon })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Number of nodes, `K + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.node(k))
    }
}

/// Covariance, diagonal cost matrix, discount rate and horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketParams {
    sigma: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    cost: DMatrix<f64>,
    discount_rate: f64,
    horizon: f64,
}

fn spd_check(sigma: &DMatrix<f64>) -> Result<(f64, f64)> {
    let asymmetry = (sigma - sigma.transpose()).amax();
    let sym = (sigma + sigma.transpose()) * 0.5;
    let min_eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();
    if asymmetry > SYMMETRY_TOL * sigma.amax().max(1.0) || min_eigenvalue.is_nan() || min_eigenvalue <= 0.0 {
        return Err(Error::NonSpdCovariance {
            min_eigenvalue,
            asymmetry,
        });
    }
    Ok((min_eigenvalue, asymmetry))
}

fn diagonal_positive_check(cost: &DMatrix<f64>) -> Result<()> {
    let d = cost.nrows();
    for i in 0..d {
        for j in 0..d {
            let v = cost[(i, j)];
            let ok = if i == j { v.is_finite() && v > 0.0 } else { v == 0.0 };
            if !ok {
                return Err(Error::NonDiagonalCost);
            }
        }
    }
    Ok(())
}

impl MarketParams {
    pub fn new(sigma: DMatrix<f64>, cost: DMatrix<f64>, discount_rate: f64, horizon: f64) -> Result<Self> {
        let d = sigma.nrows();
        if d == 0 || sigma.ncols() != d {
            return Err(Error::BadDimension("covariance must be a non-empty square matrix".into()));
        }
        if cost.nrows() != d || cost.ncols() != d {
            return Err(Error::BadDimension(format!("cost matrix must be {d}x{d}")));
        }
        if sigma.iter().any(|x| !x.is_finite()) {
            return Err(Error::BadParameter("covariance is not finite".into()));
        }
        spd_check(&sigma)?;
        diagonal_positive_check(&cost)?;
        if !(discount_rate.is_finite() && discount_rate >= 0.0) {
            return Err(Error::BadParameter("discount rate must be non-negative".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::BadParameter("horizon must be positive".into()));
        }
        let sigma_inv = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("covariance Cholesky failed".into()))?
            .inverse();
        Ok(Self {
            sigma,
            sigma_inv,
            cost,
            discount_rate,
            horizon,
        })
    }

    /// Scalar market with `d = 1`.
    pub fn scalar(sigma: f64, cost: f64, discount_rate: f64, horizon: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, sigma),
            DMatrix::from_element(1, 1, cost),
            discount_rate,
            horizon,
        )
    }

    pub fn num_assets(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    pub fn cost(&self) -> &DMatrix<f64> {
        &self.cost
    }

    pub fn cost_diagonal(&self) -> DVector<f64> {
        self.cost.diagonal()
    }

    pub fn discount_rate(&self) -> f64 {
        self.discount_rate
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Same market with the cost matrix multiplied by `eps`.
    pub fn with_cost_scale(&self, eps: f64) -> Result<Self> {
        Self::new(self.sigma.clone(), &self.cost * eps, self.discount_rate, self.horizon)
    }

    pub fn with_covariance_scale(&self, c: f64) -> Result<Self> {
        Self::new(&self.sigma * c, self.cost.clone(), self.discount_rate, self.horizon)
    }
}

/// Risk tolerances and exposure processes of the `N` investors.
#[derive(Clone, Debug, PartialEq)]
pub struct InvestorSet {
    tolerances: Vec<f64>,
    exposures: Vec<ProcessSpec>,
}

impl InvestorSet {
    pub fn new(tolerances: Vec<f64>, exposures: Vec<ProcessSpec>) -> Result<Self> {
        if tolerances.len() < 2 {
            return Err(Error::BadParameter("at least two investors are required".into()));
        }
        if tolerances.len() != exposures.len() {
            return Err(Error::BadDimension(format!(
                "{} tolerances but {} exposures",
                tolerances.len(),
                exposures.len()
            )));
        }
        if tolerances.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::BadParameter("risk tolerances must be positive".into()));
        }
        Ok(Self {
            tolerances,
            exposures,
        })
    }

    pub fn len(&self) -> usize {
        self.tolerances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tolerances.is_empty()
    }

    pub fn tolerances(&self) -> &[f64] {
        &self.tolerances
    }

    pub fn tolerance(&self, m: usize) -> f64 {
        self.tolerances[m]
    }

    pub fn exposures(&self) -> &[ProcessSpec] {
        &self.exposures
    }

    /// Aggregate tolerance `delta = sum delta_m`.
    pub fn total(&self) -> f64 {
        self.tolerances.iter().sum()
    }

    /// `delta_{-m} = delta - delta_m`.
    pub fn total_without(&self, m: usize) -> f64 {
        self.tolerances
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != m)
            .map(|(_, d)| d)
            .sum()
    }

    /// Relative tolerance `lambda_m = delta_m / delta`.
    pub fn relative(&self, m: usize) -> f64 {
        self.tolerances[m] / self.total()
    }

    pub fn relatives(&self) -> Vec<f64> {
        let total = self.total();
        self.tolerances.iter().map(|d| d / total).collect()
    }

    /// `k_m = 2 / delta_{-m} + 1 / delta_m`, the curvature of the best-response objective.
    pub fn curvature(&self, m: usize) -> f64 {
        2.0 / self.total_without(m) + 1.0 / self.tolerances[m]
    }

    /// Common tolerance when all investors share one, else `None`.
    pub fn common_tolerance(&self) -> Option<f64> {
        let first = self.tolerances[0];
        self.tolerances
            .iter()
            .all(|d| (d - first).abs() <= EQUAL_TOLERANCE_RTOL * first)
            .then_some(first)
    }

    pub fn check_index(&self, n: usize) -> Result<()> {
        if n >= self.len() {
            return Err(Error::BadIndex {
                index: n,
                count: self.len(),
            });
        }
        Ok(())
    }

    pub fn with_tolerance(&self, m: usize, delta: f64) -> Result<Self> {
        let mut tolerances = self.tolerances.clone();
        tolerances[m] = delta;
        Self::new(tolerances, self.exposures.clone())
    }
}

/// Aggregate tolerance, relative tolerances and aggregate exposure.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub tolerance: f64,
    pub relatives: Vec<f64>,
    pub exposure: ProcessSpec,
}

pub fn aggregate(investors: &InvestorSet) -> Aggregate {
    Aggregate {
        tolerance: investors.total(),
        relatives: investors.relatives(),
        exposure: ProcessSpec::Sum {
            parts: investors.exposures.clone(),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FrictionlessCompetitive,
    FrictionlessNash,
    FrictionalBestResponse,
    FrictionalNash,
    FrictionalNashTwoInvestor,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::FrictionlessCompetitive,
        Regime::FrictionlessNash,
        Regime::FrictionalBestResponse,
        Regime::FrictionalNash,
        Regime::FrictionalNashTwoInvestor,
    ];

    pub fn is_frictional(self) -> bool {
        !matches!(self, Regime::FrictionlessCompetitive | Regime::FrictionlessNash)
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::FrictionlessCompetitive => "frictionless_competitive",
            Regime::FrictionlessNash => "frictionless_nash",
            Regime::FrictionalBestResponse => "frictional_best_response",
            Regime::FrictionalNash => "frictional_nash",
            Regime::FrictionalNashTwoInvestor => "frictional_nash_two_investor",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name)
    }
}

/// Returns and demands of one regime on one realized scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumResult {
    pub regime: Regime,
    pub returns: PathGrid,
    pub demands: Vec<PathGrid>,
    /// Trading rates; present only in frictional regimes.
    pub rates: Option<Vec<PathGrid>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub num_assets: usize,
    pub num_investors: usize,
    pub min_covariance_eigenvalue: f64,
    pub covariance_asymmetry: f64,
    pub frictional_checked: bool,
    pub terminal_noise_rate: f64,
    pub initial_noise_level: f64,
}

/// Checks dimensions, covariance, cost matrix and, when `frictional`, that the
/// noise is admissible (`psi(0) = 0`, `psi_dot(T) = 0`).
pub fn validate_market(
    market: &MarketParams,
    investors: &InvestorSet,
    noise: &NoiseSpec,
    frictional: bool,
) -> Result<ValidationReport> {
    let d = market.num_assets();
    let (min_eigenvalue, asymmetry) = spd_check(market.sigma())?;
    diagonal_positive_check(market.cost())?;
    for (m, spec) in investors.exposures().iter().enumerate() {
        spec.validate(d)
            .map_err(|e| match e {
                Error::BadDimension(msg) => Error::BadDimension(format!("investor {m}: {msg}")),
                other => other,
            })?;
    }
    if noise.dim() != d {
        return Err(Error::BadDimension(format!(
            "noise has dimension {}, expected {d}",
            noise.dim()
        )));
    }
    if (noise.horizon() - market.horizon()).abs() > 1e-12 * market.horizon() {
        return Err(Error::BadParameter("noise horizon differs from market horizon".into()));
    }
    let terminal_noise_rate = noise.rate(market.horizon()).amax();
    let initial_noise_level = noise.level(0.0).amax();
    if frictional && (terminal_noise_rate > TERMINAL_RATE_TOL || initial_noise_level > TERMINAL_RATE_TOL) {
        return Err(Error::InadmissibleNoise {
            terminal_rate: terminal_noise_rate,
        });
    }
    Ok(ValidationReport {
        num_assets: d,
        num_investors: investors.len(),
        min_covariance_eigenvalue: min_eigenvalue,
        covariance_asymmetry: asymmetry,
        frictional_checked: frictional,
        terminal_noise_rate,
        initial_noise_level,
    })
}

/// A validated market with every exposure realized on a grid from one shared
/// Brownian driver.
#[derive(Clone, Debug)]
pub struct Scenario {
    market: MarketParams,
    investors: InvestorSet,
    noise: NoiseSpec,
    grid: TimeGrid,
    seed: Option<u64>,
    exposures: Vec<RealizedProcess>,
}

impl Scenario {
    pub fn new(
        market: MarketParams,
        investors: InvestorSet,
        noise: NoiseSpec,
        steps: usize,
        seed: Option<u64>,
    ) -> Result<Self> {
        validate_market(&market, &investors, &noise, false)?;
        let grid = TimeGrid::new(steps, market.horizon())?;
        let d = market.num_assets();
        let stochastic = investors.exposures().iter().any(ProcessSpec::is_stochastic);
        let driver = if stochastic {
            Some(BrownianDriver::sample(d, grid, seed.ok_or(Error::BadSeed)?))
        } else {
            None
        };
        let exposures = investors
            .exposures()
            .iter()
            .map(|spec| match &driver {
                Some(driver) => realize_with_driver(spec, d, grid, driver),
                None => realize(spec, d, grid, None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            market,
            investors,
            noise,
            grid,
            seed,
            exposures,
        })
    }

    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    pub fn investors(&self) -> &InvestorSet {
        &self.investors
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn num_assets(&self) -> usize {
        self.market.num_assets()
    }

    pub fn num_investors(&self) -> usize {
        self.investors.len()
    }

    pub fn is_deterministic(&self) -> bool {
        !self.investors.exposures().iter().any(ProcessSpec::is_stochastic)
    }

    pub fn exposure(&self, m: usize) -> &RealizedProcess {
        &self.exposures[m]
    }

    pub fn exposure_path(&self, m: usize) -> &PathGrid {
        &self.exposures[m].path
    }

    pub fn aggregate_exposure(&self) -> PathGrid {
        PathGrid::sum(self.exposures.iter().map(|e| &e.path)).expect("aligned exposures")
    }

    pub fn noise_level(&self) -> PathGrid {
        self.noise.level_path(self.grid)
    }

    pub fn noise_rate(&self) -> PathGrid {
        self.noise.rate_path(self.grid)
    }

    /// `a - r psi_dot` at every node.
    pub fn friction_drive(&self) -> PathGrid {
        let r = self.market.discount_rate();
        PathGrid::from_fn(self.grid, |_, t| self.noise.friction_drive(t, r))
    }

    /// Checks the noise admissibility required by frictional regimes.
    pub fn require_admissible_noise(&self) -> Result<()> {
        validate_market(&self.market, &self.investors, &self.noise, true).map(|_| ())
    }

    pub fn with_market(&self, market: MarketParams) -> Result<Self> {
        Self::new(market, self.investors.clone(), self.noise.clone(), self.grid.steps(), self.seed)
    }

    pub fn with_investors(&self, investors: InvestorSet) -> Result<Self> {
        Self::new(self.market.clone(), investors, self.noise.clone(), self.grid.steps(), self.seed)
    }

    pub fn with_noise(&self, noise: NoiseSpec) -> Result<Self> {
        Self::new(self.market.clone(), self.investors.clone(), noise, self.grid.steps(), self.seed)
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::new(self.market.clone(), self.investors.clone(), self.noise.clone(), steps, self.seed)
    }
}
