//! Exposure and noise processes, their realizations on a time grid, and
//! their closed-form conditional means.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TimeGrid;
use crate::timefn::TimeFn;

/// Vector-valued samples of a process at every node of a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct PathGrid {
    grid: TimeGrid,
    values: Vec<DVector<f64>>,
}

impl PathGrid {
    pub fn new(grid: TimeGrid, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::BadDimension(format!(
                "{} samples for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::BadDimension("ragged path samples".into()));
        }
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::BadParameter("non-finite path sample".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl FnMut(usize, f64) -> DVector<f64>) -> Self {
        let mut f = f;
        let values = (0..grid.len()).map(|k| f(k, grid.node(k))).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self::from_fn(grid, |_, _| DVector::zeros(dim))
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, k: usize) -> &DVector<f64> {
        &self.values[k]
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn into_values(self) -> Vec<DVector<f64>> {
        self.values
    }

    /// Scalar component `i` at every node.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }

    pub fn map(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &PathGrid,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    ) -> Result<Self> {
        self.check_aligned(other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_aligned(&self, other: &PathGrid) -> Result<()> {
        if self.grid != other.grid || self.dim() != other.dim() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &PathGrid) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &PathGrid) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    /// Left-multiplies every sample by `m`.
    pub fn transform(&self, m: &DMatrix<f64>) -> Self {
        self.map(|v| m * v)
    }

    /// Largest absolute entry over all nodes and components.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &PathGrid) -> Result<f64> {
        Ok(self.sub(other)?.sup_norm())
    }

    /// Node-wise sum of several aligned paths.
    pub fn sum<'a>(paths: impl IntoIterator<Item = &'a PathGrid>) -> Result<PathGrid> {
        let mut iter = paths.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::BadDimension("empty sum".into()))?
            .clone();
        iter.try_fold(first, |acc, p| acc.add(p))
    }
}

/// Process classes with closed-form conditional expectations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    Constant {
        value: Vec<f64>,
    },
    /// One smooth function of time per asset.
    Deterministic {
        components: Vec<TimeFn>,
    },
    /// `dX = scale dW`.
    Martingale {
        initial: Vec<f64>,
        scale: Vec<Vec<f64>>,
    },
    /// `dX = reversion (mean - X) dt + scale dW`.
    Ou {
        initial: Vec<f64>,
        mean: Vec<f64>,
        reversion: f64,
        scale: Vec<Vec<f64>>,
    },
    Sum {
        parts: Vec<ProcessSpec>,
    },
}

/// A stochastic leaf of a [`ProcessSpec`]: `E[X(s) | F(t)] = mean + exp(-decay (s - t)) (X(t) - mean)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPath {
    pub decay: f64,
    /// `X(t_k) - mean` at every node.
    pub deviation: PathGrid,
}

/// A realized process: the total path plus the deviation path of every
/// stochastic leaf, which is what conditional means need.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizedProcess {
    pub path: PathGrid,
    pub factors: Vec<FactorPath>,
}

/// Standard normal draws shared by every stochastic process of a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianDriver {
    /// `shocks[k]` drives the step from node `k` to node `k + 1`.
    shocks: Vec<DVector<f64>>,
}

impl BrownianDriver {
    pub fn sample(dim: usize, grid: TimeGrid, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shocks = (0..grid.steps())
            .map(|_| DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        Self { shocks }
    }

    pub fn dim(&self) -> usize {
        self.shocks.first().map_or(0, |s| s.len())
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::BadDimension(format!("{what} must be {dim}x{dim}")));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn check_len(v: &[f64], dim: usize, what: &str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::BadDimension(format!(
            "{what} has length {}, expected {dim}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::BadParameter(format!("{what} is not finite")));
    }
    Ok(())
}

impl ProcessSpec {
    pub fn constant(value: &[f64]) -> Self {
        ProcessSpec::Constant {
            value: value.to_vec(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        ProcessSpec::Constant {
            value: vec![0.0; dim],
        }
    }

    /// Checks that every leaf has dimension `dim` and finite, bounded parameters.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ProcessSpec::Constant { value } => check_len(value, dim, "constant value"),
            ProcessSpec::Deterministic { components } => {
                if components.len() != dim {
                    return Err(Error::BadDimension(format!(
                        "deterministic process has {} components, expected {dim}",
                        components.len()
                    )));
                }
                Ok(())
            }
            ProcessSpec::Martingale { initial, scale } => {
                check_len(initial, dim, "martingale initial value")?;
                matrix_from_rows(scale, dim, "martingale scale").map(|_| ())
            }
            ProcessSpec::Ou {
                initial,
                mean,
                reversion,
                scale,
            } => {
                check_len(initial, dim, "OU initial value")?;
                check_len(mean, dim, "OU mean")?;
                if !(reversion.is_finite() && *reversion > 0.0) {
                    return Err(Error::BadParameter("OU reversion must be positive".into()));
                }
                matrix_from_rows(scale, dim, "OU scale").map(|_| ())
            }
            ProcessSpec::Sum { parts } => {
                if parts.is_empty() {
                    return Err(Error::BadParameter("empty sum process".into()));
                }
                parts.iter().try_for_each(|p| p.validate(dim))
            }
        }
    }

    pub fn is_stochastic(&self) -> bool {
        match self {
            ProcessSpec::Constant { .. } | ProcessSpec::Deterministic { .. } => false,
            ProcessSpec::Martingale { scale, .. } | ProcessSpec::Ou { scale, .. } => {
                scale.iter().flatten().any(|&c| c != 0.0)
            }
            ProcessSpec::Sum { parts } => parts.iter().any(ProcessSpec::is_stochastic),
        }
    }

    /// Deterministic part of every conditional mean: constants, deterministic
    /// functions and OU long-run means evaluated at `s`.
    pub fn mean_function(&self, s: f64, dim: usize) -> DVector<f64> {
        match self {
            ProcessSpec::Constant { value } => DVector::from_column_slice(value),
            ProcessSpec::Deterministic { components } => {
                DVector::from_iterator(dim, components.iter().map(|f| f.eval(s)))
            }
            ProcessSpec::Martingale { .. } => DVector::zeros(dim),
            ProcessSpec::Ou { mean, .. } => DVector::from_column_slice(mean),
            ProcessSpec::Sum { parts } => parts
                .iter()
                .fold(DVector::zeros(dim), |acc, p| acc + p.mean_function(s, dim)),
        }
    }

    fn realize_with(&self, grid: TimeGrid, driver: &BrownianDriver, dim: usize) -> Result<RealizedProcess> {
        let dt = grid.dt();
        match self {
            ProcessSpec::Constant { .. } | ProcessSpec::Deterministic { .. } => Ok(RealizedProcess {
                path: PathGrid::from_fn(grid, |_, t| self.mean_function(t, dim)),
                factors: Vec::new(),
            }),
            ProcessSpec::Martingale { initial, scale } => {
                let scale = matrix_from_rows(scale, dim, "martingale scale")?;
                let step = scale * dt.sqrt();
                let mut x = DVector::from_column_slice(initial);
                let mut values = Vec::with_capacity(grid.len());
                values.push(x.clone());
                for k in 0..grid.steps() {
                    if let Some(shock) = driver.shocks.get(k) {
                        x += &step * shock;
                    }
                    values.push(x.clone());
                }
                let path = PathGrid::new(grid, values)?;
                Ok(RealizedProcess {
                    factors: vec![FactorPath {
                        decay: 0.0,
                        deviation: path.clone(),
                    }],
                    path,
                })
            }
            ProcessSpec::Ou {
                initial,
                mean,
                reversion,
                scale,
            } => {
                let scale = matrix_from_rows(scale, dim, "OU scale")?;
                let mean = DVector::from_column_slice(mean);
                let decay = (-reversion * dt).exp();
                let sd = ((1.0 - decay * decay) / (2.0 * reversion)).sqrt();
                let step = scale * sd;
                let mut dev = DVector::from_column_slice(initial) - &mean;
                let mut devs = Vec::with_capacity(grid.len());
                devs.push(dev.clone());
                for k in 0..grid.steps() {
                    dev *= decay;
                    if let Some(shock) = driver.shocks.get(k) {
                        dev += &step * shock;
                    }
                    devs.push(dev.clone());
                }
                let deviation = PathGrid::new(grid, devs)?;
                let path = deviation.map(|d| d + &mean);
                Ok(RealizedProcess {
                    path,
                    factors: vec![FactorPath {
                        decay: *reversion,
                        deviation,
                    }],
                })
            }
            ProcessSpec::Sum { parts } => {
                let mut path = PathGrid::zeros(grid, dim);
                let mut factors = Vec::new();
                for part in parts {
                    let r = part.realize_with(grid, driver, dim)?;
                    path = path.add(&r.path)?;
                    factors.extend(r.factors);
                }
                Ok(RealizedProcess { path, factors })
            }
        }
    }
}

/// Realizes `spec` on `grid`. Stochastic kinds use exact Gaussian transitions
/// driven by draws from `seed`; deterministic kinds ignore it.
pub fn realize(spec: &ProcessSpec, dim: usize, grid: TimeGrid, seed: Option<u64>) -> Result<RealizedProcess> {
    spec.validate(dim)?;
    let driver = match (spec.is_stochastic(), seed) {
        (true, None) => return Err(Error::BadSeed),
        (true, Some(seed)) => BrownianDriver::sample(dim, grid, seed),
        (false, _) => BrownianDriver { shocks: Vec::new() },
    };
    realize_with_driver(spec, dim, grid, &driver)
}

/// Realizes `spec` against a shared driver (one per scenario).
pub fn realize_with_driver(
    spec: &ProcessSpec,
    dim: usize,
    grid: TimeGrid,
    driver: &BrownianDriver,
) -> Result<RealizedProcess> {
    spec.validate(dim)?;
    if spec.is_stochastic() && (driver.shocks.len() != grid.steps() || driver.dim() != dim) {
        return Err(Error::BadDimension("driver does not match grid or dimension".into()));
    }
    spec.realize_with(grid, driver, dim)
}

/// `E[X(s) | F(t_k)]` for a realized process, with `s >= t_k` any time in `[0, T]`.
pub fn conditional_mean(
    spec: &ProcessSpec,
    realized: &RealizedProcess,
    k: usize,
    s: f64,
) -> Result<DVector<f64>> {
    let grid = realized.path.grid();
    let t = grid.node(k);
    if s < t - 1e-14 {
        return Err(Error::TimeOrder { t, s });
    }
    let dim = realized.path.dim();
    let mut mean = spec.mean_function(s, dim);
    for factor in &realized.factors {
        mean += factor.deviation.at(k) * (-factor.decay * (s - t)).exp();
    }
    Ok(mean)
}

/// Exogenous noise-trader demand `psi` with rate `psi_dot` and rate drift
/// `a = d psi_dot / dt`, all deterministic.
///
/// A tapered noise has rate `(T - t) g_i(t)`, which vanishes at the horizon
/// by construction; a raw noise uses `g_i` as the rate directly.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    horizon: f64,
    tapered: bool,
    shapes: Vec<TimeFn>,
    shape_derivs: Vec<TimeFn>,
    first_integrals: Vec<TimeFn>,
    second_integrals: Vec<TimeFn>,
}

impl NoiseSpec {
    pub fn none(dim: usize, horizon: f64) -> Self {
        Self::build(vec![TimeFn::zero(); dim], horizon, true)
    }

    /// Rate `psi_dot_i(t) = (T - t) shape_i(t)`.
    pub fn tapered(shapes: Vec<TimeFn>, horizon: f64) -> Self {
        Self::build(shapes, horizon, true)
    }

    /// Rate `psi_dot_i(t) = rate_i(t)` without a terminal taper.
    pub fn raw_rate(rates: Vec<TimeFn>, horizon: f64) -> Self {
        Self::build(rates, horizon, false)
    }

    fn build(shapes: Vec<TimeFn>, horizon: f64, tapered: bool) -> Self {
        let shape_derivs = shapes.iter().map(TimeFn::derivative).collect();
        let first_integrals: Vec<TimeFn> = shapes.iter().map(TimeFn::antiderivative).collect();
        let second_integrals = first_integrals.iter().map(TimeFn::antiderivative).collect();
        Self {
            horizon,
            tapered,
            shapes,
            shape_derivs,
            first_integrals,
            second_integrals,
        }
    }

    pub fn dim(&self) -> usize {
        self.shapes.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_tapered(&self) -> bool {
        self.tapered
    }

    pub fn shapes(&self) -> &[TimeFn] {
        &self.shapes
    }

    pub fn is_zero(&self) -> bool {
        self.shapes.iter().all(TimeFn::is_identically_zero)
    }

    /// Noise demand `psi(t)`, with `psi(0) = 0`.
    pub fn level(&self, t: f64) -> DVector<f64> {
        let big_t = self.horizon;
        DVector::from_fn(self.dim(), |i, _| {
            let g1 = &self.first_integrals[i];
            if self.tapered {
                // integral of (T - s) g(s) = (T - s) G1(s) + G2(s)
                let g2 = &self.second_integrals[i];
                ((big_t - t) * g1.eval(t) + g2.eval(t)) - (big_t * g1.eval(0.0) + g2.eval(0.0))
            } else {
                g1.eval(t) - g1.eval(0.0)
            }
        })
    }

    /// Trading rate `psi_dot(t)`.
    pub fn rate(&self, t: f64) -> DVector<f64> {
        let taper = if self.tapered { self.horizon - t } else { 1.0 };
        DVector::from_fn(self.dim(), |i, _| taper * self.shapes[i].eval(t))
    }

    /// Rate drift `a(t) = d psi_dot / dt`.
    pub fn rate_drift(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            if self.tapered {
                -self.shapes[i].eval(t) + (self.horizon - t) * self.shape_derivs[i].eval(t)
            } else {
                self.shape_derivs[i].eval(t)
            }
        })
    }

    /// `a - r psi_dot`, the combination every frictional premium consumes.
    pub fn friction_drive(&self, t: f64, discount_rate: f64) -> DVector<f64> {
        self.rate_drift(t) - self.rate(t) * discount_rate
    }

    pub fn level_path(&self, grid: TimeGrid) -> PathGrid {
        PathGrid::from_fn(grid, |_, t| self.level(t))
    }

    pub fn rate_path(&self, grid: TimeGrid) -> PathGrid {
        PathGrid::from_fn(grid, |_, t| self.rate(t))
    }

    pub fn rate_drift_path(&self, grid: TimeGrid) -> PathGrid {
        PathGrid::from_fn(grid, |_, t| self.rate_drift(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::trapezoid;

    fn grid(k: usize, t: f64) -> TimeGrid {
        TimeGrid::new(k, t).unwrap()
    }

    #[test]
    fn constant_realizes_flat() {
        let r = realize(&ProcessSpec::constant(&[3.0]), 1, grid(10, 1.0), None).unwrap();
        assert!(r.path.values().iter().all(|v| v[0] == 3.0));
        assert!(r.factors.is_empty());
    }

    #[test]
    fn zero_diffusion_martingale_is_flat() {
        let spec = ProcessSpec::Martingale {
            initial: vec![1.5, -2.0],
            scale: vec![vec![0.0; 2]; 2],
        };
        let r = realize(&spec, 2, grid(20, 1.0), Some(3)).unwrap();
        for v in r.path.values() {
            assert_eq!(v.as_slice(), &[1.5, -2.0]);
        }
    }

    #[test]
    fn zero_diffusion_ou_decays_exponentially() {
        let spec = ProcessSpec::Ou {
            initial: vec![1.0],
            mean: vec![0.0],
            reversion: 2.0,
            scale: vec![vec![0.0]],
        };
        let r = realize(&spec, 1, grid(50, 1.0), Some(1)).unwrap();
        // x' = -2x, x(0) = 1 => x(1) = e^-2
        assert!((r.path.at(50)[0] - (-2.0f64).exp()).abs() < 1e-14);
        assert!((r.path.at(50)[0] - 0.1353352832366127).abs() < 1e-15);
    }

    #[test]
    fn stochastic_kind_without_seed_is_rejected() {
        let spec = ProcessSpec::Martingale {
            initial: vec![0.0],
            scale: vec![vec![1.0]],
        };
        assert_eq!(realize(&spec, 1, grid(5, 1.0), None), Err(Error::BadSeed));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = ProcessSpec::constant(&[1.0, 2.0]);
        assert!(matches!(
            realize(&spec, 3, grid(5, 1.0), None),
            Err(Error::BadDimension(_))
        ));
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let spec = ProcessSpec::Ou {
            initial: vec![0.5, 0.1],
            mean: vec![0.0, 1.0],
            reversion: 1.3,
            scale: vec![vec![0.3, 0.0], vec![0.1, 0.2]],
        };
        let a = realize(&spec, 2, grid(64, 2.0), Some(42)).unwrap();
        let b = realize(&spec, 2, grid(64, 2.0), Some(42)).unwrap();
        let c = realize(&spec, 2, grid(64, 2.0), Some(43)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn deterministic_conditional_mean_is_plug_in() {
        let spec = ProcessSpec::Deterministic {
            components: vec![TimeFn::poly(vec![1.0, 2.0])],
        };
        let r = realize(&spec, 1, grid(10, 1.0), None).unwrap();
        let m = conditional_mean(&spec, &r, 3, 0.75).unwrap();
        assert!((m[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn martingale_conditional_mean_is_current_value() {
        let spec = ProcessSpec::Martingale {
            initial: vec![2.5],
            scale: vec![vec![0.0]],
        };
        let r = realize(&spec, 1, grid(10, 1.0), Some(9)).unwrap();
        for s in [0.0, 0.4, 1.0] {
            assert_eq!(conditional_mean(&spec, &r, 0, s).unwrap()[0], 2.5);
        }
    }

    #[test]
    fn ou_conditional_mean_halves_deviation_after_ln2() {
        let spec = ProcessSpec::Ou {
            initial: vec![3.0],
            mean: vec![1.0],
            reversion: 1.0,
            scale: vec![vec![0.0]],
        };
        let r = realize(&spec, 1, grid(10, 2.0), Some(0)).unwrap();
        let m = conditional_mean(&spec, &r, 0, std::f64::consts::LN_2).unwrap();
        assert!((m[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ou_conditional_mean_agrees_with_monte_carlo() {
        // Exact-transition samples of X(ln 2) from X(0) = 3.
        let (theta, kappa, vol, x0) = (1.0, 1.0, 0.8, 3.0);
        let horizon = std::f64::consts::LN_2;
        let decay = (-kappa * horizon).exp();
        let sd = vol * ((1.0 - decay * decay) / (2.0 * kappa)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let x = theta + decay * (x0 - theta) + sd * z;
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
        let spec = ProcessSpec::Ou {
            initial: vec![x0],
            mean: vec![theta],
            reversion: kappa,
            scale: vec![vec![vol]],
        };
        let r = realize(&spec, 1, TimeGrid::new(1, horizon).unwrap(), Some(5)).unwrap();
        let closed = conditional_mean(&spec, &r, 0, horizon).unwrap()[0];
        assert!((closed - 2.0).abs() < 1e-14);
        assert!((mean - closed).abs() < 3.0 * se, "mc {mean} vs {closed} (se {se})");
    }

    #[test]
    fn conditional_mean_rejects_past_targets() {
        let spec = ProcessSpec::constant(&[1.0]);
        let r = realize(&spec, 1, grid(10, 1.0), None).unwrap();
        assert!(matches!(
            conditional_mean(&spec, &r, 5, 0.2),
            Err(Error::TimeOrder { .. })
        ));
    }

    #[test]
    fn tower_property_for_stochastic_leaves() {
        // E[E[X(u)|F(s)]|F(t)] = E[X(u)|F(t)]: for OU the deviation at s has
        // conditional mean exp(-k(s-t)) dev(t).
        let kappa: f64 = 0.7;
        let (t, s, u) = (0.2, 0.9, 1.6);
        let dev_t = 1.3;
        let inner = (-kappa * (u - s)).exp();
        let outer = inner * (-kappa * (s - t)).exp() * dev_t;
        let direct = (-kappa * (u - t)).exp() * dev_t;
        assert!((outer - direct).abs() < 1e-12);
    }

    #[test]
    fn sum_process_tracks_all_factors() {
        let spec = ProcessSpec::Sum {
            parts: vec![
                ProcessSpec::constant(&[1.0]),
                ProcessSpec::Ou {
                    initial: vec![0.0],
                    mean: vec![2.0],
                    reversion: 1.0,
                    scale: vec![vec![0.5]],
                },
                ProcessSpec::Martingale {
                    initial: vec![0.3],
                    scale: vec![vec![0.2]],
                },
            ],
        };
        let g = grid(40, 1.0);
        let r = realize(&spec, 1, g, Some(8)).unwrap();
        assert_eq!(r.factors.len(), 2);
        for k in [0, 17, 40] {
            let recon = spec.mean_function(g.node(k), 1)
                + r.factors.iter().map(|f| f.deviation.at(k)).sum::<DVector<f64>>();
            assert!((recon[0] - r.path.at(k)[0]).abs() < 1e-14);
        }
    }

    fn smooth_noise() -> NoiseSpec {
        NoiseSpec::tapered(
            vec![TimeFn::poly(vec![0.4, -0.3, 0.2]).plus(TimeFn::sine(0.1, 3.0, 0.2))],
            1.5,
        )
    }

    #[test]
    fn tapered_noise_is_admissible() {
        let noise = smooth_noise();
        assert_eq!(noise.level(0.0)[0], 0.0);
        assert!(noise.rate(1.5)[0].abs() < 1e-15);
    }

    #[test]
    fn noise_level_matches_trapezoid_of_rate() {
        let noise = smooth_noise();
        let mut prev = f64::INFINITY;
        for k in [50, 100, 200] {
            let g = grid(k, 1.5);
            let rates = noise.rate_path(g).component(0);
            let trap = trapezoid(&rates, g.dt());
            let err = (trap - noise.level(1.5)[0]).abs();
            assert!(err < prev / 3.5, "trapezoid error should shrink like dt^2");
            prev = err;
        }
    }

    #[test]
    fn rate_drift_is_derivative_of_rate() {
        let noise = smooth_noise();
        let g = grid(200, 1.5);
        let dt = g.dt();
        let worst = (0..g.steps())
            .map(|k| {
                let fd = (noise.rate(g.node(k + 1))[0] - noise.rate(g.node(k))[0]) / dt;
                (fd - noise.rate_drift(g.node(k) + 0.5 * dt)[0]).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 10.0 * dt * dt, "{worst}");
    }

    #[test]
    fn raw_rate_keeps_its_terminal_value() {
        let noise = NoiseSpec::raw_rate(vec![TimeFn::constant(1.0)], 1.0);
        assert_eq!(noise.rate(1.0)[0], 1.0);
        assert!((noise.level(0.5)[0] - 0.5).abs() < 1e-15);
        assert_eq!(noise.rate_drift(0.3)[0], 0.0);
    }
}
