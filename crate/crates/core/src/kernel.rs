//! Explicit solution of the linear tracking FBSDE
//!
//! ```text
//! d phi = phi_dot dt,                      phi(0) = 0
//! d phi_dot = dM + B (phi - xi) dt + r phi_dot dt,  phi_dot(T) = 0
//! ```
//!
//! for `B` similar to a symmetric positive definite matrix. Every matrix
//! function of the solution shares the eigenvectors of `B`, so the problem
//! splits into independent scalar modes with eigenvalue `beta > 0`. With
//! `rho = beta + r^2/4`, `s = sqrt(rho)` and `tau = T - t`, each mode uses
//!
//! ```text
//! h(t)   = rho cosh(s tau) + (r/2) s sinh(s tau)
//! F(t)   = beta s sinh(s tau) / h(t)
//! exp(-int_u^t F) = exp((r/2)(t - u)) h(t) / h(u)
//! ```
//!
//! and all integrals are evaluated with `h` rescaled by `exp(-s tau)`, which
//! keeps every exponential bounded by one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::affine::{Affine, Inputs};
use crate::error::{Error, Result};
use crate::model::{MarketParams, Scenario};
use crate::paths::PathGrid;
use crate::quadrature::mapped_rule;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Spectral data of `B = scale * Lambda^{-1} Sigma` and its matrix functions.
#[derive(Clone, Debug)]
pub struct FrictionKernel {
    b: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    vectors: DMatrix<f64>,
    inverse: DMatrix<f64>,
    discount_rate: f64,
    horizon: f64,
}

impl FrictionKernel {
    pub fn new(market: &MarketParams, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::BadParameter("kernel scale must be positive".into()));
        }
        let cost = market.cost_diagonal();
        let inv_sqrt = DMatrix::from_diagonal(&cost.map(|c| 1.0 / c.sqrt()));
        let sqrt = DMatrix::from_diagonal(&cost.map(f64::sqrt));
        let sym = &inv_sqrt * market.sigma() * &inv_sqrt;
        let sym = (&sym + sym.transpose()) * 0.5;
        let eig = SymmetricEigen::try_new(sym, EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or_else(|| Error::SpectralFailure("symmetric eigensolver did not converge".into()))?;
        let eigenvalues = eig.eigenvalues * scale;
        if eigenvalues.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::SpectralFailure(format!(
                "non-positive eigenvalue {:e}",
                eigenvalues.min()
            )));
        }
        let vectors = &inv_sqrt * &eig.eigenvectors;
        let inverse = eig.eigenvectors.transpose() * &sqrt;
        let b = market.cost().map(|c| if c == 0.0 { 0.0 } else { 1.0 / c }) * market.sigma() * scale;
        Ok(Self {
            b,
            eigenvalues,
            vectors,
            inverse,
            discount_rate: market.discount_rate(),
            horizon: market.horizon(),
        })
    }

    /// `B = Lambda^{-1} Sigma / (2 delta_bar)`.
    pub fn for_tolerance(market: &MarketParams, tolerance: f64) -> Result<Self> {
        Self::new(market, 1.0 / (2.0 * tolerance))
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues of `B`.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn inverse_vectors(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn discount_rate(&self) -> f64 {
        self.discount_rate
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `Delta = B + (r^2 / 4) I`.
    pub fn delta(&self) -> DMatrix<f64> {
        let d = self.dim();
        &self.b + DMatrix::identity(d, d) * (self.discount_rate.powi(2) / 4.0)
    }

    fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        self.eigenvalues
            .iter()
            .map(|&beta| Mode::new(beta, self.discount_rate, self.horizon))
    }

    fn spectral(&self, f: impl Fn(&Mode) -> f64) -> DMatrix<f64> {
        let diag = DVector::from_iterator(self.dim(), self.modes().map(|m| f(&m)));
        &self.vectors * DMatrix::from_diagonal(&diag) * &self.inverse
    }

    /// `G(t) = cosh(sqrt(Delta) (T - t))`.
    pub fn g(&self, t: f64) -> DMatrix<f64> {
        let tau = self.horizon - t;
        self.spectral(|m| (m.sigma * tau).cosh())
    }

    /// `dG/dt = -sqrt(Delta) sinh(sqrt(Delta) (T - t))`.
    pub fn g_dot(&self, t: f64) -> DMatrix<f64> {
        let tau = self.horizon - t;
        self.spectral(|m| -m.sigma * (m.sigma * tau).sinh())
    }

    /// `Delta G(t) - (r/2) dG/dt`.
    pub fn weight(&self, t: f64) -> DMatrix<f64> {
        let tau = self.horizon - t;
        self.spectral(|m| m.rho * (m.sigma * tau).cosh() + 0.5 * m.r * m.sigma * (m.sigma * tau).sinh())
    }

    /// `F(t) = -(Delta G - (r/2) dG/dt)^{-1} B dG/dt`.
    pub fn f(&self, t: f64) -> DMatrix<f64> {
        self.spectral(|m| m.f(t))
    }
}

/// One scalar mode of the FBSDE.
#[derive(Clone, Copy, Debug)]
struct Mode {
    beta: f64,
    rho: f64,
    sigma: f64,
    /// `sigma + r/2`
    up: f64,
    /// `sigma - r/2`, positive because `beta > 0`
    down: f64,
    r: f64,
    horizon: f64,
}

// (1 - exp(-x tau)) / x, continuous at x = 0
fn one_minus_exp_over(x: f64, tau: f64) -> f64 {
    if (x * tau).abs() < 1e-10 {
        tau * (1.0 - 0.5 * x * tau)
    } else {
        -(-x * tau).exp_m1() / x
    }
}

impl Mode {
    fn new(beta: f64, r: f64, horizon: f64) -> Self {
        let rho = beta + 0.25 * r * r;
        let sigma = rho.sqrt();
        Self {
            beta,
            rho,
            sigma,
            up: sigma + 0.5 * r,
            down: beta / (sigma + 0.5 * r),
            r,
            horizon,
        }
    }

    /// `h(t) exp(-sigma (T - t))`.
    fn h(&self, t: f64) -> f64 {
        let e = (-2.0 * self.sigma * (self.horizon - t)).exp();
        0.5 * (self.rho * (1.0 + e) + 0.5 * self.r * self.sigma * (1.0 - e))
    }

    fn f(&self, t: f64) -> f64 {
        let e = (-2.0 * self.sigma * (self.horizon - t)).exp();
        0.5 * self.beta * self.sigma * (1.0 - e) / self.h(t)
    }

    /// `beta int_t^T h(u) exp(-(up + kappa)(u - t)) du`.
    fn factor_weight(&self, t: f64, kappa: f64) -> f64 {
        let tau = self.horizon - t;
        let c = self.up + kappa;
        let a = 0.25 * (2.0 * self.rho + self.r * self.sigma);
        let b = 0.25 * (2.0 * self.rho - self.r * self.sigma);
        // int_0^tau exp(-2 s (tau - v)) exp(-c v) dv
        let tail = (-c * tau).exp() * one_minus_exp_over(2.0 * self.sigma - c, tau);
        self.beta * (a * one_minus_exp_over(c, tau) + b * tail)
    }
}

/// Eigen-decomposition `C = P diag(c) P^{-1}` of an investor coupling matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    matrix: DMatrix<f64>,
    values: DVector<f64>,
    vectors: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl Coupling {
    /// Independent investors.
    pub fn identity(n: usize) -> Self {
        let id = DMatrix::identity(n, n);
        Self {
            matrix: id.clone(),
            values: DVector::from_element(n, 1.0),
            vectors: id.clone(),
            inverse: id,
        }
    }

    /// Ones on the diagonal and `1 / (N + 1)` elsewhere.
    pub fn equal_tolerance(n: usize) -> Result<Self> {
        let off = 1.0 / (n as f64 + 1.0);
        let c = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { off });
        Self::symmetric(c)
    }

    pub fn symmetric(matrix: DMatrix<f64>) -> Result<Self> {
        let eig = SymmetricEigen::try_new(matrix.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or_else(|| Error::SpectralFailure("coupling eigensolver did not converge".into()))?;
        if eig.eigenvalues.iter().any(|&e| e.is_nan() || e <= 0.0) {
            return Err(Error::SpectralFailure("coupling matrix is not positive definite".into()));
        }
        Ok(Self {
            matrix,
            inverse: eig.eigenvectors.transpose(),
            vectors: eig.eigenvectors,
            values: eig.eigenvalues,
        })
    }

    /// `[[delta + delta_1, delta_1], [delta_2, delta + delta_2]]`, whose
    /// eigenpairs are `2 delta` with `(delta_1, delta_2)` and `delta` with `(1, -1)`.
    pub fn two_investor(delta_1: f64, delta_2: f64) -> Self {
        let total = delta_1 + delta_2;
        let matrix = DMatrix::from_row_slice(2, 2, &[total + delta_1, delta_1, delta_2, total + delta_2]);
        let vectors = DMatrix::from_row_slice(2, 2, &[delta_1, 1.0, delta_2, -1.0]);
        let inverse = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, delta_2, -delta_1]) / total;
        Self {
            matrix,
            values: DVector::from_row_slice(&[2.0 * total, total]),
            vectors,
            inverse,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        let inv = DMatrix::from_diagonal(&self.values.map(|c| 1.0 / c));
        &self.vectors * inv * &self.inverse
    }
}

/// The block operator `C (x) B` in its eigenbasis.
#[derive(Clone, Debug)]
pub struct ModalSystem {
    betas: Vec<f64>,
    to_modes: DMatrix<f64>,
    from_modes: DMatrix<f64>,
    discount_rate: f64,
    horizon: f64,
}

impl ModalSystem {
    pub fn single(kernel: &FrictionKernel) -> Self {
        Self::coupled(&Coupling::identity(1), kernel)
    }

    pub fn coupled(coupling: &Coupling, kernel: &FrictionKernel) -> Self {
        let betas = coupling
            .values
            .iter()
            .flat_map(|&c| kernel.eigenvalues.iter().map(move |&b| c * b))
            .collect();
        Self {
            betas,
            to_modes: coupling.inverse.kronecker(&kernel.inverse),
            from_modes: coupling.vectors.kronecker(&kernel.vectors),
            discount_rate: kernel.discount_rate,
            horizon: kernel.horizon,
        }
    }

    pub fn dim(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// The block operator itself.
    pub fn operator(&self) -> DMatrix<f64> {
        let diag = DVector::from_row_slice(&self.betas);
        &self.from_modes * DMatrix::from_diagonal(&diag) * &self.to_modes
    }
}

/// Optimal demand, trading rate and filtered target on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingSolution {
    pub demand: PathGrid,
    pub rate: PathGrid,
    pub filtered_target: PathGrid,
}

/// Solves the tracking FBSDE for the target `xi`, pathwise on the realized scenario.
///
/// Deterministic contributions are integrated with nested Gauss-Legendre rules
/// and are exact to rounding for smooth inputs. Stochastic factors enter
/// through closed-form weights at the nodes; their forward integral uses the
/// trapezoid rule.
pub fn solve_tracking(system: &ModalSystem, target: &Affine, scenario: &Scenario) -> Result<TrackingSolution> {
    let dim = system.dim();
    if target.rows() != dim {
        return Err(Error::BadDimension(format!(
            "target has {} rows, system has dimension {dim}",
            target.rows()
        )));
    }
    if (system.horizon - scenario.grid().horizon()).abs() > 1e-12 * system.horizon {
        return Err(Error::GridMismatch);
    }
    let grid = scenario.grid();
    let steps = grid.steps();
    let dt = grid.dt();
    let modes: Vec<Mode> = system
        .betas
        .iter()
        .map(|&b| Mode::new(b, system.discount_rate, system.horizon))
        .collect();
    let target = target.left_mul(&system.to_modes);
    let mean = |u: f64| target.apply(&Inputs::mean_at(scenario, u));

    // Backward pass: deterministic part of J at nodes and at the cell rule points.
    let mut j_node = vec![DVector::zeros(dim); steps + 1];
    let mut j_inner: Vec<Vec<(f64, f64, DVector<f64>)>> = vec![Vec::new(); steps];
    for k in (0..steps).rev() {
        let (t0, t1) = (grid.node(k), grid.node(k + 1));
        let next = j_node[k + 1].clone();
        let accumulate = |s: f64| -> DVector<f64> {
            let mut j = DVector::from_fn(dim, |i, _| (-modes[i].up * (t1 - s)).exp() * next[i]);
            for (u, w) in mapped_rule(s, t1) {
                let xi = mean(u);
                for (i, m) in modes.iter().enumerate() {
                    j[i] += w * m.beta * m.h(u) * (-m.up * (u - s)).exp() * xi[i];
                }
            }
            j
        };
        j_node[k] = accumulate(t0);
        j_inner[k] = mapped_rule(t0, t1).map(|(s, w)| (s, w, accumulate(s))).collect();
    }

    // Stochastic factors: J gains L_kappa(t) y(t) per factor.
    let factors = target.factors(scenario);
    let j_factor: Vec<DVector<f64>> = (0..=steps)
        .map(|k| {
            let t = grid.node(k);
            let mut j = DVector::zeros(dim);
            for f in &factors {
                let y = &f.loading * f.deviation.at(k);
                for (i, m) in modes.iter().enumerate() {
                    j[i] += m.factor_weight(t, f.decay) * y[i];
                }
            }
            j
        })
        .collect();

    // Forward pass for X = x / h.
    let mut x_scaled = vec![DVector::<f64>::zeros(dim); steps + 1];
    for k in 0..steps {
        let t1 = grid.node(k + 1);
        let mut next = DVector::zeros(dim);
        for (i, m) in modes.iter().enumerate() {
            let decay = (-m.down * dt).exp();
            let mut v = decay * x_scaled[k][i];
            for (s, w, j) in &j_inner[k] {
                let h = m.h(*s);
                v += w * (-m.down * (t1 - s)).exp() * j[i] / (h * h);
            }
            let h0 = m.h(grid.node(k));
            let h1 = m.h(t1);
            v += 0.5 * dt * (decay * j_factor[k][i] / (h0 * h0) + j_factor[k + 1][i] / (h1 * h1));
            next[i] = v;
        }
        x_scaled[k + 1] = next;
    }

    let mut demand = Vec::with_capacity(steps + 1);
    let mut rate = Vec::with_capacity(steps + 1);
    let mut filtered = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = grid.node(k);
        let mut x = DVector::zeros(dim);
        let mut xd = DVector::zeros(dim);
        let mut tp = DVector::zeros(dim);
        for (i, m) in modes.iter().enumerate() {
            let h = m.h(t);
            x[i] = h * x_scaled[k][i];
            tp[i] = (j_node[k][i] + j_factor[k][i]) / h;
            xd[i] = tp[i] - m.f(t) * x[i];
        }
        demand.push(&system.from_modes * x);
        rate.push(&system.from_modes * xd);
        filtered.push(&system.from_modes * tp);
    }
    Ok(TrackingSolution {
        demand: PathGrid::new(grid, demand)?,
        rate: PathGrid::new(grid, rate)?,
        filtered_target: PathGrid::new(grid, filtered)?,
    })
}

/// Central-difference residual `d phi_dot/dt - B (phi - target) - r phi_dot`,
/// second order at every node (one-sided stencils at the ends).
pub fn fbsde_residual(
    b: &DMatrix<f64>,
    discount_rate: f64,
    target: &PathGrid,
    demand: &PathGrid,
    rate: &PathGrid,
) -> Result<PathGrid> {
    target.check_aligned(demand)?;
    target.check_aligned(rate)?;
    let grid = rate.grid();
    let n = grid.steps();
    if n < 2 {
        return Err(Error::BadParameter("residual needs at least two steps".into()));
    }
    let dt = grid.dt();
    let v = rate.values();
    Ok(PathGrid::from_fn(grid, |k, _| {
        let deriv = if k == 0 {
            (-3.0 * &v[0] + 4.0 * &v[1] - &v[2]) / (2.0 * dt)
        } else if k == n {
            (3.0 * &v[n] - 4.0 * &v[n - 1] + &v[n - 2]) / (2.0 * dt)
        } else {
            (&v[k + 1] - &v[k - 1]) / (2.0 * dt)
        };
        deriv - b * (demand.at(k) - target.at(k)) - &v[k] * discount_rate
    }))
}
