//! Independent brute-force solvers used to cross-check the closed forms.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::affine::{Affine, Inputs};
use crate::error::{Error, Result};
use crate::kernel::FrictionKernel;
use crate::model::{EquilibriumResult, InvestorSet, MarketParams, Scenario};
use crate::paths::{NoiseSpec, PathGrid, ProcessSpec};
use crate::timefn::TimeFn;

/// `argmax -k/2 phi' Sigma phi + phi' Sigma ((zeta_{-n} - psi) / delta_{-n} - zeta_n / delta_n)`
/// node by node.
pub fn solve_frictionless_best_response_pointwise(scenario: &Scenario, n: usize) -> Result<PathGrid> {
    let investors = scenario.investors();
    investors.check_index(n)?;
    let sigma = scenario.market().sigma();
    let k_n = investors.curvature(n);
    let chol = (sigma * k_n)
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("curvature matrix is not positive definite".into()))?;
    let psi = scenario.noise_level();
    let dm = investors.total_without(n);
    let dn = investors.tolerance(n);
    let values = (0..scenario.grid().len())
        .map(|k| {
            let mut others = -psi.at(k);
            for m in (0..investors.len()).filter(|&m| m != n) {
                others += scenario.exposure_path(m).at(k);
            }
            let linear = sigma * (others / dm - scenario.exposure_path(n).at(k) / dn);
            chol.solve(&linear)
        })
        .collect();
    PathGrid::new(scenario.grid(), values)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPoint {
    pub returns: PathGrid,
    /// Revealed exposures `delta_m Sigma^{-1} nu - phi_m` at the fixed point.
    pub revealed: Vec<PathGrid>,
    pub iterations: usize,
    /// Last ratio of successive sup-norm changes.
    pub contraction: f64,
}

/// Best-response iteration on revealed exposures: each investor best-responds
/// to the others treated as price takers with their current revealed exposures,
/// `z_m <- lambda_m^2 / (1 - lambda_m^2) (sum_{i != m} z_i - psi) + zeta_m / (1 + lambda_m)`,
/// starting from the zero profile.
///
/// `sequential` updates investors in place (Gauss-Seidel) instead of all at once.
pub fn nash_fixed_point(scenario: &Scenario, max_iters: usize, tol: f64, sequential: bool) -> Result<FixedPoint> {
    let investors = scenario.investors();
    let n = investors.len();
    let lams = investors.relatives();
    let psi = scenario.noise_level();
    let grid = scenario.grid();
    let d = scenario.num_assets();
    let mut z = vec![PathGrid::zeros(grid, d); n];
    let mut last_change = f64::NAN;
    let mut contraction = f64::NAN;
    for iteration in 1..=max_iters {
        let previous = z.clone();
        let mut change: f64 = 0.0;
        for m in 0..n {
            let source = if sequential { &z } else { &previous };
            let mut others = psi.scale(-1.0);
            for (i, zi) in source.iter().enumerate() {
                if i != m {
                    others = others.add(zi)?;
                }
            }
            let lam = lams[m];
            let updated = others
                .scale(lam * lam / (1.0 - lam * lam))
                .add(&scenario.exposure_path(m).scale(1.0 / (1.0 + lam)))?;
            change = change.max(updated.sup_distance(&previous[m])?);
            z[m] = updated;
        }
        if iteration > 1 && last_change > 0.0 {
            contraction = change / last_change;
        }
        last_change = change;
        if change < tol {
            let total = PathGrid::sum(z.iter())?.sub(&psi)?;
            let returns = total.transform(&(scenario.market().sigma() / investors.total()));
            return Ok(FixedPoint {
                returns,
                revealed: z,
                iterations: iteration,
                contraction,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        contraction,
    })
}

/// The Nash revealed-exposure system assembled as one `(N d) x (N d)` linear
/// system per node; returns `nu = Sigma (sum_m z_m - psi) / delta`.
pub fn nash_linear_solve(scenario: &Scenario) -> Result<PathGrid> {
    let investors = scenario.investors();
    let n = investors.len();
    let d = scenario.num_assets();
    let lams = investors.relatives();
    let mut a = DMatrix::zeros(n, n);
    for m in 0..n {
        for i in 0..n {
            a[(m, i)] = if i == m {
                1.0 - lams[m]
            } else {
                -lams[m] * lams[m] / (1.0 + lams[m])
            };
        }
    }
    let lu = a.kronecker(&DMatrix::<f64>::identity(d, d)).lu();
    if !lu.is_invertible() {
        return Err(Error::SingularSystem("Nash system matrix is singular".into()));
    }
    let psi = scenario.noise_level();
    let sigma = scenario.market().sigma() / investors.total();
    let values = (0..scenario.grid().len())
        .map(|k| {
            let mut rhs = DVector::zeros(n * d);
            for (m, &l) in lams.iter().enumerate() {
                let block = psi.at(k) * (-l * l / (1.0 + l)) + scenario.exposure_path(m).at(k) * ((1.0 - l) / (1.0 + l));
                rhs.rows_mut(m * d, d).copy_from(&block);
            }
            let z = lu.solve(&rhs).expect("invertible");
            let mut total = -psi.at(k);
            for m in 0..n {
                total += z.rows(m * d, d);
            }
            &sigma * total
        })
        .collect();
    PathGrid::new(scenario.grid(), values)
}

/// The discretized frictional best-response problem in the node values
/// `x_k = phi(t_k)`, `k = 1..=K` (`x_0 = 0`):
/// `min sum_k w_k e^{-r t_k} dt (x_k' Q x_k / 2 - x_k' l_k) + sum_j e^{-r t_{j+1/2}} dx_j' R dx_j / dt`.
/// Choosing node values rather than rates as unknowns is a change of variables
/// that keeps the system block tridiagonal.
#[derive(Clone, Debug)]
pub struct DiscretizedProblem {
    pub steps: usize,
    pub dt: f64,
    /// Diagonal blocks, one per unknown node.
    pub diagonal: Vec<DMatrix<f64>>,
    /// Coupling between nodes `k` and `k + 1`.
    pub off_diagonal: Vec<DMatrix<f64>>,
    pub linear: Vec<DVector<f64>>,
    pub description: String,
}

impl DiscretizedProblem {
    pub fn best_response(scenario: &Scenario, n: usize) -> Result<Self> {
        if !scenario.is_deterministic() {
            return Err(Error::UnsupportedKind);
        }
        let investors = scenario.investors();
        investors.check_index(n)?;
        if investors.common_tolerance().is_none() && investors.len() > 2 {
            return Err(Error::UnequalToleranceUnsupported);
        }
        let market = scenario.market();
        let big_n = investors.len() as f64;
        let sigma = market.sigma();
        let q = sigma * investors.curvature(n);
        let rr = market.cost() * ((big_n + 1.0) / (big_n - 1.0));
        let dn = investors.tolerance(n);
        let dm = investors.total_without(n);
        let psi = scenario.noise_level();
        let drive = scenario.friction_drive();
        let grid = scenario.grid();
        let steps = grid.steps();
        let dt = grid.dt();
        let r = market.discount_rate();
        let disc = |t: f64| (-r * t).exp();
        let mut diagonal = Vec::with_capacity(steps);
        let mut off_diagonal = Vec::with_capacity(steps.saturating_sub(1));
        let mut linear = Vec::with_capacity(steps);
        for k in 1..=steps {
            let t = grid.node(k);
            let weight = if k == steps { 0.5 } else { 1.0 } * disc(t) * dt;
            let left = disc(t - 0.5 * dt);
            let right = if k == steps { 0.0 } else { disc(t + 0.5 * dt) };
            diagonal.push(&q * weight + &rr * (2.0 * (left + right) / dt));
            if k < steps {
                off_diagonal.push(&rr * (-2.0 * right / dt));
            }
            let mut others = -psi.at(k);
            for m in (0..investors.len()).filter(|&m| m != n) {
                others += scenario.exposure_path(m).at(k);
            }
            let l = sigma * (others / dm - scenario.exposure_path(n).at(k) / dn)
                + market.cost() * drive.at(k) * (2.0 / (big_n - 1.0));
            linear.push(l * weight);
        }
        Ok(Self {
            steps,
            dt,
            diagonal,
            off_diagonal,
            linear,
            description: format!("frictional best response of investor {n}"),
        })
    }

    /// Block Thomas elimination with a Cholesky factor per pivot block.
    pub fn solve(&self) -> Result<Vec<DVector<f64>>> {
        let k = self.diagonal.len();
        let mut pivots = Vec::with_capacity(k);
        let mut carried = Vec::with_capacity(k);
        for j in 0..k {
            let (mut pivot, mut rhs) = (self.diagonal[j].clone(), self.linear[j].clone());
            if j > 0 {
                let (prev, prev_rhs): (&nalgebra::Cholesky<f64, nalgebra::Dyn>, &DVector<f64>) =
                    (&pivots[j - 1], &carried[j - 1]);
                let u = &self.off_diagonal[j - 1];
                pivot -= u.transpose() * prev.solve(u);
                rhs -= u.transpose() * prev.solve(prev_rhs);
            }
            let chol = pivot.cholesky().ok_or(Error::SingularKkt { block: j })?;
            pivots.push(chol);
            carried.push(rhs);
        }
        let mut x = vec![DVector::zeros(self.linear[0].len()); k];
        for j in (0..k).rev() {
            let mut rhs = carried[j].clone();
            if j + 1 < k {
                rhs -= &self.off_diagonal[j] * &x[j + 1];
            }
            x[j] = pivots[j].solve(&rhs);
        }
        Ok(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub demand: PathGrid,
    /// Central differences inside, one-sided differences at both ends.
    pub rate: PathGrid,
    /// Last one-sided difference quotient; tends to zero under refinement.
    pub terminal_rate: f64,
}

pub fn solve_frictional_qp(scenario: &Scenario, n: usize) -> Result<QpSolution> {
    let problem = DiscretizedProblem::best_response(scenario, n)?;
    let nodes = problem.solve()?;
    let grid = scenario.grid();
    let d = scenario.num_assets();
    let mut values = Vec::with_capacity(grid.len());
    values.push(DVector::zeros(d));
    values.extend(nodes);
    let dt = grid.dt();
    let steps = grid.steps();
    let rates = (0..=steps)
        .map(|k| match k {
            0 => (&values[1] - &values[0]) / dt,
            k if k == steps => (&values[k] - &values[k - 1]) / dt,
            k => (&values[k + 1] - &values[k - 1]) / (2.0 * dt),
        })
        .collect::<Vec<_>>();
    let terminal_rate = rates[steps].amax();
    Ok(QpSolution {
        demand: PathGrid::new(grid, values)?,
        rate: PathGrid::new(grid, rates)?,
        terminal_rate,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClearingReport {
    pub demand_violation: f64,
    pub rate_violation: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Maximum node-wise violation of `sum_m phi_m + psi = 0` and, when rates are
/// present, of `sum_m phi_dot_m + psi_dot = 0`.
pub fn verify_clearing(result: &EquilibriumResult, noise: &NoiseSpec, tol: f64) -> ClearingReport {
    let grid = result.returns.grid();
    let violation = |paths: &[PathGrid], reference: PathGrid| -> f64 {
        (0..grid.len())
            .map(|k| {
                let mut v = reference.at(k).clone();
                for p in paths {
                    v += p.at(k);
                }
                v.amax()
            })
            .fold(0.0, f64::max)
    };
    let demand_violation = violation(&result.demands, noise.level_path(grid));
    let rate_violation = result.rates.as_ref().map(|r| violation(r, noise.rate_path(grid)));
    let passed = demand_violation <= tol && rate_violation.is_none_or(|v| v <= tol);
    ClearingReport {
        demand_violation,
        rate_violation,
        tolerance: tol,
        passed,
    }
}

fn power_series(delta: &DMatrix<f64>, tau: f64, terms: usize, odd: bool) -> DMatrix<f64> {
    let d = delta.nrows();
    let mut power = DMatrix::identity(d, d);
    let mut sum = DMatrix::zeros(d, d);
    let mut coeff = if odd { tau } else { 1.0 };
    let mut order = if odd { 1 } else { 0 };
    for _ in 0..terms {
        sum += &power * coeff;
        power = &power * delta;
        coeff *= tau * tau / (((order + 1) * (order + 2)) as f64);
        order += 2;
    }
    sum
}

/// `cosh(sqrt(Delta) tau) = sum Delta^k tau^{2k} / (2k)!`.
pub fn series_cosh(delta: &DMatrix<f64>, tau: f64, terms: usize) -> DMatrix<f64> {
    power_series(delta, tau, terms, false)
}

/// `sqrt(Delta) sinh(sqrt(Delta) tau) = sum Delta^{k+1} tau^{2k+1} / (2k+1)!`.
pub fn series_root_sinh(delta: &DMatrix<f64>, tau: f64, terms: usize) -> DMatrix<f64> {
    delta * power_series(delta, tau, terms, true)
}

/// Largest deviation of `G(t)` and `dG/dt` from their power series at the given times.
pub fn spectral_series_gap(kernel: &FrictionKernel, times: &[f64], terms: usize) -> f64 {
    let delta = kernel.delta();
    times
        .iter()
        .map(|&t| {
            let tau = kernel.horizon() - t;
            let g = (kernel.g(t) - series_cosh(&delta, tau, terms)).amax();
            let gd = (kernel.g_dot(t) + series_root_sinh(&delta, tau, terms)).amax();
            g.max(gd)
        })
        .fold(0.0, f64::max)
}

/// Largest `|F(t) F(s) - F(s) F(t)|` over all pairs of the given times.
pub fn commutation_gap(kernel: &FrictionKernel, times: &[f64]) -> f64 {
    let fs: Vec<DMatrix<f64>> = times.iter().map(|&t| kernel.f(t)).collect();
    let mut gap: f64 = 0.0;
    for a in &fs {
        for b in &fs {
            gap = gap.max((a * b - b * a).amax());
        }
    }
    gap
}

/// `W(t)^{-1} int_t^T W(s) B exp(-(r/2)(s - t)) TP(s) ds` with `W = Delta G - (r/2) dG/dt`,
/// by the trapezoid rule on `fine_steps` cells for a deterministic target.
pub fn filtered_target_quadrature(
    kernel: &FrictionKernel,
    target: &Affine,
    scenario: &Scenario,
    t: f64,
    fine_steps: usize,
) -> Result<DVector<f64>> {
    if !scenario.is_deterministic() {
        return Err(Error::UnsupportedKind);
    }
    let horizon = kernel.horizon();
    let r = kernel.discount_rate();
    let h = (horizon - t) / fine_steps as f64;
    let mut acc = DVector::zeros(kernel.dim());
    for j in 0..=fine_steps {
        let s = t + j as f64 * h;
        let w = if j == 0 || j == fine_steps { 0.5 * h } else { h };
        let tp = target.apply(&Inputs::mean_at(scenario, s));
        acc += kernel.weight(s) * (kernel.b() * tp) * ((-0.5 * r * (s - t)).exp() * w);
    }
    kernel
        .weight(t)
        .lu()
        .solve(&acc)
        .ok_or_else(|| Error::SingularSystem("kernel weight is singular".into()))
}

/// Shape of a randomized battery.
#[derive(Clone, Debug, PartialEq)]
pub struct BatteryOptions {
    pub count: usize,
    pub steps: usize,
    pub seed: u64,
    /// Largest ratio between two heterogeneous tolerances.
    pub tolerance_spread: f64,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        Self {
            count: 50,
            steps: 60,
            seed: 2024,
            tolerance_spread: 4.0,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random SPD matrix `A A' / d + 0.01 I` with `A` standard normal scaled by `vol`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, vol: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| vol * normal(rng));
    (&a * a.transpose()) / d as f64 + DMatrix::identity(d, d) * 0.01
}

fn random_exposure(rng: &mut ChaCha8Rng, d: usize) -> ProcessSpec {
    let vec = |rng: &mut ChaCha8Rng| (0..d).map(|_| normal(rng)).collect::<Vec<_>>();
    match rng.random_range(0..3) {
        0 => ProcessSpec::Constant { value: vec(rng) },
        1 => ProcessSpec::Deterministic {
            components: (0..d)
                .map(|_| {
                    TimeFn::poly(vec![normal(rng), normal(rng), 0.5 * normal(rng)])
                        .plus(TimeFn::sine(0.3 * normal(rng), rng.random_range(0.5..4.0), normal(rng)))
                })
                .collect(),
        },
        _ => ProcessSpec::Ou {
            initial: vec(rng),
            mean: vec(rng),
            reversion: rng.random_range(0.2..3.0),
            scale: if rng.random_bool(0.5) {
                vec![vec![0.0; d]; d]
            } else {
                (0..d).map(|_| (0..d).map(|_| 0.3 * normal(rng)).collect()).collect()
            },
        },
    }
}

/// Random scenarios: SPD covariance for `d` in 1..=3, `N` in 2..=5, equal or
/// heterogeneous tolerances, constant / deterministic / OU exposures and
/// tapered polynomial noise. Every third scenario has two investors with
/// unequal tolerances; the others alternate between equal and unequal.
pub fn random_battery(options: &BatteryOptions) -> Result<Vec<Scenario>> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    (0..options.count)
        .map(|i| {
            let d = rng.random_range(1..=3);
            let sigma = random_spd(&mut rng, d, 0.25);
            let cost = DMatrix::from_diagonal(&DVector::from_fn(d, |_, _| rng.random_range(0.01..0.5)));
            let r = rng.random_range(0.0..0.3);
            let horizon = rng.random_range(0.5..2.0);
            let market = MarketParams::new(sigma, cost, r, horizon)?;
            let n = if i % 3 == 0 { 2 } else { rng.random_range(2..=5) };
            let base = rng.random_range(0.5..2.0);
            let tolerances: Vec<f64> = if i % 3 == 1 {
                vec![base; n]
            } else {
                (0..n)
                    .map(|_| base * options.tolerance_spread.powf(rng.random_range(0.0..1.0)))
                    .collect()
            };
            let exposures = (0..n).map(|_| random_exposure(&mut rng, d)).collect();
            let investors = InvestorSet::new(tolerances, exposures)?;
            let noise = if rng.random_bool(0.15) {
                NoiseSpec::none(d, horizon)
            } else {
                let degree = rng.random_range(1..=3);
                NoiseSpec::tapered(
                    (0..d)
                        .map(|_| TimeFn::poly((0..degree).map(|_| normal(&mut rng)).collect()))
                        .collect(),
                    horizon,
                )
            };
            Scenario::new(market, investors, noise, options.steps, Some(options.seed.wrapping_add(i as u64)))
        })
        .collect()
}
