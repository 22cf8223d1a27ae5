//! Quadrature rules shared by the equilibrium solvers.

use std::sync::OnceLock;

/// Number of Gauss-Legendre points used per grid cell.
pub const CELL_POINTS: usize = 8;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton iteration
/// on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one quadrature point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            deriv = dp;
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-16 {
                let (_, dp) = legendre(n, x);
                deriv = dp;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// The per-cell rule, cached.
pub fn cell_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(CELL_POINTS))
}

/// Maps the cached rule onto `[a, b]`, returning `(points, weights)`.
pub fn mapped_rule(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let (nodes, weights) = cell_rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(weights.iter())
        .map(move |(x, w)| (mid + half * x, half * w))
}

/// Trapezoid rule for uniformly spaced samples.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trend {
    Increasing,
    Decreasing,
    Constant,
    Mixed,
}

/// Direction of a sequence, with strict monotonicity required for
/// `Increasing` and `Decreasing`.
pub fn trend(ys: &[f64]) -> Trend {
    let steps: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    if steps.iter().all(|&s| s == 0.0) {
        Trend::Constant
    } else if steps.iter().all(|&s| s > 0.0) {
        Trend::Increasing
    } else if steps.iter().all(|&s| s < 0.0) {
        Trend::Decreasing
    } else {
        Trend::Mixed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval_length() {
        for n in [1, 2, 5, 8, 12] {
            let (_, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let total: f64 = mapped_rule(0.0, 2.0).map(|(x, w)| w * x.powi(15)).sum();
        assert!((total - 2f64.powi(16) / 16.0).abs() < 1e-9);
    }

    #[test]
    fn integrates_smooth_functions_to_machine_precision() {
        let total: f64 = mapped_rule(0.0, 0.5).map(|(x, w)| w * x.cos()).sum();
        assert!((total - 0.5f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_matches_hand_value() {
        assert_eq!(trapezoid(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(trapezoid(&[4.0], 0.5), 0.0);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 0.1, 0.01];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((log_log_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn trend_classification() {
        assert_eq!(trend(&[1.0, 2.0, 3.0]), Trend::Increasing);
        assert_eq!(trend(&[3.0, 2.0]), Trend::Decreasing);
        assert_eq!(trend(&[1.0, 1.0]), Trend::Constant);
        assert_eq!(trend(&[1.0, 2.0, 1.0]), Trend::Mixed);
    }
}
