//! Gauss–Legendre quadrature with optional grading toward the left endpoint.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = x;
                p0 = 1.0;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// A reusable composite rule on `[a, b]` graded as `t = a + (b-a) s^grading`.
#[derive(Debug, Clone)]
pub struct GradedRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GradedRule {
    pub fn new(a: f64, b: f64, panels: usize, order: usize, grading: f64) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let mut points = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        let h = 1.0 / panels as f64;
        for p in 0..panels {
            let s0 = p as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                let s = s0 + 0.5 * h * (x + 1.0);
                let t = a + (b - a) * s.powf(grading);
                let jac = (b - a) * grading * s.powf(grading - 1.0);
                points.push(t);
                weights.push(0.5 * h * w * jac);
            }
        }
        GradedRule { points, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(t, w)| w * f(*t)).sum()
    }
}

/// Integral of `f` over `[a, b]` with grading toward `a`.
pub fn integrate_graded<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, grading: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    GradedRule::new(a, b, 64, 8, grading).integrate(f)
}
