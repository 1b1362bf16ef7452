//! Exhaustive active-set solver for small soft-margin SVM duals, written
//! independently of the library so it can serve as a reference.
//!
//! Every variable is either at 0, at its upper bound, or free. For each of
//! the 3^n patterns the free variables solve the equality-constrained
//! stationarity system; the feasible solution with the best objective is the
//! optimum of the convex QP.
#![allow(dead_code)]

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKernel {
    Linear,
    Rbf { gamma: f64 },
    Sigmoid { gamma: f64, coef0: f64 },
    Polynomial { gamma: f64, coef0: f64, degree: u32 },
}

impl OracleKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
        match *self {
            OracleKernel::Linear => dot,
            OracleKernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
                (-gamma * d2).exp()
            }
            OracleKernel::Sigmoid { gamma, coef0 } => (gamma * dot + coef0).tanh(),
            OracleKernel::Polynomial { gamma, coef0, degree } => (gamma * dot + coef0).powi(degree as i32),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// In maximization form: sum(alpha) - 1/2 alpha' Q alpha.
    pub objective: f64,
}

pub fn gram(x: &[Vec<f64>], k: &OracleKernel) -> Vec<Vec<f64>> {
    x.iter().map(|a| x.iter().map(|b| k.eval(a, b)).collect()).collect()
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-11 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let pivot = a[col].clone();
                for (v, p) in a[row].iter_mut().zip(&pivot).skip(col) {
                    *v -= f * p;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn dual_value(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * q[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Bias from the optimal alphas: the multiplier of the equality constraint
/// when some variable is free, otherwise the midpoint of the interval the
/// bound variables allow.
fn bias_of(k: &[Vec<f64>], y: &[f64], alpha: &[f64], mu: Option<f64>) -> f64 {
    if let Some(mu) = mu {
        return mu;
    }
    let n = y.len();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let s: f64 = (0..n).map(|j| alpha[j] * y[j] * k[i][j]).sum();
        // alpha = 0 needs y (s + b) >= 1, alpha = C needs y (s + b) <= 1.
        let at_zero = alpha[i] == 0.0;
        let bound = y[i] - s;
        match (at_zero, y[i] > 0.0) {
            (true, true) | (false, false) => lo = lo.max(bound),
            (true, false) | (false, true) => hi = hi.min(bound),
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

pub fn solve_exact(k: &[Vec<f64>], y: &[f64], upper: &[f64]) -> OracleSolution {
    let n = y.len();
    assert!(n <= 12, "exhaustive oracle is limited to 12 variables");
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect())
        .collect();
    let feas_tol = 1e-10;
    let mut best: Option<(f64, Vec<f64>, Option<f64>)> = None;
    let mut state = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = (0..n)
            .map(|i| if state[i] == 1 { upper[i] } else { 0.0 })
            .collect();
        let bound_sum: f64 = (0..n).filter(|&i| state[i] != 2).map(|i| y[i] * alpha[i]).sum();
        let candidate = if free.is_empty() {
            (bound_sum.abs() < feas_tol).then_some(None)
        } else {
            let m = free.len();
            let mut a = vec![vec![0.0; m + 1]; m + 1];
            let mut rhs = vec![0.0; m + 1];
            for (r, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    a[r][c] = q[i][j];
                }
                a[r][m] = y[i];
                a[m][r] = y[i];
                rhs[r] = 1.0 - (0..n).filter(|&j| state[j] != 2).map(|j| q[i][j] * alpha[j]).sum::<f64>();
            }
            rhs[m] = -bound_sum;
            solve_linear(a, rhs).and_then(|sol| {
                for (r, &i) in free.iter().enumerate() {
                    if sol[r] < -feas_tol || sol[r] > upper[i] + feas_tol {
                        return None;
                    }
                    alpha[i] = sol[r].clamp(0.0, upper[i]);
                }
                Some(Some(sol[m]))
            })
        };
        if let Some(mu) = candidate {
            let v = dual_value(&q, &alpha);
            if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                best = Some((v, alpha, mu));
            }
        }
        // next pattern in base 3
        let mut i = 0;
        while i < n && state[i] == 2 {
            state[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
        state[i] += 1;
    }
    let (objective, alpha, mu) = best.expect("the QP is feasible");
    let bias = bias_of(k, y, &alpha, mu);
    OracleSolution { alpha, bias, objective }
}

pub fn decision(x: &[Vec<f64>], y: &[f64], k: &OracleKernel, sol: &OracleSolution, point: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(&sol.alpha)
        .map(|((xi, yi), a)| a * yi * k.eval(xi, point))
        .sum::<f64>()
        + sol.bias
}

/// Cholesky test for positive semidefiniteness with a small slack.
pub fn is_psd(k: &[Vec<f64>]) -> bool {
    let n = k.len();
    let jitter = 1e-9;
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
            if i == j {
                let d = k[i][i] + jitter - s;
                if d <= 0.0 {
                    return false;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (k[i][j] - s) / l[j][j];
            }
        }
    }
    true
}

/// A random small problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub c: f64,
    pub weight: f64,
    pub kernel: OracleKernel,
}

impl Instance {
    pub fn upper(&self) -> Vec<f64> {
        self.y
            .iter()
            .map(|&yi| if yi > 0.0 { self.c * self.weight } else { self.c })
            .collect()
    }
}

/// `kind`: 0 linear, 1 rbf, 2 sigmoid, 3 polynomial. Sigmoid instances are
/// redrawn until the Gram matrix is positive semidefinite so the dual has a
/// well-defined optimum.
pub fn random_instance(rng: &mut impl Rng, kind: usize, max_n: usize) -> Instance {
    loop {
        let n = rng.random_range(4..=max_n);
        let d = rng.random_range(1..=4);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let kernel = match kind {
            0 => OracleKernel::Linear,
            1 => OracleKernel::Rbf {
                gamma: rng.random_range(0.2..3.0),
            },
            2 => OracleKernel::Sigmoid {
                gamma: rng.random_range(0.05..1.0),
                coef0: rng.random_range(-1.0..0.0),
            },
            _ => OracleKernel::Polynomial {
                gamma: rng.random_range(0.3..1.5),
                coef0: rng.random_range(0.0..1.0),
                degree: rng.random_range(2..=3),
            },
        };
        if !is_psd(&gram(&x, &kernel)) {
            continue;
        }
        let c = [0.1, 1.0, 10.0][rng.random_range(0..3)];
        let weight = [1.0, 2.0, 5.0][rng.random_range(0..3)];
        return Instance { x, y, c, weight, kernel };
    }
}
