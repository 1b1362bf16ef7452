//! Sequential minimal optimization for the weighted soft-margin dual
//!
//! ```text
//! min_a  1/2 a^T Q a - e^T a
//! s.t.   y^T a = 0,  0 <= a_i <= C_i,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! Working pairs are chosen by maximal violation for the first index and
//! second-order gain for the second. The loop stops once the largest KKT
//! violation `m(a) - M(a)` drops below the tolerance.

use super::cache::KernelCache;

const TAU: f64 = 1e-12;

pub(crate) struct SolverOutput {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub violation: f64,
    pub converged: bool,
    pub objective: f64,
}

pub(crate) fn solve(
    cache: &mut KernelCache,
    y: &[f64],
    upper: &[f64],
    eps: f64,
    max_iterations: usize,
) -> SolverOutput {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let at_upper = |a: &[f64], t: usize| a[t] >= upper[t];
    let at_lower = |a: &[f64], t: usize| a[t] <= 0.0;

    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let mut converged = false;

    while iterations < max_iterations {
        // first index: maximal violation among I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let v = if y[t] > 0.0 {
                (!at_upper(&alpha, t)).then(|| -grad[t])
            } else {
                (!at_lower(&alpha, t)).then_some(grad[t])
            };
            if let Some(v) = v {
                if v >= gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        if i == usize::MAX {
            violation = 0.0;
            converged = true;
            break;
        }
        let qi = cache.column(i);
        let kii = cache.diag(i);

        // second index: best second-order decrease among I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            let (eligible, grad_diff, v) = if y[t] > 0.0 {
                (!at_lower(&alpha, t), gmax + grad[t], grad[t])
            } else {
                (!at_upper(&alpha, t), gmax - grad[t], -grad[t])
            };
            if !eligible {
                continue;
            }
            gmax2 = gmax2.max(v);
            if grad_diff > 0.0 {
                // K_ii + K_tt - 2 K_it
                let quad = kii + cache.diag(t) - 2.0 * qi[t];
                let gain = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                if gain <= best {
                    best = gain;
                    j = t;
                }
            }
        }
        violation = gmax + gmax2;
        if violation < eps || j == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;

        let qj = cache.column(j);
        let kij = qi[j];
        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = kii + cache.diag(j) - 2.0 * kij;
        let quad = if quad > 0.0 { quad } else { TAU };

        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        // G_t += Q_ti da_i + Q_tj da_j
        let di = (alpha[i] - old_i) * y[i];
        let dj = (alpha[j] - old_j) * y[j];
        for t in 0..n {
            grad[t] += y[t] * (qi[t] * di + qj[t] * dj);
        }
    }

    let bias = -rho(&alpha, &grad, y, upper);
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (1.0 - g)).sum::<f64>();
    SolverOutput {
        alpha,
        bias,
        iterations,
        violation,
        converged,
        objective,
    }
}

/// Offset from the free variables' `y_i G_i`, or the midpoint of the
/// feasible interval when none is free.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], upper: &[f64]) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= upper[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
