//! Weighted binary SVM dual solved by sequential minimal optimization.
//!
//! Each hash bit reduces to the standard `N`-variable problem
//!
//! ```text
//! max  sum_n a_n - 1/2 sum_{n,m} a_n a_m y_n y_m K(n, m)
//! s.t. 0 <= a_n <= c_n,   sum_n a_n y_n = 0
//! ```
//!
//! where `y_n` is the bit of the codeword the sample is currently assigned to
//! and `c_n` its cost bound. The solver follows the LIBSVM design: maximal
//! violating pair for the first index, second-order gain for the second,
//! analytic two-variable update with per-sample bounds. No shrinking.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const TAU: f64 = 1e-12;

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_PASSES: usize = 10_000;

/// One binary SVM training problem over a precomputed kernel matrix.
#[derive(Clone, Copy, Debug)]
pub struct SvmProblem<'a> {
    pub gram: ArrayView2<'a, f64>,
    /// Labels in `{-1, +1}`.
    pub labels: &'a [f64],
    /// Per-sample upper bounds on the dual variables.
    pub cost: &'a [f64],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    /// Iteration cap reached before the KKT gap fell below tolerance.
    MaxIterations,
    /// Only one label sign among samples with positive cost. `alpha = 0`
    /// and `beta` is the sign of that class.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmSolution {
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub dual_objective: f64,
    /// Indices with `alpha > 0`, ascending.
    pub support: Vec<usize>,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl SvmSolution {
    /// `alpha_n * y_n` over the support set, in support order.
    pub fn dual_coef(&self, labels: &[f64]) -> Vec<f64> {
        self.support.iter().map(|&n| self.alpha[n] * labels[n]).collect()
    }
}

impl<'a> SvmProblem<'a> {
    pub fn new(gram: ArrayView2<'a, f64>, labels: &'a [f64], cost: &'a [f64]) -> Result<Self> {
        let p = SvmProblem { gram, labels, cost };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.gram.dim() != (n, n) {
            return Err(Error::input(format!(
                "gram is {:?}, expected {n}x{n}",
                self.gram.dim()
            )));
        }
        if self.cost.len() != n {
            return Err(Error::input("cost length differs from label count"));
        }
        if self.labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::input("labels must be -1 or +1"));
        }
        if self.cost.iter().any(|&c| !(c.is_finite() && c >= 0.0)) {
            return Err(Error::input("costs must be finite and nonnegative"));
        }
        if self.gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite kernel entry"));
        }
        Ok(())
    }
}

/// Sum of `coef_j * k_j` in the given order, plus `beta`. Training decisions
/// and model encoding both go through this so they agree bit for bit.
#[inline]
pub(crate) fn expand(coef: &[f64], kvals: impl Iterator<Item = f64>, beta: f64) -> f64 {
    let mut acc = 0.0;
    for (c, k) in coef.iter().zip(kvals) {
        acc += c * k;
    }
    acc + beta
}

/// Solves the dual to KKT gap `tol`. At most `max_passes * n` pair updates
/// are performed.
pub fn solve(problem: &SvmProblem<'_>, tol: f64, max_passes: usize) -> Result<SvmSolution> {
    problem.validate()?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::config("svm tolerance must be > 0"));
    }
    let n = problem.len();
    let y = problem.labels;
    let k = &problem.gram;

    // zero-cost samples are pinned at alpha = 0
    let active: Vec<usize> = (0..n).filter(|&i| problem.cost[i] > 0.0).collect();
    let has_pos = active.iter().any(|&i| y[i] > 0.0);
    let has_neg = active.iter().any(|&i| y[i] < 0.0);
    if !(has_pos && has_neg) {
        let beta = if has_pos {
            1.0
        } else if has_neg {
            -1.0
        } else {
            let s: f64 = y.iter().sum();
            if s >= 0.0 {
                1.0
            } else {
                -1.0
            }
        };
        return Ok(SvmSolution {
            alpha: vec![0.0; n],
            beta,
            dual_objective: 0.0,
            support: Vec::new(),
            status: SolveStatus::Degenerate,
            iterations: 0,
        });
    }

    let l = active.len();
    let ys: Vec<f64> = active.iter().map(|&i| y[i]).collect();
    let c: Vec<f64> = active.iter().map(|&i| problem.cost[i]).collect();
    let qd: Vec<f64> = active.iter().map(|&i| k[[i, i]]).collect();
    let q = |a: usize, b: usize| ys[a] * ys[b] * k[[active[a], active[b]]];

    let mut alpha = vec![0.0; l];
    let mut grad = vec![-1.0; l];
    let is_upper = |a: &[f64], t: usize| a[t] >= c[t];
    let is_lower = |a: &[f64], t: usize| a[t] <= 0.0;

    let max_iter = max_passes.saturating_mul(l.max(1));
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIterations;
    let mut qi_row = vec![0.0; l];
    let mut qj_row = vec![0.0; l];

    while iterations < max_iter {
        // first index: maximal violation among I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..l {
            let up = if ys[t] > 0.0 {
                !is_upper(&alpha, t)
            } else {
                !is_lower(&alpha, t)
            };
            if up && -ys[t] * grad[t] >= gmax {
                gmax = -ys[t] * grad[t];
                i_sel = t;
            }
        }
        if i_sel == usize::MAX {
            status = SolveStatus::Converged;
            break;
        }
        let i = i_sel;
        for (t, slot) in qi_row.iter_mut().enumerate() {
            *slot = q(i, t);
        }

        // second index: largest guaranteed decrease among I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..l {
            let low = if ys[t] > 0.0 {
                !is_lower(&alpha, t)
            } else {
                !is_upper(&alpha, t)
            };
            if !low {
                continue;
            }
            let yg = ys[t] * grad[t];
            if yg >= gmax2 {
                gmax2 = yg;
            }
            let grad_diff = gmax + yg;
            if grad_diff > 0.0 {
                let quad = qd[i] + qd[t] - 2.0 * ys[i] * ys[t] * qi_row[t];
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj = -(grad_diff * grad_diff) / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    j_sel = t;
                }
            }
        }
        if gmax + gmax2 < tol || j_sel == usize::MAX {
            status = SolveStatus::Converged;
            break;
        }
        let j = j_sel;
        iterations += 1;
        for (t, slot) in qj_row.iter_mut().enumerate() {
            *slot = q(j, t);
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (c[i], c[j]);
        if ys[i] != ys[j] {
            let mut quad = qd[i] + qd[j] + 2.0 * qi_row[j];
            if quad <= 0.0 {
                quad = TAU;
            }
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
            let mut quad = qd[i] + qd[j] - 2.0 * qi_row[j];
            if quad <= 0.0 {
                quad = TAU;
            }
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

        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for t in 0..l {
            grad[t] += qi_row[t] * di + qj_row[t] * dj;
        }
    }

    // offset from free vectors, or the midpoint of the feasible interval
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut n_free = 0usize;
    let mut sum_free = 0.0;
    for t in 0..l {
        let yg = ys[t] * grad[t];
        if is_upper(&alpha, t) {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(&alpha, t) {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    // 1/2 a'Qa - e'a = sum a_t (G_t - 1) / 2
    let primal_form: f64 = (0..l).map(|t| alpha[t] * (grad[t] - 1.0)).sum::<f64>() / 2.0;

    let mut full = vec![0.0; n];
    for (t, &idx) in active.iter().enumerate() {
        full[idx] = alpha[t];
    }
    let support = (0..n).filter(|&i| full[i] > 0.0).collect();
    Ok(SvmSolution {
        alpha: full,
        beta: -rho,
        dual_objective: -primal_form,
        support,
        status,
        iterations,
    })
}

/// `f(q) = sum_n alpha_n y_n K(n, q) + beta` for each column `q` of
/// `kernel_rows` (training samples along rows).
pub fn decision_values(
    solution: &SvmSolution,
    labels: &[f64],
    kernel_rows: ArrayView2<'_, f64>,
) -> Result<Vec<f64>> {
    let n = solution.alpha.len();
    if labels.len() != n || kernel_rows.nrows() != n {
        return Err(Error::input(format!(
            "kernel rows {:?} / labels {} do not match {} training samples",
            kernel_rows.dim(),
            labels.len(),
            n
        )));
    }
    let coef = solution.dual_coef(labels);
    Ok(kernel_rows
        .axis_iter(Axis(1))
        .map(|col| expand(&coef, solution.support.iter().map(|&s| col[s]), solution.beta))
        .collect())
}

/// `sum_n c_n [1 - y_n f(x_n)]_+ + 1/2 (a∘y)' K (a∘y)` at the primal point
/// recovered from `solution`.
pub fn primal_objective(problem: &SvmProblem<'_>, solution: &SvmSolution) -> Result<f64> {
    let f = decision_values(solution, problem.labels, problem.gram)?;
    let hinge: f64 = f
        .iter()
        .zip(problem.labels)
        .zip(problem.cost)
        .map(|((fv, y), c)| c * (1.0 - y * fv).max(0.0))
        .sum();
    let coef = solution.dual_coef(problem.labels);
    let mut quad = 0.0;
    for (a, &i) in solution.support.iter().enumerate() {
        for (b, &j) in solution.support.iter().enumerate() {
            quad += coef[a] * coef[b] * problem.gram[[i, j]];
        }
    }
    Ok(hinge + 0.5 * quad)
}
