//! `lp`-norm multiple kernel learning weights.
//!
//! With the SVM block fixed, the kernel weights of a bit minimize
//! `sum_m |w_m|^2 / theta_m` over `{theta >= 0, |theta|_p <= 1}`, which has the
//! closed form
//!
//! ```text
//! theta_m = |w_m|^(2/(p+1)) / (sum_m' |w_m'|^(2p/(p+1)))^(1/p)
//! ```
//!
//! for `p > 1`.

use serde::{Deserialize, Serialize};

use crate::kernels::KernelBank;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MklWeights {
    pub theta: Vec<f64>,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateStatus {
    Updated,
    /// Every norm was zero; the update is 0/0 and uniform weights were returned.
    UniformFallback,
}

pub fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("mkl norm p must be > 1, got {p}")))
    }
}

impl MklWeights {
    /// `theta_m = M^(-1/p)`, a point on the boundary of the feasible set.
    pub fn uniform(m: usize, p: f64) -> Result<Self> {
        check_p(p)?;
        if m == 0 {
            return Err(Error::input("no kernels"));
        }
        Ok(MklWeights {
            theta: vec![(m as f64).powf(-1.0 / p); m],
            p,
        })
    }

    pub fn p_norm(&self) -> f64 {
        self.theta.iter().map(|t| t.powf(self.p)).sum::<f64>().powf(1.0 / self.p)
    }

    /// `sum_m |w_m|^2 / theta_m`, with `0/0 = 0` and `x/0 = inf`.
    pub fn regularizer(&self, norms_squared: &[f64]) -> f64 {
        self.theta
            .iter()
            .zip(norms_squared)
            .map(|(&t, &w)| {
                if w == 0.0 {
                    0.0
                } else if t == 0.0 {
                    f64::INFINITY
                } else {
                    w / t
                }
            })
            .sum()
    }
}

/// `|w_m|^2 = theta_m^2 (a∘y)' K_m (a∘y)` for every kernel of the bank.
pub fn rkhs_norms(alpha: &[f64], labels: &[f64], theta: &MklWeights, bank: &KernelBank) -> Result<Vec<f64>> {
    let n = bank.n();
    if alpha.len() != n || labels.len() != n {
        return Err(Error::input(format!(
            "alpha/labels of length {}/{} for {n} samples",
            alpha.len(),
            labels.len()
        )));
    }
    if theta.theta.len() != bank.len() {
        return Err(Error::input("theta length differs from kernel count"));
    }
    let support: Vec<(usize, f64)> = alpha
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(_, (a, _))| **a != 0.0)
        .map(|(i, (a, y))| (i, a * y))
        .collect();
    Ok(bank
        .grams()
        .iter()
        .zip(&theta.theta)
        .map(|(g, &t)| {
            if t == 0.0 {
                return 0.0;
            }
            let mut quad = 0.0;
            for &(i, ci) in &support {
                let row = g.row(i);
                let inner: f64 = support.iter().map(|&(j, cj)| cj * row[j]).sum();
                quad += ci * inner;
            }
            // PSD up to rounding
            t * t * quad.max(0.0)
        })
        .collect())
}

/// Closed-form weight update from squared RKHS norms.
pub fn update_theta(norms_squared: &[f64], p: f64) -> Result<(MklWeights, UpdateStatus)> {
    check_p(p)?;
    if norms_squared.is_empty() {
        return Err(Error::input("no kernels"));
    }
    if norms_squared.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::input("squared norms must be finite and nonnegative"));
    }
    let max = norms_squared.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok((MklWeights::uniform(norms_squared.len(), p)?, UpdateStatus::UniformFallback));
    }
    // the update is invariant to scaling all norms; normalize for range safety
    let norms: Vec<f64> = norms_squared.iter().map(|w| (w / max).sqrt()).collect();
    let numer: Vec<f64> = norms.iter().map(|w| w.powf(2.0 / (p + 1.0))).collect();
    let denom = norms
        .iter()
        .map(|w| w.powf(2.0 * p / (p + 1.0)))
        .sum::<f64>()
        .powf(1.0 / p);
    let theta = numer.iter().map(|u| u / denom).collect();
    Ok((MklWeights { theta, p }, UpdateStatus::Updated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_bank, KernelSpec};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn equal_norms_give_uniform() {
        let (w, st) = update_theta(&[3.0; 4], 2.0).unwrap();
        assert_eq!(st, UpdateStatus::Updated);
        for t in &w.theta {
            assert_abs_diff_eq!(*t, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_nonzero_norm_gives_indicator() {
        let (w, _) = update_theta(&[0.0, 7.0, 0.0], 2.0).unwrap();
        assert_eq!(w.theta, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_kernel_closed_form() {
        let (w, _) = update_theta(&[4.0, 1.0], 2.0).unwrap();
        let d = (2f64.powf(4.0 / 3.0) + 1.0).sqrt();
        assert_abs_diff_eq!(w.theta[0], 2f64.powf(2.0 / 3.0) / d, epsilon = 1e-14);
        assert_abs_diff_eq!(w.theta[1], 1.0 / d, epsilon = 1e-14);
        assert_abs_diff_eq!(w.theta[0], 0.84611, epsilon = 1e-5);
        assert_abs_diff_eq!(w.theta[1], 0.53301, epsilon = 1e-5);
        assert_abs_diff_eq!(w.p_norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn all_zero_norms_fall_back_to_uniform() {
        let (w, st) = update_theta(&[0.0; 3], 2.0).unwrap();
        assert_eq!(st, UpdateStatus::UniformFallback);
        for t in &w.theta {
            assert_abs_diff_eq!(*t, 3f64.powf(-0.5), epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(update_theta(&[1.0, -1.0], 2.0).is_err());
        assert!(update_theta(&[1.0], 1.0).is_err());
        assert!(update_theta(&[], 2.0).is_err());
        assert!(MklWeights::uniform(3, 0.5).is_err());
    }

    #[test]
    fn rkhs_norm_cases() {
        // identity Gram: two far-apart gaussian points
        let x = array![[0.0], [1000.0]];
        let bank = build_bank(&[KernelSpec::gaussian(1.0)], x.view()).unwrap();
        let one = MklWeights { theta: vec![1.0], p: 2.0 };
        let norms = rkhs_norms(&[1.0, 1.0], &[1.0, -1.0], &one, &bank).unwrap();
        assert_abs_diff_eq!(norms[0], 2.0, epsilon = 1e-12);

        let zero = rkhs_norms(&[0.0, 0.0], &[1.0, -1.0], &one, &bank).unwrap();
        assert_eq!(zero, vec![0.0]);

        let bank2 = build_bank(&[KernelSpec::gaussian(1.0), KernelSpec::NormalizedLinear], x.view()).unwrap();
        let th = MklWeights { theta: vec![0.0, 1.0], p: 2.0 };
        let norms = rkhs_norms(&[3.0, 2.0], &[1.0, -1.0], &th, &bank2).unwrap();
        assert_eq!(norms[0], 0.0);
        assert!(rkhs_norms(&[1.0], &[1.0, -1.0], &one, &bank).is_err());
    }

    #[test]
    fn regularizer_conventions() {
        let w = MklWeights { theta: vec![0.5, 0.0, 0.0], p: 2.0 };
        assert_eq!(w.regularizer(&[1.0, 0.0, 0.0]), 2.0);
        assert!(w.regularizer(&[1.0, 0.0, 1.0]).is_infinite());
    }
}
