//! Independent reference computations and data generators shared by the
//! integration test targets.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use shl::LabeledDataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Isotropic gaussian blobs in `dim` dimensions, class `c` centered at
/// `separation * e_c` (wrapping over the axes), `per_class` points each,
/// rows interleaved by class.
pub fn blobs(classes: usize, per_class: usize, dim: usize, separation: f64, sd: f64, seed: u64) -> LabeledDataset {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, sd).unwrap();
    let n = classes * per_class;
    let mut x = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for j in 0..dim {
            let center = if j == c % dim { separation } else { 0.0 };
            x[[i, j]] = center + noise.sample(&mut r);
        }
        labels.push(Some(c));
    }
    LabeledDataset::new(x, labels).unwrap()
}

/// Hides the labels of roughly `fraction` of the rows.
pub fn hide_labels(data: &mut LabeledDataset, fraction: f64, seed: u64) {
    let mut r = rng(seed);
    for l in &mut data.labels {
        if r.random::<f64>() < fraction {
            *l = None;
        }
    }
}

pub fn dual_objective(q: &DMatrix<f64>, alpha: &DVector<f64>) -> f64 {
    alpha.sum() - 0.5 * alpha.dot(&(q * alpha))
}

/// Euclidean projection onto `{0 <= a <= c, y'a = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &DVector<f64>, y: &[f64], c: &[f64]) -> DVector<f64> {
    let at = |lam: f64| DVector::from_fn(v.len(), |i, _| (v[i] - lam * y[i]).clamp(0.0, c[i]));
    let h = |lam: f64| at(lam).iter().zip(y).map(|(a, yi)| a * yi).sum::<f64>();
    let bound = v.amax() + c.iter().cloned().fold(0.0, f64::max) + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Reference solution of the SVM dual
/// `max sum(a) - a'Qa/2, Q_ij = y_i y_j K_ij, 0 <= a <= c, y'a = 0`
/// by accelerated projected gradient ascent with adaptive restart.
pub struct QpOracle {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub beta: f64,
}

pub fn qp_oracle(gram: ArrayView2<'_, f64>, y: &[f64], c: &[f64], tol: f64) -> QpOracle {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * gram[[i, j]]);
    let lmax = SymmetricEigen::new(q.clone()).eigenvalues.max().max(1e-12);
    let step = 1.0 / lmax;
    let ones = DVector::from_element(n, 1.0);
    let mut x = project(&DVector::zeros(n), y, c);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut obj = dual_objective(&q, &x);
    let mut checkpoint = obj;
    for iter in 1..1_000_000 {
        if iter % 500 == 0 {
            // fixed-point residual of the projected gradient map, or a stall
            let mapped = project(&(&x + (&ones - &q * &x) * step), y, c);
            if (&mapped - &x).norm() < tol * 1e-2 || obj - checkpoint < tol * 1e-3 {
                break;
            }
            checkpoint = obj;
        }
        let next = project(&(&z + (&ones - &q * &z) * step), y, c);
        let next_obj = dual_objective(&q, &next);
        if next_obj < obj {
            // adaptive restart of the momentum
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &x) * ((t - 1.0) / t_next);
        t = t_next;
        x = next;
        obj = next_obj;
    }
    let alpha: Vec<f64> = x.iter().copied().collect();
    let beta = oracle_beta(gram, y, c, &alpha);
    QpOracle {
        alpha,
        objective: obj,
        beta,
    }
}

fn oracle_beta(gram: ArrayView2<'_, f64>, y: &[f64], c: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let slack = 1e-7;
    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..n).map(|j| alpha[j] * y[j] * gram[[j, i]]).sum::<f64>())
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > slack && alpha[i] < c[i] - slack).collect();
    if !free.is_empty() {
        return free.iter().map(|&i| resid[i]).sum::<f64>() / free.len() as f64;
    }
    // y_i f_i >= 1 at alpha = 0 and <= 1 at alpha = c bounds beta from both sides
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let at_upper = alpha[i] >= c[i] - slack;
        if (y[i] > 0.0) != at_upper {
            lo = lo.max(resid[i]);
        } else {
            hi = hi.min(resid[i]);
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        _ => 0.0,
    }
}

/// Minimizes `eta |a - b| + |a - vi|^2/2 + |b - vj|^2/2` by damped Newton
/// iterations on the smoothed norm `sqrt(|a - b|^2 + eps^2)`, driving
/// `eps` to 1e-12 by continuation.
pub fn prox_oracle(vi: &[f64], vj: &[f64], eta: f64) -> (Vec<f64>, Vec<f64>) {
    let b = vi.len();
    let v = DVector::from_iterator(2 * b, vi.iter().chain(vj).copied());
    let mut x = v.clone();
    let objective = |x: &DVector<f64>, eps: f64| {
        let d = x.rows(0, b) - x.rows(b, b);
        eta * (d.norm_squared() + eps * eps).sqrt() + 0.5 * (x - &v).norm_squared()
    };
    let mut eps = 1e-2;
    while eps >= 1e-12 {
        for _ in 0..200 {
            let d: DVector<f64> = x.rows(0, b) - x.rows(b, b);
            let s = (d.norm_squared() + eps * eps).sqrt();
            let mut grad = &x - &v;
            for k in 0..b {
                grad[k] += eta * d[k] / s;
                grad[b + k] -= eta * d[k] / s;
            }
            if grad.norm() < 1e-14 {
                break;
            }
            let h = (DMatrix::identity(b, b) / s - &d * d.transpose() / (s * s * s)) * eta;
            let mut hess = DMatrix::identity(2 * b, 2 * b);
            for r in 0..b {
                for c in 0..b {
                    hess[(r, c)] += h[(r, c)];
                    hess[(b + r, b + c)] += h[(r, c)];
                    hess[(r, b + c)] -= h[(r, c)];
                    hess[(b + r, c)] -= h[(r, c)];
                }
            }
            let dir = match hess.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => -grad.clone(),
            };
            let f0 = objective(&x, eps);
            let slope = grad.dot(&dir);
            let mut t = 1.0;
            while t > 1e-20 && objective(&(&x + &dir * t), eps) > f0 + 1e-4 * t * slope {
                t *= 0.5;
            }
            x += dir * t;
        }
        eps *= 1e-2;
    }
    (x.rows(0, b).iter().copied().collect(), x.rows(b, b).iter().copied().collect())
}

/// `sum_m w_m / theta_m` with `0/0 = 0`.
pub fn mkl_objective(norms_sq: &[f64], theta: &[f64]) -> f64 {
    norms_sq
        .iter()
        .zip(theta)
        .map(|(&w, &t)| if w == 0.0 { 0.0 } else { w / t })
        .sum()
}

/// Best value of the MKL objective over `samples` random points of the
/// nonnegative unit `lp` sphere.
pub fn mkl_random_search(norms_sq: &[f64], p: f64, samples: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let u: Vec<f64> = (0..norms_sq.len()).map(|_| r.random::<f64>() + 1e-12).collect();
        let norm = u.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p);
        let theta: Vec<f64> = u.iter().map(|v| v / norm).collect();
        best = best.min(mkl_objective(norms_sq, &theta));
    }
    best
}

/// Minimum over every `±1` codebook (one codeword per class) of the summed
/// hinge loss `sum_n sum_b max(0, 1 - mu[class_n][b] f[n][b])`.
pub fn exhaustive_single_codebook(f: ArrayView2<'_, f64>, classes: &[usize], c: usize) -> f64 {
    let b = f.ncols();
    let total_bits = c * b;
    let mut best = f64::INFINITY;
    for pattern in 0u64..(1u64 << total_bits) {
        let mu = |cls: usize, bit: usize| {
            if pattern >> (cls * b + bit) & 1 == 1 {
                -1.0
            } else {
                1.0
            }
        };
        let mut loss = 0.0;
        for (n, &cls) in classes.iter().enumerate() {
            for bit in 0..b {
                loss += (1.0 - mu(cls, bit) * f[[n, bit]]).max(0.0);
            }
        }
        best = best.min(loss);
    }
    best
}

/// A `width x height` RGB image whose left half is pure red and right half
/// pure blue, with a vertical scribble of `len` pixels in the middle of each
/// half (254 foreground on the left, 127 background on the right).
pub fn red_blue_scene(width: usize, height: usize, len: usize) -> (shl::dataio::RgbImage, shl::dataio::GrayImage) {
    let half = width / 2;
    let pixels = (0..width * height)
        .map(|i| if i % width < half { [255, 0, 0] } else { [0, 0, 255] })
        .collect();
    let mut scribble = vec![0u8; width * height];
    let top = (height - len) / 2;
    for row in top..top + len {
        scribble[row * width + half / 2] = 254;
        scribble[row * width + half + half / 2] = 127;
    }
    (
        shl::dataio::RgbImage { width, height, pixels },
        shl::dataio::GrayImage {
            width,
            height,
            pixels: scribble,
        },
    )
}

/// Fraction of pixels where the mask marks the left half as foreground and
/// the right half as background.
pub fn half_mask_accuracy(mask: &[usize], width: usize) -> f64 {
    let half = width / 2;
    let ok = mask
        .iter()
        .enumerate()
        .filter(|(i, &m)| (m == shl::dataio::FOREGROUND) == (i % width < half))
        .count();
    ok as f64 / mask.len() as f64
}
