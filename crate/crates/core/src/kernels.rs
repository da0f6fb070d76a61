//! Kernel functions and cached Gram matrices.
//!
//! Three families are supported: cosine-normalized linear, normalized
//! polynomial and Gaussian. The default bank is the 11-kernel set used for
//! every experiment: one normalized linear, one normalized polynomial
//! (degree 2, bias 1) and nine Gaussians with bandwidths
//! `2^-7, 2^-5, 2^-3, 2^-1, 1, 2, 2^3, 2^5, 2^7`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `<x, y> / (|x| |y|)`, 0 when either norm vanishes.
    NormalizedLinear,
    /// `(<x^, y^> + bias)^degree` on unit-normalized inputs, rescaled to a unit diagonal.
    NormalizedPolynomial { degree: u32, bias: f64 },
    /// `exp(-|x - y|^2 / (2 sigma^2))`.
    Gaussian { sigma: f64 },
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Self {
        KernelSpec::Gaussian { sigma }
    }

    pub fn polynomial(degree: u32, bias: f64) -> Self {
        KernelSpec::NormalizedPolynomial { degree, bias }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::NormalizedLinear => Ok(()),
            KernelSpec::NormalizedPolynomial { degree, bias } => {
                if degree < 1 {
                    return Err(Error::config("polynomial degree must be >= 1"));
                }
                if !bias.is_finite() || bias < 0.0 {
                    // a negative bias can make the normalizer vanish or go negative
                    return Err(Error::config("polynomial bias must be finite and >= 0"));
                }
                Ok(())
            }
            KernelSpec::Gaussian { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::config("gaussian bandwidth must be > 0"));
                }
                Ok(())
            }
        }
    }

    /// The 11-kernel default bank.
    pub fn default_bank() -> Vec<KernelSpec> {
        let mut specs = vec![
            KernelSpec::NormalizedLinear,
            KernelSpec::polynomial(2, 1.0),
        ];
        specs.extend(
            [-7, -5, -3, -1, 0, 1, 3, 5, 7]
                .iter()
                .map(|&e| KernelSpec::gaussian(2f64.powi(e))),
        );
        specs
    }

    /// Parses a comma separated list such as `linear,poly:2:1,gauss:0.5`.
    /// The single word `default` expands to [`KernelSpec::default_bank`].
    pub fn parse_list(s: &str) -> Result<Vec<KernelSpec>> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("default") {
            return Ok(Self::default_bank());
        }
        let specs = s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<KernelSpec>>>()?;
        if specs.is_empty() {
            return Err(Error::config("empty kernel list"));
        }
        Ok(specs)
    }

    /// Evaluates the kernel from the pairwise statistics of two vectors.
    /// Both `kernel_eval` and the bank builder go through here so that Gram
    /// entries are bit-identical to pointwise evaluation.
    fn eval_stats(&self, dot: f64, sq_x: f64, sq_y: f64, sq_dist: f64) -> f64 {
        match *self {
            KernelSpec::NormalizedLinear => {
                let denom = (sq_x * sq_y).sqrt();
                if denom > 0.0 {
                    (dot / denom).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            }
            KernelSpec::NormalizedPolynomial { degree, bias } => {
                let nx = sq_x.sqrt();
                let ny = sq_y.sqrt();
                let unit = |sq: f64, n: f64| if n > 0.0 { sq / (n * n) } else { 0.0 };
                let cos = if nx > 0.0 && ny > 0.0 {
                    (dot / (nx * ny)).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
                let raw = (cos + bias).powi(degree as i32);
                let kxx = (unit(sq_x, nx) + bias).powi(degree as i32);
                let kyy = (unit(sq_y, ny) + bias).powi(degree as i32);
                let norm = (kxx * kyy).sqrt();
                if norm > 0.0 {
                    raw / norm
                } else {
                    0.0
                }
            }
            KernelSpec::Gaussian { sigma } => (-sq_dist / (2.0 * sigma * sigma)).exp(),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::NormalizedLinear => write!(f, "linear"),
            KernelSpec::NormalizedPolynomial { degree, bias } => write!(f, "poly:{degree}:{bias}"),
            KernelSpec::Gaussian { sigma } => write!(f, "gauss:{sigma}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::config(format!("bad number `{t}` in kernel spec `{s}`")))
        };
        let spec = match parts.as_slice() {
            ["linear"] => KernelSpec::NormalizedLinear,
            ["poly", deg, bias] => KernelSpec::NormalizedPolynomial {
                degree: deg
                    .parse()
                    .map_err(|_| Error::config(format!("bad degree in kernel spec `{s}`")))?,
                bias: num(bias)?,
            },
            ["gauss", sigma] => KernelSpec::Gaussian { sigma: num(sigma)? },
            _ => return Err(Error::config(format!("unknown kernel spec `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn check_finite(v: ArrayView1<'_, f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::input("non-finite feature value"))
    }
}

fn pair_stats(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> (f64, f64, f64, f64) {
    let mut dot = 0.0;
    let mut sq_x = 0.0;
    let mut sq_y = 0.0;
    let mut sq_dist = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        dot += a * b;
        sq_x += a * a;
        sq_y += b * b;
        let d = a - b;
        sq_dist += d * d;
    }
    (dot, sq_x, sq_y, sq_dist)
}

/// Evaluates `spec` on a pair of feature vectors.
pub fn kernel_eval(spec: &KernelSpec, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    check_finite(x)?;
    check_finite(y)?;
    let (dot, sq_x, sq_y, sq_dist) = pair_stats(x, y);
    Ok(spec.eval_stats(dot, sq_x, sq_y, sq_dist))
}

/// Evaluates every kernel of `specs` between `x` and each row of `rows`.
/// Output is `specs.len() x rows.nrows()`.
pub fn cross_kernels(
    specs: &[KernelSpec],
    rows: ArrayView2<'_, f64>,
    x: ArrayView1<'_, f64>,
) -> Result<Array2<f64>> {
    if rows.ncols() != x.len() {
        return Err(Error::input(format!(
            "dimension mismatch: model has {} features, input has {}",
            rows.ncols(),
            x.len()
        )));
    }
    check_finite(x)?;
    let mut out = Array2::zeros((specs.len(), rows.nrows()));
    for (j, row) in rows.axis_iter(Axis(0)).enumerate() {
        // same argument order as the training Gram: support row first
        let (dot, sq_r, sq_x, sq_dist) = pair_stats(row, x);
        for (m, spec) in specs.iter().enumerate() {
            out[[m, j]] = spec.eval_stats(dot, sq_r, sq_x, sq_dist);
        }
    }
    Ok(out)
}

/// `M` kernel descriptors with their dense `N x N` Gram matrices over the
/// training samples. Immutable once built.
#[derive(Clone, Debug)]
pub struct KernelBank {
    specs: Vec<KernelSpec>,
    gram: Vec<Array2<f64>>,
    n: usize,
}

impl KernelBank {
    pub fn specs(&self) -> &[KernelSpec] {
        &self.specs
    }

    pub fn gram(&self, m: usize) -> &Array2<f64> {
        &self.gram[m]
    }

    pub fn grams(&self) -> &[Array2<f64>] {
        &self.gram
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

/// Builds and caches the Gram matrix of every spec over the rows of `features`.
pub fn build_bank(specs: &[KernelSpec], features: ArrayView2<'_, f64>) -> Result<KernelBank> {
    let n = features.nrows();
    if n == 0 || features.ncols() == 0 {
        return Err(Error::input("empty feature matrix"));
    }
    if specs.is_empty() {
        return Err(Error::input("empty kernel list"));
    }
    for s in specs {
        s.validate()?;
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("non-finite feature value"));
    }

    let m = specs.len();
    // row i holds kernel values (i, j) for j >= i for every spec
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = features.row(i);
            let mut vals = Vec::with_capacity((n - i) * m);
            for j in i..n {
                let (dot, sq_x, sq_y, sq_dist) = pair_stats(xi, features.row(j));
                vals.extend(specs.iter().map(|s| s.eval_stats(dot, sq_x, sq_y, sq_dist)));
            }
            vals
        })
        .collect();

    let mut gram = vec![Array2::<f64>::zeros((n, n)); m];
    for (i, vals) in upper.iter().enumerate() {
        for (off, chunk) in vals.chunks_exact(m).enumerate() {
            let j = i + off;
            for (k, &v) in chunk.iter().enumerate() {
                gram[k][[i, j]] = v;
                gram[k][[j, i]] = v;
            }
        }
    }
    Ok(KernelBank {
        specs: specs.to_vec(),
        gram,
        n,
    })
}

/// `sum_m theta_m K_m` over the bank.
pub fn combined_kernel(bank: &KernelBank, theta: &[f64]) -> Result<Array2<f64>> {
    if theta.len() != bank.len() {
        return Err(Error::input(format!(
            "theta has {} entries for {} kernels",
            theta.len(),
            bank.len()
        )));
    }
    if theta.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::input("kernel weights must be finite and nonnegative"));
    }
    let mut out = Array2::<f64>::zeros((bank.n, bank.n));
    for (t, g) in theta.iter().zip(&bank.gram) {
        if *t != 0.0 {
            out.scaled_add(*t, g);
        }
    }
    Ok(out)
}
