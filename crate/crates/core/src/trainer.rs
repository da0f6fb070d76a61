//! Majorization-minimization training loop and the learned hash model.
//!
//! One outer iteration:
//!
//! 1. recompute the sample-to-codeword assignment from the current model
//!    (the first iteration uses labels, or a seeded random class, with slot 0);
//! 2. for every bit independently: solve the reduced SVM over the combined
//!    kernel, then update that bit's kernel weights in closed form;
//! 3. update the codebook (exact substitution for one codeword per class,
//!    accelerated proximal subgradient descent otherwise);
//! 4. record the surrogate distortion and test for convergence.
//!
//! A bit's new SVM replaces the previous decision function only when it does
//! not increase that bit's hinge loss under the current assignment, and a
//! codebook update is kept only when it does not increase the surrogate loss.
//! Together with the assignment step this makes the recorded loss trace
//! non-increasing from the first iteration on.
//!
//! When the data mixes labeled and unlabeled samples, the first iteration
//! trains on the labeled samples only (unlabeled samples get zero cost and
//! are left out of the codeword update); unlabeled samples then receive
//! their classes from the resulting decision functions.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{self, Assignment, Codebook, DecisionMatrix};
use crate::dataio::LabeledDataset;
use crate::evalkit::hamming_unchecked;
use crate::kernels::{build_bank, combined_kernel, cross_kernels, KernelBank, KernelSpec};
use crate::mkl::{self, MklWeights};
use crate::svm::{self, SolveStatus, SvmProblem};
use crate::{sign, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Code length `B`.
    pub bits: usize,
    /// Number of classes `C`.
    pub classes: usize,
    /// Codewords per class `S`.
    pub codewords: usize,
    /// SVM cost on the hinge term.
    pub lambda1: f64,
    /// Weight of the within-class codeword distance regularizer.
    pub lambda2: f64,
    /// MKL norm, `p > 1`.
    pub p: f64,
    pub kernels: Vec<KernelSpec>,
    pub max_outer: usize,
    /// Stop when `|E_t - E_{t+1}| / max(E_t, 1)` falls below this.
    pub outer_tol: f64,
    pub svm_tol: f64,
    pub svm_max_passes: usize,
    pub psd_step: f64,
    pub psd_iters: usize,
    pub seed: u64,
    /// z-score features with training statistics before kernel evaluation.
    pub standardize: bool,
}

impl TrainConfig {
    pub fn new(bits: usize, classes: usize) -> Self {
        TrainConfig {
            bits,
            classes,
            codewords: 1,
            lambda1: 1000.0,
            lambda2: 2000.0,
            p: 2.0,
            kernels: KernelSpec::default_bank(),
            max_outer: 20,
            outer_tol: 1e-4,
            svm_tol: svm::DEFAULT_TOL,
            svm_max_passes: svm::DEFAULT_MAX_PASSES,
            psd_step: codebook::DEFAULT_PSD_STEP,
            psd_iters: codebook::DEFAULT_PSD_ITERS,
            seed: 0,
            standardize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 {
            return Err(Error::config("bits must be >= 1"));
        }
        if self.classes == 0 {
            return Err(Error::config("classes must be >= 1"));
        }
        if self.codewords == 0 {
            return Err(Error::config("codewords per class must be >= 1"));
        }
        if !(self.lambda1.is_finite() && self.lambda1 > 0.0) {
            return Err(Error::config("lambda1 must be > 0"));
        }
        if !(self.lambda2.is_finite() && self.lambda2 >= 0.0) {
            return Err(Error::config("lambda2 must be >= 0"));
        }
        mkl::check_p(self.p)?;
        if self.kernels.is_empty() {
            return Err(Error::config("at least one kernel is required"));
        }
        for k in &self.kernels {
            k.validate()?;
        }
        if self.max_outer == 0 {
            return Err(Error::config("max_outer must be >= 1"));
        }
        if !(self.outer_tol.is_finite() && self.outer_tol >= 0.0) {
            return Err(Error::config("outer tolerance must be >= 0"));
        }
        if !(self.svm_tol.is_finite() && self.svm_tol > 0.0) {
            return Err(Error::config("svm tolerance must be > 0"));
        }
        if self.svm_max_passes == 0 {
            return Err(Error::config("svm max passes must be >= 1"));
        }
        if !(self.psd_step.is_finite() && self.psd_step > 0.0) {
            return Err(Error::config("codeword step length must be > 0"));
        }
        if self.psd_iters == 0 {
            return Err(Error::config("codeword iterations must be >= 1"));
        }
        Ok(())
    }
}

/// Per-feature affine map applied before kernel evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.sum() / n).collect();
        let scale = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(c, m)| {
                let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply_row(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// The decision function of one bit: `f(x) = sum_j alpha_j y_j k(sv_j, x) + beta`
/// with `k = sum_m theta_m k_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitFunction {
    /// Rows of [`HashModel::support_features`], ascending.
    pub support: Vec<usize>,
    pub alpha: Vec<f64>,
    /// SVM labels (`±1`) of the support samples.
    pub labels: Vec<f64>,
    pub beta: f64,
    /// Kernel weights of this decision function.
    pub theta: Vec<f64>,
}

impl BitFunction {
    fn coef(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.labels).map(|(a, y)| a * y).collect()
    }
}

/// Everything needed to hash and classify new samples.
#[derive(Clone, Debug, PartialEq)]
pub struct HashModel {
    pub config: TrainConfig,
    pub standardizer: Option<Standardizer>,
    /// Training rows (after standardization) referenced by any bit.
    pub support_features: Array2<f64>,
    pub bits: Vec<BitFunction>,
    pub codebook: Codebook,
    /// Surrogate distortion before training and after every outer iteration.
    pub loss_trace: Vec<f64>,
}

impl HashModel {
    pub fn dim(&self) -> usize {
        self.support_features.ncols()
    }

    /// Real-valued per-bit decisions `f(x)`.
    pub fn decision(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::input(format!(
                "dimension mismatch: model expects {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        let owned;
        let x = match &self.standardizer {
            Some(s) => {
                owned = ndarray::Array1::from(s.apply_row(x));
                owned.view()
            }
            None => x,
        };
        let kvals = cross_kernels(&self.config.kernels, self.support_features.view(), x)?;
        Ok(self
            .bits
            .iter()
            .map(|bit| {
                let combined = bit.support.iter().map(|&j| {
                    let mut acc = 0.0;
                    for (m, &t) in bit.theta.iter().enumerate() {
                        if t != 0.0 {
                            acc += t * kvals[[m, j]];
                        }
                    }
                    acc
                });
                svm::expand(&bit.coef(), combined, bit.beta)
            })
            .collect())
    }

    /// Hash code `sign f(x)` with `sign(0) = +1`.
    pub fn encode(&self, x: ArrayView1<'_, f64>) -> Result<Vec<i8>> {
        Ok(self.decision(x)?.into_iter().map(sign).collect())
    }

    /// Encodes every row; rows are processed in parallel, output order is row order.
    pub fn encode_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Vec<i8>>> {
        (0..x.nrows())
            .into_par_iter()
            .map(|i| self.encode(x.row(i)))
            .collect()
    }

    /// Class of the nearest quantized codeword in Hamming distance; ties go
    /// to the smallest `(class, slot)`.
    pub fn classify(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        let code = self.encode(x)?;
        Ok(self.nearest_class(&code))
    }

    pub fn classify_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(self
            .encode_batch(x)?
            .iter()
            .map(|c| self.nearest_class(c))
            .collect())
    }

    pub fn nearest_class(&self, code: &[i8]) -> usize {
        let q = self.codebook.quantized();
        let (classes, slots, _) = q.dim();
        let mut best = (usize::MAX, 0);
        for c in 0..classes {
            for s in 0..slots {
                let cw = q.slice(ndarray::s![c, s, ..]);
                let d = hamming_unchecked(code, cw.iter().copied());
                if d < best.0 {
                    best = (d, c);
                }
            }
        }
        best.1
    }
}

/// Training output beyond the model itself.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: HashModel,
    /// Decisions on the training rows at the end of training.
    pub decisions: DecisionMatrix,
    /// Optimal assignment for the final model.
    pub assignment: Assignment,
    /// Outer iterations run.
    pub iterations: usize,
    /// Per-iteration count of bits whose new SVM was kept.
    pub accepted_bits: Vec<usize>,
    /// Per-iteration count of bits whose SVM problem was degenerate.
    pub degenerate_bits: Vec<usize>,
}

#[derive(Clone, Debug)]
struct BitState {
    alpha: Vec<f64>,
    labels: Vec<f64>,
    beta: f64,
    theta: Vec<f64>,
}

impl BitState {
    fn zero(n: usize, theta: Vec<f64>) -> Self {
        BitState {
            alpha: vec![0.0; n],
            labels: vec![1.0; n],
            beta: 0.0,
            theta,
        }
    }

    fn support(&self) -> Vec<usize> {
        (0..self.alpha.len()).filter(|&i| self.alpha[i] > 0.0).collect()
    }
}

struct BitStep {
    state: BitState,
    column: Vec<f64>,
    next_theta: Vec<f64>,
    accepted: bool,
    degenerate: bool,
}

fn hinge_sum(labels: &[f64], weights: &[f64], f: impl Iterator<Item = f64>) -> f64 {
    labels
        .iter()
        .zip(weights)
        .zip(f)
        .map(|((y, w), v)| w * (1.0 - y * v).max(0.0))
        .sum()
}

fn column_from_gram(kb: &Array2<f64>, support: &[usize], coef: &[f64], beta: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| svm::expand(coef, support.iter().map(|&j| kb[[j, i]]), beta))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn bit_step(
    b: usize,
    config: &TrainConfig,
    bank: &KernelBank,
    quantized: &ndarray::Array3<i8>,
    assignment: &Assignment,
    weights: &[f64],
    prev: &BitState,
    prev_column: ArrayView1<'_, f64>,
    theta: &MklWeights,
) -> Result<BitStep> {
    let n = assignment.len();
    let labels: Vec<f64> = (0..n)
        .map(|i| {
            let (c, s) = assignment.get(i);
            f64::from(quantized[[c, s, b]])
        })
        .collect();
    let cost: Vec<f64> = weights.iter().map(|w| w * config.lambda1).collect();
    let kb = combined_kernel(bank, &theta.theta)?;
    let problem = SvmProblem::new(kb.view(), &labels, &cost)?;
    let sol = svm::solve(&problem, config.svm_tol, config.svm_max_passes)?;
    let degenerate = sol.status == SolveStatus::Degenerate;
    let coef = sol.dual_coef(&labels);
    let column = column_from_gram(&kb, &sol.support, &coef, sol.beta, n);
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite decision values for bit {b}")));
    }

    let new_hinge = hinge_sum(&labels, weights, column.iter().copied());
    let old_hinge = hinge_sum(&labels, weights, prev_column.iter().copied());
    let (state, column, accepted) = if new_hinge <= old_hinge {
        let state = BitState {
            alpha: sol.alpha,
            labels,
            beta: sol.beta,
            theta: theta.theta.clone(),
        };
        (state, column, true)
    } else {
        (prev.clone(), prev_column.to_vec(), false)
    };

    let used = MklWeights {
        theta: state.theta.clone(),
        p: config.p,
    };
    let norms = mkl::rkhs_norms(&state.alpha, &state.labels, &used, bank)?;
    let (next, _) = mkl::update_theta(&norms, config.p)?;
    Ok(BitStep {
        state,
        column,
        next_theta: next.theta,
        accepted,
        degenerate,
    })
}

fn initial_assignment(labels: &[Option<usize>], classes: usize, rng: &mut ChaCha8Rng) -> Assignment {
    let class = labels
        .iter()
        .map(|l| match l {
            Some(c) => *c,
            None => rng.random_range(0..classes),
        })
        .collect();
    Assignment {
        class,
        slot: vec![0; labels.len()],
    }
}

fn check_data(config: &TrainConfig, data: &LabeledDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::input("empty dataset"));
    }
    if data.dim() == 0 {
        return Err(Error::input("dataset has no features"));
    }
    if data.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite feature value"));
    }
    if let Some(bad) = data.labels.iter().flatten().find(|&&l| l >= config.classes) {
        return Err(Error::input(format!(
            "label {bad} out of range for {} classes",
            config.classes
        )));
    }
    if data.labels.iter().any(Option::is_some) && data.len() < config.classes {
        return Err(Error::input(format!(
            "{} samples cannot cover {} classes",
            data.len(),
            config.classes
        )));
    }
    Ok(())
}

/// Trains a hash model.
pub fn train(config: &TrainConfig, data: &LabeledDataset) -> Result<HashModel> {
    Ok(train_detailed(config, data)?.model)
}

/// Trains on the labeled data together with unlabeled test features, which
/// join the unlabeled index set.
pub fn transductive_train(
    config: &TrainConfig,
    labeled: &LabeledDataset,
    unlabeled: ArrayView2<'_, f64>,
) -> Result<HashModel> {
    Ok(transductive_train_detailed(config, labeled, unlabeled)?.model)
}

pub fn transductive_train_detailed(
    config: &TrainConfig,
    labeled: &LabeledDataset,
    unlabeled: ArrayView2<'_, f64>,
) -> Result<TrainOutcome> {
    let union = labeled.with_unlabeled(unlabeled)?;
    train_detailed(config, &union)
}

/// Trains a hash model and returns the training-set decisions and
/// diagnostics alongside it.
pub fn train_detailed(config: &TrainConfig, data: &LabeledDataset) -> Result<TrainOutcome> {
    config.validate()?;
    check_data(config, data)?;

    let n = data.len();
    let bits = config.bits;
    let standardizer = config.standardize.then(|| Standardizer::fit(data.features.view()));
    let features = match &standardizer {
        Some(s) => s.apply(data.features.view()),
        None => data.features.clone(),
    };
    let bank = build_bank(&config.kernels, features.view())?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let codebook_seed: u64 = rng.random();
    let mut codebook = Codebook::random(config.classes, config.codewords, bits, codebook_seed)?;
    let uniform = MklWeights::uniform(bank.len(), config.p)?;
    let mut next_theta = vec![uniform.theta.clone(); bits];
    let mut states: Vec<BitState> = (0..bits).map(|_| BitState::zero(n, uniform.theta.clone())).collect();
    let mut decisions = DecisionMatrix::zeros(n, bits);

    let mut assignment = initial_assignment(&data.labels, config.classes, &mut rng);
    let labeled = data.labeled_indices();
    let warm_start = !labeled.is_empty() && labeled.len() < n;
    let all_rows = vec![1.0; n];
    let labeled_rows: Vec<f64> = data.labels.iter().map(|l| if l.is_some() { 1.0 } else { 0.0 }).collect();
    let mut trace = vec![codebook::surrogate_loss(&decisions, &codebook, &assignment)?];
    let mut accepted_bits = Vec::new();
    let mut degenerate_bits = Vec::new();
    let mut iterations = 0;

    for t in 1..=config.max_outer {
        iterations = t;
        if t > 1 {
            assignment = codebook::assign(&decisions, &codebook, &data.labels)?;
        }

        let warm = warm_start && t == 1;
        let weights = if warm { &labeled_rows } else { &all_rows };
        let quantized = codebook.quantized();
        let steps: Vec<BitStep> = (0..bits)
            .into_par_iter()
            .map(|b| {
                let theta = MklWeights {
                    theta: next_theta[b].clone(),
                    p: config.p,
                };
                bit_step(
                    b,
                    config,
                    &bank,
                    &quantized,
                    &assignment,
                    weights,
                    &states[b],
                    decisions.values.column(b),
                    &theta,
                )
            })
            .collect::<Result<_>>()?;

        let mut accepted = 0;
        let mut degenerate = 0;
        for (b, step) in steps.into_iter().enumerate() {
            accepted += usize::from(step.accepted);
            degenerate += usize::from(step.degenerate);
            decisions
                .values
                .column_mut(b)
                .iter_mut()
                .zip(&step.column)
                .for_each(|(d, v)| *d = *v);
            states[b] = step.state;
            next_theta[b] = step.next_theta;
        }
        accepted_bits.push(accepted);
        degenerate_bits.push(degenerate);

        let (step_f, step_a) = if warm {
            let f = DecisionMatrix::new(decisions.values.select(Axis(0), &labeled))?;
            let a = Assignment {
                class: labeled.iter().map(|&i| assignment.class[i]).collect(),
                slot: labeled.iter().map(|&i| assignment.slot[i]).collect(),
            };
            (f, a)
        } else {
            (decisions.clone(), assignment.clone())
        };
        let candidate = if config.codewords == 1 {
            let (mut cb, empty) =
                codebook::optimize_codewords_single(&step_f, &step_a, config.classes, bits)?;
            for c in empty {
                cb.mu.index_axis_mut(Axis(0), c).assign(&codebook.mu.index_axis(Axis(0), c));
            }
            cb
        } else {
            codebook::optimize_codewords(
                &step_f,
                &step_a,
                &codebook,
                config.lambda2,
                config.psd_step,
                config.psd_iters,
            )?
            .codebook
        };
        let before = codebook::surrogate_loss(&step_f, &codebook, &step_a)?;
        let after = codebook::surrogate_loss(&step_f, &candidate, &step_a)?;
        if after <= before {
            codebook = candidate;
        }

        let fresh = codebook::assign(&decisions, &codebook, &data.labels)?;
        let loss = codebook::surrogate_loss(&decisions, &codebook, &fresh)?;
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(loss);
        assignment = fresh;
        if (prev - loss).abs() / prev.max(1.0) < config.outer_tol {
            break;
        }
    }

    let final_assignment = codebook::assign(&decisions, &codebook, &data.labels)?;
    let model = assemble_model(config, standardizer, &features, &states, codebook, trace);
    Ok(TrainOutcome {
        model,
        decisions,
        assignment: final_assignment,
        iterations,
        accepted_bits,
        degenerate_bits,
    })
}

fn assemble_model(
    config: &TrainConfig,
    standardizer: Option<Standardizer>,
    features: &Array2<f64>,
    states: &[BitState],
    codebook: Codebook,
    loss_trace: Vec<f64>,
) -> HashModel {
    let n = features.nrows();
    let mut used = vec![false; n];
    for s in states {
        for i in s.support() {
            used[i] = true;
        }
    }
    let union: Vec<usize> = (0..n).filter(|&i| used[i]).collect();
    let mut position = vec![usize::MAX; n];
    for (p, &i) in union.iter().enumerate() {
        position[i] = p;
    }
    let support_features = features.select(Axis(0), &union);
    let bits = states
        .iter()
        .map(|s| {
            let support = s.support();
            BitFunction {
                alpha: support.iter().map(|&i| s.alpha[i]).collect(),
                labels: support.iter().map(|&i| s.labels[i]).collect(),
                support: support.iter().map(|&i| position[i]).collect(),
                beta: s.beta,
                theta: s.theta.clone(),
            }
        })
        .collect();
    HashModel {
        config: config.clone(),
        standardizer,
        support_features,
        bits,
        codebook,
        loss_trace,
    }
}
