//! Codewords, sample-to-codeword assignment and the codeword block update.
//!
//! Codewords are kept relaxed (continuous) inside the proximal subgradient
//! update; everything else (assignment, SVM labels, the surrogate loss and
//! Hamming evaluation) sees the sign-quantized view with `sign(0) = +1`.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{sign, Error, Result};

/// Maximum number of step-halving retries in one proximal iteration.
pub const MAX_HALVINGS: usize = 5;
pub const DEFAULT_PSD_STEP: f64 = 0.1;
pub const DEFAULT_PSD_ITERS: usize = 50;

/// `C x S` relaxed codewords of length `B`, stored as a `(C, S, B)` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub mu: Array3<f64>,
}

impl Codebook {
    pub fn new(mu: Array3<f64>) -> Result<Self> {
        let (c, s, b) = mu.dim();
        if c == 0 || s == 0 || b == 0 {
            return Err(Error::input("codebook dimensions must be positive"));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite codeword entry"));
        }
        Ok(Codebook { mu })
    }

    /// Seeded uniform `±1` codewords, resampled until codewords of different
    /// classes quantize to distinct codes.
    pub fn random(classes: usize, slots: usize, bits: usize, seed: u64) -> Result<Self> {
        if classes == 0 || slots == 0 || bits == 0 {
            return Err(Error::input("codebook dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mu = Array3::from_shape_fn((classes, slots, bits), |_| {
            if rng.random_bool(0.5) {
                1.0
            } else {
                -1.0
            }
        });
        let collides = |mu: &Array3<f64>, c: usize, s: usize| {
            (0..classes).filter(|&o| o != c).any(|o| {
                (0..slots).any(|t| {
                    (0..bits).all(|b| sign(mu[[c, s, b]]) == sign(mu[[o, t, b]]))
                })
            })
        };
        let budget = 100 * classes * slots;
        let mut attempts = 0;
        'outer: loop {
            for c in 0..classes {
                for s in 0..slots {
                    if collides(&mu, c, s) {
                        if attempts >= budget {
                            break 'outer;
                        }
                        attempts += 1;
                        for b in 0..bits {
                            mu[[c, s, b]] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        }
                        continue 'outer;
                    }
                }
            }
            return Ok(Codebook { mu });
        }
        // fall back to binary patterns of the flat index; distinct whenever C*S <= 2^B
        for c in 0..classes {
            for s in 0..slots {
                if collides(&mu, c, s) {
                    let idx = c * slots + s;
                    for b in 0..bits {
                        let bit = if b < usize::BITS as usize { (idx >> b) & 1 } else { 0 };
                        mu[[c, s, b]] = if bit == 1 { -1.0 } else { 1.0 };
                    }
                }
            }
        }
        Ok(Codebook { mu })
    }

    pub fn classes(&self) -> usize {
        self.mu.dim().0
    }

    pub fn slots(&self) -> usize {
        self.mu.dim().1
    }

    pub fn bits(&self) -> usize {
        self.mu.dim().2
    }

    pub fn codeword(&self, c: usize, s: usize) -> ArrayView1<'_, f64> {
        self.mu.index_axis(Axis(0), c).index_axis_move(Axis(0), s)
    }

    pub fn quantized_codeword(&self, c: usize, s: usize) -> Vec<i8> {
        self.codeword(c, s).iter().map(|&v| sign(v)).collect()
    }

    /// The sign-quantized codebook.
    pub fn quantized(&self) -> Array3<i8> {
        self.mu.mapv(sign)
    }

    /// Euclidean distances between every pair of slots of every class.
    pub fn within_class_distances(&self) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for c in 0..self.classes() {
            for i in 0..self.slots() {
                for j in i + 1..self.slots() {
                    let d = l2_dist(self.codeword(c, i), self.codeword(c, j));
                    out.push((c, i, j, d));
                }
            }
        }
        out
    }
}

/// Per-sample selected `(class, slot)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub class: Vec<usize>,
    pub slot: Vec<usize>,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class.is_empty()
    }

    pub fn get(&self, n: usize) -> (usize, usize) {
        (self.class[n], self.slot[n])
    }

    fn check(&self, n: usize, codebook: &Codebook) -> Result<()> {
        if self.class.len() != n || self.slot.len() != n {
            return Err(Error::input("assignment length differs from sample count"));
        }
        if self.class.iter().any(|&c| c >= codebook.classes())
            || self.slot.iter().any(|&s| s >= codebook.slots())
        {
            return Err(Error::input("assignment refers to a missing codeword"));
        }
        Ok(())
    }
}

/// Real-valued per-bit decisions, `values[[n, b]] = f_b(x_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionMatrix {
    pub values: Array2<f64>,
}

impl DecisionMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite decision value"));
        }
        Ok(DecisionMatrix { values })
    }

    pub fn zeros(n: usize, bits: usize) -> Self {
        DecisionMatrix {
            values: Array2::zeros((n, bits)),
        }
    }

    pub fn samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn bits(&self) -> usize {
        self.values.ncols()
    }

    pub fn codes(&self) -> Vec<Vec<i8>> {
        self.values
            .axis_iter(Axis(0))
            .map(|r| r.iter().map(|&v| sign(v)).collect())
            .collect()
    }
}

fn l2_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[inline]
fn hinge(u: f64) -> f64 {
    u.max(0.0)
}

fn dbar_unchecked(f: ArrayView1<'_, f64>, mu: impl Iterator<Item = f64>) -> f64 {
    f.iter().zip(mu).map(|(fb, m)| hinge(1.0 - m * fb)).sum()
}

/// Hinge surrogate of the Hamming distance: `sum_b [1 - mu_b f_b]_+`.
pub fn dbar(f: &[f64], mu: &[i8]) -> Result<f64> {
    if f.len() != mu.len() {
        return Err(Error::input(format!(
            "length mismatch: {} decisions vs {} code bits",
            f.len(),
            mu.len()
        )));
    }
    Ok(f.iter()
        .zip(mu)
        .map(|(fb, &m)| hinge(1.0 - f64::from(m) * fb))
        .sum())
}

fn check_shapes(f: &DecisionMatrix, codebook: &Codebook) -> Result<()> {
    if f.bits() != codebook.bits() {
        return Err(Error::input(format!(
            "decision matrix has {} bits, codebook has {}",
            f.bits(),
            codebook.bits()
        )));
    }
    Ok(())
}

/// Selects, per sample, the codeword with the smallest surrogate distance:
/// within the labeled class for labeled samples, over all codewords for
/// unlabeled ones. Ties go to the smallest `(class, slot)`.
pub fn assign(f: &DecisionMatrix, codebook: &Codebook, labels: &[Option<usize>]) -> Result<Assignment> {
    check_shapes(f, codebook)?;
    if labels.len() != f.samples() {
        return Err(Error::input("label count differs from decision rows"));
    }
    let q = codebook.quantized().mapv(f64::from);
    let (classes, slots, _) = q.dim();
    let mut class = Vec::with_capacity(labels.len());
    let mut slot = Vec::with_capacity(labels.len());
    for (n, label) in labels.iter().enumerate() {
        let row = f.values.row(n);
        let range = match *label {
            Some(l) if l >= classes => {
                return Err(Error::input(format!(
                    "label {l} out of range for {classes} classes"
                )))
            }
            Some(l) => l..l + 1,
            None => 0..classes,
        };
        let mut best = (f64::INFINITY, 0, 0);
        for c in range {
            for s in 0..slots {
                let d = dbar_unchecked(row, q.slice(ndarray::s![c, s, ..]).iter().copied());
                if d < best.0 {
                    best = (d, c, s);
                }
            }
        }
        class.push(best.1);
        slot.push(best.2);
    }
    Ok(Assignment { class, slot })
}

/// Surrogate distortion: sum of `dbar` between each sample's decisions and
/// its assigned quantized codeword.
pub fn surrogate_loss(f: &DecisionMatrix, codebook: &Codebook, assignment: &Assignment) -> Result<f64> {
    check_shapes(f, codebook)?;
    assignment.check(f.samples(), codebook)?;
    let q = codebook.quantized().mapv(f64::from);
    Ok((0..f.samples())
        .map(|n| {
            let (c, s) = assignment.get(n);
            dbar_unchecked(f.values.row(n), q.slice(ndarray::s![c, s, ..]).iter().copied())
        })
        .sum())
}

/// Hamming distortion between the hash codes and the assigned quantized codewords.
pub fn distortion(f: &DecisionMatrix, codebook: &Codebook, assignment: &Assignment) -> Result<usize> {
    check_shapes(f, codebook)?;
    assignment.check(f.samples(), codebook)?;
    Ok((0..f.samples())
        .map(|n| {
            let (c, s) = assignment.get(n);
            f.values
                .row(n)
                .iter()
                .zip(codebook.codeword(c, s))
                .filter(|(fv, m)| sign(**fv) != sign(**m))
                .count()
        })
        .sum())
}

/// Closed-form proximal operator of `eta * |mu_i - mu_j|_2` on one pair of
/// blocks: both blocks move towards each other by `eta` along their
/// difference, or meet at the midpoint when `eta >= |v_i - v_j| / 2`.
pub fn prox_pair(vi: &[f64], vj: &[f64], eta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::input("prox parameter must be > 0"));
    }
    if vi.len() != vj.len() {
        return Err(Error::input("prox blocks differ in length"));
    }
    Ok(prox_pair_unchecked(vi, vj, eta))
}

fn prox_pair_unchecked(vi: &[f64], vj: &[f64], eta: f64) -> (Vec<f64>, Vec<f64>) {
    let dist = vi
        .iter()
        .zip(vj)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let a2 = if dist > 0.0 { (eta / dist).min(0.5) } else { 0.5 };
    let a1 = 1.0 - a2;
    let mi = vi.iter().zip(vj).map(|(a, b)| a1 * a + a2 * b).collect();
    let mj = vi.iter().zip(vj).map(|(a, b)| a2 * a + a1 * b).collect();
    (mi, mj)
}

/// Subgradient of the relaxed hinge term with respect to every codeword
/// entry; zero at kinks. Shape `(C, S, B)`.
pub fn hinge_subgradient(f: &DecisionMatrix, assignment: &Assignment, codebook: &Codebook) -> Result<Array3<f64>> {
    check_shapes(f, codebook)?;
    assignment.check(f.samples(), codebook)?;
    let mut g = Array3::zeros(codebook.mu.dim());
    for n in 0..f.samples() {
        let (c, s) = assignment.get(n);
        for (b, &fb) in f.values.row(n).iter().enumerate() {
            if 1.0 - codebook.mu[[c, s, b]] * fb > 0.0 {
                g[[c, s, b]] -= fb;
            }
        }
    }
    Ok(g)
}

/// Relaxed codeword objective: hinge term with continuous codewords plus
/// `lambda2` times the sum of within-class pairwise distances.
pub fn codeword_objective(f: &DecisionMatrix, assignment: &Assignment, codebook: &Codebook, lambda2: f64) -> Result<f64> {
    check_shapes(f, codebook)?;
    assignment.check(f.samples(), codebook)?;
    let mut total = 0.0;
    for c in 0..codebook.classes() {
        let rows: Vec<(usize, ArrayView1<'_, f64>)> = (0..f.samples())
            .filter(|&n| assignment.class[n] == c)
            .map(|n| (assignment.slot[n], f.values.row(n)))
            .collect();
        total += class_objective(&rows, codebook.mu.index_axis(Axis(0), c), lambda2);
    }
    Ok(total)
}

fn class_objective(rows: &[(usize, ArrayView1<'_, f64>)], mu: ArrayView2<'_, f64>, lambda2: f64) -> f64 {
    let hinge_term: f64 = rows
        .iter()
        .map(|(s, f)| dbar_unchecked(*f, mu.row(*s).iter().copied()))
        .sum();
    let slots = mu.nrows();
    let mut reg = 0.0;
    for i in 0..slots {
        for j in i + 1..slots {
            reg += l2_dist(mu.row(i), mu.row(j));
        }
    }
    hinge_term + lambda2 * reg
}

/// Averages the pairwise prox over all `S(S-1)/2` slot pairs; a block not
/// in a pair contributes its input value to that pair's output.
fn aggregated_prox(z: &Array2<f64>, eta: f64) -> Array2<f64> {
    let slots = z.nrows();
    if slots < 2 {
        return z.clone();
    }
    let pairs = slots * (slots - 1) / 2;
    let mut acc = z.mapv(|v| v * (pairs - (slots - 1)) as f64);
    for i in 0..slots {
        for j in i + 1..slots {
            let zi = z.row(i).to_vec();
            let zj = z.row(j).to_vec();
            let (mi, mj) = prox_pair_unchecked(&zi, &zj, eta);
            acc.row_mut(i).iter_mut().zip(&mi).for_each(|(a, v)| *a += v);
            acc.row_mut(j).iter_mut().zip(&mj).for_each(|(a, v)| *a += v);
        }
    }
    acc.mapv_inplace(|v| v / pairs as f64);
    acc
}

/// Result of one codeword block update.
#[derive(Clone, Debug)]
pub struct PsdOutcome {
    pub codebook: Codebook,
    pub objective_before: f64,
    pub objective_after: f64,
    /// Iterations that were accepted.
    pub accepted_steps: usize,
    /// Total number of step halvings performed.
    pub halvings: usize,
}

fn psd_class(
    rows: &[(usize, ArrayView1<'_, f64>)],
    mu0: Array2<f64>,
    lambda2: f64,
    eta: f64,
    iters: usize,
) -> (Array2<f64>, f64, f64, usize, usize) {
    let obj = |m: &Array2<f64>| class_objective(rows, m.view(), lambda2);
    let obj0 = obj(&mu0);
    let mut incumbent = mu0.clone();
    let mut incumbent_obj = obj0;
    let mut x = mu0;
    let mut accepted = 0;
    let mut halvings = 0;

    for k in 1..=iters {
        let mut g = Array2::<f64>::zeros(x.dim());
        for (s, f) in rows {
            for (b, &fb) in f.iter().enumerate() {
                if 1.0 - x[[*s, b]] * fb > 0.0 {
                    g[[*s, b]] -= fb;
                }
            }
        }
        let mut step = eta;
        let mut next = None;
        for attempt in 0..=MAX_HALVINGS {
            if attempt > 0 {
                step /= 2.0;
                halvings += 1;
            }
            let z = &x - &(&g * step);
            let y = aggregated_prox(&z, step * lambda2);
            let oy = obj(&y);
            if oy <= incumbent_obj {
                next = Some((y, oy));
                break;
            }
        }
        let Some((y, oy)) = next else {
            break;
        };
        accepted += 1;
        let momentum = (k as f64 - 1.0) / (k as f64 + 2.0);
        x = &y + &((&y - &incumbent) * momentum);
        incumbent = y;
        incumbent_obj = oy;
    }
    (incumbent, obj0, incumbent_obj, accepted, halvings)
}

/// Accelerated proximal subgradient descent on the relaxed codewords of each
/// class: subgradient step on the hinge term, averaged pairwise prox of the
/// within-class distance regularizer with parameter `step * lambda2`, then
/// Nesterov momentum `(k-1)/(k+2)`. A step that would increase the objective
/// is halved up to [`MAX_HALVINGS`] times, after which the incumbent is kept
/// and the class stops. Classes without assigned samples are left unchanged.
pub fn optimize_codewords(
    f: &DecisionMatrix,
    assignment: &Assignment,
    codebook: &Codebook,
    lambda2: f64,
    eta: f64,
    iters: usize,
) -> Result<PsdOutcome> {
    check_shapes(f, codebook)?;
    assignment.check(f.samples(), codebook)?;
    if !(lambda2.is_finite() && lambda2 >= 0.0) {
        return Err(Error::config("lambda2 must be finite and >= 0"));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::config("codeword step length must be > 0"));
    }
    if iters == 0 {
        return Err(Error::config("codeword iterations must be >= 1"));
    }
    let mut mu = codebook.mu.clone();
    let mut before = 0.0;
    let mut after = 0.0;
    let mut accepted_steps = 0;
    let mut halvings = 0;
    for c in 0..codebook.classes() {
        let rows: Vec<(usize, ArrayView1<'_, f64>)> = (0..f.samples())
            .filter(|&n| assignment.class[n] == c)
            .map(|n| (assignment.slot[n], f.values.row(n)))
            .collect();
        let mu_c = codebook.mu.index_axis(Axis(0), c).to_owned();
        if rows.is_empty() {
            let o = class_objective(&rows, mu_c.view(), lambda2);
            before += o;
            after += o;
            continue;
        }
        let (out, o0, o1, acc, halv) = psd_class(&rows, mu_c, lambda2, eta, iters);
        mu.index_axis_mut(Axis(0), c).assign(&out);
        before += o0;
        after += o1;
        accepted_steps += acc;
        halvings += halv;
    }
    Ok(PsdOutcome {
        codebook: Codebook { mu },
        objective_before: before,
        objective_after: after,
        accepted_steps,
        halvings,
    })
}

/// Exact codeword update for one codeword per class: each bit of each class
/// codeword is the sign in `{-1, +1}` with the smaller hinge loss over the
/// samples assigned to that class (ties to `+1`). Classes with no samples get
/// the all `+1` codeword and are reported in the second return value.
pub fn optimize_codewords_single(
    f: &DecisionMatrix,
    assignment: &Assignment,
    classes: usize,
    bits: usize,
) -> Result<(Codebook, Vec<usize>)> {
    if f.bits() != bits {
        return Err(Error::input("decision matrix bit count mismatch"));
    }
    if assignment.len() != f.samples() {
        return Err(Error::input("assignment length differs from sample count"));
    }
    if assignment.slot.iter().any(|&s| s != 0) || assignment.class.iter().any(|&c| c >= classes) {
        return Err(Error::input("assignment is not a single-codeword assignment"));
    }
    if classes == 0 || bits == 0 {
        return Err(Error::input("codebook dimensions must be positive"));
    }
    let mut loss_pos = Array2::<f64>::zeros((classes, bits));
    let mut loss_neg = Array2::<f64>::zeros((classes, bits));
    let mut count = vec![0usize; classes];
    for n in 0..f.samples() {
        let c = assignment.class[n];
        count[c] += 1;
        for (b, &fb) in f.values.row(n).iter().enumerate() {
            loss_pos[[c, b]] += hinge(1.0 - fb);
            loss_neg[[c, b]] += hinge(1.0 + fb);
        }
    }
    let mu = Array3::from_shape_fn((classes, 1, bits), |(c, _, b)| {
        if loss_neg[[c, b]] < loss_pos[[c, b]] {
            -1.0
        } else {
            1.0
        }
    });
    let empty = (0..classes).filter(|&c| count[c] == 0).collect();
    Ok((Codebook { mu }, empty))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn dm(v: Array2<f64>) -> DecisionMatrix {
        DecisionMatrix::new(v).unwrap()
    }

    #[test]
    fn dbar_examples() {
        assert_eq!(dbar(&[2.0, 2.0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(dbar(&[0.0, 0.0], &[-1, 1]).unwrap(), 2.0);
        assert_eq!(dbar(&[0.5, -3.0], &[1, 1]).unwrap(), 4.5);
        assert!(dbar(&[1.0], &[1, 1]).is_err());
    }

    #[test]
    fn assign_single_slot_labeled() {
        let f = dm(array![[-5.0, 3.0]]);
        let cb = Codebook::new(array![[[1.0, 1.0]], [[-1.0, 1.0]]]).unwrap();
        let a = assign(&f, &cb, &[Some(0)]).unwrap();
        assert_eq!(a.get(0), (0, 0));
    }

    #[test]
    fn assign_unlabeled_picks_closest_class() {
        let f = dm(array![[2.0, 2.0]]);
        let cb = Codebook::new(array![[[-1.0, -1.0]], [[1.0, 1.0]]]).unwrap();
        let a = assign(&f, &cb, &[None]).unwrap();
        assert_eq!(a.get(0), (1, 0));
    }

    #[test]
    fn assign_labeled_best_slot() {
        let f = dm(array![[0.5, -0.2]]);
        let cb = Codebook::new(array![[[1.0, 1.0], [1.0, -1.0]]]).unwrap();
        let a = assign(&f, &cb, &[Some(0)]).unwrap();
        assert_eq!(a.get(0), (0, 1));
    }

    #[test]
    fn assign_ties_go_to_smallest_index() {
        let f = dm(array![[0.0, 0.0]]);
        let cb = Codebook::new(array![[[1.0, 1.0]], [[-1.0, -1.0]], [[1.0, -1.0]]]).unwrap();
        assert_eq!(assign(&f, &cb, &[None]).unwrap().get(0), (0, 0));
        assert!(assign(&f, &cb, &[Some(3)]).is_err());
    }

    #[test]
    fn surrogate_loss_examples() {
        let cb = Codebook::new(array![[[1.0, 1.0]]]).unwrap();
        let one = Assignment { class: vec![0], slot: vec![0] };
        assert_eq!(surrogate_loss(&dm(array![[2.0, 3.0]]), &cb, &one).unwrap(), 0.0);
        assert_eq!(surrogate_loss(&dm(array![[0.0, 0.0]]), &cb, &one).unwrap(), 2.0);
        let two = Assignment { class: vec![0, 0], slot: vec![0, 0] };
        let f = dm(array![[0.5, -3.0], [2.0, 2.0]]);
        assert_eq!(surrogate_loss(&f, &cb, &two).unwrap(), 4.5);
        assert!(distortion(&f, &cb, &two).unwrap() as f64 <= 4.5);
    }

    #[test]
    fn prox_pair_examples() {
        let (a, b) = prox_pair(&[1.0, 1.0], &[1.0, 1.0], 0.3).unwrap();
        assert_eq!(a, vec![1.0, 1.0]);
        assert_eq!(b, vec![1.0, 1.0]);

        let (a, b) = prox_pair(&[1.0, 0.0], &[0.0, 1.0], 10.0).unwrap();
        assert_eq!(a, vec![0.5, 0.5]);
        assert_eq!(b, vec![0.5, 0.5]);

        let (a, b) = prox_pair(&[1.0, 0.0], &[0.0, 1.0], 0.2).unwrap();
        let a2 = 0.2 / 2f64.sqrt();
        assert_abs_diff_eq!(a[0], 1.0 - a2, epsilon = 1e-15);
        assert_abs_diff_eq!(a[1], a2, epsilon = 1e-15);
        assert_abs_diff_eq!(a[0], 0.85858, epsilon = 1e-5);
        assert_abs_diff_eq!(b[0], 0.14142, epsilon = 1e-5);
        assert_abs_diff_eq!(b[1], 0.85858, epsilon = 1e-5);

        assert!(prox_pair(&[1.0], &[0.0], 0.0).is_err());
        assert!(prox_pair(&[1.0], &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn subgradient_examples() {
        let cb = Codebook::new(array![[[1.0], [1.0]]]).unwrap();
        let a = Assignment { class: vec![0], slot: vec![0] };
        let g = hinge_subgradient(&dm(array![[2.0]]), &a, &cb).unwrap();
        assert_eq!(g[[0, 0, 0]], 0.0);
        assert_eq!(g[[0, 1, 0]], 0.0);
        let g = hinge_subgradient(&dm(array![[0.5]]), &a, &cb).unwrap();
        assert_eq!(g[[0, 0, 0]], -0.5);

        // finite difference of the hinge term
        let h = 1e-5;
        let loss = |m: f64| (1.0 - m * 0.5f64).max(0.0);
        let fd = (loss(1.0 + h) - loss(1.0 - h)) / (2.0 * h);
        assert_abs_diff_eq!(fd, -0.5, epsilon = 1e-9);
    }

    #[test]
    fn single_slot_psd_has_no_prox() {
        let cb = Codebook::new(array![[[0.2, -0.3]]]).unwrap();
        let a = Assignment { class: vec![0], slot: vec![0] };
        let f = dm(array![[0.5, 0.5]]);
        let out = optimize_codewords(&f, &a, &cb, 1e6, 0.1, 1).unwrap();
        // plain subgradient step: mu - 0.1 * (-0.5)
        assert_abs_diff_eq!(out.codebook.mu[[0, 0, 0]], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(out.codebook.mu[[0, 0, 1]], -0.25, epsilon = 1e-15);
    }

    #[test]
    fn huge_prox_collapses_pair_to_mean() {
        let cb = Codebook::new(array![[[1.0, -1.0], [-1.0, 0.5]]]).unwrap();
        let a = Assignment { class: vec![0, 0], slot: vec![0, 1] };
        let f = dm(array![[50.0, -50.0], [-50.0, 50.0]]);
        let out = optimize_codewords(&f, &a, &cb, 1e4, 0.1, 1).unwrap();
        let m = &out.codebook.mu;
        assert_abs_diff_eq!(m[[0, 0, 0]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[[0, 0, 1]], -0.25, epsilon = 1e-12);
        assert_eq!(m.slice(ndarray::s![0, 0, ..]), m.slice(ndarray::s![0, 1, ..]));
    }

    #[test]
    fn prox_moves_pair_together_by_eta() {
        // B = 1, codewords 1 and -1 (distance 2), margins stay above one
        let cb = Codebook::new(array![[[1.0], [-1.0]]]).unwrap();
        let a = Assignment { class: vec![0, 0], slot: vec![0, 1] };
        let f = dm(array![[5.0], [-5.0]]);
        let out = optimize_codewords(&f, &a, &cb, 4.0, 0.1, 1).unwrap();
        assert_abs_diff_eq!(out.codebook.mu[[0, 0, 0]], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(out.codebook.mu[[0, 1, 0]], -0.6, epsilon = 1e-12);
        assert!(out.objective_after <= out.objective_before);
    }

    #[test]
    fn empty_class_is_frozen() {
        let cb = Codebook::new(array![[[1.0], [-1.0]], [[0.3], [0.7]]]).unwrap();
        let a = Assignment { class: vec![0], slot: vec![0] };
        let f = dm(array![[0.2]]);
        let out = optimize_codewords(&f, &a, &cb, 1.0, 0.1, 10).unwrap();
        assert_eq!(out.codebook.mu.index_axis(Axis(0), 1), cb.mu.index_axis(Axis(0), 1));
    }

    #[test]
    fn single_codeword_substitution() {
        let f = dm(array![[2.0], [-0.5], [3.0], [-1.5], [-2.0]]);
        let a = Assignment { class: vec![0, 0, 0, 1, 1], slot: vec![0; 5] };
        let (cb, empty) = optimize_codewords_single(&f, &a, 3, 1).unwrap();
        assert_eq!(cb.mu[[0, 0, 0]], 1.0);
        assert_eq!(cb.mu[[1, 0, 0]], -1.0);
        assert_eq!(cb.mu[[2, 0, 0]], 1.0);
        assert_eq!(empty, vec![2]);
    }

    #[test]
    fn random_codebook_is_distinct_and_seeded() {
        let a = Codebook::random(10, 1, 4, 3).unwrap();
        let b = Codebook::random(10, 1, 4, 3).unwrap();
        assert_eq!(a, b);
        let q = a.quantized();
        for c in 0..10 {
            for d in c + 1..10 {
                assert_ne!(q.index_axis(Axis(0), c), q.index_axis(Axis(0), d));
            }
        }
        // 2^2 < 5 classes: cannot be distinct, but must still succeed
        assert!(Codebook::random(5, 1, 2, 0).is_ok());
        assert_ne!(Codebook::random(4, 2, 8, 1).unwrap(), Codebook::random(4, 2, 8, 2).unwrap());
    }
}
