//! Hamming-ranking retrieval metrics and the random-projection LSH baseline.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::{sign, Error, Result};

/// Number of differing positions.
pub fn hamming(a: &[i8], b: &[i8]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::input(format!(
            "code length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(hamming_unchecked(a, b.iter().copied()))
}

pub(crate) fn hamming_unchecked(a: &[i8], b: impl Iterator<Item = i8>) -> usize {
    a.iter().zip(b).filter(|(x, y)| **x != *y).count()
}

/// Codes with one integer label each and optional identity tags.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeDatabase {
    codes: Vec<Vec<i8>>,
    labels: Vec<usize>,
    ids: Option<Vec<u64>>,
}

impl CodeDatabase {
    pub fn new(codes: Vec<Vec<i8>>, labels: Vec<usize>) -> Result<Self> {
        if codes.len() != labels.len() {
            return Err(Error::input(format!(
                "{} codes but {} labels",
                codes.len(),
                labels.len()
            )));
        }
        if let Some(first) = codes.first() {
            let b = first.len();
            if b == 0 {
                return Err(Error::input("codes must have at least one bit"));
            }
            for (i, c) in codes.iter().enumerate() {
                if c.len() != b {
                    return Err(Error::input(format!("code {i} has {} bits, expected {b}", c.len())));
                }
                if c.iter().any(|&v| v != 1 && v != -1) {
                    return Err(Error::input(format!("code {i} has an entry outside {{-1, +1}}")));
                }
            }
        }
        Ok(CodeDatabase { codes, labels, ids: None })
    }

    /// Attaches identity tags; entries of two databases with equal tags are
    /// treated as the same item when self-matches are excluded.
    pub fn with_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.codes.len() {
            return Err(Error::input("identity tag count differs from code count"));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    /// Tags every entry with its row index.
    pub fn with_row_ids(self) -> Self {
        let ids = (0..self.codes.len() as u64).collect();
        CodeDatabase { ids: Some(ids), ..self }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn bits(&self) -> usize {
        self.codes.first().map_or(0, Vec::len)
    }

    pub fn codes(&self) -> &[Vec<i8>] {
        &self.codes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn is_self(&self, i: usize, other: &CodeDatabase, j: usize) -> bool {
        match (&self.ids, &other.ids) {
            (Some(a), Some(b)) => a[i] == b[j],
            _ => false,
        }
    }
}

fn check_pair(queries: &CodeDatabase, db: &CodeDatabase) -> Result<()> {
    if db.is_empty() {
        return Err(Error::input("empty database"));
    }
    if queries.is_empty() {
        return Err(Error::input("no queries"));
    }
    if queries.bits() != db.bits() {
        return Err(Error::input(format!(
            "query codes have {} bits, database codes {}",
            queries.bits(),
            db.bits()
        )));
    }
    Ok(())
}

/// Database rows for query `q`, self-matches removed when requested.
fn candidates<'a>(
    queries: &'a CodeDatabase,
    q: usize,
    db: &'a CodeDatabase,
    exclude_self: bool,
) -> impl Iterator<Item = usize> + 'a {
    (0..db.len()).filter(move |&j| !(exclude_self && queries.is_self(q, db, j)))
}

/// Mean over queries of the fraction of the `k` Hamming-nearest database
/// codes sharing the query label. Ties are broken by ascending database index.
pub fn topk_precision(queries: &CodeDatabase, db: &CodeDatabase, k: usize, exclude_self: bool) -> Result<f64> {
    check_pair(queries, db)?;
    if k == 0 {
        return Err(Error::input("k must be >= 1"));
    }
    let per_query: Vec<Result<f64>> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let code = &queries.codes[q];
            let mut ranked: Vec<(usize, usize)> = candidates(queries, q, db, exclude_self)
                .map(|j| (hamming_unchecked(code, db.codes[j].iter().copied()), j))
                .collect();
            if k > ranked.len() {
                return Err(Error::input(format!(
                    "k = {k} exceeds the {} available database codes",
                    ranked.len()
                )));
            }
            ranked.sort_unstable();
            let hits = ranked[..k]
                .iter()
                .filter(|(_, j)| db.labels[*j] == queries.labels[q])
                .count();
            Ok(hits as f64 / k as f64)
        })
        .collect();
    let mut total = 0.0;
    for p in per_query {
        total += p?;
    }
    Ok(total / queries.len() as f64)
}

/// One precision/recall point at Hamming radius `radius`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub radius: usize,
    /// Mean over queries that retrieved at least one code; `None` when no
    /// query retrieved anything.
    pub precision: Option<f64>,
    /// Mean over all queries.
    pub recall: f64,
}

/// Precision and recall of the Hamming ball of radius `r` for `r = 0..=B`.
pub fn pr_curve(queries: &CodeDatabase, db: &CodeDatabase, exclude_self: bool) -> Result<Vec<PrPoint>> {
    check_pair(queries, db)?;
    let bits = db.bits();
    // per query: histogram of (relevant, total) by distance
    type Histogram = (Vec<usize>, Vec<usize>, usize);
    let per_query: Vec<Result<Histogram>> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let code = &queries.codes[q];
            let mut hit = vec![0usize; bits + 1];
            let mut all = vec![0usize; bits + 1];
            for j in candidates(queries, q, db, exclude_self) {
                let d = hamming_unchecked(code, db.codes[j].iter().copied());
                all[d] += 1;
                if db.labels[j] == queries.labels[q] {
                    hit[d] += 1;
                }
            }
            let relevant: usize = hit.iter().sum();
            if relevant == 0 {
                return Err(Error::input(format!(
                    "query {q} has label {} which has no database entry",
                    queries.labels[q]
                )));
            }
            Ok((hit, all, relevant))
        })
        .collect();
    let mut prec_sum = vec![0.0; bits + 1];
    let mut prec_count = vec![0usize; bits + 1];
    let mut recall_sum = vec![0.0; bits + 1];
    for item in per_query {
        let (hit, all, relevant) = item?;
        let mut tp = 0;
        let mut retrieved = 0;
        for r in 0..=bits {
            tp += hit[r];
            retrieved += all[r];
            if retrieved > 0 {
                prec_sum[r] += tp as f64 / retrieved as f64;
                prec_count[r] += 1;
            }
            recall_sum[r] += tp as f64 / relevant as f64;
        }
    }
    let nq = queries.len() as f64;
    Ok((0..=bits)
        .map(|r| PrPoint {
            radius: r,
            precision: (prec_count[r] > 0).then(|| prec_sum[r] / prec_count[r] as f64),
            recall: recall_sum[r] / nq,
        })
        .collect())
}

/// Fraction of predictions equal to the targets.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::input("prediction and target lengths differ"));
    }
    if predicted.is_empty() {
        return Err(Error::input("no predictions"));
    }
    let ok = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(ok as f64 / predicted.len() as f64)
}

/// Gaussian random projections thresholded at a center point:
/// `code_b = sign(w_b . (x - center))`.
#[derive(Clone, Debug, PartialEq)]
pub struct LshModel {
    projection: Array2<f64>,
    center: Array1<f64>,
}

impl LshModel {
    /// Projections drawn from a seeded standard normal, centered at the origin.
    pub fn new(dim: usize, bits: usize, seed: u64) -> Result<Self> {
        if dim == 0 || bits == 0 {
            return Err(Error::input("LSH needs dim >= 1 and bits >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = Array2::from_shape_fn((bits, dim), |_| StandardNormal.sample(&mut rng));
        Ok(LshModel {
            projection,
            center: Array1::zeros(dim),
        })
    }

    /// Same projections as [`LshModel::new`], thresholded at the data mean.
    pub fn fit(data: ArrayView2<'_, f64>, bits: usize, seed: u64) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::input("empty dataset"));
        }
        let mut model = LshModel::new(data.ncols(), bits, seed)?;
        model.center = data.mean_axis(Axis(0)).expect("non-empty");
        Ok(model)
    }

    pub fn from_parts(projection: Array2<f64>, center: Array1<f64>) -> Result<Self> {
        if projection.ncols() != center.len() || projection.is_empty() {
            return Err(Error::input("projection and center dimensions differ"));
        }
        Ok(LshModel { projection, center })
    }

    pub fn bits(&self) -> usize {
        self.projection.nrows()
    }

    pub fn dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn projection(&self) -> &Array2<f64> {
        &self.projection
    }

    /// Per-bit thresholds `w_b . center`.
    pub fn thresholds(&self) -> Array1<f64> {
        self.projection.dot(&self.center)
    }

    pub fn encode(&self, x: ArrayView1<'_, f64>) -> Result<Vec<i8>> {
        if x.len() != self.dim() {
            return Err(Error::input(format!(
                "dimension mismatch: LSH expects {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        let centered = &x - &self.center;
        Ok(self.projection.dot(&centered).iter().map(|&v| sign(v)).collect())
    }

    pub fn encode_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Vec<i8>>> {
        x.axis_iter(Axis(0)).map(|row| self.encode(row)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming(&[1, -1, 1], &[1, -1, 1]).unwrap(), 0);
        assert_eq!(hamming(&[1, -1, 1], &[-1, 1, -1]).unwrap(), 3);
        assert_eq!(hamming(&[1, 1, -1, 1], &[1, -1, -1, -1]).unwrap(), 2);
        assert!(hamming(&[1], &[1, 1]).is_err());
    }

    #[test]
    fn topk_hand_computed() {
        // query 0 = (1,1,1): distances to db 0,1,2,3 = 0,1,2,3
        // query 1 = (-1,-1,-1): distances 3,2,1,0
        let db = CodeDatabase::new(
            vec![vec![1, 1, 1], vec![1, 1, -1], vec![1, -1, -1], vec![-1, -1, -1]],
            vec![0, 1, 0, 1],
        )
        .unwrap();
        let q = CodeDatabase::new(vec![vec![1, 1, 1], vec![-1, -1, -1]], vec![0, 1]).unwrap();
        // k=2: q0 gets {0:lab0, 1:lab1} = 1/2; q1 gets {3:lab1, 2:lab0} = 1/2
        assert_abs_diff_eq!(topk_precision(&q, &db, 2, false).unwrap(), 0.5);
        // k=1: both hit, k=3: q0 {0,1,2} = 2/3, q1 {3,2,1} = 2/3
        assert_abs_diff_eq!(topk_precision(&q, &db, 1, false).unwrap(), 1.0);
        assert_abs_diff_eq!(topk_precision(&q, &db, 3, false).unwrap(), 2.0 / 3.0);
        // q0 label 0 over k=4 = 1/2, q1 label 1 = 1/2; relabel q1 to get 0.75 mix
        let q2 = CodeDatabase::new(vec![vec![1, 1, 1], vec![-1, -1, -1]], vec![0, 0]).unwrap();
        // k=1: q0 hit, q1 nearest is db3 (label 1) miss -> 0.5; k=2: q0 1/2, q1 {3,2} 1/2
        assert_abs_diff_eq!(topk_precision(&q2, &db, 1, false).unwrap(), 0.5);
        assert!(topk_precision(&q, &db, 5, false).is_err());
    }

    #[test]
    fn topk_three_quarters() {
        // db distances from q=(1,1): a=(1,1) d0 lab0, b=(1,-1) d1 lab0, c=(-1,1) d1 lab1, d=(-1,-1) d2 lab0
        let db = CodeDatabase::new(
            vec![vec![1, 1], vec![1, -1], vec![-1, 1], vec![-1, -1]],
            vec![0, 0, 1, 0],
        )
        .unwrap();
        // q0 = (1,1) label 0, k=2 -> {a,b} = 1; q1 = (-1,1) label 1, k=2 -> {c, a}: ties a(d1), d(d1) -> a; 1/2
        let q = CodeDatabase::new(vec![vec![1, 1], vec![-1, 1]], vec![0, 1]).unwrap();
        assert_abs_diff_eq!(topk_precision(&q, &db, 2, false).unwrap(), 0.75);
    }

    #[test]
    fn self_exclusion() {
        let codes = vec![vec![1, 1], vec![1, -1], vec![-1, -1], vec![-1, 1]];
        let db = CodeDatabase::new(codes, vec![0, 1, 2, 3]).unwrap().with_row_ids();
        assert_abs_diff_eq!(topk_precision(&db, &db, 1, false).unwrap(), 1.0);
        assert_abs_diff_eq!(topk_precision(&db, &db, 1, true).unwrap(), 0.0);
        let db = CodeDatabase::new(vec![vec![1, 1], vec![1, 1], vec![-1, -1], vec![-1, -1]], vec![0, 0, 1, 2])
            .unwrap()
            .with_row_ids();
        // q0 -> db1 (lab0 hit), q1 -> db0 hit, q2 -> db3 miss, q3 -> db2 miss
        assert_abs_diff_eq!(topk_precision(&db, &db, 1, true).unwrap(), 0.5);
    }

    #[test]
    fn pr_hand_computed() {
        // q = (1,1,1) label 0; db: (1,1,1) lab0 d0, (1,-1,1) lab1 d1, (-1,-1,1) lab0 d2
        let db = CodeDatabase::new(vec![vec![1, 1, 1], vec![1, -1, 1], vec![-1, -1, 1]], vec![0, 1, 0]).unwrap();
        let q = CodeDatabase::new(vec![vec![1, 1, 1]], vec![0]).unwrap();
        let pr = pr_curve(&q, &db, false).unwrap();
        assert_eq!(pr.len(), 4);
        assert_eq!(pr[0].precision, Some(1.0));
        assert_abs_diff_eq!(pr[0].recall, 0.5);
        assert_abs_diff_eq!(pr[1].precision.unwrap(), 0.5);
        assert_abs_diff_eq!(pr[1].recall, 0.5);
        assert_abs_diff_eq!(pr[2].precision.unwrap(), 2.0 / 3.0);
        assert_abs_diff_eq!(pr[2].recall, 1.0);
        assert_abs_diff_eq!(pr[3].recall, 1.0);
    }

    #[test]
    fn pr_undefined_precision_and_missing_label() {
        let db = CodeDatabase::new(vec![vec![-1, -1]], vec![0]).unwrap();
        let q = CodeDatabase::new(vec![vec![1, 1]], vec![0]).unwrap();
        let pr = pr_curve(&q, &db, false).unwrap();
        assert_eq!(pr[0].precision, None);
        assert_eq!(pr[0].recall, 0.0);
        assert_eq!(pr[2].recall, 1.0);
        let q = CodeDatabase::new(vec![vec![1, 1]], vec![7]).unwrap();
        assert!(pr_curve(&q, &db, false).is_err());
        let empty = CodeDatabase::new(vec![], vec![]).unwrap();
        assert!(pr_curve(&q, &empty, false).is_err());
    }

    #[test]
    fn lsh_examples() {
        let m = LshModel::from_parts(array![[1.0]], array![0.5]).unwrap();
        assert_eq!(m.encode(array![-1.0].view()).unwrap(), vec![-1]);
        assert_eq!(m.encode(array![2.0].view()).unwrap(), vec![1]);
        assert_eq!(m.encode(array![0.5].view()).unwrap(), vec![1]);
        assert!(m.encode(array![1.0, 2.0].view()).is_err());

        let data = array![[1.0, 2.0, 3.0], [3.0, 4.0, 5.0]];
        let a = LshModel::fit(data.view(), 6, 9).unwrap();
        let b = LshModel::fit(data.view(), 6, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.encode(array![2.0, 3.0, 4.0].view()).unwrap(), vec![1; 6]);
        assert_ne!(a.projection(), LshModel::new(3, 6, 10).unwrap().projection());
    }

    #[test]
    fn codes_are_validated() {
        assert!(CodeDatabase::new(vec![vec![1, 0]], vec![0]).is_err());
        assert!(CodeDatabase::new(vec![vec![1, 1], vec![1]], vec![0, 0]).is_err());
        assert!(CodeDatabase::new(vec![vec![1]], vec![]).is_err());
    }
}
