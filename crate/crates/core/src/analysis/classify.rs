use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Fisher discriminant between two classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaResult {
    /// Unit vector pointing from the lower-labelled class to the higher.
    pub direction: Vec<f64>,
    /// Midpoint of the two class means.
    pub offset: Vec<f64>,
    /// `<x_i - offset, direction>` per row.
    pub projections: Vec<f64>,
    /// Higher label where the projection is positive.
    pub predictions: Vec<i64>,
    pub accuracy: f64,
}

fn two_classes(labels: &[i64]) -> Result<(i64, i64)> {
    let lo = *labels
        .iter()
        .min()
        .ok_or_else(|| Error::InvalidArgument("no labels".into()))?;
    let hi = *labels.iter().max().unwrap_or(&lo);
    if lo == hi {
        return Err(Error::InvalidArgument(format!(
            "only one class present (label {lo})"
        )));
    }
    if labels.iter().any(|&l| l != lo && l != hi) {
        return Err(Error::InvalidArgument(
            "LDA needs exactly two classes".into(),
        ));
    }
    Ok((lo, hi))
}

/// Linear discriminant analysis on the embedding rows.
///
/// Works in an orthonormal basis of the row span, where the within-class
/// scatter is regularized by `1e-6 trace(Sw) I` before solving for the
/// direction.
pub fn lda(emb: &EmbeddingMatrix) -> Result<LdaResult> {
    let labels = emb.require_labels()?;
    let (lo, hi) = two_classes(labels)?;
    let x = &emb.rows;
    let n = x.nrows();

    let eig = SymmetricEigen::new(x * x.transpose());
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n)
        .filter(|&k| top > 0.0 && eig.eigenvalues[k] > 1e-12 * top)
        .collect();
    let r = keep.len();
    let dim = emb.dim();
    if r == 0 {
        return Err(Error::InvalidArgument("all rows are zero".into()));
    }
    // basis vectors as columns, and row coordinates in that basis
    let mut basis = DMatrix::zeros(dim, r);
    let mut z = DMatrix::zeros(n, r);
    for (c, &k) in keep.iter().enumerate() {
        let s = eig.eigenvalues[k].sqrt();
        basis.set_column(c, &(x.transpose() * eig.eigenvectors.column(k) / s));
        z.set_column(c, &(eig.eigenvectors.column(k) * s));
    }

    let class_mean = |m: &DMatrix<f64>, label: i64| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == label).collect();
        let mut acc = DVector::zeros(m.ncols());
        for &i in &idx {
            acc += m.row(i).transpose();
        }
        acc / idx.len() as f64
    };
    let (m_lo, m_hi) = (class_mean(&z, lo), class_mean(&z, hi));
    let mut sw = DMatrix::zeros(r, r);
    for i in 0..n {
        let d = z.row(i).transpose() - if labels[i] == lo { &m_lo } else { &m_hi };
        sw += &d * d.transpose();
    }
    let trace = sw.trace();
    let reg = if trace > 0.0 { 1e-6 * trace } else { 1.0 };
    for k in 0..r {
        sw[(k, k)] += reg;
    }
    let diff = &m_hi - &m_lo;
    let w = sw.cholesky().map(|c| c.solve(&diff)).unwrap_or(diff);
    let mut direction = &basis * w;
    let norm = direction.norm();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("class means coincide".into()));
    }
    direction /= norm;

    let (f_lo, f_hi) = (class_mean(x, lo), class_mean(x, hi));
    let offset = (f_lo + f_hi) / 2.0;
    let projections: Vec<f64> = (0..n)
        .map(|i| (x.row(i).transpose() - &offset).dot(&direction))
        .collect();
    let predictions: Vec<i64> = projections
        .iter()
        .map(|&p| if p > 0.0 { hi } else { lo })
        .collect();
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(LdaResult {
        direction: direction.iter().copied().collect(),
        offset: offset.iter().copied().collect(),
        projections,
        predictions,
        accuracy: correct as f64 / n as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KnnProtocol {
    LeaveOneOut,
    /// Random split holding out `test_fraction` of the rows for testing.
    TrainTest {
        test_fraction: f64,
        seed: u64,
    },
}

/// kNN evaluation. The positive class is the largest label.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnMetrics {
    pub accuracy: f64,
    pub tpr: f64,
    pub fpr: f64,
    /// Evaluated row indices.
    pub evaluated: Vec<usize>,
    pub predictions: Vec<i64>,
    /// Fraction of positive neighbours per evaluated row.
    pub positive_scores: Vec<f64>,
}

fn vote(neighbours: &[(f64, usize)], labels: &[i64]) -> i64 {
    let mut tally: Vec<(i64, usize, f64)> = Vec::new();
    for &(d, j) in neighbours {
        match tally.iter_mut().find(|t| t.0 == labels[j]) {
            Some(t) => {
                t.1 += 1;
                t.2 += d;
            }
            None => tally.push((labels[j], 1, d)),
        }
    }
    tally.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)));
    tally[0].0
}

/// k-nearest-neighbour classification with Euclidean row distances.
/// Vote ties go to the class with the smaller distance sum, then the
/// smaller label.
pub fn knn_classify(emb: &EmbeddingMatrix, k: usize, protocol: KnnProtocol) -> Result<KnnMetrics> {
    let labels = emb.require_labels()?;
    let n = emb.n_samples();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let (test, train): (Vec<usize>, Vec<usize>) = match protocol {
        KnnProtocol::LeaveOneOut => {
            if k >= n {
                return Err(Error::InvalidArgument(format!(
                    "k = {k} needs more than {n} samples for leave-one-out"
                )));
            }
            ((0..n).collect(), (0..n).collect())
        }
        KnnProtocol::TrainTest {
            test_fraction,
            seed,
        } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "test fraction {test_fraction} outside (0, 1)"
                )));
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
            let (a, b) = idx.split_at(n_test);
            let (mut a, mut b) = (a.to_vec(), b.to_vec());
            a.sort_unstable();
            b.sort_unstable();
            if k > b.len() {
                return Err(Error::InvalidArgument(format!(
                    "k = {k} exceeds the {} training samples",
                    b.len()
                )));
            }
            (a, b)
        }
    };
    let positive = *labels
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    let mut predictions = Vec::with_capacity(test.len());
    let mut positive_scores = Vec::with_capacity(test.len());
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for &i in &test {
        let mut dists: Vec<(f64, usize)> = train
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| ((emb.rows.row(i) - emb.rows.row(j)).norm(), j))
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nb = &dists[..k];
        let pred = vote(nb, labels);
        positive_scores
            .push(nb.iter().filter(|&&(_, j)| labels[j] == positive).count() as f64 / k as f64);
        match (labels[i] == positive, pred == positive) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
        predictions.push(pred);
    }
    let correct = predictions
        .iter()
        .zip(&test)
        .filter(|(p, &i)| **p == labels[i])
        .count();
    let ratio = |a: usize, b: usize| {
        if a + b > 0 {
            a as f64 / (a + b) as f64
        } else {
            0.0
        }
    };
    Ok(KnnMetrics {
        accuracy: correct as f64 / test.len() as f64,
        tpr: ratio(tp, fn_),
        fpr: ratio(fp, tn),
        evaluated: test,
        predictions,
        positive_scores,
    })
}

/// Area under the ROC curve of `scores` for the boolean `truth`, counting
/// tied pairs as one half.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            truth.len()
        )));
    }
    let pos: Vec<f64> = scores
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t)
        .map(|(s, _)| *s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(truth)
        .filter(|(_, &t)| !t)
        .map(|(s, _)| *s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidArgument("ROC AUC needs both classes".into()));
    }
    let mut wins = 0.0;
    for p in &pos {
        for q in &neg {
            wins += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Metric;
    use crate::measure::DiscreteMeasure;
    use rand::Rng;
    use rand_distr_free::gaussian;

    mod rand_distr_free {
        use rand::Rng;
        /// Box-Muller standard normal.
        pub fn gaussian(rng: &mut impl Rng) -> f64 {
            let (u, v): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        }
    }

    fn emb(rows: Vec<Vec<f64>>, labels: Vec<i64>) -> EmbeddingMatrix {
        let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
        EmbeddingMatrix {
            rows: m,
            labels: Some(labels),
            reference: DiscreteMeasure::empty(2),
            metric: Metric::Hk,
            kappa: 1.0,
        }
    }

    fn clusters(n: usize, dim: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<i64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let l = (i % 2) as i64;
            rows.push(
                (0..dim)
                    .map(|k| gaussian(&mut rng) + if k == 0 { sep * l as f64 } else { 0.0 })
                    .collect(),
            );
            labels.push(l);
        }
        (rows, labels)
    }

    #[test]
    fn lda_separates_clusters() {
        let (rows, labels) = clusters(80, 5, 8.0, 1);
        let r = lda(&emb(rows, labels)).unwrap();
        assert!(r.accuracy >= 0.95, "{}", r.accuracy);
        let norm: f64 = r.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lda_on_shuffled_labels_is_near_chance() {
        // held-out accuracy: fit on one half, score the other
        let (rows, _) = clusters(400, 3, 0.0, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels: Vec<i64> = (0..400).map(|_| rng.gen_range(0..2)).collect();
        let fit = lda(&emb(rows[..200].to_vec(), labels[..200].to_vec())).unwrap();
        let correct = (200..400)
            .filter(|&i| {
                let p: f64 = rows[i]
                    .iter()
                    .zip(&fit.offset)
                    .zip(&fit.direction)
                    .map(|((x, o), d)| (x - o) * d)
                    .sum();
                (if p > 0.0 { 1 } else { 0 }) == labels[i]
            })
            .count();
        let acc = correct as f64 / 200.0;
        assert!((acc - 0.5).abs() <= 0.1, "{acc}");
    }

    #[test]
    fn lda_rejects_single_class() {
        assert!(lda(&emb(vec![vec![1.0], vec![2.0]], vec![1, 1])).is_err());
    }

    #[test]
    fn lda_is_scale_invariant() {
        let (rows, labels) = clusters(30, 40, 1.0, 4);
        let a = lda(&emb(rows.clone(), labels.clone())).unwrap();
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|x| 37.5 * x).collect())
            .collect();
        let b = lda(&emb(scaled, labels)).unwrap();
        let cos: f64 = a
            .direction
            .iter()
            .zip(&b.direction)
            .map(|(x, y)| x * y)
            .sum();
        assert!((cos.abs() - 1.0).abs() < 1e-9, "{cos}");
        assert_eq!(a.predictions, b.predictions);
    }

    #[test]
    fn knn_examples() {
        let dup = emb(
            vec![vec![0.0], vec![0.0], vec![5.0], vec![5.0]],
            vec![0, 0, 1, 1],
        );
        assert_eq!(
            knn_classify(&dup, 1, KnnProtocol::LeaveOneOut)
                .unwrap()
                .accuracy,
            1.0
        );
        let pair = emb(vec![vec![0.0], vec![1.0]], vec![0, 1]);
        assert_eq!(
            knn_classify(&pair, 1, KnnProtocol::LeaveOneOut)
                .unwrap()
                .accuracy,
            0.0
        );
        assert!(knn_classify(&pair, 2, KnnProtocol::LeaveOneOut).is_err());
        let (rows, labels) = clusters(100, 4, 8.0, 5);
        let m = knn_classify(&emb(rows, labels), 10, KnnProtocol::LeaveOneOut).unwrap();
        assert!(m.accuracy >= 0.95 && m.tpr >= 0.9 && m.fpr <= 0.1);
    }

    #[test]
    fn knn_tie_goes_to_closer_class() {
        // query 0 has one neighbour of each class among k = 2
        let e = emb(
            vec![vec![0.0], vec![1.0], vec![-1.5], vec![10.0]],
            vec![0, 1, 0, 1],
        );
        let m = knn_classify(&e, 2, KnnProtocol::LeaveOneOut).unwrap();
        assert_eq!(m.predictions[0], 1);
    }

    #[test]
    fn knn_train_test_is_seeded() {
        let (rows, labels) = clusters(50, 3, 3.0, 6);
        let e = emb(rows, labels);
        let p = KnnProtocol::TrainTest {
            test_fraction: 0.3,
            seed: 9,
        };
        let a = knn_classify(&e, 3, p).unwrap();
        assert_eq!(a, knn_classify(&e, 3, p).unwrap());
        assert_eq!(a.evaluated.len(), 15);
    }

    #[test]
    fn knn_loo_is_permutation_invariant() {
        let (rows, labels) = clusters(40, 3, 1.5, 7);
        let base = knn_classify(
            &emb(rows.clone(), labels.clone()),
            3,
            KnnProtocol::LeaveOneOut,
        )
        .unwrap();
        let mut perm: Vec<usize> = (0..40).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(8));
        let prow = perm.iter().map(|&i| rows[i].clone()).collect();
        let plab = perm.iter().map(|&i| labels[i]).collect();
        let shuffled = knn_classify(&emb(prow, plab), 3, KnnProtocol::LeaveOneOut).unwrap();
        assert_eq!(base.accuracy, shuffled.accuracy);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(
            roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
            1.0
        );
        assert_eq!(roc_auc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
        assert!(roc_auc(&[0.1], &[true]).is_err());
    }
}
