//! L2-regularized binary logistic and multinomial softmax regression over
//! binary sparse features, with an unregularized bias.
//!
//! Training compacts the feature space to the features that occur in the
//! problem: an absent feature has zero gradient from the data term, so its
//! optimal weight is exactly zero under L2.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::math::{log_sum_exp, sigmoid, softmax_in_place, softplus};
use crate::optim::{minimize, Objective, OptimizerConfig};

fn check_l2(l2: f64) -> Result<()> {
    if l2.is_finite() && l2 > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("l2 must be a positive real, got {l2}")))
    }
}

/// Rows re-indexed into a compact `0..dim` feature space.
#[derive(Clone, Debug)]
struct CompactRows {
    rows: Vec<Vec<u32>>,
    /// Compact index to original feature id.
    features: Vec<u32>,
}

impl CompactRows {
    fn new<'a, I: IntoIterator<Item = &'a SparseVector>>(rows: I) -> Self {
        let rows: Vec<&SparseVector> = rows.into_iter().collect();
        let mut seen: BTreeMap<u32, u32> = BTreeMap::new();
        for r in &rows {
            for &f in r.indices() {
                seen.insert(f, 0);
            }
        }
        let features: Vec<u32> = seen.keys().copied().collect();
        for (i, v) in seen.values_mut().enumerate() {
            *v = i as u32;
        }
        let rows = rows
            .iter()
            .map(|r| r.indices().iter().map(|f| seen[f]).collect())
            .collect();
        CompactRows { rows, features }
    }

    fn dim(&self) -> usize {
        self.features.len()
    }
}

/// `Σ_i softplus(-y_i (w·x_i + b)) + λ/2 ‖w‖²` with parameters `[w.., b]`.
#[derive(Clone, Debug)]
pub struct LogisticObjective {
    data: CompactRows,
    positive: Vec<bool>,
    l2: f64,
}

impl LogisticObjective {
    pub fn new(positives: &[&SparseVector], negatives: &[&SparseVector], l2: f64) -> Result<Self> {
        check_l2(l2)?;
        let data = CompactRows::new(positives.iter().chain(negatives).copied());
        let mut positive = vec![true; positives.len()];
        positive.resize(positives.len() + negatives.len(), false);
        Ok(LogisticObjective { data, positive, l2 })
    }

    /// Compact index to original feature id; parameter `i < features().len()`
    /// is the weight of `features()[i]`, the last parameter is the bias.
    pub fn features(&self) -> &[u32] {
        &self.data.features
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.data.dim() + 1
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.data.dim();
        let (w, b) = (&x[..d], x[d]);
        let mut f = 0.0;
        for (g, wi) in grad[..d].iter_mut().zip(w) {
            *g = self.l2 * wi;
            f += 0.5 * self.l2 * wi * wi;
        }
        grad[d] = 0.0;
        for (row, &pos) in self.data.rows.iter().zip(&self.positive) {
            let z = b + row.iter().map(|&j| w[j as usize]).sum::<f64>();
            let y = if pos { 1.0 } else { -1.0 };
            f += softplus(-y * z);
            // d/dz softplus(-y z) = -y * sigmoid(-y z)
            let coef = -y * sigmoid(-y * z);
            for &j in row {
                grad[j as usize] += coef;
            }
            grad[d] += coef;
        }
        f
    }
}

/// Weights of a binary logistic model, zero weights omitted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BinaryWeights {
    pub weights: BTreeMap<u32, f64>,
    pub bias: f64,
}

impl BinaryWeights {
    pub fn constant(bias: f64) -> Self {
        BinaryWeights {
            weights: BTreeMap::new(),
            bias,
        }
    }

    pub fn score(&self, x: &SparseVector) -> f64 {
        self.bias + x.indices().iter().filter_map(|f| self.weights.get(f)).sum::<f64>()
    }

    pub fn probability(&self, x: &SparseVector) -> f64 {
        sigmoid(self.score(x))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedBinary {
    pub model: BinaryWeights,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits a binary logistic model from zero initialization.
pub fn train_binary_logistic(
    positives: &[&SparseVector],
    negatives: &[&SparseVector],
    l2: f64,
    config: &OptimizerConfig,
) -> Result<TrainedBinary> {
    train_binary_logistic_from(positives, negatives, l2, config, None)
}

/// As [`train_binary_logistic`], starting from `init` (compact parameter
/// layout of [`LogisticObjective`]) when given.
pub fn train_binary_logistic_from(
    positives: &[&SparseVector],
    negatives: &[&SparseVector],
    l2: f64,
    config: &OptimizerConfig,
    init: Option<Vec<f64>>,
) -> Result<TrainedBinary> {
    if positives.is_empty() {
        return Err(Error::DegenerateLabel("no positive examples".into()));
    }
    if negatives.is_empty() {
        return Err(Error::DegenerateLabel("no negative examples".into()));
    }
    let objective = LogisticObjective::new(positives, negatives, l2)?;
    let x0 = init.unwrap_or_else(|| vec![0.0; objective.dim()]);
    let min = minimize(&objective, x0, config)?;
    let d = objective.data.dim();
    let weights = objective
        .data
        .features
        .iter()
        .zip(&min.x[..d])
        .filter(|(_, &w)| w != 0.0)
        .map(|(&f, &w)| (f, w))
        .collect();
    Ok(TrainedBinary {
        model: BinaryWeights { weights, bias: min.x[d] },
        objective: min.value,
        iterations: min.iterations,
        converged: min.converged,
    })
}

/// `Σ_i [logsumexp(s_i) - s_{i,y_i}] + λ/2 ‖W‖²`, scores `s_i = W x_i + b`.
///
/// Parameters are laid out feature-major: `W[j * classes + k]`, followed by
/// the `classes` biases.
#[derive(Clone, Debug)]
pub struct SoftmaxObjective {
    data: CompactRows,
    labels: Vec<usize>,
    classes: usize,
    l2: f64,
}

impl SoftmaxObjective {
    pub fn new(instances: &[(&SparseVector, usize)], classes: usize, l2: f64) -> Result<Self> {
        check_l2(l2)?;
        if classes == 0 {
            return Err(Error::InvalidParameter("softmax needs at least one class".into()));
        }
        if let Some((_, y)) = instances.iter().find(|(_, y)| *y >= classes) {
            return Err(Error::InvalidParameter(format!("class {y} out of range for {classes} classes")));
        }
        let data = CompactRows::new(instances.iter().map(|(x, _)| *x));
        let labels = instances.iter().map(|(_, y)| *y).collect();
        Ok(SoftmaxObjective { data, labels, classes, l2 })
    }

    pub fn features(&self) -> &[u32] {
        &self.data.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }
}

impl Objective for SoftmaxObjective {
    fn dim(&self) -> usize {
        (self.data.dim() + 1) * self.classes
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.classes;
        let nw = self.data.dim() * k;
        let (w, b) = (&x[..nw], &x[nw..]);
        let mut f = 0.0;
        for (g, wi) in grad[..nw].iter_mut().zip(w) {
            *g = self.l2 * wi;
            f += 0.5 * self.l2 * wi * wi;
        }
        for g in grad[nw..].iter_mut() {
            *g = 0.0;
        }
        let mut scores = vec![0.0; k];
        for (row, &y) in self.data.rows.iter().zip(&self.labels) {
            scores.copy_from_slice(b);
            for &j in row {
                let base = j as usize * k;
                for (s, wj) in scores.iter_mut().zip(&w[base..base + k]) {
                    *s += wj;
                }
            }
            f += log_sum_exp(&scores) - scores[y];
            softmax_in_place(&mut scores);
            scores[y] -= 1.0;
            for &j in row {
                let base = j as usize * k;
                for (g, p) in grad[base..base + k].iter_mut().zip(&scores) {
                    *g += p;
                }
            }
            for (g, p) in grad[nw..].iter_mut().zip(&scores) {
                *g += p;
            }
        }
        f
    }
}

/// Multinomial weights: per-feature class weight rows (all-zero rows omitted)
/// and per-class biases.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxWeights {
    pub classes: usize,
    pub rows: BTreeMap<u32, Vec<f64>>,
    pub bias: Vec<f64>,
}

impl SoftmaxWeights {
    pub fn zeros(classes: usize) -> Self {
        SoftmaxWeights {
            classes,
            rows: BTreeMap::new(),
            bias: vec![0.0; classes],
        }
    }

    pub fn scores(&self, x: &SparseVector) -> Vec<f64> {
        let mut s = self.bias.clone();
        for f in x.indices() {
            if let Some(row) = self.rows.get(f) {
                for (si, w) in s.iter_mut().zip(row) {
                    *si += w;
                }
            }
        }
        s
    }

    pub fn probabilities(&self, x: &SparseVector) -> Vec<f64> {
        let mut s = self.scores(x);
        softmax_in_place(&mut s);
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedSoftmax {
    pub model: SoftmaxWeights,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn train_softmax(
    instances: &[(&SparseVector, usize)],
    classes: usize,
    l2: f64,
    config: &OptimizerConfig,
) -> Result<TrainedSoftmax> {
    train_softmax_from(instances, classes, l2, config, None)
}

pub fn train_softmax_from(
    instances: &[(&SparseVector, usize)],
    classes: usize,
    l2: f64,
    config: &OptimizerConfig,
    init: Option<Vec<f64>>,
) -> Result<TrainedSoftmax> {
    if instances.is_empty() {
        return Err(Error::InvalidParameter("softmax training needs at least one instance".into()));
    }
    let objective = SoftmaxObjective::new(instances, classes, l2)?;
    let x0 = init.unwrap_or_else(|| vec![0.0; objective.dim()]);
    let min = minimize(&objective, x0, config)?;
    let nw = objective.data.dim() * classes;
    let rows = objective
        .data
        .features
        .iter()
        .enumerate()
        .filter_map(|(j, &f)| {
            let row = &min.x[j * classes..(j + 1) * classes];
            row.iter().any(|&w| w != 0.0).then(|| (f, row.to_vec()))
        })
        .collect();
    Ok(TrainedSoftmax {
        model: SoftmaxWeights {
            classes,
            rows,
            bias: min.x[nw..].to_vec(),
        },
        objective: min.value,
        iterations: min.iterations,
        converged: min.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::finite_difference_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sv(ids: &[u32]) -> SparseVector {
        SparseVector::from_indices(ids.to_vec())
    }

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, features: u32) -> Vec<SparseVector> {
        (0..n)
            .map(|_| {
                let k = rng.gen_range(1..=4);
                SparseVector::from_indices((0..k).map(|_| rng.gen_range(0..features)).collect())
            })
            .collect()
    }

    fn relative_error(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        if scale == 0.0 { diff } else { diff / scale }
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let rows = random_rows(&mut rng, 12, 8);
            let (pos, neg) = rows.split_at(5);
            let pos: Vec<&SparseVector> = pos.iter().collect();
            let neg: Vec<&SparseVector> = neg.iter().collect();
            let obj = LogisticObjective::new(&pos, &neg, 0.7).unwrap();
            let x: Vec<f64> = (0..obj.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; obj.dim()];
            obj.evaluate(&x, &mut g);
            let fd = finite_difference_gradient(&obj, &x, 1e-5);
            assert!(relative_error(&g, &fd) < 1e-6);
        }
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let rows = random_rows(&mut rng, 10, 6);
            let inst: Vec<(&SparseVector, usize)> = rows.iter().map(|r| (r, rng.gen_range(0..3))).collect();
            let obj = SoftmaxObjective::new(&inst, 3, 0.3).unwrap();
            let x: Vec<f64> = (0..obj.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; obj.dim()];
            obj.evaluate(&x, &mut g);
            let fd = finite_difference_gradient(&obj, &x, 1e-5);
            assert!(relative_error(&g, &fd) < 1e-6);
        }
    }

    #[test]
    fn separable_one_feature() {
        let on = sv(&[0]);
        let off = sv(&[]);
        let trained = train_binary_logistic(&[&on, &on], &[&off, &off], 0.1, &OptimizerConfig::default()).unwrap();
        assert!(trained.converged);
        assert!(trained.model.weights[&0] > 0.0);
        assert!(trained.model.probability(&on) > 0.5);
        assert!(trained.model.probability(&off) < 0.5);
        // Reversed direction.
        let trained = train_binary_logistic(&[&off, &off], &[&on, &on], 0.1, &OptimizerConfig::default()).unwrap();
        assert!(trained.model.weights[&0] < 0.0);
    }

    #[test]
    fn heavy_regularization_leaves_base_rate() {
        let a = sv(&[0]);
        let b = sv(&[1]);
        let trained = train_binary_logistic(&[&a, &a, &a], &[&b], 1e9, &OptimizerConfig::default()).unwrap();
        for w in trained.model.weights.values() {
            assert!(w.abs() < 1e-6);
        }
        // Base rate 3/4 through the bias alone.
        assert!((trained.model.probability(&a) - 0.75).abs() < 1e-4);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let a = sv(&[0]);
        let cfg = OptimizerConfig::default();
        assert!(matches!(train_binary_logistic(&[], &[&a], 1.0, &cfg), Err(Error::DegenerateLabel(_))));
        assert!(matches!(train_binary_logistic(&[&a], &[], 1.0, &cfg), Err(Error::DegenerateLabel(_))));
        assert!(matches!(train_binary_logistic(&[&a], &[&a], 0.0, &cfg), Err(Error::InvalidParameter(_))));
        assert!(matches!(train_binary_logistic(&[&a], &[&a], f64::NAN, &cfg), Err(Error::InvalidParameter(_))));
        assert!(train_softmax(&[(&a, 3)], 3, 1.0, &cfg).is_err());
        assert!(train_softmax(&[], 3, 1.0, &cfg).is_err());
    }

    #[test]
    fn softmax_separable_toy() {
        let xs: Vec<SparseVector> = (0..4).map(|c| sv(&[c])).collect();
        let inst: Vec<(&SparseVector, usize)> = xs.iter().enumerate().flat_map(|(c, x)| [(x, c), (x, c)]).collect();
        let trained = train_softmax(&inst, 4, 0.1, &OptimizerConfig::default()).unwrap();
        assert!(trained.converged);
        for (c, x) in xs.iter().enumerate() {
            let p = trained.model.probabilities(x);
            let argmax = (0..4).max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap()).unwrap();
            assert_eq!(argmax, c);
        }
    }

    #[test]
    fn convex_objectives_are_initialization_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = random_rows(&mut rng, 20, 10);
        let (pos, neg) = rows.split_at(9);
        let pos: Vec<&SparseVector> = pos.iter().collect();
        let neg: Vec<&SparseVector> = neg.iter().collect();
        let cfg = OptimizerConfig::default();
        let dim = LogisticObjective::new(&pos, &neg, 0.5).unwrap().dim();
        let a = train_binary_logistic(&pos, &neg, 0.5, &cfg).unwrap();
        let init: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let b = train_binary_logistic_from(&pos, &neg, 0.5, &cfg, Some(init)).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-6);

        let inst: Vec<(&SparseVector, usize)> = rows.iter().map(|r| (r, rng.gen_range(0..4))).collect();
        let dim = SoftmaxObjective::new(&inst, 4, 0.5).unwrap().dim();
        let a = train_softmax(&inst, 4, 0.5, &cfg).unwrap();
        let init: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let b = train_softmax_from(&inst, 4, 0.5, &cfg, Some(init)).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-6);
    }
}
