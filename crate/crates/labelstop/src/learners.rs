//! Classifier abstraction and the three concrete learners: nearest
//! centroid, a single decision stump, and discrete AdaBoost over stumps.
//!
//! Models are immutable after `fit`; prediction, margin and posterior
//! queries are safe to share across threads. Refitting always starts from
//! scratch on the full training set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{cast, cast_usize, Scalar};

/// One training or test point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledExample<F> {
    pub features: Vec<F>,
    pub label: usize,
}

impl<F> LabelledExample<F> {
    pub fn new(features: Vec<F>, label: usize) -> Self {
        Self { features, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    NearestCentroid,
    Stump,
    AdaBoost,
}

/// Learner choice plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig<F> {
    pub kind: LearnerKind,
    /// Boosting rounds for AdaBoost.
    pub boost_rounds: usize,
    /// Softmax temperature for the centroid class posterior.
    pub temperature: F,
}

impl<F: Scalar> LearnerConfig<F> {
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind,
            boost_rounds: 100,
            temperature: F::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnerError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("feature vector has {got} dims, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("{kind:?} does not support {operation}")]
    Unsupported {
        kind: LearnerKind,
        operation: &'static str,
    },
    #[error("{kind:?} requires a binary problem, got {num_classes} classes")]
    NotBinary {
        kind: LearnerKind,
        num_classes: usize,
    },
}

/// Axis-aligned threshold classifier: predicts class 1 when
/// `polarity * (x[feature] - threshold) > 0`, class 0 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump<F> {
    pub feature: usize,
    pub threshold: F,
    pub polarity: i8,
}

impl<F: Scalar> Stump<F> {
    #[inline]
    pub fn classify(&self, x: &[F]) -> usize {
        let side = x[self.feature] - self.threshold;
        let positive = if self.polarity >= 0 {
            side > F::zero()
        } else {
            side < F::zero()
        };
        usize::from(positive)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedStump<F> {
    pub stump: Stump<F>,
    pub alpha: F,
}

/// A fitted model of one of the three kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel<F> {
    NearestCentroid {
        /// `(class, mean)` for every class present in training, ascending.
        centroids: Vec<(usize, Vec<F>)>,
        temperature: F,
        num_classes: usize,
    },
    Stump {
        stump: Stump<F>,
        num_features: usize,
    },
    AdaBoost {
        stumps: Vec<WeightedStump<F>>,
        /// Fallback prediction when no useful stump exists.
        majority: usize,
        num_features: usize,
    },
}

/// Trains a model of the configured kind on the full training set.
///
/// Single-class sets produce a constant classifier rather than an error.
/// Stump and AdaBoost require a binary problem.
pub fn fit<F: Scalar>(
    config: &LearnerConfig<F>,
    training: &[LabelledExample<F>],
    num_classes: usize,
) -> Result<TrainedModel<F>, LearnerError> {
    if training.is_empty() {
        return Err(LearnerError::EmptyTrainingSet);
    }
    let dim = training[0].features.len();
    for ex in training {
        if ex.features.len() != dim {
            return Err(LearnerError::DimensionMismatch {
                expected: dim,
                got: ex.features.len(),
            });
        }
        if ex.label >= num_classes {
            return Err(LearnerError::LabelOutOfRange {
                label: ex.label,
                num_classes,
            });
        }
    }
    match config.kind {
        LearnerKind::NearestCentroid => Ok(fit_centroid(training, num_classes, config.temperature)),
        LearnerKind::Stump => {
            if num_classes != 2 {
                return Err(LearnerError::NotBinary {
                    kind: LearnerKind::Stump,
                    num_classes,
                });
            }
            let n = training.len();
            let w = F::one() / cast_usize(n);
            let weights = vec![w; n];
            let (stump, _) = fit_weighted_stump(training, &weights);
            Ok(TrainedModel::Stump {
                stump,
                num_features: dim,
            })
        }
        LearnerKind::AdaBoost => {
            if num_classes != 2 {
                return Err(LearnerError::NotBinary {
                    kind: LearnerKind::AdaBoost,
                    num_classes,
                });
            }
            Ok(fit_adaboost(training, config.boost_rounds))
        }
    }
}

fn fit_centroid<F: Scalar>(
    training: &[LabelledExample<F>],
    num_classes: usize,
    temperature: F,
) -> TrainedModel<F> {
    let dim = training[0].features.len();
    let mut sums: Vec<(usize, Vec<F>)> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for class in 0..num_classes {
        let members: Vec<&LabelledExample<F>> =
            training.iter().filter(|ex| ex.label == class).collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = vec![F::zero(); dim];
        for ex in &members {
            for (m, &x) in mean.iter_mut().zip(&ex.features) {
                *m = *m + x;
            }
        }
        let n = cast_usize::<F>(members.len());
        for m in mean.iter_mut() {
            *m = *m / n;
        }
        sums.push((class, mean));
        counts.push(members.len());
    }
    TrainedModel::NearestCentroid {
        centroids: sums,
        temperature,
        num_classes,
    }
}

/// Exhaustive weighted stump search. Candidate thresholds are midpoints
/// between consecutive distinct sorted values of each feature; ties break
/// to the lowest feature index, then the lowest threshold, then positive
/// polarity. Returns the stump and its weighted 0-1 error.
///
/// A single-class set (or one with no usable split candidates) yields a
/// constant stump: threshold at minus/plus infinity so every point lands on
/// the weighted-majority side.
pub fn fit_weighted_stump<F: Scalar>(
    training: &[LabelledExample<F>],
    weights: &[F],
) -> (Stump<F>, F) {
    debug_assert_eq!(training.len(), weights.len());
    let dim = training[0].features.len();
    let total_w1: F = training
        .iter()
        .zip(weights)
        .filter(|(ex, _)| ex.label == 1)
        .map(|(_, &w)| w)
        .sum();
    let total: F = weights.iter().copied().sum();
    let total_w0 = total - total_w1;

    // a single-class set is served exactly by a constant classifier, which
    // no midpoint threshold can represent
    if total_w0 == F::zero() || total_w1 == F::zero() {
        return constant_stump(total_w1 > F::zero(), F::zero());
    }

    let mut best: Option<(Stump<F>, F)> = None;
    let mut order: Vec<usize> = (0..training.len()).collect();
    for f in 0..dim {
        order.sort_by(|&a, &b| {
            training[a].features[f]
                .partial_cmp(&training[b].features[f])
                .expect("feature values are comparable")
        });
        // prefix masses of class-1 / class-0 weight below the candidate cut
        let mut below_w1 = F::zero();
        let mut below_w0 = F::zero();
        for p in 1..order.len() {
            let prev = order[p - 1];
            let here = order[p];
            if training[prev].label == 1 {
                below_w1 = below_w1 + weights[prev];
            } else {
                below_w0 = below_w0 + weights[prev];
            }
            let (lo, hi) = (training[prev].features[f], training[here].features[f]);
            if lo == hi {
                continue;
            }
            let threshold = (lo + hi) / cast(2.0);
            // polarity +1: predicts 1 above the cut, so it errs on the
            // class-1 mass below and the class-0 mass above
            let err_plus = below_w1 + (total_w0 - below_w0);
            let err_minus = below_w0 + (total_w1 - below_w1);
            for (polarity, err) in [(1i8, err_plus), (-1i8, err_minus)] {
                let candidate = Stump {
                    feature: f,
                    threshold,
                    polarity,
                };
                match &best {
                    Some((_, e)) if *e <= err => {}
                    _ => best = Some((candidate, err)),
                }
            }
        }
    }
    best.unwrap_or_else(|| {
        // no split candidate (all feature values identical): constant
        // classifier on the weighted-majority side
        let majority_is_one = total_w1 + total_w1 > total;
        let err = if majority_is_one { total_w0 } else { total_w1 };
        constant_stump(majority_is_one, err)
    })
}

/// Constant classifier expressed as a stump with an infinite threshold.
fn constant_stump<F: Scalar>(predict_one: bool, err: F) -> (Stump<F>, F) {
    let stump = Stump {
        feature: 0,
        threshold: if predict_one {
            F::neg_infinity()
        } else {
            F::infinity()
        },
        polarity: 1,
    };
    (stump, err)
}

/// Alpha when a round's weighted error reaches zero exactly; keeps the
/// ensemble weights finite.
const MIN_ROUND_ERROR: f64 = 1e-10;

fn fit_adaboost<F: Scalar>(training: &[LabelledExample<F>], rounds: usize) -> TrainedModel<F> {
    let n = training.len();
    let dim = training[0].features.len();
    let ones = training.iter().filter(|ex| ex.label == 1).count();
    let majority = usize::from(ones * 2 > n);
    let mut weights = vec![F::one() / cast_usize::<F>(n); n];
    let mut stumps: Vec<WeightedStump<F>> = Vec::new();
    let half = cast::<F>(0.5);
    for _ in 0..rounds {
        let (stump, err) = fit_weighted_stump(training, &weights);
        if err >= half {
            break;
        }
        let e = err.max(cast(MIN_ROUND_ERROR));
        let alpha = half * ((F::one() - e) / e).ln();
        stumps.push(WeightedStump { stump, alpha });
        if err <= F::zero() {
            break;
        }
        let mut sum = F::zero();
        for (w, ex) in weights.iter_mut().zip(training) {
            let agree = stump.classify(&ex.features) == ex.label;
            *w = *w * if agree { (-alpha).exp() } else { alpha.exp() };
            sum = sum + *w;
        }
        for w in weights.iter_mut() {
            *w = *w / sum;
        }
    }
    TrainedModel::AdaBoost {
        stumps,
        majority,
        num_features: dim,
    }
}

impl<F: Scalar> TrainedModel<F> {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Self::NearestCentroid { .. } => LearnerKind::NearestCentroid,
            Self::Stump { .. } => LearnerKind::Stump,
            Self::AdaBoost { .. } => LearnerKind::AdaBoost,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Self::NearestCentroid { num_classes, .. } => *num_classes,
            Self::Stump { .. } | Self::AdaBoost { .. } => 2,
        }
    }

    pub fn supports_posterior(&self) -> bool {
        !matches!(self, Self::Stump { .. })
    }

    fn check_dim(&self, x: &[F]) -> Result<(), LearnerError> {
        let expected = match self {
            Self::NearestCentroid { centroids, .. } => centroids[0].1.len(),
            Self::Stump { num_features, .. } | Self::AdaBoost { num_features, .. } => *num_features,
        };
        if x.len() != expected {
            return Err(LearnerError::DimensionMismatch {
                expected,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Predicted class label. Deterministic; distance and vote ties break
    /// to the lower class index.
    pub fn predict(&self, x: &[F]) -> Result<usize, LearnerError> {
        self.check_dim(x)?;
        Ok(match self {
            Self::NearestCentroid { centroids, .. } => {
                let mut best = (centroids[0].0, squared_distance(x, &centroids[0].1));
                for (class, mean) in &centroids[1..] {
                    let d = squared_distance(x, mean);
                    if d < best.1 {
                        best = (*class, d);
                    }
                }
                best.0
            }
            Self::Stump { stump, .. } => stump.classify(x),
            Self::AdaBoost {
                stumps, majority, ..
            } => {
                if stumps.is_empty() {
                    *majority
                } else {
                    usize::from(boost_score(stumps, x) > F::zero())
                }
            }
        })
    }

    /// Nonnegative distance to the decision boundary; 0 means on it.
    ///
    /// Centroid: gap between the two smallest centroid distances (infinite
    /// for a single-class model). Stump: distance of the deciding feature
    /// to the threshold. AdaBoost: absolute vote normalized by total vote
    /// mass.
    pub fn margin(&self, x: &[F]) -> Result<F, LearnerError> {
        self.check_dim(x)?;
        Ok(match self {
            Self::NearestCentroid { centroids, .. } => {
                if centroids.len() < 2 {
                    F::infinity()
                } else {
                    let mut d1 = F::infinity();
                    let mut d2 = F::infinity();
                    for (_, mean) in centroids {
                        let d = squared_distance(x, mean).sqrt();
                        if d < d1 {
                            d2 = d1;
                            d1 = d;
                        } else if d < d2 {
                            d2 = d;
                        }
                    }
                    d2 - d1
                }
            }
            Self::Stump { stump, .. } => (x[stump.feature] - stump.threshold).abs(),
            Self::AdaBoost { stumps, .. } => {
                if stumps.is_empty() {
                    F::zero()
                } else {
                    let total: F = stumps.iter().map(|ws| ws.alpha).sum();
                    boost_score(stumps, x).abs() / total
                }
            }
        })
    }

    /// Probability vector over the class space; sums to 1.
    ///
    /// Centroid models use a softmax of negative squared distances (classes
    /// unseen in training get zero mass). Binary AdaBoost uses the logistic
    /// map of twice the vote score. Plain stumps are unsupported.
    pub fn class_posterior(&self, x: &[F]) -> Result<Vec<F>, LearnerError> {
        self.check_dim(x)?;
        match self {
            Self::NearestCentroid {
                centroids,
                temperature,
                num_classes,
            } => {
                let scores: Vec<F> = centroids
                    .iter()
                    .map(|(_, mean)| -squared_distance(x, mean) / *temperature)
                    .collect();
                let max = scores.iter().copied().fold(F::neg_infinity(), F::max);
                let exps: Vec<F> = scores.iter().map(|&s| (s - max).exp()).collect();
                let sum: F = exps.iter().copied().sum();
                let mut probs = vec![F::zero(); *num_classes];
                for ((class, _), e) in centroids.iter().zip(exps) {
                    probs[*class] = e / sum;
                }
                Ok(probs)
            }
            Self::Stump { .. } => Err(LearnerError::Unsupported {
                kind: LearnerKind::Stump,
                operation: "class_posterior",
            }),
            Self::AdaBoost {
                stumps, majority, ..
            } => {
                if stumps.is_empty() {
                    let mut probs = vec![F::zero(); 2];
                    probs[*majority] = F::one();
                    return Ok(probs);
                }
                let score = boost_score(stumps, x);
                let p1 = F::one() / (F::one() + (-(score + score)).exp());
                Ok(vec![F::one() - p1, p1])
            }
        }
    }
}

#[inline]
fn squared_distance<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(F::zero(), |acc, d| acc + d)
}

/// Signed vote of a binary stump ensemble, with stump outputs in {-1, +1}.
#[inline]
fn boost_score<F: Scalar>(stumps: &[WeightedStump<F>], x: &[F]) -> F {
    let mut score = F::zero();
    for ws in stumps {
        let h = if ws.stump.classify(x) == 1 {
            F::one()
        } else {
            -F::one()
        };
        score = score + ws.alpha * h;
    }
    score
}

/// Fraction of misclassified examples.
pub fn classification_error<F: Scalar>(
    model: &TrainedModel<F>,
    examples: &[LabelledExample<F>],
) -> Result<F, LearnerError> {
    if examples.is_empty() {
        return Ok(F::zero());
    }
    let mut wrong = 0usize;
    for ex in examples {
        if model.predict(&ex.features)? != ex.label {
            wrong += 1;
        }
    }
    Ok(cast_usize::<F>(wrong) / cast_usize(examples.len()))
}
