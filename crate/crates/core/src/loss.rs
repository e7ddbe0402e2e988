//! Cross-entropy and focal objectives with analytic gradients.
//!
//! The focal loss is evaluated on the ground-truth class only,
//! `-(1 - p_y)^γ · ln p_y`. The all-class sum `-Σ_j (1 - p_j)^γ · ln p_j` is
//! kept as [`Objective::FocalAllClasses`] for comparison runs; it is not a
//! proper classification objective under a softmax (it rewards every `p_j`
//! moving towards 1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probabilities are clamped to `[PROB_FLOOR, 1]` before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// A row on the probability simplex.
///
/// Entries may be exactly zero when a softmax underflows; losses clamp
/// those before the logarithm.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector<T>(Vec<T>);

impl<T: Scalar> ProbVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Shape(format!(
                "probability vector needs at least 2 classes, got {}",
                values.len()
            )));
        }
        let mut sum = T::zero();
        for (j, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < T::zero() || v > T::one() {
                return Err(Error::Data(format!("probability entry {j} = {v} is outside [0, 1]")));
            }
            sum += v;
        }
        if (sum - T::one()).abs() > T::simplex_tolerance(values.len()) {
            return Err(Error::Data(format!("probabilities sum to {sum}, expected 1")));
        }
        Ok(Self(values))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![T::one() / T::from_count(k); k])
    }

    /// Wraps values already known to lie on the simplex (softmax output, means of valid rows).
    pub(crate) fn from_simplex(values: Vec<T>) -> Self {
        debug_assert!(values.len() >= 2);
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    /// Index of the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<T: PartialOrd>(values: &[T]) -> usize {
    let mut best = 0;
    for (j, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = j;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub usize);

impl Label {
    pub fn checked(index: usize, num_classes: usize) -> Result<Self> {
        if index >= num_classes {
            return Err(Error::Data(format!("label {index} is outside 0..{num_classes}")));
        }
        Ok(Label(index))
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn one_hot<T: Scalar>(self, num_classes: usize) -> Vec<T> {
        let mut v = vec![T::zero(); num_classes];
        v[self.0] = T::one();
        v
    }
}

fn clamp_prob<T: Scalar>(p: T) -> (T, bool) {
    let floor = T::lit(PROB_FLOOR);
    if p < floor {
        (floor, true)
    } else if p > T::one() {
        (T::one(), true)
    } else {
        (p, false)
    }
}

/// `-(1 - p)^γ · ln p` for a single probability, already clamped.
fn focal_term<T: Scalar>(p: T, gamma: T) -> T {
    let ce = -p.ln();
    if gamma == T::zero() {
        ce
    } else {
        (T::one() - p).powf(gamma) * ce
    }
}

/// `p · d/dp [-(1 - p)^γ ln p] = γ p ln p (1 - p)^(γ-1) - (1 - p)^γ`.
///
/// The first term vanishes at γ = 0 and at p = 1 (its limit for every γ > 0).
fn scaled_focal_derivative<T: Scalar>(p: T, gamma: T) -> T {
    let q = T::one() - p;
    let first = if gamma == T::zero() || q == T::zero() {
        T::zero()
    } else {
        gamma * p * p.ln() * q.powf(gamma - T::one())
    };
    first - q.powf(gamma)
}

fn check_label<T>(p: &ProbVector<T>, y: Label) {
    assert!(y.0 < p.0.len(), "label {} out of range for {} classes", y.0, p.0.len());
}

pub fn ce_loss<T: Scalar>(p: &ProbVector<T>, y: Label) -> T {
    check_label(p, y);
    let (py, _) = clamp_prob(p.0[y.0]);
    -py.ln()
}

pub fn focal_loss<T: Scalar>(p: &ProbVector<T>, y: Label, gamma: T) -> T {
    check_label(p, y);
    let (py, _) = clamp_prob(p.0[y.0]);
    focal_term(py, gamma)
}

/// The all-class sum `-Σ_j (1 - p_j)^γ ln p_j`.
pub fn focal_loss_all_classes<T: Scalar>(p: &ProbVector<T>, gamma: T) -> T {
    p.0.iter().map(|&pj| focal_term(clamp_prob(pj).0, gamma)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbGradient<T> {
    pub value: T,
    /// Set when `p_y = 1` and `0 < γ < 1`, where the derivative is singular
    /// and the perfect-prediction limit 0 is returned instead.
    pub singular: bool,
}

/// `dL/dp_y` of the focal loss. Every other entry of the gradient is zero.
pub fn focal_grad_prob<T: Scalar>(p: &ProbVector<T>, y: Label, gamma: T) -> ProbGradient<T> {
    check_label(p, y);
    let (py, _) = clamp_prob(p.0[y.0]);
    if py == T::one() && gamma > T::zero() && gamma < T::one() {
        return ProbGradient {
            value: T::zero(),
            singular: true,
        };
    }
    ProbGradient {
        value: scaled_focal_derivative(py, gamma) / py,
        singular: false,
    }
}

/// Max-shifted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = out.iter().copied().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Gradient of `focal_loss(softmax(logits), y, γ)` with respect to the logits.
pub fn loss_grad_logits<T: Scalar>(logits: &[T], y: Label, gamma: T) -> Vec<T> {
    Objective::Focal { gamma }.evaluate(logits, y).grad
}

/// Loss selected for one epoch of training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective<T> {
    CrossEntropy,
    Focal { gamma: T },
    FocalAllClasses { gamma: T },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossEval<T> {
    pub loss: T,
    /// Gradient with respect to the logits.
    pub grad: Vec<T>,
    pub probs: Vec<T>,
    /// Whether any probability hit the clamp before the logarithm.
    pub clamped: bool,
}

impl<T: Scalar> Objective<T> {
    pub fn gamma(&self) -> T {
        match *self {
            Objective::CrossEntropy => T::zero(),
            Objective::Focal { gamma } | Objective::FocalAllClasses { gamma } => gamma,
        }
    }

    pub fn evaluate(&self, logits: &[T], y: Label) -> LossEval<T> {
        assert!(y.0 < logits.len(), "label {} out of range for {} logits", y.0, logits.len());
        let probs = softmax(logits);
        match *self {
            Objective::CrossEntropy => {
                let (py, clamped) = clamp_prob(probs[y.0]);
                let mut grad = probs.clone();
                grad[y.0] -= T::one();
                LossEval {
                    loss: -py.ln(),
                    grad,
                    probs,
                    clamped,
                }
            }
            Objective::Focal { gamma } => {
                let (py, clamped) = clamp_prob(probs[y.0]);
                let c = scaled_focal_derivative(py, gamma);
                let grad = probs
                    .iter()
                    .enumerate()
                    .map(|(i, &pi)| {
                        let delta = if i == y.0 { T::one() } else { T::zero() };
                        c * (delta - pi)
                    })
                    .collect();
                LossEval {
                    loss: focal_term(py, gamma),
                    grad,
                    probs,
                    clamped,
                }
            }
            Objective::FocalAllClasses { gamma } => {
                let mut clamped = false;
                let mut loss = T::zero();
                let mut scaled = Vec::with_capacity(probs.len());
                for &pj in &probs {
                    let (pc, hit) = clamp_prob(pj);
                    clamped |= hit;
                    loss += focal_term(pc, gamma);
                    scaled.push(scaled_focal_derivative(pc, gamma));
                }
                let total: T = scaled.iter().copied().sum();
                let grad = scaled
                    .iter()
                    .zip(&probs)
                    .map(|(&c, &pi)| c - pi * total)
                    .collect();
                LossEval {
                    loss,
                    grad,
                    probs,
                    clamped,
                }
            }
        }
    }
}

/// Per-sample losses reduced by a sequential arithmetic mean.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBatch<T> {
    losses: Vec<T>,
}

impl<T: Scalar> LossBatch<T> {
    pub fn new() -> Self {
        Self { losses: Vec::new() }
    }

    pub fn push(&mut self, loss: T) {
        self.losses.push(loss);
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn losses(&self) -> &[T] {
        &self.losses
    }

    pub fn mean(&self) -> T {
        if self.losses.is_empty() {
            return T::zero();
        }
        let mut sum = T::zero();
        for &l in &self.losses {
            sum += l;
        }
        sum / T::from_count(self.losses.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbVector<f64> {
        ProbVector::new(v.to_vec()).unwrap()
    }

    /// Two-class vector with `p_y = py` at index 0.
    fn two(py: f64) -> ProbVector<f64> {
        ProbVector::new(vec![py, 1.0 - py]).unwrap()
    }

    #[test]
    fn ce_worked_values() {
        let p = pv(&[0.2, 0.3, 0.5]);
        assert!((ce_loss(&p, Label(2)) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(ce_loss(&pv(&[1.0, 0.0]), Label(0)), 0.0);
        for k in 2..12 {
            let u = ProbVector::<f64>::uniform(k).unwrap();
            assert!((ce_loss(&u, Label(k - 1)) - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_worked_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((focal_loss(&two(0.5), Label(0), 2.0) - 0.25 * ln2).abs() < 1e-15);
        assert!((focal_loss(&two(0.5), Label(0), 2.0) - 0.1732868).abs() < 1e-7);
        assert!((focal_loss(&two(0.9), Label(0), 2.0) - 0.0010536).abs() < 1e-7);
        assert_eq!(focal_loss(&two(0.5), Label(0), 0.0), ce_loss(&two(0.5), Label(0)));
    }

    #[test]
    fn grad_prob_worked_values() {
        assert_eq!(focal_grad_prob(&two(0.5), Label(0), 0.0).value, -2.0);
        let g = focal_grad_prob(&two(0.5), Label(0), 2.0).value;
        let oracle = 2.0 * 0.5 * 0.5f64.ln() - 0.25 / 0.5;
        assert!((g - oracle).abs() < 1e-15);
        assert!((g - -1.1931472).abs() < 1e-7);
    }

    #[test]
    fn grad_prob_singular_case_is_flagged() {
        let perfect = pv(&[1.0, 0.0]);
        let g = focal_grad_prob(&perfect, Label(0), 0.5);
        assert!(g.singular);
        assert_eq!(g.value, 0.0);
        let g = focal_grad_prob(&perfect, Label(0), 2.0);
        assert!(!g.singular);
        assert_eq!(g.value, 0.0);
    }

    #[test]
    fn grad_prob_matches_central_differences() {
        let h = 1e-6;
        for &gamma in &[0.0, 0.3, 1.0, 2.0, 3.7] {
            for &p in &[0.05, 0.2, 0.5, 0.77, 0.95] {
                let f = |x: f64| focal_term(x, gamma);
                let fd = (f(p + h) - f(p - h)) / (2.0 * h);
                let an = focal_grad_prob(&two(p), Label(0), gamma).value;
                let rel = (fd - an).abs() / an.abs().max(fd.abs());
                assert!(rel <= 1e-5, "gamma={gamma} p={p}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn logits_gradient_worked_values() {
        let g = loss_grad_logits(&[0.0, 0.0], Label(0), 0.0);
        assert_eq!(g, vec![-0.5, 0.5]);
        let logits = [0.3, -1.2, 2.0, 0.0];
        let g = loss_grad_logits(&logits, Label(1), 0.0);
        let p = softmax(&logits);
        for (j, (gj, pj)) in g.iter().zip(&p).enumerate() {
            let expected = pj - if j == 1 { 1.0 } else { 0.0 };
            assert_eq!(*gj, expected);
        }
    }

    #[test]
    fn all_class_gradient_matches_central_differences() {
        let logits = [0.4f64, -0.7, 1.1, 0.05];
        let h = 1e-6;
        let obj = Objective::FocalAllClasses { gamma: 1.5 };
        let an = obj.evaluate(&logits, Label(0)).grad;
        for i in 0..logits.len() {
            let mut plus = logits;
            let mut minus = logits;
            plus[i] += h;
            minus[i] -= h;
            let fd = (obj.evaluate(&plus, Label(0)).loss - obj.evaluate(&minus, Label(0)).loss) / (2.0 * h);
            assert!((fd - an[i]).abs() <= 1e-5 * an[i].abs().max(fd.abs()).max(1e-6));
        }
    }

    #[test]
    fn clamping_is_reported() {
        let eval = Objective::Focal { gamma: 2.0 }.evaluate(&[-800.0f64, 800.0], Label(0));
        assert!(eval.clamped);
        assert!(eval.loss.is_finite());
        assert!((eval.loss - -(PROB_FLOOR.ln()) * (1.0 - PROB_FLOOR).powf(2.0)).abs() < 1e-9);
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbVector::new(vec![0.25f32, 0.75]).is_ok());
    }

    #[test]
    fn batch_mean_is_arithmetic_mean() {
        let mut b = LossBatch::new();
        assert_eq!(b.mean(), 0.0);
        for l in [0.5, 1.5, 2.0, 4.0] {
            b.push(l);
        }
        assert_eq!(b.mean(), 2.0);
    }

    fn arb_prob_and_label() -> impl Strategy<Value = (ProbVector<f64>, Label)> {
        (2usize..12).prop_flat_map(|k| {
            (proptest::collection::vec(1e-3f64..1.0, k), 0..k).prop_map(|(raw, y)| {
                let total: f64 = raw.iter().sum();
                (ProbVector::new(raw.iter().map(|r| r / total).collect()).unwrap(), Label(y))
            })
        })
    }

    proptest! {
        #[test]
        fn gamma_zero_is_cross_entropy((p, y) in arb_prob_and_label()) {
            prop_assert!((focal_loss(&p, y, 0.0) - ce_loss(&p, y)).abs() <= 1e-12);
        }

        #[test]
        fn focal_down_weights(py in 0.01f64..0.99, g1 in 0.0f64..4.0, dg in 0.01f64..2.0) {
            let p = two(py);
            let lo = focal_loss(&p, Label(0), g1 + dg);
            let hi = focal_loss(&p, Label(0), g1);
            prop_assert!(lo < hi);
            prop_assert!(hi <= ce_loss(&p, Label(0)));
            prop_assert!(lo > 0.0);
        }

        #[test]
        fn focal_decreasing_in_true_prob(p1 in 0.01f64..0.98, dp in 0.005f64..0.01, gamma in 0.0f64..4.0) {
            let a = focal_loss(&two(p1), Label(0), gamma);
            let b = focal_loss(&two(p1 + dp), Label(0), gamma);
            prop_assert!(b < a);
        }

        #[test]
        fn literal_sum_at_gamma_zero_is_sum_of_logs((p, _y) in arb_prob_and_label()) {
            let direct: f64 = p.as_slice().iter().map(|v| -v.ln()).sum();
            prop_assert!((focal_loss_all_classes(&p, 0.0) - direct).abs() <= 1e-9);
        }
    }
}
