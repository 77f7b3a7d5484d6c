//! Multinomial-logit choice model: instances, assortments, choice
//! probabilities, Fisher information, lifted second moments, likelihood
//! derivatives, and the `kappa` nonlinearity constant.
//!
//! The outside option is a model flag, not a second code path: when enabled,
//! a virtual arm with feature vector 0 and utility 0 joins every offered set,
//! so the information and likelihood formulas are written once over
//! `S ∪ {0}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Utilities are clamped to this band after max-shifting so that MLE iterates
/// wandering far from the ball cannot overflow the exponentials.
pub const UTILITY_CLAMP: f64 = 50.0;

/// Singular-value tolerance for the pairwise-difference spanning check.
const SPAN_TOL: f64 = 1e-10;

/// An arm set with revenues and model flags.
#[derive(Clone, Debug)]
pub struct Instance {
    features: DMatrix<f64>,
    revenues: Vec<f64>,
    k: usize,
    b: f64,
    theta_star: Option<DVector<f64>>,
    outside_option: bool,
}

/// Serialized form; field names are part of the on-disk format.
#[derive(Serialize, Deserialize)]
struct InstanceJson {
    features: Vec<Vec<f64>>,
    revenues: Vec<f64>,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "B")]
    b: f64,
    theta_star: Option<Vec<f64>>,
    outside_option: bool,
}

impl Instance {
    pub fn new(
        features: DMatrix<f64>,
        revenues: Vec<f64>,
        k: usize,
        b: f64,
        theta_star: Option<DVector<f64>>,
        outside_option: bool,
    ) -> Result<Self> {
        let n = features.nrows();
        let d = features.ncols();
        if n == 0 || d == 0 {
            return Err(Error::InvalidInstance("empty feature matrix".into()));
        }
        if revenues.len() != n {
            return Err(Error::InvalidInstance(format!(
                "{} revenues for {} arms",
                revenues.len(),
                n
            )));
        }
        if !(1..=n).contains(&k) {
            return Err(Error::InvalidInstance(format!("K={k} outside [1, {n}]")));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::InvalidInstance(format!("B={b} must be finite and >= 0")));
        }
        for (i, r) in revenues.iter().enumerate() {
            if !(*r >= 0.0 && *r <= 1.0) {
                return Err(Error::InvalidInstance(format!("revenue r[{i}]={r} outside [0,1]")));
            }
        }
        for i in 0..n {
            let norm = features.row(i).norm();
            if !norm.is_finite() || norm > 1.0 + 1e-12 {
                return Err(Error::InvalidInstance(format!(
                    "||a_{i}|| = {norm} exceeds 1"
                )));
            }
        }
        if let Some(ts) = &theta_star {
            if ts.len() != d {
                return Err(Error::InvalidInstance("theta_star dimension mismatch".into()));
            }
            if !ts.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInstance("theta_star not finite".into()));
            }
            if ts.norm() > b + 1e-12 {
                return Err(Error::InvalidInstance(format!(
                    "||theta_star|| = {} exceeds B = {b}",
                    ts.norm()
                )));
            }
        }
        if !outside_option {
            // Pairwise differences a_i - a_0 must span R^d; otherwise the
            // parameter is not identifiable and the instance is rejected
            // rather than reparameterized.
            if n < 2 {
                return Err(Error::InvalidInstance(
                    "no-outside-option model needs at least 2 arms".into(),
                ));
            }
            let mut diffs = DMatrix::zeros(n - 1, d);
            for i in 1..n {
                for j in 0..d {
                    diffs[(i - 1, j)] = features[(i, j)] - features[(0, j)];
                }
            }
            let sv = diffs.singular_values();
            let rank = sv.iter().filter(|&&s| s > SPAN_TOL).count();
            if rank < d {
                return Err(Error::InvalidInstance(format!(
                    "pairwise feature differences span a rank-{rank} subspace of R^{d} \
                     (smallest kept singular value tolerance {SPAN_TOL:.0e}); \
                     reduce d or fix the features"
                )));
            }
        }
        Ok(Self { features, revenues, k, b, theta_star, outside_option })
    }

    pub fn n_arms(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn param_bound(&self) -> f64 {
        self.b
    }

    pub fn outside_option(&self) -> bool {
        self.outside_option
    }

    pub fn revenues(&self) -> &[f64] {
        &self.revenues
    }

    pub fn theta_star(&self) -> Option<&DVector<f64>> {
        self.theta_star.as_ref()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    /// Feature vector of arm `i` as an owned column.
    pub fn arm(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    /// Smallest admissible assortment size under the model flag.
    pub fn min_assortment_size(&self) -> usize {
        if self.outside_option {
            1
        } else {
            2
        }
    }

    /// All arm utilities at `theta`.
    pub fn utilities(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.features * theta
    }

    pub fn validate_assortment(&self, s: &Assortment) -> Result<()> {
        let lo = self.min_assortment_size();
        if s.len() < lo || s.len() > self.k {
            return Err(Error::InvalidAssortment(format!(
                "|S| = {} outside [{lo}, {}]",
                s.len(),
                self.k
            )));
        }
        if let Some(&last) = s.items().last() {
            if last >= self.n_arms() {
                return Err(Error::InvalidAssortment(format!(
                    "item {last} out of range (N = {})",
                    self.n_arms()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let raw = InstanceJson {
            features: (0..self.n_arms())
                .map(|i| self.features.row(i).iter().copied().collect())
                .collect(),
            revenues: self.revenues.clone(),
            k: self.k,
            b: self.b,
            theta_star: self.theta_star.as_ref().map(|t| t.iter().copied().collect()),
            outside_option: self.outside_option,
        };
        serde_json::to_value(raw).expect("instance serialization")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let raw: InstanceJson = serde_json::from_value(value.clone())?;
        let n = raw.features.len();
        let d = raw.features.first().map(|r| r.len()).unwrap_or(0);
        if raw.features.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInstance("ragged feature rows".into()));
        }
        let features = DMatrix::from_fn(n, d, |i, j| raw.features[i][j]);
        Instance::new(
            features,
            raw.revenues,
            raw.k,
            raw.b,
            raw.theta_star.map(DVector::from_vec),
            raw.outside_option,
        )
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        Self::from_json(&value)
    }
}

/// A sorted, duplicate-free set of arm indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assortment {
    items: Vec<usize>,
}

impl Assortment {
    /// Builds from arbitrary indices, sorting and rejecting duplicates.
    pub fn new(mut items: Vec<usize>) -> Result<Self> {
        items.sort_unstable();
        if items.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidAssortment("duplicate items".into()));
        }
        Ok(Self { items })
    }

    /// The empty set; representable as a revenue-comparison candidate but
    /// never a valid offer.
    pub fn empty() -> Self {
        Self { items: Vec::new() }
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.items.binary_search(&item).is_ok()
    }

    /// "3|7|9" rendering used in CSV traces.
    pub fn label(&self) -> String {
        if self.items.is_empty() {
            return "-".into();
        }
        self.items
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join("|")
    }
}

impl std::fmt::Display for Assortment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{{}}}", self.label())
    }
}

/// Choice distribution over an offered set, with the outside-option mass kept
/// separate so item probabilities stay aligned with `Assortment::items`.
#[derive(Clone, Debug)]
pub struct ChoiceProbs {
    pub items: Vec<usize>,
    pub probs: Vec<f64>,
    /// `Some` exactly when the instance has the outside option.
    pub outside: Option<f64>,
}

impl ChoiceProbs {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.outside.unwrap_or(0.0)
    }

    /// Probability of a recorded choice (`None` = outside option).
    pub fn prob_of(&self, choice: Option<usize>) -> Option<f64> {
        match choice {
            None => self.outside,
            Some(item) => self
                .items
                .iter()
                .position(|&i| i == item)
                .map(|pos| self.probs[pos]),
        }
    }
}

fn check_theta(inst: &Instance, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != inst.dim() {
        return Err(Error::NonFinite(format!(
            "theta has dimension {}, expected {}",
            theta.len(),
            inst.dim()
        )));
    }
    if !theta.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("theta has non-finite entries".into()));
    }
    Ok(())
}

/// Shifted, clamped exponentials of the utilities of `S` (plus the outside
/// utility 0 when the model has one). Returns (exp weights aligned with
/// items, outside exp weight or 0, shift).
fn shifted_weights(inst: &Instance, s: &Assortment, theta: &DVector<f64>) -> (Vec<f64>, f64) {
    let mut utils: Vec<f64> = s
        .items()
        .iter()
        .map(|&i| inst.features.row(i).transpose().dot(theta))
        .collect();
    let mut max_u = utils.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if inst.outside_option {
        max_u = max_u.max(0.0);
    }
    let outside = if inst.outside_option {
        (0.0 - max_u).clamp(-UTILITY_CLAMP, UTILITY_CLAMP).exp()
    } else {
        0.0
    };
    for u in utils.iter_mut() {
        *u = (*u - max_u).clamp(-UTILITY_CLAMP, UTILITY_CLAMP).exp();
    }
    (utils, outside)
}

/// MNL choice probabilities of `S` at `theta`.
pub fn choice_probs(inst: &Instance, s: &Assortment, theta: &DVector<f64>) -> Result<ChoiceProbs> {
    inst.validate_assortment(s)?;
    check_theta(inst, theta)?;
    let (w, w0) = shifted_weights(inst, s, theta);
    let denom: f64 = w.iter().sum::<f64>() + w0;
    let probs: Vec<f64> = w.iter().map(|v| v / denom).collect();
    let outside = if inst.outside_option {
        // p(0) = 1 - sum p(i), computed as its own ratio for positivity.
        Some(w0 / denom)
    } else {
        None
    };
    Ok(ChoiceProbs { items: s.items().to_vec(), probs, outside })
}

/// Fisher information of one offer: the centered second moment of the
/// features under the choice distribution, with the outside option entering
/// as a zero feature vector.
pub fn fisher_info(inst: &Instance, s: &Assortment, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let p = choice_probs(inst, s, theta)?;
    let d = inst.dim();
    let mut second = DMatrix::zeros(d, d);
    let mut mean = DVector::zeros(d);
    for (pos, &i) in p.items.iter().enumerate() {
        let a = inst.arm(i);
        second.syger(p.probs[pos], &a, &a, 1.0);
        mean.axpy(p.probs[pos], &a, 1.0);
    }
    // Outside arm contributes nothing to either sum (feature vector 0).
    let mut info = second;
    info.syger(-1.0, &mean, &mean, 1.0);
    // syger only touches the lower triangle; mirror it.
    info.fill_upper_triangle_with_lower_triangle();
    Ok(info)
}

/// Lifted uncentered second moment over features (a_i, 1); the outside row is
/// (0, 1), so the bottom-right entry is exactly 1 in both model variants.
pub fn lifted_info(inst: &Instance, s: &Assortment, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let p = choice_probs(inst, s, theta)?;
    let d = inst.dim();
    let mut second = DMatrix::zeros(d, d);
    let mut mean = DVector::zeros(d);
    for (pos, &i) in p.items.iter().enumerate() {
        let a = inst.arm(i);
        second.syger(p.probs[pos], &a, &a, 1.0);
        mean.axpy(p.probs[pos], &a, 1.0);
    }
    second.fill_upper_triangle_with_lower_triangle();
    let mut lifted = DMatrix::zeros(d + 1, d + 1);
    lifted.view_mut((0, 0), (d, d)).copy_from(&second);
    for j in 0..d {
        lifted[(d, j)] = mean[j];
        lifted[(j, d)] = mean[j];
    }
    lifted[(d, d)] = 1.0;
    Ok(lifted)
}

/// One observation: the offered set and the chosen item (`None` = outside).
pub type Observation = (Assortment, Option<usize>);

/// Regularized negative log-likelihood with exact gradient and Hessian.
///
/// The Hessian is feedback-independent: it equals the sum of per-offer Fisher
/// matrices plus `lambda * I`. The loop is allocation-free per observation;
/// refits over long traces call this every round.
pub fn nll_loss_grad_hess(
    inst: &Instance,
    dataset: &[Observation],
    theta: &DVector<f64>,
    lambda: f64,
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    check_theta(inst, theta)?;
    assert!(lambda > 0.0, "ridge weight must be positive");
    let d = inst.dim();
    let feats = &inst.features;
    let utils = inst.utilities(theta);
    // The clamp bounds every utility to ±50, so the raw exponentials cannot
    // overflow and one exp per arm serves the whole dataset.
    let w_all: Vec<f64> = utils
        .iter()
        .map(|u| u.clamp(-UTILITY_CLAMP, UTILITY_CLAMP).exp())
        .collect();
    let w0 = if inst.outside_option { 1.0 } else { 0.0 };
    let mut loss = 0.5 * lambda * theta.norm_squared();
    let mut grad = theta * lambda;
    let mut hess = DMatrix::identity(d, d) * lambda;
    let mut mean = vec![0.0_f64; d];
    for (s, choice) in dataset {
        inst.validate_assortment(s)?;
        let mut denom = w0;
        for &i in s.items() {
            denom += w_all[i];
        }
        mean.iter_mut().for_each(|v| *v = 0.0);
        for &i in s.items() {
            let p = w_all[i] / denom;
            for j in 0..d {
                mean[j] += p * feats[(i, j)];
            }
            // Lower triangle of the uncentered second moment.
            for j in 0..d {
                let pa = p * feats[(i, j)];
                for l in 0..=j {
                    hess[(j, l)] += pa * feats[(i, l)];
                }
            }
        }
        for j in 0..d {
            for l in 0..=j {
                hess[(j, l)] -= mean[j] * mean[l];
            }
        }
        // loss contribution: log denom - chosen utility (clamped scale).
        let chosen_term = match choice {
            None => {
                if !inst.outside_option {
                    return Err(Error::InvalidAssortment(
                        "outside choice recorded without outside option".into(),
                    ));
                }
                0.0
            }
            Some(item) => {
                if !s.contains(*item) {
                    return Err(Error::InvalidAssortment(format!(
                        "chosen item {item} not offered in {s}"
                    )));
                }
                utils[*item].clamp(-UTILITY_CLAMP, UTILITY_CLAMP)
            }
        };
        loss += denom.ln() - chosen_term;
        match choice {
            None => {
                for j in 0..d {
                    grad[j] += mean[j];
                }
            }
            Some(item) => {
                for j in 0..d {
                    grad[j] += mean[j] - feats[(*item, j)];
                }
            }
        }
    }
    hess.fill_upper_triangle_with_lower_triangle();
    Ok((loss, grad, hess))
}

/// Exact `kappa`: the minimum over assortments and offered items of
/// `p(i|S) * p(0|S)` under the outside-option model.
///
/// For a fixed item the product is minimized by padding the set with the
/// K - 1 largest-utility other arms, so the global minimum needs only a sort
/// and a linear scan per item.
pub fn kappa(inst: &Instance, theta: &DVector<f64>) -> Result<f64> {
    if !inst.outside_option {
        return Err(Error::ModelFlag("kappa requires the outside-option model".into()));
    }
    check_theta(inst, theta)?;
    let utils = inst.utilities(theta);
    let exp_u: Vec<f64> = utils
        .iter()
        .map(|u| u.clamp(-UTILITY_CLAMP, UTILITY_CLAMP).exp())
        .collect();
    let n = exp_u.len();
    let k = inst.capacity();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| exp_u[b].partial_cmp(&exp_u[a]).unwrap().then(a.cmp(&b)));
    let mut best = f64::INFINITY;
    for i in 0..n {
        let mut denom = 1.0 + exp_u[i];
        let mut taken = 0;
        for &j in &order {
            if taken == k.saturating_sub(1) {
                break;
            }
            if j != i {
                denom += exp_u[j];
                taken += 1;
            }
        }
        let value = exp_u[i] / (denom * denom);
        if value < best {
            best = value;
        }
    }
    Ok(best)
}

/// Conservative closed-form lower bound on `kappa` from the parameter-norm
/// bound alone: each offered item has weight in [e^-B, e^B].
pub fn kappa_lower_bound(k: usize, b: f64) -> f64 {
    let denom = 1.0 + k as f64 * b.exp();
    (-b).exp() / (denom * denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_instance(outside: bool) -> Instance {
        let features = DMatrix::from_row_slice(
            4,
            2,
            &[0.6, 0.0, 0.0, 0.7, -0.5, 0.3, 0.2, -0.6],
        );
        Instance::new(features, vec![0.5, 0.9, 0.2, 0.7], 3, 1.0, None, outside).unwrap()
    }

    #[test]
    fn construction_checks() {
        // Feature norm over 1 rejected.
        let f = DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 1.0]);
        assert!(Instance::new(f, vec![0.1, 0.2], 2, 1.0, None, true).is_err());
        // Rank-deficient differences rejected without outside option.
        let f = DMatrix::from_row_slice(3, 2, &[0.1, 0.0, 0.2, 0.0, 0.3, 0.0]);
        assert!(matches!(
            Instance::new(f.clone(), vec![0.1, 0.2, 0.3], 2, 1.0, None, false),
            Err(Error::InvalidInstance(_))
        ));
        // Same features fine with the outside option (no spanning condition).
        assert!(Instance::new(f, vec![0.1, 0.2, 0.3], 2, 1.0, None, true).is_ok());
    }

    #[test]
    fn uniform_probs_at_zero() {
        let inst = small_instance(false);
        let s = Assortment::new(vec![0, 1, 2]).unwrap();
        let p = choice_probs(&inst, &s, &DVector::zeros(2)).unwrap();
        for v in &p.probs {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(p.outside.is_none());
    }

    #[test]
    fn outside_singleton_half() {
        let inst = small_instance(true);
        let s = Assortment::new(vec![1]).unwrap();
        let p = choice_probs(&inst, &s, &DVector::zeros(2)).unwrap();
        assert!((p.probs[0] - 0.5).abs() < 1e-15);
        assert!((p.outside.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_two_arm_probs() {
        // d=1, features (0, ln 2), theta = 1: weights (1, 2) -> (1/3, 2/3).
        let f = DMatrix::from_row_slice(2, 1, &[0.0, 2.0_f64.ln()]);
        let inst = Instance::new(f, vec![0.0, 0.0], 2, 1.0, None, false).unwrap();
        let s = Assortment::new(vec![0, 1]).unwrap();
        let p = choice_probs(&inst, &s, &DVector::from_vec(vec![1.0])).unwrap();
        assert!((p.probs[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.probs[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fisher_pair_at_zero() {
        let inst = small_instance(false);
        let s = Assortment::new(vec![0, 1]).unwrap();
        let info = fisher_info(&inst, &s, &DVector::zeros(2)).unwrap();
        let diff = inst.arm(0) - inst.arm(1);
        let expected = 0.25 * &diff * diff.transpose();
        assert!((info - expected).norm() < 1e-14);
    }

    #[test]
    fn fisher_duplicate_features_vanishes() {
        let f = DMatrix::from_row_slice(4, 2, &[0.5, 0.1, 0.5, 0.1, 0.0, -0.4, 0.6, -0.2]);
        let inst = Instance::new(f, vec![0.0; 4], 2, 1.0, None, false).unwrap();
        let s = Assortment::new(vec![0, 1]).unwrap();
        let theta = DVector::from_vec(vec![0.3, -0.2]);
        let info = fisher_info(&inst, &s, &theta).unwrap();
        assert!(info.norm() < 1e-14);
    }

    #[test]
    fn fisher_outside_singleton() {
        let inst = small_instance(true);
        let s = Assortment::new(vec![0]).unwrap();
        let info = fisher_info(&inst, &s, &DVector::zeros(2)).unwrap();
        let a = inst.arm(0);
        let expected = 0.25 * &a * a.transpose();
        assert!((info - expected).norm() < 1e-14);
    }

    #[test]
    fn lifted_corner_and_schur() {
        for outside in [false, true] {
            let inst = small_instance(outside);
            let s = Assortment::new(vec![0, 2, 3]).unwrap();
            let theta = DVector::from_vec(vec![0.4, -0.7]);
            let lifted = lifted_info(&inst, &s, &theta).unwrap();
            assert_eq!(lifted[(2, 2)], 1.0);
            let d = 2;
            let top = lifted.view((0, 0), (d, d)).into_owned();
            let col = lifted.view((0, d), (d, 1)).into_owned();
            let schur = top - &col * col.transpose();
            let fisher = fisher_info(&inst, &s, &theta).unwrap();
            assert!((schur - fisher).norm() < 1e-12);
        }
    }

    #[test]
    fn loss_empty_dataset_is_ridge() {
        let inst = small_instance(true);
        let theta = DVector::from_vec(vec![0.3, -0.1]);
        let (loss, grad, hess) = nll_loss_grad_hess(&inst, &[], &theta, 2.0).unwrap();
        assert!((loss - 1.0 * theta.norm_squared()).abs() < 1e-15);
        assert!((grad - &theta * 2.0).norm() < 1e-15);
        assert!((hess - DMatrix::identity(2, 2) * 2.0).norm() < 1e-15);
    }

    #[test]
    fn hessian_matches_fisher_sum() {
        let inst = small_instance(true);
        let theta = DVector::from_vec(vec![0.5, 0.2]);
        let data: Vec<Observation> = vec![
            (Assortment::new(vec![0, 1]).unwrap(), Some(1)),
            (Assortment::new(vec![2]).unwrap(), None),
            (Assortment::new(vec![0, 2, 3]).unwrap(), Some(3)),
        ];
        let (_, _, hess) = nll_loss_grad_hess(&inst, &data, &theta, 0.7).unwrap();
        let mut expected = DMatrix::identity(2, 2) * 0.7;
        for (s, _) in &data {
            expected += fisher_info(&inst, s, &theta).unwrap();
        }
        assert!((hess - expected).norm() < 1e-12);
    }

    #[test]
    fn chosen_item_must_be_offered() {
        let inst = small_instance(true);
        let data = vec![(Assortment::new(vec![0, 1]).unwrap(), Some(3))];
        assert!(nll_loss_grad_hess(&inst, &data, &DVector::zeros(2), 1.0).is_err());
    }

    #[test]
    fn kappa_trivial_cases() {
        // N = 1, K = 1, theta = 0: p = p0 = 1/2.
        let f = DMatrix::from_row_slice(1, 1, &[0.5]);
        let inst = Instance::new(f, vec![0.3], 1, 1.0, None, true).unwrap();
        let k = kappa(&inst, &DVector::zeros(1)).unwrap();
        assert!((k - 0.25).abs() < 1e-15);

        // theta = 0, any N >= K: all weights 1 -> 1/(K+1)^2.
        let inst = small_instance(true);
        let k = kappa(&inst, &DVector::zeros(2)).unwrap();
        let expect = 1.0 / (4.0 * 4.0);
        assert!((k - expect).abs() < 1e-15, "{k} vs {expect}");
    }

    #[test]
    fn kappa_needs_outside_option() {
        let inst = small_instance(false);
        assert!(matches!(
            kappa(&inst, &DVector::zeros(2)),
            Err(Error::ModelFlag(_))
        ));
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = small_instance(true);
        let v = inst.to_json();
        let back = Instance::from_json(&v).unwrap();
        assert_eq!(back.n_arms(), 4);
        assert_eq!(back.capacity(), 3);
        assert!((back.features() - inst.features()).norm() == 0.0);
    }
}
