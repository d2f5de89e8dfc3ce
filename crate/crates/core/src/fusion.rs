//! Score-level fusion rules.
//!
//! Fusers fall into three families:
//!
//! * non-parametric rules: the arithmetic mean ([`fuse_average`]) and the
//!   Bayesian average `Πs / (Πs + Π(1 − s))` ([`fuse_bayesian`]);
//! * weighted means `Σwᵢsᵢ / Σwᵢ` ([`fuse_weighted`]) whose weights are given
//!   by hand or estimated as Pearson correlations between each matcher's
//!   validation scores and the mated labels ([`estimate_pcc_weights`]);
//! * a stacked logistic unit `σ(w·s + b)` trained by gradient descent on
//!   validation cross-entropy ([`train_perceptron`]).
//!
//! All rules map `[0, 1]^N` into `[0, 1]`. The non-parametric rules and the
//! weighted mean evaluate their inputs in sorted order, which makes them
//! exactly invariant under permutation of the matchers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::numeric;
use crate::scorebase::{record_from_pair, AlignedScores, ScoreRange, ScoreTable};

pub const DEFAULT_BAYES_EPSILON: f64 = 1e-6;

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::contract("cannot fuse an empty score list"));
    }
    if let Some(s) = scores.iter().find(|s| !(s.is_finite() && (0.0..=1.0).contains(*s))) {
        return Err(Error::contract(format!("fusion input {s} outside [0, 1]")));
    }
    Ok(())
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Arithmetic mean of the scores.
pub fn fuse_average(scores: &[f64]) -> Result<f64> {
    check_scores(scores)?;
    let m = numeric::mean(&sorted(scores)).expect("nonempty");
    Ok(m.clamp(0.0, 1.0))
}

/// Bayesian average `Πs / (Πs + Π(1 − s))` with scores clamped to `[ε, 1 − ε]`.
///
/// Evaluated as `1 / (1 + Π((1 − s)/s))` over the odds ratios in ascending
/// order, which keeps the result monotone in every argument.
pub fn fuse_bayesian(scores: &[f64], clamp_epsilon: f64) -> Result<f64> {
    check_scores(scores)?;
    if !(clamp_epsilon > 0.0 && clamp_epsilon < 0.5) {
        return Err(Error::contract(format!(
            "clamp epsilon {clamp_epsilon} must lie in (0, 0.5)"
        )));
    }
    let mut ratios: Vec<f64> = scores
        .iter()
        .map(|s| {
            let s = s.clamp(clamp_epsilon, 1.0 - clamp_epsilon);
            (1.0 - s) / s
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    let odds_against: f64 = ratios.iter().product();
    Ok((1.0 / (1.0 + odds_against)).clamp(0.0, 1.0))
}

/// Where a set of fusion weights came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightProvenance {
    Uniform,
    Pcc,
    Manual,
}

/// Nonnegative per-matcher weights for [`fuse_weighted`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub matcher_ids: Vec<String>,
    pub weights: Vec<f64>,
    pub provenance: WeightProvenance,
    /// Unclamped correlations for PCC-estimated weights.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_pcc: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FusionWeights {
    pub fn new(matcher_ids: Vec<String>, weights: Vec<f64>, provenance: WeightProvenance) -> Result<Self> {
        let w = FusionWeights {
            matcher_ids,
            weights,
            provenance,
            raw_pcc: Vec::new(),
            warnings: Vec::new(),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn uniform(matcher_ids: Vec<String>) -> Self {
        let weights = vec![1.0; matcher_ids.len()];
        FusionWeights {
            matcher_ids,
            weights,
            provenance: WeightProvenance::Uniform,
            raw_pcc: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.matcher_ids.len() {
            return Err(Error::contract(format!(
                "{} weights for {} matchers",
                self.weights.len(),
                self.matcher_ids.len()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::contract("weights must be finite and nonnegative"));
        }
        if !(self.weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::contract("weights must have a positive sum"));
        }
        Ok(())
    }
}

/// Weighted mean `Σwᵢsᵢ / Σwᵢ`.
pub fn fuse_weighted(scores: &[f64], weights: &FusionWeights) -> Result<f64> {
    check_scores(scores)?;
    weights.validate()?;
    if scores.len() != weights.weights.len() {
        return Err(Error::contract(format!(
            "{} scores for {} weights",
            scores.len(),
            weights.weights.len()
        )));
    }
    Ok(weighted_row(scores, &weights.weights))
}

fn weighted_row(scores: &[f64], weights: &[f64]) -> f64 {
    let mut pairs: Vec<(f64, f64)> = scores.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (s, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    numeric::weighted_mean(&s, &w)
        .expect("validated weights")
        .clamp(0.0, 1.0)
}

fn label_values(validation: &AlignedScores) -> Result<Vec<f64>> {
    let labels = validation.labels();
    let mated = labels.iter().filter(|&&m| m).count();
    if mated == 0 || mated == labels.len() {
        return Err(Error::contract(format!(
            "validation data must contain both classes, got {mated} mated of {}",
            labels.len()
        )));
    }
    Ok(labels.into_iter().map(|m| if m { 1.0 } else { 0.0 }).collect())
}

/// Weights equal to each matcher's Pearson correlation with the mated labels.
///
/// Negative correlations are clamped to zero. A zero-variance matcher gets
/// weight zero and a warning. If every weight ends up zero the result falls
/// back to uniform weights.
pub fn estimate_pcc_weights(validation: &AlignedScores) -> Result<FusionWeights> {
    let labels = label_values(validation)?;
    let mut weights = Vec::with_capacity(validation.n_matchers());
    let mut raw_pcc = Vec::with_capacity(validation.n_matchers());
    let mut warnings = Vec::new();
    for (j, id) in validation.matcher_ids().iter().enumerate() {
        match metrics::pcc(&validation.column(j), &labels) {
            Ok(r) => {
                raw_pcc.push(Some(r));
                weights.push(r.max(0.0));
            }
            Err(_) => {
                warnings.push(format!("matcher `{id}` has constant validation scores; weight set to 0"));
                raw_pcc.push(None);
                weights.push(0.0);
            }
        }
    }
    let mut provenance = WeightProvenance::Pcc;
    if weights.iter().all(|&w| w == 0.0) {
        warnings.push("no matcher correlates positively with the labels; using uniform weights".into());
        weights = vec![1.0; weights.len()];
        provenance = WeightProvenance::Uniform;
    }
    Ok(FusionWeights {
        matcher_ids: validation.matcher_ids().to_vec(),
        weights,
        provenance,
        raw_pcc,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptronHyper {
    pub learning_rate: f64,
    pub max_epochs: u32,
    pub tolerance: f64,
    /// Recorded for provenance; training itself is deterministic.
    pub seed: u64,
}

impl Default for PerceptronHyper {
    fn default() -> Self {
        PerceptronHyper {
            learning_rate: 0.05,
            max_epochs: 10_000,
            tolerance: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs_run: u32,
    pub converged: bool,
    pub seed: u64,
}

/// A logistic unit over the raw matcher scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptronFuser {
    pub matcher_ids: Vec<String>,
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub training_log: TrainingLog,
}

impl PerceptronFuser {
    pub fn logit(&self, row: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(row)
            .map(|(w, s)| w * s)
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        sigmoid(self.logit(row))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean cross-entropy and its gradient at `(w, b)`.
fn loss_and_gradient(x: &AlignedScores, y: &[f64], w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
    let n = y.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &yi) in x.rows().zip(y) {
        let z = w.iter().zip(row).map(|(a, s)| a * s).sum::<f64>() + b;
        loss += softplus(z) - yi * z;
        let r = sigmoid(z) - yi;
        for (g, s) in gw.iter_mut().zip(row) {
            *g += r * s;
        }
        gb += r;
    }
    gw.iter_mut().for_each(|g| *g /= n);
    (loss / n, gw, gb / n)
}

/// Fit `σ(w·s + b)` by full-batch gradient descent on mean cross-entropy.
///
/// Parameters start at zero. Training stops after `max_epochs` steps, when
/// an epoch lowers the loss by less than `tolerance`, or before any step that
/// would raise the loss, so the final loss never exceeds the initial one.
pub fn train_perceptron(validation: &AlignedScores, hyper: &PerceptronHyper) -> Result<PerceptronFuser> {
    let y = label_values(validation)?;
    if !(hyper.learning_rate > 0.0 && hyper.learning_rate.is_finite()) {
        return Err(Error::contract("learning rate must be positive"));
    }
    let mut w = vec![0.0; validation.n_matchers()];
    let mut b = 0.0;
    let (mut loss, mut gw, mut gb) = loss_and_gradient(validation, &y, &w, b);
    let initial_loss = loss;
    let mut epochs_run = 0;
    let mut converged = false;

    while epochs_run < hyper.max_epochs {
        let w_next: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a - hyper.learning_rate * g).collect();
        let b_next = b - hyper.learning_rate * gb;
        let (next_loss, next_gw, next_gb) = loss_and_gradient(validation, &y, &w_next, b_next);
        if !next_loss.is_finite() {
            return Err(Error::Training(format!("loss became {next_loss} at epoch {}", epochs_run + 1)));
        }
        if next_loss > loss {
            converged = true;
            break;
        }
        let gain = loss - next_loss;
        (w, b, loss, gw, gb) = (w_next, b_next, next_loss, next_gw, next_gb);
        epochs_run += 1;
        if gain < hyper.tolerance {
            converged = true;
            break;
        }
    }

    Ok(PerceptronFuser {
        matcher_ids: validation.matcher_ids().to_vec(),
        coefficients: w,
        bias: b,
        training_log: TrainingLog {
            initial_loss,
            final_loss: loss,
            epochs_run,
            converged,
            seed: hyper.seed,
        },
    })
}

/// Identifier of a fusion family, as used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    Avg,
    Bayes,
    PccAvg,
    Weighted,
    Perceptron,
}

/// Anything that turns one row of aligned scores into a fused score.
///
/// Implement this to add fusion rules beyond the built-in [`FusionMethod`].
pub trait ScoreFuser {
    fn kind(&self) -> FusionKind;

    /// Matchers the fuser was fitted for, in order; `None` for rules that
    /// accept any matcher set.
    fn fitted_matchers(&self) -> Option<&[String]>;

    fn fuse_row(&self, row: &[f64]) -> Result<f64>;
}

/// A ready-to-apply fusion rule.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionMethod {
    Average,
    Bayesian { epsilon: f64 },
    Weighted(FusionWeights),
    Perceptron(PerceptronFuser),
}

impl ScoreFuser for FusionMethod {
    fn kind(&self) -> FusionKind {
        match self {
            FusionMethod::Average => FusionKind::Avg,
            FusionMethod::Bayesian { .. } => FusionKind::Bayes,
            FusionMethod::Weighted(w) if w.provenance == WeightProvenance::Pcc => FusionKind::PccAvg,
            FusionMethod::Weighted(_) => FusionKind::Weighted,
            FusionMethod::Perceptron(_) => FusionKind::Perceptron,
        }
    }

    fn fitted_matchers(&self) -> Option<&[String]> {
        match self {
            FusionMethod::Weighted(w) => Some(&w.matcher_ids),
            FusionMethod::Perceptron(p) => Some(&p.matcher_ids),
            _ => None,
        }
    }

    fn fuse_row(&self, row: &[f64]) -> Result<f64> {
        match self {
            FusionMethod::Average => fuse_average(row),
            FusionMethod::Bayesian { epsilon } => fuse_bayesian(row, *epsilon),
            FusionMethod::Weighted(w) => fuse_weighted(row, w),
            FusionMethod::Perceptron(p) => {
                check_scores(row)?;
                Ok(p.predict(row))
            }
        }
    }
}

/// Fused scores of one method, labelled like the input comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedTable {
    pub kind: FusionKind,
    pub table: ScoreTable,
}

/// Fuse every row of `test`. Row order is preserved.
pub fn apply_fusion<F: ScoreFuser + ?Sized>(
    fuser: &F,
    method_id: &str,
    test: &AlignedScores,
) -> Result<FusedTable> {
    if let Some(ids) = fuser.fitted_matchers() {
        if ids != test.matcher_ids() {
            return Err(Error::contract(format!(
                "fuser fitted for matchers {ids:?} but data has {:?}",
                test.matcher_ids()
            )));
        }
    }
    let records = test
        .pairs()
        .iter()
        .zip(test.rows())
        .map(|(p, row)| Ok(record_from_pair(p, fuser.fuse_row(row)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FusedTable {
        kind: fuser.kind(),
        table: ScoreTable::new(method_id, ScoreRange::UNIT, records)?,
    })
}

/// A fitted fusion artifact as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FusionParams {
    Weights(FusionWeights),
    Perceptron(PerceptronFuser),
}

impl FusionParams {
    pub fn into_method(self) -> Result<FusionMethod> {
        Ok(match self {
            FusionParams::Weights(w) => {
                w.validate()?;
                FusionMethod::Weighted(w)
            }
            FusionParams::Perceptron(p) => {
                if p.coefficients.len() != p.matcher_ids.len()
                    || p.coefficients.iter().chain([&p.bias]).any(|c| !c.is_finite())
                {
                    return Err(Error::contract("perceptron parameters are malformed"));
                }
                FusionMethod::Perceptron(p)
            }
        })
    }

    pub fn from_method(method: &FusionMethod) -> Option<Self> {
        match method {
            FusionMethod::Weighted(w) => Some(FusionParams::Weights(w.clone())),
            FusionMethod::Perceptron(p) => Some(FusionParams::Perceptron(p.clone())),
            _ => None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorebase::{PairKey, SettingDescriptor};
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    fn aligned(columns: &[Vec<f64>], labels: &[bool]) -> AlignedScores {
        let setting = SettingDescriptor::new("cam", 1.0, "d").unwrap();
        let pairs = labels
            .iter()
            .enumerate()
            .map(|(i, &m)| PairKey {
                probe_id: format!("p{i}"),
                reference_id: format!("r{i}"),
                probe_subject: format!("s{i}"),
                reference_subject: if m { format!("s{i}") } else { format!("t{i}") },
                mated: m,
                setting: setting.clone(),
            })
            .collect();
        AlignedScores::from_columns(ids(columns.len()), pairs, columns).unwrap()
    }

    #[test]
    fn average_examples() {
        assert_eq!(fuse_average(&[0.2, 0.4, 0.6]).unwrap(), 0.4);
        assert_eq!(fuse_average(&[0.37]).unwrap(), 0.37);
        assert_eq!(fuse_average(&[0.9; 4]).unwrap(), 0.9);
        assert!(fuse_average(&[]).is_err());
        assert!(fuse_average(&[1.5]).is_err());
    }

    #[test]
    fn bayesian_examples() {
        assert_eq!(fuse_bayesian(&[0.5, 0.5], 1e-6).unwrap(), 0.5);
        assert!((fuse_bayesian(&[0.8, 0.8], 1e-6).unwrap() - 0.64 / 0.68).abs() < 1e-12);
        assert!((fuse_bayesian(&[0.9, 0.1], 1e-6).unwrap() - 0.5).abs() < 1e-12);
        assert!((fuse_bayesian(&[1.0, 0.0], 1e-6).unwrap() - 0.5).abs() < 1e-6);
        assert!(fuse_bayesian(&[0.5], 0.0).is_err());
        assert!(fuse_bayesian(&[0.5], 0.5).is_err());
    }

    #[test]
    fn weighted_examples() {
        let w = |v: &[f64]| FusionWeights::new(ids(v.len()), v.to_vec(), WeightProvenance::Manual).unwrap();
        assert_eq!(fuse_weighted(&[0.9, 0.3], &w(&[1.0, 0.0])).unwrap(), 0.9);
        assert_eq!(fuse_weighted(&[0.9, 0.3], &w(&[2.0, 1.0])).unwrap(), 0.7);
        let scores = [0.13, 0.77, 0.42];
        assert_eq!(
            fuse_weighted(&scores, &FusionWeights::uniform(ids(3))).unwrap(),
            fuse_average(&scores).unwrap()
        );
        assert!(fuse_weighted(&[0.9], &w(&[1.0, 1.0])).is_err());
        assert!(FusionWeights::new(ids(2), vec![0.0, 0.0], WeightProvenance::Manual).is_err());
        assert!(FusionWeights::new(ids(2), vec![1.0, -0.5], WeightProvenance::Manual).is_err());
        assert!(FusionWeights::new(ids(2), vec![1.0], WeightProvenance::Manual).is_err());
    }

    #[test]
    fn pcc_weight_for_perfect_and_anti_correlated_matchers() {
        let labels = [true, false, true, false, false, true];
        let y: Vec<f64> = labels.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let flipped: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
        let w = estimate_pcc_weights(&aligned(&[y.clone(), flipped], &labels)).unwrap();
        assert_eq!(w.provenance, WeightProvenance::Pcc);
        assert!((w.weights[0] - 1.0).abs() < 1e-15);
        assert_eq!(w.weights[1], 0.0);
        assert!((w.raw_pcc[1].unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pcc_weights_fall_back_to_uniform() {
        let labels = [true, false, true, false];
        let anti = vec![0.1, 0.9, 0.2, 0.8];
        let w = estimate_pcc_weights(&aligned(&[anti], &labels)).unwrap();
        assert_eq!(w.provenance, WeightProvenance::Uniform);
        assert_eq!(w.weights, [1.0]);
        assert!(!w.warnings.is_empty());
    }

    #[test]
    fn pcc_weights_zero_variance_column_warns() {
        let labels = [true, false, true, false];
        let w = estimate_pcc_weights(&aligned(&[vec![0.9, 0.1, 0.8, 0.2], vec![0.5; 4]], &labels)).unwrap();
        assert_eq!(w.weights[1], 0.0);
        assert_eq!(w.raw_pcc[1], None);
        assert_eq!(w.warnings.len(), 1);
    }

    #[test]
    fn single_class_validation_is_rejected() {
        let a = aligned(&[vec![0.1, 0.2]], &[true, true]);
        assert!(matches!(estimate_pcc_weights(&a), Err(Error::Contract(_))));
        assert!(matches!(train_perceptron(&a, &PerceptronHyper::default()), Err(Error::Contract(_))));
    }

    #[test]
    fn perceptron_separates_label_copy() {
        let labels: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let y: Vec<f64> = labels.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let p = train_perceptron(&aligned(std::slice::from_ref(&y), &labels), &PerceptronHyper::default()).unwrap();
        assert!(p.training_log.final_loss <= p.training_log.initial_loss);
        for (&m, &s) in labels.iter().zip(&y) {
            assert_eq!(p.predict(&[s]) >= 0.5, m);
        }
    }

    #[test]
    fn perceptron_learns_negative_weight_for_flipped_labels() {
        let labels: Vec<bool> = (0..60).map(|i| i % 2 == 0).collect();
        let anti: Vec<f64> = labels.iter().map(|&m| if m { 0.2 } else { 0.8 }).collect();
        let p = train_perceptron(&aligned(&[anti], &labels), &PerceptronHyper::default()).unwrap();
        assert!(p.coefficients[0] < 0.0);
    }

    #[test]
    fn perceptron_stops_at_max_epochs() {
        let labels = [true, false, true, false];
        let hyper = PerceptronHyper {
            max_epochs: 3,
            ..Default::default()
        };
        let p = train_perceptron(&aligned(&[vec![0.9, 0.1, 0.7, 0.3]], &labels), &hyper).unwrap();
        assert_eq!(p.training_log.epochs_run, 3);
        assert!(!p.training_log.converged);
        assert!((p.training_log.initial_loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn apply_preserves_rows_and_checks_matchers() {
        let labels = [true, false, true];
        let a = aligned(&[vec![0.9, 0.2, 0.6]], &labels);
        let avg = apply_fusion(&FusionMethod::Average, "avg", &a).unwrap();
        assert_eq!(avg.table.scores(), a.column(0));
        assert_eq!(avg.kind, FusionKind::Avg);

        let half = aligned(&[vec![0.5; 3], vec![0.5; 3]], &labels);
        let bayes = apply_fusion(&FusionMethod::Bayesian { epsilon: 1e-6 }, "b", &half).unwrap();
        assert_eq!(bayes.table.scores(), [0.5; 3]);

        let wrong = FusionMethod::Weighted(FusionWeights::uniform(vec!["x".into()]));
        assert!(matches!(apply_fusion(&wrong, "w", &a), Err(Error::Contract(_))));
    }

    #[test]
    fn uniform_weighted_equals_average_on_table() {
        let labels = [true, false, true, false, true];
        let a = aligned(
            &[vec![0.11, 0.52, 0.93, 0.04, 0.65], vec![0.7, 0.31, 0.22, 0.89, 0.5], vec![0.3, 0.3, 0.6, 0.1, 0.95]],
            &labels,
        );
        let avg = apply_fusion(&FusionMethod::Average, "a", &a).unwrap().table.scores();
        let w = apply_fusion(&FusionMethod::Weighted(FusionWeights::uniform(ids(3))), "w", &a)
            .unwrap()
            .table
            .scores();
        for (x, y) in avg.iter().zip(&w) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn params_round_trip_through_json() {
        let p = FusionParams::Weights(FusionWeights::new(ids(2), vec![0.5, 0.25], WeightProvenance::Manual).unwrap());
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains(r#""kind":"weights""#));
        assert_eq!(serde_json::from_str::<FusionParams>(&json).unwrap(), p);
    }

    fn unit_scores() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 1..8)
    }

    proptest! {
        #[test]
        fn fusers_stay_in_unit_interval(s in unit_scores()) {
            let a = fuse_average(&s).unwrap();
            let b = fuse_bayesian(&s, DEFAULT_BAYES_EPSILON).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b > 0.0 && b < 1.0 || s.len() > 40);
        }

        #[test]
        fn permutation_invariance(s in unit_scores(), seed in any::<u64>()) {
            let mut perm: Vec<usize> = (0..s.len()).collect();
            crate::random::Stream::new(seed, 0).shuffle(&mut perm);
            let t: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
            prop_assert_eq!(fuse_average(&s).unwrap(), fuse_average(&t).unwrap());
            prop_assert_eq!(fuse_bayesian(&s, 1e-6).unwrap(), fuse_bayesian(&t, 1e-6).unwrap());
            let w: Vec<f64> = (0..s.len()).map(|i| 1.0 + i as f64).collect();
            let wp: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
            let fw = FusionWeights::new(ids(s.len()), w, WeightProvenance::Manual).unwrap();
            let fwp = FusionWeights::new(ids(s.len()), wp, WeightProvenance::Manual).unwrap();
            prop_assert_eq!(fuse_weighted(&s, &fw).unwrap(), fuse_weighted(&t, &fwp).unwrap());
        }

        #[test]
        fn monotone_in_each_argument(s in unit_scores(), idx in any::<prop::sample::Index>(), bump in 0.0f64..1.0) {
            let i = idx.index(s.len());
            let mut up = s.clone();
            up[i] = (s[i] + bump * (1.0 - s[i])).min(1.0);
            prop_assert!(fuse_average(&up).unwrap() >= fuse_average(&s).unwrap());
            prop_assert!(fuse_bayesian(&up, 1e-6).unwrap() >= fuse_bayesian(&s, 1e-6).unwrap());
            let w: Vec<f64> = (0..s.len()).map(|k| 0.5 + k as f64).collect();
            let fw = FusionWeights::new(ids(s.len()), w, WeightProvenance::Manual).unwrap();
            prop_assert!(fuse_weighted(&up, &fw).unwrap() >= fuse_weighted(&s, &fw).unwrap());
        }

        #[test]
        fn agreement_behaviour(p in 0.0f64..=1.0, n in 1usize..6) {
            let same = vec![p; n];
            prop_assert!((fuse_average(&same).unwrap() - p).abs() <= f64::EPSILON);
            let fw = FusionWeights::uniform(ids(n));
            prop_assert!((fuse_weighted(&same, &fw).unwrap() - p).abs() <= f64::EPSILON);
            let single = fuse_bayesian(&[p], 1e-6).unwrap();
            prop_assert!((single - p.clamp(1e-6, 1.0 - 1e-6)).abs() < 1e-12);
            if p > 0.5 && p < 1.0 - 1e-6 {
                prop_assert!(fuse_bayesian(&[p, p], 1e-6).unwrap() > p);
            }
        }

        #[test]
        fn pcc_weights_are_affine_invariant(
            cols in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 24), 2..4),
            lo in 0.0f64..0.4,
            width in 0.05f64..0.6,
        ) {
            let labels: Vec<bool> = (0..24).map(|i| i % 3 != 0).collect();
            let base = estimate_pcc_weights(&aligned(&cols, &labels)).unwrap();
            let mut moved = cols.clone();
            moved[0] = cols[0].iter().map(|v| lo + width * v).collect();
            let other = estimate_pcc_weights(&aligned(&moved, &labels)).unwrap();
            for (a, b) in base.weights.iter().zip(&other.weights) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn perceptron_ranking_survives_positive_scaling(
            coef in prop::collection::vec(-5.0f64..5.0, 3),
            bias in -3.0f64..3.0,
            scale in 0.1f64..10.0,
            rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 2..30),
        ) {
            let log = TrainingLog { initial_loss: 0.0, final_loss: 0.0, epochs_run: 0, converged: true, seed: 0 };
            let p = PerceptronFuser { matcher_ids: ids(3), coefficients: coef.clone(), bias, training_log: log.clone() };
            let q = PerceptronFuser {
                matcher_ids: ids(3),
                coefficients: coef.iter().map(|c| c * scale).collect(),
                bias: bias * scale,
                training_log: log,
            };
            // ordering by one fuser's output never inverts the other's
            for (a, b) in [(&p, &q), (&q, &p)] {
                let mut idx: Vec<usize> = (0..rows.len()).collect();
                idx.sort_by(|&i, &j| a.predict(&rows[i]).total_cmp(&a.predict(&rows[j])));
                for w in idx.windows(2) {
                    let (lo, hi) = (&rows[w[0]], &rows[w[1]]);
                    if a.predict(lo) < a.predict(hi) {
                        prop_assert!(b.predict(lo) <= b.predict(hi));
                    }
                }
            }
        }
    }
}
