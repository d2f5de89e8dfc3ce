//! Synthetic score generators and the oracles used to check the metric and
//! fusion stack against known answers.
//!
//! Every generator is a pure function of its parameters and seed. Draws for
//! each class (and, where relevant, each matcher or setting) come from their
//! own ChaCha8 substream, see [`crate::random`].

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::random::{stream_id, Stream};
use crate::scorebase::{
    split_subjects, AlignedScores, ComparisonRecord, PairKey, Partition, ScoreRange, ScoreTable,
    SettingDescriptor,
};

const NONMATED: u64 = 0;
const MATED: u64 = 1;

/// Class-conditional Gaussian score model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianScoreModel {
    pub mu_nonmated: f64,
    pub sigma_nonmated: f64,
    pub mu_mated: f64,
    pub sigma_mated: f64,
    #[serde(default)]
    pub clamp: bool,
    pub n_mated: usize,
    pub n_nonmated: usize,
    pub seed: u64,
    #[serde(default = "default_matcher_id")]
    pub matcher_id: String,
    #[serde(default)]
    pub setting: Option<SettingDescriptor>,
}

fn default_matcher_id() -> String {
    "synthetic".to_string()
}

pub fn synthetic_setting() -> SettingDescriptor {
    SettingDescriptor::new("synthetic", 1.0, "synthetic").expect("valid setting")
}

impl GaussianScoreModel {
    /// Model with equal class sizes and a shared standard deviation.
    pub fn symmetric(mu_nonmated: f64, mu_mated: f64, sigma: f64, n: usize, seed: u64) -> Self {
        GaussianScoreModel {
            mu_nonmated,
            sigma_nonmated: sigma,
            mu_mated,
            sigma_mated: sigma,
            clamp: false,
            n_mated: n,
            n_nonmated: n,
            seed,
            matcher_id: default_matcher_id(),
            setting: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu_nonmated", self.mu_nonmated), ("mu_mated", self.mu_mated)] {
            if !v.is_finite() {
                return Err(Error::contract(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [
            ("sigma_nonmated", self.sigma_nonmated),
            ("sigma_mated", self.sigma_mated),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::contract(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_mated == 0 || self.n_nonmated == 0 {
            return Err(Error::contract("both class sizes must be positive"));
        }
        Ok(())
    }

    // Clamping is harmless for the closed forms when both classes keep
    // their ±4σ bands inside [0, 1].
    fn check_unclamped(&self) -> Result<()> {
        if !self.clamp {
            return Ok(());
        }
        let inside = |mu: f64, sigma: f64| mu - 4.0 * sigma >= 0.0 && mu + 4.0 * sigma <= 1.0;
        if inside(self.mu_nonmated, self.sigma_nonmated) && inside(self.mu_mated, self.sigma_mated)
        {
            Ok(())
        } else {
            Err(Error::UnsupportedOracle(
                "closed forms assume unclamped normals; the ±4σ band of a class leaves [0, 1]"
                    .into(),
            ))
        }
    }
}

fn sample_class(seed: u64, class: u64, n: usize, mu: f64, sigma: f64, clamp: bool) -> Vec<f64> {
    let mut stream = Stream::new(seed, stream_id(&[class]));
    (0..n)
        .map(|_| {
            let x = mu + sigma * stream.standard_normal();
            if clamp {
                x.clamp(0.0, 1.0)
            } else {
                x
            }
        })
        .collect()
}

fn mated_key(i: usize, setting: &SettingDescriptor) -> PairKey {
    PairKey {
        probe_id: format!("m{i}-probe"),
        reference_id: format!("m{i}-ref"),
        probe_subject: format!("m{i}"),
        reference_subject: format!("m{i}"),
        mated: true,
        setting: setting.clone(),
    }
}

fn nonmated_key(i: usize, setting: &SettingDescriptor) -> PairKey {
    PairKey {
        probe_id: format!("n{i}-probe"),
        reference_id: format!("n{i}-ref"),
        probe_subject: format!("n{i}a"),
        reference_subject: format!("n{i}b"),
        mated: false,
        setting: setting.clone(),
    }
}

fn record(key: PairKey, score: f64) -> ComparisonRecord {
    ComparisonRecord {
        probe_id: key.probe_id,
        reference_id: key.reference_id,
        probe_subject: key.probe_subject,
        reference_subject: key.reference_subject,
        mated: key.mated,
        setting: key.setting,
        score,
    }
}

/// Draw a labelled score table from the model: mated rows first, then
/// non-mated. Clamped tables declare the range `[0, 1]`; unclamped ones
/// declare the smallest range containing both `[0, 1]` and every sample.
pub fn generate_scores(model: &GaussianScoreModel) -> Result<ScoreTable> {
    model.validate()?;
    let setting = model.setting.clone().unwrap_or_else(synthetic_setting);
    let mated = sample_class(
        model.seed,
        MATED,
        model.n_mated,
        model.mu_mated,
        model.sigma_mated,
        model.clamp,
    );
    let nonmated = sample_class(
        model.seed,
        NONMATED,
        model.n_nonmated,
        model.mu_nonmated,
        model.sigma_nonmated,
        model.clamp,
    );
    let range = if model.clamp {
        ScoreRange::UNIT
    } else {
        let (lo, hi) = mated
            .iter()
            .chain(&nonmated)
            .fold((0.0f64, 1.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        ScoreRange::new(lo, hi)?
    };
    let records = mated
        .into_iter()
        .enumerate()
        .map(|(i, s)| record(mated_key(i, &setting), s))
        .chain(
            nonmated
                .into_iter()
                .enumerate()
                .map(|(i, s)| record(nonmated_key(i, &setting), s)),
        )
        .collect();
    ScoreTable::new(model.matcher_id.clone(), range, records)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn analytic_auc(model: &GaussianScoreModel) -> Result<f64> {
    model.validate()?;
    model.check_unclamped()?;
    let spread = model.sigma_mated.hypot(model.sigma_nonmated);
    Ok(normal_cdf((model.mu_mated - model.mu_nonmated) / spread))
}

pub fn analytic_eer(model: &GaussianScoreModel) -> Result<f64> {
    model.validate()?;
    model.check_unclamped()?;
    if model.sigma_mated != model.sigma_nonmated {
        return Err(Error::UnsupportedOracle(format!(
            "equal-variance EER needs equal sigmas, got {} and {}",
            model.sigma_nonmated, model.sigma_mated
        )));
    }
    Ok(normal_cdf(
        -(model.mu_mated - model.mu_nonmated) / (2.0 * model.sigma_mated),
    ))
}

pub fn analytic_cohens_d(model: &GaussianScoreModel) -> Result<f64> {
    model.validate()?;
    let pooled = ((model.sigma_mated.powi(2) + model.sigma_nonmated.powi(2)) / 2.0).sqrt();
    Ok((model.mu_mated - model.mu_nonmated) / pooled)
}

fn split_classes(scores: &[f64], mated: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scores.len() != mated.len() {
        return Err(Error::contract("scores and labels differ in length"));
    }
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (&s, &m) in scores.iter().zip(mated) {
        if m {
            genuine.push(s);
        } else {
            impostor.push(s);
        }
    }
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::contract("both mated and non-mated comparisons are required"));
    }
    Ok((genuine, impostor))
}

/// AUC by counting every (mated, non-mated) pair, ties counting one half.
pub fn brute_force_auc(scores: &[f64], mated: &[bool]) -> Result<f64> {
    let (genuine, impostor) = split_classes(scores, mated)?;
    let mut twice_wins: u128 = 0;
    for &g in &genuine {
        for &i in &impostor {
            twice_wins += if g > i {
                2
            } else if g == i {
                1
            } else {
                0
            };
        }
    }
    let pairs = genuine.len() as u128 * impostor.len() as u128;
    Ok(twice_wins as f64 / (2 * pairs) as f64)
}

/// EER by recounting both error rates from scratch at every candidate
/// threshold (each distinct score, plus one below and one above all
/// scores), then interpolating linearly at the first place where
/// `FMR − FNMR` changes sign. An exact crossing returns the common rate.
pub fn brute_force_eer(scores: &[f64], mated: &[bool]) -> Result<f64> {
    let (genuine, impostor) = split_classes(scores, mated)?;
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // (fmr, fnmr) with the two infinite thresholds as the end points
    let mut points = vec![(1.0, 0.0)];
    for &t in &candidates {
        let fm = impostor.iter().filter(|&&s| s >= t).count();
        let fnm = genuine.iter().filter(|&&s| s < t).count();
        points.push((
            fm as f64 / impostor.len() as f64,
            fnm as f64 / genuine.len() as f64,
        ));
    }
    points.push((0.0, 1.0));

    for k in 0..points.len() - 1 {
        let (fm, fnm) = points[k];
        if fm == fnm {
            return Ok(fm);
        }
        let (fm2, fnm2) = points[k + 1];
        let (d0, d1) = (fm - fnm, fm2 - fnm2);
        if d0 > 0.0 && d1 < 0.0 {
            let alpha = d0 / (d0 - d1);
            return Ok(fm + alpha * (fm2 - fm));
        }
    }
    unreachable!("the gap runs from +1 to -1 and must change sign")
}

pub fn brute_force_auc_table(table: &ScoreTable) -> Result<f64> {
    brute_force_auc(&table.scores(), &table.labels())
}

pub fn brute_force_eer_table(table: &ScoreTable) -> Result<f64> {
    brute_force_eer(&table.scores(), &table.labels())
}

/// Two matchers that see the same identity signal through independent noise.
///
/// Each comparison has latent `x_k = d·[mated] + e_k` with `e_k ~ N(0, 1)`
/// drawn independently per matcher. Alone, a matcher separates the classes
/// with AUC `Φ(d/√2)`; averaging the two halves the noise variance and gives
/// `Φ(d)`. Latents are mapped to `[0, 1]` by the increasing affine map
/// `0.5 + (x − d/2)/(d + 16)`, clamped, which leaves every rank statistic
/// untouched unless a draw lands beyond 8 standard deviations.
pub fn make_complementary_matchers(d: f64, n_per_class: usize, seed: u64) -> Result<AlignedScores> {
    if !(d.is_finite() && d >= 0.0) {
        return Err(Error::contract(format!("separation must be non-negative, got {d}")));
    }
    if n_per_class == 0 {
        return Err(Error::contract("class size must be positive"));
    }
    let setting = synthetic_setting();
    let map = |x: f64| (0.5 + (x - d / 2.0) / (d + 16.0)).clamp(0.0, 1.0);
    let mut columns = Vec::with_capacity(2);
    for matcher in 0..2u64 {
        let mut mated = Stream::new(seed, stream_id(&[MATED, matcher]));
        let mut nonmated = Stream::new(seed, stream_id(&[NONMATED, matcher]));
        let mut col = Vec::with_capacity(2 * n_per_class);
        col.extend((0..n_per_class).map(|_| map(d + mated.standard_normal())));
        col.extend((0..n_per_class).map(|_| map(nonmated.standard_normal())));
        columns.push(col);
    }
    let pairs = (0..n_per_class)
        .map(|i| mated_key(i, &setting))
        .chain((0..n_per_class).map(|i| nonmated_key(i, &setting)))
        .collect();
    AlignedScores::from_columns(vec!["m1".into(), "m2".into()], pairs, &columns)
}

/// Closed-form AUCs for [`make_complementary_matchers`]: `(single, averaged)`.
pub fn complementary_auc(d: f64) -> (f64, f64) {
    (normal_cdf(d / std::f64::consts::SQRT_2), normal_cdf(d))
}

/// One simulated matcher in a [`PanelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelMatcher {
    pub matcher_id: String,
    /// Latent class separation under the best setting.
    pub separation: f64,
}

/// Multi-matcher, multi-setting simulation used for demo grids.
///
/// Subjects are split once into train / validation / test. Within a
/// partition every probe image of every subject is compared with every
/// reference of that partition. Latent scores are
/// `±q·sep/2 + √ρ·z + √(1−ρ)·e_k` (sign by label), where `z` is shared by all
/// matchers on a comparison, `e_k` is per matcher, and `q` shrinks with
/// distance and camera index. Scores are the logistic of the latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSpec {
    pub seed: u64,
    pub n_subjects: usize,
    pub probes_per_subject: usize,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub shared_correlation: f64,
    pub settings: Vec<SettingDescriptor>,
    pub matchers: Vec<PanelMatcher>,
}

impl PanelSpec {
    /// A baseline plus four stronger matchers over two cameras at two distances.
    pub fn demo(seed: u64) -> Self {
        let settings = [("cam1", 1.0), ("cam1", 4.2), ("cam2", 1.0), ("cam2", 4.2)]
            .into_iter()
            .map(|(c, d)| SettingDescriptor::new(c, d, "synthetic").expect("valid setting"))
            .collect();
        let matchers = [
            ("baseline", 1.6),
            ("recon_a", 2.2),
            ("recon_b", 2.0),
            ("recon_c", 1.8),
            ("recon_d", 2.4),
        ]
        .into_iter()
        .map(|(id, sep)| PanelMatcher {
            matcher_id: id.into(),
            separation: sep,
        })
        .collect();
        PanelSpec {
            seed,
            n_subjects: 130,
            probes_per_subject: 3,
            test_fraction: 25.0 / 130.0,
            validation_fraction: 0.1,
            shared_correlation: 0.3,
            settings,
            matchers,
        }
    }

    fn quality(&self, setting: &SettingDescriptor) -> f64 {
        let mut cameras: Vec<&str> = self.settings.iter().map(|s| s.camera_id()).collect();
        cameras.sort_unstable();
        cameras.dedup();
        let camera_rank = cameras
            .iter()
            .position(|&c| c == setting.camera_id())
            .unwrap_or(0);
        let nearest = self
            .settings
            .iter()
            .map(|s| s.distance_m())
            .fold(f64::INFINITY, f64::min);
        0.9f64.powi(camera_rank as i32) / (1.0 + 0.25 * (setting.distance_m() - nearest))
    }
}

/// Score tables of one (setting, partition) cell of a panel, one per matcher.
#[derive(Debug, Clone)]
pub struct PanelCell {
    pub setting: SettingDescriptor,
    pub partition: Partition,
    pub tables: Vec<ScoreTable>,
}

/// Simulate validation and test score tables for every setting and matcher.
pub fn generate_panel(spec: &PanelSpec) -> Result<Vec<PanelCell>> {
    if spec.settings.is_empty() || spec.matchers.is_empty() {
        return Err(Error::contract("a panel needs at least one setting and one matcher"));
    }
    if spec.probes_per_subject == 0 {
        return Err(Error::contract("probes_per_subject must be positive"));
    }
    let rho = spec.shared_correlation;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::contract(format!("shared_correlation {rho} must lie in [0, 1)")));
    }
    let subjects: Vec<String> = (0..spec.n_subjects).map(|i| format!("s{i:04}")).collect();
    let split = split_subjects(&subjects, spec.test_fraction, spec.validation_fraction, spec.seed)?;

    let mut cells = Vec::new();
    for (si, setting) in spec.settings.iter().enumerate() {
        let q = spec.quality(setting);
        for (pi, (partition, members)) in [
            (Partition::Validation, &split.validation_subjects),
            (Partition::Test, &split.test_subjects),
        ]
        .into_iter()
        .enumerate()
        {
            let cell = [si as u64, pi as u64];
            let mut shared = Stream::new(spec.seed, stream_id(&[cell[0], cell[1], 0]));
            let mut own: Vec<Stream> = (0..spec.matchers.len() as u64)
                .map(|k| Stream::new(spec.seed, stream_id(&[cell[0], cell[1], 1, k])))
                .collect();
            let mut records: Vec<Vec<ComparisonRecord>> = vec![Vec::new(); spec.matchers.len()];
            for probe_subject in members {
                for p in 0..spec.probes_per_subject {
                    for reference_subject in members {
                        let mated = probe_subject == reference_subject;
                        let sign = if mated { 0.5 } else { -0.5 };
                        let z = shared.standard_normal();
                        for (k, m) in spec.matchers.iter().enumerate() {
                            let e = own[k].standard_normal();
                            let x = sign * q * m.separation
                                + rho.sqrt() * z
                                + (1.0 - rho).sqrt() * e;
                            records[k].push(ComparisonRecord {
                                probe_id: format!("{probe_subject}-p{p}"),
                                reference_id: format!("{reference_subject}-ref"),
                                probe_subject: probe_subject.clone(),
                                reference_subject: reference_subject.clone(),
                                mated,
                                setting: setting.clone(),
                                score: 1.0 / (1.0 + (-x).exp()),
                            });
                        }
                    }
                }
            }
            let tables = spec
                .matchers
                .iter()
                .zip(records)
                .map(|(m, r)| ScoreTable::new(m.matcher_id.clone(), ScoreRange::UNIT, r))
                .collect::<Result<Vec<_>>>()?;
            cells.push(PanelCell {
                setting: setting.clone(),
                partition,
                tables,
            });
        }
    }
    Ok(cells)
}
