//! Experiment grids: which (train setting, test setting) pairs to run, how to
//! fit and apply each method on them, and how to summarise the results.
//!
//! A plan item names the setting whose validation scores fit parametric
//! methods and the setting whose test scores are evaluated. Parametric
//! methods are refit for every item and never shared between grid cells.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{
    apply_fusion, estimate_pcc_weights, train_perceptron, FusionMethod, FusionParams,
    FusionWeights, PerceptronHyper, WeightProvenance, DEFAULT_BAYES_EPSILON,
};
use crate::metrics::{evaluate, evaluate_table, MetricsReport, REPORT_METRICS};
use crate::numeric;
use crate::scorebase::{AlignedScores, Partition, SettingDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Intra,
    CrossDistance,
    CrossCamera,
    CrossBoth,
    CrossDataset,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Intra,
        ExperimentKind::CrossDistance,
        ExperimentKind::CrossCamera,
        ExperimentKind::CrossBoth,
        ExperimentKind::CrossDataset,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Intra => "intra",
            ExperimentKind::CrossDistance => "cross_distance",
            ExperimentKind::CrossCamera => "cross_camera",
            ExperimentKind::CrossBoth => "cross_both",
            ExperimentKind::CrossDataset => "cross_dataset",
        }
    }

    /// Kind of an ordered (train, test) pair. A dataset change dominates.
    pub fn classify(train: &SettingDescriptor, test: &SettingDescriptor) -> ExperimentKind {
        if train.dataset_id() != test.dataset_id() {
            return ExperimentKind::CrossDataset;
        }
        let camera = train.camera_id() != test.camera_id();
        let distance = train.distance_m() != test.distance_m();
        match (camera, distance) {
            (false, false) => ExperimentKind::Intra,
            (false, true) => ExperimentKind::CrossDistance,
            (true, false) => ExperimentKind::CrossCamera,
            (true, true) => ExperimentKind::CrossBoth,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlanItem {
    pub train_setting: SettingDescriptor,
    pub test_setting: SettingDescriptor,
    pub kind: ExperimentKind,
}

impl fmt::Display for PlanItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {} ({})", self.train_setting, self.test_setting, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub items: Vec<PlanItem>,
}

impl ExperimentPlan {
    pub fn count(&self, kind: ExperimentKind) -> usize {
        self.items.iter().filter(|i| i.kind == kind).count()
    }
}

/// All items of the requested kinds over `settings`, sorted by
/// (train setting, test setting, kind).
pub fn plan_experiments(
    settings: &[SettingDescriptor],
    kinds: &BTreeSet<ExperimentKind>,
) -> Result<ExperimentPlan> {
    if settings.is_empty() {
        return Err(Error::contract("an experiment plan needs at least one setting"));
    }
    let distinct: BTreeSet<&SettingDescriptor> = settings.iter().collect();
    if distinct.len() != settings.len() {
        return Err(Error::contract("settings must be distinct"));
    }
    let mut items = Vec::new();
    for &train in &distinct {
        for &test in &distinct {
            let kind = ExperimentKind::classify(train, test);
            if kinds.contains(&kind) {
                items.push(PlanItem {
                    train_setting: train.clone(),
                    test_setting: test.clone(),
                    kind,
                });
            }
        }
    }
    items.sort();
    Ok(ExperimentPlan { items })
}

/// How a method turns its matchers' scores into one score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Recipe {
    /// One matcher, evaluated as is.
    Single,
    Avg,
    Bayes {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    /// Weighted mean with weights from validation correlations.
    PccAvg,
    /// Weighted mean with fixed weights.
    Weighted { weights: Vec<f64> },
    Perceptron {
        #[serde(default)]
        hyper: PerceptronHyper,
    },
}

fn default_epsilon() -> f64 {
    DEFAULT_BAYES_EPSILON
}

impl Recipe {
    pub fn label(&self) -> &'static str {
        match self {
            Recipe::Single => "single",
            Recipe::Avg => "avg",
            Recipe::Bayes { .. } => "bayes",
            Recipe::PccAvg => "pcc_avg",
            Recipe::Weighted { .. } => "weighted",
            Recipe::Perceptron { .. } => "perceptron",
        }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self, Recipe::PccAvg | Recipe::Perceptron { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method_id: String,
    pub matchers: Vec<String>,
    pub recipe: Recipe,
}

impl MethodSpec {
    pub fn single(matcher_id: impl Into<String>) -> Self {
        let id = matcher_id.into();
        MethodSpec {
            method_id: id.clone(),
            matchers: vec![id],
            recipe: Recipe::Single,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method_id.is_empty() {
            return Err(Error::contract("method_id must not be empty"));
        }
        if self.matchers.is_empty() {
            return Err(Error::contract(format!("method `{}` lists no matchers", self.method_id)));
        }
        let distinct: HashSet<&String> = self.matchers.iter().collect();
        if distinct.len() != self.matchers.len() {
            return Err(Error::contract(format!(
                "method `{}` lists a matcher twice",
                self.method_id
            )));
        }
        match &self.recipe {
            Recipe::Single if self.matchers.len() != 1 => Err(Error::contract(format!(
                "single-matcher method `{}` lists {} matchers",
                self.method_id,
                self.matchers.len()
            ))),
            Recipe::Weighted { weights } => {
                FusionWeights::new(self.matchers.clone(), weights.clone(), WeightProvenance::Manual)
                    .map(|_| ())
            }
            _ => Ok(()),
        }
    }
}

/// Outcome of one method on one plan item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub item: PlanItem,
    pub method_id: String,
    pub recipe: String,
    pub report: MetricsReport,
    pub seed: u64,
    /// Input label to content digest.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
    /// Parameters fitted on the validation scores, for parametric methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted: Option<FusionParams>,
}

fn check_setting(scores: &AlignedScores, setting: &SettingDescriptor, what: &str) -> Result<()> {
    match scores.pairs().iter().find(|p| &p.setting != setting) {
        Some(p) => Err(Error::contract(format!(
            "{what} comparison ({}, {}) has setting {}, expected {setting}",
            p.probe_id, p.reference_id, p.setting
        ))),
        None => Ok(()),
    }
}

/// Fail if any comparison appears in both partitions.
pub fn check_leakage(validation: &AlignedScores, test: &AlignedScores) -> Result<()> {
    let seen: HashSet<(&str, &str)> = validation.pairs().iter().map(|p| p.key()).collect();
    match test.pairs().iter().find(|p| seen.contains(&p.key())) {
        Some(p) => Err(Error::Leakage {
            probe_id: p.probe_id.clone(),
            reference_id: p.reference_id.clone(),
        }),
        None => Ok(()),
    }
}

fn fit(method: &MethodSpec, validation: &AlignedScores, seed: u64) -> Result<FusionMethod> {
    Ok(match &method.recipe {
        Recipe::Single | Recipe::Avg => FusionMethod::Average,
        Recipe::Bayes { epsilon } => FusionMethod::Bayesian { epsilon: *epsilon },
        Recipe::Weighted { weights } => FusionMethod::Weighted(FusionWeights::new(
            method.matchers.clone(),
            weights.clone(),
            WeightProvenance::Manual,
        )?),
        Recipe::PccAvg => FusionMethod::Weighted(estimate_pcc_weights(validation)?),
        Recipe::Perceptron { hyper } => {
            let hyper = PerceptronHyper { seed, ..*hyper };
            FusionMethod::Perceptron(train_perceptron(validation, &hyper)?)
        }
    })
}

/// Run one method on one plan item.
///
/// `validation` must come from the item's train setting (every comparison
/// carrying that setting, unless pooled validation is used, see
/// [`ValidationScope`]) and `test` from its test setting. Parametric methods
/// are fitted on `validation` only; metrics come from `test` only.
pub fn run_experiment(
    item: &PlanItem,
    method: &MethodSpec,
    validation: &AlignedScores,
    test: &AlignedScores,
    seed: u64,
) -> Result<ExperimentResult> {
    method.validate()?;
    check_setting(test, &item.test_setting, "test")?;
    check_leakage(validation, test)?;
    let test = test.select(&method.matchers)?;

    let (report, fitted) = if let Recipe::Single = method.recipe {
        (evaluate(&test.column(0), &test.labels())?, None)
    } else {
        let validation = if method.recipe.is_parametric() {
            validation.select(&method.matchers)?
        } else {
            validation.clone()
        };
        let fuser = fit(method, &validation, seed)?;
        let fused = apply_fusion(&fuser, &method.method_id, &test)?;
        (evaluate_table(&fused.table)?, FusionParams::from_method(&fuser))
    };
    Ok(ExperimentResult {
        item: item.clone(),
        method_id: method.method_id.clone(),
        recipe: method.recipe.label().to_string(),
        report,
        seed,
        provenance: BTreeMap::new(),
        fitted: if method.recipe.is_parametric() { fitted } else { None },
    })
}

/// Which validation scores fit the parametric methods of a plan item.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationScope {
    /// Only the validation scores of the item's train setting.
    #[default]
    TrainSetting,
    /// Validation scores of every planned setting of the train dataset.
    TrainDataset,
}

/// Where a grid gets its aligned scores from.
pub trait ScoreSource: Sync {
    /// All matchers of one (setting, partition) cell, aligned.
    fn load(&self, setting: &SettingDescriptor, partition: Partition) -> Result<AlignedScores>;

    /// Content digests of the inputs behind one cell, keyed by a label.
    fn digests(&self, _setting: &SettingDescriptor, _partition: Partition) -> BTreeMap<String, String> {
        BTreeMap::new()
    }
}

/// Aligned scores held in memory.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    cells: HashMap<(SettingDescriptor, Partition), AlignedScores>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, setting: SettingDescriptor, partition: Partition, scores: AlignedScores) {
        self.cells.insert((setting, partition), scores);
    }
}

impl ScoreSource for MemorySource {
    fn load(&self, setting: &SettingDescriptor, partition: Partition) -> Result<AlignedScores> {
        self.cells
            .get(&(setting.clone(), partition))
            .cloned()
            .ok_or_else(|| {
                Error::Lookup(format!("{} scores for {setting}", partition.as_str()))
            })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOptions {
    pub seed: u64,
    pub kinds: BTreeSet<ExperimentKind>,
    #[serde(default)]
    pub validation_scope: ValidationScope,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub keep_going: bool,
}

/// A grid cell that failed under `keep_going`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub item: PlanItem,
    pub method_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub plan: ExperimentPlan,
    /// In plan order, then method order.
    pub results: Vec<ExperimentResult>,
    pub failures: Vec<CellFailure>,
}

fn concat(parts: &[&AlignedScores]) -> Result<AlignedScores> {
    let ids = parts[0].matcher_ids().to_vec();
    let mut pairs = Vec::new();
    let mut scores = Vec::new();
    for p in parts {
        let p = p.select(&ids)?;
        pairs.extend_from_slice(p.pairs());
        scores.extend(p.rows().flatten().copied());
    }
    AlignedScores::new(ids, pairs, scores)
}

type Loaded = BTreeMap<(SettingDescriptor, Partition), std::result::Result<AlignedScores, String>>;

/// Plan the grid over `settings` and run every method on every item.
///
/// Cells run on a thread pool bounded by `options.jobs`; the outcome is the
/// same for any thread count. Without `keep_going`, the first failing cell in
/// plan order aborts the run and is named in the error.
pub fn run_grid(
    settings: &[SettingDescriptor],
    methods: &[MethodSpec],
    source: &dyn ScoreSource,
    options: &GridOptions,
) -> Result<GridOutcome> {
    if methods.is_empty() {
        return Err(Error::contract("a grid needs at least one method"));
    }
    let mut method_ids = HashSet::new();
    for m in methods {
        m.validate()?;
        if !method_ids.insert(&m.method_id) {
            return Err(Error::contract(format!("method id `{}` appears twice", m.method_id)));
        }
    }
    let plan = plan_experiments(settings, &options.kinds)?;

    let fitting_settings = |train: &SettingDescriptor| -> Vec<SettingDescriptor> {
        match options.validation_scope {
            ValidationScope::TrainSetting => vec![train.clone()],
            ValidationScope::TrainDataset => {
                let mut same: Vec<SettingDescriptor> = settings
                    .iter()
                    .filter(|s| s.dataset_id() == train.dataset_id())
                    .cloned()
                    .collect();
                same.sort();
                same
            }
        }
    };

    let mut needed = BTreeSet::new();
    for item in &plan.items {
        for s in fitting_settings(&item.train_setting) {
            needed.insert((s, Partition::Validation));
        }
        needed.insert((item.test_setting.clone(), Partition::Test));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::contract(format!("cannot start worker pool: {e}")))?;

    pool.install(|| {
        let needed: Vec<_> = needed.into_iter().collect();
        let loaded: Vec<Result<AlignedScores>> =
            needed.par_iter().map(|(s, p)| source.load(s, *p)).collect();
        let mut data: Loaded = BTreeMap::new();
        for (key, result) in needed.into_iter().zip(loaded) {
            let value = match result {
                Ok(a) => Ok(a),
                Err(e) if !options.keep_going => {
                    return Err(e.context(format!("{} scores for {}", key.1.as_str(), key.0)))
                }
                Err(e) => Err(e.to_string()),
            };
            data.insert(key, value);
        }

        let cells: Vec<(&PlanItem, &MethodSpec)> = plan
            .items
            .iter()
            .flat_map(|item| methods.iter().map(move |m| (item, m)))
            .collect();
        let outcomes: Vec<Result<ExperimentResult>> = cells
            .par_iter()
            .map(|&(item, method)| run_cell(item, method, &data, source, options, &fitting_settings))
            .collect();

        let mut results = Vec::new();
        let mut failures = Vec::new();
        for ((item, method), outcome) in cells.into_iter().zip(outcomes) {
            match outcome {
                Ok(r) => results.push(r),
                Err(e) if options.keep_going => failures.push(CellFailure {
                    item: item.clone(),
                    method_id: method.method_id.clone(),
                    error: e.to_string(),
                }),
                Err(e) => {
                    return Err(e.context(format!("method `{}` on {item}", method.method_id)))
                }
            }
        }
        Ok(GridOutcome {
            plan: plan.clone(),
            results,
            failures,
        })
    })
}

fn run_cell(
    item: &PlanItem,
    method: &MethodSpec,
    data: &Loaded,
    source: &dyn ScoreSource,
    options: &GridOptions,
    fitting_settings: &dyn Fn(&SettingDescriptor) -> Vec<SettingDescriptor>,
) -> Result<ExperimentResult> {
    let get = |s: &SettingDescriptor, p: Partition| -> Result<&AlignedScores> {
        match data.get(&(s.clone(), p)) {
            Some(Ok(a)) => Ok(a),
            Some(Err(msg)) => Err(Error::Lookup(format!("{} scores for {s}: {msg}", p.as_str()))),
            None => Err(Error::Lookup(format!("{} scores for {s}", p.as_str()))),
        }
    };
    let fit_on = fitting_settings(&item.train_setting);
    let parts = fit_on
        .iter()
        .map(|s| get(s, Partition::Validation))
        .collect::<Result<Vec<_>>>()?;
    let validation = if parts.len() == 1 {
        check_setting(parts[0], &item.train_setting, "validation")?;
        parts[0].clone()
    } else {
        concat(&parts)?
    };
    let test = get(&item.test_setting, Partition::Test)?;
    let mut result = run_experiment(item, method, &validation, test, options.seed)?;
    for s in &fit_on {
        result.provenance.extend(source.digests(s, Partition::Validation));
    }
    result
        .provenance
        .extend(source.digests(&item.test_setting, Partition::Test));
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Method,
    MethodKind,
    MethodDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    /// `None` when no result in the group defines the metric.
    pub mean: Option<f64>,
    /// Sample standard deviation; 0 for a single value.
    pub sd: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method_id: String,
    pub recipe: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_distance_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_distance_m: Option<f64>,
    pub n_results: usize,
    pub metrics: Vec<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub group_by: GroupBy,
    pub rows: Vec<SummaryRow>,
}

/// Mean and sample standard deviation of every metric per group.
///
/// Each result counts once, whatever its number of comparisons. Groups are
/// ordered by method in order of first appearance, then by kind or
/// distances.
pub fn aggregate_results(results: &[ExperimentResult], group_by: GroupBy) -> Result<Summary> {
    if results.is_empty() {
        return Err(Error::contract("nothing to aggregate"));
    }
    let mut method_rank: HashMap<&str, usize> = HashMap::new();
    for r in results {
        let next = method_rank.len();
        method_rank.entry(&r.method_id).or_insert(next);
    }

    type Key = (usize, Option<ExperimentKind>, Option<(u64, u64)>);
    let mut groups: BTreeMap<Key, Vec<&ExperimentResult>> = BTreeMap::new();
    for r in results {
        let kind = (group_by == GroupBy::MethodKind).then_some(r.item.kind);
        // distances are positive, so their bit patterns sort like the values
        let distance = (group_by == GroupBy::MethodDistance).then(|| {
            (
                r.item.train_setting.distance_m().to_bits(),
                r.item.test_setting.distance_m().to_bits(),
            )
        });
        groups
            .entry((method_rank[r.method_id.as_str()], kind, distance))
            .or_default()
            .push(r);
    }

    let rows = groups
        .into_iter()
        .map(|((_, kind, distance), members)| {
            let metrics = REPORT_METRICS
                .iter()
                .map(|(name, get)| {
                    let values: Vec<f64> = members.iter().filter_map(|r| get(&r.report)).collect();
                    let sd = match values.len() {
                        0 => None,
                        1 => Some(0.0),
                        _ => numeric::sample_variance(&values).map(f64::sqrt),
                    };
                    MetricSummary {
                        metric: name.to_string(),
                        mean: numeric::mean(&values),
                        sd,
                        n: values.len(),
                    }
                })
                .collect();
            SummaryRow {
                method_id: members[0].method_id.clone(),
                recipe: members[0].recipe.clone(),
                kind,
                train_distance_m: distance.map(|d| f64::from_bits(d.0)),
                test_distance_m: distance.map(|d| f64::from_bits(d.1)),
                n_results: members.len(),
                metrics,
            }
        })
        .collect();
    Ok(Summary { group_by, rows })
}

impl Summary {
    /// Tabular form. With `precision`, values are printed with that many
    /// decimals; otherwise in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut w: W, precision: Option<usize>) -> std::io::Result<()> {
        let mut header = vec!["method".to_string(), "recipe".to_string()];
        match self.group_by {
            GroupBy::Method => {}
            GroupBy::MethodKind => header.push("kind".into()),
            GroupBy::MethodDistance => {
                header.push("train_distance_m".into());
                header.push("test_distance_m".into());
            }
        }
        header.push("n_results".into());
        for (name, _) in REPORT_METRICS {
            header.push(format!("{name}_mean"));
            header.push(format!("{name}_sd"));
        }
        writeln!(w, "{}", header.join(","))?;

        let fmt = |v: Option<f64>| match (v, precision) {
            (None, _) => String::new(),
            (Some(v), Some(p)) => format!("{v:.p$}"),
            (Some(v), None) => v.to_string(),
        };
        for row in &self.rows {
            let mut cells = vec![row.method_id.clone(), row.recipe.clone()];
            if let Some(k) = row.kind {
                cells.push(k.to_string());
            }
            if let (Some(a), Some(b)) = (row.train_distance_m, row.test_distance_m) {
                cells.push(a.to_string());
                cells.push(b.to_string());
            }
            cells.push(row.n_results.to_string());
            for m in &row.metrics {
                cells.push(fmt(m.mean));
                cells.push(fmt(m.sd));
            }
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}
