//! Comparison records, score tables and multi-matcher alignment.
//!
//! A [`ScoreTable`] holds the labelled comparisons scored by one matcher.
//! Tables are read from and written to a comma-separated format with the
//! fixed header
//!
//! ```text
//! matcher_id,probe_id,reference_id,probe_subject,reference_subject,mated,camera_id,distance_m,dataset_id,score
//! ```
//!
//! where `mated` is `0` or `1`. Lines starting with `#` are treated as
//! comments. Scores are written with Rust's shortest round-trip float
//! formatting, so loading and re-writing a canonically formatted file
//! reproduces it byte for byte.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::Stream;

pub const CSV_HEADER: [&str; 10] = [
    "matcher_id",
    "probe_id",
    "reference_id",
    "probe_subject",
    "reference_subject",
    "mated",
    "camera_id",
    "distance_m",
    "dataset_id",
    "score",
];

/// Acquisition setting of a comparison: camera, subject distance and dataset.
///
/// Two settings are equal iff all three fields are equal. Ordering is
/// lexicographic on `(camera_id, distance_m, dataset_id)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawSetting")]
pub struct SettingDescriptor {
    camera_id: String,
    distance_m: f64,
    dataset_id: String,
}

#[derive(Deserialize)]
struct RawSetting {
    camera_id: String,
    distance_m: f64,
    dataset_id: String,
}

impl TryFrom<RawSetting> for SettingDescriptor {
    type Error = Error;

    fn try_from(raw: RawSetting) -> Result<Self> {
        SettingDescriptor::new(raw.camera_id, raw.distance_m, raw.dataset_id)
    }
}

impl SettingDescriptor {
    pub fn new(
        camera_id: impl Into<String>,
        distance_m: f64,
        dataset_id: impl Into<String>,
    ) -> Result<Self> {
        if !(distance_m.is_finite() && distance_m > 0.0) {
            return Err(Error::contract(format!(
                "distance must be a positive number of meters, got {distance_m}"
            )));
        }
        Ok(SettingDescriptor {
            camera_id: camera_id.into(),
            distance_m,
            dataset_id: dataset_id.into(),
        })
    }

    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }

    pub fn distance_m(&self) -> f64 {
        self.distance_m
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }
}

impl PartialEq for SettingDescriptor {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SettingDescriptor {}

impl Hash for SettingDescriptor {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.camera_id.hash(state);
        self.distance_m.to_bits().hash(state);
        self.dataset_id.hash(state);
    }
}

impl PartialOrd for SettingDescriptor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SettingDescriptor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.camera_id
            .cmp(&other.camera_id)
            .then(self.distance_m.total_cmp(&other.distance_m))
            .then_with(|| self.dataset_id.cmp(&other.dataset_id))
    }
}

impl fmt::Display for SettingDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}@{}m", self.dataset_id, self.camera_id, self.distance_m)
    }
}

/// Closed score interval `[lo, hi]` a matcher declares for its output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub lo: f64,
    pub hi: f64,
}

impl ScoreRange {
    pub const UNIT: ScoreRange = ScoreRange { lo: 0.0, hi: 1.0 };
    pub const COSINE: ScoreRange = ScoreRange { lo: -1.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::contract(format!("invalid score range [{lo}, {hi}]")));
        }
        Ok(ScoreRange { lo, hi })
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.lo && s <= self.hi
    }

    pub fn is_unit(&self) -> bool {
        self.lo == 0.0 && self.hi == 1.0
    }
}

impl fmt::Display for ScoreRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// One scored comparison between a probe and a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub probe_id: String,
    pub reference_id: String,
    pub probe_subject: String,
    pub reference_subject: String,
    pub mated: bool,
    pub setting: SettingDescriptor,
    pub score: f64,
}

impl ComparisonRecord {
    pub fn key(&self) -> (&str, &str) {
        (&self.probe_id, &self.reference_id)
    }

    pub fn pair_key(&self) -> PairKey {
        PairKey {
            probe_id: self.probe_id.clone(),
            reference_id: self.reference_id.clone(),
            probe_subject: self.probe_subject.clone(),
            reference_subject: self.reference_subject.clone(),
            mated: self.mated,
            setting: self.setting.clone(),
        }
    }
}

/// Labelled comparisons produced by a single matcher.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    matcher_id: String,
    range: ScoreRange,
    records: Vec<ComparisonRecord>,
}

impl ScoreTable {
    /// Build a table, checking every record against the table invariants.
    ///
    /// Record positions are reported as `line = index + 2`, i.e. the line the
    /// record would occupy in a CSV file with a header.
    pub fn new(
        matcher_id: impl Into<String>,
        range: ScoreRange,
        records: Vec<ComparisonRecord>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let line = i as u64 + 2;
            check_record(r, range, line)?;
            if !seen.insert(r.key()) {
                return Err(Error::Duplicate {
                    line,
                    probe_id: r.probe_id.clone(),
                    reference_id: r.reference_id.clone(),
                });
            }
        }
        Ok(ScoreTable {
            matcher_id: matcher_id.into(),
            range,
            records,
        })
    }

    pub fn matcher_id(&self) -> &str {
        &self.matcher_id
    }

    pub fn range(&self) -> ScoreRange {
        self.range
    }

    pub fn records(&self) -> &[ComparisonRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.mated).collect()
    }

    /// Same records under a different matcher label.
    pub fn renamed(mut self, matcher_id: impl Into<String>) -> Self {
        self.matcher_id = matcher_id.into();
        self
    }
}

fn check_record(r: &ComparisonRecord, range: ScoreRange, line: u64) -> Result<()> {
    if !r.score.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("score {} is not finite", r.score),
        });
    }
    if !range.contains(r.score) {
        return Err(Error::Range {
            line,
            score: r.score,
            lo: range.lo,
            hi: range.hi,
        });
    }
    if r.mated != (r.probe_subject == r.reference_subject) {
        return Err(Error::Consistency(format!(
            "line {line}: mated flag {} disagrees with subjects `{}` / `{}`",
            u8::from(r.mated),
            r.probe_subject,
            r.reference_subject
        )));
    }
    Ok(())
}

/// Parse a score CSV from any reader.
pub fn read_score_table<R: Read>(reader: R, range: ScoreRange) -> Result<ScoreTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);

    let mut matcher_id: Option<String> = None;
    let mut records = Vec::new();
    let mut seen: HashMap<(String, String), u64> = HashMap::new();
    let mut header_seen = false;

    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if !header_seen {
            if row.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(Error::Parse {
                    line,
                    message: format!("expected header `{}`", CSV_HEADER.join(",")),
                });
            }
            header_seen = true;
            continue;
        }
        if row.len() != CSV_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", CSV_HEADER.len(), row.len()),
            });
        }
        let field = |i: usize| row.get(i).unwrap_or_default();
        match &matcher_id {
            None => matcher_id = Some(field(0).to_string()),
            Some(m) if m != field(0) => {
                return Err(Error::Parse {
                    line,
                    message: format!("matcher `{}` differs from `{m}`; one matcher per file", field(0)),
                })
            }
            Some(_) => {}
        }
        let mated = match field(5) {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("mated must be 0 or 1, found `{other}`"),
                })
            }
        };
        let distance: f64 = field(7).parse().map_err(|_| Error::Parse {
            line,
            message: format!("distance_m `{}` is not a number", field(7)),
        })?;
        let setting =
            SettingDescriptor::new(field(6), distance, field(8)).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        let score: f64 = field(9).parse().map_err(|_| Error::Parse {
            line,
            message: format!("score `{}` is not a number", field(9)),
        })?;
        let record = ComparisonRecord {
            probe_id: field(1).to_string(),
            reference_id: field(2).to_string(),
            probe_subject: field(3).to_string(),
            reference_subject: field(4).to_string(),
            mated,
            setting,
            score,
        };
        check_record(&record, range, line)?;
        if seen
            .insert((record.probe_id.clone(), record.reference_id.clone()), line)
            .is_some()
        {
            return Err(Error::Duplicate {
                line,
                probe_id: record.probe_id,
                reference_id: record.reference_id,
            });
        }
        records.push(record);
    }
    if !header_seen {
        return Err(Error::Parse {
            line: 1,
            message: "missing header".into(),
        });
    }
    Ok(ScoreTable {
        matcher_id: matcher_id.unwrap_or_default(),
        range,
        records,
    })
}

/// Load a score CSV file. Row order is preserved.
pub fn load_score_table(path: impl AsRef<Path>, range: ScoreRange) -> Result<ScoreTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_score_table(std::io::BufReader::new(file), range)
}

/// Write a table in canonical CSV form.
pub fn write_score_table<W: Write>(table: &ScoreTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| Error::Parse {
        line: 0,
        message: e.to_string(),
    };
    w.write_record(CSV_HEADER).map_err(wrap)?;
    for r in &table.records {
        w.write_record([
            table.matcher_id.as_str(),
            &r.probe_id,
            &r.reference_id,
            &r.probe_subject,
            &r.reference_subject,
            if r.mated { "1" } else { "0" },
            &r.setting.camera_id,
            &r.setting.distance_m.to_string(),
            &r.setting.dataset_id,
            &r.score.to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io("<score csv>", e))?;
    Ok(())
}

/// How raw matcher scores are brought onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMethod {
    /// `s ↦ (s − lo) / (hi − lo)`.
    AffineToUnit,
    /// No-op; requires the table to already be declared on `[0, 1]`.
    Identity,
}

pub fn normalize_scores(table: &ScoreTable, method: NormalizeMethod) -> Result<ScoreTable> {
    let ScoreRange { lo, hi } = table.range;
    match method {
        NormalizeMethod::Identity => {
            if !table.range.is_unit() {
                return Err(Error::contract(format!(
                    "identity normalization requires range [0, 1], table `{}` declares {}",
                    table.matcher_id, table.range
                )));
            }
            Ok(table.clone())
        }
        NormalizeMethod::AffineToUnit => {
            if hi <= lo {
                return Err(Error::contract(format!(
                    "cannot rescale degenerate range {}",
                    table.range
                )));
            }
            let width = hi - lo;
            let records = table
                .records
                .iter()
                .map(|r| ComparisonRecord {
                    score: ((r.score - lo) / width).clamp(0.0, 1.0),
                    ..r.clone()
                })
                .collect();
            Ok(ScoreTable {
                matcher_id: table.matcher_id.clone(),
                range: ScoreRange::UNIT,
                records,
            })
        }
    }
}

/// Identity and label of one aligned comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairKey {
    pub probe_id: String,
    pub reference_id: String,
    pub probe_subject: String,
    pub reference_subject: String,
    pub mated: bool,
    pub setting: SettingDescriptor,
}

impl PairKey {
    pub fn key(&self) -> (&str, &str) {
        (&self.probe_id, &self.reference_id)
    }
}

/// Scores of `N` matchers on a common set of comparisons, all in `[0, 1]`.
///
/// Scores are stored row-major: row `i` holds the `N` matcher scores of
/// `pairs[i]` in `matcher_ids` order.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedScores {
    matcher_ids: Vec<String>,
    pairs: Vec<PairKey>,
    scores: Vec<f64>,
}

impl AlignedScores {
    pub fn new(matcher_ids: Vec<String>, pairs: Vec<PairKey>, scores: Vec<f64>) -> Result<Self> {
        if matcher_ids.is_empty() {
            return Err(Error::contract("aligned scores need at least one matcher"));
        }
        let mut distinct = HashSet::new();
        for id in &matcher_ids {
            if !distinct.insert(id) {
                return Err(Error::contract(format!("matcher id `{id}` appears twice")));
            }
        }
        if scores.len() != pairs.len() * matcher_ids.len() {
            return Err(Error::contract(format!(
                "{} scores cannot fill {} rows of {} matchers",
                scores.len(),
                pairs.len(),
                matcher_ids.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(s.is_finite() && (0.0..=1.0).contains(*s))) {
            return Err(Error::contract(format!("aligned score {bad} outside [0, 1]")));
        }
        Ok(AlignedScores {
            matcher_ids,
            pairs,
            scores,
        })
    }

    /// Build from per-matcher columns of equal length.
    pub fn from_columns(
        matcher_ids: Vec<String>,
        pairs: Vec<PairKey>,
        columns: &[Vec<f64>],
    ) -> Result<Self> {
        if columns.len() != matcher_ids.len() {
            return Err(Error::contract("one column per matcher id is required"));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != pairs.len()) {
            return Err(Error::contract(format!(
                "column of length {} does not match {} pairs",
                c.len(),
                pairs.len()
            )));
        }
        let n = matcher_ids.len();
        let mut scores = vec![0.0; pairs.len() * n];
        for (j, col) in columns.iter().enumerate() {
            for (i, &s) in col.iter().enumerate() {
                scores[i * n + j] = s;
            }
        }
        Self::new(matcher_ids, pairs, scores)
    }

    pub fn matcher_ids(&self) -> &[String] {
        &self.matcher_ids
    }

    pub fn pairs(&self) -> &[PairKey] {
        &self.pairs
    }

    pub fn n_matchers(&self) -> usize {
        self.matcher_ids.len()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.matcher_ids.len();
        &self.scores[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.scores.chunks_exact(self.matcher_ids.len())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.pairs.iter().map(|p| p.mated).collect()
    }

    pub fn position(&self, matcher_id: &str) -> Option<usize> {
        self.matcher_ids.iter().position(|m| m == matcher_id)
    }

    /// Restrict to the given matchers, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<AlignedScores> {
        let idx: Vec<usize> = ids
            .iter()
            .map(|id| {
                self.position(id).ok_or_else(|| {
                    Error::contract(format!(
                        "matcher `{id}` not among aligned matchers {:?}",
                        self.matcher_ids
                    ))
                })
            })
            .collect::<Result<_>>()?;
        let scores = self
            .rows()
            .flat_map(|row| idx.iter().map(move |&j| row[j]))
            .collect();
        AlignedScores::new(ids.to_vec(), self.pairs.clone(), scores)
    }

    /// Column `j` as a standalone table.
    pub fn to_table(&self, j: usize) -> ScoreTable {
        let records = self
            .pairs
            .iter()
            .zip(self.rows())
            .map(|(p, row)| record_from_pair(p, row[j]))
            .collect();
        ScoreTable {
            matcher_id: self.matcher_ids[j].clone(),
            range: ScoreRange::UNIT,
            records,
        }
    }
}

pub(crate) fn record_from_pair(p: &PairKey, score: f64) -> ComparisonRecord {
    ComparisonRecord {
        probe_id: p.probe_id.clone(),
        reference_id: p.reference_id.clone(),
        probe_subject: p.probe_subject.clone(),
        reference_subject: p.reference_subject.clone(),
        mated: p.mated,
        setting: p.setting.clone(),
        score,
    }
}

/// Join tables on `(probe_id, reference_id)`. Every key must be present in
/// every table; row order follows the first table.
pub fn align_tables(tables: &[ScoreTable]) -> Result<AlignedScores> {
    let first = tables
        .first()
        .ok_or_else(|| Error::contract("at least one score table is required"))?;
    for t in tables {
        if !t.range.is_unit() {
            return Err(Error::contract(format!(
                "table `{}` declares range {}; normalize to [0, 1] before aligning",
                t.matcher_id, t.range
            )));
        }
        if t.is_empty() {
            return Err(Error::contract(format!("table `{}` is empty", t.matcher_id)));
        }
    }

    let indices: Vec<HashMap<(&str, &str), usize>> = tables
        .iter()
        .map(|t| t.records.iter().enumerate().map(|(i, r)| (r.key(), i)).collect())
        .collect();

    let mut missing = Vec::new();
    for (ti, t) in tables.iter().enumerate() {
        for r in &t.records {
            for (oi, other) in indices.iter().enumerate() {
                if oi != ti && !other.contains_key(&r.key()) {
                    missing.push(format!(
                        "({}, {}) missing from `{}`",
                        r.probe_id, r.reference_id, tables[oi].matcher_id
                    ));
                }
            }
        }
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        let shown = missing.iter().take(10).cloned().collect::<Vec<_>>().join("; ");
        let more = missing.len().saturating_sub(10);
        let suffix = if more > 0 { format!(" (+{more} more)") } else { String::new() };
        return Err(Error::Alignment(format!("{shown}{suffix}")));
    }

    let n = tables.len();
    let mut pairs = Vec::with_capacity(first.len());
    let mut scores = Vec::with_capacity(first.len() * n);
    for r in &first.records {
        for (t, idx) in tables.iter().zip(&indices).skip(1) {
            let o = &t.records[idx[&r.key()]];
            if o.mated != r.mated {
                return Err(Error::Consistency(format!(
                    "({}, {}) is mated={} in `{}` but mated={} in `{}`",
                    r.probe_id,
                    r.reference_id,
                    u8::from(r.mated),
                    first.matcher_id,
                    u8::from(o.mated),
                    t.matcher_id
                )));
            }
            if o.setting != r.setting {
                return Err(Error::Consistency(format!(
                    "({}, {}) has setting {} in `{}` but {} in `{}`",
                    r.probe_id, r.reference_id, r.setting, first.matcher_id, o.setting, t.matcher_id
                )));
            }
        }
        pairs.push(r.pair_key());
        for (t, idx) in tables.iter().zip(&indices) {
            scores.push(t.records[idx[&r.key()]].score);
        }
    }
    AlignedScores::new(
        tables.iter().map(|t| t.matcher_id.clone()).collect(),
        pairs,
        scores,
    )
}

/// Which part of a subject split a set of comparisons was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

/// Disjoint train / validation / test subject partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_subjects: BTreeSet<String>,
    pub validation_subjects: BTreeSet<String>,
    pub test_subjects: BTreeSet<String>,
    pub seed: u64,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Partition subjects into test, validation and train sets.
///
/// Subjects are sorted, shuffled with the ChaCha8 substream `(seed, 0)`, and
/// the shuffled list is cut into test, validation and train in that order.
/// `|test| = round(test_fraction · n)` and
/// `|validation| = round(validation_fraction · (n − |test|))`, rounding half up.
pub fn split_subjects<S: AsRef<str>>(
    subjects: &[S],
    test_fraction: f64,
    validation_fraction_of_remainder: f64,
    seed: u64,
) -> Result<SplitSpec> {
    let universe: BTreeSet<String> = subjects.iter().map(|s| s.as_ref().to_string()).collect();
    for (name, f) in [
        ("test", test_fraction),
        ("validation", validation_fraction_of_remainder),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::contract(format!("{name} fraction {f} must lie in (0, 1)")));
        }
    }
    let n = universe.len();
    if n < 3 {
        return Err(Error::contract(format!("need at least 3 subjects, got {n}")));
    }
    let n_test = round_half_up(test_fraction * n as f64);
    let remainder = n.saturating_sub(n_test);
    let n_val = round_half_up(validation_fraction_of_remainder * remainder as f64);
    let n_train = remainder.saturating_sub(n_val);
    if n_test == 0 || n_val == 0 || n_train == 0 || n_test + n_val > n {
        return Err(Error::Partition(format!(
            "{n} subjects with fractions ({test_fraction}, {validation_fraction_of_remainder}) \
             give test={n_test}, validation={n_val}, train={n_train}"
        )));
    }

    let mut order: Vec<String> = universe.into_iter().collect();
    Stream::new(seed, 0).shuffle(&mut order);
    let mut it = order.into_iter();
    let test_subjects = it.by_ref().take(n_test).collect();
    let validation_subjects = it.by_ref().take(n_val).collect();
    let train_subjects = it.collect();
    Ok(SplitSpec {
        train_subjects,
        validation_subjects,
        test_subjects,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setting() -> SettingDescriptor {
        SettingDescriptor::new("cam1", 1.0, "synth").unwrap()
    }

    fn rec(p: &str, r: &str, mated: bool, score: f64) -> ComparisonRecord {
        ComparisonRecord {
            probe_id: p.into(),
            reference_id: r.into(),
            probe_subject: if mated { r.into() } else { format!("{p}-subj") },
            reference_subject: r.into(),
            mated,
            setting: setting(),
            score,
        }
    }

    const GOOD: &str = "\
matcher_id,probe_id,reference_id,probe_subject,reference_subject,mated,camera_id,distance_m,dataset_id,score
m1,p1,r1,s1,s1,1,cam1,1,scface,0.9
m1,p2,r1,s2,s1,0,cam1,1,scface,0.25
m1,p3,r2,s3,s3,1,cam2,4.2,scface,0.7
";

    #[test]
    fn loads_well_formed_file_in_order() {
        let t = read_score_table(GOOD.as_bytes(), ScoreRange::UNIT).unwrap();
        assert_eq!(t.matcher_id(), "m1");
        assert_eq!(t.len(), 3);
        let probes: Vec<_> = t.records().iter().map(|r| r.probe_id.as_str()).collect();
        assert_eq!(probes, ["p1", "p2", "p3"]);
        assert_eq!(t.records()[2].setting.distance_m(), 4.2);
        assert_eq!(t.labels(), [true, false, true]);
    }

    #[test]
    fn canonical_file_round_trips_byte_identical() {
        let t = read_score_table(GOOD.as_bytes(), ScoreRange::UNIT).unwrap();
        let mut out = Vec::new();
        write_score_table(&t, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), GOOD);
    }

    #[test]
    fn non_numeric_score_names_line_two() {
        let bad = GOOD.replacen("0.9", "abc", 1);
        match read_score_table(bad.as_bytes(), ScoreRange::UNIT) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("abc"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn short_row_is_a_parse_error() {
        let bad = format!("{GOOD}m1,p9,r9\n");
        assert!(matches!(
            read_score_table(bad.as_bytes(), ScoreRange::UNIT),
            Err(Error::Parse { line: 5, .. })
        ));
    }

    #[test]
    fn out_of_range_score_is_rejected() {
        let bad = GOOD.replacen("0.9", "1.2", 1);
        assert!(matches!(
            read_score_table(bad.as_bytes(), ScoreRange::UNIT),
            Err(Error::Range { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let bad = format!("{GOOD}m1,p1,r1,s1,s1,1,cam1,1,scface,0.5\n");
        assert!(matches!(
            read_score_table(bad.as_bytes(), ScoreRange::UNIT),
            Err(Error::Duplicate { line: 5, .. })
        ));
    }

    #[test]
    fn wrong_header_and_mixed_matchers_fail() {
        let bad = GOOD.replacen("matcher_id", "matcher", 1);
        assert!(matches!(
            read_score_table(bad.as_bytes(), ScoreRange::UNIT),
            Err(Error::Parse { line: 1, .. })
        ));
        let mixed = format!("{GOOD}m2,p9,r9,s9,s9,1,cam1,1,scface,0.5\n");
        assert!(read_score_table(mixed.as_bytes(), ScoreRange::UNIT).is_err());
        assert!(read_score_table("".as_bytes(), ScoreRange::UNIT).is_err());
    }

    #[test]
    fn inconsistent_mated_flag_is_rejected() {
        let bad = GOOD.replacen("s1,s1,1", "s1,s1,0", 1);
        assert!(matches!(
            read_score_table(bad.as_bytes(), ScoreRange::UNIT),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn comment_lines_are_skipped() {
        let with_comment = format!("# produced by test\n{GOOD}");
        let t = read_score_table(with_comment.as_bytes(), ScoreRange::UNIT).unwrap();
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn cosine_scores_map_to_unit_interval() {
        let t = ScoreTable::new(
            "ada",
            ScoreRange::COSINE,
            vec![rec("a", "x", true, -1.0), rec("b", "x", false, 0.0), rec("c", "y", true, 1.0)],
        )
        .unwrap();
        let n = normalize_scores(&t, NormalizeMethod::AffineToUnit).unwrap();
        assert_eq!(n.scores(), [0.0, 0.5, 1.0]);
        assert!(n.range().is_unit());
        assert!(normalize_scores(&t, NormalizeMethod::Identity).is_err());
    }

    #[test]
    fn unit_range_affine_is_identity() {
        let t = ScoreTable::new("m", ScoreRange::UNIT, vec![rec("a", "x", true, 0.7)]).unwrap();
        assert_eq!(normalize_scores(&t, NormalizeMethod::AffineToUnit).unwrap().scores(), [0.7]);
        assert_eq!(normalize_scores(&t, NormalizeMethod::Identity).unwrap(), t);
    }

    fn table(id: &str, n: usize) -> ScoreTable {
        let records = (0..n)
            .map(|i| rec(&format!("p{i}"), &format!("r{}", i % 3), i % 2 == 0, i as f64 / n as f64))
            .collect();
        ScoreTable::new(id, ScoreRange::UNIT, records).unwrap()
    }

    #[test]
    fn align_identical_keys() {
        let a = align_tables(&[table("a", 10), table("b", 10)]).unwrap();
        assert_eq!(a.n_matchers(), 2);
        assert_eq!(a.len(), 10);
        assert_eq!(a.column(0), table("a", 10).scores());
    }

    #[test]
    fn align_single_table_is_identity() {
        let t = table("a", 7);
        let a = align_tables(std::slice::from_ref(&t)).unwrap();
        assert_eq!(a.n_matchers(), 1);
        assert_eq!(a.column(0), t.scores());
        assert_eq!(a.to_table(0), t);
    }

    #[test]
    fn align_reports_missing_key() {
        match align_tables(&[table("a", 10), table("b", 9)]) {
            Err(Error::Alignment(msg)) => assert!(msg.contains("(p9, r0) missing from `b`"), "{msg}"),
            other => panic!("expected alignment error, got {other:?}"),
        }
    }

    #[test]
    fn align_rejects_conflicting_labels() {
        let a = ScoreTable::new("a", ScoreRange::UNIT, vec![rec("p", "r", true, 0.5)]).unwrap();
        let mut r = rec("p", "r", false, 0.5);
        r.probe_subject = "other".into();
        let b = ScoreTable::new("b", ScoreRange::UNIT, vec![r]).unwrap();
        assert!(matches!(align_tables(&[a, b]), Err(Error::Consistency(_))));
    }

    #[test]
    fn align_requires_unit_range() {
        let t = ScoreTable::new("c", ScoreRange::COSINE, vec![rec("p", "r", true, 0.5)]).unwrap();
        assert!(matches!(align_tables(&[t]), Err(Error::Contract(_))));
    }

    #[test]
    fn select_reorders_columns() {
        let a = align_tables(&[table("a", 4), table("b", 4)]).unwrap();
        let s = a.select(&["b".to_string(), "a".to_string()]).unwrap();
        assert_eq!(s.column(0), a.column(1));
        assert!(a.select(&["zz".to_string()]).is_err());
    }

    fn subjects(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("subject{i:03}")).collect()
    }

    #[test]
    fn split_matches_reported_partition_sizes() {
        let s = split_subjects(&subjects(130), 25.0 / 130.0, 0.10, 11).unwrap();
        assert_eq!(s.test_subjects.len(), 25);
        assert!((10..=11).contains(&s.validation_subjects.len()));
        assert_eq!(s.train_subjects.len(), 105 - s.validation_subjects.len());
        assert_eq!(split_subjects(&subjects(130), 25.0 / 130.0, 0.10, 11).unwrap(), s);
    }

    #[test]
    fn split_three_subjects_one_each() {
        let s = split_subjects(&subjects(3), 0.34, 0.5, 0).unwrap();
        assert_eq!(
            (s.test_subjects.len(), s.validation_subjects.len(), s.train_subjects.len()),
            (1, 1, 1)
        );
    }

    #[test]
    fn split_rejects_empty_partition_and_bad_inputs() {
        assert!(matches!(
            split_subjects(&subjects(4), 0.05, 0.5, 0),
            Err(Error::Partition(_))
        ));
        assert!(split_subjects(&subjects(2), 0.5, 0.5, 0).is_err());
        assert!(split_subjects(&subjects(10), 1.0, 0.5, 0).is_err());
    }

    #[test]
    fn split_depends_on_seed() {
        let a = split_subjects(&subjects(50), 0.2, 0.1, 1).unwrap();
        let b = split_subjects(&subjects(50), 0.2, 0.1, 2).unwrap();
        assert_ne!(a.test_subjects, b.test_subjects);
    }

    #[test]
    fn setting_rejects_nonpositive_distance() {
        assert!(SettingDescriptor::new("c", 0.0, "d").is_err());
        assert!(SettingDescriptor::new("c", -1.0, "d").is_err());
        let json = r#"{"camera_id":"c","distance_m":-2,"dataset_id":"d"}"#;
        assert!(serde_json::from_str::<SettingDescriptor>(json).is_err());
    }
}
