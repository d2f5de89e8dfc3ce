//! Comparison scores computed from feature embeddings.
//!
//! Two measures are provided: a Euclidean posterior `1 / (‖x − y‖ + 1)`,
//! which lies in `(0, 1]`, and the cosine similarity, which lies in `[−1, 1]`.
//!
//! Embeddings are stored one JSON object per line:
//!
//! ```text
//! {"entity_id": "probe-017", "role": "probe", "vector": [0.12, -0.4, ...]}
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorebase::{record_from_pair, PairKey, ScoreRange, ScoreTable, SettingDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Reference,
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub entity_id: String,
    pub role: Role,
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn new(entity_id: impl Into<String>, role: Role, vector: Vec<f64>) -> Result<Self> {
        let e = Embedding {
            entity_id: entity_id.into(),
            role,
            vector,
        };
        e.validate()?;
        Ok(e)
    }

    fn validate(&self) -> Result<()> {
        if self.vector.is_empty() {
            return Err(Error::contract(format!("embedding `{}` is empty", self.entity_id)));
        }
        if self.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "embedding `{}` has non-finite entries",
                self.entity_id
            )));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.vector.len()
    }
}

/// Embeddings of one role keyed by entity id, all of the same dimension.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingSet {
    dimension: usize,
    entries: BTreeMap<String, Embedding>,
}

impl EmbeddingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, embedding: Embedding) -> Result<()> {
        embedding.validate()?;
        if self.entries.is_empty() {
            self.dimension = embedding.dimension();
        } else if embedding.dimension() != self.dimension {
            return Err(Error::contract(format!(
                "embedding `{}` has dimension {}, set has {}",
                embedding.entity_id,
                embedding.dimension(),
                self.dimension
            )));
        }
        if self.entries.contains_key(&embedding.entity_id) {
            return Err(Error::contract(format!(
                "embedding `{}` given twice",
                embedding.entity_id
            )));
        }
        self.entries.insert(embedding.entity_id.clone(), embedding);
        Ok(())
    }

    pub fn from_embeddings(embeddings: impl IntoIterator<Item = Embedding>) -> Result<Self> {
        let mut set = EmbeddingSet::new();
        for e in embeddings {
            set.insert(e)?;
        }
        Ok(set)
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.entries.get(id)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}


/// Read JSON-lines embeddings, splitting them by role into `(references, probes)`.
pub fn read_embeddings<R: Read>(reader: R) -> Result<(EmbeddingSet, EmbeddingSet)> {
    let mut refs = EmbeddingSet::new();
    let mut probes = EmbeddingSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::io("<embeddings>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Embedding = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        match e.role {
            Role::Reference => refs.insert(e),
            Role::Probe => probes.insert(e),
        }
        .map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
    }
    Ok((refs, probes))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<(EmbeddingSet, EmbeddingSet)> {
    let path = path.as_ref();
    read_embeddings(File::open(path).map_err(|e| Error::io(path, e))?)
}

fn check_dims(x: &Embedding, y: &Embedding) -> Result<()> {
    if x.dimension() != y.dimension() {
        return Err(Error::contract(format!(
            "dimension mismatch: `{}` has {}, `{}` has {}",
            x.entity_id,
            x.dimension(),
            y.entity_id,
            y.dimension()
        )));
    }
    Ok(())
}

/// `1 / (d + 1)` where `d` is the Euclidean distance between the vectors.
pub fn score_euclidean(x: &Embedding, y: &Embedding) -> Result<f64> {
    check_dims(x, y)?;
    let d = x
        .vector
        .iter()
        .zip(&y.vector)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(1.0 / (d + 1.0))
}

/// Cosine of the angle between the vectors. Zero vectors are rejected.
pub fn score_cosine(x: &Embedding, y: &Embedding) -> Result<f64> {
    check_dims(x, y)?;
    let norm = |e: &Embedding| e.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (nx, ny) = (norm(x), norm(y));
    for (e, n) in [(x, nx), (y, ny)] {
        if n == 0.0 {
            return Err(Error::contract(format!(
                "embedding `{}` has zero norm; cosine is undefined",
                e.entity_id
            )));
        }
    }
    let dot: f64 = x.vector.iter().zip(&y.vector).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ny)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMetric {
    EuclideanPosterior,
    Cosine,
}

impl ScoreMetric {
    pub fn range(self) -> ScoreRange {
        match self {
            ScoreMetric::EuclideanPosterior => ScoreRange::UNIT,
            ScoreMetric::Cosine => ScoreRange::COSINE,
        }
    }

    pub fn score(self, x: &Embedding, y: &Embedding) -> Result<f64> {
        match self {
            ScoreMetric::EuclideanPosterior => score_euclidean(x, y),
            ScoreMetric::Cosine => score_cosine(x, y),
        }
    }
}

/// Score every listed pair. Output rows follow the order of `pairs`.
pub fn batch_score(
    matcher_id: &str,
    refs: &EmbeddingSet,
    probes: &EmbeddingSet,
    pairs: &[PairKey],
    metric: ScoreMetric,
) -> Result<ScoreTable> {
    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|p| {
            let probe = probes
                .get(&p.probe_id)
                .ok_or_else(|| Error::Lookup(p.probe_id.clone()))?;
            let reference = refs
                .get(&p.reference_id)
                .ok_or_else(|| Error::Lookup(p.reference_id.clone()))?;
            metric.score(reference, probe)
        })
        .collect::<Result<_>>()?;
    let records = pairs
        .iter()
        .zip(scores)
        .map(|(p, s)| record_from_pair(p, s))
        .collect();
    ScoreTable::new(matcher_id, metric.range(), records)
}

pub const PAIR_LIST_HEADER: [&str; 8] = [
    "probe_id",
    "reference_id",
    "probe_subject",
    "reference_subject",
    "mated",
    "camera_id",
    "distance_m",
    "dataset_id",
];

#[derive(Deserialize)]
struct PairRow {
    probe_id: String,
    reference_id: String,
    probe_subject: String,
    reference_subject: String,
    mated: u8,
    camera_id: String,
    distance_m: f64,
    dataset_id: String,
}

/// Read the comparisons to score: the score CSV columns without
/// `matcher_id` and `score`.
pub fn read_pair_list<R: Read>(reader: R) -> Result<Vec<PairKey>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(PAIR_LIST_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", PAIR_LIST_HEADER.join(",")),
        });
    }
    let mut pairs = Vec::new();
    for row in rdr.deserialize::<PairRow>() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = pairs.len() as u64 + 2;
        let setting = SettingDescriptor::new(row.camera_id, row.distance_m, row.dataset_id)
            .map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        if row.mated > 1 {
            return Err(Error::Parse {
                line,
                message: format!("mated must be 0 or 1, found `{}`", row.mated),
            });
        }
        let mated = row.mated == 1;
        if mated != (row.probe_subject == row.reference_subject) {
            return Err(Error::Consistency(format!(
                "pair ({}, {}): mated flag disagrees with subjects",
                row.probe_id, row.reference_id
            )));
        }
        pairs.push(PairKey {
            probe_id: row.probe_id,
            reference_id: row.reference_id,
            probe_subject: row.probe_subject,
            reference_subject: row.reference_subject,
            mated,
            setting,
        });
    }
    Ok(pairs)
}

pub fn load_pair_list(path: impl AsRef<Path>) -> Result<Vec<PairKey>> {
    let path = path.as_ref();
    read_pair_list(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}
