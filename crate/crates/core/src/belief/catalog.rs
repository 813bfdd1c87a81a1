use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, LineError, Result};

/// A catalog item: an id, an optional display title and a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub features: Vec<f64>,
}

impl Alternative {
    pub fn new(id: impl Into<String>, features: Vec<f64>) -> Result<Self> {
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        Ok(Self {
            id: id.into(),
            title: None,
            features,
        })
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// A validated set of alternatives sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    alternatives: Vec<Alternative>,
    d: usize,
}

impl Catalog {
    pub fn new(alternatives: Vec<Alternative>) -> Result<Self> {
        let errors = validate(alternatives.iter().enumerate().map(|(i, a)| (i + 1, a)));
        if !errors.is_empty() {
            return Err(Error::Ingestion(errors));
        }
        let d = alternatives.first().map(Alternative::dim).unwrap_or(0);
        if alternatives.is_empty() {
            return Err(Error::Ingestion(vec![LineError {
                line: 0,
                message: "catalog is empty".into(),
            }]));
        }
        Ok(Self { alternatives, d })
    }

    /// Parses JSON Lines; blank lines are skipped. Every offending line is reported.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut parsed = Vec::new();
        let mut errors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Alternative>(line) {
                Ok(a) => parsed.push((i + 1, a)),
                Err(e) => errors.push(LineError {
                    line: i + 1,
                    message: e.to_string(),
                }),
            }
        }
        errors.extend(validate(parsed.iter().map(|(l, a)| (*l, a))));
        errors.sort_by_key(|e| e.line);
        if !errors.is_empty() {
            return Err(Error::Ingestion(errors));
        }
        Self::new(parsed.into_iter().map(|(_, a)| a).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.alternatives {
            out.push_str(&serde_json::to_string(a).expect("alternatives serialize"));
            out.push('\n');
        }
        out
    }

    /// sha256 over the canonical JSON Lines rendering.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    pub fn len(&self) -> usize {
        self.alternatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alternatives.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn alternatives(&self) -> &[Alternative] {
        &self.alternatives
    }

    pub fn get(&self, i: usize) -> &Alternative {
        &self.alternatives[i]
    }

    /// Componentwise mean of the feature vectors.
    pub fn feature_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for a in &self.alternatives {
            for (m, x) in mean.iter_mut().zip(&a.features) {
                *m += x;
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

fn validate<'a>(items: impl Iterator<Item = (usize, &'a Alternative)>) -> Vec<LineError> {
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    let mut d = None;
    for (line, a) in items {
        let mut err = |message: String| errors.push(LineError { line, message });
        if a.features.iter().any(|x| !x.is_finite()) {
            err("non-finite feature".into());
            continue;
        }
        match d {
            None if a.dim() < 2 => {
                err(format!("feature dimension {} is below 2", a.dim()));
                continue;
            }
            None => d = Some(a.dim()),
            Some(d) if d != a.dim() => {
                err(format!("expected {d} features, found {}", a.dim()));
                continue;
            }
            _ => {}
        }
        if !seen.insert(a.id.clone()) {
            err(format!("duplicate id {:?}", a.id));
        }
    }
    errors
}
