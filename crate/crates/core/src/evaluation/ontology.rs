//! Relation label sets, coarse regroupings and the seen/unseen partition.
//!
//! Ontologies are loaded from TOML files:
//!
//! ```toml
//! name = "ddrel"
//! labels = ["Child-Parent", "Siblings", "Courtship"]
//!
//! [coarse.4]
//! "Child-Parent" = "Family"
//!
//! [cross_map]
//! "Child-Parent" = ["per:children"]
//! "Courtship" = []
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, TrendError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Seen,
    Unseen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationOntology {
    pub name: String,
    pub labels: Vec<String>,
    /// granularity (as a string key, e.g. "4") -> label -> coarse label
    #[serde(default)]
    pub coarse: BTreeMap<String, BTreeMap<String, String>>,
    /// target label -> counterpart labels in the source ontology (empty = none)
    #[serde(default)]
    pub cross_map: BTreeMap<String, Vec<String>>,
}

impl RelationOntology {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        let ontology = RelationOntology {
            name: name.into(),
            labels,
            coarse: BTreeMap::new(),
            cross_map: BTreeMap::new(),
        };
        ontology.validate()?;
        Ok(ontology)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrendError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            TrendError::Ontology(msg) => TrendError::Ontology(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let ontology: RelationOntology =
            toml::from_str(text).map_err(|e| TrendError::Ontology(e.to_string()))?;
        ontology.validate()?;
        Ok(ontology)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("ontology serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(TrendError::Ontology(format!(
                "ontology {} has no labels",
                self.name
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for label in &self.labels {
            if !seen.insert(label) {
                return Err(TrendError::Ontology(format!("duplicate label {label:?}")));
            }
        }
        for (granularity, map) in &self.coarse {
            granularity.parse::<usize>().map_err(|_| {
                TrendError::Ontology(format!("coarse key {granularity:?} is not a class count"))
            })?;
            if let Some(unknown) = map.keys().find(|k| !seen.contains(k)) {
                return Err(TrendError::Ontology(format!(
                    "coarse.{granularity} maps unknown label {unknown:?}"
                )));
            }
        }
        if let Some(unknown) = self.cross_map.keys().find(|k| !seen.contains(k)) {
            return Err(TrendError::Ontology(format!(
                "cross_map has unknown label {unknown:?}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    /// Available scoring granularities, ascending; the full label count is
    /// always present (identity map).
    pub fn granularities(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.coarse.keys().filter_map(|k| k.parse().ok()).collect();
        out.push(self.labels.len());
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Maps a fine label to its class at `granularity`.
    pub fn coarsen<'a>(&'a self, label: &'a str, granularity: usize) -> Result<&'a str> {
        if granularity == self.labels.len() && !self.coarse.contains_key(&granularity.to_string()) {
            return if self.index_of(label).is_some() {
                Ok(label)
            } else {
                Err(TrendError::Ontology(format!("unknown label {label:?}")))
            };
        }
        let map = self.coarse.get(&granularity.to_string()).ok_or_else(|| {
            TrendError::Ontology(format!(
                "ontology {} has no {granularity}-class grouping",
                self.name
            ))
        })?;
        map.get(label).map(String::as_str).ok_or_else(|| {
            TrendError::Ontology(format!(
                "label {label:?} has no {granularity}-class mapping"
            ))
        })
    }

    /// Seen/unseen status; `None` when the ontology has no cross-dataset map
    /// or the label is absent from it.
    pub fn partition(&self, label: &str) -> Option<Partition> {
        self.cross_map.get(label).map(|targets| {
            if targets.is_empty() {
                Partition::Unseen
            } else {
                Partition::Seen
            }
        })
    }

    pub fn has_cross_map(&self) -> bool {
        !self.cross_map.is_empty()
    }

    /// SHA-256 over the ordered label list.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for label in &self.labels {
            hasher.update(label.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}
