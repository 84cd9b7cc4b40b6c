//! Feature schema: per-feature kind, category vocabularies, mutability flags,
//! and optional user-declared marginal directions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direction a user expects the model output to move when this feature
/// increases. When set, it takes precedence over model probing in the
/// directional-coherence score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalDirection {
    Increase,
    Decrease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureKind {
    Continuous,
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    /// Frozen features are never altered by the counterfactual search.
    #[serde(default)]
    pub frozen: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_override: Option<MarginalDirection>,
}

impl Feature {
    pub fn continuous(name: impl Into<String>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Continuous,
            frozen: false,
            marginal_override: None,
        }
    }

    pub fn categorical(name: impl Into<String>, categories: &[&str]) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Categorical {
                categories: categories.iter().map(|c| c.to_string()).collect(),
            },
            frozen: false,
            marginal_override: None,
        }
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn with_override(mut self, dir: MarginalDirection) -> Self {
        self.marginal_override = Some(dir);
        self
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FeatureKind::Continuous)
    }
}

/// Ordered list of feature declarations. Invariants are checked on
/// construction: unique names, categorical vocabularies with at least two
/// distinct entries, and marginal overrides only on continuous features
/// (a direction has no meaning for an unordered vocabulary).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDoc", into = "SchemaDoc")]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

/// Serialized form (`[[features]]` tables in TOML, an array in JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SchemaDoc {
    features: Vec<Feature>,
}

impl TryFrom<SchemaDoc> for FeatureSchema {
    type Error = Error;
    fn try_from(doc: SchemaDoc) -> Result<Self> {
        FeatureSchema::new(doc.features)
    }
}

impl From<FeatureSchema> for SchemaDoc {
    fn from(s: FeatureSchema) -> Self {
        SchemaDoc {
            features: s.features,
        }
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Schema("schema declares no features".into()));
        }
        for (i, f) in features.iter().enumerate() {
            if features[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Schema(format!("duplicate feature name '{}'", f.name)));
            }
            if let FeatureKind::Categorical { categories } = &f.kind {
                let mut distinct = categories.clone();
                distinct.sort();
                distinct.dedup();
                if distinct.len() < 2 {
                    return Err(Error::Schema(format!(
                        "categorical feature '{}' needs at least 2 distinct categories",
                        f.name
                    )));
                }
                if distinct.len() != categories.len() {
                    return Err(Error::Schema(format!(
                        "categorical feature '{}' lists a category twice",
                        f.name
                    )));
                }
                if f.marginal_override.is_some() {
                    return Err(Error::Schema(format!(
                        "marginal_override on categorical feature '{}' is not supported",
                        f.name
                    )));
                }
            }
        }
        Ok(FeatureSchema { features })
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature(&self, idx: usize) -> &Feature {
        &self.features[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn n_continuous(&self) -> usize {
        self.features.iter().filter(|f| f.is_continuous()).count()
    }

    pub fn n_categorical(&self) -> usize {
        self.len() - self.n_continuous()
    }

    /// Indices of continuous features, in schema order.
    pub fn continuous_indices(&self) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_continuous())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn categorical_indices(&self) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_continuous())
            .map(|(i, _)| i)
            .collect()
    }

    /// Index of `category` in the vocabulary of feature `idx`.
    pub fn category_index(&self, idx: usize, category: &str) -> Option<usize> {
        match &self.features[idx].kind {
            FeatureKind::Categorical { categories } => {
                categories.iter().position(|c| c == category)
            }
            FeatureKind::Continuous => None,
        }
    }

    /// Stable content hash used to tie serialized artifacts to the schema
    /// they were built against.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let doc = serde_json::to_string(&SchemaDoc {
            features: self.features.clone(),
        })
        .expect("schema serializes");
        let digest = Sha256::digest(doc.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A single feature value in original (untransformed) units: a real number
/// for continuous features, a vocabulary index for categorical ones.
/// `Cat` is declared first so untagged deserialization tries the integer
/// reading before falling back to a float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Cat(usize),
    Num(f64),
}

impl Value {
    pub fn as_num(&self) -> f64 {
        match self {
            Value::Num(v) => *v,
            Value::Cat(_) => panic!("categorical value used as number"),
        }
    }

    pub fn as_cat(&self) -> usize {
        match self {
            Value::Cat(c) => *c,
            Value::Num(_) => panic!("continuous value used as category"),
        }
    }
}

/// One observation; values are positionally aligned with the schema.
pub type Row = Vec<Value>;

/// Check that a row is positionally conformant: right arity, numeric values
/// finite, category indices within the vocabulary.
pub fn check_row(schema: &FeatureSchema, row: &Row) -> Result<()> {
    if row.len() != schema.len() {
        return Err(Error::Dimension {
            expected: schema.len(),
            got: row.len(),
        });
    }
    for (f, v) in schema.features().iter().zip(row) {
        match (&f.kind, v) {
            (FeatureKind::Continuous, Value::Num(x)) => {
                if !x.is_finite() {
                    return Err(Error::Schema(format!(
                        "non-finite value for feature '{}'",
                        f.name
                    )));
                }
            }
            (FeatureKind::Categorical { categories }, Value::Cat(c)) => {
                if *c >= categories.len() {
                    return Err(Error::Schema(format!(
                        "category index {c} out of range for feature '{}'",
                        f.name
                    )));
                }
            }
            _ => {
                return Err(Error::Schema(format!(
                    "value kind mismatch for feature '{}'",
                    f.name
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_names() {
        let err = FeatureSchema::new(vec![Feature::continuous("a"), Feature::continuous("a")]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_single_category() {
        let err = FeatureSchema::new(vec![Feature::categorical("c", &["only"])]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_override_on_categorical() {
        let mut f = Feature::categorical("c", &["a", "b"]);
        f.marginal_override = Some(MarginalDirection::Increase);
        assert!(FeatureSchema::new(vec![f]).is_err());
    }

    #[test]
    fn row_conformance() {
        let schema = FeatureSchema::new(vec![
            Feature::continuous("x"),
            Feature::categorical("c", &["red", "green"]),
        ])
        .unwrap();
        assert!(check_row(&schema, &vec![Value::Num(1.0), Value::Cat(1)]).is_ok());
        assert!(check_row(&schema, &vec![Value::Num(1.0), Value::Cat(2)]).is_err());
        assert!(check_row(&schema, &vec![Value::Num(f64::NAN), Value::Cat(0)]).is_err());
        assert!(check_row(&schema, &vec![Value::Num(1.0)]).is_err());
    }

    #[test]
    fn content_hash_is_stable_and_sensitive() {
        let a = FeatureSchema::new(vec![Feature::continuous("x")]).unwrap();
        let b = FeatureSchema::new(vec![Feature::continuous("x")]).unwrap();
        let c = FeatureSchema::new(vec![Feature::continuous("y")]).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
    }
}
