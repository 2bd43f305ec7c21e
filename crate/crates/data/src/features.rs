use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{DataError, Result};

/// Precomputed feature vectors with per-sample metadata.
///
/// Vectors are stored as `f32`, row-major, and widened to `f64` wherever
/// they enter the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    ids: Vec<String>,
    dim: usize,
    vectors: Vec<f32>,
    timestamps: Option<Vec<f64>>,
    thumbnails: Option<Vec<String>>,
    index: HashMap<String, usize>,
}

impl FeatureSet {
    pub fn new(ids: Vec<String>, dim: usize, vectors: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(DataError::Shape("feature dimension must be positive".into()));
        }
        if vectors.len() != ids.len() * dim {
            return Err(DataError::Shape(format!(
                "{} ids × dim {} needs {} values, got {}",
                ids.len(),
                dim,
                ids.len() * dim,
                vectors.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(DataError::DuplicateId(id.clone()));
            }
            if vectors[i * dim..(i + 1) * dim].iter().any(|x| !x.is_finite()) {
                return Err(DataError::NonFinite(id.clone()));
            }
        }
        Ok(Self {
            ids,
            dim,
            vectors,
            timestamps: None,
            thumbnails: None,
            index,
        })
    }

    pub fn with_timestamps(mut self, timestamps: Vec<f64>) -> Result<Self> {
        if timestamps.len() != self.len() {
            return Err(DataError::Shape(format!(
                "{} timestamps for {} samples",
                timestamps.len(),
                self.len()
            )));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn with_thumbnails(mut self, thumbnails: Vec<String>) -> Result<Self> {
        if thumbnails.len() != self.len() {
            return Err(DataError::Shape(format!(
                "{} thumbnail paths for {} samples",
                thumbnails.len(),
                self.len()
            )));
        }
        self.thumbnails = Some(thumbnails);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn raw(&self) -> &[f32] {
        &self.vectors
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    pub fn thumbnail(&self, i: usize) -> Option<&str> {
        self.thumbnails.as_ref().map(|t| t[i].as_str())
    }

    pub fn thumbnails(&self) -> Option<&[String]> {
        self.thumbnails.as_deref()
    }

    /// The samples at `indices`, in that order, with their metadata.
    pub fn select(&self, indices: &[usize]) -> Self {
        let ids: Vec<String> = indices.iter().map(|&i| self.ids[i].clone()).collect();
        let vectors = indices.iter().flat_map(|&i| self.vector(i).iter().copied()).collect();
        let index = ids.iter().enumerate().map(|(k, id)| (id.clone(), k)).collect();
        Self {
            ids,
            dim: self.dim,
            vectors,
            timestamps: self
                .timestamps
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
            thumbnails: self
                .thumbnails
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i].clone()).collect()),
            index,
        }
    }
}

/// Relevant gallery ids per probe id.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct GroundTruth {
    pub relevant: BTreeMap<String, BTreeSet<String>>,
}

impl GroundTruth {
    pub fn for_probe(&self, probe: &str) -> Option<&BTreeSet<String>> {
        self.relevant.get(probe)
    }

    /// Checks every probe key and relevant id against the given sets.
    pub fn validate(&self, probes: &FeatureSet, gallery: &FeatureSet) -> Result<()> {
        for (probe, ids) in &self.relevant {
            if probes.index_of(probe).is_none() {
                return Err(DataError::UnknownId(probe.clone()));
            }
            if let Some(bad) = ids.iter().find(|id| gallery.index_of(id).is_none()) {
                return Err(DataError::UnknownId(bad.clone()));
            }
        }
        Ok(())
    }
}

/// A gallery, its query probes and their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub gallery: FeatureSet,
    pub probes: FeatureSet,
    pub ground_truth: GroundTruth,
}

impl Dataset {
    pub fn probe_vector(&self, probe_id: &str) -> Result<&[f32]> {
        self.probes
            .index_of(probe_id)
            .map(|i| self.probes.vector(i))
            .ok_or_else(|| DataError::UnknownId(probe_id.to_string()))
    }

    /// Per-gallery-index relevance flags for a probe; `None` without ground truth.
    pub fn relevance(&self, probe_id: &str) -> Option<Vec<bool>> {
        let relevant = self.ground_truth.for_probe(probe_id)?;
        Some(self.gallery.ids().iter().map(|id| relevant.contains(id)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn validates_shape_and_ids() {
        assert!(FeatureSet::new(ids(2), 2, vec![0.0; 3]).is_err());
        assert!(matches!(
            FeatureSet::new(vec!["a".into(), "a".into()], 1, vec![1.0, 2.0]),
            Err(DataError::DuplicateId(_))
        ));
        assert!(matches!(
            FeatureSet::new(ids(1), 2, vec![1.0, f32::NAN]),
            Err(DataError::NonFinite(_))
        ));
    }

    #[test]
    fn select_carries_metadata() {
        let fs = FeatureSet::new(ids(3), 1, vec![1.0, 2.0, 3.0])
            .unwrap()
            .with_timestamps(vec![10.0, 20.0, 30.0])
            .unwrap();
        let sub = fs.select(&[2, 0]);
        assert_eq!(sub.ids(), &["s2", "s0"]);
        assert_eq!(sub.vector(0), &[3.0]);
        assert_eq!(sub.timestamps(), Some(&[30.0, 10.0][..]));
        assert_eq!(sub.index_of("s0"), Some(1));
    }

    #[test]
    fn ground_truth_rejects_unknown_ids() {
        let gallery = FeatureSet::new(ids(2), 1, vec![1.0, 2.0]).unwrap();
        let probes = FeatureSet::new(vec!["p".into()], 1, vec![1.0]).unwrap();
        let mut gt = GroundTruth::default();
        gt.relevant.insert("p".into(), BTreeSet::from(["s1".to_string()]));
        gt.validate(&probes, &gallery).unwrap();
        gt.relevant.insert("p".into(), BTreeSet::from(["nope".to_string()]));
        assert!(matches!(gt.validate(&probes, &gallery), Err(DataError::UnknownId(id)) if id == "nope"));
    }
}
