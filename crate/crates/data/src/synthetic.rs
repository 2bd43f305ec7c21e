//! Seeded Gaussian clusters on the unit sphere, for desk-scale benchmarks.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::features::{Dataset, FeatureSet, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_clusters: usize,
    pub per_cluster: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of the isotropic Gaussian noise
    /// added to a unit cluster center before renormalizing.
    pub noise_sigma: f64,
    /// Attach cluster-correlated timestamps (each cluster occupies its own
    /// window of 200 time units, spaced 1000 apart).
    pub timestamps: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_clusters: 10,
            per_cluster: 30,
            dim: 32,
            noise_sigma: 0.6,
            timestamps: false,
        }
    }
}

fn unit(rng: &mut ChaCha8Rng, dim: usize, center: Option<&[f64]>, sigma: f64) -> Vec<f64> {
    loop {
        let scale = if center.is_some() { sigma } else { 1.0 };
        let mut v: Vec<f64> = (0..dim)
            .map(|k| {
                let noise: f64 = rng.sample(StandardNormal);
                center.map_or(0.0, |c| c[k]) + scale * noise
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Generates `n_clusters × per_cluster` gallery samples plus one probe per
/// cluster. Ground truth is cluster co-membership. Gallery order is
/// shuffled; output is a pure function of the config.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    if config.dim < 2 {
        return Err(DataError::Config("dim must be at least 2".into()));
    }
    if config.n_clusters == 0 || config.per_cluster == 0 {
        return Err(DataError::Config("need at least one cluster with one sample".into()));
    }
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(DataError::Config("noise_sigma must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;

    let centers: Vec<Vec<f64>> = (0..config.n_clusters).map(|_| unit(&mut rng, dim, None, 0.0)).collect();

    // (cluster, member, vector, timestamp)
    let mut gallery = Vec::with_capacity(config.n_clusters * config.per_cluster);
    let mut probes = Vec::with_capacity(config.n_clusters);
    for (c, center) in centers.iter().enumerate() {
        let window = 1000.0 * c as f64;
        for k in 0..config.per_cluster {
            let v = unit(&mut rng, dim, Some(center), config.noise_sigma);
            let t = window + rng.random_range(0.0..200.0);
            gallery.push((c, format!("c{c:03}_g{k:03}"), v, t));
        }
        let v = unit(&mut rng, dim, Some(center), config.noise_sigma);
        let t = window + rng.random_range(0.0..200.0);
        probes.push((c, format!("c{c:03}_probe"), v, t));
    }
    gallery.shuffle(&mut rng);

    let build = |rows: &[(usize, String, Vec<f64>, f64)]| -> Result<FeatureSet> {
        let ids = rows.iter().map(|r| r.1.clone()).collect();
        let vectors = rows.iter().flat_map(|r| r.2.iter().map(|&x| x as f32)).collect();
        let fs = FeatureSet::new(ids, dim, vectors)?;
        if config.timestamps {
            fs.with_timestamps(rows.iter().map(|r| r.3).collect())
        } else {
            Ok(fs)
        }
    };

    let mut relevant: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (c, probe_id, _, _) in &probes {
        let members = gallery.iter().filter(|g| g.0 == *c).map(|g| g.1.clone()).collect();
        relevant.insert(probe_id.clone(), members);
    }

    Ok(Dataset {
        name: format!(
            "synthetic-s{}-{}x{}-d{}",
            config.seed, config.n_clusters, config.per_cluster, config.dim
        ),
        gallery: build(&gallery)?,
        probes: build(&probes)?,
        ground_truth: GroundTruth { relevant },
    })
}
