//! Affinity construction and the initial (Euclidean) ranking.

use caaf_core::AffinityMatrix;

use crate::error::{DataError, Result};
use crate::features::FeatureSet;

/// Temporal decay used on shot-ordered video collections.
pub const DEFAULT_TEMPORAL_LAMBDA: f64 = 0.005;

const PROBE_ID: &str = "<probe>";

fn widened(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit-normalized rows: gallery first, probe last.
fn unit_rows(gallery: &FeatureSet, probe: &[f32]) -> Result<Vec<Vec<f64>>> {
    if probe.len() != gallery.dim() {
        return Err(DataError::Shape(format!(
            "probe has dimension {}, gallery {}",
            probe.len(),
            gallery.dim()
        )));
    }
    let mut rows = Vec::with_capacity(gallery.len() + 1);
    for i in 0..=gallery.len() {
        let (raw, id) = if i < gallery.len() {
            (gallery.vector(i), gallery.id(i))
        } else {
            (probe, PROBE_ID)
        };
        let mut v = widened(raw);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(DataError::NonFinite(id.to_string()));
        }
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            return Err(DataError::ZeroNorm(id.to_string()));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        rows.push(v);
    }
    Ok(rows)
}

/// `a_ij = max(cos(x_i, x_j), 0)` over the gallery plus the probe (last).
pub fn cosine_affinity(gallery: &FeatureSet, probe: &[f32]) -> Result<AffinityMatrix> {
    let rows = unit_rows(gallery, probe)?;
    Ok(AffinityMatrix::from_upper(rows.len(), |i, j| dot(&rows[i], &rows[j])))
}

/// Cosine affinity damped by shot distance: gallery pairs get
/// `exp(−λ |t_i − t_j|) · max(cos, 0)`. The probe has no timestamp, so its
/// edges stay pure cosine.
pub fn temporal_affinity(gallery: &FeatureSet, probe: &[f32], lambda: f64) -> Result<AffinityMatrix> {
    let ts = gallery.timestamps().ok_or(DataError::MissingTimestamps)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(DataError::Config(format!("lambda must be nonnegative, got {lambda}")));
    }
    let rows = unit_rows(gallery, probe)?;
    let n = gallery.len();
    Ok(AffinityMatrix::from_upper(rows.len(), |i, j| {
        let cos = dot(&rows[i], &rows[j]).max(0.0);
        if i < n && j < n {
            (-lambda * (ts[i] - ts[j]).abs()).exp() * cos
        } else {
            cos
        }
    }))
}

fn distances(gallery: &FeatureSet, probe: &[f32]) -> Result<Vec<f64>> {
    if probe.len() != gallery.dim() {
        return Err(DataError::Shape(format!(
            "probe has dimension {}, gallery {}",
            probe.len(),
            gallery.dim()
        )));
    }
    let p = widened(probe);
    Ok((0..gallery.len())
        .map(|i| {
            gallery
                .vector(i)
                .iter()
                .zip(&p)
                .map(|(&x, y)| (f64::from(x) - y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Gallery indices ordered nearest-first by Euclidean distance to the
/// probe; ties keep index order.
pub fn initial_ranking(gallery: &FeatureSet, probe: &[f32]) -> Result<Vec<usize>> {
    let d = distances(gallery, probe)?;
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    Ok(order)
}

/// Initial ranking scores in `[0, 1]` per gallery index: distances min-max
/// rescaled so the nearest sample scores 1 and the farthest 0. A flat
/// distance profile scores 1 everywhere.
pub fn initial_scores(gallery: &FeatureSet, probe: &[f32]) -> Result<Vec<f64>> {
    let d = distances(gallery, probe)?;
    let (lo, hi) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    Ok(d.iter()
        .map(|&x| if hi > lo { (hi - x) / (hi - lo) } else { 1.0 })
        .collect())
}

/// Query expansion for weak probes: the renormalized mean of the first
/// `top` samples of `ranking`.
pub fn averaged_probe(gallery: &FeatureSet, ranking: &[usize], top: usize) -> Result<Vec<f32>> {
    let take = top.min(ranking.len());
    if take == 0 {
        return Err(DataError::Config("averaged probe needs at least one sample".into()));
    }
    let mut mean = vec![0.0f64; gallery.dim()];
    for &i in &ranking[..take] {
        for (m, &x) in mean.iter_mut().zip(gallery.vector(i)) {
            *m += f64::from(x);
        }
    }
    let norm = dot(&mean, &mean).sqrt();
    if norm == 0.0 {
        return Err(DataError::ZeroNorm("<averaged probe>".into()));
    }
    Ok(mean.iter().map(|x| (x / norm) as f32).collect())
}
