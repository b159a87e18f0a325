//! Weighted K-means over the above-mean pixels of a possibility map.

use crate::error::{Result, WpalError};

use super::shape::PossibilityMap;

pub const MAX_ITERATIONS: usize = 100;
/// Lloyd iterations stop once no centroid moves farther than this (pixels).
pub const MOVEMENT_TOLERANCE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct LocationResult {
    /// `(y, x)` centroids, heaviest cluster first.
    pub centroids: Vec<(f64, f64)>,
    /// Total member weight per cluster, non-increasing.
    pub masses: Vec<f64>,
    /// Fewer distinct samples than requested clusters were available.
    pub truncated: bool,
}

struct Sample {
    y: f64,
    x: f64,
    w: f64,
}

fn dist2(a: (f64, f64), s: &Sample) -> f64 {
    (a.0 - s.y).powi(2) + (a.1 - s.x).powi(2)
}

fn nearest(centroids: &[(f64, f64)], s: &Sample) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (j, &c) in centroids.iter().enumerate() {
        let d = dist2(c, s);
        if d < bd {
            bd = d;
            best = j;
        }
    }
    best
}

/// Clusters pixels with `D > mean(D)`, weighted by their value, into `k`
/// groups. Initialization is deterministic: the heaviest pixel first, then
/// repeatedly the sample farthest from all chosen centroids.
pub fn locate(map: &PossibilityMap, k: usize) -> Result<LocationResult> {
    if k == 0 {
        return Err(WpalError::InvalidInput("cluster count must be at least 1".into()));
    }
    let mean = map.mean();
    let mut samples = Vec::new();
    for y in 0..map.height() {
        for x in 0..map.width() {
            let v = map.at(y, x);
            if v > mean {
                samples.push(Sample {
                    y: y as f64,
                    x: x as f64,
                    w: v,
                });
            }
        }
    }
    if samples.is_empty() {
        return Err(WpalError::InvalidInput("possibility map is constant; nothing to cluster".into()));
    }
    let truncated = samples.len() < k;
    let k = k.min(samples.len());

    let mut heaviest = 0;
    for (i, s) in samples.iter().enumerate() {
        if s.w > samples[heaviest].w {
            heaviest = i;
        }
    }
    let mut centroids = vec![(samples[heaviest].y, samples[heaviest].x)];
    while centroids.len() < k {
        let mut far = 0;
        let mut fd = -1.0;
        for (i, s) in samples.iter().enumerate() {
            let d = centroids.iter().map(|&c| dist2(c, s)).fold(f64::INFINITY, f64::min);
            if d > fd {
                fd = d;
                far = i;
            }
        }
        centroids.push((samples[far].y, samples[far].x));
    }

    let mut assign = vec![0; samples.len()];
    for _ in 0..MAX_ITERATIONS {
        for (a, s) in assign.iter_mut().zip(&samples) {
            *a = nearest(&centroids, s);
        }
        let mut sums = vec![(0.0, 0.0, 0.0); k];
        for (&a, s) in assign.iter().zip(&samples) {
            sums[a].0 += s.w * s.y;
            sums[a].1 += s.w * s.x;
            sums[a].2 += s.w;
        }
        let mut moved: f64 = 0.0;
        for (c, &(sy, sx, m)) in centroids.iter_mut().zip(&sums) {
            if m > 0.0 {
                let next = (sy / m, sx / m);
                moved = moved.max(((next.0 - c.0).powi(2) + (next.1 - c.1).powi(2)).sqrt());
                *c = next;
            }
        }
        if moved < MOVEMENT_TOLERANCE {
            break;
        }
    }
    for (a, s) in assign.iter_mut().zip(&samples) {
        *a = nearest(&centroids, s);
    }
    let mut masses = vec![0.0; k];
    for (&a, s) in assign.iter().zip(&samples) {
        masses[a] += s.w;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| masses[b].total_cmp(&masses[a]).then(a.cmp(&b)));
    Ok(LocationResult {
        centroids: order.iter().map(|&i| centroids[i]).collect(),
        masses: order.iter().map(|&i| masses[i]).collect(),
        truncated,
    })
}
