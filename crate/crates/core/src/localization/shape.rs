//! Possibility maps: relationship-weighted, Gaussian-masked fusion of
//! detector activation maps, and the body-region estimate built from them.

use crate::error::{Result, WpalError};
use crate::image::{encode_pgm_scaled, resize_plane};
use crate::metrics::DECISION_THRESHOLD;
use crate::nn::{BinLocations, BinVector};
use crate::tensor::Tensor;

use super::relation::CorrelationStats;

/// Non-negative `height × width` map of attribute existence.
#[derive(Clone, Debug, PartialEq)]
pub struct PossibilityMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl PossibilityMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(WpalError::InvalidShape {
                op: "possibility_map",
                detail: format!("{height}x{width} map with {} values", data.len()),
            });
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(WpalError::InvalidInput(format!("possibility map value {v} is not finite and non-negative")));
        }
        Ok(PossibilityMap { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    /// First maximal pixel in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }

    pub fn scale(&self, c: f64) -> PossibilityMap {
        PossibilityMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Weighted centre of mass `(y, x)`.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut m, mut sy, mut sx) = (0.0, 0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = self.at(y, x);
                m += v;
                sy += v * y as f64;
                sx += v * x as f64;
            }
        }
        (m > 0.0).then(|| (sy / m, sx / m))
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm_scaled(&self.data, self.height, self.width)
    }
}

/// Variance of the Gaussian mask for a detector map: `(W_img·H_img)/(W_d·H_d)`.
pub fn mask_variance(image: (usize, usize), map: (usize, usize)) -> f64 {
    (image.0 * image.1) as f64 / (map.0 * map.1) as f64
}

/// `exp(−((i−c_y)² + (j−c_x)²) / (2·var))` over an `h × w` grid.
pub fn gaussian_mask(shape: (usize, usize), center: (f64, f64), var: f64) -> Result<Vec<f64>> {
    if !(var > 0.0 && var.is_finite()) {
        return Err(WpalError::InvalidInput(format!("mask variance must be positive, got {var}")));
    }
    let (h, w) = shape;
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        let dy = i as f64 - center.0;
        for j in 0..w {
            let dx = j as f64 - center.1;
            out.push((-(dy * dy + dx * dx) / (2.0 * var)).exp());
        }
    }
    Ok(out)
}

/// Detector outputs of one forward pass, per branch.
#[derive(Clone, Copy, Debug)]
pub struct DetectorOutputs<'a> {
    pub detections: &'a [(BinVector, BinLocations)],
    /// Per branch `C×H_d×W_d` activation maps.
    pub activation_maps: &'a [Tensor],
}

impl DetectorOutputs<'_> {
    fn check(&self, bins: usize) -> Result<()> {
        let total: usize = self.detections.iter().map(|(v, _)| v.scores.len()).sum();
        if total != bins || self.detections.len() != self.activation_maps.len() {
            return Err(WpalError::ShapeMismatch {
                op: "estimate_shape",
                left: vec![self.detections.len(), total],
                right: vec![self.activation_maps.len(), bins],
            });
        }
        for ((v, _), a) in self.detections.iter().zip(self.activation_maps) {
            if a.rank() != 3 || v.scores.len() % a.shape()[0] != 0 {
                return Err(WpalError::InvalidShape {
                    op: "estimate_shape",
                    detail: format!("{} bins do not divide over map {:?}", v.scores.len(), a.shape()),
                });
            }
        }
        Ok(())
    }
}

/// Per-bin fusion weights for one attribute: `score · norm_score · RS`
/// normalized to sum to 1 over every bin of every detector.
///
/// `norm_score` divides the score by PAve when the attribute is predicted
/// present (`p̂ ≥ 0.5`) and by NAve otherwise; a zero average yields a zero
/// normalized score, since such a bin carries no evidence for that class.
pub fn shape_weights(prediction: f64, scores: &[f64], stats: &CorrelationStats) -> Result<Vec<f64>> {
    if scores.len() != stats.bins() {
        return Err(WpalError::ShapeMismatch {
            op: "shape_weights",
            left: vec![scores.len()],
            right: vec![stats.bins()],
        });
    }
    let reference = if prediction >= DECISION_THRESHOLD {
        &stats.pave
    } else {
        &stats.nave
    };
    let raw: Vec<f64> = scores
        .iter()
        .zip(reference)
        .zip(&stats.rs)
        .map(|((&s, &r), &rs)| {
            let norm = if r > 0.0 { s / r } else { 0.0 };
            s * norm * rs
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(WpalError::InvalidInput(
            "no active detector bins: shape weight normalizer is zero".into(),
        ));
    }
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Fuses the detector activation maps into a possibility map at `image`
/// resolution `(H, W)`.
///
/// Each bin contributes its channel's activation map times a Gaussian
/// centred on the bin's argmax. Resizing is linear, so the weighted
/// contributions of one detector are summed at map resolution and resized
/// once.
pub fn estimate_shape(
    prediction: f64,
    outputs: DetectorOutputs<'_>,
    stats: &CorrelationStats,
    image: (usize, usize),
) -> Result<(PossibilityMap, Vec<f64>)> {
    outputs.check(stats.bins())?;
    let all_scores: Vec<f64> = outputs.detections.iter().flat_map(|(v, _)| v.scores.iter().copied()).collect();
    let weights = shape_weights(prediction, &all_scores, stats)?;
    let (h, w) = image;
    let mut d = vec![0.0; h * w];
    let mut offset = 0;
    for ((v, locs), maps) in outputs.detections.iter().zip(outputs.activation_maps) {
        let (c, hd, wd) = (maps.shape()[0], maps.shape()[1], maps.shape()[2]);
        let per = v.scores.len() / c;
        let var = mask_variance(image, (hd, wd));
        let mut acc = vec![0.0; hd * wd];
        let mut any = false;
        for k in 0..v.scores.len() {
            let wk = weights[offset + k];
            if wk == 0.0 {
                continue;
            }
            any = true;
            let ch = k / per;
            let (cy, cx) = locs.coords[k];
            let mask = gaussian_mask((hd, wd), (cy as f64, cx as f64), var)?;
            let plane = &maps.data()[ch * hd * wd..(ch + 1) * hd * wd];
            for ((a, &m), &p) in acc.iter_mut().zip(&mask).zip(plane) {
                *a += wk * p * m;
            }
        }
        if any {
            for (o, r) in d.iter_mut().zip(resize_plane(&acc, hd, wd, h, w)) {
                *o += r.max(0.0);
            }
        }
        offset += v.scores.len();
    }
    Ok((PossibilityMap::new(h, w, d)?, weights))
}

/// Informative-region estimate from the maps of all positively predicted
/// attributes: each map is scaled to peak 1, the maps are averaged, the
/// average is scaled to peak 1, and values below its mean are zeroed.
pub fn body_region(maps: &[PossibilityMap]) -> Result<PossibilityMap> {
    let Some(first) = maps.first() else {
        return Err(WpalError::InvalidInput("body region needs at least one positive prediction".into()));
    };
    let (h, w) = (first.height, first.width);
    if let Some(m) = maps.iter().find(|m| (m.height, m.width) != (h, w)) {
        return Err(WpalError::ShapeMismatch {
            op: "body_region",
            left: vec![h, w],
            right: vec![m.height, m.width],
        });
    }
    let mut avg = vec![0.0; h * w];
    for m in maps {
        let peak = m.max();
        if peak > 0.0 {
            for (a, v) in avg.iter_mut().zip(&m.data) {
                *a += v / peak;
            }
        }
    }
    let peak = avg.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        avg.iter_mut().for_each(|v| *v /= peak);
    }
    let mean = avg.iter().sum::<f64>() / avg.len() as f64;
    for v in avg.iter_mut() {
        if *v < mean {
            *v = 0.0;
        }
    }
    PossibilityMap::new(h, w, avg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(pave: Vec<f64>, nave: Vec<f64>, rs: Vec<f64>) -> CorrelationStats {
        CorrelationStats { pave, nave, rs }
    }

    #[test]
    fn mask_values() {
        let m = gaussian_mask((5, 5), (2.0, 2.0), 1.0).unwrap();
        assert_eq!(m[12], 1.0);
        // squared distance 2 = 2·var → e^{-1}
        assert!((m[2 * 5 + 3 + 5] - (-1.0f64).exp()).abs() < 1e-15);
        assert!(gaussian_mask((2, 2), (0.0, 0.0), 0.0).is_err());
        assert_eq!(mask_variance((96, 48), (12, 6)), 64.0);
    }

    #[test]
    fn weights_follow_strength() {
        let st = stats(vec![1.0, 1.0], vec![1.0, 1.0], vec![10.0, 1.0]);
        let w = shape_weights(0.9, &[1.0, 1.0], &st).unwrap();
        assert!((w[0] - 10.0 / 11.0).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_prediction_uses_negative_average() {
        let st = stats(vec![1.0, 0.0], vec![0.5, 2.0], vec![1.0, 1.0]);
        // p̂ < 0.5: norm scores 1/0.5 and 1/2.0 → weights 2 : 0.5
        let w = shape_weights(0.2, &[1.0, 1.0], &st).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-15);
        // p̂ ≥ 0.5: bin 1 has PAve 0, so only bin 0 counts
        assert_eq!(shape_weights(0.5, &[1.0, 1.0], &st).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn silent_detectors_rejected() {
        let st = stats(vec![1.0], vec![1.0], vec![1.0]);
        assert!(shape_weights(0.9, &[0.0], &st).is_err());
    }

    #[test]
    fn single_bin_peak_sits_at_argmax() {
        let maps = vec![Tensor::full(&[1, 4, 4], 1.0)];
        let det = vec![(
            BinVector { scores: vec![1.0] },
            BinLocations {
                coords: vec![(1, 2)],
            },
        )];
        let st = stats(vec![1.0], vec![1.0], vec![1.0]);
        let out = DetectorOutputs {
            detections: &det,
            activation_maps: &maps,
        };
        let (d, w) = estimate_shape(0.9, out, &st, (4, 4)).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(d.argmax(), (1, 2));
        let expected = gaussian_mask((4, 4), (1.0, 2.0), 1.0).unwrap();
        for (a, b) in d.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn body_region_of_one_map_is_thresholded_map() {
        let m = PossibilityMap::new(1, 4, vec![0.0, 1.0, 4.0, 3.0]).unwrap();
        let r = body_region(std::slice::from_ref(&m)).unwrap();
        assert_eq!(r.data(), &[0.0, 0.0, 1.0, 0.75]);
        assert_eq!(body_region(&[m.clone(), m]).unwrap(), r);
        assert!(body_region(&[]).is_err());
    }
}
