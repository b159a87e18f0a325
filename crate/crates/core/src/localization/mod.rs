//! Attribute localization from detector responses.
//!
//! Over a training set, each detector bin's average response on positive
//! and negative samples gives a relationship strength per attribute. For one
//! image, the bins' activation maps are masked around their maxima, weighted
//! by that strength and summed into a possibility map, whose above-mean
//! pixels are clustered to produce candidate locations.

mod kmeans;
mod relation;
mod shape;

pub use kmeans::{locate, LocationResult, MAX_ITERATIONS, MOVEMENT_TOLERANCE};
pub use relation::{
    estimate_relationship, rank_bins, rank_indices, relationship_strength, CorrelationStats, RankedBin, ScoreMatrix,
    StatsTable, NAVE_FLOOR,
};
pub use shape::{
    body_region, estimate_shape, gaussian_mask, mask_variance, shape_weights, DetectorOutputs, PossibilityMap,
};

use std::fmt::Write as _;

use crate::error::Result;
use crate::model::{ModelState, Prediction};
use crate::tensor::Tensor;

/// Possibility map and clustered locations of one attribute on one image.
#[derive(Clone, Debug)]
pub struct AttributeLocalization {
    pub attribute: usize,
    pub prediction: f64,
    pub map: PossibilityMap,
    pub locations: LocationResult,
}

/// Localizes `attributes` (with their candidate counts) on a preprocessed
/// image. Coordinates are in the frame of `image`.
pub fn localize_image(
    model: &ModelState,
    stats: &StatsTable,
    image: &Tensor,
    attributes: &[(usize, usize)],
) -> Result<(Prediction, Vec<AttributeLocalization>)> {
    stats.check_against(model.config())?;
    let pred = model.forward(image)?;
    let dims = (image.shape()[1], image.shape()[2]);
    let outputs = DetectorOutputs {
        detections: &pred.detections,
        activation_maps: &pred.activation_maps,
    };
    let mut out = Vec::with_capacity(attributes.len());
    for &(a, k) in attributes {
        let p = pred.scores[a];
        let (map, _) = estimate_shape(p, outputs, &stats.attributes[a], dims)?;
        let locations = locate(&map, k)?;
        out.push(AttributeLocalization {
            attribute: a,
            prediction: p,
            map,
            locations,
        });
    }
    Ok((pred, out))
}

/// Rows of the location CSV (without header) for one attribute.
pub fn location_rows(attribute: usize, result: &LocationResult) -> String {
    let mut s = String::new();
    for (rank, (&(y, x), m)) in result.centroids.iter().zip(&result.masses).enumerate() {
        writeln!(s, "{attribute},{},{y},{x},{m}", rank + 1).unwrap();
    }
    s
}

pub const LOCATIONS_HEADER: &str = "attribute,rank,y,x,mass";
