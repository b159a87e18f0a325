//! Synthetic weakly-labeled pedestrian data with planted attribute
//! locations, and its on-disk format.

mod generate;
mod io;
mod schema;

pub use generate::{
    generate, generate_sample, BodyBox, Dataset, GenerateOptions, PlantedLocation, SyntheticSample,
};
pub use io::{image_name, read_dataset, write_dataset, BODIES_FILE, INDEX_FILE, LOCATIONS_FILE, SCHEMA_FILE};
pub use schema::{AttributeKind, AttributeSchema, AttributeSpec, Renderer};

use crate::error::Result;
use crate::image::rescale_longest;
use crate::tensor::Tensor;
use crate::train::Example;

impl SyntheticSample {
    /// The image in `[0, 1]`, longest side rescaled to `input_size`, and
    /// the factor mapping original pixel coordinates into that frame.
    pub fn network_input(&self, input_size: usize) -> Result<(Tensor, f64)> {
        let t = rescale_longest(&self.image.to_tensor(), input_size)?;
        let scale = t.shape()[1] as f64 / self.image.height as f64;
        Ok((t, scale))
    }
}

impl Dataset {
    /// Preprocessed training examples.
    pub fn examples(&self, input_size: usize) -> Result<Vec<Example>> {
        self.samples
            .iter()
            .map(|s| {
                Ok(Example {
                    image: s.network_input(input_size)?.0,
                    labels: s.labels.clone(),
                })
            })
            .collect()
    }
}
