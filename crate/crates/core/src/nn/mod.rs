//! Layer forward/backward rules: convolution, activations, pooling, FSPP and
//! the fully-connected regression.

mod activation;
mod conv;
mod fspp;

pub use activation::{maxpool2x2, relu, sigmoid, sigmoid_scalar};
pub use conv::{conv2d, conv_output_extent};
pub use fspp::{
    fspp_bin_count, fspp_bins, fspp_forward, fspp_pool, BinLocations, BinPlace, BinVector, Grid, PyramidSpec,
    Region,
};

use crate::error::Result;
use crate::tape::{Tape, Var};

/// `weight · x + bias` for a rank-1 `x` of length `D`, `weight` of shape
/// `L×D` and `bias` of length `L`.
pub fn linear(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let d = tape.value(x).numel();
    let l = tape.value(weight).shape().first().copied().unwrap_or(0);
    let col = tape.reshape(x, &[d, 1])?;
    let y = tape.matmul(weight, col)?;
    let y = tape.reshape(y, &[l])?;
    tape.add(y, bias)
}
