//! The three-branch network: a convolutional trunk, three taps at increasing
//! depth, a transform convolution per tap, an FSPP layer per branch and a
//! fully-connected regression of the concatenated bin maxima to attribute
//! scores.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::KeyValues;
use crate::error::{Result, WpalError};
use crate::nn::{self, conv_output_extent, fspp_bin_count, BinLocations, BinPlace, BinVector, PyramidSpec};
use crate::tape::{Tape, Var};
use crate::tensor::{ByteReader, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 10] = b"WPAL-CKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Geometry of the per-branch transform convolutions.
const BRANCH_KERNEL: usize = 3;
const BRANCH_PAD: usize = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvBlockSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Follow the convolution with 2×2 max pooling.
    pub pool: bool,
}

impl ConvBlockSpec {
    pub fn new(out_channels: usize) -> Self {
        ConvBlockSpec {
            out_channels,
            kernel: 3,
            stride: 1,
            pool: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchSpec {
    pub channels: usize,
    pub pyramid: PyramidSpec,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub trunk: Vec<ConvBlockSpec>,
    /// 1-based trunk block indices whose outputs feed the branches.
    pub taps: [usize; 3],
    pub branches: [BranchSpec; 3],
    pub num_attributes: usize,
    pub seed: u64,
    /// Longest image side fed to the network; images are rescaled to it.
    pub input_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let g33 = PyramidSpec::two_level(3, 3).unwrap();
        let g31 = PyramidSpec::two_level(3, 1).unwrap();
        ModelConfig {
            // Pooling only in the first two blocks keeps the tapped maps at a
            // quarter of the input resolution, fine enough to localize small
            // accessories.
            trunk: [(16, true), (32, true), (64, false), (128, false)]
                .into_iter()
                .map(|(c, pool)| ConvBlockSpec {
                    pool,
                    ..ConvBlockSpec::new(c)
                })
                .collect(),
            taps: [2, 3, 4],
            branches: [
                BranchSpec {
                    channels: 32,
                    pyramid: g33,
                },
                BranchSpec {
                    channels: 32,
                    pyramid: g33,
                },
                BranchSpec {
                    channels: 64,
                    pyramid: g31,
                },
            ],
            num_attributes: 8,
            seed: 1,
            input_size: 64,
        }
    }
}

impl ModelConfig {
    /// Smallest useful network; used for gradient checks.
    pub fn tiny(num_attributes: usize) -> Self {
        let g22 = PyramidSpec::two_level(2, 2).unwrap();
        ModelConfig {
            trunk: vec![ConvBlockSpec::new(4), ConvBlockSpec::new(8)],
            taps: [1, 2, 2],
            branches: [
                BranchSpec {
                    channels: 3,
                    pyramid: g22,
                },
                BranchSpec {
                    channels: 3,
                    pyramid: PyramidSpec::two_level(3, 1).unwrap(),
                },
                BranchSpec {
                    channels: 2,
                    pyramid: PyramidSpec::global_only(),
                },
            ],
            num_attributes,
            seed: 3,
            input_size: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(WpalError::InvalidConfig(m));
        if self.trunk.is_empty() {
            return bad("trunk needs at least one block".into());
        }
        for (i, b) in self.trunk.iter().enumerate() {
            if b.out_channels == 0 || b.kernel == 0 || b.stride == 0 {
                return bad(format!("trunk block {} has a zero extent", i + 1));
            }
        }
        if self.taps[0] == 0 || !self.taps.windows(2).all(|w| w[0] <= w[1]) {
            return bad(format!("taps {:?} must be ascending 1-based block indices", self.taps));
        }
        if self.taps[2] > self.trunk.len() {
            return bad(format!(
                "tap index {} out of range for a {}-block trunk",
                self.taps[2],
                self.trunk.len()
            ));
        }
        if self.branches.iter().any(|b| b.channels == 0) {
            return bad("branch channels must be positive".into());
        }
        if self.num_attributes == 0 {
            return bad("num_attributes must be at least 1".into());
        }
        if self.input_size == 0 {
            return bad("input_size must be positive".into());
        }
        Ok(())
    }

    pub fn tap_channels(&self, branch: usize) -> usize {
        self.trunk[self.taps[branch] - 1].out_channels
    }

    pub fn bin_count(&self) -> usize {
        let b: Vec<_> = self.branches.iter().map(|b| (b.channels, b.pyramid)).collect();
        fspp_bin_count(&b)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "input_size = {}", self.input_size).unwrap();
        writeln!(s, "num_attributes = {}", self.num_attributes).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "taps = {},{},{}", self.taps[0], self.taps[1], self.taps[2]).unwrap();
        for (i, b) in self.trunk.iter().enumerate() {
            writeln!(s, "trunk.{i}.out_channels = {}", b.out_channels).unwrap();
            writeln!(s, "trunk.{i}.kernel = {}", b.kernel).unwrap();
            writeln!(s, "trunk.{i}.stride = {}", b.stride).unwrap();
            writeln!(s, "trunk.{i}.pool = {}", b.pool).unwrap();
        }
        for (i, b) in self.branches.iter().enumerate() {
            writeln!(s, "branch.{i}.channels = {}", b.channels).unwrap();
            let (r, c) = b.pyramid.grid().map_or((0, 0), |g| (g.rows, g.cols));
            writeln!(s, "branch.{i}.grid_rows = {r}").unwrap();
            writeln!(s, "branch.{i}.grid_cols = {c}").unwrap();
        }
        s
    }

    /// Parses the key-value form. `grid_rows = grid_cols = 0` selects a
    /// global-only pyramid.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.check_known(|k| {
            matches!(k, "input_size" | "num_attributes" | "seed" | "taps")
                || k.starts_with("trunk.")
                || k.starts_with("branch.")
        })?;
        let def = ModelConfig::default();
        let mut trunk = Vec::new();
        while kv.get(&format!("trunk.{}.out_channels", trunk.len())).is_some() {
            let i = trunk.len();
            trunk.push(ConvBlockSpec {
                out_channels: kv.require(&format!("trunk.{i}.out_channels"))?,
                kernel: kv.parsed_or(&format!("trunk.{i}.kernel"), 3)?,
                stride: kv.parsed_or(&format!("trunk.{i}.stride"), 1)?,
                pool: kv.parsed_or(&format!("trunk.{i}.pool"), true)?,
            });
        }
        if trunk.is_empty() {
            trunk = def.trunk.clone();
        }
        let taps: Vec<usize> = kv.list("taps")?.unwrap_or_else(|| def.taps.to_vec());
        let taps: [usize; 3] = taps
            .try_into()
            .map_err(|t: Vec<usize>| WpalError::InvalidConfig(format!("exactly three taps required, got {}", t.len())))?;
        let mut branches = def.branches.clone();
        for (i, b) in branches.iter_mut().enumerate() {
            b.channels = kv.parsed_or(&format!("branch.{i}.channels"), b.channels)?;
            let (dr, dc) = b.pyramid.grid().map_or((0, 0), |g| (g.rows, g.cols));
            let r: usize = kv.parsed_or(&format!("branch.{i}.grid_rows"), dr)?;
            let c: usize = kv.parsed_or(&format!("branch.{i}.grid_cols"), dc)?;
            b.pyramid = match (r, c) {
                (0, 0) => PyramidSpec::global_only(),
                (r, c) => PyramidSpec::two_level(r, c)?,
            };
        }
        if kv.get("branch.3.channels").is_some() {
            return Err(WpalError::InvalidConfig("exactly three branches are supported".into()));
        }
        let cfg = ModelConfig {
            trunk,
            taps,
            branches,
            num_attributes: kv.parsed_or("num_attributes", def.num_attributes)?,
            seed: kv.parsed_or("seed", def.seed)?,
            input_size: kv.parsed_or("input_size", def.input_size)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text, "<model config>")?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// Where one entry of the concatenated bin vector comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinInfo {
    /// 0-based branch (FSPP layer) index.
    pub branch: usize,
    pub channel: usize,
    /// Bin index within the channel's pyramid.
    pub bin: usize,
    pub place: BinPlace,
}

/// Outputs of an inference pass.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub scores: Vec<f64>,
    /// Per branch: bin maxima and argmax coordinates.
    pub detections: Vec<(BinVector, BinLocations)>,
    /// Per branch: the post-transform activation maps fed to FSPP.
    pub activation_maps: Vec<Tensor>,
}

impl Prediction {
    /// Concatenated bin scores across branches.
    pub fn all_scores(&self) -> Vec<f64> {
        self.detections.iter().flat_map(|(b, _)| b.scores.iter().copied()).collect()
    }
}

/// Handles of a forward pass recorded on a tape.
pub struct TapeForward {
    pub logits: Var,
    pub predictions: Var,
    pub bins: Vec<Var>,
    pub locations: Vec<BinLocations>,
    pub activation_maps: Vec<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    config: ModelConfig,
    params: Vec<Param>,
}

fn fill_uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

impl ModelState {
    /// Expected `(name, shape)` of every parameter, in canonical order.
    pub fn param_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut in_ch = 3;
        for (i, b) in config.trunk.iter().enumerate() {
            out.push((format!("trunk.{i}.weight"), vec![b.out_channels, in_ch, b.kernel, b.kernel]));
            out.push((format!("trunk.{i}.bias"), vec![b.out_channels]));
            in_ch = b.out_channels;
        }
        for (i, b) in config.branches.iter().enumerate() {
            let c = config.tap_channels(i);
            out.push((format!("branch.{i}.weight"), vec![b.channels, c, BRANCH_KERNEL, BRANCH_KERNEL]));
            out.push((format!("branch.{i}.bias"), vec![b.channels]));
        }
        out.push(("fc.weight".into(), vec![config.num_attributes, config.bin_count()]));
        out.push(("fc.bias".into(), vec![config.num_attributes]));
        out
    }

    /// Fan-in scaled uniform weights, zero biases, drawn from `config.seed`.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = Self::param_layout(&config)
            .into_iter()
            .map(|(name, shape)| {
                let tensor = if name.ends_with(".bias") {
                    Tensor::zeros(&shape)
                } else {
                    let fan_in: usize = shape[1..].iter().product();
                    let bound = if name == "fc.weight" {
                        (3.0 / fan_in as f64).sqrt()
                    } else {
                        (6.0 / fan_in as f64).sqrt()
                    };
                    fill_uniform(&mut rng, &shape, bound)
                };
                Param { name, tensor }
            })
            .collect();
        Ok(ModelState { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<Param>) -> Result<Self> {
        config.validate()?;
        let layout = Self::param_layout(&config);
        if layout.len() != params.len() {
            return Err(WpalError::InvalidConfig(format!(
                "expected {} parameters, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in layout.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.tensor.shape() {
                return Err(WpalError::InvalidConfig(format!(
                    "parameter `{}` {:?} does not match config (`{name}` {shape:?})",
                    p.name,
                    p.tensor.shape()
                )));
            }
            if !p.tensor.all_finite() {
                return Err(WpalError::InvalidInput(format!("parameter `{name}` is not finite")));
            }
        }
        Ok(ModelState { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.tensor)
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// Decodes an index into the concatenated bin vector.
    pub fn bin_info(&self, index: usize) -> BinInfo {
        bin_info(&self.config, index)
    }

    /// Records the parameters on `tape`, tracked or as constants.
    pub fn register_params(&self, tape: &mut Tape, tracked: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if tracked {
                    tape.leaf(p.tensor.clone())
                } else {
                    tape.constant(p.tensor.clone())
                }
            })
            .collect()
    }

    /// Records a full forward pass of `image` (a `3×H×W` var) on `tape`.
    pub fn forward_on_tape(&self, tape: &mut Tape, image: Var, params: &[Var]) -> Result<TapeForward> {
        let cfg = &self.config;
        let shape = tape.value(image).shape().to_vec();
        if shape.len() != 3 || shape[0] != 3 {
            return Err(WpalError::InvalidShape {
                op: "forward",
                detail: format!("image must be 3×H×W, got {shape:?}"),
            });
        }
        let mut x = image;
        let mut taps = Vec::with_capacity(3);
        for (i, block) in cfg.trunk.iter().enumerate() {
            let s = tape.value(x).shape().to_vec();
            let pad = block.kernel / 2;
            let oh = conv_output_extent(s[1], block.kernel, block.stride, pad);
            let ow = conv_output_extent(s[2], block.kernel, block.stride, pad);
            let (Some(oh), Some(ow)) = (oh, ow) else {
                return Err(WpalError::InputTooSmall {
                    block: i + 1,
                    detail: format!("{}x{} map cannot hold a {}x{} kernel", s[1], s[2], block.kernel, block.kernel),
                });
            };
            x = nn::conv2d(tape, x, params[2 * i], Some(params[2 * i + 1]), block.stride, pad)?;
            x = nn::relu(tape, x);
            if block.pool {
                if oh < 2 || ow < 2 {
                    return Err(WpalError::InputTooSmall {
                        block: i + 1,
                        detail: format!("{oh}x{ow} map is too small to pool"),
                    });
                }
                x = nn::maxpool2x2(tape, x)?;
            }
            for _ in cfg.taps.iter().filter(|&&t| t == i + 1) {
                taps.push(x);
            }
        }

        let base = 2 * cfg.trunk.len();
        let mut bins = Vec::with_capacity(3);
        let mut locations = Vec::with_capacity(3);
        let mut activation_maps = Vec::with_capacity(3);
        for (b, (branch, &tap)) in cfg.branches.iter().zip(&taps).enumerate() {
            let a = nn::conv2d(tape, tap, params[base + 2 * b], Some(params[base + 2 * b + 1]), 1, BRANCH_PAD)?;
            let a = nn::relu(tape, a);
            let (v, locs) = nn::fspp_forward(tape, a, &branch.pyramid)?;
            activation_maps.push(a);
            bins.push(v);
            locations.push(locs);
        }
        let features = tape.concat(&bins);
        let fc = base + 6;
        let logits = nn::linear(tape, features, params[fc], params[fc + 1])?;
        let predictions = nn::sigmoid(tape, logits);
        Ok(TapeForward {
            logits,
            predictions,
            bins,
            locations,
            activation_maps,
        })
    }

    /// Inference pass.
    pub fn forward(&self, image: &Tensor) -> Result<Prediction> {
        let mut tape = Tape::new();
        let params = self.register_params(&mut tape, false);
        let img = tape.constant(image.clone());
        let out = self.forward_on_tape(&mut tape, img, &params)?;
        let detections = out
            .bins
            .iter()
            .zip(out.locations)
            .map(|(&v, locs)| {
                (
                    BinVector {
                        scores: tape.value(v).data().to_vec(),
                    },
                    locs,
                )
            })
            .collect();
        Ok(Prediction {
            scores: tape.value(out.predictions).data().to_vec(),
            detections,
            activation_maps: out.activation_maps.iter().map(|&a| tape.value(a).clone()).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.save_with_extras(path, &[])
    }

    /// Writes the checkpoint plus extra named tensors (e.g. optimizer state).
    pub fn save_with_extras(&self, path: &Path, extras: &[(String, Tensor)]) -> Result<()> {
        std::fs::write(path, self.checkpoint_bytes(extras)).map_err(|e| WpalError::io(path, e))
    }

    pub fn checkpoint_bytes(&self, extras: &[(String, Tensor)]) -> Vec<u8> {
        let entries: Vec<(&str, Vec<u8>)> = self
            .params
            .iter()
            .map(|p| (p.name.as_str(), p.tensor.to_bytes()))
            .chain(extras.iter().map(|(n, t)| (n.as_str(), t.to_bytes())))
            .collect();
        let config = self.config.to_text();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for (name, blob) in &entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
            offset += blob.len() as u64;
        }
        for (_, blob) in entries {
            out.extend_from_slice(&blob);
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::load_with_extras(path)?.0)
    }

    pub fn load_with_extras(path: &Path) -> Result<(Self, Vec<(String, Tensor)>)> {
        let bytes = std::fs::read(path).map_err(|e| WpalError::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes).map_err(|e| match e {
            WpalError::Format(m) => WpalError::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<(Self, Vec<(String, Tensor)>)> {
        let mut r = ByteReader::new(bytes);
        if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(WpalError::Format("bad checkpoint magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(WpalError::Format(format!("unsupported checkpoint version {version}")));
        }
        let clen = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(clen)?).map_err(|_| WpalError::Format("config is not UTF-8".into()))?;
        let config = ModelConfig::parse(text)?;
        let count = r.u32()? as usize;
        let mut index = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| WpalError::Format("entry name is not UTF-8".into()))?
                .to_string();
            let offset = r.u64()? as usize;
            let len = r.u64()? as usize;
            index.push((name, offset, len));
        }
        let blobs = &bytes[r.pos..];
        let mut tensors = Vec::with_capacity(index.len());
        for (name, offset, len) in index {
            let blob = offset
                .checked_add(len)
                .and_then(|end| blobs.get(offset..end))
                .ok_or_else(|| WpalError::Format(format!("entry `{name}` is truncated")))?;
            let (t, used) = Tensor::from_bytes(blob)?;
            if used != len {
                return Err(WpalError::Format(format!("entry `{name}` has trailing bytes")));
            }
            tensors.push((name, t));
        }
        let n_params = Self::param_layout(&config).len();
        if tensors.len() < n_params {
            return Err(WpalError::Format(format!(
                "checkpoint holds {} tensors, config needs {n_params}",
                tensors.len()
            )));
        }
        let extras = tensors.split_off(n_params);
        let params = tensors.into_iter().map(|(name, tensor)| Param { name, tensor }).collect();
        let state = Self::from_params(config, params)
            .map_err(|e| WpalError::Format(format!("checkpoint inconsistent with its config: {e}")))?;
        Ok((state, extras))
    }
}

pub fn bin_info(config: &ModelConfig, index: usize) -> BinInfo {
    let mut rest = index;
    for (branch, b) in config.branches.iter().enumerate() {
        let per = b.pyramid.bins_per_channel();
        let n = b.channels * per;
        if rest < n {
            let bin = rest % per;
            return BinInfo {
                branch,
                channel: rest / per,
                bin,
                place: b.pyramid.place(bin),
            };
        }
        rest -= n;
    }
    panic!("bin index {index} out of range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fc_width() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.bin_count(), 32 * 10 + 32 * 10 + 64 * 4);
        assert_eq!(cfg.bin_count(), 896);
        let m = ModelState::build(cfg).unwrap();
        assert_eq!(m.param("fc.weight").unwrap().shape(), &[8, 896]);
    }

    #[test]
    fn single_attribute_output() {
        let cfg = ModelConfig {
            num_attributes: 1,
            ..ModelConfig::default()
        };
        let m = ModelState::build(cfg).unwrap();
        let p = m.forward(&Tensor::full(&[3, 40, 20], 0.3)).unwrap();
        assert_eq!(p.scores.len(), 1);
    }

    #[test]
    fn tap_out_of_range_rejected() {
        let cfg = ModelConfig {
            taps: [2, 3, 5],
            ..ModelConfig::default()
        };
        assert!(ModelState::build(cfg).is_err());
    }

    #[test]
    fn same_seed_same_params() {
        let a = ModelState::build(ModelConfig::default()).unwrap();
        let b = ModelState::build(ModelConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = ModelState::build(ModelConfig {
            seed: 99,
            ..ModelConfig::default()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_image_zero_bias_gives_half() {
        let m = ModelState::build(ModelConfig::default()).unwrap();
        let p = m.forward(&Tensor::zeros(&[3, 48, 24])).unwrap();
        assert!(p.scores.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn arity_independent_of_input_size() {
        let m = ModelState::build(ModelConfig::default()).unwrap();
        let a = m.forward(&Tensor::full(&[3, 96, 48], 0.2)).unwrap();
        let b = m.forward(&Tensor::full(&[3, 120, 56], 0.7)).unwrap();
        assert_eq!(a.scores.len(), 8);
        assert_eq!(b.scores.len(), 8);
        assert_eq!(a.all_scores().len(), b.all_scores().len());
    }

    #[test]
    fn too_small_input_reports_block() {
        let m = ModelState::build(ModelConfig::default()).unwrap();
        match m.forward(&Tensor::zeros(&[3, 2, 2])) {
            Err(WpalError::InputTooSmall { block, .. }) => assert_eq!(block, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_text_round_trip() {
        let cfg = ModelConfig::tiny(2);
        assert_eq!(ModelConfig::parse(&cfg.to_text()).unwrap(), cfg);
        let def = ModelConfig::default();
        assert_eq!(ModelConfig::parse(&def.to_text()).unwrap(), def);
    }

    #[test]
    fn config_rejects_wrong_tap_count() {
        assert!(ModelConfig::parse("taps = 1,2").is_err());
        assert!(ModelConfig::parse("taps = 3,2,4").is_err());
        assert!(ModelConfig::parse("bogus = 1").is_err());
    }

    #[test]
    fn bin_info_walks_branches() {
        let cfg = ModelConfig::default();
        assert_eq!(bin_info(&cfg, 0).branch, 0);
        assert_eq!(bin_info(&cfg, 0).place, BinPlace::Global);
        let i = bin_info(&cfg, 320 + 11);
        assert_eq!((i.branch, i.channel, i.bin), (1, 1, 1));
        let last = bin_info(&cfg, 895);
        assert_eq!((last.branch, last.channel, last.bin), (2, 63, 3));
    }
}
