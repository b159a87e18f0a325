//! Central finite-difference checks of tape gradients.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{ModelConfig, ModelState};
use crate::nn::{self, PyramidSpec};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::train::{bce_on_tape, LossKind, WeightVector};

/// One input to the function under test.
#[derive(Clone, Debug)]
pub struct GradInput {
    pub name: String,
    pub tensor: Tensor,
    /// Frozen inputs are recorded as constants and left out of the report.
    pub tracked: bool,
}

impl GradInput {
    pub fn tracked(name: impl Into<String>, tensor: Tensor) -> Self {
        GradInput {
            name: name.into(),
            tensor,
            tracked: true,
        }
    }

    pub fn frozen(name: impl Into<String>, tensor: Tensor) -> Self {
        GradInput {
            name: name.into(),
            tensor,
            tracked: false,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub tolerance: f64,
    /// Step is `step · (|x| + 1)`.
    pub step: f64,
    /// Check at most this many coordinates per input (evenly strided).
    pub max_coords: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            tolerance: 1e-5,
            step: 1e-4,
            max_coords: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose one-sided differences disagree with each other by
    /// more than the analytic error: a kink (ReLU zero, max tie) sits inside
    /// the stencil, so the central difference is meaningless there.
    pub skipped: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < self.tolerance && e.checked > 0)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<24} {:>8} {:>8} {:>12}  result\n", "input", "checked", "skipped", "max_rel_err");
        for e in &self.entries {
            let ok = e.max_rel_error < self.tolerance && e.checked > 0;
            writeln!(
                s,
                "{:<24} {:>8} {:>8} {:>12.3e}  {}",
                e.name,
                e.checked,
                e.skipped,
                e.max_rel_error,
                if ok { "PASS" } else { "FAIL" }
            )
            .unwrap();
        }
        s
    }
}

/// Step sizes tried per coordinate, each a tenth of the previous.
const RETRY_STEPS: usize = 3;

/// Relative error with an absolute floor of 1 in the denominator.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn evaluate<F>(inputs: &[GradInput], f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|i| tape.constant(i.tensor.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

/// Compares tape gradients of the scalar `f(inputs)` against central
/// differences for every tracked input.
pub fn grad_check<F>(inputs: &[GradInput], f: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|i| {
            if i.tracked {
                tape.leaf(i.tensor.clone())
            } else {
                tape.constant(i.tensor.clone())
            }
        })
        .collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let base = tape.value(out).item();

    let mut probe: Vec<GradInput> = inputs.to_vec();
    let mut entries = Vec::new();
    for (k, input) in inputs.iter().enumerate() {
        if !input.tracked {
            continue;
        }
        let n = input.tensor.numel();
        let analytic = tape.grad(vars[k]).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; n]);
        let stride = opts.max_coords.map_or(1, |m| n.div_ceil(m.max(1)));
        let mut entry = GradCheckEntry {
            name: input.name.clone(),
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
        };
        for j in (0..n).step_by(stride) {
            let x = input.tensor.data()[j];
            let mut h = opts.step * (x.abs() + 1.0);
            let mut best = f64::INFINITY;
            let mut kinked = false;
            // A kink inside the stencil shows up as an error that shrinks
            // with the step; retry with smaller steps before judging.
            for _ in 0..RETRY_STEPS {
                probe[k].tensor.data_mut()[j] = x + h;
                let plus = evaluate(&probe, &f)?;
                probe[k].tensor.data_mut()[j] = x - h;
                let minus = evaluate(&probe, &f)?;
                probe[k].tensor.data_mut()[j] = x;
                let err = relative_error(analytic[j], (plus - minus) / (2.0 * h));
                let forward = (plus - base) / h;
                let backward = (base - minus) / h;
                kinked = relative_error(forward, backward) > err;
                best = best.min(err);
                if best < opts.tolerance {
                    break;
                }
                h /= 10.0;
            }
            if best >= opts.tolerance && kinked {
                entry.skipped += 1;
                continue;
            }
            entry.checked += 1;
            entry.max_rel_error = entry.max_rel_error.max(best);
        }
        entries.push(entry);
    }
    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        entries,
    })
}

/// Gradient checks of one fragment under one seed.
#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub fragment: &'static str,
    pub seed: u64,
    pub report: GradCheckReport,
}

/// Values `−2 + 4·(π(i) + ½)/n` for a seeded permutation π: uniformly
/// spread over `[−2, 2]`, pairwise at least `4/n` apart and never zero, so
/// max ties and ReLU kinks stay far outside the difference stencil.
pub fn spaced_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let data = perm.iter().map(|&p| -2.0 + 4.0 * (p as f64 + 0.5) / n as f64).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn uniform_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// `Σ proj ⊙ y` for a frozen random projection: a scalar whose gradient
/// exercises every output element with a distinct weight.
fn project(tape: &mut Tape, y: Var, proj: Var) -> Result<Var> {
    let p = tape.mul(y, proj)?;
    Ok(tape.sum(p))
}

type Fragment = (&'static str, Vec<GradInput>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>);

fn layer_fragments(rng: &mut ChaCha8Rng) -> Vec<Fragment> {
    let mut out: Vec<Fragment> = Vec::new();
    let x = spaced_tensor(&[2, 5, 5], rng);
    let k = uniform_tensor(&[3, 2, 3, 3], -1.0, 1.0, rng);
    let b = uniform_tensor(&[3], -1.0, 1.0, rng);
    let proj = uniform_tensor(&[3, 5, 5], -1.0, 1.0, rng);
    out.push((
        "conv",
        vec![
            GradInput::tracked("conv.input", x),
            GradInput::tracked("conv.kernel", k),
            GradInput::tracked("conv.bias", b),
            GradInput::frozen("proj", proj),
        ],
        Box::new(|t, v| {
            let y = nn::conv2d(t, v[0], v[1], Some(v[2]), 1, 1)?;
            project(t, y, v[3])
        }),
    ));
    let x = spaced_tensor(&[2, 7, 7], rng);
    let k = uniform_tensor(&[2, 2, 3, 3], -1.0, 1.0, rng);
    let proj = uniform_tensor(&[2, 3, 3], -1.0, 1.0, rng);
    out.push((
        "conv_stride2",
        vec![
            GradInput::tracked("conv_s2.input", x),
            GradInput::tracked("conv_s2.kernel", k),
            GradInput::frozen("proj", proj),
        ],
        Box::new(|t, v| {
            let y = nn::conv2d(t, v[0], v[1], None, 2, 0)?;
            project(t, y, v[2])
        }),
    ));
    let x = spaced_tensor(&[2, 4, 4], rng);
    let proj = uniform_tensor(&[2, 4, 4], -1.0, 1.0, rng);
    out.push((
        "relu",
        vec![GradInput::tracked("relu.input", x), GradInput::frozen("proj", proj)],
        Box::new(|t, v| {
            let y = nn::relu(t, v[0]);
            project(t, y, v[1])
        }),
    ));
    let x = uniform_tensor(&[2, 3, 3], -2.0, 2.0, rng);
    let proj = uniform_tensor(&[2, 3, 3], -1.0, 1.0, rng);
    out.push((
        "sigmoid",
        vec![GradInput::tracked("sigmoid.input", x), GradInput::frozen("proj", proj)],
        Box::new(|t, v| {
            let y = nn::sigmoid(t, v[0]);
            project(t, y, v[1])
        }),
    ));
    let x = spaced_tensor(&[2, 5, 5], rng);
    let proj = uniform_tensor(&[2, 2, 2], -1.0, 1.0, rng);
    out.push((
        "maxpool",
        vec![GradInput::tracked("maxpool.input", x), GradInput::frozen("proj", proj)],
        Box::new(|t, v| {
            let y = nn::maxpool2x2(t, v[0])?;
            project(t, y, v[1])
        }),
    ));
    let x = spaced_tensor(&[2, 6, 6], rng);
    let spec = PyramidSpec::two_level(3, 3).unwrap();
    let proj = uniform_tensor(&[2 * spec.bins_per_channel()], -1.0, 1.0, rng);
    out.push((
        "fspp",
        vec![GradInput::tracked("fspp.input", x), GradInput::frozen("proj", proj)],
        Box::new(move |t, v| {
            let (y, _) = nn::fspp_forward(t, v[0], &spec)?;
            project(t, y, v[1])
        }),
    ));
    let x = uniform_tensor(&[6], -2.0, 2.0, rng);
    let w = uniform_tensor(&[4, 6], -1.0, 1.0, rng);
    let b = uniform_tensor(&[4], -1.0, 1.0, rng);
    let proj = uniform_tensor(&[4], -1.0, 1.0, rng);
    out.push((
        "fc",
        vec![
            GradInput::tracked("fc.input", x),
            GradInput::tracked("fc.weight", w),
            GradInput::tracked("fc.bias", b),
            GradInput::frozen("proj", proj),
        ],
        Box::new(|t, v| {
            let y = nn::linear(t, v[0], v[1], v[2])?;
            project(t, y, v[3])
        }),
    ));
    out
}

/// Checks conv, relu, sigmoid, maxpool, FSPP and the fully-connected layer
/// on fresh random inputs for each seed in `seeds`.
pub fn layer_suite(seeds: std::ops::Range<u64>, tolerance: f64) -> Result<Vec<SuiteResult>> {
    let opts = GradCheckOptions {
        tolerance,
        ..GradCheckOptions::default()
    };
    let mut out = Vec::new();
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (fragment, inputs, f) in layer_fragments(&mut rng) {
            let report = grad_check(&inputs, |t, v| f(t, v), opts)?;
            out.push(SuiteResult { fragment, seed, report });
        }
    }
    Ok(out)
}

/// Checks the weighted loss of the tiny two-attribute model with respect
/// to the image and every parameter, one random model per seed.
pub fn model_suite(seeds: std::ops::Range<u64>, tolerance: f64) -> Result<Vec<SuiteResult>> {
    let opts = GradCheckOptions {
        tolerance,
        ..GradCheckOptions::default()
    };
    let mut out = Vec::new();
    for seed in seeds {
        let mut cfg = ModelConfig::tiny(2);
        cfg.seed = seed;
        let model = ModelState::build(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut inputs = vec![GradInput::tracked("image", uniform_tensor(&[3, 16, 12], 0.0, 1.0, &mut rng))];
        inputs.extend(model.params().iter().map(|p| GradInput::tracked(p.name.clone(), p.tensor.clone())));
        let truth: Vec<f64> = (0..2).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let weights = WeightVector((0..2).map(|_| rng.gen_range(0.05..0.95)).collect());
        let report = grad_check(
            &inputs,
            |t, v| {
                let fwd = model.forward_on_tape(t, v[0], &v[1..])?;
                bce_on_tape(t, fwd.predictions, &truth, LossKind::Weighted, &weights)
            },
            opts,
        )?;
        out.push(SuiteResult {
            fragment: "tiny_model",
            seed,
            report,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::FnRule;

    #[test]
    fn quadratic_passes() {
        let x = Tensor::from_vec(vec![0.3, -1.2, 2.0]);
        let r = grad_check(
            &[GradInput::tracked("x", x)],
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                Ok(t.sum(sq))
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.passed(), "{}", r.to_table());
        assert_eq!(r.entries[0].checked, 3);
    }

    #[test]
    fn frozen_inputs_are_excluded() {
        let r = grad_check(
            &[
                GradInput::tracked("x", Tensor::from_vec(vec![1.0, 2.0])),
                GradInput::frozen("w", Tensor::from_vec(vec![3.0, 4.0])),
            ],
            |t, v| {
                let p = t.mul(v[0], v[1])?;
                Ok(t.sum(p))
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].name, "x");
        assert!(r.passed());
    }

    #[test]
    fn corrupted_rule_fails() {
        let r = grad_check(
            &[GradInput::tracked("x", Tensor::from_vec(vec![0.5, -0.7]))],
            |t, v| {
                let x = t.value(v[0]).clone();
                let y = x.map(|a| a * a * a);
                // Wrong derivative on purpose: 2x instead of 3x².
                let rule = FnRule::new("bad_cube", |inp: &[&Tensor], _o: &Tensor, g: &[f64]| {
                    vec![inp[0].data().iter().zip(g).map(|(a, g)| 2.0 * a * g).collect()]
                });
                let y = t.push(y, vec![v[0]], Box::new(rule));
                Ok(t.sum(y))
            },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(!r.passed());
        assert!(r.to_table().contains("FAIL"));
    }
}
