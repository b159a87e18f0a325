use crate::error::{Result, WpalError};
use crate::linalg::{gemm, MatRef};
use crate::tape::{BackwardRule, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ConvGeom {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unrolls input patches into a `(C·kh·kw) × (H'·W')` matrix.
fn im2col(input: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.positions();
    let mut cols = vec![0.0; g.patch() * p];
    for c in 0..g.channels {
        let plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[oy * g.out_w + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.positions();
    let mut out = vec![0.0; g.channels * g.height * g.width];
    for c in 0..g.channels {
        let plane = &mut out[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let base = iy as usize * g.width;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            plane[base + ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

struct Conv2dRule {
    geom: ConvGeom,
    kernels: usize,
    cols: Vec<f64>,
}

impl BackwardRule for Conv2dRule {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let geom = &self.geom;
        let (k, q, p) = (self.kernels, geom.patch(), geom.positions());
        let gout = MatRef::new(g, k, p);

        let d_input = needs[0].then(|| {
            let mut dcols = vec![0.0; q * p];
            gemm(MatRef::new(inputs[1].data(), k, q).t(), gout, 0.0, &mut dcols);
            col2im(&dcols, geom)
        });
        let d_kernel = needs[1].then(|| {
            let mut dk = vec![0.0; k * q];
            gemm(gout, MatRef::new(&self.cols, q, p).t(), 0.0, &mut dk);
            dk
        });
        let mut grads = vec![d_input, d_kernel];
        if inputs.len() == 3 {
            grads.push(needs[2].then(|| (0..k).map(|i| g[i * p..(i + 1) * p].iter().sum()).collect()));
        }
        grads
    }
}

/// Output extent along one axis, or `None` when the kernel does not fit.
pub fn conv_output_extent(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    (stride >= 1 && kernel >= 1 && kernel <= padded).then(|| (padded - kernel) / stride + 1)
}

/// 2-D cross-correlation of a `C×H×W` input with `K×C×kh×kw` kernels, zero
/// padding, optional per-kernel bias.
pub fn conv2d(tape: &mut Tape, input: Var, kernel: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
    let (ti, tk) = (tape.value(input), tape.value(kernel));
    if ti.rank() != 3 || tk.rank() != 4 || ti.shape()[0] != tk.shape()[1] {
        return Err(WpalError::ShapeMismatch {
            op: "conv2d",
            left: ti.shape().to_vec(),
            right: tk.shape().to_vec(),
        });
    }
    if stride == 0 {
        return Err(WpalError::InvalidInput("conv2d stride must be at least 1".into()));
    }
    let (c, h, w) = (ti.shape()[0], ti.shape()[1], ti.shape()[2]);
    let (k, kh, kw) = (tk.shape()[0], tk.shape()[2], tk.shape()[3]);
    let (Some(out_h), Some(out_w)) = (conv_output_extent(h, kh, stride, pad), conv_output_extent(w, kw, stride, pad))
    else {
        return Err(WpalError::InvalidShape {
            op: "conv2d",
            detail: format!("kernel {kh}x{kw} larger than padded input {}x{}", h + 2 * pad, w + 2 * pad),
        });
    };
    if let Some(b) = bias {
        if tape.value(b).numel() != k {
            return Err(WpalError::ShapeMismatch {
                op: "conv2d bias",
                left: vec![k],
                right: tape.value(b).shape().to_vec(),
            });
        }
    }
    let geom = ConvGeom {
        channels: c,
        height: h,
        width: w,
        kh,
        kw,
        stride,
        pad,
        out_h,
        out_w,
    };
    let cols = im2col(ti.data(), &geom);
    let p = geom.positions();
    let mut out = vec![0.0; k * p];
    if let Some(b) = bias {
        for (i, &bv) in tape.value(b).data().iter().enumerate() {
            out[i * p..(i + 1) * p].iter_mut().for_each(|v| *v = bv);
        }
    }
    gemm(MatRef::new(tk.data(), k, geom.patch()), MatRef::new(&cols, geom.patch(), p), 1.0, &mut out);
    let value = Tensor::new(vec![k, out_h, out_w], out).expect("conv output shape");
    let mut inputs = vec![input, kernel];
    inputs.extend(bias);
    Ok(tape.push(value, inputs, Box::new(Conv2dRule { geom, kernels: k, cols })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kernel_is_identity() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..12).map(|v| v as f64 - 3.5).collect();
        let x = tape.constant(Tensor::new(vec![1, 3, 4], data.clone()).unwrap());
        let k = tape.constant(Tensor::ones(&[1, 1, 1, 1]));
        let y = conv2d(&mut tape, x, k, None, 1, 0).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 3, 4]);
        assert_eq!(tape.value(y).data(), &data[..]);
    }

    #[test]
    fn ones_kernel_counts_receptive_field() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[1, 5, 5]));
        let k = tape.constant(Tensor::ones(&[1, 1, 3, 3]));
        let y = conv2d(&mut tape, x, k, None, 1, 1).unwrap();
        let out = tape.value(y);
        assert_eq!(out.shape(), &[1, 5, 5]);
        assert_eq!(out.at(&[0, 2, 2]), 9.0);
        assert_eq!(out.at(&[0, 0, 0]), 4.0);
        assert_eq!(out.at(&[0, 0, 2]), 6.0);
    }

    #[test]
    fn output_extent_formula() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[2, 7, 9]));
        let k = tape.constant(Tensor::ones(&[3, 2, 3, 3]));
        let y = conv2d(&mut tape, x, k, None, 2, 1).unwrap();
        assert_eq!(tape.value(y).shape(), &[3, 4, 5]);
    }

    #[test]
    fn oversized_kernel_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[1, 2, 2]));
        let k = tape.constant(Tensor::ones(&[1, 1, 5, 5]));
        assert!(conv2d(&mut tape, x, k, None, 1, 1).is_err());
        let k3 = tape.constant(Tensor::ones(&[1, 2, 1, 1]));
        assert!(conv2d(&mut tape, x, k3, None, 1, 0).is_err());
    }

    #[test]
    fn bias_is_added() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 2, 2]));
        let k = tape.constant(Tensor::ones(&[2, 1, 1, 1]));
        let b = tape.constant(Tensor::from_vec(vec![0.5, -1.0]));
        let y = conv2d(&mut tape, x, k, Some(b), 1, 0).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5, 0.5, 0.5, -1.0, -1.0, -1.0, -1.0]);
    }
}
