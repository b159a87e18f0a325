//! Binary PPM (P6) / PGM (P5) codecs and bilinear resampling of `C×H×W`
//! tensors.

use std::path::Path;

use crate::error::{Result, WpalError};
use crate::tensor::Tensor;

/// 8-bit quantization used by every writer.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(WpalError::Format("file too short for a netpbm header".into()));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(WpalError::Format("truncated netpbm header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(WpalError::Format("malformed netpbm header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| WpalError::Format("header value out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(WpalError::Format("missing separator after maxval".into()));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(WpalError::Format("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(WpalError::Format(format!("unsupported maxval {maxval}")));
    }
    Ok(Header {
        magic,
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

/// Decodes a P6 image into a `3×H×W` tensor with values in `[0, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P6" {
        return Err(WpalError::Format("not a binary PPM (P6) image".into()));
    }
    let n = h.width * h.height;
    let raw = bytes
        .get(h.data_start..h.data_start + 3 * n)
        .ok_or_else(|| WpalError::Format("truncated PPM pixel data".into()))?;
    let scale = h.maxval as f64;
    let mut data = vec![0.0; 3 * n];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * n + i] = px[c] as f64 / scale;
        }
    }
    Tensor::new(vec![3, h.height, h.width], data)
}

pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    if image.rank() != 3 || image.shape()[0] != 3 {
        return Err(WpalError::InvalidShape {
            op: "encode_ppm",
            detail: format!("expected 3×H×W, got {:?}", image.shape()),
        });
    }
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let n = h * w;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * n);
    let d = image.data();
    for i in 0..n {
        for c in 0..3 {
            out.push(quantize(d[c * n + i]));
        }
    }
    Ok(out)
}

/// Encodes a non-negative `H×W` map as P5 with its maximum mapped to 255.
pub fn encode_pgm_scaled(map: &[f64], h: usize, w: usize) -> Vec<u8> {
    assert_eq!(map.len(), h * w);
    let max = map.iter().cloned().fold(0.0, f64::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(map.iter().map(|&v| if max > 0.0 { quantize(v / max) } else { 0 }));
    out
}

/// Decodes a P5 image into an `H×W` vector of `[0, 1]` values.
pub fn decode_pgm(bytes: &[u8]) -> Result<(Vec<f64>, usize, usize)> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P5" {
        return Err(WpalError::Format("not a binary PGM (P5) image".into()));
    }
    let n = h.width * h.height;
    let raw = bytes
        .get(h.data_start..h.data_start + n)
        .ok_or_else(|| WpalError::Format("truncated PGM pixel data".into()))?;
    Ok((raw.iter().map(|&b| b as f64 / h.maxval as f64).collect(), h.height, h.width))
}

/// Grayscale of `image` with `map` (normalized by its max) blended in as red
/// at 50% opacity.
pub fn encode_overlay_ppm(image: &Tensor, map: &[f64]) -> Result<Vec<u8>> {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    if map.len() != h * w {
        return Err(WpalError::ShapeMismatch {
            op: "overlay",
            left: image.shape().to_vec(),
            right: vec![map.len()],
        });
    }
    let n = h * w;
    let max = map.iter().cloned().fold(0.0, f64::max);
    let d = image.data();
    let mut rgb = vec![0.0; 3 * n];
    for i in 0..n {
        let gray = 0.299 * d[i] + 0.587 * d[n + i] + 0.114 * d[2 * n + i];
        let m = if max > 0.0 { map[i] / max } else { 0.0 };
        rgb[i] = 0.5 * gray + 0.5 * m;
        rgb[n + i] = 0.5 * gray;
        rgb[2 * n + i] = 0.5 * gray;
    }
    encode_ppm(&Tensor::new(vec![3, h, w], rgb)?)
}

/// 8-bit interleaved RGB raster; the exact on-disk content of a P6 file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    /// Row-major `[r, g, b]` triples.
    pub data: Vec<u8>,
}

impl RgbImage {
    /// Quantizes a `3×H×W` tensor.
    pub fn from_tensor(image: &Tensor) -> Result<Self> {
        let bytes = encode_ppm(image)?;
        Self::decode(&bytes)
    }

    pub fn to_tensor(&self) -> Tensor {
        let n = self.height * self.width;
        let mut data = vec![0.0; 3 * n];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * n + i] = px[c] as f64 / 255.0;
            }
        }
        Tensor::new(vec![3, self.height, self.width], data).unwrap()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let h = parse_header(bytes)?;
        if &h.magic != b"P6" || h.maxval != 255 {
            return Err(WpalError::Format("expected an 8-bit binary PPM (P6, maxval 255)".into()));
        }
        let n = 3 * h.width * h.height;
        let raw = bytes
            .get(h.data_start..h.data_start + n)
            .ok_or_else(|| WpalError::Format("truncated PPM pixel data".into()))?;
        Ok(RgbImage {
            height: h.height,
            width: h.width,
            data: raw.to_vec(),
        })
    }
}

pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| WpalError::io(path, e))?;
    decode_ppm(&bytes).map_err(|e| WpalError::Format(format!("{}: {e}", path.display())))
}

pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    std::fs::write(path, encode_ppm(image)?).map_err(|e| WpalError::io(path, e))
}

/// Bilinear resampling of one `h × w` plane, half-pixel centers.
pub fn resize_plane(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(src.len(), h * w);
    if h == out_h && w == out_w {
        return src.to_vec();
    }
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = axis(h, out_h);
    let xs = axis(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Bilinear resize of a `C×H×W` tensor.
pub fn resize(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if image.rank() != 3 || out_h == 0 || out_w == 0 {
        return Err(WpalError::InvalidShape {
            op: "resize",
            detail: format!("cannot resize {:?} to {out_h}x{out_w}", image.shape()),
        });
    }
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let mut data = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        data.extend(resize_plane(&image.data()[ch * h * w..(ch + 1) * h * w], h, w, out_h, out_w));
    }
    Tensor::new(vec![c, out_h, out_w], data)
}

/// Target extents when the longest side is scaled to `target`, aspect kept:
/// the short side becomes `floor(short · scale + 0.5)`, at least 1.
pub fn longest_side_extents(h: usize, w: usize, target: usize) -> (usize, usize) {
    let longest = h.max(w);
    if longest == target {
        return (h, w);
    }
    let scale = target as f64 / longest as f64;
    let short = |s: usize| ((s as f64 * scale + 0.5).floor() as usize).max(1);
    if h >= w {
        (target, short(w))
    } else {
        (short(h), target)
    }
}

pub fn rescale_longest(image: &Tensor, target: usize) -> Result<Tensor> {
    let (h, w) = longest_side_extents(image.shape()[1], image.shape()[2], target);
    resize(image, h, w)
}

/// Reads a P6 image into `[0, 1]` and rescales its longest side to `target`.
pub fn load_image(path: &Path, target: Option<usize>) -> Result<Tensor> {
    let img = read_ppm(path)?;
    match target {
        Some(t) => rescale_longest(&img, t),
        None => Ok(img),
    }
}
