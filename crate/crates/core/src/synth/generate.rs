//! Procedural pedestrians with planted attribute primitives.
//!
//! Every sample draws from its own ChaCha stream (`stream = index`) of the
//! dataset seed, so any sample can be regenerated independently and the
//! dataset is identical however generation is split.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, WpalError};
use crate::image::{quantize, RgbImage};

use super::schema::{AttributeKind, AttributeSchema, Renderer};

/// Body width as a fraction of body height.
const BODY_ASPECT: f64 = 0.4;
const HEAD_CENTER: f64 = 0.08;
const HEAD_RADIUS: f64 = 0.07;
const TORSO: (f64, f64) = (0.15, 0.55);
const LEGS: (f64, f64) = (0.55, 0.95);
/// Body height range as a fraction of image height.
const BODY_SCALE: (f64, f64) = (0.7, 0.92);
const ASPECT: (f64, f64) = (0.4, 0.6);
const NOISE: f64 = 0.04;
const DARK_FACTOR: f64 = 0.3;

type Rgb = [f64; 3];

const SKIN: Rgb = [0.86, 0.7, 0.56];
const YELLOW: Rgb = [0.97, 0.88, 0.1];
const CYAN: Rgb = [0.1, 0.9, 0.95];
const MAGENTA: Rgb = [0.88, 0.15, 0.82];
const RED: Rgb = [0.88, 0.1, 0.08];
const GREEN: Rgb = [0.1, 0.85, 0.2];
const ORANGE: Rgb = [1.0, 0.55, 0.0];
/// Tights stripes alternate a shaded and a lightened version of the
/// trousers colour: visible texture, but not a dominant edge pattern.
const STRIPE_SHADE: f64 = 0.55;
const STRIPE_LIGHTEN: f64 = 0.35;
/// Everyday clothing colours: muted, none close to a primitive colour.
const CLOTHING: [Rgb; 5] = [
    [0.3, 0.4, 0.68],
    [0.55, 0.55, 0.55],
    [0.5, 0.38, 0.26],
    [0.76, 0.72, 0.62],
    [0.42, 0.5, 0.36],
];

/// Extent of the planted body in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyBox {
    pub top: f64,
    pub left: f64,
    pub height: f64,
    pub width: f64,
}

impl BodyBox {
    pub fn center_x(&self) -> f64 {
        self.left + 0.5 * self.width
    }

    /// Pixel row at a fraction of body height.
    pub fn y_at(&self, frac: f64) -> f64 {
        self.top + frac * self.height
    }
}

/// One planted centre of a positive localizable attribute.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedLocation {
    pub attribute: usize,
    /// 1-based; paired items are ranked left to right.
    pub rank: usize,
    pub y: f64,
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub image: RgbImage,
    /// Ground truth, each 0 or 1.
    pub labels: Vec<f64>,
    pub locations: Vec<PlantedLocation>,
    pub body: BodyBox,
}

impl SyntheticSample {
    pub fn locations_of(&self, attribute: usize) -> impl Iterator<Item = &PlantedLocation> {
        self.locations.iter().filter(move |l| l.attribute == attribute)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenerateOptions {
    pub count: usize,
    pub min_height: usize,
    pub max_height: usize,
    pub seed: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            count: 2000,
            min_height: 64,
            max_height: 128,
            seed: 1,
        }
    }
}

impl GenerateOptions {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(WpalError::InvalidConfig("sample count must be at least 1".into()));
        }
        if self.min_height < 16 || self.min_height > self.max_height {
            return Err(WpalError::InvalidConfig(format!(
                "height range [{}, {}] must satisfy 16 ≤ min ≤ max",
                self.min_height, self.max_height
            )));
        }
        Ok(())
    }
}

/// Axis-aligned ellipse / rectangle painting on a float canvas.
struct Canvas {
    h: usize,
    w: usize,
    px: Vec<Rgb>,
}

impl Canvas {
    fn pixel_range(lo: f64, hi: f64, n: usize) -> std::ops::Range<usize> {
        let a = (lo - 0.5).ceil().max(0.0) as usize;
        let b = ((hi - 0.5).floor() + 1.0).clamp(0.0, n as f64) as usize;
        a.min(n)..b
    }

    /// Fills pixels whose centres fall inside `[top, bottom) × [left, right)`.
    fn rect(&mut self, top: f64, bottom: f64, left: f64, right: f64, color: Rgb) {
        for y in Self::pixel_range(top, bottom, self.h) {
            for x in Self::pixel_range(left, right, self.w) {
                self.px[y * self.w + x] = color;
            }
        }
    }

    fn ellipse(&mut self, cy: f64, cx: f64, ry: f64, rx: f64, color: Rgb) {
        for y in Self::pixel_range(cy - ry, cy + ry, self.h) {
            for x in Self::pixel_range(cx - rx, cx + rx, self.w) {
                let dy = (y as f64 + 0.5 - cy) / ry;
                let dx = (x as f64 + 0.5 - cx) / rx;
                if dy * dy + dx * dx <= 1.0 {
                    self.px[y * self.w + x] = color;
                }
            }
        }
    }

    fn diamond(&mut self, cy: f64, cx: f64, ry: f64, rx: f64, color: Rgb) {
        for y in Self::pixel_range(cy - ry, cy + ry, self.h) {
            for x in Self::pixel_range(cx - rx, cx + rx, self.w) {
                let dy = ((y as f64 + 0.5 - cy) / ry).abs();
                let dx = ((x as f64 + 0.5 - cx) / rx).abs();
                if dy + dx <= 1.0 {
                    self.px[y * self.w + x] = color;
                }
            }
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, color: Rgb, amount: f64) -> Rgb {
    color.map(|c| (c + rng.gen_range(-amount..=amount)).clamp(0.0, 1.0))
}

/// Centre of a primitive of vertical `extent` kept inside `band`.
fn band_center(rng: &mut ChaCha8Rng, band: (f64, f64), extent: f64) -> f64 {
    let lo = band.0 + 0.5 * extent;
    let hi = band.1 - 0.5 * extent;
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Renders sample `index` of the dataset defined by `schema` and `opts`.
pub fn generate_sample(schema: &AttributeSchema, opts: &GenerateOptions, index: usize) -> SyntheticSample {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(index as u64);

    let h = rng.gen_range(opts.min_height..=opts.max_height);
    let w = ((h as f64 * rng.gen_range(ASPECT.0..=ASPECT.1)).round() as usize).max(8);
    let labels: Vec<f64> = schema
        .attributes
        .iter()
        .map(|a| if rng.gen_bool(a.rate) { 1.0 } else { 0.0 })
        .collect();
    let has = |r: Renderer| schema.attributes.iter().zip(&labels).any(|(a, &l)| a.renderer == r && l == 1.0);

    let bh = h as f64 * rng.gen_range(BODY_SCALE.0..=BODY_SCALE.1);
    let bw = (bh * BODY_ASPECT).min(w as f64);
    let body = BodyBox {
        top: rng.gen_range(0.0..=(h as f64 - bh)),
        left: rng.gen_range(0.0..=(w as f64 - bw)),
        height: bh,
        width: bw,
    };
    let cx = body.center_x();

    // Background: a desaturated base colour plus per-pixel noise.
    let gray = rng.gen_range(0.25..0.75);
    let base: Rgb = [0, 1, 2].map(|_| gray + rng.gen_range(-0.06..0.06));
    let mut canvas = Canvas {
        h,
        w,
        px: (0..h * w).map(|_| jitter(&mut rng, base, 0.08)).collect(),
    };

    let tint = if has(Renderer::GlobalTint) { DARK_FACTOR } else { 1.0 };
    let shirt_base = CLOTHING[rng.gen_range(0..CLOTHING.len())];
    let pants_base = CLOTHING[rng.gen_range(0..CLOTHING.len())];
    let shirt = jitter(&mut rng, if has(Renderer::TorsoColor) { RED } else { shirt_base }, 0.05);
    let pants = jitter(&mut rng, pants_base, 0.05);
    let skin = jitter(&mut rng, SKIN, 0.05);
    let shirt = shirt.map(|c| c * tint);
    let pants = pants.map(|c| c * tint);

    // Body: legs, torso, head, feet.
    let leg_w = 0.4 * bw;
    let legs_x = [cx - 0.45 * bw, cx + 0.05 * bw];
    for lx in legs_x {
        canvas.rect(body.y_at(LEGS.0), body.y_at(LEGS.1), lx, lx + leg_w, pants);
        canvas.rect(body.y_at(LEGS.1), body.y_at(1.0), lx, lx + leg_w, skin);
    }
    canvas.rect(body.y_at(TORSO.0), body.y_at(TORSO.1), body.left, body.left + bw, shirt);
    canvas.ellipse(body.y_at(HEAD_CENTER), cx, HEAD_RADIUS * bh, HEAD_RADIUS * bh, skin);

    let mut locations = Vec::new();
    for (a, spec) in schema.attributes.iter().enumerate() {
        if labels[a] != 1.0 || spec.kind == AttributeKind::Global {
            continue;
        }
        let r = spec.renderer;
        let fy = band_center(&mut rng, spec.band, r.extent());
        let y = body.y_at(fy);
        let half = 0.5 * r.extent() * bh;
        let mut put = |rank: usize, y: f64, x: f64| locations.push(PlantedLocation { attribute: a, rank, y, x });
        match r {
            Renderer::HeadBlob => {
                let x = cx + rng.gen_range(-0.02..=0.02) * bh;
                canvas.ellipse(y, x, half, 0.075 * bh, jitter(&mut rng, YELLOW, 0.03));
                put(1, y, x);
            }
            Renderer::HeadBar => {
                canvas.rect(y - half, y + half, cx - 0.06 * bh, cx + 0.06 * bh, jitter(&mut rng, CYAN, 0.03));
                put(1, y, cx);
            }
            Renderer::SideBlob => {
                let rx = 0.06 * bh;
                let room_left = body.left;
                let room_right = w as f64 - (body.left + bw);
                let left = if (room_left - room_right).abs() < 1.0 {
                    rng.gen_bool(0.5)
                } else {
                    room_left > room_right
                };
                let x = if left { body.left - 0.5 * rx } else { body.left + bw + 0.5 * rx };
                let x = x.clamp(0.5 * rx, w as f64 - 0.5 * rx);
                canvas.ellipse(y, x, half, rx, jitter(&mut rng, MAGENTA, 0.03));
                put(1, y, x);
            }
            Renderer::LegStripe => {
                let stripe = 0.03 * bh;
                let (top, bottom) = (y - half, y + half);
                let (l, rgt) = (legs_x[0], legs_x[1] + leg_w);
                let mut s = top;
                let shade = pants.map(|c| c * STRIPE_SHADE);
                let light = pants.map(|c| c + STRIPE_LIGHTEN * (1.0 - c));
                let mut dark = true;
                while s < bottom {
                    let e = (s + stripe).min(bottom);
                    canvas.rect(s, e, l, rgt, if dark { shade } else { light });
                    dark = !dark;
                    s = e;
                }
                put(1, y, cx);
            }
            Renderer::FootDots => {
                for (rank, lx) in legs_x.iter().enumerate() {
                    let x = lx + 0.5 * leg_w;
                    canvas.ellipse(y, x, half, 0.6 * leg_w, jitter(&mut rng, ORANGE, 0.03));
                    put(rank + 1, y, x);
                }
            }
            Renderer::RareMark => {
                canvas.diamond(y, cx, half, half, jitter(&mut rng, GREEN, 0.03));
                put(1, y, cx);
            }
            Renderer::TorsoColor | Renderer::GlobalTint => unreachable!("global renderers plant no primitive"),
        }
    }

    let mut data = Vec::with_capacity(3 * h * w);
    for p in &canvas.px {
        for c in p {
            data.push(quantize(c + rng.gen_range(-NOISE..=NOISE)));
        }
    }
    SyntheticSample {
        image: RgbImage {
            height: h,
            width: w,
            data,
        },
        labels,
        locations,
        body,
    }
}

/// A generated or loaded dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: AttributeSchema,
    pub samples: Vec<SyntheticSample>,
}

impl Dataset {
    pub fn labels(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.labels.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn generate(schema: &AttributeSchema, opts: &GenerateOptions) -> Result<Dataset> {
    schema.validate()?;
    opts.validate()?;
    Ok(Dataset {
        schema: schema.clone(),
        samples: (0..opts.count).map(|i| generate_sample(schema, opts, i)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(count: usize, seed: u64) -> GenerateOptions {
        GenerateOptions {
            count,
            seed,
            ..GenerateOptions::default()
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let s = AttributeSchema::default();
        let a = generate(&s, &opts(5, 9)).unwrap();
        assert_eq!(a, generate(&s, &opts(5, 9)).unwrap());
        assert_ne!(a, generate(&s, &opts(5, 10)).unwrap());
        // Sample streams are independent of the count.
        assert_eq!(generate(&s, &opts(3, 9)).unwrap().samples[..], a.samples[..3]);
    }

    #[test]
    fn sizes_in_range() {
        let d = generate(&AttributeSchema::default(), &opts(40, 2)).unwrap();
        for s in &d.samples {
            assert!((64..=128).contains(&s.image.height));
            let r = s.image.width as f64 / s.image.height as f64;
            assert!((0.38..=0.62).contains(&r), "{r}");
            assert!(s.body.top >= 0.0 && s.body.top + s.body.height <= s.image.height as f64 + 1e-9);
        }
    }

    #[test]
    fn planted_centres_match_labels() {
        let schema = AttributeSchema::default();
        let d = generate(&schema, &opts(60, 4)).unwrap();
        for s in &d.samples {
            for (a, spec) in schema.attributes.iter().enumerate() {
                let n = s.locations_of(a).count();
                let expect = if s.labels[a] == 1.0 && spec.kind == AttributeKind::Localizable {
                    spec.k
                } else {
                    0
                };
                assert_eq!(n, expect);
            }
            for l in &s.locations {
                assert!(l.y >= 0.0 && l.y < s.image.height as f64);
                assert!(l.x >= 0.0 && l.x < s.image.width as f64);
            }
        }
    }

    #[test]
    fn rate_one_always_present() {
        let mut schema = AttributeSchema::default();
        schema.attributes[0].rate = 1.0;
        let d = generate(&schema, &opts(30, 5)).unwrap();
        assert!(d.samples.iter().all(|s| s.labels[0] == 1.0));
    }

    #[test]
    fn zero_count_rejected() {
        assert!(generate(&AttributeSchema::default(), &opts(0, 1)).is_err());
    }
}
