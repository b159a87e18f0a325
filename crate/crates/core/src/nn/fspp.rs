//! Flexible spatial pyramid pooling.
//!
//! A two-level pyramid over each channel of a feature map: one global bin,
//! then an `r × c` grid of overlapping bins. Along an axis of extent `n`,
//! grid bin `i` spans `[⌊i·n/(r+1)⌋, ⌈(i+2)·n/(r+1)⌉)`, i.e. each bin covers
//! two of `r+1` equal slices and consecutive bins share one slice. Every bin
//! reports its maximum and where that maximum sits, so a bin acts as a
//! localized detector of whatever pattern its channel responds to.

use crate::error::{Result, WpalError};
use crate::tape::{BackwardRule, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

/// Pyramid geometry of one FSPP layer: the global bin plus an optional
/// second-level grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PyramidSpec {
    grid: Option<Grid>,
}

/// Half-open rectangle `[top, bottom) × [left, right)` in map coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Region {
    pub fn height(&self) -> usize {
        self.bottom - self.top
    }

    pub fn width(&self) -> usize {
        self.right - self.left
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.top..self.bottom).contains(&y) && (self.left..self.right).contains(&x)
    }
}

/// Position of a bin inside its channel's pyramid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinPlace {
    Global,
    Cell { row: usize, col: usize },
}

impl BinPlace {
    pub fn level(&self) -> usize {
        match self {
            BinPlace::Global => 1,
            BinPlace::Cell { .. } => 2,
        }
    }
}

impl PyramidSpec {
    pub fn global_only() -> Self {
        PyramidSpec { grid: None }
    }

    pub fn two_level(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(WpalError::InvalidConfig(format!("pyramid grid {rows}x{cols} must be at least 1x1")));
        }
        Ok(PyramidSpec {
            grid: Some(Grid { rows, cols }),
        })
    }

    /// Builds a spec from explicit level grids; the first must be `(1, 1)`
    /// and at most two levels are allowed.
    pub fn from_levels(levels: &[(usize, usize)]) -> Result<Self> {
        match levels {
            [(1, 1)] => Ok(Self::global_only()),
            [(1, 1), (r, c)] => Self::two_level(*r, *c),
            [] => Err(WpalError::InvalidConfig("pyramid needs at least one level".into())),
            [first, ..] if *first != (1, 1) => Err(WpalError::InvalidConfig(format!(
                "first pyramid level must be 1x1, got {}x{}",
                first.0, first.1
            ))),
            _ => Err(WpalError::InvalidConfig(format!(
                "pyramid height is limited to 2, got {} levels",
                levels.len()
            ))),
        }
    }

    pub fn grid(&self) -> Option<Grid> {
        self.grid
    }

    pub fn levels(&self) -> Vec<Grid> {
        let mut v = vec![Grid { rows: 1, cols: 1 }];
        v.extend(self.grid);
        v
    }

    pub fn bins_per_channel(&self) -> usize {
        1 + self.grid.map_or(0, |g| g.rows * g.cols)
    }

    pub fn place(&self, bin: usize) -> BinPlace {
        match (bin, self.grid) {
            (0, _) => BinPlace::Global,
            (b, Some(g)) if b <= g.rows * g.cols => BinPlace::Cell {
                row: (b - 1) / g.cols,
                col: (b - 1) % g.cols,
            },
            _ => panic!("bin {bin} out of range for {self:?}"),
        }
    }

    /// Regions of all bins of one channel for an `h × w` map, global bin first.
    pub fn regions(&self, h: usize, w: usize) -> Vec<Region> {
        assert!(h >= 1 && w >= 1, "empty feature map");
        let mut out = vec![Region {
            top: 0,
            bottom: h,
            left: 0,
            right: w,
        }];
        if let Some(g) = self.grid {
            for i in 0..g.rows {
                let (top, bottom) = half_overlap_span(i, g.rows, h);
                for j in 0..g.cols {
                    let (left, right) = half_overlap_span(j, g.cols, w);
                    out.push(Region {
                        top,
                        bottom,
                        left,
                        right,
                    });
                }
            }
        }
        out
    }
}

/// Span of bin `i` of `n` along an axis of length `len`, clamped non-empty.
fn half_overlap_span(i: usize, n: usize, len: usize) -> (usize, usize) {
    let slices = n + 1;
    let mut start = i * len / slices;
    let mut end = ((i + 2) * len).div_ceil(slices).min(len);
    if start >= len {
        start = len - 1;
    }
    if end <= start {
        end = start + 1;
    }
    (start, end)
}

/// Regions for a spec on an `h × w` map.
pub fn fspp_bins(spec: &PyramidSpec, h: usize, w: usize) -> Vec<Region> {
    spec.regions(h, w)
}

/// Total detector bins over branches given as `(channels, spec)`.
pub fn fspp_bin_count(branches: &[(usize, PyramidSpec)]) -> usize {
    branches.iter().map(|(c, s)| c * s.bins_per_channel()).sum()
}

/// Bin maxima, channel-major then bin order within the channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BinVector {
    pub scores: Vec<f64>,
}

/// `(y, x)` of each bin's maximum, aligned with [`BinVector`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinLocations {
    pub coords: Vec<(usize, usize)>,
}

struct FsppRule {
    routes: Vec<usize>,
}

impl BackwardRule for FsppRule {
    fn name(&self) -> &'static str {
        "fspp"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64], _needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let mut d = vec![0.0; inputs[0].numel()];
        for (&src, &gv) in self.routes.iter().zip(g) {
            d[src] += gv;
        }
        vec![Some(d)]
    }
}

fn pool_channel(plane: &[f64], w: usize, r: &Region) -> (f64, usize, usize) {
    let (mut by, mut bx) = (r.top, r.left);
    let mut best = plane[by * w + bx];
    for y in r.top..r.bottom {
        for x in r.left..r.right {
            let v = plane[y * w + x];
            if v > best {
                best = v;
                by = y;
                bx = x;
            }
        }
    }
    (best, by, bx)
}

/// Max-pools every bin of a `C×H×W` map. The output length depends only on
/// `C` and the spec. Backward sends each bin's gradient to its argmax,
/// summing where overlapping bins share a winner.
pub fn fspp_forward(tape: &mut Tape, map: Var, spec: &PyramidSpec) -> Result<(Var, BinLocations)> {
    let t = tape.value(map);
    if t.rank() != 3 {
        return Err(WpalError::InvalidShape {
            op: "fspp",
            detail: format!("expected C×H×W, got {:?}", t.shape()),
        });
    }
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let regions = spec.regions(h, w);
    let n = c * regions.len();
    let mut scores = Vec::with_capacity(n);
    let mut coords = Vec::with_capacity(n);
    let mut routes = Vec::with_capacity(n);
    for ch in 0..c {
        let plane = &t.data()[ch * h * w..(ch + 1) * h * w];
        for r in &regions {
            let (v, y, x) = pool_channel(plane, w, r);
            scores.push(v);
            coords.push((y, x));
            routes.push(ch * h * w + y * w + x);
        }
    }
    let out = tape.push(Tensor::from_vec(scores), vec![map], Box::new(FsppRule { routes }));
    Ok((out, BinLocations { coords }))
}

/// Tape-free pooling for inference paths.
pub fn fspp_pool(map: &Tensor, spec: &PyramidSpec) -> Result<(BinVector, BinLocations)> {
    let mut tape = Tape::new();
    let v = tape.constant(map.clone());
    let (out, locs) = fspp_forward(&mut tape, v, spec)?;
    Ok((
        BinVector {
            scores: tape.value(out).data().to_vec(),
        },
        locs,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn global_level_covers_map() {
        let r = fspp_bins(&PyramidSpec::global_only(), 8, 8);
        assert_eq!(
            r,
            vec![Region {
                top: 0,
                bottom: 8,
                left: 0,
                right: 8
            }]
        );
    }

    #[test]
    fn three_by_three_on_eight() {
        let r = fspp_bins(&PyramidSpec::two_level(3, 3).unwrap(), 8, 8);
        assert_eq!(r.len(), 10);
        for (k, reg) in r[1..].iter().enumerate() {
            assert_eq!((reg.height(), reg.width()), (4, 4));
            assert_eq!(reg.top, [0, 2, 4][k / 3]);
            assert_eq!(reg.left, [0, 2, 4][k % 3]);
        }
    }

    #[test]
    fn three_by_one_on_twelve_by_five() {
        let r = fspp_bins(&PyramidSpec::two_level(3, 1).unwrap(), 12, 5);
        let tops: Vec<_> = r[1..].iter().map(|g| g.top).collect();
        assert_eq!(tops, vec![0, 3, 6]);
        assert!(r[1..].iter().all(|g| g.height() == 6 && g.width() == 5));
    }

    #[test]
    fn degenerate_maps_stay_non_empty() {
        let spec = PyramidSpec::two_level(3, 3).unwrap();
        for (h, w) in [(1, 1), (1, 7), (2, 3)] {
            for reg in fspp_bins(&spec, h, w) {
                assert!(reg.height() >= 1 && reg.width() >= 1);
                assert!(reg.bottom <= h && reg.right <= w);
            }
        }
    }

    #[test]
    fn level_rules() {
        assert!(PyramidSpec::from_levels(&[(1, 1), (3, 3), (2, 2)]).is_err());
        assert!(PyramidSpec::from_levels(&[(2, 2)]).is_err());
        assert!(PyramidSpec::from_levels(&[]).is_err());
        assert_eq!(PyramidSpec::from_levels(&[(1, 1)]).unwrap(), PyramidSpec::global_only());
        assert_eq!(PyramidSpec::from_levels(&[(1, 1), (3, 1)]).unwrap().bins_per_channel(), 4);
    }

    #[test]
    fn bin_count_examples() {
        let g33 = PyramidSpec::two_level(3, 3).unwrap();
        let g31 = PyramidSpec::two_level(3, 1).unwrap();
        assert_eq!(fspp_bin_count(&[(512, g33), (512, g33), (1024, g31)]), 14336);
        assert_eq!(fspp_bin_count(&[(512, g33)]), 5120);
        assert_eq!(fspp_bin_count(&[(1024, g31)]), 4096);
        assert_eq!(fspp_bin_count(&[(4, PyramidSpec::two_level(2, 2).unwrap())]), 20);
        assert_eq!(fspp_bin_count(&[(7, PyramidSpec::global_only())]), 7);
    }

    #[test]
    fn constant_map_scores() {
        let (bins, _) = fspp_pool(&Tensor::full(&[2, 5, 6], 0.7), &PyramidSpec::two_level(3, 3).unwrap()).unwrap();
        assert_eq!(bins.scores.len(), 20);
        assert!(bins.scores.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn spike_reaches_only_covering_bins() {
        let spec = PyramidSpec::two_level(3, 3).unwrap();
        let mut t = Tensor::zeros(&[1, 8, 8]);
        t.data_mut()[0] = 5.0;
        let (bins, locs) = fspp_pool(&t, &spec).unwrap();
        let regions = fspp_bins(&spec, 8, 8);
        for (k, reg) in regions.iter().enumerate() {
            let expect = if reg.contains(0, 0) { 5.0 } else { 0.0 };
            assert_eq!(bins.scores[k], expect, "bin {k}");
            assert!(reg.contains(locs.coords[k].0, locs.coords[k].1));
        }
        assert_eq!(bins.scores.iter().filter(|&&v| v == 5.0).count(), 2);
    }

    #[test]
    fn ties_pick_lowest_row_then_column() {
        let (_, locs) = fspp_pool(&Tensor::full(&[1, 4, 4], 1.0), &PyramidSpec::two_level(3, 3).unwrap()).unwrap();
        let regions = fspp_bins(&PyramidSpec::two_level(3, 3).unwrap(), 4, 4);
        for (c, r) in locs.coords.iter().zip(&regions) {
            assert_eq!(*c, (r.top, r.left));
        }
    }

    #[test]
    fn shared_argmax_accumulates_gradient() {
        let spec = PyramidSpec::two_level(3, 3).unwrap();
        let mut t = Tensor::zeros(&[1, 8, 8]);
        t.data_mut()[3 * 8 + 3] = 2.0;
        let mut tape = Tape::new();
        let x = tape.leaf(t);
        let (y, _) = fspp_forward(&mut tape, x, &spec).unwrap();
        let l = tape.sum(y);
        tape.backward(l).unwrap();
        let regions = fspp_bins(&spec, 8, 8);
        let covering = regions.iter().filter(|r| r.contains(3, 3)).count() as f64;
        assert_eq!(tape.grad(x).unwrap()[3 * 8 + 3], covering);
    }

    #[test]
    fn place_decodes_bins() {
        let spec = PyramidSpec::two_level(3, 1).unwrap();
        assert_eq!(spec.place(0), BinPlace::Global);
        assert_eq!(spec.place(1), BinPlace::Cell { row: 0, col: 0 });
        assert_eq!(spec.place(3), BinPlace::Cell { row: 2, col: 0 });
    }
}
