//! Bin–attribute relationship strength and bin ranking.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, WpalError};
use crate::model::{BinInfo, ModelConfig, ModelState};
use crate::tensor::Tensor;

/// Guard keeping the strength finite when a bin never fires on negatives.
pub const NAVE_FLOOR: f64 = 1e-9;

/// `N × B` bin maxima collected over a dataset, row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    bins: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * bins {
            return Err(WpalError::ShapeMismatch {
                op: "score_matrix",
                left: vec![rows, bins],
                right: vec![data.len()],
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(WpalError::InvalidInput(format!(
                "score matrix entry ({}, {}) is not finite",
                i / bins.max(1),
                i % bins.max(1)
            )));
        }
        Ok(ScoreMatrix { rows, bins, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let bins = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != bins) {
            return Err(WpalError::ShapeMismatch {
                op: "score_matrix",
                left: vec![bins],
                right: vec![r.len()],
            });
        }
        Self::new(rows.len(), bins, rows.concat())
    }

    /// Runs inference over `images` and records every bin maximum.
    pub fn collect<'a>(model: &ModelState, images: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let bins = model.config().bin_count();
        let mut data = Vec::new();
        let mut rows = 0;
        for image in images {
            let scores = model.forward(image)?.all_scores();
            debug_assert_eq!(scores.len(), bins);
            data.extend(scores);
            rows += 1;
        }
        Self::new(rows, bins, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.bins..(i + 1) * self.bins]
    }

    pub fn get(&self, sample: usize, bin: usize) -> f64 {
        self.data[sample * self.bins + bin]
    }
}

/// Per-bin positive/negative averages and their ratio for one attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationStats {
    pub pave: Vec<f64>,
    pub nave: Vec<f64>,
    pub rs: Vec<f64>,
}

impl CorrelationStats {
    pub fn bins(&self) -> usize {
        self.rs.len()
    }
}

/// Strength of a bin given its averages: `PAve / max(NAve, 1e-9)`.
pub fn relationship_strength(pave: f64, nave: f64) -> f64 {
    pave / nave.max(NAVE_FLOOR)
}

/// Averages each bin over positive and negative samples of one attribute
/// and takes their ratio.
pub fn estimate_relationship(scores: &ScoreMatrix, labels: &[f64]) -> Result<CorrelationStats> {
    if labels.len() != scores.rows {
        return Err(WpalError::ShapeMismatch {
            op: "estimate_relationship",
            left: vec![scores.rows],
            right: vec![labels.len()],
        });
    }
    if let Some(v) = labels.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(WpalError::InvalidInput(format!("label {v} is not 0 or 1")));
    }
    let positives: f64 = labels.iter().sum();
    let negatives: f64 = labels.iter().map(|l| 1.0 - l).sum();
    if positives == 0.0 || negatives == 0.0 {
        return Err(WpalError::InvalidInput(format!(
            "relationship needs both classes, got {positives} positives and {negatives} negatives"
        )));
    }
    let b = scores.bins;
    let mut pos = vec![0.0; b];
    let mut neg = vec![0.0; b];
    for (i, &l) in labels.iter().enumerate() {
        for (k, &s) in scores.row(i).iter().enumerate() {
            pos[k] += s * l;
            neg[k] += s * (1.0 - l);
        }
    }
    let pave: Vec<f64> = pos.iter().map(|p| p / positives).collect();
    let nave: Vec<f64> = neg.iter().map(|n| n / negatives).collect();
    let rs = pave.iter().zip(&nave).map(|(&p, &n)| relationship_strength(p, n)).collect();
    Ok(CorrelationStats { pave, nave, rs })
}

/// Statistics for every attribute, indexed by attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsTable {
    pub attributes: Vec<CorrelationStats>,
}

const STATS_HEADER: &str = "attribute,bin,branch,PAve,NAve,RS";

impl StatsTable {
    /// `labels` is `N × L`; one [`CorrelationStats`] per column.
    pub fn estimate(scores: &ScoreMatrix, labels: &[Vec<f64>]) -> Result<Self> {
        let l = labels.first().map_or(0, Vec::len);
        let attributes = (0..l)
            .map(|a| {
                let column: Vec<f64> = labels.iter().map(|r| r[a]).collect();
                estimate_relationship(scores, &column)
                    .map_err(|e| WpalError::InvalidInput(format!("attribute {a}: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(StatsTable { attributes })
    }

    /// CSV with the 1-based branch each bin belongs to.
    pub fn to_csv(&self, config: &ModelConfig) -> String {
        let mut s = format!("{STATS_HEADER}\n");
        for (a, st) in self.attributes.iter().enumerate() {
            for k in 0..st.bins() {
                let branch = crate::model::bin_info(config, k).branch + 1;
                writeln!(s, "{a},{k},{branch},{},{},{}", st.pave[k], st.nave[k], st.rs[k]).unwrap();
            }
        }
        s
    }

    pub fn parse_csv(text: &str, source: &Path) -> Result<Self> {
        let err = |line: usize, detail: String| WpalError::Parse {
            path: source.to_path_buf(),
            line,
            detail,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == STATS_HEADER => {}
            _ => return Err(err(1, format!("expected header `{STATS_HEADER}`"))),
        }
        let mut attributes: Vec<CorrelationStats> = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(err(n, format!("expected 6 fields, got {}", f.len())));
            }
            let idx = |s: &str| s.trim().parse::<usize>().map_err(|e| err(n, format!("`{s}`: {e}")));
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| err(n, format!("`{s}`: {e}")));
            let (a, k) = (idx(f[0])?, idx(f[1])?);
            if a == attributes.len() {
                attributes.push(CorrelationStats {
                    pave: Vec::new(),
                    nave: Vec::new(),
                    rs: Vec::new(),
                });
            }
            if a + 1 != attributes.len() {
                return Err(err(n, format!("attribute {a} out of order")));
            }
            let st = &mut attributes[a];
            if k != st.rs.len() {
                return Err(err(n, format!("bin {k} out of order (expected {})", st.rs.len())));
            }
            st.pave.push(num(f[3])?);
            st.nave.push(num(f[4])?);
            st.rs.push(num(f[5])?);
        }
        if attributes.is_empty() {
            return Err(err(1, "no statistics rows".into()));
        }
        Ok(StatsTable { attributes })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| WpalError::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    /// Checks that the table matches a model's attribute and bin counts.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        if self.attributes.len() != config.num_attributes
            || self.attributes.iter().any(|s| s.bins() != config.bin_count())
        {
            return Err(WpalError::InvalidInput(format!(
                "statistics cover {} attributes × {} bins, model has {} × {}",
                self.attributes.len(),
                self.attributes.first().map_or(0, CorrelationStats::bins),
                config.num_attributes,
                config.bin_count()
            )));
        }
        Ok(())
    }
}

/// One row of a bin ranking.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankedBin {
    pub bin: usize,
    pub info: BinInfo,
    pub rs: f64,
}

/// Indices of the `k` strongest bins: RS descending, ties by index.
pub fn rank_indices(rs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rs.len()).collect();
    idx.sort_by(|&a, &b| rs[b].total_cmp(&rs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn rank_bins(stats: &CorrelationStats, config: &ModelConfig, k: usize) -> Vec<RankedBin> {
    rank_indices(&stats.rs, k)
        .into_iter()
        .map(|bin| RankedBin {
            bin,
            info: crate::model::bin_info(config, bin),
            rs: stats.rs[bin],
        })
        .collect()
}
