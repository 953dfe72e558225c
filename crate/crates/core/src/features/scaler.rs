//! Per-column feature scalers fitted on the training split.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{PairSample, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalerKind {
    /// `(x - median) / IQR`
    Robust,
    /// `(x - min) / (max - min)`
    MinMax,
    /// `(x - mean) / std` (population std)
    Standard,
}

impl ScalerKind {
    pub fn name(self) -> &'static str {
        match self {
            ScalerKind::Robust => "robust",
            ScalerKind::MinMax => "minmax",
            ScalerKind::Standard => "standard",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "robust" => Some(ScalerKind::Robust),
            "minmax" => Some(ScalerKind::MinMax),
            "standard" => Some(ScalerKind::Standard),
            _ => None,
        }
    }
}

/// Scaler kinds per feature column: robust for the inter-agent distance,
/// min-max for the time difference, standard for the rest.
pub const COLUMN_SCALERS: [ScalerKind; FEATURE_COUNT] = [
    ScalerKind::Robust,
    ScalerKind::MinMax,
    ScalerKind::Standard,
    ScalerKind::Standard,
    ScalerKind::Standard,
    ScalerKind::Standard,
];

/// A fitted affine map `x -> (x - center) / scale`. A zero scale marks a
/// degenerate column, which maps to zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaler {
    pub kind: ScalerKind,
    pub center: f64,
    pub scale: f64,
}

impl ColumnScaler {
    pub fn is_degenerate(&self) -> bool {
        self.scale == 0.0
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (x - self.center) / self.scale
        }
    }

    #[inline]
    pub fn invert(&self, y: f64) -> f64 {
        y * self.scale + self.center
    }

    pub fn fit(kind: ScalerKind, values: &mut [f64]) -> Self {
        let (center, scale) = match kind {
            ScalerKind::Robust => {
                values.sort_by(f64::total_cmp);
                let q1 = quantile_sorted(values, 0.25);
                let q3 = quantile_sorted(values, 0.75);
                (quantile_sorted(values, 0.5), q3 - q1)
            }
            ScalerKind::MinMax => {
                let min = values.iter().copied().fold(f64::INFINITY, f64::min);
                let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (min, max - min)
            }
            ScalerKind::Standard => {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            }
        };
        let scale = if scale.is_finite() && scale > 0.0 { scale } else { 0.0 };
        Self { kind, center, scale }
    }
}

/// Linear interpolation between order statistics ("type 7").
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub columns: Vec<ColumnScaler>,
    /// Number of training samples the statistics were pooled from.
    pub fit_samples: usize,
}

pub const SCALER_FORMAT_VERSION: u32 = 1;

impl ScalerState {
    /// Identity-like state used by untrained models: every column passes
    /// through unchanged.
    pub fn identity() -> Self {
        Self {
            columns: COLUMN_SCALERS
                .iter()
                .map(|&kind| ColumnScaler {
                    kind,
                    center: 0.0,
                    scale: 1.0,
                })
                .collect(),
            fit_samples: 0,
        }
    }

    /// Fits each column on all timesteps of all training samples pooled.
    pub fn fit(train: &[PairSample]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::CannotFit);
        }
        Self::fit_matrices(train.iter().map(|s| &s.features), COLUMN_SCALERS)
    }

    pub fn fit_matrices<'a>(
        matrices: impl IntoIterator<Item = &'a Matrix>,
        kinds: [ScalerKind; FEATURE_COUNT],
    ) -> Result<Self> {
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); FEATURE_COUNT];
        let mut n = 0;
        for m in matrices {
            if m.cols() != FEATURE_COUNT {
                return Err(Error::invalid_input(format!(
                    "feature matrix has {} columns, expected {FEATURE_COUNT}",
                    m.cols()
                )));
            }
            n += 1;
            for r in 0..m.rows() {
                for (c, col) in cols.iter_mut().enumerate() {
                    col.push(m.get(r, c));
                }
            }
        }
        if n == 0 || cols[0].is_empty() {
            return Err(Error::CannotFit);
        }
        let columns: Vec<ColumnScaler> = cols
            .iter_mut()
            .zip(kinds)
            .map(|(v, kind)| ColumnScaler::fit(kind, v))
            .collect();
        for (i, c) in columns.iter().enumerate() {
            if c.is_degenerate() {
                log::warn!("feature column {i} has zero spread; it will be scaled to zeros");
            }
        }
        Ok(Self {
            columns,
            fit_samples: n,
        })
    }

    pub fn degenerate_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_degenerate())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn apply(&self, features: &Matrix) -> Matrix {
        let mut out = features.clone();
        for r in 0..out.rows() {
            for (v, c) in out.row_mut(r).iter_mut().zip(&self.columns) {
                *v = c.apply(*v);
            }
        }
        out
    }

    pub fn invert(&self, scaled: &Matrix) -> Matrix {
        let mut out = scaled.clone();
        for r in 0..out.rows() {
            for (v, c) in out.row_mut(r).iter_mut().zip(&self.columns) {
                *v = c.invert(*v);
            }
        }
        out
    }

    pub fn apply_sample(&self, sample: &PairSample) -> PairSample {
        PairSample {
            features: self.apply(&sample.features),
            ..sample.clone()
        }
    }

    /// Versioned `key = value` block. Floats use shortest round-trip
    /// formatting so parsing restores them bit for bit.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "version = {SCALER_FORMAT_VERSION}");
        let _ = writeln!(s, "fit_samples = {}", self.fit_samples);
        for (i, c) in self.columns.iter().enumerate() {
            let _ = writeln!(s, "col{i} = {} {:?} {:?}", c.kind.name(), c.center, c.scale);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(format!("scaler block: {m}"));
        let mut version = None;
        let mut fit_samples = None;
        let mut columns = vec![None; FEATURE_COUNT];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("bad line '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "version" => version = v.parse::<u32>().ok(),
                "fit_samples" => fit_samples = v.parse::<usize>().ok(),
                _ if k.starts_with("col") => {
                    let idx: usize = k[3..]
                        .parse()
                        .ok()
                        .filter(|&i| i < FEATURE_COUNT)
                        .ok_or_else(|| bad(format!("bad column key '{k}'")))?;
                    let parts: Vec<&str> = v.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(bad(format!("column {idx} needs kind center scale")));
                    }
                    let kind = ScalerKind::parse(parts[0])
                        .ok_or_else(|| bad(format!("unknown scaler '{}'", parts[0])))?;
                    let center: f64 = parts[1].parse().map_err(|_| bad("bad center".into()))?;
                    let scale: f64 = parts[2].parse().map_err(|_| bad("bad scale".into()))?;
                    columns[idx] = Some(ColumnScaler { kind, center, scale });
                }
                _ => return Err(bad(format!("unknown key '{k}'"))),
            }
        }
        match version {
            Some(SCALER_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(bad(format!(
                    "version {v} not supported (expected {SCALER_FORMAT_VERSION})"
                )))
            }
            None => return Err(bad("missing version".into())),
        }
        let columns = columns
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.ok_or_else(|| bad(format!("missing col{i}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            columns,
            fit_samples: fit_samples.ok_or_else(|| bad("missing fit_samples".into()))?,
        })
    }
}
