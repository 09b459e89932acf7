use std::fmt;
use std::str::FromStr;

use super::filter::{design_interp_filter, InterpFilter, FILTER_HALF_LEN};
use super::mask::{mask_regular, FrameMask};
use super::StrategyError;
use crate::corpus_io::{ScoreMatrix, NEG_INF};

/// How a dropped frame's log-likelihood row is synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Replacement {
    /// Row of the most recent kept frame.
    #[default]
    Copy,
    /// Log-likelihood 0 for every senone.
    Fill0,
    /// Per-senone mean log-likelihood over the whole utterance.
    FillConst,
    /// Low-pass interpolation of the kept frames (regular patterns only).
    Upsample,
}

impl Replacement {
    pub fn as_str(self) -> &'static str {
        match self {
            Replacement::Copy => "copy",
            Replacement::Fill0 => "fill_0",
            Replacement::FillConst => "fill_const",
            Replacement::Upsample => "upsample",
        }
    }
}

impl fmt::Display for Replacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Replacement {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "copy" => Ok(Replacement::Copy),
            "fill_0" | "fill0" => Ok(Replacement::Fill0),
            "fill_const" | "fillconst" => Ok(Replacement::FillConst),
            "upsample" => Ok(Replacement::Upsample),
            other => Err(StrategyError::Parse(format!(
                "unknown replacement method {other:?}"
            ))),
        }
    }
}

/// Non-negative per-frame multipliers on emission log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
}

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self, StrategyError> {
        if let Some(bad) = w.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(StrategyError::InvalidWeight(*bad));
        }
        Ok(WeightVector { w })
    }

    pub fn ones(frames: usize) -> Self {
        WeightVector {
            w: vec![1.0; frames],
        }
    }

    /// `factor` on the given frames, 1.0 elsewhere.
    pub fn overweight(
        frames: usize,
        emphasized: &std::collections::BTreeSet<usize>,
        factor: f64,
    ) -> Result<Self, StrategyError> {
        Self::new(
            (0..frames)
                .map(|t| if emphasized.contains(&t) { factor } else { 1.0 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn get(&self, t: usize) -> f64 {
        self.w[t]
    }

    pub fn is_identity(&self) -> bool {
        self.w.iter().all(|w| *w == 1.0)
    }
}

/// `w * v` with `NEG_INF` absorbing, including at `w = 0`.
#[inline]
pub fn weighted(w: f64, v: f64) -> f64 {
    if v == NEG_INF {
        NEG_INF
    } else {
        w * v
    }
}

pub fn apply_weights(
    scores: &ScoreMatrix,
    weights: &WeightVector,
) -> Result<ScoreMatrix, StrategyError> {
    if weights.len() != scores.frames() {
        return Err(StrategyError::Shape {
            expected: scores.frames(),
            got: weights.len(),
        });
    }
    let s = scores.senones();
    let values = scores
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| weighted(weights.get(i / s), *v))
        .collect();
    Ok(ScoreMatrix::from_parts(
        scores.utterance_id.clone(),
        scores.frames(),
        s,
        values,
    ))
}

/// Per-senone arithmetic mean of the log-likelihoods over all frames.
pub fn temporal_means(scores: &ScoreMatrix) -> Vec<f64> {
    let mut sums = vec![0.0; scores.senones()];
    for row in scores.rows() {
        for (acc, v) in sums.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let n = scores.frames() as f64;
    sums.into_iter()
        .map(|s| if s == NEG_INF { NEG_INF } else { s / n })
        .collect()
}

/// Finds `P` such that `mask` equals the regular pattern `(P, D=1)`.
fn regular_period(mask: &FrameMask) -> Option<usize> {
    let dropped = mask.dropped_frames();
    let mut iter = dropped.iter();
    if iter.next() != Some(&0) {
        return None;
    }
    let period = match iter.next() {
        Some(&p) => p,
        // single dropped frame at 0: any period > T - 1 fits; the smallest
        // admissible one is used
        None => mask.len().clamp(2, FILTER_HALF_LEN),
    };
    (period >= 2 && mask_regular(mask.len(), period, 1).ok().as_ref() == Some(mask))
        .then_some(period)
}

pub fn apply_replacement(
    scores: &ScoreMatrix,
    mask: &FrameMask,
    method: Replacement,
    filter: Option<&InterpFilter>,
) -> Result<ScoreMatrix, StrategyError> {
    let (frames, senones) = (scores.frames(), scores.senones());
    if mask.len() != frames {
        return Err(StrategyError::Shape {
            expected: frames,
            got: mask.len(),
        });
    }
    let mut out = scores.values().to_vec();
    if mask.drop_count() == 0 {
        return Ok(ScoreMatrix::from_parts(
            scores.utterance_id.clone(),
            frames,
            senones,
            out,
        ));
    }
    let means = || temporal_means(scores);
    match method {
        Replacement::Fill0 => {
            for t in (0..frames).filter(|t| mask.is_dropped(*t)) {
                out[t * senones..(t + 1) * senones].fill(0.0);
            }
        }
        Replacement::FillConst => {
            let means = means();
            for t in (0..frames).filter(|t| mask.is_dropped(*t)) {
                out[t * senones..(t + 1) * senones].copy_from_slice(&means);
            }
        }
        Replacement::Copy => {
            let mut fallback: Option<Vec<f64>> = None;
            let mut last_kept: Option<usize> = None;
            for t in 0..frames {
                if !mask.is_dropped(t) {
                    last_kept = Some(t);
                    continue;
                }
                let row: &[f64] = match last_kept {
                    Some(k) => scores.row(k),
                    None => fallback.get_or_insert_with(means),
                };
                out[t * senones..(t + 1) * senones].copy_from_slice(row);
            }
        }
        Replacement::Upsample => {
            let period = regular_period(mask).ok_or_else(|| {
                StrategyError::InvalidPattern(
                    "upsample requires a regular mask with one drop per period".into(),
                )
            })?;
            let designed;
            let filter = match filter {
                Some(f) if f.period() == period => f,
                Some(f) => {
                    return Err(StrategyError::InvalidPattern(format!(
                        "filter period {} does not match mask period {period}",
                        f.period()
                    )))
                }
                None => {
                    designed = design_interp_filter(period)?;
                    &designed
                }
            };
            let mut fallback: Option<Vec<f64>> = None;
            for t in (0..frames).filter(|t| mask.is_dropped(*t)) {
                let lo = t.saturating_sub(FILTER_HALF_LEN);
                let hi = (t + FILTER_HALF_LEN).min(frames - 1);
                let taps: Vec<(usize, f64)> = (lo..=hi)
                    .filter(|k| !mask.is_dropped(*k))
                    .map(|k| (k, filter.tap(t as i64 - k as i64)))
                    .filter(|(_, h)| *h != 0.0)
                    .collect();
                let norm: f64 = taps.iter().map(|(_, h)| h).sum();
                let row = &mut out[t * senones..(t + 1) * senones];
                if norm <= 1e-12 {
                    row.copy_from_slice(fallback.get_or_insert_with(means));
                    continue;
                }
                for (s, cell) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for &(k, h) in &taps {
                        let v = scores.get(k, s);
                        if v == NEG_INF {
                            acc = NEG_INF;
                            break;
                        }
                        acc += h * v;
                    }
                    *cell = if acc == NEG_INF { NEG_INF } else { acc / norm };
                }
            }
        }
    }
    Ok(ScoreMatrix::from_parts(
        scores.utterance_id.clone(),
        frames,
        senones,
        out,
    ))
}
