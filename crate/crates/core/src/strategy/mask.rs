use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::StrategyError;

/// Per-frame drop indicator; `true` means the frame's scores are replaced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMask {
    dropped: Vec<bool>,
}

impl FrameMask {
    pub fn from_dropped(dropped: Vec<bool>) -> Self {
        FrameMask { dropped }
    }

    pub fn all_keep(frames: usize) -> Self {
        FrameMask {
            dropped: vec![false; frames],
        }
    }

    pub fn all_drop(frames: usize) -> Self {
        FrameMask {
            dropped: vec![true; frames],
        }
    }

    pub fn from_frames(frames: usize, dropped: &BTreeSet<usize>) -> Self {
        FrameMask {
            dropped: (0..frames).map(|t| dropped.contains(&t)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dropped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dropped.is_empty()
    }

    pub fn dropped(&self) -> &[bool] {
        &self.dropped
    }

    pub fn is_dropped(&self, t: usize) -> bool {
        self.dropped[t]
    }

    pub fn drop_count(&self) -> usize {
        self.dropped.iter().filter(|d| **d).count()
    }

    pub fn drop_rate(&self) -> f64 {
        if self.dropped.is_empty() {
            0.0
        } else {
            self.drop_count() as f64 / self.dropped.len() as f64
        }
    }

    pub fn dropped_frames(&self) -> BTreeSet<usize> {
        self.dropped
            .iter()
            .enumerate()
            .filter(|(_, d)| **d)
            .map(|(t, _)| t)
            .collect()
    }
}

fn check_frames(frames: usize) -> Result<(), StrategyError> {
    if frames == 0 {
        Err(StrategyError::InvalidPattern(
            "mask needs at least one frame".into(),
        ))
    } else {
        Ok(())
    }
}

/// Drops frames with `t mod period < drop_count`; `drop_count = 1` is the
/// classic every-K-th-frame pattern starting at frame 0.
pub fn mask_regular(
    frames: usize,
    period: usize,
    drop_count: usize,
) -> Result<FrameMask, StrategyError> {
    check_frames(frames)?;
    if period < 2 || drop_count < 1 || drop_count >= period {
        return Err(StrategyError::InvalidPattern(format!(
            "regular pattern needs period >= 2 and 1 <= drop < period, got P={period} D={drop_count}"
        )));
    }
    Ok(FrameMask {
        dropped: (0..frames).map(|t| t % period < drop_count).collect(),
    })
}

/// Uniformly chooses `n_drop` unprotected frames.
///
/// The unprotected indices are listed in ascending order and a partial
/// Fisher-Yates shuffle driven by ChaCha8 seeded with `seed` selects the first
/// `n_drop` of them, so masks replay identically on every platform.
pub fn mask_random(
    frames: usize,
    n_drop: usize,
    seed: u64,
    protected: &BTreeSet<usize>,
) -> Result<FrameMask, StrategyError> {
    check_frames(frames)?;
    let mut candidates: Vec<usize> = (0..frames).filter(|t| !protected.contains(t)).collect();
    if n_drop > candidates.len() {
        return Err(StrategyError::InvalidPattern(format!(
            "cannot drop {n_drop} frames: only {} unprotected of {frames}",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (chosen, _) = candidates.partial_shuffle(&mut rng, n_drop);
    let mut dropped = vec![false; frames];
    for &t in chosen.iter() {
        dropped[t] = true;
    }
    Ok(FrameMask { dropped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandmarkRegime {
    /// Drop everything except landmark frames.
    Keep,
    /// Drop only landmark frames.
    Drop,
}

pub fn mask_landmark(
    landmarks: &BTreeSet<usize>,
    frames: usize,
    regime: LandmarkRegime,
) -> FrameMask {
    if regime == LandmarkRegime::Keep && landmarks.is_empty() {
        log::warn!("landmark-keep with no landmark frames drops all {frames} frames");
    }
    let keep = regime == LandmarkRegime::Keep;
    FrameMask {
        dropped: (0..frames)
            .map(|t| landmarks.contains(&t) != keep)
            .collect(),
    }
}

pub fn mask_or(a: &FrameMask, b: &FrameMask) -> Result<FrameMask, StrategyError> {
    if a.len() != b.len() {
        return Err(StrategyError::Shape {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(FrameMask {
        dropped: a
            .dropped
            .iter()
            .zip(&b.dropped)
            .map(|(x, y)| *x || *y)
            .collect(),
    })
}

/// Un-drops every protected frame.
pub fn mask_subtract(a: &FrameMask, protected: &BTreeSet<usize>) -> FrameMask {
    FrameMask {
        dropped: a
            .dropped
            .iter()
            .enumerate()
            .map(|(t, d)| *d && !protected.contains(&t))
            .collect(),
    }
}

/// Randomly drops (or restores) unprotected frames until exactly `target`
/// frames are dropped. Protected frames keep their input state.
pub fn adjust_mask_to_rate(
    mask: &FrameMask,
    target: usize,
    protected: &BTreeSet<usize>,
    seed: u64,
) -> Result<FrameMask, StrategyError> {
    let current = mask.drop_count();
    let (mut kept_free, mut dropped_free) = (Vec::new(), Vec::new());
    for (t, &d) in mask.dropped.iter().enumerate() {
        if protected.contains(&t) {
            continue;
        }
        if d {
            dropped_free.push(t);
        } else {
            kept_free.push(t);
        }
    }
    let mut out = mask.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if target > current {
        let need = target - current;
        if need > kept_free.len() {
            return Err(StrategyError::InvalidPattern(format!(
                "target {target} needs {need} more drops but only {} unprotected frames are kept",
                kept_free.len()
            )));
        }
        let (chosen, _) = kept_free.partial_shuffle(&mut rng, need);
        for &t in chosen.iter() {
            out.dropped[t] = true;
        }
    } else if target < current {
        let need = current - target;
        if need > dropped_free.len() {
            return Err(StrategyError::InvalidPattern(format!(
                "target {target} needs {need} fewer drops but only {} unprotected frames are dropped",
                dropped_free.len()
            )));
        }
        let (chosen, _) = dropped_free.partial_shuffle(&mut rng, need);
        for &t in chosen.iter() {
            out.dropped[t] = false;
        }
    }
    Ok(out)
}
