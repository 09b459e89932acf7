use std::f64::consts::PI;

use super::StrategyError;

pub const FILTER_HALF_LEN: usize = 8;
pub const FILTER_TAPS: usize = 2 * FILTER_HALF_LEN + 1;

/// 17-tap symmetric interpolation filter `h(-8..=8)` for a frame stream that
/// drops every `period`-th frame.
///
/// Taps at offsets that are multiples of the period are exactly `h(0) = 1`
/// and zero elsewhere, so the filter passes retained frames through
/// untouched. The remaining taps (the offsets between a dropped frame and the
/// retained frames around it) are scaled to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpFilter {
    taps: [f64; FILTER_TAPS],
    period: usize,
}

impl InterpFilter {
    pub fn period(&self) -> usize {
        self.period
    }

    pub fn taps(&self) -> &[f64; FILTER_TAPS] {
        &self.taps
    }

    /// `h(k)` for `|k| <= 8`, zero outside the support.
    pub fn tap(&self, offset: i64) -> f64 {
        if offset.unsigned_abs() as usize > FILTER_HALF_LEN {
            0.0
        } else {
            self.taps[(offset + FILTER_HALF_LEN as i64) as usize]
        }
    }

    /// Sum of taps whose offset falls in residue `residue` modulo the period.
    pub fn coset_sum(&self, residue: usize) -> f64 {
        (-(FILTER_HALF_LEN as i64)..=FILTER_HALF_LEN as i64)
            .filter(|k| k.rem_euclid(self.period as i64) as usize == residue % self.period)
            .map(|k| self.tap(k))
            .sum()
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hamming-windowed sinc with cutoff `pi / period`.
pub fn design_interp_filter(period: usize) -> Result<InterpFilter, StrategyError> {
    if !(2..=FILTER_HALF_LEN).contains(&period) {
        return Err(StrategyError::InvalidPattern(format!(
            "interpolation period must be in 2..=8, got {period}"
        )));
    }
    let n = FILTER_TAPS as f64;
    let mut taps = [0.0; FILTER_TAPS];
    for (i, tap) in taps.iter_mut().enumerate() {
        let k = i as i64 - FILTER_HALF_LEN as i64;
        if k.rem_euclid(period as i64) == 0 {
            *tap = if k == 0 { 1.0 } else { 0.0 };
            continue;
        }
        let window = 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1.0)).cos();
        *tap = sinc(k as f64 / period as f64) * window;
    }
    let off_grid: f64 = taps
        .iter()
        .enumerate()
        .filter(|(i, _)| (*i as i64 - FILTER_HALF_LEN as i64).rem_euclid(period as i64) != 0)
        .map(|(_, h)| h)
        .sum();
    for (i, tap) in taps.iter_mut().enumerate() {
        if (i as i64 - FILTER_HALF_LEN as i64).rem_euclid(period as i64) != 0 {
            *tap /= off_grid;
        }
    }
    // fold each pair so the taps are symmetric bit-for-bit
    for k in 1..=FILTER_HALF_LEN {
        let avg = 0.5 * (taps[FILTER_HALF_LEN + k] + taps[FILTER_HALF_LEN - k]);
        taps[FILTER_HALF_LEN + k] = avg;
        taps[FILTER_HALF_LEN - k] = avg;
    }
    Ok(InterpFilter { taps, period })
}
