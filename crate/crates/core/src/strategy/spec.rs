//! Strategy strings.
//!
//! A strategy is one or more pattern terms joined by `+` (mask OR):
//!
//! ```text
//! identity
//! regular:P=3,D=1
//! random:n=120,seed=7        random:rate=0.5        random:match=keep
//! landmark:keep,r=0          landmark:drop
//! hybrid:P=3,D=2,overweight=4.0[,rate=0.521,seed=3]
//! ```
//!
//! `method=<copy|fill_0|fill_const|upsample>`, `overweight=<f>` and `r=<n>`
//! may appear in any term and apply to the whole strategy.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::mask::{
    adjust_mask_to_rate, mask_landmark, mask_or, mask_random, mask_regular, mask_subtract,
    FrameMask, LandmarkRegime,
};
use super::replace::{Replacement, WeightVector};
use super::StrategyError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RandomCount {
    Count(usize),
    Rate(f64),
    /// As many drops as landmark-keep would make on the same utterance.
    MatchKeep,
    /// As many drops as landmark-drop would make on the same utterance.
    MatchDrop,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatternTerm {
    Identity,
    Regular {
        period: usize,
        drop: usize,
    },
    Random {
        count: RandomCount,
        seed: u64,
    },
    Landmark(LandmarkRegime),
    /// Regular pattern with landmark frames restored, optionally nudged to a
    /// target rate by randomly toggling non-landmark frames.
    Hybrid {
        period: usize,
        drop: usize,
        rate: Option<f64>,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpec {
    text: String,
    pub terms: Vec<PatternTerm>,
    pub method: Option<Replacement>,
    pub overweight: Option<f64>,
    pub radius: Option<usize>,
}

/// Mask and weights realized for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePlan {
    pub mask: FrameMask,
    pub weights: WeightVector,
}

fn bad(msg: impl Into<String>) -> StrategyError {
    StrategyError::Parse(msg.into())
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, StrategyError> {
    v.parse()
        .map_err(|_| bad(format!("bad value {v:?} for {key}")))
}

fn parse_rate(key: &str, v: &str) -> Result<f64, StrategyError> {
    let r: f64 = parse_num(key, v)?;
    if !(0.0..=1.0).contains(&r) {
        return Err(bad(format!("{key} must be in [0, 1], got {r}")));
    }
    Ok(r)
}

impl StrategySpec {
    pub fn identity() -> Self {
        "identity".parse().unwrap()
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    fn parse_term(&mut self, term: &str) -> Result<PatternTerm, StrategyError> {
        let (kind, args) = term.split_once(':').unwrap_or((term, ""));
        let mut flags = Vec::new();
        let mut kv = Vec::new();
        for arg in args.split(',').map(str::trim).filter(|a| !a.is_empty()) {
            match arg.split_once('=') {
                Some((k, v)) => kv.push((k.trim(), v.trim())),
                None => flags.push(arg),
            }
        }
        let (mut period, mut drop, mut count, mut rate, mut seed) = (None, None, None, None, 0u64);
        for (k, v) in kv {
            match k {
                "P" | "p" => period = Some(parse_num::<usize>(k, v)?),
                "D" | "d" => drop = Some(parse_num::<usize>(k, v)?),
                "n" => count = Some(RandomCount::Count(parse_num(k, v)?)),
                "rate" => rate = Some(parse_rate(k, v)?),
                "match" => {
                    count = Some(match v {
                        "keep" => RandomCount::MatchKeep,
                        "drop" => RandomCount::MatchDrop,
                        other => {
                            return Err(bad(format!("match must be keep or drop, got {other:?}")))
                        }
                    })
                }
                "seed" => seed = parse_num(k, v)?,
                "method" => self.method = Some(v.parse()?),
                "overweight" => {
                    let f: f64 = parse_num(k, v)?;
                    if !(f.is_finite() && f >= 0.0) {
                        return Err(bad(format!("overweight must be >= 0, got {f}")));
                    }
                    self.overweight = Some(f);
                }
                "r" => self.radius = Some(parse_num(k, v)?),
                other => return Err(bad(format!("unknown key {other:?} in {term:?}"))),
            }
        }
        let need =
            |x: Option<usize>, name: &str| x.ok_or_else(|| bad(format!("{kind} needs {name}=")));
        let term = match kind {
            "identity" | "none" => PatternTerm::Identity,
            "regular" => {
                let (period, drop) = (need(period, "P")?, drop.unwrap_or(1));
                if period < 2 || drop < 1 || drop >= period {
                    return Err(StrategyError::InvalidPattern(format!(
                        "regular P={period} D={drop}"
                    )));
                }
                PatternTerm::Regular { period, drop }
            }
            "random" => {
                let count = match (count, rate) {
                    (Some(c), None) => c,
                    (None, Some(r)) => RandomCount::Rate(r),
                    _ => return Err(bad("random needs exactly one of n=, rate=, match=")),
                };
                PatternTerm::Random { count, seed }
            }
            "landmark" => match flags.as_slice() {
                ["keep"] => PatternTerm::Landmark(LandmarkRegime::Keep),
                ["drop"] => PatternTerm::Landmark(LandmarkRegime::Drop),
                _ => return Err(bad("landmark needs exactly one of keep, drop")),
            },
            "hybrid" => {
                let (period, drop) = (need(period, "P")?, drop.unwrap_or(1));
                if period < 2 || drop < 1 || drop >= period {
                    return Err(StrategyError::InvalidPattern(format!(
                        "hybrid P={period} D={drop}"
                    )));
                }
                PatternTerm::Hybrid {
                    period,
                    drop,
                    rate,
                    seed,
                }
            }
            other => return Err(bad(format!("unknown pattern {other:?}"))),
        };
        if !flags.is_empty() && !matches!(term, PatternTerm::Landmark(_)) {
            return Err(bad(format!("unexpected flag(s) {flags:?} in {term:?}")));
        }
        Ok(term)
    }

    /// Same strategy with `key=value` appended to the last term; a later key
    /// overrides an earlier one.
    pub fn with_option(&self, key: &str, value: impl fmt::Display) -> Result<Self, StrategyError> {
        let last = self.text.rsplit('+').next().unwrap_or("");
        let sep = if last.contains(':') { ',' } else { ':' };
        format!("{}{sep}{key}={value}", self.text).parse()
    }

    pub fn uses_landmarks(&self) -> bool {
        self.overweight.is_some_and(|f| f != 1.0)
            || self.terms.iter().any(|t| {
                matches!(
                    t,
                    PatternTerm::Landmark(_)
                        | PatternTerm::Hybrid { .. }
                        | PatternTerm::Random {
                            count: RandomCount::MatchKeep | RandomCount::MatchDrop,
                            ..
                        }
                )
            })
    }

    pub fn is_identity(&self) -> bool {
        self.terms.iter().all(|t| *t == PatternTerm::Identity)
            && self.overweight.is_none_or(|f| f == 1.0)
    }

    /// Builds the mask and weights for one utterance of `frames` frames.
    ///
    /// `landmarks` are the (already widened) landmark frames; `seed_offset`
    /// is mixed into every term seed so utterances and repeats get
    /// independent but replayable random draws.
    pub fn realize(
        &self,
        frames: usize,
        landmarks: &BTreeSet<usize>,
        seed_offset: u64,
    ) -> Result<FramePlan, StrategyError> {
        let mut mask = FrameMask::all_keep(frames);
        let none = BTreeSet::new();
        for term in &self.terms {
            let part = match *term {
                PatternTerm::Identity => FrameMask::all_keep(frames),
                PatternTerm::Regular { period, drop } => mask_regular(frames, period, drop)?,
                PatternTerm::Random { count, seed } => {
                    let n = match count {
                        RandomCount::Count(n) => n,
                        RandomCount::Rate(r) => (r * frames as f64).round() as usize,
                        RandomCount::MatchKeep => frames - landmarks.len(),
                        RandomCount::MatchDrop => landmarks.len(),
                    };
                    mask_random(frames, n, mix_seed(seed, seed_offset), &none)?
                }
                PatternTerm::Landmark(regime) => mask_landmark(landmarks, frames, regime),
                PatternTerm::Hybrid {
                    period,
                    drop,
                    rate,
                    seed,
                } => {
                    let base = mask_subtract(&mask_regular(frames, period, drop)?, landmarks);
                    match rate {
                        Some(r) => {
                            let target = (r * frames as f64).round() as usize;
                            adjust_mask_to_rate(
                                &base,
                                target,
                                landmarks,
                                mix_seed(seed, seed_offset),
                            )?
                        }
                        None => base,
                    }
                }
            };
            mask = mask_or(&mask, &part)?;
        }
        let weights = match self.overweight {
            Some(f) if f != 1.0 => WeightVector::overweight(frames, landmarks, f)?,
            _ => WeightVector::ones(frames),
        };
        Ok(FramePlan { mask, weights })
    }
}

impl FromStr for StrategySpec {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim().to_string();
        if text.is_empty() {
            return Err(bad("empty strategy"));
        }
        let mut spec = StrategySpec {
            text: text.clone(),
            terms: Vec::new(),
            method: None,
            overweight: None,
            radius: None,
        };
        for term in text.split('+').map(str::trim) {
            if term.is_empty() {
                return Err(bad(format!("empty term in {text:?}")));
            }
            let t = spec.parse_term(term)?;
            spec.terms.push(t);
        }
        Ok(spec)
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// SplitMix64 finalizer over `a ^ rotl(b)`; deterministic seed derivation.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.rotate_left(32) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
