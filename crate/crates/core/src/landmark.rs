//! Landmark labeling from phone boundaries.
//!
//! Per segment `[a, b)`:
//!
//! | manner    | events                      |
//! |-----------|-----------------------------|
//! | vowel     | `V` at the middle frame     |
//! | glide     | `G` at the middle frame     |
//! | fricative | `Fc` at `a`, `Fr` at `b-1`  |
//! | affricate | `Sr`,`Fc` at `a`, `Fr` at `b-1` |
//! | nasal     | `Nc` at `a`, `Nr` at `b-1`  |
//! | stop      | `Sc` at `a`, `Sr` at `b-1`  |
//!
//! Two abutting consonantal segments of different manners have the release of
//! the first and the closure of the second replaced by one `MC` at the
//! junction frame.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus_io::{Manner, MannerTable, PhoneAlignment};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandmarkError {
    #[error("unknown phone {0:?}")]
    UnknownPhone(String),
    #[error("empty alignment")]
    EmptyInput,
    #[error("landmark format error: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LandmarkKind {
    V,
    G,
    Fc,
    Fr,
    Sc,
    Sr,
    Nc,
    Nr,
    MC,
}

impl LandmarkKind {
    pub const ALL: [LandmarkKind; 9] = [
        LandmarkKind::V,
        LandmarkKind::G,
        LandmarkKind::Fc,
        LandmarkKind::Fr,
        LandmarkKind::Sc,
        LandmarkKind::Sr,
        LandmarkKind::Nc,
        LandmarkKind::Nr,
        LandmarkKind::MC,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LandmarkKind::V => "V",
            LandmarkKind::G => "G",
            LandmarkKind::Fc => "Fc",
            LandmarkKind::Fr => "Fr",
            LandmarkKind::Sc => "Sc",
            LandmarkKind::Sr => "Sr",
            LandmarkKind::Nc => "Nc",
            LandmarkKind::Nr => "Nr",
            LandmarkKind::MC => "MC",
        }
    }
}

impl fmt::Display for LandmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LandmarkKind {
    type Err = LandmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LandmarkKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| LandmarkError::Format(format!("unknown landmark type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Landmark {
    pub frame: usize,
    pub kind: LandmarkKind,
}

impl Landmark {
    pub fn new(frame: usize, kind: LandmarkKind) -> Self {
        Landmark { frame, kind }
    }
}

/// Landmark events of one utterance, sorted by `(frame, kind)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LandmarkSet {
    pub utterance_id: String,
    events: Vec<Landmark>,
}

impl LandmarkSet {
    pub fn new(utterance_id: impl Into<String>, mut events: Vec<Landmark>) -> Self {
        events.sort();
        LandmarkSet {
            utterance_id: utterance_id.into(),
            events,
        }
    }

    pub fn events(&self) -> &[Landmark] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnnotationMode {
    /// Closures on the first frame, releases on the last frame of a segment.
    #[default]
    Boundary,
    /// Start events delayed by 33% of the segment, end events advanced by 20%.
    Offset,
}

impl FromStr for AnnotationMode {
    type Err = LandmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "boundary" => Ok(AnnotationMode::Boundary),
            "offset" => Ok(AnnotationMode::Offset),
            other => Err(LandmarkError::Format(format!(
                "unknown annotation mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnotationConfig {
    pub mode: AnnotationMode,
    pub widen_radius: usize,
    pub merge_mc: bool,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            mode: AnnotationMode::Boundary,
            widen_radius: 0,
            merge_mc: true,
        }
    }
}

const OFFSET_START: f64 = 0.33;
const OFFSET_END: f64 = 0.20;

fn start_events(manner: Manner) -> &'static [LandmarkKind] {
    match manner {
        Manner::Fricative => &[LandmarkKind::Fc],
        Manner::Affricate => &[LandmarkKind::Sr, LandmarkKind::Fc],
        Manner::Nasal => &[LandmarkKind::Nc],
        Manner::Stop => &[LandmarkKind::Sc],
        _ => &[],
    }
}

fn end_event(manner: Manner) -> Option<LandmarkKind> {
    match manner {
        Manner::Fricative | Manner::Affricate => Some(LandmarkKind::Fr),
        Manner::Nasal => Some(LandmarkKind::Nr),
        Manner::Stop => Some(LandmarkKind::Sr),
        _ => None,
    }
}

fn closure_event(manner: Manner) -> Option<LandmarkKind> {
    match manner {
        Manner::Fricative | Manner::Affricate => Some(LandmarkKind::Fc),
        Manner::Nasal => Some(LandmarkKind::Nc),
        Manner::Stop => Some(LandmarkKind::Sc),
        _ => None,
    }
}

fn middle(a: usize, b: usize) -> usize {
    (a + b - 1) / 2
}

pub fn annotate(
    alignment: &PhoneAlignment,
    manners: &MannerTable,
    cfg: &AnnotationConfig,
) -> Result<LandmarkSet, LandmarkError> {
    let segments = alignment.segments();
    if segments.is_empty() {
        return Err(LandmarkError::EmptyInput);
    }
    let seg_manners: Vec<Manner> = segments
        .iter()
        .map(|s| {
            manners
                .get(&s.phone)
                .map_err(|_| LandmarkError::UnknownPhone(s.phone.clone()))
        })
        .collect::<Result<_, _>>()?;

    // junction[i]: segment i and i+1 merge into an MC at segments[i].end
    let junction: Vec<bool> = (0..segments.len())
        .map(|i| {
            cfg.merge_mc
                && i + 1 < segments.len()
                && seg_manners[i].is_consonantal()
                && seg_manners[i + 1].is_consonantal()
                && seg_manners[i] != seg_manners[i + 1]
        })
        .collect();

    let mut events = Vec::new();
    for (i, (seg, &manner)) in segments.iter().zip(&seg_manners).enumerate() {
        let (a, b) = (seg.start, seg.end);
        let len = (b - a) as f64;
        let (start_at, end_at) = match cfg.mode {
            AnnotationMode::Boundary => (a, b - 1),
            AnnotationMode::Offset => {
                let s = a + (OFFSET_START * len).round() as usize;
                let e = (b - 1).saturating_sub((OFFSET_END * len).round() as usize);
                (s.clamp(a, b - 1), e.clamp(a, b - 1))
            }
        };
        match manner {
            Manner::Vowel => events.push(Landmark::new(middle(a, b), LandmarkKind::V)),
            Manner::Glide => events.push(Landmark::new(middle(a, b), LandmarkKind::G)),
            Manner::Silence | Manner::Other => {}
            _ => {
                let merged_in = i > 0 && junction[i - 1];
                let skip = if merged_in {
                    closure_event(manner)
                } else {
                    None
                };
                for &kind in start_events(manner) {
                    if Some(kind) != skip {
                        events.push(Landmark::new(start_at, kind));
                    }
                }
                if junction[i] {
                    events.push(Landmark::new(b, LandmarkKind::MC));
                } else if let Some(kind) = end_event(manner) {
                    events.push(Landmark::new(end_at, kind));
                }
            }
        }
    }
    Ok(LandmarkSet::new(alignment.utterance_id.clone(), events))
}

/// Frames within `widen_radius` of any event, clipped to `[0, frames)`.
pub fn landmark_frames(lms: &LandmarkSet, widen_radius: usize, frames: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for ev in lms.events() {
        let lo = ev.frame.saturating_sub(widen_radius);
        let hi = ev
            .frame
            .saturating_add(widen_radius)
            .min(frames.saturating_sub(1));
        if lo < frames {
            out.extend(lo..=hi);
        }
    }
    out
}

pub fn landmark_fraction(lms: &LandmarkSet, widen_radius: usize, frames: usize) -> f64 {
    if frames == 0 {
        return 0.0;
    }
    landmark_frames(lms, widen_radius, frames).len() as f64 / frames as f64
}

/// One `frame TYPE` line per event.
pub fn write_landmarks(lms: &LandmarkSet) -> String {
    lms.events()
        .iter()
        .map(|e| format!("{} {}\n", e.frame, e.kind))
        .collect()
}

pub fn read_landmarks(utterance_id: &str, text: &str) -> Result<LandmarkSet, LandmarkError> {
    let mut events = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(frame), Some(kind), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(LandmarkError::Format(format!(
                "line {}: expected `frame TYPE`",
                idx + 1
            )));
        };
        let frame: usize = frame
            .parse()
            .map_err(|_| LandmarkError::Format(format!("line {}: bad frame {frame:?}", idx + 1)))?;
        events.push(Landmark::new(frame, kind.parse()?));
    }
    if events.windows(2).any(|w| w[0].frame > w[1].frame) {
        return Err(LandmarkError::Format("events not sorted by frame".into()));
    }
    Ok(LandmarkSet::new(utterance_id, events))
}
