//! Alignments, score matrices, masks and manner tables, plus their file formats.
//!
//! Everything downstream is frame-synchronous, so sample-indexed alignments
//! are converted to frames once, here, with `floor(b / frame_shift)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::strategy::FrameMask;

/// Log-likelihood sentinel for impossible events. Absorbing under addition.
pub const NEG_INF: f64 = f64::NEG_INFINITY;

const MATRIX_MAGIC: &[u8; 4] = b"LLM1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("malformed alignment: {0}")]
    MalformedAlignment(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("unknown phone {0:?}")]
    UnknownPhone(String),
    #[error("invalid frame timing: {0}")]
    InvalidTiming(String),
}

fn parse_err(line: usize, msg: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Gender {
    F,
    M,
    #[default]
    Unknown,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::F => "F",
            Gender::M => "M",
            Gender::Unknown => "unknown",
        })
    }
}

impl FromStr for Gender {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F" | "f" => Ok(Gender::F),
            "M" | "m" => Ok(Gender::M),
            "unknown" | "U" | "u" | "?" => Ok(Gender::Unknown),
            other => Err(CorpusError::Format(format!("bad gender {other:?}"))),
        }
    }
}

/// One phone occupying frames `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub phone: String,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(phone: impl Into<String>, start: usize, end: usize) -> Self {
        Segment {
            phone: phone.into(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Contiguous phone segmentation of one utterance, frame indexed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneAlignment {
    pub utterance_id: String,
    pub speaker_id: String,
    pub gender: Gender,
    segments: Vec<Segment>,
}

impl PhoneAlignment {
    /// Validates contiguity: the first segment starts at frame 0, every
    /// segment is non-empty and each one starts where the previous ended.
    pub fn new(
        utterance_id: impl Into<String>,
        segments: Vec<Segment>,
    ) -> Result<Self, CorpusError> {
        let mut expected_start = 0;
        for (i, seg) in segments.iter().enumerate() {
            if seg.end <= seg.start {
                return Err(CorpusError::MalformedAlignment(format!(
                    "segment {i} ({}) has end {} <= start {}",
                    seg.phone, seg.end, seg.start
                )));
            }
            if seg.start != expected_start {
                let what = if seg.start < expected_start {
                    "overlaps"
                } else {
                    "leaves a gap before"
                };
                return Err(CorpusError::MalformedAlignment(format!(
                    "segment {i} ({}) {what} frame {expected_start}",
                    seg.phone
                )));
            }
            expected_start = seg.end;
        }
        Ok(PhoneAlignment {
            utterance_id: utterance_id.into(),
            speaker_id: String::new(),
            gender: Gender::Unknown,
            segments,
        })
    }

    pub fn with_speaker(mut self, speaker_id: impl Into<String>, gender: Gender) -> Self {
        self.speaker_id = speaker_id.into();
        self.gender = gender;
        self
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// End frame of the last segment (0 for an empty alignment).
    pub fn num_frames(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }

    pub fn phones(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(|s| s.phone.as_str())
    }
}

/// Analysis frame geometry, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameTiming {
    pub sample_rate: u32,
    pub frame_length: u32,
    pub frame_shift: u32,
}

impl Default for FrameTiming {
    /// 25 ms windows every 10 ms at 16 kHz.
    fn default() -> Self {
        FrameTiming {
            sample_rate: 16_000,
            frame_length: 400,
            frame_shift: 160,
        }
    }
}

impl FrameTiming {
    pub fn new(sample_rate: u32, frame_length: u32, frame_shift: u32) -> Result<Self, CorpusError> {
        if frame_shift < 1 {
            return Err(CorpusError::InvalidTiming(
                "frame_shift must be >= 1".into(),
            ));
        }
        if frame_length < frame_shift {
            return Err(CorpusError::InvalidTiming(format!(
                "frame_length {frame_length} < frame_shift {frame_shift}"
            )));
        }
        Ok(FrameTiming {
            sample_rate,
            frame_length,
            frame_shift,
        })
    }

    pub fn sample_to_frame(&self, sample: u64) -> usize {
        (sample / u64::from(self.frame_shift)) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryUnit {
    Frames,
    Samples,
}

/// Parses `start end phone` lines (TIMIT `.PHN` layout).
///
/// With [`BoundaryUnit::Samples`] both endpoints are mapped to
/// `floor(b / frame_shift)`; phones shorter than one frame shift can collapse
/// to zero frames after conversion and are dropped, which keeps the
/// segmentation contiguous.
pub fn parse_alignment(
    utterance_id: &str,
    text: &str,
    timing: &FrameTiming,
    unit: BoundaryUnit,
) -> Result<PhoneAlignment, CorpusError> {
    let mut segments = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(
                lineno,
                format!("expected `start end phone`, got {line:?}"),
            ));
        }
        let start: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(lineno, format!("non-integer start {:?}", fields[0])))?;
        let end: u64 = fields[1]
            .parse()
            .map_err(|_| parse_err(lineno, format!("non-integer end {:?}", fields[1])))?;
        if end <= start {
            return Err(CorpusError::MalformedAlignment(format!(
                "line {lineno}: end {end} <= start {start}"
            )));
        }
        let (start, end) = match unit {
            BoundaryUnit::Frames => (start as usize, end as usize),
            BoundaryUnit::Samples => (timing.sample_to_frame(start), timing.sample_to_frame(end)),
        };
        if unit == BoundaryUnit::Samples && start == end {
            continue;
        }
        segments.push(Segment::new(fields[2], start, end));
    }
    PhoneAlignment::new(utterance_id, segments)
}

/// Frame-indexed alignment text; the inverse of [`parse_alignment`] with
/// [`BoundaryUnit::Frames`].
pub fn write_alignment(alignment: &PhoneAlignment) -> String {
    let mut out = String::new();
    for seg in alignment.segments() {
        out.push_str(&format!("{} {} {}\n", seg.start, seg.end, seg.phone));
    }
    out
}

/// `frames x senones` log-likelihoods, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub utterance_id: String,
    frames: usize,
    senones: usize,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(
        utterance_id: impl Into<String>,
        frames: usize,
        senones: usize,
        values: Vec<f64>,
    ) -> Result<Self, CorpusError> {
        if frames == 0 || senones == 0 {
            return Err(CorpusError::Format(format!(
                "empty matrix {frames}x{senones}"
            )));
        }
        if values.len() != frames * senones {
            return Err(CorpusError::Format(format!(
                "expected {} values for {frames}x{senones}, got {}",
                frames * senones,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() || **v == NEG_INF)) {
            return Err(CorpusError::Format(format!("non-finite value {bad}")));
        }
        Ok(ScoreMatrix {
            utterance_id: utterance_id.into(),
            frames,
            senones,
            values,
        })
    }

    pub fn from_rows(
        utterance_id: impl Into<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self, CorpusError> {
        let senones = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != senones) {
            return Err(CorpusError::Format("ragged rows".into()));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(utterance_id, rows.len(), senones, values)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn senones(&self) -> usize {
        self.senones
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.senones..(t + 1) * self.senones]
    }

    pub fn get(&self, t: usize, s: usize) -> f64 {
        self.values[t * self.senones + s]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.senones)
    }

    /// Crate-internal constructor for values already known to be valid.
    pub(crate) fn from_parts(
        utterance_id: String,
        frames: usize,
        senones: usize,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(values.len(), frames * senones);
        ScoreMatrix {
            utterance_id,
            frames,
            senones,
            values,
        }
    }
}

/// `LLM1` magic, u32 LE frames, u32 LE senones, then f64 LE values row-major.
pub fn write_score_matrix(m: &ScoreMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * m.values.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.frames as u32).to_le_bytes());
    out.extend_from_slice(&(m.senones as u32).to_le_bytes());
    for v in &m.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_score_matrix(utterance_id: &str, bytes: &[u8]) -> Result<ScoreMatrix, CorpusError> {
    if bytes.len() < 12 {
        return Err(CorpusError::Format(format!(
            "truncated header ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[..4] != MATRIX_MAGIC {
        return Err(CorpusError::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let senones = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    let expected = frames
        .checked_mul(senones)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| CorpusError::Format("dimension overflow".into()))?;
    if payload.len() != expected {
        return Err(CorpusError::Format(format!(
            "payload is {} bytes, {frames}x{senones} needs {expected}",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScoreMatrix::new(utterance_id, frames, senones, values)
}

/// Header `T S`, then one line of `S` shortest round-trip decimals per frame.
pub fn write_score_matrix_text(m: &ScoreMatrix) -> String {
    let mut out = format!("{} {}\n", m.frames, m.senones);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_score_matrix_text(utterance_id: &str, text: &str) -> Result<ScoreMatrix, CorpusError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| CorpusError::Format("missing header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|f| f.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CorpusError::Format(format!("bad header {header:?}")))?;
    let [frames, senones] = dims[..] else {
        return Err(CorpusError::Format(format!(
            "header must be `T S`, got {header:?}"
        )));
    };
    let mut values = Vec::with_capacity(frames * senones);
    let mut rows = 0;
    for (idx, line) in lines {
        let before = values.len();
        for field in line.split_whitespace() {
            let v: f64 = field.parse().map_err(|_| {
                CorpusError::Format(format!("line {}: bad float {field:?}", idx + 1))
            })?;
            values.push(v);
        }
        if values.len() - before != senones {
            return Err(CorpusError::Format(format!(
                "line {}: expected {senones} values, got {}",
                idx + 1,
                values.len() - before
            )));
        }
        rows += 1;
    }
    if rows != frames {
        return Err(CorpusError::Format(format!(
            "expected {frames} rows, got {rows}"
        )));
    }
    ScoreMatrix::new(utterance_id, frames, senones, values)
}

/// One `t 0|1` line per frame, 1 meaning dropped.
pub fn write_mask(mask: &FrameMask) -> String {
    mask.dropped()
        .iter()
        .enumerate()
        .map(|(t, &d)| format!("{t} {}", u8::from(d)))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn read_mask(text: &str) -> Result<FrameMask, CorpusError> {
    let mut dropped = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (t, flag) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| CorpusError::Format(format!("line {}: expected `t flag`", idx + 1)))?;
        let t: usize = t
            .trim()
            .parse()
            .map_err(|_| CorpusError::Format(format!("line {}: bad frame index {t:?}", idx + 1)))?;
        if t != dropped.len() {
            return Err(CorpusError::Format(format!(
                "frame index {t} where {} was expected (missing or duplicated frame)",
                dropped.len()
            )));
        }
        dropped.push(match flag.trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(CorpusError::Format(format!(
                    "line {}: bad flag {other:?}",
                    idx + 1
                )))
            }
        });
    }
    if dropped.is_empty() {
        return Err(CorpusError::Format("empty mask".into()));
    }
    Ok(FrameMask::from_dropped(dropped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Manner {
    Vowel,
    Glide,
    Fricative,
    Affricate,
    Nasal,
    Stop,
    Silence,
    Other,
}

impl Manner {
    pub const ALL: [Manner; 8] = [
        Manner::Vowel,
        Manner::Glide,
        Manner::Fricative,
        Manner::Affricate,
        Manner::Nasal,
        Manner::Stop,
        Manner::Silence,
        Manner::Other,
    ];

    /// Fricatives, affricates, nasals and stops.
    pub fn is_consonantal(self) -> bool {
        matches!(
            self,
            Manner::Fricative | Manner::Affricate | Manner::Nasal | Manner::Stop
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Manner::Vowel => "vowel",
            Manner::Glide => "glide",
            Manner::Fricative => "fricative",
            Manner::Affricate => "affricate",
            Manner::Nasal => "nasal",
            Manner::Stop => "stop",
            Manner::Silence => "silence",
            Manner::Other => "other",
        }
    }
}

impl fmt::Display for Manner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Manner {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Manner::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CorpusError::Format(format!("unknown manner {s:?}")))
    }
}

// TIMIT 61-phone inventory; closures and pauses count as silence.
const TIMIT_MANNERS: &[(&str, Manner)] = &[
    ("iy", Manner::Vowel),
    ("ih", Manner::Vowel),
    ("eh", Manner::Vowel),
    ("ey", Manner::Vowel),
    ("ae", Manner::Vowel),
    ("aa", Manner::Vowel),
    ("aw", Manner::Vowel),
    ("ay", Manner::Vowel),
    ("ah", Manner::Vowel),
    ("ao", Manner::Vowel),
    ("oy", Manner::Vowel),
    ("ow", Manner::Vowel),
    ("uh", Manner::Vowel),
    ("uw", Manner::Vowel),
    ("ux", Manner::Vowel),
    ("er", Manner::Vowel),
    ("ax", Manner::Vowel),
    ("ix", Manner::Vowel),
    ("axr", Manner::Vowel),
    ("ax-h", Manner::Vowel),
    ("l", Manner::Glide),
    ("r", Manner::Glide),
    ("w", Manner::Glide),
    ("y", Manner::Glide),
    ("hh", Manner::Glide),
    ("hv", Manner::Glide),
    ("el", Manner::Glide),
    ("s", Manner::Fricative),
    ("sh", Manner::Fricative),
    ("z", Manner::Fricative),
    ("zh", Manner::Fricative),
    ("f", Manner::Fricative),
    ("th", Manner::Fricative),
    ("v", Manner::Fricative),
    ("dh", Manner::Fricative),
    ("jh", Manner::Affricate),
    ("ch", Manner::Affricate),
    ("m", Manner::Nasal),
    ("n", Manner::Nasal),
    ("ng", Manner::Nasal),
    ("em", Manner::Nasal),
    ("en", Manner::Nasal),
    ("eng", Manner::Nasal),
    ("nx", Manner::Nasal),
    ("b", Manner::Stop),
    ("d", Manner::Stop),
    ("g", Manner::Stop),
    ("p", Manner::Stop),
    ("t", Manner::Stop),
    ("k", Manner::Stop),
    ("dx", Manner::Stop),
    ("q", Manner::Stop),
    ("bcl", Manner::Silence),
    ("dcl", Manner::Silence),
    ("gcl", Manner::Silence),
    ("pcl", Manner::Silence),
    ("tcl", Manner::Silence),
    ("kcl", Manner::Silence),
    ("h#", Manner::Silence),
    ("pau", Manner::Silence),
    ("epi", Manner::Silence),
];

/// Phone label to manner of articulation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MannerTable {
    map: BTreeMap<String, Manner>,
}

impl MannerTable {
    pub fn new(map: BTreeMap<String, Manner>) -> Self {
        MannerTable { map }
    }

    pub fn timit() -> Self {
        MannerTable {
            map: TIMIT_MANNERS
                .iter()
                .map(|(p, m)| (p.to_string(), *m))
                .collect(),
        }
    }

    pub fn get(&self, phone: &str) -> Result<Manner, CorpusError> {
        self.map
            .get(phone)
            .copied()
            .ok_or_else(|| CorpusError::UnknownPhone(phone.to_string()))
    }

    pub fn insert(&mut self, phone: impl Into<String>, manner: Manner) {
        self.map.insert(phone.into(), manner);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Manner)> {
        self.map.iter().map(|(p, m)| (p.as_str(), *m))
    }

    /// Labels mapped to [`Manner::Silence`].
    pub fn silence_labels(&self) -> std::collections::BTreeSet<String> {
        self.map
            .iter()
            .filter(|(_, m)| **m == Manner::Silence)
            .map(|(p, _)| p.clone())
            .collect()
    }

    /// Load-time check that every phone in the alignments has a manner.
    pub fn check_covers<'a>(
        &self,
        alignments: impl IntoIterator<Item = &'a PhoneAlignment>,
    ) -> Result<(), CorpusError> {
        for a in alignments {
            for phone in a.phones() {
                self.get(phone)?;
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut map = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(phone), Some(manner), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(parse_err(
                    idx + 1,
                    format!("expected `phone manner`, got {line:?}"),
                ));
            };
            let manner: Manner = manner
                .parse()
                .map_err(|e: CorpusError| parse_err(idx + 1, e.to_string()))?;
            map.insert(phone.to_string(), manner);
        }
        Ok(MannerTable { map })
    }

    pub fn to_text(&self) -> String {
        self.map.iter().map(|(p, m)| format!("{p} {m}\n")).collect()
    }
}
