//! Frame-synchronous Viterbi over a senone transition model.
//!
//! The path score is
//! `init(s_0) + w(0)·e(0, s_0) + Σ_{t≥1} trans(s_{t-1}, s_t) + w(t)·e(t, s_t)`
//! where `e` is the emission log-likelihood from the score matrix. Only the
//! emission terms are weighted.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::corpus_io::{ScoreMatrix, NEG_INF};
use crate::strategy::{weighted, WeightVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("beam pruned every state at frame {frame}")]
    BeamCollapse { frame: usize },
    #[error("no state sequence with finite score")]
    NoViablePath,
    #[error("senone {0} has no phone mapping")]
    UnknownSenone(usize),
    #[error("invalid transition model: {0}")]
    InvalidModel(String),
    #[error("transition model format error on line {line}: {msg}")]
    Format { line: usize, msg: String },
}

const NORMALIZATION_TOL: f64 = 1e-6;

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(NEG_INF, f64::max);
    if max == NEG_INF {
        return NEG_INF;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Initial and transition log-probabilities plus the senone → phone map.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    senones: usize,
    init: Vec<f64>,
    trans: Vec<f64>,
    senone_to_phone: Vec<String>,
    // finite-probability predecessors of each senone, ascending
    predecessors: Vec<Vec<(usize, f64)>>,
}

impl TransitionModel {
    /// `trans` is row-major: `trans[i * S + j] = log p(j | i)`.
    pub fn new(
        init: Vec<f64>,
        trans: Vec<f64>,
        senone_to_phone: Vec<String>,
    ) -> Result<Self, DecodeError> {
        let senones = init.len();
        if senones == 0 {
            return Err(DecodeError::InvalidModel("no senones".into()));
        }
        if trans.len() != senones * senones || senone_to_phone.len() != senones {
            return Err(DecodeError::InvalidModel(format!(
                "{senones} senones need {} transitions and {senones} phone labels, got {} and {}",
                senones * senones,
                trans.len(),
                senone_to_phone.len()
            )));
        }
        if let Some(v) = init
            .iter()
            .chain(&trans)
            .find(|v| !(v.is_finite() || **v == NEG_INF))
        {
            return Err(DecodeError::InvalidModel(format!(
                "bad log-probability {v}"
            )));
        }
        let mass = log_sum_exp(&init).exp();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(DecodeError::InvalidModel(format!(
                "initial probabilities sum to {mass}"
            )));
        }
        for (i, row) in trans.chunks_exact(senones).enumerate() {
            let mass = log_sum_exp(row).exp();
            if (mass - 1.0).abs() > NORMALIZATION_TOL {
                return Err(DecodeError::InvalidModel(format!(
                    "transition row {i} sums to {mass}"
                )));
            }
        }
        let predecessors = (0..senones)
            .map(|j| {
                (0..senones)
                    .map(|i| (i, trans[i * senones + j]))
                    .filter(|(_, lp)| *lp != NEG_INF)
                    .collect()
            })
            .collect();
        Ok(TransitionModel {
            senones,
            init,
            trans,
            senone_to_phone,
            predecessors,
        })
    }

    pub fn senones(&self) -> usize {
        self.senones
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    pub fn trans(&self, from: usize, to: usize) -> f64 {
        self.trans[from * self.senones + to]
    }

    pub fn phone(&self, senone: usize) -> Option<&str> {
        self.senone_to_phone.get(senone).map(String::as_str)
    }

    pub fn senone_to_phone(&self) -> &[String] {
        &self.senone_to_phone
    }

    /// Text form: `S`, the init line, `S` transition rows, then `S` lines of
    /// `senone phone`.
    pub fn to_text(&self) -> String {
        let join = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        let mut out = format!("{}\n{}\n", self.senones, join(&self.init));
        for row in self.trans.chunks_exact(self.senones) {
            out.push_str(&join(row));
            out.push('\n');
        }
        for (s, p) in self.senone_to_phone.iter().enumerate() {
            out.push_str(&format!("{s} {p}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DecodeError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| DecodeError::Format {
                line: 0,
                msg: format!("missing {what}"),
            })
        };
        let floats = |(idx, line): (usize, &str), n: usize| -> Result<Vec<f64>, DecodeError> {
            let v: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| DecodeError::Format {
                    line: idx + 1,
                    msg: "bad float".into(),
                })?;
            if v.len() != n {
                return Err(DecodeError::Format {
                    line: idx + 1,
                    msg: format!("expected {n} values, got {}", v.len()),
                });
            }
            Ok(v)
        };
        let (idx, header) = next("header")?;
        let senones: usize = header.trim().parse().map_err(|_| DecodeError::Format {
            line: idx + 1,
            msg: format!("bad senone count {header:?}"),
        })?;
        let init = floats(next("init line")?, senones)?;
        let mut trans = Vec::with_capacity(senones * senones);
        for _ in 0..senones {
            trans.extend(floats(next("transition row")?, senones)?);
        }
        let mut senone_to_phone = vec![None; senones];
        for _ in 0..senones {
            let (idx, line) = next("senone mapping")?;
            let mut f = line.split_whitespace();
            let (Some(s), Some(p), None) = (f.next(), f.next(), f.next()) else {
                return Err(DecodeError::Format {
                    line: idx + 1,
                    msg: "expected `senone phone`".into(),
                });
            };
            let s: usize =
                s.parse()
                    .ok()
                    .filter(|s| *s < senones)
                    .ok_or_else(|| DecodeError::Format {
                        line: idx + 1,
                        msg: format!("bad senone {s:?}"),
                    })?;
            senone_to_phone[s] = Some(p.to_string());
        }
        let senone_to_phone = senone_to_phone
            .into_iter()
            .enumerate()
            .map(|(s, p)| p.ok_or(DecodeError::UnknownSenone(s)))
            .collect::<Result<_, _>>()?;
        if let Some((idx, _)) = lines.next() {
            return Err(DecodeError::Format {
                line: idx + 1,
                msg: "trailing content".into(),
            });
        }
        Self::new(init, trans, senone_to_phone)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub states: Vec<usize>,
    pub phones: Vec<String>,
    pub score: f64,
}

fn check_shapes(
    scores: &ScoreMatrix,
    tm: &TransitionModel,
    weights: Option<&WeightVector>,
) -> Result<(), DecodeError> {
    if scores.senones() != tm.senones() {
        return Err(DecodeError::Shape(format!(
            "score matrix has {} senones, model has {}",
            scores.senones(),
            tm.senones()
        )));
    }
    if let Some(w) = weights {
        if w.len() != scores.frames() {
            return Err(DecodeError::Shape(format!(
                "{} weights for {} frames",
                w.len(),
                scores.frames()
            )));
        }
    }
    Ok(())
}

/// Most likely senone sequence.
///
/// `beam = None` is exact. With `Some(b)`, states more than `b` below the
/// frame's best partial score are pruned. Ties go to the lowest senone index,
/// both for the final state and for every back-pointer.
pub fn viterbi(
    scores: &ScoreMatrix,
    tm: &TransitionModel,
    weights: Option<&WeightVector>,
    beam: Option<f64>,
) -> Result<DecodeResult, DecodeError> {
    check_shapes(scores, tm, weights)?;
    if let Some(b) = beam {
        if b.is_nan() || b < 0.0 {
            return Err(DecodeError::Shape(format!("beam must be >= 0, got {b}")));
        }
    }
    let (frames, senones) = (scores.frames(), tm.senones());
    let w = |t: usize| weights.map_or(1.0, |w| w.get(t));
    let mut back = vec![0usize; frames * senones];
    let mut prev: Vec<f64> = (0..senones)
        .map(|s| tm.init[s] + weighted(w(0), scores.get(0, s)))
        .collect();
    prune(&mut prev, beam, 0)?;
    let mut cur = vec![NEG_INF; senones];
    for t in 1..frames {
        let wt = w(t);
        for s in 0..senones {
            let (mut best, mut arg) = (NEG_INF, 0usize);
            let mut first = true;
            for &(p, lp) in &tm.predecessors[s] {
                let cand = prev[p] + lp;
                if first || cand > best {
                    best = cand;
                    arg = p;
                    first = false;
                }
            }
            back[t * senones + s] = arg;
            cur[s] = best + weighted(wt, scores.get(t, s));
        }
        prune(&mut cur, beam, t)?;
        std::mem::swap(&mut prev, &mut cur);
    }
    let (mut last, mut score) = (0usize, NEG_INF);
    for (s, &v) in prev.iter().enumerate() {
        if v > score {
            score = v;
            last = s;
        }
    }
    if score == NEG_INF {
        return Err(DecodeError::NoViablePath);
    }
    let mut states = vec![0usize; frames];
    states[frames - 1] = last;
    for t in (1..frames).rev() {
        states[t - 1] = back[t * senones + states[t]];
    }
    let phones = collapse_states(&states, tm, &BTreeSet::new())?;
    Ok(DecodeResult {
        states,
        phones,
        score,
    })
}

fn prune(row: &mut [f64], beam: Option<f64>, frame: usize) -> Result<(), DecodeError> {
    let Some(beam) = beam else { return Ok(()) };
    let best = row.iter().copied().fold(NEG_INF, f64::max);
    if best == NEG_INF {
        return Err(DecodeError::BeamCollapse { frame });
    }
    for v in row.iter_mut() {
        if *v < best - beam {
            *v = NEG_INF;
        }
    }
    Ok(())
}

/// Total weighted log-likelihood of a given state sequence, accumulated in
/// the same order as [`viterbi`].
pub fn path_score(
    scores: &ScoreMatrix,
    tm: &TransitionModel,
    weights: Option<&WeightVector>,
    states: &[usize],
) -> Result<f64, DecodeError> {
    check_shapes(scores, tm, weights)?;
    if states.len() != scores.frames() {
        return Err(DecodeError::Shape(format!(
            "{} states for {} frames",
            states.len(),
            scores.frames()
        )));
    }
    if let Some(&s) = states.iter().find(|s| **s >= tm.senones()) {
        return Err(DecodeError::UnknownSenone(s));
    }
    let w = |t: usize| weights.map_or(1.0, |w| w.get(t));
    let mut total = tm.init[states[0]] + weighted(w(0), scores.get(0, states[0]));
    for t in 1..states.len() {
        total =
            total + tm.trans(states[t - 1], states[t]) + weighted(w(t), scores.get(t, states[t]));
    }
    Ok(total)
}

/// Maps states to phones, merges consecutive repeats, then removes labels in
/// `drop`.
pub fn collapse_states(
    states: &[usize],
    tm: &TransitionModel,
    drop: &BTreeSet<String>,
) -> Result<Vec<String>, DecodeError> {
    let mut out: Vec<String> = Vec::new();
    let mut last: Option<&str> = None;
    for &s in states {
        let phone = tm.phone(s).ok_or(DecodeError::UnknownSenone(s))?;
        if last != Some(phone) {
            last = Some(phone);
            if !drop.contains(phone) {
                out.push(phone.to_string());
            }
        }
    }
    Ok(out)
}
