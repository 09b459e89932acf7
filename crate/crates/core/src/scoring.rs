//! Phone error rate via unit-cost Levenshtein alignment, plus confusion
//! bookkeeping for per-manner error analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Confusion-map hypothesis column for a deleted reference phone.
pub const DEL: &str = "<del>";
/// Confusion-map reference row for an inserted hypothesis phone.
pub const INS: &str = "<ins>";
/// Manner bucket for phones with errors but no reference occurrences.
pub const UNSEEN: &str = "unseen";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("baseline PER is zero; relative increment undefined")]
    DegenerateBaseline,
    #[error("report format error: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PerReport {
    pub n_ref: usize,
    pub ins: usize,
    pub del: usize,
    pub sub: usize,
    /// `(ref, hyp)` counts; matches are `(p, p)`, deletions `(p, DEL)`,
    /// insertions `(INS, p)`.
    pub confusion: BTreeMap<(String, String), usize>,
}

impl PerReport {
    pub fn errors(&self) -> usize {
        self.ins + self.del + self.sub
    }

    pub fn matches(&self) -> usize {
        self.n_ref - self.del - self.sub
    }

    /// Percentage; infinite when there is no reference but there are errors.
    pub fn per(&self) -> f64 {
        match (self.n_ref, self.errors()) {
            (0, 0) => 0.0,
            (0, _) => f64::INFINITY,
            (n, e) => 100.0 * e as f64 / n as f64,
        }
    }

    /// Adds another report's counts into this one.
    pub fn merge(&mut self, other: &PerReport) {
        self.n_ref += other.n_ref;
        self.ins += other.ins;
        self.del += other.del;
        self.sub += other.sub;
        for (k, v) in &other.confusion {
            *self.confusion.entry(k.clone()).or_default() += v;
        }
    }

    /// Per-phone insertion, deletion and substitution counts.
    pub fn phone_errors(&self) -> BTreeMap<String, [usize; 3]> {
        let mut out: BTreeMap<String, [usize; 3]> = BTreeMap::new();
        for ((r, h), &c) in &self.confusion {
            if r == INS {
                out.entry(h.clone()).or_default()[ErrorType::Insertion as usize] += c;
            } else if h == DEL {
                out.entry(r.clone()).or_default()[ErrorType::Deletion as usize] += c;
            } else if r != h {
                out.entry(r.clone()).or_default()[ErrorType::Substitution as usize] += c;
            }
        }
        out
    }
}

pub fn merge_reports<'a>(reports: impl IntoIterator<Item = &'a PerReport>) -> PerReport {
    let mut total = PerReport::default();
    for r in reports {
        total.merge(r);
    }
    total
}

/// Minimal unit-cost alignment of `hyp` against `reference`.
///
/// On cost ties the backtrace prefers match/substitution, then deletion,
/// then insertion.
pub fn align_edit<S: AsRef<str>>(reference: &[S], hyp: &[S]) -> PerReport {
    let (n, m) = (reference.len(), hyp.len());
    let cols = m + 1;
    let mut d = vec![0usize; (n + 1) * cols];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * cols] = i;
        for j in 1..=m {
            let diag = d[(i - 1) * cols + j - 1]
                + usize::from(reference[i - 1].as_ref() != hyp[j - 1].as_ref());
            let up = d[(i - 1) * cols + j] + 1;
            let left = d[i * cols + j - 1] + 1;
            d[i * cols + j] = diag.min(up).min(left);
        }
    }
    let mut report = PerReport {
        n_ref: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * cols + j];
        if i > 0 && j > 0 {
            let (r, h) = (reference[i - 1].as_ref(), hyp[j - 1].as_ref());
            if here == d[(i - 1) * cols + j - 1] + usize::from(r != h) {
                if r != h {
                    report.sub += 1;
                }
                *report
                    .confusion
                    .entry((r.to_string(), h.to_string()))
                    .or_default() += 1;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * cols + j] + 1 {
            report.del += 1;
            *report
                .confusion
                .entry((reference[i - 1].as_ref().to_string(), DEL.to_string()))
                .or_default() += 1;
            i -= 1;
        } else {
            report.ins += 1;
            *report
                .confusion
                .entry((INS.to_string(), hyp[j - 1].as_ref().to_string()))
                .or_default() += 1;
            j -= 1;
        }
    }
    report
}

/// `100 * (modified - baseline) / baseline`.
pub fn per_increment(baseline_per: f64, modified_per: f64) -> Result<f64, ScoringError> {
    if baseline_per <= 0.0 {
        return Err(ScoringError::DegenerateBaseline);
    }
    Ok(100.0 * (modified_per - baseline_per) / baseline_per)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorType {
    Insertion = 0,
    Deletion = 1,
    Substitution = 2,
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorType::Insertion => "insertion",
            ErrorType::Deletion => "deletion",
            ErrorType::Substitution => "substitution",
        })
    }
}

const ERROR_TYPES: [ErrorType; 3] = [
    ErrorType::Insertion,
    ErrorType::Deletion,
    ErrorType::Substitution,
];

/// Error increment of `sys` over `base`, divided by each phone's reference
/// occurrences, then pooled per group with occurrence weights (equivalently,
/// summed increments over summed occurrences). Phones with increments but no
/// occurrences are summed raw under [`UNSEEN`].
pub fn normalized_error_increment(
    base: &PerReport,
    sys: &PerReport,
    ref_occurrences: &BTreeMap<String, usize>,
    grouping: &BTreeMap<String, String>,
) -> BTreeMap<(String, ErrorType), f64> {
    let base_err = base.phone_errors();
    let sys_err = sys.phone_errors();
    let phones: BTreeSet<&String> = base_err
        .keys()
        .chain(sys_err.keys())
        .chain(ref_occurrences.keys())
        .collect();
    // group -> (weighted increment sum per type, occurrence sum)
    let mut acc: BTreeMap<String, ([f64; 3], usize)> = BTreeMap::new();
    let mut unseen = [0.0f64; 3];
    for phone in phones {
        let b = base_err.get(phone).copied().unwrap_or_default();
        let s = sys_err.get(phone).copied().unwrap_or_default();
        let delta: [f64; 3] = std::array::from_fn(|k| s[k] as f64 - b[k] as f64);
        let occ = ref_occurrences.get(phone).copied().unwrap_or(0);
        match grouping.get(phone) {
            Some(group) if occ > 0 => {
                let entry = acc.entry(group.clone()).or_insert(([0.0; 3], 0));
                for k in 0..3 {
                    // occ * (delta / occ)
                    entry.0[k] += delta[k];
                }
                entry.1 += occ;
            }
            _ => {
                for k in 0..3 {
                    unseen[k] += delta[k];
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (group, (sums, occ)) in acc {
        for et in ERROR_TYPES {
            out.insert((group.clone(), et), sums[et as usize] / occ as f64);
        }
    }
    if unseen.iter().any(|v| *v != 0.0) {
        for et in ERROR_TYPES {
            out.insert((UNSEEN.to_string(), et), unseen[et as usize]);
        }
    }
    out
}

/// Counts of each phone in reference sequences.
pub fn occurrences<'a, S: AsRef<str> + 'a>(
    refs: impl IntoIterator<Item = &'a [S]>,
) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for seq in refs {
        for p in seq {
            *out.entry(p.as_ref().to_string()).or_default() += 1;
        }
    }
    out
}

/// Maps every label through `folding` (identity when absent), merges repeats
/// created by the folding and drops labels in `drop`.
pub fn normalize_phones<S: AsRef<str>>(
    seq: &[S],
    folding: Option<&BTreeMap<String, String>>,
    drop: &BTreeSet<String>,
) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut last: Option<String> = None;
    for p in seq {
        let p = p.as_ref();
        let mapped = folding.and_then(|f| f.get(p)).map_or(p, String::as_str);
        if last.as_deref() == Some(mapped) {
            continue;
        }
        last = Some(mapped.to_string());
        if !drop.contains(mapped) {
            out.push(mapped.to_string());
        }
    }
    out
}

/// `from to` lines.
pub fn parse_folding(text: &str) -> Result<BTreeMap<String, String>, ScoringError> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut f = line.split_whitespace();
        let (Some(a), Some(b), None) = (f.next(), f.next(), f.next()) else {
            return Err(ScoringError::Format(format!(
                "line {}: expected `from to`",
                idx + 1
            )));
        };
        out.insert(a.to_string(), b.to_string());
    }
    Ok(out)
}

pub const REPORT_HEADER: &str = "utterance_id,N,ins,del,sub,per";

/// `utterance_id,N,ins,del,sub,per` rows.
pub fn write_report_csv(rows: &[(String, PerReport)]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for (utt, r) in rows {
        out.push_str(&format!(
            "{utt},{},{},{},{},{}\n",
            r.n_ref,
            r.ins,
            r.del,
            r.sub,
            r.per()
        ));
    }
    out
}

/// Reads the counts back; confusion maps come from the confusion CSV.
pub fn read_report_csv(text: &str) -> Result<Vec<(String, PerReport)>, ScoringError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(REPORT_HEADER) {
        return Err(ScoringError::Format(format!(
            "expected header {REPORT_HEADER:?}"
        )));
    }
    let mut rows = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(ScoringError::Format(format!(
                "expected 6 columns in {line:?}"
            )));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| ScoringError::Format(format!("bad count {s:?}")))
        };
        let r = PerReport {
            n_ref: num(f[1])?,
            ins: num(f[2])?,
            del: num(f[3])?,
            sub: num(f[4])?,
            confusion: BTreeMap::new(),
        };
        let per: f64 = f[5]
            .parse()
            .map_err(|_| ScoringError::Format(format!("bad per {:?}", f[5])))?;
        if per.to_bits() != r.per().to_bits() {
            return Err(ScoringError::Format(format!(
                "per {per} inconsistent with counts in {line:?}"
            )));
        }
        rows.push((f[0].to_string(), r));
    }
    Ok(rows)
}

pub const CONFUSION_HEADER: &str = "ref,hyp,count";

pub fn write_confusion_csv(confusion: &BTreeMap<(String, String), usize>) -> String {
    let mut out = format!("{CONFUSION_HEADER}\n");
    for ((r, h), c) in confusion {
        out.push_str(&format!("{r},{h},{c}\n"));
    }
    out
}

pub fn read_confusion_csv(text: &str) -> Result<BTreeMap<(String, String), usize>, ScoringError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(CONFUSION_HEADER) {
        return Err(ScoringError::Format(format!(
            "expected header {CONFUSION_HEADER:?}"
        )));
    }
    let mut out = BTreeMap::new();
    for line in lines {
        let f: Vec<&str> = line.trim().split(',').collect();
        let [r, h, c] = f[..] else {
            return Err(ScoringError::Format(format!(
                "expected 3 columns in {line:?}"
            )));
        };
        let c: usize = c
            .parse()
            .map_err(|_| ScoringError::Format(format!("bad count {c:?}")))?;
        out.insert((r.to_string(), h.to_string()), c);
    }
    Ok(out)
}
