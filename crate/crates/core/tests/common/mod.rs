#![allow(dead_code)]
//! Independent reference implementations used by the integration tests.

use landmark_frames::corpus_io::{ScoreMatrix, NEG_INF};
use landmark_frames::decoder::TransitionModel;
use landmark_frames::strategy::WeightVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rounds to a multiple of 2^-24 so sums of a few dozen terms stay exact.
pub fn dyadic(x: f64) -> f64 {
    (x * 16_777_216.0).round() / 16_777_216.0
}

fn log_row(rng: &mut ChaCha8Rng, n: usize, exact: bool) -> Vec<f64> {
    // at least one allowed entry per row
    let mut allowed: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    if !allowed.iter().any(|a| *a) {
        allowed[rng.random_range(0..n)] = true;
    }
    let k = allowed.iter().filter(|a| **a).count();
    if exact {
        let lp = dyadic(-(k as f64).ln());
        return allowed
            .iter()
            .map(|&a| if a { lp } else { NEG_INF })
            .collect();
    }
    let raw: Vec<f64> = allowed
        .iter()
        .map(|&a| if a { rng.random_range(0.05..1.0) } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter()
        .map(|&p| if p > 0.0 { (p / total).ln() } else { NEG_INF })
        .collect()
}

/// Random model, matrix and weights. `exact` instances use small integer
/// emissions and dyadic log-probabilities so ties are frequent and exact.
pub struct ViterbiCase {
    pub tm: TransitionModel,
    pub scores: ScoreMatrix,
    pub weights: Option<WeightVector>,
}

pub fn viterbi_case(rng: &mut ChaCha8Rng, max_s: usize, max_t: usize, exact: bool) -> ViterbiCase {
    let s = rng.random_range(1..=max_s);
    let t = rng.random_range(1..=max_t);
    let init = log_row(rng, s, exact);
    let trans: Vec<f64> = (0..s).flat_map(|_| log_row(rng, s, exact)).collect();
    let labels: Vec<String> = (0..s).map(|i| format!("p{}", i / 2)).collect();
    let tm = TransitionModel::new(init, trans, labels).expect("normalized rows");
    let values: Vec<f64> = (0..t * s)
        .map(|_| {
            if exact {
                -(rng.random_range(0..4) as f64)
            } else {
                rng.random_range(-8.0..0.0)
            }
        })
        .collect();
    let scores = ScoreMatrix::new("case", t, s, values).unwrap();
    let weights = if rng.random_bool(0.5) {
        let w: Vec<f64> = (0..t)
            .map(|_| {
                if exact {
                    [0.0, 0.5, 1.0, 2.0, 4.0][rng.random_range(0..5)]
                } else {
                    rng.random_range(0.0..4.0)
                }
            })
            .collect();
        Some(WeightVector::new(w).unwrap())
    } else {
        None
    };
    ViterbiCase {
        tm,
        scores,
        weights,
    }
}

fn oracle_weighted(w: f64, v: f64) -> f64 {
    if v == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        w * v
    }
}

/// Forward-accumulated score of one state sequence.
pub fn oracle_path_score(c: &ViterbiCase, path: &[usize]) -> f64 {
    let w = |t: usize| c.weights.as_ref().map_or(1.0, |w| w.get(t));
    let mut total = c.tm.init()[path[0]] + oracle_weighted(w(0), c.scores.get(0, path[0]));
    for t in 1..path.len() {
        total = total
            + c.tm.trans(path[t - 1], path[t])
            + oracle_weighted(w(t), c.scores.get(t, path[t]));
    }
    total
}

/// Exhaustive search over all S^T paths. Among exactly tied optima the path
/// that is smallest when compared from the last frame backwards wins.
pub fn brute_viterbi(c: &ViterbiCase) -> Option<(Vec<usize>, f64)> {
    let (t, s) = (c.scores.frames(), c.scores.senones());
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut path = vec![0usize; t];
    let total = s.pow(t as u32);
    for code in 0..total {
        let mut x = code;
        for slot in path.iter_mut() {
            *slot = x % s;
            x /= s;
        }
        let score = oracle_path_score(c, &path);
        if score == f64::NEG_INFINITY {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bp, bs)) => {
                score > *bs || (score == *bs && path.iter().rev().lt(bp.iter().rev()))
            }
        };
        if better {
            best = Some((path.clone(), score));
        }
    }
    best
}

/// Minimum edit distance by exhaustive recursion over all alignments, plus
/// every `(ins, del, sub)` split that attains it.
pub fn brute_edit(r: &[&str], h: &[&str]) -> (usize, Vec<(usize, usize, usize)>) {
    fn go(
        r: &[&str],
        h: &[&str],
        acc: (usize, usize, usize),
        out: &mut Vec<(usize, usize, usize)>,
    ) {
        if r.is_empty() && h.is_empty() {
            out.push(acc);
            return;
        }
        if !r.is_empty() && !h.is_empty() {
            let sub = usize::from(r[0] != h[0]);
            go(&r[1..], &h[1..], (acc.0, acc.1, acc.2 + sub), out);
        }
        if !r.is_empty() {
            go(&r[1..], h, (acc.0, acc.1 + 1, acc.2), out);
        }
        if !h.is_empty() {
            go(r, &h[1..], (acc.0 + 1, acc.1, acc.2), out);
        }
    }
    let mut all = Vec::new();
    go(r, h, (0, 0, 0), &mut all);
    let best = all.iter().map(|(i, d, s)| i + d + s).min().unwrap();
    let mut splits: Vec<_> = all
        .into_iter()
        .filter(|(i, d, s)| i + d + s == best)
        .collect();
    splits.sort();
    splits.dedup();
    (best, splits)
}

/// Two-sided exact p for the signed-rank statistic by listing all 2^n sign
/// patterns over the midranks of the nonzero |d|.
pub fn wilcoxon_enumeration(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let n = d.len();
    let rank: Vec<f64> = (0..n)
        .map(|i| {
            let below = d.iter().filter(|x| x.abs() < d[i].abs()).count() as f64;
            let equal = d.iter().filter(|x| x.abs() == d[i].abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let total: f64 = rank.iter().sum();
    let w_plus: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| rank[i]).sum();
    let observed = w_plus.min(total - w_plus);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let wp: f64 = (0..n)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| rank[i])
            .sum();
        if wp.min(total - wp) <= observed + 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

pub fn random_matrix(rng: &mut ChaCha8Rng, frames: usize, senones: usize) -> ScoreMatrix {
    let values = (0..frames * senones)
        .map(|_| rng.random_range(-30.0..0.0))
        .collect();
    ScoreMatrix::new("m", frames, senones, values).unwrap()
}
