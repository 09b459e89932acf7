use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, SweepParam, SweepSpec};
use super::corpus::Corpus;
use super::ExperimentError;
use crate::corpus_io::{write_score_matrix, ScoreMatrix};
use crate::decoder::{viterbi, DecodeResult};
use crate::landmark::{annotate, landmark_frames, LandmarkSet};
use crate::scoring::{
    align_edit, merge_reports, normalized_error_increment, occurrences, per_increment, ErrorType,
    PerReport,
};
use crate::stats::{cv_folds, summarize_cv, welch_t, wilcoxon_signed_rank_with, FoldSpec};
use crate::strategy::{
    apply_replacement, apply_weights, mix_seed, FrameMask, FramePlan, StrategySpec,
};
use crate::synth::{gen_corpus, SynthConfig};

/// What one utterance produced under one strategy and repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceOutcome {
    pub utterance_id: String,
    pub mask: FrameMask,
    /// SHA-256 of the transformed matrix in binary form.
    pub checksum: String,
    /// Decoded phones after folding and silence removal.
    pub hyp: Vec<String>,
    pub report: PerReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyArtifacts {
    pub strategy: String,
    /// Outer index is the repeat, inner the utterance (corpus order).
    pub repeats: Vec<Vec<UtteranceOutcome>>,
}

/// One line of the report table. Percentages throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub strategy: String,
    pub drop_rate: f64,
    pub per: f64,
    pub delta_per: f64,
    /// Mean and sample deviation of the increment over folds (or repeats).
    pub mean: Option<f64>,
    pub stdev: Option<f64>,
    pub p_wilcoxon: Option<f64>,
    pub p_t: Option<f64>,
    pub drop_count: usize,
    pub frames: usize,
    pub error: Option<String>,
}

impl ReportRow {
    fn failed(strategy: &str, err: &ExperimentError) -> Self {
        ReportRow {
            strategy: strategy.to_string(),
            drop_rate: f64::NAN,
            per: f64::NAN,
            delta_per: f64::NAN,
            mean: None,
            stdev: None,
            p_wilcoxon: None,
            p_t: None,
            drop_count: 0,
            frames: 0,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatRow {
    pub test: &'static str,
    pub strategy: String,
    pub against: String,
    pub statistic: f64,
    pub df: Option<f64>,
    pub p: f64,
}

/// Error increment keyed by manner group and error type.
pub type ManneredIncrements = BTreeMap<(String, ErrorType), f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub seed: u64,
    pub model_tag: String,
    /// Settings echo for the manifest.
    pub settings: String,
    pub baseline: ReportRow,
    pub baseline_artifacts: StrategyArtifacts,
    /// Strategy rows in configuration order.
    pub rows: Vec<ReportRow>,
    /// Parallel to `rows`; `None` where the row failed.
    pub artifacts: Vec<Option<StrategyArtifacts>>,
    pub stats: Vec<StatRow>,
    /// Per-manner error increment of each strategy over the baseline.
    pub increments: Vec<(String, ManneredIncrements)>,
    pub folds: Option<FoldSpec>,
    pub sweep: Option<(SweepParam, Vec<f64>)>,
}

impl ExperimentReport {
    pub fn errors(&self) -> Vec<(&str, &str)> {
        self.rows
            .iter()
            .filter_map(|r| r.error.as_deref().map(|e| (r.strategy.as_str(), e)))
            .collect()
    }

    pub fn row(&self, strategy: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Decodes one (already transformed) matrix and scores it against the
/// utterance's reference.
pub fn decode_utterance(
    corpus: &Corpus,
    idx: usize,
    scores: &ScoreMatrix,
    beam: Option<f64>,
) -> Result<(DecodeResult, Vec<String>, PerReport), ExperimentError> {
    let dec = viterbi(scores, &corpus.transitions, None, beam)?;
    let hyp = corpus.normalize(&dec.phones);
    let report = align_edit(&corpus.reference(idx), &hyp);
    Ok((dec, hyp, report))
}

/// Corpus-level PER of the untouched matrices.
pub fn baseline_per(corpus: &Corpus, beam: Option<f64>) -> Result<f64, ExperimentError> {
    let reports = (0..corpus.utterances.len())
        .into_par_iter()
        .map(|i| decode_utterance(corpus, i, &corpus.utterances[i].scores, beam).map(|(_, _, r)| r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(merge_reports(&reports).per())
}

/// Picks the candidate scoring-noise level whose baseline PER, averaged over
/// `seeds`, is closest to `target` (percent). Returns `(sigma, per)`.
pub fn tune_noise_sigma(
    base: &SynthConfig,
    target: f64,
    candidates: &[f64],
    seeds: &[u64],
) -> Result<(f64, f64), ExperimentError> {
    if candidates.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::Config(
            "sigma tuning needs candidates and seeds".into(),
        ));
    }
    let mut best: Option<(f64, f64)> = None;
    for &sigma in candidates {
        let mut total = 0.0;
        for &seed in seeds {
            let corpus = Corpus::from_synth(gen_corpus(&SynthConfig {
                noise_sigma: sigma,
                seed,
                ..base.clone()
            })?);
            total += baseline_per(&corpus, None)?;
        }
        let per = total / seeds.len() as f64;
        if best.is_none_or(|(_, b)| (per - target).abs() < (b - target).abs()) {
            best = Some((sigma, per));
        }
    }
    Ok(best.expect("nonempty candidates"))
}

struct Resolved {
    spec: StrategySpec,
    radius: usize,
    method: crate::strategy::Replacement,
}

fn resolve(spec: &StrategySpec, cfg: &ExperimentConfig) -> Result<Resolved, ExperimentError> {
    let spec = match spec.overweight {
        None if cfg.overweight != 1.0 => spec.with_option("overweight", cfg.overweight)?,
        _ => spec.clone(),
    };
    Ok(Resolved {
        radius: spec.radius.unwrap_or(cfg.widen_radius),
        method: spec.method.unwrap_or(cfg.method),
        spec,
    })
}

/// Per-utterance random stream for a repeat; `repeat = 0` is what the
/// single-shot subcommands use.
pub fn utterance_seed(seed: u64, repeat: usize, idx: usize) -> u64 {
    mix_seed(mix_seed(seed, repeat as u64), idx as u64)
}

fn plan_utterance(
    corpus: &Corpus,
    idx: usize,
    landmarks: &Result<LandmarkSet, String>,
    plan: &Resolved,
    seed_offset: u64,
) -> Result<(FramePlan, ScoreMatrix), ExperimentError> {
    let u = &corpus.utterances[idx];
    let frames = u.scores.frames();
    let lm_frames = if plan.spec.uses_landmarks() {
        let lms = landmarks
            .as_ref()
            .map_err(|e| ExperimentError::Config(e.clone()))?;
        landmark_frames(lms, plan.radius, frames)
    } else {
        BTreeSet::new()
    };
    let fp = plan.spec.realize(frames, &lm_frames, seed_offset)?;
    let mut transformed = apply_replacement(&u.scores, &fp.mask, plan.method, None)?;
    if !fp.weights.is_identity() {
        transformed = apply_weights(&transformed, &fp.weights)?;
    }
    Ok((fp, transformed))
}

/// Mask, weights and transformed matrix of one utterance, built exactly as
/// a run builds them (config defaults fill in what `spec` leaves unset).
pub fn transform_utterance(
    corpus: &Corpus,
    idx: usize,
    spec: &StrategySpec,
    cfg: &ExperimentConfig,
    seed_offset: u64,
) -> Result<(FramePlan, ScoreMatrix), ExperimentError> {
    let plan = resolve(spec, cfg)?;
    let landmarks = annotate(
        &corpus.utterances[idx].alignment,
        &corpus.manners,
        &cfg.annotation,
    )
    .map_err(|e| e.to_string());
    plan_utterance(corpus, idx, &landmarks, &plan, seed_offset)
}

fn run_utterance(
    corpus: &Corpus,
    idx: usize,
    landmarks: &Result<LandmarkSet, String>,
    plan: &Resolved,
    seed_offset: u64,
    beam: Option<f64>,
) -> Result<UtteranceOutcome, ExperimentError> {
    let (fp, transformed) = plan_utterance(corpus, idx, landmarks, plan, seed_offset)?;
    let checksum = sha256_hex(&write_score_matrix(&transformed));
    let (_, hyp, report) = decode_utterance(corpus, idx, &transformed, beam)?;
    Ok(UtteranceOutcome {
        utterance_id: corpus.utterances[idx].alignment.utterance_id.clone(),
        mask: fp.mask,
        checksum,
        hyp,
        report,
    })
}

fn pooled_per(outcomes: &[UtteranceOutcome], members: Option<&[usize]>) -> f64 {
    match members {
        Some(idx) => merge_reports(idx.iter().map(|&i| &outcomes[i].report)).per(),
        None => merge_reports(outcomes.iter().map(|o| &o.report)).per(),
    }
}

/// Offset from the first value, so constant inputs come back unchanged.
fn mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Per-strategy numbers needed for the cross-row tests.
struct Computed {
    row: ReportRow,
    artifacts: StrategyArtifacts,
    /// Mean errors per utterance over repeats.
    utt_errors: Vec<f64>,
    /// Increment per fold (under CV) or per repeat.
    samples: Vec<f64>,
}

struct Context<'a> {
    corpus: &'a Corpus,
    cfg: &'a ExperimentConfig,
    landmarks: Vec<Result<LandmarkSet, String>>,
    baseline: StrategyArtifacts,
    baseline_per: f64,
    folds: Option<(FoldSpec, Vec<Vec<usize>>)>,
    fold_baseline: Vec<f64>,
    repeats: usize,
}

impl Context<'_> {
    fn compute(&self, spec: &StrategySpec) -> Result<Computed, ExperimentError> {
        let plan = resolve(spec, self.cfg)?;
        let n = self.corpus.utterances.len();
        let mut repeats = Vec::with_capacity(self.repeats);
        for r in 0..self.repeats {
            let outcomes = (0..n)
                .into_par_iter()
                .map(|i| {
                    let seed = utterance_seed(self.cfg.seed, r, i);
                    run_utterance(
                        self.corpus,
                        i,
                        &self.landmarks[i],
                        &plan,
                        seed,
                        self.cfg.beam,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            repeats.push(outcomes);
        }
        let frames = self.corpus.total_frames();
        let pers: Vec<f64> = repeats.iter().map(|o| pooled_per(o, None)).collect();
        let deltas = pers
            .iter()
            .map(|p| per_increment(self.baseline_per, *p))
            .collect::<Result<Vec<_>, _>>()?;
        let drops: Vec<usize> = repeats
            .iter()
            .map(|o| o.iter().map(|u| u.mask.drop_count()).sum())
            .collect();
        let drop_rate = mean(
            &drops
                .iter()
                .map(|d| 100.0 * *d as f64 / frames as f64)
                .collect::<Vec<_>>(),
        );
        let utt_errors = (0..n)
            .map(|i| {
                mean(
                    &repeats
                        .iter()
                        .map(|o| o[i].report.errors() as f64)
                        .collect::<Vec<_>>(),
                )
            })
            .collect();

        let samples = match &self.folds {
            Some((_, members)) => members
                .iter()
                .zip(&self.fold_baseline)
                .map(|(m, base)| {
                    let per = mean(
                        &repeats
                            .iter()
                            .map(|o| pooled_per(o, Some(m)))
                            .collect::<Vec<_>>(),
                    );
                    per_increment(*base, per)
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => deltas.clone(),
        };
        let summary = summarize_cv(&samples).ok();
        let row = ReportRow {
            strategy: spec.to_string(),
            drop_rate,
            per: mean(&pers),
            delta_per: mean(&deltas),
            mean: summary.as_ref().map(|s| s.mean),
            stdev: summary.as_ref().map(|s| s.stdev),
            p_wilcoxon: None,
            p_t: None,
            drop_count: drops[0],
            frames,
            error: None,
        };
        Ok(Computed {
            row,
            artifacts: StrategyArtifacts {
                strategy: spec.to_string(),
                repeats,
            },
            utt_errors,
            samples,
        })
    }
}

/// Runs the baseline and every configured strategy on `corpus`.
///
/// A failing strategy yields a row carrying its error; the run goes on.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?
            .install(|| run_inner(cfg, corpus)),
        None => run_inner(cfg, corpus),
    }
}

fn run_inner(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<ExperimentReport, ExperimentError> {
    let n = corpus.utterances.len();
    let baseline_outcomes = (0..n)
        .into_par_iter()
        .map(|i| {
            let u = &corpus.utterances[i];
            let (_, hyp, report) = decode_utterance(corpus, i, &u.scores, cfg.beam)?;
            Ok(UtteranceOutcome {
                utterance_id: u.alignment.utterance_id.clone(),
                mask: FrameMask::all_keep(u.scores.frames()),
                checksum: sha256_hex(&write_score_matrix(&u.scores)),
                hyp,
                report,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let base_per = pooled_per(&baseline_outcomes, None);
    if base_per == 0.0 && !cfg.strategies.is_empty() {
        log::warn!("baseline PER is 0; increments are undefined");
    }

    let folds = match cfg.cv_k {
        Some(k) => {
            let spec = cv_folds(&corpus.speakers(), k, cfg.cv_seed())?;
            let mut members = vec![Vec::new(); k];
            for (i, u) in corpus.utterances.iter().enumerate() {
                let f = spec
                    .fold_of(&u.alignment.speaker_id)
                    .expect("every speaker is assigned a fold");
                members[f].push(i);
            }
            Some((spec, members))
        }
        None => None,
    };
    let fold_baseline: Vec<f64> = folds
        .as_ref()
        .map(|(_, m)| {
            m.iter()
                .map(|idx| pooled_per(&baseline_outcomes, Some(idx)))
                .collect()
        })
        .unwrap_or_default();

    let landmarks: Vec<Result<LandmarkSet, String>> = corpus
        .utterances
        .par_iter()
        .map(|u| {
            annotate(&u.alignment, &corpus.manners, &cfg.annotation).map_err(|e| e.to_string())
        })
        .collect();

    let baseline_artifacts = StrategyArtifacts {
        strategy: "baseline".into(),
        repeats: vec![baseline_outcomes],
    };
    let ctx = Context {
        corpus,
        cfg,
        landmarks,
        baseline: baseline_artifacts,
        baseline_per: base_per,
        folds,
        fold_baseline,
        repeats: cfg.repeats.unwrap_or(1),
    };

    let mut specs: Vec<StrategySpec> = cfg.strategies.clone();
    if let Some(c) = &cfg.compare {
        if !specs.iter().any(|s| s.as_str() == c.as_str()) {
            specs.insert(0, c.clone());
        }
    }
    let computed: Vec<Result<Computed, ExperimentError>> =
        specs.iter().map(|s| ctx.compute(s)).collect();

    let base_utt_errors: Vec<f64> = ctx.baseline.repeats[0]
        .iter()
        .map(|o| o.report.errors() as f64)
        .collect();
    let base_samples = vec![0.0; ctx.folds.as_ref().map_or(ctx.repeats, |(_, m)| m.len())];
    let compare = cfg.compare.as_ref().and_then(|c| {
        specs
            .iter()
            .position(|s| s.as_str() == c.as_str())
            .and_then(|i| computed[i].as_ref().ok())
    });

    let mut rows = Vec::new();
    let mut artifacts = Vec::new();
    let mut stats = Vec::new();
    let mut increments = Vec::new();
    let occ = occurrences(
        (0..n)
            .map(|i| corpus.reference(i))
            .collect::<Vec<_>>()
            .iter()
            .map(Vec::as_slice),
    );
    let grouping: BTreeMap<String, String> = corpus
        .manners
        .iter()
        .map(|(p, m)| (p.to_string(), m.as_str().to_string()))
        .collect();
    let base_total = merge_reports(ctx.baseline.repeats[0].iter().map(|o| &o.report));

    for (spec, result) in specs.iter().zip(computed.iter()) {
        let c = match result {
            Ok(c) => c,
            Err(e) => {
                log::warn!("strategy {spec} failed: {e}");
                rows.push(ReportRow::failed(spec.as_str(), e));
                artifacts.push(None);
                continue;
            }
        };
        let (against_name, against_errors, against_samples) = match compare {
            Some(cmp) if cmp.row.strategy != c.row.strategy => (
                cmp.row.strategy.clone(),
                cmp.utt_errors.clone(),
                cmp.samples.clone(),
            ),
            _ => (
                "baseline".to_string(),
                base_utt_errors.clone(),
                base_samples.clone(),
            ),
        };
        let mut row = c.row.clone();
        let pairs: Vec<(f64, f64)> = c.utt_errors.iter().copied().zip(against_errors).collect();
        match wilcoxon_signed_rank_with(&pairs, cfg.wilcoxon) {
            Ok(w) => {
                row.p_wilcoxon = Some(w.p);
                stats.push(StatRow {
                    test: "wilcoxon",
                    strategy: row.strategy.clone(),
                    against: against_name.clone(),
                    statistic: w.statistic,
                    df: None,
                    p: w.p,
                });
            }
            Err(e) => log::info!("wilcoxon for {}: {e}", row.strategy),
        }
        if ctx.folds.is_some() || ctx.repeats > 1 {
            match welch_t(&c.samples, &against_samples) {
                Ok(t) => {
                    row.p_t = Some(t.p);
                    stats.push(StatRow {
                        test: "welch_t",
                        strategy: row.strategy.clone(),
                        against: against_name,
                        statistic: t.t,
                        df: Some(t.df),
                        p: t.p,
                    });
                }
                Err(e) => log::info!("t-test for {}: {e}", row.strategy),
            }
        }
        let sys_total = merge_reports(c.artifacts.repeats[0].iter().map(|o| &o.report));
        increments.push((
            row.strategy.clone(),
            normalized_error_increment(&base_total, &sys_total, &occ, &grouping),
        ));
        rows.push(row);
        artifacts.push(Some(c.artifacts.clone()));
    }

    let baseline = ReportRow {
        strategy: "baseline".into(),
        drop_rate: 0.0,
        per: base_per,
        delta_per: 0.0,
        mean: None,
        stdev: None,
        p_wilcoxon: None,
        p_t: None,
        drop_count: 0,
        frames: corpus.total_frames(),
        error: None,
    };
    Ok(ExperimentReport {
        seed: cfg.seed,
        model_tag: cfg.model_tag.clone(),
        settings: cfg.describe(),
        baseline,
        baseline_artifacts: ctx.baseline,
        rows,
        artifacts,
        stats,
        increments,
        folds: ctx.folds.map(|(f, _)| f),
        sweep: None,
    })
}

/// One row per value of `spec.param` applied to `spec.base`.
///
/// Overweight values set the landmark weight factor; drop-rate values are
/// fractions in `[0, 1]` passed as the pattern's `rate`. Repeats default
/// to 10.
pub fn sweep(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    spec: &SweepSpec,
) -> Result<ExperimentReport, ExperimentError> {
    if spec.values.is_empty() {
        return Err(ExperimentError::Config(
            "sweep needs at least one value".into(),
        ));
    }
    let key = match spec.param {
        SweepParam::Overweight => "overweight",
        SweepParam::DropRate => "rate",
    };
    let strategies = spec
        .values
        .iter()
        .map(|v| {
            spec.base
                .with_option(key, v)
                .map_err(|e| ExperimentError::Config(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sub = ExperimentConfig {
        strategies,
        compare: None,
        repeats: Some(cfg.repeats.unwrap_or(10)),
        sweep: Some(spec.clone()),
        ..cfg.clone()
    };
    let mut report = run_experiment(&sub, corpus)?;
    report.sweep = Some((spec.param, spec.values.clone()));
    Ok(report)
}
