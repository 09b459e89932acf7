use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use super::corpus::Corpus;
use super::ExperimentError;
use crate::corpus_io::{BoundaryUnit, FrameTiming};
use crate::landmark::{AnnotationConfig, AnnotationMode};
use crate::stats::WilcoxonMethod;
use crate::strategy::{Replacement, StrategySpec};
use crate::synth::{gen_corpus, SynthConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Synth(SynthConfig),
    Dir {
        path: PathBuf,
        unit: BoundaryUnit,
        timing: FrameTiming,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportFormats {
    pub svg: bool,
}

impl Default for ReportFormats {
    fn default() -> Self {
        ReportFormats { svg: true }
    }
}

impl FromStr for ReportFormats {
    type Err = ExperimentError;

    /// Comma list of `csv` and `svg`; CSV is always written.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = ReportFormats { svg: false };
        for f in s.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            match f {
                "csv" => {}
                "svg" => out.svg = true,
                other => {
                    return Err(ExperimentError::Config(format!(
                        "unknown report format {other:?}"
                    )))
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Overweight,
    DropRate,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Overweight => "overweight",
            SweepParam::DropRate => "drop_rate",
        }
    }
}

impl FromStr for SweepParam {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "overweight" => Ok(SweepParam::Overweight),
            "drop_rate" | "rate" => Ok(SweepParam::DropRate),
            other => Err(ExperimentError::Config(format!(
                "unknown sweep parameter {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Strategy the swept value is applied to.
    pub base: StrategySpec,
}

/// Everything a run needs besides the corpus itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: CorpusSource,
    pub strategies: Vec<StrategySpec>,
    /// Strategy every other row is tested against; the baseline if unset.
    pub compare: Option<StrategySpec>,
    /// Defaults for strategies that do not set their own.
    pub method: Replacement,
    pub overweight: f64,
    pub widen_radius: usize,
    pub annotation: AnnotationConfig,
    pub cv_k: Option<usize>,
    pub cv_seed: Option<u64>,
    /// Repetitions with fresh random draws; rows report the mean.
    pub repeats: Option<usize>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub formats: ReportFormats,
    pub beam: Option<f64>,
    pub model_tag: String,
    pub jobs: Option<usize>,
    pub sweep: Option<SweepSpec>,
    pub wilcoxon: WilcoxonMethod,
    pub(super) synth_seed: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: CorpusSource::Synth(SynthConfig::default()),
            strategies: Vec::new(),
            compare: None,
            method: Replacement::Copy,
            overweight: 1.0,
            widen_radius: 0,
            annotation: AnnotationConfig::default(),
            cv_k: None,
            cv_seed: None,
            repeats: None,
            seed: 0,
            out_dir: None,
            formats: ReportFormats::default(),
            beam: None,
            model_tag: String::new(),
            jobs: None,
            sweep: None,
            wilcoxon: WilcoxonMethod::Auto,
            synth_seed: None,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ExperimentError> {
    v.parse()
        .map_err(|_| cfg_err(format!("bad value {v:?} for {key}")))
}

fn boolean(key: &str, v: &str) -> Result<bool, ExperimentError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(format!("bad boolean {v:?} for {key}"))),
    }
}

fn strategy(v: &str) -> Result<StrategySpec, ExperimentError> {
    v.parse()
        .map_err(|e| cfg_err(format!("strategy {v:?}: {e}")))
}

impl ExperimentConfig {
    /// Synthetic corpus with default parameters and the given strategies.
    pub fn synthetic(synth: SynthConfig, strategies: Vec<StrategySpec>) -> Self {
        let synth_seed = Some(synth.seed);
        ExperimentConfig {
            source: CorpusSource::Synth(synth),
            strategies,
            synth_seed,
            ..Default::default()
        }
    }

    /// Parses `key=value` lines; `#` starts a comment, `strategy` repeats.
    ///
    /// Exactly one corpus source is required: `corpus=DIR` or any `synth.*`
    /// key (`synth=default` selects the default generator).
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg = ExperimentConfig::default();
        let mut synth = SynthConfig::default();
        let (mut has_synth, mut dir, mut unit, mut timing) =
            (false, None, BoundaryUnit::Frames, FrameTiming::default());
        let (mut rate, mut length, mut shift) =
            (timing.sample_rate, timing.frame_length, timing.frame_shift);
        let (mut sweep_param, mut sweep_values, mut sweep_base) = (None, None, None);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| {
                    cfg_err(format!(
                        "line {}: expected key=value, got {line:?}",
                        lineno + 1
                    ))
                })?;
            if let Some(sk) = k.strip_prefix("synth.") {
                has_synth = true;
                synth.set(sk, v)?;
                if sk == "seed" {
                    cfg.synth_seed = Some(synth.seed);
                }
                continue;
            }
            match k {
                "synth" if v == "default" => has_synth = true,
                "corpus" => dir = Some(PathBuf::from(v)),
                "corpus.unit" => {
                    unit = match v {
                        "frames" => BoundaryUnit::Frames,
                        "samples" => BoundaryUnit::Samples,
                        other => {
                            return Err(cfg_err(format!(
                                "corpus.unit must be frames or samples, got {other:?}"
                            )))
                        }
                    }
                }
                "corpus.sample_rate" => rate = num(k, v)?,
                "corpus.frame_length" => length = num(k, v)?,
                "corpus.frame_shift" => shift = num(k, v)?,
                "strategy" => cfg.strategies.push(strategy(v)?),
                "compare" => cfg.compare = Some(strategy(v)?),
                "method" => cfg.method = v.parse().map_err(|e| cfg_err(format!("{e}")))?,
                "overweight" => {
                    let f: f64 = num(k, v)?;
                    if !(f.is_finite() && f >= 0.0) {
                        return Err(cfg_err(format!("overweight must be >= 0, got {f}")));
                    }
                    cfg.overweight = f;
                }
                "widen_radius" | "r" => cfg.widen_radius = num(k, v)?,
                "annotation" => {
                    cfg.annotation.mode = v
                        .parse::<AnnotationMode>()
                        .map_err(|e| cfg_err(e.to_string()))?
                }
                "merge_mc" => cfg.annotation.merge_mc = boolean(k, v)?,
                "cv.k" => cfg.cv_k = Some(num(k, v)?),
                "cv.seed" => cfg.cv_seed = Some(num(k, v)?),
                "repeats" => cfg.repeats = Some(num(k, v)?),
                "seed" => cfg.seed = num(k, v)?,
                "out" => cfg.out_dir = Some(PathBuf::from(v)),
                "format" => cfg.formats = v.parse()?,
                "beam" => cfg.beam = Some(num(k, v)?),
                "model_tag" => cfg.model_tag = v.to_string(),
                "jobs" => cfg.jobs = Some(num(k, v)?),
                "wilcoxon" => {
                    cfg.wilcoxon = match v {
                        "auto" => WilcoxonMethod::Auto,
                        "exact" => WilcoxonMethod::Exact,
                        "normal" => WilcoxonMethod::Normal,
                        other => return Err(cfg_err(format!("unknown wilcoxon method {other:?}"))),
                    }
                }
                "sweep.parameter" => sweep_param = Some(v.parse::<SweepParam>()?),
                "sweep.values" => {
                    sweep_values = Some(
                        v.split(',')
                            .map(str::trim)
                            .filter(|x| !x.is_empty())
                            .map(|x| num::<f64>(k, x))
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                }
                "sweep.strategy" => sweep_base = Some(strategy(v)?),
                other => {
                    return Err(cfg_err(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.source = match (has_synth, dir) {
            (true, None) => {
                synth.validate()?;
                CorpusSource::Synth(synth)
            }
            (false, Some(path)) => {
                timing = FrameTiming::new(rate, length, shift)?;
                CorpusSource::Dir { path, unit, timing }
            }
            (true, Some(_)) => {
                return Err(cfg_err(
                    "both corpus= and synth.* given; exactly one source allowed",
                ))
            }
            (false, None) => {
                return Err(cfg_err("no corpus source: set corpus=DIR or synth.* keys"))
            }
        };
        match (sweep_param, sweep_values, sweep_base) {
            (None, None, None) => {}
            (Some(param), Some(values), Some(base)) => {
                cfg.sweep = Some(SweepSpec {
                    param,
                    values,
                    base,
                })
            }
            _ => {
                return Err(cfg_err(
                    "sweep needs sweep.parameter, sweep.values and sweep.strategy",
                ))
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.cv_k.is_some_and(|k| k < 2) {
            return Err(cfg_err("cv.k must be >= 2"));
        }
        if self.repeats == Some(0) {
            return Err(cfg_err("repeats must be >= 1"));
        }
        if self.jobs == Some(0) {
            return Err(cfg_err("jobs must be >= 1"));
        }
        if self.beam.is_some_and(|b| b.is_nan() || b <= 0.0) {
            return Err(cfg_err("beam must be > 0"));
        }
        Ok(())
    }

    /// Replaces the top-level seed; derived seeds follow unless pinned.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn cv_seed(&self) -> u64 {
        self.cv_seed.unwrap_or(self.seed)
    }

    /// Generator settings with the effective seed.
    pub fn synth_config(&self) -> Option<SynthConfig> {
        match &self.source {
            CorpusSource::Synth(s) => Some(SynthConfig {
                seed: self.synth_seed.unwrap_or(self.seed),
                ..s.clone()
            }),
            CorpusSource::Dir { .. } => None,
        }
    }

    pub fn load_corpus(&self) -> Result<Corpus, ExperimentError> {
        match &self.source {
            CorpusSource::Synth(_) => {
                let synth = self.synth_config().expect("synthetic source");
                Ok(Corpus::from_synth(gen_corpus(&synth)?))
            }
            CorpusSource::Dir { path, unit, timing } => Corpus::load(path, *unit, timing),
        }
    }

    /// Settings echoed into the run manifest.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "model_tag={}", self.model_tag);
        match &self.source {
            CorpusSource::Synth(_) => {
                for line in self
                    .synth_config()
                    .expect("synthetic source")
                    .to_text()
                    .lines()
                {
                    let _ = writeln!(s, "synth.{line}");
                }
            }
            CorpusSource::Dir { path, unit, timing } => {
                let _ = writeln!(s, "corpus={}", path.display());
                let unit = match unit {
                    BoundaryUnit::Frames => "frames",
                    BoundaryUnit::Samples => "samples",
                };
                let _ = writeln!(s, "corpus.unit={unit}");
                let _ = writeln!(s, "corpus.sample_rate={}", timing.sample_rate);
                let _ = writeln!(s, "corpus.frame_length={}", timing.frame_length);
                let _ = writeln!(s, "corpus.frame_shift={}", timing.frame_shift);
            }
        }
        for st in &self.strategies {
            let _ = writeln!(s, "strategy={st}");
        }
        if let Some(c) = &self.compare {
            let _ = writeln!(s, "compare={c}");
        }
        let _ = writeln!(s, "method={}", self.method);
        let _ = writeln!(s, "overweight={}", self.overweight);
        let _ = writeln!(s, "widen_radius={}", self.widen_radius);
        let mode = match self.annotation.mode {
            AnnotationMode::Boundary => "boundary",
            AnnotationMode::Offset => "offset",
        };
        let _ = writeln!(s, "annotation={mode}");
        let _ = writeln!(s, "merge_mc={}", self.annotation.merge_mc);
        if let Some(k) = self.cv_k {
            let _ = writeln!(s, "cv.k={k}");
            let _ = writeln!(s, "cv.seed={}", self.cv_seed());
        }
        if let Some(r) = self.repeats {
            let _ = writeln!(s, "repeats={r}");
        }
        if let Some(b) = self.beam {
            let _ = writeln!(s, "beam={b}");
        }
        if let Some(sw) = &self.sweep {
            let values: Vec<String> = sw.values.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "sweep.parameter={}", sw.param.as_str());
            let _ = writeln!(s, "sweep.values={}", values.join(","));
            let _ = writeln!(s, "sweep.strategy={}", sw.base);
        }
        s
    }
}
