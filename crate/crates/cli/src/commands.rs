use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use landmark_frames::corpus_io::{write_mask, write_score_matrix, BoundaryUnit, FrameTiming};
use landmark_frames::experiment::{
    decode_utterance, emit_report, run_experiment, sha256_hex, sweep, transform_utterance,
    utterance_seed, write_atomic, Corpus, ExperimentConfig, ExperimentError, ReportFormats,
    SweepSpec,
};
use landmark_frames::landmark::{annotate, landmark_frames, write_landmarks, AnnotationConfig};
use landmark_frames::scoring::{
    align_edit, merge_reports, read_report_csv, write_confusion_csv, write_report_csv, PerReport,
};
use landmark_frames::stats::{significance_marker, welch_t, wilcoxon_signed_rank};
use landmark_frames::strategy::StrategySpec;
use landmark_frames::synth::{gen_corpus, SynthConfig};

use crate::{AnnotationArgs, Command, CorpusArgs, GlobalArgs};

pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Res<T> = Result<T, Failure>;

fn config(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn classify(e: ExperimentError) -> Failure {
    if e.is_config() {
        config(e)
    } else {
        runtime(e)
    }
}

fn out_dir(g: &GlobalArgs) -> Res<PathBuf> {
    g.out
        .clone()
        .ok_or_else(|| config(anyhow!("--out is required")))
}

fn load_corpus(c: &CorpusArgs) -> Res<Corpus> {
    let unit = if c.unit == "samples" {
        BoundaryUnit::Samples
    } else {
        BoundaryUnit::Frames
    };
    Corpus::load(&c.corpus, unit, &FrameTiming::default()).map_err(classify)
}

fn annotation(a: &AnnotationArgs) -> Res<AnnotationConfig> {
    Ok(AnnotationConfig {
        mode: a.mode.parse().map_err(config)?,
        widen_radius: a.radius,
        merge_mc: !a.no_merge_mc,
    })
}

fn put(path: &Path, bytes: &[u8]) -> Res<()> {
    write_atomic(path, bytes).map_err(runtime)
}

fn read_config(g: &GlobalArgs) -> Res<ExperimentConfig> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| config(anyhow!("--config is required")))?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config)?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(config)?;
    if let Some(seed) = g.seed {
        cfg.set_seed(seed);
    }
    if let Some(jobs) = g.jobs {
        cfg.jobs = Some(jobs);
    }
    if let Some(f) = &g.format {
        cfg.formats = f.parse().map_err(config)?;
    }
    if let Some(out) = &g.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate().map_err(config)?;
    Ok(cfg)
}

/// Per-strategy defaults for the single-step subcommands.
fn step_config(g: &GlobalArgs, a: &AnnotationArgs, method: Option<&str>) -> Res<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    cfg.annotation = annotation(a)?;
    cfg.widen_radius = a.radius;
    cfg.set_seed(g.seed.unwrap_or(0));
    if let Some(m) = method {
        cfg.method = m.parse().map_err(config)?;
    }
    Ok(cfg)
}

pub fn dispatch(g: &GlobalArgs, command: Command) -> Res<()> {
    if let Some(jobs) = g.jobs {
        if jobs == 0 {
            return Err(config(anyhow!("--jobs must be >= 1")));
        }
    }
    if let Some(f) = &g.format {
        f.parse::<ReportFormats>().map_err(config)?;
    }
    match command {
        Command::Synth => synth(g),
        Command::Annotate { corpus, annotation } => annotate_cmd(g, &corpus, &annotation),
        Command::Mask {
            corpus,
            annotation,
            strategy,
        } => mask_cmd(g, &corpus, &annotation, &strategy),
        Command::Transform {
            corpus,
            annotation,
            strategy,
            method,
        } => transform_cmd(g, &corpus, &annotation, &strategy, &method),
        Command::Decode { corpus, beam } => decode_cmd(g, &corpus, beam),
        Command::Score { corpus, hyp } => score_cmd(g, &corpus, &hyp),
        Command::Stats { a, b } => stats_cmd(g, &a, &b),
        Command::Run => run_cmd(g),
        Command::Sweep {
            parameter,
            values,
            strategy,
        } => sweep_cmd(g, parameter, values, strategy),
    }
}

fn synth(g: &GlobalArgs) -> Res<()> {
    let out = out_dir(g)?;
    let mut cfg = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(config)?;
            let stripped: String = text
                .lines()
                .map(|l| format!("{}\n", l.trim().trim_start_matches("synth.")))
                .collect();
            SynthConfig::parse(&stripped).map_err(config)?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    let corpus = Corpus::from_synth(gen_corpus(&cfg).map_err(config)?);
    corpus.save(&out).map_err(runtime)?;
    put(&out.join("synth.cfg"), cfg.to_text().as_bytes())?;
    log::info!(
        "wrote {} utterances to {}",
        corpus.utterances.len(),
        out.display()
    );
    Ok(())
}

fn annotate_cmd(g: &GlobalArgs, c: &CorpusArgs, a: &AnnotationArgs) -> Res<()> {
    let out = out_dir(g)?;
    let corpus = load_corpus(c)?;
    let ann = annotation(a)?;
    let mut csv = String::from("utterance_id,frames,landmark_frames,fraction\n");
    let (mut total, mut marked) = (0usize, 0usize);
    for u in &corpus.utterances {
        let lms = annotate(&u.alignment, &corpus.manners, &ann).map_err(runtime)?;
        let frames = u.scores.frames();
        let n = landmark_frames(&lms, a.radius, frames).len();
        total += frames;
        marked += n;
        let _ = writeln!(
            csv,
            "{},{frames},{n},{}",
            u.alignment.utterance_id,
            n as f64 / frames as f64
        );
        put(
            &out.join("landmarks")
                .join(format!("{}.lm", u.alignment.utterance_id)),
            write_landmarks(&lms).as_bytes(),
        )?;
    }
    let _ = writeln!(
        csv,
        "ALL,{total},{marked},{}",
        marked as f64 / total.max(1) as f64
    );
    put(&out.join("landmark_fraction.csv"), csv.as_bytes())?;
    println!(
        "landmark fraction {:.4}",
        marked as f64 / total.max(1) as f64
    );
    Ok(())
}

fn parse_strategy(s: &str) -> Res<StrategySpec> {
    s.parse().map_err(config)
}

fn mask_cmd(g: &GlobalArgs, c: &CorpusArgs, a: &AnnotationArgs, strategy: &str) -> Res<()> {
    let out = out_dir(g)?;
    let spec = parse_strategy(strategy)?;
    let cfg = step_config(g, a, None)?;
    let corpus = load_corpus(c)?;
    let mut csv = String::from("utterance_id,frames,dropped,drop_rate\n");
    let (mut total, mut dropped) = (0usize, 0usize);
    for (i, u) in corpus.utterances.iter().enumerate() {
        let (fp, _) = transform_utterance(&corpus, i, &spec, &cfg, utterance_seed(cfg.seed, 0, i))
            .map_err(classify)?;
        let id = &u.alignment.utterance_id;
        total += fp.mask.len();
        dropped += fp.mask.drop_count();
        let _ = writeln!(
            csv,
            "{id},{},{},{}",
            fp.mask.len(),
            fp.mask.drop_count(),
            fp.mask.drop_rate()
        );
        put(
            &out.join("masks").join(format!("{id}.mask")),
            write_mask(&fp.mask).as_bytes(),
        )?;
    }
    let _ = writeln!(
        csv,
        "ALL,{total},{dropped},{}",
        dropped as f64 / total.max(1) as f64
    );
    put(&out.join("drop_rates.csv"), csv.as_bytes())
}

fn transform_cmd(
    g: &GlobalArgs,
    c: &CorpusArgs,
    a: &AnnotationArgs,
    strategy: &str,
    method: &str,
) -> Res<()> {
    let out = out_dir(g)?;
    let spec = parse_strategy(strategy)?;
    let cfg = step_config(g, a, Some(method))?;
    let mut corpus = load_corpus(c)?;
    let mut checksums = String::from("utterance_id,sha256\n");
    for i in 0..corpus.utterances.len() {
        let (fp, scores) =
            transform_utterance(&corpus, i, &spec, &cfg, utterance_seed(cfg.seed, 0, i))
                .map_err(classify)?;
        let id = corpus.utterances[i].alignment.utterance_id.clone();
        let _ = writeln!(
            checksums,
            "{id},{}",
            sha256_hex(&write_score_matrix(&scores))
        );
        put(
            &out.join("masks").join(format!("{id}.mask")),
            write_mask(&fp.mask).as_bytes(),
        )?;
        corpus.utterances[i].scores = scores;
    }
    corpus.save(&out).map_err(runtime)?;
    put(&out.join("checksums.csv"), checksums.as_bytes())
}

fn decode_cmd(g: &GlobalArgs, c: &CorpusArgs, beam: Option<f64>) -> Res<()> {
    let out = out_dir(g)?;
    if beam.is_some_and(|b| b.is_nan() || b <= 0.0) {
        return Err(config(anyhow!("--beam must be > 0")));
    }
    let corpus = load_corpus(c)?;
    let mut decodes = String::new();
    let mut scores = String::from("utterance_id,frames,score\n");
    for (i, u) in corpus.utterances.iter().enumerate() {
        let (dec, _, _) = decode_utterance(&corpus, i, &u.scores, beam).map_err(runtime)?;
        let id = &u.alignment.utterance_id;
        let _ = writeln!(decodes, "{id} {}", dec.phones.join(" "));
        let _ = writeln!(scores, "{id},{},{}", u.scores.frames(), dec.score);
    }
    put(&out.join("decodes.txt"), decodes.as_bytes())?;
    put(&out.join("decode_scores.csv"), scores.as_bytes())
}

/// `utt phone phone ...` per line.
fn read_decodes(path: &Path) -> Res<BTreeMap<String, Vec<String>>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(runtime)?;
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut it = line.split_whitespace();
        let id = it.next().expect("non-blank line").to_string();
        out.insert(id, it.map(str::to_string).collect());
    }
    Ok(out)
}

fn score_cmd(g: &GlobalArgs, c: &CorpusArgs, hyp: &Path) -> Res<()> {
    let out = out_dir(g)?;
    let corpus = load_corpus(c)?;
    let decodes = read_decodes(hyp)?;
    let mut rows: Vec<(String, PerReport)> = Vec::new();
    for (i, u) in corpus.utterances.iter().enumerate() {
        let id = &u.alignment.utterance_id;
        let phones = decodes
            .get(id)
            .ok_or_else(|| runtime(anyhow!("no decode for utterance {id}")))?;
        rows.push((
            id.clone(),
            align_edit(&corpus.reference(i), &corpus.normalize(phones)),
        ));
    }
    let total = merge_reports(rows.iter().map(|(_, r)| r));
    put(
        &out.join("per_utterance.csv"),
        write_report_csv(&rows).as_bytes(),
    )?;
    put(
        &out.join("confusion.csv"),
        write_confusion_csv(&total.confusion).as_bytes(),
    )?;
    put(
        &out.join("summary.csv"),
        write_report_csv(&[("ALL".to_string(), total.clone())]).as_bytes(),
    )?;
    println!(
        "PER {:.2}% (N={}, ins={}, del={}, sub={})",
        total.per(),
        total.n_ref,
        total.ins,
        total.del,
        total.sub
    );
    Ok(())
}

fn stats_cmd(g: &GlobalArgs, a: &Path, b: &Path) -> Res<()> {
    let out = out_dir(g)?;
    let read = |p: &Path| -> Res<Vec<(String, PerReport)>> {
        let text = fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .map_err(runtime)?;
        read_report_csv(&text).map_err(runtime)
    };
    let (ra, rb) = (read(a)?, read(b)?);
    let rb: BTreeMap<String, PerReport> = rb.into_iter().collect();
    let mut pairs = Vec::new();
    let (mut pa, mut pb) = (Vec::new(), Vec::new());
    for (id, r) in &ra {
        let other = rb
            .get(id)
            .ok_or_else(|| runtime(anyhow!("utterance {id} missing from {}", b.display())))?;
        pairs.push((r.errors() as f64, other.errors() as f64));
        if r.n_ref > 0 && other.n_ref > 0 {
            pa.push(r.per());
            pb.push(other.per());
        }
    }
    let mut csv = String::from("test,statistic,df,p,sig_0.05,sig_0.001,marker\n");
    match wilcoxon_signed_rank(&pairs) {
        Ok(w) => {
            let _ = writeln!(
                csv,
                "wilcoxon,{},,{},{},{},{}",
                w.statistic,
                w.p,
                w.p < 0.05,
                w.p < 0.001,
                significance_marker(w.p)
            );
        }
        Err(e) => log::warn!("wilcoxon: {e}"),
    }
    match welch_t(&pa, &pb) {
        Ok(t) => {
            let _ = writeln!(
                csv,
                "welch_t,{},{},{},{},{},{}",
                t.t,
                t.df,
                t.p,
                t.p < 0.05,
                t.p < 0.001,
                significance_marker(t.p)
            );
        }
        Err(e) => log::warn!("welch t: {e}"),
    }
    put(&out.join("stats.csv"), csv.as_bytes())
}

fn print_rows(report: &landmark_frames::experiment::ExperimentReport) {
    println!("baseline PER {:.2}%", report.baseline.per);
    for r in &report.rows {
        match &r.error {
            Some(e) => println!("{}: error: {e}", r.strategy),
            None => println!(
                "{}: drop {:.1}% PER {:.2}% dPER {:+.2}%",
                r.strategy, r.drop_rate, r.per, r.delta_per
            ),
        }
    }
}

fn run_cmd(g: &GlobalArgs) -> Res<()> {
    let cfg = read_config(g)?;
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| config(anyhow!("no output directory: pass --out or set out=")))?;
    if cfg.strategies.is_empty() {
        log::warn!("no strategies configured; only the baseline is computed");
    }
    let corpus = cfg.load_corpus().map_err(classify)?;
    let report = run_experiment(&cfg, &corpus).map_err(classify)?;
    emit_report(&report, &out, cfg.formats).map_err(runtime)?;
    print_rows(&report);
    Ok(())
}

fn sweep_cmd(
    g: &GlobalArgs,
    parameter: Option<String>,
    values: Option<String>,
    strategy: Option<String>,
) -> Res<()> {
    let cfg = read_config(g)?;
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| config(anyhow!("no output directory: pass --out or set out=")))?;
    let mut spec = cfg.sweep.clone().unwrap_or(SweepSpec {
        param: landmark_frames::experiment::SweepParam::Overweight,
        values: Vec::new(),
        base: StrategySpec::identity(),
    });
    if let Some(p) = parameter {
        spec.param = p.parse().map_err(config)?;
    }
    if let Some(v) = values {
        spec.values = v
            .split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| {
                x.parse::<f64>()
                    .map_err(|_| config(anyhow!("bad sweep value {x:?}")))
            })
            .collect::<Res<Vec<_>>>()?;
    }
    if let Some(s) = strategy {
        spec.base = parse_strategy(&s)?;
    }
    let corpus = cfg.load_corpus().map_err(classify)?;
    let report = sweep(&cfg, &corpus, &spec).map_err(classify)?;
    emit_report(&report, &out, cfg.formats).map_err(runtime)?;
    print_rows(&report);
    Ok(())
}
