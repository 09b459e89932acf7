//! End-to-end acceptance checks. Prints one line per criterion and exits
//! nonzero if any of them fails.

mod common;
#[path = "../../core/tests/common/mod.rs"]
mod oracle;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use landmark_frames::corpus_io::{
    parse_alignment, BoundaryUnit, FrameTiming, MannerTable, ScoreMatrix,
};
use landmark_frames::decoder::{viterbi, DecodeError};
use landmark_frames::experiment::{
    run_experiment, transform_utterance, utterance_seed, Corpus, ExperimentConfig,
};
use landmark_frames::landmark::{annotate, landmark_frames, AnnotationConfig};
use landmark_frames::scoring::{align_edit, per_increment};
use landmark_frames::stats::{wilcoxon_signed_rank, wilcoxon_signed_rank_with, WilcoxonMethod};
use landmark_frames::strategy::{
    apply_replacement, mask_regular, temporal_means, FrameMask, Replacement,
};
use landmark_frames::synth::{gen_corpus, SynthConfig};
use rand::Rng;

type Check = Result<String, String>;
type CheckFn = Box<dyn Fn() -> Option<Check>>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.1?}, limit {limit:?}"))
}

fn config(synth: SynthConfig, strategies: &[&str]) -> ExperimentConfig {
    let seed = synth.seed;
    let mut cfg = ExperimentConfig::synthetic(
        synth,
        strategies.iter().map(|s| s.parse().unwrap()).collect(),
    );
    cfg.set_seed(seed);
    cfg
}

fn identity_pipeline() -> Check {
    let start = Instant::now();
    let cfg = config(
        SynthConfig {
            n_utterances: 100,
            ..Default::default()
        },
        &["identity:overweight=1.0"],
    );
    let corpus = cfg.load_corpus().map_err(|e| e.to_string())?;
    ensure(corpus.utterances.len() == 100, || {
        "expected 100 utterances".into()
    })?;
    let spec = cfg.strategies[0].clone();
    for (i, u) in corpus.utterances.iter().enumerate() {
        let (fp, m) = transform_utterance(&corpus, i, &spec, &cfg, utterance_seed(cfg.seed, 0, i))
            .map_err(|e| e.to_string())?;
        ensure(fp.mask.drop_count() == 0, || {
            format!("utterance {i} dropped frames")
        })?;
        let a = viterbi(&u.scores, &corpus.transitions, None, None).map_err(|e| e.to_string())?;
        let b =
            viterbi(&m, &corpus.transitions, Some(&fp.weights), None).map_err(|e| e.to_string())?;
        ensure(a == b && a.score.to_bits() == b.score.to_bits(), || {
            format!("utterance {i} decodes differently")
        })?;
    }
    let report = run_experiment(&cfg, &corpus).map_err(|e| e.to_string())?;
    let row = &report.rows[0];
    ensure(
        row.delta_per == 0.0 && row.per == report.baseline.per,
        || format!("delta {}", row.delta_per),
    )?;
    within(Duration::from_secs(10), start)?;
    Ok(format!(
        "100 utterances identical, delta PER {}, {:.2?}",
        row.delta_per,
        start.elapsed()
    ))
}

fn increment_cells() -> Check {
    let a = per_increment(23.8, 25.6).map_err(|e| e.to_string())?;
    let b = per_increment(23.8, 36.1).map_err(|e| e.to_string())?;
    ensure((a - 7.56).abs() <= 0.05 && (b - 51.7).abs() <= 0.05, || {
        format!("{a:.3} {b:.3}")
    })?;
    Ok(format!("23.8->25.6 = {a:.2}%, 23.8->36.1 = {b:.2}%"))
}

fn drop_accounting() -> Check {
    let corpus =
        Corpus::from_synth(gen_corpus(&SynthConfig::default()).map_err(|e| e.to_string())?);
    let total = corpus.total_frames();
    let mut rates = Vec::new();
    for (p, d, target) in [(2, 1, 50.0), (3, 1, 100.0 / 3.0), (3, 2, 200.0 / 3.0)] {
        let mut dropped = 0;
        for u in &corpus.utterances {
            let t = u.scores.frames();
            let n = mask_regular(t, p, d)
                .map_err(|e| e.to_string())?
                .drop_count();
            let expected = d * (t / p) + (t % p).min(d);
            ensure(n == expected, || {
                format!("P={p} D={d} T={t}: {n} drops, expected {expected}")
            })?;
            ensure(n.abs_diff(t * d / p) <= d, || {
                format!("P={p} D={d} T={t}: {n} drops")
            })?;
            dropped += n;
        }
        let rate = 100.0 * dropped as f64 / total as f64;
        ensure((rate - target).abs() < 1.0, || {
            format!("P={p} D={d}: {rate:.2}%")
        })?;
        rates.push(format!("({p},{d}) {rate:.1}%"));
    }
    let cfg = config(
        SynthConfig::default(),
        &["landmark:keep", "random:match=keep"],
    );
    let report = run_experiment(&cfg, &corpus).map_err(|e| e.to_string())?;
    let keep = report.artifacts[0].as_ref().ok_or("landmark-keep failed")?;
    let random = report.artifacts[1]
        .as_ref()
        .ok_or("matched random failed")?;
    for (x, y) in keep.repeats[0].iter().zip(&random.repeats[0]) {
        ensure(x.mask.drop_count() == y.mask.drop_count(), || {
            format!("{} drop counts differ", x.utterance_id)
        })?;
    }
    Ok(format!(
        "{}, landmark-keep and matched random agree on {} utterances",
        rates.join(", "),
        keep.repeats[0].len()
    ))
}

fn replacement_semantics() -> Check {
    let start = Instant::now();
    let mut rng = oracle::rng(404);
    for case in 0..1000 {
        let (t, s) = (rng.random_range(1..=60), rng.random_range(1..=6));
        let m = oracle::random_matrix(&mut rng, t, s);
        let mask = FrameMask::from_dropped((0..t).map(|_| rng.random_bool(0.5)).collect());
        let means: Vec<f64> = (0..s)
            .map(|j| (0..t).map(|r| m.get(r, j)).sum::<f64>() / t as f64)
            .collect();
        let fill0 =
            apply_replacement(&m, &mask, Replacement::Fill0, None).map_err(|e| e.to_string())?;
        let fillc = apply_replacement(&m, &mask, Replacement::FillConst, None)
            .map_err(|e| e.to_string())?;
        let copy =
            apply_replacement(&m, &mask, Replacement::Copy, None).map_err(|e| e.to_string())?;
        let mut last = None;
        for r in 0..t {
            if !mask.is_dropped(r) {
                last = Some(r);
                for out in [&fill0, &fillc, &copy] {
                    ensure(out.row(r) == m.row(r), || {
                        format!("case {case}: kept row {r} changed")
                    })?;
                }
                continue;
            }
            ensure(fill0.row(r).iter().all(|v| *v == 0.0), || {
                format!("case {case}: Fill_0 row {r}")
            })?;
            ensure(
                (0..s).all(|j| (fillc.get(r, j) - means[j]).abs() <= 1e-12),
                || format!("case {case}: Fill_const row {r}"),
            )?;
            let want = match last {
                Some(k) => m.row(k).to_vec(),
                None => temporal_means(&m),
            };
            ensure(copy.row(r) == want.as_slice(), || {
                format!("case {case}: Copy row {r}")
            })?;
        }

        let p = rng.random_range(2..=5);
        if t >= 2 {
            let reg = mask_regular(t, p, 1).map_err(|e| e.to_string())?;
            let up = apply_replacement(&m, &reg, Replacement::Upsample, None)
                .map_err(|e| e.to_string())?;
            for r in (0..t).filter(|r| !reg.is_dropped(*r)) {
                ensure(up.row(r) == m.row(r), || {
                    format!("case {case}: Upsample changed kept row {r}")
                })?;
            }
            let c = rng.random_range(-30.0..0.0);
            let flat = ScoreMatrix::new("c", t, s, vec![c; t * s]).map_err(|e| e.to_string())?;
            let up = apply_replacement(&flat, &reg, Replacement::Upsample, None)
                .map_err(|e| e.to_string())?;
            ensure(up.values().iter().all(|v| (v - c).abs() <= 1e-9), || {
                format!("case {case}: DC gain")
            })?;
        }
    }
    within(Duration::from_secs(30), start)?;
    Ok(format!("1000 random matrices, {:.2?}", start.elapsed()))
}

fn viterbi_exactness() -> Check {
    let start = Instant::now();
    let mut rng = oracle::rng(505);
    let mut ties = 0;
    for case in 0..500 {
        let exact = case % 2 == 1;
        let c = oracle::viterbi_case(&mut rng, 4, 8, exact);
        let got = viterbi(&c.scores, &c.tm, c.weights.as_ref(), None);
        match (oracle::brute_viterbi(&c), got) {
            (None, Err(DecodeError::NoViablePath)) => {}
            (Some((path, score)), Ok(dec)) => {
                ensure(dec.states == path, || {
                    format!("case {case}: path {:?} vs {path:?}", dec.states)
                })?;
                ensure((dec.score - score).abs() <= 1e-9, || {
                    format!("case {case}: score {} vs {score}", dec.score)
                })?;
                ties += usize::from(exact);
            }
            (want, got) => return Err(format!("case {case}: oracle {want:?}, decoder {got:?}")),
        }
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!(
        "500 instances ({ties} on the exact tie grid), {:.2?}",
        start.elapsed()
    ))
}

fn edit_oracle() -> Check {
    let start = Instant::now();
    let mut rng = oracle::rng(606);
    let alphabet = ["aa", "iy", "s", "t"];
    for case in 0..1000 {
        let mut word = || -> Vec<&str> {
            let n = rng.random_range(0..=6);
            (0..n)
                .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                .collect()
        };
        let (a, b) = (word(), word());
        let rep = align_edit(&a, &b);
        let (dist, _) = oracle::brute_edit(&a, &b);
        ensure(rep.errors() == dist, || {
            format!("case {case}: {a:?} vs {b:?}: {} vs {dist}", rep.errors())
        })?;
    }
    within(Duration::from_secs(30), start)?;
    Ok(format!("1000 pairs, {:.2?}", start.elapsed()))
}

fn wilcoxon_exactness() -> Check {
    let mut rng = oracle::rng(707);
    for case in 0..200 {
        let n = case % 10 + 1;
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut mags: Vec<f64> = d.iter().map(|x: &f64| x.abs()).collect();
        mags.sort_by(f64::total_cmp);
        ensure(
            mags.windows(2).all(|w| w[0] < w[1]) && mags[0] > 0.0,
            || format!("case {case} has ties"),
        )?;
        let pairs: Vec<(f64, f64)> = d.iter().map(|x| (*x, 0.0)).collect();
        let got =
            wilcoxon_signed_rank_with(&pairs, WilcoxonMethod::Exact).map_err(|e| e.to_string())?;
        let want = oracle::wilcoxon_enumeration(&d);
        ensure((got.p - want).abs() < 1e-12, || {
            format!("case {case}: {} vs {want}", got.p)
        })?;
    }
    let worked: Vec<(f64, f64)> = (1..=5).map(|x| (x as f64, 0.0)).collect();
    let p = wilcoxon_signed_rank(&worked).map_err(|e| e.to_string())?.p;
    ensure(p == 0.0625, || format!("worked case p = {p}"))?;
    Ok(format!("200 datasets, n = 1..10; d=(1..5) gives p = {p}"))
}

fn qualitative() -> Check {
    let base = SynthConfig::default();
    let seeds: Vec<u64> = (1..=10).collect();
    let start = Instant::now();
    let (sigma, tuned) = landmark_frames::experiment::tune_noise_sigma(
        &base,
        20.0,
        &[0.6, 0.65, 0.7, 0.72, 0.75, 0.8],
        &seeds,
    )
    .map_err(|e| e.to_string())?;
    let strategies = [
        "regular:P=2,D=1,method=copy",
        "regular:P=2,D=1,method=fill_0",
        "landmark:keep",
        "random:match=keep",
    ];
    let mut sums = [0.0; 4];
    let mut drop = 0.0;
    let mut baseline = 0.0;
    for &seed in &seeds {
        let cfg = config(
            SynthConfig {
                noise_sigma: sigma,
                seed,
                ..base.clone()
            },
            &strategies,
        );
        let corpus = cfg.load_corpus().map_err(|e| e.to_string())?;
        let report = run_experiment(&cfg, &corpus).map_err(|e| e.to_string())?;
        baseline += report.baseline.per;
        for (k, row) in report.rows.iter().enumerate() {
            if let Some(e) = &row.error {
                return Err(format!("{}: {e}", row.strategy));
            }
            sums[k] += row.delta_per;
        }
        drop += report.rows[2].drop_rate;
    }
    let n = seeds.len() as f64;
    let [copy, fill0, keep, random] = sums.map(|s| s / n);
    within(Duration::from_secs(300), start)?;
    ensure((15.0..=25.0).contains(&(baseline / n)), || {
        format!("baseline PER {:.1}%", baseline / n)
    })?;
    let detail = format!(
        "sigma {sigma} (tuned PER {tuned:.1}%); Copy {copy:.1}% vs Fill_0 {fill0:.1}%; \
         landmark-keep {keep:.1}% vs matched random {random:.1}% at {:.1}% drop; {:.1?}",
        drop / n,
        start.elapsed()
    );
    ensure(copy < fill0 && keep < random, || detail.clone())?;
    Ok(detail)
}

fn phn_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            phn_files(&p, out)?;
        } else if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("phn")) {
            out.push(p);
        }
    }
    Ok(())
}

/// `None` when no alignments are configured.
fn timit_fraction() -> Option<Check> {
    let root = PathBuf::from(std::env::var_os("LANDMARK_FRAMES_TIMIT_DIR")?);
    Some((|| {
        let test = ["TEST", "test"]
            .iter()
            .map(|d| root.join(d))
            .find(|p| p.is_dir())
            .unwrap_or(root.clone());
        let mut files = Vec::new();
        phn_files(&test, &mut files).map_err(|e| format!("{}: {e}", test.display()))?;
        // SA sentences are shared by every speaker and not part of the test split
        files.retain(|p| {
            !p.file_name()
                .unwrap()
                .to_string_lossy()
                .to_ascii_lowercase()
                .starts_with("sa")
        });
        files.sort();
        ensure(!files.is_empty(), || {
            format!("no .phn files under {}", test.display())
        })?;
        let (timing, table, cfg) = (
            FrameTiming::default(),
            MannerTable::timit(),
            AnnotationConfig::default(),
        );
        let (mut marked, mut frames) = (0usize, 0usize);
        for f in &files {
            let text = fs::read_to_string(f).map_err(|e| format!("{}: {e}", f.display()))?;
            let al = parse_alignment("u", &text, &timing, BoundaryUnit::Samples)
                .map_err(|e| format!("{}: {e}", f.display()))?;
            let lms = annotate(&al, &table, &cfg).map_err(|e| format!("{}: {e}", f.display()))?;
            marked += landmark_frames(&lms, 0, al.num_frames()).len();
            frames += al.num_frames();
        }
        let frac = 100.0 * marked as f64 / frames as f64;
        ensure((18.5..=20.5).contains(&frac), || {
            format!("{frac:.2}% over {} utterances", files.len())
        })?;
        Ok(format!("{frac:.2}% over {} utterances", files.len()))
    })())
}

fn determinism() -> Check {
    let (a, b) = (
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    );
    common::run_all(a.path());
    common::run_all(b.path());
    let (x, y) = (common::csv_files(a.path()), common::csv_files(b.path()));
    ensure(x.keys().eq(y.keys()), || "different CSV sets".into())?;
    for (k, v) in &x {
        ensure(v == &y[k], || format!("{} differs", k.display()))?;
    }
    Ok(format!(
        "{} CSV files identical across reruns of all subcommands",
        x.len()
    ))
}

fn main() {
    let checks: Vec<(&str, CheckFn)> = vec![
        ("identity pipeline", Box::new(|| Some(identity_pipeline()))),
        (
            "PER increment arithmetic",
            Box::new(|| Some(increment_cells())),
        ),
        ("drop-rate accounting", Box::new(|| Some(drop_accounting()))),
        (
            "replacement semantics",
            Box::new(|| Some(replacement_semantics())),
        ),
        ("Viterbi exactness", Box::new(|| Some(viterbi_exactness()))),
        ("edit-distance oracle", Box::new(|| Some(edit_oracle()))),
        (
            "Wilcoxon exactness",
            Box::new(|| Some(wilcoxon_exactness())),
        ),
        (
            "synthetic qualitative trends",
            Box::new(|| Some(qualitative())),
        ),
        ("TIMIT landmark fraction", Box::new(timit_fraction)),
        ("determinism", Box::new(|| Some(determinism()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Some(Ok(detail)) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Some(Err(why)) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {why}", i + 1);
            }
            None => println!(
                "criterion {:>2} SKIP {name}: LANDMARK_FRAMES_TIMIT_DIR not set",
                i + 1
            ),
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
