use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{ReportFormats, SweepParam};
use super::run::{ExperimentReport, ReportRow, StrategyArtifacts};
use super::{write_atomic, ExperimentError};
use crate::corpus_io::write_mask;
use crate::scoring::{merge_reports, write_confusion_csv, write_report_csv};
use crate::stats::significance_marker;

pub const REPORT_COLUMNS: [&str; 8] = [
    "strategy",
    "drop_rate",
    "per",
    "delta_per",
    "mean",
    "stdev",
    "p_wilcoxon",
    "p_t",
];

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn row_fields(r: &ReportRow) -> Vec<String> {
    vec![
        r.strategy.clone(),
        num(r.drop_rate),
        num(r.per),
        num(r.delta_per),
        opt(r.mean),
        opt(r.stdev),
        opt(r.p_wilcoxon),
        opt(r.p_t),
    ]
}

/// Main report table. Runs list the baseline first; sweeps list one row
/// per swept value.
pub fn format_report_csv(report: &ExperimentReport) -> Vec<u8> {
    let baseline = report.sweep.is_none().then_some(&report.baseline);
    csv_bytes(
        &REPORT_COLUMNS,
        baseline.into_iter().chain(&report.rows).map(row_fields),
    )
}

/// Parses a report table back; empty cells become `None` (NaN for the
/// always-present columns).
pub fn read_report_rows(text: &str) -> Result<Vec<ReportRow>, ExperimentError> {
    let bad = |m: String| ExperimentError::Config(format!("report csv: {m}"));
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != REPORT_COLUMNS {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let cell = |s: &str| -> Result<Option<f64>, ExperimentError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| bad(format!("bad number {s:?}")))
        }
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        out.push(ReportRow {
            strategy: rec[0].to_string(),
            drop_rate: cell(&rec[1])?.unwrap_or(f64::NAN),
            per: cell(&rec[2])?.unwrap_or(f64::NAN),
            delta_per: cell(&rec[3])?.unwrap_or(f64::NAN),
            mean: cell(&rec[4])?,
            stdev: cell(&rec[5])?,
            p_wilcoxon: cell(&rec[6])?,
            p_t: cell(&rec[7])?,
            drop_count: 0,
            frames: 0,
            error: None,
        });
    }
    Ok(out)
}

fn slug(index: usize, strategy: &str) -> String {
    let clean: String = strategy
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:02}_{clean}")
}

fn write_artifacts(
    dir: &Path,
    art: &StrategyArtifacts,
    masks: bool,
) -> Result<(), ExperimentError> {
    for (r, outcomes) in art.repeats.iter().enumerate() {
        let rep = dir.join(format!("rep{r:02}"));
        let mut checksums = String::from("utterance_id,sha256\n");
        let mut decodes = String::new();
        for o in outcomes {
            let _ = writeln!(checksums, "{},{}", o.utterance_id, o.checksum);
            let _ = writeln!(decodes, "{} {}", o.utterance_id, o.hyp.join(" "));
            if masks {
                write_atomic(
                    &rep.join("masks").join(format!("{}.mask", o.utterance_id)),
                    write_mask(&o.mask).as_bytes(),
                )?;
            }
        }
        let per_utt: Vec<(String, _)> = outcomes
            .iter()
            .map(|o| (o.utterance_id.clone(), o.report.clone()))
            .collect();
        let total = merge_reports(outcomes.iter().map(|o| &o.report));
        write_atomic(&rep.join("checksums.csv"), checksums.as_bytes())?;
        write_atomic(&rep.join("decodes.txt"), decodes.as_bytes())?;
        write_atomic(
            &rep.join("per_utterance.csv"),
            write_report_csv(&per_utt).as_bytes(),
        )?;
        write_atomic(
            &rep.join("confusion.csv"),
            write_confusion_csv(&total.confusion).as_bytes(),
        )?;
    }
    Ok(())
}

/// Writes the report table, manifest, statistics, per-strategy artifacts
/// and (if requested) an SVG chart under `out`. Returns the files written at
/// the top level.
pub fn emit_report(
    report: &ExperimentReport,
    out: &Path,
    formats: ReportFormats,
) -> Result<Vec<PathBuf>, ExperimentError> {
    if report.rows.is_empty() && report.sweep.is_some() {
        return Err(ExperimentError::Config("no rows to report".into()));
    }
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<(), ExperimentError> {
        let p = out.join(name);
        write_atomic(&p, bytes)?;
        written.push(p);
        Ok(())
    };

    put("report.csv", &format_report_csv(report))?;

    let mut manifest = String::new();
    let _ = writeln!(
        manifest,
        "# seed={} model_tag={}",
        report.seed, report.model_tag
    );
    let _ = writeln!(manifest, "baseline_per={}", report.baseline.per);
    let _ = writeln!(manifest, "baseline_frames={}", report.baseline.frames);
    manifest.push_str(&report.settings);
    put("manifest.txt", manifest.as_bytes())?;

    let errors = report.rows.iter().filter_map(|r| {
        r.error
            .as_ref()
            .map(|e| vec![r.strategy.clone(), e.clone()])
    });
    put("errors.csv", &csv_bytes(&["strategy", "error"], errors))?;

    let stats = report.stats.iter().map(|s| {
        vec![
            s.test.to_string(),
            s.strategy.clone(),
            s.against.clone(),
            num(s.statistic),
            opt(s.df),
            num(s.p),
            (s.p < 0.05).to_string(),
            (s.p < 0.001).to_string(),
            significance_marker(s.p).to_string(),
        ]
    });
    put(
        "stats.csv",
        &csv_bytes(
            &[
                "test",
                "strategy",
                "against",
                "statistic",
                "df",
                "p",
                "sig_0.05",
                "sig_0.001",
                "marker",
            ],
            stats,
        ),
    )?;

    let increments = report.increments.iter().flat_map(|(strategy, map)| {
        map.iter().map(move |((group, et), v)| {
            vec![strategy.clone(), group.clone(), et.to_string(), num(*v)]
        })
    });
    put(
        "error_increment.csv",
        &csv_bytes(
            &["strategy", "manner", "error_type", "increment"],
            increments,
        ),
    )?;

    if let Some(folds) = &report.folds {
        let rows = folds.gender.iter().map(|(spk, g)| {
            vec![
                spk.clone(),
                g.to_string(),
                folds
                    .fold_of(spk)
                    .map(|f| f.to_string())
                    .unwrap_or_default(),
            ]
        });
        put(
            "folds.csv",
            &csv_bytes(&["speaker", "gender", "fold"], rows),
        )?;
    }

    write_artifacts(&out.join("baseline"), &report.baseline_artifacts, false)?;
    for (i, art) in report.artifacts.iter().enumerate() {
        if let Some(art) = art {
            write_artifacts(
                &out.join("strategies").join(slug(i, &art.strategy)),
                art,
                true,
            )?;
        }
    }

    if formats.svg {
        let ok: Vec<&ReportRow> = report.rows.iter().filter(|r| r.error.is_none()).collect();
        let svg = match &report.sweep {
            Some((SweepParam::Overweight, values)) => {
                let pts: Vec<(f64, f64)> = values
                    .iter()
                    .zip(&report.rows)
                    .filter(|(_, r)| r.error.is_none())
                    .map(|(v, r)| (*v, r.per))
                    .collect();
                render_svg(
                    "PER vs. overweight factor",
                    "overweight factor",
                    "PER (%)",
                    &pts,
                )
            }
            Some((SweepParam::DropRate, _)) => {
                let pts: Vec<(f64, f64)> = ok.iter().map(|r| (r.drop_rate, r.delta_per)).collect();
                render_svg(
                    "PER increment vs. drop rate",
                    "drop rate (%)",
                    "PER increment (%)",
                    &pts,
                )
            }
            None => render_bars("PER increment by strategy", "PER increment (%)", &ok),
        };
        put(
            if report.sweep.is_some() {
                "sweep.svg"
            } else {
                "report.svg"
            },
            svg.as_bytes(),
        )?;
    }
    Ok(written)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 60.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn frame(s: &mut String, title: &str, xlabel: &str, ylabel: &str, ylo: f64, yhi: f64) {
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        W / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        "<line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/><line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>",
        H - M,
        W - M,
        H - M,
        H - M
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        H - 15.0,
        esc(xlabel)
    );
    let _ = writeln!(
        s,
        "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        esc(ylabel)
    );
    for k in 0..=4 {
        let v = ylo + (yhi - ylo) * k as f64 / 4.0;
        let y = H - M - (H - 2.0 * M) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.2}</text>",
            M - 5.0,
            y + 4.0,
            v
        );
    }
}

/// Line chart with point markers; no external resources.
pub fn render_svg(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
    let (xlo, xhi) = range(points.iter().map(|p| p.0));
    let (ylo, yhi) = range(points.iter().map(|p| p.1));
    let px = |x: f64| M + (x - xlo) / (xhi - xlo) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - ylo) / (yhi - ylo) * (H - 2.0 * M);
    let mut s = String::new();
    frame(&mut s, title, xlabel, ylabel, ylo, yhi);
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    let _ = writeln!(
        s,
        "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>",
        coords.join(" ")
    );
    for &(x, y) in points {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#1f77b4\"/>",
            px(x),
            py(y)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{x}</text>",
            px(x),
            H - M + 16.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn render_bars(title: &str, ylabel: &str, rows: &[&ReportRow]) -> String {
    let (ylo, yhi) = range(rows.iter().map(|r| r.delta_per).chain([0.0]));
    let py = |y: f64| H - M - (y - ylo) / (yhi - ylo) * (H - 2.0 * M);
    let mut s = String::new();
    frame(&mut s, title, "strategy", ylabel, ylo, yhi);
    let slot = (W - 2.0 * M) / rows.len().max(1) as f64;
    for (i, r) in rows.iter().enumerate() {
        let x = M + slot * i as f64 + slot * 0.15;
        let (top, bottom) = (py(r.delta_per.max(0.0)), py(r.delta_per.min(0.0)));
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#ff7f0e\"><title>{}</title></rect>",
            slot * 0.7,
            (bottom - top).max(0.5),
            esc(&r.strategy)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"9\">{}</text>",
            x + slot * 0.35,
            H - M + 14.0,
            esc(&r.strategy)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{run_experiment, ExperimentConfig};
    use crate::synth::SynthConfig;

    #[test]
    fn csv_header_and_round_trip() {
        let cfg = ExperimentConfig::synthetic(
            SynthConfig {
                n_utterances: 6,
                ..Default::default()
            },
            vec!["regular:P=3,D=1".parse().unwrap()],
        );
        let corpus = cfg.load_corpus().unwrap();
        let report = run_experiment(&cfg, &corpus).unwrap();
        let text = String::from_utf8(format_report_csv(&report)).unwrap();
        assert_eq!(text.lines().next().unwrap(), REPORT_COLUMNS.join(","));
        let rows = read_report_rows(&text).unwrap();
        assert_eq!(rows[1].strategy, "regular:P=3,D=1");
        assert_eq!(rows[1].per, report.rows[0].per);
    }

    #[test]
    fn svg_is_self_contained() {
        let svg = render_svg("t", "x", "y", &[(1.0, 2.0), (4.0, 3.5)]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("http://") || svg.matches("http://").count() == 1);
    }
}
