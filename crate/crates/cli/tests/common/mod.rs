#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_landmark-frames");

pub fn cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("LANDMARK_FRAMES_JOBS")
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs every subcommand once under `root`, with the corpus, configs and
/// outputs all kept inside it.
pub fn run_all(root: &Path) {
    let corpus = root.join("corpus");
    let synth_cfg = root.join("synth.cfg");
    fs::write(&synth_cfg, "n_utterances=16\nn_speakers=8\n").unwrap();
    ok(&[
        "synth",
        "--config",
        s(&synth_cfg),
        "--seed",
        "7",
        "--out",
        s(&corpus),
    ]);

    let c = s(&corpus);
    ok(&[
        "annotate",
        "--corpus",
        c,
        "--out",
        s(&root.join("annotate")),
    ]);
    ok(&[
        "mask",
        "--corpus",
        c,
        "--strategy",
        "random:rate=0.3",
        "--seed",
        "5",
        "--out",
        s(&root.join("mask")),
    ]);
    ok(&[
        "transform",
        "--corpus",
        c,
        "--strategy",
        "regular:P=2,D=1",
        "--method",
        "fill_const",
        "--out",
        s(&root.join("transform")),
    ]);
    ok(&["decode", "--corpus", c, "--out", s(&root.join("decode"))]);
    ok(&[
        "decode",
        "--corpus",
        s(&root.join("transform")),
        "--out",
        s(&root.join("decode_t")),
    ]);
    let hyp = root.join("decode").join("decodes.txt");
    ok(&[
        "score",
        "--corpus",
        c,
        "--hyp",
        s(&hyp),
        "--out",
        s(&root.join("score")),
    ]);
    let hyp_t = root.join("decode_t").join("decodes.txt");
    ok(&[
        "score",
        "--corpus",
        c,
        "--hyp",
        s(&hyp_t),
        "--out",
        s(&root.join("score_t")),
    ]);
    ok(&[
        "stats",
        "--a",
        s(&root.join("score_t").join("per_utterance.csv")),
        "--b",
        s(&root.join("score").join("per_utterance.csv")),
        "--out",
        s(&root.join("stats")),
    ]);

    let run_cfg = root.join("run.cfg");
    fs::write(
        &run_cfg,
        format!(
            "corpus={c}\nstrategy=regular:P=2,D=1\nstrategy=landmark:keep\nstrategy=random:match=keep\nrepeats=2\ncv.k=4\n"
        ),
    )
    .unwrap();
    ok(&[
        "run",
        "--config",
        s(&run_cfg),
        "--seed",
        "3",
        "--jobs",
        "2",
        "--out",
        s(&root.join("run")),
    ]);
    ok(&[
        "sweep",
        "--config",
        s(&run_cfg),
        "--parameter",
        "overweight",
        "--values",
        "1,2",
        "--strategy",
        "identity",
        "--out",
        s(&root.join("sweep")),
    ]);
}

/// Every CSV under `root`, keyed by relative path.
pub fn csv_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
