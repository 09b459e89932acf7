use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::{io_err, write_atomic, ExperimentError};
use crate::corpus_io::{
    parse_alignment, read_score_matrix, write_alignment, write_score_matrix, BoundaryUnit,
    FrameTiming, Gender, MannerTable, PhoneAlignment, ScoreMatrix,
};
use crate::decoder::TransitionModel;
use crate::scoring::normalize_phones;
use crate::synth::SynthCorpus;

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub alignment: PhoneAlignment,
    pub scores: ScoreMatrix,
}

/// Alignments, score matrices and the model needed to decode them.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub transitions: TransitionModel,
    pub manners: MannerTable,
    /// Optional label folding applied to references and hypotheses.
    pub folding: Option<BTreeMap<String, String>>,
}

pub const UTTERANCES_FILE: &str = "utterances.txt";
pub const TRANSITIONS_FILE: &str = "transitions.txt";
pub const MANNERS_FILE: &str = "manners.txt";
pub const FOLDING_FILE: &str = "folding.txt";
pub const ALIGNMENT_DIR: &str = "alignments";
pub const SCORES_DIR: &str = "scores";

impl Corpus {
    pub fn new(
        utterances: Vec<Utterance>,
        transitions: TransitionModel,
        manners: MannerTable,
        folding: Option<BTreeMap<String, String>>,
    ) -> Result<Self, ExperimentError> {
        let corpus = Corpus {
            utterances,
            transitions,
            manners,
            folding,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn from_synth(synth: SynthCorpus) -> Self {
        let utterances = synth
            .alignments
            .into_iter()
            .zip(synth.scores)
            .map(|(alignment, scores)| Utterance { alignment, scores })
            .collect();
        Corpus {
            utterances,
            transitions: synth.transitions,
            manners: synth.manners,
            folding: None,
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.utterances.is_empty() {
            return Err(ExperimentError::Config("corpus has no utterances".into()));
        }
        for u in &self.utterances {
            if u.alignment.num_frames() != u.scores.frames() {
                return Err(ExperimentError::Config(format!(
                    "{}: alignment covers {} frames, score matrix has {}",
                    u.alignment.utterance_id,
                    u.alignment.num_frames(),
                    u.scores.frames()
                )));
            }
            if u.scores.senones() != self.transitions.senones() {
                return Err(ExperimentError::Config(format!(
                    "{}: {} senones, transition model has {}",
                    u.alignment.utterance_id,
                    u.scores.senones(),
                    self.transitions.senones()
                )));
            }
        }
        self.manners
            .check_covers(self.utterances.iter().map(|u| &u.alignment))?;
        Ok(())
    }

    pub fn silence(&self) -> BTreeSet<String> {
        self.manners.silence_labels()
    }

    /// Normalized phone sequence used for scoring.
    pub fn normalize<S: AsRef<str>>(&self, seq: &[S]) -> Vec<String> {
        normalize_phones(seq, self.folding.as_ref(), &self.silence())
    }

    pub fn reference(&self, idx: usize) -> Vec<String> {
        let phones: Vec<&str> = self.utterances[idx].alignment.phones().collect();
        self.normalize(&phones)
    }

    pub fn speakers(&self) -> Vec<(String, Gender)> {
        let mut seen = BTreeMap::new();
        for u in &self.utterances {
            seen.entry(u.alignment.speaker_id.clone())
                .or_insert(u.alignment.gender);
        }
        seen.into_iter().collect()
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(|u| u.scores.frames()).sum()
    }

    /// Writes the directory layout read by [`Corpus::load`].
    pub fn save(&self, dir: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(dir.join(ALIGNMENT_DIR)).map_err(|e| io_err(dir, e))?;
        fs::create_dir_all(dir.join(SCORES_DIR)).map_err(|e| io_err(dir, e))?;
        let mut list = String::new();
        for u in &self.utterances {
            let id = &u.alignment.utterance_id;
            let speaker = if u.alignment.speaker_id.is_empty() {
                "-"
            } else {
                &u.alignment.speaker_id
            };
            list.push_str(&format!("{id} {speaker} {}\n", u.alignment.gender));
            write_atomic(
                &dir.join(ALIGNMENT_DIR).join(format!("{id}.phn")),
                write_alignment(&u.alignment).as_bytes(),
            )?;
            write_atomic(
                &dir.join(SCORES_DIR).join(format!("{id}.llm")),
                &write_score_matrix(&u.scores),
            )?;
        }
        write_atomic(&dir.join(UTTERANCES_FILE), list.as_bytes())?;
        write_atomic(
            &dir.join(TRANSITIONS_FILE),
            self.transitions.to_text().as_bytes(),
        )?;
        write_atomic(&dir.join(MANNERS_FILE), self.manners.to_text().as_bytes())?;
        if let Some(folding) = &self.folding {
            let text: String = folding.iter().map(|(a, b)| format!("{a} {b}\n")).collect();
            write_atomic(&dir.join(FOLDING_FILE), text.as_bytes())?;
        }
        Ok(())
    }

    /// Reads `utterances.txt` (`utt speaker gender`), `alignments/<utt>.phn`,
    /// `scores/<utt>.llm`, `transitions.txt`, and optionally `manners.txt`
    /// (TIMIT defaults otherwise) and `folding.txt`.
    pub fn load(
        dir: &Path,
        unit: BoundaryUnit,
        timing: &FrameTiming,
    ) -> Result<Self, ExperimentError> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| io_err(p, e));
        let list = read(&dir.join(UTTERANCES_FILE))?;
        let transitions = TransitionModel::parse(&read(&dir.join(TRANSITIONS_FILE))?)?;
        let manners_path = dir.join(MANNERS_FILE);
        let manners = if manners_path.exists() {
            MannerTable::parse(&read(&manners_path)?)?
        } else {
            MannerTable::timit()
        };
        let folding_path = dir.join(FOLDING_FILE);
        let folding = if folding_path.exists() {
            Some(crate::scoring::parse_folding(&read(&folding_path)?)?)
        } else {
            None
        };
        let mut utterances = Vec::new();
        for line in list.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let (id, speaker, gender) = match fields[..] {
                [id] => (id, "-", Gender::Unknown),
                [id, spk] => (id, spk, Gender::Unknown),
                [id, spk, g] => (id, spk, g.parse()?),
                _ => {
                    return Err(ExperimentError::Config(format!(
                        "bad utterance line {line:?}"
                    )))
                }
            };
            let speaker = if speaker == "-" { "" } else { speaker };
            let alignment = parse_alignment(
                id,
                &read(&dir.join(ALIGNMENT_DIR).join(format!("{id}.phn")))?,
                timing,
                unit,
            )?
            .with_speaker(speaker, gender);
            let score_path = dir.join(SCORES_DIR).join(format!("{id}.llm"));
            let bytes = fs::read(&score_path).map_err(|e| io_err(&score_path, e))?;
            let scores = read_score_matrix(id, &bytes)?;
            utterances.push(Utterance { alignment, scores });
        }
        Corpus::new(utterances, transitions, manners, folding)
    }
}
