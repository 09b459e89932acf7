//! Synthetic corpora: left-to-right phone HMMs with spherical Gaussian
//! emissions, scored by a deliberately perturbed copy of the generating model.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus_io::{
    Gender, Manner, MannerTable, PhoneAlignment, ScoreMatrix, Segment, NEG_INF,
};
use crate::decoder::TransitionModel;
use crate::strategy::mix_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

/// Manners cycled over the phone inventory so every landmark type occurs.
const MANNER_CYCLE: [Manner; 5] = [
    Manner::Vowel,
    Manner::Fricative,
    Manner::Stop,
    Manner::Nasal,
    Manner::Glide,
];

/// Minimum dwell per HMM state, in frames.
pub const MIN_STATE_FRAMES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_phones: usize,
    pub states_per_phone: usize,
    pub feature_dim: usize,
    /// Per-dimension standard deviation of the difference between two
    /// senone means (observation noise has unit variance).
    pub mean_separation: f64,
    /// Standard deviation of the perturbation applied to the scoring means.
    pub noise_sigma: f64,
    /// Mean phones per utterance.
    pub utterance_length: usize,
    pub n_utterances: usize,
    pub n_speakers: usize,
    /// Mean extra frames per state beyond [`MIN_STATE_FRAMES`].
    pub extra_state_frames: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_phones: 20,
            states_per_phone: 3,
            feature_dim: 4,
            mean_separation: 2.0,
            noise_sigma: 0.72,
            utterance_length: 12,
            n_utterances: 100,
            n_speakers: 20,
            extra_state_frames: 1.0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let counts = [
            ("n_phones", self.n_phones),
            ("states_per_phone", self.states_per_phone),
            ("feature_dim", self.feature_dim),
            ("utterance_length", self.utterance_length),
            ("n_utterances", self.n_utterances),
            ("n_speakers", self.n_speakers),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v < 1) {
            return Err(SynthError::InvalidConfig(format!("{name} must be >= 1")));
        }
        if self.n_phones < 2 {
            return Err(SynthError::InvalidConfig(
                "n_phones must be >= 2 for a bigram without repeats".into(),
            ));
        }
        for (name, v) in [
            ("mean_separation", self.mean_separation),
            ("noise_sigma", self.noise_sigma),
            ("extra_state_frames", self.extra_state_frames),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SynthError> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, SynthError> {
            v.parse()
                .map_err(|_| SynthError::InvalidConfig(format!("bad value {v:?} for {key}")))
        }
        match key {
            "n_phones" => self.n_phones = num(key, value)?,
            "states_per_phone" => self.states_per_phone = num(key, value)?,
            "feature_dim" => self.feature_dim = num(key, value)?,
            "mean_separation" => self.mean_separation = num(key, value)?,
            "noise_sigma" => self.noise_sigma = num(key, value)?,
            "utterance_length" => self.utterance_length = num(key, value)?,
            "n_utterances" => self.n_utterances = num(key, value)?,
            "n_speakers" => self.n_speakers = num(key, value)?,
            "extra_state_frames" => self.extra_state_frames = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            other => return Err(SynthError::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut cfg = SynthConfig::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                SynthError::InvalidConfig(format!("expected key=value, got {line:?}"))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        format!(
            "n_phones={}\nstates_per_phone={}\nfeature_dim={}\nmean_separation={}\nnoise_sigma={}\n\
             utterance_length={}\nn_utterances={}\nn_speakers={}\nextra_state_frames={}\nseed={}\n",
            self.n_phones,
            self.states_per_phone,
            self.feature_dim,
            self.mean_separation,
            self.noise_sigma,
            self.utterance_length,
            self.n_utterances,
            self.n_speakers,
            self.extra_state_frames,
            self.seed
        )
    }

    pub fn senones(&self) -> usize {
        self.n_phones * self.states_per_phone
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub alignments: Vec<PhoneAlignment>,
    pub scores: Vec<ScoreMatrix>,
    /// Generating senone sequence of every utterance.
    pub states: Vec<Vec<usize>>,
    pub transitions: TransitionModel,
    pub manners: MannerTable,
}

fn phone_label(i: usize) -> String {
    let prefix = match MANNER_CYCLE[i % MANNER_CYCLE.len()] {
        Manner::Vowel => 'v',
        Manner::Fricative => 'f',
        Manner::Stop => 's',
        Manner::Nasal => 'n',
        _ => 'g',
    };
    format!("{prefix}{i:02}")
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

struct Model {
    bigram: Vec<Vec<f64>>,
    true_means: Vec<Vec<f64>>,
    scoring_means: Vec<Vec<f64>>,
}

/// Generates a corpus; the output depends only on `cfg`.
///
/// Phones follow a seeded bigram without self-transitions. Each phone is
/// `states_per_phone` left-to-right states, each dwelling
/// `MIN_STATE_FRAMES + Geometric` frames. Observations are
/// `mean(s_t) + N(0, I)`; the score matrix holds Gaussian log-densities under
/// means perturbed by `N(0, noise_sigma^2 I)`.
pub fn gen_corpus(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let (n_phones, dim) = (cfg.n_phones, cfg.feature_dim);
    let senones = cfg.senones();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let bigram: Vec<Vec<f64>> = (0..n_phones)
        .map(|i| {
            let w: Vec<f64> = (0..n_phones)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        rng.random_range(0.1..1.0)
                    }
                })
                .collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total).collect()
        })
        .collect();
    let mean_scale = cfg.mean_separation / std::f64::consts::SQRT_2;
    let true_means: Vec<Vec<f64>> = (0..senones)
        .map(|_| normal_vec(&mut rng, dim, mean_scale))
        .collect();
    let scoring_means: Vec<Vec<f64>> = true_means
        .iter()
        .map(|m| {
            let noise = normal_vec(&mut rng, dim, cfg.noise_sigma);
            m.iter().zip(noise).map(|(a, b)| a + b).collect()
        })
        .collect();
    let model = Model {
        bigram,
        true_means,
        scoring_means,
    };

    let transitions = build_transitions(cfg, &model.bigram);
    let mut manners = MannerTable::default();
    for i in 0..n_phones {
        manners.insert(phone_label(i), MANNER_CYCLE[i % MANNER_CYCLE.len()]);
    }

    let utterances: Vec<(PhoneAlignment, ScoreMatrix, Vec<usize>)> = (0..cfg.n_utterances)
        .into_par_iter()
        .map(|idx| gen_utterance(cfg, &model, idx))
        .collect();
    let mut corpus = SynthCorpus {
        alignments: Vec::with_capacity(cfg.n_utterances),
        scores: Vec::with_capacity(cfg.n_utterances),
        states: Vec::with_capacity(cfg.n_utterances),
        transitions,
        manners,
    };
    for (a, s, st) in utterances {
        corpus.alignments.push(a);
        corpus.scores.push(s);
        corpus.states.push(st);
    }
    Ok(corpus)
}

fn mean_state_frames(cfg: &SynthConfig) -> f64 {
    MIN_STATE_FRAMES as f64 + cfg.extra_state_frames
}

fn build_transitions(cfg: &SynthConfig, bigram: &[Vec<f64>]) -> TransitionModel {
    let (n_phones, spp) = (cfg.n_phones, cfg.states_per_phone);
    let senones = n_phones * spp;
    let stay = 1.0 - 1.0 / mean_state_frames(cfg);
    let mut trans = vec![NEG_INF; senones * senones];
    for p in 0..n_phones {
        for k in 0..spp {
            let s = p * spp + k;
            trans[s * senones + s] = stay.ln();
            if k + 1 < spp {
                trans[s * senones + s + 1] = (1.0 - stay).ln();
            } else {
                for (q, &b) in bigram[p].iter().enumerate() {
                    if b > 0.0 {
                        trans[s * senones + q * spp] = ((1.0 - stay) * b).ln();
                    }
                }
            }
        }
    }
    let mut init = vec![NEG_INF; senones];
    for p in 0..n_phones {
        init[p * spp] = -(n_phones as f64).ln();
    }
    let labels = (0..senones).map(|s| phone_label(s / spp)).collect();
    TransitionModel::new(init, trans, labels)
        .expect("synthetic transition rows are normalized by construction")
}

fn gen_utterance(
    cfg: &SynthConfig,
    model: &Model,
    idx: usize,
) -> (PhoneAlignment, ScoreMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, idx as u64 + 1));
    let (spp, dim) = (cfg.states_per_phone, cfg.feature_dim);
    let lo = cfg.utterance_length.div_ceil(2).max(1);
    let hi = (cfg.utterance_length * 3 / 2).max(lo);
    let n = rng.random_range(lo..=hi);
    // geometric number of extra frames with the configured mean
    let extra = Geometric::new(1.0 / (1.0 + cfg.extra_state_frames)).expect("valid probability");

    let uniform = vec![1.0 / cfg.n_phones as f64; cfg.n_phones];
    let mut phone = sample_index(&mut rng, &uniform);
    let mut segments = Vec::with_capacity(n);
    let mut states = Vec::new();
    for i in 0..n {
        if i > 0 {
            phone = sample_index(&mut rng, &model.bigram[phone]);
        }
        let start = states.len();
        for k in 0..spp {
            let dwell = MIN_STATE_FRAMES + extra.sample(&mut rng) as usize;
            states.extend(std::iter::repeat_n(phone * spp + k, dwell));
        }
        segments.push(Segment::new(phone_label(phone), start, states.len()));
    }

    let senones = cfg.senones();
    let log_norm = -0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln();
    let mut values = Vec::with_capacity(states.len() * senones);
    for &s in &states {
        let obs: Vec<f64> = model.true_means[s]
            .iter()
            .map(|m| m + rng.sample::<f64, _>(StandardNormal))
            .collect();
        for mean in &model.scoring_means {
            let d2: f64 = obs.iter().zip(mean).map(|(o, m)| (o - m) * (o - m)).sum();
            values.push(log_norm - 0.5 * d2);
        }
    }

    let utt = format!("utt{idx:05}");
    let spk = idx % cfg.n_speakers;
    let gender = if spk.is_multiple_of(2) {
        Gender::F
    } else {
        Gender::M
    };
    let alignment = PhoneAlignment::new(utt.clone(), segments)
        .expect("generated segments are contiguous")
        .with_speaker(format!("spk{spk:03}"), gender);
    let scores =
        ScoreMatrix::new(utt, states.len(), senones, values).expect("finite log-densities");
    (alignment, scores, states)
}

/// Phone labels and manners of the generated inventory.
pub fn phone_inventory(cfg: &SynthConfig) -> BTreeMap<String, Manner> {
    (0..cfg.n_phones)
        .map(|i| (phone_label(i), MANNER_CYCLE[i % MANNER_CYCLE.len()]))
        .collect()
}
