//! Synthetic stories with a planted linear encoding model.
//!
//! Signal is planted through the same pool + FIR path the scorer decodes:
//! `C = fir_expand(pool(features)) · G`, rescaled so every voxel's clean
//! series has variance `s²`. Each subject then sees
//! `Y_j = C + σ_shared·η_shared + σ·η_j`.
//!
//! Optionally every sentence also carries `memory_tokens` hidden
//! zero-duration tokens at its end. They enter the planted signal but not
//! the released features, so a feature set that recovers them (see
//! [`generate_augmented`]) scores higher than the words alone.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::alignment::{build_design, FrameTimeline};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::scoring::BoldRun;
use crate::stimulus::{merge_augmentation, sentence_spans, AugmentationLevel, AugmentationRecord, Transcript, WordToken};

pub const SYNTH_STORY: &str = "synth";
pub const SYNTH_MODEL: &str = "synth";

/// Weights are written to the ground-truth JSON only up to this many entries.
pub const TRUTH_WEIGHT_LIMIT: usize = 100_000;

const WORD_DURATION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub words: usize,
    pub dims: usize,
    pub frames: usize,
    pub tr: f64,
    pub voxels: usize,
    pub subjects: usize,
    pub k_true: usize,
    pub signal_scale: f64,
    pub subject_noise: f64,
    pub shared_noise: f64,
    pub seed: u64,
    /// Hidden associative tokens appended to each sentence.
    pub memory_tokens: usize,
    pub sentence_words: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            words: 2000,
            dims: 16,
            frames: 1000,
            tr: 2.0,
            voxels: 200,
            subjects: 4,
            k_true: 5,
            signal_scale: 1.0,
            subject_noise: 1.0,
            shared_noise: 0.0,
            seed: 0,
            memory_tokens: 0,
            sentence_words: 12,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("words", self.words),
            ("dims", self.dims),
            ("frames", self.frames),
            ("voxels", self.voxels),
            ("subjects", self.subjects),
            ("k_true", self.k_true),
            ("sentence_words", self.sentence_words),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(Error::Invalid(format!("synth {name} must be at least 1")));
            }
        }
        if self.k_true > self.frames {
            return Err(Error::Invalid(format!("k_true {} exceeds {} frames", self.k_true, self.frames)));
        }
        if !(self.tr > 0.0 && self.tr.is_finite()) {
            return Err(Error::Invalid(format!("tr must be positive, got {}", self.tr)));
        }
        for (name, x) in [
            ("signal_scale", self.signal_scale),
            ("subject_noise", self.subject_noise),
            ("shared_noise", self.shared_noise),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be finite and non-negative, got {x}")));
            }
        }
        Ok(())
    }

    fn sentences(&self) -> usize {
        self.words.div_ceil(self.sentence_words)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub expected_score: f64,
    pub expected_ceiling: f64,
    /// `(k_true·dims) × voxels` weights, row-major, before rescaling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Per-voxel factor applied to bring the clean signal to variance `s²`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub voxel_scale: Option<Vec<f64>>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ground truth serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub transcript: Transcript,
    pub features: FeatureMatrix,
    pub runs: Vec<BoldRun>,
    pub truth: GroundTruth,
    /// Clean signal `C`, `frames × voxels`.
    pub clean: DMatrix<f64>,
    /// Hidden token vectors, `memory_tokens` rows per sentence in order.
    pub memory: DMatrix<f64>,
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // Row-major draw order, independent of storage layout.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

fn make_transcript(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Transcript> {
    let span = cfg.frames as f64 * cfg.tr;
    let mut onsets: Vec<f64> = (0..cfg.words).map(|_| rng.random::<f64>() * span).collect();
    onsets.sort_by(f64::total_cmp);
    let tokens = onsets
        .iter()
        .enumerate()
        .map(|(i, &onset)| {
            let next = onsets.get(i + 1).copied().unwrap_or(f64::INFINITY);
            WordToken {
                text: format!("w{i}"),
                onset,
                offset: (onset + WORD_DURATION).min(next),
                sentence_id: (i / cfg.sentence_words) as u32,
            }
        })
        .collect();
    Transcript::new(SYNTH_STORY, tokens)
}

/// Appends `extra` tokens to every sentence and the matching feature rows;
/// `row(sentence, j)` supplies the features of the `j`-th inserted token.
fn insert_per_sentence(
    t: &Transcript,
    base: &DMatrix<f64>,
    extra: usize,
    mut row: impl FnMut(usize, usize) -> Vec<f64>,
) -> Result<(Transcript, DMatrix<f64>)> {
    if extra == 0 {
        return Ok((t.clone(), base.clone()));
    }
    let spans = sentence_spans(t);
    let records: Vec<AugmentationRecord> = spans
        .keys()
        .map(|&sid| AugmentationRecord {
            sentence_id: sid,
            level: AugmentationLevel::Word,
            content: (0..extra).map(|j| format!("m{sid}_{j}")).collect::<Vec<_>>().join(" "),
        })
        .collect();
    let merged = merge_augmentation(t, &records)?;
    let d = base.ncols();
    let mut values = DMatrix::zeros(merged.len(), d);
    let mut out = 0;
    for (s, &(first, last)) in spans.values().enumerate() {
        for i in first..=last {
            values.row_mut(out).copy_from(&base.row(i));
            out += 1;
        }
        for j in 0..extra {
            let r = row(s, j);
            for (c, v) in r.into_iter().enumerate() {
                values[(out, c)] = v;
            }
            out += 1;
        }
    }
    debug_assert_eq!(out, merged.len());
    Ok((merged, values))
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let transcript = make_transcript(cfg, &mut rng)?;
    let words = normal_matrix(&mut rng, cfg.words, cfg.dims);
    let memory = normal_matrix(&mut rng, cfg.sentences() * cfg.memory_tokens, cfg.dims);

    let mut g = normal_matrix(&mut rng, cfg.k_true * cfg.dims, cfg.voxels);
    for mut col in g.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }

    let mt = cfg.memory_tokens;
    let (full_t, full_x) = insert_per_sentence(&transcript, &words, mt, |s, j| memory.row(s * mt + j).iter().copied().collect())?;
    let full = FeatureMatrix::new(1, SYNTH_MODEL, 0, full_x)?;
    let timeline = FrameTimeline::new(cfg.frames, cfg.tr, 0.0)?;
    let design = build_design(&full, &full_t, &timeline, cfg.k_true)?;
    let mut clean = &design.values * &g;
    let mut scale = vec![0.0; cfg.voxels];
    for (j, mut col) in clean.column_iter_mut().enumerate() {
        let sd = col.variance().sqrt();
        scale[j] = if sd > 0.0 { cfg.signal_scale / sd } else { 0.0 };
        col *= scale[j];
    }

    let shared = normal_matrix(&mut rng, cfg.frames, cfg.voxels);
    let mut runs = Vec::with_capacity(cfg.subjects);
    for j in 0..cfg.subjects {
        let own = normal_matrix(&mut rng, cfg.frames, cfg.voxels);
        let values = &clean + &shared * cfg.shared_noise + own * cfg.subject_noise;
        runs.push(BoldRun::new(format!("sub-{:02}", j + 1), SYNTH_STORY, timeline, values)?);
    }

    let small = g.len() <= TRUTH_WEIGHT_LIMIT;
    let truth = GroundTruth {
        config: cfg.clone(),
        expected_score: expected_score(cfg),
        expected_ceiling: expected_ceiling(cfg),
        weights: small.then(|| g.transpose().iter().copied().collect()),
        voxel_scale: small.then(|| scale.clone()),
    };
    Ok(SynthDataset {
        config: cfg.clone(),
        transcript,
        features: FeatureMatrix::new(1, SYNTH_MODEL, 0, words)?,
        runs,
        truth,
        clean,
        memory,
    })
}

/// Correlation between the clean signal and the subject-averaged series.
pub fn expected_score(cfg: &SynthConfig) -> f64 {
    let s2 = cfg.signal_scale.powi(2);
    let noise = cfg.shared_noise.powi(2) + cfg.subject_noise.powi(2) / cfg.subjects as f64;
    if s2 + noise == 0.0 {
        return 1.0;
    }
    cfg.signal_scale / (s2 + noise).sqrt()
}

/// Correlation between the means of two subject halves (sizes `⌊T/2⌋` and
/// `⌈T/2⌉`). Shared noise is common to both halves and counts as signal.
pub fn expected_ceiling(cfg: &SynthConfig) -> f64 {
    if cfg.subjects < 2 {
        return f64::NAN;
    }
    let q = cfg.signal_scale.powi(2) + cfg.shared_noise.powi(2);
    let s2 = cfg.subject_noise.powi(2);
    let ta = (cfg.subjects / 2) as f64;
    let tb = (cfg.subjects - cfg.subjects / 2) as f64;
    let denom = ((q + s2 / ta) * (q + s2 / tb)).sqrt();
    if denom == 0.0 {
        return 1.0;
    }
    q / denom
}

/// Augmented transcript and features with `extra_tokens` zero-duration
/// tokens appended to every sentence.
///
/// Informative tokens replay the hidden memory vectors (tokens beyond
/// `memory_tokens` are noise); uninformative tokens are all noise. With
/// `extra_tokens = 0` the base transcript and features come back unchanged.
pub fn generate_augmented(data: &SynthDataset, extra_tokens: usize, informative: bool) -> Result<(Transcript, FeatureMatrix)> {
    let cfg = &data.config;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(if informative { 1 } else { 2 });
    let mt = cfg.memory_tokens;
    let (t, x) = insert_per_sentence(&data.transcript, &data.features.values, extra_tokens, |s, j| {
        if informative && j < mt {
            data.memory.row(s * mt + j).iter().copied().collect()
        } else {
            (0..cfg.dims).map(|_| rng.sample(StandardNormal)).collect()
        }
    })?;
    let f = FeatureMatrix::new(data.features.layer_id, data.features.model_tag.clone(), data.features.context_length, x)?;
    Ok((t, f))
}

/// Independent standard-normal features for a transcript of `rows` words.
pub fn noise_features(rows: usize, dims: usize, layer_id: i32, seed: u64) -> Result<FeatureMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMatrix::new(layer_id, SYNTH_MODEL, 0, normal_matrix(&mut rng, rows, dims))
}
