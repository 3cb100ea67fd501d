//! The `brainscore` command line.

mod config;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::features::{read_features, validate_pair, write_features, FeatureMatrix};
use crate::roi::{self, load_atlas, roi_ci, roi_mean, roi_table_csv, Atlas, Hemisphere, STUDY_LABELS};
use crate::scoring::{
    self, average_subjects, brain_score, memory_score, parse_sidecar, read_bold, read_score_csv, subject_scores,
    tuning_score, write_bold, BoldRun, ScoreMap,
};
use crate::stimulus::{merge_augmentation, parse_annotations, parse_transcript, write_transcript, Transcript};
use crate::synth::{self, SynthConfig};

pub use config::{parse_grid, RunConfig, DEFAULT_LAGS};

#[derive(Debug, Parser)]
#[command(name = "brainscore", version, about = "Voxelwise encoding models for language-model activations")]
pub struct Cli {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Run configuration. Flags override values from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// key = value config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// FIR lags
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Comma-separated penalties, or lo:hi:count log10 exponents
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub penalty_grid: Option<String>,
    #[arg(long, global = true)]
    pub outer_folds_pooled: Option<usize>,
    #[arg(long, global = true)]
    pub outer_folds_subject: Option<usize>,
    #[arg(long, global = true)]
    pub inner_folds: Option<usize>,
    /// Tuning-score mask threshold on |base|
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub n_ceiling_splits: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiffMode {
    Memory,
    Tuning,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross-validated brain score of one feature file
    Score {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Directory of *.bold runs for one story
        #[arg(long)]
        bold_dir: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Also score each subject separately
        #[arg(long)]
        per_subject: bool,
    },
    /// Split-half noise ceiling
    Ceiling {
        #[arg(long)]
        bold_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Memory (a - b) or tuning ((a - b) / b) score between two maps
    Diff {
        /// Augmented or fine-tuned map
        #[arg(long)]
        a: PathBuf,
        /// Base map
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum)]
        mode: DiffMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-region means (with intervals when several maps are given)
    Roi {
        #[arg(long = "map", required = true, num_args = 1..)]
        maps: Vec<PathBuf>,
        #[arg(long)]
        atlas: PathBuf,
        /// One label per line (default: the nine study regions)
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Output CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Brain score of every layer, averaged per hemisphere
    Layers {
        #[arg(long)]
        transcript: PathBuf,
        /// Glob matching one feature file per layer
        #[arg(long)]
        features_glob: String,
        #[arg(long)]
        bold_dir: PathBuf,
        #[arg(long)]
        atlas: PathBuf,
        /// Output CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset
    Synth {
        #[command(flatten)]
        params: SynthArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge associative-memory annotations into a transcript
    Augment {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub words: usize,
    #[arg(long, default_value_t = 16)]
    pub dims: usize,
    #[arg(long, default_value_t = 1000)]
    pub frames: usize,
    #[arg(long, default_value_t = 2.0)]
    pub tr: f64,
    #[arg(long, default_value_t = 200)]
    pub voxels: usize,
    #[arg(long, default_value_t = 4)]
    pub subjects: usize,
    #[arg(long, default_value_t = 5)]
    pub k_true: usize,
    #[arg(long, default_value_t = 1.0)]
    pub signal: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub shared_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub memory_tokens: usize,
    #[arg(long, default_value_t = 12)]
    pub sentence_words: usize,
    /// Extra pure-noise layers, written as layer-02.feat onward
    #[arg(long, default_value_t = 0)]
    pub noise_layers: usize,
    /// Tokens per sentence in the augmented feature sets (0 = none)
    #[arg(long, default_value_t = 0)]
    pub augment: usize,
}

impl SynthArgs {
    fn config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            words: self.words,
            dims: self.dims,
            frames: self.frames,
            tr: self.tr,
            voxels: self.voxels,
            subjects: self.subjects,
            k_true: self.k_true,
            signal_scale: self.signal,
            subject_noise: self.noise,
            shared_noise: self.shared_noise,
            seed,
            memory_tokens: self.memory_tokens,
            sentence_words: self.sentence_words,
        }
    }
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = String::from_utf8(read(path)?).map_err(|e| Error::parse(0, e))?;
            cfg.apply_file(&text)?;
        }
        let flags: [(&str, Option<String>); 9] = [
            ("k", self.k.map(|v| v.to_string())),
            ("penalty_grid", self.penalty_grid.clone()),
            ("outer_folds_pooled", self.outer_folds_pooled.map(|v| v.to_string())),
            ("outer_folds_subject", self.outer_folds_subject.map(|v| v.to_string())),
            ("inner_folds", self.inner_folds.map(|v| v.to_string())),
            ("eps", self.eps.map(|v| v.to_string())),
            ("n_ceiling_splits", self.n_ceiling_splits.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("workers", self.workers.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path.display(), e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display(), e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display(), e))
}

/// Every `*.bold` file in `dir`, in file-name order.
pub fn load_runs(dir: &Path) -> Result<Vec<BoldRun>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir.display(), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir.display(), e))?.path();
        if path.extension().is_some_and(|x| x == "bold") {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::Invalid(format!("{}: no .bold files", dir.display())));
    }
    paths.sort();
    paths
        .iter()
        .map(|p| read_bold(&read(p)?).map_err(|e| Error::Invalid(format!("{}: {e}", p.display()))))
        .collect()
}

fn load_transcript(path: &Path, story_id: &str) -> Result<Transcript> {
    parse_transcript(&read(path)?, story_id).map_err(|e| with_path(path, e))
}

fn load_features(path: &Path) -> Result<FeatureMatrix> {
    read_features(&read(path)?).map_err(|e| with_path(path, e))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(m),
        Error::Io { .. } => e,
        other => Error::Invalid(format!("{}: {other}", path.display())),
    }
}

/// Reads a score CSV and, when present, its `.json` sidecar.
pub fn load_map(path: &Path) -> Result<ScoreMap> {
    let text = String::from_utf8(read(path)?).map_err(|e| Error::parse(0, e))?;
    let side_path = path.with_extension("json");
    let sidecar = if side_path.exists() {
        let raw = String::from_utf8(read(&side_path)?).map_err(|e| Error::parse(0, e))?;
        Some(parse_sidecar(&raw).map_err(|e| with_path(&side_path, e))?)
    } else {
        None
    };
    read_score_csv(&text, sidecar.as_ref()).map_err(|e| with_path(path, e))
}

fn write_map(dir: &Path, name: &str, map: &ScoreMap, cfg: &RunConfig) -> Result<()> {
    write(&dir.join(format!("{name}.csv")), map.to_csv())?;
    write(&dir.join(format!("{name}.json")), map.sidecar(&cfg.echo()))
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn warn_default_lags(cfg: &RunConfig) {
    if cfg.k.is_none() {
        eprintln!("warning: k not set; using {DEFAULT_LAGS} lags");
    }
}

/// Mean of defined scores over all atlas voxels of one hemisphere.
pub fn hemisphere_mean(map: &ScoreMap, atlas: &Atlas, hemi: Hemisphere) -> Option<f64> {
    let vals: Vec<f64> = (0..map.len())
        .filter(|&v| atlas.region(v).is_some_and(|(h, _)| h == hemi))
        .filter_map(|v| map.values[v])
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Synthetic atlas: even voxels left, odd right, cycling through the study labels.
pub fn synth_atlas(voxels: usize) -> Atlas {
    let mut atlas = Atlas::new();
    for v in 0..voxels {
        let hemi = if v % 2 == 0 { Hemisphere::L } else { Hemisphere::R };
        let label = STUDY_LABELS[(v / 2) % STUDY_LABELS.len()];
        atlas.insert(v, Some((hemi, label.to_string()))).expect("unique voxels");
    }
    atlas
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.run.resolve()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &cfg))
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Score { transcript, features, bold_dir, out, per_subject } => {
            warn_default_lags(cfg);
            let runs = load_runs(&bold_dir)?;
            let t = load_transcript(&transcript, &runs[0].story_id)?;
            let f = load_features(&features)?;
            validate_pair(&f, &t)?;
            let sc = cfg.score_config();
            let pooled = brain_score(&f, &t, &average_subjects(&runs)?, &sc)?;
            write_map(&out, "brain", &pooled, cfg)?;
            if per_subject {
                for map in subject_scores(&f, &t, &runs, &sc)? {
                    let sid = map.meta.subject_id.clone().unwrap_or_default();
                    write_map(&out, &format!("brain-{}", file_safe(&sid)), &map, cfg)?;
                }
            }
            Ok(())
        }
        Command::Ceiling { bold_dir, out } => {
            let runs = load_runs(&bold_dir)?;
            let map = scoring::ceiling(&runs, cfg.n_ceiling_splits, cfg.seed)?;
            write_map(&out, "ceiling", &map, cfg)
        }
        Command::Diff { a, b, mode, out } => {
            let (a, b) = (load_map(&a)?, load_map(&b)?);
            let (name, map) = match mode {
                DiffMode::Memory => ("memory", memory_score(&a, &b)?),
                DiffMode::Tuning => ("tuning", tuning_score(&a, &b, cfg.eps)?),
            };
            write_map(&out, name, &map, cfg)
        }
        Command::Roi { maps, atlas, labels, level, out } => {
            let atlas = load_atlas(&read(&atlas)?).map_err(|e| with_path(&atlas, e))?;
            let labels = match labels {
                Some(p) => roi::parse_labels(&String::from_utf8(read(&p)?).map_err(|e| Error::parse(0, e))?),
                None => STUDY_LABELS.iter().map(|s| s.to_string()).collect(),
            };
            let maps = maps.iter().map(|p| load_map(p)).collect::<Result<Vec<_>>>()?;
            let rows = if maps.len() == 1 {
                roi_mean(&maps[0], &atlas, &labels)
            } else {
                roi_ci(&maps, &atlas, &labels, level)?
            };
            write(&out, roi_table_csv(&rows))
        }
        Command::Layers { transcript, features_glob, bold_dir, atlas, out } => {
            warn_default_lags(cfg);
            let runs = load_runs(&bold_dir)?;
            let t = load_transcript(&transcript, &runs[0].story_id)?;
            let atlas = load_atlas(&read(&atlas)?).map_err(|e| with_path(&atlas, e))?;
            let avg = average_subjects(&runs)?;
            let paths = glob::glob(&features_glob)
                .map_err(|e| Error::Invalid(format!("features glob: {e}")))?
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Invalid(format!("features glob: {e}")))?;
            if paths.is_empty() {
                return Err(Error::Invalid(format!("no feature files match {features_glob:?}")));
            }
            let mut layers = Vec::with_capacity(paths.len());
            let mut seen = BTreeSet::new();
            for p in &paths {
                let f = load_features(p)?;
                if !seen.insert(f.layer_id) {
                    return Err(Error::Invalid(format!("duplicate layer_id {} ({})", f.layer_id, p.display())));
                }
                validate_pair(&f, &t).map_err(|e| with_path(p, e))?;
                layers.push(f);
            }
            layers.sort_by_key(|f| f.layer_id);
            let sc = cfg.score_config();
            let mut csv = String::from("layer_id,hemisphere,mean_score\n");
            for f in &layers {
                let map = brain_score(f, &t, &avg, &sc)?;
                for hemi in [Hemisphere::L, Hemisphere::R] {
                    csv.push_str(&format!("{},{},{}\n", f.layer_id, hemi.as_str(), opt(hemisphere_mean(&map, &atlas, hemi))));
                }
            }
            write(&out, csv)
        }
        Command::Synth { params, out } => write_synth(&params.config(cfg.seed), &params, &out),
        Command::Augment { transcript, annotations, out } => {
            let t = load_transcript(&transcript, "")?;
            let anns = parse_annotations(&read(&annotations)?).map_err(|e| with_path(&annotations, e))?;
            write(&out, write_transcript(&merge_augmentation(&t, &anns)?))
        }
    }
}

fn write_synth(cfg: &SynthConfig, params: &SynthArgs, out: &Path) -> Result<()> {
    let data = synth::generate(cfg)?;
    write(&out.join("transcript.tsv"), write_transcript(&data.transcript))?;
    write(&out.join("layer-01.feat"), write_features(&data.features)?)?;
    for (i, seed) in (0..params.noise_layers).map(|i| (i, cfg.seed.wrapping_add(1 + i as u64))) {
        let id = i as i32 + 2;
        let f = synth::noise_features(cfg.words, cfg.dims, id, seed)?;
        write(&out.join(format!("layer-{id:02}.feat")), write_features(&f)?)?;
    }
    for run in &data.runs {
        write(&out.join("bold").join(format!("{}.bold", file_safe(&run.subject_id))), write_bold(run)?)?;
    }
    write(&out.join("truth.json"), data.truth.to_json())?;
    write(&out.join("atlas.tsv"), synth_atlas(cfg.voxels).to_tsv())?;
    if params.augment > 0 {
        for (dir, informative) in [("memory", true), ("control", false)] {
            let (t, f) = synth::generate_augmented(&data, params.augment, informative)?;
            write(&out.join(dir).join("transcript.tsv"), write_transcript(&t))?;
            write(&out.join(dir).join("layer-01.feat"), write_features(&f)?)?;
        }
    }
    Ok(())
}
