//! Configuration parsing and subcommand dispatch for the `kidsr` binary.
//!
//! Precedence is command-line flag, then `key = value` config file, then
//! built-in default. Artifacts are written under the output directory:
//!
//! ```text
//! synth          manifest.csv, wav/<speaker>/<utterance>.wav
//! train-ubm      ubm_<band>.ksgm
//! enroll         models/<system>_<band>/<speaker>.{ksgm,ksvm}
//! verify         scores_<system>_<band>.csv, report_verify_<system>_<band>.csv
//! identify       identify_<system>_<band>.csv, report_identify_<system>_<band>.csv
//! subband-sweep  sweep_<system>.csv, report_sweep_<system>.csv
//! fullband-eval  fullband_<system>_<grouping>.csv
//! ```

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{write_manifest, write_wav, UtteranceRecord};
use crate::eval::{
    self, Backend, EvalCorpus, Grouping, ModelSet, SpeakerModel, SynthCorpusConfig, SystemConfig,
    TestRef, TestRepr,
};
use crate::features::BandMode;
use crate::gmm::{read_gmm, train_ubm, write_gmm, EmConfig};
use crate::svm::{read_svm, write_svm};
use crate::System;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PIPELINE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (manifest + WAV tree).
    Synth,
    /// Train a UBM on the manifest's enrollment data.
    TrainUbm,
    /// Enroll every manifest speaker against a trained UBM.
    Enroll,
    /// Score verification trials of the manifest's tests.
    Verify,
    /// Closed-set identification of the manifest's tests.
    Identify,
    /// Run the 21-band sweep.
    SubbandSweep,
    /// Full-band evaluation by age group, classroom or school.
    FullbandEval,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::TrainUbm => "train-ubm",
            Command::Enroll => "enroll",
            Command::Verify => "verify",
            Command::Identify => "identify",
            Command::SubbandSweep => "subband-sweep",
            Command::FullbandEval => "fullband-eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub manifest_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub system: System,
    pub k: usize,
    pub relevance_r: f64,
    pub c_param: f64,
    pub band_mode: BandMode,
    pub grouping: Grouping,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Speakers generated by `synth`.
    pub speakers: usize,
}

impl RunConfig {
    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            system: self.system,
            k: self.k,
            relevance: self.relevance_r,
            c_param: self.c_param,
            em: EmConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Help or version output requested.
    #[error("{0}")]
    Info(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Info(_) => EXIT_OK,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "kidsr",
    version,
    about = "Speaker recognition for children's speech"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Debug, Args, Default)]
struct Opts {
    /// Corpus manifest CSV.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// gmm-ubm or gmm-svm [default: gmm-svm].
    #[arg(long, global = true)]
    system: Option<String>,
    /// UBM components, a power of two [default: 64].
    #[arg(long, global = true)]
    k: Option<String>,
    /// MAP relevance factor [default: 16].
    #[arg(long, global = true)]
    relevance: Option<String>,
    /// SVM soft-margin constant [default: 1].
    #[arg(long, global = true)]
    c: Option<String>,
    /// fullband or subband:N [default: fullband].
    #[arg(long, global = true)]
    band: Option<String>,
    /// age-groups, classroom or school [default: school].
    #[arg(long, global = true)]
    grouping: Option<String>,
    /// RNG seed (required).
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Worker threads [default: all cores].
    #[arg(long, global = true)]
    threads: Option<String>,
    /// Speakers to synthesize [default: 30].
    #[arg(long, global = true)]
    speakers: Option<String>,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

const CONFIG_KEYS: [&str; 11] = [
    "manifest",
    "out",
    "system",
    "k",
    "relevance",
    "c",
    "band",
    "grouping",
    "seed",
    "threads",
    "speakers",
];

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(usage(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                i + 1
            )));
        };
        let key = key.trim().to_string();
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(usage(format!(
                "{}:{}: unknown key `{key}`",
                path.display(),
                i + 1
            )));
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_value<T: std::str::FromStr>(flag: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| usage(format!("--{flag} {raw}: {e}")))
}

/// Parses `argv` (including the program name) into a validated config.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::Info(e.to_string())
        }
        _ => CliError::Usage(e.to_string()),
    })?;
    let o = cli.opts;
    let file = match &o.config {
        Some(p) => read_config_file(p)?,
        None => Vec::new(),
    };
    // flag value if given, else the last config-file value
    let pick = |flag: &Option<String>, key: &str| -> Option<String> {
        flag.clone().or_else(|| {
            file.iter()
                .rev()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
        })
    };
    let path_of = |p: &Option<PathBuf>, key: &str| {
        pick(&p.as_ref().map(|p| p.display().to_string()), key).map(PathBuf::from)
    };

    let seed = match pick(&o.seed, "seed") {
        Some(raw) => parse_value::<u64>("seed", &raw)?,
        None => return Err(usage("--seed is required")),
    };
    let k = match pick(&o.k, "k") {
        Some(raw) => parse_value::<usize>("k", &raw)?,
        None => 64,
    };
    if k == 0 || !k.is_power_of_two() {
        return Err(usage(format!("--k {k}: must be a power of two")));
    }
    let relevance_r = match pick(&o.relevance, "relevance") {
        Some(raw) => parse_value::<f64>("relevance", &raw)?,
        None => 16.0,
    };
    if !(relevance_r.is_finite() && relevance_r >= 0.0) {
        return Err(usage(format!("--relevance {relevance_r}: must be >= 0")));
    }
    let c_param = match pick(&o.c, "c") {
        Some(raw) => parse_value::<f64>("c", &raw)?,
        None => 1.0,
    };
    if !(c_param.is_finite() && c_param > 0.0) {
        return Err(usage(format!("--c {c_param}: must be > 0")));
    }
    let system = match pick(&o.system, "system") {
        Some(raw) => parse_value::<System>("system", &raw)?,
        None => System::GmmSvm,
    };
    let band_mode = match pick(&o.band, "band") {
        Some(raw) => parse_value::<BandMode>("band", &raw)?,
        None => BandMode::FullBand,
    };
    let grouping = match pick(&o.grouping, "grouping") {
        Some(raw) => parse_value::<Grouping>("grouping", &raw)?,
        None => Grouping::School,
    };
    let threads = match pick(&o.threads, "threads") {
        Some(raw) => {
            let t = parse_value::<usize>("threads", &raw)?;
            if t == 0 {
                return Err(usage("--threads 0: must be at least 1"));
            }
            Some(t)
        }
        None => None,
    };
    let speakers = match pick(&o.speakers, "speakers") {
        Some(raw) => parse_value::<usize>("speakers", &raw)?,
        None => 30,
    };
    if speakers == 0 {
        return Err(usage("--speakers 0: must be at least 1"));
    }
    let manifest_path = path_of(&o.manifest, "manifest");
    if cli.command != Command::Synth {
        match &manifest_path {
            None => {
                return Err(usage(format!(
                    "{} requires --manifest",
                    cli.command.as_str()
                )))
            }
            Some(p) if !p.is_file() => {
                return Err(usage(format!("--manifest {}: no such file", p.display())))
            }
            Some(_) => {}
        }
    }
    Ok(RunConfig {
        command: cli.command,
        manifest_path,
        output_dir: path_of(&o.out, "out").unwrap_or_else(|| PathBuf::from("out")),
        system,
        k,
        relevance_r,
        c_param,
        band_mode,
        grouping,
        seed,
        threads,
        speakers,
    })
}

/// Parses and runs; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match parse_config(argv) {
        Ok(cfg) => run(&cfg),
        Err(CliError::Info(text)) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Executes a parsed configuration: 0 on success, 1 on pipeline failure.
pub fn run(config: &RunConfig) -> i32 {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_PIPELINE;
        }
    };
    match pool.install(|| dispatch(config)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_PIPELINE
        }
    }
}

fn dispatch(cfg: &RunConfig) -> anyhow::Result<()> {
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    match cfg.command {
        Command::Synth => synth(cfg),
        Command::TrainUbm => train(cfg),
        Command::Enroll => enroll(cfg),
        Command::Verify | Command::Identify => score(cfg),
        Command::SubbandSweep => sweep(cfg),
        Command::FullbandEval => fullband(cfg),
    }
}

fn band_tag(band: BandMode) -> String {
    match band {
        BandMode::FullBand => "fullband".into(),
        BandMode::SubBand(s) => format!("subband{}", s.index()),
    }
}

pub fn ubm_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir
        .join(format!("ubm_{}.ksgm", band_tag(cfg.band_mode)))
}

pub fn models_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir
        .join("models")
        .join(format!("{}_{}", cfg.system, band_tag(cfg.band_mode)))
}

fn model_file(cfg: &RunConfig, speaker_id: &str) -> PathBuf {
    let ext = match cfg.system {
        System::GmmUbm => "ksgm",
        System::GmmSvm => "ksvm",
    };
    models_dir(cfg).join(format!("{speaker_id}.{ext}"))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open_model(path: &Path) -> anyhow::Result<File> {
    if !path.is_file() {
        bail!("model not found: {}", path.display());
    }
    File::open(path).with_context(|| format!("model not found: {}", path.display()))
}

fn load_corpus(cfg: &RunConfig) -> anyhow::Result<EvalCorpus> {
    let path = cfg.manifest_path.as_ref().context("no manifest given")?;
    let corpus = EvalCorpus::from_manifest(path)
        .with_context(|| format!("loading corpus from {}", path.display()))?;
    if corpus.is_empty() {
        bail!(
            "no speaker in {} has enough enrollment speech",
            path.display()
        );
    }
    log::info!(
        "{} speakers, {} test segments",
        corpus.len(),
        corpus.test_count()
    );
    Ok(corpus)
}

fn load_backend(cfg: &RunConfig) -> anyhow::Result<Backend> {
    let path = ubm_path(cfg);
    let ubm =
        read_gmm(open_model(&path)?).with_context(|| format!("reading UBM {}", path.display()))?;
    if ubm.dim() != cfg.band_mode.dim() {
        bail!(
            "UBM {} has dimension {}, band {} needs {}",
            path.display(),
            ubm.dim(),
            cfg.band_mode,
            cfg.band_mode.dim()
        );
    }
    let mut sys = cfg.system_config();
    sys.k = ubm.k();
    Ok(Backend::from_ubm(ubm, cfg.band_mode, sys))
}

fn synth(cfg: &RunConfig) -> anyhow::Result<()> {
    let shape = SynthCorpusConfig {
        n_speakers: cfg.speakers,
        ..SynthCorpusConfig::default()
    };
    let (_, utterances) = shape.generate(cfg.seed)?;
    utterances
        .par_iter()
        .try_for_each(|(rec, clip)| -> anyhow::Result<()> {
            let path = cfg.output_dir.join(&rec.path);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            write_wav(&path, clip).with_context(|| format!("writing {}", path.display()))?;
            Ok(())
        })?;
    let records: Vec<UtteranceRecord> = utterances.into_iter().map(|(r, _)| r).collect();
    let manifest = cfg.output_dir.join("manifest.csv");
    write_manifest(&manifest, &records)?;
    println!("{}", manifest.display());
    Ok(())
}

fn train(cfg: &RunConfig) -> anyhow::Result<()> {
    let corpus = load_corpus(cfg)?;
    let feats = corpus
        .speakers
        .par_iter()
        .map(|s| {
            crate::features::extract(&s.enrollment, cfg.band_mode)
                .with_context(|| format!("utterance {}", s.enrollment.utterance_id()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let pooled = crate::FeatureMatrix::stack(&feats)?;
    let ubm = train_ubm(&pooled, cfg.k, &EmConfig::default())?;
    let path = ubm_path(cfg);
    let mut w = create(&path)?;
    write_gmm(&mut w, &ubm)?;
    w.flush()?;
    println!("{}", path.display());
    Ok(())
}

fn enroll(cfg: &RunConfig) -> anyhow::Result<()> {
    let corpus = load_corpus(cfg)?;
    let backend = load_backend(cfg)?;
    let clips: Vec<_> = corpus.speakers.iter().map(|s| &s.enrollment).collect();
    let models = backend.enroll_clips(&clips)?;
    for (id, model) in models.speaker_ids().iter().zip(models.models()) {
        let path = model_file(cfg, id);
        let mut w = create(&path)?;
        match model {
            SpeakerModel::Gmm(g) => write_gmm(&mut w, g)?,
            SpeakerModel::Svm(s) => write_svm(&mut w, s)?,
        }
        w.flush()?;
    }
    println!("{}", models_dir(cfg).display());
    Ok(())
}

fn load_models(cfg: &RunConfig, backend: &Backend, ids: &[String]) -> anyhow::Result<ModelSet> {
    let models = ids
        .iter()
        .map(|id| {
            let path = model_file(cfg, id);
            let file = open_model(&path)?;
            Ok(match cfg.system {
                System::GmmUbm => SpeakerModel::Gmm(read_gmm(file)?),
                System::GmmSvm => SpeakerModel::Svm(read_svm(file, id.clone(), cfg.c_param)?),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(ModelSet::new(backend.clone(), ids.to_vec(), models)?)
}

fn score(cfg: &RunConfig) -> anyhow::Result<()> {
    let corpus = load_corpus(cfg)?;
    let backend = load_backend(cfg)?;
    let models = load_models(cfg, &backend, &corpus.speaker_ids())?;
    let tests: Vec<(TestRef, TestRepr)> = corpus
        .speakers
        .iter()
        .flat_map(|s| s.tests.iter())
        .collect::<Vec<_>>()
        .par_iter()
        .map(|clip| {
            let repr = backend
                .clip_repr(clip)
                .with_context(|| format!("utterance {}", clip.utterance_id()))?;
            Ok((
                TestRef {
                    utterance_id: clip.utterance_id().to_string(),
                    speaker_id: clip.speaker_id().to_string(),
                },
                repr,
            ))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if tests.is_empty() {
        bail!("the manifest yields no 10 s test segments");
    }
    let outcome = models.evaluate(&tests, cfg.seed, "manifest")?;
    let tag = format!("{}_{}", cfg.system, band_tag(cfg.band_mode));
    let kind = cfg.command.as_str();
    if cfg.command == Command::Verify {
        let path = cfg.output_dir.join(format!("scores_{tag}.csv"));
        eval::write_scores_csv(create(&path)?, &outcome.scores)?;
    } else {
        let path = cfg.output_dir.join(format!("identify_{tag}.csv"));
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record([
            "test_utterance_id",
            "true_speaker_id",
            "identified_speaker_id",
        ])?;
        for ((r, _), (_, predicted)) in tests.iter().zip(&outcome.decisions) {
            w.write_record([&r.utterance_id, &r.speaker_id, predicted])?;
        }
        w.flush()?;
    }
    let report = cfg.output_dir.join(format!("report_{kind}_{tag}.csv"));
    eval::write_reports_csv(create(&report)?, std::slice::from_ref(&outcome.report))?;
    println!(
        "{kind}: EER {:.2}%  ID {:.2}%  ({} trials)",
        outcome.report.eer_percent, outcome.report.id_accuracy_percent, outcome.report.n_trials
    );
    Ok(())
}

fn sweep(cfg: &RunConfig) -> anyhow::Result<()> {
    let corpus = load_corpus(cfg)?;
    let report = eval::subband_sweep(&corpus, cfg.system_config(), cfg.seed)?;
    let rows = report.per_subband_rows.as_deref().unwrap_or_default();
    let path = cfg.output_dir.join(format!("sweep_{}.csv", cfg.system));
    eval::write_sweep_csv(create(&path)?, rows)?;
    let summary = cfg
        .output_dir
        .join(format!("report_sweep_{}.csv", cfg.system));
    eval::write_reports_csv(create(&summary)?, std::slice::from_ref(&report))?;
    println!("{}", path.display());
    Ok(())
}

fn fullband(cfg: &RunConfig) -> anyhow::Result<()> {
    let corpus = load_corpus(cfg)?;
    let reports = eval::fullband_eval(&corpus, cfg.system_config(), cfg.grouping, cfg.seed)?;
    let path = cfg
        .output_dir
        .join(format!("fullband_{}_{}.csv", cfg.system, cfg.grouping));
    eval::write_reports_csv(create(&path)?, &reports)?;
    for r in &reports {
        println!(
            "{}: EER {:.2}%  ID {:.2}%",
            r.population, r.eer_percent, r.id_accuracy_percent
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_apply() {
        let cfg = parse_config(["kidsr", "synth", "--seed", "7"]).unwrap();
        assert_eq!(cfg.command, Command::Synth);
        assert_eq!(cfg.k, 64);
        assert_eq!(cfg.relevance_r, 16.0);
        assert_eq!(cfg.c_param, 1.0);
        assert_eq!(cfg.system, System::GmmSvm);
        assert_eq!(cfg.band_mode, BandMode::FullBand);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn usage_errors() {
        for argv in [
            vec!["kidsr", "synth", "--seed", "1", "--k", "100"],
            vec!["kidsr", "synth"],
            vec!["kidsr", "synth", "--seed", "x"],
            vec!["kidsr", "frobnicate", "--seed", "1"],
            vec!["kidsr", "verify", "--seed", "1"],
            vec!["kidsr", "synth", "--seed", "1", "--band", "subband:22"],
        ] {
            let err = parse_config(argv.clone()).unwrap_err();
            assert_eq!(err.exit_code(), EXIT_USAGE, "{argv:?}");
        }
        let err = parse_config(["kidsr", "synth", "--seed", "1", "--k", "100"]).unwrap_err();
        assert!(err.to_string().contains("--k"));
    }

    #[test]
    fn help_is_not_an_error() {
        let err = parse_config(["kidsr", "--help"]).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_OK);
    }

    #[test]
    fn config_file_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "# experiment\nk = 32\nseed = 5\nsystem = gmm-ubm\n").unwrap();
        let p = path.to_str().unwrap();
        let cfg = parse_config(["kidsr", "synth", "--config", p, "--k", "8"]).unwrap();
        assert_eq!((cfg.k, cfg.seed, cfg.system), (8, 5, System::GmmUbm));

        fs::write(&path, "seed = 5\ncolour = blue\n").unwrap();
        let err = parse_config(["kidsr", "synth", "--config", p]).unwrap_err();
        assert!(err.to_string().contains("colour"));
        assert_eq!(err.exit_code(), EXIT_USAGE);
    }
}
