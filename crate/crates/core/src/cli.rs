//! `reactgen` command-line interface.
//!
//! All artifacts live under `--out` (default `runs`):
//! `data/` session files, `stage1.ckpt`/`stage2.ckpt` checkpoints with
//! `train_stage{1,2}.jsonl` logs, `generate/` sample files, `eval/` reports,
//! `plots/` images and `ablate-<axis>/` labeled runs. Each command writes the
//! resolved configuration to `config.toml` in its output directory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use crate::config::ModelConfig;
use crate::data::{generate_dataset, load_dataset, load_session, save_dataset, split_ids, SynthSpec};
use crate::error::{Error, Result};
use crate::pipeline::{evaluate, generate_online, train_stage1, train_stage2, ReactModel, StepRecord, TrainData, TrainOptions, TrainState};
use crate::seed::derive_seed;
use crate::types::{validate_dataset, Session};

pub const SEED_ENV: &str = "REACTGEN_SEED";

#[derive(Debug, Parser)]
#[command(name = "reactgen", version, about = "Listener facial reaction generation")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Worker threads for per-session parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    Synth {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train one stage.
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from this stage's own checkpoint.
        #[arg(long)]
        resume: bool,
        /// Stop after this many optimizer steps.
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Generate reactions for one session.
    Generate {
        #[arg(long)]
        session: String,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score the held-out sessions.
    Evaluate {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate with one component disabled.
    Ablate {
        #[arg(long, value_enum)]
        disable: Ablation,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Plot speaker and generated listener coefficient traces.
    Plot {
        #[arg(long)]
        session: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of coefficient dimensions to draw.
        #[arg(long, default_value_t = 4)]
        dims: usize,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    Mim,
    Vim,
    Div,
    Kl,
    Smo,
    #[value(name = "rec_a", alias = "rec-a")]
    RecA,
}

impl Ablation {
    pub fn label(self) -> &'static str {
        match self {
            Ablation::Mim => "mim",
            Ablation::Vim => "vim",
            Ablation::Div => "div",
            Ablation::Kl => "kl",
            Ablation::Smo => "smo",
            Ablation::RecA => "rec_a",
        }
    }

    pub fn apply(self, cfg: &mut ModelConfig) {
        match self {
            Ablation::Mim => cfg.use_mim = false,
            Ablation::Vim => cfg.use_vim = false,
            Ablation::Div => cfg.lambda_div = 0.0,
            Ablation::Kl => cfg.lambda_kl = 0.0,
            Ablation::Smo => cfg.lambda_smo = 0.0,
            Ablation::RecA => cfg.use_rec_a = false,
        }
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Config file, then `--set` overrides, then the seed environment variable.
pub fn resolve_config(cli: &Cli) -> Result<ModelConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ModelConfig::load(p)?,
        None => ModelConfig::default(),
    };
    for o in &cli.overrides {
        cfg.set(o)?;
    }
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.seed = v.trim().parse().map_err(|_| Error::config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn echo_config(dir: &Path, cfg: &ModelConfig) -> Result<()> {
    write_file(&dir.join("config.toml"), cfg.to_toml_string().as_bytes())
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let out = &cli.out;
    let data_dir = |d: &Option<PathBuf>| d.clone().unwrap_or_else(|| out.join("data"));
    match &cli.command {
        Command::Synth { data } => {
            echo_config(out, &cfg)?;
            synth(&cfg, &data_dir(data))
        }
        Command::Train { stage, data, resume, max_steps } => {
            echo_config(out, &cfg)?;
            let opts = TrainOptions { max_steps: *max_steps, workers: cli.workers };
            train(&cfg, &data_dir(data), out, *stage, *resume, &opts)
        }
        Command::Generate { session, samples, seed, data, checkpoint } => {
            echo_config(out, &cfg)?;
            generate(&cfg, &data_dir(data), out, checkpoint.as_deref(), session, *samples, seed.unwrap_or(cfg.seed))
        }
        Command::Evaluate { samples, data, checkpoint } => {
            echo_config(out, &cfg)?;
            let n = samples.unwrap_or(cfg.samples);
            let ckpt = find_checkpoint(out, checkpoint.as_deref())?;
            run_evaluate(&cfg, &data_dir(data), &ckpt, &out.join("eval"), n, cli.workers)
        }
        Command::Ablate { disable, data } => ablate(&cfg, &data_dir(data), out, *disable, cli.workers),
        Command::Plot { session, seed, dims, data, checkpoint } => {
            echo_config(out, &cfg)?;
            plot(&cfg, &data_dir(data), out, checkpoint.as_deref(), session, seed.unwrap_or(cfg.seed), *dims)
        }
    }
}

fn synth(cfg: &ModelConfig, dir: &Path) -> Result<()> {
    let sessions = generate_dataset(&SynthSpec::from_config(cfg), cfg)?;
    save_dataset(&sessions, dir)
}

fn load_checked(cfg: &ModelConfig, dir: &Path) -> Result<Vec<Session>> {
    let sessions = load_dataset(dir)?;
    let report = validate_dataset(&sessions, cfg);
    if !report.is_empty() {
        return Err(Error::data(format!("invalid dataset: {}", report.violations.join("; "))));
    }
    Ok(sessions)
}

/// `(train, test)` sessions of the seeded split.
pub fn split_sessions(cfg: &ModelConfig, sessions: &[Session]) -> (Vec<Session>, Vec<Session>) {
    let ids: Vec<String> = sessions.iter().map(|s| s.id.clone()).collect();
    let (train, test) = split_ids(&ids, cfg.seed, cfg.test_fraction);
    let pick = |set: &[String]| sessions.iter().filter(|s| set.contains(&s.id)).cloned().collect::<Vec<_>>();
    (pick(&train), pick(&test))
}

fn stage_checkpoint(out: &Path, stage: u8) -> PathBuf {
    out.join(format!("stage{stage}.ckpt"))
}

fn train(cfg: &ModelConfig, data: &Path, out: &Path, stage: u8, resume: bool, opts: &TrainOptions) -> Result<()> {
    let model = ReactModel::new(cfg)?;
    let own = stage_checkpoint(out, stage);
    let state = if resume && own.exists() {
        TrainState::<f32>::load(&own)?
    } else if stage == 1 {
        TrainState::new(model.init_params::<f32>(cfg.seed), cfg.seed)
    } else {
        let s1 = stage_checkpoint(out, 1);
        if !s1.exists() {
            return Err(Error::config("stage 1 checkpoint required"));
        }
        TrainState::<f32>::load(&s1)?
    };
    model.check_params(&state.params)?;
    let sessions = load_checked(cfg, data)?;
    let (train_set, _) = split_sessions(cfg, &sessions);
    let data = TrainData::<f32>::new(&train_set)?;

    let log_path = out.join(format!("train_stage{stage}.jsonl"));
    let mut log = String::new();
    for r in state.history.iter().filter(|r| r.stage == stage) {
        log_line(&mut log, r);
    }
    let mut on_step = |r: &StepRecord| log_line(&mut log, r);
    let result = match stage {
        1 => train_stage1(&model, &data, state, opts, &mut on_step),
        _ => train_stage2(&model, &data, state, opts, &mut on_step),
    };
    write_file(&log_path, log.as_bytes())?;
    let state = result?;
    state.save(&own)
}

fn log_line(buf: &mut String, r: &StepRecord) {
    let _ = writeln!(buf, "{}", serde_json::to_string(r).expect("serializable"));
}

/// Explicit checkpoint, else the latest stage checkpoint under `out`.
pub fn find_checkpoint(out: &Path, explicit: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    for stage in [2, 1] {
        let p = stage_checkpoint(out, stage);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::config(format!("no checkpoint under {}; run train first", out.display())))
}

fn load_model(cfg: &ModelConfig, ckpt: &Path) -> Result<(ReactModel, crate::autograd::ParamStore<f32>)> {
    let model = ReactModel::new(cfg)?;
    let state = TrainState::<f32>::load(ckpt)?;
    model.check_params(&state.params)?;
    Ok((model, state.params))
}

/// Seed of generated sample `i` for a `--seed` value.
pub fn generation_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, &[i as u64])
}

/// Frame-per-line CSV with a header row.
pub fn coeffs_to_csv(m: &Array2<f32>) -> String {
    let mut s = String::from("frame");
    for c in 0..m.ncols() {
        let _ = write!(s, ",c{c}");
    }
    s.push('\n');
    for (t, row) in m.rows().into_iter().enumerate() {
        let _ = write!(s, "{t}");
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

fn generate(cfg: &ModelConfig, data: &Path, out: &Path, ckpt: Option<&Path>, id: &str, samples: usize, seed: u64) -> Result<()> {
    if samples == 0 {
        return Err(Error::config("samples must be positive"));
    }
    let (model, ps) = load_model(cfg, &find_checkpoint(out, ckpt)?)?;
    let sess = load_session(data, id)?;
    let speaker = sess.speaker_coeffs.frames.clone();
    let audio = sess.speaker_audio.frames.clone();
    let dir = out.join("generate");
    for i in 0..samples {
        let g = generate_online(&model, &ps, &speaker, &audio, generation_seed(seed, i))?;
        write_file(&dir.join(format!("{id}_seed{seed}_sample{i}.csv")), coeffs_to_csv(&g.coeffs).as_bytes())?;
    }
    Ok(())
}

fn run_evaluate(cfg: &ModelConfig, data: &Path, ckpt: &Path, dir: &Path, samples: usize, workers: usize) -> Result<()> {
    let (model, ps) = load_model(cfg, ckpt)?;
    let sessions = load_checked(cfg, data)?;
    let (_, test) = split_sessions(cfg, &sessions);
    let test_refs: Vec<&Session> = test.iter().collect();
    let (report, _) = evaluate(&model, &ps, &test_refs, &sessions, samples, cfg.seed, workers)?;
    write_file(&dir.join("report.jsonl"), report.to_jsonl().as_bytes())?;
    write_file(&dir.join("summary.json"), report.summary_json().as_bytes())
}

fn ablate(base: &ModelConfig, data: &Path, out: &Path, axis: Ablation, workers: usize) -> Result<()> {
    let mut cfg = base.clone();
    axis.apply(&mut cfg);
    let dir = out.join(format!("ablate-{}", axis.label()));
    echo_config(&dir, &cfg)?;
    if !data.exists() {
        synth(&cfg, data)?;
    }
    let opts = TrainOptions { max_steps: None, workers };
    train(&cfg, data, &dir, 1, false, &opts)?;
    train(&cfg, data, &dir, 2, false, &opts)?;
    run_evaluate(&cfg, data, &stage_checkpoint(&dir, 2), &dir.join("eval"), cfg.samples, workers)
}

fn plot(cfg: &ModelConfig, data: &Path, out: &Path, ckpt: Option<&Path>, id: &str, seed: u64, dims: usize) -> Result<()> {
    let (model, ps) = load_model(cfg, &find_checkpoint(out, ckpt)?)?;
    let sess = load_session(data, id)?;
    let g = generate_online(&model, &ps, &sess.speaker_coeffs.frames, &sess.speaker_audio.frames, generation_seed(seed, 0))?;
    let path = out.join("plots").join(format!("{id}_seed{seed}.png"));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    crate::plot::render_traces(&path, &sess.speaker_coeffs.frames, &sess.listener_coeffs.frames, &g.coeffs, dims)
}
