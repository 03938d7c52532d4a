//! The `solowave` command.
//!
//! Exit codes: 0 on success, 1 when a command fails at run time, 2 for
//! usage errors (bad flags, missing input files).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use solowave_core::analysis::{self, Grid};
use solowave_core::tasks::{self, Duration, GenerationRequest, DEFAULT_XFADE};
use solowave_core::trainer::{self, InpaintMask, ModelBundle};
use solowave_core::Waveform;

use crate::audio::{load_waveform, save_waveform, Encoding};
use crate::bundle::{self, load_bundle, prepare_run_dir, save_bundle};
use crate::config::{KeyValues, Preset, RunConfig};
use crate::images::{write_pgm, write_raw_grid};
use crate::report::{append_provenance, write_metrics, MetricRow, Provenance};

#[derive(Debug, Parser)]
#[command(name = "solowave", version, about = "Learn a generative audio model from a single waveform")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on one WAV file into a run directory.
    Train {
        input: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Generate new audio from a trained run.
    Generate {
        run: PathBuf,
        /// Output duration in seconds.
        #[arg(long, conflicts_with = "samples")]
        seconds: Option<f64>,
        /// Output duration in samples at the model rate.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generate a receptive field of extra audio per side and cut it off.
        #[arg(long)]
        trim: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write the reconstruction of the training signal.
    Reconstruct {
        run: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Regenerate the fine detail of a conditioning signal.
    Variations {
        run: PathBuf,
        conditioning: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Extend a low-rate signal to the model rate.
    Extend {
        run: PathBuf,
        low_res: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Train with a gap excluded and fill it in.
    Inpaint {
        input: PathBuf,
        /// Gap start in seconds.
        #[arg(long)]
        gap_start: f64,
        /// Gap length in seconds.
        #[arg(long)]
        gap_len: f64,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train on a noisy recording and write its reconstruction.
    Denoise {
        input: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Compare two signals; the estimate may also be a run directory.
    Analyze {
        reference: PathBuf,
        estimate: PathBuf,
        #[arg(long)]
        snr: bool,
        #[arg(long)]
        lsd: bool,
        /// Similarity matrix image and raw grid.
        #[arg(long)]
        simmat: bool,
        /// Spectrogram images of both signals.
        #[arg(long)]
        spectrogram: bool,
        /// Directory for images.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Write the metric CSV here instead of standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// `key = value` configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory (default `runs/<input name>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub kernel: Option<usize>,
    /// Channel count of every scale.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Comma-separated rates, lowest first, ending at the input rate.
    #[arg(long)]
    pub ladder: Option<String>,
    #[arg(long)]
    pub coarsest: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    /// Any configuration key, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file (default under the run's `outputs/`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Encoding::Pcm16)]
    pub encoding: Encoding,
}

/// A failed command and its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Self { code: 1, message: e.to_string() }
    }
}

impl From<solowave_core::Error> for Failure {
    fn from(e: solowave_core::Error) -> Self {
        crate::Error::from(e).into()
    }
}

type CmdResult<T> = std::result::Result<T, Failure>;

pub fn main(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn run(cli: Cli) -> CmdResult<()> {
    match cli.command {
        Command::Train { input, train } => {
            let (w, dir, cfg) = prepare_training(&input, &train, Preset::Speech, None)?;
            train_into(&w, &dir, &cfg, train.quiet)?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Generate { run, seconds, samples, seed, trim, output } => {
            let b = open_run(&run)?;
            let duration = match (seconds, samples) {
                (Some(s), _) => Duration::Seconds(s),
                (None, Some(n)) => Duration::Samples(n),
                (None, None) => Duration::Samples(b.lengths[0]),
            };
            let req = GenerationRequest { trim_borders: trim, ..GenerationRequest::new(duration, seed) };
            let t0 = Instant::now();
            let w = tasks::generate(&b, &req)?;
            let scales = (0..=b.coarsest).rev().collect();
            finish(&run, "generate", Some(seed), scales, vec![], &w, &output, &format!("generate_seed{seed}.wav"), t0)
        }
        Command::Reconstruct { run, output } => {
            let b = open_run(&run)?;
            let t0 = Instant::now();
            let w = tasks::reconstruct(&b)?;
            let scales = (0..=b.coarsest).rev().collect();
            finish(&run, "reconstruct", None, scales, vec![], &w, &output, "reconstruction.wav", t0)
        }
        Command::Variations { run, conditioning, seed, output } => {
            let b = open_run(&run)?;
            let cond = read_input(&conditioning)?;
            let t0 = Instant::now();
            let w = tasks::variations(&b, &cond, seed)?;
            let scales = (0..b.coarsest).rev().collect();
            finish(&run, "variations", Some(seed), scales, vec![conditioning], &w, &output, &format!("variation_seed{seed}.wav"), t0)
        }
        Command::Extend { run, low_res, seed, output } => {
            let b = open_run(&run)?;
            let low = read_input(&low_res)?;
            let t0 = Instant::now();
            let w = tasks::bandwidth_extend(&b, &low, seed)?;
            let m = b.ladder.scale_of_rate(low.rate).unwrap_or(0);
            finish(&run, "extend", Some(seed), (0..m).rev().collect(), vec![low_res], &w, &output, "extended.wav", t0)
        }
        Command::Inpaint { input, gap_start, gap_len, train } => {
            if !(gap_start >= 0.0 && gap_len >= 0.0 && gap_start.is_finite() && gap_len.is_finite()) {
                return Err(Failure::usage("gap start and length must be non-negative seconds"));
            }
            let w = read_input(&input)?;
            let start = (gap_start * w.rate as f64).round() as usize;
            let end = ((gap_start + gap_len) * w.rate as f64).round() as usize;
            let mask = InpaintMask::new(start, end, w.len())?;
            let (w, dir, cfg) = prepare_training(&input, &train, Preset::Music, Some(mask))?;
            let t0 = Instant::now();
            let b = train_into(&w, &dir, &cfg, train.quiet)?;
            let out = tasks::inpaint_complete(&b, &w, mask, DEFAULT_XFADE)?;
            let output = OutputArgs { out: None, encoding: Encoding::Pcm16 };
            let scales = (0..=b.coarsest).rev().collect();
            finish(&dir, "inpaint", Some(cfg.train.seed), scales, vec![input], &out, &output, "inpainted.wav", t0)
        }
        Command::Denoise { input, train } => {
            let (w, dir, cfg) = prepare_training(&input, &train, Preset::Speech, None)?;
            let t0 = Instant::now();
            let b = train_into(&w, &dir, &cfg, train.quiet)?;
            let out = tasks::denoise(&b)?;
            let before = analysis::spectrogram(&w)?;
            let after = analysis::spectrogram(&out)?;
            let (lo1, hi1) = before.min_max();
            let (lo2, hi2) = after.min_max();
            let range = Some((lo1.min(lo2).max(hi1.max(hi2) - 100.0), hi1.max(hi2)));
            let outputs = dir.join(bundle::OUTPUTS);
            write_pgm(&before, outputs.join("noisy_spectrogram.pgm"), range, true)?;
            write_pgm(&after, outputs.join("denoised_spectrogram.pgm"), range, true)?;
            let output = OutputArgs { out: None, encoding: Encoding::Pcm16 };
            let scales = (0..=b.coarsest).rev().collect();
            finish(&dir, "denoise", Some(cfg.train.seed), scales, vec![input], &out, &output, "denoised.wav", t0)
        }
        Command::Analyze { reference, estimate, snr, lsd, simmat, spectrogram, out_dir, csv } => {
            analyze(&reference, &estimate, snr, lsd, simmat, spectrogram, &out_dir, csv.as_deref())
        }
    }
}

fn read_input(path: &Path) -> CmdResult<Waveform> {
    if !path.exists() {
        return Err(Failure::usage(format!("{}: no such file", path.display())));
    }
    Ok(load_waveform(path)?)
}

fn open_run(dir: &Path) -> CmdResult<ModelBundle> {
    if !dir.is_dir() {
        return Err(Failure::usage(format!("{}: not a run directory", dir.display())));
    }
    Ok(load_bundle(dir)?)
}

/// Resolves the configuration (flags over file over defaults), creates the
/// run directory and writes its manifest.
fn prepare_training(
    input: &Path,
    args: &TrainArgs,
    default_preset: Preset,
    mask: Option<InpaintMask>,
) -> CmdResult<(Waveform, PathBuf, RunConfig)> {
    let w = read_input(input)?;
    let mut kv = match &args.config {
        Some(p) if !p.exists() => return Err(Failure::usage(format!("{}: no such file", p.display()))),
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    if kv.get("preset").is_none() {
        kv.set("preset", default_preset.name());
    }
    if let Some(p) = args.preset {
        kv.set("preset", p.name());
    }
    let opt = |kv: &mut KeyValues, k: &str, v: Option<String>| {
        if let Some(v) = v {
            kv.set(k, v);
        }
    };
    opt(&mut kv, "seed", args.seed.map(|v| v.to_string()));
    opt(&mut kv, "epochs", args.epochs.map(|v| v.to_string()));
    opt(&mut kv, "blocks", args.blocks.map(|v| v.to_string()));
    opt(&mut kv, "kernel", args.kernel.map(|v| v.to_string()));
    opt(&mut kv, "channels_coarse", args.channels.map(|v| v.to_string()));
    opt(&mut kv, "channels_fine", args.channels.map(|v| v.to_string()));
    opt(&mut kv, "ladder", args.ladder.clone());
    opt(&mut kv, "coarsest", args.coarsest.map(|v| v.to_string()));
    opt(&mut kv, "lr", args.lr.map(|v| v.to_string()));
    for s in &args.set {
        let (k, v) = s.split_once('=').ok_or_else(|| Failure::usage(format!("--set expects key=value, got {s:?}")))?;
        kv.set(k.trim(), v.trim());
    }
    if let Some(m) = mask {
        kv.set("gap_start", m.gap_start);
        kv.set("gap_end", m.gap_end);
    }
    let cfg = RunConfig::from_key_values(&kv).map_err(|e| Failure::usage(e.to_string()))?;
    cfg.train.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => {
            let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
            Path::new("runs").join(stem)
        }
    };
    prepare_run_dir(&dir, &cfg)?;
    Ok((w, dir, cfg))
}

fn train_into(w: &Waveform, dir: &Path, cfg: &RunConfig, quiet: bool) -> CmdResult<ModelBundle> {
    let t0 = Instant::now();
    let epochs = cfg.train.epochs;
    let mut progress = |r: &trainer::LossRecord| {
        if !quiet && (r.epoch % 100 == 0 || r.epoch + 1 == epochs) {
            eprintln!(
                "scale {} epoch {:>5}  d {:+.4}  g_adv {:+.4}  g_rec {:.5}  gp {:.5}  [{:.0?}]",
                r.scale,
                r.epoch,
                r.d_loss,
                r.g_adv,
                r.g_rec,
                r.gp,
                t0.elapsed()
            );
        }
    };
    let b = trainer::train_with_progress(w, &cfg.train, &mut progress)?;
    save_bundle(dir, &b)?;
    Ok(b)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    run: &Path,
    task: &str,
    seed: Option<u64>,
    scales: Vec<usize>,
    inputs: Vec<PathBuf>,
    w: &Waveform,
    output: &OutputArgs,
    default_name: &str,
    t0: Instant,
) -> CmdResult<()> {
    let path = match &output.out {
        Some(p) => p.clone(),
        None => {
            let dir = run.join(bundle::OUTPUTS);
            std::fs::create_dir_all(&dir).map_err(|e| crate::Error::io(&dir, e))?;
            dir.join(default_name)
        }
    };
    save_waveform(w, &path, output.encoding)?;
    let record = Provenance {
        task: task.into(),
        seed,
        scales,
        inputs,
        output: path.clone(),
        samples: w.len(),
        rate: w.rate,
        elapsed_ms: t0.elapsed().as_secs_f64() * 1e3,
        unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    append_provenance(run.join(bundle::PROVENANCE), &record)?;
    println!("{}", path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn analyze(
    reference: &Path,
    estimate: &Path,
    snr: bool,
    lsd: bool,
    simmat: bool,
    spectrogram: bool,
    out_dir: &Path,
    csv: Option<&Path>,
) -> CmdResult<()> {
    let r = read_input(reference)?;
    let e = if estimate.is_dir() { tasks::reconstruct(&open_run(estimate)?)? } else { read_input(estimate)? };
    let (snr, lsd) = if !(snr || lsd || simmat || spectrogram) { (true, true) } else { (snr, lsd) };
    let name = estimate.display().to_string();
    let mut rows = Vec::new();
    if snr {
        rows.push(MetricRow { file: name.clone(), metric: "snr_db".into(), value: analysis::snr(&r, &e)? });
    }
    if lsd {
        rows.push(MetricRow { file: name.clone(), metric: "lsd".into(), value: analysis::lsd(&r, &e)? });
    }
    if simmat || spectrogram {
        std::fs::create_dir_all(out_dir).map_err(|err| crate::Error::io(out_dir, err))?;
    }
    if simmat {
        let m = analysis::similarity_matrix(&r, &e)?;
        write_pgm(&m.grid, out_dir.join("simmat.pgm"), Some((0.0, 1.0)), true)?;
        write_raw_grid(&m.grid, "SIMMAT", out_dir.join("simmat.f32"))?;
    }
    if spectrogram {
        let write = |g: &Grid, name: &str| write_pgm(g, out_dir.join(name), None, true);
        write(&analysis::spectrogram(&r)?, "reference_spectrogram.pgm")?;
        write(&analysis::spectrogram(&e)?, "estimate_spectrogram.pgm")?;
    }
    if !rows.is_empty() {
        let res = match csv {
            Some(p) => {
                let f = std::fs::File::create(p).map_err(|err| crate::Error::io(p, err))?;
                write_metrics(&rows, f)
            }
            None => write_metrics(&rows, std::io::stdout()),
        };
        res.map_err(|err| Failure { code: 1, message: err.to_string() })?;
    }
    Ok(())
}
