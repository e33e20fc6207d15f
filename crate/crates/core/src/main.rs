use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use feattrack::dictlearn::{init_dictionary, Dictionary, InitMethod};
use feattrack::encode::{EncoderMethod, EncoderSpec};
use feattrack::lasso::default_lambda;
use feattrack::lssvm::BiasMode;
use feattrack::metrics::{evaluate, read_trajectory, write_report, write_trajectory};
use feattrack::patchgrid::{extract_normalized, PatchGridSpec};
use feattrack::pyrpool::PyramidSpec;
use feattrack::seqio::{load_sequence, load_truth, save_sequence, synth_sequence, BoundingBox, SynthParams};
use feattrack::tracker::{track_sequence_with, DictUpdateMode, TrackerConfig};
use feattrack::{Error, Result};

#[derive(Parser)]
#[command(name = "feattrack", version, about = "Tracking with learned sparse-coded patch features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a target through a frame directory.
    Track(TrackArgs),
    /// Per-frame VOR/CLE of a trajectory against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Learn a dictionary from the first frame around a box.
    LearnDict(LearnDictArgs),
    /// Compare settings of one parameter across sequences.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct TuningArgs {
    #[arg(long, default_value = "st")]
    encoder: EncoderMethod,
    #[arg(long, value_enum, default_value_t = UpdateArg::Triggered)]
    dict_update: UpdateArg,
    #[arg(long, default_value_t = 100)]
    dict_size: usize,
    #[arg(long, default_value = "odl")]
    dict_method: InitMethod,
    #[arg(long, default_value = "1,2,3")]
    levels: PyramidSpec,
    /// Patch side; picked from the target size when omitted.
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = feattrack::lssvm::DEFAULT_GAMMA)]
    gamma: f64,
    /// Use the bias N₊N₋/N − μᵀw instead of the least-squares one.
    #[arg(long)]
    bias_verbatim: bool,
    /// LSA: normalize over the k nearest bases only.
    #[arg(long)]
    lsa_local_denominator: bool,
    /// Take frame 2 from the truth file instead of detecting it.
    #[arg(long)]
    gt_frame2: bool,
    /// Start from this dictionary instead of learning one.
    #[arg(long)]
    dict_in: Option<PathBuf>,
    /// Save the final dictionary.
    #[arg(long)]
    dict_out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum UpdateArg {
    Off,
    Triggered,
    Always,
}

impl From<UpdateArg> for DictUpdateMode {
    fn from(u: UpdateArg) -> Self {
        match u {
            UpdateArg::Off => DictUpdateMode::Off,
            UpdateArg::Triggered => DictUpdateMode::Triggered,
            UpdateArg::Always => DictUpdateMode::Always,
        }
    }
}

impl TuningArgs {
    fn grid(&self) -> Result<Option<PatchGridSpec>> {
        match (self.patch, self.stride) {
            (None, None) => Ok(None),
            (Some(p), q) => PatchGridSpec::new(p, q.unwrap_or((p / 2).max(1))).map(Some),
            (None, Some(_)) => Err(Error::InvalidParameter("--stride needs --patch".into())),
        }
    }

    fn config(&self) -> Result<TrackerConfig> {
        let mut encoder = EncoderSpec::with_method(self.encoder);
        encoder.lsa_local_denominator = self.lsa_local_denominator;
        Ok(TrackerConfig {
            dict_update_mode: self.dict_update.into(),
            grid: self.grid()?,
            encoder,
            pyramid: self.levels.clone(),
            gamma: self.gamma,
            bias: if self.bias_verbatim { BiasMode::Verbatim } else { BiasMode::Corrected },
            seed: self.seed,
            dict_size: self.dict_size,
            dict_method: self.dict_method,
            gt_frame2: self.gt_frame2,
            ..TrackerConfig::default()
        })
    }
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    seq: PathBuf,
    /// Initial box "x,y,w,h"; defaults to the first truth box.
    #[arg(long)]
    init: Option<BoundingBox>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Truth file uses 1-based coordinates.
    #[arg(long)]
    one_based: bool,
    #[command(flatten)]
    tuning: TuningArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    one_based: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 320)]
    width: usize,
    #[arg(long, default_value_t = 240)]
    height: usize,
    #[arg(long, default_value_t = 50)]
    frames: usize,
    #[arg(long, default_value_t = 40)]
    target_size: usize,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    vx: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    vy: f64,
    #[arg(long, default_value_t = 0.5)]
    jitter: f64,
    #[arg(long, default_value_t = 8.0)]
    noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Top-left of the target in frame 1, "x,y".
    #[arg(long)]
    start: Option<String>,
}

#[derive(Args)]
struct LearnDictArgs {
    #[arg(long)]
    seq: PathBuf,
    #[arg(long)]
    init: Option<BoundingBox>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    one_based: bool,
    #[arg(long, default_value = "odl")]
    method: InitMethod,
    #[arg(long, default_value_t = 100)]
    dict_size: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Sparsity weight; 1.2/√m by default.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Margin around the box used for patches.
    #[arg(long, default_value_t = 60)]
    margin: i32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum SweepParam {
    DictSize,
    Levels,
    Encoder,
    DictMethod,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Sequence directories, each with a groundtruth.txt.
    #[arg(long, required = true, num_args = 1..)]
    seq: Vec<PathBuf>,
    /// Comma-separated values; a sensible default set per parameter.
    /// Levels are separated by ';' here, e.g. "1;1,2;1,2,3".
    #[arg(long)]
    values: Option<String>,
    #[arg(long)]
    one_based: bool,
    #[command(flatten)]
    tuning: TuningArgs,
    #[arg(long)]
    out: PathBuf,
}

fn truth_path(seq: &Path, given: &Option<PathBuf>) -> Option<PathBuf> {
    given.clone().or_else(|| {
        let p = seq.join("groundtruth.txt");
        p.exists().then_some(p)
    })
}

fn load_with_truth(seq_dir: &Path, truth: &Option<PathBuf>, one_based: bool) -> Result<feattrack::Sequence> {
    let mut seq = load_sequence(seq_dir, None)?;
    if let Some(p) = truth_path(seq_dir, truth) {
        seq.attach_truth(load_truth(&p, one_based)?)?;
    }
    Ok(seq)
}

fn initial_box(init: Option<BoundingBox>, seq: &feattrack::Sequence) -> Result<BoundingBox> {
    init.or_else(|| seq.truth.as_ref().and_then(|t| t.first().copied()))
        .ok_or_else(|| Error::InvalidParameter("no --init and no truth to take it from".into()))
}

fn run_track(a: &TrackArgs) -> Result<()> {
    let seq = load_with_truth(&a.seq, &a.truth, a.one_based)?;
    let init = initial_box(a.init, &seq)?;
    let cfg = a.tuning.config()?;
    let dict = a.tuning.dict_in.as_deref().map(Dictionary::load).transpose()?;
    let start = std::time::Instant::now();
    let (records, tracker) = track_sequence_with(&seq, init, &cfg, dict)?;
    let secs = start.elapsed().as_secs_f64();
    write_trajectory(&a.out, &records)?;
    if let Some(p) = &a.tuning.dict_out {
        tracker.dictionary().save(p)?;
    }
    eprintln!(
        "{} frames in {:.2}s ({:.2} fps), {} dictionary updates",
        records.len(),
        secs,
        records.len() as f64 / secs.max(1e-9),
        tracker.update_count()
    );
    if let Some(truth) = &seq.truth {
        let traj: Vec<BoundingBox> = records.iter().map(|r| r.bbox).collect();
        let rep = evaluate(&traj, truth)?;
        eprintln!("mean VOR {:.4}, mean CLE {:.3}", rep.mean_vor, rep.mean_cle);
    }
    Ok(())
}

fn run_eval(a: &EvalArgs) -> Result<()> {
    let records = read_trajectory(&a.traj)?;
    let traj: Vec<BoundingBox> = records.iter().map(|r| r.bbox).collect();
    let truth = load_truth(&a.truth, a.one_based)?;
    let rep = evaluate(&traj, &truth)?;
    write_report(&a.out, &rep)?;
    println!("mean_vor,mean_cle\n{:.6},{:.6}", rep.mean_vor, rep.mean_cle);
    Ok(())
}

fn parse_pair(s: &str) -> Result<(i32, i32)> {
    let bad = || Error::InvalidParameter(format!("expected \"x,y\", got {s:?}"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    Ok((x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?))
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let params = SynthParams {
        frame_w: a.width,
        frame_h: a.height,
        n_frames: a.frames,
        target_size: a.target_size,
        velocity: (a.vx, a.vy),
        jitter_sigma: a.jitter,
        noise_sigma: a.noise,
        seed: a.seed,
        start: a.start.as_deref().map(parse_pair).transpose()?,
    };
    let seq = synth_sequence(&params)?;
    save_sequence(&seq, &a.out)
}

fn run_learn_dict(a: &LearnDictArgs) -> Result<()> {
    let seq = load_with_truth(&a.seq, &a.truth, a.one_based)?;
    let init = initial_box(a.init, &seq)?;
    let grid = match a.patch {
        Some(p) => PatchGridSpec::new(p, a.stride.unwrap_or((p / 2).max(1)))?,
        None => PatchGridSpec::for_target(init.w, init.h),
    };
    let patches = extract_normalized(&seq.frames[0], &init.expand(a.margin), &grid)?;
    let lambda = a.lambda.unwrap_or_else(|| default_lambda(grid.dim()));
    let (dict, _) = init_dictionary(a.method, &patches.data, a.dict_size, a.epochs, lambda, a.seed)?;
    dict.save(&a.out)
}

fn sweep_values(param: SweepParam, given: &Option<String>) -> Vec<String> {
    let sep = match param {
        SweepParam::Levels => ';',
        _ => ',',
    };
    if let Some(v) = given {
        return v.split(sep).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    let defaults: &[&str] = match param {
        SweepParam::DictSize => &["64", "100", "144", "196"],
        SweepParam::Levels => &["1", "1,2", "1,2,3", "1,2,3,4"],
        SweepParam::Encoder => &["st", "tk", "sa", "lsa", "sc"],
        SweepParam::DictMethod => &["odl", "kmeans", "rs"],
    };
    defaults.iter().map(|s| s.to_string()).collect()
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    let base = a.tuning.config()?;
    let name = match a.param {
        SweepParam::DictSize => "dict-size",
        SweepParam::Levels => "levels",
        SweepParam::Encoder => "encoder",
        SweepParam::DictMethod => "dict-method",
    };
    let mut sequences = Vec::new();
    for dir in &a.seq {
        let seq = load_with_truth(dir, &None, a.one_based)?;
        if seq.truth.is_none() {
            return Err(Error::InvalidParameter(format!("{} has no groundtruth.txt", dir.display())));
        }
        sequences.push(seq);
    }
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(["param", "value", "sequence", "mean_vor", "mean_cle"])?;
    for value in sweep_values(a.param, &a.values) {
        let mut cfg = base.clone();
        match a.param {
            SweepParam::DictSize => {
                cfg.dict_size = value
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad dictionary size {value:?}")))?
            }
            SweepParam::Levels => cfg.pyramid = value.parse()?,
            SweepParam::Encoder => cfg.encoder.method = value.parse()?,
            SweepParam::DictMethod => cfg.dict_method = value.parse()?,
        }
        for seq in &sequences {
            let truth = seq.truth.as_ref().expect("checked above");
            let (records, _) = track_sequence_with(seq, truth[0], &cfg, None)?;
            let traj: Vec<BoundingBox> = records.iter().map(|r| r.bbox).collect();
            let rep = evaluate(&traj, truth)?;
            log::info!("{name}={value} {}: vor {:.4} cle {:.3}", seq.name, rep.mean_vor, rep.mean_cle);
            w.write_record([
                name.to_string(),
                value.clone(),
                seq.name.clone(),
                format!("{:.6}", rep.mean_vor),
                format!("{:.6}", rep.mean_cle),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Track(a) => run_track(a),
        Command::Eval(a) => run_eval(a),
        Command::Synth(a) => run_synth(a),
        Command::LearnDict(a) => run_learn_dict(a),
        Command::Sweep(a) => run_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("feattrack: {e}");
            ExitCode::FAILURE
        }
    }
}
