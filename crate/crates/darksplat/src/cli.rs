//! The `darksplat` command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 file or IO
//! failure, 4 numeric divergence. Summaries go to the writer passed to
//! [`run`]; diagnostics go to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Once;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use darksplat_core::events::{simulate_events, y_noise_filter};
use darksplat_core::metrics::{psnr, ssim};
use darksplat_core::synth::generate_turntable;
use darksplat_core::train::{ablate, held_out_views, MetricsRow, TrainObserver, ABLATION_ROWS};
use darksplat_core::{
    render_image, train, Dataset, EventModelParams, EventStream, Image, LossConfig, NoiseFilterParams, ProviderConfig,
    ProviderMode, PseudoBrightProvider, Scene, TrainConfig, TurntableConfig,
};

use crate::config::read_config;
use crate::dataset_io::{frame_name, load_dataset, read_poses, save_dataset};
use crate::error::DataError;
use crate::event_io::{read_events, write_events};
use crate::image_io::{load_png, save_png};
use crate::scene_io::{config_hash, load_scene, save_scene, SceneFile};

/// Ground-truth scene written next to a synthetic dataset.
pub const GT_SCENE_FILE: &str = "scene_gt.gs";
pub const METRICS_HEADER: &str = "iteration,loss_total,loss_hol,loss_event,loss_mix,psnr,n_gaussians";
pub const ABLATION_HEADER: &str = "terms,hol,event,mix,psnr,ssim";
pub const THREADS_ENV: &str = "DARKSPLAT_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Core(#[from] darksplat_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use darksplat_core::Error as E;
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Core(E::TrainingDiverged { .. } | E::NumericDegeneracy(_)) => 4,
            Self::Core(_) => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "darksplat", version, about = "Event-assisted Gaussian splatting for low-light scenes")]
pub struct Cli {
    /// Flat key=value file of flag defaults; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic turntable dataset and its ground-truth scene.
    Synth(SynthArgs),
    /// Optimize a scene on a dataset.
    Train(TrainArgs),
    /// Render a scene at the views of a poses file.
    Render(RenderArgs),
    /// Mean PSNR/SSIM of renders against reference images.
    Eval(EvalArgs),
    /// Remove unsupported (noise) events from a stream.
    Filter(FilterArgs),
    /// Simulate events from a sequence of frames.
    Simulate(SimulateArgs),
    /// Train every loss-term subset and tabulate held-out quality.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = TurntableConfig::default().views)]
    pub views: usize,
    #[arg(long, default_value_t = TurntableConfig::default().gaussians)]
    pub gaussians: usize,
    #[arg(long, default_value_t = TurntableConfig::default().dark_gain)]
    pub dark_gain: f64,
    /// Background-activity events per pixel per second.
    #[arg(long, default_value_t = TurntableConfig::default().noise_rate)]
    pub noise_rate: f64,
    #[arg(long, default_value_t = TurntableConfig::default().sensor_noise)]
    pub sensor_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = TurntableConfig::default().width)]
    pub width: u32,
    #[arg(long, default_value_t = TurntableConfig::default().height)]
    pub height: u32,
    #[arg(long, default_value_t = TurntableConfig::default().focal)]
    pub focal: f64,
    #[arg(long, default_value_t = TurntableConfig::default().radius)]
    pub radius: f64,
    #[arg(long, default_value_t = TurntableConfig::default().sh_degree)]
    pub sh_degree: usize,
    /// Write events as CSV text instead of the binary format.
    #[arg(long)]
    pub text_events: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

/// Optimization flags shared by `train` and `ablate`.
#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long, default_value_t = TrainConfig::default().iterations)]
    pub iters: usize,
    /// Weight of the event loss.
    #[arg(long, default_value_t = LossConfig::default().lambda1)]
    pub lambda1: f64,
    /// Weight of the mixed-modality loss.
    #[arg(long, default_value_t = LossConfig::default().lambda2)]
    pub lambda2: f64,
    /// oracle, oracle-degraded or gain.
    #[arg(long, default_value = "oracle-degraded", value_parser = parse_provider)]
    pub provider: ProviderMode,
    #[arg(long, value_enum, default_value_t = Toggle::Off)]
    pub densify: Toggle,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hold out every n-th view for evaluation (0 keeps all views).
    #[arg(long, default_value_t = TrainConfig::default().holdout_every)]
    pub holdout: usize,
    #[arg(long, default_value_t = TrainConfig::default().init_points)]
    pub init_points: usize,
    #[arg(long, default_value_t = TrainConfig::default().sh_degree)]
    pub sh_degree: usize,
    /// Iterations trained on the frame loss alone before the event terms start.
    #[arg(long, default_value_t = TrainConfig::default().aux_warmup)]
    pub aux_warmup: usize,
    #[arg(long, default_value_t = TrainConfig::default().log_interval)]
    pub log_interval: usize,
    #[arg(long, default_value_t = ProviderConfig::default().blur_sigma)]
    pub blur_sigma: f64,
    #[arg(long, default_value_t = ProviderConfig::default().noise_sigma)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = ProviderConfig::default().gain)]
    pub gain: f64,
}

fn parse_provider(s: &str) -> Result<ProviderMode, String> {
    s.parse().map_err(|e: darksplat_core::Error| e.to_string())
}

impl TrainFlags {
    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig {
            iterations: self.iters,
            init_points: self.init_points,
            seed: self.seed,
            sh_degree: self.sh_degree,
            holdout_every: self.holdout,
            log_interval: self.log_interval,
            aux_warmup: self.aux_warmup,
            ..Default::default()
        };
        cfg.loss.lambda1 = self.lambda1;
        cfg.loss.lambda2 = self.lambda2;
        cfg.densify.enabled = self.densify == Toggle::On;
        cfg
    }

    pub fn provider_config(&self) -> ProviderConfig {
        ProviderConfig {
            mode: self.provider,
            blur_sigma: self.blur_sigma,
            noise_sigma: self.noise_sigma,
            gain: self.gain,
            seed: self.seed,
        }
    }

    pub fn provider(&self, dataset: &Dataset) -> CliResult<PseudoBrightProvider> {
        let oracle = match self.provider {
            ProviderMode::Gain => None,
            _ => Some(
                dataset
                    .bright_frames
                    .clone()
                    .ok_or_else(|| usage("oracle providers need bright/ frames in the dataset"))?,
            ),
        };
        Ok(PseudoBrightProvider::new(self.provider_config(), oracle)?)
    }

    fn hash(&self) -> [u8; 32] {
        config_hash(&format!("{:?}\n{:?}", self.train_config(), self.provider_config()))
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output scene file.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics CSV; defaults to the scene path with a `.csv` extension.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Save `<out>.<iteration>.gs` every n iterations (0 disables).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Render only this view.
    #[arg(long)]
    pub view: Option<usize>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub renders: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct FilterArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = NoiseFilterParams::default().window_us)]
    pub window_us: u64,
    #[arg(long, default_value_t = NoiseFilterParams::default().neighborhood)]
    pub neighborhood: u32,
    #[arg(long, default_value_t = NoiseFilterParams::default().min_support)]
    pub min_support: u32,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    /// Directory of PNG frames, taken in file-name order.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = EventModelParams::default().epsilon)]
    pub epsilon: f64,
    /// Seconds between consecutive frames.
    #[arg(long, default_value_t = TurntableConfig::default().frame_interval)]
    pub interval: f64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
}

/// Locate `--config` and the subcommand position in raw arguments.
fn scan_args(args: &[OsString]) -> (Option<PathBuf>, Option<usize>) {
    let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if sub.is_none() && names.iter().any(|n| *n == a) {
            sub = Some(i);
        }
        i += 1;
    }
    (config, sub)
}

/// Splice config-file entries in as flags right after the subcommand name,
/// so later command-line occurrences override them.
fn apply_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let (Some(path), Some(sub_at)) = scan_args(&args) else {
        return Ok(args);
    };
    let entries = read_config(&path)?;
    let name = args[sub_at].to_string_lossy().into_owned();
    let root = Cli::command();
    let sub = root.find_subcommand(&name).expect("scan_args matched a subcommand");
    let mut extra = Vec::new();
    for e in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(e.key.as_str()) && e.key != "config")
            .ok_or_else(|| {
                usage(format!("{}:{}: `{}` is not an option of `{name}`", path.display(), e.line, e.key))
            })?;
        if arg.get_action().takes_values() {
            extra.push(OsString::from(format!("--{}", e.key)));
            extra.push(OsString::from(e.value));
        } else {
            match e.value.as_str() {
                "true" | "on" | "1" => extra.push(OsString::from(format!("--{}", e.key))),
                "false" | "off" | "0" => {}
                v => return Err(usage(format!("{}:{}: `{v}` is not a boolean", path.display(), e.line))),
            }
        }
    }
    let mut out = args;
    out.splice(sub_at + 1..sub_at + 1, extra);
    Ok(out)
}

fn configure_threads() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        let Ok(v) = std::env::var(THREADS_ENV) else { return };
        match v.trim().parse::<usize>() {
            Ok(n) => {
                if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
                    log::warn!("{THREADS_ENV}: thread pool already initialized");
                }
            }
            Err(_) => log::warn!("{THREADS_ENV}={v} is not a thread count; using the default"),
        }
    });
}

/// Parse arguments, including any `--config` overlay, without running anything.
pub fn parse<I, T>(args: I) -> CliResult<Cli>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args = apply_config(args.into_iter().map(Into::into).collect())?;
    Cli::try_parse_from(args).map_err(|e| usage(e.render().to_string()))
}

/// Run the command line and return the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    configure_threads();
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match apply_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            eprint!("{}", e.render());
            return 2;
        }
        Err(e) => {
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Render(a) => cmd_render(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Filter(a) => cmd_filter(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Ablate(a) => cmd_ablate(&a, out),
    }
}

fn emit(out: &mut dyn Write, line: &str) -> CliResult<()> {
    writeln!(out, "{line}").map_err(|e| DataError::io(Path::new("<stdout>"), e).into())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| DataError::io(path, e).into())
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| DataError::io(path, e).into())
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.views < 8 {
        return Err(usage("--views must be at least 8"));
    }
    let cfg = TurntableConfig {
        gaussians: a.gaussians,
        radius: a.radius,
        views: a.views,
        width: a.width,
        height: a.height,
        focal: a.focal,
        dark_gain: a.dark_gain,
        sensor_noise: a.sensor_noise,
        noise_rate: a.noise_rate,
        sh_degree: a.sh_degree,
        seed: a.seed,
        ..Default::default()
    };
    let (scene, dataset) = generate_turntable(&cfg)?;
    save_dataset(&dataset, &a.out, a.text_events)?;
    let file = SceneFile { scene, config_hash: config_hash(&format!("{cfg:?}")) };
    save_scene(&a.out.join(GT_SCENE_FILE), &file)?;
    emit(out, &format!("views={} events={} gaussians={}", dataset.len(), dataset.events.len(), a.gaussians))
}

/// Metrics rows as CSV text, header included.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let psnr = r.psnr.map(|p| p.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iteration, r.loss_total, r.loss_hol, r.loss_event, r.loss_mix, psnr, r.n_gaussians
        ));
    }
    s
}

struct CliObserver {
    checkpoint_every: usize,
    out: PathBuf,
    hash: [u8; 32],
    error: Option<DataError>,
}

impl CliObserver {
    fn checkpoint_path(&self, iteration: usize) -> PathBuf {
        let stem = self.out.file_stem().unwrap_or_default().to_string_lossy();
        self.out.with_file_name(format!("{stem}.{iteration}.gs"))
    }
}

impl TrainObserver for CliObserver {
    fn on_metrics(&mut self, row: &MetricsRow) {
        log::info!(
            "iteration {}: loss {:.6} (hol {:.6}, event {:.6}, mix {:.6}) psnr {:?}",
            row.iteration,
            row.loss_total,
            row.loss_hol,
            row.loss_event,
            row.loss_mix,
            row.psnr
        );
    }

    fn on_iteration(&mut self, iteration: usize, scene: &Scene) {
        if self.checkpoint_every == 0 || iteration % self.checkpoint_every != 0 || self.error.is_some() {
            return;
        }
        let file = SceneFile { scene: scene.clone(), config_hash: self.hash };
        if let Err(e) = save_scene(&self.checkpoint_path(iteration), &file) {
            self.error = Some(e);
        }
    }
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let dataset = load_dataset(&a.data)?;
    let provider = a.flags.provider(&dataset)?;
    let cfg = a.flags.train_config();
    let mut observer =
        CliObserver { checkpoint_every: a.checkpoint_every, out: a.out.clone(), hash: a.flags.hash(), error: None };
    let result = train(&dataset, &cfg, &provider, &mut observer)?;
    if let Some(e) = observer.error {
        return Err(e.into());
    }
    save_scene(&a.out, &SceneFile { scene: result.scene.clone(), config_hash: observer.hash })?;
    let metrics_path = a.metrics.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    write_text(&metrics_path, &metrics_csv(&result.metrics))?;
    let mut summary = format!("iterations={} gaussians={}", cfg.iterations, result.scene.len());
    if let Some(p) = result.metrics.last().and_then(|r| r.psnr) {
        summary.push_str(&format!(" psnr={p:?}"));
    }
    emit(out, &summary)
}

fn cmd_render(a: &RenderArgs, out: &mut dyn Write) -> CliResult<()> {
    let scene = load_scene(&a.scene)?.scene;
    let poses = read_poses(&a.poses)?;
    let cameras = poses.cameras(&a.poses)?;
    let views: Vec<usize> = match a.view {
        Some(v) if v >= cameras.len() => {
            return Err(usage(format!("view {v} out of range ({} views)", cameras.len())));
        }
        Some(v) => vec![v],
        None => (0..cameras.len()).collect(),
    };
    create_dir(&a.out)?;
    for &v in &views {
        let img = render_image(&scene, &cameras[v], [0.0; 3]);
        save_png(&a.out.join(frame_name(v)), &img)?;
    }
    emit(out, &format!("rendered={}", views.len()))
}

fn png_names(dir: &Path) -> CliResult<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| DataError::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| DataError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Mean PSNR and SSIM over the PNGs of `renders`, each paired with the
/// same-named file in `reference`.
pub fn eval_dirs(renders: &Path, reference: &Path) -> CliResult<(f64, f64)> {
    let names = png_names(renders)?;
    if names.is_empty() {
        return Err(usage(format!("{} contains no PNG files", renders.display())));
    }
    let (mut p, mut s) = (0.0, 0.0);
    for name in &names {
        let path = renders.join(name);
        let a = load_png(&path)?;
        let b = load_png(&reference.join(name))?;
        p += psnr(&a, &b).map_err(|e| DataError::core(&path, e))?;
        s += ssim(&a, &b).map_err(|e| DataError::core(&path, e))?;
    }
    let n = names.len() as f64;
    Ok((p / n, s / n))
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let (p, s) = eval_dirs(&a.renders, &a.reference)?;
    emit(out, &format!("psnr={p:?} ssim={s:?}"))
}

fn cmd_filter(a: &FilterArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.window_us == 0 {
        return Err(usage("--window-us must be positive"));
    }
    let params = NoiseFilterParams { window_us: a.window_us, neighborhood: a.neighborhood, min_support: a.min_support };
    params.validate()?;
    let stream = read_events(&a.input)?;
    let kept = y_noise_filter(&stream, &params)?;
    write_events(&a.out, &kept)?;
    emit(out, &format!("kept={} removed={}", kept.len(), stream.len() - kept.len()))
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let params = EventModelParams { epsilon: a.epsilon, window: a.interval, ..Default::default() };
    params.validate()?;
    let names = png_names(&a.frames)?;
    if names.len() < 2 {
        return Err(usage(format!("{} needs at least two PNG frames", a.frames.display())));
    }
    let frames: Vec<Image> = names.iter().map(|n| load_png(&a.frames.join(n))).collect::<Result<_, _>>()?;
    let mut stream = EventStream::new(frames[0].width, frames[0].height);
    for k in 1..frames.len() {
        let chunk = simulate_events(&frames[k - 1], &frames[k], (k - 1) as f64 * a.interval, k as f64 * a.interval, &params)
            .map_err(|e| DataError::core(&a.frames.join(&names[k]), e))?;
        stream.events.extend(chunk.events);
    }
    write_events(&a.out, &stream)?;
    emit(out, &format!("frames={} events={}", frames.len(), stream.len()))
}

fn terms_label(hol: bool, event: bool, mix: bool) -> String {
    [(hol, 'H'), (event, 'E'), (mix, 'M')].iter().filter(|(on, _)| *on).map(|(_, c)| *c).collect()
}

fn cmd_ablate(a: &AblateArgs, out: &mut dyn Write) -> CliResult<()> {
    let dataset = load_dataset(&a.data)?;
    let provider = a.flags.provider(&dataset)?;
    let cfg = a.flags.train_config();
    if held_out_views(&dataset, &cfg).is_empty() {
        return Err(usage("ablation needs held-out views (--holdout > 0)"));
    }
    let rows = ablate(&dataset, &cfg, &provider)?;
    debug_assert_eq!(rows.len(), ABLATION_ROWS.len());
    let mut csv = String::from(ABLATION_HEADER);
    csv.push('\n');
    for r in &rows {
        let s = r.selection;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            terms_label(s.hol, s.event, s.mix),
            s.hol as u8,
            s.event as u8,
            s.mix as u8,
            r.psnr,
            r.ssim
        ));
    }
    write_text(&a.out, &csv)?;
    emit(out, &format!("rows={}", rows.len()))
}
