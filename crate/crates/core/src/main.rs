use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use corgs::exec::with_threads;
use corgs::metrics::{disagreement_study, eval_csv, evaluate, study_csv, StudyKind};
use corgs::raster::render;
use corgs::scene::{
    generate_synthetic_scene, load_dataset, load_field, save_dataset, save_field, save_png, save_raw_image,
    SynthOptions,
};
use corgs::train::{train, Mode, Tau, TrainConfig};
use corgs::{Error, Exec};

#[derive(Parser)]
#[command(name = "corgs", version, about = "Co-regularized sparse-view Gaussian splatting")]
struct Cli {
    /// Worker threads for the data-parallel loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a ground-truth field.
    Synth(SynthArgs),
    /// Train one baseline field or a co-regularized group of fields.
    Train(TrainArgs),
    /// Score a field on the test views.
    Eval(EvalArgs),
    /// Percentile-masking study between two fields.
    Study(StudyArgs),
    /// Render one view to PNG plus raw depth.
    Render(RenderArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    gaussians: usize,
    #[arg(long, default_value_t = 3)]
    train_views: usize,
    #[arg(long, default_value_t = 4)]
    test_views: usize,
    /// `N` for N×N or `WxH`.
    #[arg(long, default_value = "64")]
    res: String,
    /// Azimuth span of the training cameras in degrees.
    #[arg(long, default_value_t = 90.0)]
    arc: f64,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "corgs")]
    mode: String,
    #[arg(long)]
    fields: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Co-pruning threshold as a fraction of the scene diagonal.
    #[arg(long, conflicts_with = "tau_absolute")]
    tau_rel: Option<f64>,
    /// Co-pruning threshold in scene units.
    #[arg(long)]
    tau_absolute: Option<f64>,
    /// Weight of the optional Pearson depth term on pseudo views.
    #[arg(long)]
    depth_pearson: Option<f64>,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    field: PathBuf,
    /// Also report Fitness/RMSE against the dataset's ground-truth field.
    #[arg(long)]
    registration: bool,
    #[arg(long, default_value_t = 0.05)]
    tau_rel: f64,
    #[arg(long)]
    tau_absolute: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    field_a: PathBuf,
    #[arg(long)]
    field_b: PathBuf,
    /// `color` or `depth`.
    #[arg(long, default_value = "color")]
    kind: String,
    #[arg(long, value_delimiter = ',', default_value = "0,10,20,30,40,50,60,70,80,90")]
    percentiles: Vec<f64>,
    /// Test view indices (default: all).
    #[arg(long, value_delimiter = ',')]
    views: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    field: PathBuf,
    /// `train:I` or `test:I`.
    #[arg(long)]
    view: String,
    /// Output prefix; writes `PREFIX.png`, `PREFIX_depth.raw` and `PREFIX_color.raw`.
    #[arg(long)]
    out: PathBuf,
}

/// Bad flags or arguments; exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::InvalidArgument(_)) => 2,
        Some(Error::Render { .. }) | Some(Error::Diverged { .. }) => 4,
        Some(_) => 3,
        None => 3,
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    input_sha256: String,
    config: serde_json::Value,
    outputs: Vec<String>,
    seconds: Option<f64>,
}

fn write_manifest(dir: &Path, m: &Manifest<'_>) -> anyhow::Result<()> {
    let mut json = serde_json::to_vec_pretty(m)?;
    json.push(b'\n');
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// SHA-256 over every file under `dir`, visited in sorted order, hashing the
/// relative path and the contents.
fn hash_dir(dir: &Path) -> anyhow::Result<String> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for e in fs::read_dir(dir)? {
            let p = e?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files).with_context(|| format!("reading {}", dir.display()))?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(dir.join(&f))?);
    }
    Ok(format!("{:x}", h.finalize()))
}

fn prepare_out_dir(dir: &Path, force: bool) -> anyhow::Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() && !force {
        return Err(usage(format!("{} exists and is not empty (use --force)", dir.display())));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn parse_res(s: &str) -> anyhow::Result<(usize, usize)> {
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| usage(format!("bad resolution '{s}'")));
    let (w, h) = match s.split_once(['x', 'X']) {
        Some((w, h)) => (parse(w)?, parse(h)?),
        None => {
            let n = parse(s)?;
            (n, n)
        }
    };
    if w == 0 || h == 0 {
        return Err(usage("resolution must be positive"));
    }
    Ok((w, h))
}

fn write_text(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    if a.train_views < 2 {
        return Err(usage("--train-views must be at least 2 (pseudo views need a camera pair)"));
    }
    let res = parse_res(&a.res)?;
    prepare_out_dir(&a.out, a.force)?;
    let mut opts = SynthOptions::new(a.seed, a.gaussians, a.train_views, a.test_views, res);
    opts.arc_deg = a.arc;
    let ds = generate_synthetic_scene(&opts)?;
    save_dataset(&ds, &a.out)?;
    log::info!("wrote dataset to {}", a.out.display());
    Ok(())
}

fn build_config(a: &TrainArgs) -> anyhow::Result<(TrainConfig, Mode)> {
    let mode: Mode = a.mode.parse().map_err(|e: Error| usage(e.to_string()))?;
    let mut cfg = TrainConfig::default();
    if mode == Mode::Baseline {
        cfg.n_fields = 1;
    }
    if let Some(p) = &a.config {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.apply_text(&text).map_err(|e| usage(e.to_string()))?;
    }
    for kv in &a.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(n) = a.fields {
        cfg.n_fields = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(i) = a.iterations {
        cfg.iterations = i;
    }
    if let Some(t) = a.tau_rel {
        cfg.tau = Tau::Relative(t);
    }
    if let Some(t) = a.tau_absolute {
        cfg.tau = Tau::Absolute(t);
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok((cfg, mode))
}

fn cmd_train(a: &TrainArgs, exec: Exec) -> anyhow::Result<()> {
    let (cfg, mode) = build_config(a)?;
    let mut hooks = mode.hooks();
    if let Some(w) = a.depth_pearson {
        hooks.depth_pearson = w;
    }
    if hooks.any() && cfg.n_fields < 2 {
        return Err(usage(format!("mode {} needs --fields >= 2", mode.as_str())));
    }
    let ds = load_dataset(&a.data).with_context(|| format!("loading dataset {}", a.data.display()))?;
    prepare_out_dir(&a.out, a.force)?;
    let outputs: Vec<String> = (0..cfg.n_fields)
        .map(|k| format!("field_{k}.bin"))
        .chain(["train_log.csv".to_string()])
        .collect();
    let mut config = serde_json::to_value(&cfg)?;
    config["mode"] = mode.as_str().into();
    config["hooks"] = serde_json::to_value(hooks)?;
    let mut manifest = Manifest {
        command: "train",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        input_sha256: hash_dir(&a.data)?,
        config,
        outputs,
        seconds: None,
    };
    write_manifest(&a.out, &manifest)?;
    let start = Instant::now();
    let out = train(&ds, &cfg, hooks, exec)?;
    for (k, f) in out.fields.iter().enumerate() {
        save_field(f, a.out.join(format!("field_{k}.bin")))?;
    }
    fs::write(a.out.join("train_log.csv"), out.log.to_csv())?;
    manifest.seconds = Some(start.elapsed().as_secs_f64());
    write_manifest(&a.out, &manifest)?;
    let counts: Vec<usize> = out.fields.iter().map(|f| f.len()).collect();
    log::info!("trained {} field(s), counts {:?}", counts.len(), counts);
    Ok(())
}

fn cmd_eval(a: &EvalArgs, exec: Exec) -> anyhow::Result<()> {
    let ds = load_dataset(&a.data)?;
    let field = load_field(&a.field)?;
    let tau = if a.registration {
        if ds.ground_truth.is_none() {
            bail!("--registration needs gt_field.bin in {}", a.data.display());
        }
        Some(a.tau_absolute.unwrap_or(a.tau_rel * ds.scene_bounds.diagonal()))
    } else {
        None
    };
    let summary = evaluate(&field, &ds, tau, exec)?;
    write_text(a.out.as_deref(), &eval_csv(&summary))
}

fn cmd_study(a: &StudyArgs, exec: Exec) -> anyhow::Result<()> {
    let kind = match a.kind.as_str() {
        "color" => StudyKind::Color,
        "depth" => StudyKind::Depth,
        other => return Err(usage(format!("unknown study kind '{other}'"))),
    };
    let ds = load_dataset(&a.data)?;
    let fa = load_field(&a.field_a)?;
    let fb = load_field(&a.field_b)?;
    let views: Vec<usize> = if a.views.is_empty() {
        (0..ds.test_cameras.len()).collect()
    } else {
        a.views.clone()
    };
    let rows = disagreement_study(&fa, &fb, &ds, &views, &a.percentiles, kind, exec)?;
    write_text(a.out.as_deref(), &study_csv(&rows))
}

fn cmd_render(a: &RenderArgs, exec: Exec) -> anyhow::Result<()> {
    let (split, idx) = a
        .view
        .split_once(':')
        .ok_or_else(|| usage("--view must look like train:I or test:I"))?;
    let idx: usize = idx.parse().map_err(|_| usage(format!("bad view index '{idx}'")))?;
    let ds = load_dataset(&a.data)?;
    let cams = match split {
        "train" => &ds.train_cameras,
        "test" => &ds.test_cameras,
        _ => return Err(usage(format!("unknown split '{split}'"))),
    };
    let cam = cams
        .get(idx)
        .ok_or_else(|| usage(format!("{split} view {idx} out of range ({} views)", cams.len())))?;
    let field = load_field(&a.field)?;
    let out = render(&field, cam, ds.background, exec)?;
    let with_suffix = |s: &str| {
        let mut p = a.out.clone().into_os_string();
        p.push(s);
        PathBuf::from(p)
    };
    save_png(&out.color, with_suffix(".png"))?;
    save_raw_image(&out.color, with_suffix("_color.raw"))?;
    save_raw_image(&out.depth, with_suffix("_depth.raw"))?;
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let exec = Exec::Parallel;
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a, exec),
        Command::Eval(a) => cmd_eval(a, exec),
        Command::Study(a) => cmd_study(a, exec),
        Command::Render(a) => cmd_render(a, exec),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => with_threads(n, || run(&cli)),
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
