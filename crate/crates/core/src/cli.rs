//! Command-line front end: `train`, `eval`, `oracle`, `plotgrid`, `selftest`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{label_modes, Env, EnvKind, ShapeKind};
use crate::error::{Error, Result};
use crate::eval::{mode_rank_shares, EvalSpec, Policy};
use crate::models::Checkpoint;
use crate::selftest;
use crate::trainer::{load_actor, write_log_csv, Profile, TrainConfig, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ENV: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "fdgen", version, about = "f-divergence trained generative samplers")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an actor and write checkpoint, log and resolved config.
    Train(TrainArgs),
    /// Accuracy and mode-rank report for a checkpoint.
    Eval(EvalArgs),
    /// Dump the ground-truth feasibility grid of one state.
    Oracle(OracleArgs),
    /// Heat grid of actor samples projected onto the x-y plane.
    Plotgrid(PlotArgs),
    /// Run the built-in oracle and finite-difference checks.
    Selftest,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub divergence: Option<String>,
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `total_steps`.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Any further config key, e.g. `--set actor_lr=1e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// States per group; defaults to 256 (desk) or 1024 (paper).
    #[arg(long)]
    pub states: Option<usize>,
    /// Actions per state; defaults like `--states`.
    #[arg(long)]
    pub actions: Option<usize>,
    /// Fraction of lowest-density actions rejected per state.
    #[arg(long, default_value_t = 0.0)]
    pub action_opt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Oracle grid resolution `Gx,Gy,Ga`.
    #[arg(long, default_value = "64,64,32", value_parser = parse_resolution)]
    pub resolution: [usize; 3],
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value = "grasp2d")]
    pub env: String,
    #[arg(long, default_value = "H")]
    pub shape: String,
    #[arg(long, default_value = "64,64,32", value_parser = parse_resolution)]
    pub resolution: [usize; 3],
    /// Draw a random state of the shape instead of the canonical one.
    #[arg(long)]
    pub state_seed: Option<u64>,
    /// Optional per-cell CSV next to the dump.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub state_seed: u64,
    #[arg(long, default_value_t = 4096)]
    pub samples: usize,
    /// Heat-grid resolution `Gx,Gy`.
    #[arg(long, default_value = "64,64", value_parser = parse_pair)]
    pub resolution: [usize; 2],
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_list(s: &str, n: usize) -> std::result::Result<Vec<usize>, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n || v.contains(&0) {
        return Err(format!("expected {n} positive comma-separated integers"));
    }
    Ok(v)
}

fn parse_resolution(s: &str) -> std::result::Result<[usize; 3], String> {
    let v = parse_list(s, 3)?;
    Ok([v[0], v[1], v[2]])
}

fn parse_pair(s: &str) -> std::result::Result<[usize; 2], String> {
    let v = parse_list(s, 2)?;
    Ok([v[0], v[1]])
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::EnvironmentTooSparse { .. } => EXIT_ENV,
        Error::Config(_) | Error::Checkpoint(_) | Error::Format(_) | Error::InvalidBandwidth => EXIT_USAGE,
        _ => EXIT_INTERNAL,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return EXIT_USAGE;
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Oracle(a) => oracle(a),
        Command::Plotgrid(a) => plotgrid(a),
        Command::Selftest => return selftest_cmd(),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn resolve_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut layers = Vec::new();
    if let Some(p) = &a.config {
        let text = String::from_utf8(read_input(p)?)
            .map_err(|_| Error::Config(format!("{}: not utf-8", p.display())))?;
        layers.push(TrainConfig::parse_text(&text)?);
    }
    let mut cli = Vec::new();
    let flags = [
        ("profile", a.profile.clone()),
        ("env", a.env.clone()),
        ("divergence", a.divergence.clone()),
        ("seed", a.seed.map(|s| s.to_string())),
        ("total_steps", a.steps.map(|s| s.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cli.push((k.to_string(), v));
        }
    }
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cli.push((k.trim().to_string(), v.trim().to_string()));
    }
    layers.push(cli);
    TrainConfig::from_layers(&layers)
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = resolve_config(&a)?;
    fs::create_dir_all(&a.out)?;
    write_atomic(&a.out.join("config.txt"), cfg.to_text().as_bytes())?;
    let ck_path = a.out.join("checkpoint.bin");
    let every = cfg.checkpoint_every as u64;
    let total = cfg.total_steps as u64;
    eprintln!(
        "training {} on {} ({} profile), {} steps, seed {}",
        cfg.divergence, cfg.env, cfg.profile, total, cfg.seed
    );
    let start = Instant::now();
    let mut trainer = Trainer::new(cfg)?;
    let mut timing = String::from("step,elapsed_s\n");
    let report = (total / 20).max(1);
    let log = trainer.run(total as usize, |t, rec| {
        if every > 0 && rec.step % every == 0 {
            write_atomic(&ck_path, &t.to_checkpoint().encode())?;
        }
        if rec.step % report == 0 || rec.step == total {
            let secs = start.elapsed().as_secs_f64();
            let _ = writeln!(timing, "{},{secs:.3}", rec.step);
            eprintln!(
                "step {:>8}  divergence {:>10}  critic loss {:.4}  {:.1}s",
                rec.step,
                rec.divergence.map_or("-".into(), |d| format!("{d:.4}")),
                rec.critic_loss,
                secs
            );
        }
        Ok(())
    })?;
    write_atomic(&ck_path, &trainer.to_checkpoint().encode())?;
    let mut csv = Vec::new();
    write_log_csv(&mut csv, &log)?;
    write_atomic(&a.out.join("log.csv"), &csv)?;
    write_atomic(&a.out.join("timing.csv"), timing.as_bytes())?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ck = Checkpoint::decode(&read_input(&a.checkpoint)?)?;
    let (cfg, actor) = load_actor(&ck)?;
    let default = match cfg.profile {
        Profile::Desk => 256,
        Profile::Paper => 1024,
    };
    let spec = EvalSpec {
        action_opt: a.action_opt,
        resolution: a.resolution,
        ..EvalSpec::new(
            a.states.unwrap_or(default),
            a.actions.unwrap_or(default),
            cfg.sigma.clone(),
            a.seed,
        )
    };
    let env = cfg.make_env();
    let report = mode_rank_shares(&actor, &env, &cfg.shapes, &spec)?;
    report.validate()?;
    let mut label = cfg.divergence.as_str().to_uppercase();
    if spec.action_opt > 0.0 {
        label.push('*');
    }
    fs::create_dir_all(&a.out)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_atomic(&a.out.join("report.csv"), &csv)?;
    let summary = report.summary(&label);
    write_atomic(&a.out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let kind: EnvKind = a.env.parse()?;
    let shape: ShapeKind = a.shape.parse()?;
    let env = Env::new(kind);
    let state = match a.state_seed {
        Some(s) => env.generate_shape_state(shape, &mut ChaCha8Rng::seed_from_u64(s)),
        None => env.canonical_state(shape),
    };
    let grid = env.feasible_grid(&state, a.resolution);
    let labels = label_modes(&grid);
    let mut dump = Vec::new();
    grid.write_dump(&mut dump, labels.count)?;
    write_atomic(&a.out, &dump)?;
    if let Some(p) = &a.csv {
        let mut csv = Vec::new();
        grid.write_csv(&mut csv, &labels)?;
        write_atomic(p, &csv)?;
    }
    let d = grid.dims();
    println!(
        "{} {}: {} modes, feasible fraction {:.5}, grid {}x{}x{}",
        kind,
        state.group(),
        labels.count,
        grid.feasible_fraction(),
        d[0],
        d[1],
        d[2]
    );
    Ok(())
}

fn plotgrid(a: PlotArgs) -> Result<()> {
    if a.samples == 0 {
        return Err(Error::Config("--samples must be >= 1".into()));
    }
    let ck = Checkpoint::decode(&read_input(&a.checkpoint)?)?;
    let (cfg, actor) = load_actor(&ck)?;
    let env = cfg.make_env();
    let mut rng = ChaCha8Rng::seed_from_u64(a.state_seed);
    let state = env.generate_state(&mut rng);
    let raw = actor.sample_raw(&state, a.samples, &mut rng);
    let text = heat_grid(&env, &state, &raw, actor.raw_dim(), a.resolution);
    write_atomic(&a.out, text.as_bytes())?;
    println!("{} samples for state {} -> {}", a.samples, state.group(), a.out.display());
    Ok(())
}

/// Text heat grid: sample counts per x-y cell plus the oracle's feasible
/// x-y projection. See FORMATS.md.
pub fn heat_grid(
    env: &Env,
    state: &crate::env::StateDescriptor,
    raw: &[f64],
    dim: usize,
    res: [usize; 2],
) -> String {
    let axes = env.grid_axes();
    let [gx, gy] = match env.kind {
        EnvKind::Bimodal1d => [res[0], 1],
        _ => res,
    };
    let cell = |v: f64, (lo, hi, _): (f64, f64, bool), n: usize| {
        (((v - lo) / (hi - lo) * n as f64).floor().max(0.0) as usize).min(n - 1)
    };
    let mut counts = vec![0u64; gx * gy];
    for a in raw.chunks_exact(dim) {
        let i = cell(a[0], axes[0], gx);
        let j = if gy > 1 { cell(a[1], axes[1], gy) } else { 0 };
        counts[j * gx + i] += 1;
    }
    let feasible = env.feasible_grid(state, [gx, gy, 32]).project_xy();
    let mut out = String::new();
    let _ = writeln!(out, "FDHEAT 1");
    let _ = writeln!(out, "dims {gx} {gy}");
    let _ = writeln!(out, "bounds {} {} {} {}", axes[0].0, axes[0].1, axes[1].0, axes[1].1);
    let _ = writeln!(out, "samples {}", raw.len() / dim);
    let _ = writeln!(out, "state {}", state.group());
    let _ = writeln!(out, "counts");
    for j in 0..gy {
        let row: Vec<String> = counts[j * gx..(j + 1) * gx].iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    let _ = writeln!(out, "feasible");
    for j in 0..gy {
        let row: Vec<&str> = (0..gx).map(|i| if feasible[i][j] { "1" } else { "0" }).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

fn selftest_cmd() -> i32 {
    let results = selftest::run_all();
    let mut failed = 0;
    for r in &results {
        println!(
            "{} {:<24} {:>7.2}s  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        );
        failed += !r.passed as usize;
    }
    if failed == 0 {
        println!("all {} suites passed", results.len());
        EXIT_OK
    } else {
        println!("{failed} of {} suites failed", results.len());
        EXIT_INTERNAL
    }
}
