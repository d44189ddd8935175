//! `assist`: batch experiments, oracle checks and the live session service.

mod batch;
mod serve;

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use assist_core::oracle::{run_all, Fault};
use assist_core::sim::{Method, Metrics, UserModel};
use assist_core::Scenario;
use clap::{Args, Parser, Subcommand, ValueEnum};

use batch::{
    load_scenario, orderings, pairwise, parse_methods, print_table, run_batch, with_ext,
    write_metrics_jsonl, write_pairs_csv, write_summary_csv, Summary,
};

#[derive(Parser)]
#[command(name = "assist", version, about = "Shared-autonomy experiments and live sessions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run seeded episodes of one method and write metrics plus a summary.
    Run(RunArgs),
    /// Run several methods on the same seeds and tabulate differences.
    Compare(CompareArgs),
    /// Check the engine against brute-force references.
    OracleCheck(OracleArgs),
    /// Host the websocket session protocol (and optionally UI assets).
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum UserKind {
    NoisyGreedy,
    Maxent,
    Idle,
}

/// Options shared by `run` and `compare`.
#[derive(Args)]
struct BatchArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Built-in simulated user.
    #[arg(long, value_enum, default_value = "noisy-greedy", conflicts_with = "user_model")]
    user: UserKind,
    /// User model JSON file (overrides --user).
    #[arg(long)]
    user_model: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    /// First seed; episode i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path stem; writes STEM.jsonl and STEM.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    overrides: Overrides,
}

/// Per-run overrides of the scenario's settings.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    tick_limit: Option<usize>,
    /// Noise level of the noisy-greedy user.
    #[arg(long)]
    noise_level: Option<f64>,
    /// Distance past which blend confidence is zero.
    #[arg(long)]
    blend_distance: Option<f64>,
    /// Belief mass at which the plan baseline commits.
    #[arg(long)]
    commit_threshold: Option<f64>,
    #[arg(long)]
    conf_floor: Option<f64>,
    #[arg(long)]
    conf_ceil: Option<f64>,
    #[arg(long)]
    alpha_max: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    batch: BatchArgs,
    #[arg(long)]
    method: String,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    batch: BatchArgs,
    /// Comma-separated methods, at least two.
    #[arg(long, value_delimiter = ',', required = true)]
    methods: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    NegateAlpha,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultArg>,
}

#[derive(Args)]
struct ServeArgs {
    /// Scenario JSON file; repeat for several. Ids are file stems.
    #[arg(long, required = true)]
    scenario: Vec<PathBuf>,
    #[arg(long, default_value_t = 8765)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Seed of the first connection; later connections count up.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory of static UI assets served at `/`.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    /// Where `sessions.jsonl` goes.
    #[arg(long, env = "ASSIST_LOG_DIR", default_value = "logs")]
    log_dir: PathBuf,
}

fn apply_overrides(s: &mut Scenario, o: &Overrides) -> Result<()> {
    let st = &mut s.settings;
    if let Some(v) = o.tick_limit {
        st.tick_limit = v;
    }
    if let Some(v) = o.noise_level {
        st.noise_level = v;
    }
    if let Some(v) = o.blend_distance {
        st.blend_distance = v;
    }
    if let Some(v) = o.commit_threshold {
        st.commit_threshold = v;
    }
    if let Some(v) = o.conf_floor {
        st.arbitration.conf_floor = v;
    }
    if let Some(v) = o.conf_ceil {
        st.arbitration.conf_ceil = v;
    }
    if let Some(v) = o.alpha_max {
        st.arbitration.alpha_max = v;
    }
    // overrides go through the same validation as the file
    *s = assist_core::validate_scenario(s.clone()).context("invalid override")?;
    Ok(())
}

fn user_model(b: &BatchArgs, s: &Scenario) -> Result<UserModel> {
    if let Some(p) = &b.user_model {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        return serde_json::from_str(&text).with_context(|| format!("invalid user model {}", p.display()));
    }
    Ok(match b.user {
        UserKind::NoisyGreedy => UserModel::NoisyGreedy {
            noise_level: s.settings.noise_level,
        },
        UserKind::Maxent => UserModel::MaxEnt,
        UserKind::Idle => UserModel::Idle,
    })
}

fn header(cmd: &str, b: &BatchArgs, s: &Scenario, user: &UserModel, methods: &[Method]) {
    let st = &s.settings;
    let names: Vec<&str> = methods.iter().map(|m| m.as_str()).collect();
    let user = match user {
        UserModel::Scripted { .. } | UserModel::Recorded { .. } | UserModel::Route { .. } => {
            format!("file {}", b.user_model.as_deref().unwrap_or(Path::new("?")).display())
        }
        other => serde_json::to_string(other).unwrap_or_default(),
    };
    eprintln!("# assist {cmd}");
    eprintln!("#   scenario         {} ({})", b.scenario.display(), s.name);
    eprintln!("#   methods          {}", names.join(","));
    eprintln!("#   user             {user}");
    eprintln!("#   episodes         {} (seeds {}..{})", b.episodes, b.seed, b.seed + b.episodes as u64);
    eprintln!("#   jobs             {}", b.jobs);
    eprintln!("#   tick_limit       {}", st.tick_limit);
    eprintln!("#   noise_level      {}", st.noise_level);
    eprintln!("#   blend_distance   {}", st.blend_distance);
    eprintln!("#   commit_threshold {}", st.commit_threshold);
    eprintln!(
        "#   arbitration      floor {} ceil {} max {}",
        st.arbitration.conf_floor, st.arbitration.conf_ceil, st.arbitration.alpha_max
    );
}

fn prepare(b: &BatchArgs) -> Result<(Scenario, UserModel)> {
    let mut s = load_scenario(&b.scenario)?;
    apply_overrides(&mut s, &b.overrides)?;
    let user = user_model(b, &s)?;
    anyhow::ensure!(b.jobs >= 1, "--jobs must be at least 1");
    Ok((s, user))
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let (s, user) = prepare(&a.batch)?;
    let method = Method::parse(&a.method, &s)?;
    header("run", &a.batch, &s, &user, &[method]);
    let ms = run_batch(&s, method, &user, a.batch.episodes, a.batch.seed, a.batch.jobs)?;
    let row = Summary::of(method.as_str(), &ms);
    print_table(std::slice::from_ref(&row));
    if let Some(stem) = &a.batch.out {
        write_metrics_jsonl(&with_ext(stem, "jsonl"), &ms)?;
        write_summary_csv(&with_ext(stem, "csv"), &[row])?;
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let (s, user) = prepare(&a.batch)?;
    let methods = parse_methods(&a.methods, &s)?;
    header("compare", &a.batch, &s, &user, &methods);
    let mut rows = Vec::new();
    let mut all: Vec<Metrics> = Vec::new();
    for m in &methods {
        let ms = run_batch(&s, *m, &user, a.batch.episodes, a.batch.seed, a.batch.jobs)?;
        rows.push(Summary::of(m.as_str(), &ms));
        all.extend(ms);
    }
    let pairs = pairwise(&rows);
    print_table(&rows);
    println!();
    for p in &pairs {
        println!(
            "{} - {}: steps {:+.2} input {:+.4} assist {:+.4}",
            p.b, p.a, p.d_mean_steps, p.d_mean_total_input, p.d_mean_assist_fraction
        );
    }
    let ords = orderings(s.is_teaming(), &rows);
    if !ords.is_empty() {
        println!();
    }
    for o in &ords {
        println!("[{}] {}", if o.holds { "ok" } else { "VIOLATED" }, o.claim);
    }
    if let Some(stem) = &a.batch.out {
        write_metrics_jsonl(&with_ext(stem, "jsonl"), &all)?;
        write_summary_csv(&with_ext(stem, "csv"), &rows)?;
        write_pairs_csv(&with_ext(stem, "pairs.csv"), &pairs)?;
    }
    Ok(())
}

fn cmd_oracle_check(a: OracleArgs) -> bool {
    let fault = a.inject_fault.map(|f| match f {
        FaultArg::NegateAlpha => Fault::NegateAlpha,
    });
    let outcomes = run_all(fault);
    println!("{:<6} {:<48} {:>10} {:>10} {:>8}", "result", "check", "error", "tol", "secs");
    for o in &outcomes {
        println!(
            "{:<6} {:<48} {:>10.2e} {:>10.1e} {:>8.2}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.max_error,
            o.tolerance,
            o.elapsed.as_secs_f64()
        );
        if !o.detail.is_empty() {
            println!("       {}", o.detail);
        }
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    failed == 0
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let catalog = serve::load_catalog(&a.scenario)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(serve::serve(
        catalog,
        SocketAddr::new(a.host, a.port),
        a.seed,
        a.ui_dir.as_deref(),
        &a.log_dir,
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a).map(|_| true),
        Cmd::Compare(a) => cmd_compare(a).map(|_| true),
        Cmd::OracleCheck(a) => Ok(cmd_oracle_check(a)),
        Cmd::Serve(a) => cmd_serve(a).map(|_| true),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
