//! `run` and `compare`: seeded episode batches and their summary tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use assist_core::sim::{run_episode, Method, Metrics, UserModel};
use assist_core::Scenario;
use rayon::prelude::*;
use serde::Serialize;

pub const CSV_COLUMNS: [&str; 12] = [
    "method",
    "episodes",
    "success_rate",
    "mean_steps",
    "sd_steps",
    "mean_total_input",
    "sd_total_input",
    "mean_assist_fraction",
    "mean_mode_switches",
    "mean_idle_time",
    "mean_collision_fraction",
    "min_distance",
];

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scenario::from_json(&text).with_context(|| format!("invalid scenario {}", path.display()))
}

/// Runs `episodes` episodes with seeds `seed..seed+episodes` on a pool of
/// `jobs` threads. Results come back in seed order.
pub fn run_batch(
    scenario: &Scenario,
    method: Method,
    user: &UserModel,
    episodes: usize,
    seed: u64,
    jobs: usize,
) -> Result<Vec<Metrics>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let limit = scenario.settings.tick_limit;
    let out: Vec<Metrics> = pool.install(|| {
        (0..episodes as u64)
            .into_par_iter()
            .map(|i| run_episode(scenario, method, user, seed + i, limit).map(|(_, m)| m))
            .collect::<assist_core::Result<_>>()
    })?;
    Ok(out)
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Sample standard deviation; zero for a single value.
fn sd(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(0.0);
    }
    Some((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub method: String,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub sd_steps: f64,
    pub mean_total_input: f64,
    pub sd_total_input: f64,
    pub mean_assist_fraction: f64,
    pub mean_mode_switches: f64,
    pub mean_idle_time: Option<f64>,
    pub mean_collision_fraction: Option<f64>,
    pub min_distance: Option<f64>,
}

impl Summary {
    pub fn of(method: &str, ms: &[Metrics]) -> Summary {
        let col = |f: &dyn Fn(&Metrics) -> f64| ms.iter().map(f).collect::<Vec<f64>>();
        let opt = |f: &dyn Fn(&Metrics) -> Option<f64>| ms.iter().filter_map(f).collect::<Vec<f64>>();
        let steps = col(&|m| m.steps as f64);
        let input = col(&|m| m.total_input);
        Summary {
            method: method.to_owned(),
            episodes: ms.len(),
            success_rate: mean(&col(&|m| f64::from(u8::from(m.success)))).unwrap_or(0.0),
            mean_steps: mean(&steps).unwrap_or(0.0),
            sd_steps: sd(&steps).unwrap_or(0.0),
            mean_total_input: mean(&input).unwrap_or(0.0),
            sd_total_input: sd(&input).unwrap_or(0.0),
            mean_assist_fraction: mean(&col(&|m| m.assist_fraction)).unwrap_or(0.0),
            mean_mode_switches: mean(&col(&|m| m.mode_switches as f64)).unwrap_or(0.0),
            mean_idle_time: mean(&opt(&|m| m.idle_time)),
            mean_collision_fraction: mean(&opt(&|m| m.collision_time_fraction)),
            min_distance: opt(&|m| m.min_distance).into_iter().reduce(f64::min),
        }
    }

    fn cells(&self) -> Vec<String> {
        let f = |x: f64| format!("{x}");
        let o = |x: Option<f64>| x.map(f).unwrap_or_default();
        vec![
            self.method.clone(),
            self.episodes.to_string(),
            f(self.success_rate),
            f(self.mean_steps),
            f(self.sd_steps),
            f(self.mean_total_input),
            f(self.sd_total_input),
            f(self.mean_assist_fraction),
            f(self.mean_mode_switches),
            o(self.mean_idle_time),
            o(self.mean_collision_fraction),
            o(self.min_distance),
        ]
    }
}

pub fn write_summary_csv(path: &Path, rows: &[Summary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(r.cells())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_jsonl(path: &Path, ms: &[Metrics]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for m in ms {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Differences `b - a` of the headline means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDiff {
    pub a: String,
    pub b: String,
    pub d_success_rate: f64,
    pub d_mean_steps: f64,
    pub d_mean_total_input: f64,
    pub d_mean_assist_fraction: f64,
    pub d_mean_idle_time: Option<f64>,
    pub d_mean_collision_fraction: Option<f64>,
}

pub fn pairwise(rows: &[Summary]) -> Vec<PairDiff> {
    let mut out = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            let d = |x: Option<f64>, y: Option<f64>| Some(y? - x?);
            out.push(PairDiff {
                a: a.method.clone(),
                b: b.method.clone(),
                d_success_rate: b.success_rate - a.success_rate,
                d_mean_steps: b.mean_steps - a.mean_steps,
                d_mean_total_input: b.mean_total_input - a.mean_total_input,
                d_mean_assist_fraction: b.mean_assist_fraction - a.mean_assist_fraction,
                d_mean_idle_time: d(a.mean_idle_time, b.mean_idle_time),
                d_mean_collision_fraction: d(a.mean_collision_fraction, b.mean_collision_fraction),
            });
        }
    }
    out
}

pub fn write_pairs_csv(path: &Path, pairs: &[PairDiff]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "a",
        "b",
        "d_success_rate",
        "d_mean_steps",
        "d_mean_total_input",
        "d_mean_assist_fraction",
        "d_mean_idle_time",
        "d_mean_collision_fraction",
    ])?;
    let o = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for p in pairs {
        w.write_record([
            p.a.clone(),
            p.b.clone(),
            p.d_success_rate.to_string(),
            p.d_mean_steps.to_string(),
            p.d_mean_total_input.to_string(),
            p.d_mean_assist_fraction.to_string(),
            o(p.d_mean_idle_time),
            o(p.d_mean_collision_fraction),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One expected directional relation between methods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ordering {
    pub claim: String,
    pub holds: bool,
}

/// The orderings that can be evaluated with the methods present. Teleop:
/// steps policy < blend < direct, input policy < blend, assist fraction
/// blend < 0.5 < policy. Teaming: policy never collides while plan does,
/// policy idles no longer than fixed.
pub fn orderings(teaming: bool, rows: &[Summary]) -> Vec<Ordering> {
    let get = |m: &str| rows.iter().find(|r| r.method == m);
    let mut out = Vec::new();
    let mut push = |claim: String, holds: bool| out.push(Ordering { claim, holds });
    if !teaming {
        let (p, b, d) = (get("policy"), get("blend"), get("direct"));
        if let (Some(p), Some(b)) = (p, b) {
            push(
                format!("steps policy {:.1} < blend {:.1}", p.mean_steps, b.mean_steps),
                p.mean_steps < b.mean_steps,
            );
            push(
                format!("input policy {:.3} < blend {:.3}", p.mean_total_input, b.mean_total_input),
                p.mean_total_input < b.mean_total_input,
            );
            push(
                format!(
                    "assist blend {:.3} < 0.5 < policy {:.3}",
                    b.mean_assist_fraction, p.mean_assist_fraction
                ),
                b.mean_assist_fraction < 0.5 && p.mean_assist_fraction > 0.5,
            );
        }
        if let (Some(b), Some(d)) = (b, d) {
            push(
                format!("steps blend {:.1} < direct {:.1}", b.mean_steps, d.mean_steps),
                b.mean_steps < d.mean_steps,
            );
        }
    } else {
        let (p, pl, f) = (get("policy"), get("plan"), get("fixed"));
        if let (Some(p), Some(pl)) = (p, pl) {
            let (cp, cpl) = (
                p.mean_collision_fraction.unwrap_or(0.0),
                pl.mean_collision_fraction.unwrap_or(0.0),
            );
            push(
                format!("collision policy {cp:.4} = 0 < plan {cpl:.4}"),
                cp == 0.0 && cpl > 0.0,
            );
        }
        if let (Some(p), Some(f)) = (p, f) {
            let (ip, ifx) = (p.mean_idle_time.unwrap_or(0.0), f.mean_idle_time.unwrap_or(0.0));
            push(format!("idle policy {ip:.2}s <= fixed {ifx:.2}s"), ip <= ifx);
        }
    }
    out
}

pub fn parse_methods(list: &[String], scenario: &Scenario) -> Result<Vec<Method>> {
    if list.len() < 2 {
        bail!("compare needs at least two methods, got {}", list.len());
    }
    list.iter()
        .map(|m| Method::parse(m.trim(), scenario).map_err(Into::into))
        .collect()
}

pub fn print_table(rows: &[Summary]) {
    println!("{}", CSV_COLUMNS.join("\t"));
    for r in rows {
        println!("{}", r.cells().join("\t"));
    }
}
