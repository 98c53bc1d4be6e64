//! The six subcommands: train, evaluate, bounds, designs, credible, episode.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use freqest_core::cem::{self, CemConfig, TrainLog};
use freqest_core::env::{run_episode, Env, EnvConfig, ResourceMode};
use freqest_core::eval;
use freqest_core::heuristics::HeuristicSpec;
use freqest_core::nn::ModelFile;
use freqest_core::{Error, Result};

use crate::config::{require, FileConfig};
use crate::output::{fmt, header, write_file};

const DEFAULT_EPISODES: usize = 10_000;
const DEFAULT_TIME_POINTS: usize = 200;
const DEFAULT_PRIOR_K: f64 = 30.0;

fn resolve_env(
    name: Option<String>,
    particles: Option<usize>,
    dead_time: Option<f64>,
    file: &FileConfig,
) -> Result<EnvConfig> {
    let name = require(name, file.env.clone(), "env")?;
    let mut cfg = EnvConfig::by_name(&name)?;
    if let Some(n) = particles.or(file.particles) {
        if n < 2 {
            return Err(Error::InvalidArgument("particle override must be >= 2".into()));
        }
        cfg.particles = n;
    }
    if let Some(d) = dead_time.or(file.dead_time) {
        if d < 0.0 {
            return Err(Error::InvalidArgument("dead time must be nonnegative".into()));
        }
        cfg.dead_time = d;
    }
    Ok(cfg)
}

/// Parses a heuristic spec; for `nn:<path>` the persisted observation schema
/// must match the environment the network is about to run against.
fn load_heuristic(spec: &str, env: &EnvConfig) -> Result<HeuristicSpec> {
    if let Some(path) = spec.strip_prefix("nn:") {
        let file = ModelFile::load(Path::new(path))?;
        env.validate_schema(&file.observation_schema)?;
        Ok(HeuristicSpec::Nn(file.params()?))
    } else {
        HeuristicSpec::parse(spec)
    }
}

fn parse_floats(list: &str, what: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} entry '{s}'")))
        })
        .collect()
}

#[derive(Args)]
pub struct TrainArgs {
    /// Environment name (one of the eight registered problems).
    #[arg(long)]
    env: Option<String>,
    /// Where to write the winning model file.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CEM population size K.
    #[arg(long)]
    population: Option<usize>,
    /// Number of elites kept per iteration.
    #[arg(long)]
    elites: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Independent CEM runs; the best network by evaluated risk is kept.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    episodes_per_individual: Option<usize>,
    /// Episodes used to pick the best of the trained networks.
    #[arg(long)]
    select_episodes: Option<usize>,
    /// Hidden layer sizes, comma separated.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    dead_time: Option<f64>,
}

fn train_log_path(output: &Path, run: usize) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    output.with_file_name(format!("{stem}-train-seed{run}.csv"))
}

fn render_train_log(log: &TrainLog, seed: u64) -> String {
    let mut body = header(seed);
    body.push_str("iteration,best_fitness,elite_mean,pop_mean\n");
    for row in &log.rows {
        let _ = writeln!(
            body,
            "{},{},{},{}",
            row.iteration,
            fmt(row.best_fitness),
            fmt(row.elite_mean_fitness),
            fmt(row.population_mean_fitness)
        );
    }
    body
}

pub fn train(args: TrainArgs, file: &FileConfig) -> Result<()> {
    let env_cfg = resolve_env(args.env, args.particles, args.dead_time, file)?;
    let output = require(args.output, file.output.clone().map(PathBuf::from), "output")?;
    let seed = args.seed.or(file.seed).unwrap_or(0);

    let defaults = CemConfig::default();
    let hidden = match args.hidden.clone().or(file.hidden.clone()) {
        Some(h) => parse_floats(&h, "hidden layer")?
            .into_iter()
            .map(|v| v as usize)
            .collect(),
        None => defaults.hidden_layers.clone(),
    };
    let cem_cfg = CemConfig {
        population: args.population.or(file.population).unwrap_or(defaults.population),
        elites: args.elites.or(file.elites).unwrap_or(defaults.elites),
        iterations: args.iterations.or(file.iterations).unwrap_or(defaults.iterations),
        seeds_to_train: args.seeds.or(file.seeds).unwrap_or(defaults.seeds_to_train),
        episodes_per_individual: args
            .episodes_per_individual
            .or(file.episodes_per_individual)
            .unwrap_or(defaults.episodes_per_individual),
        hidden_layers: hidden,
    };
    let select_episodes = args.select_episodes.or(file.select_episodes).unwrap_or(1_000);

    let mut models = Vec::new();
    for run in 0..cem_cfg.seeds_to_train {
        let run_seed = seed.wrapping_add(run as u64);
        let every = (cem_cfg.iterations / 10).max(1);
        let (params, log) = cem::cem_train_with_progress(&env_cfg, &cem_cfg, run_seed, |row| {
            if row.iteration % every == 0 || row.iteration == cem_cfg.iterations {
                eprintln!(
                    "train run {run}: iteration {}/{} best {:.6e} elite-mean {:.6e}",
                    row.iteration, cem_cfg.iterations, row.best_fitness, row.elite_mean_fitness
                );
            }
        })?;
        write_file(&train_log_path(&output, run), &render_train_log(&log, run_seed))?;
        models.push(params);
    }

    let (best, risks) = cem::select_best(&models, &env_cfg, select_episodes, seed)?;
    for (i, r) in risks.iter().enumerate() {
        eprintln!(
            "train run {i}: final risk {r:.6e}{}",
            if i == best { "  <- selected" } else { "" }
        );
    }
    let model = ModelFile::new(&models[best], env_cfg.observation_schema());
    model.save(&output)?;
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    env: Option<String>,
    /// exp-sparse | sigma-inv | pgh | nn:<path>
    #[arg(long)]
    heuristic: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid size for time-resolved curves (time-limited environments).
    #[arg(long)]
    time_points: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    dead_time: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn evaluate(args: EvaluateArgs, file: &FileConfig) -> Result<()> {
    let env_cfg = resolve_env(args.env, args.particles, args.dead_time, file)?;
    let spec = require(args.heuristic, file.heuristic.clone(), "heuristic")?;
    let heuristic = load_heuristic(&spec, &env_cfg)?;
    let episodes = args.episodes.or(file.episodes).unwrap_or(DEFAULT_EPISODES);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let points = args.time_points.or(file.time_points).unwrap_or(DEFAULT_TIME_POINTS);
    let output = require(args.output, file.output.clone().map(PathBuf::from), "output")?;

    let curve = match env_cfg.mode {
        ResourceMode::ExperimentLimited => {
            eval::bayes_risk_by_experiment(&env_cfg, &heuristic, episodes, seed)?
        }
        ResourceMode::TimeLimited => {
            eval::bayes_risk_by_time(&env_cfg, &heuristic, episodes, points, seed)?
        }
    };
    if curve.episodes_used < episodes {
        eprintln!(
            "warning: {} episodes produced no experiments and were excluded",
            episodes - curve.episodes_used
        );
    }

    let mut body = header(seed);
    let _ = writeln!(body, "# episodes_used: {}", curve.episodes_used);
    body.push_str("axis,risk,stderr\n");
    for i in 0..curve.axis.len() {
        let _ = writeln!(
            body,
            "{},{},{}",
            fmt(curve.axis[i]),
            fmt(curve.risk[i]),
            fmt(curve.standard_error[i])
        );
    }
    write_file(&output, &body)
}

#[derive(Args)]
pub struct BoundsArgs {
    /// Which bound to emit: lk (per experiment) or lt (per time budget).
    #[arg(long)]
    bound: Option<String>,
    /// Largest experiment index for lk.
    #[arg(long)]
    k_max: Option<usize>,
    /// Time budget for lt; the grid spans (0, time_cap].
    #[arg(long)]
    time_cap: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Sharpness of the smoothed-uniform prior entering lt.
    #[arg(long)]
    prior_k: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn bounds(args: BoundsArgs, file: &FileConfig) -> Result<()> {
    let kind = require(args.bound, file.bound.clone(), "bound")?;
    let output = require(args.output, file.output.clone().map(PathBuf::from), "output")?;
    let seed = args.seed.or(file.seed).unwrap_or(0);

    let curve = match kind.as_str() {
        "lk" => {
            let k_max = args.k_max.or(file.k_max).unwrap_or(30);
            eval::bound_l_k(k_max)
        }
        "lt" => {
            let time_cap = args.time_cap.or(file.time_cap).unwrap_or(100.0);
            let points = args.points.or(file.points).unwrap_or(DEFAULT_TIME_POINTS);
            let prior_k = args.prior_k.or(file.prior_k).unwrap_or(DEFAULT_PRIOR_K);
            let info = eval::prior_fisher_info(prior_k, 0.0, 1.0)?;
            let grid: Vec<f64> = (1..=points)
                .map(|i| time_cap * i as f64 / points as f64)
                .collect();
            eval::bound_l_t(&grid, info)?
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown bound '{other}' (expected lk or lt)"
            )))
        }
    };

    let mut body = header(seed);
    body.push_str("axis,value\n");
    for (a, v) in curve.axis.iter().zip(&curve.values) {
        let _ = writeln!(body, "{},{}", fmt(*a), fmt(*v));
    }
    write_file(&output, &body)
}

#[derive(Args)]
pub struct DesignsArgs {
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    heuristic: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Time bins over [0, 500]; times beyond land in an overflow bin.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    dead_time: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn designs(args: DesignsArgs, file: &FileConfig) -> Result<()> {
    let env_cfg = resolve_env(args.env, args.particles, args.dead_time, file)?;
    let spec = require(args.heuristic, file.heuristic.clone(), "heuristic")?;
    let heuristic = load_heuristic(&spec, &env_cfg)?;
    let episodes = args.episodes.or(file.episodes).unwrap_or(DEFAULT_EPISODES);
    let bins = args.bins.or(file.bins).unwrap_or(50);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let output = require(args.output, file.output.clone().map(PathBuf::from), "output")?;

    let hist = eval::design_histogram(&env_cfg, &heuristic, episodes, bins, seed)?;

    let mut body = header(seed);
    let _ = writeln!(body, "# episodes: {}", hist.episodes);
    body.push_str("experiment_index,bin_lo,bin_hi,count\n");
    for (idx, row) in hist.counts.iter().enumerate() {
        for (bin, count) in row.iter().enumerate() {
            if *count == 0 {
                continue; // sparse output; absent rows are zero
            }
            let _ = writeln!(
                body,
                "{},{},{},{}",
                idx + 1,
                fmt(hist.bin_edges[bin]),
                fmt(hist.bin_edges[bin + 1]),
                count
            );
        }
    }
    write_file(&output, &body)
}

#[derive(Args)]
pub struct CredibleArgs {
    #[arg(long)]
    env: Option<String>,
    /// Comma-separated heuristic specs compared on the same estimation.
    #[arg(long)]
    heuristics: Option<String>,
    /// True parameter values, comma separated (pinned for all heuristics).
    #[arg(long)]
    truth: Option<String>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    dead_time: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn credible(args: CredibleArgs, file: &FileConfig) -> Result<()> {
    let env_cfg = resolve_env(args.env, args.particles, args.dead_time, file)?;
    let specs = require(args.heuristics, file.heuristics.clone(), "heuristics")?;
    let truth_str = require(args.truth, file.truth.clone(), "truth")?;
    let truth = parse_floats(&truth_str, "truth")?;
    let level = args.level.or(file.level).unwrap_or(0.95);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let output = require(args.output, file.output.clone().map(PathBuf::from), "output")?;

    let names: Vec<String> = specs.split(',').map(|s| s.trim().to_string()).collect();
    let heuristics: Vec<HeuristicSpec> = names
        .iter()
        .map(|s| load_heuristic(s, &env_cfg))
        .collect::<Result<_>>()?;

    let regions = eval::credible_run(&env_cfg, &heuristics, &truth, level, seed)?;

    let mut body = header(seed);
    let _ = writeln!(body, "level {}", fmt(level));
    let _ = writeln!(body, "truth {}", truth.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(" "));
    for (name, region) in names.iter().zip(&regions) {
        let _ = writeln!(body, "heuristic {name}");
        let _ = writeln!(body, "covered_mass {}", fmt(region.covered_mass));
        let _ = writeln!(body, "member_count {}", region.member_positions.len());
        if region.hull_vertices.is_empty() {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in &region.member_positions {
                lo = lo.min(p[0]);
                hi = hi.max(p[0]);
            }
            let _ = writeln!(body, "interval {} {}", fmt(lo), fmt(hi));
        } else {
            for v in &region.hull_vertices {
                let _ = writeln!(body, "hull_vertex {} {}", fmt(v[0]), fmt(v[1]));
            }
        }
        let _ = writeln!(body, "end");
    }
    write_file(&output, &body)
}

#[derive(Args)]
pub struct EpisodeArgs {
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    heuristic: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    dead_time: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn episode(args: EpisodeArgs, file: &FileConfig) -> Result<()> {
    let env_cfg = resolve_env(args.env, args.particles, args.dead_time, file)?;
    let spec = require(args.heuristic, file.heuristic.clone(), "heuristic")?;
    let heuristic = load_heuristic(&spec, &env_cfg)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let output = require(args.output, file.output.clone().map(PathBuf::from), "output")?;

    let mut env = Env::reset(env_cfg, seed)?;
    let records = run_episode(&mut env, &heuristic)?;

    let mut body = header(seed);
    let _ = writeln!(
        body,
        "# truth: {}",
        env.truth().iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(" ")
    );
    body.push_str("step,t,outcome,reward,traced_cov,time_used\n");
    for r in &records {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{}",
            r.step_index,
            fmt(r.time),
            r.outcome.zeros,
            fmt(r.reward),
            fmt(r.traced_cov_after),
            fmt(r.time_used_after)
        );
    }
    write_file(&output, &body)
}
