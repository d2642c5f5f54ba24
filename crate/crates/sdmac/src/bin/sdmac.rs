//! Experiment driver: channel-spec handling, bound evaluation, protocol
//! simulation, and parameter sweeps, all emitting deterministic CSV.

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use sdmac::bounds::{
    self, corollary2_point, degraded_common_key_capacity, modadd_lb_closed_form,
    optimize_common_key_lb, private_key_inner_point, private_key_outer_point, RatePoint,
    SearchConfig,
};
use sdmac::channel::{
    build_modulo_additive, build_modulo_additive_cascade, build_stuck_at, AuxiliaryScheme,
    EveMode, Round2Scheme, SdMacSpec,
};
use sdmac::format::{load_spec, save_spec};
use sdmac::presets;
use sdmac::report::{fmt_sig, SimulationReport};
use sdmac::round1::{
    self, generate_codebook, DecoderMode, ProtocolError, Round1Config, Round1Session, TieBreak,
};
use sdmac::round2::{self, generate_t_codebooks, Round2Config, Round2Session};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sdmac", version, about = "Key-agreement bounds and protocol simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create or validate channel-spec files.
    Channel {
        #[command(subcommand)]
        cmd: ChannelCmd,
    },
    /// Evaluate capacity bounds.
    Bounds {
        #[command(subcommand)]
        task: BoundsTask,
    },
    /// Run finite-blocklength protocol simulations.
    Sim {
        #[command(subcommand)]
        round: SimRound,
    },
    /// Evaluate a task along one parameter axis.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum ChannelCmd {
    /// Build a named channel and write it as a spec file.
    Make {
        #[command(flatten)]
        src: ChannelSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and validate a spec file.
    Validate {
        #[arg(long)]
        channel: PathBuf,
    },
}

/// Exactly one of a spec file or a named builder.
#[derive(Args, Clone)]
struct ChannelSource {
    /// Path to a channel-spec file.
    #[arg(long, conflicts_with = "builder")]
    channel: Option<PathBuf>,
    /// Named builder, e.g. `stuck-at:p=0.3,eve=uninformative` or
    /// `modadd:ps=0.5,p1=0.1,p2=0.3`.
    #[arg(long)]
    builder: Option<String>,
}

#[derive(Args, Clone)]
struct OutArg {
    /// Also write the CSV to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BoundsTask {
    /// Optimized common-key lower bound.
    CommonLb {
        #[command(flatten)]
        src: ChannelSource,
        #[arg(long, default_value_t = 1.0)]
        rc: f64,
        /// Evaluate the constraints in the proof direction.
        #[arg(long)]
        proof_consistent: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        restarts: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Common-key upper bound over input laws.
    CommonUb {
        #[command(flatten)]
        src: ChannelSource,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        restarts: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Degraded-eavesdropper identity evaluated on a fixed scheme.
    Degraded {
        #[command(flatten)]
        src: ChannelSource,
        /// First-round scheme, e.g. `alpha:alpha=0.5` or
        /// `state-description:delta=0.25` or `stuck-pattern`.
        #[arg(long, default_value = "alpha:alpha=0.5")]
        scheme: String,
        #[arg(long, default_value_t = 1.0)]
        rc: f64,
        #[arg(long)]
        proof_consistent: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Private-key inner bound on a fixed round-2 scheme.
    PrivateInner {
        #[command(flatten)]
        src: ChannelSource,
        /// Round-2 scheme, e.g. `state-key:delta=0.05`.
        #[arg(long, default_value = "state-key:delta=0.05")]
        scheme: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Private-key outer bound on a fixed round-2 scheme.
    PrivateOuter {
        #[command(flatten)]
        src: ChannelSource,
        #[arg(long, default_value = "state-key:delta=0.05")]
        scheme: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Independent-transmitter identity on a fixed round-2 scheme.
    Corollary2 {
        #[command(flatten)]
        src: ChannelSource,
        #[arg(long, default_value = "state-key:delta=0.05")]
        scheme: String,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args, Clone)]
struct Round1Args {
    #[command(flatten)]
    src: ChannelSource,
    #[arg(long, default_value = "alpha:alpha=0.5")]
    scheme: String,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exact enumeration oracle instead of Monte Carlo.
    #[arg(long)]
    exact: bool,
    #[arg(long, value_parser = ["typicality", "ml"], default_value = "ml")]
    decoder: String,
    #[arg(long, default_value_t = 0.0)]
    rate_u: f64,
    #[arg(long, default_value_t = 0.5)]
    rate_v: f64,
    #[arg(long, default_value_t = 0.25)]
    bins: f64,
    #[arg(long, default_value_t = 2.0)]
    rc: f64,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Clone)]
struct Round2Args {
    #[command(flatten)]
    src: ChannelSource,
    #[arg(long, default_value = "state-key:delta=0.05")]
    scheme: String,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 0.75)]
    rate_t: f64,
    #[arg(long, default_value_t = 0.5)]
    bins: f64,
    #[arg(long, default_value_t = 0.25)]
    subbins: f64,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Subcommand)]
enum SimRound {
    Round1(Round1Args),
    Round2(Round2Args),
}

#[derive(Args)]
struct SweepArgs {
    /// One of: stuck-lb, modadd-lb, round1-perr.
    #[arg(long)]
    task: String,
    /// Parameter to vary: a builder/closed-form parameter, or `n`.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long)]
    values: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2_000)]
    trials: u64,
    /// Closed-form / config parameters as `k=v` pairs, comma-separated.
    #[arg(long, default_value = "")]
    params: String,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Budget(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Budget(m) => write!(f, "{m}"),
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn protocol_err(e: ProtocolError) -> CliError {
    match &e {
        ProtocolError::BudgetExceeded { .. } | ProtocolError::SizeOverflow { .. } => {
            CliError::Budget(e.to_string())
        }
        _ => CliError::Usage(e.to_string()),
    }
}

/// `name:k=v,k=v` into (name, pairs).
fn parse_kv(s: &str) -> Result<(String, Vec<(String, String)>), CliError> {
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n, r),
        None => (s, ""),
    };
    let mut pairs = Vec::new();
    for part in rest.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected k=v, got `{part}`")))?;
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok((name.to_string(), pairs))
}

fn get_f64(pairs: &[(String, String)], key: &str) -> Result<f64, CliError> {
    let v = pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| CliError::Usage(format!("missing parameter `{key}`")))?;
    v.parse().map_err(|_| CliError::Usage(format!("`{key}` is not a number: {v}")))
}

fn get_f64_or(pairs: &[(String, String)], key: &str, default: f64) -> Result<f64, CliError> {
    if pairs.iter().any(|(k, _)| k == key) {
        get_f64(pairs, key)
    } else {
        Ok(default)
    }
}

fn build_channel(desc: &str) -> Result<SdMacSpec, CliError> {
    let (name, pairs) = parse_kv(desc)?;
    match name.as_str() {
        "stuck-at" => {
            let p = get_f64(&pairs, "p")?;
            let eve = pairs
                .iter()
                .find(|(k, _)| k == "eve")
                .map(|(_, v)| v.as_str())
                .unwrap_or("memory");
            let mode = match eve {
                "memory" => EveMode::ReadsMemory,
                "uninformative" => EveMode::Uninformative,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown eve mode `{other}` (memory | uninformative)"
                    )))
                }
            };
            build_stuck_at(p, mode).map_err(usage)
        }
        "modadd" => build_modulo_additive(
            get_f64(&pairs, "ps")?,
            get_f64(&pairs, "p1")?,
            get_f64(&pairs, "p2")?,
        )
        .map_err(usage),
        "modadd-cascade" => build_modulo_additive_cascade(
            get_f64(&pairs, "ps")?,
            get_f64(&pairs, "p1")?,
            get_f64(&pairs, "p2")?,
        )
        .map_err(usage),
        other => Err(CliError::Usage(format!(
            "unknown builder `{other}` (stuck-at | modadd | modadd-cascade)"
        ))),
    }
}

impl ChannelSource {
    fn resolve(&self) -> Result<SdMacSpec, CliError> {
        match (&self.channel, &self.builder) {
            (Some(path), None) => load_spec(path).map_err(usage),
            (None, Some(desc)) => build_channel(desc),
            _ => Err(CliError::Usage(
                "exactly one of --channel or --builder is required".into(),
            )),
        }
    }

    fn describe(&self) -> String {
        match (&self.channel, &self.builder) {
            (Some(p), _) => p.display().to_string(),
            (_, Some(b)) => b.clone(),
            _ => String::new(),
        }
    }
}

fn build_aux_scheme(spec: &SdMacSpec, desc: &str) -> Result<AuxiliaryScheme, CliError> {
    let (name, pairs) = parse_kv(desc)?;
    match name.as_str() {
        "alpha" => Ok(presets::modadd_alpha_scheme(spec, get_f64(&pairs, "alpha")?)),
        "state-description" => Ok(presets::modadd_state_description_scheme(
            spec,
            get_f64(&pairs, "delta")?,
        )),
        "stuck-pattern" => Ok(presets::stuck_at_pattern_scheme(spec)),
        other => Err(CliError::Usage(format!(
            "unknown scheme `{other}` (alpha | state-description | stuck-pattern)"
        ))),
    }
}

fn build_round2_scheme(spec: &SdMacSpec, desc: &str) -> Result<Round2Scheme, CliError> {
    let (name, pairs) = parse_kv(desc)?;
    match name.as_str() {
        "state-key" => Ok(presets::round2_state_key_scheme(spec, get_f64(&pairs, "delta")?)),
        other => Err(CliError::Usage(format!("unknown round-2 scheme `{other}` (state-key)"))),
    }
}

fn emit(report: &SimulationReport, out: &OutArg) -> Result<(), CliError> {
    let csv = report.to_csv();
    print!("{csv}");
    if let Some(path) = &out.out {
        std::fs::write(path, &csv).map_err(usage)?;
    }
    Ok(())
}

fn rate_point_report(
    task: &str,
    src: &str,
    seed: u64,
    point: &RatePoint,
) -> SimulationReport {
    let mut report = SimulationReport::new(seed);
    report.config_entry("task", task);
    report.config_entry("channel", src);
    if let Some(r0) = point.r0 {
        report.exact("r0", r0);
    }
    if let Some(raw) = point.raw_r0 {
        report.exact("raw_r0", raw);
    }
    if let Some(r1) = point.r1 {
        report.exact("r1", r1);
    }
    if let Some(r2) = point.r2 {
        report.exact("r2", r2);
    }
    report.exact("feasible", if point.feasible { 1.0 } else { 0.0 });
    for c in &point.constraints {
        report.exact(&format!("slack_{}", c.name), c.rhs - c.lhs);
    }
    report
}

fn search_config(seed: u64, restarts: Option<usize>) -> SearchConfig {
    let mut cfg = SearchConfig::default();
    cfg.seed = seed;
    if let Some(r) = restarts {
        cfg.restarts = r;
    }
    cfg
}

fn run_bounds(task: BoundsTask) -> Result<(), CliError> {
    match task {
        BoundsTask::CommonLb { src, rc, proof_consistent, seed, restarts, out } => {
            let spec = src.resolve()?;
            let cfg = search_config(seed, restarts);
            let point = optimize_common_key_lb(&spec, rc, &cfg, proof_consistent).map_err(usage)?;
            let mut report = rate_point_report("bounds-common-lb", &src.describe(), seed, &point);
            report.config_entry("rc", rc);
            report.config_entry("proof_consistent", proof_consistent);
            emit(&report, &out)
        }
        BoundsTask::CommonUb { src, seed, restarts, out } => {
            let spec = src.resolve()?;
            let cfg = search_config(seed, restarts);
            let point = bounds::common_key_ub(&spec, &cfg).map_err(usage)?;
            let report = rate_point_report("bounds-common-ub", &src.describe(), seed, &point);
            emit(&report, &out)
        }
        BoundsTask::Degraded { src, scheme, rc, proof_consistent, out } => {
            let spec = src.resolve()?;
            let aux = build_aux_scheme(&spec, &scheme)?;
            let point =
                degraded_common_key_capacity(&spec, &aux, rc, proof_consistent).map_err(usage)?;
            let mut report = rate_point_report("bounds-degraded", &src.describe(), 0, &point);
            report.config_entry("scheme", &scheme);
            emit(&report, &out)
        }
        BoundsTask::PrivateInner { src, scheme, out } => {
            let spec = src.resolve()?;
            let r2 = build_round2_scheme(&spec, &scheme)?;
            let point = private_key_inner_point(&spec, &r2).map_err(usage)?;
            let mut report = rate_point_report("bounds-private-inner", &src.describe(), 0, &point);
            report.config_entry("scheme", &scheme);
            emit(&report, &out)
        }
        BoundsTask::PrivateOuter { src, scheme, out } => {
            let spec = src.resolve()?;
            let r2 = build_round2_scheme(&spec, &scheme)?;
            let point = private_key_outer_point(&spec, &r2).map_err(usage)?;
            let mut report = rate_point_report("bounds-private-outer", &src.describe(), 0, &point);
            report.config_entry("scheme", &scheme);
            emit(&report, &out)
        }
        BoundsTask::Corollary2 { src, scheme, out } => {
            let spec = src.resolve()?;
            let r2 = build_round2_scheme(&spec, &scheme)?;
            let point = corollary2_point(&spec, &r2).map_err(usage)?;
            let mut report = rate_point_report("bounds-corollary2", &src.describe(), 0, &point);
            report.config_entry("scheme", &scheme);
            emit(&report, &out)
        }
    }
}

fn round1_config(args: &Round1Args) -> Round1Config {
    let mut cfg = Round1Config::new(args.n);
    cfg.rate_u = args.rate_u;
    cfg.rate_v_total = args.rate_v;
    cfg.rate_v_bins = args.bins;
    cfg.r_c = args.rc;
    cfg.typicality_eps = args.eps;
    cfg.decoder = if args.decoder == "typicality" {
        DecoderMode::Typicality
    } else {
        DecoderMode::MaxLikelihood
    };
    cfg.seed = args.seed;
    if args.exact {
        cfg.tie_break = TieBreak::LowestIndex;
    }
    cfg
}

fn run_sim_round1(args: &Round1Args) -> Result<SimulationReport, CliError> {
    let spec = args.src.resolve()?;
    let scheme = build_aux_scheme(&spec, &args.scheme)?;
    let session = Round1Session::new(&spec, &scheme).map_err(protocol_err)?;
    let cfg = round1_config(args);
    if args.exact {
        let mut rng =
            ChaCha12Rng::seed_from_u64(bounds::derive_seed(cfg.seed ^ 0xc0de, 0));
        let cb = generate_codebook(&session, &cfg, &mut rng).map_err(protocol_err)?;
        let ex = round1::exact_round1_metrics(&session, &cb, &cfg).map_err(protocol_err)?;
        let mut report = SimulationReport::new(cfg.seed);
        report.config_entry("task", "sim-round1-exact");
        report.config_entry("channel", args.src.describe());
        report.config_entry("scheme", &args.scheme);
        report.config_entry("n", cfg.n);
        report.exact("p_err", ex.p_err);
        report.exact("leakage_per_symbol", ex.leakage_per_symbol);
        report.exact("key_entropy", ex.key_entropy);
        report.exact("conferencing_ok", ex.conferencing_ok);
        Ok(report)
    } else {
        if args.trials == 0 {
            return Err(CliError::Usage("--trials must be positive".into()));
        }
        let mut report =
            round1::monte_carlo_round1(&session, &cfg, args.trials).map_err(protocol_err)?;
        report.config.insert(1, ("channel".into(), args.src.describe()));
        report.config.insert(2, ("scheme".into(), args.scheme.clone()));
        Ok(report)
    }
}

fn run_sim_round2(args: &Round2Args) -> Result<SimulationReport, CliError> {
    let spec = args.src.resolve()?;
    let scheme = build_round2_scheme(&spec, &args.scheme)?;
    let session = Round2Session::new(&spec, &scheme).map_err(protocol_err)?;
    let mut cfg = Round2Config::new(args.n);
    cfg.rate_t = args.rate_t;
    cfg.rate_bins = args.bins;
    cfg.rate_subbins = args.subbins;
    cfg.typicality_eps = args.eps;
    cfg.seed = args.seed;
    if args.exact {
        cfg.tie_break = TieBreak::LowestIndex;
        let mut rng =
            ChaCha12Rng::seed_from_u64(bounds::derive_seed(cfg.seed ^ 0x2b1d, 0));
        let cbs = generate_t_codebooks(&session, &cfg, &mut rng).map_err(protocol_err)?;
        let ex = round2::exact_round2_metrics(&session, (&cbs.0, &cbs.1), &cfg)
            .map_err(protocol_err)?;
        let mut report = SimulationReport::new(cfg.seed);
        report.config_entry("task", "sim-round2-exact");
        report.config_entry("channel", args.src.describe());
        report.config_entry("scheme", &args.scheme);
        report.config_entry("n", cfg.n);
        for i in 0..2 {
            report.exact(&format!("p_err_{}", i + 1), ex.p_err[i]);
            report.exact(&format!("leak_eve_{}", i + 1), ex.leak_eve[i]);
            report.exact(&format!("leak_cross_{}", i + 1), ex.leak_cross[i]);
            report.exact(&format!("key_entropy_{}", i + 1), ex.key_entropy[i]);
        }
        Ok(report)
    } else {
        if args.trials == 0 {
            return Err(CliError::Usage("--trials must be positive".into()));
        }
        let mut report =
            round2::monte_carlo_round2(&session, &cfg, args.trials).map_err(protocol_err)?;
        report.config.insert(1, ("channel".into(), args.src.describe()));
        report.config.insert(2, ("scheme".into(), args.scheme.clone()));
        Ok(report)
    }
}

fn parse_values(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad axis value `{p}`")))
        })
        .collect()
}

fn run_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let values = parse_values(&args.values)?;
    if values.is_empty() {
        return Err(CliError::Usage("--values must be non-empty".into()));
    }
    let (_, params) = parse_kv(&format!(":{}", args.params))?;
    let mut out = String::new();
    out.push_str(&format!("# version = {}\n", env!("CARGO_PKG_VERSION")));
    out.push_str(&format!("# seed = {}\n", args.seed));
    out.push_str(&format!("# task = {}\n", args.task));
    out.push_str(&format!("# axis = {}\n", args.axis));

    match args.task.as_str() {
        "stuck-lb" => {
            if args.axis != "p" {
                return Err(CliError::Usage("stuck-lb sweeps over axis `p`".into()));
            }
            out.push_str("p,r0,constraint\n");
            for &p in &values {
                let (r0, c) = bounds::stuck_at_lb_closed_form(p).map_err(usage)?;
                out.push_str(&format!("{},{},{}\n", fmt_sig(p), fmt_sig(r0), fmt_sig(c)));
            }
        }
        "modadd-lb" => {
            let mut fixed = [
                get_f64_or(&params, "alpha", 0.5)?,
                get_f64_or(&params, "ps", 0.0)?,
                get_f64_or(&params, "p1", 0.1)?,
                get_f64_or(&params, "p2", 0.3)?,
                get_f64_or(&params, "rc", 1.0)?,
            ];
            let axis_idx = ["alpha", "ps", "p1", "p2", "rc"]
                .iter()
                .position(|a| *a == args.axis)
                .ok_or_else(|| {
                    CliError::Usage("modadd-lb axes: alpha | ps | p1 | p2 | rc".into())
                })?;
            out.push_str(&format!("{},rate,raw_rate,constraint_ok\n", args.axis));
            for &v in &values {
                fixed[axis_idx] = v;
                let cf = modadd_lb_closed_form(fixed[0], fixed[1], fixed[2], fixed[3], fixed[4])
                    .map_err(usage)?;
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_sig(v),
                    fmt_sig(cf.rate),
                    fmt_sig(cf.raw_rate),
                    if cf.constraint_satisfied { 1 } else { 0 }
                ));
            }
        }
        "round1-perr" => {
            if args.axis != "n" {
                return Err(CliError::Usage("round1-perr sweeps over axis `n`".into()));
            }
            let spec = build_modulo_additive(
                get_f64_or(&params, "ps", 0.5)?,
                get_f64_or(&params, "p1", 0.02)?,
                get_f64_or(&params, "p2", 0.3)?,
            )
            .map_err(usage)?;
            let scheme = presets::modadd_state_description_scheme(
                &spec,
                get_f64_or(&params, "delta", 0.4)?,
            );
            let session = Round1Session::new(&spec, &scheme).map_err(protocol_err)?;
            let rate_v = get_f64_or(&params, "rate_v", 0.25 + 1e-9)?;
            let eps = get_f64_or(&params, "eps", 0.15)?;
            // points are independent; evaluate them in parallel but emit in
            // axis order so output is concurrency-invariant
            let rows: Vec<Result<String, CliError>> = values
                .par_iter()
                .enumerate()
                .map(|(i, &v)| {
                    let n = v as usize;
                    if n == 0 || (n as f64 - v).abs() > 0.0 {
                        return Err(CliError::Usage(format!("bad blocklength `{v}`")));
                    }
                    let mut cfg = Round1Config::new(n);
                    cfg.rate_v_total = rate_v;
                    cfg.rate_v_bins = 1.0 / n as f64 + 1e-9;
                    cfg.typicality_eps = eps;
                    cfg.decoder = DecoderMode::MaxLikelihood;
                    cfg.seed = bounds::derive_seed(args.seed, i as u64);
                    let rep = round1::monte_carlo_round1(&session, &cfg, args.trials)
                        .map_err(protocol_err)?;
                    let m = rep.metric("p_err").unwrap();
                    let (lo, hi) = m.ci.unwrap();
                    Ok(format!(
                        "{n},{},{},{}\n",
                        fmt_sig(m.value),
                        fmt_sig(lo),
                        fmt_sig(hi)
                    ))
                })
                .collect();
            out.push_str("n,p_err,ci_low,ci_high\n");
            for row in rows {
                out.push_str(&row?);
            }
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown sweep task `{other}` (stuck-lb | modadd-lb | round1-perr)"
            )))
        }
    }

    print!("{out}");
    if let Some(path) = &args.out.out {
        std::fs::write(path, &out).map_err(usage)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Channel { cmd } => match cmd {
            ChannelCmd::Make { src, out } => {
                let desc = src
                    .builder
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("channel make requires --builder".into()))?;
                let spec = build_channel(desc)?;
                save_spec(&spec, &out).map_err(usage)?;
                println!("wrote {}", out.display());
                Ok(())
            }
            ChannelCmd::Validate { channel } => {
                let spec = load_spec(&channel).map_err(usage)?;
                println!(
                    "ok: |S|={} |T|={} |X1|={} |X2|={} |Y|={} |Z|={}",
                    spec.s.len(),
                    spec.t.len(),
                    spec.x1.len(),
                    spec.x2.len(),
                    spec.y.len(),
                    spec.z.len()
                );
                Ok(())
            }
        },
        Cmd::Bounds { task } => run_bounds(task),
        Cmd::Sim { round } => match round {
            SimRound::Round1(args) => {
                let report = run_sim_round1(&args)?;
                emit(&report, &args.out)
            }
            SimRound::Round2(args) => {
                let report = run_sim_round2(&args)?;
                emit(&report, &args.out)
            }
        },
        Cmd::Sweep(args) => run_sweep(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let start = std::time::Instant::now();
    let result = run(cli);
    // timing goes to stderr so stdout stays byte-deterministic
    eprintln!("wall_time_s = {:.3}", start.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Budget(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
