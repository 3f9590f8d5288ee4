//! `pke`: compute, optimize, sweep, approximate and simulate photon key
//! efficiency for entanglement-based QKD links with multiqubit temporal
//! encoding.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 validation failure.

mod config;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use config::{RunConfig, SimulateCfg};
use pke_core::optimizer::{optimize_pm, sweep, write_csv, AxisSpec, SweepGrid, SweepKind};
use pke_core::simulator::{compare_to_analytic, simulate_blocks, SimConfig};
use pke_core::{absolute_key_rate, key_fraction_minimized, pke, validation, ProtocolId};

#[derive(Parser)]
#[command(
    name = "pke",
    version,
    about = "Photon key efficiency of multiqubit entanglement-based QKD links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact PKE, QBERs and rate breakdown at a fully specified point.
    Compute(CommonArgs),
    /// Maximize PKE over coding order and pair production probability.
    Optimize(CommonArgs),
    /// Grid sweep with CSV or JSON emission.
    Sweep(SweepArgs),
    /// Weak-noise closed forms (Lambert W chain).
    Approx(CommonArgs),
    /// Monte Carlo frame simulation plus comparison with the rate model.
    Simulate(SimulateArgs),
    /// Run the full invariant battery.
    Validate,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Config file (TOML, or JSON as produced by compute/optimize).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Protocol id: bbm92-4, bbm92-6, sarg04-4 or sarg04-6.
    #[arg(long)]
    protocol: Option<String>,

    /// Fraction of Z-basis measurements.
    #[arg(long)]
    q: Option<f64>,

    /// Sifting prefactor override.
    #[arg(long)]
    sift_factor: Option<f64>,

    /// Decoherence kind: dephasing or depolarizing.
    #[arg(long)]
    kind: Option<String>,

    /// Visibility, both arms (for depolarizing, strength is 1 - V).
    #[arg(long)]
    v: Option<f64>,

    /// Visibility, Alice's arm.
    #[arg(long)]
    v_a: Option<f64>,

    /// Visibility, Bob's arm.
    #[arg(long)]
    v_b: Option<f64>,

    /// Transmission, both arms.
    #[arg(long)]
    eta: Option<f64>,

    #[arg(long)]
    eta_a: Option<f64>,

    #[arg(long)]
    eta_b: Option<f64>,

    /// Background probability per slot, both arms.
    #[arg(long)]
    noise: Option<f64>,

    #[arg(long)]
    n_a: Option<f64>,

    #[arg(long)]
    n_b: Option<f64>,

    /// Frame duration in seconds.
    #[arg(long)]
    dt: Option<f64>,

    /// Coding order (qubits per photon).
    #[arg(long)]
    m: Option<u32>,

    /// Pair production probability per frame.
    #[arg(long)]
    p_pair: Option<f64>,

    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format: json or csv (csv applies to sweeps).
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Swept axis: n-ratio, n-ratio-2d or p-pair.
    #[arg(long)]
    axis: Option<String>,

    #[arg(long)]
    lo: Option<f64>,

    #[arg(long)]
    hi: Option<f64>,

    #[arg(long)]
    count: Option<usize>,

    /// Linear spacing instead of the default log spacing.
    #[arg(long)]
    linear: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,

    #[arg(long)]
    frames: Option<u64>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    blocks: Option<u32>,

    /// Pair number model: poisson or bernoulli2.
    #[arg(long)]
    pair_model: Option<String>,
}

enum AppError {
    Config(String),
    Numeric(String),
    Validation(String),
}

impl AppError {
    fn exit_code(&self) -> ExitCode {
        match self {
            AppError::Config(_) => ExitCode::from(1),
            AppError::Numeric(_) => ExitCode::from(2),
            AppError::Validation(_) => ExitCode::from(3),
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Numeric(m) | AppError::Validation(m) => m,
        }
    }
}

fn config_err<E: ToString>(e: E) -> AppError {
    AppError::Config(e.to_string())
}

fn numeric_err(e: pke_core::Error) -> AppError {
    match e {
        pke_core::Error::Config(msg) => AppError::Config(msg),
        other => AppError::Numeric(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compute(args) => run_compute(args),
        Command::Optimize(args) => run_optimize(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Approx(args) => run_approx(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Validate => run_validate(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}

/// Load the config file (if any) and apply flag overrides.
fn resolve_config(args: &CommonArgs) -> Result<RunConfig, AppError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(AppError::Config)?
        }
        None => {
            // Flag-only invocation still needs the mandatory fields.
            let protocol = args.protocol.clone().ok_or_else(|| {
                AppError::Config("protocol is required (flag or config file)".into())
            })?;
            let kind = args.kind.clone().unwrap_or_else(|| "dephasing".into());
            let v = args.v.unwrap_or(1.0);
            let eta = args.eta.unwrap_or(1.0);
            let noise = args.noise.unwrap_or(0.0);
            RunConfig {
                protocol,
                q: None,
                sift_factor: None,
                decoherence: config::DecoherenceCfg {
                    kind: parse_kind(&kind)?,
                    v_a: v,
                    v_b: v,
                },
                channel: config::ChannelCfg {
                    eta_a: eta,
                    eta_b: eta,
                    n_a: noise,
                    n_b: noise,
                    dt: 1.0,
                },
                m: None,
                p_pair: None,
                sweep: None,
                simulate: None,
                optimizer: None,
            }
        }
    };

    if let Some(p) = &args.protocol {
        cfg.protocol = p.clone();
    }
    if let Some(q) = args.q {
        cfg.q = Some(q);
    }
    if let Some(s) = args.sift_factor {
        cfg.sift_factor = Some(s);
    }
    if let Some(kind) = &args.kind {
        cfg.decoherence.kind = parse_kind(kind)?;
    }
    if let Some(v) = args.v {
        cfg.decoherence.v_a = v;
        cfg.decoherence.v_b = v;
    }
    if let Some(v) = args.v_a {
        cfg.decoherence.v_a = v;
    }
    if let Some(v) = args.v_b {
        cfg.decoherence.v_b = v;
    }
    if let Some(eta) = args.eta {
        cfg.channel.eta_a = eta;
        cfg.channel.eta_b = eta;
    }
    if let Some(v) = args.eta_a {
        cfg.channel.eta_a = v;
    }
    if let Some(v) = args.eta_b {
        cfg.channel.eta_b = v;
    }
    if let Some(n) = args.noise {
        cfg.channel.n_a = n;
        cfg.channel.n_b = n;
    }
    if let Some(v) = args.n_a {
        cfg.channel.n_a = v;
    }
    if let Some(v) = args.n_b {
        cfg.channel.n_b = v;
    }
    if let Some(v) = args.dt {
        cfg.channel.dt = v;
    }
    if let Some(v) = args.m {
        cfg.m = Some(v);
    }
    if let Some(v) = args.p_pair {
        cfg.p_pair = Some(v);
    }
    Ok(cfg)
}

fn parse_kind(s: &str) -> Result<pke_core::ChannelKind, AppError> {
    match s {
        "dephasing" => Ok(pke_core::ChannelKind::Dephasing),
        "depolarizing" => Ok(pke_core::ChannelKind::Depolarizing),
        other => Err(AppError::Config(format!(
            "unknown decoherence kind {other:?} (expected dephasing or depolarizing)"
        ))),
    }
}

fn emit(args: &CommonArgs, content: &str) -> Result<(), AppError> {
    match &args.out {
        Some(path) => fs::write(path, content)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout();
            stdout
                .write_all(content.as_bytes())
                .map_err(|e| AppError::Config(e.to_string()))
        }
    }
}

fn emit_json<T: Serialize>(args: &CommonArgs, value: &T) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value).map_err(config_err)?;
    text.push('\n');
    emit(args, &text)
}

fn require_json(args: &CommonArgs) -> Result<(), AppError> {
    if args.format != "json" {
        return Err(AppError::Config(format!(
            "format {:?} not supported by this subcommand (use json)",
            args.format
        )));
    }
    Ok(())
}

fn run_compute(args: CommonArgs) -> Result<(), AppError> {
    require_json(&args)?;
    let cfg = resolve_config(&args)?;
    let point = cfg.link_point().map_err(AppError::Config)?;
    let report = pke(&point).map_err(numeric_err)?;
    let rate = absolute_key_rate(&point).map_err(numeric_err)?;

    // For the Z-keyed four-state protocol also report the worst-case key
    // fraction over the unobserved Y basis; the two routes agree up to
    // numerics and the pair makes that visible.
    let minimized = if point.protocol.id == ProtocolId::Bbm92Four {
        let (k, ey) =
            key_fraction_minimized(report.qbers.e_x, report.qbers.e_z).map_err(numeric_err)?;
        Some(json!({ "key_fraction": k, "e_y_minimizer": ey }))
    } else {
        None
    };

    emit_json(
        &args,
        &json!({
            "config": cfg,
            "result": {
                "pke": report.pke,
                "key_fraction": report.key_fraction,
                "qbers": report.qbers,
                "conclusive_probability": report.conclusive,
                "event_breakdown": report.event,
                "absolute_key_rate_per_s": rate,
                "unobserved_basis_minimization": minimized,
            },
        }),
    )
}

fn run_optimize(args: CommonArgs) -> Result<(), AppError> {
    require_json(&args)?;
    let cfg = resolve_config(&args)?;
    let template = cfg.template().map_err(AppError::Config)?;
    let settings = cfg.optimizer_settings().map_err(AppError::Config)?;
    let result = optimize_pm(&template, &settings).map_err(numeric_err)?;
    emit_json(&args, &json!({ "config": cfg, "result": result }))
}

fn run_sweep(args: SweepArgs) -> Result<(), AppError> {
    let cfg = resolve_config(&args.common)?;
    let sweep_cfg = {
        let mut s = cfg.sweep.clone();
        if let (Some(axis), Some(lo), Some(hi), Some(count)) =
            (&args.axis, args.lo, args.hi, args.count)
        {
            s = Some(config::SweepCfg {
                axis: axis.clone(),
                lo,
                hi,
                count,
                log: !args.linear,
                m: cfg.m,
            });
        } else if let Some(existing) = &mut s {
            if let Some(axis) = &args.axis {
                existing.axis = axis.clone();
            }
            if let Some(lo) = args.lo {
                existing.lo = lo;
            }
            if let Some(hi) = args.hi {
                existing.hi = hi;
            }
            if let Some(count) = args.count {
                existing.count = count;
            }
            if args.linear {
                existing.log = false;
            }
        }
        s.ok_or_else(|| {
            AppError::Config(
                "sweep axis missing (config [sweep] or --axis/--lo/--hi/--count)".into(),
            )
        })?
    };

    let template = cfg.template().map_err(AppError::Config)?;
    let settings = cfg.optimizer_settings().map_err(AppError::Config)?;
    let kind = match sweep_cfg.axis.as_str() {
        "n-ratio" => SweepKind::NoiseRatio {
            axis: AxisSpec::new(
                "n_ratio",
                sweep_cfg.lo,
                sweep_cfg.hi,
                sweep_cfg.count,
                sweep_cfg.log,
            )
            .map_err(numeric_err)?,
        },
        "n-ratio-2d" => SweepKind::NoiseRatio2D {
            axis_a: AxisSpec::new(
                "n_ratio_A",
                sweep_cfg.lo,
                sweep_cfg.hi,
                sweep_cfg.count,
                sweep_cfg.log,
            )
            .map_err(numeric_err)?,
            axis_b: AxisSpec::new(
                "n_ratio_B",
                sweep_cfg.lo,
                sweep_cfg.hi,
                sweep_cfg.count,
                sweep_cfg.log,
            )
            .map_err(numeric_err)?,
        },
        "p-pair" => SweepKind::PairProbability {
            axis: AxisSpec::new(
                "p_pair",
                sweep_cfg.lo,
                sweep_cfg.hi,
                sweep_cfg.count,
                sweep_cfg.log,
            )
            .map_err(numeric_err)?,
            m: sweep_cfg
                .m
                .ok_or_else(|| AppError::Config("p-pair sweep requires m".into()))?,
        },
        other => {
            return Err(AppError::Config(format!(
                "unknown sweep axis {other:?} (expected n-ratio, n-ratio-2d or p-pair)"
            )))
        }
    };

    let grid = SweepGrid {
        base: template,
        kind,
        settings,
    };
    let result = sweep(&grid).map_err(numeric_err)?;

    match args.common.format.as_str() {
        "csv" => {
            let mut bytes = Vec::new();
            write_csv(&result, &mut bytes).map_err(config_err)?;
            emit(&args.common, &String::from_utf8(bytes).map_err(config_err)?)
        }
        "json" => emit_json(&args.common, &json!({ "config": cfg, "result": result })),
        other => Err(AppError::Config(format!(
            "unknown format {other:?} (expected csv or json)"
        ))),
    }
}

fn run_approx(args: CommonArgs) -> Result<(), AppError> {
    require_json(&args)?;
    let cfg = resolve_config(&args)?;
    let profile = cfg.profile().map_err(AppError::Config)?;
    let spec = cfg.protocol_spec().map_err(AppError::Config)?;
    if spec.id != ProtocolId::Bbm92Four {
        return Err(AppError::Config(
            "closed forms are derived for bbm92-4 only".into(),
        ));
    }
    let ch = cfg.channel_params().map_err(AppError::Config)?;
    if (ch.eta_a - ch.eta_b).abs() > 1e-15 || (ch.n_a - ch.n_b).abs() > 1e-15 {
        return Err(AppError::Config(
            "closed forms assume symmetric arms (eta_a = eta_b, n_a = n_b)".into(),
        ));
    }

    let simplified = pke_core::asymptotics::asymptotic_optimum(ch.eta_a, ch.n_a, &profile, spec.q)
        .map_err(numeric_err)?;
    let full = pke_core::asymptotics::asymptotic_optimum_full(ch.eta_a, ch.n_a, &profile, spec.q)
        .map_err(numeric_err)?;
    emit_json(
        &args,
        &json!({ "config": cfg, "simplified": simplified, "full": full }),
    )
}

fn run_simulate(args: SimulateArgs) -> Result<(), AppError> {
    require_json(&args.common)?;
    let cfg = resolve_config(&args.common)?;
    let defaults = SimulateCfg {
        frames: 0,
        seed: 0,
        blocks: 8,
        pair_model: pke_core::PairModel::Poisson,
    };
    let mut sim_cfg = cfg.simulate.clone().unwrap_or(defaults);
    if let Some(v) = args.frames {
        sim_cfg.frames = v;
    }
    if let Some(v) = args.seed {
        sim_cfg.seed = v;
    }
    if let Some(v) = args.blocks {
        sim_cfg.blocks = v;
    }
    if let Some(pm) = &args.pair_model {
        sim_cfg.pair_model = match pm.as_str() {
            "poisson" => pke_core::PairModel::Poisson,
            "bernoulli2" => pke_core::PairModel::Bernoulli2,
            other => {
                return Err(AppError::Config(format!(
                    "unknown pair model {other:?} (expected poisson or bernoulli2)"
                )))
            }
        };
    }
    if sim_cfg.frames == 0 {
        return Err(AppError::Config(
            "frames is required (flag --frames or [simulate] section)".into(),
        ));
    }

    let point = cfg.link_point().map_err(AppError::Config)?;
    let config = SimConfig::new(point.clone(), sim_cfg.frames, sim_cfg.seed)
        .map_err(numeric_err)?
        .with_pair_model(sim_cfg.pair_model);
    let tally = simulate_blocks(&config, sim_cfg.blocks).map_err(numeric_err)?;
    let comparison = compare_to_analytic(&tally, &point).map_err(numeric_err)?;
    // The block count is an execution detail with no influence on the
    // tally, so it stays out of the output: identical configs and seeds
    // produce bitwise-identical files at any parallelism.
    emit_json(
        &args.common,
        &json!({
            "config": cfg,
            "simulate": {
                "frames": sim_cfg.frames,
                "seed": sim_cfg.seed,
                "pair_model": sim_cfg.pair_model,
            },
            "tally": tally,
            "comparison": comparison,
        }),
    )
}

fn run_validate() -> Result<(), AppError> {
    let mut failed = 0;
    for (name, result) in validation::run_all() {
        match result {
            Ok(()) => println!("ok   {name}"),
            Err(detail) => {
                println!("FAIL {name}: {detail}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        Err(AppError::Validation(format!(
            "{failed} invariant check(s) failed"
        )))
    } else {
        Ok(())
    }
}
