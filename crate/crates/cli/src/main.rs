use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cachehelper::delay::{closed_form_checks, solve_delays};
use cachehelper::experiments::{fmt_num, reproduce, sweep, Axis, Engine, Target};
use cachehelper::optimizer::{optimize, OptimizationProblem};
use cachehelper::scenario::{load_scenario, ScenarioConfig};
use cachehelper::sim::{mu_discrepancy, run, Estimate, Measure, RequestMode, SimConfig, SimMuMode};
use cachehelper::throughput::analyze;
use cachehelper::{MuMode, Regime, Unknown, UserDelayEq};

#[derive(Debug, Parser)]
#[command(name = "cachehelper", version, about = "Throughput, delay and simulation of a two-helper wireless caching system")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Scenario file (TOML); omitted keys take the reference values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed for simulations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSV files.
    #[arg(long, global = true, value_name = "DIR", env = "CACHEHELPER_OUT")]
    out: Option<PathBuf>,
    /// Simulated slots per run.
    #[arg(long, global = true, value_name = "N")]
    slots: Option<u64>,
    /// Service-rate reading; overrides the scenario file.
    #[arg(long, global = true, value_enum)]
    mu_mode: Option<MuModeArg>,
    /// How simulated requests are drawn; overrides the scenario file.
    #[arg(long, global = true, value_enum)]
    request_mode: Option<RequestModeArg>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MuModeArg {
    Verbatim,
    Corrected,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RequestModeArg {
    Factorized,
    FactorizedConditional,
    ZipfExact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegimeArg {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MeasureArg {
    Throughput,
    Delay,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Analytic,
    Simulate,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DelayEqArg {
    Verbatim,
    Corrected,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Link success probabilities.
    Linkprobs,
    /// Cache hit profile (q_u, p_hd, p_hs).
    Hitprofile,
    /// Service rate, stability and throughputs at the configured operating point.
    Analytic,
    /// Solves the delay recursions and checks the closed forms.
    Delay {
        /// Reading of the user delay recursion; overrides the scenario file.
        #[arg(long, value_enum)]
        eq: Option<DelayEqArg>,
    },
    /// Maximizes the weighted throughput over (q_s, q_c, q_d).
    Optimize {
        #[arg(long, value_enum, default_value = "unstable")]
        regime: RegimeArg,
        /// Weight of T_S; defaults to access.w.
        #[arg(long)]
        w: Option<f64>,
        /// Arrival rate for the stable regime; defaults to access.lambda.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Runs the slotted simulator at the configured operating point.
    Simulate {
        #[arg(long, value_enum, default_value = "throughput")]
        measure: MeasureArg,
        /// Completed requests to collect in delay runs.
        #[arg(long)]
        requests: Option<u64>,
        /// Slots discarded before measuring.
        #[arg(long)]
        warmup: Option<u64>,
    },
    /// Sweeps one scenario field, e.g. `--axis access.alpha=0.2:1.0:0.1`.
    Sweep {
        #[arg(long)]
        axis: Axis,
        #[arg(long, value_enum, default_value = "analytic")]
        engine: EngineArg,
        /// Completed requests per delay simulation.
        #[arg(long)]
        requests: Option<u64>,
    },
    /// Regenerates a table or figure data set and checks it against its goldens.
    Reproduce {
        /// Target name, or `all`.
        target: String,
        /// Arrival rate for stable_opt_table; defaults to access.lambda.
        #[arg(long)]
        lambda: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let scenario = scenario(&cli.global)?;
    let g = &cli.global;
    match cli.command {
        Command::Linkprobs => {
            let table = scenario.success_table()?;
            let rows: Vec<(String, String)> =
                table.entries().iter().map(|(k, v)| (k.to_string(), fmt_num(*v))).collect();
            emit(g, "linkprobs", &rows)?;
        }
        Command::Hitprofile => {
            let h = scenario.hits()?;
            emit(
                g,
                "hitprofile",
                &[("q_u", fmt_num(h.q_u)), ("p_hd", fmt_num(h.p_hd)), ("p_hs", fmt_num(h.p_hs))].map(owned),
            )?;
        }
        Command::Analytic => {
            let r = analyze(&scenario.access_probs(), &scenario.hits()?, &scenario.success_table()?, scenario.modes.mu_mode);
            emit(
                g,
                "analytic",
                &[
                    ("mu", fmt_num(r.mu)),
                    ("stable", r.stable.to_string()),
                    ("busy_prob", fmt_num(r.busy_prob)),
                    ("t_s", fmt_num(r.t_s)),
                    ("t_u", fmt_num(r.t_u)),
                    ("t_w", fmt_num(r.t_w)),
                ]
                .map(owned),
            )?;
        }
        Command::Delay { eq } => {
            let eq = match eq {
                Some(DelayEqArg::Verbatim) => UserDelayEq::Verbatim,
                Some(DelayEqArg::Corrected) => UserDelayEq::Corrected,
                None => scenario.modes.user_delay_eq,
            };
            let inputs = scenario.delay_inputs()?;
            let solution = solve_delays(&inputs, eq)?;
            let mut rows = vec![owned(("p_s_to_d", fmt_num(inputs.transmit_prob)))];
            rows.extend(Unknown::ALL.iter().map(|u| (u.name().to_string(), fmt_num(solution.get(*u)))));
            match closed_form_checks(&inputs, &solution) {
                Ok(c) => {
                    rows.push(owned(("closed_form_max_residual", format!("{:e}", c.max_residual()))));
                    rows.push(owned(("d_d_times_expression_minus_1", format!("{:e}", c.d_reciprocal_residual))));
                }
                Err(e) => rows.push(owned(("closed_form_checks", e.to_string()))),
            }
            for d in &solution.diagnostics {
                eprintln!("note: {d}");
            }
            emit(g, "delay", &rows)?;
        }
        Command::Optimize { regime, w, lambda } => {
            let regime = match regime {
                RegimeArg::Stable => Regime::Stable,
                RegimeArg::Unstable => Regime::Unstable,
            };
            let problem = OptimizationProblem {
                regime,
                w: w.unwrap_or(scenario.access.w),
                lambda: Some(lambda.unwrap_or(scenario.access.lambda)),
                hits: scenario.hits()?,
                table: scenario.success_table()?,
                alpha: scenario.access.alpha,
                mu_mode: scenario.modes.mu_mode,
            };
            let result = optimize(&problem);
            let mut rows = vec![owned(("feasible", result.feasible.to_string()))];
            if let (Some(q), Some(v)) = (result.best_q, result.best_value) {
                rows.extend(
                    [
                        ("q_s", fmt_num(q[0])),
                        ("q_c", fmt_num(q[1])),
                        ("q_d", fmt_num(q[2])),
                        ("t_w", fmt_num(v)),
                        ("mu", fmt_num(problem.mu(q))),
                    ]
                    .map(owned),
                );
            }
            rows.push(owned(("refinement_iterations", result.refinement_iterations.to_string())));
            emit(g, "optimize", &rows)?;
        }
        Command::Simulate { measure, requests, warmup } => {
            let mut config = sim_config(g, &scenario);
            config.measure = match measure {
                MeasureArg::Throughput => Measure::Throughput,
                MeasureArg::Delay => Measure::Delay,
            };
            if let Some(r) = requests {
                config.requests = r;
            }
            if let Some(w) = warmup {
                config.warmup_slots = w;
            }
            let sim = scenario.sim_scenario(config.request_mode)?;
            let stats = run(&sim, &config)?;
            let analytic = analyze(&sim.probs, &sim.hits, &sim.table, config.mu_mode.analytic());
            let mut rows = Vec::new();
            let mut est = |name: &str, e: Option<Estimate>, target: Option<f64>| {
                if let Some(e) = e {
                    rows.push((name.to_string(), fmt_num(e.mean)));
                    rows.push((format!("{name}_se"), fmt_num(e.std_err)));
                    if let Some(t) = target {
                        rows.push((format!("{name}_analytic"), fmt_num(t)));
                        rows.push((format!("{name}_z"), fmt_num(e.z_score(t))));
                    }
                }
            };
            est("t_s", stats.t_s_hat, Some(analytic.t_s));
            est("t_u", stats.t_u_hat, Some(analytic.t_u));
            est("mu", stats.service_rate_hat, Some(analytic.mu));
            let d_u = if config.measure == Measure::Delay {
                let inputs = scenario_with_mode(&scenario, config.mu_mode.analytic()).delay_inputs()?;
                solve_delays(&inputs, scenario.modes.user_delay_eq).ok().map(|s| s.d_u)
            } else {
                None
            };
            est("d_u", stats.mean_delay_hat, d_u);
            if config.measure == Measure::Throughput {
                rows.extend(
                    [
                        ("busy_fraction", fmt_num(stats.busy_fraction)),
                        ("mean_queue_len", fmt_num(stats.mean_queue_len)),
                        ("queue_drift", fmt_num(stats.queue_drift)),
                        ("unstable_flag", stats.unstable_flag.to_string()),
                        ("arrivals", stats.arrivals.to_string()),
                        ("departures", stats.departures.to_string()),
                    ]
                    .map(owned),
                );
            } else {
                rows.push(owned(("completed_requests", stats.completed_requests.to_string())));
                rows.push(owned(("timed_out_requests", stats.timed_out_requests.to_string())));
            }
            if let Some(m) = mu_discrepancy(&stats, &sim) {
                rows.push(owned(("mu_verbatim", fmt_num(m.verbatim))));
                rows.push(owned(("mu_corrected", fmt_num(m.corrected))));
                rows.push(owned(("mu_verdict", m.verdict().to_string())));
            }
            for d in &stats.diagnostics {
                eprintln!("note: {d}");
            }
            emit(g, "simulate", &rows)?;
        }
        Command::Sweep { axis, engine, requests } => {
            let engine = match engine {
                EngineArg::Analytic => Engine::Analytic,
                EngineArg::Simulate => Engine::Simulate,
                EngineArg::Both => Engine::Both,
            };
            let mut config = sim_config(g, &scenario);
            if let Some(r) = requests {
                config.requests = r;
            }
            let table = sweep(&scenario, &axis, engine, &config)?;
            match &g.out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    println!("{}", table.write(dir)?.display());
                }
                None => print!("{}", table.to_csv_string()?),
            }
        }
        Command::Reproduce { target, lambda } => {
            let lambda = lambda.unwrap_or(scenario.access.lambda);
            let targets = if target == "all" {
                Target::all(lambda)
            } else {
                vec![Target::parse(&target, Some(lambda))?]
            };
            let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            let mut all_passed = true;
            for t in &targets {
                let r = reproduce(t, &scenario, &dir).with_context(|| format!("reproducing {t}"))?;
                print!("{}", r.summary());
                all_passed &= r.passed();
            }
            println!("wrote {}", dir.display());
            if !all_passed {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn owned((k, v): (&str, String)) -> (String, String) {
    (k.to_string(), v)
}

fn scenario(g: &Global) -> Result<ScenarioConfig> {
    let mut s = match &g.config {
        Some(path) => load_scenario(path).with_context(|| format!("loading {}", path.display()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(m) = g.mu_mode {
        s.modes.mu_mode = match m {
            MuModeArg::Verbatim => MuMode::Verbatim,
            MuModeArg::Corrected => MuMode::Corrected,
        };
    }
    if let Some(r) = g.request_mode {
        s.modes.request_mode = match r {
            RequestModeArg::Factorized => RequestMode::Factorized,
            RequestModeArg::FactorizedConditional => RequestMode::FactorizedConditional,
            RequestModeArg::ZipfExact => RequestMode::ZipfExact,
        };
    }
    s.validate()?;
    Ok(s)
}

fn scenario_with_mode(s: &ScenarioConfig, mode: MuMode) -> ScenarioConfig {
    let mut s = *s;
    s.modes.mu_mode = mode;
    s
}

/// The simulator realizes the scenario's service-rate reading.
fn sim_config(g: &Global, s: &ScenarioConfig) -> SimConfig {
    let mut c = SimConfig {
        seed: g.seed,
        request_mode: s.modes.request_mode,
        mu_mode: match s.modes.mu_mode {
            MuMode::Verbatim => SimMuMode::ExtraGate,
            MuMode::Corrected => SimMuMode::Protocol,
        },
        ..SimConfig::default()
    };
    if let Some(n) = g.slots {
        c.slots = n;
        c.warmup_slots = c.warmup_slots.min(n / 10);
    }
    c
}

/// Prints `key,value` rows; with `--out` also writes them to `<name>.csv`.
fn emit(g: &Global, name: &str, rows: &[(String, String)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    let text = String::from_utf8(w.into_inner()?)?;
    print!("{text}");
    if let Some(dir) = &g.out {
        write_file(dir, &format!("{name}.csv"), &text)?;
    }
    Ok(())
}

fn write_file(dir: &Path, file: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(file);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
