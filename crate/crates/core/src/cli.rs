//! Command-line driver. Every command writes one report (JSON envelope or
//! CSV table); the exit status is 0 on success, 1 when a checked claim
//! fails, 2 on configuration errors.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::brownian::{self, BmModel, BmRule, BmRuleEstimate, QuadConfig};
use crate::coupling;
use crate::dpsolver::{self, PolicyTable};
use crate::error::{Error, Result};
use crate::grids;
use crate::oracle;
use crate::par::{map_slice, Execution};
use crate::report::{Envelope, Num};
use crate::rewards::RewardSpec;
use crate::rng::{DEFAULT_SEED, GENERATOR, SEED_ENV};
use crate::scalar::{format_rational, parse_rational, Rational};
use crate::suite;
use crate::walkdist::WalkParams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ultmax", version, about = "Optimal prediction of the ultimate maximum of a random walk or Brownian motion")]
pub struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Disable data parallelism.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct WalkArgs {
    /// Up-probability as an exact rational `a/b`.
    #[arg(long, value_parser = parse_p)]
    pub p: Rational,
    /// Horizon.
    #[arg(long = "N")]
    pub n: usize,
    /// Reward: shorthand (`geometric:1/2`, `table:1,1,0`), JSON, or `@file.json`.
    #[arg(long, value_parser = parse_reward)]
    pub reward: RewardSpec,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Backward induction: optimal value, policy and uniqueness class.
    Solve {
        #[command(flatten)]
        walk: WalkArgs,
        /// Floating-point arithmetic instead of exact rationals.
        #[arg(long)]
        float: bool,
    },
    /// Exact value of a Markov stopping rule.
    Evaluate {
        #[command(flatten)]
        walk: WalkArgs,
        /// `tau0`, `tauN`, `running_max`, `max_after:K`, `tie:MASK`, or a policy CSV file.
        #[arg(long)]
        policy: String,
    },
    /// Exact optimality and inequality checks over the default grid.
    VerifyDiscrete {
        #[arg(long, default_value = "default")]
        grid: String,
    },
    /// Exhaustive enumeration of history-dependent rules against the DP.
    Oracle {
        #[command(flatten)]
        walk: WalkArgs,
        #[arg(long, default_value_t = oracle::DEFAULT_MAX_N)]
        max_n: usize,
    },
    /// Coupled walks for several `p` from shared uniforms.
    Simulate {
        /// Comma-separated up-probabilities.
        #[arg(long, value_parser = parse_p, value_delimiter = ',', required = true)]
        p: Vec<Rational>,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        /// Also estimate this rule's value for `--reward` on every `p`.
        #[arg(long, requires = "reward")]
        policy: Option<String>,
        #[arg(long, value_parser = parse_reward)]
        reward: Option<RewardSpec>,
        /// Also compare the empirical laws of `M_N` (under `p`) and `Z_N`
        /// (under `1-p`) with the exact law.
        #[arg(long)]
        time_reversal: bool,
        /// Total-variation tolerance for `--time-reversal`; defaults to the
        /// level sampling noise at `--reps` exceeds with probability 1e-6.
        #[arg(long, requires = "time_reversal")]
        tv_tolerance: Option<f64>,
    },
    /// Quadrature checks of the Brownian inequalities.
    BmVerify {
        /// Defaults to the grid's reward families.
        #[arg(long, value_parser = parse_reward)]
        reward: Option<RewardSpec>,
        #[arg(long, value_delimiter = ',')]
        t: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        x: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        lambda: Option<Vec<f64>>,
        #[arg(long, default_value_t = QuadConfig::default().abs_tol)]
        abs_tol: f64,
    },
    /// Monte Carlo values of Brownian stopping rules.
    BmMc {
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, value_parser = parse_reward)]
        reward: RewardSpec,
        /// Comma-separated rules; defaults to a standard family.
        #[arg(long, value_delimiter = ',')]
        rules: Option<Vec<BmRule>>,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = brownian::MIN_STEPS)]
        steps: usize,
    },
    /// Solve over a `p x N` grid.
    Sweep {
        #[arg(long, value_parser = parse_reward)]
        reward: RewardSpec,
        #[arg(long, value_parser = parse_p, value_delimiter = ',')]
        p: Option<Vec<Rational>>,
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n: Vec<usize>,
    },
}

fn parse_p(s: &str) -> std::result::Result<Rational, String> {
    let p = parse_rational(s).map_err(|e| e.to_string())?;
    if crate::scalar::is_probability(&p) {
        Ok(p)
    } else {
        Err(format!("p must lie strictly between 0 and 1, got {s}"))
    }
}

fn parse_reward(s: &str) -> std::result::Result<RewardSpec, String> {
    let text = match s.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?,
        None => s.to_string(),
    };
    text.trim().parse::<RewardSpec>().map_err(|e| e.to_string())
}

/// Rendered report and whether every checked claim held.
pub struct Outcome {
    pub body: String,
    pub ok: bool,
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
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli).and_then(|o| emit(&cli, &o).map(|_| o)) {
        Ok(o) if o.ok => EXIT_OK,
        Ok(_) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Quadrature { .. } => EXIT_CHECK_FAILED,
                _ => EXIT_CONFIG,
            }
        }
    }
}

fn emit(cli: &Cli, o: &Outcome) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, &o.body)?,
        None => std::io::stdout().lock().write_all(o.body.as_bytes())?,
    }
    Ok(())
}

fn exec(cli: &Cli) -> Execution {
    if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn walk_of(a: &WalkArgs) -> Result<WalkParams> {
    WalkParams::new(a.p.clone(), a.n)
}

fn walk_config(a: &WalkArgs) -> Value {
    json!({ "p": format_rational(&a.p), "N": a.n, "reward": a.reward })
}

fn json_outcome(command: &str, config: Value, result: impl Serialize, ok: bool) -> Outcome {
    Outcome {
        body: Envelope::new(command, config, result).to_json(),
        ok,
    }
}

fn csv_body(write: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        write(&mut w)?;
        w.flush()?;
    }
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

fn csv_unsupported(command: &str) -> Error {
    Error::Config(format!("{command} has no CSV form; use --format json"))
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let ex = exec(cli);
    match &cli.command {
        Command::Solve { walk, float } => solve_cmd(cli, walk, *float),
        Command::Evaluate { walk, policy } => {
            if cli.format == Format::Csv {
                return Err(csv_unsupported("evaluate"));
            }
            let w = walk_of(walk)?;
            let pol = policy_of(policy, w.n())?;
            let value = dpsolver::evaluate_policy(&w, &walk.reward, &pol)?;
            let mut config = walk_config(walk);
            config["policy"] = json!(policy);
            Ok(json_outcome("evaluate", config, json!({ "value": Num::exact(&value), "policy": pol }), true))
        }
        Command::VerifyDiscrete { grid } => {
            if grid != "default" && grid != grids::GRID_VERSION {
                return Err(Error::Config(format!("unknown grid {grid:?}; available: default ({})", grids::GRID_VERSION)));
            }
            let v = suite::verify_discrete(ex)?;
            let ok = v.passed;
            match cli.format {
                Format::Json => Ok(json_outcome("verify-discrete", json!({ "grid": grids::GRID_VERSION }), v, ok)),
                Format::Csv => Ok(Outcome {
                    body: csv_body(|w| {
                        for row in &v.summary {
                            w.serialize(row)?;
                        }
                        Ok(())
                    })?,
                    ok,
                }),
            }
        }
        Command::Oracle { walk, max_n } => {
            if cli.format == Format::Csv {
                return Err(csv_unsupported("oracle"));
            }
            let w = walk_of(walk)?;
            let cv = oracle::cross_validate_report(&w, &walk.reward, *max_n, ex)?;
            let mut config = walk_config(walk);
            config["max_n"] = json!(max_n);
            let ok = cv.passed();
            Ok(json_outcome("oracle", config, cv, ok))
        }
        Command::Simulate { p, n, reps, policy, reward, time_reversal, tv_tolerance } => {
            let tr = time_reversal.then_some(*tv_tolerance);
            simulate_cmd(cli, p, *n, *reps, policy.as_deref(), reward.as_ref(), tr)
        }
        Command::BmVerify { reward, t, x, lambda, abs_tol } => {
            let families = match reward {
                Some(f) => vec![f.clone()],
                None => grids::bm_families(),
            };
            let ts = t.clone().unwrap_or_else(|| grids::BM_TIMES.to_vec());
            let xs = x.clone().unwrap_or_else(|| grids::BM_LEVELS.to_vec());
            let ls = lambda.clone().unwrap_or_else(|| grids::BM_DRIFTS.to_vec());
            let cfg = QuadConfig { abs_tol: *abs_tol, ..QuadConfig::default() };
            cfg.validate()?;
            let mut results = Vec::new();
            for f in &families {
                let rows = brownian::verify_grid(f, &ts, &xs, &ls, &cfg, ex)?;
                results.push((f.clone(), rows));
            }
            let ok = results.iter().all(|(_, rows)| rows.iter().all(|r| r.pass));
            let config = json!({ "rewards": families, "t": ts, "x": xs, "lambda": ls, "quad": cfg, "grid": grids::GRID_VERSION });
            match cli.format {
                Format::Json => {
                    let result: Vec<Value> = results
                        .iter()
                        .map(|(f, rows)| json!({ "reward": f.label(), "rows": rows }))
                        .collect();
                    Ok(json_outcome("bm-verify", config, json!({ "passed": ok, "families": result }), ok))
                }
                Format::Csv => Ok(Outcome {
                    body: csv_body(|w| {
                        w.write_record(["reward", "inequality", "t", "x", "lambda", "lhs", "rhs", "quad_error_bound", "verdict", "expected", "pass"])?;
                        for (f, rows) in &results {
                            for r in rows {
                                for (name, rep, e) in [("key", &r.key, r.key_expected), ("corollary", &r.corollary, r.corollary_expected)] {
                                    w.write_record([
                                        f.label(),
                                        name.to_string(),
                                        rep.t.to_string(),
                                        rep.x.to_string(),
                                        rep.lambda.to_string(),
                                        rep.lhs.to_string(),
                                        rep.rhs.to_string(),
                                        rep.quad_error_bound.to_string(),
                                        enum_name(&rep.verdict),
                                        enum_name(&e),
                                        rep.verdict.meets(e).to_string(),
                                    ])?;
                                }
                            }
                        }
                        Ok(())
                    })?,
                    ok,
                }),
            }
        }
        Command::BmMc { lambda, horizon, reward, rules, reps, steps } => {
            bm_mc_cmd(cli, *lambda, *horizon, reward, rules.clone(), *reps, *steps)
        }
        Command::Sweep { reward, p, n } => sweep_cmd(cli, reward, p.clone().unwrap_or_else(grids::p_grid), n),
    }
}

fn enum_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

/// `tau0`, `tauN`, `running_max`, `max_after:K`, `tie:MASK`, else a CSV path.
pub fn policy_of(spec: &str, horizon: usize) -> Result<PolicyTable> {
    let bad = |m: String| Error::Config(m);
    Ok(match spec.split_once(':') {
        None if spec == "tau0" => PolicyTable::stop_immediately(horizon),
        None if spec == "tauN" => PolicyTable::never_stop(horizon),
        None if spec == "running_max" => PolicyTable::stop_at_running_max(horizon),
        Some(("max_after", k)) => {
            let k = k.parse().map_err(|e| bad(format!("max_after: {e}")))?;
            PolicyTable::stop_at_max_after(horizon, k)
        }
        Some(("tie", m)) => {
            let m: usize = m.parse().map_err(|e| bad(format!("tie: {e}")))?;
            if horizon < usize::BITS as usize && m >> horizon != 0 {
                return Err(bad(format!("tie mask {m} has bits beyond N = {horizon}")));
            }
            dpsolver::tie_class_policy(horizon, m)
        }
        _ => {
            let file = std::fs::File::open(spec).map_err(|e| bad(format!("policy {spec:?}: {e}")))?;
            PolicyTable::read_csv(horizon, file)?
        }
    })
}

fn solve_cmd(cli: &Cli, walk: &WalkArgs, float: bool) -> Result<Outcome> {
    let w = walk_of(walk)?;
    let mut config = walk_config(walk);
    config["arithmetic"] = json!(if float { "float" } else { "exact" });
    let (body, policy) = if float {
        let r = dpsolver::solve_in::<f64>(&w, &walk.reward)?;
        let p = r.policy.clone();
        (Envelope::new("solve", config, r).to_json(), p)
    } else {
        let r = dpsolver::solve(&w, &walk.reward)?;
        let p = r.policy.clone();
        (Envelope::new("solve", config, r).to_json(), p)
    };
    let body = match cli.format {
        Format::Json => body,
        Format::Csv => {
            let mut buf = Vec::new();
            policy.write_csv(&mut buf)?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
    };
    Ok(Outcome { body, ok: true })
}

#[derive(Serialize)]
struct EndpointMean {
    p: String,
    mean_endpoint_over_n: Num,
    drift: f64,
}

#[derive(Serialize)]
struct RuleAtP {
    p: String,
    mc: coupling::McEstimate,
    exact: Num,
    within_4_stderr: bool,
}

#[allow(clippy::too_many_arguments)]
fn simulate_cmd(
    cli: &Cli,
    ps: &[Rational],
    n: usize,
    reps: usize,
    policy: Option<&str>,
    reward: Option<&RewardSpec>,
    time_reversal: Option<Option<f64>>,
) -> Result<Outcome> {
    let ex = exec(cli);
    if cli.format == Format::Csv {
        let sims = coupling::simulate(cli.seed, n, ps, reps, ex)?;
        let mut buf = Vec::new();
        coupling::write_paths_csv(&sims, &mut buf)?;
        let ok = sims.iter().all(coupling::CoupledPaths::ordering_holds);
        return Ok(Outcome { body: String::from_utf8(buf).expect("csv is utf-8"), ok });
    }
    if reps == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let violations = coupling::ordering_violations(cli.seed, n, ps, reps, ex);
    let means: Vec<EndpointMean> = ps
        .iter()
        .map(|p| {
            let m = crate::par::replicate(ex, reps, 1, |r, out| {
                let c = coupling::coupled_replication(cli.seed, n, std::slice::from_ref(p), r);
                out[0] = if n == 0 { 0.0 } else { c.paths[0].s[n] as f64 / n as f64 };
            })[0];
            EndpointMean {
                p: format_rational(p),
                mean_endpoint_over_n: Num::Mc { value: m.mean, stderr: m.stderr() },
                drift: 2.0 * crate::scalar::Scalar::to_f64(p) - 1.0,
            }
        })
        .collect();
    let mut ok = violations == 0;
    let mut result = json!({
        "generator": GENERATOR,
        "replications": reps,
        "ordering_violations": violations,
        "endpoints": means,
    });
    if let (Some(policy), Some(f)) = (policy, reward) {
        let mut rows = Vec::new();
        for p in ps {
            let w = WalkParams::new(p.clone(), n)?;
            let pol = policy_of(policy, n)?;
            let mc = coupling::mc_rule_value(cli.seed, &w, f, &pol, reps, ex)?;
            let exact = dpsolver::evaluate_policy(&w, f, &pol)?;
            let within = (mc.estimate - crate::scalar::Scalar::to_f64(&exact)).abs() <= 4.0 * mc.stderr;
            ok &= within;
            rows.push(RuleAtP { p: format_rational(p), mc, exact: Num::exact(&exact), within_4_stderr: within });
        }
        result["rule_values"] = serde_json::to_value(rows)?;
    }
    if let Some(tolerance) = time_reversal {
        if tolerance.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("--tv-tolerance must be positive".into()));
        }
        let mut rows = Vec::new();
        for p in ps {
            let w = WalkParams::new(p.clone(), n)?;
            let r = coupling::time_reversal_check(cli.seed, &w, reps, tolerance, ex)?;
            ok &= r.pass;
            rows.push(json!({ "p": format_rational(p), "report": r }));
        }
        result["time_reversal"] = Value::Array(rows);
    }
    let config = json!({
        "p": ps.iter().map(format_rational).collect::<Vec<_>>(),
        "N": n,
        "reps": reps,
        "seed": cli.seed,
        "policy": policy,
        "reward": reward,
        "time_reversal": time_reversal.is_some(),
        "tv_tolerance": time_reversal.flatten(),
    });
    Ok(json_outcome("simulate", config, result, ok))
}

/// Default alternatives compared against the bang-bang rules.
pub fn standard_bm_rules() -> Vec<BmRule> {
    let mut v = vec![BmRule::Tau0, BmRule::TauT];
    v.extend([0.0, 0.25, 0.5, 1.0].map(|a| BmRule::DrawdownThreshold { a }));
    v.extend([0.25, 0.5, 0.75].map(|t0| BmRule::TimeThreshold { t0 }));
    v.extend([0.25, 0.5, 1.0].map(|a| BmRule::StopLoss { a }));
    v
}

#[derive(Debug, Clone, Serialize)]
pub struct DominanceCheck {
    pub claim: String,
    pub pass: bool,
}

/// What the theory predicts for the estimated rules at drift `lambda`,
/// each comparison at `k` combined standard errors.
pub fn bm_dominance_checks(lambda: f64, est: &[BmRuleEstimate], k: f64) -> Vec<DominanceCheck> {
    let find = |r: BmRule| est.iter().find(|e| e.rule == r);
    let mut out = Vec::new();
    let best = if lambda < 0.0 {
        Some(BmRule::Tau0)
    } else if lambda > 0.0 {
        Some(BmRule::TauT)
    } else {
        None
    };
    if let Some(b) = best.and_then(find) {
        for e in est.iter().filter(|e| e.rule != b.rule) {
            out.push(DominanceCheck {
                claim: format!("{} >= {} - {k} se", b.rule, e.rule),
                pass: b.dominates(e, k),
            });
        }
    }
    if lambda == 0.0 {
        let group: Vec<&BmRuleEstimate> = [BmRule::Tau0, BmRule::TauT, BmRule::DrawdownThreshold { a: 0.0 }]
            .into_iter()
            .filter_map(find)
            .collect();
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                out.push(DominanceCheck {
                    claim: format!("{} ~ {} within {k} se", a.rule, b.rule),
                    pass: a.agrees(b, k),
                });
            }
        }
    }
    out
}

fn bm_mc_cmd(
    cli: &Cli,
    lambda: f64,
    horizon: f64,
    reward: &RewardSpec,
    rules: Option<Vec<BmRule>>,
    reps: usize,
    steps: usize,
) -> Result<Outcome> {
    let mut model = BmModel::new(lambda, horizon)?;
    model.mc.replications = reps;
    model.mc.steps = steps;
    model.mc.seed = cli.seed;
    let rules = rules.unwrap_or_else(standard_bm_rules);
    let est = brownian::mc_bm_rule_values(&model, reward, &rules, exec(cli))?;
    let checks = bm_dominance_checks(lambda, &est, 4.0);
    let ok = checks.iter().all(|c| c.pass);
    match cli.format {
        Format::Json => {
            let config = json!({
                "model": model,
                "reward": reward,
                "rules": rules.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
                "generator": GENERATOR,
                "drawdown_eps": brownian::DRAWDOWN_EPS_FACTOR,
            });
            Ok(json_outcome("bm-mc", config, json!({ "estimates": est, "checks": checks }), ok))
        }
        Format::Csv => Ok(Outcome {
            body: csv_body(|w| {
                w.write_record(["rule", "estimate", "stderr", "replications", "steps"])?;
                for e in &est {
                    w.write_record([
                        e.rule.to_string(),
                        e.estimate.to_string(),
                        e.stderr.to_string(),
                        e.replications.to_string(),
                        e.steps.map(|s| s.to_string()).unwrap_or_default(),
                    ])?;
                }
                Ok(())
            })?,
            ok,
        }),
    }
}

/// One solved sweep point; exact values as `Num`s in JSON.
#[derive(Debug, Clone, Serialize)]
struct SweepPoint {
    p: String,
    #[serde(rename = "N")]
    n: usize,
    optimal_value: Num,
    value_tau0: Num,
    #[serde(rename = "value_tauN")]
    value_tau_n: Num,
    unique: dpsolver::Uniqueness,
}

/// Flat CSV form of a [`SweepPoint`].
#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    p: String,
    #[serde(rename = "N")]
    n: usize,
    optimal_value: String,
    value_tau0: String,
    #[serde(rename = "value_tauN")]
    value_tau_n: String,
    optimal_approx: f64,
    unique: dpsolver::Uniqueness,
}

impl SweepRow {
    fn of(pt: &SweepPoint) -> Self {
        let exact = |n: &Num| match n {
            Num::Exact { value, .. } => value.clone(),
            other => other.value().to_string(),
        };
        Self {
            p: pt.p.clone(),
            n: pt.n,
            optimal_value: exact(&pt.optimal_value),
            value_tau0: exact(&pt.value_tau0),
            value_tau_n: exact(&pt.value_tau_n),
            optimal_approx: pt.optimal_value.value(),
            unique: pt.unique,
        }
    }
}

fn sweep_cmd(cli: &Cli, reward: &RewardSpec, mut ps: Vec<Rational>, ns: &[usize]) -> Result<Outcome> {
    ps.sort();
    ps.dedup();
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let keys: Vec<(Rational, usize)> = ps.iter().flat_map(|p| ns.iter().map(move |&n| (p.clone(), n))).collect();
    let rows = map_slice(exec(cli), &keys, |(p, n)| -> Result<SweepPoint> {
        let r = dpsolver::solve(&WalkParams::new(p.clone(), *n)?, reward)?;
        Ok(SweepPoint {
            p: format_rational(p),
            n: *n,
            optimal_value: Num::exact(&r.optimal_value),
            value_tau0: Num::exact(&r.value_tau0),
            value_tau_n: Num::exact(&r.value_tau_n),
            unique: r.unique,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    match cli.format {
        Format::Json => {
            let config = json!({
                "reward": reward,
                "p": ps.iter().map(format_rational).collect::<Vec<_>>(),
                "N": ns,
            });
            Ok(json_outcome("sweep", config, rows, true))
        }
        Format::Csv => Ok(Outcome {
            body: csv_body(|w| {
                for r in &rows {
                    w.serialize(SweepRow::of(r))?;
                }
                Ok(())
            })?,
            ok: true,
        }),
    }
}
