//! Experiment CLI: JSON-configured runs over the seminorm-sa library with
//! CSV/JSON artifact emission and a manifest of content hashes.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 acceptance-suite failure.

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use seminorm_sa::nalgebra::{DMatrix, DVector};
use seminorm_sa::report::{write_envelope, write_manifest, write_summary, write_traces};
use seminorm_sa::sa::{
    bound_envelope, check_condition1, run_linear_sa, run_sa, BoundConstants, EnvelopeParams,
    LinearSaInstance, RunOptions, SARun, TrialTrace,
};
use seminorm_sa::schedule::StepsizeSchedule;
use seminorm_sa::seminorm::{fixed_point_iterate, Operator, Seminorm};
use seminorm_sa::spectral::Mode;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "seminorm-sa", version, about = "Seminorm fixed-point experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a Lyapunov equation with a prescribed kernel and emit the certificate.
    Lyapunov(CommonArgs),
    /// Iterate a linear/affine map and trace the seminorm error per step.
    FpIterate(CommonArgs),
    /// Run the scalar contractive SA problem over seeded trials.
    SaRun(CommonArgs),
    /// Run a Markov-modulated linear SA recursion over seeded trials.
    LinearSaRun(CommonArgs),
    /// Run TD(lambda) with tabular features on a policy-evaluated MDP.
    TdLambda(CommonArgs),
    /// Run synchronous J-step Q-learning against the exact oracle.
    QLearn(CommonArgs),
    /// Check the finite-sample bound envelope against Monte-Carlo error.
    VerifyBounds(CommonArgs),
    /// Run the full acceptance suite and write a machine-readable report.
    Acceptance(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment config with a top-level "kind" discriminator.
    #[arg(long)]
    config: PathBuf,
    /// Master seed (overrides nothing in the config; default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts (default ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error with an exit code attached.
struct CliError {
    code: u8,
    err: anyhow::Error,
}

type CliResult<T> = Result<T, CliError>;

fn config_err(err: anyhow::Error) -> CliError {
    CliError { code: 1, err }
}

impl From<seminorm_sa::Error> for CliError {
    fn from(e: seminorm_sa::Error) -> Self {
        CliError {
            code: 2,
            err: anyhow::Error::new(e),
        }
    }
}

// ---------------------------------------------------------------- configs --

#[derive(Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
enum Config {
    #[serde(rename = "lyapunov")]
    Lyapunov(LyapunovCfg),
    #[serde(rename = "fp-iterate")]
    FpIterate(FpCfg),
    #[serde(rename = "sa-run")]
    SaRun(SaCfg),
    #[serde(rename = "linear-sa-run")]
    LinearSaRun(LinearCfg),
    #[serde(rename = "td-lambda")]
    TdLambda(TdCfg),
    #[serde(rename = "q-learn")]
    QLearn(QCfg),
    #[serde(rename = "verify-bounds")]
    VerifyBounds(VerifyCfg),
    #[serde(rename = "acceptance")]
    Acceptance(AcceptanceCfg),
}

impl Config {
    fn kind(&self) -> &'static str {
        match self {
            Config::Lyapunov(_) => "lyapunov",
            Config::FpIterate(_) => "fp-iterate",
            Config::SaRun(_) => "sa-run",
            Config::LinearSaRun(_) => "linear-sa-run",
            Config::TdLambda(_) => "td-lambda",
            Config::QLearn(_) => "q-learn",
            Config::VerifyBounds(_) => "verify-bounds",
            Config::Acceptance(_) => "acceptance",
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LyapunovCfg {
    mode: ModeCfg,
    a: Vec<Vec<f64>>,
    /// Explicit right-hand side; mutually exclusive with `e_basis`.
    q: Option<Vec<Vec<f64>>>,
    /// Kernel basis from which a random PSD right-hand side is generated.
    e_basis: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum ModeCfg {
    Discrete,
    Continuous,
}

impl From<ModeCfg> for Mode {
    fn from(m: ModeCfg) -> Mode {
        match m {
            ModeCfg::Discrete => Mode::Discrete,
            ModeCfg::Continuous => Mode::Continuous,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FpCfg {
    a: Vec<Vec<f64>>,
    b: Option<Vec<f64>>,
    /// Seminorm in the library's JSON form {kind, dim, kernel_basis, ...}.
    p: serde_json::Value,
    x0: Vec<f64>,
    steps: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SaCfg {
    /// Additive noise magnitude of the scalar test problem.
    sigma: f64,
    schedule: StepsizeSchedule,
    horizon: usize,
    trials: usize,
    keep_traces: Option<bool>,
    /// Optional explicit envelope recursion constants.
    envelope: Option<EnvCfg>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvCfg {
    init: f64,
    decay: f64,
    noise: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearCfg {
    a_mats: Vec<Vec<Vec<f64>>>,
    b_vecs: Vec<Vec<f64>>,
    /// Row-stochastic modulating chain, one row per A/b pair.
    chain: Vec<Vec<f64>>,
    /// Lyapunov right-hand side for the mean dynamics (default: identity).
    q: Option<Vec<Vec<f64>>>,
    x0: Vec<f64>,
    schedule: StepsizeSchedule,
    horizon: usize,
    trials: usize,
    keep_traces: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TdCfg {
    mdp: Option<serde_json::Value>,
    mdp_file: Option<PathBuf>,
    policy: Vec<usize>,
    lambda: f64,
    c_alpha: Option<f64>,
    schedule: StepsizeSchedule,
    horizon: usize,
    trials: usize,
    keep_traces: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QCfg {
    mdp: Option<serde_json::Value>,
    mdp_file: Option<PathBuf>,
    /// Lookahead depth; when absent the smallest sampled-contractive J is used.
    j: Option<usize>,
    schedule: StepsizeSchedule,
    horizon: usize,
    trials: usize,
    noise_free: Option<bool>,
    keep_traces: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyCfg {
    sigma: f64,
    schedule: StepsizeSchedule,
    horizon: usize,
    trials: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AcceptanceCfg {}

// ---------------------------------------------------------------- helpers --

fn to_matrix(rows: &[Vec<f64>], what: &str) -> CliResult<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(config_err(anyhow!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(config_err(anyhow!("{what}: ragged or empty rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

/// Kernel basis configs may legitimately have zero columns; an empty list
/// means a trivial kernel in the ambient dimension `dim`.
fn to_basis(rows: &Option<Vec<Vec<f64>>>, dim: usize) -> CliResult<DMatrix<f64>> {
    match rows {
        None => Ok(DMatrix::zeros(dim, 0)),
        Some(r) if r.is_empty() || r[0].is_empty() => Ok(DMatrix::zeros(dim, 0)),
        Some(r) => to_matrix(r, "e_basis"),
    }
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> CliResult<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).map_err(|e| CliError {
        code: 2,
        err: e.into(),
    })?)
    .map_err(|e| CliError {
        code: 2,
        err: e.into(),
    })?;
    Ok(path)
}

fn load_mdp(
    inline: &Option<serde_json::Value>,
    file: &Option<PathBuf>,
) -> CliResult<seminorm_sa::rl::Mdp> {
    match (inline, file) {
        (Some(v), None) => seminorm_sa::rl::Mdp::from_json(v)
            .map_err(|e| config_err(anyhow::Error::new(e).context("inline mdp"))),
        (None, Some(p)) => seminorm_sa::rl::Mdp::from_file(p)
            .map_err(|e| config_err(anyhow::Error::new(e).context(format!("mdp file {}", p.display())))),
        _ => Err(config_err(anyhow!(
            "exactly one of `mdp` and `mdp_file` must be given"
        ))),
    }
}

fn run_artifacts(
    dir: &Path,
    run: &SARun,
    keep_traces: bool,
    extra: Vec<PathBuf>,
    raw_cfg: &serde_json::Value,
    seed: u64,
) -> CliResult<Vec<PathBuf>> {
    let mut files = extra;
    if keep_traces {
        files.push(write_traces(dir, run)?);
    }
    files.push(write_summary(dir, run)?);
    let manifest = write_manifest(dir, raw_cfg, seed, &files)?;
    files.push(manifest);
    Ok(files)
}

// ------------------------------------------------------------ subcommands --

fn cmd_lyapunov(cfg: &LyapunovCfg, dir: &Path, raw: &serde_json::Value, seed: u64) -> CliResult<()> {
    let a = to_matrix(&cfg.a, "a")?;
    let d = a.nrows();
    let q = match &cfg.q {
        Some(rows) => to_matrix(rows, "q")?,
        None => {
            let e = to_basis(&cfg.e_basis, d)?;
            seminorm_sa::lyapunov::random_q_with_kernel(d, &e, seed)
        }
    };
    let mode: Mode = cfg.mode.into();
    let cert = match mode {
        Mode::Discrete => seminorm_sa::lyapunov::solve_discrete(&a, &q)?,
        Mode::Continuous => seminorm_sa::lyapunov::solve_continuous(&a, &q)?,
    };
    let gamma = match mode {
        Mode::Discrete => Some(seminorm_sa::lyapunov::contraction_factor_from_certificate(
            &cert,
        )?),
        Mode::Continuous => None,
    };
    let out = serde_json::json!({
        "mode": match mode { Mode::Discrete => "discrete", Mode::Continuous => "continuous" },
        "p": seminorm_sa::linalg::matrix_to_json(&cert.p),
        "q": seminorm_sa::linalg::matrix_to_json(&cert.q),
        "e_basis": seminorm_sa::linalg::matrix_to_json(&cert.e_basis),
        "residual": cert.residual,
        "c2_prime": cert.c2_prime,
        "uniqueness_gap": cert.uniqueness_gap,
        "pencil_condition": cert.pencil_condition,
        "contraction_factor": gamma,
    });
    let f = write_json(dir, "lyapunov.json", &out)?;
    let m = write_manifest(dir, raw, seed, &[f])?;
    println!("wrote lyapunov.json and {}", m.display());
    Ok(())
}

fn cmd_fp_iterate(cfg: &FpCfg, dir: &Path, raw: &serde_json::Value, seed: u64) -> CliResult<()> {
    let a = to_matrix(&cfg.a, "a")?;
    let p = Seminorm::from_json(&cfg.p)
        .map_err(|e| config_err(anyhow::Error::new(e).context("seminorm config")))?;
    if cfg.steps == 0 {
        return Err(config_err(anyhow!("steps must be >= 1")));
    }
    if cfg.x0.len() != p.dim() {
        return Err(config_err(anyhow!(
            "x0 length {} != seminorm dimension {}",
            cfg.x0.len(),
            p.dim()
        )));
    }
    let x0 = DVector::from_vec(cfg.x0.clone());
    let op = match &cfg.b {
        Some(b) => Operator::Affine(a, DVector::from_vec(b.clone())),
        None => Operator::Linear(a),
    };
    let trace = fixed_point_iterate(&op, &p, &x0, cfg.steps, None)?;
    // Package the deterministic trace as a single-trial run so the standard
    // CSV writers apply (se = 0, mean-square = squared p-error).
    let run = SARun {
        schedule: StepsizeSchedule::Constant { alpha: 1.0 },
        horizon: cfg.steps + 1,
        n_trials: 1,
        seed,
        mean_sq: trace.p_errors.iter().map(|e| e * e).collect(),
        se_sq: vec![0.0; trace.p_errors.len()],
        n_diverged: 0,
        traces: vec![TrialTrace {
            p_errors: trace.p_errors.clone(),
            coord_sup: trace.coord_sup.clone(),
            diverged: false,
        }],
    };
    let files = run_artifacts(dir, &run, true, Vec::new(), raw, seed)?;
    println!(
        "final p-error {:e}; wrote {} artifacts to {}",
        trace.p_errors.last().copied().unwrap_or(f64::NAN),
        files.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_sa_run(cfg: &SaCfg, dir: &Path, raw: &serde_json::Value, seed: u64) -> CliResult<()> {
    cfg.schedule
        .validate()
        .map_err(|e| config_err(anyhow::Error::new(e)))?;
    if cfg.horizon == 0 || cfg.trials == 0 {
        return Err(config_err(anyhow!("horizon and trials must be >= 1")));
    }
    let problem = seminorm_sa::instances::scalar_problem(cfg.sigma)
        .map_err(|e| config_err(anyhow::Error::new(e)))?;
    let keep = cfg.keep_traces.unwrap_or(true);
    let opts = RunOptions {
        horizon: cfg.horizon,
        n_trials: cfg.trials,
        seed,
        keep_traces: keep,
    };
    let run = run_sa(&problem, cfg.schedule, &opts);
    let mut extra = Vec::new();
    if let Some(env_cfg) = &cfg.envelope {
        let params = EnvelopeParams {
            init: env_cfg.init,
            decay: env_cfg.decay,
            noise: env_cfg.noise,
        };
        let env = bound_envelope(&params, &cfg.schedule, &problem.chain, cfg.horizon, true)?;
        extra.push(write_envelope(dir, &env)?);
    }
    let files = run_artifacts(dir, &run, keep, extra, raw, seed)?;
    println!(
        "final mean-square error {:e} ({} diverged); wrote {} artifacts to {}",
        run.mean_sq.last().copied().unwrap_or(f64::NAN),
        run.n_diverged,
        files.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_linear_sa(cfg: &LinearCfg, dir: &Path, raw: &serde_json::Value, seed: u64) -> CliResult<()> {
    cfg.schedule
        .validate()
        .map_err(|e| config_err(anyhow::Error::new(e)))?;
    if cfg.a_mats.is_empty() || cfg.a_mats.len() != cfg.b_vecs.len() {
        return Err(config_err(anyhow!(
            "a_mats and b_vecs must be non-empty and the same length"
        )));
    }
    let chain = seminorm_sa::markov::MarkovChain::new(to_matrix(&cfg.chain, "chain")?)
        .map_err(|e| config_err(anyhow::Error::new(e)))?;
    let a_mats: Vec<DMatrix<f64>> = cfg
        .a_mats
        .iter()
        .map(|m| to_matrix(m, "a_mats"))
        .collect::<CliResult<_>>()?;
    let b_vecs: Vec<DVector<f64>> = cfg
        .b_vecs
        .iter()
        .map(|v| DVector::from_vec(v.clone()))
        .collect();
    let d = cfg.x0.len();
    let mut a_bar = DMatrix::zeros(d, d);
    for (y, a) in a_mats.iter().enumerate() {
        if a.nrows() != d || a.ncols() != d {
            return Err(config_err(anyhow!("a_mats[{y}] is not {d}x{d}")));
        }
        a_bar += chain.stationary[y] * a;
    }
    let q = match &cfg.q {
        Some(rows) => to_matrix(rows, "q")?,
        None => DMatrix::identity(d, d),
    };
    let cert = seminorm_sa::lyapunov::solve_continuous(&a_bar, &q)?;
    let inst = LinearSaInstance::new(a_mats, b_vecs, chain, &cert, DVector::from_vec(cfg.x0.clone()))?;
    let keep = cfg.keep_traces.unwrap_or(true);
    let opts = RunOptions {
        horizon: cfg.horizon,
        n_trials: cfg.trials,
        seed,
        keep_traces: keep,
    };
    let run = run_linear_sa(&inst, cfg.schedule, &opts);
    let info = serde_json::json!({
        "c2_prime": inst.c2_prime,
        "l1": inst.l1,
        "l2": inst.l2,
        "x_star": inst.x_star.iter().copied().collect::<Vec<f64>>(),
    });
    let extra = vec![write_json(dir, "linear_sa.json", &info)?];
    let files = run_artifacts(dir, &run, keep, extra, raw, seed)?;
    println!(
        "final mean-square error {:e} ({} diverged); wrote {} artifacts to {}",
        run.mean_sq.last().copied().unwrap_or(f64::NAN),
        run.n_diverged,
        files.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_td_lambda(cfg: &TdCfg, dir: &Path, raw: &serde_json::Value, seed: u64) -> CliResult<()> {
    cfg.schedule
        .validate()
        .map_err(|e| config_err(anyhow::Error::new(e)))?;
    if !(0.0..1.0).contains(&cfg.lambda) {
        return Err(config_err(anyhow!("lambda must lie in [0, 1)")));
    }
    let mdp = load_mdp(&cfg.mdp, &cfg.mdp_file)?;
    if cfg.policy.len() != mdp.n_states {
        return Err(config_err(anyhow!(
            "policy length {} != n_states {}",
            cfg.policy.len(),
            mdp.n_states
        )));
    }
    let features = seminorm_sa::rl::FeatureMap::tabular(mdp.n_states);
    let inst = seminorm_sa::rl::TdInstance::new(&mdp, &cfg.policy, features, cfg.lambda, cfg.c_alpha)?;
    let keep = cfg.keep_traces.unwrap_or(true);
    let opts = RunOptions {
        horizon: cfg.horizon,
        n_trials: cfg.trials,
        seed,
        keep_traces: keep,
    };
    let run = seminorm_sa::rl::td_lambda_run(&inst, cfg.schedule, &opts);
    let info = serde_json::json!({
        "r_avg": inst.mrp.r_avg,
        "delta": inst.solution.delta,
        "c_alpha": inst.c_alpha,
        "theta_star_lifted": inst.theta_star_lifted.iter().copied().collect::<Vec<f64>>(),
    });
    let extra = vec![write_json(dir, "td.json", &info)?];
    let files = run_artifacts(dir, &run, keep, extra, raw, seed)?;
    println!(
        "final mean-square error {:e}; wrote {} artifacts to {}",
        run.mean_sq.last().copied().unwrap_or(f64::NAN),
        files.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_q_learn(cfg: &QCfg, dir: &Path, raw: &serde_json::Value, seed: u64) -> CliResult<()> {
    cfg.schedule
        .validate()
        .map_err(|e| config_err(anyhow::Error::new(e)))?;
    let mdp = load_mdp(&cfg.mdp, &cfg.mdp_file)?;
    let (j, gamma_hat) = match cfg.j {
        Some(j) if j >= 1 => (j, None),
        Some(_) => return Err(config_err(anyhow!("j must be >= 1"))),
        None => {
            let (j, g) = seminorm_sa::rl::select_j(&mdp, seed)?;
            (j, Some(g))
        }
    };
    let oracle = seminorm_sa::rl::q_star_oracle(&mdp, j, 1e-12)?;
    let keep = cfg.keep_traces.unwrap_or(true);
    let opts = RunOptions {
        horizon: cfg.horizon,
        n_trials: cfg.trials,
        seed,
        keep_traces: keep,
    };
    let run = seminorm_sa::rl::q_learning_run(
        &mdp,
        j,
        cfg.schedule,
        &opts,
        &oracle.q_star,
        cfg.noise_free.unwrap_or(false),
    );
    let info = serde_json::json!({
        "j": j,
        "sampled_contraction": gamma_hat,
        "r_star": oracle.r_star,
        "sweeps": oracle.sweeps,
        "q_star": oracle.q_star.iter().copied().collect::<Vec<f64>>(),
    });
    let extra = vec![write_json(dir, "qlearn.json", &info)?];
    let files = run_artifacts(dir, &run, keep, extra, raw, seed)?;
    println!(
        "J={j}, final mean-square span error {:e}; wrote {} artifacts to {}",
        run.mean_sq.last().copied().unwrap_or(f64::NAN),
        files.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_verify_bounds(cfg: &VerifyCfg, dir: &Path, raw: &serde_json::Value, seed: u64) -> CliResult<()> {
    cfg.schedule
        .validate()
        .map_err(|e| config_err(anyhow::Error::new(e)))?;
    let problem = seminorm_sa::instances::scalar_problem(cfg.sigma)
        .map_err(|e| config_err(anyhow::Error::new(e)))?;
    let consts = BoundConstants::for_problem(&problem)?;
    let cond = check_condition1(&cfg.schedule, &problem.chain, &consts, cfg.horizon)?;
    if !cond.pass {
        return Err(CliError {
            code: 2,
            err: anyhow!(
                "stepsize window condition violated at k={:?} (threshold {:e}); the bound does not apply",
                cond.first_violation,
                cond.threshold
            ),
        });
    }
    let params = EnvelopeParams {
        init: consts.phi1 * consts.c1,
        decay: consts.phi2,
        noise: consts.phi3 * consts.c2,
    };
    let env = bound_envelope(&params, &cfg.schedule, &problem.chain, cfg.horizon, true)?;
    let opts = RunOptions {
        horizon: cfg.horizon,
        n_trials: cfg.trials,
        seed,
        keep_traces: false,
    };
    let run = run_sa(&problem, cfg.schedule, &opts);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_k = env.k_start;
    for k in env.k_start..cfg.horizon {
        let allow = if run.se_sq[k].is_finite() {
            3.0 * run.se_sq[k]
        } else {
            0.0
        };
        let margin = run.mean_sq[k] - (env.exact[k] + allow);
        if margin > worst {
            worst = margin;
            worst_k = k;
        }
    }
    let pass = worst <= 0.0;
    let info = serde_json::json!({
        "condition_pass": cond.pass,
        "condition_threshold": cond.threshold,
        "burn_in": env.k_start,
        "worst_margin": worst,
        "worst_k": worst_k,
        "pass": pass,
    });
    let mut files = vec![
        write_json(dir, "verify.json", &info)?,
        write_envelope(dir, &env)?,
        write_summary(dir, &run)?,
    ];
    files.push(write_manifest(dir, raw, seed, &files)?);
    println!(
        "{}: worst margin {:e} at k={worst_k}; wrote {} artifacts to {}",
        if pass { "BOUND HOLDS" } else { "BOUND VIOLATED" },
        worst,
        files.len(),
        dir.display()
    );
    if pass {
        Ok(())
    } else {
        Err(CliError {
            code: 2,
            err: anyhow!("Monte-Carlo error exceeds the envelope by {worst:e} at k={worst_k}"),
        })
    }
}

fn cmd_acceptance(dir: &Path, raw: &serde_json::Value, seed: u64) -> CliResult<()> {
    let reports = seminorm_sa::acceptance::run_all(seed);
    for r in &reports {
        println!("{}", r.line());
    }
    let json = serde_json::Value::Array(reports.iter().map(|r| r.to_json()).collect());
    let f = write_json(dir, "acceptance.json", &json)?;
    let m = write_manifest(dir, raw, seed, &[f])?;
    let n_fail = reports.iter().filter(|r| !r.pass).count();
    println!(
        "{}/{} criteria passed; wrote acceptance.json and {}",
        reports.len() - n_fail,
        reports.len(),
        m.display()
    );
    if n_fail == 0 {
        Ok(())
    } else {
        Err(CliError {
            code: 3,
            err: anyhow!("{n_fail} acceptance criteria failed"),
        })
    }
}

// ----------------------------------------------------------------- driver --

fn dispatch(expected: &'static str, args: &CommonArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        config_err(anyhow::Error::new(e).context(format!("reading {}", args.config.display())))
    })?;
    let raw: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| config_err(anyhow::Error::new(e).context("config is not valid JSON")))?;
    let cfg: Config = serde_json::from_value(raw.clone())
        .map_err(|e| config_err(anyhow::Error::new(e).context("config does not match schema")))?;
    if cfg.kind() != expected {
        return Err(config_err(anyhow!(
            "config kind \"{}\" does not match subcommand \"{expected}\"",
            cfg.kind()
        )));
    }
    let seed = args.seed.unwrap_or(0);
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| {
        config_err(anyhow::Error::new(e).context(format!("creating {}", dir.display())))
    })?;
    match &cfg {
        Config::Lyapunov(c) => cmd_lyapunov(c, &dir, &raw, seed),
        Config::FpIterate(c) => cmd_fp_iterate(c, &dir, &raw, seed),
        Config::SaRun(c) => cmd_sa_run(c, &dir, &raw, seed),
        Config::LinearSaRun(c) => cmd_linear_sa(c, &dir, &raw, seed),
        Config::TdLambda(c) => cmd_td_lambda(c, &dir, &raw, seed),
        Config::QLearn(c) => cmd_q_learn(c, &dir, &raw, seed),
        Config::VerifyBounds(c) => cmd_verify_bounds(c, &dir, &raw, seed),
        Config::Acceptance(_) => cmd_acceptance(&dir, &raw, seed),
    }
}

fn main() -> ExitCode {
    seminorm_sa::configure_threads_from_env();
    let cli = Cli::parse();
    let (expected, args) = match &cli.cmd {
        Cmd::Lyapunov(a) => ("lyapunov", a),
        Cmd::FpIterate(a) => ("fp-iterate", a),
        Cmd::SaRun(a) => ("sa-run", a),
        Cmd::LinearSaRun(a) => ("linear-sa-run", a),
        Cmd::TdLambda(a) => ("td-lambda", a),
        Cmd::QLearn(a) => ("q-learn", a),
        Cmd::VerifyBounds(a) => ("verify-bounds", a),
        Cmd::Acceptance(a) => ("acceptance", a),
    };
    match dispatch(expected, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.err);
            ExitCode::from(e.code)
        }
    }
}
