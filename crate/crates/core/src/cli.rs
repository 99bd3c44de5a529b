//! Command line front end: argument parsing, config files, reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::approximation::{monotone_solve_sequence, MonotoneConfig};
use crate::control::{dp_solve, dpp_check, interpolate_1d, solve_hjb, LsmcConfig};
use crate::error::{Error, Result};
use crate::estimates::{
    check_linf, comparison_check, energy_report, ito_identity_residual, ode_supersolution_check, power2m_contraction, ProofTestFunction, PsiKind,
};
use crate::grid::{GridStack, SolutionField};
use crate::io::write_solution;
use crate::presets::{self, Preset};
use crate::rng;
use crate::solver::{sample_random_field, solve, PicardInit, SolverConfig};
use crate::spec::{driver_fn, Point};
use crate::transforms::{choose_beta_b, exp_forward, exp_inverse, exp_inverse_field, uniqueness_phi};

#[derive(Debug, Parser)]
#[command(name = "qbspde", version, about = "Solve and verify quadratic backward stochastic PDEs")]
pub struct Cli {
    /// JSON file with defaults for any flag; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Solve a preset and write the solution.
    Solve(CommonArgs),
    /// Check the exponential and uniqueness transforms.
    TransformCheck(TransformArgs),
    /// Run one of the estimate verifiers.
    Estimate(EstimateArgs),
    /// Run the monotone approximation sequence.
    Approx(ApproxArgs),
    /// Cross-check the control example.
    Control(ControlArgs),
    /// List shipped presets.
    ListPresets {
        /// Substring filter on names.
        #[arg(long)]
        filter: Option<String>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long)]
    pub nw: Option<usize>,
    #[arg(long)]
    pub wmax: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub picard_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub npaths: Option<usize>,
    /// Solution output; `.csv` or `.bin`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TransformArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub mu0: Option<f64>,
    #[arg(long)]
    pub big_lambda: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Linf,
    Energy,
    Comparison,
    Ito,
    Power2m,
    Psi,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub check: Option<Check>,
    /// Candidate energy constant.
    #[arg(long)]
    pub c1: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ApproxArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of regularizations.
    #[arg(long = "N", alias = "n-max")]
    pub n_max: Option<u32>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ControlArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub nbins: Option<usize>,
    #[arg(long)]
    pub degree: Option<usize>,
}

/// Every setting a command can take; the config file has the same keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub nx: Option<usize>,
    pub nt: Option<usize>,
    pub nw: Option<usize>,
    pub wmax: Option<f64>,
    pub theta: Option<f64>,
    pub picard_tol: Option<f64>,
    pub seed: Option<u64>,
    pub npaths: Option<usize>,
    pub out: Option<PathBuf>,
    pub check: Option<Check>,
    pub c1: Option<f64>,
    pub n_max: Option<u32>,
    pub nbins: Option<usize>,
    pub degree: Option<usize>,
    pub mu0: Option<f64>,
    pub big_lambda: Option<f64>,
    pub m: Option<f64>,
    pub filter: Option<String>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Values in `top` win over `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        overlay!(self, top, preset, nx, nt, nw, wmax, theta, picard_tol, seed, npaths, out, check, c1, n_max, nbins, degree, mu0, big_lambda, m, filter)
    }

    fn common(c: &CommonArgs) -> Self {
        RunConfig {
            preset: c.preset.clone(),
            nx: c.nx,
            nt: c.nt,
            nw: c.nw,
            wmax: c.wmax,
            theta: c.theta,
            picard_tol: c.picard_tol,
            seed: c.seed,
            npaths: c.npaths,
            out: c.out.clone(),
            ..Default::default()
        }
    }

    pub fn from_command(cmd: &Command) -> Self {
        match cmd {
            Command::Solve(c) => Self::common(c),
            Command::TransformCheck(a) => RunConfig {
                mu0: a.mu0,
                big_lambda: a.big_lambda,
                m: a.m,
                ..Self::common(&a.common)
            },
            Command::Estimate(a) => RunConfig {
                check: a.check,
                c1: a.c1,
                ..Self::common(&a.common)
            },
            Command::Approx(a) => RunConfig {
                n_max: a.n_max,
                ..Self::common(&a.common)
            },
            Command::Control(a) => RunConfig {
                nbins: a.nbins,
                degree: a.degree,
                ..Self::common(&a.common)
            },
            Command::ListPresets { filter } => RunConfig {
                filter: filter.clone(),
                ..Default::default()
            },
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn solver(&self) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if let Some(t) = self.theta {
            cfg.theta = t;
        }
        if let Some(t) = self.picard_tol {
            cfg.picard_tol = t;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub threshold: f64,
}

impl Verdict {
    fn at_most(name: &str, measured: f64, threshold: f64) -> Self {
        Verdict {
            name: name.into(),
            pass: measured <= threshold,
            measured,
            threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub verdicts: Vec<Verdict>,
    pub data: Value,
    pub wall_clock_s: f64,
    pub version: String,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            0
        } else {
            1
        }
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Solve(_) => "solve",
        Command::TransformCheck(_) => "transform-check",
        Command::Estimate(_) => "estimate",
        Command::Approx(_) => "approx",
        Command::Control(_) => "control",
        Command::ListPresets { .. } => "list-presets",
    }
}

/// Preset with grid overrides applied.
struct Setup {
    preset: Preset,
    grid: GridStack,
}

fn setup(cfg: &RunConfig, default: &str) -> Result<Setup> {
    let name = cfg.preset.as_deref().unwrap_or(default);
    let mut preset = presets::preset(name)?;
    if let Some(nx) = cfg.nx {
        preset.nx = vec![nx; preset.nx.len()];
    }
    if let Some(nt) = cfg.nt {
        preset.n_t = nt;
    }
    if let Some(nw) = cfg.nw {
        preset.n_w = nw;
    }
    if let Some(w) = cfg.wmax {
        preset.w_max = w;
    }
    let grid = grid_for(&preset, preset.n_t)?;
    Ok(Setup { preset, grid })
}

fn grid_for(p: &Preset, n_t: usize) -> Result<GridStack> {
    GridStack::for_spec(&p.spec, &p.nx, p.n_w, p.w_max, n_t)
}

fn phi_sup(p: &Preset, grid: &GridStack) -> f64 {
    (0..grid.n_space())
        .flat_map(|s| {
            let x = grid.coords(s);
            (0..grid.n_w()).map(move |iw| (s, x.clone(), iw))
        })
        .map(|(_, x, iw)| p.spec.phi.eval(&Point::new(grid.horizon, &x, grid.w(iw))).abs())
        .fold(0.0, f64::max)
}

fn write_out(cfg: &RunConfig, sol: &SolutionField) -> Result<()> {
    if let Some(path) = &cfg.out {
        write_solution(sol, path)?;
    }
    Ok(())
}

fn run_solve(cfg: &RunConfig) -> Result<(Vec<Verdict>, Value)> {
    let Setup { preset, grid } = setup(cfg, "heat_eigenmode")?;
    let sol = solve(&preset.spec, &grid, &cfg.solver())?;
    write_out(cfg, &sol)?;
    let boundary = grid.boundary_set();
    let mut bmax = 0.0f64;
    for k in 0..grid.n_levels() {
        let u = sol.level(k);
        for &s in &boundary {
            for iw in 0..grid.n_w() {
                bmax = bmax.max(u[s * grid.n_w() + iw].abs());
            }
        }
    }
    let mut term = 0.0f64;
    let last = sol.level(grid.n_t);
    for s in grid.interior_set() {
        let x = grid.coords(s);
        for iw in 0..grid.n_w() {
            let phi = preset.spec.phi.eval(&Point::new(grid.horizon, &x, grid.w(iw)));
            term = term.max((last[s * grid.n_w() + iw] - phi).abs());
        }
    }
    let sup0 = sol.level(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((
        vec![Verdict::at_most("boundary_zero", bmax, 1e-12), Verdict::at_most("terminal_matches", term, 1e-12)],
        json!({
            "preset": preset.name,
            "levels": grid.n_levels(),
            "nodes": grid.n_nodes(),
            "max_picard_iters": sol.picard_iters.iter().max().copied().unwrap_or(0),
            "sup_u0": sup0,
            "w_boundary_slope": sol.w_boundary_slope,
        }),
    ))
}

fn run_transform_check(cfg: &RunConfig) -> Result<(Vec<Verdict>, Value)> {
    let mut g = rng::stream(rng::subseed(cfg.seed(), 41), 0);
    let v: Vec<f64> = (0..1000).map(|_| g.random::<f64>() * 5.0 - 0.9).collect();
    let r: Vec<f64> = (0..1000).map(|_| g.random::<f64>() * 4.0 - 2.0).collect();
    let mut roundtrip = 0.0f64;
    for lambda in [0.5, 1.0, 2.0] {
        let (u, q) = exp_inverse(&v, &r, lambda)?;
        let (v2, r2) = exp_forward(&u, &q, lambda)?;
        for i in 0..v.len() {
            roundtrip = roundtrip.max((v2[i] - v[i]).abs() / (1.0 + v[i].abs())).max((r2[i] - r[i]).abs() / (1.0 + r[i].abs()));
        }
    }
    let mut setup_cfg = cfg.clone();
    setup_cfg.preset.get_or_insert_with(|| "cole_hopf".into());
    let Setup { preset, grid } = setup(&setup_cfg, "cole_hopf")?;
    let lambda = preset
        .chain_lambda
        .map(|l| 2.0 * l)
        .ok_or_else(|| Error::Argument(format!("preset {} has no transform parameter", preset.name)))?;
    let solver = cfg.solver();
    let direct = solve(&preset.spec, &grid, &solver)?;
    let big_f = crate::transforms::exponentiate_driver(preset.spec.f.clone(), lambda, &preset.spec);
    let phi = preset.spec.phi.clone();
    let vspec = preset
        .spec
        .clone()
        .with_driver(big_f)
        .with_terminal(crate::spec::scalar_fn(move |p| (lambda * phi.eval(p)).exp_m1()));
    let vsol = solve(&vspec, &grid, &solver)?;
    let back = exp_inverse_field(&vsol, lambda)?;
    let equivalence = direct.sup_distance(&back)?;
    let m0 = cfg.mu0.unwrap_or(1.0 / 3.0);
    let big_l = cfg.big_lambda.unwrap_or(1.0);
    let m = cfg.m.unwrap_or(1.0);
    let (margin, beta, b, found) = match choose_beta_b(m0, big_l, m) {
        Ok(c) => (c.margin, Some(c.beta), Some(c.b), true),
        Err(Error::SearchFailure { best_margin }) => (best_margin, None, None, false),
        Err(e) => return Err(e),
    };
    let phi0 = match (beta, b) {
        (Some(beta), Some(b)) => Some(uniqueness_phi(beta, b, m)?.phi(0.0)),
        _ => None,
    };
    Ok((
        vec![
            Verdict::at_most("roundtrip", roundtrip, 1e-12),
            Verdict::at_most("equivalence", equivalence, 1e-2),
            Verdict {
                name: "margin".into(),
                pass: found,
                measured: margin,
                threshold: crate::transforms::REQUIRED_MARGIN,
            },
        ],
        json!({
            "roundtrip_err": roundtrip,
            "equivalence_err": equivalence,
            "margin": margin,
            "beta": beta,
            "B": b,
            "phi_at_zero": phi0,
        }),
    ))
}

fn envelope_of(p: &Preset) -> Result<&crate::spec::GrowthEnvelope> {
    p.spec
        .envelope
        .as_ref()
        .ok_or_else(|| Error::Precondition(format!("preset {} declares no growth envelope", p.name)))
}

pub const LINF_SLACK: f64 = 1e-3;
pub const COMPARISON_TOL: f64 = 1e-8;

fn run_estimate(cfg: &RunConfig) -> Result<(Vec<Verdict>, Value)> {
    let check = cfg.check.ok_or_else(|| Error::Argument("estimate needs --check".into()))?;
    if check == Check::Psi {
        let mut verdicts = Vec::new();
        let mut reports = Vec::new();
        for (kind, l, m) in [(PsiKind::Psi1, 1.0, 1.0), (PsiKind::Psi2, 1.0, 1.0), (PsiKind::Psi3, 0.25, 0.5)] {
            let rep = ProofTestFunction::new(kind, l, m)?.check_identities(1000);
            for c in &rep.checks {
                verdicts.push(Verdict {
                    name: format!("{kind:?}: {}", c.name).to_lowercase(),
                    pass: c.pass,
                    measured: c.worst,
                    threshold: c.tolerance,
                });
            }
            reports.push(rep);
        }
        return Ok((verdicts, serde_json::to_value(reports)?));
    }
    let Setup { preset, grid } = setup(cfg, "heat_eigenmode")?;
    let solver = cfg.solver();
    let sol = solve(&preset.spec, &grid, &solver)?;
    write_out(cfg, &sol)?;
    match check {
        Check::Linf => {
            let env = envelope_of(&preset)?;
            let rep = check_linf(&sol, env, phi_sup(&preset, &grid), LINF_SLACK)?;
            Ok((
                vec![Verdict {
                    name: "linf_bound".into(),
                    pass: rep.pass(),
                    measured: rep.worst_excess,
                    threshold: LINF_SLACK,
                }],
                serde_json::to_value(rep)?,
            ))
        }
        Check::Energy => {
            let n = cfg.npaths.unwrap_or(1000);
            let samples = sample_random_field(&sol, n, cfg.seed())?;
            let rep = energy_report(&sol, &samples, cfg.c1)?;
            let verdicts = match cfg.c1 {
                Some(c) => vec![Verdict::at_most("energy_within_c1", rep.ux_sq + rep.q_sq, c)],
                None => Vec::new(),
            };
            Ok((verdicts, serde_json::to_value(rep)?))
        }
        Check::Comparison => {
            let shifted_f = preset.spec.f.clone();
            let upper = preset
                .spec
                .clone()
                .with_driver(driver_fn(shifted_f.args(), move |pt, v, p, r| shifted_f.eval(pt, v, p, r) + 0.5));
            let sol2 = solve(&upper, &grid, &solver)?;
            let cmp = comparison_check(&sol, &sol2, COMPARISON_TOL)?;
            let mut verdicts = vec![Verdict::at_most("ordered_drivers", cmp.max_excess, COMPARISON_TOL)];
            let mut data = json!({ "comparison": cmp });
            if let Some(env) = preset.spec.envelope.as_ref() {
                let (l0, l1) = (env.lambda0_sup, env.lambda1);
                let ode = ode_supersolution_check(&sol, &|_, z| l1 * z + l0, phi_sup(&preset, &grid), LINF_SLACK)?;
                verdicts.push(Verdict::at_most("ode_supersolution", ode.max_excess, LINF_SLACK));
                data["ode"] = serde_json::to_value(ode)?;
            }
            Ok((verdicts, data))
        }
        Check::Ito => {
            let n = if grid.noise.is_some() { cfg.npaths.unwrap_or(1000) } else { 1 };
            let mut rows = Vec::new();
            for (i, nt) in [preset.n_t, 2 * preset.n_t].into_iter().enumerate() {
                let g = grid_for(&preset, nt)?;
                let s = if i == 0 { sol.clone() } else { solve(&preset.spec, &g, &solver)? };
                let sup = s.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let psi = ProofTestFunction::new(PsiKind::Psi2, 1.0, (1.05 * sup).max(1.0))?;
                let samples = sample_random_field(&s, n, cfg.seed())?;
                rows.push(ito_identity_residual(&s, &preset.spec, &psi, &samples)?);
            }
            let ratio = rows[0].residual.abs() / rows[1].residual.abs().max(f64::MIN_POSITIVE);
            Ok((
                vec![Verdict {
                    name: "first_order_decay".into(),
                    pass: (1.5..=3.0).contains(&ratio),
                    measured: ratio,
                    threshold: 1.5,
                }],
                json!({ "residuals": rows, "ratio": ratio }),
            ))
        }
        Check::Power2m => {
            let mut a = solver.clone();
            a.picard_init = PicardInit::Zero;
            let mut b = solver.clone();
            b.picard_init = PicardInit::Offset(0.5);
            let s1 = solve(&preset.spec, &grid, &a)?;
            let s2 = solve(&preset.spec, &grid, &b)?;
            let tol = 10.0 * solver.picard_tol;
            let ass = crate::spec::UniquenessAssumptions::constant(1.0, 1.0, 1.0, 1.0, 1.0, 0.0);
            let rep = power2m_contraction(&s1, &s2, 2, &ass, tol)?;
            Ok((
                vec![
                    Verdict::at_most("sup_distance", rep.sup_distance, tol),
                    Verdict {
                        name: "power_profile".into(),
                        pass: rep.pass,
                        measured: rep.profile_plus.iter().chain(&rep.profile_minus).cloned().fold(0.0, f64::max),
                        threshold: tol.powi(4),
                    },
                ],
                serde_json::to_value(rep)?,
            ))
        }
        Check::Psi => unreachable!(),
    }
}

fn run_approx(cfg: &RunConfig) -> Result<(Vec<Verdict>, Value)> {
    let Setup { preset, grid } = setup(cfg, "monotone_seq")?;
    let mcfg = MonotoneConfig {
        n_max: cfg.n_max.unwrap_or(6),
        lambda: preset.chain_lambda,
        ..Default::default()
    };
    let (fields, rep) = monotone_solve_sequence(&preset.spec, &grid, &cfg.solver(), &mcfg)?;
    if let Some(last) = fields.last() {
        write_out(cfg, last)?;
    }
    Ok((
        vec![
            Verdict::at_most("monotonicity_defect", rep.max_defect(), 1e-8),
            Verdict {
                name: "distance_nonincreasing".into(),
                pass: rep.distances_nonincreasing(),
                measured: rep.rows.first().map(|r| r.sup_distance).unwrap_or(0.0),
                threshold: 0.0,
            },
            Verdict {
                name: "sandwich".into(),
                pass: rep.sandwich_ok(),
                measured: rep.rows.iter().map(|r| r.v_max).fold(f64::NEG_INFINITY, f64::max),
                threshold: rep.sandwich.1,
            },
        ],
        serde_json::to_value(rep)?,
    ))
}

pub const HJB_NX: usize = 241;
pub const HJB_NT: usize = 400;
/// Dynamic programming steps spanned by the DPP check.
pub const DPP_STEPS: usize = 5;

fn run_control(cfg: &RunConfig) -> Result<(Vec<Verdict>, Value)> {
    let name = cfg.preset.as_deref().unwrap_or("control_markov");
    let prob = presets::control_preset(name)?;
    let n_paths = cfg.npaths.unwrap_or(10_000);
    let n_bins = cfg.nbins.unwrap_or(50);
    let n_t = cfg.nt.unwrap_or(20);
    let seed = cfg.seed();
    let lsmc = LsmcConfig {
        degree: cfg.degree.unwrap_or(3),
        exp_lambda: prob.exp_lambda,
    };
    let hjb = solve_hjb(&prob, cfg.nx.unwrap_or(HJB_NX), HJB_NT, &cfg.solver())?;
    let x0 = 0.0;
    let value_hjb = interpolate_1d(&hjb, 0, x0);
    let table = dp_solve(&prob, n_t, n_bins, n_paths, seed)?;
    let value_bf = table.value(0, x0);
    let rel = (value_hjb - value_bf).abs() / value_bf.abs().max(1.0);
    let dpp = dpp_check(&prob, &table, 0, DPP_STEPS, x0, n_paths, 4, seed, &lsmc)?;
    let bound = prob.value_bound(0.0)?;
    Ok((
        vec![
            Verdict::at_most("hjb_vs_bruteforce", rel, 0.02),
            Verdict::at_most("dpp_defect", dpp.defect, 0.02),
            Verdict::at_most("bound_check", value_bf.abs().max(value_hjb.abs()), bound),
        ],
        json!({
            "value_hjb": value_hjb,
            "value_bruteforce": value_bf,
            "dpp_defect": dpp.defect,
            "bound_check": { "bound": bound, "pass": value_bf.abs().max(value_hjb.abs()) <= bound },
        }),
    ))
}

/// Topic line shown next to each preset.
fn topic(name: &str) -> &'static str {
    match name {
        "heat_eigenmode" | "heat_source" | "heat_2d" => "linear backward heat equation",
        "cole_hopf" => "exponential change of variables",
        "lifted_linear_w" | "lifted_coupled" => "noise-driven coefficients and q",
        "monotone_seq" => "monotone approximation scheme",
        "control_markov" => "recursive-cost control and HJB",
        _ => "",
    }
}

pub fn list_presets(filter: Option<&str>) -> Vec<Value> {
    presets::PRESET_NAMES
        .iter()
        .filter(|n| filter.is_none_or(|f| n.contains(f)))
        .map(|n| json!({ "name": n, "description": presets::describe(n), "topic": topic(n) }))
        .collect()
}

/// Run a command with an optional config file underneath the flags.
pub fn run(cmd: &Command, config: Option<&Path>) -> Result<Report> {
    let base = match config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    run_named(command_name(cmd), base.overlay(RunConfig::from_command(cmd)))
}

/// Run a subcommand by name with a fully resolved config.
pub fn run_named(command: &str, cfg: RunConfig) -> Result<Report> {
    let start = Instant::now();
    let (name, (verdicts, data)) = match command {
        "solve" => ("solve", run_solve(&cfg)?),
        "transform-check" => ("transform-check", run_transform_check(&cfg)?),
        "estimate" => ("estimate", run_estimate(&cfg)?),
        "approx" => ("approx", run_approx(&cfg)?),
        "control" => ("control", run_control(&cfg)?),
        "list-presets" => ("list-presets", (Vec::new(), Value::Array(list_presets(cfg.filter.as_deref())))),
        other => return Err(Error::Argument(format!("unknown command `{other}`"))),
    };
    Ok(Report {
        command: name.into(),
        config_hash: cfg.hash(),
        config: cfg,
        verdicts,
        data,
        wall_clock_s: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

/// Parse, run inside the configured thread pool, print, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    let pool = rng::thread_pool();
    let outcome = pool.install(|| run(&cli.command, cli.config.as_deref()));
    match outcome {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            let written = match &cli.report {
                Some(p) => std::fs::write(p, text + "\n").map_err(Error::from),
                None => {
                    println!("{text}");
                    Ok(())
                }
            };
            match written {
                Ok(()) => report.exit_code(),
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
