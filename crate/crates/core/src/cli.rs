//! `starspec` command line and its JSON configuration.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure or failed
//! check, 4 recovery without convergence.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::birkhoff::{verify_edge, EdgeAsymptotics, VerifyOptions};
use crate::error::{Error, Result};
use crate::graph_forward::{
    boundary_weyl_sample, internal_weyl_sample, ForwardContext, PointFlag, WeylKind, WeylSample,
};
use crate::inverse::{
    group_edges, recover_edge_potential, run_all_s, FitRun, PotentialFamily, RecoveryOptions, RecoveryTarget,
    ReductionReport,
};
use crate::linalg::{c, C64};
use crate::model::{validate_graph, EdgeSpec, PotentialSpec, SampleTable, SpectralGrid, StarGraph, ValidationReport};
use crate::report::{write_atomic, write_json};
use crate::selftest::run_selftest;
use crate::singular_ode::VolterraOptions;

#[derive(Debug, Parser)]
#[command(name = "starspec", version, about = "Weyl-type matrices on star graphs and their reduction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON graph configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for the lambda sweeps.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Number of grid points, overriding the configured ray.
    #[arg(long, global = true)]
    pub grid_count: Option<usize>,
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample every M_s and m_j on the grid.
    Forward,
    /// Reconstruct m_{p_N} from boundary matrices on disk.
    Reduce,
    /// Asymptotic checks on every edge.
    Verify,
    /// Fit a polynomial potential family to Weyl data.
    Recover,
    /// Criteria 1 to 5 on built-in cases.
    Selftest,
}

type Pair = [f64; 2];

fn cx(p: &Pair) -> C64 {
    c(p[0], p[1])
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub edges: Vec<EdgeConfig>,
    pub w: usize,
    #[serde(default)]
    pub grid: SpectralGrid,
    #[serde(default, alias = "tolerances")]
    pub tol: Tolerances,
    #[serde(default)]
    pub reduce: ReduceConfig,
    #[serde(default)]
    pub recover: Option<RecoverConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub order: usize,
    pub length: f64,
    pub nu: Vec<Pair>,
    #[serde(default)]
    pub potential: PotentialConfig,
    /// Lower-triangular rows; identity when absent.
    #[serde(default)]
    pub gamma: Option<Vec<Vec<Pair>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialConfig {
    #[default]
    Zero,
    /// `coeffs[m][k]` multiplies `x^k` in `q_m`.
    Polynomial { coeffs: Vec<Vec<Pair>> },
    /// One table per component, `null` for a vanishing component.
    Table { samples: Vec<Option<TableConfig>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub x: Vec<f64>,
    pub q: Vec<Pair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Truncation of the Frobenius series.
    pub series: f64,
    /// Mesh-doubling tolerance of the Volterra solver.
    pub volterra: f64,
    /// Largest accepted residual of the vertex systems.
    pub linear: f64,
    /// Largest accepted relative error of the reduction.
    pub roundtrip: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { series: 1e-16, volterra: 1e-4, linear: 1e-8, roundtrip: 1e-6 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceConfig {
    /// Directory holding `M_s.csv`; the output directory when absent.
    pub inputs: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverConfig {
    pub edge: usize,
    pub target: RecoveryTarget,
    /// `(component, power)` per parameter.
    pub terms: Vec<(usize, usize)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Start of the fit; the centre of the box when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    /// Parameters of the synthetic data; the configured edge potential is used when absent.
    #[serde(default)]
    pub truth: Option<Vec<f64>>,
    /// Weyl data in the CSV schema of `forward`; synthesized when absent.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub restarts: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// 1-based edges to check; all when absent.
    pub edges: Option<Vec<usize>>,
    pub rho_ladder: Option<Vec<f64>>,
    pub x_ladder: Option<Vec<f64>>,
    pub sectors: Option<Vec<usize>>,
    pub band: Option<f64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        for (name, v) in [
            ("series", cfg.tol.series),
            ("volterra", cfg.tol.volterra),
            ("linear", cfg.tol.linear),
            ("roundtrip", cfg.tol.roundtrip),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("tol.{name} must be positive")));
            }
        }
        Ok(cfg)
    }

    pub fn graph(&self) -> Result<StarGraph> {
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let potential = match &e.potential {
                    PotentialConfig::Zero => PotentialSpec::Zero,
                    PotentialConfig::Polynomial { coeffs } => {
                        PotentialSpec::Polynomial(coeffs.iter().map(|v| v.iter().map(cx).collect()).collect())
                    }
                    PotentialConfig::Table { samples } => PotentialSpec::Table(
                        samples
                            .iter()
                            .map(|t| {
                                t.as_ref()
                                    .map(|t| SampleTable::new(t.x.clone(), t.q.iter().map(cx).collect()))
                                    .transpose()
                            })
                            .collect::<Result<_>>()?,
                    ),
                };
                let mut spec =
                    EdgeSpec::new(e.order, e.length, e.nu.iter().map(cx).collect()).with_potential(potential);
                if let Some(g) = &e.gamma {
                    spec = spec.with_gamma(g.iter().map(|row| row.iter().map(cx).collect()).collect());
                }
                Ok(spec)
            })
            .collect::<Result<_>>()?;
        StarGraph::new(edges, self.w)
    }
}

/// A failed run: exit code and message.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        2
    } else if matches!(e, Error::NonConvergence { .. }) {
        4
    } else {
        3
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), message: e.to_string() }
    }
}

fn at(what: String) -> impl FnOnce(Error) -> Failure {
    move |e| Failure { code: exit_code(&e), message: format!("{what}: {e}") }
}

type Run<T> = std::result::Result<T, Failure>;

fn load_config(cli: &Cli) -> Run<Config> {
    let path = cli.config.as_ref().ok_or_else(|| Failure { code: 2, message: "this command needs --config".into() })?;
    Ok(Config::load(path)?)
}

fn validated_graph(cfg: &Config) -> Run<(StarGraph, ValidationReport)> {
    let g = cfg.graph()?;
    let report = validate_graph(&g)?;
    if let Some(bad) = report.edges.iter().find(|e| !e.admissible) {
        let why = bad.root_error.clone().unwrap_or_else(|| "potential fails the integrability conditions".into());
        return Err(Failure { code: 2, message: format!("edge {}: {why}", bad.edge) });
    }
    Ok((g, report))
}

fn context(g: &StarGraph, tol: &Tolerances) -> Result<ForwardContext> {
    let opts = VolterraOptions { tol: tol.volterra, ..VolterraOptions::default() };
    ForwardContext::with_tolerances(g, tol.series, opts)
}

fn grid(cli: &Cli, cfg: &Config) -> Run<(SpectralGrid, Vec<C64>)> {
    let grid = match cli.grid_count {
        Some(n) => cfg.grid.with_count(n),
        None => cfg.grid.clone(),
    };
    let lambdas = grid.lambdas().map_err(at("grid".into()))?;
    Ok((grid, lambdas))
}

fn fmt_lambda(l: C64) -> String {
    format!("({:.6e}, {:.6e})", l.re, l.im)
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary {
    pub kind: WeylKind,
    pub index: usize,
    pub file: String,
    pub points: usize,
    pub flagged: usize,
    pub max_residual: f64,
    pub max_cond: f64,
}

fn summarize(s: &WeylSample, file: String) -> SampleSummary {
    let ok = s.points.iter().filter(|p| p.flag == PointFlag::Ok);
    let (res, cond) = ok.fold((0.0f64, 0.0f64), |(r, c), p| (r.max(p.residual), c.max(p.cond)));
    SampleSummary {
        kind: s.kind,
        index: s.index,
        file,
        points: s.points.len(),
        flagged: s.flagged(),
        max_residual: res,
        max_cond: cond,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ForwardReport {
    pub grid: SpectralGrid,
    pub tol: Tolerances,
    pub validation: ValidationReport,
    pub samples: Vec<SampleSummary>,
    pub max_residual: f64,
    pub pass: bool,
}

fn cmd_forward(cli: &Cli) -> Run<Vec<String>> {
    let cfg = load_config(cli)?;
    let (g, validation) = validated_graph(&cfg)?;
    let (grid, lambdas) = grid(cli, &cfg)?;
    let ctx = context(&g, &cfg.tol)?;
    let mut outputs = Vec::new();
    for s in 1..=g.p() {
        let m = boundary_weyl_sample(&ctx, s, &lambdas).map_err(at(format!("M_{s}")))?;
        outputs.push((format!("M_{s}.csv"), m));
    }
    for j in 1..=g.p() {
        let m = internal_weyl_sample(&ctx, j, &lambdas).map_err(at(format!("m_{j} on edge {j}")))?;
        outputs.push((format!("m_{j}.csv"), m));
    }
    let mut samples = Vec::new();
    for (file, m) in &outputs {
        write_atomic(&cli.out.join(file), &m.to_csv())?;
        samples.push(summarize(m, file.clone()));
    }
    let max_residual = samples.iter().map(|s| s.max_residual).fold(0.0, f64::max);
    let pass = max_residual <= cfg.tol.linear;
    let report = ForwardReport { grid, tol: cfg.tol, validation, samples, max_residual, pass };
    write_json(&cli.out.join("forward_report.json"), &report)?;
    let mut lines: Vec<String> = report
        .samples
        .iter()
        .map(|s| format!("{}: {} points, {} flagged, max residual {:.3e}", s.file, s.points, s.flagged, s.max_residual))
        .collect();
    if !pass {
        let (file, p) = outputs
            .iter()
            .flat_map(|(f, m)| m.points.iter().map(move |p| (f, p)))
            .filter(|(_, p)| p.flag == PointFlag::Ok)
            .max_by(|a, b| a.1.residual.total_cmp(&b.1.residual))
            .expect("a residual above tolerance comes from some point");
        return Err(Failure {
            code: 3,
            message: format!(
                "{file}: residual {:.3e} at lambda {} exceeds tol.linear {:.1e}",
                p.residual,
                fmt_lambda(p.lambda),
                cfg.tol.linear
            ),
        });
    }
    lines.push(format!("wrote {}", cli.out.display()));
    Ok(lines)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReduceReport {
    pub target_edge: usize,
    pub s_values: Vec<usize>,
    pub roundtrip_tol: f64,
    /// Per `s`: share of unflagged points within `roundtrip_tol` of the direct computation.
    pub accepted_fraction: Vec<f64>,
    pub flagged_fraction: Vec<f64>,
    pub max_residual: Option<f64>,
    /// Largest relative spread of the reconstructions across `s`.
    pub max_spread: f64,
    pub pass: bool,
    pub reports: Vec<ReductionReport>,
}

fn accepted(r: &ReductionReport, tol: f64) -> f64 {
    let ok: Vec<_> = r.points.iter().filter(|p| p.m.is_some()).collect();
    if ok.is_empty() {
        return 0.0;
    }
    ok.iter().filter(|p| p.residual.is_some_and(|x| x <= tol)).count() as f64 / ok.len() as f64
}

fn cmd_reduce(cli: &Cli) -> Run<Vec<String>> {
    let cfg = load_config(cli)?;
    let (g, _) = validated_graph(&cfg)?;
    let ctx = context(&g, &cfg.tol)?;
    let inputs = cfg.reduce.inputs.clone().unwrap_or_else(|| cli.out.clone());
    let gt = group_edges(&g)?;
    let mut samples = std::collections::BTreeMap::new();
    for s in gt.admissible_s() {
        let path = inputs.join(format!("M_{s}.csv"));
        if !path.exists() {
            return Err(
                Error::MissingWeylData(format!("M_{s}.csv for s = {s} not found in {}", inputs.display())).into()
            );
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        samples.insert(s, WeylSample::from_csv(WeylKind::Boundary, s, &text).map_err(at(format!("M_{s}.csv")))?);
    }
    let ind = run_all_s(&ctx, &samples, Some(&ctx))?;
    let tol = cfg.tol.roundtrip;
    let accepted_fraction: Vec<f64> = ind.reports.iter().map(|r| accepted(r, tol)).collect();
    let max_residual = ind.reports.iter().filter_map(|r| r.max_residual).reduce(f64::max);
    let pass = accepted_fraction.iter().all(|f| *f >= 0.9) && ind.max_spread <= tol;
    let report = ReduceReport {
        target_edge: gt.target_edge(),
        s_values: gt.admissible_s(),
        roundtrip_tol: tol,
        accepted_fraction,
        flagged_fraction: ind.reports.iter().map(|r| r.flagged_fraction).collect(),
        max_residual,
        max_spread: ind.max_spread,
        pass,
        reports: ind.reports,
    };
    write_atomic(&cli.out.join("m_pN_reconstructed.csv"), &report.reports[0].to_sample().to_csv())?;
    write_json(&cli.out.join("reduction_report.json"), &report)?;
    let mut lines: Vec<String> = report
        .s_values
        .iter()
        .zip(&report.reports)
        .zip(&report.accepted_fraction)
        .map(|((s, r), f)| {
            format!(
                "s = {s}: max residual {}, {:.0}% within {:.0e}, {:.0}% flagged",
                r.max_residual.map_or("n/a".into(), |x| format!("{x:.3e}")),
                100.0 * f,
                tol,
                100.0 * r.flagged_fraction
            )
        })
        .collect();
    lines.push(format!("spread across s {:.3e}", report.max_spread));
    if !pass {
        return Err(Failure {
            code: 3,
            message: format!("reduction roundtrip outside tol.roundtrip {tol:.1e}: {}", lines.join("; ")),
        });
    }
    Ok(lines)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub edges: Vec<EdgeAsymptotics>,
    pub pass: bool,
}

fn cmd_verify(cli: &Cli) -> Run<Vec<String>> {
    let cfg = load_config(cli)?;
    let (g, _) = validated_graph(&cfg)?;
    let v = &cfg.verify;
    let mut opts = VerifyOptions { seed: cli.seed, sectors: v.sectors.clone(), ..VerifyOptions::default() };
    if let Some(l) = &v.rho_ladder {
        opts.rho_ladder = l.clone();
    }
    if let Some(l) = &v.x_ladder {
        opts.x_ladder = l.clone();
    }
    if let Some(b) = v.band {
        opts.band = b;
    }
    let which = v.edges.clone().unwrap_or_else(|| (1..=g.p()).collect());
    let mut edges = Vec::new();
    for j in which {
        if j == 0 || j > g.p() {
            return Err(Error::InvalidConfig(format!("verify.edges: no edge {j}")).into());
        }
        edges.push(verify_edge(g.edge(j), j, &opts).map_err(at(format!("edge {j}")))?);
    }
    let pass = edges.iter().all(|e| e.pass);
    let report = VerifyReport { edges, pass };
    write_json(&cli.out.join("asymptotics_report.json"), &report)?;
    let lines: Vec<String> =
        report.edges.iter().map(|e| format!("edge {}: {}", e.edge, if e.pass { "pass" } else { "FAIL" })).collect();
    if !pass {
        return Err(Failure { code: 3, message: format!("asymptotic checks failed: {}", lines.join("; ")) });
    }
    Ok(lines)
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoverReport {
    pub edge: usize,
    pub target: RecoveryTarget,
    pub terms: Vec<(usize, usize)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub initial: Vec<f64>,
    pub data_points: usize,
    pub truth: Option<Vec<f64>>,
    pub params: Vec<f64>,
    /// `|params - truth|` per parameter.
    pub errors: Option<Vec<f64>>,
    pub rms: f64,
    pub trace: Vec<f64>,
    pub monotone: bool,
    pub ambiguous: bool,
    pub runs: Vec<FitRun>,
}

fn cmd_recover(cli: &Cli) -> Run<Vec<String>> {
    let cfg = load_config(cli)?;
    let rc = cfg.recover.clone().ok_or_else(|| Failure { code: 2, message: "config has no recover section".into() })?;
    let (mut g, _) = validated_graph(&cfg)?;
    if rc.edge == 0 || rc.edge > g.p() {
        return Err(Error::InvalidConfig(format!("recover.edge: no edge {}", rc.edge)).into());
    }
    let fam = PotentialFamily::new(&g, rc.edge, rc.terms.clone(), rc.lower.clone(), rc.upper.clone())?;
    if let Some(t) = &rc.truth {
        if t.len() != fam.dim() {
            return Err(Error::InvalidConfig("recover.truth has the wrong dimension".into()).into());
        }
        g.edges[rc.edge - 1].potential = fam.potential(g.order(rc.edge), t);
    }
    let data = match (&rc.data, rc.target) {
        (Some(path), target) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let (kind, index) = match target {
                RecoveryTarget::Boundary { s } => (WeylKind::Boundary, s),
                RecoveryTarget::Internal => (WeylKind::Internal, rc.edge),
            };
            WeylSample::from_csv(kind, index, &text)?
        }
        (None, target) => {
            let (_, lambdas) = grid(cli, &cfg)?;
            let ctx = context(&g, &cfg.tol)?;
            match target {
                RecoveryTarget::Boundary { s } => {
                    boundary_weyl_sample(&ctx, s, &lambdas).map_err(at(format!("M_{s}")))?
                }
                RecoveryTarget::Internal => {
                    internal_weyl_sample(&ctx, rc.edge, &lambdas).map_err(at(format!("m_{}", rc.edge)))?
                }
            }
        }
    };
    let initial =
        rc.initial.clone().unwrap_or_else(|| fam.lower.iter().zip(&fam.upper).map(|(a, b)| 0.5 * (a + b)).collect());
    let d = RecoveryOptions::default();
    let opts = RecoveryOptions {
        max_iter: rc.max_iter.unwrap_or(d.max_iter),
        tol: rc.tol.unwrap_or(d.tol),
        restarts: rc.restarts.unwrap_or(d.restarts),
        seed: cli.seed,
    };
    let r = recover_edge_potential(&g, &fam, rc.target, &data, &initial, &opts)?;
    let errors = rc.truth.as_ref().map(|t| r.params.iter().zip(t).map(|(p, t)| (p - t).abs()).collect::<Vec<_>>());
    let report = RecoverReport {
        edge: rc.edge,
        target: rc.target,
        terms: rc.terms,
        lower: rc.lower,
        upper: rc.upper,
        initial,
        data_points: data.points.len() - data.flagged(),
        truth: rc.truth,
        params: r.params,
        errors,
        rms: r.rms,
        monotone: r.trace.windows(2).all(|w| w[1] <= w[0]),
        trace: r.trace,
        ambiguous: r.ambiguous,
        runs: r.runs,
    };
    write_json(&cli.out.join("recovery_report.json"), &report)?;
    let mut lines = vec![format!("params {:?}, rms {:.3e}", report.params, report.rms)];
    if let Some(e) = &report.errors {
        lines.push(format!("max parameter error {:.3e}", e.iter().cloned().fold(0.0, f64::max)));
    }
    if report.ambiguous {
        lines.push("warning: distinct starts converged to distant parameters".into());
    }
    Ok(lines)
}

fn cmd_selftest(cli: &Cli) -> Run<Vec<String>> {
    let r = run_selftest(cli.seed)?;
    write_json(&cli.out.join("selftest_report.json"), &r)?;
    let lines: Vec<String> = r.criteria.iter().map(|c| c.line()).collect();
    if !r.pass {
        return Err(Failure { code: 3, message: lines.join("\n") });
    }
    Ok(lines)
}

/// Runs the parsed command and returns the lines for stdout.
pub fn run(cli: &Cli) -> Run<Vec<String>> {
    let go = || match cli.command {
        Command::Forward => cmd_forward(cli),
        Command::Reduce => cmd_reduce(cli),
        Command::Verify => cmd_verify(cli),
        Command::Recover => cmd_recover(cli),
        Command::Selftest => cmd_selftest(cli),
    };
    match cli.workers {
        Some(0) => Err(Failure { code: 2, message: "--workers must be positive".into() }),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure { code: 3, message: format!("thread pool: {e}") })?
            .install(go),
        None => go(),
    }
}

/// Runs the command line `args` and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
