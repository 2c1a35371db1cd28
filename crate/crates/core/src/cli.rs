//! The `sdeig` command-line front end.
//!
//! Every subcommand writes its data files plus a `manifest.json` into the output
//! directory (`--out`, else `$SDEIG_OUT_DIR`, else `./sdeig-out`). The manifest
//! stores the parsed invocation and relative output names only, so
//! `sdeig replay <manifest> --out <dir>` reproduces every file byte for byte.
//!
//! Exit codes: 0 converged or stopped on increase, 1 usage/parse/IO errors,
//! 2 degenerate point, 3 iteration limit, 4 numeric failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exclusion::{covers, covers_safely, from_trace, heuristic_violation_survey, ExclusionDisk, ExclusionSet};
use crate::field::{area_curve, eval_field, maximum_principle_check, GridSpec, Quantity, ScalarField};
use crate::gallery::{normal_from_spectrum, Gallery, GallerySpec};
use crate::kernel::{eig_oracle, DenseMatrix, EigenOracleResult, C64};
use crate::normal_eig::eigs_via_svd;
use crate::solver::{SolveResult, SolveStatus, SolverConfig, SolverRegistry};

pub const OUT_DIR_ENV: &str = "SDEIG_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "sdeig-out";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Parser, Debug)]
#[command(name = "sdeig", version, about = "Eigenvalues by steepest descent on σ_min(zI − A)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Run the eigenvalue iteration from one or more starting points.
    Solve(SolveArgs),
    /// Sample σ_min, pss, 1/pss or the σ_min Hessian determinant on a grid.
    Field(FieldArgs),
    /// Pseudospectrum area as a function of ε.
    Area(AreaArgs),
    /// Exclusion disks from descent runs, grid coverage and heuristic survey.
    Exclude(ExcludeArgs),
    /// All eigenvalues of a normal matrix from one SVD.
    NormalEig(NormalEigArgs),
    /// Write a gallery matrix as CSV, or list the generators.
    Gallery(GalleryArgs),
    /// Steepest descent and two-sided Rayleigh iteration side by side.
    Compare(CompareArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Field(_) => "field",
            Command::Area(_) => "area",
            Command::Exclude(_) => "exclude",
            Command::NormalEig(_) => "normal-eig",
            Command::Gallery(_) => "gallery",
            Command::Compare(_) => "compare",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

/// A point `re,im` of the complex plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point(pub C64);

pub fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let (re, im) = s.split_once(',').unwrap_or((s, "0"));
    let re: f64 = re.trim().parse().map_err(|e| format!("bad real part {re:?}: {e}"))?;
    let im: f64 = im.trim().parse().map_err(|e| format!("bad imaginary part {im:?}: {e}"))?;
    if !(re.is_finite() && im.is_finite()) {
        return Err("point must be finite".into());
    }
    Ok(Point(C64::new(re, im)))
}

fn parse_matrix(s: &str) -> std::result::Result<String, String> {
    let spec: GallerySpec = s.parse().map_err(|e: Error| e.to_string())?;
    if Gallery::standard().get(&spec.name).is_none() {
        return Err(format!("unknown matrix {:?}", spec.name));
    }
    Ok(spec.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSize {
    pub nx: usize,
    pub ny: usize,
}

pub fn parse_grid_size(s: &str) -> std::result::Result<GridSize, String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or("expected NXxNY, e.g. 60x60")?;
    let nx = a.trim().parse().map_err(|e| format!("bad nx {a:?}: {e}"))?;
    let ny = b.trim().parse().map_err(|e| format!("bad ny {b:?}: {e}"))?;
    if nx < 2 || ny < 2 {
        return Err("grid needs at least 2 nodes per direction".into());
    }
    Ok(GridSize { nx, ny })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

pub fn parse_box(s: &str) -> std::result::Result<PlaneBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad box bound {t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let [x_min, x_max, y_min, y_max] = v[..] else {
        return Err("expected x_min,x_max,y_min,y_max".into());
    };
    if !(x_min < x_max && y_min < y_max) {
        return Err("box bounds must satisfy x_min < x_max and y_min < y_max".into());
    }
    Ok(PlaneBox { x_min, x_max, y_min, y_max })
}

/// `start:stop:count`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

pub fn parse_eps_range(s: &str) -> std::result::Result<EpsRange, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts[..] else {
        return Err("expected start:stop:count".into());
    };
    let start: f64 = a.trim().parse().map_err(|e| format!("bad start {a:?}: {e}"))?;
    let stop: f64 = b.trim().parse().map_err(|e| format!("bad stop {b:?}: {e}"))?;
    let count: usize = c.trim().parse().map_err(|e| format!("bad count {c:?}: {e}"))?;
    if !(start > 0.0 && start.is_finite() && stop.is_finite()) || count == 0 || (count > 1 && stop <= start) {
        return Err("need 0 < start < stop and count ≥ 1".into());
    }
    Ok(EpsRange { start, stop, count })
}

impl EpsRange {
    pub fn values(&self, geometric: bool) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let m = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| {
                let t = k as f64 / m;
                if geometric {
                    self.start * (self.stop / self.start).powf(t)
                } else {
                    self.start + (self.stop - self.start) * t
                }
            })
            .collect()
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SolverArgs {
    /// Stop once σ_min ≤ tol·‖A‖_F.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration limit [default: 100].
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Upper bound on pss in the step length [default: 1e12].
    #[arg(long)]
    pub pss_cap: Option<f64>,
    /// Relative gap below which a point is degenerate.
    #[arg(long)]
    pub gap_rel_min: Option<f64>,
    /// Keep iterating after σ_min increases.
    #[arg(long)]
    pub no_stop_on_increase: bool,
    /// Step halvings allowed on an increase (0 = off).
    #[arg(long, default_value_t = 0)]
    pub halvings: usize,
}

impl SolverArgs {
    pub fn config(&self) -> Result<SolverConfig> {
        let d = SolverConfig::default();
        let cfg = SolverConfig {
            tol_sigma: self.tol.unwrap_or(d.tol_sigma),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            gap_rel_min: self.gap_rel_min.unwrap_or(d.gap_rel_min),
            pss_cap: self.pss_cap.unwrap_or(d.pss_cap),
            stop_on_increase: !self.no_stop_on_increase,
            max_halvings: self.halvings,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sdeig,
    Os,
}

impl Method {
    fn key(self) -> &'static str {
        match self {
            Method::Sdeig => "sdeig",
            Method::Os => "os",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SolveArgs {
    /// Matrix, e.g. "pentoep(32,0,0.5,0,0,1)".
    #[arg(value_parser = parse_matrix)]
    pub matrix: String,
    /// Starting point re,im (repeatable).
    #[arg(long = "start", required = true, allow_hyphen_values = true, value_parser = parse_point)]
    pub starts: Vec<Point>,
    #[arg(long, value_enum, default_value_t = Method::Sdeig)]
    pub method: Method,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Summary numbers in the short table style.
    #[arg(long)]
    pub paper_format: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GridArgs {
    /// Nodes per direction, NXxNY.
    #[arg(long, default_value = "60x60", value_parser = parse_grid_size)]
    pub grid: GridSize,
    /// Region x_min,x_max,y_min,y_max; defaults to the padded Gershgorin box.
    #[arg(long = "box", allow_hyphen_values = true, value_parser = parse_box)]
    pub region: Option<PlaneBox>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum QuantityArg {
    SigmaMin,
    Pss,
    InvPss,
    HessianDet,
}

impl From<QuantityArg> for Quantity {
    fn from(q: QuantityArg) -> Self {
        match q {
            QuantityArg::SigmaMin => Quantity::SigmaMin,
            QuantityArg::Pss => Quantity::Pss,
            QuantityArg::InvPss => Quantity::InvPss,
            QuantityArg::HessianDet => Quantity::HessianDet,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FieldArgs {
    #[arg(value_parser = parse_matrix)]
    pub matrix: String,
    /// Quantity sampled at each node.
    #[arg(long, value_enum, default_value_t = QuantityArg::Pss)]
    pub quantity: QuantityArg,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Relative gap below which a node is masked as degenerate.
    #[arg(long)]
    pub gap_rel_min: Option<f64>,
    /// Also write a maximum-principle report for the field.
    #[arg(long)]
    pub max_principle: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AreaArgs {
    #[arg(value_parser = parse_matrix)]
    pub matrix: String,
    /// ε values as start:stop:count.
    #[arg(long, value_parser = parse_eps_range)]
    pub eps: EpsRange,
    /// Geometric instead of arithmetic ε spacing.
    #[arg(long)]
    pub log_eps: bool,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ExcludeArgs {
    #[arg(value_parser = parse_matrix)]
    pub matrix: String,
    /// Descent starting point re,im (repeatable).
    #[arg(long = "start", allow_hyphen_values = true, value_parser = parse_point)]
    pub starts: Vec<Point>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Heuristic-disk violation survey on the grid.
    #[arg(long)]
    pub survey: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct NormalEigArgs {
    /// Normal matrix; alternative to --spectrum-file.
    #[arg(value_parser = parse_matrix, required_unless_present = "spectrum_file")]
    pub matrix: Option<String>,
    /// CSV of eigenvalues (re,im per line) for a seeded normal matrix.
    #[arg(long, conflicts_with = "matrix")]
    pub spectrum_file: Option<PathBuf>,
    /// Seed of the random unitary used with --spectrum-file.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shift z of the single SVD of zI − N.
    #[arg(long, default_value = "0,0", allow_hyphen_values = true, value_parser = parse_point)]
    pub shift: Point,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GalleryArgs {
    /// Matrix to write; without it the generators are listed.
    #[arg(value_parser = parse_matrix)]
    pub matrix: Option<String>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CompareArgs {
    #[arg(value_parser = parse_matrix)]
    pub matrix: String,
    /// Starting point re,im (repeatable).
    #[arg(long = "start", required = true, allow_hyphen_values = true, value_parser = parse_point)]
    pub starts: Vec<Point>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArg,
}

/// Reproducibility record written next to every command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub matrix: Option<String>,
    pub parameters: BTreeMap<String, String>,
    /// File names relative to the output directory.
    pub output_paths: Vec<String>,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub invocation: serde_json::Value,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn command(&self) -> Result<Command> {
        let cmd: Command = serde_json::from_value(self.invocation.clone())?;
        if matches!(cmd, Command::Replay(_)) {
            return Err(invalid("a manifest cannot contain a replay"));
        }
        Ok(cmd)
    }
}

fn flatten_params(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, String>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_params(&key, x, out);
            }
        }
        serde_json::Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

/// Files produced by a command, in write order.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, String)>,
    exit: u8,
}

impl Outputs {
    fn add(&mut self, name: impl Into<String>, content: String) {
        self.files.push((name.into(), content));
    }

    fn status(&mut self, status: SolveStatus) {
        self.exit = self.exit.max(status_code(status));
    }
}

pub fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::ConvergedTol | SolveStatus::StoppedOnIncrease => 0,
        SolveStatus::DegeneratePoint => 2,
        SolveStatus::MaxIter => 3,
    }
}

pub fn error_code(e: &Error) -> u8 {
    match e {
        Error::NumericFailure(_) => 4,
        _ => 1,
    }
}

/// 15 significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.14e}")
}

pub fn sci_complex(z: C64) -> String {
    format!("{:.14e}{:+.14e}i", z.re, z.im)
}

fn plain_complex(z: C64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

fn csv<I: IntoIterator<Item = String>>(header: &str, rows: I) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

pub fn resolve_out_dir(flag: &OutArg) -> PathBuf {
    flag.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn build(matrix: &str) -> Result<(GallerySpec, DenseMatrix)> {
    let spec: GallerySpec = matrix.parse()?;
    let a = Gallery::standard().build(&spec)?;
    Ok((spec, a))
}

fn make_grid(a: &DenseMatrix, g: &GridArgs, pad_abs: f64) -> Result<GridSpec> {
    match g.region {
        Some(b) => GridSpec::new(b.x_min, b.x_max, b.y_min, b.y_max, g.grid.nx, g.grid.ny),
        None => GridSpec::gershgorin(a, pad_abs, if pad_abs > 0.0 { 0.0 } else { 0.1 }, g.grid.nx, g.grid.ny),
    }
}

fn trace_csv(r: &SolveResult) -> String {
    csv(
        "iter,z_re,z_im,sigma_min,gap,pss,step,capped",
        r.trace.iter().enumerate().map(|(k, t)| {
            format!(
                "{k},{},{},{},{},{},{},{}",
                sci(t.z.re),
                sci(t.z.im),
                sci(t.sigma_min),
                sci(t.gap),
                sci(t.pss),
                sci(t.step_size),
                u8::from(t.capped)
            )
        }),
    )
}

pub const EXCLUSION_HEADER: &str = "center_re,center_im,radius,kind,epsilon,source";

fn disk_row(d: &ExclusionDisk) -> String {
    format!("{},{},{},{},{},{}", sci(d.center.re), sci(d.center.im), sci(d.radius), d.kind, sci(d.epsilon), d.source)
}

fn exclusions_csv(disks: &[ExclusionDisk]) -> String {
    csv(EXCLUSION_HEADER, disks.iter().map(disk_row))
}

/// Truncated mantissa with a signed two-digit exponent, e.g. `6.96686e-01`.
fn table_e(x: f64, digits: usize) -> String {
    let full = format!("{x:.17e}");
    let (mant, exp) = full.split_once('e').unwrap();
    let keep = mant.find('.').unwrap() + 1 + digits;
    let exp: i32 = exp.parse().unwrap();
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{}e{sign}{:02}", &mant[..keep], exp.abs())
}

pub const SUMMARY_HEADER: &str = "start,iterations,lambda,abs_error,s_min,eig_sens";

fn summary_row(r: &SolveResult, oracle: &EigenOracleResult, short: bool) -> String {
    let k = oracle.nearest(r.eigenvalue_estimate);
    let lambda = oracle.eigenvalues[k];
    let err = (r.eigenvalue_estimate - lambda).norm();
    let kappa = oracle.condition_numbers[k];
    if short {
        let im = table_e(lambda.im, 5);
        let sign = if im.starts_with('-') { "" } else { "+" };
        format!(
            "{},{},{}{sign}{im}i,{},{},{}",
            plain_complex(r.start),
            r.iterations(),
            table_e(lambda.re, 5),
            table_e(err, 5),
            table_e(r.final_sigma, 3),
            table_e(kappa, 2)
        )
    } else {
        format!(
            "{},{},{},{},{},{}",
            plain_complex(r.start),
            r.iterations(),
            sci_complex(lambda),
            sci(err),
            sci(r.final_sigma),
            sci(kappa)
        )
    }
}

fn cmd_solve(args: &SolveArgs, out: &mut Outputs) -> Result<()> {
    let (_, a) = build(&args.matrix)?;
    let cfg = args.solver.config()?;
    let registry = SolverRegistry::standard();
    let solver = registry.get(args.method.key())?;
    let oracle = eig_oracle(&a)?;
    let mut summary = Vec::new();
    for (k, p) in args.starts.iter().enumerate() {
        let r = solver.solve(&a, p.0, &cfg)?;
        println!(
            "start {}: {} after {} iterations, estimate {}, sigma_min {}",
            plain_complex(p.0),
            r.status,
            r.iterations(),
            sci_complex(r.eigenvalue_estimate),
            sci(r.final_sigma)
        );
        out.status(r.status);
        out.add(format!("trace_{}.csv", k + 1), trace_csv(&r));
        out.add(format!("exclusions_{}.csv", k + 1), exclusions_csv(&r.disks));
        summary.push(summary_row(&r, &oracle, args.paper_format));
    }
    out.add("summary.csv", csv(SUMMARY_HEADER, summary));
    Ok(())
}

fn field_csv(f: &ScalarField) -> String {
    let g = &f.grid;
    csv(
        "x,y,value,masked",
        (0..g.ny).flat_map(|j| (0..g.nx).map(move |i| (i, j))).map(|(i, j)| {
            let z = g.node(i, j);
            format!("{},{},{},{}", sci(z.re), sci(z.im), sci(f.value(i, j)), u8::from(f.masked(i, j)))
        }),
    )
}

fn cmd_field(args: &FieldArgs, out: &mut Outputs) -> Result<()> {
    let (_, a) = build(&args.matrix)?;
    let grid = make_grid(&a, &args.grid, 0.0)?;
    let gap = args.gap_rel_min.unwrap_or(SolverConfig::default().gap_rel_min);
    let field = eval_field(&a, &grid, args.quantity.into(), gap)?;
    let masked = field.degenerate_mask.iter().filter(|&&m| m).count();
    println!("{} nodes, {masked} masked", grid.len());
    out.add("field.csv", field_csv(&field));
    out.add("field.json", serde_json::to_string_pretty(&field)? + "\n");
    if args.max_principle {
        let report = maximum_principle_check(&field, 1e-12);
        println!("maximum principle: {} violations in {} components", report.violations.len(), report.components);
        out.add("max_principle.json", serde_json::to_string_pretty(&report)? + "\n");
    }
    Ok(())
}

fn cmd_area(args: &AreaArgs, out: &mut Outputs) -> Result<()> {
    let (_, a) = build(&args.matrix)?;
    let eps = args.eps.values(args.log_eps);
    let max_eps = *eps.last().expect("count ≥ 1");
    let grid = make_grid(&a, &args.grid, max_eps)?;
    let curve = area_curve(&a, &grid, &eps)?;
    if curve.grid_too_small {
        eprintln!("warning: grid too small, a boundary node lies inside the largest pseudospectrum");
    }
    out.add(
        "area.csv",
        csv(
            "epsilon,count,area",
            curve.epsilons.iter().zip(&curve.counts).zip(&curve.areas).map(|((e, c), s)| format!("{},{c},{}", sci(*e), sci(*s))),
        ),
    );
    Ok(())
}

fn cmd_exclude(args: &ExcludeArgs, out: &mut Outputs) -> Result<()> {
    let (_, a) = build(&args.matrix)?;
    let cfg = args.solver.config()?;
    let mut set = ExclusionSet::new(a.content_hash());
    for p in &args.starts {
        let r = crate::solver::sdeig(&a, p.0, &cfg)?;
        out.status(r.status);
        set.extend_from(&from_trace(&r))?;
    }
    out.add("exclusions.csv", exclusions_csv(&set.disks));
    let grid = make_grid(&a, &args.grid, 0.0)?;
    let (mut n_safe, mut n_any) = (0usize, 0usize);
    let rows: Vec<String> = grid
        .nodes()
        .map(|z| {
            let (s, h) = (covers_safely(&set, z), covers(&set, z));
            n_safe += usize::from(s);
            n_any += usize::from(h);
            format!("{},{},{},{}", sci(z.re), sci(z.im), u8::from(s), u8::from(h))
        })
        .collect();
    println!("{} disks; grid coverage safe {n_safe}/{n} any {n_any}/{n}", set.disks.len(), n = grid.len());
    out.add("coverage.csv", csv("x,y,safe,any", rows));
    if args.survey {
        let eigs = eig_oracle(&a)?.eigenvalues;
        let s = heuristic_violation_survey(&a, &grid, &eigs, &cfg)?;
        println!("heuristic disks: {} evaluated, {} skipped, {} violations ({:.4})", s.evaluated, s.skipped, s.violations, s.rate());
        let rows = s.disks.iter().zip(&s.violated).map(|(d, v)| format!("{},{}", disk_row(d), u8::from(*v)));
        out.add("survey.csv", csv(&format!("{EXCLUSION_HEADER},violated"), rows));
    }
    Ok(())
}

/// Eigenvalues from a `re,im` per line CSV; lines that do not parse as two numbers (headers) are skipped.
pub fn read_spectrum(path: &Path) -> Result<Vec<C64>> {
    let text = fs::read_to_string(path)?;
    let mut eigs = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        match parse_point(line) {
            Ok(p) => eigs.push(p.0),
            Err(_) if eigs.is_empty() => continue,
            Err(e) => return Err(Error::Parse(format!("{}: {e}", path.display()))),
        }
    }
    if eigs.is_empty() {
        return Err(Error::Parse(format!("{}: no eigenvalues", path.display())));
    }
    Ok(eigs)
}

fn cmd_normal_eig(args: &NormalEigArgs, out: &mut Outputs) -> Result<()> {
    let n = match (&args.matrix, &args.spectrum_file) {
        (Some(m), _) => build(m)?.1,
        (None, Some(path)) => normal_from_spectrum(&read_spectrum(path)?, args.seed)?,
        (None, None) => return Err(invalid("need a matrix or --spectrum-file")),
    };
    let r = eigs_via_svd(&n, args.shift.0)?;
    let flagged = r.flagged.iter().filter(|&&f| f).count();
    println!("{} eigenvalues, {flagged} flagged", r.eigenvalues.len());
    out.add(
        "eigenvalues.csv",
        csv("re,im,flagged", r.eigenvalues.iter().zip(&r.flagged).map(|(l, f)| format!("{},{},{}", sci(l.re), sci(l.im), u8::from(*f)))),
    );
    Ok(())
}

fn cmd_gallery(args: &GalleryArgs, out: &mut Outputs) -> Result<()> {
    let gallery = Gallery::standard();
    let Some(m) = &args.matrix else {
        for name in gallery.names() {
            println!("{}", gallery.get(name).expect("registered").usage());
        }
        return Ok(());
    };
    let (_, a) = build(m)?;
    let n = a.order();
    let mut s = String::from("row,col,re,im\n");
    for i in 0..n {
        for j in 0..n {
            let x = a.get(i, j);
            let _ = writeln!(s, "{i},{j},{},{}", sci(x.re), sci(x.im));
        }
    }
    out.add("matrix.csv", s);
    Ok(())
}

fn cmd_compare(args: &CompareArgs, out: &mut Outputs) -> Result<()> {
    let (_, a) = build(&args.matrix)?;
    let cfg = args.solver.config()?;
    let registry = SolverRegistry::standard();
    let oracle = eig_oracle(&a)?;
    let mut rows = Vec::new();
    for p in &args.starts {
        let mut row = plain_complex(p.0);
        for method in ["sdeig", "os"] {
            let r = registry.get(method)?.solve(&a, p.0, &cfg)?;
            out.status(r.status);
            let lambda = oracle.eigenvalues[oracle.nearest(r.eigenvalue_estimate)];
            let err = (r.eigenvalue_estimate - lambda).norm();
            println!("start {} {method}: {} iterations, {}, error {}", plain_complex(p.0), r.iterations(), r.status, sci(err));
            let _ = write!(row, ",{},{},{},{}", r.iterations(), r.status, sci_complex(r.eigenvalue_estimate), sci(err));
        }
        rows.push(row);
    }
    out.add(
        "compare.csv",
        csv(
            "start,sdeig_iterations,sdeig_status,sdeig_lambda,sdeig_error,os_iterations,os_status,os_lambda,os_error",
            rows,
        ),
    );
    Ok(())
}

/// Make path inputs absolute so the recorded invocation does not depend on the working directory.
fn canonical(cmd: &mut Command) -> Result<()> {
    if let Command::NormalEig(a) = cmd {
        if let Some(p) = &a.spectrum_file {
            a.spectrum_file = Some(fs::canonicalize(p)?);
        }
    }
    Ok(())
}

fn manifest_for(cmd: &Command, outputs: &Outputs) -> Result<RunManifest> {
    let invocation = serde_json::to_value(cmd)?;
    let mut parameters = BTreeMap::new();
    if let Some(inner) = invocation.as_object().and_then(|o| o.values().next()) {
        flatten_params("", inner, &mut parameters);
    }
    let (matrix, seed) = match cmd {
        Command::Solve(a) => (Some(a.matrix.clone()), None),
        Command::Field(a) => (Some(a.matrix.clone()), None),
        Command::Area(a) => (Some(a.matrix.clone()), None),
        Command::Exclude(a) => (Some(a.matrix.clone()), None),
        Command::Compare(a) => (Some(a.matrix.clone()), None),
        Command::Gallery(a) => (a.matrix.clone(), None),
        Command::NormalEig(a) => (a.matrix.clone(), a.spectrum_file.as_ref().map(|_| a.seed)),
        Command::Replay(_) => (None, None),
    };
    let seed = seed.or_else(|| matrix.as_deref().and_then(|m| m.parse::<GallerySpec>().ok()).and_then(|s| s.seed));
    Ok(RunManifest {
        subcommand: cmd.name().to_string(),
        matrix,
        parameters,
        output_paths: outputs.files.iter().map(|(n, _)| n.clone()).collect(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        invocation,
    })
}

fn out_arg(cmd: &Command) -> &OutArg {
    match cmd {
        Command::Solve(a) => &a.out,
        Command::Field(a) => &a.out,
        Command::Area(a) => &a.out,
        Command::Exclude(a) => &a.out,
        Command::NormalEig(a) => &a.out,
        Command::Gallery(a) => &a.out,
        Command::Compare(a) => &a.out,
        Command::Replay(a) => &a.out,
    }
}

/// Run one command, writing its files into `dir`. Returns the exit code.
pub fn execute(cmd: &Command, dir: &Path) -> Result<u8> {
    let mut cmd = cmd.clone();
    if let Command::Replay(r) = &cmd {
        let replayed = RunManifest::read(&r.manifest)?.command()?;
        return execute(&replayed, dir);
    }
    canonical(&mut cmd)?;
    let mut out = Outputs::default();
    match &cmd {
        Command::Solve(a) => cmd_solve(a, &mut out)?,
        Command::Field(a) => cmd_field(a, &mut out)?,
        Command::Area(a) => cmd_area(a, &mut out)?,
        Command::Exclude(a) => cmd_exclude(a, &mut out)?,
        Command::NormalEig(a) => cmd_normal_eig(a, &mut out)?,
        Command::Gallery(a) => cmd_gallery(a, &mut out)?,
        Command::Compare(a) => cmd_compare(a, &mut out)?,
        Command::Replay(_) => unreachable!("handled above"),
    }
    if let Command::Gallery(GalleryArgs { matrix: None, .. }) = &cmd {
        return Ok(0);
    }
    let manifest = manifest_for(&cmd, &out)?;
    fs::create_dir_all(dir)?;
    for (name, content) in &out.files {
        fs::write(dir.join(name), content)?;
    }
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(out.exit)
}

/// Parse `args` (including the program name) and run.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let dir = resolve_out_dir(out_arg(&cli.command));
    match execute(&cli.command, &dir) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}
