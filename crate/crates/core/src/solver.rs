//! Steepest descent on `g(z) = σ_min(zI − A)` and the two-sided Rayleigh
//! quotient variant it is compared against.
//!
//! With `(σ, u, v)` the smallest singular triplet of `zI − A`, the gradient of
//! `g` is `vᴴu` (read as `g_x + i·g_y`) and `|vᴴu| = 1/pss(z)`. The descent step
//! is `z ← z − σ·pss·vᴴu/|vᴴu|`, which lands exactly on the nearest eigenvalue
//! when `A` is normal.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exclusion::{DiskKind, DiskSource, ExclusionDisk};
use crate::kernel::{check_finite, min_triplet, shift, sigma_min, DenseMatrix, SingularTriplet, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once `σ_min ≤ tol_sigma·‖A‖_F`.
    pub tol_sigma: f64,
    /// Maximum number of steps.
    pub max_iter: usize,
    /// Points with `(σₙ₋₁ − σₙ)/σ₁` below this are degenerate.
    pub gap_rel_min: f64,
    /// Upper bound on the pss factor in the step.
    pub pss_cap: f64,
    pub stop_on_increase: bool,
    /// On an increase, retry from the previous point with half the step (up to this
    /// many times) instead of stopping. Zero disables.
    pub max_halvings: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_sigma: 1e-16,
            max_iter: 100,
            gap_rel_min: 1e-10,
            pss_cap: 1e12,
            stop_on_increase: true,
            max_halvings: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !(self.tol_sigma >= 0.0 && self.tol_sigma.is_finite()) {
            return Err(invalid("tol_sigma must be finite and nonnegative"));
        }
        if !positive(self.gap_rel_min) || !positive(self.pss_cap) {
            return Err(invalid("gap_rel_min and pss_cap must be positive"));
        }
        if self.max_iter < 1 {
            return Err(invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    ConvergedTol,
    StoppedOnIncrease,
    MaxIter,
    DegeneratePoint,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::ConvergedTol => "converged_tol",
            SolveStatus::StoppedOnIncrease => "stopped_on_increase",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::DegeneratePoint => "degenerate_point",
        };
        f.write_str(s)
    }
}

/// One evaluated point of an iteration.
///
/// For steepest descent `step_size = sigma_min·min(pss, pss_cap)` and `direction`
/// is the unit gradient. For the Rayleigh variant they describe the move actually
/// made: the next point is `z − step_size·direction`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub z: C64,
    pub sigma_min: f64,
    pub gap: f64,
    pub pss: f64,
    pub direction: C64,
    pub step_size: f64,
    pub capped: bool,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveResult {
    pub method: String,
    pub start: C64,
    pub eigenvalue_estimate: C64,
    pub final_sigma: f64,
    pub status: SolveStatus,
    pub trace: Vec<IterationRecord>,
    pub disks: Vec<ExclusionDisk>,
    pub matrix_id: String,
}

impl SolveResult {
    /// Steps taken: every recorded point after the start.
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }

    fn finish(method: &str, a: &DenseMatrix, start: C64, status: SolveStatus, trace: Vec<IterationRecord>, pss_cap: f64) -> Self {
        let best = trace
            .iter()
            .min_by(|x, y| x.sigma_min.total_cmp(&y.sigma_min))
            .expect("trace is never empty");
        let disks = disks_from_trace(&trace, pss_cap);
        SolveResult {
            method: method.to_string(),
            start,
            eigenvalue_estimate: best.z,
            final_sigma: best.sigma_min,
            status,
            disks,
            trace,
            matrix_id: a.content_hash(),
        }
    }
}

/// One safe and (where the point is non-degenerate) one heuristic disk per recorded point
/// with positive `σ_min`.
pub(crate) fn disks_from_trace(trace: &[IterationRecord], pss_cap: f64) -> Vec<ExclusionDisk> {
    let mut disks = Vec::new();
    for (k, r) in trace.iter().enumerate() {
        if r.sigma_min <= 0.0 {
            continue;
        }
        disks.push(ExclusionDisk {
            center: r.z,
            radius: r.sigma_min,
            kind: DiskKind::Safe,
            epsilon: 0.0,
            source: DiskSource::Iterate(k),
        });
        if !r.degenerate && r.pss.is_finite() {
            disks.push(ExclusionDisk {
                center: r.z,
                radius: r.sigma_min * r.pss.min(pss_cap),
                kind: DiskKind::Heuristic,
                epsilon: 0.0,
                source: DiskSource::Iterate(k),
            });
        }
    }
    disks
}

/// `pss(z) = 1/|vᴴu|` with the triplet it came from.
#[derive(Clone, Debug)]
pub struct PssValue {
    pub pss: f64,
    pub triplet: SingularTriplet,
    pub gap: f64,
    pub sigma_max: f64,
    /// Relative gap below the threshold: the value is not trustworthy.
    pub degenerate: bool,
}

impl PssValue {
    pub fn relative_gap(&self) -> f64 {
        if self.gap.is_infinite() {
            f64::INFINITY
        } else if self.sigma_max > 0.0 {
            self.gap / self.sigma_max
        } else {
            0.0
        }
    }
}

pub fn pss_at(a: &DenseMatrix, z: C64, gap_rel_min: f64) -> Result<PssValue> {
    check_finite(z, "z")?;
    let m = min_triplet(&shift(a, z))?;
    let degenerate = m.is_degenerate(gap_rel_min);
    let overlap = m.triplet.vhu().norm();
    let pss = if overlap > 0.0 { 1.0 / overlap } else { f64::INFINITY };
    Ok(PssValue { pss, triplet: m.triplet, gap: m.gap, sigma_max: m.sigma_max, degenerate })
}

/// Below this multiple of `‖A‖_F` (or exactly zero) a point counts as an eigenvalue.
const AT_EIGENVALUE_REL: f64 = 1e-15;

/// `∂σ/∂x + i·∂σ/∂y` of `σ_min(zI − A)`.
pub fn gradient_at(a: &DenseMatrix, z: C64, gap_rel_min: f64) -> Result<C64> {
    let p = pss_at(a, z, gap_rel_min)?;
    let sigma = p.triplet.sigma;
    if sigma == 0.0 || sigma <= AT_EIGENVALUE_REL * a.frobenius_norm() {
        return Err(Error::AtEigenvalue { z, sigma });
    }
    if p.degenerate {
        return Err(Error::DegeneratePoint { z, rel_gap: p.relative_gap() });
    }
    Ok(p.triplet.vhu())
}

fn unit(c: C64) -> C64 {
    let r = c.norm();
    if r > 0.0 && r.is_finite() {
        c / r
    } else {
        C64::new(1.0, 0.0)
    }
}

fn descent_record(p: &PssValue, z: C64, cfg: &SolverConfig) -> IterationRecord {
    let sigma = p.triplet.sigma;
    let capped = p.pss > cfg.pss_cap;
    IterationRecord {
        z,
        sigma_min: sigma,
        gap: p.gap,
        pss: p.pss,
        direction: unit(p.triplet.vhu()),
        step_size: sigma * p.pss.min(cfg.pss_cap),
        capped,
        degenerate: p.degenerate,
    }
}

/// Evaluate at `z0`; on a degenerate start retry once at `z0 + 1e-8·(1 + |z0|)·e^{iπ/4}`.
fn evaluate_start(a: &DenseMatrix, z0: C64, cfg: &SolverConfig) -> Result<(C64, PssValue)> {
    let p = pss_at(a, z0, cfg.gap_rel_min)?;
    if !p.degenerate {
        return Ok((z0, p));
    }
    let z1 = z0 + C64::from_polar(1e-8 * (1.0 + z0.norm()), std::f64::consts::FRAC_PI_4);
    Ok((z1, pss_at(a, z1, cfg.gap_rel_min)?))
}

/// `+1` if moving against `direction` decreases `σ_min` near `z`, `−1` otherwise.
fn orientation(a: &DenseMatrix, record: &IterationRecord) -> Result<f64> {
    let h = record.step_size * 1e-3;
    if h.is_nan() || h <= 0.0 {
        return Ok(1.0);
    }
    let minus = sigma_min(&shift(a, record.z - record.direction * h))?;
    let plus = sigma_min(&shift(a, record.z + record.direction * h))?;
    Ok(if minus <= plus { 1.0 } else { -1.0 })
}

/// Steepest descent with step `σ_min·pss`.
pub fn sdeig(a: &DenseMatrix, z0: C64, cfg: &SolverConfig) -> Result<SolveResult> {
    check_finite(z0, "start")?;
    cfg.validate()?;
    let tol = cfg.tol_sigma * a.frobenius_norm();

    let (mut z, mut p) = evaluate_start(a, z0, cfg)?;
    let mut trace = vec![descent_record(&p, z, cfg)];
    let sign = orientation(a, &trace[0])?;
    let mut halvings = 0usize;
    let mut steps = 0usize;

    let status = loop {
        let current = trace.last().expect("non-empty").clone();
        if current.sigma_min <= tol {
            break SolveStatus::ConvergedTol;
        }
        if p.degenerate {
            break SolveStatus::DegeneratePoint;
        }
        if steps == cfg.max_iter {
            break SolveStatus::MaxIter;
        }

        let mut step = current.step_size;
        loop {
            z = current.z - current.direction * (sign * step);
            p = pss_at(a, z, cfg.gap_rel_min)?;
            steps += 1;
            let increased = p.triplet.sigma > current.sigma_min;
            if increased && halvings < cfg.max_halvings && steps < cfg.max_iter {
                halvings += 1;
                step *= 0.5;
                continue;
            }
            break;
        }
        let record = descent_record(&p, z, cfg);
        let increased = record.sigma_min > current.sigma_min;
        trace.push(record);
        if increased && cfg.stop_on_increase {
            break SolveStatus::StoppedOnIncrease;
        }
    };
    Ok(SolveResult::finish("sdeig", a, z0, status, trace, cfg.pss_cap))
}

/// Outcome of one two-sided Rayleigh quotient update.
#[derive(Clone, Debug)]
pub enum OsStep {
    Updated { v: DVector<C64>, w: DVector<C64>, tau: C64 },
    /// `A − τI` is singular to working precision: `τ` is an eigenvalue.
    SingularShift,
}

/// `v̂ = (A − τI)⁻¹v`, `ŵᴴ = wᴴ(A − τI)⁻¹` (both normalized), `τ̂ = ŵᴴAv̂/ŵᴴv̂`.
pub fn os_step(a: &DenseMatrix, v: &DVector<C64>, w: &DVector<C64>, tau: C64) -> Result<OsStep> {
    check_finite(tau, "tau")?;
    let n = a.order();
    if v.len() != n || w.len() != n {
        return Err(invalid("vector length does not match matrix order"));
    }
    if v.norm() == 0.0 || w.norm() == 0.0 {
        return Err(invalid("v and w must be nonzero"));
    }
    let shifted = -shift(a, tau).into_dmatrix();
    let lu = shifted.clone().lu();
    let lu_h = shifted.adjoint().lu();
    let (Some(v_hat), Some(w_hat)) = (lu.solve(v), lu_h.solve(w)) else {
        return Ok(OsStep::SingularShift);
    };
    let (vn, wn) = (v_hat.norm(), w_hat.norm());
    if !(vn.is_finite() && wn.is_finite()) || vn == 0.0 || wn == 0.0 {
        return Ok(OsStep::SingularShift);
    }
    let v_hat = v_hat / C64::new(vn, 0.0);
    let w_hat = w_hat / C64::new(wn, 0.0);
    let denom = w_hat.dotc(&v_hat);
    if denom.norm() <= OS_BREAKDOWN {
        return Err(Error::DegeneratePoint { z: tau, rel_gap: denom.norm() });
    }
    let tau_hat = w_hat.dotc(&(a.as_dmatrix() * &v_hat)) / denom;
    Ok(OsStep::Updated { v: v_hat, w: w_hat, tau: tau_hat })
}

/// `|ŵᴴv̂|` below this (unit vectors) is treated as breakdown.
const OS_BREAKDOWN: f64 = 1e-14;

/// Two-sided Rayleigh quotient iteration started from the minimum singular
/// vectors at `z0`, monitored by `σ_min(τI − A)` with the same stopping rules as
/// [`sdeig`].
pub fn os_solve(a: &DenseMatrix, z0: C64, cfg: &SolverConfig) -> Result<SolveResult> {
    check_finite(z0, "start")?;
    cfg.validate()?;
    let tol = cfg.tol_sigma * a.frobenius_norm();

    let (mut tau, mut p) = evaluate_start(a, z0, cfg)?;
    let mut v = p.triplet.v.clone();
    let mut w = p.triplet.u.clone();
    let mut trace = vec![descent_record(&p, tau, cfg)];

    let status = loop {
        let current_sigma = trace.last().expect("non-empty").sigma_min;
        if current_sigma <= tol {
            break SolveStatus::ConvergedTol;
        }
        if trace.len() - 1 == cfg.max_iter {
            break SolveStatus::MaxIter;
        }
        let (v_hat, w_hat, tau_hat) = match os_step(a, &v, &w, tau) {
            Ok(OsStep::Updated { v, w, tau }) => (v, w, tau),
            Ok(OsStep::SingularShift) => break SolveStatus::ConvergedTol,
            Err(Error::DegeneratePoint { .. }) => break SolveStatus::DegeneratePoint,
            Err(e) => return Err(e),
        };
        let last = trace.last_mut().expect("non-empty");
        let mv = tau - tau_hat;
        last.step_size = mv.norm();
        last.direction = unit(mv);
        last.capped = false;

        p = pss_at(a, tau_hat, cfg.gap_rel_min)?;
        let mut record = descent_record(&p, tau_hat, cfg);
        record.step_size = 0.0;
        record.capped = false;
        let increased = record.sigma_min > current_sigma;
        trace.push(record);
        (v, w, tau) = (v_hat, w_hat, tau_hat);
        if increased && cfg.stop_on_increase {
            break SolveStatus::StoppedOnIncrease;
        }
    };
    Ok(SolveResult::finish("os", a, z0, status, trace, cfg.pss_cap))
}

/// An eigenvalue iteration selectable by name.
pub trait EigenSolver: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, a: &DenseMatrix, z0: C64, cfg: &SolverConfig) -> Result<SolveResult>;
}

pub struct SteepestDescent;

impl EigenSolver for SteepestDescent {
    fn name(&self) -> &'static str {
        "sdeig"
    }

    fn solve(&self, a: &DenseMatrix, z0: C64, cfg: &SolverConfig) -> Result<SolveResult> {
        sdeig(a, z0, cfg)
    }
}

pub struct TwoSidedRayleigh;

impl EigenSolver for TwoSidedRayleigh {
    fn name(&self) -> &'static str {
        "os"
    }

    fn solve(&self, a: &DenseMatrix, z0: C64, cfg: &SolverConfig) -> Result<SolveResult> {
        os_solve(a, z0, cfg)
    }
}

pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Box<dyn EigenSolver>>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self { solvers: BTreeMap::new() }
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(SteepestDescent));
        r.register(Box::new(TwoSidedRayleigh));
        r
    }

    pub fn register(&mut self, solver: Box<dyn EigenSolver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.solvers.keys().copied()
    }

    pub fn get(&self, name: &str) -> Result<&dyn EigenSolver> {
        self.solvers.get(name).map(|s| s.as_ref()).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            invalid(format!("unknown method {name:?}; known: {}", known.join(", ")))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::{grcar, normal_from_spectrum};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn diag(vals: &[f64]) -> DenseMatrix {
        DenseMatrix::diagonal(&vals.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn pss_of_normal_matrix_is_one() {
        let p = pss_at(&diag(&[1.0, 3.0]), c(0.0, 0.0), 1e-10).unwrap();
        assert!((p.pss - 1.0).abs() < 1e-14);
        assert!(!p.degenerate);
        let p = pss_at(&diag(&[1.0, 3.0]), c(2.0, 0.0), 1e-10).unwrap();
        assert!(p.degenerate);
    }

    #[test]
    fn pss_far_from_spectrum_tends_to_one() {
        let g = grcar(32, 3).unwrap();
        let p = pss_at(&g, c(5.0, 5.0), 1e-10).unwrap();
        assert!(p.pss > 1.0 - 1e-12 && 1.0 / p.pss > 0.5, "pss = {}", p.pss);
        let far = pss_at(&g, c(50.0, 50.0), 1e-10).unwrap();
        assert!((far.pss - 1.0).abs() < (p.pss - 1.0).abs());
    }

    #[test]
    fn scalar_gradient() {
        let g = gradient_at(&diag(&[0.0]), c(1.0, 0.0), 1e-10).unwrap();
        assert!((g - c(1.0, 0.0)).norm() < 1e-15);
        let g = gradient_at(&diag(&[0.0]), c(0.0, -2.0), 1e-10).unwrap();
        assert!((g - c(0.0, -1.0)).norm() < 1e-15);
        assert!(matches!(
            gradient_at(&diag(&[0.0]), c(0.0, 0.0), 1e-10),
            Err(Error::AtEigenvalue { .. })
        ));
        assert!(matches!(
            gradient_at(&diag(&[1.0, 3.0]), c(2.0, 0.0), 1e-10),
            Err(Error::DegeneratePoint { .. })
        ));
    }

    #[test]
    fn scalar_solve_takes_one_step() {
        let r = sdeig(&diag(&[5.0]), c(7.0, 0.0), &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::ConvergedTol);
        assert_eq!(r.iterations(), 1);
        assert_eq!(r.eigenvalue_estimate, c(5.0, 0.0));
    }

    #[test]
    fn normal_matrix_one_step() {
        let a = normal_from_spectrum(&[c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 0.0)], 42).unwrap();
        let r = sdeig(&a, c(10.0, 10.0), &SolverConfig::default()).unwrap();
        assert!((r.trace[1].z - c(0.0, 2.0)).norm() < 1e-10, "{:?}", r.trace[1].z);
    }

    #[test]
    fn degenerate_start_is_perturbed() {
        // z = 2 is equidistant from 1 and 3.
        let r = sdeig(&diag(&[1.0, 3.0]), c(2.0, 0.0), &SolverConfig::default()).unwrap();
        assert_ne!(r.trace[0].z, c(2.0, 0.0));
        assert_eq!(r.status, SolveStatus::ConvergedTol);
        let d = (r.eigenvalue_estimate - c(1.0, 0.0)).norm().min((r.eigenvalue_estimate - c(3.0, 0.0)).norm());
        assert!(d < 1e-12);
    }

    #[test]
    fn max_iter_is_reported() {
        let g = grcar(32, 3).unwrap();
        let cfg = SolverConfig { max_iter: 2, ..SolverConfig::default() };
        let r = sdeig(&g, c(0.5, 1.5), &cfg).unwrap();
        assert_eq!(r.status, SolveStatus::MaxIter);
        assert_eq!(r.iterations(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig { max_iter: 0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { pss_cap: 0.0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { tol_sigma: f64::NAN, ..SolverConfig::default() }.validate().is_err());
        assert!(sdeig(&diag(&[1.0]), c(f64::NAN, 0.0), &SolverConfig::default()).is_err());
    }

    #[test]
    fn os_solve_diagonal() {
        let r = os_solve(&diag(&[1.0, 2.0, 3.0]), c(1.1, 0.0), &SolverConfig::default()).unwrap();
        assert!((r.eigenvalue_estimate - c(1.0, 0.0)).norm() < 1e-12);
        assert!(r.iterations() <= 4);
    }

    #[test]
    fn os_step_singular_shift() {
        let a = diag(&[1.0, 2.0]);
        let v = DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(os_step(&a, &v, &v, c(1.0, 0.0)).unwrap(), OsStep::SingularShift));
        assert!(os_step(&a, &DVector::zeros(2), &v, c(0.5, 0.0)).is_err());
    }

    #[test]
    fn registry_selects_by_name() {
        let reg = SolverRegistry::standard();
        assert_eq!(reg.get("sdeig").unwrap().name(), "sdeig");
        assert_eq!(reg.get("os").unwrap().name(), "os");
        assert!(reg.get("newton").is_err());
    }
}
