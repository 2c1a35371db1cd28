//! Eigenvalue-free disks harvested from `σ_min` evaluations.
//!
//! A safe disk `D°(z, σ_min(z) − ε)` never meets `Λ_ε(A)`. A heuristic disk of
//! radius `σ_min·pss` usually misses the spectrum but can fail between
//! eigenvalues; heuristic disks are kept as data and are never used to steer a
//! solve.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::GridSpec;
use crate::kernel::{check_finite, shift, sigma_min, DenseMatrix, C64};
use crate::solver::{pss_at, SolveResult, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiskKind {
    Safe,
    Heuristic,
}

impl fmt::Display for DiskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiskKind::Safe => "safe",
            DiskKind::Heuristic => "heuristic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiskSource {
    Iterate(usize),
    Grid,
    Point,
}

impl fmt::Display for DiskSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiskSource::Iterate(k) => write!(f, "{k}"),
            DiskSource::Grid => f.write_str("grid"),
            DiskSource::Point => f.write_str("point"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusionDisk {
    pub center: C64,
    pub radius: f64,
    pub kind: DiskKind,
    pub epsilon: f64,
    pub source: DiskSource,
}

impl ExclusionDisk {
    /// Strict interior test.
    pub fn contains(&self, p: C64) -> bool {
        (p - self.center).norm() < self.radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusionSet {
    pub matrix_id: String,
    pub disks: Vec<ExclusionDisk>,
}

impl ExclusionSet {
    pub fn new(matrix_id: impl Into<String>) -> Self {
        Self { matrix_id: matrix_id.into(), disks: Vec::new() }
    }

    pub fn push(&mut self, disk: ExclusionDisk) {
        self.disks.push(disk);
    }

    /// Append all disks of `other`; both sets must describe the same matrix.
    pub fn extend_from(&mut self, other: &ExclusionSet) -> Result<()> {
        if other.matrix_id != self.matrix_id {
            return Err(invalid("exclusion sets belong to different matrices"));
        }
        self.disks.extend(other.disks.iter().cloned());
        Ok(())
    }

    pub fn safe(&self) -> impl Iterator<Item = &ExclusionDisk> {
        self.disks.iter().filter(|d| d.kind == DiskKind::Safe)
    }
}

/// `p` strictly inside any disk of the set.
pub fn covers(set: &ExclusionSet, p: C64) -> bool {
    set.disks.iter().any(|d| d.contains(p))
}

/// Only safe disks count.
pub fn covers_safely(set: &ExclusionSet, p: C64) -> bool {
    set.safe().any(|d| d.contains(p))
}

pub fn from_trace(result: &SolveResult) -> ExclusionSet {
    ExclusionSet { matrix_id: result.matrix_id.clone(), disks: result.disks.clone() }
}

/// `D°(z, σ_min(z) − ε)`.
pub fn safe_disk(a: &DenseMatrix, z: C64, epsilon: f64) -> Result<ExclusionDisk> {
    check_finite(z, "z")?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon must be finite and nonnegative"));
    }
    let sigma = sigma_min(&shift(a, z))?;
    if sigma <= epsilon {
        return Err(Error::InsidePseudospectrum { z, sigma, epsilon });
    }
    Ok(ExclusionDisk { center: z, radius: sigma - epsilon, kind: DiskKind::Safe, epsilon, source: DiskSource::Point })
}

/// `D°(z, σ_min(z)·min(pss(z), pss_cap))`.
pub fn heuristic_disk(a: &DenseMatrix, z: C64, cfg: &SolverConfig) -> Result<ExclusionDisk> {
    let p = pss_at(a, z, cfg.gap_rel_min)?;
    if p.degenerate {
        return Err(Error::DegeneratePoint { z, rel_gap: p.relative_gap() });
    }
    let sigma = p.triplet.sigma;
    if sigma <= 0.0 {
        return Err(Error::InsidePseudospectrum { z, sigma, epsilon: 0.0 });
    }
    Ok(ExclusionDisk {
        center: z,
        radius: sigma * p.pss.min(cfg.pss_cap),
        kind: DiskKind::Heuristic,
        epsilon: 0.0,
        source: DiskSource::Point,
    })
}

/// Result of checking heuristic disks on a grid against known eigenvalues.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ViolationSurvey {
    pub evaluated: usize,
    pub skipped: usize,
    pub violations: usize,
    pub disks: Vec<ExclusionDisk>,
    /// Parallel to `disks`: whether that disk contains an eigenvalue.
    pub violated: Vec<bool>,
}

impl ViolationSurvey {
    pub fn rate(&self) -> f64 {
        if self.evaluated == 0 {
            0.0
        } else {
            self.violations as f64 / self.evaluated as f64
        }
    }
}

/// Build a heuristic disk at every grid node and count those containing an entry of `eigenvalues`.
/// Degenerate nodes and nodes with zero `σ_min` are skipped.
pub fn heuristic_violation_survey(
    a: &DenseMatrix,
    grid: &GridSpec,
    eigenvalues: &[C64],
    cfg: &SolverConfig,
) -> Result<ViolationSurvey> {
    use rayon::prelude::*;
    grid.validate()?;
    let nodes: Vec<C64> = grid.nodes().collect();
    let results: Vec<Result<Option<ExclusionDisk>>> = nodes
        .par_iter()
        .map(|&z| match heuristic_disk(a, z, cfg) {
            Ok(mut d) => {
                d.source = DiskSource::Grid;
                Ok(Some(d))
            }
            Err(Error::DegeneratePoint { .. }) | Err(Error::InsidePseudospectrum { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut survey = ViolationSurvey { evaluated: 0, skipped: 0, violations: 0, disks: Vec::new(), violated: Vec::new() };
    for r in results {
        match r? {
            Some(d) => {
                let bad = eigenvalues.iter().any(|&l| d.contains(l));
                survey.evaluated += 1;
                survey.violations += usize::from(bad);
                survey.disks.push(d);
                survey.violated.push(bad);
            }
            None => survey.skipped += 1,
        }
    }
    Ok(survey)
}
