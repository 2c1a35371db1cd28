//! Grid sweeps of `z ↦ σ_min(zI − A)`, `pss(z)` and the determinant of the
//! Hessian of `σ_min`, plus pseudospectrum-area curves.
//!
//! Node `(i, j)` sits at `x_min + i·dx, y_min + j·dy`; values are stored
//! row-major with `j` (the imaginary axis) as the row index. Every node is an
//! independent pure evaluation, so sweeps run on the rayon pool and produce
//! the same output regardless of scheduling.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{check_finite, shift, singular_values, svd_full, DenseMatrix, C64};
use crate::solver::pss_at;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        let g = Self { x_min, x_max, y_min, y_max, nx, ny };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(invalid(format!("bad grid bounds {self:?}")));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(invalid("grid needs at least 2 nodes per axis"));
        }
        Ok(())
    }

    /// Box around the union of row Gershgorin disks, widened by `pad_abs` plus
    /// `pad_frac` of its larger side on every edge.
    pub fn gershgorin(a: &DenseMatrix, pad_abs: f64, pad_frac: f64, nx: usize, ny: usize) -> Result<Self> {
        let n = a.order();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let c = a.get(i, i);
            let r: f64 = (0..n).filter(|&j| j != i).map(|j| a.get(i, j).norm()).sum();
            x0 = x0.min(c.re - r);
            x1 = x1.max(c.re + r);
            y0 = y0.min(c.im - r);
            y1 = y1.max(c.im + r);
        }
        let side = (x1 - x0).max(y1 - y0).max(f64::EPSILON);
        let pad = pad_abs + pad_frac * side;
        // A single point disk still needs a box.
        let pad = if pad > 0.0 { pad } else { 1.0 };
        Self::new(x0 - pad, x1 + pad, y0 - pad, y1 + pad, nx, ny)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn node(&self, i: usize, j: usize) -> C64 {
        C64::new(self.x_min + i as f64 * self.dx(), self.y_min + j as f64 * self.dy())
    }

    /// Row-major node iterator.
    pub fn nodes(&self) -> impl Iterator<Item = C64> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| self.node(i, j)))
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    SigmaMin,
    Pss,
    /// `|v_minᴴu_min| = 1/pss`, the form that obeys the maximum principle.
    InvPss,
    HessianDet,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::SigmaMin => "sigma_min",
            Quantity::Pss => "pss",
            Quantity::InvPss => "inv_pss",
            Quantity::HessianDet => "hessian_det",
        })
    }
}

impl FromStr for Quantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma_min" => Ok(Quantity::SigmaMin),
            "pss" => Ok(Quantity::Pss),
            "inv_pss" => Ok(Quantity::InvPss),
            "hessian_det" => Ok(Quantity::HessianDet),
            _ => Err(Error::Parse(format!("unknown quantity {s:?} (sigma_min, pss, inv_pss, hessian_det)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub quantity: Quantity,
    pub values: Vec<f64>,
    pub degenerate_mask: Vec<bool>,
}

impl ScalarField {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn masked(&self, i: usize, j: usize) -> bool {
        self.degenerate_mask[self.grid.index(i, j)]
    }

    pub fn unmasked_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.degenerate_mask).filter(|(_, &m)| !m).map(|(&v, _)| v)
    }
}

fn relative_gap(sv: &[f64]) -> f64 {
    let n = sv.len();
    if n < 2 {
        return f64::INFINITY;
    }
    if sv[0] > 0.0 {
        (sv[n - 2] - sv[n - 1]) / sv[0]
    } else {
        0.0
    }
}

fn eval_node(a: &DenseMatrix, z: C64, quantity: Quantity, gap_rel_min: f64) -> Result<(f64, bool)> {
    match quantity {
        Quantity::SigmaMin => {
            let sv = singular_values(&shift(a, z))?;
            Ok((*sv.last().expect("non-empty"), relative_gap(&sv) < gap_rel_min))
        }
        Quantity::Pss | Quantity::InvPss => {
            let p = pss_at(a, z, gap_rel_min)?;
            let masked = p.degenerate || !p.pss.is_finite();
            let v = if quantity == Quantity::Pss { p.pss } else { 1.0 / p.pss };
            Ok((if masked { f64::NAN } else { v }, masked))
        }
        Quantity::HessianDet => match hessian_at(a, z, gap_rel_min) {
            Ok(h) => Ok((h.determinant(), false)),
            Err(Error::DegeneratePoint { .. }) | Err(Error::AtEigenvalue { .. }) => Ok((f64::NAN, true)),
            Err(e) => Err(e),
        },
    }
}

/// Evaluate `quantity` at every node. Degenerate nodes are masked (value `NaN`
/// for `pss`, `inv_pss` and `hessian_det`; `sigma_min` keeps its value).
pub fn eval_field(a: &DenseMatrix, grid: &GridSpec, quantity: Quantity, gap_rel_min: f64) -> Result<ScalarField> {
    grid.validate()?;
    let nodes: Vec<C64> = grid.nodes().collect();
    let evaluated: Vec<(f64, bool)> = nodes
        .par_iter()
        .map(|&z| eval_node(a, z, quantity, gap_rel_min))
        .collect::<Result<_>>()?;
    let (values, degenerate_mask) = evaluated.into_iter().unzip();
    Ok(ScalarField { grid: grid.clone(), quantity, values, degenerate_mask })
}

/// Second-order data of `σ_min` at one point.
///
/// With `zI − A = UΣVᴴ`, `σ = σₙ`, `Ũ`, `Ṽ`, `Σ̃` the leading `n − 1` columns and values:
/// `Φ = σ(σ²I − Σ̃²)⁻¹`, `Ψ = Σ̃(σ²I − Σ̃²)⁻¹`, `r = Ũᴴvₙ`, `l = Ṽᴴuₙ`, `c = uₙᴴvₙ`, and
///
/// ```text
/// g_xx = Re{rᴴΦr + lᴴΦl + 2lᴴΨr} + Im{c}²/σ
/// g_xy = −Im{2lᴴΨr} + Im{c}·Re{c}/σ
/// g_yy = Re{rᴴΦr + lᴴΦl − 2lᴴΨr} + Re{c}²/σ
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct HessianWorkspace {
    pub sigma: f64,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub r: Vec<C64>,
    pub l: Vec<C64>,
    pub g_xx: f64,
    pub g_xy: f64,
    pub g_yy: f64,
}

impl HessianWorkspace {
    pub fn determinant(&self) -> f64 {
        self.g_xx * self.g_yy - self.g_xy * self.g_xy
    }

    pub fn trace(&self) -> f64 {
        self.g_xx + self.g_yy
    }
}

pub fn hessian_at(a: &DenseMatrix, z: C64, gap_rel_min: f64) -> Result<HessianWorkspace> {
    check_finite(z, "z")?;
    let svd = svd_full(&shift(a, z))?;
    let n = svd.triplets.len();
    let last = svd.smallest();
    let sigma = last.sigma;
    if sigma == 0.0 || sigma <= 1e-15 * a.frobenius_norm() {
        return Err(Error::AtEigenvalue { z, sigma });
    }
    let rel_gap = relative_gap(&svd.singular_values());
    if rel_gap < gap_rel_min {
        return Err(Error::DegeneratePoint { z, rel_gap });
    }

    let mut phi = Vec::with_capacity(n - 1);
    let mut psi = Vec::with_capacity(n - 1);
    let mut r = Vec::with_capacity(n - 1);
    let mut l = Vec::with_capacity(n - 1);
    let mut quad = 0.0; // rᴴΦr + lᴴΦl
    let mut cross = C64::new(0.0, 0.0); // lᴴΨr
    for t in &svd.triplets[..n - 1] {
        let denom = sigma * sigma - t.sigma * t.sigma;
        let (ph, ps) = (sigma / denom, t.sigma / denom);
        let rj = t.u.dotc(&last.v);
        let lj = t.v.dotc(&last.u);
        quad += ph * (rj.norm_sqr() + lj.norm_sqr());
        cross += lj.conj() * rj * ps;
        phi.push(ph);
        psi.push(ps);
        r.push(rj);
        l.push(lj);
    }
    let c = last.u.dotc(&last.v);
    let g_xx = quad + 2.0 * cross.re + c.im * c.im / sigma;
    let g_xy = -2.0 * cross.im + c.im * c.re / sigma;
    let g_yy = quad - 2.0 * cross.re + c.re * c.re / sigma;
    Ok(HessianWorkspace { sigma, phi, psi, r, l, g_xx, g_xy, g_yy })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaCurve {
    pub grid: GridSpec,
    pub epsilons: Vec<f64>,
    /// Node counts with `σ_min ≤ ε`.
    pub counts: Vec<usize>,
    /// `count · cell_area`.
    pub areas: Vec<f64>,
    /// Some boundary node has `σ_min ≤ max ε`: the grid does not contain `Λ_ε`.
    pub grid_too_small: bool,
}

fn check_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.is_empty() {
        return Err(invalid("need at least one epsilon"));
    }
    if epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(invalid("epsilons must be positive and finite"));
    }
    if epsilons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("epsilons must be strictly increasing"));
    }
    Ok(())
}

/// Area curve from an already evaluated `sigma_min` field.
pub fn area_curve_from_field(sigma: &ScalarField, epsilons: &[f64]) -> Result<AreaCurve> {
    if sigma.quantity != Quantity::SigmaMin {
        return Err(invalid("area curves need a sigma_min field"));
    }
    check_epsilons(epsilons)?;
    let mut sorted = sigma.values.clone();
    sorted.sort_by(f64::total_cmp);
    let counts: Vec<usize> = epsilons.iter().map(|&e| sorted.partition_point(|&s| s <= e)).collect();
    let cell = sigma.grid.cell_area();
    let areas = counts.iter().map(|&c| c as f64 * cell).collect();
    let max_eps = *epsilons.last().expect("non-empty");
    let g = &sigma.grid;
    let grid_too_small = (0..g.ny)
        .flat_map(|j| (0..g.nx).map(move |i| (i, j)))
        .any(|(i, j)| g.is_boundary(i, j) && sigma.value(i, j) <= max_eps);
    Ok(AreaCurve { grid: g.clone(), epsilons: epsilons.to_vec(), counts, areas, grid_too_small })
}

pub fn area_curve(a: &DenseMatrix, grid: &GridSpec, epsilons: &[f64]) -> Result<AreaCurve> {
    check_epsilons(epsilons)?;
    let sigma = eval_field(a, grid, Quantity::SigmaMin, 0.0)?;
    area_curve_from_field(&sigma, epsilons)
}

/// Central difference `(area(ε + δ) − area(ε − δ))/(2δ)` by node counting.
pub fn area_derivative(sigma: &ScalarField, epsilon: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < epsilon) {
        return Err(invalid("need 0 < delta < epsilon"));
    }
    let c = area_curve_from_field(sigma, &[epsilon - delta, epsilon + delta])?;
    Ok((c.areas[1] - c.areas[0]) / (2.0 * delta))
}

/// Estimate of `∫_{σ_min = level} pss ds`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetIntegral {
    pub level: f64,
    pub length: f64,
    pub integral: f64,
    pub segments: usize,
    /// Segments whose midpoint was degenerate (skipped from the integral).
    pub skipped: usize,
}

/// Marching-squares trace of the `σ_min = level` curve on the field's grid, with
/// linear interpolation along cell edges; `pss` is evaluated exactly at every
/// segment midpoint.
pub fn level_set_pss_integral(a: &DenseMatrix, sigma: &ScalarField, level: f64, gap_rel_min: f64) -> Result<LevelSetIntegral> {
    if sigma.quantity != Quantity::SigmaMin {
        return Err(invalid("level sets need a sigma_min field"));
    }
    let g = &sigma.grid;
    let mut segments: Vec<(C64, C64)> = Vec::new();
    for j in 0..g.ny - 1 {
        for i in 0..g.nx - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let f: Vec<f64> = corners.iter().map(|&(ci, cj)| sigma.value(ci, cj) - level).collect();
            let pts: Vec<C64> = corners.iter().map(|&(ci, cj)| g.node(ci, cj)).collect();
            // Edges: bottom 0-1, right 1-2, top 3-2, left 0-3.
            let edges = [(0, 1), (1, 2), (3, 2), (0, 3)];
            let crossing = |e: usize| -> Option<C64> {
                let (p, q) = edges[e];
                if (f[p] > 0.0) != (f[q] > 0.0) {
                    let t = f[p] / (f[p] - f[q]);
                    Some(pts[p] + (pts[q] - pts[p]) * t)
                } else {
                    None
                }
            };
            let hits: Vec<(usize, C64)> = (0..4).filter_map(|e| crossing(e).map(|p| (e, p))).collect();
            match hits.len() {
                2 => segments.push((hits[0].1, hits[1].1)),
                4 => {
                    let p: Vec<C64> = hits.iter().map(|h| h.1).collect();
                    let centre_positive = f.iter().sum::<f64>() > 0.0;
                    let corner0_positive = f[0] > 0.0;
                    if centre_positive == corner0_positive {
                        // Corners 0 and 2 joined through the centre: cut off corners 1 and 3.
                        segments.push((p[0], p[1]));
                        segments.push((p[2], p[3]));
                    } else {
                        segments.push((p[0], p[3]));
                        segments.push((p[1], p[2]));
                    }
                }
                _ => {}
            }
        }
    }
    let evaluated: Vec<Result<(f64, Option<f64>)>> = segments
        .par_iter()
        .map(|&(p, q)| {
            let len = (q - p).norm();
            let mid = (p + q) * 0.5;
            let v = pss_at(a, mid, gap_rel_min)?;
            Ok((len, (!v.degenerate && v.pss.is_finite()).then_some(v.pss)))
        })
        .collect();
    let mut out = LevelSetIntegral { level, length: 0.0, integral: 0.0, segments: segments.len(), skipped: 0 };
    for e in evaluated {
        let (len, pss) = e?;
        out.length += len;
        match pss {
            Some(p) => out.integral += len * p,
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximumPrincipleViolation {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    pub boundary_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximumPrincipleReport {
    pub components: usize,
    pub interior_nodes: usize,
    pub violations: Vec<MaximumPrincipleViolation>,
}

/// Split the unmasked nodes into 4-connected components. A component's boundary
/// is its nodes on the grid edge or next to a masked node; every other node is
/// interior and must not exceed the boundary maximum by more than `rel_tol`
/// (relative).
pub fn maximum_principle_check(field: &ScalarField, rel_tol: f64) -> MaximumPrincipleReport {
    let g = &field.grid;
    let usable = |i: usize, j: usize| !field.masked(i, j) && field.value(i, j).is_finite();
    let mut label = vec![usize::MAX; g.len()];
    let mut report = MaximumPrincipleReport { components: 0, interior_nodes: 0, violations: Vec::new() };
    let neighbours = |i: usize, j: usize| {
        let mut v = Vec::with_capacity(4);
        if i > 0 {
            v.push((i - 1, j));
        }
        if i + 1 < g.nx {
            v.push((i + 1, j));
        }
        if j > 0 {
            v.push((i, j - 1));
        }
        if j + 1 < g.ny {
            v.push((i, j + 1));
        }
        v
    };
    for j0 in 0..g.ny {
        for i0 in 0..g.nx {
            if !usable(i0, j0) || label[g.index(i0, j0)] != usize::MAX {
                continue;
            }
            let id = report.components;
            report.components += 1;
            let mut members = Vec::new();
            let mut queue = VecDeque::from([(i0, j0)]);
            label[g.index(i0, j0)] = id;
            while let Some((i, j)) = queue.pop_front() {
                members.push((i, j));
                for (ni, nj) in neighbours(i, j) {
                    if usable(ni, nj) && label[g.index(ni, nj)] == usize::MAX {
                        label[g.index(ni, nj)] = id;
                        queue.push_back((ni, nj));
                    }
                }
            }
            let on_boundary =
                |i: usize, j: usize| g.is_boundary(i, j) || neighbours(i, j).iter().any(|&(a, b)| !usable(a, b));
            let boundary_max = members
                .iter()
                .filter(|&&(i, j)| on_boundary(i, j))
                .map(|&(i, j)| field.value(i, j))
                .fold(f64::NEG_INFINITY, f64::max);
            for &(i, j) in members.iter().filter(|&&(i, j)| !on_boundary(i, j)) {
                report.interior_nodes += 1;
                let v = field.value(i, j);
                if v > boundary_max + rel_tol * boundary_max.abs() {
                    report.violations.push(MaximumPrincipleViolation { i, j, value: v, boundary_max });
                }
            }
        }
    }
    report
}
