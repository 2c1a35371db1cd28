//! Dense complex linear-algebra primitives.
//!
//! Everything here is a pure function of its inputs. The SVD and Schur
//! factorizations come from `nalgebra`; what this module adds is the
//! conventions the rest of the crate relies on: descending singular values,
//! a fixed singular-vector phase, and the minimum-triplet/gap pairing.

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

const SVD_MAX_ITER: usize = 10_000;
const SCHUR_MAX_ITER: usize = 10_000;

/// Square, finite, dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    data: DMatrix<C64>,
}

impl DenseMatrix {
    pub fn new(data: DMatrix<C64>) -> Result<Self> {
        if data.nrows() == 0 || data.nrows() != data.ncols() {
            return Err(invalid(format!(
                "matrix must be square and non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(invalid("matrix has non-finite entries"));
        }
        Ok(Self { data })
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        Self::new(DMatrix::from_fn(n, n, f))
    }

    /// Row-major real entries.
    pub fn from_real_rows(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(invalid(format!("expected {} entries, got {}", n * n, entries.len())));
        }
        Self::from_fn(n, |i, j| C64::new(entries[i * n + j], 0.0))
    }

    pub fn identity(n: usize) -> Self {
        Self { data: DMatrix::identity(n, n) }
    }

    pub fn diagonal(values: &[C64]) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("diagonal needs at least one entry"));
        }
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn order(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn adjoint(&self) -> Self {
        Self { data: self.data.adjoint() }
    }

    /// `A + c·I`.
    pub fn add_identity(&self, c: C64) -> Self {
        let mut data = self.data.clone();
        for i in 0..data.nrows() {
            data[(i, i)] += c;
        }
        Self { data }
    }

    /// `‖AᴴA − AAᴴ‖_F`.
    pub fn commutator_norm(&self) -> f64 {
        let ah = self.data.adjoint();
        (&ah * &self.data - &self.data * &ah).norm()
    }

    /// Hex SHA-256 over the order and the little-endian bytes of every entry (row-major).
    pub fn content_hash(&self) -> String {
        let n = self.order();
        let mut hasher = Sha256::new();
        hasher.update((n as u64).to_le_bytes());
        for i in 0..n {
            for j in 0..n {
                let c = self.data[(i, j)];
                hasher.update(c.re.to_le_bytes());
                hasher.update(c.im.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

pub(crate) fn check_finite(z: C64, what: &str) -> Result<()> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be finite, got {z}")))
    }
}

/// `zI − A`.
pub fn shift(a: &DenseMatrix, z: C64) -> DenseMatrix {
    let mut data = -a.data.clone();
    for i in 0..data.nrows() {
        data[(i, i)] += z;
    }
    DenseMatrix { data }
}

/// `(σ, u, v)` with `M·v = σ·u` and `Mᴴ·u = σ·v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularTriplet {
    pub sigma: f64,
    pub u: DVector<C64>,
    pub v: DVector<C64>,
}

impl SingularTriplet {
    /// `vᴴu`; for `M = zI − A` this is the gradient of `σ(x + iy)` written as `g_x + i·g_y`.
    pub fn vhu(&self) -> C64 {
        self.v.dotc(&self.u)
    }
}

/// Full SVD with triplets ordered `σ₁ ≥ … ≥ σₙ`.
#[derive(Clone, Debug)]
pub struct SvdDecomposition {
    pub triplets: Vec<SingularTriplet>,
}

impl SvdDecomposition {
    pub fn singular_values(&self) -> Vec<f64> {
        self.triplets.iter().map(|t| t.sigma).collect()
    }

    pub fn smallest(&self) -> &SingularTriplet {
        self.triplets.last().expect("decomposition of a non-empty matrix")
    }

    /// `UΣVᴴ`.
    pub fn reconstruct(&self) -> DMatrix<C64> {
        let n = self.triplets.len();
        let mut out = DMatrix::zeros(n, n);
        for t in &self.triplets {
            out += (&t.u * t.v.adjoint()) * C64::new(t.sigma, 0.0);
        }
        out
    }
}

/// Rotate `(u, v)` by a common unit phase so the largest-magnitude entry of `v`
/// (first index on ties) is real and positive.
fn fix_phase(u: &mut DVector<C64>, v: &mut DVector<C64>) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, c) in v.iter().enumerate() {
        let a = c.norm();
        if a > best_abs {
            best_abs = a;
            best = i;
        }
    }
    if best_abs <= 0.0 {
        return;
    }
    let phase = v[best].conj() / best_abs;
    *u *= phase;
    *v *= phase;
    v[best] = C64::new(v[best].re, 0.0);
}

fn svd_factor(m: &DenseMatrix, vectors: bool) -> Result<SVD<C64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(m.data.clone(), vectors, vectors, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::NumericFailure("SVD did not converge".into()))
}

pub fn svd_full(m: &DenseMatrix) -> Result<SvdDecomposition> {
    let svd = svd_factor(m, true)?;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let triplets = (0..m.order())
        .map(|k| {
            let mut uk = u.column(k).into_owned();
            let mut vk = vt.row(k).adjoint();
            fix_phase(&mut uk, &mut vk);
            SingularTriplet { sigma: svd.singular_values[k], u: uk, v: vk }
        })
        .collect();
    Ok(SvdDecomposition { triplets })
}

/// Singular values only, descending. Cheaper than [`svd_full`]; used by grid sweeps.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(svd_factor(m, false)?.singular_values.iter().copied().collect())
}

pub fn sigma_min(m: &DenseMatrix) -> Result<f64> {
    Ok(*singular_values(m)?.last().expect("non-empty"))
}

/// Smallest singular triplet of a matrix together with the data needed to judge its simplicity.
#[derive(Clone, Debug)]
pub struct MinTriplet {
    pub triplet: SingularTriplet,
    /// `σₙ₋₁ − σₙ`; infinite for 1×1 matrices.
    pub gap: f64,
    /// `σ₁`.
    pub sigma_max: f64,
}

impl MinTriplet {
    /// `(σₙ₋₁ − σₙ)/σ₁`; zero when `σ₁ = 0`.
    pub fn relative_gap(&self) -> f64 {
        if self.gap.is_infinite() {
            f64::INFINITY
        } else if self.sigma_max > 0.0 {
            self.gap / self.sigma_max
        } else {
            0.0
        }
    }

    pub fn is_degenerate(&self, gap_rel_min: f64) -> bool {
        self.relative_gap() < gap_rel_min
    }
}

pub fn min_triplet(m: &DenseMatrix) -> Result<MinTriplet> {
    let mut svd = svd_full(m)?;
    let n = svd.triplets.len();
    let sigma_max = svd.triplets[0].sigma;
    let gap = if n > 1 {
        svd.triplets[n - 2].sigma - svd.triplets[n - 1].sigma
    } else {
        f64::INFINITY
    };
    let triplet = svd.triplets.pop().expect("non-empty");
    Ok(MinTriplet { triplet, gap, sigma_max })
}

/// Ground-truth eigen-data used by tests and verification commands.
#[derive(Clone, Debug)]
pub struct EigenOracleResult {
    pub eigenvalues: Vec<C64>,
    pub right_vectors: Vec<DVector<C64>>,
    pub left_vectors: Vec<DVector<C64>>,
    /// `κᵢ = ‖yᵢ‖‖xᵢ‖/|yᵢᴴxᵢ|`.
    pub condition_numbers: Vec<f64>,
}

impl EigenOracleResult {
    /// Index of the eigenvalue closest to `z`.
    pub fn nearest(&self, z: C64) -> usize {
        let mut best = 0;
        for (i, l) in self.eigenvalues.iter().enumerate() {
            if (l - z).norm() < (self.eigenvalues[best] - z).norm() {
                best = i;
            }
        }
        best
    }

    pub fn distance_to_spectrum(&self, z: C64) -> f64 {
        self.eigenvalues.iter().map(|l| (l - z).norm()).fold(f64::INFINITY, f64::min)
    }
}

/// Eigenvalues, unit left/right eigenvectors and condition numbers from the complex Schur form.
///
/// Eigenvectors of the triangular factor are obtained by substitution; near-zero
/// pivots (repeated eigenvalues) are replaced by `ε·‖T‖` as in LAPACK's `ztrevc`.
pub fn eig_oracle(a: &DenseMatrix) -> Result<EigenOracleResult> {
    let n = a.order();
    let schur = Schur::try_new(a.data.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::NumericFailure("Schur decomposition did not converge".into()))?;
    let (q, t) = schur.unpack();
    let small = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE);
    let guard = |d: C64| if d.norm() < small { C64::new(small, 0.0) } else { d };

    let mut eigenvalues = Vec::with_capacity(n);
    let mut right_vectors = Vec::with_capacity(n);
    let mut left_vectors = Vec::with_capacity(n);
    let mut condition_numbers = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = t[(k, k)];

        // (T − λI)x = 0 with x_k = 1, x_j = 0 for j > k.
        let mut x = DVector::<C64>::zeros(n);
        x[k] = C64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for l in j + 1..=k {
                s += t[(j, l)] * x[l];
            }
            x[j] = -s / guard(t[(j, j)] - lambda);
        }

        // yᴴ(T − λI) = 0 with y_k = 1, y_j = 0 for j < k.
        let mut y = DVector::<C64>::zeros(n);
        y[k] = C64::new(1.0, 0.0);
        for j in k + 1..n {
            let mut s = C64::new(0.0, 0.0);
            for l in k..j {
                s += t[(l, j)].conj() * y[l];
            }
            y[j] = -s / guard(t[(j, j)] - lambda).conj();
        }

        let mut x = &q * x;
        let mut y = &q * y;
        x /= C64::new(x.norm(), 0.0);
        y /= C64::new(y.norm(), 0.0);
        let overlap = y.dotc(&x).norm();
        let kappa = if overlap > 0.0 { (1.0 / overlap).max(1.0) } else { f64::INFINITY };

        eigenvalues.push(lambda);
        right_vectors.push(x);
        left_vectors.push(y);
        condition_numbers.push(kappa);
    }
    Ok(EigenOracleResult { eigenvalues, right_vectors, left_vectors, condition_numbers })
}
