//! All eigenvalues of a normal matrix from one SVD of `zI − N`.
//!
//! For normal `N` each singular triplet `(σᵢ, uᵢ, vᵢ)` of `zI − N` pairs with an
//! eigenvalue through `λ = z − σᵢ·vᵢᴴuᵢ`. The map from triplets to eigenvalues
//! is a permutation, so the output is an unordered multiset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_finite, shift, svd_full, DenseMatrix, C64};

/// Commutator tolerance relative to `‖N‖²_F`.
pub const NORMALITY_TOL: f64 = 1e-10;
/// Singular values closer than this (relative to `σ₁`) to a neighbour are flagged.
pub const NEAR_TIE_REL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalEigResult {
    pub shift: C64,
    pub eigenvalues: Vec<C64>,
    /// `σᵢ` paired with `eigenvalues[i]`, descending.
    pub singular_values: Vec<f64>,
    /// Near-tied singular value: the subspace may be mixed and the value unreliable.
    pub flagged: Vec<bool>,
}

pub fn check_normal(n: &DenseMatrix) -> Result<()> {
    let f = n.frobenius_norm();
    let limit = NORMALITY_TOL * f * f;
    let commutator = n.commutator_norm();
    if commutator > limit {
        return Err(Error::NotNormal { commutator, limit });
    }
    Ok(())
}

pub fn eigs_via_svd(n: &DenseMatrix, z: C64) -> Result<NormalEigResult> {
    check_finite(z, "shift")?;
    check_normal(n)?;
    let svd = svd_full(&shift(n, z))?;
    let sv = svd.singular_values();
    let scale = sv[0].max(f64::MIN_POSITIVE);
    let tied = |i: usize, j: usize| (sv[i] - sv[j]).abs() <= NEAR_TIE_REL * scale;
    let k = sv.len();
    let flagged = (0..k).map(|i| (i > 0 && tied(i - 1, i)) || (i + 1 < k && tied(i, i + 1))).collect();
    let eigenvalues = svd.triplets.iter().map(|t| z - t.vhu() * t.sigma).collect();
    Ok(NormalEigResult { shift: z, eigenvalues, singular_values: sv, flagged })
}

/// Smallest achievable maximum deviation between two equal-size multisets
/// (bottleneck matching). Exhaustive over permutations for up to 8 points,
/// greedy nearest pairing beyond.
pub fn max_matching_deviation(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len(), "multisets must have equal size");
    let n = a.len();
    if n <= 8 {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let worst = (0..n).map(|i| (a[i] - b[p[i]]).norm()).fold(0.0, f64::max);
            best = best.min(worst);
        });
        return best;
    }
    let mut used = vec![false; n];
    let mut worst: f64 = 0.0;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("sizes match");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}
