//! Test-matrix generators, registered by name.
//!
//! A matrix is described by a [`GallerySpec`] whose text form is
//! `name(n,p1,...,pk)[@seed]`. For `diag` every argument is a diagonal entry
//! and the order is the argument count; for `normal_from_spectrum` the
//! arguments after `n` are `n` interleaved `re,im` eigenvalue pairs.
//!
//! Random generators use `ChaCha8Rng` (crate `rand_chacha` 0.9) seeded with
//! `seed_from_u64`, and draw `f64` values through `rand` 0.9's standard
//! uniform distribution, so a `(spec, seed)` pair maps to the same matrix on
//! every platform.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::kernel::{DenseMatrix, C64};

/// Name, order, parameters and optional seed of a gallery matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GallerySpec {
    pub name: String,
    pub n: usize,
    pub params: Vec<f64>,
    pub seed: Option<u64>,
}

impl GallerySpec {
    pub fn new(name: &str, n: usize, params: Vec<f64>, seed: Option<u64>) -> Self {
        Self { name: name.to_string(), n, params, seed }
    }

    pub fn build(&self) -> Result<DenseMatrix> {
        Gallery::standard().build(self)
    }
}

impl FromStr for GallerySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (body, seed) = match s.split_once('@') {
            Some((b, seed)) => {
                let seed = seed
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| Error::Parse(format!("bad seed {seed:?}: {e}")))?;
                (b.trim(), Some(seed))
            }
            None => (s, None),
        };
        let open = body
            .find('(')
            .ok_or_else(|| Error::Parse(format!("expected name(args) in {s:?}")))?;
        if !body.ends_with(')') {
            return Err(Error::Parse(format!("missing closing parenthesis in {s:?}")));
        }
        let name = body[..open].trim().to_string();
        if name.is_empty() {
            return Err(Error::Parse(format!("missing matrix name in {s:?}")));
        }
        let args: Vec<f64> = body[open + 1..body.len() - 1]
            .split(',')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(|a| a.parse::<f64>().map_err(|e| Error::Parse(format!("bad argument {a:?}: {e}"))))
            .collect::<Result<_>>()?;

        if name == "diag" {
            return Ok(Self { name, n: args.len(), params: args, seed });
        }
        let (&first, rest) = args
            .split_first()
            .ok_or_else(|| Error::Parse(format!("{name} needs the order as first argument")))?;
        if first < 1.0 || first.fract() != 0.0 {
            return Err(Error::Parse(format!("order must be a positive integer, got {first}")));
        }
        Ok(Self { name, n: first as usize, params: rest.to_vec(), seed })
    }
}

impl fmt::Display for GallerySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut args: Vec<String> = Vec::new();
        if self.name != "diag" {
            args.push(self.n.to_string());
        }
        args.extend(self.params.iter().map(|p| p.to_string()));
        write!(f, "{}({})", self.name, args.join(","))?;
        if let Some(seed) = self.seed {
            write!(f, "@{seed}")?;
        }
        Ok(())
    }
}

pub trait MatrixGenerator: Send + Sync {
    fn name(&self) -> &'static str;

    /// One-line usage string for help output.
    fn usage(&self) -> &'static str;

    fn generate(&self, spec: &GallerySpec) -> Result<DenseMatrix>;
}

/// Name → generator table.
pub struct Gallery {
    generators: BTreeMap<&'static str, Box<dyn MatrixGenerator>>,
}

impl Gallery {
    pub fn empty() -> Self {
        Self { generators: BTreeMap::new() }
    }

    pub fn standard() -> Self {
        let mut g = Self::empty();
        g.register(Box::new(Grcar));
        g.register(Box::new(Kahan));
        g.register(Box::new(Pentoep));
        g.register(Box::new(RandomDense));
        g.register(Box::new(NormalFromSpectrum));
        g.register(Box::new(Diag));
        g
    }

    pub fn register(&mut self, generator: Box<dyn MatrixGenerator>) {
        self.generators.insert(generator.name(), generator);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.generators.keys().copied()
    }

    pub fn get(&self, name: &str) -> Option<&dyn MatrixGenerator> {
        self.generators.get(name).map(|g| g.as_ref())
    }

    pub fn build(&self, spec: &GallerySpec) -> Result<DenseMatrix> {
        let generator = self.get(&spec.name).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            invalid(format!("unknown matrix {:?}; known: {}", spec.name, known.join(", ")))
        })?;
        generator.generate(spec)
    }
}

fn arity(spec: &GallerySpec, allowed: &[usize]) -> Result<()> {
    if allowed.contains(&spec.params.len()) {
        Ok(())
    } else {
        Err(invalid(format!(
            "{} takes {:?} parameters after the order, got {}",
            spec.name,
            allowed,
            spec.params.len()
        )))
    }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// −1 on the subdiagonal, +1 on the diagonal and the first `k` superdiagonals.
pub fn grcar(n: usize, k: usize) -> Result<DenseMatrix> {
    if n < 2 || k < 1 || k >= n {
        return Err(invalid(format!("grcar needs n >= 2 and 1 <= k < n, got n={n}, k={k}")));
    }
    DenseMatrix::from_fn(n, |i, j| {
        if i == j + 1 {
            real(-1.0)
        } else if j >= i && j - i <= k {
            real(1.0)
        } else {
            real(0.0)
        }
    })
}

/// Upper triangular with `sⁱ` on the diagonal and `−c·sⁱ` right of it (`s = sin θ`, `c = cos θ`).
pub fn kahan(n: usize, theta: f64) -> Result<DenseMatrix> {
    if n < 1 || !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2 + 1e-12) {
        return Err(invalid(format!("kahan needs n >= 1 and 0 < theta < pi/2, got n={n}, theta={theta}")));
    }
    let (s, c) = theta.sin_cos();
    DenseMatrix::from_fn(n, |i, j| {
        let si = s.powi(i as i32);
        match j.cmp(&i) {
            std::cmp::Ordering::Equal => real(si),
            std::cmp::Ordering::Greater => real(-c * si),
            std::cmp::Ordering::Less => real(0.0),
        }
    })
}

/// Pentadiagonal Toeplitz: `a` on the 2nd subdiagonal, `b` on the 1st, `c` on the
/// diagonal, `d` and `e` on the 1st and 2nd superdiagonals.
pub fn pentoep(n: usize, a: f64, b: f64, c: f64, d: f64, e: f64) -> Result<DenseMatrix> {
    if n < 1 {
        return Err(invalid("pentoep needs n >= 1"));
    }
    DenseMatrix::from_fn(n, |i, j| {
        let v = match j as isize - i as isize {
            -2 => a,
            -1 => b,
            0 => c,
            1 => d,
            2 => e,
            _ => 0.0,
        };
        real(v)
    })
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// i.i.d. uniform `[0, 1)` real entries, filled row by row.
pub fn random_dense(n: usize, seed: u64) -> Result<DenseMatrix> {
    if n < 1 {
        return Err(invalid("random_dense needs n >= 1"));
    }
    let mut rng = seeded_rng(seed);
    let entries: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
    DenseMatrix::from_real_rows(n, &entries)
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the phases of
/// `diag(R)` folded back into `Q`.
pub fn random_unitary(n: usize, seed: u64) -> DMatrix<C64> {
    let mut rng = seeded_rng(seed);
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { real(1.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// `Qᴴ·diag(eigs)·Q` for a seeded random unitary `Q`.
pub fn normal_from_spectrum(eigs: &[C64], seed: u64) -> Result<DenseMatrix> {
    if eigs.is_empty() {
        return Err(invalid("normal_from_spectrum needs at least one eigenvalue"));
    }
    let n = eigs.len();
    let q = random_unitary(n, seed);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(eigs));
    DenseMatrix::new(q.adjoint() * d * q)
}

struct Grcar;
impl MatrixGenerator for Grcar {
    fn name(&self) -> &'static str {
        "grcar"
    }
    fn usage(&self) -> &'static str {
        "grcar(n[,k=3])"
    }
    fn generate(&self, spec: &GallerySpec) -> Result<DenseMatrix> {
        arity(spec, &[0, 1])?;
        let k = spec.params.first().copied().unwrap_or(3.0);
        if k.fract() != 0.0 || k < 1.0 {
            return Err(invalid(format!("grcar k must be a positive integer, got {k}")));
        }
        grcar(spec.n, k as usize)
    }
}

struct Kahan;
impl MatrixGenerator for Kahan {
    fn name(&self) -> &'static str {
        "kahan"
    }
    fn usage(&self) -> &'static str {
        "kahan(n[,theta=1.2])"
    }
    fn generate(&self, spec: &GallerySpec) -> Result<DenseMatrix> {
        arity(spec, &[0, 1])?;
        kahan(spec.n, spec.params.first().copied().unwrap_or(1.2))
    }
}

struct Pentoep;
impl MatrixGenerator for Pentoep {
    fn name(&self) -> &'static str {
        "pentoep"
    }
    fn usage(&self) -> &'static str {
        "pentoep(n,a,b,c,d,e)"
    }
    fn generate(&self, spec: &GallerySpec) -> Result<DenseMatrix> {
        arity(spec, &[5])?;
        let p = &spec.params;
        pentoep(spec.n, p[0], p[1], p[2], p[3], p[4])
    }
}

struct RandomDense;
impl MatrixGenerator for RandomDense {
    fn name(&self) -> &'static str {
        "random_dense"
    }
    fn usage(&self) -> &'static str {
        "random_dense(n)@seed"
    }
    fn generate(&self, spec: &GallerySpec) -> Result<DenseMatrix> {
        arity(spec, &[0])?;
        random_dense(spec.n, spec.seed.unwrap_or(0))
    }
}

struct NormalFromSpectrum;
impl MatrixGenerator for NormalFromSpectrum {
    fn name(&self) -> &'static str {
        "normal_from_spectrum"
    }
    fn usage(&self) -> &'static str {
        "normal_from_spectrum(n,re1,im1,...,ren,imn)@seed"
    }
    fn generate(&self, spec: &GallerySpec) -> Result<DenseMatrix> {
        arity(spec, &[2 * spec.n])?;
        let eigs: Vec<C64> = spec.params.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
        normal_from_spectrum(&eigs, spec.seed.unwrap_or(0))
    }
}

struct Diag;
impl MatrixGenerator for Diag {
    fn name(&self) -> &'static str {
        "diag"
    }
    fn usage(&self) -> &'static str {
        "diag(d1,...,dn)"
    }
    fn generate(&self, spec: &GallerySpec) -> Result<DenseMatrix> {
        if spec.params.len() != spec.n {
            return Err(invalid("diag takes exactly its n diagonal entries"));
        }
        DenseMatrix::diagonal(&spec.params.iter().map(|&d| real(d)).collect::<Vec<_>>())
    }
}
