//! Random convex quadratic problem class.
//!
//! An instance is `f(x) = ½ xᵀA x − bᵀx + c` with `A` symmetric positive
//! definite of prescribed condition number and `c = ½ bᵀA⁻¹b`, so the minimum
//! value is exactly zero at the solution of `A x = b`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Rng};
use crate::{Error, Result};

const FORMAT_TAG: &str = "sus-problem-set";
const FORMAT_VERSION: u32 = 1;

/// Distribution of the condition number over a problem class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KappaSpec {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
}

impl KappaSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            KappaSpec::Fixed(k) => k >= 1.0 && k.is_finite(),
            KappaSpec::Uniform { lo, hi } => lo >= 1.0 && lo <= hi && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "condition number spec must satisfy 1 <= lo <= hi: {self:?}"
            )))
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            KappaSpec::Fixed(k) => k,
            KappaSpec::Uniform { lo, hi } if lo == hi => lo,
            KappaSpec::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetRole {
    Training,
    Test,
}

impl SetRole {
    fn stream(self) -> u64 {
        match self {
            SetRole::Training => rng::stream::TRAIN_SET,
            SetRole::Test => rng::stream::TEST_SET,
        }
    }
}

/// One instance of the quadratic problem class.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
    x_star: DVector<f64>,
    lambda_min: f64,
    lambda_max: f64,
    x1: DVector<f64>,
}

/// Random SPD matrix `Q diag(λ) Qᵀ` with `λ` log-uniformly spaced on `[1, kappa]`.
///
/// `Q` is the orthogonal factor of the QR decomposition of a standard normal
/// matrix. For `d = 1` the only attainable condition number is 1 and the
/// result is `[[1]]`.
pub fn make_spd_matrix(d: usize, kappa: f64, rng: &mut Rng) -> Result<DMatrix<f64>> {
    if d < 1 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "condition number must be >= 1, got {kappa}"
        )));
    }
    let eigenvalues = log_spaced_spectrum(d, kappa);
    let gaussian = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let q = gaussian.qr().q();
    let scaled = &q * DMatrix::from_diagonal(&DVector::from_vec(eigenvalues));
    let a = scaled * q.transpose();
    // exact symmetry
    Ok((&a + a.transpose()) * 0.5)
}

fn log_spaced_spectrum(d: usize, kappa: f64) -> Vec<f64> {
    if d == 1 {
        return vec![1.0];
    }
    let log_kappa = kappa.ln();
    (0..d)
        .map(|i| match i {
            0 => 1.0,
            i if i == d - 1 => kappa,
            i => (log_kappa * i as f64 / (d - 1) as f64).exp(),
        })
        .collect()
}

/// Draw one instance: `κ` from `spec`, `b` and `x1` i.i.d. standard normal.
pub fn make_problem(d: usize, kappa_spec: &KappaSpec, rng: &mut Rng) -> Result<QuadraticProblem> {
    kappa_spec.validate()?;
    let kappa = kappa_spec.sample(rng);
    let a = make_spd_matrix(d, kappa, rng)?;
    let b = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
    let x1 = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
    let (lambda_min, lambda_max) = if d == 1 { (1.0, 1.0) } else { (1.0, kappa) };
    QuadraticProblem::with_spectrum(a, b, x1, lambda_min, lambda_max)
}

impl QuadraticProblem {
    /// Build an instance from explicit data; the spectrum is measured.
    pub fn from_parts(a: DMatrix<f64>, b: DVector<f64>, x1: DVector<f64>) -> Result<Self> {
        check_square_symmetric(&a)?;
        let eig = a.clone().symmetric_eigen();
        let lambda_min = eig.eigenvalues.min();
        let lambda_max = eig.eigenvalues.max();
        if lambda_min <= 0.0 {
            return Err(Error::Generation(format!(
                "matrix is not positive definite (lambda_min = {lambda_min})"
            )));
        }
        Self::with_spectrum(a, b, x1, lambda_min, lambda_max)
    }

    fn with_spectrum(
        a: DMatrix<f64>,
        b: DVector<f64>,
        x1: DVector<f64>,
        lambda_min: f64,
        lambda_max: f64,
    ) -> Result<Self> {
        let d = a.nrows();
        for v in [&b, &x1] {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: v.len(),
                });
            }
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Generation("Cholesky factorization failed".into()))?;
        let mut x_star = chol.solve(&b);
        // one refinement step recovers the last bits lost in the factorization
        let residual = &b - &a * &x_star;
        x_star += chol.solve(&residual);
        let c = 0.5 * b.dot(&x_star);
        Ok(QuadraticProblem {
            a,
            b,
            c,
            x_star,
            lambda_min,
            lambda_max,
            x1,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn x1(&self) -> &DVector<f64> {
        &self.x1
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// Largest eigenvalue, i.e. the Lipschitz constant of the gradient.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn kappa(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            })
        }
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        let ax = &self.a * x;
        Ok(0.5 * x.dot(&ax) - self.b.dot(x) + self.c)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(&self.a * x - &self.b)
    }

    /// Objective and gradient from a single matrix-vector product.
    pub fn value_and_gradient(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check_dim(x)?;
        let ax = &self.a * x;
        let value = 0.5 * x.dot(&ax) - self.b.dot(x) + self.c;
        Ok((value, ax - &self.b))
    }
}

fn check_square_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::InvalidArgument(format!(
            "matrix must be square and non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.amax();
    let asym = (a - a.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// A set of instances drawn from one problem class.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSet {
    pub instances: Vec<QuadraticProblem>,
    pub dim: usize,
    pub kappa_spec: KappaSpec,
    pub seed: u64,
    pub role: SetRole,
}

/// Draw `n` independent instances. Training and test sets use separate
/// random streams of the same seed, so they never share instances.
pub fn sample_problem_set(
    d: usize,
    kappa_spec: KappaSpec,
    n: usize,
    seed: u64,
    role: SetRole,
) -> Result<ProblemSet> {
    if n < 1 {
        return Err(Error::InvalidArgument("problem set needs at least one instance".into()));
    }
    kappa_spec.validate()?;
    let mut rng = rng::stream_rng(seed, role.stream());
    let instances = (0..n)
        .map(|_| make_problem(d, &kappa_spec, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProblemSet {
        instances,
        dim: d,
        kappa_spec,
        seed,
        role,
    })
}

impl ProblemSet {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ProblemSetFile::from(self))?)
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let file: ProblemSetFile = serde_json::from_str(text)?;
        file.into_set(origin)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

// On-disk layout. `a` is row-major; floats are written in shortest
// round-trip decimal form, so every value reloads bit-exactly.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSetFile {
    format: String,
    version: u32,
    dim: usize,
    count: usize,
    seed: u64,
    kappa_spec: KappaSpec,
    role: SetRole,
    instances: Vec<ProblemRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemRecord {
    kappa: f64,
    lambda_min: f64,
    lambda_max: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
    x_star: Vec<f64>,
    x1: Vec<f64>,
}

impl From<&ProblemSet> for ProblemSetFile {
    fn from(set: &ProblemSet) -> Self {
        let instances = set
            .instances
            .iter()
            .map(|p| ProblemRecord {
                kappa: p.kappa(),
                lambda_min: p.lambda_min,
                lambda_max: p.lambda_max,
                // nalgebra is column-major; the transpose's storage is A row-major
                a: p.a.transpose().as_slice().to_vec(),
                b: p.b.as_slice().to_vec(),
                c: p.c,
                x_star: p.x_star.as_slice().to_vec(),
                x1: p.x1.as_slice().to_vec(),
            })
            .collect();
        ProblemSetFile {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            dim: set.dim,
            count: set.instances.len(),
            seed: set.seed,
            kappa_spec: set.kappa_spec,
            role: set.role,
            instances,
        }
    }
}

impl ProblemSetFile {
    fn into_set(self, origin: &Path) -> Result<ProblemSet> {
        let bad = |reason: String| Error::Format {
            path: origin.to_path_buf(),
            reason,
        };
        if self.format != FORMAT_TAG {
            return Err(bad(format!("expected format tag {FORMAT_TAG:?}, found {:?}", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {}", self.version)));
        }
        if self.count != self.instances.len() {
            return Err(bad(format!(
                "header count {} does not match {} stored instances",
                self.count,
                self.instances.len()
            )));
        }
        let d = self.dim;
        let instances = self
            .instances
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                if r.a.len() != d * d || r.b.len() != d || r.x_star.len() != d || r.x1.len() != d {
                    return Err(bad(format!("instance {i} has inconsistent lengths for d = {d}")));
                }
                Ok(QuadraticProblem {
                    a: DMatrix::from_row_slice(d, d, &r.a),
                    b: DVector::from_vec(r.b),
                    c: r.c,
                    x_star: DVector::from_vec(r.x_star),
                    lambda_min: r.lambda_min,
                    lambda_max: r.lambda_max,
                    x1: DVector::from_vec(r.x1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProblemSet {
            instances,
            dim: d,
            kappa_spec: self.kappa_spec,
            seed: self.seed,
            role: self.role,
        })
    }
}
