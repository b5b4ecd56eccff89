//! Nelder-Mead simplex minimization.

/// Stopping rule and initial simplex of [`nelder_mead`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Stop once every vertex is within this max-norm distance of the best one.
    pub x_tol: f64,
    /// Relative size of the initial simplex edges.
    pub initial_step: f64,
    /// Edge length used for coordinates that are exactly zero.
    pub zero_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iters: 500,
            x_tol: 1e-6,
            initial_step: 0.1,
            zero_step: 0.00025,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const REFLECTION: f64 = 1.0;
const EXPANSION: f64 = 2.0;
const CONTRACTION: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimize `f` starting from `x0`.
///
/// The starting point is a vertex of the initial simplex and the best vertex
/// never gets worse, so for a deterministic `f` the result is never worse
/// than `f(x0)`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    if opts.max_iters == 0 || n == 0 {
        let value = eval(x0);
        return NelderMeadResult {
            x: x0.to_vec(),
            value,
            iterations: 0,
            evaluations,
            converged: false,
        };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if v[i] == 0.0 { opts.zero_step } else { opts.initial_step * v[i] };
        let fv = eval(&v);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        // stable sort keeps the older vertex first on ties
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if spread(&simplex) < opts.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let f_best = simplex[0].1;
        let f_second = simplex[n - 1].1;
        let f_worst = simplex[n].1;

        let xr = affine(&centroid, &worst, -REFLECTION);
        let fr = eval(&xr);
        if fr < f_best {
            let xe = affine(&centroid, &xr, EXPANSION);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < f_second {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc, accept) = if fr < f_worst {
                let xc = affine(&centroid, &xr, CONTRACTION);
                let fc = eval(&xc);
                let ok = fc <= fr;
                (xc, fc, ok)
            } else {
                let xc = affine(&centroid, &worst, CONTRACTION);
                let fc = eval(&xc);
                let ok = fc < f_worst;
                (xc, fc, ok)
            };
            if accept {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let v = affine(&best, &vertex.0, SHRINK);
                    let fv = eval(&v);
                    *vertex = (v, fv);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    if !converged && spread(&simplex) < opts.x_tol {
        converged = true;
    }
    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        value,
        iterations,
        evaluations,
        converged,
    }
}

/// `origin + t (point − origin)`
fn affine(origin: &[f64], point: &[f64], t: f64) -> Vec<f64> {
    origin.iter().zip(point).map(|(o, p)| o + t * (p - o)).collect()
}

fn spread(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .flat_map(|(v, _)| v.iter().zip(best).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}
