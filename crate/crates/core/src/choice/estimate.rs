//! Maximum likelihood estimation of the MNL by BFGS.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{goodness_of_fit, ChoiceSet};
use crate::{Error, Result};

/// Observations per parallel work unit. Partial sums are always reduced in
/// chunk order so results do not depend on the thread count.
const CHUNK: usize = 128;

/// What to do with a coefficient whose attribute never varies within a
/// choice set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonIdentified {
    #[default]
    Error,
    /// Hold the coefficient at zero and estimate the rest.
    FixAtZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationOptions {
    pub max_iterations: usize,
    /// Convergence when the max-norm of the log-likelihood gradient falls
    /// below this.
    pub gradient_tolerance: f64,
    pub non_identified: NonIdentified,
    /// Starting point; zeros when absent.
    pub start: Option<Vec<f64>>,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions {
            max_iterations: 200,
            gradient_tolerance: 1e-6,
            non_identified: NonIdentified::Error,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// NaN for fixed coefficients.
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub fixed: Vec<bool>,
    pub ll_initial: f64,
    pub ll_final: f64,
    pub adj_rho_squared: f64,
    /// Number of estimated (free) coefficients.
    pub k: usize,
    pub n_observations: usize,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl EstimationResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.std_errors[i])
    }
}

struct Observation {
    n_alt: usize,
    /// Row-major n_alt × k.
    x: Vec<f64>,
    offset: Vec<f64>,
    chosen: usize,
}

struct Design {
    k: usize,
    obs: Vec<Observation>,
}

struct Partial {
    ll: f64,
    grad: Vec<f64>,
    hess: Option<Vec<f64>>,
}

impl Design {
    fn new(sets: &[ChoiceSet], k: usize) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::Domain(
                "estimation needs at least one observation".into(),
            ));
        }
        let mut obs = Vec::with_capacity(sets.len());
        for set in sets {
            set.validate()?;
            let chosen = set.chosen.ok_or_else(|| {
                Error::Contract(format!(
                    "household {}: no chosen alternative marked",
                    set.household
                ))
            })?;
            let mut x = Vec::with_capacity(set.alternatives.len() * k);
            for a in &set.alternatives {
                if a.features.len() != k {
                    return Err(Error::Contract(format!(
                        "household {}: {} attributes, schema has {k}",
                        set.household,
                        a.features.len()
                    )));
                }
                x.extend_from_slice(&a.features);
            }
            obs.push(Observation {
                n_alt: set.alternatives.len(),
                x,
                offset: set.alternatives.iter().map(|a| a.offset()).collect(),
                chosen,
            });
        }
        Ok(Design { k, obs })
    }

    /// Columns that never vary across the alternatives of any observation.
    fn constant_columns(&self) -> Vec<usize> {
        (0..self.k)
            .filter(|&c| {
                self.obs.iter().all(|o| {
                    let first = o.x[c];
                    (1..o.n_alt).all(|j| {
                        let v = o.x[j * self.k + c];
                        (v - first).abs() <= 1e-12 * (1.0 + first.abs())
                    })
                })
            })
            .collect()
    }

    fn evaluate(&self, beta: &[f64], want_hessian: bool) -> Partial {
        let k = self.k;
        let parts: Vec<Partial> = self
            .obs
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut p = Partial {
                    ll: 0.0,
                    grad: vec![0.0; k],
                    hess: want_hessian.then(|| vec![0.0; k * k]),
                };
                let mut v = Vec::new();
                let mut xbar = vec![0.0; k];
                for o in chunk {
                    v.clear();
                    v.extend((0..o.n_alt).map(|j| {
                        let row = &o.x[j * k..(j + 1) * k];
                        o.offset[j] + row.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>()
                    }));
                    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for u in v.iter_mut() {
                        *u = (*u - m).exp();
                        total += *u;
                    }
                    let row_c = &o.x[o.chosen * k..(o.chosen + 1) * k];
                    p.ll += o.offset[o.chosen]
                        + row_c.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>()
                        - m
                        - total.ln();
                    xbar.iter_mut().for_each(|x| *x = 0.0);
                    for (j, e) in v.iter().enumerate() {
                        let pj = e / total;
                        for (xb, x) in xbar.iter_mut().zip(&o.x[j * k..(j + 1) * k]) {
                            *xb += pj * x;
                        }
                    }
                    for c in 0..k {
                        p.grad[c] += row_c[c] - xbar[c];
                    }
                    if let Some(h) = p.hess.as_mut() {
                        for (j, e) in v.iter().enumerate() {
                            let pj = e / total;
                            let row = &o.x[j * k..(j + 1) * k];
                            for a in 0..k {
                                let da = row[a] - xbar[a];
                                if da == 0.0 {
                                    continue;
                                }
                                for b in 0..=a {
                                    h[a * k + b] -= pj * da * (row[b] - xbar[b]);
                                }
                            }
                        }
                    }
                }
                p
            })
            .collect();
        let mut out = Partial {
            ll: 0.0,
            grad: vec![0.0; k],
            hess: want_hessian.then(|| vec![0.0; k * k]),
        };
        for p in parts {
            out.ll += p.ll;
            for (a, b) in out.grad.iter_mut().zip(&p.grad) {
                *a += b;
            }
            if let (Some(h), Some(ph)) = (out.hess.as_mut(), p.hess.as_ref()) {
                for (a, b) in h.iter_mut().zip(ph) {
                    *a += b;
                }
            }
        }
        if let Some(h) = out.hess.as_mut() {
            for a in 0..k {
                for b in 0..a {
                    h[b * k + a] = h[a * k + b];
                }
            }
        }
        out
    }
}

fn schema_len(sets: &[ChoiceSet]) -> usize {
    sets.first()
        .and_then(|s| s.alternatives.first())
        .map(|a| a.features.len())
        .unwrap_or(0)
}

/// Sum over observations of the log probability of the chosen alternative.
pub fn log_likelihood(sets: &[ChoiceSet], beta: &[f64]) -> Result<f64> {
    Ok(log_likelihood_gradient(sets, beta)?.0)
}

pub fn log_likelihood_gradient(sets: &[ChoiceSet], beta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let d = Design::new(sets, schema_len(sets))?;
    check_len(&d, beta)?;
    let p = d.evaluate(beta, false);
    Ok((p.ll, p.grad))
}

pub fn log_likelihood_hessian(sets: &[ChoiceSet], beta: &[f64]) -> Result<DMatrix<f64>> {
    let d = Design::new(sets, schema_len(sets))?;
    check_len(&d, beta)?;
    let k = d.k;
    Ok(DMatrix::from_row_slice(
        k,
        k,
        &d.evaluate(beta, true).hess.expect("requested"),
    ))
}

fn check_len(d: &Design, beta: &[f64]) -> Result<()> {
    if beta.len() != d.k {
        return Err(Error::Contract(format!(
            "{} coefficients for {} attributes",
            beta.len(),
            d.k
        )));
    }
    Ok(())
}

/// Maximises the log-likelihood of the chosen alternatives over the
/// coefficients named in `names`.
pub fn estimate(
    sets: &[ChoiceSet],
    names: &[String],
    options: &EstimationOptions,
) -> Result<EstimationResult> {
    let k = names.len();
    let design = Design::new(sets, k)?;
    let constant = design.constant_columns();
    if !constant.is_empty() && options.non_identified == NonIdentified::Error {
        return Err(Error::Identification {
            names: constant.iter().map(|&c| names[c].clone()).collect(),
        });
    }
    let mut fixed = vec![false; k];
    for &c in &constant {
        fixed[c] = true;
    }
    let free: Vec<usize> = (0..k).filter(|&c| !fixed[c]).collect();

    let mut beta = match &options.start {
        Some(s) if s.len() != k => {
            return Err(Error::Contract(format!(
                "start vector has {} entries for {k} coefficients",
                s.len()
            )))
        }
        Some(s) => s.clone(),
        None => vec![0.0; k],
    };
    for &c in &constant {
        beta[c] = 0.0;
    }

    let ll_initial = design.evaluate(&vec![0.0; k], false).ll;
    let full = |theta: &[f64]| {
        let mut b = vec![0.0; k];
        for (&c, t) in free.iter().zip(theta) {
            b[c] = *t;
        }
        b
    };
    // minimise f = -LL over the free coefficients
    let objective = |theta: &[f64], hessian: bool| {
        let p = design.evaluate(&full(theta), hessian);
        let g: Vec<f64> = free.iter().map(|&c| -p.grad[c]).collect();
        let h = p
            .hess
            .map(|h| DMatrix::from_fn(free.len(), free.len(), |a, b| -h[free[a] * k + free[b]]));
        (-p.ll, g, h)
    };

    let theta0: Vec<f64> = free.iter().map(|&c| beta[c]).collect();
    let outcome = bfgs(&objective, theta0, options)?;
    let (ll_neg, _, h) = objective(&outcome.x, true);
    let information = h.expect("requested");
    let covariance = information
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Identification {
            names: free
                .iter()
                .map(|&c| format!("{} (collinear)", names[c]))
                .collect(),
        })?;

    let coefficients = full(&outcome.x);
    let mut std_errors = vec![f64::NAN; k];
    let mut t_values = vec![f64::NAN; k];
    for (a, &c) in free.iter().enumerate() {
        std_errors[c] = covariance[(a, a)].sqrt();
        t_values[c] = coefficients[c] / std_errors[c];
    }
    let ll_final = -ll_neg;
    Ok(EstimationResult {
        names: names.to_vec(),
        coefficients,
        std_errors,
        t_values,
        fixed,
        ll_initial,
        ll_final,
        adj_rho_squared: goodness_of_fit(ll_initial, ll_final, free.len())?,
        k: free.len(),
        n_observations: design.obs.len(),
        iterations: outcome.iterations,
        gradient_norm: outcome.gradient_norm,
    })
}

struct BfgsOutcome {
    x: Vec<f64>,
    iterations: usize,
    gradient_norm: f64,
}

type Objective<'a> = dyn Fn(&[f64], bool) -> (f64, Vec<f64>, Option<DMatrix<f64>>) + 'a;

fn max_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Inverse of the analytic Hessian when it is positive definite.
fn newton_inverse(f: &Objective, x: &[f64]) -> Option<DMatrix<f64>> {
    let (_, _, h) = f(x, true);
    h.and_then(|h| h.cholesky()).map(|c| c.inverse())
}

fn bfgs(f: &Objective, mut x: Vec<f64>, opts: &EstimationOptions) -> Result<BfgsOutcome> {
    let n = x.len();
    if n == 0 {
        return Ok(BfgsOutcome {
            x,
            iterations: 0,
            gradient_norm: 0.0,
        });
    }
    let (mut fx, mut g, _) = f(&x, false);
    let mut h_inv = newton_inverse(f, &x).unwrap_or_else(|| DMatrix::identity(n, n));
    let mut just_reset = true;
    let mut iterations = 0;
    while max_norm(&g) >= opts.gradient_tolerance {
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: max_norm(&g),
                last_iterate: x,
            });
        }
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut d = -(&h_inv * &gv);
        if d.dot(&gv) >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            d = -gv.clone();
        }
        let Some((alpha, f_new, g_new)) = line_search(f, &x, fx, &g, d.as_slice()) else {
            if just_reset {
                return Err(Error::NonConvergence {
                    iterations,
                    gradient_norm: max_norm(&g),
                    last_iterate: x,
                });
            }
            h_inv = newton_inverse(f, &x).unwrap_or_else(|| DMatrix::identity(n, n));
            just_reset = true;
            continue;
        };
        just_reset = false;
        let s = &d * alpha;
        for (xi, si) in x.iter_mut().zip(s.iter()) {
            *xi += si;
        }
        let y = DVector::from_column_slice(&g_new) - &gv;
        let sy = s.dot(&y);
        if sy > 1e-14 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H ← H + ρ²(sᵀy + yᵀHy) ssᵀ − ρ(Hy sᵀ + s yᵀH)
            h_inv += (&s * s.transpose()) * (rho * rho * (sy + yhy))
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        fx = f_new;
        g = g_new;
    }
    Ok(BfgsOutcome {
        gradient_norm: max_norm(&g),
        x,
        iterations,
    })
}

/// Strong Wolfe line search; returns the step, value and gradient there.
fn line_search(
    f: &Objective,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
) -> Option<(f64, f64, Vec<f64>)> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let dphi0: f64 = g0.iter().zip(d).map(|(a, b)| a * b).sum();
    // tolerate rounding in the objective near the optimum
    let slack = 1e-12 * f0.abs().max(1.0);
    let phi = |a: f64| {
        let xa: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + a * di).collect();
        let (fa, ga, _) = f(&xa, false);
        let dphi = ga.iter().zip(d).map(|(p, q)| p * q).sum::<f64>();
        (fa, ga, dphi)
    };
    let sufficient = |a: f64, fa: f64| fa.is_finite() && fa <= f0 + C1 * a * dphi0 + slack;

    let zoom = |mut lo: f64, mut hi: f64, mut f_lo: f64, mut best: Option<(f64, f64, Vec<f64>)>| {
        for _ in 0..50 {
            let a = 0.5 * (lo + hi);
            let (fa, ga, dphi) = phi(a);
            if !sufficient(a, fa) || fa >= f_lo {
                hi = a;
            } else {
                if dphi.abs() <= -C2 * dphi0 {
                    return Some((a, fa, ga));
                }
                if dphi * (hi - lo) >= 0.0 {
                    hi = lo;
                }
                lo = a;
                f_lo = fa;
                best = Some((a, fa, ga));
            }
            if (hi - lo).abs() < 1e-16 {
                break;
            }
        }
        best.filter(|b| b.1 < f0)
    };

    let (mut a_prev, mut f_prev) = (0.0, f0);
    let mut prev_eval: Option<(f64, f64, Vec<f64>)> = None;
    let mut a = 1.0;
    for i in 0..40 {
        let (fa, ga, dphi) = phi(a);
        if !sufficient(a, fa) || (i > 0 && fa >= f_prev) {
            return zoom(a_prev, a, f_prev, prev_eval);
        }
        if dphi.abs() <= -C2 * dphi0 {
            return Some((a, fa, ga));
        }
        if dphi >= 0.0 {
            let here = Some((a, fa, ga));
            return zoom(a, a_prev, fa, here);
        }
        a_prev = a;
        f_prev = fa;
        prev_eval = Some((a, fa, ga));
        a *= 2.0;
    }
    None
}
