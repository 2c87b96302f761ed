use serde::{Deserialize, Serialize};

use super::linalg::{cholesky_solve, gram};
use crate::error::{Error, Result};

/// Diagonal jitter used when the least-squares normal equations are singular.
pub const OLS_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

fn check_design(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), got: y.len() });
    }
    let p = x.first().map(Vec::len).ok_or_else(|| Error::invalid("empty design"))?;
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("ragged design matrix"));
    }
    Ok(p)
}

fn solve_with_jitter(mut a: Vec<f64>, b: &[f64], n: usize) -> Result<Vec<f64>> {
    if let Some(x) = cholesky_solve(&a, b, n) {
        return Ok(x);
    }
    for i in 0..n {
        a[i * n + i] += OLS_JITTER;
    }
    cholesky_solve(&a, b, n)
        .ok_or_else(|| Error::DegenerateDesign("normal equations are singular".into()))
}

/// Ordinary least squares with an intercept, via the normal equations.
pub fn fit_ols(x: &[Vec<f64>], y: &[f64]) -> Result<LinearModel> {
    let p = check_design(x, y)?;
    let rows: Vec<Vec<f64>> = x
        .iter()
        .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
        .collect();
    let (a, b) = gram(&rows, y, p + 1);
    let beta = solve_with_jitter(a, &b, p + 1)?;
    Ok(LinearModel { intercept: beta[0], coef: beta[1..].to_vec() })
}

struct Centered {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn center(x: &[Vec<f64>], y: &[f64], p: usize) -> Centered {
    let n = x.len() as f64;
    let x_mean: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let y_mean = y.iter().sum::<f64>() / n;
    Centered {
        x: x
            .iter()
            .map(|r| r.iter().zip(&x_mean).map(|(v, m)| v - m).collect())
            .collect(),
        y: y.iter().map(|v| v - y_mean).collect(),
        x_mean,
        y_mean,
    }
}

fn uncenter(c: &Centered, coef: Vec<f64>) -> LinearModel {
    let intercept = c.y_mean - coef.iter().zip(&c.x_mean).map(|(b, m)| b * m).sum::<f64>();
    LinearModel { coef, intercept }
}

/// Ridge regression `(X^T X + lambda I)^-1 X^T y` on centered data; the
/// intercept is not penalized.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LinearModel> {
    if lambda < 0.0 {
        return Err(Error::invalid("ridge penalty must be non-negative"));
    }
    let p = check_design(x, y)?;
    let c = center(x, y, p);
    let (mut a, b) = gram(&c.x, &c.y, p);
    for i in 0..p {
        a[i * p + i] += lambda;
    }
    let coef = solve_with_jitter(a, &b, p)?;
    Ok(uncenter(&c, coef))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetFit {
    pub model: LinearModel,
    /// Objective value after each full sweep.
    pub objective: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on
/// `1/(2n) |y - X b - c|^2 + lambda (rho |b|_1 + (1 - rho) |b|^2 / 2)`
/// with an unpenalized intercept `c`. Stops when no coefficient moves by more
/// than `tol` in a sweep.
pub fn fit_elastic_net(
    x: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
    rho: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<ElasticNetFit> {
    if lambda < 0.0 || !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid("elastic net needs lambda >= 0 and rho in [0, 1]"));
    }
    let p = check_design(x, y)?;
    let c = center(x, y, p);
    let n = x.len() as f64;
    let cols: Vec<Vec<f64>> = (0..p).map(|j| c.x.iter().map(|r| r[j]).collect()).collect();
    let sq: Vec<f64> = cols.iter().map(|col| col.iter().map(|v| v * v).sum::<f64>() / n).collect();

    let l1 = lambda * rho;
    let l2 = lambda * (1.0 - rho);
    let objective_of = |r: &[f64], beta: &[f64]| {
        let rss = r.iter().map(|v| v * v).sum::<f64>() / (2.0 * n);
        let a = beta.iter().map(|b| b.abs()).sum::<f64>();
        let q = beta.iter().map(|b| b * b).sum::<f64>();
        rss + l1 * a + l2 * q / 2.0
    };

    let mut beta = vec![0.0; p];
    let mut resid = c.y.clone();
    let mut objective = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for j in 0..p {
            let old = beta[j];
            let new = if sq[j] > 0.0 {
                let rho_j = cols[j].iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() / n
                    + sq[j] * old;
                soft_threshold(rho_j, l1) / (sq[j] + l2)
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                for (r, v) in resid.iter_mut().zip(&cols[j]) {
                    *r -= v * delta;
                }
                beta[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        objective.push(objective_of(&resid, &beta));
        if max_delta < tol {
            converged = true;
            break;
        }
    }
    Ok(ElasticNetFit { model: uncenter(&c, beta), objective, sweeps, converged })
}
