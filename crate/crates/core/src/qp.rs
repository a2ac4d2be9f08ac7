//! Dense primal-dual interior-point solver for convex quadratic programs in
//! standard form:
//!
//! ```text
//! minimize   ½ xᵀHx + cᵀx
//! subject to Ax = b,  x ≥ 0
//! ```
//!
//! `H` must be symmetric positive semidefinite. Steps follow Mehrotra's
//! predictor-corrector scheme; the KKT system is factored once per
//! iteration and reused for both solves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            max_iterations: 200,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of `Ax = b`.
    pub y: DVector<f64>,
    /// Multipliers of `x ≥ 0`.
    pub s: DVector<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let n = c.len();
        assert_eq!(h.shape(), (n, n), "H must be n×n");
        assert_eq!(a.ncols(), n, "A must have n columns");
        assert_eq!(a.nrows(), b.len(), "A and b disagree on the number of rows");
        QpProblem { h, c, a, b }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.c.dot(x)
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(1.0, f64::min)
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn solve(problem: &QpProblem, settings: QpSettings) -> QpSolution {
    let n = problem.c.len();
    let m = problem.b.len();
    let (h, c, a, b) = (&problem.h, &problem.c, &problem.a, &problem.b);

    let mut x = DVector::from_element(n, 1.0);
    let mut s = DVector::from_element(n, 1.0);
    let mut y = DVector::zeros(m);
    if n == 0 {
        return QpSolution {
            objective: 0.0,
            x,
            y,
            s,
            status: SolveStatus::Optimal,
            iterations: 0,
        };
    }

    let scale_b = 1.0 + inf_norm(b);
    let scale_c = 1.0 + inf_norm(c);
    let tol = settings.tolerance;
    let regularization = 1e-13;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;

    for it in 0..settings.max_iterations {
        iterations = it;
        let r_d = h * &x + c - a.transpose() * &y - &s;
        let r_p = a * &x - b;
        let mu = x.dot(&s) / n as f64;
        if inf_norm(&r_p) <= tol * scale_b && inf_norm(&r_d) <= tol * scale_c && mu <= tol {
            status = SolveStatus::Optimal;
            break;
        }

        // [H + S/X   Aᵀ] [ dx]   [r1]
        // [A         0 ] [-dy] = [r2]
        let dim = n + m;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for i in 0..n {
            kkt[(i, i)] += s[i] / x[i] + regularization;
        }
        if m > 0 {
            kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
            kkt.view_mut((n, 0), (m, n)).copy_from(a);
            for j in 0..m {
                kkt[(n + j, n + j)] -= regularization;
            }
        }
        let lu = kkt.lu();
        let newton = |r1: DVector<f64>| -> Option<(DVector<f64>, DVector<f64>)> {
            let mut rhs = DVector::zeros(dim);
            rhs.rows_mut(0, n).copy_from(&r1);
            rhs.rows_mut(n, m).copy_from(&(-&r_p));
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dy = -sol.rows(n, m).into_owned();
            Some((dx, dy))
        };

        // Predictor.
        let r1 = -&r_d - &s;
        let Some((dx_aff, _)) = newton(r1) else {
            status = SolveStatus::Infeasible;
            break;
        };
        let ds_aff = DVector::from_fn(n, |i, _| -s[i] - s[i] / x[i] * dx_aff[i]);
        let alpha_aff = max_step(&x, &dx_aff).min(max_step(&s, &ds_aff));
        let mu_aff = (&x + alpha_aff * &dx_aff).dot(&(&s + alpha_aff * &ds_aff)) / n as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // Corrector.
        let r1 = DVector::from_fn(n, |i, _| {
            -r_d[i] - s[i] + (sigma * mu - dx_aff[i] * ds_aff[i]) / x[i]
        });
        let Some((dx, dy)) = newton(r1) else {
            status = SolveStatus::Infeasible;
            break;
        };
        let ds = DVector::from_fn(n, |i, _| {
            (sigma * mu - dx_aff[i] * ds_aff[i] - x[i] * s[i] - s[i] * dx[i]) / x[i]
        });
        let step = (0.99 * max_step(&x, &dx).min(max_step(&s, &ds))).min(1.0);
        x += step * &dx;
        y += step * &dy;
        s += step * &ds;
        if !(x.iter().all(|v| v.is_finite()) && s.iter().all(|v| v.is_finite())) {
            status = SolveStatus::Infeasible;
            break;
        }
    }
    QpSolution {
        objective: problem.objective(&x),
        x,
        y,
        s,
        status,
        iterations,
    }
}
