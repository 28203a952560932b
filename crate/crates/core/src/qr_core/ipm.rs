//! Frisch–Newton primal-dual interior point solver for the check-loss LP.
//!
//! The bounded-variable dual
//!
//! ```text
//! min  -y'a   s.t.  X'a = (1 - alpha) X'1,   0 <= a <= 1
//! ```
//!
//! is solved with Mehrotra predictor-corrector steps. The equality multiplier
//! is `-beta`. Both primal and dual iterates stay feasible, so the duality
//! gap is `a'z + (1 - a)'w`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const STEP_FRACTION: f64 = 0.99995;

#[derive(Debug, Clone)]
pub struct IpmSolution {
    pub beta: DVector<f64>,
    pub iterations: usize,
    /// Final duality gap divided by `n`.
    pub gap: f64,
}

/// Largest step in `[0, 1]` keeping `v + t * dv >= 0`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(1.0, f64::min)
}

pub fn solve(x: &DMatrix<f64>, y: &[f64], alpha: f64, tol: f64, max_iter: usize) -> Result<IpmSolution> {
    let (n, p) = x.shape();

    // dual start from least squares
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(&DVector::from_column_slice(y));
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or(Error::RankDeficientDesign { rank: 0, cols: p })?;
    let mut yd = -chol.solve(&xty);
    let fitted = x * &yd;
    let r: Vec<f64> = (0..n).map(|i| -y[i] - fitted[i]).collect();
    let scale = r.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let shift = 1e-3 * (1.0 + scale);

    let mut a = vec![1.0 - alpha; n];
    let mut s = vec![alpha; n];
    let mut z: Vec<f64> = r.iter().map(|&v| v.max(0.0) + shift).collect();
    let mut w: Vec<f64> = r.iter().map(|&v| (-v).max(0.0) + shift).collect();

    let mut q = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let gap: f64 = (0..n).map(|i| a[i] * z[i] + s[i] * w[i]).sum();
        let objective: f64 = (0..n).map(|i| alpha * w[i] + (1.0 - alpha) * z[i]).sum::<f64>().abs();
        if gap / n as f64 <= tol * (1.0 + objective / n as f64) {
            return Ok(IpmSolution {
                beta: -yd,
                iterations,
                gap: gap / n as f64,
            });
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                gap: gap / n as f64,
            });
        }
        iterations += 1;

        for i in 0..n {
            q[i] = 1.0 / (z[i] / a[i] + w[i] / s[i]);
        }
        let mut m = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let row = x.row(i);
            for j in 0..p {
                let xij = row[j] * q[i];
                for k in j..p {
                    m[(j, k)] += xij * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                m[(j, k)] = m[(k, j)];
            }
        }
        let Some(chol) = m.cholesky() else {
            return Err(Error::NonConvergence {
                iterations,
                gap: gap / n as f64,
            });
        };

        // solve for the direction given complementarity residuals
        let direction = |rxz: &[f64], rsw: &[f64], v: &mut Vec<f64>| {
            for i in 0..n {
                v[i] = rxz[i] / a[i] - rsw[i] / s[i];
            }
            let mut rhs = DVector::<f64>::zeros(p);
            for i in 0..n {
                let qv = q[i] * v[i];
                for j in 0..p {
                    rhs[j] -= x[(i, j)] * qv;
                }
            }
            let dy = chol.solve(&rhs);
            let xdy = x * &dy;
            let da: Vec<f64> = (0..n).map(|i| q[i] * (xdy[i] + v[i])).collect();
            let dz: Vec<f64> = (0..n).map(|i| (rxz[i] - z[i] * da[i]) / a[i]).collect();
            let dw: Vec<f64> = (0..n).map(|i| (rsw[i] + w[i] * da[i]) / s[i]).collect();
            (dy, da, dz, dw)
        };

        // predictor
        let rxz: Vec<f64> = (0..n).map(|i| -a[i] * z[i]).collect();
        let rsw: Vec<f64> = (0..n).map(|i| -s[i] * w[i]).collect();
        let (_, da, dz, dw) = direction(&rxz, &rsw, &mut v);
        let ds: Vec<f64> = da.iter().map(|d| -d).collect();
        let tp = max_step(&a, &da).min(max_step(&s, &ds));
        let td = max_step(&z, &dz).min(max_step(&w, &dw));
        let mu = gap / (2 * n) as f64;
        let gap_aff: f64 = (0..n)
            .map(|i| {
                (a[i] + tp * da[i]) * (z[i] + td * dz[i]) + (s[i] + tp * ds[i]) * (w[i] + td * dw[i])
            })
            .sum();
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

        // corrector
        let rxz: Vec<f64> = (0..n)
            .map(|i| sigma * mu - a[i] * z[i] - da[i] * dz[i])
            .collect();
        let rsw: Vec<f64> = (0..n)
            .map(|i| sigma * mu - s[i] * w[i] - ds[i] * dw[i])
            .collect();
        let (dy, da, dz, dw) = direction(&rxz, &rsw, &mut v);
        let ds: Vec<f64> = da.iter().map(|d| -d).collect();
        let tp = (STEP_FRACTION * max_step(&a, &da).min(max_step(&s, &ds))).min(1.0);
        let td = (STEP_FRACTION * max_step(&z, &dz).min(max_step(&w, &dw))).min(1.0);

        for i in 0..n {
            a[i] += tp * da[i];
            s[i] += tp * ds[i];
            z[i] += td * dz[i];
            w[i] += td * dw[i];
        }
        yd += td * dy;
    }
}
