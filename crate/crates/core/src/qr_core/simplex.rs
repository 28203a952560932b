//! Dense primal simplex for small check-loss problems.
//!
//! Standard form `X b+ - X b- + u - v = y` with costs `alpha` on `u` and
//! `1 - alpha` on `v`. Because the `b-` and `v` columns are negatives of the
//! `b+` and `u` columns, only the latter are stored; reduced costs for the
//! mirrored columns follow from `c_j - (c_mirror - r_mirror)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SimplexSolution {
    pub beta: Vec<f64>,
    /// Mean check loss at the optimum.
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    /// Coefficient column `j`, negated when `neg`.
    Beta { j: usize, neg: bool },
    /// Residual column `i`: `u_i` (positive part) or `v_i` (negative part).
    Resid { i: usize, neg: bool },
}

/// Solves the check-loss problem exactly. Intended for `n` up to a few
/// hundred; cost per pivot is `O(n (n + p))`.
pub fn solve(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<SimplexSolution> {
    let (n, p) = x.shape();
    let cols = p + n;
    // tableau rows: [beta+ cols | u cols | rhs]
    let width = cols + 1;
    let mut t = vec![0.0; n * width];
    let mut basis = Vec::with_capacity(n);
    for i in 0..n {
        let sign = if y[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..p {
            t[i * width + j] = sign * x[(i, j)];
        }
        t[i * width + p + i] = sign;
        t[i * width + cols] = sign * y[i];
        basis.push(Var::Resid { i, neg: sign < 0.0 });
    }

    let cost = |var: Var| match var {
        Var::Beta { .. } => 0.0,
        Var::Resid { neg: false, .. } => alpha,
        Var::Resid { neg: true, .. } => 1.0 - alpha,
    };
    let column_sign = |var: Var| match var {
        Var::Beta { neg, .. } | Var::Resid { neg, .. } => {
            if neg {
                -1.0
            } else {
                1.0
            }
        }
    };

    let eps = 1e-11;
    let mut pivots = 0;
    let mut degenerate_run = 0;
    let max_pivots = 50 * (n + p) + 1000;
    loop {
        // z_j = c_B' B^-1 A_j for the stored (positive) columns
        let mut zrow = vec![0.0; cols];
        for (r, &b) in basis.iter().enumerate() {
            let cb = cost(b);
            if cb != 0.0 {
                let row = &t[r * width..r * width + cols];
                for (zj, &v) in zrow.iter_mut().zip(row) {
                    *zj += cb * v;
                }
            }
        }
        let candidates = (0..cols).flat_map(|j| {
            let pos = if j < p {
                Var::Beta { j, neg: false }
            } else {
                Var::Resid { i: j - p, neg: false }
            };
            let neg = match pos {
                Var::Beta { j, .. } => Var::Beta { j, neg: true },
                Var::Resid { i, .. } => Var::Resid { i, neg: true },
            };
            [(pos, cost(pos) - zrow[j], j), (neg, cost(neg) + zrow[j], j)]
        });
        let bland = degenerate_run > 20;
        let mut entering: Option<(Var, f64, usize)> = None;
        for (var, rc, j) in candidates {
            if rc < -eps && !basis.contains(&var) {
                let better = match entering {
                    None => true,
                    Some((_, best, _)) => !bland && rc < best,
                };
                if better {
                    entering = Some((var, rc, j));
                }
            }
        }
        let Some((var, _, col)) = entering else {
            break;
        };
        let sign = column_sign(var);

        // ratio test on the signed column
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..n {
            let a = sign * t[r * width + col];
            if a > eps {
                let ratio = t[r * width + cols] / a;
                match leave {
                    Some((_, best)) if ratio >= best - 1e-14 => {}
                    _ => leave = Some((r, ratio)),
                }
            }
        }
        let Some((pr, ratio)) = leave else {
            return Err(Error::InvalidArgument("check-loss LP unbounded".into()));
        };
        degenerate_run = if ratio.abs() < 1e-14 { degenerate_run + 1 } else { 0 };

        // pivot on (pr, col) with the signed column
        let piv = sign * t[pr * width + col];
        for c in 0..width {
            t[pr * width + c] /= piv;
        }
        // the entering variable's column in signed form is sign * stored column;
        // express rows in terms of the entering var by flipping the stored sign
        let pivot_row: Vec<f64> = t[pr * width..(pr + 1) * width].to_vec();
        for r in 0..n {
            if r == pr {
                continue;
            }
            let factor = sign * t[r * width + col];
            if factor != 0.0 {
                for c in 0..width {
                    t[r * width + c] -= factor * pivot_row[c];
                }
            }
        }
        basis[pr] = var;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::NonConvergence {
                iterations: pivots,
                gap: f64::NAN,
            });
        }
    }

    let mut beta = vec![0.0; p];
    for (r, &b) in basis.iter().enumerate() {
        if let Var::Beta { j, neg } = b {
            let val = t[r * width + cols];
            beta[j] += if neg { -val } else { val };
        }
    }
    let objective = (0..n)
        .map(|i| {
            let fit: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
            super::check_loss(y[i] - fit, alpha)
        })
        .sum::<f64>()
        / n as f64;
    Ok(SimplexSolution {
        beta,
        objective,
        pivots,
    })
}
