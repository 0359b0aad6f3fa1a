//! Restarted GMRES for matrix-free operators.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
}

impl GmresOutcome {
    /// True when the Krylov iterations did not reduce the residual at all.
    pub fn stalled(&self) -> bool {
        self.initial_residual > 0.0 && self.final_residual >= self.initial_residual
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from the contents of `x`.
///
/// `apply(v, out)` writes `A v` into `out`. Each cycle runs at most
/// `krylov_dim` Arnoldi steps (modified Gram-Schmidt, Givens rotations); the
/// solve stops early once the residual falls below `rel_tol · ‖b‖`.
pub fn gmres<F>(
    mut apply: F,
    b: &[f64],
    x: &mut [f64],
    krylov_dim: usize,
    restarts: usize,
    rel_tol: f64,
) -> Result<GmresOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = b.len();
    let m = krylov_dim.min(n).max(1);
    let target = rel_tol * norm(b);
    let mut basis = vec![vec![0.0; n]; m + 1];
    let mut hess = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut w = vec![0.0; n];
    let mut iterations = 0;
    let mut initial_residual = None;
    let mut residual = 0.0;

    for _cycle in 0..=restarts {
        apply(x, &mut w)?;
        for i in 0..n {
            basis[0][i] = b[i] - w[i];
        }
        let beta = norm(&basis[0]);
        if !beta.is_finite() {
            return Err(Error::NonFiniteResidual);
        }
        initial_residual.get_or_insert(beta);
        residual = beta;
        if beta <= target || beta == 0.0 {
            break;
        }
        basis[0].iter_mut().for_each(|v| *v /= beta);
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;

        let mut used = 0;
        for j in 0..m {
            apply(&basis[j], &mut w)?;
            iterations += 1;
            for i in 0..=j {
                let h = dot(&w, &basis[i]);
                hess[i][j] = h;
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= h * vk;
                }
            }
            let h_next = norm(&w);
            hess[j + 1][j] = h_next;
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let denom = hess[j][j].hypot(hess[j + 1][j]);
            if denom == 0.0 {
                break;
            }
            cs[j] = hess[j][j] / denom;
            sn[j] = hess[j + 1][j] / denom;
            hess[j][j] = denom;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            residual = g[j + 1].abs();
            if !residual.is_finite() {
                return Err(Error::NonFiniteResidual);
            }
            if residual <= target || h_next <= 1e-14 * beta {
                break;
            }
            for (bk, wk) in basis[j + 1].iter_mut().zip(&w) {
                *bk = wk / h_next;
            }
        }

        // Back substitution on the triangularized Hessenberg matrix.
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= hess[i][k] * y[k];
            }
            y[i] = s / hess[i][i];
        }
        for (k, yk) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[k]) {
                *xi += yk * vi;
            }
        }
        if residual <= target {
            break;
        }
    }

    Ok(GmresOutcome {
        iterations,
        initial_residual: initial_residual.unwrap_or(0.0),
        final_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(a: &[Vec<f64>], v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(a) {
            *o = dot(row, v);
        }
    }

    #[test]
    fn solves_a_small_nonsymmetric_system_exactly() {
        let a = vec![
            vec![4.0, 1.0, 0.0, 0.5],
            vec![-1.0, 3.0, 2.0, 0.0],
            vec![0.0, 0.5, -2.0, 1.0],
            vec![1.0, 0.0, 1.0, 5.0],
        ];
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let mut b = vec![0.0; 4];
        matvec(&a, &x_true, &mut b);
        let mut x = vec![0.0; 4];
        let out = gmres(
            |v, o| {
                matvec(&a, v, o);
                Ok(())
            },
            &b,
            &mut x,
            4,
            0,
            1e-14,
        )
        .unwrap();
        assert!(out.final_residual < 1e-12);
        for i in 0..4 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn restarts_make_progress_with_small_subspace() {
        let n = 30;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 3.0 + i as f64 * 0.1 } else { 0.3 / (1.0 + (i as f64 - j as f64).abs()) })
                    .collect()
            })
            .collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let one = gmres(|v, o| { matvec(&a, v, o); Ok(()) }, &b, &mut x, 5, 0, 1e-14).unwrap();
        let mut y = vec![0.0; n];
        let many = gmres(|v, o| { matvec(&a, v, o); Ok(()) }, &b, &mut y, 5, 20, 1e-14).unwrap();
        assert!(one.final_residual < one.initial_residual);
        assert!(many.final_residual < 1e-3 * one.final_residual);
        assert!(!one.stalled());
    }

    #[test]
    fn zero_rhs_from_zero_guess_is_immediate() {
        let mut x = vec![0.0; 3];
        let out = gmres(|v, o| { o.copy_from_slice(v); Ok(()) }, &[0.0; 3], &mut x, 3, 1, 1e-12).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(x, vec![0.0; 3]);
    }

    #[test]
    fn non_finite_rhs_is_an_error() {
        let mut x = vec![0.0; 2];
        let r = gmres(|v, o| { o.copy_from_slice(v); Ok(()) }, &[f64::NAN, 1.0], &mut x, 2, 0, 1e-12);
        assert_eq!(r, Err(Error::NonFiniteResidual));
    }
}
