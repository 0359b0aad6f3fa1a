//! Linear-quadratic problems, used to check the solver against Riccati
//! solutions. With an indefinite `R` (negative block for a maximizing
//! player) the same type describes a zero-sum LQ game.

use nalgebra::{DMatrix, DVector};

use super::OcpProblem;
use crate::error::{Error, Result};

/// `ẋ = A x + B u`, `L = ½(xᵀQx + uᵀRu)`, `φ = ½ xᵀ P_f x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQuadratic {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub terminal: DMatrix<f64>,
}

impl LinearQuadratic {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        terminal: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        let ok = a.is_square()
            && b.nrows() == n
            && q.shape() == (n, n)
            && r.shape() == (m, m)
            && terminal.shape() == (n, n);
        if !ok {
            return Err(Error::InvalidParameter("inconsistent LQ dimensions".into()));
        }
        Ok(Self { a, b, q, r, terminal })
    }
}

fn col(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

impl OcpProblem for LinearQuadratic {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        let v = &self.a * col(x) + &self.b * col(u);
        dx.copy_from_slice(v.as_slice());
        Ok(())
    }

    fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let (x, u) = (col(x), col(u));
        0.5 * (x.dot(&(&self.q * &x)) + u.dot(&(&self.r * &u)))
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        let x = col(x);
        0.5 * x.dot(&(&self.terminal * &x))
    }

    fn terminal_cost_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice((&self.terminal * col(x)).as_slice());
        Ok(())
    }

    fn hamiltonian_gradients(
        &self,
        x: &[f64],
        u: &[f64],
        lambda: &[f64],
        hx: &mut [f64],
        hu: &mut [f64],
    ) -> Result<()> {
        let lam = col(lambda);
        hx.copy_from_slice((&self.q * col(x) + self.a.tr_mul(&lam)).as_slice());
        hu.copy_from_slice((&self.r * col(u) + self.b.tr_mul(&lam)).as_slice());
        Ok(())
    }

    fn nominal_input(&self) -> Vec<f64> {
        vec![0.0; self.input_dim()]
    }
}
