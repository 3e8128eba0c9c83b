//! The known leader `x_r(k+1) = S x_r(k)`, `y_r(k) = R x_r(k)`.

use crate::error::{dim_err, Result};
use crate::matcore::{self, Complex, Matrix, RANK_RTOL};

pub const DEFAULT_ASSUMPTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderSpec {
    pub s: Matrix,
    pub r_out: Matrix,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderReport {
    pub eigenvalues: Vec<Complex>,
    pub on_unit_circle: bool,
    pub simple: bool,
}

impl LeaderReport {
    pub fn holds(&self) -> bool {
        self.on_unit_circle && self.simple
    }
}

impl LeaderSpec {
    pub fn new(s: Matrix, r_out: Matrix, x0: Vec<f64>) -> Result<Self> {
        matcore::ensure_square(&s)?;
        if r_out.ncols() != s.nrows() || x0.len() != s.nrows() {
            return Err(dim_err(format!(
                "leader: S is {0}x{0}, R is {1}x{2}, x0 has {3} entries",
                s.nrows(),
                r_out.nrows(),
                r_out.ncols(),
                x0.len()
            )));
        }
        matcore::ensure_finite(&s, "S")?;
        matcore::ensure_finite(&r_out, "R")?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::NonFinite("leader x0".into()));
        }
        Ok(Self { s, r_out, x0 })
    }

    /// Leader state dimension `r`.
    pub fn state_dim(&self) -> usize {
        self.s.nrows()
    }

    /// Output dimension `p`.
    pub fn output_dim(&self) -> usize {
        self.r_out.nrows()
    }

    /// Eigenvalues of `S` simple and on the unit circle, both up to `tol`.
    pub fn check_assumption_s(&self, tol: f64) -> Result<LeaderReport> {
        let eigenvalues = matcore::eigenvalues(&self.s)?;
        let on_unit_circle = eigenvalues.iter().all(|z| (z.norm() - 1.0).abs() <= tol);
        let simple = eigenvalues.iter().enumerate().all(|(i, a)| {
            eigenvalues[i + 1..].iter().all(|b| (a - b).norm() > tol)
        });
        Ok(LeaderReport { eigenvalues, on_unit_circle, simple })
    }

    /// Rank test on `[R; RS; …; RS^{r−1}]`.
    pub fn check_observability(&self) -> bool {
        let r = self.state_dim();
        let p = self.output_dim();
        let mut obs = Matrix::zeros(p * r, r);
        let mut block = self.r_out.clone();
        for k in 0..r {
            obs.view_mut((k * p, 0), (p, r)).copy_from(&block);
            block = &block * &self.s;
        }
        matcore::rank(&obs, RANK_RTOL) == r
    }

    /// States `r × (horizon+1)` and outputs `p × (horizon+1)`.
    pub fn trajectory(&self, horizon: usize) -> (Matrix, Matrix) {
        let r = self.state_dim();
        let mut states = Matrix::zeros(r, horizon + 1);
        states.set_column(0, &nalgebra::DVector::from_column_slice(&self.x0));
        for k in 0..horizon {
            let next = &self.s * states.column(k);
            states.set_column(k + 1, &next);
        }
        let outputs = &self.r_out * &states;
        (states, outputs)
    }
}
