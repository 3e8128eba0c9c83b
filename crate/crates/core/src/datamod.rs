//! Recorded follower trajectories and the set of systems that explain them.
//!
//! A data set `(U₋, W₋, X)` is consistent with `(A, B, E)` when
//! `X₊ = [A B E] [X₋; U₋; W₋]`. The set of all such triples is never
//! enumerated; it is represented by the data together with a sampler over
//! the left annihilator of the stacked data matrix.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{dim_err, Error, Result};
use crate::matcore::{self, Matrix, RANK_RTOL};

/// Residual below which a triple counts as a member of the consistency set.
pub const CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    u_minus: Matrix,
    w_minus: Matrix,
    x_full: Matrix,
}

/// A triple `(A, B, E)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub e: Matrix,
}

/// A follower plant including its output map. Used to generate data and to
/// drive simulations; never visible to the certification layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub e: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

impl TrajectoryData {
    /// `u_minus` is `m × τ`, `w_minus` is `q × τ` (`q` may be zero) and
    /// `x_full` is `n × (τ+1)`.
    pub fn new(u_minus: Matrix, w_minus: Matrix, x_full: Matrix) -> Result<Self> {
        if x_full.ncols() == 0 {
            return Err(dim_err("state data must have at least one column"));
        }
        let tau = x_full.ncols() - 1;
        if u_minus.ncols() != tau || w_minus.ncols() != tau {
            return Err(dim_err(format!(
                "data lengths disagree: X has {} columns, U₋ has {}, W₋ has {} (expected τ = {tau})",
                x_full.ncols(),
                u_minus.ncols(),
                w_minus.ncols()
            )));
        }
        matcore::ensure_finite(&u_minus, "input data")?;
        matcore::ensure_finite(&w_minus, "disturbance data")?;
        matcore::ensure_finite(&x_full, "state data")?;
        Ok(Self { u_minus, w_minus, x_full })
    }

    /// Disturbance-free data (`q = 0`).
    pub fn without_disturbance(u_minus: Matrix, x_full: Matrix) -> Result<Self> {
        let tau = x_full.ncols().saturating_sub(1);
        Self::new(u_minus, Matrix::zeros(0, tau), x_full)
    }

    pub fn tau(&self) -> usize {
        self.x_full.ncols() - 1
    }
    pub fn state_dim(&self) -> usize {
        self.x_full.nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.u_minus.nrows()
    }
    pub fn disturbance_dim(&self) -> usize {
        self.w_minus.nrows()
    }
    pub fn u_minus(&self) -> &Matrix {
        &self.u_minus
    }
    pub fn w_minus(&self) -> &Matrix {
        &self.w_minus
    }
    pub fn x_full(&self) -> &Matrix {
        &self.x_full
    }

    /// `(X₋, X₊)`: the first and the last `τ` state columns.
    pub fn partition(&self) -> Result<(Matrix, Matrix)> {
        let tau = self.tau();
        if tau == 0 {
            return Err(Error::InvalidArgument("cannot partition data with τ = 0".into()));
        }
        let n = self.state_dim();
        Ok((
            self.x_full.view((0, 0), (n, tau)).into_owned(),
            self.x_full.view((0, 1), (n, tau)).into_owned(),
        ))
    }

    pub fn x_minus(&self) -> Matrix {
        self.x_full.columns(0, self.tau()).into_owned()
    }

    pub fn x_plus(&self) -> Matrix {
        self.x_full.columns(1, self.tau()).into_owned()
    }

    /// `[X₋; U₋; W₋]`.
    pub fn stacked(&self) -> Matrix {
        matcore::vstack(&[&self.x_minus(), &self.u_minus, &self.w_minus])
            .expect("column counts checked at construction")
    }

    /// Same data with the disturbance block dropped.
    pub fn drop_disturbance(&self) -> Self {
        Self {
            u_minus: self.u_minus.clone(),
            w_minus: Matrix::zeros(0, self.tau()),
            x_full: self.x_full.clone(),
        }
    }

    /// Keep only the first `tau` transitions.
    pub fn truncate(&self, tau: usize) -> Result<Self> {
        if tau > self.tau() {
            return Err(dim_err(format!("cannot truncate τ = {} to {tau}", self.tau())));
        }
        Self::new(
            self.u_minus.columns(0, tau).into_owned(),
            self.w_minus.columns(0, tau).into_owned(),
            self.x_full.columns(0, tau + 1).into_owned(),
        )
    }

    fn check_system(&self, sys: &LinearSystem) -> Result<()> {
        let (n, m, q) = (self.state_dim(), self.input_dim(), self.disturbance_dim());
        if sys.a.shape() != (n, n) || sys.b.shape() != (n, m) || sys.e.shape() != (n, q) {
            return Err(dim_err(format!(
                "system shapes A {:?}, B {:?}, E {:?} do not fit data with n={n}, m={m}, q={q}",
                sys.a.shape(),
                sys.b.shape(),
                sys.e.shape()
            )));
        }
        Ok(())
    }

    /// `‖X₊ − [A B E][X₋; U₋; W₋]‖_F`.
    pub fn consistency_residual(&self, sys: &LinearSystem) -> Result<f64> {
        self.check_system(sys)?;
        let predicted = &sys.a * self.x_minus() + &sys.b * &self.u_minus + &sys.e * &self.w_minus;
        Ok((self.x_plus() - predicted).norm())
    }

    /// The unique consistent system, when `[X₋; U₋; W₋]` has full row rank.
    pub fn identify_unique(&self) -> Option<LinearSystem> {
        let z = self.stacked();
        if self.tau() == 0 || matcore::rank(&z, RANK_RTOL) < z.nrows() {
            return None;
        }
        let (abe, _) = self.least_squares_system().ok()?;
        Some(abe)
    }

    /// Minimum-norm least-squares fit `[A B E] = X₊ Z⁺` with its residual.
    fn least_squares_system(&self) -> Result<(LinearSystem, f64)> {
        let z = self.stacked();
        let (yt, residual) = matcore::lstsq_min_norm(&z.transpose(), &self.x_plus().transpose())?;
        Ok((self.split_system(&yt.transpose()), residual))
    }

    fn split_system(&self, abe: &Matrix) -> LinearSystem {
        let (n, m, q) = (self.state_dim(), self.input_dim(), self.disturbance_dim());
        LinearSystem {
            a: abe.columns(0, n).into_owned(),
            b: abe.columns(n, m).into_owned(),
            e: abe.columns(n + m, q).into_owned(),
        }
    }

    /// Random members of the consistency set: a base solution plus random
    /// left-annihilator perturbations with Frobenius norm at most `scale`.
    /// If the annihilator is trivial only the unique system is returned.
    pub fn sample_consistent_systems(
        &self,
        count: usize,
        scale: f64,
        seed: u64,
    ) -> Result<Vec<LinearSystem>> {
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument("sampling scale must be finite and ≥ 0".into()));
        }
        let (base, residual) = self.least_squares_system()?;
        if residual > CONSISTENCY_TOL {
            return Err(Error::InvalidArgument(format!(
                "data admit no consistent system (least-squares residual {residual:.3e})"
            )));
        }
        let z = self.stacked();
        let annihilator = matcore::left_null_space(&z, RANK_RTOL);
        if annihilator.ncols() == 0 {
            return Ok(vec![base]);
        }
        let n = self.state_dim();
        let k = annihilator.ncols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Uniform::new_inclusive(0.0, 1.0);
        let base_abe = matcore::hstack(&[&base.a, &base.b, &base.e])?;
        let samples = (0..count)
            .map(|_| {
                let coeffs = Matrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
                let mut delta = coeffs * annihilator.transpose();
                let norm = delta.norm();
                if norm > 0.0 {
                    delta *= scale * unit.sample(&mut rng) / norm;
                }
                self.split_system(&(&base_abe + delta))
            })
            .collect();
        Ok(samples)
    }
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix, e: Matrix) -> Result<Self> {
        matcore::ensure_square(&a)?;
        let n = a.nrows();
        if b.nrows() != n || e.nrows() != n {
            return Err(dim_err("A, B and E must have the same number of rows"));
        }
        Ok(Self { a, b, e })
    }
}

impl TrueSystem {
    pub fn new(a: Matrix, b: Matrix, e: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        LinearSystem::new(a.clone(), b.clone(), e.clone())?;
        if c.ncols() != a.nrows() || d.ncols() != b.ncols() || c.nrows() != d.nrows() {
            return Err(dim_err(format!(
                "output map shapes C {:?}, D {:?} do not fit n={}, m={}",
                c.shape(),
                d.shape(),
                a.nrows(),
                b.ncols()
            )));
        }
        for (m, what) in [(&a, "A"), (&b, "B"), (&e, "E"), (&c, "C"), (&d, "D")] {
            matcore::ensure_finite(m, what)?;
        }
        Ok(Self { a, b, e, c, d })
    }

    pub fn triple(&self) -> LinearSystem {
        LinearSystem { a: self.a.clone(), b: self.b.clone(), e: self.e.clone() }
    }
}

/// Simulate `x(k+1) = A x(k) + B u(k) + E w(k)` from `x0` over the columns of
/// `u` and `w`, recording the data set.
pub fn generate_data(sys: &LinearSystem, x0: &[f64], u: &Matrix, w: &Matrix) -> Result<TrajectoryData> {
    let n = sys.a.nrows();
    if x0.len() != n
        || u.nrows() != sys.b.ncols()
        || w.nrows() != sys.e.ncols()
        || u.ncols() != w.ncols()
    {
        return Err(dim_err(format!(
            "generate_data: x0 has {} entries, u is {}x{}, w is {}x{} for A {n}x{n}, B {:?}, E {:?}",
            x0.len(),
            u.nrows(),
            u.ncols(),
            w.nrows(),
            w.ncols(),
            sys.b.shape(),
            sys.e.shape()
        )));
    }
    let tau = u.ncols();
    let mut x = Matrix::zeros(n, tau + 1);
    x.set_column(0, &DVector::from_column_slice(x0));
    for k in 0..tau {
        let next = &sys.a * x.column(k) + &sys.b * u.column(k) + &sys.e * w.column(k);
        x.set_column(k + 1, &next);
    }
    TrajectoryData::new(u.clone(), w.clone(), x)
}
