//! Kalman-Bucy filter for a partially observed linear Gaussian system
//!
//! ```text
//! dZ    = Gamma [Z; zeta] dt + Sigma_Z^{1/2} dW^Z
//! dzeta = (Theta zeta + upsilon) dt + Sigma_zeta^{1/2} dW^zeta
//! ```
//!
//! with `d<W^Z, W^zeta> = rho_tilde dt`. Only `Z` is observed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{NouError, Result};
use crate::model::NouParams;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianSystem {
    /// `k x (k + d)`.
    pub gamma_mat: DMatrix<f64>,
    /// `d x d`.
    pub theta_mat: DMatrix<f64>,
    pub upsilon: DVector<f64>,
    /// `k x k`, positive definite.
    pub sigma_z: DMatrix<f64>,
    /// `d x d`, positive semidefinite.
    pub sigma_zeta: DMatrix<f64>,
    /// `k x d`.
    pub rho_tilde: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralFilterState {
    pub zeta_hat: DVector<f64>,
    pub v_mat: DMatrix<f64>,
    pub t: f64,
}

/// Principal square root of a symmetric PSD matrix, and optionally its inverse.
fn sym_sqrt(m: &DMatrix<f64>, inverse: bool) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let mut diag = eig.eigenvalues.clone();
    for l in diag.iter_mut() {
        if *l < -1e-12 * scale.max(1.0) {
            return Err(NouError::Conditioning(format!("negative eigenvalue {l:e}")));
        }
        let r = l.max(0.0).sqrt();
        *l = if inverse {
            if r == 0.0 {
                return Err(NouError::Conditioning("singular matrix has no inverse root".into()));
            }
            1.0 / r
        } else {
            r
        };
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&diag) * eig.eigenvectors.transpose())
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= 1e-12 * scale
}

impl LinearGaussianSystem {
    pub fn k(&self) -> usize {
        self.sigma_z.nrows()
    }

    pub fn d(&self) -> usize {
        self.theta_mat.nrows()
    }

    /// The nested OU model seen as `Z = S`, `zeta = U`.
    pub fn from_nou(p: &NouParams<f64>) -> Self {
        LinearGaussianSystem {
            gamma_mat: DMatrix::from_row_slice(1, 2, &[-p.kappa, p.kappa]),
            theta_mat: DMatrix::from_element(1, 1, -p.eta),
            upsilon: DVector::from_element(1, p.eta * p.u_bar),
            sigma_z: DMatrix::from_element(1, 1, p.sigma * p.sigma),
            sigma_zeta: DMatrix::from_element(1, 1, p.nu * p.nu),
            rho_tilde: DMatrix::zeros(1, 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (k, d) = (self.k(), self.d());
        let shape_err = |what: &str| Err(NouError::InvalidInput(format!("{what} has the wrong shape")));
        if self.sigma_z.ncols() != k {
            return shape_err("sigma_z");
        }
        if self.theta_mat.ncols() != d {
            return shape_err("theta_mat");
        }
        if self.gamma_mat.shape() != (k, k + d) {
            return shape_err("gamma_mat");
        }
        if self.upsilon.len() != d {
            return shape_err("upsilon");
        }
        if self.sigma_zeta.shape() != (d, d) {
            return shape_err("sigma_zeta");
        }
        if self.rho_tilde.shape() != (k, d) {
            return shape_err("rho_tilde");
        }
        if !is_symmetric(&self.sigma_z) || self.sigma_z.clone().cholesky().is_none() {
            return Err(NouError::Conditioning("sigma_z is not positive definite".into()));
        }
        if !is_symmetric(&self.sigma_zeta) {
            return Err(NouError::InvalidInput("sigma_zeta is not symmetric".into()));
        }
        let mut corr = DMatrix::identity(k + d, k + d);
        corr.view_mut((0, k), (k, d)).copy_from(&self.rho_tilde);
        corr.view_mut((k, 0), (d, k)).copy_from(&self.rho_tilde.transpose());
        let min_eig = corr.symmetric_eigenvalues().min();
        if min_eig < -1e-12 {
            return Err(NouError::InvalidInput(format!(
                "noise correlation block is not PSD (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(())
    }
}

struct Prepared<'a> {
    sys: &'a LinearGaussianSystem,
    sz_inv_half: DMatrix<f64>,
    /// `Sigma_zeta^{1/2} rho_tilde^T`, `d x k`.
    corr_term: DMatrix<f64>,
    /// Latent columns of `Gamma`, `k x d`.
    gamma_latent: DMatrix<f64>,
}

impl Prepared<'_> {
    fn gain(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        // [0; V]^T Gamma^T = V Gamma_latent^T
        v * self.gamma_latent.transpose() * &self.sz_inv_half + &self.corr_term
    }

    fn riccati(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let th = &self.sys.theta_mat;
        let psi = self.gain(v);
        th * v + v * th.transpose() + &self.sys.sigma_zeta - &psi * psi.transpose()
    }

    fn rk4(&self, v0: &DMatrix<f64>, h: f64, n: usize) -> DMatrix<f64> {
        let mut v = v0.clone();
        for _ in 0..n {
            let k1 = self.riccati(&v);
            let k2 = self.riccati(&(&v + &k1 * (h / 2.0)));
            let k3 = self.riccati(&(&v + &k2 * (h / 2.0)));
            let k4 = self.riccati(&(&v + &k3 * h));
            v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            v = (&v + v.transpose()) * 0.5;
        }
        v
    }

    /// Same refinement rule as the scalar variance integrator.
    fn evolve(&self, v0: &DMatrix<f64>, horizon: f64) -> DMatrix<f64> {
        if horizon <= 0.0 {
            return v0.clone();
        }
        // Stiffness bound: linear part plus the quadratic gain term at the
        // largest covariance reachable over the step.
        let g = (self.gamma_latent.transpose() * &self.sz_inv_half).norm();
        let v_reach = v0.norm() + self.sys.sigma_zeta.norm() * horizon;
        let rate = 2.0 * self.sys.theta_mat.norm() + 2.0 * g * (g * v_reach + self.corr_term.norm());
        let n0 = ((horizon * rate / 1e-3).ceil() as usize).clamp(1, 1 << 20);
        let scale = v0.amax().max(self.sys.sigma_zeta.amax() * horizon).max(f64::MIN_POSITIVE);
        let tol = 1e-12 * scale;
        let mut n = n0;
        let mut coarse = self.rk4(v0, horizon / n as f64, n);
        let mut last_change = f64::INFINITY;
        for _ in 0..20 {
            let fine = self.rk4(v0, horizon / (2 * n) as f64, 2 * n);
            let change = (&fine - &coarse).amax();
            if change < tol || change > last_change / 2.0 {
                return fine;
            }
            last_change = change;
            coarse = fine;
            n *= 2;
        }
        coarse
    }
}

/// Filter an observed path `z_path[i]` at `times[i]`.
pub fn general_filter_series(
    system: &LinearGaussianSystem,
    times: &[f64],
    z_path: &[DVector<f64>],
    zeta_hat0: DVector<f64>,
    v_mat0: DMatrix<f64>,
) -> Result<Vec<GeneralFilterState>> {
    system.validate()?;
    let (k, d) = (system.k(), system.d());
    if times.len() != z_path.len() {
        return Err(NouError::InvalidInput("times and observations differ in length".into()));
    }
    if zeta_hat0.len() != d || v_mat0.shape() != (d, d) {
        return Err(NouError::InvalidInput("initial state has the wrong shape".into()));
    }
    if let Some(i) = z_path.iter().position(|z| z.len() != k) {
        return Err(NouError::InvalidInput(format!("observation {i} has the wrong dimension")));
    }
    if let Some(i) = z_path.iter().position(|z| z.iter().any(|x| !x.is_finite())) {
        return Err(NouError::NonFinite { index: i, what: "observation".into() });
    }
    if times.is_empty() {
        return Ok(Vec::new());
    }

    let prep = Prepared {
        sys: system,
        sz_inv_half: sym_sqrt(&system.sigma_z, true)?,
        corr_term: sym_sqrt(&system.sigma_zeta, false)? * system.rho_tilde.transpose(),
        gamma_latent: system.gamma_mat.columns(k, d).into_owned(),
    };
    let gamma_obs = system.gamma_mat.columns(0, k).into_owned();

    let mut state = GeneralFilterState {
        zeta_hat: zeta_hat0,
        v_mat: (&v_mat0 + v_mat0.transpose()) * 0.5,
        t: times[0],
    };
    let mut out = Vec::with_capacity(times.len());
    out.push(state.clone());
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        let z_prev = &z_path[i - 1];
        let dz = &z_path[i] - z_prev;
        let psi = prep.gain(&state.v_mat);
        let predicted = (&gamma_obs * z_prev + &prep.gamma_latent * &state.zeta_hat) * dt;
        let innovation = &prep.sz_inv_half * (dz - predicted);
        let drift = (&system.theta_mat * &state.zeta_hat + &system.upsilon) * dt;
        state.zeta_hat += drift + psi * innovation;
        state.v_mat = prep.evolve(&state.v_mat, dt);
        state.t = times[i];
        out.push(state.clone());
    }
    Ok(out)
}
