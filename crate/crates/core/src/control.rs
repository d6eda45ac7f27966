//! Quadratic approximation of the value function and the greedy quoting rule.
//!
//! The value function is approximated by `-x'A(t)x - x'B(t) - C(t)` in the
//! state `x = (y, S, U_hat)`, where `y` is the crypto-1 inventory. `A` and `B`
//! solve a backward Riccati system with `A(T) = B(T) = 0`; `C` does not enter
//! the quotes and is not computed.

use serde::{Deserialize, Serialize};

use crate::error::{NouError, Result};
use crate::filter::FilteredNouParams;
use crate::intensity::{optimal_markup, quad_fit, LiquiditySpec, Side};
use crate::scalar::Real;

pub type Mat3<T> = [[T; 3]; 3];
pub type Vec3<T> = [T; 3];

fn zero_mat<T: Real>() -> Mat3<T> {
    [[T::zero(); 3]; 3]
}

fn mat_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut c = zero_mat();
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

fn mat_vec<T: Real>(a: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [0, 1, 2].map(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

fn transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let mut t = zero_mat();
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

fn symmetrize<T: Real>(a: &mut Mat3<T>) {
    let half = T::lit(0.5);
    for i in 0..3 {
        for j in i + 1..3 {
            let m = half * (a[i][j] + a[j][i]);
            a[i][j] = m;
            a[j][i] = m;
        }
    }
}

pub(crate) fn frobenius<T: Real>(a: &Mat3<T>) -> T {
    a.iter().flatten().fold(T::zero(), |s, &x| s + x * x).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig<T> {
    /// CARA risk aversion (per quote-asset unit).
    pub gamma: T,
    /// Days.
    pub horizon_t: T,
    pub grid_n: usize,
    pub ergodic: bool,
}

impl<T: Real> ControlConfig<T> {
    pub fn new(gamma: T, horizon_t: T) -> Self {
        ControlConfig {
            gamma,
            horizon_t,
            grid_n: 10_000,
            ergodic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero()) || !self.gamma.is_finite() {
            return Err(NouError::InvalidParams(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.horizon_t > T::zero()) || !self.horizon_t.is_finite() {
            return Err(NouError::InvalidParams(format!(
                "horizon must be > 0 days, got {}",
                self.horizon_t
            )));
        }
        if self.grid_n < 100 {
            return Err(NouError::InvalidParams(format!(
                "grid_n must be at least 100, got {}",
                self.grid_n
            )));
        }
        Ok(())
    }
}

/// Size-weighted moments of the quadratic Hamiltonian coefficients,
/// `sum_z (alpha^{10}_i(z) + eps alpha^{01}_i(z)) z^j w(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaMoments<T> {
    pub d_2_1_plus: T,
    pub d_1_1_minus: T,
    pub d_2_2_minus: T,
}

pub fn delta_moments<T: Real>(liquidity: &LiquiditySpec<T>, gamma: T) -> Result<DeltaMoments<T>> {
    liquidity.validate()?;
    let mut d = DeltaMoments {
        d_2_1_plus: T::zero(),
        d_1_1_minus: T::zero(),
        d_2_2_minus: T::zero(),
    };
    for atom in &liquidity.sizes.atoms {
        let q01 = quad_fit(&liquidity.side_01, atom.z, gamma)?;
        let q10 = quad_fit(&liquidity.side_10, atom.z, gamma)?;
        let zw = atom.z * atom.w;
        d.d_2_1_plus += (q10.alpha2 + q01.alpha2) * zw;
        d.d_1_1_minus += (q10.alpha1 - q01.alpha1) * zw;
        d.d_2_2_minus += (q10.alpha2 - q01.alpha2) * atom.z * zw;
    }
    Ok(d)
}

/// Constant coefficients of the Riccati system for `A` and `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSystem<T> {
    pub m: Mat3<T>,
    pub u: Mat3<T>,
    pub r: Mat3<T>,
    pub vb: Vec3<T>,
    pub d_2_2_minus: T,
}

impl<T: Real> ControlSystem<T> {
    pub fn new(params: &FilteredNouParams<T>, gamma: T, deltas: &DeltaMoments<T>) -> Self {
        let p = &params.base;
        let (s, n) = (p.sigma, params.nu_hat);
        let two = T::lit(2.0);
        let half = T::lit(0.5);
        let z = T::zero();
        let m = [
            [two * deltas.d_2_1_plus, z, z],
            [z, -two * gamma * s * s, -two * gamma * s * n],
            [z, -two * gamma * s * n, -two * gamma * n * n],
        ];
        let u = [
            [z, z, z],
            [gamma * s * s, p.kappa, -p.kappa],
            [gamma * s * n, z, p.eta],
        ];
        let r = [
            [-half * gamma * s * s, -half * p.kappa, half * p.kappa],
            [-half * p.kappa, z, z],
            [half * p.kappa, z, z],
        ];
        let vb = [two * deltas.d_1_1_minus, z, -two * p.eta * p.u_bar];
        ControlSystem {
            m,
            u,
            r,
            vb,
            d_2_2_minus: deltas.d_2_2_minus,
        }
    }

    /// Time derivatives `(A', B')`.
    pub fn rhs(&self, a: &Mat3<T>, b: &Vec3<T>) -> (Mat3<T>, Vec3<T>) {
        let am = mat_mul(a, &self.m);
        let ama = mat_mul(&am, a);
        let au = mat_mul(a, &self.u);
        let uta = mat_mul(&transpose(&self.u), a);
        let mut da = zero_mat();
        for i in 0..3 {
            for j in 0..3 {
                da[i][j] = ama[i][j] + au[i][j] + uta[i][j] + self.r[i][j];
            }
        }
        let amb = mat_vec(&am, b);
        let avb = mat_vec(a, &self.vb);
        let ut_b = mat_vec(&transpose(&self.u), b);
        let cross = T::lit(2.0) * self.d_2_2_minus * a[0][0];
        let db = [0, 1, 2].map(|i| amb[i] + avb[i] + cross * a[i][0] + ut_b[i]);
        (da, db)
    }

    /// One classical RK4 step of size `h` (negative when going backward).
    pub fn rk4_step(&self, a: &Mat3<T>, b: &Vec3<T>, h: T) -> (Mat3<T>, Vec3<T>) {
        self.rk4(a, b, h, false)
    }

    /// RK4 step that leaves the inventory row of `A` and `B` unchanged.
    fn rk4_step_pinned(&self, a: &Mat3<T>, b: &Vec3<T>, h: T) -> (Mat3<T>, Vec3<T>) {
        self.rk4(a, b, h, true)
    }

    fn rk4(&self, a: &Mat3<T>, b: &Vec3<T>, h: T, pin: bool) -> (Mat3<T>, Vec3<T>) {
        let f = |a: &Mat3<T>, b: &Vec3<T>| {
            let (mut da, mut db) = self.rhs(a, b);
            if pin {
                for k in 0..3 {
                    da[0][k] = T::zero();
                    da[k][0] = T::zero();
                }
                db[0] = T::zero();
            }
            (da, db)
        };
        let axpy_m = |x: &Mat3<T>, k: &Mat3<T>, c: T| {
            let mut y = *x;
            for i in 0..3 {
                for j in 0..3 {
                    y[i][j] += c * k[i][j];
                }
            }
            y
        };
        let axpy_v = |x: &Vec3<T>, k: &Vec3<T>, c: T| [0, 1, 2].map(|i| x[i] + c * k[i]);
        let half = h / T::lit(2.0);
        let (ka1, kb1) = f(a, b);
        let (ka2, kb2) = f(&axpy_m(a, &ka1, half), &axpy_v(b, &kb1, half));
        let (ka3, kb3) = f(&axpy_m(a, &ka2, half), &axpy_v(b, &kb2, half));
        let (ka4, kb4) = f(&axpy_m(a, &ka3, h), &axpy_v(b, &kb3, h));
        let sixth = h / T::lit(6.0);
        let two = T::lit(2.0);
        let mut a_next = *a;
        let mut b_next = *b;
        for i in 0..3 {
            for j in 0..3 {
                a_next[i][j] += sixth * (ka1[i][j] + two * (ka2[i][j] + ka3[i][j]) + ka4[i][j]);
            }
            b_next[i] += sixth * (kb1[i] + two * (kb2[i] + kb3[i]) + kb4[i]);
        }
        symmetrize(&mut a_next);
        (a_next, b_next)
    }

    /// Residual of the stationary equation for `A`.
    pub fn stationary_residual(&self, a: &Mat3<T>, b: &Vec3<T>) -> (T, T) {
        let (da, db) = self.rhs(a, b);
        (frobenius(&da), db.iter().fold(T::zero(), |s, &x| s + x * x).sqrt())
    }
}

const BLOW_UP_NORM: f64 = 1e12;

fn check_blow_up<T: Real>(a: &Mat3<T>, t: T) -> Result<()> {
    let n = frobenius(a);
    if !(n.to_f64_lossy() <= BLOW_UP_NORM) {
        return Err(NouError::BlowUp {
            time: t.to_f64_lossy(),
            norm: n.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Solved coefficients on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlCoeffs<T> {
    pub gamma: T,
    pub times: Vec<T>,
    pub a_mats: Vec<Mat3<T>>,
    pub b_vecs: Vec<Vec3<T>>,
    pub deltas: DeltaMoments<T>,
    /// When set, the coefficients at `times[0]` are used at every time.
    pub ergodic: bool,
}

impl<T: Real> ControlCoeffs<T> {
    /// Coefficients that are identically zero, for which the greedy rule
    /// quotes the myopic markup.
    pub fn zero(gamma: T) -> Self {
        ControlCoeffs {
            gamma,
            times: vec![T::zero()],
            a_mats: vec![zero_mat()],
            b_vecs: vec![[T::zero(); 3]],
            deltas: DeltaMoments {
                d_2_1_plus: T::zero(),
                d_1_1_minus: T::zero(),
                d_2_2_minus: T::zero(),
            },
            ergodic: true,
        }
    }

    pub fn horizon(&self) -> T {
        *self.times.last().expect("non-empty grid")
    }

    /// `(A(t), B(t))`, linear in `t` between grid points.
    pub fn at(&self, t: T) -> Result<(Mat3<T>, Vec3<T>)> {
        if self.ergodic {
            return Ok((self.a_mats[0], self.b_vecs[0]));
        }
        let (t0, t1) = (self.times[0], self.horizon());
        if !(t >= t0 && t <= t1) {
            return Err(NouError::Domain {
                value: t.to_f64_lossy(),
                domain: format!("[{t0}, {t1}]"),
            });
        }
        let n = self.times.len();
        let step = (t1 - t0) / T::from_usize(n - 1).unwrap();
        let pos = ((t - t0) / step).to_f64_lossy();
        let i = (pos.floor() as usize).min(n - 2);
        let w = (t - self.times[i]) / step;
        let w = w.max(T::zero()).min(T::one());
        let lerp = |x: T, y: T| x + w * (y - x);
        let (a0, a1) = (&self.a_mats[i], &self.a_mats[i + 1]);
        let (b0, b1) = (&self.b_vecs[i], &self.b_vecs[i + 1]);
        let mut a = zero_mat();
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] = lerp(a0[r][c], a1[r][c]);
            }
        }
        Ok((a, [0, 1, 2].map(|k| lerp(b0[k], b1[k]))))
    }

    /// `(theta(y) - theta(y -/+ z)) / z` for the quadratic value function.
    pub fn reservation_shift(&self, t: T, y1: T, s: T, u_hat: T, z: T, side: Side) -> Result<T> {
        let (a, b) = self.at(t)?;
        let ax1 = a[0][0] * y1 + a[0][1] * s + a[0][2] * u_hat;
        Ok(match side {
            Side::ZeroOne => -T::lit(2.0) * ax1 + z * a[0][0] - b[0],
            Side::OneZero => T::lit(2.0) * ax1 + z * a[0][0] + b[0],
        })
    }
}

/// Greedy markup for one side and trade size at state `(y1, S, U_hat)`.
#[allow(clippy::too_many_arguments)]
pub fn greedy_markup<T: Real>(
    coeffs: &ControlCoeffs<T>,
    liquidity: &LiquiditySpec<T>,
    t: T,
    y1: T,
    s: T,
    u_hat: T,
    z: T,
    side: Side,
) -> Result<T> {
    let p = coeffs.reservation_shift(t, y1, s, u_hat, z, side)?;
    optimal_markup(liquidity.side(side), z, p, coeffs.gamma)
}

const MAX_SUBSTEPS: usize = 1 << 12;

/// One grid interval of RK4, halving the substep until the result changes by
/// less than `eps^(2/3)` relative, or stops improving. Near `T` the solution
/// starts from zero as a high power of `T - t`, so a single step is
/// inaccurate there in relative terms.
fn refined_step<T: Real>(sys: &ControlSystem<T>, a: &Mat3<T>, b: &Vec3<T>, h: T) -> (Mat3<T>, Vec3<T>) {
    let tol = T::epsilon().powf(T::lit(2.0 / 3.0));
    let vnorm = |v: &Vec3<T>| v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
    let (mut a1, mut b1) = sys.rk4_step(a, b, h);
    let mut m = 1;
    let mut last_change = T::infinity();
    while m < MAX_SUBSTEPS {
        m *= 2;
        let hm = h / T::from_usize(m).unwrap();
        let (mut a2, mut b2) = (*a, *b);
        for _ in 0..m {
            (a2, b2) = sys.rk4_step(&a2, &b2, hm);
        }
        let mut da = a2;
        for r in 0..3 {
            for k in 0..3 {
                da[r][k] -= a1[r][k];
            }
        }
        let db = [0, 1, 2].map(|k| b2[k] - b1[k]);
        let scale = frobenius(&a2) + vnorm(&b2);
        let change = if scale > T::zero() { (frobenius(&da) + vnorm(&db)) / scale } else { T::zero() };
        (a1, b1) = (a2, b2);
        if change <= tol || change > last_change / T::lit(2.0) {
            break;
        }
        last_change = change;
    }
    (a1, b1)
}

/// Integrate backward from `A(T) = B(T) = 0` on `grid_n` uniform points.
pub fn solve_control<T: Real>(
    params: &FilteredNouParams<T>,
    config: &ControlConfig<T>,
    deltas: &DeltaMoments<T>,
) -> Result<ControlCoeffs<T>> {
    config.validate()?;
    params.base.validate()?;
    let sys = ControlSystem::new(params, config.gamma, deltas);
    let n = config.grid_n;
    let last = T::from_usize(n - 1).unwrap();
    let times: Vec<T> = (0..n)
        .map(|i| config.horizon_t * T::from_usize(i).unwrap() / last)
        .collect();
    let h = config.horizon_t / last;
    let mut a_mats = vec![zero_mat(); n];
    let mut b_vecs = vec![[T::zero(); 3]; n];
    for i in (0..n - 1).rev() {
        let (a, b) = refined_step(&sys, &a_mats[i + 1], &b_vecs[i + 1], -h);
        check_blow_up(&a, times[i])?;
        a_mats[i] = a;
        b_vecs[i] = b;
    }
    Ok(ControlCoeffs {
        gamma: config.gamma,
        times,
        a_mats,
        b_vecs,
        deltas: *deltas,
        ergodic: config.ergodic,
    })
}

/// Stationary coefficients returned by [`ergodic_coeffs`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicCoeffs<T> {
    pub a: Mat3<T>,
    pub b: Vec3<T>,
    /// Horizon at which the change between doublings fell below tolerance.
    pub horizon: T,
    pub doublings: usize,
}

const ERGODIC_TOL: f64 = 1e-8;
const MAX_DOUBLINGS: usize = 20;

/// Long-horizon limit of `(A(0), B(0))`.
///
/// With a stationary price the inventory row converges only like `1/T`, to
/// `A_yy = 0, A_yS = 1/2, A_yU = 0, B_y = -u_bar` (inventory marked at the
/// peg). That row is an exact stationary point, so it is held fixed while the
/// remaining entries, which converge exponentially, are integrated backward
/// with the horizon doubled until they settle to 1e-8 relative. The system is
/// autonomous, so each doubling continues from where the previous one stopped.
pub fn ergodic_coeffs<T: Real>(
    params: &FilteredNouParams<T>,
    config: &ControlConfig<T>,
    deltas: &DeltaMoments<T>,
) -> Result<ErgodicCoeffs<T>> {
    config.validate()?;
    params.base.validate()?;
    let sys = ControlSystem::new(params, config.gamma, deltas);
    // The step follows the fastest drift rather than the configured grid,
    // since the horizon grows far beyond it.
    let h = (T::lit(0.02) / params.base.kappa).min(T::lit(0.01));
    let tol = T::lit(ERGODIC_TOL);

    let mut a = zero_mat();
    a[0][1] = T::lit(0.5);
    a[1][0] = T::lit(0.5);
    let mut b = [-params.base.u_bar, T::zero(), T::zero()];
    let mut elapsed = T::zero();
    let mut target = config.horizon_t;
    let mut prev: Option<(Mat3<T>, Vec3<T>)> = None;
    for doublings in 0..=MAX_DOUBLINGS {
        let remaining = target - elapsed;
        let steps = (remaining / h).ceil().to_f64_lossy().max(1.0) as usize;
        let hh = remaining / T::from_usize(steps).unwrap();
        for _ in 0..steps {
            (a, b) = sys.rk4_step_pinned(&a, &b, -hh);
            elapsed += hh;
            check_blow_up(&a, target - elapsed)?;
        }
        elapsed = target;
        if let Some((pa, pb)) = prev {
            let mut diff_a = zero_mat();
            for i in 0..3 {
                for j in 0..3 {
                    diff_a[i][j] = a[i][j] - pa[i][j];
                }
            }
            let nb = b.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
            let db = [0, 1, 2].map(|i| b[i] - pb[i]);
            let db = db.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
            let settled_a = frobenius(&diff_a) <= tol * frobenius(&a);
            let settled_b = db <= tol * nb || nb == T::zero();
            if settled_a && settled_b {
                return Ok(ErgodicCoeffs { a, b, horizon: target, doublings });
            }
        }
        prev = Some((a, b));
        target = target * T::lit(2.0);
    }
    Err(NouError::NotStabilized { doublings: MAX_DOUBLINGS })
}

impl<T: Real> ErgodicCoeffs<T> {
    pub fn into_coeffs(self, gamma: T, deltas: DeltaMoments<T>) -> ControlCoeffs<T> {
        ControlCoeffs {
            gamma,
            times: vec![T::zero()],
            a_mats: vec![self.a],
            b_vecs: vec![self.b],
            deltas,
            ergodic: true,
        }
    }
}

/// Solve for the coefficients requested by `config`: the finite-horizon grid,
/// or the stationary pair when `config.ergodic` is set.
pub fn coefficients<T: Real>(
    params: &FilteredNouParams<T>,
    liquidity: &LiquiditySpec<T>,
    config: &ControlConfig<T>,
) -> Result<ControlCoeffs<T>> {
    let deltas = delta_moments(liquidity, config.gamma)?;
    if config.ergodic {
        Ok(ergodic_coeffs(params, config, &deltas)?.into_coeffs(config.gamma, deltas))
    } else {
        solve_control(params, config, &deltas)
    }
}
