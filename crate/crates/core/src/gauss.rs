//! Two-dimensional Gaussians in information form.

use nalgebra::{Matrix2, Vector2};

use crate::Error;

pub type Mat2 = Matrix2<f64>;
pub type Vec2 = Vector2<f64>;

/// Largest accepted condition number for a 2x2 inversion.
pub const MAX_CONDITION: f64 = 1e12;

/// Gaussian over `[lambda, nu]` as precision `Λ` and information `h = Λμ`.
/// `Λ = 0` is the uninformative message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianNat {
    pub precision: Mat2,
    pub info: Vec2,
}

impl GaussianNat {
    pub fn uninformative() -> Self {
        Self {
            precision: Mat2::zeros(),
            info: Vec2::zeros(),
        }
    }

    pub fn new(precision: Mat2, info: Vec2) -> Self {
        Self { precision, info }
    }

    pub fn from_moments(mean: &Vec2, cov: &Mat2) -> Result<Self, Error> {
        let precision = inverse_sym(cov).ok_or(Error::InvalidConfig("covariance is singular"))?;
        Ok(Self {
            precision,
            info: precision * mean,
        })
    }

    pub fn is_uninformative(&self) -> bool {
        self.precision == Mat2::zeros() && self.info == Vec2::zeros()
    }

    /// Product of densities, i.e. sum of natural parameters.
    pub fn product(&self, other: &Self) -> Self {
        Self {
            precision: self.precision + other.precision,
            info: self.info + other.info,
        }
    }

    /// `gamma * self + (1 - gamma) * previous` on natural parameters.
    pub fn damped(&self, previous: &Self, gamma: f64) -> Self {
        if gamma == 1.0 {
            return *self;
        }
        Self {
            precision: self.precision * gamma + previous.precision * (1.0 - gamma),
            info: self.info * gamma + previous.info * (1.0 - gamma),
        }
    }

    pub fn mean(&self) -> Option<Vec2> {
        solve_sym(&self.precision, &self.info)
    }

    pub fn covariance(&self) -> Option<Mat2> {
        inverse_sym(&self.precision)
    }

    /// Density of `T x` when `x` has this density; `t` must be invertible.
    pub fn linear_transform(&self, t: &Mat2) -> Option<Self> {
        let t_inv = t.try_inverse()?;
        let t_inv_t = t_inv.transpose();
        Some(Self {
            precision: t_inv_t * self.precision * t_inv,
            info: t_inv_t * self.info,
        })
    }
}

impl core::ops::Add for GaussianNat {
    type Output = GaussianNat;
    fn add(self, rhs: Self) -> Self {
        self.product(&rhs)
    }
}

impl core::ops::AddAssign for GaussianNat {
    fn add_assign(&mut self, rhs: Self) {
        self.precision += rhs.precision;
        self.info += rhs.info;
    }
}

impl core::iter::Sum for GaussianNat {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::uninformative(), |a, b| a + b)
    }
}

/// Eigenvalues of a symmetric 2x2 matrix, largest magnitude first. The
/// small one is recovered from the determinant to avoid cancellation.
pub fn sym_eigenvalues(m: &Mat2) -> (f64, f64) {
    let (a, b, d) = entries(m);
    let half_tr = 0.5 * (a + d);
    let r = libm::hypot(0.5 * (a - d), b);
    let big = if half_tr >= 0.0 { half_tr + r } else { half_tr - r };
    let det = det_sym(a, b, d);
    let small = if big != 0.0 { det / big } else { 0.0 };
    if big.abs() >= small.abs() {
        (big, small)
    } else {
        (small, big)
    }
}

/// `a d - b^2` with Kahan's compensated evaluation, accurate even when the
/// two products nearly cancel.
pub fn det_sym(a: f64, b: f64, d: f64) -> f64 {
    let w = b * b;
    let err = libm::fma(-b, b, w);
    libm::fma(a, d, -w) + err
}

/// Upper-triangular `R` with `R^T R = m` for symmetric positive
/// semidefinite `m`, tolerating rank deficiency. Rows of zeros mark missing
/// rank.
pub fn sqrt_psd(m: &Mat2) -> Mat2 {
    let (a, b, d) = entries(m);
    if a > 0.0 {
        let r11 = libm::sqrt(a);
        let r12 = b / r11;
        let r22 = libm::sqrt((det_sym(a, b, d) / a).max(0.0));
        Mat2::new(r11, r12, 0.0, r22)
    } else if d > 0.0 {
        Mat2::new(0.0, 0.0, 0.0, libm::sqrt(d))
    } else {
        Mat2::zeros()
    }
}

fn entries(m: &Mat2) -> (f64, f64, f64) {
    (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)])
}

/// Diagonal scaling `s` with `diag(s) m diag(s)` having a unit diagonal.
/// `None` when a diagonal entry is not positive.
fn equilibration(m: &Mat2) -> Option<Vec2> {
    let (a, _, d) = entries(m);
    if a > 0.0 && d > 0.0 && a.is_finite() && d.is_finite() {
        Some(Vec2::new(1.0 / libm::sqrt(a), 1.0 / libm::sqrt(d)))
    } else {
        None
    }
}

/// `1 - rho^2` of the equilibrated matrix, i.e. `det / (a d)`.
fn decorrelation(m: &Mat2) -> Option<f64> {
    equilibration(m)?;
    let (a, b, d) = entries(m);
    Some(det_sym(a, b, d) / a / d)
}

/// Condition number after diagonal equilibration, which is what governs
/// the accuracy of a 2x2 solve regardless of the units of the two
/// coordinates. Infinite when the matrix is not positive definite.
pub fn sym_condition(m: &Mat2) -> f64 {
    match decorrelation(m) {
        Some(q) if q > 0.0 => {
            let rho = libm::sqrt((1.0 - q).max(0.0));
            (1.0 + rho) / (1.0 - rho)
        }
        _ => f64::INFINITY,
    }
}

/// Inverse of a symmetric positive definite 2x2 matrix, refused above
/// [`MAX_CONDITION`].
pub fn inverse_sym(m: &Mat2) -> Option<Mat2> {
    if !(sym_condition(m) <= MAX_CONDITION) {
        return None;
    }
    Some(inverse_equilibrated(m))
}

fn inverse_equilibrated(m: &Mat2) -> Mat2 {
    let s = equilibration(m).expect("positive diagonal");
    let (a, b, d) = entries(m);
    let rho = b * s[0] * s[1];
    let q = det_sym(a, b, d) / a / d;
    Mat2::new(
        s[0] * s[0] / q,
        -rho * s[0] * s[1] / q,
        -rho * s[0] * s[1] / q,
        s[1] * s[1] / q,
    )
}

/// Solves `m x = h` for symmetric positive definite `m`.
pub fn solve_sym(m: &Mat2, h: &Vec2) -> Option<Vec2> {
    if !(sym_condition(m) <= MAX_CONDITION) {
        return None;
    }
    let s = equilibration(m)?;
    let (a, b, d) = entries(m);
    let rho = b * s[0] * s[1];
    let q = det_sym(a, b, d) / a / d;
    let g = Vec2::new(h[0] * s[0], h[1] * s[1]);
    Some(Vec2::new(
        s[0] * (g[0] - rho * g[1]) / q,
        s[1] * (g[1] - rho * g[0]) / q,
    ))
}

/// `(M + M^T) / 2`.
pub fn symmetrize(m: &Mat2) -> Mat2 {
    (m + m.transpose()) * 0.5
}
