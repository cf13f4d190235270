//! Affine clock model `c(t) = alpha * t + beta` and its transformed form.

use crate::gauss::Vec2;
use crate::Error;

/// True clock of a node: skew `alpha` (dimensionless) and phase `beta` (s).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClockParams {
    pub alpha: f64,
    pub beta: f64,
}

impl ClockParams {
    /// Clock of a master node, identical to reference time.
    pub const MASTER: ClockParams = ClockParams {
        alpha: 1.0,
        beta: 0.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Result<Self, Error> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidSkew(alpha));
        }
        Ok(Self { alpha, beta })
    }

    /// Local clock reading at reference time `t`.
    pub fn local_time(&self, t: f64) -> f64 {
        self.alpha * t + self.beta
    }

    /// Reference time at which the clock reads `c`.
    pub fn reference_time(&self, c: f64) -> f64 {
        (c - self.beta) / self.alpha
    }

    pub fn to_transformed(&self) -> Result<TransformedParams, Error> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidSkew(self.alpha));
        }
        Ok(TransformedParams {
            lambda: 1.0 / self.alpha,
            nu: self.beta / self.alpha,
        })
    }
}

/// Free-function form of [`ClockParams::local_time`].
pub fn local_time(theta: &ClockParams, t: f64) -> f64 {
    theta.local_time(t)
}

/// Transformed clock parameters `lambda = 1/alpha`, `nu = beta/alpha`.
///
/// The approximate link likelihood is jointly Gaussian in these.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransformedParams {
    pub lambda: f64,
    pub nu: f64,
}

impl TransformedParams {
    pub const MASTER: TransformedParams = TransformedParams {
        lambda: 1.0,
        nu: 0.0,
    };

    pub fn from_vector(v: &Vec2) -> Self {
        Self {
            lambda: v[0],
            nu: v[1],
        }
    }

    pub fn to_vector(&self) -> Vec2 {
        Vec2::new(self.lambda, self.nu)
    }

    pub fn to_clock(&self) -> Result<ClockParams, Error> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidSkew(self.lambda));
        }
        Ok(ClockParams {
            alpha: 1.0 / self.lambda,
            beta: self.nu / self.lambda,
        })
    }

    /// Parameters of the same clock after its readings are shifted by
    /// `-epoch`, i.e. `nu' = nu - epoch * lambda`.
    pub fn shifted(&self, epoch: f64) -> Self {
        Self {
            lambda: self.lambda,
            nu: self.nu - epoch * self.lambda,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_time_examples() {
        let ideal = ClockParams::MASTER;
        assert_eq!(local_time(&ideal, 5.0), 5.0);
        let c = ClockParams::new(1.0001, 2.0).unwrap();
        assert!((c.local_time(10.0) - 12.001).abs() < 1e-12);
        let c = ClockParams::new(1.0, 0.3).unwrap();
        assert_eq!(c.local_time(0.0), 0.3);
    }

    #[test]
    fn transform_examples() {
        let t = ClockParams::MASTER.to_transformed().unwrap();
        assert_eq!(t, TransformedParams { lambda: 1.0, nu: 0.0 });
        let t = ClockParams::new(2.0, 4.0).unwrap().to_transformed().unwrap();
        assert_eq!(t, TransformedParams { lambda: 0.5, nu: 2.0 });
        let v = TransformedParams { lambda: 0.99990, nu: -3.1 };
        let back = v.to_clock().unwrap().to_transformed().unwrap();
        assert!((back.lambda - v.lambda).abs() < 1e-12);
        assert!((back.nu - v.nu).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_skew() {
        assert_eq!(ClockParams::new(0.0, 1.0), Err(Error::InvalidSkew(0.0)));
        let bad = ClockParams { alpha: -1.0, beta: 0.0 };
        assert!(bad.to_transformed().is_err());
        assert!(TransformedParams { lambda: 0.0, nu: 1.0 }.to_clock().is_err());
    }

    #[test]
    fn reference_time_inverts_local_time() {
        let c = ClockParams::new(0.99995, -7.25).unwrap();
        let t = 13.5;
        assert!((c.reference_time(c.local_time(t)) - t).abs() < 1e-12);
    }
}
