use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quad::{integrate, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierKind {
    /// `exp(1 - 1/(1 - r^2))` on the unit ball.
    CompactBump,
    /// `exp(-r^2/2)`. Not compactly supported; sensitivity runs only.
    GaussianReference,
}

impl MollifierKind {
    pub fn code(self) -> u8 {
        match self {
            MollifierKind::CompactBump => 0,
            MollifierKind::GaussianReference => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(MollifierKind::CompactBump),
            1 => Some(MollifierKind::GaussianReference),
            _ => None,
        }
    }
}

/// Radial Fourier profile of the mollifier at scale `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub kind: MollifierKind,
    pub eps: f64,
    /// Set when the profile violates the unit-ball support assumption.
    pub support_warning: bool,
}

pub fn make_mollifier(kind: MollifierKind, eps: f64) -> Result<MollifierSpec> {
    // eps = 1 is the unscaled field of the fixed-coupling model
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid("eps", format!("{eps} not in (0, 1]")));
    }
    Ok(MollifierSpec {
        kind,
        eps,
        support_warning: kind == MollifierKind::GaussianReference,
    })
}

impl MollifierSpec {
    /// `rho_hat(r)`, normalised so `rho_hat(0) = 1`.
    pub fn rho_hat(&self, r: f64) -> f64 {
        match self.kind {
            MollifierKind::CompactBump => {
                if r.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - r * r)).exp()
                }
            }
            MollifierKind::GaussianReference => (-0.5 * r * r).exp(),
        }
    }

    /// `V_hat(s) = rho_hat(s)^2`, unscaled.
    pub fn v_hat(&self, s: f64) -> f64 {
        let r = self.rho_hat(s);
        r * r
    }

    /// `V_hat_eps(p) = V_hat(eps |p|)`.
    pub fn v_hat_eps(&self, p: f64) -> f64 {
        self.v_hat(self.eps * p)
    }

    /// Radius (in unscaled units) beyond which `V_hat` is treated as zero.
    pub fn support(&self) -> f64 {
        match self.kind {
            MollifierKind::CompactBump => 1.0,
            // exp(-r^2) < 1e-27 past here
            MollifierKind::GaussianReference => 8.0,
        }
    }

    /// `int_0^support V_hat(s) s ds`.
    pub fn radial_moment(&self) -> Result<f64> {
        let tol = Tolerance {
            rel_tol: 1e-13,
            ..Tolerance::default()
        };
        Ok(integrate(|s| self.v_hat(s) * s, 0.0, self.support(), &[], tol)?.value)
    }

    /// One-point variance of each field component, `(pi/eps^2) int V_hat(s) s ds`.
    pub fn point_variance(&self) -> Result<f64> {
        Ok(std::f64::consts::PI / (self.eps * self.eps) * self.radial_moment()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_values() {
        let m = make_mollifier(MollifierKind::CompactBump, 0.1).unwrap();
        assert_eq!(m.rho_hat(0.0), 1.0);
        assert_eq!(m.rho_hat(1.0), 0.0);
        assert_eq!(m.rho_hat(1.5), 0.0);
        assert!((m.rho_hat(0.5) - 0.716_531_310_573_789_3).abs() < 1e-15);
        assert!(!m.support_warning);
        for k in 0..100 {
            let r = k as f64 * 0.0101;
            assert!((0.0..=1.0).contains(&m.rho_hat(r)));
        }
    }

    #[test]
    fn scaled_profile() {
        let m = make_mollifier(MollifierKind::CompactBump, 0.25).unwrap();
        assert_eq!(m.v_hat_eps(4.0), 0.0);
        assert_eq!(m.v_hat_eps(3.9999), m.v_hat(0.25 * 3.9999));
        assert!(m.v_hat_eps(3.99) > 0.0);
    }

    #[test]
    fn gaussian_is_flagged() {
        let m = make_mollifier(MollifierKind::GaussianReference, 0.5).unwrap();
        assert!(m.support_warning);
        assert_eq!(m.rho_hat(0.0), 1.0);
        // int_0^inf exp(-s^2) s ds = 1/2
        assert!((m.radial_moment().unwrap() - 0.5).abs() < 1e-13);
    }

    #[test]
    fn eps_range() {
        assert!(make_mollifier(MollifierKind::CompactBump, 0.0).is_err());
        assert!(make_mollifier(MollifierKind::CompactBump, 1.5).is_err());
        assert!(make_mollifier(MollifierKind::CompactBump, 1.0).is_ok());
    }

    #[test]
    fn bump_radial_moment() {
        let m = make_mollifier(MollifierKind::CompactBump, 0.2).unwrap();
        assert!((m.radial_moment().unwrap() - 0.138_671_383_111_777_46).abs() < 1e-13);
        assert!((m.point_variance().unwrap() - 10.891_224_961_177_393).abs() < 1e-10);
    }
}
