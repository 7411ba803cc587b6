use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Numerical thresholds used across classification and diagnostics.
/// `im_eps` and `pair_eps` are absolute energies; the defaults scale with
/// the rest energy so reduced-unit and absolute-unit setups behave alike.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T: Real> {
    /// |Im E| above this counts as a genuinely complex eigenvalue.
    pub im_eps: T,
    /// Max distance between E and conj(partner) when matching pairs.
    pub pair_eps: T,
    /// Bound on ||L R - I||_max for an acceptable biorthogonal system.
    pub biorth_eps: T,
    /// Fraction of |psi|^2 inside the interaction region for a bound state.
    pub loc_threshold: T,
}

impl<T: Real> Tolerances<T> {
    pub fn for_constants(k: &PhysicalConstants<T>) -> Self {
        Self {
            im_eps: T::lit(1e-8) * k.mc2(),
            pair_eps: T::lit(1e-8) * k.mc2(),
            biorth_eps: T::lit(1e-10),
            loc_threshold: T::lit(0.9),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: T, name: &str| -> Result<()> {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Tolerances(format!("{name} must be positive and finite")));
            }
            Ok(())
        };
        pos(self.im_eps, "im_eps")?;
        pos(self.pair_eps, "pair_eps")?;
        pos(self.biorth_eps, "biorth_eps")?;
        pos(self.loc_threshold, "loc_threshold")?;
        if self.loc_threshold >= T::one() {
            return Err(Error::Tolerances("loc_threshold must be below 1".into()));
        }
        Ok(())
    }
}
