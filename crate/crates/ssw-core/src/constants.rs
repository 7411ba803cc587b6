use crate::error::{Error, Result};
use crate::scalar::Real;

/// Physical constants in Gaussian atomic-style units. All derived scales
/// (Compton length, rest energy) come from here; nothing else in the crate
/// hardcodes unit choices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants<T: Real> {
    pub hbar: T,
    pub m: T,
    pub c: T,
    pub q: T,
}

impl<T: Real> PhysicalConstants<T> {
    pub fn new(hbar: T, m: T, c: T, q: T) -> Result<Self> {
        let k = Self { hbar, m, c, q };
        k.validate()?;
        Ok(k)
    }

    /// hbar = m = 1, c = 137.036, q = -1 (a negatively charged boson).
    pub fn atomic() -> Self {
        Self {
            hbar: T::one(),
            m: T::one(),
            c: T::lit(137.036),
            q: -T::one(),
        }
    }

    /// All scales set to one; handy in unit tests.
    pub fn natural() -> Self {
        Self {
            hbar: T::one(),
            m: T::one(),
            c: T::one(),
            q: -T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: T, name: &str| -> Result<()> {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Constants(format!("{name} must be positive and finite")));
            }
            Ok(())
        };
        pos(self.hbar, "hbar")?;
        pos(self.m, "m")?;
        pos(self.c, "c")?;
        if self.q == T::zero() || !self.q.is_finite() {
            return Err(Error::Constants("q must be nonzero and finite".into()));
        }
        Ok(())
    }

    /// Rest energy m c^2.
    pub fn mc2(&self) -> T {
        self.m * self.c * self.c
    }

    /// Compton length hbar / (m c).
    pub fn lambda_c(&self) -> T {
        self.hbar / (self.m * self.c)
    }

    /// One unit of time in hbar / (m c^2).
    pub fn t_c(&self) -> T {
        self.hbar / self.mc2()
    }
}
