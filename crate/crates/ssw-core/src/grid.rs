//! Uniform periodic grid and its momentum lattice.
//!
//! Positions: x_i = -L/2 + i dx, i = 0..N, dx = L/N. Momenta: p_k =
//! 2 pi hbar k / L for integer k in [-N/2, N/2), kept sorted ascending.
//! The point x = -L/2 is its own periodic mirror image; assembly code
//! relies on that when sampling potentials (see `hamiltonian`).

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct Grid<T: Real> {
    n: usize,
    length: T,
    dx: T,
    hbar: T,
    x: Vec<T>,
    p: Vec<T>,
}

pub fn make_grid<T: Real>(
    n: usize,
    length: T,
    consts: &PhysicalConstants<T>,
) -> Result<Grid<T>> {
    consts.validate()?;
    if n < 8 || n % 2 != 0 {
        return Err(Error::Grid(format!("n must be even and at least 8, got {n}")));
    }
    if !(length > T::zero()) || !length.is_finite() {
        return Err(Error::Grid("length must be positive and finite".into()));
    }
    let tn = T::from_usize(n).unwrap();
    let dx = length / tn;
    let half = T::from_usize(n / 2).unwrap();
    let x: Vec<T> = (0..n)
        .map(|i| (T::from_usize(i).unwrap() - half) * dx)
        .collect();
    let two_pi = T::PI() + T::PI();
    let p: Vec<T> = (0..n)
        .map(|s| {
            let k = T::from_usize(s).unwrap() - half; // integer index, ascending
            two_pi * consts.hbar * k / length
        })
        .collect();
    Ok(Grid {
        n,
        length,
        dx,
        hbar: consts.hbar,
        x,
        p,
    })
}

impl<T: Real> Grid<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn hbar(&self) -> T {
        self.hbar
    }

    /// Positions, ascending from -L/2 inclusive to L/2 exclusive.
    pub fn x(&self) -> &[T] {
        &self.x
    }

    /// Momentum lattice, sorted ascending.
    pub fn momenta(&self) -> &[T] {
        &self.p
    }

    pub fn same_lattice(&self, other: &Grid<T>) -> bool {
        self.n == other.n && self.length == other.length && self.hbar == other.hbar
    }

    /// FFT bin holding sorted momentum index `s`.
    pub fn fft_bin(&self, s: usize) -> usize {
        (s + self.n / 2) % self.n
    }

    /// Unitary transform of a position-space field to momentum amplitudes,
    /// returned in sorted-momentum order: a_s = <exp(i p_s x / hbar) / sqrt(N) | f>.
    pub fn to_momentum(&self, f: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if f.len() != self.n {
            return Err(Error::GridMismatch(format!(
                "field has {} samples, grid has {}",
                f.len(),
                self.n
            )));
        }
        let mut buf = f.to_vec();
        FftPlanner::new().plan_fft_forward(self.n).process(&mut buf);
        let norm = T::one() / T::from_usize(self.n).unwrap().sqrt();
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.n];
        for s in 0..self.n {
            // x_0 = -L/2 shifts each bin by a (-1)^k phase.
            let k = s as isize - (self.n / 2) as isize;
            let sign = if k.rem_euclid(2) == 0 { T::one() } else { -T::one() };
            out[s] = buf[self.fft_bin(s)] * Complex::new(sign * norm, T::zero());
        }
        Ok(out)
    }

    /// Inverse of `to_momentum`.
    pub fn to_position(&self, a: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if a.len() != self.n {
            return Err(Error::GridMismatch(format!(
                "spectrum has {} samples, grid has {}",
                a.len(),
                self.n
            )));
        }
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.n];
        for s in 0..self.n {
            let k = s as isize - (self.n / 2) as isize;
            let sign = if k.rem_euclid(2) == 0 { T::one() } else { -T::one() };
            buf[self.fft_bin(s)] = a[s] * Complex::new(sign, T::zero());
        }
        FftPlanner::new().plan_fft_inverse(self.n).process(&mut buf);
        let norm = T::one() / T::from_usize(self.n).unwrap().sqrt();
        Ok(buf.into_iter().map(|z| z * Complex::new(norm, T::zero())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_consts() -> PhysicalConstants<f64> {
        PhysicalConstants::natural()
    }

    #[test]
    fn momentum_lattice_n8() {
        let g = make_grid(8, 8.0, &unit_consts()).unwrap();
        let pi = std::f64::consts::PI;
        let want: Vec<f64> = (-4..4).map(|k| pi * k as f64 / 4.0).collect();
        for (a, b) in g.momenta().iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(g.x()[0], -4.0);
        assert_eq!(g.dx(), 1.0);
    }

    #[test]
    fn max_momentum_at_default_resolution() {
        // N = 256 on L = 8 Compton lengths: max |p| c is about 100.5 mc^2.
        let k = PhysicalConstants::<f64>::atomic();
        let g = make_grid(256, 8.0 * k.lambda_c(), &k).unwrap();
        let pmax = g.momenta().iter().fold(0.0_f64, |m, p| m.max(p.abs()));
        let ratio = pmax * k.c / k.mc2();
        assert!((ratio - 32.0 * std::f64::consts::PI).abs() < 1e-9);
        assert!((ratio - 100.53096491487338).abs() < 1e-9);
    }

    #[test]
    fn rejects_odd_or_tiny_n() {
        assert!(make_grid(7, 1.0, &unit_consts()).is_err());
        assert!(make_grid(6, 1.0, &unit_consts()).is_err());
        assert!(make_grid(10, -1.0, &unit_consts()).is_err());
    }

    #[test]
    fn plane_wave_maps_to_single_momentum_bin() {
        let g = make_grid(32, 4.0, &unit_consts()).unwrap();
        let s_target = 20; // k = 4
        let p = g.momenta()[s_target];
        let f: Vec<Complex<f64>> = g
            .x()
            .iter()
            .map(|&x| Complex::from_polar(1.0 / (32.0_f64).sqrt(), p * x))
            .collect();
        let a = g.to_momentum(&f).unwrap();
        for (s, z) in a.iter().enumerate() {
            if s == s_target {
                assert!((z - Complex::new(1.0, 0.0)).norm() < 1e-12);
            } else {
                assert!(z.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn transform_roundtrip_preserves_field_and_norm() {
        let g = make_grid(64, 3.0, &unit_consts()).unwrap();
        let f: Vec<Complex<f64>> = (0..64)
            .map(|i| Complex::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let a = g.to_momentum(&f).unwrap();
        let back = g.to_position(&a).unwrap();
        let n2_f: f64 = f.iter().map(|z| z.norm_sqr()).sum();
        let n2_a: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        assert!((n2_f - n2_a).abs() < 1e-10 * n2_f);
        for (u, v) in f.iter().zip(&back) {
            assert!((u - v).norm() < 1e-12);
        }
    }
}
