//! Assembly of the two-component Hamiltonian on the periodic grid.
//!
//! Layout is point-major: row 2i is the upper component at x_i, row 2i+1
//! the lower one. The metric eta = diag(+1, -1, +1, -1, ...) makes H
//! pseudo-Hermitian: eta H^dag eta = H. With the quasi-1D kinetic operator
//!
//!   K = -hbar^2 d^2/dx^2 + (p_y - q A_y(x))^2 + p_z^2
//!
//! the blocks at each point are [[K/2m + qphi + mc^2, K/2m],
//! [-K/2m, -K/2m + qphi - mc^2]].
//!
//! Profiles are sampled with a seam midpoint convention: x_0 = -L/2 is its
//! own periodic mirror image, so analytic potentials get the average of
//! their two one-sided limits there. Without this the wrap discontinuity
//! of step-like profiles breaks the lattice mirror symmetry that makes
//! pseudodegenerate pairs share |Im E| to machine precision.

use std::io::{Read, Write};

use ndarray::Array2;
use num_complex::Complex;

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::fields::{self, FieldConfig, ScalarPotentialSpec};
use crate::grid::Grid;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeScheme {
    /// Exact circulant of the momentum-lattice multiplier p^2.
    Spectral,
    /// Periodic three-point stencil, second order in dx.
    FiniteDifference3,
}

#[derive(Debug, Clone)]
pub struct FvHamiltonian<T: Real> {
    matrix: Array2<Complex<T>>,
    grid: Grid<T>,
    fields: FieldConfig<T>,
    consts: PhysicalConstants<T>,
    scheme: DerivativeScheme,
    real_entries: bool,
}

/// Sign of the metric on row (or column) `idx` of the interleaved layout.
pub fn eta_sign<T: Real>(idx: usize) -> T {
    if idx % 2 == 0 {
        T::one()
    } else {
        -T::one()
    }
}

/// Indefinite inner product <a|b>_eta = sum_k conj(a_k) eta_k b_k dx.
pub fn pseudo_inner<T: Real>(
    a: &[Complex<T>],
    b: &[Complex<T>],
    grid: &Grid<T>,
) -> Result<Complex<T>> {
    let dim = 2 * grid.n();
    if a.len() != dim || b.len() != dim {
        return Err(Error::GridMismatch(format!(
            "vectors of length {} and {} on a grid of dimension {}",
            a.len(),
            b.len(),
            dim
        )));
    }
    let mut acc = Complex::new(T::zero(), T::zero());
    for k in 0..dim {
        let term = a[k].conj() * b[k];
        if k % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    Ok(acc * Complex::new(grid.dx(), T::zero()))
}

/// Potential energy samples q phi(x_i) with the seam midpoint convention.
pub fn potential_profile<T: Real>(spec: &ScalarPotentialSpec<T>, grid: &Grid<T>) -> Vec<T> {
    let mut vals: Vec<T> = grid.x().iter().map(|&x| fields::eval_scalar(spec, x)).collect();
    if !matches!(spec, ScalarPotentialSpec::Tabulated { .. }) {
        let x0 = grid.x()[0];
        vals[0] = T::lit(0.5)
            * (fields::eval_scalar(spec, x0) + fields::eval_scalar(spec, x0 + grid.length()));
    }
    vals
}

/// Gauge field samples A_y(x_i) with the seam midpoint convention.
pub fn vector_profile<T: Real>(
    spec: &crate::fields::VectorPotentialSpec<T>,
    grid: &Grid<T>,
) -> Vec<T> {
    let mut vals: Vec<T> = grid
        .x()
        .iter()
        .map(|&x| fields::eval_vector_y(spec, x))
        .collect();
    let x0 = grid.x()[0];
    vals[0] = T::lit(0.5)
        * (fields::eval_vector_y(spec, x0) + fields::eval_vector_y(spec, x0 + grid.length()));
    vals
}

fn kinetic_circulant<T: Real>(grid: &Grid<T>, scheme: DerivativeScheme) -> Vec<T> {
    let n = grid.n();
    match scheme {
        DerivativeScheme::Spectral => {
            // c_r = (1/N) sum_k p_k^2 cos(2 pi k r / N), summed directly for
            // r <= N/2 and mirrored, so the circulant is exactly symmetric.
            // Angles are reduced with integer arithmetic before the cosine.
            let p = grid.momenta();
            let two_pi = T::PI() + T::PI();
            let tn = T::from_usize(n).unwrap();
            let p_nyq = p[0] * p[0]; // k = -N/2
            let mut c = vec![T::zero(); n];
            for r in 0..=n / 2 {
                let mut acc = if r % 2 == 0 { p_nyq } else { -p_nyq };
                for k in 1..n / 2 {
                    let pk = p[n / 2 + k];
                    let phase = two_pi * T::from_usize((k * r) % n).unwrap() / tn;
                    acc += (T::one() + T::one()) * pk * pk * phase.cos();
                }
                c[r] = acc / tn;
                if r != 0 && r != n / 2 {
                    c[n - r] = c[r];
                }
            }
            c
        }
        DerivativeScheme::FiniteDifference3 => {
            let h2 = grid.hbar() * grid.hbar() / (grid.dx() * grid.dx());
            let mut c = vec![T::zero(); n];
            c[0] = (T::one() + T::one()) * h2;
            c[1] = -h2;
            c[n - 1] = -h2;
            c
        }
    }
}

pub fn assemble<T: Real>(
    grid: &Grid<T>,
    fields_cfg: &FieldConfig<T>,
    consts: &PhysicalConstants<T>,
    scheme: DerivativeScheme,
) -> Result<FvHamiltonian<T>> {
    fields_cfg.validate()?;
    consts.validate()?;
    let n = grid.n();
    if let ScalarPotentialSpec::Tabulated { x, .. } = &fields_cfg.scalar {
        if x.len() != n {
            return Err(Error::GridMismatch(format!(
                "tabulated potential has {} rows, grid has {} points",
                x.len(),
                n
            )));
        }
        let tol = T::lit(1e-9) * grid.dx();
        for (a, b) in x.iter().zip(grid.x()) {
            if (*a - *b).abs() > tol {
                return Err(Error::GridMismatch(
                    "tabulated x does not match the grid lattice".into(),
                ));
            }
        }
    }

    let qphi = potential_profile(&fields_cfg.scalar, grid);
    let ay = vector_profile(&fields_cfg.vector, grid);
    let circ = kinetic_circulant(grid, scheme);

    let (py, pz) = (fields_cfg.transverse.p_y, fields_cfg.transverse.p_z);
    let q = consts.q;
    let inv_2m = T::one() / (consts.m + consts.m);
    let mc2 = consts.mc2();

    let dim = 2 * n;
    let zero = Complex::new(T::zero(), T::zero());
    let mut h = Array2::from_elem((dim, dim), zero);
    for i in 0..n {
        let qa = q * ay[i];
        let kin_diag = py * py + pz * pz - (py + py) * qa + qa * qa;
        for j in 0..n {
            let mut k = circ[(n + i - j) % n];
            if i == j {
                k += kin_diag;
            }
            let t = k * inv_2m;
            if t != T::zero() || i == j {
                h[[2 * i, 2 * j]] = Complex::new(t, T::zero());
                h[[2 * i, 2 * j + 1]] = Complex::new(t, T::zero());
                h[[2 * i + 1, 2 * j]] = Complex::new(-t, T::zero());
                h[[2 * i + 1, 2 * j + 1]] = Complex::new(-t, T::zero());
            }
        }
        h[[2 * i, 2 * i]] += Complex::new(mc2 + qphi[i], T::zero());
        h[[2 * i + 1, 2 * i + 1]] += Complex::new(-mc2 + qphi[i], T::zero());
    }

    Ok(FvHamiltonian {
        matrix: h,
        grid: grid.clone(),
        fields: fields_cfg.clone(),
        consts: *consts,
        scheme,
        real_entries: true,
    })
}

impl<T: Real> FvHamiltonian<T> {
    pub fn matrix(&self) -> &Array2<Complex<T>> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn fields(&self) -> &FieldConfig<T> {
        &self.fields
    }

    pub fn consts(&self) -> &PhysicalConstants<T> {
        &self.consts
    }

    pub fn scheme(&self) -> DerivativeScheme {
        self.scheme
    }

    /// True when every entry has an exactly zero imaginary part, which
    /// holds for all field families currently assembled here and lets the
    /// eigensolver take the real-matrix path.
    pub fn is_real(&self) -> bool {
        self.real_entries
    }

    /// ||eta H^dag eta - H||_F / ||H||_F.
    pub fn pseudo_hermiticity_residual(&self) -> T {
        let dim = self.dim();
        let mut num = T::zero();
        let mut den = T::zero();
        for a in 0..dim {
            let sa = eta_sign::<T>(a);
            for b in 0..dim {
                let sb = eta_sign::<T>(b);
                let want = self.matrix[[a, b]];
                let got = self.matrix[[b, a]].conj() * Complex::new(sa * sb, T::zero());
                num += (got - want).norm_sqr();
                den += want.norm_sqr();
            }
        }
        (num / den).sqrt()
    }

    /// Binary dump: magic "FVH1", u64 rows, u64 cols, then row-major
    /// little-endian (re, im) f64 pairs.
    pub fn dump_matrix(&self, mut w: impl Write) -> Result<()> {
        w.write_all(b"FVH1")?;
        let (r, c) = (self.matrix.nrows() as u64, self.matrix.ncols() as u64);
        w.write_all(&r.to_le_bytes())?;
        w.write_all(&c.to_le_bytes())?;
        for row in self.matrix.rows() {
            for z in row {
                w.write_all(&z.re.to_f64().unwrap().to_le_bytes())?;
                w.write_all(&z.im.to_f64().unwrap().to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Read a matrix written by `dump_matrix`.
pub fn load_matrix<T: Real>(mut r: impl Read) -> Result<Array2<Complex<T>>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"FVH1" {
        return Err(Error::Io("not a Hamiltonian dump (bad magic)".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let rows = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let cols = u64::from_le_bytes(b8) as usize;
    if rows.checked_mul(cols).is_none() || rows * cols > (1 << 28) {
        return Err(Error::Io("dump dimensions out of range".into()));
    }
    let mut out = Array2::from_elem((rows, cols), Complex::new(T::zero(), T::zero()));
    for i in 0..rows {
        for j in 0..cols {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            out[[i, j]] = Complex::new(T::lit(re), T::lit(im));
        }
    }
    Ok(out)
}
