//! External field shapes.
//!
//! Scalar specs parameterize the potential energy q phi(x) directly (the
//! strength parameter v0 is an energy); vector specs give the gauge field
//! A_y(x) itself. Electric and magnetic profiles come from analytic
//! derivatives for the closed-form shapes and from a centered difference
//! (one-sided at the ends) for tabulated data.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarPotentialSpec<T: Real> {
    Zero,
    /// q phi(x) = v0/2 [tanh((x + l/2)/w) - tanh((x - l/2)/w)]
    SmoothBox { v0: T, l: T, w: T },
    /// q phi(x) = v0/2 [tanh(x/w_e) + 1]
    SmoothStep { v0: T, w_e: T },
    /// q phi sampled on a grid; x must match the target lattice.
    Tabulated { x: Vec<T>, qphi: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum VectorPotentialSpec<T: Real> {
    Zero,
    /// A_y(x) = a0/2 [tanh(x/w_b) + 1]
    SmoothStepY { a0: T, w_b: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseMomenta<T: Real> {
    pub p_y: T,
    pub p_z: T,
}

impl<T: Real> TransverseMomenta<T> {
    pub fn zero() -> Self {
        Self {
            p_y: T::zero(),
            p_z: T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfig<T: Real> {
    pub scalar: ScalarPotentialSpec<T>,
    pub vector: VectorPotentialSpec<T>,
    pub transverse: TransverseMomenta<T>,
}

impl<T: Real> FieldConfig<T> {
    pub fn free(transverse: TransverseMomenta<T>) -> Self {
        Self {
            scalar: ScalarPotentialSpec::Zero,
            vector: VectorPotentialSpec::Zero,
            transverse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.scalar {
            ScalarPotentialSpec::Zero => {}
            ScalarPotentialSpec::SmoothBox { v0, l, w } => {
                finite(*v0, "v0")?;
                if !(*l > T::zero()) || !(*w > T::zero()) {
                    return Err(Error::FieldSpec("box needs l > 0 and w > 0".into()));
                }
            }
            ScalarPotentialSpec::SmoothStep { v0, w_e } => {
                finite(*v0, "v0")?;
                if !(*w_e > T::zero()) {
                    return Err(Error::FieldSpec("step needs w_e > 0".into()));
                }
            }
            ScalarPotentialSpec::Tabulated { x, qphi } => {
                if x.len() != qphi.len() || x.len() < 8 {
                    return Err(Error::Tabulated(
                        "tabulated potential needs matching x/value columns, at least 8 rows".into(),
                    ));
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Tabulated("tabulated x must be strictly increasing".into()));
                }
                if qphi.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Tabulated("tabulated values must be finite".into()));
                }
            }
        }
        match &self.vector {
            VectorPotentialSpec::Zero => {}
            VectorPotentialSpec::SmoothStepY { a0, w_b } => {
                finite(*a0, "a0")?;
                if !(*w_b > T::zero()) {
                    return Err(Error::FieldSpec("vector step needs w_b > 0".into()));
                }
            }
        }
        finite(self.transverse.p_y, "p_y")?;
        finite(self.transverse.p_z, "p_z")?;
        Ok(())
    }
}

fn finite<T: Real>(v: T, name: &str) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::FieldSpec(format!("{name} must be finite")));
    }
    Ok(())
}

/// Potential energy q phi at position x.
pub fn eval_scalar<T: Real>(spec: &ScalarPotentialSpec<T>, x: T) -> T {
    match spec {
        ScalarPotentialSpec::Zero => T::zero(),
        ScalarPotentialSpec::SmoothBox { v0, l, w } => {
            let half = T::lit(0.5);
            half * *v0 * (((x + half * *l) / *w).tanh() - ((x - half * *l) / *w).tanh())
        }
        ScalarPotentialSpec::SmoothStep { v0, w_e } => {
            T::lit(0.5) * *v0 * ((x / *w_e).tanh() + T::one())
        }
        ScalarPotentialSpec::Tabulated { x: xs, qphi } => interp_clamped(xs, qphi, x),
    }
}

/// Gauge field A_y at position x.
pub fn eval_vector_y<T: Real>(spec: &VectorPotentialSpec<T>, x: T) -> T {
    match spec {
        VectorPotentialSpec::Zero => T::zero(),
        VectorPotentialSpec::SmoothStepY { a0, w_b } => {
            T::lit(0.5) * *a0 * ((x / *w_b).tanh() + T::one())
        }
    }
}

/// Electric field E = -d phi / dx = -(1/q) d(q phi)/dx.
/// Tabulated specs are differentiated with a centered stencil in the
/// interior and one-sided differences at the first and last sample.
pub fn eval_electric_field<T: Real>(spec: &ScalarPotentialSpec<T>, x: T, q: T) -> T {
    match spec {
        ScalarPotentialSpec::Zero => T::zero(),
        ScalarPotentialSpec::SmoothBox { v0, l, w } => {
            let half = T::lit(0.5);
            let s1 = sech2((x + half * *l) / *w);
            let s2 = sech2((x - half * *l) / *w);
            -(half * *v0 / *w) * (s1 - s2) / q
        }
        ScalarPotentialSpec::SmoothStep { v0, w_e } => {
            -(T::lit(0.5) * *v0 / *w_e) * sech2(x / *w_e) / q
        }
        ScalarPotentialSpec::Tabulated { x: xs, qphi } => {
            let n = xs.len();
            let i = nearest_index(xs, x);
            let slope = if i == 0 {
                (qphi[1] - qphi[0]) / (xs[1] - xs[0])
            } else if i == n - 1 {
                (qphi[n - 1] - qphi[n - 2]) / (xs[n - 1] - xs[n - 2])
            } else {
                (qphi[i + 1] - qphi[i - 1]) / (xs[i + 1] - xs[i - 1])
            };
            -slope / q
        }
    }
}

/// Magnetic field B_z = d A_y / dx.
pub fn eval_magnetic_z<T: Real>(spec: &VectorPotentialSpec<T>, x: T) -> T {
    match spec {
        VectorPotentialSpec::Zero => T::zero(),
        VectorPotentialSpec::SmoothStepY { a0, w_b } => {
            (T::lit(0.5) * *a0 / *w_b) * sech2(x / *w_b)
        }
    }
}

fn sech2<T: Real>(u: T) -> T {
    let c = u.cosh();
    T::one() / (c * c)
}

/// Replace the strength parameter of an analytic scalar spec.
pub fn with_strength<T: Real>(spec: &ScalarPotentialSpec<T>, v0: T) -> Result<ScalarPotentialSpec<T>> {
    match spec {
        ScalarPotentialSpec::SmoothBox { l, w, .. } => Ok(ScalarPotentialSpec::SmoothBox {
            v0,
            l: *l,
            w: *w,
        }),
        ScalarPotentialSpec::SmoothStep { w_e, .. } => Ok(ScalarPotentialSpec::SmoothStep {
            v0,
            w_e: *w_e,
        }),
        ScalarPotentialSpec::Zero => Err(Error::FieldSpec(
            "cannot set a strength on the zero potential".into(),
        )),
        ScalarPotentialSpec::Tabulated { .. } => Err(Error::FieldSpec(
            "cannot set a strength on a tabulated potential".into(),
        )),
    }
}

pub fn strength<T: Real>(spec: &ScalarPotentialSpec<T>) -> Option<T> {
    match spec {
        ScalarPotentialSpec::SmoothBox { v0, .. } => Some(*v0),
        ScalarPotentialSpec::SmoothStep { v0, .. } => Some(*v0),
        _ => None,
    }
}

/// Values of (q phi, A_y) far to the left and far to the right of the
/// interaction region; tabulated specs use their end samples.
pub fn asymptotics<T: Real>(cfg: &FieldConfig<T>) -> ((T, T), (T, T)) {
    let scalar = match &cfg.scalar {
        ScalarPotentialSpec::Zero => (T::zero(), T::zero()),
        ScalarPotentialSpec::SmoothBox { .. } => (T::zero(), T::zero()),
        ScalarPotentialSpec::SmoothStep { v0, .. } => (T::zero(), *v0),
        ScalarPotentialSpec::Tabulated { qphi, .. } => {
            (qphi[0], *qphi.last().expect("validated nonempty"))
        }
    };
    let vector = match &cfg.vector {
        VectorPotentialSpec::Zero => (T::zero(), T::zero()),
        VectorPotentialSpec::SmoothStepY { a0, .. } => (T::zero(), *a0),
    };
    ((scalar.0, vector.0), (scalar.1, vector.1))
}

/// Radius of the interaction region used by the localization measure:
/// four times the widest profile scale, clamped inside the box. Falls
/// back to L/6 when no analytic scale is available.
pub fn localization_radius<T: Real>(cfg: &FieldConfig<T>, grid: &Grid<T>) -> T {
    let five = T::lit(5.0);
    let mut scale = T::zero();
    match &cfg.scalar {
        ScalarPotentialSpec::SmoothBox { l, w, .. } => {
            scale = scale.max(*l).max(five * *w);
        }
        ScalarPotentialSpec::SmoothStep { w_e, .. } => {
            scale = scale.max(five * *w_e);
        }
        _ => {}
    }
    if let VectorPotentialSpec::SmoothStepY { w_b, .. } = &cfg.vector {
        scale = scale.max(*w_b);
    }
    let r = if scale > T::zero() {
        T::lit(4.0) * scale
    } else {
        grid.length() / T::lit(6.0)
    };
    r.min(T::lit(0.45) * grid.length())
}

fn nearest_index<T: Real>(xs: &[T], x: T) -> usize {
    match xs.binary_search_by(|a| a.partial_cmp(&x).expect("finite tabulated x")) {
        Ok(i) => i,
        Err(i) => {
            if i == 0 {
                0
            } else if i >= xs.len() {
                xs.len() - 1
            } else if (x - xs[i - 1]).abs() <= (xs[i] - x).abs() {
                i - 1
            } else {
                i
            }
        }
    }
}

fn interp_clamped<T: Real>(xs: &[T], ys: &[T], x: T) -> T {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = match xs.binary_search_by(|a| a.partial_cmp(&x).expect("finite tabulated x")) {
        Ok(i) => return ys[i],
        Err(i) => i,
    };
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

/// Read a two-column whitespace-separated table (x, q phi); '#' starts a comment.
pub fn read_tabulated<T: Real>(r: impl Read) -> Result<ScalarPotentialSpec<T>> {
    let mut x = Vec::new();
    let mut qphi = Vec::new();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut it = body.split_whitespace();
        let (a, b) = (it.next(), it.next());
        match (a, b) {
            (Some(a), Some(b)) => {
                let xa: f64 = a.parse().map_err(|_| bad_row(lineno))?;
                let vb: f64 = b.parse().map_err(|_| bad_row(lineno))?;
                x.push(T::lit(xa));
                qphi.push(T::lit(vb));
            }
            _ => return Err(bad_row(lineno)),
        }
    }
    let spec = ScalarPotentialSpec::Tabulated { x, qphi };
    FieldConfig {
        scalar: spec.clone(),
        vector: VectorPotentialSpec::Zero,
        transverse: TransverseMomenta::zero(),
    }
    .validate()?;
    Ok(spec)
}

fn bad_row(lineno: usize) -> Error {
    Error::Tabulated(format!("line {}: expected two numeric columns", lineno + 1))
}

/// Write a tabulated potential with enough digits for an exact roundtrip.
pub fn write_tabulated<T: Real>(spec: &ScalarPotentialSpec<T>, mut w: impl Write) -> Result<()> {
    match spec {
        ScalarPotentialSpec::Tabulated { x, qphi } => {
            writeln!(w, "# x  qphi")?;
            for (a, b) in x.iter().zip(qphi) {
                writeln!(
                    w,
                    "{:.17e} {:.17e}",
                    a.to_f64().unwrap(),
                    b.to_f64().unwrap()
                )?;
            }
            Ok(())
        }
        _ => Err(Error::FieldSpec("only tabulated potentials can be written".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::PhysicalConstants;
    use crate::grid::make_grid;

    #[test]
    fn box_center_value() {
        // Depth at the center is v0 tanh(l / 2w); frozen for l/w = 11.
        let spec = ScalarPotentialSpec::SmoothBox {
            v0: -2.0_f64,
            l: 2.2,
            w: 0.2,
        };
        let got = eval_scalar(&spec, 0.0);
        assert!((got - (-2.0 * 0.9999665971563038)).abs() < 1e-14);
    }

    #[test]
    fn step_quarter_height_point() {
        let spec = ScalarPotentialSpec::SmoothStep {
            v0: 3.0_f64,
            w_e: 0.3,
        };
        let got = eval_scalar(&spec, 0.3);
        assert!((got / 3.0 - 0.8807970779778824).abs() < 1e-14);
        assert!((eval_scalar(&spec, 0.0) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn electric_field_reconstructs_potential() {
        // q phi(x) - q phi(-X) must equal -q * integral of E, to 1e-8 relative.
        let q = -1.0;
        for spec in [
            ScalarPotentialSpec::SmoothBox {
                v0: 1.7,
                l: 2.2,
                w: 0.2,
            },
            ScalarPotentialSpec::SmoothStep { v0: -2.4, w_e: 0.3 },
        ] {
            let (x0, x1, n) = (-12.0, 12.0, 200_000);
            let h = (x1 - x0) / n as f64;
            let mut acc = 0.0;
            let mut worst = 0.0_f64;
            for i in 0..n {
                let xl = x0 + i as f64 * h;
                let xr = xl + h;
                acc += 0.5 * h * (eval_electric_field(&spec, xl, q) + eval_electric_field(&spec, xr, q));
                let want = eval_scalar(&spec, xr) - eval_scalar(&spec, x0);
                let got = -q * acc;
                worst = worst.max((got - want).abs());
            }
            assert!(worst < 1e-8 * 2.4, "reconstruction error {worst}");
        }
    }

    #[test]
    fn step_field_peak_magnitude() {
        let (v0, w_e, q) = (3.1_f64, 0.3_f64, -1.0_f64);
        let spec = ScalarPotentialSpec::SmoothStep { v0, w_e };
        let peak = eval_electric_field(&spec, 0.0, q).abs();
        assert!((peak - (v0 / (2.0 * q * w_e)).abs()) < 1e-12);
    }

    #[test]
    fn vector_step_and_magnetic_profile() {
        let spec = VectorPotentialSpec::SmoothStepY {
            a0: -2.64_f64,
            w_b: 2.2,
        };
        assert!((eval_vector_y(&spec, 0.0) + 1.32).abs() < 1e-14);
        assert!(eval_vector_y(&spec, -50.0).abs() < 1e-14);
        assert!((eval_vector_y(&spec, 50.0) + 2.64).abs() < 1e-12);
        // B_z peak a0 / (2 w_b) at the step center.
        assert!((eval_magnetic_z(&spec, 0.0) + 2.64 / 4.4).abs() < 1e-12);
    }

    #[test]
    fn strength_replacement() {
        let spec = ScalarPotentialSpec::SmoothBox {
            v0: -2.0,
            l: 2.2,
            w: 0.2,
        };
        let s2 = with_strength(&spec, -2.25).unwrap();
        assert_eq!(strength(&s2), Some(-2.25));
        assert!(with_strength(&ScalarPotentialSpec::<f64>::Zero, 1.0).is_err());
    }

    #[test]
    fn tabulated_roundtrip_and_interpolation() {
        let xs: Vec<f64> = (0..16).map(|i| -2.0 + 0.25 * i as f64).collect();
        let vals: Vec<f64> = xs.iter().map(|x| (x * 0.7).sin()).collect();
        let spec = ScalarPotentialSpec::Tabulated {
            x: xs.clone(),
            qphi: vals.clone(),
        };
        let mut buf = Vec::new();
        write_tabulated(&spec, &mut buf).unwrap();
        let back: ScalarPotentialSpec<f64> = read_tabulated(&buf[..]).unwrap();
        assert_eq!(spec, back);
        // on-sample lookup is exact, midpoints are linear
        assert_eq!(eval_scalar(&spec, xs[3]), vals[3]);
        let mid = eval_scalar(&spec, xs[3] + 0.125);
        assert!((mid - 0.5 * (vals[3] + vals[4])).abs() < 1e-15);
        // clamped outside the table
        assert_eq!(eval_scalar(&spec, -99.0), vals[0]);
    }

    #[test]
    fn localization_radius_standard_families() {
        let k = PhysicalConstants::<f64>::atomic();
        let lam = k.lambda_c();
        let g = make_grid(64, 24.0 * lam, &k).unwrap();
        let box_cfg = FieldConfig {
            scalar: ScalarPotentialSpec::SmoothBox {
                v0: -2.2,
                l: 2.2 * lam,
                w: 0.2 * lam,
            },
            vector: VectorPotentialSpec::Zero,
            transverse: TransverseMomenta::zero(),
        };
        assert!((localization_radius(&box_cfg, &g) - 8.8 * lam).abs() < 1e-15);
        let step_cfg = FieldConfig {
            scalar: ScalarPotentialSpec::SmoothStep {
                v0: 3.0,
                w_e: 0.3 * lam,
            },
            vector: VectorPotentialSpec::SmoothStepY {
                a0: -2.64 * k.m * k.c / k.q.abs(),
                w_b: 2.2 * lam,
            },
            transverse: TransverseMomenta::zero(),
        };
        assert!((localization_radius(&step_cfg, &g) - 8.8 * lam).abs() < 1e-12);
        let free = FieldConfig::free(TransverseMomenta::zero());
        assert!((localization_radius(&free, &g) - 4.0 * lam).abs() < 1e-12);
    }
}
