//! Scalar abstraction. The library is generic over the real float type; the
//! three dense LAPACK kernels are routed through this trait so generic code
//! carries no linear-algebra trait bounds.

use ndarray::Array2;
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, Signed, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use crate::error::{Error, Result};

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Signed
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Checked conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal not representable in this scalar type")
    }

    fn c(re: Self, im: Self) -> Complex<Self> {
        Complex::new(re, im)
    }

    /// Eigendecomposition of a general real matrix; complex eigenvalues and
    /// right eigenvectors (unit 2-norm columns, LAPACK convention).
    fn eig_real(m: &Array2<Self>) -> Result<(Vec<Complex<Self>>, Array2<Complex<Self>>)>;

    /// Eigendecomposition of a general complex matrix.
    fn eig_complex(
        m: &Array2<Complex<Self>>,
    ) -> Result<(Vec<Complex<Self>>, Array2<Complex<Self>>)>;

    /// Dense inverse of a complex matrix.
    fn inv_complex(m: &Array2<Complex<Self>>) -> Result<Array2<Complex<Self>>>;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn eig_real(m: &Array2<$t>) -> Result<(Vec<Complex<$t>>, Array2<Complex<$t>>)> {
                use ndarray_linalg::Eig;
                let (vals, vecs) = m.eig().map_err(|e| Error::Eigensolver(e.to_string()))?;
                Ok((vals.to_vec(), vecs))
            }

            fn eig_complex(
                m: &Array2<Complex<$t>>,
            ) -> Result<(Vec<Complex<$t>>, Array2<Complex<$t>>)> {
                use ndarray_linalg::Eig;
                let (vals, vecs) = m.eig().map_err(|e| Error::Eigensolver(e.to_string()))?;
                Ok((vals.to_vec(), vecs))
            }

            fn inv_complex(m: &Array2<Complex<$t>>) -> Result<Array2<Complex<$t>>> {
                use ndarray_linalg::Inverse;
                m.inv().map_err(|e| Error::LinearSolve(e.to_string()))
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn real_eig_recovers_rotation_pair() {
        // [[0, 1], [-1, 0]] has eigenvalues +-i.
        let m = array![[0.0_f64, 1.0], [-1.0, 0.0]];
        let (vals, _) = f64::eig_real(&m).unwrap();
        let mut ims: Vec<f64> = vals.iter().map(|z| z.im).collect();
        ims.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ims[0] + 1.0).abs() < 1e-14);
        assert!((ims[1] - 1.0).abs() < 1e-14);
        assert!(vals.iter().all(|z| z.re.abs() < 1e-14));
    }

    #[test]
    fn complex_inverse_roundtrip() {
        let m = array![
            [Complex::new(2.0_f64, 1.0), Complex::new(0.5, 0.0)],
            [Complex::new(0.0, -1.0), Complex::new(1.0, 0.25)]
        ];
        let inv = f64::inv_complex(&m).unwrap();
        let prod = m.dot(&inv);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - Complex::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn f32_kernels_work() {
        let m = array![[1.0_f32, 2.0], [0.0, 3.0]];
        let (vals, _) = f32::eig_real(&m).unwrap();
        let mut res: Vec<f32> = vals.iter().map(|z| z.re).collect();
        res.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((res[0] - 1.0).abs() < 1e-5);
        assert!((res[1] - 3.0).abs() < 1e-5);
    }
}
