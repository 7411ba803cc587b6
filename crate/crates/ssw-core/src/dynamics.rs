//! Time evolution and pair-creation observables.
//!
//! The initial condition is always the full set of negative free modes.
//! The particle number is the squared Frobenius norm of the eta-overlap
//! matrix C_km(t) = <phi+_k | eta | psi_m(t)> dx, and the created-pair
//! density comes from the positive-subspace projection of the evolved
//! states. Two propagators: exact spectral evolution through the
//! biorthogonal decomposition, and the implicit midpoint (Cayley) step,
//! which is exactly eta-pseudo-unitary at any dt.

use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};

use ndarray::{Array1, Array2};
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::fields::TransverseMomenta;
use crate::grid::Grid;
use crate::hamiltonian::FvHamiltonian;
use crate::scalar::Real;
use crate::spectral::{eigensolve, BiorthogonalSpectrum};
use crate::tolerances::Tolerances;

pub struct FreeModeBasis<T: Real> {
    plus: Array2<Complex<T>>,
    minus: Array2<Complex<T>>,
    energies: Vec<T>,
    grid: Grid<T>,
}

/// Plane-wave eigenmodes of the free two-component problem, one positive
/// and one negative branch per grid momentum, eta-normalized to +-1.
pub fn build_free_basis<T: Real>(
    grid: &Grid<T>,
    consts: &PhysicalConstants<T>,
    transverse: TransverseMomenta<T>,
) -> FreeModeBasis<T> {
    let n = grid.n();
    let mc2 = consts.mc2();
    let c2 = consts.c * consts.c;
    let pt2 = transverse.p_y * transverse.p_y + transverse.p_z * transverse.p_z;
    let mut plus = Array2::from_elem((2 * n, n), Complex::new(T::zero(), T::zero()));
    let mut minus = plus.clone();
    let mut energies = Vec::with_capacity(n);
    let norm = T::one() / grid.length().sqrt();
    for (k, &p) in grid.momenta().iter().enumerate() {
        let e = (c2 * (p * p + pt2) + mc2 * mc2).sqrt();
        energies.push(e);
        let den = T::lit(2.0) * (mc2 * e).sqrt();
        let u1 = (mc2 + e) / den;
        let u2 = (mc2 - e) / den;
        for (j, &x) in grid.x().iter().enumerate() {
            let phase = Complex::new(T::zero(), p * x / grid.hbar()).exp()
                * Complex::new(norm, T::zero());
            plus[[2 * j, k]] = phase.scale(u1);
            plus[[2 * j + 1, k]] = phase.scale(u2);
            minus[[2 * j, k]] = phase.scale(u2);
            minus[[2 * j + 1, k]] = phase.scale(u1);
        }
    }
    FreeModeBasis {
        plus,
        minus,
        energies,
        grid: grid.clone(),
    }
}

impl<T: Real> FreeModeBasis<T> {
    /// Positive-branch modes as columns, ordered by grid momentum.
    pub fn plus(&self) -> &Array2<Complex<T>> {
        &self.plus
    }

    /// Negative-branch modes as columns; these are the initial states.
    pub fn minus(&self) -> &Array2<Complex<T>> {
        &self.minus
    }

    /// Positive branch energy E_p for each momentum column.
    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    /// Rows phi+_k^dag eta dx: applying this to a state matrix gives the
    /// pair amplitude matrix C whose Frobenius norm squared is N.
    pub fn eta_overlap_rows(&self) -> Array2<Complex<T>> {
        let (dim, n) = self.plus.dim();
        let dx = self.grid.dx();
        let mut a = Array2::from_elem((n, dim), Complex::new(T::zero(), T::zero()));
        for k in 0..n {
            for s in 0..dim {
                let sign = if s % 2 == 0 { dx } else { -dx };
                a[[k, s]] = self.plus[[s, k]].conj().scale(sign);
            }
        }
        a
    }
}

/// N = ||C||_F^2 for a pair amplitude matrix.
pub fn particle_number<T: Real>(c: &Array2<Complex<T>>) -> T {
    c.iter().map(|z| z.norm_sqr()).sum()
}

/// Created-pair density rho(x_j) from the positive-subspace projection
/// V = P+ C of the evolved states; integrates to exactly N.
pub fn particle_density<T: Real>(
    basis: &FreeModeBasis<T>,
    c: &Array2<Complex<T>>,
) -> Vec<T> {
    let v = basis.plus.dot(c);
    let n = basis.grid.n();
    let mut rho = vec![T::zero(); n];
    for j in 0..n {
        let mut acc = T::zero();
        for m in 0..c.ncols() {
            acc += v[[2 * j, m]].norm_sqr() - v[[2 * j + 1, m]].norm_sqr();
        }
        rho[j] = acc;
    }
    rho
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Propagator<T: Real> {
    /// Exact evolution through the biorthogonal eigendecomposition.
    /// Requires a diagonalizable spectrum.
    StaticSpectral,
    /// Implicit midpoint (Cayley) step; eta-pseudo-unitary at any dt.
    Midpoint { dt: T },
}

#[derive(Debug, Clone)]
pub struct EvolveOptions<T: Real> {
    pub propagator: Propagator<T>,
    pub t_max: T,
    /// Observable sampling interval. The midpoint propagator rounds it to
    /// the nearest whole number of steps.
    pub sample_dt: T,
    /// Record the created-pair density at every k-th sample.
    pub density_stride: Option<usize>,
    /// Keep the evolved state matrix at t_max (midpoint only).
    pub keep_final_state: bool,
}

impl<T: Real> EvolveOptions<T> {
    pub fn new(propagator: Propagator<T>, t_max: T, sample_dt: T) -> Self {
        Self {
            propagator,
            t_max,
            sample_dt,
            density_stride: None,
            keep_final_state: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionRecord<T: Real> {
    pub times: Vec<T>,
    pub n: Vec<T>,
    /// ln N, finite even when N overflows; -inf when N is exactly zero.
    pub ln_n: Vec<T>,
    pub density: Vec<(T, Vec<T>)>,
    pub final_state: Option<Array2<Complex<T>>>,
}

fn ln_to_value<T: Real>(ln_n: T) -> T {
    if ln_n == T::neg_infinity() {
        T::zero()
    } else {
        ln_n.exp()
    }
}

/// The midpoint propagator M = (I + X)^-1 (I - X) with X = i dt H / 2 hbar,
/// computed as 2 (I + X)^-1 - I.
pub(crate) fn midpoint_propagator<T: Real>(
    h_matrix: &Array2<Complex<T>>,
    dt: T,
    hbar: T,
) -> Result<Array2<Complex<T>>> {
    let dim = h_matrix.nrows();
    let coef = Complex::new(T::zero(), dt / (T::lit(2.0) * hbar));
    let mut a = h_matrix.mapv(|z| z * coef);
    for d in 0..dim {
        a[[d, d]] += Complex::new(T::one(), T::zero());
    }
    let k = T::inv_complex(&a)
        .map_err(|e| Error::LinearSolve(format!("midpoint step matrix: {e}")))?;
    let two = Complex::new(T::lit(2.0), T::zero());
    let mut m = k.mapv(|z| z * two);
    for d in 0..dim {
        m[[d, d]] -= Complex::new(T::one(), T::zero());
    }
    Ok(m)
}

static DT_WARNED: AtomicBool = AtomicBool::new(false);

pub(crate) fn warn_if_dt_coarse<T: Real>(h_matrix: &Array2<Complex<T>>, dt: T, hbar: T) {
    let mut norm = T::zero();
    for row in h_matrix.rows() {
        let s: T = row.iter().map(|z| z.norm()).sum();
        norm = norm.max(s);
    }
    if dt * norm / hbar > T::lit(0.5) && !DT_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!(
            "midpoint step dt ||H|| / hbar = {:e} exceeds 0.5; the scheme stays stable \
             but phase errors grow as (dt E / hbar)^3 per step",
            (dt * norm / hbar).to_f64().unwrap_or(f64::NAN)
        );
    }
}

fn sample_ln_n<T: Real>(a_rows: &Array2<Complex<T>>, psi: &Array2<Complex<T>>) -> (T, Array2<Complex<T>>) {
    let c = a_rows.dot(psi);
    let n = particle_number(&c);
    let ln = if n > T::zero() { n.ln() } else { T::neg_infinity() };
    (ln, c)
}

/// Evolve the full negative-mode set under the Hamiltonian and record
/// N(t) and optional density snapshots.
pub fn evolve<T: Real>(
    h: &FvHamiltonian<T>,
    basis: &FreeModeBasis<T>,
    opts: &EvolveOptions<T>,
    tol: &Tolerances<T>,
) -> Result<EvolutionRecord<T>> {
    if !basis.grid.same_lattice(h.grid()) {
        return Err(Error::GridMismatch(
            "free basis and Hamiltonian live on different lattices".into(),
        ));
    }
    if !(opts.t_max > T::zero()) || !(opts.sample_dt > T::zero()) || opts.sample_dt > opts.t_max {
        return Err(Error::Evolution(
            "need 0 < sample_dt <= t_max".into(),
        ));
    }
    let a_rows = basis.eta_overlap_rows();
    match opts.propagator {
        Propagator::StaticSpectral => {
            evolve_static(h, basis, &a_rows, opts, tol)
        }
        Propagator::Midpoint { dt } => {
            if !(dt > T::zero()) {
                return Err(Error::Evolution("midpoint dt must be positive".into()));
            }
            warn_if_dt_coarse(h.matrix(), dt, h.consts().hbar);
            let m = midpoint_propagator(h.matrix(), dt, h.consts().hbar)?;
            let steps = (opts.t_max / dt - T::lit(1e-9))
                .ceil()
                .to_usize()
                .ok_or_else(|| Error::Evolution("step count overflow".into()))?;
            let stride = (opts.sample_dt / dt)
                .round()
                .to_usize()
                .ok_or_else(|| Error::Evolution("sample stride overflow".into()))?
                .max(1);
            let mut psi = basis.minus.clone();
            let mut rec = EvolutionRecord {
                times: Vec::new(),
                n: Vec::new(),
                ln_n: Vec::new(),
                density: Vec::new(),
                final_state: None,
            };
            let mut scratch = psi.clone();
            for step in 0..=steps {
                if step > 0 {
                    ndarray::linalg::general_mat_mul(
                        Complex::new(T::one(), T::zero()),
                        &m,
                        &psi,
                        Complex::new(T::zero(), T::zero()),
                        &mut scratch,
                    );
                    std::mem::swap(&mut psi, &mut scratch);
                }
                if step % stride == 0 {
                    let t = dt * T::from_usize(step).expect("small step count");
                    let (ln, c) = sample_ln_n(&a_rows, &psi);
                    let n = ln_to_value(ln);
                    if !ln.is_finite() && ln != T::neg_infinity() {
                        return Err(Error::Evolution(format!(
                            "non-finite particle number at t = {t:?}"
                        )));
                    }
                    if let Some(k) = opts.density_stride {
                        if (step / stride) % k.max(1) == 0 {
                            rec.density.push((t, particle_density(basis, &c)));
                        }
                    }
                    rec.times.push(t);
                    rec.n.push(n);
                    rec.ln_n.push(ln);
                }
            }
            if opts.keep_final_state {
                rec.final_state = Some(psi);
            }
            Ok(rec)
        }
    }
}

fn evolve_static<T: Real>(
    h: &FvHamiltonian<T>,
    basis: &FreeModeBasis<T>,
    a_rows: &Array2<Complex<T>>,
    opts: &EvolveOptions<T>,
    tol: &Tolerances<T>,
) -> Result<EvolutionRecord<T>> {
    let spec = eigensolve(h, tol)?;
    let left = spec.left()?;
    let a_st = a_rows.dot(spec.right()); // N x 2N
    let b_st = left.dot(&basis.minus); // 2N x N
    let hbar = h.consts().hbar;
    let n_samples = (opts.t_max / opts.sample_dt + T::lit(1e-9))
        .floor()
        .to_usize()
        .ok_or_else(|| Error::Evolution("sample count overflow".into()))?
        + 1;
    let dim = spec.n_states();
    let mut rec = EvolutionRecord {
        times: Vec::with_capacity(n_samples),
        n: Vec::with_capacity(n_samples),
        ln_n: Vec::with_capacity(n_samples),
        density: Vec::new(),
        final_state: None,
    };
    let mut a_scaled = a_st.clone();
    for k in 0..n_samples {
        let t = opts.sample_dt * T::from_usize(k).expect("small sample count");
        // exp(-i E t / hbar) has real-log part Im(E) t / hbar; shift by the
        // largest so the scaled matrix stays finite, and fold the shift
        // back into ln N.
        let mut shift = T::zero();
        for s in 0..dim {
            shift = shift.max(spec.eigenvalue(s).im * t / hbar);
        }
        for s in 0..dim {
            let e = spec.eigenvalue(s);
            let w = Complex::new(e.im * t / hbar - shift, -e.re * t / hbar).exp();
            for r in 0..a_st.nrows() {
                a_scaled[[r, s]] = a_st[[r, s]] * w;
            }
        }
        let c_tilde = a_scaled.dot(&b_st);
        let frob = particle_number(&c_tilde);
        let ln = if frob > T::zero() {
            T::lit(2.0) * shift + frob.ln()
        } else {
            T::neg_infinity()
        };
        rec.times.push(t);
        rec.ln_n.push(ln);
        rec.n.push(ln_to_value(ln));
        if let Some(stride) = opts.density_stride {
            if k % stride.max(1) == 0 {
                let scale = (T::lit(2.0) * shift).exp();
                let mut rho = particle_density(basis, &c_tilde);
                for r in rho.iter_mut() {
                    *r *= scale;
                }
                rec.density.push((t, rho));
            }
        }
    }
    Ok(rec)
}

/// Maximum drift of the left-right pair product phi_i(t) psi_i(t) away
/// from 1 when both eigenvectors of a conjugate pair are propagated by the
/// midpoint step (the right vector forward, the left co-vector through the
/// inverse step). Exact biorthogonal evolution keeps the product at 1.
pub fn pair_product_drift<T: Real>(
    h: &FvHamiltonian<T>,
    spec: &BiorthogonalSpectrum<T>,
    indices: &[usize],
    dt: T,
    steps: usize,
) -> Result<Vec<T>> {
    let m = midpoint_propagator(h.matrix(), dt, h.consts().hbar)?;
    let m_inv = T::inv_complex(&m)
        .map_err(|e| Error::LinearSolve(format!("inverse midpoint step: {e}")))?;
    let left = spec.left()?;
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= spec.n_states() {
            return Err(Error::Evolution(format!("state index {i} out of range")));
        }
        let mut psi: Array1<Complex<T>> = spec.right_vector(i).to_owned();
        let mut phi: Array1<Complex<T>> = left.row(i).to_owned();
        let mut drift = T::zero();
        for _ in 0..steps {
            psi = m.dot(&psi);
            phi = m_inv.t().dot(&phi); // row vector times M^-1
            let prod: Complex<T> = phi.iter().zip(psi.iter()).map(|(a, b)| *a * *b).sum();
            drift = drift.max((prod - Complex::new(T::one(), T::zero())).norm());
        }
        out.push(drift);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub enum FitWindow<T: Real> {
    /// Start at max(t_max/2, the first sample with N above ten times the
    /// first local maximum) and fit to the end.
    Auto,
    /// Fit over [a, b].
    Range(T, T),
}

#[derive(Debug, Clone, Copy)]
pub struct GrowthFit<T: Real> {
    /// d ln N / dt.
    pub gamma: T,
    pub intercept: T,
    pub window: (T, T),
    pub n_used: usize,
}

/// Least-squares slope of ln N over the window. Samples with N = 0 are
/// skipped; fewer than ten usable samples is an error.
pub fn fit_growth_rate<T: Real>(
    rec: &EvolutionRecord<T>,
    window: FitWindow<T>,
) -> Result<GrowthFit<T>> {
    let t_end = *rec
        .times
        .last()
        .ok_or_else(|| Error::WindowTooShort("empty evolution record".into()))?;
    let (a, b) = match window {
        FitWindow::Range(a, b) => (a, b),
        FitWindow::Auto => {
            let mut first_max: Option<T> = None;
            for i in 1..rec.n.len().saturating_sub(1) {
                if rec.n[i] > rec.n[i - 1] && rec.n[i] > rec.n[i + 1] {
                    first_max = Some(rec.n[i]);
                    break;
                }
            }
            let mut start = t_end * T::lit(0.5);
            if let Some(m) = first_max {
                if let Some(k) = rec.n.iter().position(|&v| v > T::lit(10.0) * m) {
                    start = start.max(rec.times[k]);
                }
            }
            (start, t_end)
        }
    };
    let pts: Vec<(T, T)> = rec
        .times
        .iter()
        .zip(rec.ln_n.iter())
        .filter(|(&t, &ln)| t >= a && t <= b && ln.is_finite())
        .map(|(&t, &ln)| (t, ln))
        .collect();
    if pts.len() < 10 {
        return Err(Error::WindowTooShort(format!(
            "{} usable samples in [{:?}, {:?}]; need at least 10",
            pts.len(),
            a,
            b
        )));
    }
    let nf = T::from_usize(pts.len()).expect("small sample count");
    let mean_t = pts.iter().map(|p| p.0).sum::<T>() / nf;
    let mean_y = pts.iter().map(|p| p.1).sum::<T>() / nf;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (t, y) in &pts {
        sxx += (*t - mean_t) * (*t - mean_t);
        sxy += (*t - mean_t) * (*y - mean_y);
    }
    if sxx == T::zero() {
        return Err(Error::WindowTooShort("zero time spread in window".into()));
    }
    let gamma = sxy / sxx;
    Ok(GrowthFit {
        gamma,
        intercept: mean_y - gamma * mean_t,
        window: (a, b),
        n_used: pts.len(),
    })
}

/// Dominant angular frequency of N(t) on a uniformly sampled record:
/// detrend by the fitted exponential when the signal grows, subtract the
/// mean, Hann-window, FFT, and refine the dominant bin parabolically.
/// Returns None when no bin rises above five times the median magnitude.
pub fn oscillation_frequency<T: Real>(rec: &EvolutionRecord<T>) -> Result<Option<T>> {
    let len = rec.times.len();
    if len < 16 {
        return Err(Error::WindowTooShort(
            "need at least 16 samples for a frequency estimate".into(),
        ));
    }
    // A run that never created anything has no frequency; without this
    // floor the FFT would rank roundoff noise against its own median.
    if rec.n.iter().fold(T::zero(), |a, &b| a.max(b.abs())) < T::lit(1e-12) {
        return Ok(None);
    }
    let dt = rec.times[1] - rec.times[0];
    for w in rec.times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > dt * T::lit(1e-6) {
            return Err(Error::Evolution(
                "frequency estimate needs uniform sampling".into(),
            ));
        }
    }
    // Detrend growing signals so the oscillation is not buried under the
    // exponential envelope.
    let gamma = fit_growth_rate(rec, FitWindow::Range(rec.times[0], *rec.times.last().unwrap()))
        .map(|f| f.gamma)
        .unwrap_or(T::zero());
    let mut signal: Vec<T> = rec
        .n
        .iter()
        .zip(rec.times.iter())
        .map(|(&n, &t)| {
            if gamma > T::zero() {
                n * (-gamma * t).exp()
            } else {
                n
            }
        })
        .collect();
    let mean = signal.iter().copied().sum::<T>() / T::from_usize(len).unwrap();
    for s in signal.iter_mut() {
        *s -= mean;
    }
    if signal.iter().all(|s| *s == T::zero()) {
        return Ok(None);
    }
    let mut buf: Vec<Complex<T>> = signal
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let phase = T::lit(2.0) * T::PI() * T::from_usize(i).unwrap()
                / T::from_usize(len - 1).unwrap();
            let hann = T::lit(0.5) * (T::one() - phase.cos());
            Complex::new(s * hann, T::zero())
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    let mags: Vec<T> = buf[1..half].iter().map(|z| z.norm()).collect();
    if mags.is_empty() {
        return Ok(None);
    }
    let mut sorted = mags.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite magnitudes"));
    let median = sorted[sorted.len() / 2];
    let (kmax, &peak) = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite magnitudes"))
        .expect("non-empty");
    if !(peak > T::lit(5.0) * median) {
        return Ok(None);
    }
    // Parabolic refinement on log magnitudes of the three bins around the
    // peak; falls back to the raw bin at the edges.
    let k = kmax + 1; // index into buf
    let mut k_refined = T::from_usize(k).unwrap();
    if k >= 2 && k + 1 < half {
        let lm = buf[k - 1].norm().max(T::epsilon()).ln();
        let lc = buf[k].norm().max(T::epsilon()).ln();
        let lp = buf[k + 1].norm().max(T::epsilon()).ln();
        let den = lm - T::lit(2.0) * lc + lp;
        if den.abs() > T::epsilon() {
            let delta = T::lit(0.5) * (lm - lp) / den;
            if delta.abs() <= T::one() {
                k_refined += delta;
            }
        }
    }
    let omega = T::lit(2.0) * T::PI() * k_refined / (T::from_usize(len).unwrap() * dt);
    Ok(Some(omega))
}

/// Evolution record as CSV with times divided by `time_scale`.
pub fn write_evolution_csv<T: Real, W: Write>(
    rec: &EvolutionRecord<T>,
    time_scale: T,
    mut out: W,
) -> Result<()> {
    writeln!(out, "t,N,ln_N")?;
    for i in 0..rec.times.len() {
        writeln!(
            out,
            "{:.12e},{:.12e},{:.12e}",
            rec.times[i] / time_scale,
            rec.n[i],
            rec.ln_n[i]
        )?;
    }
    Ok(())
}

/// Density snapshots as long-format CSV (t, x, rho), t divided by
/// `time_scale` and x by `length_scale`.
pub fn write_density_csv<T: Real, W: Write>(
    rec: &EvolutionRecord<T>,
    grid: &Grid<T>,
    time_scale: T,
    length_scale: T,
    mut out: W,
) -> Result<()> {
    writeln!(out, "t,x,rho")?;
    for (t, rho) in &rec.density {
        for (j, &x) in grid.x().iter().enumerate() {
            writeln!(
                out,
                "{:.12e},{:.12e},{:.12e}",
                *t / time_scale,
                x / length_scale,
                rho[j]
            )?;
        }
    }
    Ok(())
}
