//! Biorthogonal eigenanalysis of the assembled Hamiltonian and the
//! classification layer on top of it: bound/resonance/continuum labels,
//! charge character from the sign of the eta norm, regime tags, strength
//! sweeps with state tracking, and bisection for critical strengths.

use std::io::Write;
use std::sync::OnceLock;

use ndarray::{Array2, ArrayView1};
use num_complex::Complex;

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::fields::{self, FieldConfig};
use crate::grid::Grid;
use crate::hamiltonian::{assemble, DerivativeScheme, FvHamiltonian};
use crate::scalar::Real;
use crate::tolerances::Tolerances;

/// Unit-norm eta self-products below this count as degenerate (a state at
/// the edge of coalescence has no usable charge sign).
const BOUNDARY_ETA_EPS: f64 = 1e-6;
/// A conjugate pair with |Im E| below this multiple of `im_eps` is treated
/// as sitting on a regime boundary rather than inside a pair regime.
const BOUNDARY_IM_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralClass {
    /// Real or pseudodegenerate state strictly inside the gap, localized.
    Bound,
    /// Complex-energy state outside the gap or delocalized.
    Resonance,
    /// Real state belonging to one of the asymptotic continua.
    Continuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeCharacter {
    /// Positive eta norm.
    Particle,
    /// Negative eta norm.
    Antiparticle,
    /// |eta norm| too small to assign (complex pairs, coalescence points).
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLabel {
    pub class: SpectralClass,
    pub charge: ChargeCharacter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialFamily {
    /// Smooth square well, electric field only.
    BoxWell,
    /// Smooth electric step combined with a magnetic vector step.
    StepWithB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Free,
    I,
    II,
    III,
    IV,
    V,
    /// Within tolerance of a transition; counts are not trustworthy here.
    Boundary,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::Free => "free",
            Regime::I => "I",
            Regime::II => "II",
            Regime::III => "III",
            Regime::IV => "IV",
            Regime::V => "V",
            Regime::Boundary => "boundary",
        };
        f.write_str(s)
    }
}

pub struct BiorthogonalSpectrum<T: Real> {
    evals: Vec<Complex<T>>,
    right: Array2<Complex<T>>,
    left: OnceLock<Result<Array2<Complex<T>>>>,
    partner: Vec<Option<usize>>,
    eta_self: Vec<T>,
    localization: Vec<T>,
    labels: OnceLock<Vec<StateLabel>>,
    grid: Grid<T>,
    fields: FieldConfig<T>,
    consts: PhysicalConstants<T>,
    tol: Tolerances<T>,
}

fn cmp_re_im<T: Real>(a: &Complex<T>, b: &Complex<T>) -> std::cmp::Ordering {
    a.re.partial_cmp(&b.re)
        .expect("finite eigenvalues")
        .then(a.im.partial_cmp(&b.im).expect("finite eigenvalues"))
}

/// Raw decomposition: eigenvalues and unit-norm right eigenvector columns,
/// sorted by (Re, Im). Takes the real-matrix LAPACK path when possible.
fn raw_eig_sorted<T: Real>(
    matrix: &Array2<Complex<T>>,
    real_entries: bool,
) -> Result<(Vec<Complex<T>>, Array2<Complex<T>>)> {
    let dim = matrix.nrows();
    let (vals, vecs) = if real_entries {
        let m_re = matrix.mapv(|z| z.re);
        T::eig_real(&m_re)?
    } else {
        T::eig_complex(matrix)?
    };
    if vals.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigensolver("non-finite eigenvalues returned".into()));
    }
    if vals.len() != dim {
        return Err(Error::Eigensolver(format!(
            "incomplete spectrum: got {} of {} eigenvalues",
            vals.len(),
            dim
        )));
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| cmp_re_im(&vals[a], &vals[b]));
    let sorted_vals: Vec<Complex<T>> = order.iter().map(|&i| vals[i]).collect();
    let mut sorted_vecs = Array2::from_elem((dim, dim), Complex::new(T::zero(), T::zero()));
    for (dst, &src) in order.iter().enumerate() {
        let col = vecs.column(src);
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        let scale = Complex::new(T::one() / norm, T::zero());
        for r in 0..dim {
            sorted_vecs[[r, dst]] = col[r] * scale;
        }
    }
    Ok((sorted_vals, sorted_vecs))
}

/// Max-norm estimate of ||L R - I|| from a deterministic sample of columns.
fn residual_estimate<T: Real>(l: &Array2<Complex<T>>, r: &Array2<Complex<T>>) -> T {
    let dim = r.nrows();
    let samples = 32.min(dim);
    let mut worst = T::zero();
    for k in 0..samples {
        let j = k * dim / samples;
        let rj = r.column(j);
        let lr_j = l.dot(&rj);
        for (i, z) in lr_j.iter().enumerate() {
            let want = if i == j { T::one() } else { T::zero() };
            let err = (*z - Complex::new(want, T::zero())).norm();
            worst = worst.max(err);
        }
    }
    worst
}

/// Invert the right-eigenvector matrix and polish with Newton steps
/// L <- L (2I - R L) until the sampled residual is comfortably below
/// `biorth_eps`. Failure to converge means the eigenbasis is numerically
/// defective (an exceptional point).
fn invert_refined<T: Real>(right: &Array2<Complex<T>>, biorth_eps: T) -> Result<Array2<Complex<T>>> {
    let mut left = T::inv_complex(right).map_err(|e| {
        Error::ExceptionalPoint(format!("right eigenvector matrix is singular: {e}"))
    })?;
    let dim = right.nrows();
    let target = biorth_eps * T::lit(0.1);
    for _ in 0..2 {
        if residual_estimate(&left, right) <= target {
            break;
        }
        // L (2I - R L)
        let rl = right.dot(&left);
        let mut two_i_minus = rl.mapv(|z| -z);
        for d in 0..dim {
            two_i_minus[[d, d]] += Complex::new(T::one() + T::one(), T::zero());
        }
        left = left.dot(&two_i_minus);
    }
    let est = residual_estimate(&left, right);
    if est > T::lit(1e-8) {
        return Err(Error::ExceptionalPoint(format!(
            "biorthogonalization stalled at residual {est:e}; eigenvectors are near-parallel"
        )));
    }
    // With unit right vectors and l_i r_i = 1, the left row norm is the
    // eigenvalue condition number; it diverges at an exceptional point.
    // kappa * eps is the relative eigenvalue uncertainty; cap it at 1e-3.
    let mut kappa = T::zero();
    for i in 0..dim {
        let rn = left.row(i).iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        kappa = kappa.max(rn);
    }
    if kappa * T::epsilon() > T::lit(1e-3) {
        return Err(Error::ExceptionalPoint(format!(
            "eigenvalue condition number {kappa:e}; spectrum is numerically defective"
        )));
    }
    Ok(left)
}

fn match_conjugate_pairs<T: Real>(
    evals: &[Complex<T>],
    tol: &Tolerances<T>,
) -> Result<Vec<Option<usize>>> {
    let dim = evals.len();
    let complex_idx: Vec<usize> = (0..dim)
        .filter(|&i| evals[i].im.abs() > tol.im_eps)
        .collect();
    let mut partner: Vec<Option<usize>> = vec![None; dim];
    for &i in &complex_idx {
        let want = evals[i].conj();
        let mut best: Option<(usize, T)> = None;
        for &j in &complex_idx {
            if j == i {
                continue;
            }
            let d = (evals[j] - want).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        match best {
            Some((j, d)) if d <= tol.pair_eps => partner[i] = Some(j),
            _ => {
                return Err(Error::Pairing(format!(
                    "eigenvalue {:?} has no conjugate partner within pair_eps",
                    evals[i]
                )))
            }
        }
    }
    for &i in &complex_idx {
        let j = partner[i].expect("set above");
        if partner[j] != Some(i) {
            return Err(Error::Pairing(
                "conjugate partner assignment is not mutual".into(),
            ));
        }
    }
    Ok(partner)
}

pub fn eigensolve<T: Real>(
    h: &FvHamiltonian<T>,
    tol: &Tolerances<T>,
) -> Result<BiorthogonalSpectrum<T>> {
    tol.validate()?;
    let (evals, right) = raw_eig_sorted(h.matrix(), h.is_real())?;
    let partner = match_conjugate_pairs(&evals, tol)?;

    let grid = h.grid().clone();
    let n = grid.n();
    let dim = 2 * n;
    let mut eta_self = vec![T::zero(); dim];
    for j in 0..dim {
        let mut acc = T::zero();
        for k in 0..dim {
            let m = right[[k, j]].norm_sqr();
            if k % 2 == 0 {
                acc += m;
            } else {
                acc -= m;
            }
        }
        eta_self[j] = acc;
    }

    let r_loc = fields::localization_radius(h.fields(), &grid);
    let mut localization = vec![T::zero(); dim];
    for j in 0..dim {
        let mut inside = T::zero();
        let mut total = T::zero();
        for (i, &x) in grid.x().iter().enumerate() {
            let w = right[[2 * i, j]].norm_sqr() + right[[2 * i + 1, j]].norm_sqr();
            total += w;
            if x.abs() <= r_loc {
                inside += w;
            }
        }
        localization[j] = inside / total;
    }

    Ok(BiorthogonalSpectrum {
        evals,
        right,
        left: OnceLock::new(),
        partner,
        eta_self,
        localization,
        labels: OnceLock::new(),
        grid,
        fields: h.fields().clone(),
        consts: *h.consts(),
        tol: *tol,
    })
}

/// Energies bounding the gap: (top of the lower continuum, bottom of the
/// upper continuum), from the asymptotic field values on both sides.
pub fn continuum_edges<T: Real>(
    cfg: &FieldConfig<T>,
    consts: &PhysicalConstants<T>,
) -> (T, T) {
    let ((phi_l, a_l), (phi_r, a_r)) = fields::asymptotics(cfg);
    let branch = |qphi: T, a: T| -> (T, T) {
        let ky = cfg.transverse.p_y - consts.q * a;
        let kz = cfg.transverse.p_z;
        let e = ((ky * ky + kz * kz) * consts.c * consts.c
            + consts.mc2() * consts.mc2())
        .sqrt();
        (qphi - e, qphi + e)
    };
    let (lo_l, up_l) = branch(phi_l, a_l);
    let (lo_r, up_r) = branch(phi_r, a_r);
    (lo_l.max(lo_r), up_l.min(up_r))
}

/// Analytic strength at which the two continua begin to overlap, for
/// step-shaped scalar potentials (left asymptote 0, right asymptote v0).
/// The field-free, zero-momentum reduction gives exactly 2 mc^2.
pub fn overlap_strength_analytic<T: Real>(
    cfg: &FieldConfig<T>,
    consts: &PhysicalConstants<T>,
) -> Option<T> {
    match &cfg.scalar {
        fields::ScalarPotentialSpec::SmoothStep { .. } => {
            let ((_, a_l), (_, a_r)) = fields::asymptotics(cfg);
            let e_side = |a: T| -> T {
                let ky = cfg.transverse.p_y - consts.q * a;
                let kz = cfg.transverse.p_z;
                ((ky * ky + kz * kz) * consts.c * consts.c + consts.mc2() * consts.mc2()).sqrt()
            };
            Some(e_side(a_l) + e_side(a_r))
        }
        _ => None,
    }
}

impl<T: Real> BiorthogonalSpectrum<T> {
    pub fn n_states(&self) -> usize {
        self.evals.len()
    }

    pub fn eigenvalues(&self) -> &[Complex<T>] {
        &self.evals
    }

    pub fn eigenvalue(&self, i: usize) -> Complex<T> {
        self.evals[i]
    }

    /// Right eigenvectors as unit-norm columns, sorted by (Re, Im).
    pub fn right(&self) -> &Array2<Complex<T>> {
        &self.right
    }

    pub fn right_vector(&self, i: usize) -> ArrayView1<'_, Complex<T>> {
        self.right.column(i)
    }

    /// Left eigenvectors as rows with L R = I; computed on first use.
    pub fn left(&self) -> Result<&Array2<Complex<T>>> {
        self.left
            .get_or_init(|| invert_refined(&self.right, self.tol.biorth_eps))
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// Index of the conjugate partner for complex eigenvalues.
    pub fn partner(&self, i: usize) -> Option<usize> {
        self.partner[i]
    }

    /// psi^dag eta psi of the unit-norm right eigenvector (no dx weight).
    pub fn eta_self(&self, i: usize) -> T {
        self.eta_self[i]
    }

    /// Fraction of |psi|^2 inside the interaction region.
    pub fn localization(&self, i: usize) -> T {
        self.localization[i]
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

    pub fn tolerances(&self) -> &Tolerances<T> {
        &self.tol
    }

    /// Exact ||L R - I||_max; forms the full product, so costs a matmul.
    pub fn biorth_residual_max(&self) -> Result<T> {
        let l = self.left()?;
        let lr = l.dot(&self.right);
        let dim = lr.nrows();
        let mut worst = T::zero();
        for i in 0..dim {
            for j in 0..dim {
                let want = if i == j { T::one() } else { T::zero() };
                worst = worst.max((lr[[i, j]] - Complex::new(want, T::zero())).norm());
            }
        }
        Ok(worst)
    }
}

/// Label every state. Bound means strictly inside the gap and localized;
/// complex states outside the gap or delocalized are resonances; real
/// states failing either bound test belong to a continuum.
pub fn classify_states<'a, T: Real>(spec: &'a BiorthogonalSpectrum<T>) -> &'a [StateLabel] {
    spec.labels.get_or_init(|| {
        let (e_lo, e_up) = continuum_edges(&spec.fields, &spec.consts);
        let eta_eps = T::lit(BOUNDARY_ETA_EPS);
        (0..spec.n_states())
            .map(|i| {
                let e = spec.evals[i];
                let is_complex = e.im.abs() > spec.tol.im_eps;
                let localized = spec.localization[i] > spec.tol.loc_threshold;
                let inside = e.re > e_lo && e.re < e_up;
                let class = if is_complex {
                    if inside && localized {
                        SpectralClass::Bound
                    } else {
                        SpectralClass::Resonance
                    }
                } else if inside && localized {
                    SpectralClass::Bound
                } else {
                    SpectralClass::Continuum
                };
                let charge = if is_complex || spec.eta_self[i].abs() < eta_eps {
                    ChargeCharacter::Degenerate
                } else if spec.eta_self[i] > T::zero() {
                    ChargeCharacter::Particle
                } else {
                    ChargeCharacter::Antiparticle
                };
                StateLabel { class, charge }
            })
            .collect()
    })
}

struct RegimeCensus<T: Real> {
    /// Indices of Im > 0 members of localized conjugate pairs.
    pairs_localized: Vec<usize>,
    /// Im > 0 complex states that are delocalized.
    pairs_delocalized: Vec<usize>,
    bound_real: Vec<usize>,
    antiparticle_bound: Vec<usize>,
    degenerate_bound: Vec<usize>,
    max_im_pair: Option<usize>,
    _marker: std::marker::PhantomData<T>,
}

fn census<T: Real>(spec: &BiorthogonalSpectrum<T>) -> RegimeCensus<T> {
    let labels = classify_states(spec);
    let mut c = RegimeCensus {
        pairs_localized: Vec::new(),
        pairs_delocalized: Vec::new(),
        bound_real: Vec::new(),
        antiparticle_bound: Vec::new(),
        degenerate_bound: Vec::new(),
        max_im_pair: None,
        _marker: std::marker::PhantomData,
    };
    for i in 0..spec.n_states() {
        let e = spec.eigenvalue(i);
        let is_complex = e.im.abs() > spec.tol.im_eps;
        if is_complex {
            if e.im <= T::zero() {
                continue; // count each pair once, via its upper member
            }
            if spec.localization(i) > spec.tol.loc_threshold {
                c.pairs_localized.push(i);
            } else {
                c.pairs_delocalized.push(i);
            }
            let better = c
                .max_im_pair
                .map_or(true, |b| e.im.abs() > spec.eigenvalue(b).im.abs());
            if better {
                c.max_im_pair = Some(i);
            }
        } else if labels[i].class == SpectralClass::Bound {
            c.bound_real.push(i);
            match labels[i].charge {
                ChargeCharacter::Antiparticle => c.antiparticle_bound.push(i),
                ChargeCharacter::Degenerate => c.degenerate_bound.push(i),
                ChargeCharacter::Particle => {}
            }
        }
    }
    c
}

/// Regime tag for a labeled spectrum.
///
/// BoxWell: Free (no bound states), I (bound particles only), II (an
/// antiparticle bound state has emerged), III (pseudodegenerate pair inside
/// the gap), IV (pair real part at or below the lower continuum edge).
/// StepWithB: Free/I (no pairs), II (one pair), III (pair resolved back
/// to >= 4 real bound states), IV (two pairs), V (continua overlap).
/// Pairs count whether localized or not: just below the overlap threshold
/// they hybridize with the continua and their localization dips, but a
/// complex eigenvalue can never belong to a free spectrum. Boundary is
/// returned within tolerance of any transition.
pub fn regime_classify<T: Real>(
    spec: &BiorthogonalSpectrum<T>,
    family: PotentialFamily,
) -> Result<Regime> {
    let c = census(spec);
    let boundary_im = spec.tol.im_eps * T::lit(BOUNDARY_IM_FACTOR);
    let fresh_pair = c
        .pairs_localized
        .iter()
        .chain(c.pairs_delocalized.iter())
        .any(|&i| spec.eigenvalue(i).im.abs() <= boundary_im);
    match family {
        PotentialFamily::BoxWell => {
            if !c.pairs_localized.is_empty() || !c.pairs_delocalized.is_empty() {
                if fresh_pair {
                    return Ok(Regime::Boundary);
                }
                let dom = c.max_im_pair.expect("pairs exist");
                let re = spec.eigenvalue(dom).re;
                let edge = -spec.consts.mc2();
                if (re - edge).abs() <= T::lit(1e-6) * spec.consts.mc2() {
                    return Ok(Regime::Boundary);
                }
                return Ok(if re > edge { Regime::III } else { Regime::IV });
            }
            if !c.degenerate_bound.is_empty() {
                return Ok(Regime::Boundary);
            }
            if !c.antiparticle_bound.is_empty() {
                return Ok(Regime::II);
            }
            if !c.bound_real.is_empty() {
                return Ok(Regime::I);
            }
            Ok(Regime::Free)
        }
        PotentialFamily::StepWithB => {
            let (e_lo, e_up) = continuum_edges(&spec.fields, &spec.consts);
            if e_lo >= e_up {
                return Ok(Regime::V);
            }
            if fresh_pair || !c.degenerate_bound.is_empty() {
                return Ok(Regime::Boundary);
            }
            match c.pairs_localized.len() + c.pairs_delocalized.len() {
                0 => {
                    if c.bound_real.len() >= 4 {
                        Ok(Regime::III)
                    } else if !c.bound_real.is_empty() {
                        Ok(Regime::I)
                    } else {
                        Ok(Regime::Free)
                    }
                }
                1 => Ok(Regime::II),
                2 => Ok(Regime::IV),
                k => Err(Error::Unclassifiable(format!(
                    "{k} conjugate pairs below the overlap threshold"
                ))),
            }
        }
    }
}

/// Biorthogonal density of a bound (or localized-resonance) state:
/// rho_j = (L_i(2j) R_i(2j) + L_i(2j+1) R_i(2j+1)) / dx. Complex in
/// general; for a real eigenvalue the left row is psi^dagger eta and rho
/// is real. Integrates to exactly L_i R_i = 1 by construction.
pub fn biorthogonal_density<T: Real>(
    spec: &BiorthogonalSpectrum<T>,
    i: usize,
) -> Result<Vec<Complex<T>>> {
    if i >= spec.n_states() {
        return Err(Error::NotBound(format!("state index {i} out of range")));
    }
    let labels = classify_states(spec);
    if labels[i].class == SpectralClass::Continuum {
        return Err(Error::NotBound(format!(
            "state {i} belongs to a continuum; its biorthogonal density is not normalizable"
        )));
    }
    let left = spec.left()?;
    let n = spec.grid.n();
    let dx = spec.grid.dx();
    let mut rho = vec![Complex::new(T::zero(), T::zero()); n];
    for j in 0..n {
        let t = left[[i, 2 * j]] * spec.right[[2 * j, i]]
            + left[[i, 2 * j + 1]] * spec.right[[2 * j + 1, i]];
        rho[j] = t / dx;
    }
    Ok(rho)
}

#[derive(Debug, Clone)]
pub struct SweepRow<T: Real> {
    /// Stable track id across the sweep.
    pub track: usize,
    pub e: Complex<T>,
    pub bound: bool,
}

#[derive(Debug, Clone)]
pub struct SweepPoint<T: Real> {
    pub v0: T,
    pub regime: Regime,
    pub rows: Vec<SweepRow<T>>,
}

#[derive(Debug, Clone)]
pub struct SweepTable<T: Real> {
    pub points: Vec<SweepPoint<T>>,
}

impl<T: Real> SweepTable<T> {
    /// (v0, E) samples of one track, in sweep order.
    pub fn track_series(&self, track: usize) -> Vec<(T, Complex<T>)> {
        self.points
            .iter()
            .flat_map(|p| {
                p.rows
                    .iter()
                    .filter(move |r| r.track == track)
                    .map(move |r| (p.v0, r.e))
            })
            .collect()
    }

    pub fn n_tracks(&self) -> usize {
        self.points
            .iter()
            .flat_map(|p| p.rows.iter().map(|r| r.track))
            .max()
            .map_or(0, |m| m + 1)
    }
}

struct Track<T: Real> {
    id: usize,
    /// Last two (v0, E) samples, newest last.
    hist: Vec<(T, Complex<T>)>,
    vec: Vec<Complex<T>>,
}

impl<T: Real> Track<T> {
    fn predict(&self, v0: T) -> Complex<T> {
        match self.hist.len() {
            1 => self.hist[0].1,
            _ => {
                let (v_a, e_a) = self.hist[self.hist.len() - 2];
                let (v_b, e_b) = self.hist[self.hist.len() - 1];
                let dv = v_b - v_a;
                if dv.abs() < T::epsilon() {
                    e_b
                } else {
                    let t = (v0 - v_b) / dv;
                    e_b + (e_b - e_a) * Complex::new(t, T::zero())
                }
            }
        }
    }

    /// Largest step the track may take without being declared a jump:
    /// ten grid points of the local slope, floored at slope one.
    fn gate(&self, v0: T) -> T {
        let (v_b, _) = *self.hist.last().expect("non-empty history");
        let dv = (v0 - v_b).abs();
        let slope = if self.hist.len() >= 2 {
            let (v_a, e_a) = self.hist[self.hist.len() - 2];
            let (_, e_b) = self.hist[self.hist.len() - 1];
            let d = (v_b - v_a).abs();
            if d < T::epsilon() {
                T::one()
            } else {
                (e_b - e_a).norm() / d
            }
        } else {
            T::one()
        };
        T::lit(10.0) * dv * slope.max(T::one())
    }
}

fn overlap_mag<T: Real>(a: &[Complex<T>], b: ArrayView1<'_, Complex<T>>) -> T {
    let mut acc = Complex::new(T::zero(), T::zero());
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * *y;
    }
    acc.norm()
}

/// The same field configuration with the scalar strength replaced.
pub fn config_at_strength<T: Real>(base: &FieldConfig<T>, v0: T) -> Result<FieldConfig<T>> {
    Ok(FieldConfig {
        scalar: fields::with_strength(&base.scalar, v0)?,
        vector: base.vector.clone(),
        transverse: base.transverse,
    })
}

/// Eigensolve at each strength and connect bound states and pair members
/// into continuous tracks. Strengths must be strictly monotone. Matching
/// is nearest-to-prediction with an eigenvector-overlap tie break; a
/// candidate outside every gate starts a new track.
pub fn sweep<T: Real>(
    grid: &Grid<T>,
    base: &FieldConfig<T>,
    consts: &PhysicalConstants<T>,
    scheme: DerivativeScheme,
    family: PotentialFamily,
    v0_values: &[T],
    tol: &Tolerances<T>,
) -> Result<SweepTable<T>> {
    if v0_values.len() < 2 {
        return Err(Error::FieldSpec("sweep needs at least two strengths".into()));
    }
    let ascending = v0_values[1] > v0_values[0];
    for w in v0_values.windows(2) {
        if (ascending && w[1] <= w[0]) || (!ascending && w[1] >= w[0]) {
            return Err(Error::FieldSpec("sweep strengths must be strictly monotone".into()));
        }
    }

    let mut tracks: Vec<Track<T>> = Vec::new();
    let mut next_id = 0usize;
    let mut points = Vec::with_capacity(v0_values.len());

    for &v0 in v0_values {
        let cfg = config_at_strength(base, v0)?;
        let h = assemble(grid, &cfg, consts, scheme)?;
        let spec = eigensolve(&h, tol)?;
        let regime = regime_classify(&spec, family).unwrap_or(Regime::Boundary);
        let labels = classify_states(&spec);

        // Candidates worth tracking: bound states and pair members (Im > 0).
        let mut cand: Vec<usize> = (0..spec.n_states())
            .filter(|&i| {
                let e = spec.eigenvalue(i);
                let complex = e.im > spec.tol.im_eps;
                complex || labels[i].class == SpectralClass::Bound
            })
            .collect();
        cand.sort_by(|&a, &b| cmp_re_im(&spec.eigenvalue(a), &spec.eigenvalue(b)));

        // Greedy global matching: repeatedly take the closest
        // (track, candidate) pair that passes the track's gate.
        let mut cand_taken = vec![false; cand.len()];
        let mut track_taken = vec![false; tracks.len()];
        let mut assign: Vec<(usize, usize)> = Vec::new(); // (track slot, cand slot)
        loop {
            let mut best: Option<(usize, usize, T)> = None;
            for (ts, tr) in tracks.iter().enumerate() {
                if track_taken[ts] {
                    continue;
                }
                let pred = tr.predict(v0);
                let gate = tr.gate(v0);
                for (cs, &ci) in cand.iter().enumerate() {
                    if cand_taken[cs] {
                        continue;
                    }
                    let d = (spec.eigenvalue(ci) - pred).norm();
                    if d > gate {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bts, bcs, bd)) => {
                            if (d - bd).abs() <= bd * T::lit(0.5) {
                                // Near tie: prefer the larger vector overlap.
                                let cur = overlap_mag(
                                    &tracks[ts].vec,
                                    spec.right_vector(ci),
                                );
                                let old = overlap_mag(
                                    &tracks[bts].vec,
                                    spec.right_vector(cand[bcs]),
                                );
                                cur > old
                            } else {
                                d < bd
                            }
                        }
                    };
                    if better {
                        best = Some((ts, cs, d));
                    }
                }
            }
            match best {
                Some((ts, cs, _)) => {
                    track_taken[ts] = true;
                    cand_taken[cs] = true;
                    assign.push((ts, cs));
                }
                None => break,
            }
        }

        let mut rows: Vec<SweepRow<T>> = Vec::new();
        for (ts, cs) in assign {
            let ci = cand[cs];
            let e = spec.eigenvalue(ci);
            let tr = &mut tracks[ts];
            tr.hist.push((v0, e));
            if tr.hist.len() > 2 {
                tr.hist.remove(0);
            }
            tr.vec = spec.right_vector(ci).to_vec();
            rows.push(SweepRow {
                track: tr.id,
                e,
                bound: labels[ci].class == SpectralClass::Bound,
            });
        }
        for (cs, &ci) in cand.iter().enumerate() {
            if cand_taken[cs] {
                continue;
            }
            let e = spec.eigenvalue(ci);
            tracks.push(Track {
                id: next_id,
                hist: vec![(v0, e)],
                vec: spec.right_vector(ci).to_vec(),
            });
            rows.push(SweepRow {
                track: next_id,
                e,
                bound: labels[ci].class == SpectralClass::Bound,
            });
            next_id += 1;
        }
        rows.sort_by_key(|r| r.track);
        points.push(SweepPoint { v0, regime, rows });

        // Tracks that lost their state stay dormant; drop them so a later
        // unrelated state cannot silently resurrect an old id.
        let live: Vec<bool> = tracks
            .iter()
            .map(|t| t.hist.last().map_or(false, |&(v, _)| v == v0))
            .collect();
        let mut k = 0;
        tracks.retain(|_| {
            let keep = live[k];
            k += 1;
            keep
        });
    }
    Ok(SweepTable { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalKind {
    /// An antiparticle bound state first appears.
    Emergence,
    /// Particle and antiparticle bound states merge into a complex pair.
    Coalescence,
    /// A second pair forms from the remaining bound states.
    Anticoalescence,
    /// The continua begin to overlap (delocalized complex states appear).
    Overlap,
}

#[derive(Debug, Clone, Copy)]
pub struct CriticalPoint<T: Real> {
    pub v0: T,
    pub bracket: (T, T),
    pub iterations: usize,
    pub kind: CriticalKind,
}

fn critical_predicate<T: Real>(spec: &BiorthogonalSpectrum<T>, kind: CriticalKind) -> bool {
    match kind {
        CriticalKind::Emergence => {
            let labels = classify_states(spec);
            (0..spec.n_states()).any(|i| {
                labels[i].class == SpectralClass::Bound
                    && labels[i].charge == ChargeCharacter::Antiparticle
            })
        }
        CriticalKind::Coalescence => pair_count(spec) >= 1,
        CriticalKind::Anticoalescence => pair_count(spec) >= 2,
        CriticalKind::Overlap => (0..spec.n_states()).any(|i| {
            spec.eigenvalue(i).im > spec.tolerances().im_eps
                && spec.localization(i) <= spec.tolerances().loc_threshold
        }),
    }
}

fn pair_count<T: Real>(spec: &BiorthogonalSpectrum<T>) -> usize {
    (0..spec.n_states())
        .filter(|&i| {
            spec.eigenvalue(i).im > spec.tolerances().im_eps
                && spec.localization(i) > spec.tolerances().loc_threshold
        })
        .count()
}

/// Bisect the strength until the transition named by `kind` is bracketed
/// to `v0_tol`. The endpoints must straddle the transition.
pub fn find_critical<T: Real>(
    grid: &Grid<T>,
    base: &FieldConfig<T>,
    consts: &PhysicalConstants<T>,
    scheme: DerivativeScheme,
    kind: CriticalKind,
    bracket: (T, T),
    v0_tol: T,
    tol: &Tolerances<T>,
) -> Result<CriticalPoint<T>> {
    if !(v0_tol > T::zero()) {
        return Err(Error::Tolerances("v0_tol must be positive".into()));
    }
    let probe = |v0: T| -> Result<bool> {
        let cfg = config_at_strength(base, v0)?;
        let h = assemble(grid, &cfg, consts, scheme)?;
        let spec = eigensolve(&h, tol)?;
        Ok(critical_predicate(&spec, kind))
    };
    let (mut lo, mut hi) = bracket;
    let p_lo = probe(lo)?;
    let p_hi = probe(hi)?;
    if p_lo == p_hi {
        return Err(Error::Bracket(format!(
            "predicate is {p_lo} at both endpoints"
        )));
    }
    let mut iterations = 0usize;
    while (hi - lo).abs() > v0_tol {
        let mid = (lo + hi) * T::lit(0.5);
        if mid == lo || mid == hi {
            break; // strengths no longer representable apart
        }
        let p_mid = probe(mid)?;
        if p_mid == p_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Ok(CriticalPoint {
        v0: (lo + hi) * T::lit(0.5),
        bracket: (lo, hi),
        iterations,
        kind,
    })
}

/// Sweep table as CSV. Energies are divided by `energy_scale` and
/// strengths by `v0_scale` so callers can emit natural units.
pub fn write_sweep_csv<T: Real, W: Write>(
    table: &SweepTable<T>,
    energy_scale: T,
    v0_scale: T,
    mut out: W,
) -> Result<()> {
    writeln!(out, "V0,state_index,Re_E,Im_E,bound_flag,regime")?;
    for p in &table.points {
        for r in &p.rows {
            writeln!(
                out,
                "{:.12e},{},{:.12e},{:.12e},{},{}",
                p.v0 / v0_scale,
                r.track,
                r.e.re / energy_scale,
                r.e.im / energy_scale,
                u8::from(r.bound),
                p.regime
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{
        ScalarPotentialSpec, TransverseMomenta, VectorPotentialSpec,
    };
    use crate::grid::make_grid;
    use approx::assert_relative_eq;

    fn natural() -> PhysicalConstants<f64> {
        PhysicalConstants::natural()
    }

    fn box_cfg(v0_mc2: f64, consts: &PhysicalConstants<f64>) -> FieldConfig<f64> {
        FieldConfig {
            scalar: ScalarPotentialSpec::SmoothBox {
                v0: v0_mc2 * consts.mc2(),
                l: 2.2 * consts.lambda_c(),
                w: 0.2 * consts.lambda_c(),
            },
            vector: VectorPotentialSpec::Zero,
            transverse: TransverseMomenta::zero(),
        }
    }

    fn step_cfg(v0_mc2: f64, consts: &PhysicalConstants<f64>) -> FieldConfig<f64> {
        let mc = consts.m * consts.c;
        let qa0 = 2.64 * mc;
        FieldConfig {
            scalar: ScalarPotentialSpec::SmoothStep {
                v0: v0_mc2 * consts.mc2(),
                w_e: 0.3 * consts.lambda_c(),
            },
            vector: VectorPotentialSpec::SmoothStepY {
                a0: qa0 / consts.q,
                w_b: 2.2 * consts.lambda_c(),
            },
            transverse: TransverseMomenta {
                p_y: qa0 / 2.0,
                p_z: 0.0,
            },
        }
    }

    fn solve(
        cfg: &FieldConfig<f64>,
        n: usize,
        consts: &PhysicalConstants<f64>,
    ) -> BiorthogonalSpectrum<f64> {
        let grid = make_grid(n, 24.0 * consts.lambda_c(), consts).unwrap();
        let h = assemble(&grid, cfg, consts, DerivativeScheme::Spectral).unwrap();
        eigensolve(&h, &Tolerances::for_constants(consts)).unwrap()
    }

    #[test]
    fn toy_two_level_eigensystem() {
        // [[2, 1], [-1, -2]] has eigenvalues +-sqrt(3) and satisfies
        // eta H^dag eta = H with eta = diag(1, -1).
        let m = ndarray::arr2(&[
            [Complex::new(2.0_f64, 0.0), Complex::new(1.0, 0.0)],
            [Complex::new(-1.0, 0.0), Complex::new(-2.0, 0.0)],
        ]);
        let (vals, vecs) = raw_eig_sorted(&m, true).unwrap();
        let s3 = 3.0_f64.sqrt();
        assert_relative_eq!(vals[0].re, -s3, max_relative = 1e-14);
        assert_relative_eq!(vals[1].re, s3, max_relative = 1e-14);
        let left = invert_refined(&vecs, 1e-10).unwrap();
        let lr = left.dot(&vecs);
        assert!((lr[[0, 0]].re - 1.0).abs() < 1e-14);
        assert!(lr[[0, 1]].norm() < 1e-14);
    }

    #[test]
    fn defective_matrix_reports_exceptional_point() {
        // The Jordan block [[0, 1], [0, 0]] has a double eigenvalue with a
        // single eigenvector: both returned columns collapse onto it and
        // the biorthogonal system does not exist. Same for the
        // pseudo-Hermitian coalescence form [[1, 1], [-1, -1]].
        for m in [
            ndarray::arr2(&[
                [Complex::new(0.0_f64, 0.0), Complex::new(1.0, 0.0)],
                [Complex::new(0.0, 0.0), Complex::new(0.0, 0.0)],
            ]),
            ndarray::arr2(&[
                [Complex::new(1.0_f64, 0.0), Complex::new(1.0, 0.0)],
                [Complex::new(-1.0, 0.0), Complex::new(-1.0, 0.0)],
            ]),
        ] {
            let (_, vecs) = raw_eig_sorted(&m, true).unwrap();
            match invert_refined(&vecs, 1e-10) {
                Err(Error::ExceptionalPoint(_)) => {}
                other => panic!("expected exceptional point error, got {other:?}"),
            }
        }
    }

    #[test]
    fn box_pair_energies_match_reference() {
        let consts = natural();
        let spec = solve(&box_cfg(-2.22, &consts), 512, &consts);
        let pair: Vec<_> = (0..spec.n_states())
            .filter(|&i| spec.eigenvalue(i).im > spec.tolerances().im_eps)
            .collect();
        assert_eq!(pair.len(), 1, "exactly one upper pair member");
        let e = spec.eigenvalue(pair[0]);
        assert_relative_eq!(e.re, -0.9806047152984337, max_relative = 1e-10);
        assert_relative_eq!(e.im, 0.0270213798408319, max_relative = 1e-8);
        assert!(spec.localization(pair[0]) > 0.9);
        assert!(spec.partner(pair[0]).is_some());

        let spec = solve(&box_cfg(-2.25, &consts), 512, &consts);
        let i = (0..spec.n_states())
            .find(|&i| spec.eigenvalue(i).im > spec.tolerances().im_eps)
            .unwrap();
        let e = spec.eigenvalue(i);
        assert_relative_eq!(e.re, -1.0057480452129444, max_relative = 1e-10);
        assert_relative_eq!(e.im, 0.05299946115312691, max_relative = 1e-8);
    }

    #[test]
    fn step_pair_real_parts_pinned_by_mirror_symmetry() {
        let consts = natural();
        // One pair: the lattice mirror symmetry pins Re E to exactly V0/2.
        let spec = solve(&step_cfg(2.9, &consts), 512, &consts);
        let ups: Vec<_> = (0..spec.n_states())
            .filter(|&i| spec.eigenvalue(i).im > spec.tolerances().im_eps)
            .collect();
        assert_eq!(ups.len(), 1);
        let e = spec.eigenvalue(ups[0]);
        assert_relative_eq!(e.re, 1.45, max_relative = 1e-9);
        assert_relative_eq!(e.im, 0.09572876947008399, max_relative = 1e-7);

        // Two pairs: real parts sum to V0 and the widths agree.
        let spec = solve(&step_cfg(3.2, &consts), 512, &consts);
        let mut ups: Vec<_> = (0..spec.n_states())
            .filter(|&i| spec.eigenvalue(i).im > spec.tolerances().im_eps)
            .collect();
        ups.sort_by(|&a, &b| cmp_re_im(&spec.eigenvalue(a), &spec.eigenvalue(b)));
        assert_eq!(ups.len(), 2);
        let (e1, e2) = (spec.eigenvalue(ups[0]), spec.eigenvalue(ups[1]));
        assert_relative_eq!(e1.re + e2.re, 3.2, max_relative = 1e-9);
        assert_relative_eq!(e1.im, e2.im, max_relative = 1e-6);
        assert_relative_eq!(e1.re, 1.4690391586890341, max_relative = 1e-9);
    }

    #[test]
    fn regime_labels_across_both_families() {
        let consts = natural();
        let tol = Tolerances::for_constants(&consts);

        let free = FieldConfig::free(TransverseMomenta::zero());
        let grid = make_grid(64, 24.0 * consts.lambda_c(), &consts).unwrap();
        let h = assemble(&grid, &free, &consts, DerivativeScheme::Spectral).unwrap();
        let spec = eigensolve(&h, &tol).unwrap();
        assert_eq!(
            regime_classify(&spec, PotentialFamily::BoxWell).unwrap(),
            Regime::Free
        );

        let spec = solve(&box_cfg(-2.17, &consts), 512, &consts);
        let labels = classify_states(&spec);
        let bound: Vec<_> = (0..spec.n_states())
            .filter(|&i| labels[i].class == SpectralClass::Bound)
            .collect();
        assert_eq!(bound.len(), 2);
        assert!(bound
            .iter()
            .all(|&i| labels[i].charge == ChargeCharacter::Particle));
        assert_eq!(
            regime_classify(&spec, PotentialFamily::BoxWell).unwrap(),
            Regime::I
        );

        let spec = solve(&box_cfg(-2.22, &consts), 512, &consts);
        assert_eq!(
            regime_classify(&spec, PotentialFamily::BoxWell).unwrap(),
            Regime::III
        );

        let spec = solve(&step_cfg(3.07, &consts), 512, &consts);
        let labels = classify_states(&spec);
        let bound: Vec<_> = (0..spec.n_states())
            .filter(|&i| labels[i].class == SpectralClass::Bound)
            .collect();
        assert_eq!(bound.len(), 4, "pair resolved back into four bound states");
        assert_eq!(
            regime_classify(&spec, PotentialFamily::StepWithB).unwrap(),
            Regime::III
        );

        let spec = solve(&step_cfg(3.4, &consts), 512, &consts);
        assert_eq!(
            regime_classify(&spec, PotentialFamily::StepWithB).unwrap(),
            Regime::V
        );
    }

    #[test]
    fn continuum_edges_and_overlap_threshold() {
        let consts = natural();
        let cfg = step_cfg(3.4, &consts);
        let (lo, up) = continuum_edges(&cfg, &consts);
        assert_relative_eq!(up, 1.6560193235587561, max_relative = 1e-12);
        assert!(lo >= up, "continua overlap at this strength");
        let v_star = overlap_strength_analytic(&cfg, &consts).unwrap();
        assert_relative_eq!(v_star, 3.3120386471175123, max_relative = 1e-12);

        // Field-free, zero-momentum reduction: exactly 2 mc^2.
        let plain = FieldConfig {
            scalar: ScalarPotentialSpec::SmoothStep {
                v0: 3.0 * consts.mc2(),
                w_e: 0.3 * consts.lambda_c(),
            },
            vector: VectorPotentialSpec::Zero,
            transverse: TransverseMomenta::zero(),
        };
        let v_star = overlap_strength_analytic(&plain, &consts).unwrap();
        assert_eq!(v_star, 2.0 * consts.mc2());

        assert!(overlap_strength_analytic(&box_cfg(-2.2, &consts), &consts).is_none());
    }

    #[test]
    fn bound_state_density_normalizes_and_continuum_is_rejected() {
        let consts = natural();
        let spec = solve(&box_cfg(-2.17, &consts), 256, &consts);
        let labels = classify_states(&spec);
        let i = (0..spec.n_states())
            .find(|&i| labels[i].class == SpectralClass::Bound)
            .unwrap();
        let rho = biorthogonal_density(&spec, i).unwrap();
        let integral = rho.iter().sum::<Complex<f64>>() * spec.grid().dx();
        assert_relative_eq!(integral.re, 1.0, max_relative = 1e-10);
        // Real eigenvalue, so the left row is psi^dagger eta and the
        // density is pointwise real.
        let max_im = rho.iter().map(|r| r.im.abs()).fold(0.0, f64::max);
        assert!(max_im < 1e-10, "Im rho = {max_im:e} for a real-energy state");

        let j = (0..spec.n_states())
            .find(|&i| labels[i].class == SpectralClass::Continuum)
            .unwrap();
        assert!(matches!(
            biorthogonal_density(&spec, j),
            Err(Error::NotBound(_))
        ));
    }

    #[test]
    fn sweep_tracks_are_continuous_through_coalescence() {
        let consts = natural();
        let tol = Tolerances::for_constants(&consts);
        let grid = make_grid(256, 24.0 * consts.lambda_c(), &consts).unwrap();
        let base = box_cfg(-2.0, &consts);
        let v0s: Vec<f64> = (0..13)
            .map(|k| (-2.15 - 0.0125 * k as f64) * consts.mc2())
            .collect();
        let table = sweep(
            &grid,
            &base,
            &consts,
            DerivativeScheme::Spectral,
            PotentialFamily::BoxWell,
            &v0s,
            &tol,
        )
        .unwrap();
        assert_eq!(table.points.len(), 13);
        // The first and last point sit in different regimes.
        assert_eq!(table.points[0].regime, Regime::I);
        assert!(matches!(
            table.points.last().unwrap().regime,
            Regime::III | Regime::IV
        ));
        // Each consecutive sample of every track moves by less than the
        // pair splitting scale; no teleporting ids.
        for t in 0..table.n_tracks() {
            let series = table.track_series(t);
            for w in series.windows(2) {
                let (v_a, e_a) = w[0];
                let (v_b, e_b) = w[1];
                assert!(
                    (e_b - e_a).norm() < 10.0 * (v_b - v_a).abs().max(0.02),
                    "track {t} jumps from {e_a} to {e_b}"
                );
            }
        }
        // CSV shape.
        let mut buf = Vec::new();
        write_sweep_csv(&table, consts.mc2(), consts.mc2() / consts.q, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "V0,state_index,Re_E,Im_E,bound_flag,regime"
        );
        assert!(text.lines().count() > 13);
    }

    #[test]
    fn bisection_finds_coalescence_and_rejects_bad_brackets() {
        let consts = natural();
        let tol = Tolerances::for_constants(&consts);
        let grid = make_grid(256, 24.0 * consts.lambda_c(), &consts).unwrap();
        let base = box_cfg(-2.0, &consts);
        let unit = consts.mc2();
        let cp = find_critical(
            &grid,
            &base,
            &consts,
            DerivativeScheme::Spectral,
            CriticalKind::Coalescence,
            (-2.18 * unit, -2.24 * unit),
            1e-3 * unit.abs(),
            &tol,
        )
        .unwrap();
        // At this resolution the second critical strength sits near 2.21.
        assert!((cp.v0.abs() / unit.abs() - 2.2094).abs() < 5e-3, "got {}", cp.v0);
        assert!(cp.iterations >= 5);

        let err = find_critical(
            &grid,
            &base,
            &consts,
            DerivativeScheme::Spectral,
            CriticalKind::Coalescence,
            (-2.0 * unit, -2.1 * unit),
            1e-3 * unit.abs(),
            &tol,
        );
        assert!(matches!(err, Err(Error::Bracket(_))));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn random_tabulated_wells_solve_consistently(
            qphi in proptest::collection::vec(-3.0f64..3.0, 8)
        ) {
            let consts = natural();
            let grid = make_grid(8, 8.0 * consts.lambda_c(), &consts).unwrap();
            let cfg = FieldConfig {
                scalar: ScalarPotentialSpec::Tabulated {
                    x: grid.x().to_vec(),
                    qphi: qphi.clone(),
                },
                vector: VectorPotentialSpec::Zero,
                transverse: TransverseMomenta::zero(),
            };
            let h = assemble(&grid, &cfg, &consts, DerivativeScheme::FiniteDifference3).unwrap();
            let spec = eigensolve(&h, &Tolerances::for_constants(&consts)).unwrap();

            // Complex eigenvalues pair mutually (checked inside eigensolve);
            // eta norms of unit vectors stay in [-1, 1].
            for i in 0..spec.n_states() {
                proptest::prop_assert!(spec.eta_self(i).abs() <= 1.0 + 1e-12);
                if let Some(j) = spec.partner(i) {
                    proptest::prop_assert_eq!(spec.partner(j), Some(i));
                }
            }

            // Eigenvalue sum equals the matrix trace.
            let tr: Complex<f64> = (0..2 * grid.n()).map(|k| h.matrix()[[k, k]]).sum();
            let sum: Complex<f64> = spec.eigenvalues().iter().sum();
            proptest::prop_assert!((sum - tr).norm() < 1e-10 * (1.0 + tr.norm()));

            // A random well sits nowhere near an exceptional point, so the
            // refined biorthogonal system must close tightly.
            let res = spec.biorth_residual_max().unwrap();
            proptest::prop_assert!(res < 1e-10, "residual {}", res);
        }
    }

    #[test]
    fn biorthogonality_residual_is_small_for_pair_spectrum() {
        let consts = natural();
        let spec = solve(&box_cfg(-2.22, &consts), 256, &consts);
        let res = spec.biorth_residual_max().unwrap();
        assert!(res < 1e-10, "residual {res:e}");
        // Conjugate pairing is mutual everywhere.
        for i in 0..spec.n_states() {
            if let Some(j) = spec.partner(i) {
                assert_eq!(spec.partner(j), Some(i));
                let d = (spec.eigenvalue(j) - spec.eigenvalue(i).conj()).norm();
                assert!(d < 1e-8);
            }
        }
    }
}

