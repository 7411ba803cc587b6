//! Phenomenological back reaction: the field energy budget drains as
//! pairs are created.
//!
//! Per step, in this order: advance the states with the current strength,
//! measure N and the created-pair density, integrate the induced field
//! E_in from the density, price the created pairs and the induced field
//! against the initial field energy E_0, and rescale the strength as
//! V0(t) = V0(0) sqrt(E_ex / E_0) with E_ex the remaining budget. With
//! the feedback disabled the run goes through the plain midpoint
//! propagator and reproduces it bit for bit.

use std::io::Write;

use num_complex::Complex;

use crate::constants::PhysicalConstants;
use crate::dynamics::{
    self, build_free_basis, evolve, particle_density, particle_number, EvolveOptions,
    FreeModeBasis, Propagator,
};
use crate::error::{Error, Result};
use crate::fields::{self, FieldConfig};
use crate::grid::Grid;
use crate::hamiltonian::{assemble, potential_profile, DerivativeScheme};
use crate::scalar::Real;
use crate::tolerances::Tolerances;

/// Energy stored in the initial field profiles,
/// E_0 = (1/8 pi) integral of E_x^2 + c^2 (dA_y/dx)^2.
/// The c^2 belongs to the gauge convention: A_y enters the Hamiltonian
/// through q A_y directly, so the physical magnetic field is c dA_y/dx.
pub fn initial_field_energy<T: Real>(
    cfg: &FieldConfig<T>,
    grid: &Grid<T>,
    consts: &PhysicalConstants<T>,
) -> T {
    let c2 = consts.c * consts.c;
    let eight_pi = T::lit(8.0) * T::PI();
    let mut acc = T::zero();
    for &x in grid.x() {
        let e = fields::eval_electric_field(&cfg.scalar, x, consts.q);
        let b = fields::eval_magnetic_z(&cfg.vector, x);
        acc += e * e + c2 * b * b;
    }
    acc * grid.dx() / eight_pi
}

/// Electrostatic field of the created-pair charge layer,
/// E_in(x_i) = 4 pi q (Q_i - N/2) with Q_i the midpoint cumulative charge
/// (half of cell i counts as "to the left"). Negative density samples are
/// clamped to zero; a clamp beyond 1e-6 of the peak is reported once.
pub fn induced_field<T: Real>(rho: &[T], grid: &Grid<T>, q: T) -> (Vec<T>, T) {
    let peak = rho.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    let mut worst_clamp = T::zero();
    let clamped: Vec<T> = rho
        .iter()
        .map(|&r| {
            if r < T::zero() {
                worst_clamp = worst_clamp.max(-r);
                T::zero()
            } else {
                r
            }
        })
        .collect();
    if peak > T::zero() && worst_clamp > T::lit(1e-6) * peak {
        log::warn!(
            "created-pair density went negative by {:e} of its peak before clamping",
            (worst_clamp / peak).to_f64().unwrap_or(f64::NAN)
        );
    }
    let dx = grid.dx();
    let total: T = clamped.iter().copied().sum::<T>() * dx;
    let four_pi_q = T::lit(4.0) * T::PI() * q;
    let half = T::lit(0.5);
    let mut cum = T::zero();
    let mut e_in = Vec::with_capacity(rho.len());
    for &r in &clamped {
        let q_left = cum + half * r * dx;
        e_in.push(four_pi_q * (q_left - half * total));
        cum += r * dx;
    }
    (e_in, worst_clamp)
}

#[derive(Debug, Clone, Copy)]
pub struct BackReactionOptions<T: Real> {
    pub dt: T,
    pub t_max: T,
    /// Record observables every this many steps (the feedback itself runs
    /// every step).
    pub sample_every: usize,
    /// With the feedback off the strength stays fixed and the run equals
    /// the plain midpoint evolution bit for bit.
    pub enabled: bool,
}

#[derive(Debug, Clone)]
pub struct BackReactionRecord<T: Real> {
    pub times: Vec<T>,
    pub n: Vec<T>,
    pub ln_n: Vec<T>,
    /// Strength in effect after each sampled step.
    pub v0: Vec<T>,
    /// Energy bound in pairs and induced field at each sample.
    pub e_in_energy: Vec<T>,
    /// Remaining budget at each sample.
    pub e_ex: Vec<T>,
    pub e0: T,
}

fn pair_and_field_energy<T: Real>(
    n: T,
    e_in: &[T],
    grid: &Grid<T>,
    consts: &PhysicalConstants<T>,
) -> T {
    let eight_pi = T::lit(8.0) * T::PI();
    let field: T = e_in.iter().map(|&e| e * e).sum::<T>() * grid.dx() / eight_pi;
    T::lit(2.0) * consts.mc2() * n + field
}

pub fn run_backreaction<T: Real>(
    grid: &Grid<T>,
    cfg: &FieldConfig<T>,
    consts: &PhysicalConstants<T>,
    scheme: DerivativeScheme,
    opts: &BackReactionOptions<T>,
    tol: &Tolerances<T>,
) -> Result<BackReactionRecord<T>> {
    if !(opts.dt > T::zero()) || !(opts.t_max > opts.dt) {
        return Err(Error::Evolution("need 0 < dt < t_max".into()));
    }
    if opts.sample_every == 0 {
        return Err(Error::Evolution("sample_every must be at least 1".into()));
    }
    let v0_init = fields::strength(&cfg.scalar).ok_or_else(|| {
        Error::FieldSpec("back reaction needs an analytic strength parameter".into())
    })?;
    let e0 = initial_field_energy(cfg, grid, consts);
    if !(e0 > T::zero()) {
        return Err(Error::FieldSpec(
            "initial field energy must be positive for the back-reaction budget".into(),
        ));
    }
    let basis = build_free_basis(grid, consts, cfg.transverse);

    if !opts.enabled {
        return run_disabled(grid, cfg, consts, scheme, &basis, opts, tol, v0_init, e0);
    }

    // H(v0) = H(0) + v0 * diag(shape on both components).
    let h_base = assemble(
        grid,
        &crate::spectral::config_at_strength(cfg, T::zero())?,
        consts,
        scheme,
    )?;
    let shape = potential_profile(
        &fields::with_strength(&cfg.scalar, T::one())?,
        grid,
    );
    dynamics::warn_if_dt_coarse(h_base.matrix(), opts.dt, consts.hbar);
    let dim = 2 * grid.n();
    let coef = Complex::new(T::zero(), opts.dt / (T::lit(2.0) * consts.hbar));
    let mut a_base = h_base.matrix().mapv(|z| z * coef);
    for d in 0..dim {
        a_base[[d, d]] += Complex::new(T::one(), T::zero());
    }

    let a_rows = basis.eta_overlap_rows();
    let mut psi = basis.minus().clone();
    let mut scratch = psi.clone();
    let steps = (opts.t_max / opts.dt - T::lit(1e-9))
        .ceil()
        .to_usize()
        .ok_or_else(|| Error::Evolution("step count overflow".into()))?;

    let mut rec = BackReactionRecord {
        times: Vec::new(),
        n: Vec::new(),
        ln_n: Vec::new(),
        v0: Vec::new(),
        e_in_energy: Vec::new(),
        e_ex: Vec::new(),
        e0,
    };
    let mut v0 = v0_init;
    let mut prev_ln = T::neg_infinity();
    let mut clamp_warned = false;

    // t = 0 sample: nothing created yet, full budget.
    rec.times.push(T::zero());
    rec.n.push(T::zero());
    rec.ln_n.push(T::neg_infinity());
    rec.v0.push(v0);
    rec.e_in_energy.push(T::zero());
    rec.e_ex.push(e0);

    let two = Complex::new(T::lit(2.0), T::zero());
    for step in 1..=steps {
        // Advance with the strength currently in effect.
        let mut a = a_base.clone();
        for i in 0..grid.n() {
            let d = Complex::new(T::zero(), T::zero()) + coef.scale(v0 * shape[i]);
            a[[2 * i, 2 * i]] += d;
            a[[2 * i + 1, 2 * i + 1]] += d;
        }
        let k = T::inv_complex(&a)
            .map_err(|e| Error::LinearSolve(format!("midpoint step matrix: {e}")))?;
        let mut m = k.mapv(|z| z * two);
        for d in 0..dim {
            m[[d, d]] -= Complex::new(T::one(), T::zero());
        }
        ndarray::linalg::general_mat_mul(
            Complex::new(T::one(), T::zero()),
            &m,
            &psi,
            Complex::new(T::zero(), T::zero()),
            &mut scratch,
        );
        std::mem::swap(&mut psi, &mut scratch);

        // Measure, integrate the induced field, re-price the budget.
        let c = a_rows.dot(&psi);
        let n = particle_number(&c);
        let ln = if n > T::zero() { n.ln() } else { T::neg_infinity() };
        if !n.is_finite() || (prev_ln.is_finite() && ln - prev_ln > T::lit(50.0)) {
            return Err(Error::DtInstability(format!(
                "particle number blew up at step {step}: N = {:e}",
                n.to_f64().unwrap_or(f64::NAN)
            )));
        }
        prev_ln = ln;
        let rho = particle_density(&basis, &c);
        let (e_in, clamp) = induced_field(&rho, grid, consts.q);
        if clamp > T::zero() {
            clamp_warned = true;
        }
        let e_in_energy = pair_and_field_energy(n, &e_in, grid, consts);
        let e_ex = (e0 - e_in_energy).max(T::zero());
        v0 = v0_init * (e_ex / e0).sqrt();

        if step % opts.sample_every == 0 {
            rec.times.push(opts.dt * T::from_usize(step).expect("small step count"));
            rec.n.push(n);
            rec.ln_n.push(ln);
            rec.v0.push(v0);
            rec.e_in_energy.push(e_in_energy);
            rec.e_ex.push(e_ex);
        }
    }
    if clamp_warned {
        log::debug!("density clamping occurred during the back-reaction run");
    }
    Ok(rec)
}

#[allow(clippy::too_many_arguments)]
fn run_disabled<T: Real>(
    grid: &Grid<T>,
    cfg: &FieldConfig<T>,
    consts: &PhysicalConstants<T>,
    scheme: DerivativeScheme,
    basis: &FreeModeBasis<T>,
    opts: &BackReactionOptions<T>,
    tol: &Tolerances<T>,
    v0_init: T,
    e0: T,
) -> Result<BackReactionRecord<T>> {
    let h = assemble(grid, cfg, consts, scheme)?;
    let sample_dt = opts.dt * T::from_usize(opts.sample_every).expect("small stride");
    let mut eopts = EvolveOptions::new(
        Propagator::Midpoint { dt: opts.dt },
        opts.t_max,
        sample_dt,
    );
    eopts.density_stride = Some(1);
    let run = evolve(&h, basis, &eopts, tol)?;
    let mut rec = BackReactionRecord {
        times: run.times.clone(),
        n: run.n.clone(),
        ln_n: run.ln_n.clone(),
        v0: vec![v0_init; run.times.len()],
        e_in_energy: Vec::with_capacity(run.times.len()),
        e_ex: Vec::with_capacity(run.times.len()),
        e0,
    };
    for (k, (_, rho)) in run.density.iter().enumerate() {
        let (e_in, _) = induced_field(rho, grid, consts.q);
        let e = pair_and_field_energy(run.n[k], &e_in, grid, consts);
        rec.e_in_energy.push(e);
        rec.e_ex.push((e0 - e).max(T::zero()));
    }
    Ok(rec)
}

/// Back-reaction record as CSV with times divided by `time_scale`,
/// strengths by `v0_scale` and energies by `energy_scale`.
pub fn write_backreaction_csv<T: Real, W: Write>(
    rec: &BackReactionRecord<T>,
    time_scale: T,
    v0_scale: T,
    energy_scale: T,
    mut out: W,
) -> Result<()> {
    writeln!(out, "t,N,V0,E_in,E_ex")?;
    for i in 0..rec.times.len() {
        writeln!(
            out,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            rec.times[i] / time_scale,
            rec.n[i],
            rec.v0[i] / v0_scale,
            rec.e_in_energy[i] / energy_scale,
            rec.e_ex[i] / energy_scale,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ScalarPotentialSpec, TransverseMomenta, VectorPotentialSpec};
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

    #[test]
    fn field_energy_matches_closed_forms() {
        let consts = natural();
        let grid = make_grid(512, 24.0 * consts.lambda_c(), &consts).unwrap();
        let q2 = consts.q * consts.q;

        // Electric step: E_0 = V0^2 / (24 pi w_e q^2).
        let w_e = 0.3 * consts.lambda_c();
        let v0 = 3.0 * consts.mc2();
        let step = FieldConfig {
            scalar: ScalarPotentialSpec::SmoothStep { v0, w_e },
            vector: VectorPotentialSpec::Zero,
            transverse: TransverseMomenta::zero(),
        };
        let got = initial_field_energy(&step, &grid, &consts);
        let want = v0 * v0 / (24.0 * std::f64::consts::PI * w_e * q2);
        assert_relative_eq!(got, want, max_relative = 1e-5);

        // Wide box: twice the step walls, E_0 = V0^2 / (12 pi w q^2).
        let cfg = box_cfg(-2.25, &consts);
        let got = initial_field_energy(&cfg, &grid, &consts);
        let w = 0.2 * consts.lambda_c();
        let v0 = -2.25 * consts.mc2();
        let want = v0 * v0 / (12.0 * std::f64::consts::PI * w * q2);
        assert_relative_eq!(got, want, max_relative = 1e-4);

        // Same box in atomic units: the budget the damped runs draw on.
        let atomic = PhysicalConstants::atomic();
        let grid_au = make_grid(512, 24.0 * atomic.lambda_c(), &atomic).unwrap();
        let got = initial_field_energy(&box_cfg(-2.25, &atomic), &grid_au, &atomic);
        assert_relative_eq!(got, 3.245e10, max_relative = 1e-3);

        // Magnetic wall adds c^2 a0^2 / (24 pi w_b).
        let a0 = -2.64 * consts.m * consts.c / consts.q * consts.q; // q a0 = -2.64 mc
        let w_b = 2.2 * consts.lambda_c();
        let with_b = FieldConfig {
            scalar: ScalarPotentialSpec::SmoothStep { v0: 3.0 * consts.mc2(), w_e },
            vector: VectorPotentialSpec::SmoothStepY { a0, w_b },
            transverse: TransverseMomenta::zero(),
        };
        let got = initial_field_energy(&with_b, &grid, &consts);
        let want = 3.0 * 3.0 / (24.0 * std::f64::consts::PI * w_e * q2)
            + consts.c * consts.c * a0 * a0 / (24.0 * std::f64::consts::PI * w_b);
        assert_relative_eq!(got, want, max_relative = 1e-5);
    }

    #[test]
    fn induced_field_splits_the_charge_symmetrically() {
        let consts = natural();
        let grid = make_grid(128, 24.0 * consts.lambda_c(), &consts).unwrap();
        let sigma = consts.lambda_c();
        let rho: Vec<f64> = grid
            .x()
            .iter()
            .map(|&x| (-x * x / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = rho.iter().sum::<f64>() * grid.dx();
        let (e_in, clamp) = induced_field(&rho, &grid, consts.q);
        assert_eq!(clamp, 0.0);
        let plateau = 2.0 * std::f64::consts::PI * consts.q * total;
        assert_relative_eq!(e_in[0], -plateau, max_relative = 1e-10);
        assert_relative_eq!(*e_in.last().unwrap(), plateau, max_relative = 1e-6);
        // Antisymmetric for an even density.
        let n = grid.n();
        for j in 1..n / 4 {
            assert_relative_eq!(e_in[j], -e_in[n - j], max_relative = 1e-9, epsilon = 1e-12);
        }

        // Negative samples get clamped and reported.
        let mut dirty = rho.clone();
        dirty[3] = -0.5;
        let (e_dirty, clamp) = induced_field(&dirty, &grid, consts.q);
        assert_relative_eq!(clamp, 0.5);
        let mut zeroed = rho;
        zeroed[3] = 0.0;
        let (e_zeroed, _) = induced_field(&zeroed, &grid, consts.q);
        for (a, b) in e_dirty.iter().zip(e_zeroed.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn disabled_feedback_reproduces_the_plain_run_bit_for_bit() {
        let consts = natural();
        let grid = make_grid(32, 24.0 * consts.lambda_c(), &consts).unwrap();
        let tol = Tolerances::for_constants(&consts);
        let cfg = box_cfg(-2.25, &consts);
        let t_c = consts.t_c();
        let opts = BackReactionOptions {
            dt: 0.1 * t_c,
            t_max: 3.0 * t_c,
            sample_every: 2,
            enabled: false,
        };
        let br = run_backreaction(&grid, &cfg, &consts, DerivativeScheme::Spectral, &opts, &tol)
            .unwrap();

        let h = assemble(&grid, &cfg, &consts, DerivativeScheme::Spectral).unwrap();
        let basis = build_free_basis(&grid, &consts, TransverseMomenta::zero());
        let plain = evolve(
            &h,
            &basis,
            &EvolveOptions::new(Propagator::Midpoint { dt: 0.1 * t_c }, 3.0 * t_c, 0.2 * t_c),
            &tol,
        )
        .unwrap();
        assert_eq!(br.times.len(), plain.times.len());
        for k in 0..br.n.len() {
            assert!(
                br.n[k] == plain.n[k] && br.times[k] == plain.times[k],
                "sample {k}: {} vs {}",
                br.n[k],
                plain.n[k]
            );
        }
        assert!(br.v0.iter().all(|&v| v == -2.25 * consts.mc2()));
        assert!(br.e0 > 0.0);
        assert_eq!(br.e_in_energy.len(), br.times.len());
    }

    #[test]
    fn enabled_feedback_drains_the_strength_and_stalls_the_growth() {
        let consts = natural();
        let grid = make_grid(64, 24.0 * consts.lambda_c(), &consts).unwrap();
        let tol = Tolerances::for_constants(&consts);
        let cfg = box_cfg(-2.25, &consts);
        let t_c = consts.t_c();
        let opts = BackReactionOptions {
            dt: 0.2 * t_c,
            t_max: 150.0 * t_c,
            sample_every: 5,
            enabled: true,
        };
        let br = run_backreaction(&grid, &cfg, &consts, DerivativeScheme::Spectral, &opts, &tol)
            .unwrap();

        // In natural units the budget is tiny (E_0 < 1), so the drain acts
        // within the run: the strength magnitude must have dropped.
        let v_last = *br.v0.last().unwrap();
        assert!(
            v_last.abs() < 2.25 * 0.995,
            "strength never drained: {v_last}"
        );
        assert!(v_last <= 0.0, "strength must keep its sign");
        // The budget stays within [0, E_0].
        for (&ex, &ein) in br.e_ex.iter().zip(br.e_in_energy.iter()) {
            assert!(ex >= 0.0 && ex <= br.e0 * (1.0 + 1e-12));
            assert!(ein >= 0.0);
        }
        // Late growth is much slower than the undamped width 2 Im E.
        let fit = crate::dynamics::fit_growth_rate(
            &to_record(&br),
            crate::dynamics::FitWindow::Range(100.0 * t_c, 150.0 * t_c),
        )
        .unwrap();
        let gamma_free = 2.0 * 4.250412e-2 / consts.hbar; // width at this resolution
        assert!(
            fit.gamma.abs() < 0.3 * gamma_free,
            "growth {} did not stall against {}",
            fit.gamma,
            gamma_free
        );
    }

    fn to_record(br: &BackReactionRecord<f64>) -> crate::dynamics::EvolutionRecord<f64> {
        crate::dynamics::EvolutionRecord {
            times: br.times.clone(),
            n: br.n.clone(),
            ln_n: br.ln_n.clone(),
            density: Vec::new(),
            final_state: None,
        }
    }

    #[test]
    fn csv_writer_emits_the_budget_columns() {
        let rec = BackReactionRecord::<f64> {
            times: vec![0.0, 1.0],
            n: vec![0.0, 1.0],
            ln_n: vec![f64::NEG_INFINITY, 0.0],
            v0: vec![-2.25, -2.0],
            e_in_energy: vec![0.0, 1.0],
            e_ex: vec![10.0, 9.0],
            e0: 10.0,
        };
        let mut buf = Vec::new();
        write_backreaction_csv(&rec, 1.0, 1.0, 1.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,N,V0,E_in,E_ex\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
