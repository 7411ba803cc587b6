//! Experiment execution. Every command computes its full result set in
//! memory and hands back named file contents; nothing touches the disk
//! here, so a failing run leaves no partial outputs behind.

use std::fmt;

use ssw_core::dynamics::{self, EvolveOptions};
use ssw_core::spectral::{self, SpectralClass};
use ssw_core::{
    assemble, backreaction, biorthogonal_density, build_free_basis, classify_states, eigensolve,
    BackReactionOptions, BiorthogonalSpectrum64, ChargeCharacter, CriticalKind, Error,
};

use crate::config::{Experiment, RunKind};

#[derive(Debug)]
pub struct OutputFile {
    pub name: &'static str,
    pub contents: String,
}

/// A numeric failure, tagged with the stage that produced it.
#[derive(Debug)]
pub struct RunError {
    pub context: &'static str,
    pub source: Error,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.context, self.source)
    }
}

impl std::error::Error for RunError {}

trait Ctx<T> {
    fn ctx(self, context: &'static str) -> Result<T, RunError>;
}

impl<T> Ctx<T> for Result<T, Error> {
    fn ctx(self, context: &'static str) -> Result<T, RunError> {
        self.map_err(|source| RunError { context, source })
    }
}

pub struct RunOutput {
    pub files: Vec<OutputFile>,
    /// Human-readable one-liners for the terminal; deterministic.
    pub notes: Vec<String>,
}

pub fn execute(exp: &Experiment) -> Result<RunOutput, RunError> {
    match exp.kind {
        RunKind::Sweep => run_sweep(exp),
        RunKind::Evolve => run_evolve(exp),
        RunKind::Critical => run_critical(exp),
        RunKind::Backreact => run_backreact(exp),
        RunKind::Density => run_density(exp),
    }
}

fn run_sweep(exp: &Experiment) -> Result<RunOutput, RunError> {
    let plan = exp.sweep.as_ref().expect("checked: sweep section present");
    let family = exp.family.expect("checked: box or step family");
    let table = spectral::sweep(
        &exp.grid,
        &exp.fields,
        &exp.consts,
        exp.scheme,
        family,
        &plan.v0_values,
        &exp.tol,
    )
    .ctx("spectral sweep")?;

    let mut buf = Vec::new();
    spectral::write_sweep_csv(&table, exp.units.energy, exp.units.energy, &mut buf)
        .ctx("sweep csv")?;
    let notes = vec![format!(
        "sweep: {} strengths, {} eigenvalue tracks",
        table.points.len(),
        table.n_tracks()
    )];
    Ok(RunOutput {
        files: vec![file("sweep.csv", buf)],
        notes,
    })
}

fn run_evolve(exp: &Experiment) -> Result<RunOutput, RunError> {
    let plan = exp.evolve.as_ref().expect("checked: evolve section present");
    let h = assemble(&exp.grid, &exp.fields, &exp.consts, exp.scheme).ctx("assembly")?;
    let spec = eigensolve(&h, &exp.tol).ctx("eigensolve")?;
    let basis = build_free_basis(&exp.grid, &exp.consts, exp.fields.transverse);
    let opts = EvolveOptions {
        propagator: plan.propagator,
        t_max: plan.t_max,
        sample_dt: plan.sample_dt,
        density_stride: plan.density_stride,
        keep_final_state: false,
    };
    let rec = dynamics::evolve(&h, &basis, &opts, &exp.tol).ctx("evolution")?;

    // A window too short to fit is a property of the run, not a failure;
    // the fit columns go out as NaN in that case.
    let fit = match dynamics::fit_growth_rate(&rec, plan.window) {
        Ok(f) => Some(f),
        Err(Error::WindowTooShort(_)) => None,
        Err(e) => return Err(e).ctx("growth fit"),
    };
    let omega = match dynamics::oscillation_frequency(&rec) {
        Ok(w) => w,
        Err(Error::WindowTooShort(_)) => None,
        Err(e) => return Err(e).ctx("oscillation fit"),
    };

    let mut evolve_buf = Vec::new();
    dynamics::write_evolution_csv(&rec, exp.units.time, &mut evolve_buf).ctx("evolution csv")?;

    let mut files = vec![
        file("evolve.csv", evolve_buf),
        OutputFile {
            name: "spectrum.csv",
            contents: spectrum_csv(&spec, exp),
        },
        OutputFile {
            name: "fit.csv",
            contents: fit_csv(fit.as_ref(), omega, exp),
        },
    ];
    if !rec.density.is_empty() {
        let mut buf = Vec::new();
        dynamics::write_density_csv(&rec, &exp.grid, exp.units.time, exp.units.length, &mut buf)
            .ctx("density csv")?;
        files.push(file("density.csv", buf));
    }

    let mut notes = vec![format!(
        "evolve: {} samples to t = {} t_c, final N = {:.6e}",
        rec.times.len(),
        plan.t_max / exp.units.time,
        rec.n.last().copied().unwrap_or(0.0)
    )];
    if let Some(f) = &fit {
        notes.push(format!(
            "growth fit: Gamma = {:.6e} / t_c over t in [{:.3}, {:.3}] t_c",
            f.gamma * exp.units.time,
            f.window.0 / exp.units.time,
            f.window.1 / exp.units.time
        ));
    }
    if let Some(w) = omega {
        notes.push(format!("oscillation: omega = {:.6e} / t_c", w * exp.units.time));
    }
    Ok(RunOutput { files, notes })
}

fn run_critical(exp: &Experiment) -> Result<RunOutput, RunError> {
    let plan = exp.critical.as_ref().expect("checked: critical section present");
    let cp = spectral::find_critical(
        &exp.grid,
        &exp.fields,
        &exp.consts,
        exp.scheme,
        plan.kind,
        plan.bracket,
        plan.v0_tol,
        &exp.tol,
    )
    .ctx("critical search")?;

    let e = exp.units.energy;
    let mut s = String::from("kind,V_cr,bracket_lo,bracket_hi,iterations\n");
    s.push_str(&format!(
        "{},{:.12e},{:.12e},{:.12e},{}\n",
        critical_kind_str(cp.kind),
        cp.v0 / e,
        cp.bracket.0 / e,
        cp.bracket.1 / e,
        cp.iterations
    ));
    let notes = vec![format!(
        "{} at V0 = {:.6} mc^2 ({} bisections)",
        critical_kind_str(cp.kind),
        cp.v0 / e,
        cp.iterations
    )];
    Ok(RunOutput {
        files: vec![OutputFile {
            name: "critical.csv",
            contents: s,
        }],
        notes,
    })
}

fn run_backreact(exp: &Experiment) -> Result<RunOutput, RunError> {
    let plan = exp.backreact.as_ref().expect("checked: backreact section present");
    let opts = BackReactionOptions {
        dt: plan.dt,
        t_max: plan.t_max,
        sample_every: plan.sample_every,
        enabled: plan.enabled,
    };
    let rec = backreaction::run_backreaction(
        &exp.grid,
        &exp.fields,
        &exp.consts,
        exp.scheme,
        &opts,
        &exp.tol,
    )
    .ctx("back reaction")?;

    let mut buf = Vec::new();
    backreaction::write_backreaction_csv(
        &rec,
        exp.units.time,
        exp.units.energy,
        exp.units.energy,
        &mut buf,
    )
    .ctx("back reaction csv")?;

    let notes = vec![format!(
        "backreact ({}): final N = {:.6e}, V0 {:.6} -> {:.6} mc^2, E_ex/E_0 = {:.4}",
        if plan.enabled { "on" } else { "off" },
        rec.n.last().copied().unwrap_or(0.0),
        rec.v0.first().copied().unwrap_or(0.0) / exp.units.energy,
        rec.v0.last().copied().unwrap_or(0.0) / exp.units.energy,
        rec.e_ex.last().copied().unwrap_or(0.0) / rec.e0
    )];
    Ok(RunOutput {
        files: vec![file("backreact.csv", buf)],
        notes,
    })
}

fn run_density(exp: &Experiment) -> Result<RunOutput, RunError> {
    let h = assemble(&exp.grid, &exp.fields, &exp.consts, exp.scheme).ctx("assembly")?;
    let spec = eigensolve(&h, &exp.tol).ctx("eigensolve")?;
    let labels = classify_states(&spec);

    let states: Vec<usize> = match exp.density.as_ref().and_then(|d| d.states.clone()) {
        Some(list) => list,
        // Every normalizable state, both members of each conjugate pair;
        // their densities are complex conjugates of each other.
        None => (0..spec.n_states())
            .filter(|&i| labels[i].class != SpectralClass::Continuum)
            .collect(),
    };

    let e = exp.units.energy;
    let mut s = String::from("state_index,Re_E,Im_E,x,Re_rho,Im_rho\n");
    for &i in &states {
        let rho = biorthogonal_density(&spec, i).ctx("biorthogonal density")?;
        let ev = spec.eigenvalue(i);
        for (j, &x) in exp.grid.x().iter().enumerate() {
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                i,
                ev.re / e,
                ev.im / e,
                x / exp.units.length,
                rho[j].re * exp.units.length,
                rho[j].im * exp.units.length
            ));
        }
    }

    let notes = vec![format!("density: {} states on {} points", states.len(), exp.grid.n())];
    Ok(RunOutput {
        files: vec![
            OutputFile {
                name: "density.csv",
                contents: s,
            },
            OutputFile {
                name: "spectrum.csv",
                contents: spectrum_csv(&spec, exp),
            },
        ],
        notes,
    })
}

// ---------------------------------------------------------------------------

fn file(name: &'static str, buf: Vec<u8>) -> OutputFile {
    OutputFile {
        name,
        contents: String::from_utf8(buf).expect("csv writers emit ascii"),
    }
}

fn spectrum_csv(spec: &BiorthogonalSpectrum64, exp: &Experiment) -> String {
    let labels = classify_states(spec);
    let e = exp.units.energy;
    let mut s = String::from("state_index,Re_E,Im_E,eta_norm,localization,class,charge,partner\n");
    for i in 0..spec.n_states() {
        let ev = spec.eigenvalue(i);
        let partner = spec
            .partner(i)
            .map(|p| p.to_string())
            .unwrap_or_default();
        s.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}\n",
            i,
            ev.re / e,
            ev.im / e,
            spec.eta_self(i),
            spec.localization(i),
            class_str(labels[i].class),
            charge_str(labels[i].charge),
            partner
        ));
    }
    s
}

fn fit_csv(
    fit: Option<&dynamics::GrowthFit<f64>>,
    omega: Option<f64>,
    exp: &Experiment,
) -> String {
    let t = exp.units.time;
    let mut s = String::from("gamma,omega,window_start,window_end,n_used\n");
    let (gamma, w0, w1, n) = match fit {
        Some(f) => (f.gamma * t, f.window.0 / t, f.window.1 / t, f.n_used),
        None => (f64::NAN, f64::NAN, f64::NAN, 0),
    };
    let om = omega.map(|w| w * t).unwrap_or(f64::NAN);
    s.push_str(&format!(
        "{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
        gamma, om, w0, w1, n
    ));
    s
}

fn class_str(c: SpectralClass) -> &'static str {
    match c {
        SpectralClass::Bound => "bound",
        SpectralClass::Resonance => "resonance",
        SpectralClass::Continuum => "continuum",
    }
}

fn charge_str(c: ChargeCharacter) -> &'static str {
    match c {
        ChargeCharacter::Particle => "particle",
        ChargeCharacter::Antiparticle => "antiparticle",
        ChargeCharacter::Degenerate => "degenerate",
    }
}

fn critical_kind_str(k: CriticalKind) -> &'static str {
    match k {
        CriticalKind::Emergence => "emergence",
        CriticalKind::Coalescence => "coalescence",
        CriticalKind::Anticoalescence => "anticoalescence",
        CriticalKind::Overlap => "overlap",
    }
}
