//! TOML experiment schema and its translation into solver inputs.
//!
//! Config files use reduced units throughout: energies and potential
//! strengths in mc^2, lengths in Compton wavelengths hbar/(mc), momenta
//! in mc, times in hbar/(mc^2). The `[constants]` table picks the
//! absolute unit system those scales are measured in; everything past
//! parsing works in absolute units.
//!
//! Parsing is two-phase. serde/toml rejects syntax errors, wrong types
//! and unknown keys with line and column info; `check` then walks the
//! structurally valid file and collects one named diagnostic per
//! semantic problem, so `validate` can report everything at once.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use ssw_core::dynamics::{FitWindow, Propagator};
use ssw_core::fields::{ScalarPotentialSpec, TransverseMomenta, VectorPotentialSpec};
use ssw_core::{
    make_grid, CriticalKind, DerivativeScheme, FieldConfig64, Grid64, PhysicalConstants64,
    PotentialFamily, Tolerances64,
};

pub const FAMILIES: &[&str] = &["box", "step", "free", "tabulated"];
pub const RUN_KINDS: &[&str] = &["sweep", "evolve", "critical", "backreact", "density"];
pub const SCHEMES: &[&str] = &["spectral", "fd3"];
pub const CONSTANT_SYSTEMS: &[&str] = &["natural", "atomic", "custom"];
pub const PROPAGATORS: &[&str] = &["static", "midpoint"];
pub const CRITICAL_KINDS: &[&str] = &["emergence", "coalescence", "anticoalescence", "overlap"];

/// One semantic problem, named by its config field path.
#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    /// Syntax, type or unknown-key error; the message carries line info.
    Parse(String),
    Invalid(Vec<Diagnostic>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "{m}"),
            ConfigError::Parse(m) => write!(f, "{m}"),
            ConfigError::Invalid(diags) => {
                for (i, d) in diags.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "{d}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

// ---------------------------------------------------------------------------
// Raw file mirror. Every field is optional so the semantic pass can name
// each missing piece instead of dying on the first.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    comment: Option<String>,
    out: Option<String>,
    run: Option<RawRun>,
    constants: Option<RawConstants>,
    grid: Option<RawGrid>,
    tolerances: Option<RawTolerances>,
    field: Option<RawField>,
    evolve: Option<RawEvolve>,
    sweep: Option<RawSweep>,
    critical: Option<RawCritical>,
    backreact: Option<RawBackreact>,
    density: Option<RawDensity>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    kind: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    system: Option<String>,
    hbar: Option<f64>,
    m: Option<f64>,
    c: Option<f64>,
    q: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: Option<usize>,
    length: Option<f64>,
    scheme: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    im_eps: Option<f64>,
    pair_eps: Option<f64>,
    biorth_eps: Option<f64>,
    loc_threshold: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    family: Option<String>,
    v0: Option<f64>,
    l: Option<f64>,
    w: Option<f64>,
    w_e: Option<f64>,
    q_a0: Option<f64>,
    w_b: Option<f64>,
    p_y: Option<f64>,
    p_z: Option<f64>,
    file: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvolve {
    propagator: Option<String>,
    t_max: Option<f64>,
    sample_dt: Option<f64>,
    dt: Option<f64>,
    density_stride: Option<usize>,
    fit_start: Option<f64>,
    fit_end: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    v0_values: Option<Vec<f64>>,
    v0_start: Option<f64>,
    v0_stop: Option<f64>,
    v0_steps: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCritical {
    kind: Option<String>,
    bracket: Option<Vec<f64>>,
    v0_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackreact {
    dt: Option<f64>,
    t_max: Option<f64>,
    sample_every: Option<usize>,
    enabled: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDensity {
    states: Option<Vec<usize>>,
}

// ---------------------------------------------------------------------------
// Resolved experiment.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Sweep,
    Evolve,
    Critical,
    Backreact,
    Density,
}

impl RunKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RunKind::Sweep => "sweep",
            RunKind::Evolve => "evolve",
            RunKind::Critical => "critical",
            RunKind::Backreact => "backreact",
            RunKind::Density => "density",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sweep" => RunKind::Sweep,
            "evolve" => RunKind::Evolve,
            "critical" => RunKind::Critical,
            "backreact" => RunKind::Backreact,
            "density" => RunKind::Density,
            _ => return None,
        })
    }
}

/// Absolute magnitude of each reduced unit in the configured system.
#[derive(Debug, Clone, Copy)]
pub struct Units {
    /// Rest energy m c^2.
    pub energy: f64,
    /// Compton length hbar / (m c).
    pub length: f64,
    /// Compton time hbar / (m c^2).
    pub time: f64,
    /// m c.
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct EvolvePlan {
    pub propagator: Propagator<f64>,
    pub t_max: f64,
    pub sample_dt: f64,
    pub density_stride: Option<usize>,
    pub window: FitWindow<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub v0_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct CriticalPlan {
    pub kind: CriticalKind,
    pub bracket: (f64, f64),
    pub v0_tol: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct BackreactPlan {
    pub dt: f64,
    pub t_max: f64,
    pub sample_every: usize,
    pub enabled: bool,
}

#[derive(Debug, Clone)]
pub struct DensityPlan {
    pub states: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub comment: Option<String>,
    pub kind: RunKind,
    pub consts: PhysicalConstants64,
    pub units: Units,
    pub grid: Grid64,
    pub length_compton: f64,
    pub scheme: DerivativeScheme,
    pub scheme_name: &'static str,
    pub tol: Tolerances64,
    pub fields: FieldConfig64,
    /// Set for the box and step families; regime machinery needs it.
    pub family: Option<PotentialFamily>,
    pub evolve: Option<EvolvePlan>,
    pub sweep: Option<SweepPlan>,
    pub critical: Option<CriticalPlan>,
    pub backreact: Option<BackreactPlan>,
    pub density: Option<DensityPlan>,
    /// Output directory named in the file; the --out flag overrides it.
    pub out: Option<PathBuf>,
    pub sha256: String,
}

/// Schema-check a file without building anything or touching other files.
pub fn diagnostics(path: &Path) -> Result<Vec<Diagnostic>, ConfigError> {
    let raw = parse(path)?;
    Ok(check(&raw))
}

/// Parse, check and resolve a config file into an executable experiment.
pub fn load(path: &Path) -> Result<Experiment, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::Io(format!("cannot read {}: {e}", path.display())))?;
    let raw: RawConfig = toml::from_str(&text)
        .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    let diags = check(&raw);
    if !diags.is_empty() {
        return Err(ConfigError::Invalid(diags));
    }
    resolve(&raw, &text, path)
}

fn parse(path: &Path) -> Result<RawConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::Io(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Semantic pass.

struct Check {
    diags: Vec<Diagnostic>,
}

impl Check {
    fn err(&mut self, field: &str, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn require_positive(&mut self, field: &str, v: Option<f64>) -> bool {
        match v {
            None => {
                self.err(field, "required");
                false
            }
            Some(x) if x.is_finite() && x > 0.0 => true,
            Some(x) => {
                self.err(field, format!("must be positive and finite, got {x}"));
                false
            }
        }
    }

    fn require_finite(&mut self, field: &str, v: Option<f64>) -> bool {
        match v {
            None => {
                self.err(field, "required");
                false
            }
            Some(x) if x.is_finite() => true,
            Some(_) => {
                self.err(field, "must be finite");
                false
            }
        }
    }

    fn forbid(&mut self, field: &str, present: bool, why: &str) {
        if present {
            self.err(field, format!("not allowed {why}"));
        }
    }
}

fn check(raw: &RawConfig) -> Vec<Diagnostic> {
    let mut c = Check { diags: Vec::new() };

    let kind = match &raw.run {
        None => {
            c.err("run", "section required");
            None
        }
        Some(run) => match &run.kind {
            None => {
                c.err("run.kind", "required");
                None
            }
            Some(s) => match RunKind::parse(s) {
                Some(k) => Some(k),
                None => {
                    c.err(
                        "run.kind",
                        format!("unknown kind {s:?}; allowed: {}", RUN_KINDS.join(", ")),
                    );
                    None
                }
            },
        },
    };

    check_constants(&mut c, raw.constants.as_ref());
    check_grid(&mut c, raw.grid.as_ref());
    check_tolerances(&mut c, raw.tolerances.as_ref());
    let family = check_field(&mut c, raw.field.as_ref());

    if let Some(kind) = kind {
        check_kind_sections(&mut c, raw, kind, family);
    }

    c.diags
}

fn check_constants(c: &mut Check, raw: Option<&RawConstants>) {
    let Some(k) = raw else { return }; // defaults to natural
    let system = k.system.as_deref().unwrap_or("natural");
    match system {
        "natural" | "atomic" => {
            let why = "unless system = \"custom\"";
            c.forbid("constants.hbar", k.hbar.is_some(), why);
            c.forbid("constants.m", k.m.is_some(), why);
            c.forbid("constants.c", k.c.is_some(), why);
            c.forbid("constants.q", k.q.is_some(), why);
        }
        "custom" => {
            c.require_positive("constants.hbar", k.hbar);
            c.require_positive("constants.m", k.m);
            c.require_positive("constants.c", k.c);
            match k.q {
                None => c.err("constants.q", "required"),
                Some(q) if !q.is_finite() || q == 0.0 => {
                    c.err("constants.q", "must be nonzero and finite")
                }
                _ => {}
            }
        }
        other => c.err(
            "constants.system",
            format!(
                "unknown system {other:?}; allowed: {}",
                CONSTANT_SYSTEMS.join(", ")
            ),
        ),
    }
}

fn check_grid(c: &mut Check, raw: Option<&RawGrid>) {
    let Some(g) = raw else {
        c.err("grid", "section required");
        return;
    };
    match g.n {
        None => c.err("grid.n", "required"),
        Some(n) if n < 8 || n % 2 != 0 => {
            c.err("grid.n", format!("must be even and at least 8, got {n}"))
        }
        _ => {}
    }
    c.require_positive("grid.length", g.length);
    if let Some(s) = &g.scheme {
        if !SCHEMES.contains(&s.as_str()) {
            c.err(
                "grid.scheme",
                format!("unknown scheme {s:?}; allowed: {}", SCHEMES.join(", ")),
            );
        }
    }
}

fn check_tolerances(c: &mut Check, raw: Option<&RawTolerances>) {
    let Some(t) = raw else { return };
    for (name, v) in [
        ("tolerances.im_eps", t.im_eps),
        ("tolerances.pair_eps", t.pair_eps),
        ("tolerances.biorth_eps", t.biorth_eps),
    ] {
        if let Some(x) = v {
            if !(x.is_finite() && x > 0.0) {
                c.err(name, "must be positive and finite");
            }
        }
    }
    if let Some(x) = t.loc_threshold {
        if !(x.is_finite() && x > 0.0 && x <= 1.0) {
            c.err("tolerances.loc_threshold", "must lie in (0, 1]");
        }
    }
}

/// Returns the parsed family name when recognized, for kind checks.
fn check_field<'a>(c: &mut Check, raw: Option<&'a RawField>) -> Option<&'a str> {
    let Some(f) = raw else {
        c.err("field", "section required");
        return None;
    };
    let family = match f.family.as_deref() {
        None => {
            c.err("field.family", "required");
            return None;
        }
        Some(s) if !FAMILIES.contains(&s) => {
            c.err(
                "field.family",
                format!("unknown family {s:?}; allowed: {}", FAMILIES.join(", ")),
            );
            return None;
        }
        Some(s) => s,
    };

    if let Some(p) = f.p_y {
        if !p.is_finite() {
            c.err("field.p_y", "must be finite");
        }
    }
    if let Some(p) = f.p_z {
        if !p.is_finite() {
            c.err("field.p_z", "must be finite");
        }
    }

    match family {
        "box" => {
            c.require_finite("field.v0", f.v0);
            c.require_positive("field.l", f.l);
            c.require_positive("field.w", f.w);
            let why = "for the box family";
            c.forbid("field.w_e", f.w_e.is_some(), why);
            c.forbid("field.q_a0", f.q_a0.is_some(), why);
            c.forbid("field.w_b", f.w_b.is_some(), why);
            c.forbid("field.file", f.file.is_some(), why);
        }
        "step" => {
            c.require_finite("field.v0", f.v0);
            c.require_positive("field.w_e", f.w_e);
            match f.q_a0 {
                Some(a) if !a.is_finite() => c.err("field.q_a0", "must be finite"),
                Some(a) if a != 0.0 => {
                    c.require_positive("field.w_b", f.w_b);
                }
                _ => c.forbid("field.w_b", f.w_b.is_some(), "without a nonzero q_a0"),
            }
            let why = "for the step family";
            c.forbid("field.l", f.l.is_some(), why);
            c.forbid("field.w", f.w.is_some(), why);
            c.forbid("field.file", f.file.is_some(), why);
        }
        "free" => {
            let why = "for the free family";
            for (name, present) in [
                ("field.v0", f.v0.is_some()),
                ("field.l", f.l.is_some()),
                ("field.w", f.w.is_some()),
                ("field.w_e", f.w_e.is_some()),
                ("field.q_a0", f.q_a0.is_some()),
                ("field.w_b", f.w_b.is_some()),
                ("field.file", f.file.is_some()),
            ] {
                c.forbid(name, present, why);
            }
        }
        "tabulated" => {
            if f.file.is_none() {
                c.err("field.file", "required for the tabulated family");
            }
            let why = "for the tabulated family";
            for (name, present) in [
                ("field.v0", f.v0.is_some()),
                ("field.l", f.l.is_some()),
                ("field.w", f.w.is_some()),
                ("field.w_e", f.w_e.is_some()),
                ("field.q_a0", f.q_a0.is_some()),
                ("field.w_b", f.w_b.is_some()),
            ] {
                c.forbid(name, present, why);
            }
        }
        _ => unreachable!(),
    }
    Some(family)
}

fn check_kind_sections(c: &mut Check, raw: &RawConfig, kind: RunKind, family: Option<&str>) {
    let strength_family = matches!(family, Some("box") | Some("step"));
    match kind {
        RunKind::Sweep => {
            if family.is_some() && !strength_family {
                c.err(
                    "field.family",
                    "sweep needs a strength-parameterized family (box or step)",
                );
            }
            let Some(s) = &raw.sweep else {
                c.err("sweep", "section required for run kind sweep");
                return;
            };
            check_sweep(c, s);
        }
        RunKind::Evolve => {
            let Some(e) = &raw.evolve else {
                c.err("evolve", "section required for run kind evolve");
                return;
            };
            check_evolve(c, e);
        }
        RunKind::Critical => {
            if family.is_some() && !strength_family {
                c.err(
                    "field.family",
                    "critical needs a strength-parameterized family (box or step)",
                );
            }
            let Some(k) = &raw.critical else {
                c.err("critical", "section required for run kind critical");
                return;
            };
            check_critical(c, k);
        }
        RunKind::Backreact => {
            if family.is_some() && !strength_family {
                c.err(
                    "field.family",
                    "backreact needs a strength-parameterized family (box or step)",
                );
            }
            let Some(b) = &raw.backreact else {
                c.err("backreact", "section required for run kind backreact");
                return;
            };
            check_backreact(c, b);
        }
        RunKind::Density => {
            // The [density] section is optional; defaults select every
            // non-continuum state. Explicit indices are range-checked here.
            if let (Some(d), Some(g)) = (&raw.density, &raw.grid) {
                if let (Some(states), Some(n)) = (&d.states, g.n) {
                    for &i in states {
                        if i >= 2 * n {
                            c.err(
                                "density.states",
                                format!("state index {i} out of range for a {n}-point grid"),
                            );
                        }
                    }
                }
            }
        }
    }
}

fn check_sweep(c: &mut Check, s: &RawSweep) {
    let has_list = s.v0_values.is_some();
    let has_range = s.v0_start.is_some() || s.v0_stop.is_some() || s.v0_steps.is_some();
    if has_list && has_range {
        c.err("sweep", "give either v0_values or v0_start/v0_stop/v0_steps, not both");
        return;
    }
    if let Some(vals) = &s.v0_values {
        if vals.len() < 2 {
            c.err("sweep.v0_values", "need at least two strengths");
        } else if !monotone(vals) {
            c.err("sweep.v0_values", "strengths must be strictly monotone");
        }
        return;
    }
    if !has_range {
        c.err("sweep", "needs v0_values or v0_start/v0_stop/v0_steps");
        return;
    }
    let start = c.require_finite("sweep.v0_start", s.v0_start);
    let stop = c.require_finite("sweep.v0_stop", s.v0_stop);
    match s.v0_steps {
        None => c.err("sweep.v0_steps", "required"),
        Some(k) if k < 2 => c.err("sweep.v0_steps", "need at least two points"),
        _ => {}
    }
    if start && stop && s.v0_start == s.v0_stop {
        c.err("sweep.v0_stop", "must differ from v0_start");
    }
}

fn check_evolve(c: &mut Check, e: &RawEvolve) {
    let propagator = e.propagator.as_deref().unwrap_or("static");
    if !PROPAGATORS.contains(&propagator) {
        c.err(
            "evolve.propagator",
            format!(
                "unknown propagator {propagator:?}; allowed: {}",
                PROPAGATORS.join(", ")
            ),
        );
    }
    let t_max_ok = match e.t_max {
        None => {
            c.err("evolve.t_max", "required for run kind evolve");
            false
        }
        Some(t) if !(t.is_finite() && t > 0.0) => {
            c.err("evolve.t_max", "must be positive and finite");
            false
        }
        _ => true,
    };
    match e.sample_dt {
        None => c.err("evolve.sample_dt", "required"),
        Some(s) if !(s.is_finite() && s > 0.0) => {
            c.err("evolve.sample_dt", "must be positive and finite")
        }
        Some(s) => {
            if t_max_ok && s > e.t_max.unwrap() {
                c.err("evolve.sample_dt", "must not exceed t_max");
            }
        }
    }
    if propagator == "midpoint" {
        match e.dt {
            None => c.err("evolve.dt", "required for the midpoint propagator"),
            Some(d) if !(d.is_finite() && d > 0.0) => {
                c.err("evolve.dt", "must be positive and finite")
            }
            _ => {}
        }
    } else {
        c.forbid("evolve.dt", e.dt.is_some(), "for the static propagator");
    }
    if let Some(k) = e.density_stride {
        if k == 0 {
            c.err("evolve.density_stride", "must be at least 1");
        }
    }
    match (e.fit_start, e.fit_end) {
        (None, None) => {}
        (Some(a), Some(b)) => {
            if !(a.is_finite() && b.is_finite() && a < b) {
                c.err("evolve.fit_end", "fit window needs fit_start < fit_end, both finite");
            }
        }
        _ => c.err("evolve.fit_start", "fit_start and fit_end come as a pair"),
    }
}

fn check_critical(c: &mut Check, k: &RawCritical) {
    match k.kind.as_deref() {
        None => c.err("critical.kind", "required"),
        Some(s) if !CRITICAL_KINDS.contains(&s) => c.err(
            "critical.kind",
            format!("unknown kind {s:?}; allowed: {}", CRITICAL_KINDS.join(", ")),
        ),
        _ => {}
    }
    match &k.bracket {
        None => c.err("critical.bracket", "required"),
        Some(b) if b.len() != 2 => c.err("critical.bracket", "needs exactly two strengths"),
        Some(b) if !(b[0].is_finite() && b[1].is_finite() && b[0] != b[1]) => {
            c.err("critical.bracket", "endpoints must be finite and distinct")
        }
        _ => {}
    }
    c.require_positive("critical.v0_tol", k.v0_tol);
}

fn check_backreact(c: &mut Check, b: &RawBackreact) {
    let dt_ok = c.require_positive("backreact.dt", b.dt);
    let t_ok = c.require_positive("backreact.t_max", b.t_max);
    if dt_ok && t_ok && b.t_max.unwrap() <= b.dt.unwrap() {
        c.err("backreact.t_max", "must exceed dt");
    }
    if let Some(k) = b.sample_every {
        if k == 0 {
            c.err("backreact.sample_every", "must be at least 1");
        }
    }
}

fn monotone(vals: &[f64]) -> bool {
    if vals.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let up = vals.windows(2).all(|w| w[1] > w[0]);
    let down = vals.windows(2).all(|w| w[1] < w[0]);
    up || down
}

// ---------------------------------------------------------------------------
// Resolution. Runs only on a check-clean file; unwraps encode that.

fn resolve(raw: &RawConfig, text: &str, path: &Path) -> Result<Experiment, ConfigError> {
    let sha256 = {
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        format!("{:x}", h.finalize())
    };

    let kind = RunKind::parse(raw.run.as_ref().unwrap().kind.as_deref().unwrap()).unwrap();

    let consts = match raw.constants.as_ref() {
        None => PhysicalConstants64::natural(),
        Some(k) => match k.system.as_deref().unwrap_or("natural") {
            "natural" => PhysicalConstants64::natural(),
            "atomic" => PhysicalConstants64::atomic(),
            _ => PhysicalConstants64::new(
                k.hbar.unwrap(),
                k.m.unwrap(),
                k.c.unwrap(),
                k.q.unwrap(),
            )
            .map_err(|e| invalid("constants", e.to_string()))?,
        },
    };
    let units = Units {
        energy: consts.mc2(),
        length: consts.lambda_c(),
        time: consts.t_c(),
        momentum: consts.m * consts.c,
    };

    let g = raw.grid.as_ref().unwrap();
    let length_compton = g.length.unwrap();
    let grid = make_grid(g.n.unwrap(), length_compton * units.length, &consts)
        .map_err(|e| invalid("grid", e.to_string()))?;
    let (scheme, scheme_name) = match g.scheme.as_deref().unwrap_or("spectral") {
        "fd3" => (DerivativeScheme::FiniteDifference3, "fd3"),
        _ => (DerivativeScheme::Spectral, "spectral"),
    };

    let mut tol = Tolerances64::for_constants(&consts);
    if let Some(t) = raw.tolerances.as_ref() {
        if let Some(x) = t.im_eps {
            tol.im_eps = x * units.energy;
        }
        if let Some(x) = t.pair_eps {
            tol.pair_eps = x * units.energy;
        }
        if let Some(x) = t.biorth_eps {
            tol.biorth_eps = x;
        }
        if let Some(x) = t.loc_threshold {
            tol.loc_threshold = x;
        }
    }

    let (fields, family) =
        resolve_fields(raw.field.as_ref().unwrap(), &units, consts.q, &grid, path)?;

    let evolve = raw.evolve.as_ref().map(|e| {
        let propagator = match e.propagator.as_deref().unwrap_or("static") {
            "midpoint" => Propagator::Midpoint {
                dt: e.dt.unwrap() * units.time,
            },
            _ => Propagator::StaticSpectral,
        };
        let window = match (e.fit_start, e.fit_end) {
            (Some(a), Some(b)) => FitWindow::Range(a * units.time, b * units.time),
            _ => FitWindow::Auto,
        };
        EvolvePlan {
            propagator,
            t_max: e.t_max.unwrap() * units.time,
            sample_dt: e.sample_dt.unwrap() * units.time,
            density_stride: e.density_stride,
            window,
        }
    });

    let sweep = raw.sweep.as_ref().map(|s| {
        let v0_values: Vec<f64> = match &s.v0_values {
            Some(vals) => vals.iter().map(|v| v * units.energy).collect(),
            None => {
                let (a, b) = (s.v0_start.unwrap(), s.v0_stop.unwrap());
                let k = s.v0_steps.unwrap();
                (0..k)
                    .map(|i| {
                        let f = i as f64 / (k - 1) as f64;
                        (a + (b - a) * f) * units.energy
                    })
                    .collect()
            }
        };
        SweepPlan { v0_values }
    });

    let critical = raw.critical.as_ref().map(|k| CriticalPlan {
        kind: match k.kind.as_deref().unwrap() {
            "emergence" => CriticalKind::Emergence,
            "coalescence" => CriticalKind::Coalescence,
            "anticoalescence" => CriticalKind::Anticoalescence,
            _ => CriticalKind::Overlap,
        },
        bracket: {
            let b = k.bracket.as_ref().unwrap();
            (b[0] * units.energy, b[1] * units.energy)
        },
        v0_tol: k.v0_tol.unwrap() * units.energy,
    });

    let backreact = raw.backreact.as_ref().map(|b| BackreactPlan {
        dt: b.dt.unwrap() * units.time,
        t_max: b.t_max.unwrap() * units.time,
        sample_every: b.sample_every.unwrap_or(1),
        enabled: b.enabled.unwrap_or(true),
    });

    let density = raw.density.as_ref().map(|d| DensityPlan {
        states: d.states.clone(),
    });

    Ok(Experiment {
        comment: raw.comment.clone(),
        kind,
        consts,
        units,
        grid,
        length_compton,
        scheme,
        scheme_name,
        tol,
        fields,
        family,
        evolve,
        sweep,
        critical,
        backreact,
        density,
        out: raw.out.as_ref().map(PathBuf::from),
        sha256,
    })
}

fn resolve_fields(
    f: &RawField,
    units: &Units,
    q: f64,
    grid: &Grid64,
    config_path: &Path,
) -> Result<(FieldConfig64, Option<PotentialFamily>), ConfigError> {
    let p_z = f.p_z.unwrap_or(0.0) * units.momentum;
    match f.family.as_deref().unwrap() {
        "box" => {
            let scalar = ScalarPotentialSpec::SmoothBox {
                v0: f.v0.unwrap() * units.energy,
                l: f.l.unwrap() * units.length,
                w: f.w.unwrap() * units.length,
            };
            let transverse = TransverseMomenta {
                p_y: f.p_y.unwrap_or(0.0) * units.momentum,
                p_z,
            };
            Ok((
                FieldConfig64 {
                    scalar,
                    vector: VectorPotentialSpec::Zero,
                    transverse,
                },
                Some(PotentialFamily::BoxWell),
            ))
        }
        "step" => {
            let scalar = ScalarPotentialSpec::SmoothStep {
                v0: f.v0.unwrap() * units.energy,
                w_e: f.w_e.unwrap() * units.length,
            };
            let q_a0 = f.q_a0.unwrap_or(0.0);
            let vector = if q_a0 != 0.0 {
                VectorPotentialSpec::SmoothStepY {
                    // q_a0 is the product q A0 in mc; SmoothStepY stores
                    // A0 itself, so divide the charge back out.
                    a0: q_a0 * units.momentum / q,
                    w_b: f.w_b.unwrap() * units.length,
                }
            } else {
                VectorPotentialSpec::Zero
            };
            // p_y defaults to q A0 / 2, which makes the kinematic momentum
            // p_y - q A_y antisymmetric across the step.
            let p_y = f.p_y.unwrap_or(q_a0 / 2.0) * units.momentum;
            Ok((
                FieldConfig64 {
                    scalar,
                    vector,
                    transverse: TransverseMomenta { p_y, p_z },
                },
                Some(PotentialFamily::StepWithB),
            ))
        }
        "free" => Ok((
            FieldConfig64::free(TransverseMomenta {
                p_y: f.p_y.unwrap_or(0.0) * units.momentum,
                p_z,
            }),
            None,
        )),
        "tabulated" => {
            let rel = f.file.as_deref().unwrap();
            let data_path = config_path.parent().unwrap_or(Path::new(".")).join(rel);
            let (x, qphi) = read_tabulated(&data_path, units)?;
            if x.len() != grid.n() {
                return Err(invalid(
                    "field.file",
                    format!("{} rows, grid has {} points", x.len(), grid.n()),
                ));
            }
            let scalar = ScalarPotentialSpec::Tabulated { x, qphi };
            Ok((
                FieldConfig64 {
                    scalar,
                    vector: VectorPotentialSpec::Zero,
                    transverse: TransverseMomenta {
                        p_y: f.p_y.unwrap_or(0.0) * units.momentum,
                        p_z,
                    },
                },
                None,
            ))
        }
        _ => unreachable!(),
    }
}

/// Two whitespace-separated columns: x in Compton lengths, q phi in mc^2.
/// Lines starting with '#' are comments.
fn read_tabulated(path: &Path, units: &Units) -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid("field.file", format!("cannot read {}: {e}", path.display())))?;
    let mut x = Vec::new();
    let mut qphi = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split_whitespace();
        let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
            return Err(invalid(
                "field.file",
                format!("{}:{}: need two columns", path.display(), lineno + 1),
            ));
        };
        let parse = |s: &str| -> Result<f64, ConfigError> {
            s.parse::<f64>().map_err(|_| {
                invalid(
                    "field.file",
                    format!("{}:{}: bad number {s:?}", path.display(), lineno + 1),
                )
            })
        };
        x.push(parse(a)? * units.length);
        qphi.push(parse(b)? * units.energy);
    }
    Ok((x, qphi))
}

fn invalid(field: &str, message: String) -> ConfigError {
    ConfigError::Invalid(vec![Diagnostic {
        field: field.to_string(),
        message,
    }])
}
