//! Quasi-1D Klein-Gordon dynamics in the two-component Feshbach-Villars
//! form: pseudo-Hermitian spectra of smooth potential wells and steps,
//! bosonic pair creation N(t) from eta-overlaps of evolved modes, and a
//! phenomenological back-reaction model that drains the external field.
//!
//! Everything is generic over the real scalar type (`scalar::Real`,
//! implemented for f32 and f64); the `*64` aliases below pin the common
//! case. Configuration, units and CLI live in the companion binary crate.

use blas_src as _;

pub mod backreaction;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod grid;
pub mod hamiltonian;
pub mod scalar;
pub mod spectral;
pub mod tolerances;

pub use backreaction::{
    induced_field, initial_field_energy, run_backreaction, write_backreaction_csv,
    BackReactionOptions, BackReactionRecord,
};
pub use constants::PhysicalConstants;
pub use dynamics::{
    build_free_basis, evolve, fit_growth_rate, oscillation_frequency, pair_product_drift,
    particle_density, particle_number, write_density_csv, write_evolution_csv, EvolutionRecord,
    EvolveOptions, FitWindow, FreeModeBasis, GrowthFit, Propagator,
};
pub use error::{Error, Result};
pub use fields::{FieldConfig, ScalarPotentialSpec, TransverseMomenta, VectorPotentialSpec};
pub use grid::{make_grid, Grid};
pub use hamiltonian::{assemble, DerivativeScheme, FvHamiltonian};
pub use scalar::Real;
pub use spectral::{
    biorthogonal_density, classify_states, config_at_strength, continuum_edges, eigensolve,
    find_critical, overlap_strength_analytic, regime_classify, sweep, write_sweep_csv,
    BiorthogonalSpectrum,
    ChargeCharacter, CriticalKind, CriticalPoint, PotentialFamily, Regime, SpectralClass,
    StateLabel, SweepPoint, SweepRow, SweepTable,
};
pub use tolerances::Tolerances;

pub type C64 = num_complex::Complex<f64>;
pub type Grid64 = Grid<f64>;
pub type PhysicalConstants64 = PhysicalConstants<f64>;
pub type Tolerances64 = Tolerances<f64>;
pub type FieldConfig64 = FieldConfig<f64>;
pub type FvHamiltonian64 = FvHamiltonian<f64>;
pub type BiorthogonalSpectrum64 = BiorthogonalSpectrum<f64>;
