//! Run manifest: enough provenance to reproduce or audit an output
//! directory. Deliberately free of timestamps and hostnames so that
//! re-running a config byte-reproduces the whole directory.

use std::fmt::Write as _;

use crate::config::Experiment;

pub const MANIFEST_NAME: &str = "manifest.toml";

/// Render the manifest for one executed command.
pub fn render(exp: &Experiment, command: &str, outputs: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "command = {command:?}");
    let _ = writeln!(s, "code_version = {:?}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "config_sha256 = {:?}", exp.sha256);
    if let Some(c) = &exp.comment {
        let _ = writeln!(s, "comment = {c:?}");
    }
    let _ = writeln!(s, "outputs = [{}]", quote_list(outputs));
    let _ = writeln!(s);

    // Resolution snapshot: what a convergence check needs to double the
    // grid and compare like with like.
    let g = &exp.grid;
    let _ = writeln!(s, "[grid]");
    let _ = writeln!(s, "n = {}", g.n());
    let _ = writeln!(s, "scheme = {:?}", exp.scheme_name);
    let _ = writeln!(s, "length_compton = {}", exp.length_compton);
    let _ = writeln!(s, "dx_compton = {}", g.dx() / exp.units.length);
    let max_p = g.momenta().last().copied().unwrap_or(0.0).abs();
    let _ = writeln!(s, "max_momentum_mc = {}", max_p / exp.units.momentum);
    let _ = writeln!(s);

    // Absolute size of each reduced unit in the configured system; CSV
    // columns divide these out, so they convert outputs back if needed.
    let _ = writeln!(s, "[units]");
    let _ = writeln!(s, "energy_mc2 = {}", exp.units.energy);
    let _ = writeln!(s, "length_compton = {}", exp.units.length);
    let _ = writeln!(s, "time_compton = {}", exp.units.time);
    let _ = writeln!(s, "momentum_mc = {}", exp.units.momentum);
    s
}

fn quote_list(items: &[String]) -> String {
    items
        .iter()
        .map(|i| format!("{i:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}
