//! Command-line front end. Every command reads a [`RunConfig`], computes,
//! and writes plot-ready CSV plus a flat JSON summary into the output
//! directory.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::analysis;
use crate::config::{RunConfig, SpectrumModel, SweepTarget};
use crate::error::{Error, Result};
use crate::model::{self, ParitySector};
use crate::protocol::{self, ProtocolResult};
use crate::spectral::{self, Spectrum};

#[derive(Debug, Parser)]
#[command(name = "topo-squid", version, about = "Topological RF SQUID simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "TOPO_SQUID_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Protocol RNG seed (overrides `protocol.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override a config key, e.g. `--set circuit.e_l=0.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Potentials of both parities and the adiabatic bands, with well analysis.
    Potential,
    /// Lowest eigenvalues and the tunnel splitting.
    Spectrum {
        /// Number of levels (overrides `spectrum.k`).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Shot ensembles of the phase-slip experiment and the oscillation fit.
    Protocol,
    /// One target quantity across a parameter sweep.
    Sweep,
}

/// Parse arguments, run, report errors on stderr and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("protocol.seed={seed}"));
    }
    if let Command::Spectrum { k: Some(k) } = cli.command {
        overrides.push(format!("spectrum.k={k}"));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::Potential => cmd_potential(&cfg, &cli.out),
        Command::Spectrum { .. } => cmd_spectrum(&cfg, &cli.out),
        Command::Protocol => cmd_protocol(&cfg, &cli.out),
        Command::Sweep => cmd_sweep(&cfg, &cli.out),
    }
}

/// Fixed-width scientific notation with 15 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.14e}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(path: &Path, summary: &BTreeMap<String, Value>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Sampled potentials at one bias.
#[derive(Debug, Clone)]
pub struct PotentialTable {
    pub phi: Vec<f64>,
    pub even: Vec<f64>,
    pub odd: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

pub fn potential_table(cfg: &RunConfig) -> PotentialTable {
    let p = cfg.circuit();
    let phi_e = cfg.potential.phi_e;
    let phi: Vec<f64> = cfg.grid.points().collect();
    let mut t = PotentialTable {
        even: Vec::with_capacity(phi.len()),
        odd: Vec::with_capacity(phi.len()),
        plus: Vec::with_capacity(phi.len()),
        minus: Vec::with_capacity(phi.len()),
        phi,
    };
    for &x in &t.phi {
        t.even.push(model::potential(x, phi_e, &p, ParitySector::Even));
        t.odd.push(model::potential(x, phi_e, &p, ParitySector::Odd));
        let (lo, hi) = model::potential_spinor(x, phi_e, &p).bands();
        t.plus.push(hi);
        t.minus.push(lo);
    }
    t
}

pub fn potential_summary(cfg: &RunConfig) -> BTreeMap<String, Value> {
    let p = cfg.circuit();
    let phi_e = cfg.potential.phi_e;
    let mut s = BTreeMap::new();
    s.insert("phi_e_rad".into(), json!(phi_e));
    for sector in [ParitySector::Even, ParitySector::Odd] {
        let tag = match sector {
            ParitySector::Even => "even",
            ParitySector::Odd => "odd",
        };
        let r = analysis::scan_wells(&p, phi_e, sector, &cfg.grid);
        s.insert(format!("{tag}_minima_count"), json!(r.minima.len()));
        s.insert(format!("{tag}_minima_phi_rad"), json!(r.minima.iter().map(|m| m.phi).collect::<Vec<_>>()));
        s.insert(format!("{tag}_minima_u_GHz"), json!(r.minima.iter().map(|m| m.u).collect::<Vec<_>>()));
        s.insert(format!("{tag}_separation_rad"), json!(r.separation));
        s.insert(format!("{tag}_separation_over_pi"), json!(r.separation.map(|x| x / std::f64::consts::PI)));
        s.insert(format!("{tag}_barrier_phi_rad"), json!(r.barrier_top.map(|b| b.phi)));
        s.insert(format!("{tag}_barrier_height_GHz"), json!(r.barrier_height));
    }
    let k = ((phi_e / (2.0 * std::f64::consts::PI)).floor()) as i64;
    s.insert("anticrossing_phi_rad".into(), json!((2 * k + 1) as f64 * std::f64::consts::PI));
    s.insert("anticrossing_gap_GHz".into(), json!(analysis::anticrossing_gap(&p, k)));
    s
}

pub fn cmd_potential(cfg: &RunConfig, out: &Path) -> Result<()> {
    let t = potential_table(cfg);
    let rows = (0..t.phi.len()).map(|i| {
        [t.phi[i], t.even[i], t.odd[i], t.plus[i], t.minus[i]]
            .iter()
            .map(|&v| fmt_f64(v))
            .collect()
    });
    write_csv(
        &out.join("potential.csv"),
        &["phi_rad", "u_even_GHz", "u_odd_GHz", "u_plus_GHz", "u_minus_GHz"],
        rows,
    )?;
    let s = potential_summary(cfg);
    write_summary(&out.join("potential_summary.json"), &s)?;
    println!(
        "even minima: {}, separation: {} rad",
        s["even_minima_count"], s["even_separation_rad"]
    );
    Ok(())
}

pub fn spectrum(cfg: &RunConfig) -> Result<Spectrum> {
    let p = cfg.circuit();
    let s = &cfg.spectrum;
    let (h, k) = match s.model {
        SpectrumModel::Even => (spectral::assemble_scalar(&cfg.grid, &p, s.phi_e, ParitySector::Even)?, s.k),
        SpectrumModel::Odd => (spectral::assemble_scalar(&cfg.grid, &p, s.phi_e, ParitySector::Odd)?, s.k),
        // k levels per parity sector.
        SpectrumModel::Spinor => (spectral::assemble_spinor(&cfg.grid, &p, s.phi_e)?, 2 * s.k),
    };
    spectral::eigensolve(&h, k)
}

pub fn cmd_spectrum(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = spectrum(cfg)?;
    let rows = (0..spec.len()).map(|i| {
        vec![
            i.to_string(),
            fmt_f64(spec.eigenvalues[i]),
            fmt_f64(spec.parity_z(i)),
        ]
    });
    write_csv(&out.join("spectrum.csv"), &["index", "energy_GHz", "parity_z"], rows)?;

    let gap = spec.gap().expect("k >= 2 is validated");
    let mut s = BTreeMap::new();
    s.insert("model".into(), json!(cfg.spectrum.model));
    s.insert("phi_e_rad".into(), json!(cfg.spectrum.phi_e));
    s.insert("delta_e_GHz".into(), json!(gap));
    s.insert("delta_e_MHz".into(), json!(gap * 1e3));
    s.insert("period_ns".into(), json!(1.0 / gap));
    s.insert("n".into(), json!(cfg.grid.n));
    s.insert("phi_min_rad".into(), json!(cfg.grid.phi_min));
    s.insert("phi_max_rad".into(), json!(cfg.grid.phi_max));
    s.insert("spacing_rad".into(), json!(cfg.grid.spacing()));
    s.insert("kinetic_coefficient_GHz".into(), json!(cfg.circuit().kinetic_coefficient()));
    write_summary(&out.join("spectrum_summary.json"), &s)?;

    if cfg.spectrum.wavefunctions {
        let mut header = vec!["phi_rad".to_string()];
        let spinor = cfg.spectrum.model == SpectrumModel::Spinor;
        for i in 0..spec.len() {
            if spinor {
                header.push(format!("psi{i}_even"));
                header.push(format!("psi{i}_odd"));
            } else {
                header.push(format!("psi{i}"));
            }
        }
        let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
        let width = if spinor { 2 } else { 1 };
        let rows = cfg.grid.points().enumerate().map(|(j, phi)| {
            let mut r = vec![fmt_f64(phi)];
            for v in &spec.eigenvectors {
                for c in 0..width {
                    r.push(fmt_f64(v[width * j + c]));
                }
            }
            r
        });
        write_csv(&out.join("wavefunctions.csv"), &hdr, rows)?;
    }
    println!("delta_e = {:.6e} GHz ({:.4} MHz), period {:.3} ns", gap, gap * 1e3, 1.0 / gap);
    Ok(())
}

pub fn cmd_protocol(cfg: &RunConfig, out: &Path) -> Result<()> {
    let r = protocol::run_scan(&cfg.protocol_config())?;
    write_protocol(&r, out)?;
    println!(
        "f = {:.6e} GHz (spectral {:.6e}), visibility {:.4}, residual {:.3e}",
        r.fit.frequency, r.delta_e_spectral, r.fit.visibility, r.fit.residual
    );
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn write_protocol(r: &ProtocolResult, out: &Path) -> Result<()> {
    let rows = r.points.iter().map(|p| {
        vec![
            fmt_f64(p.hold_time),
            fmt_f64(p.p2phi0),
            fmt_f64(p.stderr),
            p.n_shots.to_string(),
            fmt_f64(p.measured_phase),
            fmt_f64(p.mean_phase),
            fmt_f64(p.parity_z),
            p.flips.to_string(),
        ]
    });
    write_csv(
        &out.join("scan.csv"),
        &[
            "dt_ns",
            "p2phi0",
            "stderr",
            "n_shots",
            "measured_phase_rad",
            "mean_phase_rad",
            "parity_z",
            "flips",
        ],
        rows,
    )?;
    let shots = r.shots.iter().map(|s| {
        vec![
            s.hold_index.to_string(),
            s.shot_index.to_string(),
            fmt_f64(s.hold_time),
            s.flips.to_string(),
            s.outcome.map(|m| m.to_string()).unwrap_or_default(),
            fmt_f64(s.p2phi0),
            fmt_f64(s.expected_flux),
            fmt_f64(s.mean_phase),
            fmt_f64(s.parity_z),
        ]
    });
    write_csv(
        &out.join("shots.csv"),
        &[
            "hold_index",
            "shot_index",
            "dt_ns",
            "flips",
            "outcome_phi0",
            "p2phi0",
            "expected_flux_phi0",
            "mean_phase_rad",
            "parity_z",
        ],
        shots,
    )?;
    let mut s = BTreeMap::new();
    s.insert("frequency_GHz".into(), json!(r.fit.frequency));
    s.insert("visibility".into(), json!(r.fit.visibility));
    s.insert("residual".into(), json!(r.fit.residual));
    s.insert("offset".into(), json!(r.fit.offset));
    s.insert("amplitude".into(), json!(r.fit.amplitude));
    s.insert("fit_degenerate".into(), json!(r.fit.degenerate));
    s.insert("delta_e_spectral_GHz".into(), json!(r.delta_e_spectral));
    s.insert("readout_labels_phi0".into(), json!(r.readout_labels));
    s.insert("max_truncation".into(), json!(r.max_truncation));
    s.insert("warnings".into(), json!(r.warnings));
    write_summary(&out.join("fit.json"), &s)
}

/// One evaluated sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub target: Option<f64>,
    pub epsilon: Option<f64>,
    pub note: String,
}

fn sweep_target(cfg: &RunConfig, target: SweepTarget) -> Result<f64> {
    let p = cfg.circuit();
    match target {
        SweepTarget::Splitting => match cfg.spectrum.model {
            SpectrumModel::Even => spectral::lowest_gap(&p, &cfg.grid, cfg.spectrum.phi_e, ParitySector::Even),
            SpectrumModel::Odd => spectral::lowest_gap(&p, &cfg.grid, cfg.spectrum.phi_e, ParitySector::Odd),
            SpectrumModel::Spinor => {
                spectral::even_doublet_splitting(&p, &cfg.grid, cfg.spectrum.phi_e, cfg.spectrum.k.max(16))
            }
        },
        SweepTarget::Separation => {
            let r = analysis::find_wells_on(&p, cfg.potential.phi_e, ParitySector::Even, &cfg.grid)?;
            r.separation
                .ok_or_else(|| Error::domain("no separation between the deepest minima"))
        }
        SweepTarget::Visibility => Ok(protocol::run_scan(&cfg.protocol_config())?.fit.visibility),
    }
}

/// Evaluate the configured sweep; rows come back in sweep order.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "no [sweep] section configured"))?;
    let path = spec.parameter.as_str();
    let known = RunConfig::default().to_table();
    let exists = {
        let mut parts = path.split('.');
        let first = parts.next().and_then(|p| known.get(p));
        let rest: Vec<&str> = parts.collect();
        match (first, rest.as_slice()) {
            (Some(toml::Value::Table(t)), [leaf]) => t.contains_key(*leaf) || path == "circuit.conductance",
            _ => false,
        }
    };
    if !exists {
        return Err(Error::config("sweep.parameter", format!("unknown parameter `{path}`")));
    }
    let points = spec.points()?;
    let target = spec.target;
    let rows = points
        .par_iter()
        .map(|&v| match cfg.with_value(path, v) {
            Ok(c) => {
                let eps = Some(c.circuit().epsilon);
                match sweep_target(&c, target) {
                    Ok(t) => SweepRow { value: v, target: Some(t), epsilon: eps, note: String::new() },
                    Err(e) => SweepRow { value: v, target: None, epsilon: eps, note: e.to_string() },
                }
            }
            Err(e) => SweepRow { value: v, target: None, epsilon: None, note: e.to_string() },
        })
        .collect();
    Ok(rows)
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let rows = sweep(cfg)?;
    let spec = cfg.sweep.as_ref().expect("checked by sweep()");
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let failures = rows.iter().filter(|r| r.target.is_none()).count();
    let records = rows.iter().map(|r| {
        vec![
            spec.parameter.clone(),
            fmt_f64(r.value),
            opt(r.target),
            opt(r.epsilon),
            r.note.clone(),
        ]
    });
    write_csv(
        &out.join("sweep.csv"),
        &["parameter", "value", spec.target.column(), "epsilon_GHz", "note"],
        records,
    )?;
    println!("{} points, {failures} failed", rows.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_has_fifteen_digits_and_round_trips() {
        for v in [0.025018382352941, -199.49937343260, 1e-300, std::f64::consts::TAU] {
            let s = fmt_f64(v);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.replace('.', "").len(), 15, "{s}");
            let back: f64 = s.parse().unwrap();
            assert!(((back - v) / v).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_sweep_parameter_is_config_error() {
        let cfg = RunConfig::from_toml(
            "[sweep]\nparameter = \"circuit.nope\"\nvalues = [1.0]\ntarget = \"separation\"\n",
            &[],
        )
        .unwrap();
        assert!(matches!(sweep(&cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn bad_sweep_point_is_recorded_not_fatal() {
        let cfg = RunConfig::from_toml(
            "[sweep]\nparameter = \"circuit.e_l\"\nvalues = [1.0, -1.0]\ntarget = \"separation\"\n",
            &[],
        )
        .unwrap();
        let rows = sweep(&cfg).unwrap();
        assert!(rows[0].target.is_some());
        assert!(rows[1].target.is_none());
        assert!(rows[1].note.contains("e_l"));
    }
}
