//! Static landscape analysis: wells, barriers, anticrossings and the
//! parity-transfer estimates for Majorana hybridization.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::PhaseGrid;
use crate::model::{self, CircuitParams, JunctionMode, ParitySector};

/// A stationary point of the potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub phi: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WellReport {
    /// All local minima in the window, sorted by φ.
    pub minima: Vec<Extremum>,
    /// All local maxima in the window, sorted by φ.
    pub maxima: Vec<Extremum>,
    /// Highest point between the two deepest minima.
    pub barrier_top: Option<Extremum>,
    /// `φ_right - φ_left` of the two deepest minima.
    pub separation: Option<f64>,
    /// Barrier energy above the lower of the two deepest minima.
    pub barrier_height: Option<f64>,
}

impl WellReport {
    /// The two deepest minima, ordered by φ.
    pub fn deepest_pair(&self) -> Option<(Extremum, Extremum)> {
        if self.minima.len() < 2 {
            return None;
        }
        let mut idx: Vec<usize> = (0..self.minima.len()).collect();
        idx.sort_by(|&a, &b| {
            self.minima[a]
                .u
                .total_cmp(&self.minima[b].u)
                .then(self.minima[a].phi.total_cmp(&self.minima[b].phi))
        });
        let (a, b) = (idx[0].min(idx[1]), idx[0].max(idx[1]));
        Some((self.minima[a], self.minima[b]))
    }

    pub fn global_minimum(&self) -> Option<Extremum> {
        self.minima.iter().copied().min_by(|a, b| a.u.total_cmp(&b.u))
    }
}

/// Locate every stationary point of one sector's potential on `window`.
///
/// Sign changes of `dU/dφ` between grid nodes are refined by bisection.
pub fn scan_wells(
    p: &CircuitParams,
    phi_e: f64,
    sector: ParitySector,
    window: &PhaseGrid,
) -> WellReport {
    let du = |phi: f64| model::potential_derivative(phi, phi_e, p, sector);
    let u = |phi: f64| model::potential(phi, phi_e, p, sector);
    let mut minima = Vec::new();
    let mut maxima = Vec::new();
    let mut prev_phi = window.phi_min;
    let mut prev_d = du(prev_phi);
    for phi in window.points().skip(1) {
        let d = du(phi);
        if prev_d == 0.0 {
            // Exact stationary node; classify by curvature.
            let curv = model::potential_second_derivative(prev_phi, phi_e, p, sector);
            let e = Extremum { phi: prev_phi, u: u(prev_phi) };
            if curv > 0.0 {
                minima.push(e);
            } else if curv < 0.0 {
                maxima.push(e);
            }
        } else if prev_d * d < 0.0 {
            let root = bisect(&du, prev_phi, phi);
            let e = Extremum { phi: root, u: u(root) };
            if prev_d < 0.0 {
                minima.push(e);
            } else {
                maxima.push(e);
            }
        }
        prev_phi = phi;
        prev_d = d;
    }

    let mut report = WellReport {
        minima,
        maxima,
        barrier_top: None,
        separation: None,
        barrier_height: None,
    };
    if let Some((left, right)) = report.deepest_pair() {
        let top = report
            .maxima
            .iter()
            .copied()
            .filter(|m| m.phi > left.phi && m.phi < right.phi)
            .max_by(|a, b| a.u.total_cmp(&b.u));
        report.separation = Some(right.phi - left.phi);
        if let Some(top) = top {
            report.barrier_height = Some((top.u - left.u.min(right.u)).max(0.0));
            report.barrier_top = Some(top);
        }
    }
    report
}

/// Bisection on a bracketed sign change down to adjacent floats.
fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-13 * (1.0 + mid.abs()) {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Double-well characterization on the default window.
///
/// Fails with [`Error::NoDoubleWell`] when fewer than two minima exist.
pub fn find_wells(p: &CircuitParams, phi_e: f64, sector: ParitySector) -> Result<WellReport> {
    find_wells_on(p, phi_e, sector, &PhaseGrid::default())
}

pub fn find_wells_on(
    p: &CircuitParams,
    phi_e: f64,
    sector: ParitySector,
    window: &PhaseGrid,
) -> Result<WellReport> {
    p.validate()?;
    if !matches!(p.junction_mode, JunctionMode::Topological | JunctionMode::Combined) {
        return Err(Error::domain(format!(
            "well analysis needs the Majorana coupling, junction mode is {:?}",
            p.junction_mode
        )));
    }
    let report = scan_wells(p, phi_e, sector, window);
    if report.minima.len() < 2 {
        return Err(Error::NoDoubleWell { minima: report.minima.len() });
    }
    Ok(report)
}

/// Gap between the adiabatic bands at the crossing point `φ = (2k+1)π`.
pub fn anticrossing_gap(p: &CircuitParams, k: i64) -> f64 {
    let phi = (2 * k + 1) as f64 * PI;
    // The inductive term is common to both bands, so the bias is irrelevant.
    model::potential_spinor(phi, 0.0, p).gap()
}

fn parity_bias(phi: f64, p: &CircuitParams) -> Result<f64> {
    let c = (0.5 * phi).cos();
    let bias = p.e_m * c;
    if p.epsilon == 0.0 && (bias == 0.0 || c.abs() < 1e-12) {
        return Err(Error::DegeneratePoint);
    }
    Ok(bias)
}

/// Quasiclassical odd-parity amplitude `ε / √(ε² + E_m² cos²(φ/2))`.
pub fn parity_transfer_amplitude(phi: f64, p: &CircuitParams) -> Result<f64> {
    let bias = parity_bias(phi, p)?;
    let denom = p.epsilon.hypot(bias);
    Ok((p.epsilon / denom).clamp(0.0, 1.0))
}

/// Exact maximum odd-parity population of a static two-level system with
/// bias `E_m cos(φ/2)` and coupling `ε`, started in even parity.
pub fn parity_transfer_rabi(phi: f64, p: &CircuitParams) -> Result<f64> {
    let bias = parity_bias(phi, p)?;
    let e2 = p.epsilon * p.epsilon;
    Ok((e2 / (e2 + bias * bias)).clamp(0.0, 1.0))
}

/// Parity-switching estimates for the left well at `φ_e = 2π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunnelingEstimate {
    /// Left minimum of the even double well.
    pub left_minimum: f64,
    /// Quasiclassical amplitude at `φ = π/2`.
    pub amplitude_quarter_point: f64,
    /// Two-level maximum population at `φ = π/2`.
    pub rabi_quarter_point: f64,
    pub amplitude_at_left_minimum: f64,
    pub rabi_at_left_minimum: f64,
    /// Band gap at `φ = π`.
    pub anticrossing_gap: f64,
}

/// Parity-transfer estimates; the parity-switching tunneling rate is taken
/// as the parity transition rate at a fixed classical phase.
pub fn tunneling_estimate(p: &CircuitParams) -> Result<TunnelingEstimate> {
    let wells = find_wells(p, 2.0 * PI, ParitySector::Even)?;
    let (left, _) = wells.deepest_pair().ok_or(Error::NoDoubleWell { minima: wells.minima.len() })?;
    Ok(TunnelingEstimate {
        left_minimum: left.phi,
        amplitude_quarter_point: parity_transfer_amplitude(0.5 * PI, p)?,
        rabi_quarter_point: parity_transfer_rabi(0.5 * PI, p)?,
        amplitude_at_left_minimum: parity_transfer_amplitude(left.phi, p)?,
        rabi_at_left_minimum: parity_transfer_rabi(left.phi, p)?,
        anticrossing_gap: anticrossing_gap(p, 0),
    })
}
