//! Circuit parameters and closed-form energies of the topological RF SQUID.
//!
//! All energies are `E/h` in GHz, times in ns, phases in radians. The even
//! parity sector carries `-E_m cos(φ/2)`, the odd sector `+E_m cos(φ/2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the junction couples the two superconductors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JunctionMode {
    /// Majorana coupling `∓E_m cos(φ/2)` only.
    #[default]
    Topological,
    /// Conventional tunnel junction `-E_J cos φ`, parity independent.
    TrivialTunneling,
    /// Single-channel Andreev energy `-Δ√(1 - D sin²(φ/2))`, parity independent.
    TrivialFull,
    /// Majorana coupling plus the single-channel Andreev energy.
    Combined,
}

/// Which charge quantum the number operator `n` counts.
///
/// With `n` counting single electrons, `n` is conjugate to `φ/2` and the
/// kinetic term becomes `4 E_c (-d²/dφ²)`. Counting Cooper pairs gives the
/// bare `E_c (-d²/dφ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChargeCounting {
    #[default]
    Electrons,
    CooperPairs,
}

impl ChargeCounting {
    pub fn kinetic_factor(self) -> f64 {
        match self {
            ChargeCounting::Electrons => 4.0,
            ChargeCounting::CooperPairs => 1.0,
        }
    }
}

/// Fermion parity of the Majorana pair at the junction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParitySector {
    Even,
    Odd,
}

impl ParitySector {
    /// Eigenvalue of `σ_z` in the {even, odd} basis.
    pub fn sign(self) -> f64 {
        match self {
            ParitySector::Even => 1.0,
            ParitySector::Odd => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            ParitySector::Even => ParitySector::Odd,
            ParitySector::Odd => ParitySector::Even,
        }
    }
}

/// Energy scales of the loop and the junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitParams {
    /// Charging energy `E_c` (GHz).
    pub e_c: f64,
    /// Inductive energy `E_L` (GHz).
    pub e_l: f64,
    /// Topological Josephson amplitude `E_m` (GHz).
    pub e_m: f64,
    /// Superconducting gap `Δ` (GHz).
    pub delta: f64,
    /// Junction transparency `D`. When absent it is inferred as `(E_m/Δ)²`.
    pub conductance: Option<f64>,
    /// Same-wire Majorana hybridization `ε` (GHz).
    pub epsilon: f64,
    pub junction_mode: JunctionMode,
    pub charge_counting: ChargeCounting,
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self {
            e_c: 3.0,
            e_l: 1.0,
            e_m: 25.0,
            delta: 200.0,
            conductance: None,
            epsilon: 0.025,
            junction_mode: JunctionMode::Topological,
            charge_counting: ChargeCounting::Electrons,
        }
    }
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.e_c, self.e_l, self.e_m, self.delta, self.epsilon]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("circuit energies must be finite"));
        }
        if self.e_c <= 0.0 {
            return Err(Error::domain(format!("e_c must be > 0, got {}", self.e_c)));
        }
        if self.e_l <= 0.0 {
            return Err(Error::domain(format!("e_l must be > 0, got {}", self.e_l)));
        }
        if self.e_m < 0.0 {
            return Err(Error::domain(format!("e_m must be >= 0, got {}", self.e_m)));
        }
        if self.delta <= 0.0 {
            return Err(Error::domain(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.epsilon < 0.0 {
            return Err(Error::domain(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if let Some(d) = self.conductance {
            check_conductance(d)?;
            let e_m = self.delta * d.sqrt();
            let scale = self.e_m.abs().max(e_m.abs()).max(f64::MIN_POSITIVE);
            if (e_m - self.e_m).abs() > 1e-9 * scale {
                return Err(Error::domain(format!(
                    "e_m = {} inconsistent with delta*sqrt(D) = {}",
                    self.e_m, e_m
                )));
            }
        }
        Ok(())
    }

    /// Validated copy.
    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn conductance_value(&self) -> f64 {
        self.conductance
            .unwrap_or_else(|| (self.e_m / self.delta).powi(2))
    }

    /// Conventional tunneling energy `E_J = E_m²/(4Δ)`.
    pub fn e_j(&self) -> f64 {
        self.e_m * self.e_m / (4.0 * self.delta)
    }

    /// Coefficient multiplying `-d²/dφ²`.
    pub fn kinetic_coefficient(&self) -> f64 {
        self.charge_counting.kinetic_factor() * self.e_c
    }

    /// Largest bare energy scale, used for time-step guards.
    pub fn max_energy_scale(&self) -> f64 {
        let junction = match self.junction_mode {
            JunctionMode::Topological => self.e_m,
            JunctionMode::TrivialTunneling => self.e_j(),
            JunctionMode::TrivialFull | JunctionMode::Combined => self.e_m.max(self.delta * self.conductance_value()),
        };
        self.kinetic_coefficient()
            .max(self.e_l)
            .max(junction)
            .max(self.epsilon)
    }
}

fn check_conductance(d: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::domain(format!("conductance D must lie in [0, 1], got {d}")));
    }
    Ok(())
}

/// Nanowire parameters entering the topological criterion and the
/// same-wire hybridization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WireParams {
    /// Zeeman splitting `B` (GHz).
    pub b: f64,
    /// Chemical potential `μ` (GHz).
    pub mu: f64,
    /// Length of the topological section (µm).
    pub l_wire: f64,
    /// Coherence length `ξ` (µm).
    pub xi: f64,
    /// Hybridization prefactor `ε₀` (GHz).
    pub epsilon0: f64,
    /// Replace the circuit's `ε` by `ε₀·exp(-L/ξ)` from these parameters.
    pub derive_epsilon: bool,
}

impl Default for WireParams {
    fn default() -> Self {
        // ε₀ and ξ put ε/E_m at 1e-3 for a 2 µm wire.
        Self {
            b: 250.0,
            mu: 0.0,
            l_wire: 2.0,
            xi: 0.2413,
            epsilon0: 100.0,
            derive_epsilon: false,
        }
    }
}

impl WireParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l_wire >= 0.0) {
            return Err(Error::domain(format!("l_wire must be >= 0, got {}", self.l_wire)));
        }
        if !(self.xi > 0.0) {
            return Err(Error::domain(format!("xi must be > 0, got {}", self.xi)));
        }
        if !(self.epsilon0 >= 0.0) {
            return Err(Error::domain(format!(
                "epsilon0 must be >= 0, got {}",
                self.epsilon0
            )));
        }
        Ok(())
    }
}

/// Topological and conventional couplings of a junction with gap `Δ` and
/// transparency `D`: `(E_m, E_J) = (Δ√D, ΔD/4)`.
pub fn derived_couplings(delta: f64, conductance: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("delta must be > 0, got {delta}")));
    }
    check_conductance(conductance)?;
    Ok((delta * conductance.sqrt(), delta * conductance / 4.0))
}

/// Strict criterion `B > √(Δ² + μ²)`.
pub fn is_topological(b: f64, delta: f64, mu: f64) -> bool {
    b > delta.hypot(mu)
}

/// Exponential envelope `ε₀ e^{-L/ξ}` of the same-wire Majorana coupling.
pub fn majorana_epsilon(wire: &WireParams) -> f64 {
    wire.epsilon0 * (-wire.l_wire / wire.xi).exp()
}

/// Even-parity topological potential `E_L(φ-φ_e)² - E_m cos(φ/2)`.
pub fn potential_even(phi: f64, phi_e: f64, p: &CircuitParams) -> f64 {
    p.e_l * (phi - phi_e).powi(2) - p.e_m * (0.5 * phi).cos()
}

/// Single-channel Andreev energy `-Δ√(1 - D sin²(φ/2))`.
pub fn junction_energy_conventional(phi: f64, delta: f64, conductance: f64) -> Result<f64> {
    check_conductance(conductance)?;
    Ok(andreev(phi, delta, conductance))
}

fn andreev(phi: f64, delta: f64, d: f64) -> f64 {
    let s = (0.5 * phi).sin();
    -delta * (1.0 - d * s * s).max(0.0).sqrt()
}

fn andreev_derivative(phi: f64, delta: f64, d: f64) -> f64 {
    let s = (0.5 * phi).sin();
    let root = (1.0 - d * s * s).max(f64::MIN_POSITIVE).sqrt();
    delta * d * phi.sin() / (4.0 * root)
}

fn andreev_second_derivative(phi: f64, delta: f64, d: f64) -> f64 {
    let s = (0.5 * phi).sin();
    let q = (1.0 - d * s * s).max(f64::MIN_POSITIVE);
    let root = q.sqrt();
    // d/dφ [Δ D sin φ / (4√q)], with dq/dφ = -D sin φ / 2.
    delta * d * (phi.cos() / (4.0 * root) + d * phi.sin().powi(2) / (16.0 * q * root))
}

/// Potential of one parity sector for the configured junction mode.
pub fn potential(phi: f64, phi_e: f64, p: &CircuitParams, sector: ParitySector) -> f64 {
    let inductive = p.e_l * (phi - phi_e).powi(2);
    let majorana = -sector.sign() * p.e_m * (0.5 * phi).cos();
    match p.junction_mode {
        JunctionMode::Topological => inductive + majorana,
        JunctionMode::TrivialTunneling => inductive - p.e_j() * phi.cos(),
        JunctionMode::TrivialFull => inductive + andreev(phi, p.delta, p.conductance_value()),
        JunctionMode::Combined => {
            inductive + majorana + andreev(phi, p.delta, p.conductance_value())
        }
    }
}

/// `dU/dφ` of [`potential`].
pub fn potential_derivative(phi: f64, phi_e: f64, p: &CircuitParams, sector: ParitySector) -> f64 {
    let inductive = 2.0 * p.e_l * (phi - phi_e);
    let majorana = 0.5 * sector.sign() * p.e_m * (0.5 * phi).sin();
    match p.junction_mode {
        JunctionMode::Topological => inductive + majorana,
        JunctionMode::TrivialTunneling => inductive + p.e_j() * phi.sin(),
        JunctionMode::TrivialFull => {
            inductive + andreev_derivative(phi, p.delta, p.conductance_value())
        }
        JunctionMode::Combined => {
            inductive + majorana + andreev_derivative(phi, p.delta, p.conductance_value())
        }
    }
}

/// `d²U/dφ²` of [`potential`].
pub fn potential_second_derivative(
    phi: f64,
    _phi_e: f64,
    p: &CircuitParams,
    sector: ParitySector,
) -> f64 {
    let inductive = 2.0 * p.e_l;
    let majorana = 0.25 * sector.sign() * p.e_m * (0.5 * phi).cos();
    match p.junction_mode {
        JunctionMode::Topological => inductive + majorana,
        JunctionMode::TrivialTunneling => inductive + p.e_j() * phi.cos(),
        JunctionMode::TrivialFull => {
            inductive + andreev_second_derivative(phi, p.delta, p.conductance_value())
        }
        JunctionMode::Combined => {
            inductive
                + majorana
                + andreev_second_derivative(phi, p.delta, p.conductance_value())
        }
    }
}

/// Pointwise 2×2 potential in the {even, odd} parity basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinorPotential {
    pub even: f64,
    pub odd: f64,
    pub coupling: f64,
}

impl SpinorPotential {
    /// Row-major `[[even, coupling], [coupling, odd]]`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.even, self.coupling], [self.coupling, self.odd]]
    }

    /// Adiabatic bands `(U₋, U₊)`, lower first.
    pub fn bands(&self) -> (f64, f64) {
        let mean = 0.5 * (self.even + self.odd);
        let half = (0.5 * (self.even - self.odd)).hypot(self.coupling);
        (mean - half, mean + half)
    }

    pub fn gap(&self) -> f64 {
        let (lo, hi) = self.bands();
        hi - lo
    }
}

/// `E_L(φ-φ_e)² 𝟙 - E_m cos(φ/2) σ_z + ε σ_x`, generalized to every junction
/// mode by taking the two diagonal entries from the parity-resolved potential.
pub fn potential_spinor(phi: f64, phi_e: f64, p: &CircuitParams) -> SpinorPotential {
    SpinorPotential {
        even: potential(phi, phi_e, p, ParitySector::Even),
        odd: potential(phi, phi_e, p, ParitySector::Odd),
        coupling: p.epsilon,
    }
}
