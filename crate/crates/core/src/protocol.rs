//! The phase-slip experiment: reset, quench to the degeneracy point, hold
//! for `Δt`, read the flux. Shot ensembles with optional parity poisoning
//! and extraction of the oscillation in `P(2φ₀)`.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::dynamics::{
    self, BiasSchedule, EigenbasisPropagator, EvolveOptions, FlipEvents, SpinorState,
};
use crate::error::{Error, Result};
use crate::grid::PhaseGrid;
use crate::model::{CircuitParams, JunctionMode, ParitySector};
use crate::spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Even ground state at the reset bias, then the bias jumps (or ramps).
    #[default]
    QuenchGround,
    /// `(ψ₀ + ψ₁)/√2` of the even sector at the hold bias, left-localized.
    IdealLeft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurement {
    /// One sampled flux outcome per shot.
    #[default]
    ProjectiveSampling,
    /// Outcome probabilities are recorded directly.
    Expectation,
}

/// How the final wavefunction is turned into a flux reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Each parity component relaxes to the minimum of its own sector's
    /// potential whose basin it occupies; the reading is that minimum's
    /// flux quantum `round(φ_min / 2π)`.
    #[default]
    Basin,
    /// Weight beyond `φ = φ_e` reads `2φ₀`, the rest reads `0`.
    Barrier,
}

/// Propagator used during the hold at constant bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagator {
    /// Exact phases in a truncated spinor eigenbasis.
    #[default]
    Eigenbasis,
    /// Step-by-step Cayley integration on the full grid.
    Cayley,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Taken from the `[circuit]` section in run configs.
    #[serde(skip)]
    pub circuit: CircuitParams,
    /// Taken from the `[grid]` section in run configs.
    #[serde(skip)]
    pub grid: PhaseGrid,
    pub init_mode: InitMode,
    /// Hold durations `Δt` (ns).
    pub hold_times: Vec<f64>,
    pub shots_per_point: usize,
    /// Parity-flip rate (1/ns).
    pub poisoning_rate: f64,
    pub measurement: Measurement,
    pub seed: u64,
    /// Length of the linear bias ramp from reset to hold bias (ns).
    pub ramp_time: f64,
    pub readout: Readout,
    pub propagator: Propagator,
    /// Number of spinor eigenstates kept by the eigenbasis propagator.
    pub basis_size: usize,
    /// Step for Cayley integration (ns); taken from `[dynamics]` in run configs.
    #[serde(skip)]
    pub dt: f64,
    pub reset_bias: f64,
    pub hold_bias: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            circuit: CircuitParams::default(),
            grid: PhaseGrid::default(),
            init_mode: InitMode::default(),
            hold_times: (0..=40).map(|i| 2.0 * f64::from(i)).collect(),
            shots_per_point: 400,
            poisoning_rate: 1e-4,
            measurement: Measurement::default(),
            seed: 0x5eed,
            ramp_time: 0.0,
            readout: Readout::default(),
            propagator: Propagator::default(),
            basis_size: 128,
            dt: 1e-3,
            reset_bias: 0.0,
            hold_bias: 2.0 * PI,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.circuit.validate()?;
        self.grid.validate()?;
        if self.hold_times.is_empty() {
            return Err(Error::config("protocol.hold_times", "must not be empty"));
        }
        if let Some(t) = self.hold_times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::config("protocol.hold_times", format!("{t} is not a nonnegative time")));
        }
        if self.shots_per_point == 0 {
            return Err(Error::config("protocol.shots_per_point", "must be at least 1"));
        }
        if !(self.poisoning_rate >= 0.0 && self.poisoning_rate.is_finite()) {
            return Err(Error::config("protocol.poisoning_rate", "must be finite and >= 0"));
        }
        if !(self.ramp_time >= 0.0 && self.ramp_time.is_finite()) {
            return Err(Error::config("protocol.ramp_time", "must be finite and >= 0"));
        }
        if self.basis_size < 2 || self.basis_size > 2 * self.grid.n {
            return Err(Error::config("protocol.basis_size", format!("must lie in [2, {}]", 2 * self.grid.n)));
        }
        let guard = 0.1 / self.circuit.max_energy_scale();
        if !(self.dt > 0.0 && self.dt <= guard) {
            return Err(Error::config("dynamics.dt", format!("must lie in (0, {guard:.3e}] ns")));
        }
        if !self.reset_bias.is_finite() || !self.hold_bias.is_finite() {
            return Err(Error::config("protocol.hold_bias", "biases must be finite"));
        }
        Ok(())
    }

    /// Shots actually run per hold time.
    pub fn effective_shots(&self) -> usize {
        match self.measurement {
            Measurement::Expectation if self.poisoning_rate == 0.0 => 1,
            _ => self.shots_per_point,
        }
    }
}

/// Assignment of every grid point and parity sector to a flux reading.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeMap {
    /// Flux readings in units of `φ₀`, ascending.
    labels: Vec<i64>,
    /// Per grid point, index into `labels` for the even and odd component.
    index: Vec<[usize; 2]>,
}

impl OutcomeMap {
    pub fn barrier(grid: &PhaseGrid, phi_b: f64) -> Self {
        let index = grid
            .points()
            .map(|phi| if phi > phi_b { [1, 1] } else { [0, 0] })
            .collect();
        Self { labels: vec![0, 2], index }
    }

    pub fn basin(p: &CircuitParams, grid: &PhaseGrid, phi_e: f64) -> Result<Self> {
        let mut per_sector: Vec<Vec<i64>> = Vec::with_capacity(2);
        for sector in [ParitySector::Even, ParitySector::Odd] {
            let r = analysis::scan_wells(p, phi_e, sector, grid);
            if r.minima.is_empty() || r.minima.len() != r.maxima.len() + 1 {
                return Err(Error::domain(format!(
                    "cannot partition the {sector:?} potential into basins ({} minima, {} maxima)",
                    r.minima.len(),
                    r.maxima.len()
                )));
            }
            let point_labels = grid
                .points()
                .map(|phi| {
                    let k = r.maxima.partition_point(|m| m.phi < phi);
                    (r.minima[k].phi / (2.0 * PI)).round() as i64
                })
                .collect();
            per_sector.push(point_labels);
        }
        let mut labels: Vec<i64> = per_sector.iter().flatten().copied().collect();
        labels.sort_unstable();
        labels.dedup();
        let pos = |m: i64| labels.binary_search(&m).expect("label collected above");
        let index = per_sector[0]
            .iter()
            .zip(&per_sector[1])
            .map(|(&e, &o)| [pos(e), pos(o)])
            .collect();
        Ok(Self { labels, index })
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Outcome probabilities of a state, normalized by its norm.
    pub fn probabilities(&self, s: &SpinorState) -> Vec<f64> {
        let mut p = vec![0.0; self.labels.len()];
        for (a, idx) in s.amplitudes().iter().zip(&self.index) {
            p[idx[0]] += a[0].norm_sqr();
            p[idx[1]] += a[1].norm_sqr();
        }
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            p.iter_mut().for_each(|v| *v /= total);
        }
        p
    }

    /// Index of the `2φ₀` reading, if reachable.
    pub fn two_phi0(&self) -> Option<usize> {
        self.labels.iter().position(|&m| m == 2)
    }
}

/// Real symmetric `K×K` matrix, row-major.
#[derive(Debug, Clone)]
struct Quadratic {
    k: usize,
    m: Vec<f64>,
}

impl Quadratic {
    fn eval(&self, c: &[Complex64]) -> f64 {
        let k = self.k;
        let mut acc = 0.0;
        for i in 0..k {
            let row = &self.m[i * k..(i + 1) * k];
            let mut s = Complex64::new(0.0, 0.0);
            for (mij, cj) in row.iter().zip(c) {
                s += mij * cj;
            }
            acc += (c[i].conj() * s).re;
        }
        acc
    }

    fn apply(&self, c: &[Complex64]) -> Vec<Complex64> {
        let k = self.k;
        (0..k)
            .map(|i| {
                self.m[i * k..(i + 1) * k]
                    .iter()
                    .zip(c)
                    .map(|(mij, cj)| mij * cj)
                    .sum()
            })
            .collect()
    }
}

/// Observable matrices in the truncated eigenbasis.
struct BasisOperators {
    outcomes: Vec<Quadratic>,
    phase: Quadratic,
    parity_z: Quadratic,
    flip: Quadratic,
}

impl BasisOperators {
    fn new(prop: &EigenbasisPropagator, map: &OutcomeMap) -> Self {
        let spec = prop.spectrum();
        let k = spec.len();
        let h = spec.grid.spacing();
        let phis: Vec<f64> = spec.grid.points().collect();
        let vecs = &spec.eigenvectors;
        let n_out = map.labels.len();
        let mut outcomes = vec![vec![0.0; k * k]; n_out];
        let mut phase = vec![0.0; k * k];
        let mut z = vec![0.0; k * k];
        let mut flip = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let (vi, vj) = (&vecs[i], &vecs[j]);
                let mut out = vec![0.0; n_out];
                let (mut ph, mut zz, mut fx) = (0.0, 0.0, 0.0);
                for (s, idx) in map.index.iter().enumerate() {
                    let ee = vi[2 * s] * vj[2 * s];
                    let oo = vi[2 * s + 1] * vj[2 * s + 1];
                    out[idx[0]] += ee;
                    out[idx[1]] += oo;
                    ph += phis[s] * (ee + oo);
                    zz += ee - oo;
                    fx += vi[2 * s] * vj[2 * s + 1] + vi[2 * s + 1] * vj[2 * s];
                }
                for (o, v) in outcomes.iter_mut().zip(&out) {
                    o[i * k + j] = h * v;
                    o[j * k + i] = h * v;
                }
                for (m, v) in [(&mut phase, ph), (&mut z, zz), (&mut flip, fx)] {
                    m[i * k + j] = h * v;
                    m[j * k + i] = h * v;
                }
            }
        }
        let q = |m| Quadratic { k, m };
        Self {
            outcomes: outcomes.into_iter().map(q).collect(),
            phase: q(phase),
            parity_z: q(z),
            flip: q(flip),
        }
    }
}

/// What the readout sees at the end of one hold.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalState {
    /// Outcome probabilities aligned with [`OutcomeMap::labels`].
    pub probabilities: Vec<f64>,
    /// Raw `⟨φ⟩` before readout (rad).
    pub mean_phase: f64,
    pub parity_z: f64,
    /// Norm lost to basis truncation.
    pub truncation: f64,
}

/// One shot of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShotRecord {
    pub hold_index: usize,
    pub shot_index: usize,
    pub hold_time: f64,
    pub flips: usize,
    /// Probability of reading `2φ₀`.
    pub p2phi0: f64,
    /// Sampled flux reading in units of `φ₀` (projective mode only).
    pub outcome: Option<i64>,
    /// Expected flux reading in units of `φ₀`.
    pub expected_flux: f64,
    pub mean_phase: f64,
    pub parity_z: f64,
    pub truncation: f64,
}

impl ShotRecord {
    pub fn is_two_phi0(&self) -> bool {
        self.outcome == Some(2)
    }
}

/// Aggregate over the shots at one hold time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldPoint {
    pub hold_time: f64,
    pub p2phi0: f64,
    pub stderr: f64,
    pub n_shots: usize,
    /// Mean flux reading expressed as a phase, `2π·⟨m⟩` (rad).
    pub measured_phase: f64,
    /// Mean raw `⟨φ⟩` at the end of the hold (rad).
    pub mean_phase: f64,
    pub parity_z: f64,
    pub flips: usize,
}

/// Least-squares fit of `A - B·cos(2πfΔt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OscillationFit {
    /// `f` (GHz).
    pub frequency: f64,
    pub offset: f64,
    pub amplitude: f64,
    /// `B / max(A, 1e-12)` clamped to `[0, 1]`.
    pub visibility: f64,
    /// RMS residual.
    pub residual: f64,
    /// The scan spans less than half a period of the reference frequency.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolResult {
    pub points: Vec<HoldPoint>,
    pub fit: OscillationFit,
    /// Even-sector splitting used as the fit reference (GHz).
    pub delta_e_spectral: f64,
    pub readout_labels: Vec<i64>,
    pub max_truncation: f64,
    pub shots: Vec<ShotRecord>,
    pub warnings: Vec<String>,
}

/// Shared, read-only state for running shots.
pub struct ProtocolEngine {
    cfg: ProtocolConfig,
    map: OutcomeMap,
    two_phi0: Option<usize>,
    /// State at the start of the hold in the flip-free case.
    hold_start: SpinorState,
    /// Initial state before any ramp.
    initial: SpinorState,
    basis: Option<(EigenbasisPropagator, BasisOperators, Vec<Complex64>, f64)>,
    /// Flip-free final states per hold index.
    flip_free: Vec<FinalState>,
    e_ref: f64,
}

const FLIP_STREAM: u64 = 0;
const MEASURE_STREAM: u64 = 1;

/// Independent RNG for one (hold, shot, purpose) triple.
pub fn shot_rng(seed: u64, hold_index: usize, shot_index: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((hold_index as u64) << 34) ^ ((shot_index as u64) << 2) ^ purpose);
    rng
}

/// Initial state of the protocol.
pub fn prepare_initial(cfg: &ProtocolConfig) -> Result<SpinorState> {
    cfg.validate()?;
    let p = &cfg.circuit;
    match cfg.init_mode {
        InitMode::QuenchGround => {
            let h = spectral::assemble_scalar(&cfg.grid, p, cfg.reset_bias, ParitySector::Even)?;
            let spec = spectral::eigensolve(&h, 1)?;
            Ok(SpinorState::from_spectrum(&spec, 0))
        }
        InitMode::IdealLeft => {
            let h = spectral::assemble_scalar(&cfg.grid, p, cfg.hold_bias, ParitySector::Even)?;
            let spec = spectral::eigensolve(&h, 2)?;
            let a = SpinorState::from_spectrum(&spec, 0);
            let b = SpinorState::from_spectrum(&spec, 1);
            let w = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            let plus = a.combine(w, &b, w);
            let minus = a.combine(w, &b, -w);
            let right = |s: &SpinorState| dynamics::observables(s, cfg.hold_bias).p_right;
            Ok(if right(&plus) <= right(&minus) { plus } else { minus })
        }
    }
}

/// Reference splitting for the fit: the even-sector gap at the hold bias of
/// the Majorana junction (trivial junctions are referred to their
/// topological counterpart, since they have no splitting of their own).
pub fn reference_splitting(cfg: &ProtocolConfig) -> Result<f64> {
    let mut p = cfg.circuit;
    if matches!(p.junction_mode, JunctionMode::TrivialTunneling | JunctionMode::TrivialFull) {
        p.junction_mode = JunctionMode::Topological;
    }
    spectral::lowest_gap(&p, &cfg.grid, cfg.hold_bias, ParitySector::Even)
}

impl ProtocolEngine {
    pub fn new(cfg: &ProtocolConfig) -> Result<Self> {
        cfg.validate()?;
        let cfg = cfg.clone();
        let p = &cfg.circuit;
        let map = match cfg.readout {
            Readout::Basin => OutcomeMap::basin(p, &cfg.grid, cfg.hold_bias)?,
            Readout::Barrier => OutcomeMap::barrier(&cfg.grid, cfg.hold_bias),
        };
        let two_phi0 = map.two_phi0();
        let initial = prepare_initial(&cfg)?;
        let hold_start = match cfg.init_mode {
            InitMode::QuenchGround if cfg.ramp_time > 0.0 => ramp(&cfg, &initial, &FlipEvents::none())?,
            _ => initial.clone(),
        };
        let hold_h = spectral::assemble_spinor(&cfg.grid, p, cfg.hold_bias)?;
        let e_ref = dynamics::energy(&hold_start, &hold_h);

        let mut engine = Self {
            map,
            two_phi0,
            hold_start,
            initial,
            basis: None,
            flip_free: Vec::new(),
            e_ref,
            cfg,
        };
        match engine.cfg.propagator {
            Propagator::Eigenbasis => {
                let prop = EigenbasisPropagator::build(
                    &engine.cfg.grid,
                    &engine.cfg.circuit,
                    engine.cfg.hold_bias,
                    engine.cfg.basis_size,
                )?;
                let ops = BasisOperators::new(&prop, &engine.map);
                let c0 = prop.project(&engine.hold_start);
                engine.basis = Some((prop, ops, c0.values, c0.lost_norm));
                engine.flip_free = engine
                    .cfg
                    .hold_times
                    .iter()
                    .map(|&t| engine.hold_in_basis(&[], t))
                    .collect();
            }
            Propagator::Cayley => {
                engine.flip_free = engine.flip_free_cayley()?;
            }
        }
        Ok(engine)
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn outcome_map(&self) -> &OutcomeMap {
        &self.map
    }

    pub fn initial_state(&self) -> &SpinorState {
        &self.initial
    }

    /// Norm of the hold-start state outside the eigenbasis.
    pub fn initial_truncation(&self) -> f64 {
        self.basis.as_ref().map_or(0.0, |b| b.3)
    }

    fn finish(&self, s: &SpinorState, truncation: f64) -> FinalState {
        let o = dynamics::observables(s, self.cfg.hold_bias);
        FinalState {
            probabilities: self.map.probabilities(s),
            mean_phase: o.mean_phase,
            parity_z: o.parity_z,
            truncation,
        }
    }

    fn hold_in_basis(&self, flips: &[f64], hold: f64) -> FinalState {
        let (prop, ops, c0, lost0) = self.basis.as_ref().expect("eigenbasis engine");
        let energies = &prop.spectrum().eigenvalues;
        let advance = |c: &mut [Complex64], dt: f64| {
            for (ci, e) in c.iter_mut().zip(energies) {
                *ci *= Complex64::from_polar(1.0, -2.0 * PI * e * dt);
            }
        };
        let mut c = c0.clone();
        let mut t = 0.0;
        let mut lost = *lost0;
        for &tf in flips.iter().filter(|&&tf| tf <= hold) {
            advance(&mut c, tf - t);
            t = tf;
            let before: f64 = c.iter().map(|v| v.norm_sqr()).sum();
            c = ops.flip.apply(&c);
            let after: f64 = c.iter().map(|v| v.norm_sqr()).sum();
            lost += (before - after).max(0.0);
        }
        advance(&mut c, hold - t);
        let norm: f64 = c.iter().map(|v| v.norm_sqr()).sum();
        let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        let probabilities = ops.outcomes.iter().map(|q| q.eval(&c) * scale).collect();
        FinalState {
            probabilities,
            mean_phase: ops.phase.eval(&c) * scale,
            parity_z: ops.parity_z.eval(&c) * scale,
            truncation: lost,
        }
    }

    fn evolve_opts(&self) -> EvolveOptions {
        EvolveOptions {
            dt: self.cfg.dt,
            snapshot_stride: 0,
            keep_states: false,
            reference_energy: Some(self.e_ref),
        }
    }

    fn flip_free_cayley(&self) -> Result<Vec<FinalState>> {
        let mut order: Vec<usize> = (0..self.cfg.hold_times.len()).collect();
        order.sort_by(|&a, &b| self.cfg.hold_times[a].total_cmp(&self.cfg.hold_times[b]));
        let sched = BiasSchedule::constant(self.cfg.hold_bias);
        let mut state = self.hold_start.clone();
        state.time = 0.0;
        let mut out = vec![None; order.len()];
        for i in order {
            let t = self.cfg.hold_times[i];
            if t > state.time {
                let traj = dynamics::evolve(&state, &self.cfg.circuit, &sched, &FlipEvents::none(), t, &self.evolve_opts())?;
                state = traj.final_state;
            }
            out[i] = Some(self.finish(&state, 0.0));
        }
        Ok(out.into_iter().map(|s| s.expect("every hold time visited")).collect())
    }

    fn hold_cayley(&self, start: &SpinorState, flips: &[f64], hold: f64) -> Result<FinalState> {
        let mut s = start.clone();
        s.time = 0.0;
        let events = FlipEvents::new(flips.iter().copied().filter(|&t| t <= hold).collect(), hold)?;
        let traj = dynamics::evolve(
            &s,
            &self.cfg.circuit,
            &BiasSchedule::constant(self.cfg.hold_bias),
            &events,
            hold,
            &self.evolve_opts(),
        )?;
        Ok(self.finish(&traj.final_state, 0.0))
    }

    /// Run shot `shot_index` at hold time `hold_index`.
    pub fn run_shot(&self, hold_index: usize, shot_index: usize) -> Result<ShotRecord> {
        let hold = *self
            .cfg
            .hold_times
            .get(hold_index)
            .ok_or_else(|| Error::domain(format!("hold index {hold_index} out of range")))?;
        let ramp_t = match self.cfg.init_mode {
            InitMode::QuenchGround => self.cfg.ramp_time,
            InitMode::IdealLeft => 0.0,
        };
        let mut flip_rng = shot_rng(self.cfg.seed, hold_index, shot_index, FLIP_STREAM);
        let flips = dynamics::sample_flip_times_with(self.cfg.poisoning_rate, ramp_t + hold, &mut flip_rng)?;
        let (ramp_flips, hold_flips): (Vec<f64>, Vec<f64>) = flips.times().iter().partition(|&&t| t < ramp_t);
        let hold_flips: Vec<f64> = hold_flips.iter().map(|t| t - ramp_t).collect();

        let fin = if ramp_flips.is_empty() && hold_flips.is_empty() {
            self.flip_free[hold_index].clone()
        } else if ramp_flips.is_empty() {
            match self.cfg.propagator {
                Propagator::Eigenbasis => self.hold_in_basis(&hold_flips, hold),
                Propagator::Cayley => self.hold_cayley(&self.hold_start, &hold_flips, hold)?,
            }
        } else {
            // Flips during the ramp: integrate the ramp for this shot.
            let events = FlipEvents::new(ramp_flips.clone(), ramp_t)?;
            let start = ramp(&self.cfg, &self.initial, &events)?;
            match self.cfg.propagator {
                Propagator::Eigenbasis => {
                    let (prop, ..) = self.basis.as_ref().expect("eigenbasis engine");
                    let mut s = start;
                    s.time = 0.0;
                    let (end, lost) = prop.propagate(&s, &hold_flips, hold);
                    self.finish(&end, lost)
                }
                Propagator::Cayley => self.hold_cayley(&start, &hold_flips, hold)?,
            }
        };

        let p2 = self.two_phi0.map_or(0.0, |i| fin.probabilities[i].clamp(0.0, 1.0));
        let expected_flux: f64 = fin
            .probabilities
            .iter()
            .zip(&self.map.labels)
            .map(|(p, &m)| p * m as f64)
            .sum();
        let outcome = match self.cfg.measurement {
            Measurement::Expectation => None,
            Measurement::ProjectiveSampling => {
                let mut rng = shot_rng(self.cfg.seed, hold_index, shot_index, MEASURE_STREAM);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = *self.map.labels.last().expect("at least one label");
                for (p, &m) in fin.probabilities.iter().zip(&self.map.labels) {
                    acc += p;
                    if u < acc {
                        pick = m;
                        break;
                    }
                }
                Some(pick)
            }
        };
        Ok(ShotRecord {
            hold_index,
            shot_index,
            hold_time: hold,
            flips: flips.len(),
            p2phi0: p2,
            outcome,
            expected_flux,
            mean_phase: fin.mean_phase,
            parity_z: fin.parity_z,
            truncation: fin.truncation,
        })
    }

    /// Run every shot and fit the oscillation.
    pub fn run_scan(&self) -> Result<ProtocolResult> {
        let shots = self.cfg.effective_shots();
        let jobs: Vec<(usize, usize)> = (0..self.cfg.hold_times.len())
            .flat_map(|h| (0..shots).map(move |s| (h, s)))
            .collect();
        let records: Vec<ShotRecord> = jobs
            .par_iter()
            .map(|&(h, s)| self.run_shot(h, s))
            .collect::<Result<_>>()?;

        let points: Vec<HoldPoint> = records
            .chunks(shots)
            .map(|chunk| aggregate(chunk, self.cfg.measurement))
            .collect();

        let delta_e = reference_splitting(&self.cfg)?;
        let times: Vec<f64> = points.iter().map(|p| p.hold_time).collect();
        let values: Vec<f64> = points.iter().map(|p| p.p2phi0).collect();
        let fit = fit_oscillation(&times, &values, delta_e);
        let mut warnings = Vec::new();
        if fit.degenerate {
            let msg = format!(
                "hold times span less than half a period of {delta_e:.6e} GHz; the fit is poorly constrained"
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        let max_truncation = records.iter().map(|r| r.truncation).fold(0.0, f64::max);
        if max_truncation > 1e-3 {
            let msg = format!("eigenbasis truncation lost up to {max_truncation:.3e} of the norm");
            warn!("{msg}");
            warnings.push(msg);
        }
        Ok(ProtocolResult {
            points,
            fit,
            delta_e_spectral: delta_e,
            readout_labels: self.map.labels.clone(),
            max_truncation,
            shots: records,
            warnings,
        })
    }
}

fn ramp(cfg: &ProtocolConfig, initial: &SpinorState, flips: &FlipEvents) -> Result<SpinorState> {
    let sched = BiasSchedule::quench(cfg.reset_bias, cfg.hold_bias, cfg.ramp_time);
    let opts = EvolveOptions { dt: cfg.dt, snapshot_stride: 0, ..Default::default() };
    let mut s = initial.clone();
    s.time = 0.0;
    Ok(dynamics::evolve(&s, &cfg.circuit, &sched, flips, cfg.ramp_time, &opts)?.final_state)
}

fn aggregate(chunk: &[ShotRecord], measurement: Measurement) -> HoldPoint {
    let n = chunk.len();
    let nf = n as f64;
    let mean = |f: &dyn Fn(&ShotRecord) -> f64| chunk.iter().map(f).sum::<f64>() / nf;
    let (p, stderr, flux) = match measurement {
        Measurement::ProjectiveSampling => {
            let p = mean(&|r| if r.is_two_phi0() { 1.0 } else { 0.0 });
            let flux = mean(&|r| r.outcome.unwrap_or(0) as f64);
            (p, (p * (1.0 - p) / nf).sqrt(), flux)
        }
        Measurement::Expectation => {
            let p = mean(&|r| r.p2phi0);
            let var = if n > 1 {
                chunk.iter().map(|r| (r.p2phi0 - p).powi(2)).sum::<f64>() / (nf - 1.0)
            } else {
                0.0
            };
            (p, (var / nf).sqrt(), mean(&|r| r.expected_flux))
        }
    };
    HoldPoint {
        hold_time: chunk[0].hold_time,
        p2phi0: p,
        stderr,
        n_shots: n,
        measured_phase: 2.0 * PI * flux,
        mean_phase: mean(&|r| r.mean_phase),
        parity_z: mean(&|r| r.parity_z),
        flips: chunk.iter().map(|r| r.flips).sum(),
    }
}

/// Linear least squares for `A - B·cos(2πft)` at fixed `f`; returns
/// `(A, B, sum of squared residuals)`.
fn fit_at(t: &[f64], y: &[f64], f: f64) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let c: Vec<f64> = t.iter().map(|&ti| -(2.0 * PI * f * ti).cos()).collect();
    let sc: f64 = c.iter().sum();
    let scc: f64 = c.iter().map(|v| v * v).sum();
    let sy: f64 = y.iter().sum();
    let scy: f64 = c.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * scc - sc * sc;
    let (a, b) = if det.abs() > 1e-12 * n * n.max(scc) {
        ((scc * sy - sc * scy) / det, (n * scy - sc * sy) / det)
    } else {
        (sy / n, 0.0)
    };
    let rss = c.iter().zip(y).map(|(ci, yi)| (yi - a - b * ci).powi(2)).sum();
    (a, b, rss)
}

/// Fit `A - B·cos(2πfΔt)` with `f` searched on `[0.5, 1.5]·f_ref`.
pub fn fit_oscillation(times: &[f64], values: &[f64], f_ref: f64) -> OscillationFit {
    assert_eq!(times.len(), values.len());
    let span = times.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - times.iter().copied().fold(f64::INFINITY, f64::min);
    let degenerate = !(f_ref > 0.0) || span < 0.5 / f_ref;
    let finish = |f: f64| {
        let (a, b, rss) = fit_at(times, values, f);
        OscillationFit {
            frequency: f,
            offset: a,
            amplitude: b,
            visibility: (b / a.max(1e-12)).clamp(0.0, 1.0),
            residual: (rss / times.len() as f64).sqrt(),
            degenerate,
        }
    };
    if !(f_ref > 0.0) || times.len() < 3 {
        return finish(f_ref.max(0.0));
    }
    const GRID: usize = 400;
    let (lo, hi) = (0.5 * f_ref, 1.5 * f_ref);
    let step = (hi - lo) / GRID as f64;
    let rss = |f: f64| fit_at(times, values, f).2;
    let best = (0..=GRID)
        .map(|i| (i, rss(lo + step * i as f64)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .expect("nonempty grid");
    let mut a = lo + step * best.saturating_sub(1) as f64;
    let mut b = lo + step * (best + 1).min(GRID) as f64;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (rss(x1), rss(x2));
    for _ in 0..100 {
        if b - a <= 1e-12 * f_ref {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = rss(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = rss(x2);
        }
    }
    finish(0.5 * (a + b))
}

/// Convenience wrapper: build the engine and run the full scan.
pub fn run_scan(cfg: &ProtocolConfig) -> Result<ProtocolResult> {
    ProtocolEngine::new(cfg)?.run_scan()
}

/// Single shot at hold time `hold`. The RNG stream uses the position of
/// `hold` in `cfg.hold_times` (or a slot past the end if it is absent).
pub fn run_shot(hold: f64, cfg: &ProtocolConfig, shot_index: usize) -> Result<ShotRecord> {
    let mut cfg = cfg.clone();
    let idx = match cfg.hold_times.iter().position(|&t| t == hold) {
        Some(i) => i,
        None => {
            cfg.hold_times.push(hold);
            cfg.hold_times.len() - 1
        }
    };
    ProtocolEngine::new(&cfg)?.run_shot(idx, shot_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_clean_cosine() {
        let t: Vec<f64> = (0..=40).map(|i| 2.0 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|&x| 0.5 - 0.45 * (2.0 * PI * 0.0261 * x).cos()).collect();
        let fit = fit_oscillation(&t, &y, 0.025);
        assert!((fit.frequency - 0.0261).abs() < 1e-9, "{fit:?}");
        assert!((fit.offset - 0.5).abs() < 1e-9);
        assert!((fit.amplitude - 0.45).abs() < 1e-9);
        assert!((fit.visibility - 0.9).abs() < 1e-9);
        assert!(fit.residual < 1e-9);
        assert!(!fit.degenerate);
    }

    #[test]
    fn fit_flags_short_span_and_clamps() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let y = [0.5, 0.5, 0.5, 0.5];
        let fit = fit_oscillation(&t, &y, 0.025);
        assert!(fit.degenerate);
        assert!(fit.visibility >= 0.0 && fit.visibility <= 1.0);

        let t: Vec<f64> = (0..=40).map(|i| 2.0 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|&x| 0.5 + 0.3 * (2.0 * PI * 0.025 * x).cos()).collect();
        assert_eq!(fit_oscillation(&t, &y, 0.025).visibility, 0.0);
    }

    #[test]
    fn barrier_map_splits_at_bias() {
        let g = PhaseGrid::default();
        let m = OutcomeMap::barrier(&g, 2.0 * PI);
        assert_eq!(m.labels(), &[0, 2]);
        assert_eq!(m.two_phi0(), Some(1));
    }

    #[test]
    fn basin_map_topological_and_trivial() {
        let g = PhaseGrid::default();
        let p = CircuitParams::default();
        let m = OutcomeMap::basin(&p, &g, 2.0 * PI).unwrap();
        // Even wells read 0 and 2, the odd single well reads 1.
        assert_eq!(m.labels(), &[0, 1, 2]);
        let t = CircuitParams { junction_mode: JunctionMode::TrivialTunneling, ..p };
        let m = OutcomeMap::basin(&t, &g, 2.0 * PI).unwrap();
        assert_eq!(m.labels(), &[1]);
        assert_eq!(m.two_phi0(), None);
    }

    #[test]
    fn rng_streams_are_distinct_and_stable() {
        let a: u64 = shot_rng(1, 0, 0, FLIP_STREAM).gen();
        let b: u64 = shot_rng(1, 0, 0, MEASURE_STREAM).gen();
        let c: u64 = shot_rng(1, 0, 1, FLIP_STREAM).gen();
        let d: u64 = shot_rng(1, 1, 0, FLIP_STREAM).gen();
        assert_eq!(a, shot_rng(1, 0, 0, FLIP_STREAM).gen::<u64>());
        assert!(a != b && a != c && a != d && c != d);
    }

    #[test]
    fn config_validation() {
        let ok = ProtocolConfig::default();
        ok.validate().unwrap();
        let bad = ProtocolConfig { hold_times: vec![], ..ok.clone() };
        assert!(bad.validate().is_err());
        let bad = ProtocolConfig { hold_times: vec![-1.0], ..ok.clone() };
        assert!(bad.validate().is_err());
        let bad = ProtocolConfig { shots_per_point: 0, ..ok.clone() };
        assert!(bad.validate().is_err());
        let bad = ProtocolConfig { dt: 0.01, ..ok };
        assert!(bad.validate().is_err());
    }
}
