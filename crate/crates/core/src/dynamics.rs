//! Time evolution of the two-parity wavefunction.
//!
//! `i dψ/dt = 2π H ψ` with `H` in GHz and `t` in ns. The reference
//! propagator is the Cayley (Crank–Nicolson) form
//! `(1 + iπ dt H)⁻¹ (1 - iπ dt H)`, which is unitary for any step. Parity
//! poisoning acts as an instantaneous `σ_x` at sampled times.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::grid::PhaseGrid;
use crate::model::{CircuitParams, ParitySector};
use crate::spectral::{self, HamiltonianMatrix, MatrixKind, Spectrum};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Two-component wavefunction on the phase grid, `[even, odd]` per point.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorState {
    pub grid: PhaseGrid,
    amps: Vec<[Complex64; 2]>,
    /// Time in ns.
    pub time: f64,
}

impl SpinorState {
    pub fn new(grid: PhaseGrid, even: &[Complex64], odd: &[Complex64], time: f64) -> Self {
        assert_eq!(even.len(), grid.n);
        assert_eq!(odd.len(), grid.n);
        Self {
            grid,
            amps: even.iter().zip(odd).map(|(&e, &o)| [e, o]).collect(),
            time,
        }
    }

    /// Real profile placed entirely in one parity sector.
    pub fn from_profile(grid: PhaseGrid, profile: &[f64], sector: ParitySector) -> Self {
        assert_eq!(profile.len(), grid.n);
        let c = usize::from(sector == ParitySector::Odd);
        let amps = profile
            .iter()
            .map(|&v| {
                let mut a = [ZERO; 2];
                a[c] = Complex64::new(v, 0.0);
                a
            })
            .collect();
        Self { grid, amps, time: 0.0 }
    }

    /// Eigenvector `i` of a spectrum (scalar spectra fill one sector).
    pub fn from_spectrum(spec: &Spectrum, i: usize) -> Self {
        match spec.kind {
            MatrixKind::Scalar(sector) => Self::from_profile(spec.grid, &spec.eigenvectors[i], sector),
            MatrixKind::Spinor => {
                let amps = spec.eigenvectors[i]
                    .chunks_exact(2)
                    .map(|c| [Complex64::new(c[0], 0.0), Complex64::new(c[1], 0.0)])
                    .collect();
                Self { grid: spec.grid, amps, time: 0.0 }
            }
        }
    }

    pub fn amplitudes(&self) -> &[[Complex64; 2]] {
        &self.amps
    }

    pub fn component(&self, sector: ParitySector) -> Vec<Complex64> {
        let c = usize::from(sector == ParitySector::Odd);
        self.amps.iter().map(|a| a[c]).collect()
    }

    pub fn norm(&self) -> f64 {
        let h = self.grid.spacing();
        h * self.amps.iter().map(|a| a[0].norm_sqr() + a[1].norm_sqr()).sum::<f64>()
    }

    pub fn normalize(&mut self) {
        let n = self.norm().sqrt();
        if n > 0.0 {
            self.amps.iter_mut().for_each(|a| {
                a[0] /= n;
                a[1] /= n;
            });
        }
    }

    /// `⟨self|other⟩` with the grid weight.
    pub fn overlap(&self, other: &SpinorState) -> Complex64 {
        let h = self.grid.spacing();
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a[0].conj() * b[0] + a[1].conj() * b[1])
            .sum::<Complex64>()
            * h
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: Complex64, other: &SpinorState, b: Complex64) -> SpinorState {
        SpinorState {
            grid: self.grid,
            amps: self
                .amps
                .iter()
                .zip(&other.amps)
                .map(|(x, y)| [a * x[0] + b * y[0], a * x[1] + b * y[1]])
                .collect(),
            time: self.time,
        }
    }

    /// `σ_x` in place.
    pub fn flip_parity(&mut self) {
        self.amps.iter_mut().for_each(|a| a.swap(0, 1));
    }

    /// Probability per grid point for each sector, `(even, odd)`.
    pub fn sector_densities(&self) -> (Vec<f64>, Vec<f64>) {
        self.amps
            .iter()
            .map(|a| (a[0].norm_sqr(), a[1].norm_sqr()))
            .unzip()
    }
}

/// Swap the even and odd components.
pub fn apply_parity_flip(s: &SpinorState) -> SpinorState {
    let mut out = s.clone();
    out.flip_parity();
    out
}

/// Scalar summaries of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    /// `⟨φ⟩` (rad).
    pub mean_phase: f64,
    /// Probability beyond the barrier position.
    pub p_right: f64,
    /// `⟨σ_z⟩`.
    pub parity_z: f64,
    pub norm: f64,
}

/// Observables with the barrier at `barrier` (the current bias `φ_e`).
pub fn observables(s: &SpinorState, barrier: f64) -> Observables {
    let h = s.grid.spacing();
    let (mut norm, mut phase, mut right, mut z) = (0.0, 0.0, 0.0, 0.0);
    for (phi, a) in s.grid.points().zip(&s.amps) {
        let pe = a[0].norm_sqr();
        let po = a[1].norm_sqr();
        let w = pe + po;
        norm += w;
        phase += phi * w;
        z += pe - po;
        if phi > barrier {
            right += w;
        }
    }
    let total = norm.max(f64::MIN_POSITIVE);
    Observables {
        mean_phase: phase / total,
        p_right: right / total,
        parity_z: z / total,
        norm: h * norm,
    }
}

/// `⟨ψ|H|ψ⟩` for a spinor Hamiltonian.
pub fn energy(s: &SpinorState, h: &HamiltonianMatrix) -> f64 {
    assert_eq!(h.kind, MatrixKind::Spinor);
    let m = h.storage();
    let n = s.amps.len();
    let off = m.couplings();
    let mut acc = 0.0;
    for j in 0..n {
        let d = m.diag_block(j);
        let a = s.amps[j];
        let mut hv = [d[0] * a[0] + d[1] * a[1], d[2] * a[0] + d[3] * a[1]];
        for c in 0..2 {
            if j > 0 {
                hv[c] += off[j - 1] * s.amps[j - 1][c];
            }
            if j + 1 < n {
                hv[c] += off[j] * s.amps[j + 1][c];
            }
        }
        acc += (a[0].conj() * hv[0] + a[1].conj() * hv[1]).re;
    }
    acc * s.grid.spacing()
}

/// Piecewise-linear flux bias `φ_e(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSchedule {
    knots: Vec<(f64, f64)>,
}

impl BiasSchedule {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::domain("bias schedule needs at least one knot"));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::domain("bias knots must be strictly increasing in time"));
        }
        Ok(Self { knots })
    }

    pub fn constant(phi_e: f64) -> Self {
        Self { knots: vec![(0.0, phi_e)] }
    }

    /// Linear ramp from `from` to `to` over `[0, ramp]`; a zero ramp is a
    /// sudden switch at `t = 0`.
    pub fn quench(from: f64, to: f64, ramp: f64) -> Self {
        if ramp > 0.0 {
            Self { knots: vec![(0.0, from), (ramp, to)] }
        } else {
            Self::constant(to)
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Bias at `t`, clamped outside the knot range.
    pub fn at(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        if t >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        let i = k.partition_point(|&(tk, _)| tk <= t);
        let (t0, p0) = k[i - 1];
        let (t1, p1) = k[i];
        p0 + (p1 - p0) * (t - t0) / (t1 - t0)
    }

    /// Time after which the bias stays constant.
    pub fn settle_time(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }
}

/// Sorted parity-flip times within `[0, t_end]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlipEvents {
    times: Vec<f64>,
}

impl FlipEvents {
    pub fn new(times: Vec<f64>, t_end: f64) -> Result<Self> {
        if times.iter().any(|&t| !(0.0..=t_end).contains(&t)) {
            return Err(Error::domain(format!("flip times must lie in [0, {t_end}]")));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("flip times must be sorted"));
        }
        Ok(Self { times })
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Poisson flip times with the given rate (1/ns), reproducible per seed.
pub fn sample_flip_times(rate: f64, t_end: f64, seed: u64) -> Result<FlipEvents> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_flip_times_with(rate, t_end, &mut rng)
}

pub fn sample_flip_times_with<R: Rng + ?Sized>(
    rate: f64,
    t_end: f64,
    rng: &mut R,
) -> Result<FlipEvents> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::domain(format!("poisoning rate must be >= 0, got {rate}")));
    }
    let mut times = Vec::new();
    if rate == 0.0 || t_end <= 0.0 {
        return Ok(FlipEvents { times });
    }
    let exp = Exp::new(rate).map_err(|e| Error::domain(e.to_string()))?;
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > t_end {
            break;
        }
        times.push(t);
    }
    Ok(FlipEvents { times })
}

/// One Cayley step for a fixed spinor Hamiltonian and step length.
pub struct CayleyStepper {
    theta: f64,
    e_ref: f64,
    /// Real diagonal blocks `(H_ee, H_eo, H_oo)` per site.
    diag: Vec<[f64; 3]>,
    off: f64,
    beta: Complex64,
    /// Inverses of the block-LU pivots, symmetric `(a, c, d)`.
    minv: Vec<[Complex64; 3]>,
}

impl CayleyStepper {
    /// `e_ref` shifts the energy origin; it changes only a global phase of
    /// the exact evolution and keeps the discrete phase error small for
    /// states near that energy.
    pub fn new(h: &HamiltonianMatrix, dt: f64, e_ref: f64) -> Self {
        assert_eq!(h.kind, MatrixKind::Spinor, "Cayley stepper acts on spinor states");
        let m = h.storage();
        let sites = m.sites();
        let off = m.couplings().first().copied().unwrap_or(0.0);
        debug_assert!(m.couplings().iter().all(|&c| c == off));
        let theta = PI * dt;
        let i_theta = Complex64::new(0.0, theta);
        let beta = i_theta * off;
        let diag: Vec<[f64; 3]> = (0..sites)
            .map(|s| {
                let d = m.diag_block(s);
                [d[0], d[1], d[3]]
            })
            .collect();
        let mut minv = Vec::with_capacity(sites);
        let mut prev: Option<[Complex64; 3]> = None;
        let b2 = beta * beta;
        for d in &diag {
            let mut a = Complex64::new(1.0, 0.0) + i_theta * (d[0] - e_ref);
            let mut c = i_theta * d[1];
            let mut dd = Complex64::new(1.0, 0.0) + i_theta * (d[2] - e_ref);
            if let Some(p) = prev {
                a -= b2 * p[0];
                c -= b2 * p[1];
                dd -= b2 * p[2];
            }
            let det = a * dd - c * c;
            let inv = [dd / det, -c / det, a / det];
            minv.push(inv);
            prev = Some(inv);
        }
        Self { theta, e_ref, diag, off, beta, minv }
    }

    pub fn dt(&self) -> f64 {
        self.theta / PI
    }

    /// Advance `psi` by one step; `work` is scratch of the same length.
    pub fn step(&self, psi: &mut [[Complex64; 2]], work: &mut Vec<[Complex64; 2]>) {
        let n = psi.len();
        work.clear();
        work.resize(n, [ZERO; 2]);
        let mi = Complex64::new(0.0, -self.theta);
        // rhs = (1 - iθ(H - e_ref)) ψ
        for j in 0..n {
            let d = self.diag[j];
            let a = psi[j];
            let mut hv = [
                (d[0] - self.e_ref) * a[0] + d[1] * a[1],
                d[1] * a[0] + (d[2] - self.e_ref) * a[1],
            ];
            for c in 0..2 {
                let mut nb = ZERO;
                if j > 0 {
                    nb += psi[j - 1][c];
                }
                if j + 1 < n {
                    nb += psi[j + 1][c];
                }
                hv[c] += self.off * nb;
            }
            work[j] = [a[0] + mi * hv[0], a[1] + mi * hv[1]];
        }
        // Forward sweep: y_j = M_j⁻¹ (r_j - β y_{j-1}).
        for j in 0..n {
            let mut r = work[j];
            if j > 0 {
                let y = psi[j - 1];
                r[0] -= self.beta * y[0];
                r[1] -= self.beta * y[1];
            }
            let m = self.minv[j];
            psi[j] = [m[0] * r[0] + m[1] * r[1], m[1] * r[0] + m[2] * r[1]];
        }
        // Back substitution: x_j = y_j - β M_j⁻¹ x_{j+1}.
        for j in (0..n.saturating_sub(1)).rev() {
            let x = psi[j + 1];
            let m = self.minv[j];
            let t = [m[0] * x[0] + m[1] * x[1], m[1] * x[0] + m[2] * x[1]];
            psi[j][0] -= self.beta * t[0];
            psi[j][1] -= self.beta * t[1];
        }
    }
}

/// Settings for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Time step (ns).
    pub dt: f64,
    /// Emit a snapshot every `snapshot_stride` steps of `dt` and after each
    /// flip (0: only the ends).
    pub snapshot_stride: usize,
    /// Keep full states in the snapshots.
    pub keep_states: bool,
    /// Energy origin for the propagator; `None` uses `⟨H⟩` of the initial state.
    pub reference_energy: Option<f64>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            snapshot_stride: 1000,
            keep_states: false,
            reference_energy: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub phi_e: f64,
    pub observables: Observables,
    pub state: Option<SpinorState>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub final_state: SpinorState,
    pub steps: usize,
    /// Largest single-step norm change seen.
    pub max_step_drift: f64,
}

const TIME_EPS: f64 = 1e-12;
const STEP_DRIFT_LIMIT: f64 = 1e-8;

/// Evolve `s0` from `s0.time` to `t_end` under the spinor Hamiltonian at
/// bias `sched(t)`, applying `σ_x` at each flip time.
pub fn evolve(
    s0: &SpinorState,
    p: &CircuitParams,
    sched: &BiasSchedule,
    flips: &FlipEvents,
    t_end: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let guard = 0.1 / p.max_energy_scale();
    if !(opts.dt > 0.0) || opts.dt > guard * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "dt = {} ns outside (0, {guard:.3e}] ns",
            opts.dt
        )));
    }
    let grid = s0.grid;
    let mut state = s0.clone();
    let mut t = s0.time;
    let snap = |s: &SpinorState, phi_e: f64, keep: bool| Snapshot {
        time: s.time,
        phi_e,
        observables: observables(s, phi_e),
        state: keep.then(|| s.clone()),
    };

    // Accumulated step times drift by many ulps over long runs.
    let tol = TIME_EPS.max(1e-6 * opts.dt);
    let start = t;
    let mut pending = flips.times().iter().copied().filter(move |&tf| tf >= start - tol).peekable();
    while let Some(&tf) = pending.peek() {
        if tf <= t + tol {
            state.flip_parity();
            pending.next();
        } else {
            break;
        }
    }

    let e_ref = match opts.reference_energy {
        Some(e) => e,
        None => energy(&state, &spectral::assemble_spinor(&grid, p, sched.at(t))?),
    };

    let mut snapshots = vec![snap(&state, sched.at(t), opts.keep_states)];
    let mut full: Option<(f64, CayleyStepper)> = None;
    let mut work = Vec::with_capacity(grid.n);
    let mut steps = 0usize;
    let mut max_drift = 0.0f64;
    let mut norm = state.norm();

    // Steps land on the fixed grid start + k dt; a flip splits one step in two.
    let mut k = 0usize;
    while t < t_end - tol {
        let grid_next = start + (k + 1) as f64 * opts.dt;
        let mut t_next = if grid_next >= t_end - tol { t_end } else { grid_next };
        if let Some(&tf) = pending.peek() {
            if tf < t_next - tol {
                t_next = tf;
            }
        }
        let h = t_next - t;
        let phi_mid = sched.at(t + 0.5 * h);
        let is_full = (h - opts.dt).abs() <= tol;
        if is_full {
            let rebuild = !matches!(&full, Some((phi, _)) if *phi == phi_mid);
            if rebuild {
                let ham = spectral::assemble_spinor(&grid, p, phi_mid)?;
                full = Some((phi_mid, CayleyStepper::new(&ham, opts.dt, e_ref)));
            }
            full.as_ref().expect("stepper built above").1.step(&mut state.amps, &mut work);
        } else {
            let ham = spectral::assemble_spinor(&grid, p, phi_mid)?;
            CayleyStepper::new(&ham, h, e_ref).step(&mut state.amps, &mut work);
        }
        let on_grid = t_next == grid_next || t_next == t_end;
        t = t_next;
        state.time = t;
        steps += 1;
        if on_grid {
            k += 1;
        }

        let new_norm = state.norm();
        let drift = (new_norm - norm).abs();
        max_drift = max_drift.max(drift);
        if drift > STEP_DRIFT_LIMIT {
            return Err(Error::StepRejected { time: t, drift });
        }
        norm = new_norm;

        let mut flipped = false;
        while let Some(&tf) = pending.peek() {
            if tf <= t + tol {
                state.flip_parity();
                pending.next();
                flipped = true;
            } else {
                break;
            }
        }
        // Flips are always recorded; otherwise every stride-th grid point.
        let strided = on_grid && opts.snapshot_stride > 0 && k.is_multiple_of(opts.snapshot_stride);
        if (strided || (flipped && opts.snapshot_stride > 0)) && t < t_end - tol {
            snapshots.push(snap(&state, sched.at(t), opts.keep_states));
        }
    }
    if steps > 0 && snapshots.last().is_none_or(|s| s.time < t - tol) {
        snapshots.push(snap(&state, sched.at(t), opts.keep_states));
    }
    Ok(Trajectory {
        snapshots,
        final_state: state,
        steps,
        max_step_drift: max_drift,
    })
}

/// Exact propagation inside the span of precomputed spinor eigenstates of a
/// time-independent Hamiltonian.
#[derive(Debug, Clone)]
pub struct EigenbasisPropagator {
    spectrum: Spectrum,
}

/// State expanded in the eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub values: Vec<Complex64>,
    pub time: f64,
    /// Norm of the part of the state outside the basis at projection.
    pub lost_norm: f64,
}

impl EigenbasisPropagator {
    pub fn new(spectrum: Spectrum) -> Self {
        assert_eq!(spectrum.kind, MatrixKind::Spinor, "eigenbasis must be a spinor spectrum");
        Self { spectrum }
    }

    /// Lowest `k` eigenstates of the spinor Hamiltonian at fixed bias.
    pub fn build(g: &PhaseGrid, p: &CircuitParams, phi_e: f64, k: usize) -> Result<Self> {
        let h = spectral::assemble_spinor(g, p, phi_e)?;
        Ok(Self::new(spectral::eigensolve(&h, k)?))
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn project(&self, s: &SpinorState) -> Coefficients {
        let h = s.grid.spacing();
        let values: Vec<Complex64> = self
            .spectrum
            .eigenvectors
            .iter()
            .map(|v| {
                let mut acc = ZERO;
                for (pair, a) in v.chunks_exact(2).zip(&s.amps) {
                    acc += pair[0] * a[0] + pair[1] * a[1];
                }
                acc * h
            })
            .collect();
        let captured: f64 = values.iter().map(|c| c.norm_sqr()).sum();
        Coefficients {
            lost_norm: (s.norm() - captured).max(0.0),
            values,
            time: s.time,
        }
    }

    /// Coefficients at `time` (ns).
    pub fn advance(&self, c: &Coefficients, time: f64) -> Coefficients {
        let dt = time - c.time;
        let values = c
            .values
            .iter()
            .zip(&self.spectrum.eigenvalues)
            .map(|(v, e)| v * Complex64::from_polar(1.0, -2.0 * PI * e * dt))
            .collect();
        Coefficients { values, time, lost_norm: c.lost_norm }
    }

    pub fn reconstruct(&self, c: &Coefficients) -> SpinorState {
        let n = self.spectrum.grid.n;
        let mut amps = vec![[ZERO; 2]; n];
        for (coef, v) in c.values.iter().zip(&self.spectrum.eigenvectors) {
            for (a, pair) in amps.iter_mut().zip(v.chunks_exact(2)) {
                a[0] += coef * pair[0];
                a[1] += coef * pair[1];
            }
        }
        SpinorState { grid: self.spectrum.grid, amps, time: c.time }
    }

    /// Propagate a state to `time`, applying `σ_x` at every flip time in
    /// `(s.time, time]`. Returns the final state and the largest projection
    /// loss encountered.
    pub fn propagate(&self, s: &SpinorState, flips: &[f64], time: f64) -> (SpinorState, f64) {
        let mut c = self.project(s);
        let mut lost = c.lost_norm;
        for &tf in flips.iter().filter(|&&tf| tf > s.time && tf <= time) {
            let mut st = self.reconstruct(&self.advance(&c, tf));
            st.flip_parity();
            c = self.project(&st);
            lost = lost.max(c.lost_norm);
        }
        (self.reconstruct(&self.advance(&c, time)), lost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{assemble_scalar, eigensolve};

    fn small_grid() -> PhaseGrid {
        PhaseGrid::new(-6.0 * PI, 10.0 * PI, 2048).unwrap()
    }

    fn defaults() -> CircuitParams {
        CircuitParams::default()
    }

    fn gaussian(grid: PhaseGrid, center: f64, width: f64) -> SpinorState {
        let prof: Vec<f64> = grid
            .points()
            .map(|x| (-(x - center).powi(2) / (2.0 * width * width)).exp())
            .collect();
        let mut s = SpinorState::from_profile(grid, &prof, ParitySector::Even);
        s.normalize();
        s
    }

    #[test]
    fn flip_swaps_and_is_involution() {
        let g = small_grid();
        let s = gaussian(g, 1.0, 0.7);
        let f = apply_parity_flip(&s);
        assert_eq!(f.component(ParitySector::Odd), s.component(ParitySector::Even));
        assert!(f.component(ParitySector::Even).iter().all(|v| *v == ZERO));
        assert_eq!(apply_parity_flip(&f), s);

        let even = s.component(ParitySector::Even);
        let sym = SpinorState::new(g, &even, &even, 0.0);
        assert_eq!(apply_parity_flip(&sym), sym);
    }

    #[test]
    fn observables_invariant_under_flip() {
        let g = small_grid();
        let s = gaussian(g, 2.0, 0.9);
        let a = observables(&s, 2.0 * PI);
        let b = observables(&apply_parity_flip(&s), 2.0 * PI);
        assert_eq!(a.mean_phase, b.mean_phase);
        assert_eq!(a.p_right, b.p_right);
        assert_eq!(a.norm, b.norm);
        assert!((a.parity_z - 1.0).abs() < 1e-15);
        assert!((b.parity_z + 1.0).abs() < 1e-15);
    }

    #[test]
    fn schedule_interpolates_and_clamps() {
        let s = BiasSchedule::new(vec![(1.0, 0.0), (3.0, 2.0)]).unwrap();
        assert_eq!(s.at(0.0), 0.0);
        assert_eq!(s.at(2.0), 1.0);
        assert_eq!(s.at(5.0), 2.0);
        assert!(BiasSchedule::new(vec![(1.0, 0.0), (1.0, 2.0)]).is_err());
        assert_eq!(BiasSchedule::quench(0.0, 5.0, 0.0).at(0.0), 5.0);
    }

    #[test]
    fn flip_sampling_basics() {
        assert!(sample_flip_times(0.0, 100.0, 1).unwrap().is_empty());
        let a = sample_flip_times(0.3, 50.0, 42).unwrap();
        let b = sample_flip_times(0.3, 50.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.times().windows(2).all(|w| w[0] <= w[1]));
        assert!(a.times().iter().all(|&t| (0.0..=50.0).contains(&t)));
        assert!(sample_flip_times(-1.0, 1.0, 0).is_err());
        assert!(FlipEvents::new(vec![2.0, 1.0], 5.0).is_err());
        assert!(FlipEvents::new(vec![1.0, 6.0], 5.0).is_err());
    }

    #[test]
    fn stationary_state_stays_put() {
        let g = small_grid();
        let p = defaults();
        let h = assemble_spinor_at(&g, &p, 2.0 * PI);
        let spec = eigensolve(&h, 1).unwrap();
        let s0 = SpinorState::from_spectrum(&spec, 0);
        let opts = EvolveOptions { dt: 4e-3, snapshot_stride: 0, ..Default::default() };
        let traj = evolve(&s0, &p, &BiasSchedule::constant(2.0 * PI), &FlipEvents::none(), 20.0, &opts).unwrap();
        let ov = s0.overlap(&traj.final_state).norm();
        assert!((ov - 1.0).abs() < 1e-6, "overlap {ov}");
    }

    fn assemble_spinor_at(g: &PhaseGrid, p: &CircuitParams, phi_e: f64) -> HamiltonianMatrix {
        spectral::assemble_spinor(g, p, phi_e).unwrap()
    }

    #[test]
    fn flip_flips_parity_exactly_at_time() {
        let g = small_grid();
        let p = CircuitParams { epsilon: 0.0, ..defaults() };
        let h = assemble_scalar(&g, &p, 0.0, ParitySector::Even).unwrap();
        let spec = eigensolve(&h, 1).unwrap();
        let s0 = SpinorState::from_spectrum(&spec, 0);
        let flips = FlipEvents::new(vec![5.0], 10.0).unwrap();
        let opts = EvolveOptions { dt: 3e-3, snapshot_stride: 1, ..Default::default() };
        let traj = evolve(&s0, &p, &BiasSchedule::constant(0.0), &flips, 10.0, &opts).unwrap();
        for snap in &traj.snapshots {
            let expect = if snap.time < 5.0 - 1e-12 { 1.0 } else { -1.0 };
            assert!((snap.observables.parity_z - expect).abs() < 1e-12, "t={} z={}", snap.time, snap.observables.parity_z);
        }
        assert!(traj.snapshots.iter().any(|s| (s.time - 5.0).abs() < 1e-12));
    }

    #[test]
    fn dt_guard() {
        let g = small_grid();
        let s = gaussian(g, 0.0, 1.0);
        let opts = EvolveOptions { dt: 0.01, ..Default::default() };
        assert!(evolve(&s, &defaults(), &BiasSchedule::constant(0.0), &FlipEvents::none(), 1.0, &opts).is_err());
    }

    fn left_doublet_state(prop: &EigenbasisPropagator) -> SpinorState {
        let spec = prop.spectrum();
        let even: Vec<usize> = (0..spec.len()).filter(|&i| spec.parity_z(i) > 0.9).take(2).collect();
        let a = SpinorState::from_spectrum(spec, even[0]);
        let b = SpinorState::from_spectrum(spec, even[1]);
        let w = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        // Pick the relative sign that localizes on the left.
        let plus = a.combine(w, &b, w);
        if observables(&plus, 2.0 * PI).p_right < 0.5 {
            plus
        } else {
            a.combine(w, &b, -w)
        }
    }

    #[test]
    fn eigenbasis_matches_cayley_over_long_hold() {
        let g = small_grid();
        let p = defaults();
        let prop = EigenbasisPropagator::build(&g, &p, 2.0 * PI, 8).unwrap();
        let s0 = left_doublet_state(&prop);
        assert!(observables(&s0, 2.0 * PI).p_right < 0.01);
        let (exact, lost) = prop.propagate(&s0, &[], 20.0);
        assert!(lost < 1e-12, "lost {lost}");
        let opts = EvolveOptions { dt: 1e-3, snapshot_stride: 0, ..Default::default() };
        let sched = BiasSchedule::constant(2.0 * PI);
        let traj = evolve(&s0, &p, &sched, &FlipEvents::none(), 20.0, &opts).unwrap();
        let fid = exact.overlap(&traj.final_state).norm();
        assert!((fid - 1.0).abs() < 1e-6, "fidelity {fid}");
        let a = observables(&exact, 2.0 * PI);
        let b = observables(&traj.final_state, 2.0 * PI);
        assert!(a.p_right > 0.4, "half a tunnelling period moves weight right");
        assert!((a.p_right - b.p_right).abs() < 1e-6);
    }

    #[test]
    fn eigenbasis_matches_cayley_across_flip() {
        let g = small_grid();
        let p = defaults();
        let prop = EigenbasisPropagator::build(&g, &p, 2.0 * PI, 128).unwrap();
        let s0 = left_doublet_state(&prop);
        let flips = [1.0];
        let (exact, lost) = prop.propagate(&s0, &flips, 1.1);
        assert!(lost < 1e-8, "lost {lost}");
        let opts = EvolveOptions { dt: 2.5e-4, snapshot_stride: 0, ..Default::default() };
        let traj = evolve(
            &s0,
            &p,
            &BiasSchedule::constant(2.0 * PI),
            &FlipEvents::new(flips.to_vec(), 1.1).unwrap(),
            1.1,
            &opts,
        )
        .unwrap();
        let fid = exact.overlap(&traj.final_state).norm();
        assert!((fid - 1.0).abs() < 1e-3, "fidelity {fid}");
        let a = observables(&exact, 2.0 * PI);
        let b = observables(&traj.final_state, 2.0 * PI);
        assert!((a.parity_z - b.parity_z).abs() < 1e-3);
        assert!(b.parity_z < -0.99);
    }
}
