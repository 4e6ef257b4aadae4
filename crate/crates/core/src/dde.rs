//! Delay differential equations with constant delays.
//!
//! Integration uses classical fixed-step 4-stage Runge-Kutta. Delayed
//! states are read from a [`HistoryBuffer`] that interpolates the computed
//! grid with cubic Hermite segments built from stored derivatives, so the
//! delayed-argument error is O(dt^4) and the method keeps its full order.
//! The step size is required to satisfy `dt <= min positive delay / 10`,
//! which guarantees every stage lookback lands in already-completed
//! history (no overlap iteration is ever needed).
//!
//! Components flagged with a projection floor follow the positive-part
//! rule: the derivative is zeroed whenever it is negative while the state
//! is at or below zero, and the state itself is clamped at zero after each
//! step to contain roundoff.
//!
//! Everything here is deterministic: identical inputs produce bit-identical
//! trajectories.

use serde::Serialize;
use thiserror::Error;

/// Default fraction of a trajectory discarded as transient before
/// limit-cycle analysis.
pub const DEFAULT_TRANSIENT_FRACTION: f64 = 0.5;

/// A trajectory window whose half peak-to-peak excursion is below this
/// fraction of the equilibrium magnitude counts as quiescent (converged to
/// equilibrium rather than oscillating).
pub const QUIESCENCE_REL: f64 = 1e-4;

/// Relative agreement between the last two quarter-window amplitudes
/// required to call an oscillation converged.
pub const CONVERGENCE_REL: f64 = 0.02;

/// Minimum number of observed oscillation periods in the analysis window.
pub const MIN_CYCLES: usize = 5;

#[derive(Debug, Error)]
pub enum DdeError {
    #[error("system dimension must be at least 1")]
    ZeroDimension,
    #[error("delay must be finite and >= 0, got {value}")]
    BadDelay { value: f64 },
    #[error("step size must be positive and finite, got {dt}")]
    BadStep { dt: f64 },
    #[error("integration horizon must be positive and finite, got {t_end}")]
    BadHorizon { t_end: f64 },
    #[error("step size {dt} exceeds min positive delay / 10 = {limit}")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("state became non-finite at t = {t}")]
    Diverged { t: f64 },
    #[error("history queried at t = {t}, outside coverage [{lo}, {hi}]")]
    HistoryOutOfRange { t: f64, lo: f64, hi: f64 },
    #[error(
        "analysis window too short: {crossings} mean-crossings observed, \
         need at least {needed} for a period estimate"
    )]
    WindowTooShort { crossings: usize, needed: usize },
    #[error("trajectory grid is not uniform at sample {index}")]
    NonUniformGrid { index: usize },
    #[error("component index {component} out of range for dimension {dimension}")]
    BadComponent { component: usize, dimension: usize },
    #[error("transient fraction must lie in [0, 1), got {fraction}")]
    BadTransientFraction { fraction: f64 },
}

/// Delayed states handed to a right-hand side, one per declared delay,
/// in declaration order.
pub struct DelayedStates<'a> {
    states: &'a [Vec<f64>],
}

impl<'a> DelayedStates<'a> {
    pub fn new(states: &'a [Vec<f64>]) -> Self {
        DelayedStates { states }
    }

    /// Full state vector at `t - delays[delay_index]`.
    pub fn state(&self, delay_index: usize) -> &[f64] {
        &self.states[delay_index]
    }

    /// Single component at `t - delays[delay_index]`.
    pub fn component(&self, delay_index: usize, component: usize) -> f64 {
        self.states[delay_index][component]
    }
}

/// Right-hand side signature: `(t, state, delayed states, derivative out)`.
pub type RhsFn = dyn Fn(f64, &[f64], &DelayedStates<'_>, &mut [f64]) + Send + Sync;

/// An n-dimensional delay differential equation with constant delays.
pub struct DelayedSystem {
    dimension: usize,
    delays: Vec<f64>,
    projection_floor: Vec<bool>,
    state_names: Vec<String>,
    rhs: Box<RhsFn>,
}

impl DelayedSystem {
    /// Builds a system; delays may repeat and may include 0 (a zero delay
    /// reads the current stage state).
    pub fn new(dimension: usize, delays: Vec<f64>, rhs: Box<RhsFn>) -> Result<Self, DdeError> {
        if dimension == 0 {
            return Err(DdeError::ZeroDimension);
        }
        for &d in &delays {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(DdeError::BadDelay { value: d });
            }
        }
        let state_names = (0..dimension).map(|i| format!("x{i}")).collect();
        Ok(DelayedSystem {
            dimension,
            delays,
            projection_floor: vec![false; dimension],
            state_names,
            rhs,
        })
    }

    /// Flags components kept nonnegative by the positive-part rule.
    pub fn with_projection_floor(mut self, flags: Vec<bool>) -> Self {
        assert_eq!(flags.len(), self.dimension, "projection flag length mismatch");
        self.projection_floor = flags;
        self
    }

    /// Applies the positive-part floor to every component.
    pub fn with_floor_on_all(mut self) -> Self {
        self.projection_floor = vec![true; self.dimension];
        self
    }

    pub fn with_state_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.dimension, "state name length mismatch");
        self.state_names = names;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn projection_floor(&self) -> &[bool] {
        &self.projection_floor
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_positive_delay(&self) -> Option<f64> {
        self.delays
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.min(d))))
    }

    /// Evaluates the raw right-hand side, no projection applied.
    pub fn eval_raw(&self, t: f64, state: &[f64], delayed: &DelayedStates<'_>, out: &mut [f64]) {
        (self.rhs)(t, state, delayed, out);
    }

    /// Evaluates the right-hand side and applies the positive-part rule:
    /// a flagged component's derivative becomes 0 when the raw derivative
    /// is negative and the state is at or below zero.
    pub fn eval(&self, t: f64, state: &[f64], delayed: &DelayedStates<'_>, out: &mut [f64]) {
        (self.rhs)(t, state, delayed, out);
        for (c, &floored) in self.projection_floor.iter().enumerate() {
            if floored && out[c] < 0.0 && state[c] <= 0.0 {
                out[c] = 0.0;
            }
        }
    }
}

/// Initial history on the lookback window `[-max_delay, 0]`.
pub enum InitialHistory {
    Constant(Vec<f64>),
    Function(Box<dyn Fn(f64) -> Vec<f64> + Send + Sync>),
}

impl InitialHistory {
    pub fn constant(state: Vec<f64>) -> Self {
        InitialHistory::Constant(state)
    }

    pub fn function(f: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        InitialHistory::Function(Box::new(f))
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        match self {
            InitialHistory::Constant(v) => out.copy_from_slice(v),
            InitialHistory::Function(f) => out.copy_from_slice(&f(t)),
        }
    }
}

/// Interpolating state history over `[t0 - max_delay, t_latest]`.
///
/// Before `t0` the initial history is evaluated directly; past samples are
/// interpolated with cubic Hermite segments from the stored derivatives,
/// which reproduces the samples themselves exactly.
pub struct HistoryBuffer<'h> {
    dim: usize,
    t0: f64,
    dt: f64,
    max_delay: f64,
    initial: &'h InitialHistory,
    states: Vec<f64>,
    derivs: Vec<f64>,
    samples: usize,
}

impl<'h> HistoryBuffer<'h> {
    pub fn new(initial: &'h InitialHistory, dim: usize, t0: f64, dt: f64, max_delay: f64) -> Self {
        HistoryBuffer {
            dim,
            t0,
            dt,
            max_delay,
            initial,
            states: Vec::new(),
            derivs: Vec::new(),
            samples: 0,
        }
    }

    /// Appends the sample at the next grid point `t0 + samples * dt`.
    pub fn push(&mut self, state: &[f64], deriv: &[f64]) {
        assert_eq!(state.len(), self.dim);
        assert_eq!(deriv.len(), self.dim);
        self.states.extend_from_slice(state);
        self.derivs.extend_from_slice(deriv);
        self.samples += 1;
    }

    /// Latest covered time (equals `t0` while no sample is pushed).
    pub fn t_latest(&self) -> f64 {
        if self.samples == 0 {
            self.t0
        } else {
            self.t0 + (self.samples - 1) as f64 * self.dt
        }
    }

    /// Covered interval `[t0 - max_delay, t_latest]`.
    pub fn coverage(&self) -> (f64, f64) {
        (self.t0 - self.max_delay, self.t_latest())
    }

    /// Interpolated state at `t`, written into `out`.
    pub fn state_into(&self, t: f64, out: &mut [f64]) -> Result<(), DdeError> {
        let (lo, hi) = self.coverage();
        let tol = self.dt * 1e-9;
        if t < lo - tol || t > hi + tol {
            return Err(DdeError::HistoryOutOfRange { t, lo, hi });
        }
        if t <= self.t0 {
            self.initial.eval_into(t.max(lo), out);
            return Ok(());
        }
        // Interior query: locate the segment on the uniform grid.
        let pos = (t - self.t0) / self.dt;
        let mut k = pos.floor() as usize;
        if k + 1 >= self.samples {
            k = self.samples - 2;
        }
        let s = ((t - self.t0) - k as f64 * self.dt) / self.dt;
        let (a, b) = (k * self.dim, (k + 1) * self.dim);
        let x0 = &self.states[a..a + self.dim];
        let x1 = &self.states[b..b + self.dim];
        let f0 = &self.derivs[a..a + self.dim];
        let f1 = &self.derivs[b..b + self.dim];
        hermite_into(s, self.dt, x0, f0, x1, f1, out);
        Ok(())
    }

    /// Allocating variant of [`Self::state_into`].
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>, DdeError> {
        let mut out = vec![0.0; self.dim];
        self.state_into(t, &mut out)?;
        Ok(out)
    }
}

/// Cubic Hermite basis on one segment; exact at both endpoints.
fn hermite_into(s: f64, h: f64, x0: &[f64], f0: &[f64], x1: &[f64], f1: &[f64], out: &mut [f64]) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    for i in 0..out.len() {
        out[i] = h00 * x0[i] + h10 * h * f0[i] + h01 * x1[i] + h11 * h * f1[i];
    }
}

/// A time-indexed state record on a uniform grid.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<f64>,
    dim: usize,
    dt: f64,
    transient_end: usize,
}

impl Trajectory {
    /// Builds a trajectory from raw samples; `states` is row-major with
    /// one row of `dim` components per time.
    pub fn from_samples(
        dt: f64,
        dim: usize,
        times: Vec<f64>,
        states: Vec<f64>,
        transient_end: usize,
    ) -> Result<Self, DdeError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(DdeError::BadStep { dt });
        }
        if dim == 0 {
            return Err(DdeError::ZeroDimension);
        }
        assert_eq!(states.len(), times.len() * dim, "sample length mismatch");
        for (k, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(DdeError::NonUniformGrid { index: k + 1 });
            }
        }
        Ok(Trajectory { times, states, dim, dt, transient_end })
    }

    /// Samples a closure on a uniform grid; convenient for constructed
    /// test inputs.
    pub fn from_fn(
        dt: f64,
        t_end: f64,
        f: impl Fn(f64) -> f64,
        transient_fraction: f64,
    ) -> Result<Self, DdeError> {
        let n = (t_end / dt).round().max(1.0) as usize;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let states: Vec<f64> = times.iter().map(|&t| f(t)).collect();
        let transient_end = transient_index(n + 1, transient_fraction)?;
        Trajectory::from_samples(dt, 1, times, states, transient_end)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// State vector at sample `k`.
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// One component over the whole grid.
    pub fn component(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().skip(c).step_by(self.dim).copied()
    }

    /// Index of the first post-transient sample.
    pub fn transient_end(&self) -> usize {
        self.transient_end
    }

    pub fn set_transient_fraction(&mut self, fraction: f64) -> Result<(), DdeError> {
        self.transient_end = transient_index(self.len(), fraction)?;
        Ok(())
    }

    /// Smallest value any component ever takes; used by projection checks.
    pub fn min_value(&self) -> f64 {
        self.states.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn transient_index(len: usize, fraction: f64) -> Result<usize, DdeError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(DdeError::BadTransientFraction { fraction });
    }
    Ok(((len as f64) * fraction).floor() as usize)
}

/// Integrates a [`DelayedSystem`] from `t = 0` to `t_end` with fixed step
/// `dt`, starting from the given history on `[-max_delay, 0]`.
///
/// The grid is `t_k = k * dt` for `k = 0..=round(t_end / dt)`. Components
/// flagged with the projection floor never go below zero. Returns the full
/// trajectory with `transient_end` initialized to the default fraction.
pub fn integrate(
    system: &DelayedSystem,
    history: &InitialHistory,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, DdeError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DdeError::BadStep { dt });
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(DdeError::BadHorizon { t_end });
    }
    if let Some(dmin) = system.min_positive_delay() {
        let limit = dmin / 10.0;
        if dt > limit * (1.0 + 1e-12) {
            return Err(DdeError::StepTooLarge { dt, limit });
        }
    }

    let dim = system.dimension();
    let delays = system.delays();
    let n_steps = ((t_end / dt).round() as usize).max(1);

    let mut x = vec![0.0; dim];
    history.eval_into(0.0, &mut x);

    let mut hist = HistoryBuffer::new(history, dim, 0.0, dt, system.max_delay());

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity((n_steps + 1) * dim);
    times.push(0.0);
    states.extend_from_slice(&x);

    let mut delayed: Vec<Vec<f64>> = delays.iter().map(|_| vec![0.0; dim]).collect();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut xs = vec![0.0; dim];

    // Fills history lookups for positive delays at one stage time.
    let lookup = |bufs: &mut [Vec<f64>], hist: &HistoryBuffer<'_>, t_stage: f64| -> Result<(), DdeError> {
        for (i, &d) in delays.iter().enumerate() {
            if d > 0.0 {
                hist.state_into(t_stage - d, &mut bufs[i])?;
            }
        }
        Ok(())
    };
    // Zero delays read the current stage state.
    let fill_zero = |bufs: &mut [Vec<f64>], stage_state: &[f64]| {
        for (i, &d) in delays.iter().enumerate() {
            if d == 0.0 {
                bufs[i].copy_from_slice(stage_state);
            }
        }
    };

    for step in 0..n_steps {
        let t = step as f64 * dt;
        let half = 0.5 * dt;

        // Stage 1 at t; its derivative is also the stored node derivative.
        lookup(&mut delayed, &hist, t)?;
        fill_zero(&mut delayed, &x);
        system.eval(t, &x, &DelayedStates::new(&delayed), &mut k1);
        hist.push(&x, &k1);

        // Stages 2 and 3 share the lookback time t + dt/2.
        lookup(&mut delayed, &hist, t + half)?;
        for i in 0..dim {
            xs[i] = x[i] + half * k1[i];
        }
        fill_zero(&mut delayed, &xs);
        system.eval(t + half, &xs, &DelayedStates::new(&delayed), &mut k2);

        for i in 0..dim {
            xs[i] = x[i] + half * k2[i];
        }
        fill_zero(&mut delayed, &xs);
        system.eval(t + half, &xs, &DelayedStates::new(&delayed), &mut k3);

        // Stage 4 at t + dt.
        lookup(&mut delayed, &hist, t + dt)?;
        for i in 0..dim {
            xs[i] = x[i] + dt * k3[i];
        }
        fill_zero(&mut delayed, &xs);
        system.eval(t + dt, &xs, &DelayedStates::new(&delayed), &mut k4);

        let t_next = (step + 1) as f64 * dt;
        for i in 0..dim {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if system.projection_floor[i] && x[i] < 0.0 {
                x[i] = 0.0;
            }
            if !x[i].is_finite() {
                return Err(DdeError::Diverged { t: t_next });
            }
        }

        times.push(t_next);
        states.extend_from_slice(&x);
    }

    let transient_end = transient_index(n_steps + 1, DEFAULT_TRANSIENT_FRACTION)?;
    Trajectory::from_samples(dt, dim, times, states, transient_end)
}

/// Limit-cycle measurement over a trajectory's post-transient window.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LimitCycle {
    /// Half peak-to-peak excursion over the analysis window.
    pub amplitude: f64,
    /// Mean spacing of upward mean-crossings; `None` when quiescent.
    pub period: Option<f64>,
    /// True when the last two quarter-window amplitudes agree within
    /// [`CONVERGENCE_REL`] (or when the window is quiescent).
    pub converged: bool,
    /// True when the excursion is below [`QUIESCENCE_REL`] of the
    /// equilibrium magnitude: the trajectory settled to equilibrium.
    pub quiescent: bool,
    /// Window mean, the equilibrium estimate used for the quiescence scale.
    pub mean: f64,
}

/// Measures amplitude and period of one component over the post-transient
/// window (`transient_fraction` of the grid is discarded up front).
///
/// Decayed trajectories come back quiescent and converged with their
/// residual excursion as the amplitude. Oscillations need at least
/// [`MIN_CYCLES`] full mean-crossing cycles in the window, otherwise the
/// window is reported too short.
pub fn detect_limit_cycle(
    traj: &Trajectory,
    component: usize,
    transient_fraction: f64,
) -> Result<LimitCycle, DdeError> {
    if component >= traj.dim() {
        return Err(DdeError::BadComponent { component, dimension: traj.dim() });
    }
    let start = transient_index(traj.len(), transient_fraction)?;
    let window: Vec<f64> = traj.component(component).skip(start).collect();
    if window.len() < 8 {
        return Err(DdeError::WindowTooShort { crossings: 0, needed: MIN_CYCLES + 1 });
    }

    let mean = window.iter().sum::<f64>() / window.len() as f64;
    let max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = window.iter().copied().fold(f64::INFINITY, f64::min);
    let amplitude = 0.5 * (max - min);

    if amplitude <= QUIESCENCE_REL * mean.abs() {
        return Ok(LimitCycle {
            amplitude,
            period: None,
            converged: true,
            quiescent: true,
            mean,
        });
    }

    // Upward mean-crossings, refined by linear interpolation.
    let dt = traj.dt();
    let t_start = traj.times()[start];
    let mut crossings = Vec::new();
    for i in 0..window.len() - 1 {
        if window[i] < mean && window[i + 1] >= mean {
            let frac = (mean - window[i]) / (window[i + 1] - window[i]);
            crossings.push(t_start + (i as f64 + frac) * dt);
        }
    }
    if crossings.len() < MIN_CYCLES + 1 {
        return Err(DdeError::WindowTooShort {
            crossings: crossings.len(),
            needed: MIN_CYCLES + 1,
        });
    }
    let period =
        (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;

    // Amplitude settling: compare the last two quarter-windows.
    let q = window.len() / 4;
    let quarter_amp = |chunk: &[f64]| {
        let hi = chunk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = chunk.iter().copied().fold(f64::INFINITY, f64::min);
        0.5 * (hi - lo)
    };
    let prev = quarter_amp(&window[window.len() - 2 * q..window.len() - q]);
    let last = quarter_amp(&window[window.len() - q..]);
    let converged = if prev > 0.0 {
        (last / prev - 1.0).abs() <= CONVERGENCE_REL
    } else {
        last == 0.0
    };

    Ok(LimitCycle {
        amplitude,
        period: Some(period),
        converged,
        quiescent: false,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_system(
        delays: Vec<f64>,
        f: impl Fn(f64, f64, &DelayedStates<'_>) -> f64 + Send + Sync + 'static,
    ) -> DelayedSystem {
        DelayedSystem::new(
            1,
            delays,
            Box::new(move |t, x, del, out| out[0] = f(t, x[0], del)),
        )
        .unwrap()
    }

    #[test]
    fn exponential_decay_matches_analytic() {
        let sys = scalar_system(vec![], |_, x, _| -x);
        let traj = integrate(&sys, &InitialHistory::constant(vec![1.0]), 1.0, 1e-3).unwrap();
        let x1 = traj.last_state()[0];
        assert!((x1 - (-1.0f64).exp()).abs() < 1e-6, "x(1) = {x1}");
    }

    #[test]
    fn fourth_order_convergence() {
        let sys = scalar_system(vec![], |_, x, _| -x);
        let exact = (-1.0f64).exp();
        let mut errors = Vec::new();
        for &dt in &[1e-2, 5e-3, 2.5e-3] {
            let traj = integrate(&sys, &InitialHistory::constant(vec![1.0]), 1.0, dt).unwrap();
            errors.push((traj.last_state()[0] - exact).abs());
        }
        assert!(errors[0] / errors[1] >= 12.0, "ratio {}", errors[0] / errors[1]);
        assert!(errors[1] / errors[2] >= 12.0, "ratio {}", errors[1] / errors[2]);
    }

    /// Exact method-of-steps solution of x' = -x(t-1), constant history 1.
    /// On segment [k, k+1] the solution is the polynomial obtained by
    /// integrating the previous segment:
    /// P_{k+1}(s) = P_k(1) - int_0^s P_k(u) du, starting from P = 1 on
    /// [-1, 0]. Independent of the RK4 path.
    fn delayed_decay_oracle(t: f64) -> f64 {
        assert!(t >= 0.0);
        let k = t.floor() as usize; // target segment [k, k+1]
        let mut poly = vec![1.0f64]; // history segment [-1, 0]
        for _ in 0..=k {
            let x_left: f64 = poly.iter().sum(); // previous segment at s = 1
            let mut next = vec![0.0; poly.len() + 1];
            next[0] = x_left;
            for (j, &c) in poly.iter().enumerate() {
                next[j + 1] = -c / (j as f64 + 1.0);
            }
            poly = next;
        }
        let s = t - k as f64;
        poly.iter()
            .enumerate()
            .map(|(j, &c)| c * s.powi(j as i32))
            .sum()
    }

    #[test]
    fn oracle_matches_hand_segments() {
        // [0,1]: x = 1 - t; [1,2]: x(t) = x(1) - int (1-(u-1)) du
        assert!((delayed_decay_oracle(0.5) - 0.5).abs() < 1e-12);
        assert!((delayed_decay_oracle(1.0) - 0.0).abs() < 1e-12);
        // x(1.5): x(1) - [s - s^2/2] at s=0.5 with integrand 1-s: 0 - (0.5 - 0.125) = -0.375
        assert!((delayed_decay_oracle(1.5) + 0.375).abs() < 1e-12);
    }

    #[test]
    fn delayed_decay_matches_method_of_steps() {
        let sys = scalar_system(vec![1.0], |_, _, del| -del.component(0, 0));
        let traj = integrate(&sys, &InitialHistory::constant(vec![1.0]), 40.0, 1e-3).unwrap();
        let x40 = traj.last_state()[0];
        let oracle = delayed_decay_oracle(40.0);
        assert!(x40.abs() < 0.01, "x(40) = {x40}");
        assert!((x40 - oracle).abs() < 1e-8, "rk4 {x40} vs oracle {oracle}");
        // Spot-check a few interior times as well.
        for &t in &[2.0, 5.0, 12.5] {
            let k = (t / 1e-3).round() as usize;
            let got = traj.state(k)[0];
            let want = delayed_decay_oracle(t);
            assert!((got - want).abs() < 1e-9, "t={t}: {got} vs {want}");
        }
    }

    #[test]
    fn critical_delay_oscillates_with_period_two_pi() {
        // x' = -x(t - pi/2): purely imaginary roots +-i, period 2*pi = 4*tau.
        let tau = std::f64::consts::FRAC_PI_2;
        let sys = scalar_system(vec![tau], |_, _, del| -del.component(0, 0));
        let traj = integrate(&sys, &InitialHistory::constant(vec![1.0]), 200.0, 0.01).unwrap();
        let lc = detect_limit_cycle(&traj, 0, 0.5).unwrap();
        assert!(!lc.quiescent);
        assert!(lc.converged, "marginal oscillation should hold its amplitude");
        let period = lc.period.unwrap();
        assert!(
            (period - 2.0 * std::f64::consts::PI).abs() < 0.01,
            "period {period}"
        );
    }

    #[test]
    fn step_size_limit_enforced() {
        let sys = scalar_system(vec![1.0], |_, _, del| -del.component(0, 0));
        let err = integrate(&sys, &InitialHistory::constant(vec![1.0]), 1.0, 0.2).unwrap_err();
        assert!(matches!(err, DdeError::StepTooLarge { .. }));
    }

    #[test]
    fn divergence_reports_first_bad_time() {
        let sys = scalar_system(vec![], |_, x, _| x * x + 1.0);
        let err = integrate(&sys, &InitialHistory::constant(vec![1.0]), 10.0, 1e-3).unwrap_err();
        match err {
            DdeError::Diverged { t } => assert!(t > 0.0 && t < 10.0),
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn projection_floor_keeps_states_nonnegative() {
        // x' = -1 wants to cross zero; the floor pins it there.
        let sys = scalar_system(vec![], |_, _, _| -1.0).with_floor_on_all();
        let traj = integrate(&sys, &InitialHistory::constant(vec![0.5]), 2.0, 1e-3).unwrap();
        assert!(traj.min_value() >= 0.0);
        assert_eq!(traj.last_state()[0], 0.0);
    }

    #[test]
    fn integration_is_deterministic() {
        let sys = scalar_system(vec![0.5], |_, x, del| -del.component(0, 0) + 0.1 * x);
        let a = integrate(&sys, &InitialHistory::constant(vec![1.0]), 20.0, 0.01).unwrap();
        let b = integrate(&sys, &InitialHistory::constant(vec![1.0]), 20.0, 0.01).unwrap();
        for (x, y) in a.component(0).zip(b.component(0)) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn history_interpolation_exact_at_samples() {
        let initial = InitialHistory::constant(vec![1.0, 2.0]);
        let mut hist = HistoryBuffer::new(&initial, 2, 0.0, 0.1, 0.5);
        let samples = [
            (vec![1.0, 2.0], vec![0.3, -0.4]),
            (vec![1.2, 1.8], vec![0.1, 0.2]),
            (vec![1.25, 1.85], vec![-0.9, 0.5]),
        ];
        for (x, f) in &samples {
            hist.push(x, f);
        }
        for (k, (x, _)) in samples.iter().enumerate() {
            let got = hist.state_at(k as f64 * 0.1).unwrap();
            if k == 0 {
                // Exactly t0 routes to the initial history.
                assert_eq!(got, vec![1.0, 2.0]);
            } else {
                assert_eq!(&got, x);
            }
        }
    }

    #[test]
    fn history_interpolation_is_fourth_order() {
        // Fill with sin samples and exact derivatives; probe off-grid error.
        let max_err = |dt: f64| {
            let initial = InitialHistory::constant(vec![0.0]);
            let mut hist = HistoryBuffer::new(&initial, 1, 0.0, dt, 0.0);
            let n = (2.0 / dt).round() as usize;
            for k in 0..=n {
                let t = k as f64 * dt;
                hist.push(&[t.sin()], &[t.cos()]);
            }
            let mut worst: f64 = 0.0;
            for j in 0..200 {
                let t = 0.31 + (j as f64) * (1.5 / 200.0);
                let got = hist.state_at(t).unwrap()[0];
                worst = worst.max((got - t.sin()).abs());
            }
            worst
        };
        let e1 = max_err(0.02);
        let e2 = max_err(0.01);
        assert!(e1 / e2 >= 12.0, "interpolation order ratio {}", e1 / e2);
    }

    #[test]
    fn history_rejects_out_of_range() {
        let initial = InitialHistory::constant(vec![1.0]);
        let mut hist = HistoryBuffer::new(&initial, 1, 0.0, 0.1, 0.3);
        hist.push(&[1.0], &[0.0]);
        assert!(matches!(
            hist.state_at(-0.5),
            Err(DdeError::HistoryOutOfRange { .. })
        ));
        assert!(matches!(
            hist.state_at(1.0),
            Err(DdeError::HistoryOutOfRange { .. })
        ));
    }

    #[test]
    fn constant_trajectory_is_quiescent() {
        let traj = Trajectory::from_fn(0.01, 10.0, |_| 3.0, 0.5).unwrap();
        let lc = detect_limit_cycle(&traj, 0, 0.5).unwrap();
        assert_eq!(lc.amplitude, 0.0);
        assert!(lc.quiescent);
        assert!(lc.converged);
        assert!(lc.period.is_none());
    }

    #[test]
    fn sinusoid_amplitude_and_period() {
        let traj = Trajectory::from_fn(
            1e-3,
            20.0,
            |t| 2.0 + 0.5 * (2.0 * std::f64::consts::PI * t).sin(),
            0.5,
        )
        .unwrap();
        let lc = detect_limit_cycle(&traj, 0, 0.5).unwrap();
        assert!((lc.amplitude - 0.5).abs() < 1e-3, "amplitude {}", lc.amplitude);
        assert!((lc.period.unwrap() - 1.0).abs() < 1e-3, "period {:?}", lc.period);
        assert!(lc.converged);
        assert!(!lc.quiescent);
    }

    #[test]
    fn short_window_is_diagnosed() {
        // Only ~2 cycles in the analysis window.
        let traj = Trajectory::from_fn(
            1e-2,
            4.0,
            |t| (2.0 * std::f64::consts::PI * t).sin(),
            0.5,
        )
        .unwrap();
        assert!(matches!(
            detect_limit_cycle(&traj, 0, 0.5),
            Err(DdeError::WindowTooShort { .. })
        ));
    }

    #[test]
    fn zero_delay_reads_stage_state() {
        // With delays = [0], x' = -x(t-0) must behave exactly like x' = -x.
        let delayed = scalar_system(vec![0.0], |_, _, del| -del.component(0, 0));
        let plain = scalar_system(vec![], |_, x, _| -x);
        let a = integrate(&delayed, &InitialHistory::constant(vec![1.0]), 1.0, 1e-3).unwrap();
        let b = integrate(&plain, &InitialHistory::constant(vec![1.0]), 1.0, 1e-3).unwrap();
        for (x, y) in a.component(0).zip(b.component(0)) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
