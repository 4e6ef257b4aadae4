//! Fluid models of congestion control as [`DelayedSystem`] instances.
//!
//! Three families are provided, each with its equilibrium:
//!
//! - dual / fair-dual price dynamics
//!   `p' = kappa p^m (D(p(t - tau)) - C I[p > 0])`, with the alpha-fair
//!   demand `D(p) = (w/p)^(1/alpha)`; `m = 0` is the delay-dual variant,
//!   `m = 1` the fair-dual variant whose equilibrium is `p* = w / C^alpha`;
//! - RCP link-rate dynamics
//!   `R_l' = R_l (a_l/(d_l C_l) (C_l - y_l) - b_l q_l/(d_l^2 C_l))` with
//!   the positive-part projection, delayed aggregate arrivals
//!   `y_l = sum_r x_r(t - tau_rl)`, and per-flow rates obtained from the
//!   explicit-rate feedback aggregation of delayed link rates, plus the
//!   single-link reduction `R' = eta R (a/(C tau)) (C - R(t - tau))`;
//! - TCP window dynamics
//!   `w' = 1/RTT - (w/2) x(t - RTT) p(t - RTT)` with `x = w/RTT` and a
//!   pluggable loss model.
//!
//! Two overloaded constants from the literature are kept strictly apart
//! here: the fairness exponent (`fairness_alpha`, the demand/aggregation
//! exponent) and the RCP gain (`gain_alpha`, the `a_l` feedback constant).

use serde::Serialize;
use thiserror::Error;

use crate::dde::{DdeError, DelayedStates, DelayedSystem};
use crate::fairness::Alpha;
use crate::topology::Network;

/// Maximum right-hand-side residual for a state to count as an equilibrium.
pub const EQUILIBRIUM_RESIDUAL_MAX: f64 = 1e-10;

/// Delayed prices are clamped here before entering the demand function,
/// which diverges at zero price. Only the delay-dual variant can actually
/// drive the price to zero (its trajectories near zero price are stiff).
pub const PRICE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter {name} out of range: {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("operation requires the {expected} variant")]
    VariantMismatch { expected: &'static str },
    #[error("expected {expected} per-link parameter sets, got {got}")]
    LinkParamsMismatch { expected: usize, got: usize },
    #[error("state is not an equilibrium: residual {residual:.3e}")]
    EquilibriumResidual { residual: f64 },
    #[error("equilibrium iteration stalled at residual {residual:.3e}")]
    EquilibriumNotConverged { residual: f64 },
    #[error(transparent)]
    Dde(#[from] DdeError),
}

/// An equilibrium state verified against the model right-hand side.
#[derive(Clone, Debug, Serialize)]
pub struct Equilibrium {
    pub state: Vec<f64>,
    /// `max |rhs|` at the state with constant history.
    pub residual: f64,
}

impl Equilibrium {
    /// Verifies the candidate state; the residual must come out below
    /// [`EQUILIBRIUM_RESIDUAL_MAX`].
    pub fn verified(system: &DelayedSystem, state: Vec<f64>) -> Result<Self, ModelError> {
        let residual = rhs_residual(system, &state);
        if residual < EQUILIBRIUM_RESIDUAL_MAX {
            Ok(Equilibrium { state, residual })
        } else {
            Err(ModelError::EquilibriumResidual { residual })
        }
    }
}

/// Evaluates the projected right-hand side at a constant state (all
/// delayed lookups resolve to the state itself).
pub fn eval_at_constant(system: &DelayedSystem, state: &[f64]) -> Vec<f64> {
    let delayed: Vec<Vec<f64>> = system.delays().iter().map(|_| state.to_vec()).collect();
    let mut out = vec![0.0; system.dimension()];
    system.eval(0.0, state, &DelayedStates::new(&delayed), &mut out);
    out
}

/// `max |rhs|` at a constant state.
pub fn rhs_residual(system: &DelayedSystem, state: &[f64]) -> f64 {
    eval_at_constant(system, state).iter().copied().map(f64::abs).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Dual and fair-dual price dynamics
// ---------------------------------------------------------------------------

/// The exponent `m` on the price factor: 0 selects the delay-dual variant,
/// 1 the fair-dual variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DualVariant {
    DelayDual,
    FairDual,
}

impl DualVariant {
    pub fn exponent(self) -> u8 {
        match self {
            DualVariant::DelayDual => 0,
            DualVariant::FairDual => 1,
        }
    }
}

/// Parameters of the single-link dual model.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DualModelParams {
    pub variant: DualVariant,
    /// Gain kappa > 0.
    pub kappa: f64,
    /// Link capacity C > 0 (packets/second).
    pub capacity: f64,
    /// Willingness to pay w > 0.
    pub w: f64,
    /// Fairness exponent alpha > 0.
    pub alpha: f64,
    /// Forward propagation delay (seconds).
    pub tau_forward: f64,
    /// Backward propagation delay (seconds).
    pub tau_backward: f64,
}

impl DualModelParams {
    pub fn fair_dual(kappa: f64, capacity: f64, w: f64, alpha: f64, tau_f: f64, tau_b: f64) -> Self {
        DualModelParams {
            variant: DualVariant::FairDual,
            kappa,
            capacity,
            w,
            alpha,
            tau_forward: tau_f,
            tau_backward: tau_b,
        }
    }

    pub fn delay_dual(kappa: f64, capacity: f64, w: f64, alpha: f64, tau_f: f64, tau_b: f64) -> Self {
        DualModelParams { variant: DualVariant::DelayDual, ..Self::fair_dual(kappa, capacity, w, alpha, tau_f, tau_b) }
    }

    /// Round-trip delay tau = tau_forward + tau_backward.
    pub fn tau(&self) -> f64 {
        self.tau_forward + self.tau_backward
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_positive("kappa", self.kappa)?;
        check_positive("capacity", self.capacity)?;
        check_positive("w", self.w)?;
        check_positive("alpha", self.alpha)?;
        check_nonnegative("tau_forward", self.tau_forward)?;
        check_nonnegative("tau_backward", self.tau_backward)?;
        Ok(())
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::BadParameter { name, value })
    }
}

fn check_nonnegative(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::BadParameter { name, value })
    }
}

/// Dual price dynamics `p' = kappa p^m (D(p(t-tau)) - C I[p > 0])`, with
/// the projection floor keeping the price nonnegative. The capacity drain
/// is gated off at p = 0 per the indicator.
pub fn dual_rhs(params: &DualModelParams) -> Result<DelayedSystem, ModelError> {
    params.validate()?;
    let &DualModelParams { variant, kappa, capacity, w, alpha, .. } = params;
    let system = DelayedSystem::new(
        1,
        vec![params.tau()],
        Box::new(move |_t, x, delayed, out| {
            let p = x[0];
            let p_delayed = delayed.component(0, 0).max(PRICE_FLOOR);
            let rate = (w / p_delayed).powf(1.0 / alpha);
            let drain = if p > 0.0 { capacity } else { 0.0 };
            let price_factor = match variant {
                DualVariant::DelayDual => 1.0,
                DualVariant::FairDual => p,
            };
            out[0] = kappa * price_factor * (rate - drain);
        }),
    )?
    .with_floor_on_all()
    .with_state_names(vec!["p".to_owned()]);
    Ok(system)
}

/// The fair-dual reduction `p' = kappa p (D(p(t-tau)) - C)`.
pub fn fair_dual_rhs(params: &DualModelParams) -> Result<DelayedSystem, ModelError> {
    if params.variant != DualVariant::FairDual {
        return Err(ModelError::VariantMismatch { expected: "fair-dual" });
    }
    params.validate()?;
    let &DualModelParams { kappa, capacity, w, alpha, .. } = params;
    let system = DelayedSystem::new(
        1,
        vec![params.tau()],
        Box::new(move |_t, x, delayed, out| {
            let p_delayed = delayed.component(0, 0).max(PRICE_FLOOR);
            let rate = (w / p_delayed).powf(1.0 / alpha);
            out[0] = kappa * x[0] * (rate - capacity);
        }),
    )?
    .with_floor_on_all()
    .with_state_names(vec!["p".to_owned()]);
    Ok(system)
}

/// Equilibrium price `p* = w / C^alpha`, the solution of `D(p*) = C`,
/// verified through the dual right-hand side.
pub fn dual_equilibrium(params: &DualModelParams) -> Result<Equilibrium, ModelError> {
    params.validate()?;
    let p_star = params.w / params.capacity.powf(params.alpha);
    let system = dual_rhs(params)?;
    Equilibrium::verified(&system, vec![p_star])
}

// ---------------------------------------------------------------------------
// RCP link-rate dynamics
// ---------------------------------------------------------------------------

/// Per-link RCP feedback constants.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RcpLinkParams {
    /// Rate-mismatch gain `a_l > 0`.
    pub gain_alpha: f64,
    /// Queue gain `b_l >= 0`; 0 disables the queue term.
    pub beta: f64,
    /// Mean RTT of flows through the link, `d_l > 0` (seconds).
    pub mean_rtt: f64,
}

/// Queue model closing the RCP feedback loop.
#[derive(Clone, Copy, Debug, Serialize)]
pub enum QueueModel {
    /// Fluid queue `q' = y - C`, floored at zero. The default.
    Integrating,
    /// Small-buffer static map `q = rho^B / (1 - min(rho, 1 - eps))`
    /// of the traffic intensity `rho = y/C`; the queue is not a state.
    StaticSmallBuffer { exponent: f64, eps: f64 },
}

impl Default for QueueModel {
    fn default() -> Self {
        QueueModel::Integrating
    }
}

/// Parameters of the multi-link RCP model on a network.
#[derive(Clone, Debug, Serialize)]
pub struct RcpNetworkParams {
    /// One parameter set per network link, in declaration order.
    pub link_params: Vec<RcpLinkParams>,
    /// Exponent of the explicit-rate feedback aggregation (the fairness
    /// alpha, distinct from the per-link gain).
    pub fairness_alpha: Alpha,
    pub queue: QueueModel,
}

impl RcpNetworkParams {
    /// Identical constants on every link, max-min aggregation, fluid queue.
    pub fn uniform(network: &Network, gain_alpha: f64, beta: f64, mean_rtt: f64) -> Self {
        RcpNetworkParams {
            link_params: vec![
                RcpLinkParams { gain_alpha, beta, mean_rtt };
                network.links().len()
            ],
            fairness_alpha: Alpha::MaxMin,
            queue: QueueModel::Integrating,
        }
    }

    fn validate(&self, network: &Network) -> Result<(), ModelError> {
        if self.link_params.len() != network.links().len() {
            return Err(ModelError::LinkParamsMismatch {
                expected: network.links().len(),
                got: self.link_params.len(),
            });
        }
        for lp in &self.link_params {
            check_positive("gain_alpha", lp.gain_alpha)?;
            check_nonnegative("beta", lp.beta)?;
            check_positive("mean_rtt", lp.mean_rtt)?;
        }
        if let Alpha::Finite(a) = self.fairness_alpha {
            check_positive("fairness_alpha", a)?;
        }
        if let QueueModel::StaticSmallBuffer { exponent, eps } = self.queue {
            check_positive("queue exponent", exponent)?;
            check_positive("queue eps", eps)?;
        }
        Ok(())
    }
}

/// One delayed-rate term of a flow's feedback: which link rate to read and
/// at which delay index (`tau_rl + T_jr`).
#[derive(Clone, Copy, Debug)]
struct FeedTerm {
    link: usize,
    delay_index: usize,
}

/// Multi-link RCP dynamics. State is one rate per link (`R_<id>`),
/// followed by one queue per link (`q_<id>`) when the queue is a state.
///
/// For each link, the aggregate arrival rate sums the per-route flow rates
/// at that route's forward delay; each flow rate is the explicit-rate
/// aggregation of the link rates it observed, one return delay earlier.
/// All states carry the positive-part floor.
pub fn rcp_rhs(network: &Network, params: &RcpNetworkParams) -> Result<DelayedSystem, ModelError> {
    params.validate(network)?;
    let n_links = network.links().len();
    let caps = network.capacities();

    // Collect the distinct lookback constants tau_rl + T_jr.
    let mut delays: Vec<f64> = Vec::new();
    let mut delay_index = |d: f64, delays: &mut Vec<f64>| -> usize {
        match delays.iter().position(|&v| v == d) {
            Some(i) => i,
            None => {
                delays.push(d);
                delays.len() - 1
            }
        }
    };

    // Per link: the routes crossing it, each with its feedback terms.
    let mut feeds: Vec<Vec<Vec<FeedTerm>>> = vec![Vec::new(); n_links];
    for route in network.routes() {
        for link_id in &route.links {
            let l = network.link_index(link_id).expect("validated link");
            let tau_rl = route.forward_delay_per_link[link_id];
            let terms: Vec<FeedTerm> = route
                .links
                .iter()
                .map(|jid| {
                    let j = network.link_index(jid).expect("validated link");
                    let t_jr = route.return_delay_per_link[jid];
                    FeedTerm { link: j, delay_index: delay_index(tau_rl + t_jr, &mut delays) }
                })
                .collect();
            feeds[l].push(terms);
        }
    }

    let queue_is_state = matches!(params.queue, QueueModel::Integrating);
    let dimension = if queue_is_state { 2 * n_links } else { n_links };

    let mut names: Vec<String> =
        network.links().iter().map(|l| format!("R_{}", l.id)).collect();
    if queue_is_state {
        names.extend(network.links().iter().map(|l| format!("q_{}", l.id)));
    }

    let link_params = params.link_params.clone();
    let fairness_alpha = params.fairness_alpha;
    let queue = params.queue;
    let caps_for_rhs = caps.clone();

    let system = DelayedSystem::new(
        dimension,
        delays,
        Box::new(move |_t, x, delayed, out| {
            for l in 0..n_links {
                let cap = caps_for_rhs[l];
                let lp = link_params[l];
                // Aggregate arrivals: one flow rate per crossing route.
                let mut y = 0.0;
                for terms in &feeds[l] {
                    y += flow_rate(terms, delayed, &caps_for_rhs, fairness_alpha);
                }
                let q = match queue {
                    QueueModel::Integrating => {
                        out[n_links + l] = y - cap;
                        x[n_links + l]
                    }
                    QueueModel::StaticSmallBuffer { exponent, eps } => {
                        let rho = y / cap;
                        rho.powf(exponent) / (1.0 - rho.min(1.0 - eps))
                    }
                };
                let mismatch = lp.gain_alpha / (lp.mean_rtt * cap) * (cap - y)
                    - lp.beta * q / (lp.mean_rtt * lp.mean_rtt * cap);
                out[l] = x[l] * mismatch;
            }
        }),
    )?
    .with_floor_on_all()
    .with_state_names(names);
    Ok(system)
}

/// Explicit-rate flow rate from delayed link rates, overflow-safe for
/// finite alpha. Rates are clamped just above zero so the aggregation
/// stays total while the projection floor holds a state at 0.
fn flow_rate(
    terms: &[FeedTerm],
    delayed: &DelayedStates<'_>,
    caps: &[f64],
    alpha: Alpha,
) -> f64 {
    let rate_of = |t: &FeedTerm| {
        delayed.component(t.delay_index, t.link).max(1e-12 * caps[t.link])
    };
    let min = terms.iter().map(&rate_of).fold(f64::INFINITY, f64::min);
    match alpha {
        Alpha::MaxMin => min,
        Alpha::Finite(a) => {
            let sum: f64 = terms.iter().map(|t| (min / rate_of(t)).powf(a)).sum();
            min * sum.powf(-1.0 / a)
        }
    }
}

/// An equilibrium of the multi-link RCP model, found by damped multiplicative
/// iteration from `R = C` (the equilibrium set need not be unique; this picks
/// one deterministically). Queues settle at zero.
pub fn rcp_network_equilibrium(
    network: &Network,
    params: &RcpNetworkParams,
) -> Result<Equilibrium, ModelError> {
    params.validate(network)?;
    let system = rcp_rhs(network, params)?;
    let n_links = network.links().len();
    let caps = network.capacities();

    let mut state = vec![0.0; system.dimension()];
    state[..n_links].copy_from_slice(&caps);

    let step = 0.3;
    let mut residual = f64::INFINITY;
    for _ in 0..200_000 {
        let rhs = eval_at_constant(&system, &state);
        residual = rhs.iter().copied().map(f64::abs).fold(0.0, f64::max);
        if residual < 1e-12 {
            break;
        }
        for l in 0..n_links {
            let lp = params.link_params[l];
            // Relative drift R'/R, nondimensionalized by the RTT.
            let drift = rhs[l] / state[l].max(1e-300) * lp.mean_rtt;
            state[l] *= (1.0 + step * drift).max(0.5);
        }
    }
    if residual >= 1e-12 {
        return Err(ModelError::EquilibriumNotConverged { residual });
    }
    Equilibrium::verified(&system, state)
}

/// Parameters of the single-link RCP reduction (queue gain taken as zero).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RcpSingleLinkParams {
    /// Dimensionless loop gain eta > 0; the local-stability condition
    /// compares eta (scaled by the gain alpha) against pi/2.
    pub eta: f64,
    /// Rate-mismatch gain alpha in the reduced form; 1 makes the paper's
    /// threshold read directly on eta.
    pub gain_alpha: f64,
    /// Link capacity C > 0 (packets/second).
    pub capacity: f64,
    /// Round-trip delay tau > 0 (seconds); the reduced form's constant is
    /// the product C * tau.
    pub tau: f64,
}

impl RcpSingleLinkParams {
    pub fn new(eta: f64, capacity: f64, tau: f64) -> Self {
        RcpSingleLinkParams { eta, gain_alpha: 1.0, capacity, tau }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_positive("eta", self.eta)?;
        check_positive("gain_alpha", self.gain_alpha)?;
        check_positive("capacity", self.capacity)?;
        check_positive("tau", self.tau)?;
        Ok(())
    }
}

/// Single-link RCP dynamics `R' = eta R (a/(C tau)) (C - R(t - tau))`.
pub fn rcp_single_link_rhs(params: &RcpSingleLinkParams) -> Result<DelayedSystem, ModelError> {
    params.validate()?;
    let &RcpSingleLinkParams { eta, gain_alpha, capacity, tau } = params;
    let system = DelayedSystem::new(
        1,
        vec![tau],
        Box::new(move |_t, x, delayed, out| {
            let y = delayed.component(0, 0);
            out[0] = eta * x[0] * gain_alpha / (capacity * tau) * (capacity - y);
        }),
    )?
    .with_floor_on_all()
    .with_state_names(vec!["R".to_owned()]);
    Ok(system)
}

/// Equilibrium of the single-link reduction: `R* = C`.
pub fn rcp_single_equilibrium(params: &RcpSingleLinkParams) -> Result<Equilibrium, ModelError> {
    let system = rcp_single_link_rhs(params)?;
    Equilibrium::verified(&system, vec![params.capacity])
}

// ---------------------------------------------------------------------------
// TCP window dynamics
// ---------------------------------------------------------------------------

/// Loss probability as a function of the aggregate rate; nondecreasing
/// with range [0, 1].
#[derive(Clone, Copy, Debug, Serialize)]
pub enum LossModel {
    /// Rate-independent loss probability.
    Constant { p: f64 },
    /// Small-buffer loss `p(y) = min((y/C)^B, 1)`.
    SmallBuffer { capacity: f64, exponent: f64 },
}

impl LossModel {
    pub fn loss(&self, aggregate_rate: f64) -> f64 {
        match *self {
            LossModel::Constant { p } => p.clamp(0.0, 1.0),
            LossModel::SmallBuffer { capacity, exponent } => {
                (aggregate_rate / capacity).powf(exponent).clamp(0.0, 1.0)
            }
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            LossModel::Constant { p } => {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(ModelError::BadParameter { name: "loss p", value: p })
                }
            }
            LossModel::SmallBuffer { capacity, exponent } => {
                check_positive("loss capacity", capacity)?;
                check_positive("loss exponent", exponent)
            }
        }
    }
}

/// Parameters of the averaged TCP window model.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TcpParams {
    /// Round-trip time (seconds).
    pub rtt: f64,
    /// Number of identical flows represented by the average window.
    pub n_flows: u32,
    pub loss: LossModel,
}

impl TcpParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check_positive("rtt", self.rtt)?;
        if self.n_flows == 0 {
            return Err(ModelError::BadParameter { name: "n_flows", value: 0.0 });
        }
        self.loss.validate()
    }
}

/// TCP window dynamics `w' = 1/RTT - (w/2) x(t-RTT) p(t-RTT)`, where
/// `x = w/RTT` and the loss probability is the loss model evaluated at the
/// delayed aggregate rate of all flows.
pub fn tcp_rhs(params: &TcpParams) -> Result<DelayedSystem, ModelError> {
    params.validate()?;
    let &TcpParams { rtt, n_flows, loss } = params;
    let system = DelayedSystem::new(
        1,
        vec![rtt],
        Box::new(move |_t, x, delayed, out| {
            let w_delayed = delayed.component(0, 0);
            let rate_delayed = w_delayed / rtt;
            let p = loss.loss(n_flows as f64 * rate_delayed);
            out[0] = 1.0 / rtt - 0.5 * x[0] * rate_delayed * p;
        }),
    )?
    .with_floor_on_all()
    .with_state_names(vec!["w".to_owned()]);
    Ok(system)
}

/// TCP equilibrium window. Constant loss has the closed form
/// `w* = sqrt(2/p)` (so `x* tau sqrt(p) = sqrt(2)`); rate-dependent loss
/// models are solved by bisection on the strictly decreasing window drift.
pub fn tcp_equilibrium(params: &TcpParams) -> Result<Equilibrium, ModelError> {
    params.validate()?;
    let system = tcp_rhs(params)?;
    let w_star = match params.loss {
        LossModel::Constant { p } => {
            if p <= 0.0 {
                // Loss-free window grows without bound; no equilibrium.
                return Err(ModelError::BadParameter { name: "loss p", value: p });
            }
            (2.0 / p).sqrt()
        }
        LossModel::SmallBuffer { .. } => {
            let drift = |w: f64| {
                let p = params.loss.loss(params.n_flows as f64 * w / params.rtt);
                1.0 / params.rtt - 0.5 * w * (w / params.rtt) * p
            };
            let mut hi = 1.0;
            while drift(hi) > 0.0 {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(ModelError::EquilibriumNotConverged { residual: drift(hi) });
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if drift(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };
    Equilibrium::verified(&system, vec![w_star])
}

/// Equilibrium per-flow rate `x* = w*/RTT`.
pub fn tcp_equilibrium_rate(params: &TcpParams) -> Result<f64, ModelError> {
    Ok(tcp_equilibrium(params)?.state[0] / params.rtt)
}

/// Traffic intensity `rho = x / C`.
pub fn traffic_intensity(rate: f64, capacity: f64) -> f64 {
    assert!(capacity > 0.0, "capacity must be positive");
    rate / capacity
}
