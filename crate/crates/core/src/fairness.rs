//! Alpha-parameterized fairness: demand, allocation, aggregation, checks.
//!
//! The demand function `(w/p)^(1/alpha)` spans the classical fairness
//! family: proportional fairness at alpha = 1, TCP fairness at alpha = 2
//! with w = 1/rtt^2, and max-min in the alpha -> infinity limit. Max-min
//! is a distinguished [`Alpha::MaxMin`] value routed to progressive
//! water-filling rather than a huge exponent, which would overflow the
//! `R^(-alpha)` aggregation.
//!
//! [`alpha_fair_allocate`] maximizes the alpha-fair utility sum subject to
//! `A x <= C`, `x >= 0` by ascending the dual: link prices are updated
//! multiplicatively (a projected gradient in log-price space, which stays
//! well-conditioned across the enormous price scales large alpha induces),
//! with a Newton polish on the binding set once the iterate is close. The
//! stopping rule is a dimensionless KKT residual combining primal
//! feasibility and complementary slackness.

use serde::Serialize;
use thiserror::Error;

use crate::topology::{LinkId, Network};

/// Tolerance for the aggregate-proportional-change inequality; the
/// inequality is exact at the optimum, so this only absorbs solver
/// residual.
pub const PROPORTIONAL_FAIRNESS_TOL: f64 = 1e-9;

/// Links loaded to within this relative slack of capacity count as
/// binding when bottleneck sets are reported.
pub const BINDING_TOL: f64 = 1e-6;

/// Fairness exponent: a finite alpha > 0, or the max-min limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Alpha {
    Finite(f64),
    MaxMin,
}

impl Alpha {
    pub fn finite(self) -> Option<f64> {
        match self {
            Alpha::Finite(a) => Some(a),
            Alpha::MaxMin => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error("price must be positive, got {price}; clamp prices away from 0")]
    NonPositivePrice { price: f64 },
    #[error("willingness to pay must be positive, got {w}")]
    NonPositiveWillingness { w: f64 },
    #[error("alpha must be positive and finite, got {alpha}")]
    BadAlpha { alpha: f64 },
    #[error("link rate must be positive, got {rate}")]
    NonPositiveLinkRate { rate: f64 },
    #[error("rate list must be nonempty")]
    EmptyRates,
    #[error("route {route} has a TCP-fair weight 1/rtt^2 but zero rtt")]
    ZeroRtt { route: usize },
    #[error("expected {expected} per-route values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("rate for route {route} must be strictly positive, got {rate}")]
    NonPositiveRate { route: usize, rate: f64 },
    #[error(
        "allocation did not converge after {iterations} iterations; \
         best KKT residual {residual:.3e}, last rates {rates:?}"
    )]
    NotConverged { iterations: usize, residual: f64, rates: Vec<f64> },
}

/// Per-route fairness parameters.
#[derive(Clone, Debug, Serialize)]
pub struct FairnessParams {
    pub alpha: Alpha,
    /// Willingness-to-pay weight per route, in network route order.
    pub weights: Vec<f64>,
}

impl FairnessParams {
    /// Unit weights at the given alpha.
    pub fn uniform(network: &Network, alpha: Alpha) -> Self {
        FairnessParams { alpha, weights: vec![1.0; network.routes().len()] }
    }

    /// TCP-fair preset: alpha = 2 and w_r = 1/rtt_r^2.
    pub fn tcp_fair(network: &Network) -> Result<Self, FairnessError> {
        let mut weights = Vec::with_capacity(network.routes().len());
        for (i, route) in network.routes().iter().enumerate() {
            let rtt = route.rtt();
            if rtt <= 0.0 {
                return Err(FairnessError::ZeroRtt { route: i });
            }
            weights.push(1.0 / (rtt * rtt));
        }
        Ok(FairnessParams { alpha: Alpha::Finite(2.0), weights })
    }

    pub fn validate(&self, network: &Network) -> Result<(), FairnessError> {
        if self.weights.len() != network.routes().len() {
            return Err(FairnessError::LengthMismatch {
                expected: network.routes().len(),
                got: self.weights.len(),
            });
        }
        for &w in &self.weights {
            if !(w > 0.0) || !w.is_finite() {
                return Err(FairnessError::NonPositiveWillingness { w });
            }
        }
        if let Alpha::Finite(a) = self.alpha {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(FairnessError::BadAlpha { alpha: a });
            }
        }
        Ok(())
    }
}

/// A per-route rate vector together with each route's binding links.
#[derive(Clone, Debug, Serialize)]
pub struct Allocation {
    /// Rates in network route order (packets/second).
    pub rates: Vec<f64>,
    /// Per route, the links loaded to capacity (within [`BINDING_TOL`]).
    pub bottlenecks: Vec<Vec<LinkId>>,
}

impl Allocation {
    /// Minimum rate over all routes.
    pub fn min_rate(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The alpha-fair demand function `(w/p)^(1/alpha)`, strictly decreasing
/// in the price.
pub fn demand(price: f64, willingness: f64, alpha: f64) -> Result<f64, FairnessError> {
    if !(price > 0.0) {
        return Err(FairnessError::NonPositivePrice { price });
    }
    if !(willingness > 0.0) {
        return Err(FairnessError::NonPositiveWillingness { w: willingness });
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(FairnessError::BadAlpha { alpha });
    }
    Ok((willingness / price).powf(1.0 / alpha))
}

/// Explicit-rate feedback aggregation over delayed link rates: the
/// L_{-alpha} combination `(sum_j R_j^(-alpha))^(-1/alpha)` for finite
/// alpha, and `min_j R_j` in the max-min limit.
pub fn rate_feedback_aggregate(link_rates: &[f64], alpha: Alpha) -> Result<f64, FairnessError> {
    if link_rates.is_empty() {
        return Err(FairnessError::EmptyRates);
    }
    for &r in link_rates {
        if !(r > 0.0) {
            return Err(FairnessError::NonPositiveLinkRate { rate: r });
        }
    }
    match alpha {
        Alpha::MaxMin => Ok(link_rates.iter().copied().fold(f64::INFINITY, f64::min)),
        Alpha::Finite(a) => {
            if !(a > 0.0) || !a.is_finite() {
                return Err(FairnessError::BadAlpha { alpha: a });
            }
            Ok(lalpha_aggregate(link_rates, a))
        }
    }
}

/// Overflow-safe evaluation of `(sum_j R_j^(-alpha))^(-1/alpha)`:
/// factoring out the minimum keeps every power in (0, 1].
pub(crate) fn lalpha_aggregate(link_rates: &[f64], alpha: f64) -> f64 {
    let m = link_rates.iter().copied().fold(f64::INFINITY, f64::min);
    let sum: f64 = link_rates.iter().map(|&r| (m / r).powf(alpha)).sum();
    m * sum.powf(-1.0 / alpha)
}

/// Progressive water-filling: raise all unfrozen route rates equally until
/// a link saturates, freeze the routes crossing it, repeat. Yields the
/// max-min fair allocation; every route ends bottlenecked at a saturated
/// link.
pub fn maxmin_allocate(network: &Network) -> Allocation {
    let n_routes = network.routes().len();
    let n_links = network.links().len();
    let caps = network.capacities();

    let link_routes: Vec<Vec<usize>> = (0..n_links)
        .map(|l| {
            let id = &network.links()[l].id;
            (0..n_routes)
                .filter(|&r| network.routes()[r].links.contains(id))
                .collect()
        })
        .collect();

    let mut rates = vec![0.0; n_routes];
    let mut frozen = vec![false; n_routes];
    let mut used = vec![0.0; n_links];

    for _round in 0..=n_links {
        if frozen.iter().all(|&f| f) {
            break;
        }
        // Smallest per-route headroom over links still carrying unfrozen routes.
        let mut delta = f64::INFINITY;
        for l in 0..n_links {
            let unfrozen = link_routes[l].iter().filter(|&&r| !frozen[r]).count();
            if unfrozen > 0 {
                let headroom = ((caps[l] - used[l]) / unfrozen as f64).max(0.0);
                delta = delta.min(headroom);
            }
        }
        debug_assert!(delta.is_finite(), "every route crosses at least one link");

        for r in 0..n_routes {
            if !frozen[r] {
                rates[r] += delta;
            }
        }
        for l in 0..n_links {
            let unfrozen = link_routes[l].iter().filter(|&&r| !frozen[r]).count();
            used[l] += delta * unfrozen as f64;
        }
        // Freeze routes on links that just saturated.
        for l in 0..n_links {
            let unfrozen = link_routes[l].iter().any(|&r| !frozen[r]);
            if unfrozen && caps[l] - used[l] <= BINDING_TOL * caps[l] * 1e-3 {
                for &r in &link_routes[l] {
                    frozen[r] = true;
                }
            }
        }
    }
    debug_assert!(frozen.iter().all(|&f| f), "water-filling left a route unfrozen");

    let bottlenecks = binding_links(network, &rates);
    Allocation { rates, bottlenecks }
}

/// Per-route binding links for a rate vector.
fn binding_links(network: &Network, rates: &[f64]) -> Vec<Vec<LinkId>> {
    let incidence = crate::topology::build_incidence(network);
    let loads = incidence.link_loads(rates);
    network
        .routes()
        .iter()
        .map(|route| {
            route
                .links
                .iter()
                .filter(|id| {
                    let l = network.link_index(id).expect("validated link");
                    loads[l] >= network.links()[l].capacity * (1.0 - BINDING_TOL)
                })
                .cloned()
                .collect()
        })
        .collect()
}

/// Options for the alpha-fair dual solver.
#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// KKT residual target (dimensionless).
    pub tolerance: f64,
    /// Iteration budget before giving up with a diagnostic error.
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tolerance: 1e-8, max_iterations: 1_000_000 }
    }
}

/// Unique maximizer of the alpha-fair utility sum subject to `A x <= C`,
/// `x >= 0`, with default solver options. [`Alpha::MaxMin`] is routed to
/// [`maxmin_allocate`] (weights are not used in that limit).
pub fn alpha_fair_allocate(
    network: &Network,
    params: &FairnessParams,
) -> Result<Allocation, FairnessError> {
    alpha_fair_allocate_with(network, params, SolverOptions::default())
}

/// [`alpha_fair_allocate`] with explicit solver options.
pub fn alpha_fair_allocate_with(
    network: &Network,
    params: &FairnessParams,
    opts: SolverOptions,
) -> Result<Allocation, FairnessError> {
    params.validate(network)?;
    let alpha = match params.alpha {
        Alpha::MaxMin => return Ok(maxmin_allocate(network)),
        Alpha::Finite(a) => {
            if !(a > 0.0) {
                return Err(FairnessError::BadAlpha { alpha: a });
            }
            a
        }
    };

    DualSolver::new(network, &params.weights, alpha, opts).solve().map(|rates| {
        let bottlenecks = binding_links(network, &rates);
        Allocation { rates, bottlenecks }
    })
}

/// Dual ascent state for one allocation problem.
struct DualSolver<'a> {
    alpha: f64,
    weights: &'a [f64],
    caps: Vec<f64>,
    route_links: Vec<Vec<usize>>,
    link_routes: Vec<Vec<usize>>,
    opts: SolverOptions,
    /// Log link prices.
    u: Vec<f64>,
    prices: Vec<f64>,
    route_prices: Vec<f64>,
    rates: Vec<f64>,
    loads: Vec<f64>,
}

/// Bounds keeping `exp(u)` inside the normal f64 range.
const LOG_PRICE_MIN: f64 = -745.0;
const LOG_PRICE_MAX: f64 = 709.0;

impl<'a> DualSolver<'a> {
    fn new(network: &Network, weights: &'a [f64], alpha: f64, opts: SolverOptions) -> Self {
        let n_links = network.links().len();
        let n_routes = network.routes().len();
        let route_links: Vec<Vec<usize>> = network
            .routes()
            .iter()
            .map(|r| {
                r.links
                    .iter()
                    .map(|id| network.link_index(id).expect("validated link"))
                    .collect()
            })
            .collect();
        let mut link_routes = vec![Vec::new(); n_links];
        for (r, links) in route_links.iter().enumerate() {
            for &l in links {
                link_routes[l].push(r);
            }
        }
        let caps = network.capacities();

        // Initial log prices: each link priced as if it alone carried its
        // routes; exact for single-link networks.
        let u: Vec<f64> = (0..n_links)
            .map(|l| {
                let s: f64 = link_routes[l].iter().map(|&r| weights[r].powf(1.0 / alpha)).sum();
                if s > 0.0 {
                    (alpha * (s / caps[l]).ln()).clamp(LOG_PRICE_MIN, LOG_PRICE_MAX)
                } else {
                    LOG_PRICE_MIN // link carries no routes; price is irrelevant
                }
            })
            .collect();

        DualSolver {
            alpha,
            weights,
            caps,
            route_links,
            link_routes,
            opts,
            u,
            prices: vec![0.0; n_links],
            route_prices: vec![0.0; n_routes],
            rates: vec![0.0; n_routes],
            loads: vec![0.0; n_links],
        }
    }

    /// Recomputes prices, demands and link loads from the log prices.
    fn refresh(&mut self) {
        for (l, &u) in self.u.iter().enumerate() {
            self.prices[l] = u.exp();
        }
        for (r, links) in self.route_links.iter().enumerate() {
            let q: f64 = links.iter().map(|&l| self.prices[l]).sum();
            self.route_prices[r] = q;
            self.rates[r] = (self.weights[r] / q).powf(1.0 / self.alpha);
        }
        for (l, routes) in self.link_routes.iter().enumerate() {
            self.loads[l] = routes.iter().map(|&r| self.rates[r]).sum();
        }
    }

    /// Dimensionless KKT residual: primal violation plus complementary
    /// slackness, the latter weighted by how much this link's price
    /// actually matters to any route crossing it (`max_r p_l / q_r`).
    fn kkt_residual(&self) -> f64 {
        let mut res: f64 = 0.0;
        for l in 0..self.caps.len() {
            let cap = self.caps[l];
            let over = (self.loads[l] - cap).max(0.0) / cap;
            let slack = (cap - self.loads[l]).max(0.0) / cap;
            let relevance = self.price_relevance(l);
            res = res.max(over).max(relevance * slack);
        }
        res
    }

    fn price_relevance(&self, l: usize) -> f64 {
        self.link_routes[l]
            .iter()
            .map(|&r| self.prices[l] / self.route_prices[r])
            .fold(0.0, f64::max)
    }

    fn solve(mut self) -> Result<Vec<f64>, FairnessError> {
        // Log-space gradient contraction scales with alpha.
        let mut step = 0.7 * self.alpha;
        let mut best_res = f64::INFINITY;
        let mut best_rates = Vec::new();
        let mut stalled = 0usize;
        let mut last_polish = 0usize;

        for iter in 0..self.opts.max_iterations {
            self.refresh();
            let res = self.kkt_residual();
            if res.is_nan() {
                break;
            }
            if res < best_res {
                best_res = res;
                best_rates = self.rates.clone();
                stalled = 0;
            } else {
                stalled += 1;
                if stalled > 50 {
                    step = (step * 0.5).max(1e-3 * self.alpha);
                    stalled = 0;
                }
            }
            if res < self.opts.tolerance {
                return Ok(self.rates);
            }
            if res < 1e-3 && iter >= last_polish + 10 {
                last_polish = iter;
                if let Some(rates) = self.newton_polish() {
                    return Ok(rates);
                }
            }
            for l in 0..self.u.len() {
                let g = (self.loads[l] - self.caps[l]) / self.caps[l];
                self.u[l] = (self.u[l] + step * g).clamp(LOG_PRICE_MIN, LOG_PRICE_MAX);
            }
        }

        Err(FairnessError::NotConverged {
            iterations: self.opts.max_iterations,
            residual: best_res,
            rates: best_rates,
        })
    }

    /// Newton refinement of `load = capacity` over the links whose prices
    /// matter, in log-price space. Returns the rates on success; on any
    /// sign of trouble the caller's gradient iteration resumes unchanged.
    fn newton_polish(&mut self) -> Option<Vec<f64>> {
        let saved_u = self.u.clone();
        let active: Vec<usize> = (0..self.caps.len())
            .filter(|&l| self.price_relevance(l) > 1e-9)
            .collect();
        if active.is_empty() {
            return None;
        }

        for _ in 0..50 {
            self.refresh();
            let res = self.kkt_residual();
            if res < self.opts.tolerance {
                return Some(self.rates.clone());
            }
            // Jacobian of (load_l - cap_l)/cap_l w.r.t. u_m on the active set:
            // d load_l / d u_m = -sum_{r: l,m in r} x_r p_m / (alpha q_r).
            let n = active.len();
            let mut jac = vec![vec![0.0; n]; n];
            let mut rhs = vec![0.0; n];
            for (i, &l) in active.iter().enumerate() {
                rhs[i] = -(self.loads[l] - self.caps[l]) / self.caps[l];
                for &r in &self.link_routes[l] {
                    let coeff = -self.rates[r] / (self.alpha * self.route_prices[r]);
                    for &m in &self.route_links[r] {
                        if let Some(j) = active.iter().position(|&a| a == m) {
                            jac[i][j] += coeff * self.prices[m] / self.caps[l];
                        }
                    }
                }
            }
            let Some(mut du) = solve_dense(jac, rhs) else {
                self.u = saved_u;
                return None;
            };
            // Damp very large log-price moves.
            let norm = du.iter().copied().fold(0.0f64, |a, v| a.max(v.abs()));
            let cap = 5.0 * self.alpha;
            if norm > cap {
                for v in &mut du {
                    *v *= cap / norm;
                }
            }
            if du.iter().any(|v| !v.is_finite()) {
                self.u = saved_u;
                return None;
            }
            for (i, &l) in active.iter().enumerate() {
                self.u[l] = (self.u[l] + du[i]).clamp(LOG_PRICE_MIN, LOG_PRICE_MAX);
            }
        }
        self.refresh();
        if self.kkt_residual() < self.opts.tolerance {
            return Some(self.rates.clone());
        }
        self.u = saved_u;
        None
    }
}

/// Gaussian elimination with partial pivoting; None when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite pivot")
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// True iff the aggregate proportional change `sum_r (x*_r - x_r) / x_r`
/// is at most `tol` for every candidate rate vector. Candidates are
/// assumed feasible; this is the variational characterization of a
/// proportionally fair vector.
pub fn check_proportional_fairness(
    rates: &[f64],
    candidates: &[Vec<f64>],
    tol: f64,
) -> Result<bool, FairnessError> {
    let weights = vec![1.0; rates.len()];
    check_weighted_proportional_fairness(rates, &weights, candidates, tol)
}

/// Weighted extension of the aggregate-change inequality,
/// `sum_r w_r (x*_r - x_r) / x_r <= tol`; with unit weights this is the
/// classical unweighted test.
pub fn check_weighted_proportional_fairness(
    rates: &[f64],
    weights: &[f64],
    candidates: &[Vec<f64>],
    tol: f64,
) -> Result<bool, FairnessError> {
    if weights.len() != rates.len() {
        return Err(FairnessError::LengthMismatch { expected: rates.len(), got: weights.len() });
    }
    for (r, &x) in rates.iter().enumerate() {
        if !(x > 0.0) {
            return Err(FairnessError::NonPositiveRate { route: r, rate: x });
        }
    }
    for candidate in candidates {
        if candidate.len() != rates.len() {
            return Err(FairnessError::LengthMismatch {
                expected: rates.len(),
                got: candidate.len(),
            });
        }
        let change: f64 = rates
            .iter()
            .zip(weights)
            .zip(candidate)
            .map(|((&x, &w), &c)| w * (c - x) / x)
            .sum();
        if change > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Link, Network, Route};

    fn single_link(capacity: f64, n_routes: usize) -> Network {
        let routes = (0..n_routes)
            .map(|i| Route::new(format!("r{i}").as_str(), vec!["L".into()], 0.0, 0.0))
            .collect();
        Network::new(vec![Link::new("L", capacity)], routes).unwrap()
    }

    /// Links L1 (C=1) carrying {A, B} and L2 (C=1.5) carrying {B, C}.
    fn two_link() -> Network {
        Network::new(
            vec![Link::new("L1", 1.0), Link::new("L2", 1.5)],
            vec![
                Route::new("A", vec!["L1".into()], 0.0, 0.0),
                Route::new("B", vec!["L1".into(), "L2".into()], 0.0, 0.0),
                Route::new("C", vec!["L2".into()], 0.0, 0.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn demand_examples() {
        assert_eq!(demand(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(demand(4.0, 1.0, 2.0).unwrap(), 0.5);
        // TCP-fair form 1/(tau sqrt(p)) with tau = 2: w = 1/tau^2 = 0.25.
        let tau = 2.0f64;
        let p = 0.25;
        let d = demand(p, 1.0 / (tau * tau), 2.0).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        assert!((d - 1.0 / (tau * p.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn demand_rejects_nonpositive_price() {
        assert!(matches!(
            demand(0.0, 1.0, 1.0),
            Err(FairnessError::NonPositivePrice { .. })
        ));
        assert!(matches!(
            demand(-1.0, 1.0, 1.0),
            Err(FairnessError::NonPositivePrice { .. })
        ));
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(rate_feedback_aggregate(&[2.0], Alpha::Finite(7.0)).unwrap(), 2.0);
        assert_eq!(rate_feedback_aggregate(&[2.0], Alpha::MaxMin).unwrap(), 2.0);
        let h = rate_feedback_aggregate(&[1.0, 1.0], Alpha::Finite(1.0)).unwrap();
        assert!((h - 0.5).abs() < 1e-15);
        assert_eq!(rate_feedback_aggregate(&[1.0, 3.0], Alpha::MaxMin).unwrap(), 1.0);
    }

    #[test]
    fn aggregate_monotone_in_alpha_toward_min() {
        let rates = [1.0, 3.0];
        let mut prev = 0.0;
        for &a in &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
            let v = rate_feedback_aggregate(&rates, Alpha::Finite(a)).unwrap();
            assert!(v > prev, "alpha {a}: {v} <= {prev}");
            assert!(v < 1.0);
            prev = v;
        }
        assert!((1.0 - prev) < 0.02, "alpha = 64 should be near the min, got {prev}");
    }

    #[test]
    fn aggregate_rejects_nonpositive() {
        assert!(rate_feedback_aggregate(&[1.0, 0.0], Alpha::MaxMin).is_err());
        assert!(rate_feedback_aggregate(&[], Alpha::MaxMin).is_err());
    }

    #[test]
    fn aggregate_survives_large_alpha() {
        // Direct powf of R^(-alpha) would overflow at R = 1e-3, alpha = 200.
        let v = rate_feedback_aggregate(&[1e-3, 5.0], Alpha::Finite(200.0)).unwrap();
        assert!(v.is_finite());
        assert!((v - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn maxmin_symmetric_single_link() {
        let alloc = maxmin_allocate(&single_link(1.0, 2));
        assert!((alloc.rates[0] - 0.5).abs() < 1e-12);
        assert!((alloc.rates[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn maxmin_three_on_one_link() {
        let alloc = maxmin_allocate(&single_link(3.0, 3));
        for &r in &alloc.rates {
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn maxmin_two_link_example() {
        // Hand-executed water-filling: all rise to 0.5, L1 saturates and
        // freezes A and B; C continues to 1.0 where L2 saturates.
        let alloc = maxmin_allocate(&two_link());
        assert!((alloc.rates[0] - 0.5).abs() < 1e-12);
        assert!((alloc.rates[1] - 0.5).abs() < 1e-12);
        assert!((alloc.rates[2] - 1.0).abs() < 1e-12);
        // Every route is bottlenecked at a saturated link.
        for b in &alloc.bottlenecks {
            assert!(!b.is_empty());
        }
    }

    #[test]
    fn maxmin_beats_brute_force_grid() {
        // Brute-force max of the min rate over a feasibility grid.
        let net = two_link();
        let incidence = crate::topology::build_incidence(&net);
        let caps = net.capacities();
        let mut best = 0.0f64;
        let n = 61;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let x = [
                        1.2 * i as f64 / n as f64,
                        1.2 * j as f64 / n as f64,
                        1.6 * k as f64 / n as f64,
                    ];
                    let loads = incidence.link_loads(&x);
                    if loads.iter().zip(&caps).all(|(y, c)| y <= c) {
                        best = best.max(x.iter().copied().fold(f64::INFINITY, f64::min));
                    }
                }
            }
        }
        let alloc = maxmin_allocate(&net);
        assert!(alloc.min_rate() >= best - 0.03, "{} vs grid {}", alloc.min_rate(), best);
    }

    #[test]
    fn maxmin_bottleneck_condition() {
        // Each route has a saturated link where it gets the largest rate.
        let net = two_link();
        let alloc = maxmin_allocate(&net);
        let incidence = crate::topology::build_incidence(&net);
        let loads = incidence.link_loads(&alloc.rates);
        for (r, route) in net.routes().iter().enumerate() {
            let ok = route.links.iter().any(|id| {
                let l = net.link_index(id).unwrap();
                let saturated = loads[l] >= net.links()[l].capacity * (1.0 - 1e-9);
                let largest = net
                    .routes()
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.links.contains(id))
                    .all(|(s, _)| alloc.rates[r] >= alloc.rates[s] - 1e-9);
                saturated && largest
            });
            assert!(ok, "route {r} lacks a max-min bottleneck");
        }
    }

    #[test]
    fn alpha_fair_symmetric_single_link() {
        let net = single_link(1.0, 2);
        let params = FairnessParams::uniform(&net, Alpha::Finite(1.0));
        let alloc = alpha_fair_allocate(&net, &params).unwrap();
        assert!((alloc.rates[0] - 0.5).abs() < 1e-8);
        assert!((alloc.rates[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn alpha_fair_weighted_single_link_matches_kkt_oracle() {
        // One link, alpha = 1: x_r = w_r C / sum w. Cross-checked by a
        // dense grid search over the capacity simplex.
        let net = single_link(3.0, 2);
        let params =
            FairnessParams { alpha: Alpha::Finite(1.0), weights: vec![2.0, 1.0] };
        let alloc = alpha_fair_allocate(&net, &params).unwrap();
        assert!((alloc.rates[0] - 2.0).abs() < 1e-6);
        assert!((alloc.rates[1] - 1.0).abs() < 1e-6);

        let utility = |x: &[f64]| 2.0 * x[0].ln() + x[1].ln();
        let ours = utility(&alloc.rates);
        let n = 600;
        for i in 1..n {
            let x0 = 3.0 * i as f64 / n as f64;
            let x1 = 3.0 - x0;
            if x1 > 0.0 {
                assert!(
                    utility(&[x0, x1]) <= ours + 1e-9,
                    "grid point ({x0}, {x1}) beats the solver"
                );
            }
        }
    }

    #[test]
    fn alpha_fair_large_alpha_approaches_maxmin() {
        let net = two_link();
        let maxmin = maxmin_allocate(&net);
        let mut prev_min = 0.0;
        for &a in &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
            let params = FairnessParams::uniform(&net, Alpha::Finite(a));
            let alloc = alpha_fair_allocate(&net, &params).unwrap();
            assert!(
                alloc.min_rate() >= prev_min - 1e-7,
                "min rate not monotone at alpha = {a}"
            );
            prev_min = alloc.min_rate();
        }
        let params = FairnessParams::uniform(&net, Alpha::Finite(64.0));
        let alloc = alpha_fair_allocate(&net, &params).unwrap();
        let linf = alloc
            .rates
            .iter()
            .zip(&maxmin.rates)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(linf < 1e-2, "L-inf distance to max-min at alpha = 64: {linf}");
    }

    #[test]
    fn alpha_fair_two_link_proportional_matches_closed_form() {
        // alpha = 1, unit weights on the two-link network: p1 = sqrt(7) - 1
        // from the KKT system, so x_A = 1/p1, x_B = 1 - x_A, x_C = 0.5 + x_A.
        let net = two_link();
        let params = FairnessParams::uniform(&net, Alpha::Finite(1.0));
        let alloc = alpha_fair_allocate_with(
            &net,
            &params,
            SolverOptions { tolerance: 1e-12, ..Default::default() },
        )
        .unwrap();
        let p1 = 7.0f64.sqrt() - 1.0;
        let xa = 1.0 / p1;
        assert!((alloc.rates[0] - xa).abs() < 1e-9, "{} vs {xa}", alloc.rates[0]);
        assert!((alloc.rates[1] - (1.0 - xa)).abs() < 1e-9);
        assert!((alloc.rates[2] - (0.5 + xa)).abs() < 1e-9);
    }

    #[test]
    fn alpha_fair_maxmin_routes_to_water_filling() {
        let net = two_link();
        let params = FairnessParams::uniform(&net, Alpha::MaxMin);
        let alloc = alpha_fair_allocate(&net, &params).unwrap();
        assert_eq!(alloc.rates, maxmin_allocate(&net).rates);
    }

    #[test]
    fn proportional_fairness_check_examples() {
        // Identity candidate passes with aggregate change exactly 0.
        assert!(check_proportional_fairness(
            &[0.5, 0.5],
            &[vec![0.5, 0.5]],
            PROPORTIONAL_FAIRNESS_TOL
        )
        .unwrap());
        // x = (0.9, 0.1) on a unit link is not proportionally fair:
        // candidate (0.5, 0.5) gives -0.444 + 4.0 > 0.
        assert!(!check_proportional_fairness(
            &[0.9, 0.1],
            &[vec![0.5, 0.5]],
            PROPORTIONAL_FAIRNESS_TOL
        )
        .unwrap());
        // Zero rate is a domain error.
        assert!(check_proportional_fairness(&[0.5, 0.0], &[], 0.0).is_err());
    }

    #[test]
    fn proportional_fair_point_passes_random_candidates() {
        use rand::{Rng, SeedableRng};
        let net = two_link();
        let params = FairnessParams::uniform(&net, Alpha::Finite(1.0));
        let alloc = alpha_fair_allocate_with(
            &net,
            &params,
            SolverOptions { tolerance: 1e-12, ..Default::default() },
        )
        .unwrap();

        let incidence = crate::topology::build_incidence(&net);
        let caps = net.capacities();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let mut candidates = Vec::new();
        while candidates.len() < 1000 {
            let dir: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..1.0)).collect();
            let loads = incidence.link_loads(&dir);
            let scale: f64 = loads
                .iter()
                .zip(&caps)
                .map(|(y, c)| c / y)
                .fold(f64::INFINITY, f64::min);
            let shrink = rng.gen_range(0.2..1.0);
            let x: Vec<f64> = dir.iter().map(|v| v * scale * shrink).collect();
            candidates.push(x);
        }
        assert!(check_proportional_fairness(
            &alloc.rates,
            &candidates,
            PROPORTIONAL_FAIRNESS_TOL
        )
        .unwrap());
    }

    #[test]
    fn tcp_fair_preset() {
        let net = Network::new(
            vec![Link::new("L", 1.0)],
            vec![Route::new("r", vec!["L".into()], 0.6, 0.4)],
        )
        .unwrap();
        let params = FairnessParams::tcp_fair(&net).unwrap();
        assert_eq!(params.alpha, Alpha::Finite(2.0));
        assert!((params.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tcp_fair_rejects_zero_rtt() {
        let net = single_link(1.0, 1);
        assert!(matches!(
            FairnessParams::tcp_fair(&net),
            Err(FairnessError::ZeroRtt { .. })
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn demand_decreasing_in_price(
                w in 0.1f64..10.0,
                alpha in 0.25f64..8.0,
                p in 0.05f64..20.0,
                bump in 0.01f64..2.0,
            ) {
                let lo = demand(p + bump, w, alpha).unwrap();
                let hi = demand(p, w, alpha).unwrap();
                prop_assert!(lo < hi);
            }

            #[test]
            fn demand_increasing_in_willingness(
                w in 0.1f64..10.0,
                alpha in 0.25f64..8.0,
                p in 0.05f64..20.0,
                bump in 0.01f64..2.0,
            ) {
                let lo = demand(p, w, alpha).unwrap();
                let hi = demand(p, w + bump, alpha).unwrap();
                prop_assert!(hi > lo);
            }

            #[test]
            fn single_link_closed_form(
                capacity in 0.2f64..8.0,
                alpha in 0.5f64..8.0,
                weights in proptest::collection::vec(0.2f64..5.0, 1..4),
            ) {
                let net = single_link(capacity, weights.len());
                let params = FairnessParams { alpha: Alpha::Finite(alpha), weights: weights.clone() };
                let alloc = alpha_fair_allocate(&net, &params).unwrap();
                let sum: f64 = weights.iter().map(|w| w.powf(1.0 / alpha)).sum();
                for (r, &w) in weights.iter().enumerate() {
                    let expect = w.powf(1.0 / alpha) * capacity / sum;
                    prop_assert!(
                        (alloc.rates[r] - expect).abs() < 1e-6 * capacity.max(1.0),
                        "route {}: {} vs {}", r, alloc.rates[r], expect
                    );
                }
            }

            #[test]
            fn incidence_feasibility_of_solver_output(
                alpha in 0.5f64..16.0,
            ) {
                let net = two_link();
                let params = FairnessParams::uniform(&net, Alpha::Finite(alpha));
                let alloc = alpha_fair_allocate(&net, &params).unwrap();
                let loads = crate::topology::build_incidence(&net).link_loads(&alloc.rates);
                for (y, c) in loads.iter().zip(net.capacities()) {
                    prop_assert!(*y <= c * (1.0 + 1e-7));
                }
                for &x in &alloc.rates {
                    prop_assert!(x > 0.0);
                }
            }
        }
    }
}
