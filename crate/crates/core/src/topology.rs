//! Multi-link, multi-route network topology.
//!
//! A [`Network`] is a set of capacitated [`Link`]s and a set of [`Route`]s,
//! each route an ordered list of links with directional propagation delays.
//! The incidence structure derived here ([`build_incidence`]) is what the
//! allocation and fluid-model modules consume.
//!
//! Rates and capacities are packets/second; delays are seconds. Networks
//! are immutable after construction and safe to share across concurrent
//! simulations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque link identifier. Matrix row order follows declaration order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub String);

/// Opaque route identifier. Matrix column order follows declaration order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RouteId(pub String);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for RouteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<&str> for LinkId {
    fn from(s: &str) -> Self {
        LinkId(s.to_owned())
    }
}

impl From<&str> for RouteId {
    fn from(s: &str) -> Self {
        RouteId(s.to_owned())
    }
}

/// A capacitated link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    /// Capacity in packets/second; must be positive.
    pub capacity: f64,
}

impl Link {
    pub fn new(id: impl Into<LinkId>, capacity: f64) -> Self {
        Link { id: id.into(), capacity }
    }
}

/// A route: an ordered, nonempty list of links plus propagation delays.
///
/// Delays are carried in two forms. The per-link maps hold the forward
/// delay from the route's origin to each link and the return delay from
/// each link back to the origin. The scalar `forward_delay`/`backward_delay`
/// pair is the single-path aggregate used by the single-link models; the
/// round-trip time is their sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub id: RouteId,
    pub links: Vec<LinkId>,
    /// Forward propagation delay from the route origin to each link (seconds).
    pub forward_delay_per_link: BTreeMap<LinkId, f64>,
    /// Return delay from each link back to the route origin (seconds).
    pub return_delay_per_link: BTreeMap<LinkId, f64>,
    /// Aggregate forward (origin -> destination) delay in seconds.
    pub forward_delay: f64,
    /// Aggregate backward (destination -> origin) delay in seconds.
    pub backward_delay: f64,
}

impl Route {
    /// Builds a route with the given aggregate delays and zero per-link delays.
    pub fn new(
        id: impl Into<RouteId>,
        links: Vec<LinkId>,
        forward_delay: f64,
        backward_delay: f64,
    ) -> Self {
        let zeros: BTreeMap<LinkId, f64> = links.iter().map(|l| (l.clone(), 0.0)).collect();
        Route {
            id: id.into(),
            links,
            forward_delay_per_link: zeros.clone(),
            return_delay_per_link: zeros,
            forward_delay,
            backward_delay,
        }
    }

    pub fn with_forward_delays(mut self, delays: BTreeMap<LinkId, f64>) -> Self {
        self.forward_delay_per_link = delays;
        self
    }

    pub fn with_return_delays(mut self, delays: BTreeMap<LinkId, f64>) -> Self {
        self.return_delay_per_link = delays;
        self
    }

    /// Round-trip time: the sum of forward and backward delay.
    pub fn rtt(&self) -> f64 {
        self.forward_delay + self.backward_delay
    }
}

/// A single invariant violation, naming the offending entity and rule.
///
/// Violations are data, not faults: [`validate`] collects them without
/// failing, and constructors reject inputs that produce any.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Violation {
    /// A network needs at least one link.
    NoLinks,
    /// A network needs at least one route.
    NoRoutes,
    /// Link capacity must be positive and finite.
    NonPositiveCapacity { link: LinkId, capacity: f64 },
    /// Link ids must be unique within a network.
    DuplicateLinkId { link: LinkId },
    /// Route ids must be unique within a network.
    DuplicateRouteId { route: RouteId },
    /// A route must traverse at least one link.
    EmptyRoute { route: RouteId },
    /// A route references a link id not present in the network.
    DanglingLink { route: RouteId, link: LinkId },
    /// A route lists the same link twice.
    RepeatedLink { route: RouteId, link: LinkId },
    /// A delay is negative or non-finite.
    NegativeDelay { route: RouteId, field: String, value: f64 },
    /// A per-link delay map's keys differ from the route's link set.
    DelayKeysMismatch { route: RouteId, field: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoLinks => write!(f, "network has no links"),
            Violation::NoRoutes => write!(f, "network has no routes"),
            Violation::NonPositiveCapacity { link, capacity } => {
                write!(f, "link {link}: capacity must be positive, got {capacity}")
            }
            Violation::DuplicateLinkId { link } => write!(f, "duplicate link id {link}"),
            Violation::DuplicateRouteId { route } => write!(f, "duplicate route id {route}"),
            Violation::EmptyRoute { route } => write!(f, "route {route} traverses no links"),
            Violation::DanglingLink { route, link } => {
                write!(f, "route {route}: dangling reference to unknown link {link}")
            }
            Violation::RepeatedLink { route, link } => {
                write!(f, "route {route}: link {link} listed more than once")
            }
            Violation::NegativeDelay { route, field, value } => {
                write!(f, "route {route}: {field} must be >= 0 and finite, got {value}")
            }
            Violation::DelayKeysMismatch { route, field } => {
                write!(f, "route {route}: {field} keys must be exactly the route's links")
            }
        }
    }
}

/// Error produced when constructing a network from invalid parts.
#[derive(Debug, Error)]
#[error("invalid network: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct TopologyError {
    pub violations: Vec<Violation>,
}

/// An immutable multi-link, multi-route network.
///
/// Construction enforces every type invariant; see [`validate`] for the
/// full rule list. Fields are private so a held `Network` is always valid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Network {
    links: Vec<Link>,
    routes: Vec<Route>,
}

impl Network {
    /// Validates the parts and builds a network, or reports every violation.
    pub fn new(links: Vec<Link>, routes: Vec<Route>) -> Result<Self, TopologyError> {
        let violations = validate(&links, &routes);
        if violations.is_empty() {
            Ok(Network { links, routes })
        } else {
            Err(TopologyError { violations })
        }
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    /// Position of a link id in declaration order.
    pub fn link_index(&self, id: &LinkId) -> Option<usize> {
        self.links.iter().position(|l| &l.id == id)
    }

    /// Position of a route id in declaration order.
    pub fn route_index(&self, id: &RouteId) -> Option<usize> {
        self.routes.iter().position(|r| &r.id == id)
    }

    /// Link capacities in declaration order.
    pub fn capacities(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.capacity).collect()
    }

    /// Re-checks the invariants; empty by construction.
    pub fn validate(&self) -> Vec<Violation> {
        validate(&self.links, &self.routes)
    }
}

/// Checks every type invariant over raw parts and returns the violations.
///
/// An empty list means the parts form a valid network. Callable on
/// arbitrary input; nothing here faults.
pub fn validate(links: &[Link], routes: &[Route]) -> Vec<Violation> {
    let mut violations = Vec::new();

    if links.is_empty() {
        violations.push(Violation::NoLinks);
    }
    if routes.is_empty() {
        violations.push(Violation::NoRoutes);
    }

    let mut seen_links = BTreeSet::new();
    for link in links {
        if !(link.capacity > 0.0) || !link.capacity.is_finite() {
            violations.push(Violation::NonPositiveCapacity {
                link: link.id.clone(),
                capacity: link.capacity,
            });
        }
        if !seen_links.insert(&link.id) {
            violations.push(Violation::DuplicateLinkId { link: link.id.clone() });
        }
    }

    let link_ids: BTreeSet<&LinkId> = links.iter().map(|l| &l.id).collect();
    let mut seen_routes = BTreeSet::new();
    for route in routes {
        if !seen_routes.insert(&route.id) {
            violations.push(Violation::DuplicateRouteId { route: route.id.clone() });
        }
        if route.links.is_empty() {
            violations.push(Violation::EmptyRoute { route: route.id.clone() });
        }
        let mut on_route = BTreeSet::new();
        for link in &route.links {
            if !link_ids.contains(link) {
                violations.push(Violation::DanglingLink {
                    route: route.id.clone(),
                    link: link.clone(),
                });
            }
            if !on_route.insert(link) {
                violations.push(Violation::RepeatedLink {
                    route: route.id.clone(),
                    link: link.clone(),
                });
            }
        }

        for (field, value) in [
            ("forward_delay", route.forward_delay),
            ("backward_delay", route.backward_delay),
        ] {
            if !(value >= 0.0) || !value.is_finite() {
                violations.push(Violation::NegativeDelay {
                    route: route.id.clone(),
                    field: field.to_owned(),
                    value,
                });
            }
        }

        for (field, map) in [
            ("forward_delay_per_link", &route.forward_delay_per_link),
            ("return_delay_per_link", &route.return_delay_per_link),
        ] {
            let keys: BTreeSet<&LinkId> = map.keys().collect();
            let expected: BTreeSet<&LinkId> = route.links.iter().collect();
            if keys != expected {
                violations.push(Violation::DelayKeysMismatch {
                    route: route.id.clone(),
                    field: field.to_owned(),
                });
            }
            for (link, &value) in map {
                if !(value >= 0.0) || !value.is_finite() {
                    violations.push(Violation::NegativeDelay {
                        route: route.id.clone(),
                        field: format!("{field}[{link}]"),
                        value,
                    });
                }
            }
        }
    }

    violations
}

/// Link-by-route 0/1 incidence matrix.
///
/// Row order matches the network's link declaration order, column order the
/// route declaration order; entry (l, r) is 1 iff route r traverses link l.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncidenceMatrix {
    n_links: usize,
    n_routes: usize,
    data: Vec<u8>,
}

impl IncidenceMatrix {
    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn n_routes(&self) -> usize {
        self.n_routes
    }

    pub fn entry(&self, link: usize, route: usize) -> u8 {
        self.data[link * self.n_routes + route]
    }

    /// Number of links traversed by the given route (column sum).
    pub fn column_sum(&self, route: usize) -> usize {
        (0..self.n_links).map(|l| usize::from(self.entry(l, route))).sum()
    }

    /// Aggregate per-link load `y = A x` for per-route rates `x`.
    pub fn link_loads(&self, rates: &[f64]) -> Vec<f64> {
        assert_eq!(rates.len(), self.n_routes, "rate vector length mismatch");
        (0..self.n_links)
            .map(|l| {
                (0..self.n_routes)
                    .filter(|&r| self.entry(l, r) == 1)
                    .map(|r| rates[r])
                    .sum()
            })
            .collect()
    }

    /// Dense rows, mostly for tests and display.
    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.n_links)
            .map(|l| (0..self.n_routes).map(|r| self.entry(l, r)).collect())
            .collect()
    }
}

/// Builds the incidence matrix of a valid network.
pub fn build_incidence(network: &Network) -> IncidenceMatrix {
    let n_links = network.links().len();
    let n_routes = network.routes().len();
    let mut data = vec![0u8; n_links * n_routes];
    for (r, route) in network.routes().iter().enumerate() {
        for link in &route.links {
            let l = network.link_index(link).expect("validated route link");
            data[l * n_routes + r] = 1;
        }
    }
    IncidenceMatrix { n_links, n_routes, data }
}
