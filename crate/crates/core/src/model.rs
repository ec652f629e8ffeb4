//! Problem data for disaggregation instances.
//!
//! An instance describes `N` agents over a horizon of `T` periods. Agent `n`
//! accepts any profile `x_n ∈ R^T` with per-period bounds
//! `lower[n][t] ≤ x_n[t] ≤ upper[n][t]` and a fixed total
//! `Σ_t x_n[t] = demand[n]`. The operator wants per-period totals
//! `Σ_n x_n[t] = p[t]` for an aggregate allocation `p`.
//!
//! Besides the data types this module carries the instance generators used
//! throughout the test suites and the CLI: the four-period worked example
//! with a known cutting-plane trajectory, a randomized generator for
//! property tests, and a unit-commitment-flavored generator whose aggregate
//! cost is a small startup/piecewise-generation model.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Per-period totals handed to (or produced by) the aggregate side.
pub type Allocation = Vec<f64>;

/// Default desk-scale campaign shape: small enough that every acceptance
/// suite finishes in seconds, large enough to exercise all code paths.
pub const DESK_AGENTS: usize = 16;
pub const DESK_HORIZON: usize = 6;

/// Counter-based stream RNG: draws for stream `s` are independent of how
/// many values other streams consumed, so per-agent randomness is stable
/// under reordering and parallel execution.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// An `N × T` matrix of per-agent profiles, row `n` belonging to agent `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMatrix {
    pub rows: Vec<Vec<f64>>,
}

impl ProfileMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        ProfileMatrix { rows }
    }

    pub fn zeros(n_agents: usize, horizon: usize) -> Self {
        ProfileMatrix {
            rows: vec![vec![0.0; horizon]; n_agents],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.rows.len()
    }

    pub fn horizon(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Per-period totals `Σ_n x_n[t]`.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.horizon()];
        for row in &self.rows {
            for (acc, v) in out.iter_mut().zip(row) {
                *acc += v;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }
}

/// Necessary aggregate-side conditions: the per-period totals of any
/// disaggregable allocation lie in `[col_lower, col_upper]` and sum to
/// `sum_target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateBox {
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    pub sum_target: f64,
}

impl AggregateBox {
    pub fn horizon(&self) -> usize {
        self.col_lower.len()
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        if p.len() != self.horizon() {
            return false;
        }
        let sum: f64 = p.iter().sum();
        (sum - self.sum_target).abs() <= tol
            && p.iter()
                .zip(self.col_lower.iter().zip(&self.col_upper))
                .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }
}

/// Parameters of the aggregate-side generation-scheduling cost model: a
/// single dispatchable generator with piecewise-linear marginal cost,
/// minimum/maximum output while committed, a fixed running cost, a startup
/// cost, and a free solar profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrogridSpec {
    pub horizon: usize,
    /// Number of cost pieces `K`.
    pub n_breakpoints: usize,
    /// Piece boundaries `θ_0 = 0 < θ_1 < … < θ_K = p_max`, length `K + 1`.
    pub theta: Vec<f64>,
    /// Marginal cost per piece, strictly increasing, length `K`.
    pub marginal_cost: Vec<f64>,
    /// Fixed per-period cost while the generator is on.
    pub alpha1: f64,
    /// Startup cost charged when the generator switches on.
    pub start_cost: f64,
    /// Minimum output while on.
    pub p_min: f64,
    /// Maximum output while on.
    pub p_max: f64,
    /// Free generation available per period.
    pub pv: Vec<f64>,
    /// Fleet scaling factor the sizing parameters were multiplied by.
    pub scale: f64,
}

impl MicrogridSpec {
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.theta.len() != self.n_breakpoints + 1
            || self.marginal_cost.len() != self.n_breakpoints
            || self.pv.len() != self.horizon
        {
            out.push(Violation::Shape(
                "generator spec lengths disagree with horizon/pieces".into(),
            ));
            return out;
        }
        if self.theta[0] != 0.0 {
            out.push(Violation::Shape("theta must start at zero".into()));
        }
        if self
            .theta
            .windows(2)
            .any(|w| w[1] <= w[0] || !w[1].is_finite())
        {
            out.push(Violation::Shape("theta must be strictly increasing".into()));
        }
        if (self.theta[self.n_breakpoints] - self.p_max).abs() > 1e-9 * (1.0 + self.p_max.abs()) {
            out.push(Violation::Shape("theta must end at p_max".into()));
        }
        if self.marginal_cost.windows(2).any(|w| w[1] <= w[0]) {
            out.push(Violation::Shape(
                "marginal costs must be strictly increasing".into(),
            ));
        }
        if self.p_min < 0.0 || self.p_min > self.p_max {
            out.push(Violation::Shape("need 0 ≤ p_min ≤ p_max".into()));
        }
        if self.pv.iter().any(|v| !v.is_finite() || *v < 0.0) {
            out.push(Violation::Shape("pv must be finite and nonnegative".into()));
        }
        out
    }
}

/// A disaggregation instance: per-agent box bounds and totals, plus an
/// optional aggregate-side generation cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportInstance {
    pub n_agents: usize,
    pub horizon: usize,
    /// `N × T` per-period lower bounds.
    pub lower: Vec<Vec<f64>>,
    /// `N × T` per-period upper bounds.
    pub upper: Vec<Vec<f64>>,
    /// Per-agent totals, length `N`.
    pub demand: Vec<f64>,
    /// Aggregate cost model for generation-scheduling instances.
    pub microgrid: Option<MicrogridSpec>,
}

/// One reason an instance is malformed or an agent set is empty.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    NonFinite { agent: usize, period: usize },
    BoundOrder { agent: usize, period: usize },
    DemandBelowBounds { agent: usize, demand: f64, min: f64 },
    DemandAboveBounds { agent: usize, demand: f64, max: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "shape: {msg}"),
            Violation::NonFinite { agent, period } => {
                write!(f, "agent {agent}, period {period}: non-finite bound")
            }
            Violation::BoundOrder { agent, period } => {
                write!(f, "agent {agent}, period {period}: lower bound above upper")
            }
            Violation::DemandBelowBounds { agent, demand, min } => write!(
                f,
                "agent {agent}: demand {demand} below reachable minimum {min}"
            ),
            Violation::DemandAboveBounds { agent, demand, max } => write!(
                f,
                "agent {agent}: demand {demand} above reachable maximum {max}"
            ),
        }
    }
}

impl TransportInstance {
    /// Structural and per-agent nonemptiness checks. An empty report means
    /// every agent set is a nonempty box-with-budget polytope.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.n_agents == 0 || self.horizon < 2 {
            out.push(Violation::Shape(
                "need at least one agent and a horizon of two periods".into(),
            ));
        }
        if self.lower.len() != self.n_agents
            || self.upper.len() != self.n_agents
            || self.demand.len() != self.n_agents
            || self.lower.iter().any(|r| r.len() != self.horizon)
            || self.upper.iter().any(|r| r.len() != self.horizon)
        {
            out.push(Violation::Shape("bound/demand dimensions disagree".into()));
            return out;
        }
        for n in 0..self.n_agents {
            let mut broken = false;
            for t in 0..self.horizon {
                let (lo, hi) = (self.lower[n][t], self.upper[n][t]);
                if !lo.is_finite() || !hi.is_finite() {
                    out.push(Violation::NonFinite {
                        agent: n,
                        period: t,
                    });
                    broken = true;
                } else if lo > hi {
                    out.push(Violation::BoundOrder {
                        agent: n,
                        period: t,
                    });
                    broken = true;
                }
            }
            if broken || !self.demand[n].is_finite() {
                continue;
            }
            let min: f64 = self.lower[n].iter().sum();
            let max: f64 = self.upper[n].iter().sum();
            let slack = 1e-12 * (1.0 + min.abs().max(max.abs()));
            if self.demand[n] < min - slack {
                out.push(Violation::DemandBelowBounds {
                    agent: n,
                    demand: self.demand[n],
                    min,
                });
            } else if self.demand[n] > max + slack {
                out.push(Violation::DemandAboveBounds {
                    agent: n,
                    demand: self.demand[n],
                    max,
                });
            }
        }
        if let Some(spec) = &self.microgrid {
            out.extend(spec.validate());
            if spec.horizon != self.horizon {
                out.push(Violation::Shape(
                    "generator spec horizon disagrees with instance horizon".into(),
                ));
            }
        }
        out
    }

    /// Aggregate necessary conditions induced by the agent boxes: column
    /// bound sums and the total demand.
    pub fn aggregate_box(&self) -> AggregateBox {
        let mut col_lower = vec![0.0; self.horizon];
        let mut col_upper = vec![0.0; self.horizon];
        for n in 0..self.n_agents {
            for t in 0..self.horizon {
                col_lower[t] += self.lower[n][t];
                col_upper[t] += self.upper[n][t];
            }
        }
        AggregateBox {
            col_lower,
            col_upper,
            sum_target: self.demand.iter().sum(),
        }
    }

    /// Lower-bound matrix, the default starting point for the projection
    /// iteration.
    pub fn lower_matrix(&self) -> ProfileMatrix {
        ProfileMatrix::new(self.lower.clone())
    }

    /// Instance with agent `perm[i]` of `self` moved to position `i`.
    pub fn permuted(&self, perm: &[usize]) -> TransportInstance {
        assert_eq!(perm.len(), self.n_agents, "permutation length");
        TransportInstance {
            n_agents: self.n_agents,
            horizon: self.horizon,
            lower: perm.iter().map(|&n| self.lower[n].clone()).collect(),
            upper: perm.iter().map(|&n| self.upper[n].clone()).collect(),
            demand: perm.iter().map(|&n| self.demand[n]).collect(),
            microgrid: self.microgrid.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<TransportInstance, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Three agents, four periods, zero lower bounds; the running example whose
/// cutting-plane trajectory is pinned in the golden tests.
pub fn toy_instance() -> TransportInstance {
    TransportInstance {
        n_agents: 3,
        horizon: 4,
        lower: vec![vec![0.0; 4]; 3],
        upper: vec![
            vec![0.8, 0.2, 0.7, 0.1],
            vec![0.5, 0.1, 0.3, 0.6],
            vec![0.1, 0.1, 0.7, 0.2],
        ],
        demand: vec![1.8, 0.4, 1.1],
        microgrid: None,
    }
}

/// Randomized instance for property tests: unit-scale boxes with a demand
/// drawn strictly inside the reachable range, so every agent set is
/// nonempty. Deterministic per seed.
pub fn random_instance(n_agents: usize, horizon: usize, seed: u64) -> TransportInstance {
    let mut lower = Vec::with_capacity(n_agents);
    let mut upper = Vec::with_capacity(n_agents);
    let mut demand = Vec::with_capacity(n_agents);
    for n in 0..n_agents {
        let mut rng = stream_rng(seed, n as u64 + 1);
        let lo: Vec<f64> = (0..horizon).map(|_| rng.random_range(0.0..1.0)).collect();
        let hi: Vec<f64> = lo
            .iter()
            .map(|l| l + rng.random_range(0.0..1.0))
            .collect();
        let (min, max): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
        let u: f64 = rng.random();
        demand.push(min + u * (max - min));
        lower.push(lo);
        upper.push(hi);
    }
    TransportInstance {
        n_agents,
        horizon,
        lower,
        upper,
        demand,
        microgrid: None,
    }
}

/// Generation-scheduling campaign instance: agent boxes `U([0,10])` wide
/// plus `U([0,5])` headroom, demands uniform over the reachable range, and
/// a single generator sized by the fleet factor `κ = N / 20` with a solar
/// bump over daytime hours. Deterministic per seed; agent draws use
/// independent RNG streams.
pub fn microgrid_instance(n_agents: usize, horizon: usize, seed: u64) -> TransportInstance {
    let kappa = n_agents as f64 / 20.0;
    let mut lower = Vec::with_capacity(n_agents);
    let mut upper = Vec::with_capacity(n_agents);
    let mut demand = Vec::with_capacity(n_agents);
    for n in 0..n_agents {
        let mut rng = stream_rng(seed, n as u64 + 1);
        let lo: Vec<f64> = (0..horizon).map(|_| rng.random_range(0.0..10.0)).collect();
        let hi: Vec<f64> = lo
            .iter()
            .map(|l| l + rng.random_range(0.0..5.0))
            .collect();
        let (min, max): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
        let u: f64 = rng.random();
        demand.push(min + u * (max - min));
        lower.push(lo);
        upper.push(hi);
    }

    // Solar profile: a daytime cosine bump (hours 6..=20 of a 24-hour day)
    // restricted to the chosen horizon, with a small uniform jitter.
    let mut pv_rng = stream_rng(seed, 0);
    let pv: Vec<f64> = (1..=horizon)
        .map(|hour| {
            if (6..=20).contains(&hour) {
                let base = 50.0
                    * (1.0 - ((hour as f64 - 6.0) * 2.0 * std::f64::consts::PI / 16.0).cos());
                kappa * (base + pv_rng.random_range(0.0..10.0))
            } else {
                0.0
            }
        })
        .collect();

    let spec = MicrogridSpec {
        horizon,
        n_breakpoints: 3,
        theta: vec![0.0, 70.0 * kappa, 100.0 * kappa, 300.0 * kappa],
        marginal_cost: vec![0.2, 0.4, 0.5],
        alpha1: 4.0,
        start_cost: 15.0,
        p_min: 50.0 * kappa,
        p_max: 300.0 * kappa,
        pv,
        scale: kappa,
    };

    TransportInstance {
        n_agents,
        horizon,
        lower,
        upper,
        demand,
        microgrid: Some(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_aggregate_box_matches_hand_sums() {
        let inst = toy_instance();
        assert!(inst.validate().is_empty());
        let b = inst.aggregate_box();
        assert_eq!(b.col_lower, vec![0.0; 4]);
        let want = [1.4, 0.4, 1.7, 0.9];
        for (got, want) in b.col_upper.iter().zip(want.iter()) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((b.sum_target - 3.3).abs() < 1e-12);
    }

    #[test]
    fn validate_reports_each_defect_with_coordinates() {
        let mut inst = toy_instance();
        inst.upper[1][2] = -0.5; // below the zero lower bound
        inst.demand[2] = 99.0; // unreachable
        let report = inst.validate();
        assert!(report.contains(&Violation::BoundOrder {
            agent: 1,
            period: 2
        }));
        assert!(report
            .iter()
            .any(|v| matches!(v, Violation::DemandAboveBounds { agent: 2, .. })));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let inst = microgrid_instance(4, 6, 1234);
        let text = inst.to_json();
        let back = TransportInstance::from_json(&text).unwrap();
        assert_eq!(inst, back, "serialization must round-trip bit-exactly");
        // Field names are part of the on-disk contract.
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["n_agents", "horizon", "lower", "upper", "demand", "microgrid"] {
            assert!(value.get(key).is_some(), "missing field {key}");
        }
    }

    #[test]
    fn plain_instances_serialize_null_microgrid() {
        let value: serde_json::Value = serde_json::from_str(&toy_instance().to_json()).unwrap();
        assert!(value.get("microgrid").unwrap().is_null());
    }

    #[test]
    fn generators_are_deterministic_and_valid() {
        let a = microgrid_instance(16, 24, 42);
        let b = microgrid_instance(16, 24, 42);
        assert_eq!(a, b);
        assert!(a.validate().is_empty(), "report: {:?}", a.validate());
        assert_ne!(a, microgrid_instance(16, 24, 43));

        for seed in 0..20 {
            let inst = random_instance(5, 6, seed);
            assert!(inst.validate().is_empty());
        }
    }

    #[test]
    fn agent_draws_are_stream_independent() {
        // Agent 2's block must not depend on how many agents exist.
        let small = microgrid_instance(3, 6, 7);
        let large = microgrid_instance(8, 6, 7);
        assert_eq!(small.lower[2], large.lower[2]);
        assert_eq!(small.upper[2], large.upper[2]);
        assert_eq!(small.demand[2], large.demand[2]);
    }

    #[test]
    fn pv_window_respects_horizon() {
        let short = microgrid_instance(16, 6, 9);
        let pv = &short.microgrid.as_ref().unwrap().pv;
        // Hours 1..=5 precede the solar window; hour 6 is inside it.
        assert!(pv[..5].iter().all(|v| *v == 0.0));
        assert!(pv[5] > 0.0);

        let day = microgrid_instance(16, 24, 9);
        let pv = &day.microgrid.as_ref().unwrap().pv;
        assert!(pv[20..].iter().all(|v| *v == 0.0), "hours 21..24 are dark");
        let kappa = 16.0 / 20.0;
        // Peak of the cosine bump lands at hour 14: 50·(1 − cos(π)) = 100.
        assert!(pv[13] >= 100.0 * kappa && pv[13] <= 110.0 * kappa);
    }

    #[test]
    fn permuted_instances_share_the_aggregate_box() {
        let inst = random_instance(5, 4, 77);
        let perm = [3, 1, 4, 0, 2];
        let shuffled = inst.permuted(&perm);
        assert!(shuffled.validate().is_empty());
        let (a, b) = (inst.aggregate_box(), shuffled.aggregate_box());
        for t in 0..4 {
            assert!((a.col_lower[t] - b.col_lower[t]).abs() < 1e-12);
            assert!((a.col_upper[t] - b.col_upper[t]).abs() < 1e-12);
        }
        assert!((a.sum_target - b.sum_target).abs() < 1e-12);
    }

    #[test]
    fn column_sums_add_agent_rows() {
        let m = ProfileMatrix::new(vec![vec![1.0, 2.0], vec![0.5, -1.0]]);
        assert_eq!(m.column_sums(), vec![1.5, 1.0]);
        assert_eq!(m.n_agents(), 2);
        assert_eq!(m.horizon(), 2);
    }
}
