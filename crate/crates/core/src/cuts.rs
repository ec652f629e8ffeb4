//! Subset inequalities for disaggregation feasibility and the cutting
//! planes derived from them.
//!
//! An aggregate `p` is disaggregable iff for every proper nonempty period
//! set `T` the partial total `Σ_{t∈T} p_t` fits under the capacity the
//! fleet can actually move into `T`. For a fixed `T` the binding agent set
//! is computable agent by agent — an agent joins it exactly when its budget
//! cannot simultaneously fill its lower bounds outside `T` and its upper
//! bounds inside `T` — which yields the strongest right-hand side
//!
//! `rhs(T) = Σ_{n∈N} (E_n − Σ_{t∉T} lower − Σ_{t∈T} upper) + Σ_{t∈T} Σ_n upper`.
//!
//! [`hoffman_feasible`] enumerates all `2^T − 2` subsets (the oracle used
//! to cross-check everything else), while [`extract_cut`] reads a violated
//! subset straight off a stalled alternating-projection orbit: the periods
//! whose shift `ν_t` stays positive form `T`, and the orbit's own column
//! sums give the exact right-hand side.

use crate::apm::ApmResult;
use crate::model::TransportInstance;
use crate::projections::{sample_block_point, AgentBlock, Halfspace};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Horizon cap for the exhaustive subset oracle.
pub const MAX_ENUM_HORIZON: usize = 20;

/// Default multiple of the convergence threshold separating "positive"
/// shift coordinates from noise when reading a cut off an orbit.
pub const DEFAULT_THRESHOLD_B: f64 = 10.0;

/// Where a cut came from: read off a projection orbit or produced by the
/// exhaustive oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CutProvenance {
    #[default]
    Apm,
    Oracle,
}

/// The inequality `Σ_{t∈time_set} p_t ≤ rhs`, valid for every
/// disaggregable allocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoffmanCut {
    /// Proper nonempty subset of periods, sorted ascending.
    pub time_set: Vec<usize>,
    pub rhs: f64,
    #[serde(skip)]
    pub provenance: CutProvenance,
}

impl PartialEq for HoffmanCut {
    /// Content equality: the inequality itself, not its origin.
    fn eq(&self, other: &Self) -> bool {
        self.time_set == other.time_set && self.rhs == other.rhs
    }
}

impl HoffmanCut {
    /// Amount by which `p` breaks the cut; positive means violated.
    pub fn violation(&self, p: &[f64]) -> f64 {
        self.time_set.iter().map(|&t| p[t]).sum::<f64>() - self.rhs
    }

    pub fn holds_for(&self, p: &[f64], tol: f64) -> bool {
        self.violation(p) <= tol
    }

    /// The cut as a `normal · p ≤ rhs` halfspace over allocations.
    pub fn halfspace(&self, horizon: usize) -> Halfspace {
        let mut normal = vec![0.0; horizon];
        for &t in &self.time_set {
            normal[t] = 1.0;
        }
        Halfspace::new(normal, self.rhs)
    }
}

/// A general separating plane `lambda0 · p ≥ beta`, valid for every
/// disaggregable allocation and scaled so that `‖lambda0‖∞ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCut {
    pub lambda0: Vec<f64>,
    pub beta: f64,
}

impl LambdaCut {
    /// Build from a limiting shift `ν` and the aggregate support price
    /// `M = Σ_n max{ν·x : x ∈ X_n}`: every disaggregable allocation
    /// satisfies `ν·p ≤ M`, i.e. `(−ν)·p ≥ −M`.
    pub fn from_shift(nu: &[f64], price: f64) -> Self {
        let scale = nu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(
            scale > 0.0 && scale.is_finite(),
            "a zero shift separates nothing"
        );
        LambdaCut {
            lambda0: nu.iter().map(|v| -v / scale).collect(),
            beta: -price / scale,
        }
    }

    /// Amount by which `p` breaks the cut; positive means violated.
    pub fn violation(&self, p: &[f64]) -> f64 {
        self.beta - self.lambda0.iter().zip(p).map(|(l, q)| l * q).sum::<f64>()
    }

    pub fn holds_for(&self, p: &[f64], tol: f64) -> bool {
        self.violation(p) <= tol
    }

    /// The cut as a `normal · p ≤ rhs` halfspace over allocations.
    pub fn halfspace(&self) -> Halfspace {
        Halfspace::new(self.lambda0.iter().map(|v| -v).collect(), -self.beta)
    }
}

/// Verdict of the exhaustive subset oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibilityReport {
    Feasible,
    /// `Σ_t p_t` does not match the fleet's total demand, so no subset
    /// reasoning applies.
    SumMismatch { total: f64, demand_total: f64 },
    /// The most violated subset inequality: `slack = rhs − Σ_{t∈T} p_t`
    /// is the most negative slack found.
    Violated {
        time_set: Vec<usize>,
        agent_set: Vec<usize>,
        slack: f64,
    },
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        matches!(self, FeasibilityReport::Feasible)
    }
}

/// Binding agent set and strongest right-hand side for a fixed period set.
///
/// The minimization over agent sets is separable: agent `n` tightens the
/// inequality exactly when `E_n − Σ_{t∉T} lower_{n,t} − Σ_{t∈T} upper_{n,t}`
/// is strictly negative (ties leave the agent out).
pub fn strongest_agent_set(inst: &TransportInstance, time_set: &[usize]) -> (Vec<usize>, f64) {
    assert!(
        !time_set.is_empty() && time_set.len() < inst.horizon,
        "period set must be a proper nonempty subset"
    );
    let in_set = membership(time_set, inst.horizon);
    let mut agents = Vec::new();
    let mut rhs = 0.0;
    for n in 0..inst.n_agents {
        let mut term = inst.demand[n];
        for t in 0..inst.horizon {
            if in_set[t] {
                term -= inst.upper[n][t];
                rhs += inst.upper[n][t];
            } else {
                term -= inst.lower[n][t];
            }
        }
        if term < 0.0 {
            agents.push(n);
            rhs += term;
        }
    }
    (agents, rhs)
}

/// Exhaustive feasibility oracle: checks every proper nonempty period
/// subset with its strongest agent set and reports the worst violation.
/// Only usable for horizons up to [`MAX_ENUM_HORIZON`].
pub fn hoffman_feasible(inst: &TransportInstance, p: &[f64], tol: f64) -> FeasibilityReport {
    let horizon = inst.horizon;
    assert!(
        horizon <= MAX_ENUM_HORIZON,
        "horizon {horizon} too large for subset enumeration (max {MAX_ENUM_HORIZON})"
    );
    assert_eq!(p.len(), horizon, "allocation length");

    let total: f64 = p.iter().sum();
    let demand_total: f64 = inst.demand.iter().sum();
    if (total - demand_total).abs() > tol * (1.0 + demand_total.abs()) {
        return FeasibilityReport::SumMismatch {
            total,
            demand_total,
        };
    }

    // Per-agent partial sums reused across subsets: for a subset mask, the
    // agent term is E_n − Σ_all lower + Σ_{t∈T}(lower − upper).
    let lower_totals: Vec<f64> = inst.lower.iter().map(|r| r.iter().sum()).collect();

    let mut worst: Option<(u32, f64)> = None;
    let full: u32 = if horizon == 32 { u32::MAX } else { (1u32 << horizon) - 1 };
    for mask in 1..full {
        let mut rhs = 0.0;
        for n in 0..inst.n_agents {
            let mut term = inst.demand[n] - lower_totals[n];
            let mut m = mask;
            while m != 0 {
                let t = m.trailing_zeros() as usize;
                term += inst.lower[n][t] - inst.upper[n][t];
                rhs += inst.upper[n][t];
                m &= m - 1;
            }
            if term < 0.0 {
                rhs += term;
            }
        }
        let mut part = 0.0;
        let mut m = mask;
        while m != 0 {
            let t = m.trailing_zeros() as usize;
            part += p[t];
            m &= m - 1;
        }
        let slack = rhs - part;
        if slack < -tol && worst.as_ref().is_none_or(|(_, s)| slack < *s) {
            worst = Some((mask, slack));
        }
    }

    match worst {
        None => FeasibilityReport::Feasible,
        Some((mask, slack)) => {
            let time_set: Vec<usize> = (0..horizon).filter(|t| mask >> t & 1 == 1).collect();
            let (agent_set, _) = strongest_agent_set(inst, &time_set);
            FeasibilityReport::Violated {
                time_set,
                agent_set,
                slack,
            }
        }
    }
}

/// Read a cut off a settled alternating-projection orbit.
///
/// The period set collects the coordinates whose shift exceeds
/// `threshold_b · eps_cvg` (strictly; borderline coordinates are treated
/// as noise), and the right-hand side is the orbit's own partial column
/// total — exact once the orbit has settled. Returns `None` when the set
/// is empty or covers every period, which signals the caller to tighten
/// the convergence threshold instead.
pub fn extract_cut(
    result: &ApmResult,
    p: &[f64],
    threshold_b: f64,
    eps_cvg: f64,
) -> Option<HoffmanCut> {
    let horizon = result.multiplier.len();
    assert_eq!(p.len(), horizon, "allocation length");
    let cutoff = threshold_b * eps_cvg;
    let time_set: Vec<usize> = (0..horizon)
        .filter(|&t| result.multiplier[t] > cutoff)
        .collect();
    if time_set.is_empty() || time_set.len() == horizon {
        return None;
    }
    let sums = result.x_final.column_sums();
    let rhs: f64 = time_set.iter().map(|&t| sums[t]).sum();
    Some(HoffmanCut {
        time_set,
        rhs,
        provenance: CutProvenance::Apm,
    })
}

/// A random disaggregable allocation: the column sums of one feasible
/// profile per agent.
pub fn sample_disaggregable<R: Rng>(inst: &TransportInstance, rng: &mut R) -> Vec<f64> {
    let mut p = vec![0.0; inst.horizon];
    for n in 0..inst.n_agents {
        let block = AgentBlock::from_instance(inst, n);
        for (acc, v) in p.iter_mut().zip(sample_block_point(&block, rng)) {
            *acc += v;
        }
    }
    p
}

/// A random allocation satisfying only the aggregate necessary conditions
/// (column bounds and total); it may or may not be disaggregable.
pub fn sample_aggregate_candidate<R: Rng>(inst: &TransportInstance, rng: &mut R) -> Vec<f64> {
    let b = inst.aggregate_box();
    let block = AgentBlock {
        lower: b.col_lower,
        upper: b.col_upper,
        demand: b.sum_target,
    };
    sample_block_point(&block, rng)
}

/// Monte-Carlo soundness check: the cut must hold on `samples` fresh
/// disaggregable allocations (tolerance `1e-8`).
pub fn cut_is_valid<R: Rng>(
    cut: &HoffmanCut,
    inst: &TransportInstance,
    samples: usize,
    rng: &mut R,
) -> bool {
    (0..samples).all(|_| cut.holds_for(&sample_disaggregable(inst, rng), 1e-8))
}

/// Structure of a settled non-intersecting orbit, measured against the
/// instance bounds.
#[derive(Debug, Clone)]
pub struct FixedPointFacts {
    /// Periods with positive shift.
    pub time_set: Vec<usize>,
    /// Binding agents for that period set.
    pub agent_set: Vec<usize>,
    /// Max `|x − upper|` over shifted periods × non-binding agents
    /// (these coordinates must saturate their upper bounds).
    pub max_upper_gap: f64,
    /// Min `y − upper` over the same block (the aggregate side must
    /// strictly overshoot the bound).
    pub min_overshoot: f64,
    /// Max `|x − lower|` over unshifted periods × binding agents.
    pub max_lower_gap: f64,
    /// All four of `T`, its complement, `N`, its complement nonempty.
    pub sets_nonempty: bool,
}

impl FixedPointFacts {
    pub fn hold_within(&self, tol: f64) -> bool {
        self.sets_nonempty
            && self.max_upper_gap <= tol
            && self.max_lower_gap <= tol
            && self.min_overshoot > -tol
    }
}

/// Measure the saturation structure of a settled orbit on an instance
/// whose aggregate is not disaggregable. `tol` separates positive shift
/// coordinates from zero ones.
pub fn fixed_point_facts(
    result: &ApmResult,
    inst: &TransportInstance,
    tol: f64,
) -> FixedPointFacts {
    let horizon = inst.horizon;
    let time_set: Vec<usize> = (0..horizon)
        .filter(|&t| result.multiplier[t] > tol)
        .collect();
    let in_set = membership(&time_set, horizon);
    let (agent_set, _) = if time_set.is_empty() || time_set.len() == horizon {
        (Vec::new(), 0.0)
    } else {
        strongest_agent_set(inst, &time_set)
    };
    let binding = membership(&agent_set, inst.n_agents);

    let mut max_upper_gap: f64 = 0.0;
    let mut min_overshoot = f64::INFINITY;
    let mut max_lower_gap: f64 = 0.0;
    for n in 0..inst.n_agents {
        for t in 0..horizon {
            let x = result.x_final.rows[n][t];
            let y = result.y_final.rows[n][t];
            if in_set[t] && !binding[n] {
                max_upper_gap = max_upper_gap.max((x - inst.upper[n][t]).abs());
                min_overshoot = min_overshoot.min(y - inst.upper[n][t]);
            } else if !in_set[t] && binding[n] {
                max_lower_gap = max_lower_gap.max((x - inst.lower[n][t]).abs());
            }
        }
    }
    let sets_nonempty = !time_set.is_empty()
        && time_set.len() < horizon
        && !agent_set.is_empty()
        && agent_set.len() < inst.n_agents;
    FixedPointFacts {
        time_set,
        agent_set,
        max_upper_gap,
        min_overshoot,
        max_lower_gap,
        sets_nonempty,
    }
}

fn membership(indices: &[usize], len: usize) -> Vec<bool> {
    let mut out = vec![false; len];
    for &i in indices {
        out[i] = true;
    }
    out
}
