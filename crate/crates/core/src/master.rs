//! Master problems over the outer approximation of the disaggregable set.
//!
//! The feasible region starts as the aggregate box with the total-demand
//! hyperplane and shrinks as cuts arrive. Two solvers cover the costs the
//! experiments use:
//!
//! * [`QuadraticMaster`] — uniform separable quadratic cost. The argmin is
//!   the Euclidean projection of the unconstrained minimizer onto the
//!   region, computed by Dykstra's algorithm; the correction vectors double
//!   as Lagrange multipliers, so optimality is certified by a KKT residual.
//! * [`MicrogridMaster`] — startup/piecewise-generation scheduling cost.
//!   On/off patterns are enumerated (desk-scale horizons) and a linear
//!   program prices each pattern; increasing marginal costs make the
//!   piecewise relaxation exact, which is asserted on the winning pattern.

use crate::cuts::HoffmanCut;
use crate::linalg::{solve_lp, LinearProgram, LpOutcome, RowKind, Sense, DEFAULT_LP_TOL};
use crate::model::{AggregateBox, MicrogridSpec, TransportInstance};
use crate::projections::{dykstra_project, DykstraParams, Halfspace, ProjectionSet};
use serde::{Deserialize, Serialize};

/// Outer approximation of the disaggregable set: aggregate box, total
/// demand, accepted subset cuts, and (for the polyhedral pipeline) general
/// halfspace cuts.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleRegion {
    pub bounds: AggregateBox,
    pub cuts: Vec<HoffmanCut>,
    pub extra: Vec<Halfspace>,
}

impl FeasibleRegion {
    pub fn new(bounds: AggregateBox) -> Self {
        FeasibleRegion {
            bounds,
            cuts: Vec::new(),
            extra: Vec::new(),
        }
    }

    pub fn from_instance(inst: &TransportInstance) -> Self {
        FeasibleRegion::new(inst.aggregate_box())
    }

    pub fn horizon(&self) -> usize {
        self.bounds.horizon()
    }

    /// Insert a subset cut, de-duplicating by period set (the tighter
    /// right-hand side wins). Returns false if the region is unchanged.
    pub fn add_cut(&mut self, cut: HoffmanCut) -> bool {
        if let Some(existing) = self
            .cuts
            .iter_mut()
            .find(|c| c.time_set == cut.time_set)
        {
            if cut.rhs < existing.rhs {
                existing.rhs = cut.rhs;
                existing.provenance = cut.provenance;
                return true;
            }
            return false;
        }
        self.cuts.push(cut);
        true
    }

    /// Insert a general halfspace cut (exact duplicates dropped).
    pub fn add_halfspace(&mut self, h: Halfspace) -> bool {
        if self.extra.contains(&h) {
            return false;
        }
        self.extra.push(h);
        true
    }

    /// All inequality constraints as halfspaces (box and total excluded).
    pub fn cut_halfspaces(&self) -> Vec<Halfspace> {
        let horizon = self.horizon();
        self.cuts
            .iter()
            .map(|c| c.halfspace(horizon))
            .chain(self.extra.iter().cloned())
            .collect()
    }

    /// The region as factor sets for Dykstra's algorithm.
    pub fn projection_sets(&self) -> Vec<ProjectionSet> {
        let mut sets = vec![
            ProjectionSet::Bounds {
                lower: self.bounds.col_lower.clone(),
                upper: self.bounds.col_upper.clone(),
            },
            ProjectionSet::Hyperplane {
                normal: vec![1.0; self.horizon()],
                rhs: self.bounds.sum_target,
            },
        ];
        sets.extend(self.cut_halfspaces().into_iter().map(ProjectionSet::Halfspace));
        sets
    }

    /// Feasibility/pricing linear program over the allocation variables
    /// with the given objective coefficients.
    pub fn lp_over_allocations(&self, sense: Sense, objective: Vec<f64>) -> LinearProgram {
        let horizon = self.horizon();
        assert_eq!(objective.len(), horizon);
        let mut lp = LinearProgram::new(sense, objective);
        for t in 0..horizon {
            lp.set_bounds(t, self.bounds.col_lower[t], self.bounds.col_upper[t]);
        }
        lp.add_row(vec![1.0; horizon], RowKind::Eq, self.bounds.sum_target);
        for h in self.cut_halfspaces() {
            lp.add_row(h.normal, RowKind::Le, h.rhs);
        }
        lp
    }

    /// Emptiness check by a zero-objective linear program; returns the
    /// infeasibility certificate when the region is empty.
    pub fn emptiness_certificate(&self) -> Option<Vec<f64>> {
        let lp = self.lp_over_allocations(Sense::Minimize, vec![0.0; self.horizon()]);
        match solve_lp(&lp, DEFAULT_LP_TOL).expect("region LP is well-formed") {
            LpOutcome::Infeasible { farkas } => Some(farkas),
            _ => None,
        }
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.bounds.contains(p, tol)
            && self
                .cut_halfspaces()
                .iter()
                .all(|h| h.violation(p) <= tol)
    }
}

/// Uniform separable cost `f(p) = Σ_t lin·p_t + quad·p_t²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    pub lin: f64,
    pub quad: f64,
}

impl QuadraticCost {
    pub fn new(lin: f64, quad: f64) -> Self {
        assert!(quad > 0.0, "quadratic coefficient must be positive");
        QuadraticCost { lin, quad }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        p.iter().map(|v| self.lin * v + self.quad * v * v).sum()
    }
}

/// Generator commitment decisions attached to a microgrid master solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub on: Vec<bool>,
    pub startup: Vec<bool>,
    /// Dispatched generator output per period.
    pub generation: Vec<f64>,
}

/// A master solution: the allocation handed to the disaggregation layer,
/// its cost, and any commitment schedule that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterPoint {
    pub p: Vec<f64>,
    pub objective: f64,
    pub schedule: Option<Schedule>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MasterError {
    /// The region is empty; carries the Farkas certificate when one was
    /// produced.
    Infeasible { certificate: Option<Vec<f64>> },
}

impl std::fmt::Display for MasterError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MasterError::Infeasible { .. } => write!(f, "master region is empty"),
        }
    }
}

impl std::error::Error for MasterError {}

/// A cost model that can be minimized over a [`FeasibleRegion`].
pub trait MasterSolver {
    fn solve(&self, region: &FeasibleRegion) -> Result<MasterPoint, MasterError>;
}

/// Exact minimizer for uniform quadratic costs via region projection.
#[derive(Debug, Clone)]
pub struct QuadraticMaster {
    pub cost: QuadraticCost,
    /// KKT residual tolerance.
    pub tol: f64,
}

impl QuadraticMaster {
    pub fn new(cost: QuadraticCost) -> Self {
        QuadraticMaster { cost, tol: 1e-8 }
    }
}

impl MasterSolver for QuadraticMaster {
    fn solve(&self, region: &FeasibleRegion) -> Result<MasterPoint, MasterError> {
        // Dykstra cannot certify emptiness, so settle feasibility first.
        if let Some(certificate) = region.emptiness_certificate() {
            return Err(MasterError::Infeasible {
                certificate: Some(certificate),
            });
        }
        let horizon = region.horizon();
        // Completing the square: f(p) = quad·‖p − v‖² + const with
        // v = −lin/(2·quad)·1, so the argmin over the region is P(v).
        let v = vec![-self.cost.lin / (2.0 * self.cost.quad); horizon];
        let sets = region.projection_sets();
        let params = DykstraParams {
            max_cycles: 100_000,
            tol: (self.tol * 1e-2).min(1e-10),
        };
        let out = dykstra_project(&v, &sets, params);
        assert!(
            out.converged,
            "region projection did not settle within {} cycles (violation {:.3e})",
            params.max_cycles, out.max_violation
        );
        let residual = kkt_residual(&v, &out.point, &sets, &out.corrections);
        assert!(
            residual <= self.tol,
            "projection optimality certificate failed: KKT residual {residual:.3e}"
        );
        Ok(MasterPoint {
            objective: self.cost.eval(&out.point),
            p: out.point,
            schedule: None,
        })
    }
}

/// Optimality measure for a projection `point = P(v)` from Dykstra
/// corrections: each correction must be a sign-correct multiplier along its
/// set's normal with complementary slackness, and the displacement must
/// decompose exactly.
fn kkt_residual(
    v: &[f64],
    point: &[f64],
    sets: &[ProjectionSet],
    corrections: &[Vec<f64>],
) -> f64 {
    let dim = v.len();
    let mut residual: f64 = 0.0;
    // Displacement decomposition v − point = Σ corrections.
    for t in 0..dim {
        let total: f64 = corrections.iter().map(|e| e[t]).sum();
        residual = residual.max((v[t] - point[t] - total).abs());
    }
    for (set, e) in sets.iter().zip(corrections) {
        match set {
            ProjectionSet::Halfspace(h) => {
                let nn: f64 = h.normal.iter().map(|a| a * a).sum();
                let c: f64 =
                    e.iter().zip(&h.normal).map(|(x, a)| x * a).sum::<f64>() / nn;
                // Alignment with the normal, dual feasibility, slackness.
                for t in 0..dim {
                    residual = residual.max((e[t] - c * h.normal[t]).abs());
                }
                residual = residual.max(-c);
                let slack: f64 =
                    h.rhs - h.normal.iter().zip(point).map(|(a, x)| a * x).sum::<f64>();
                residual = residual.max((c * slack).abs());
                residual = residual.max(-slack); // primal feasibility
            }
            ProjectionSet::Hyperplane { normal, rhs } => {
                let nn: f64 = normal.iter().map(|a| a * a).sum();
                let c: f64 = e.iter().zip(normal).map(|(x, a)| x * a).sum::<f64>() / nn;
                for t in 0..dim {
                    residual = residual.max((e[t] - c * normal[t]).abs());
                }
                let defect: f64 =
                    normal.iter().zip(point).map(|(a, x)| a * x).sum::<f64>() - rhs;
                residual = residual.max(defect.abs());
            }
            ProjectionSet::Bounds { lower, upper } => {
                for t in 0..dim {
                    residual = residual.max(lower[t] - point[t]).max(point[t] - upper[t]);
                    if e[t] > 0.0 {
                        // Pushing down: the upper bound must be active.
                        residual = residual.max(e[t].min(1.0) * (upper[t] - point[t]));
                    } else if e[t] < 0.0 {
                        residual = residual.max((-e[t]).min(1.0) * (point[t] - lower[t]));
                    }
                }
            }
        }
    }
    residual
}

/// Pattern-enumeration solver for the startup/piecewise generation cost.
#[derive(Debug, Clone)]
pub struct MicrogridMaster {
    pub spec: MicrogridSpec,
    /// LP objective comparison tolerance.
    pub tol: f64,
}

impl MicrogridMaster {
    pub fn new(spec: MicrogridSpec) -> Self {
        assert!(
            spec.horizon <= 16,
            "on/off enumeration is capped at 16 periods"
        );
        assert!(spec.validate().is_empty(), "generator spec invalid");
        MicrogridMaster { spec, tol: 1e-6 }
    }

    /// Fixed cost of a pattern: running cost per committed period plus
    /// startup charges on off→on transitions (the first period starts
    /// free: there is no prior period to have been off).
    fn fixed_cost(&self, on: &[bool]) -> (f64, Vec<bool>) {
        let mut startup = vec![false; on.len()];
        for t in 1..on.len() {
            startup[t] = on[t] && !on[t - 1];
        }
        let committed = on.iter().filter(|&&b| b).count() as f64;
        let starts = startup.iter().filter(|&&b| b).count() as f64;
        (
            self.spec.alpha1 * committed + self.spec.start_cost * starts,
            startup,
        )
    }

    /// Price one commitment pattern. Variables: `p_t` (allocation), `g_t`
    /// (generator output), `g_{k,t}` (per-piece output).
    fn price_pattern(
        &self,
        region: &FeasibleRegion,
        on: &[bool],
    ) -> Option<(f64, Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
        let s = &self.spec;
        let horizon = s.horizon;
        let k_pieces = s.n_breakpoints;
        let n_vars = horizon + horizon + k_pieces * horizon;
        let idx_p = |t: usize| t;
        let idx_g = |t: usize| horizon + t;
        let idx_piece = |k: usize, t: usize| 2 * horizon + k * horizon + t;

        let mut objective = vec![0.0; n_vars];
        for k in 0..k_pieces {
            for t in 0..horizon {
                objective[idx_piece(k, t)] = s.marginal_cost[k];
            }
        }
        let mut lp = LinearProgram::new(Sense::Minimize, objective);
        for t in 0..horizon {
            lp.set_bounds(
                idx_p(t),
                region.bounds.col_lower[t],
                region.bounds.col_upper[t],
            );
            let (g_lo, g_hi) = if on[t] {
                (s.p_min, s.p_max)
            } else {
                (0.0, 0.0)
            };
            lp.set_bounds(idx_g(t), g_lo, g_hi);
            for k in 0..k_pieces {
                let cap = if on[t] { s.theta[k + 1] - s.theta[k] } else { 0.0 };
                lp.set_bounds(idx_piece(k, t), 0.0, cap);
            }
        }
        // Pieces compose the generator output.
        for t in 0..horizon {
            let mut row = vec![0.0; n_vars];
            row[idx_g(t)] = -1.0;
            for k in 0..k_pieces {
                row[idx_piece(k, t)] = 1.0;
            }
            lp.add_row(row, RowKind::Eq, 0.0);
        }
        // Allocation is covered by free generation plus the generator.
        for t in 0..horizon {
            let mut row = vec![0.0; n_vars];
            row[idx_p(t)] = 1.0;
            row[idx_g(t)] = -1.0;
            lp.add_row(row, RowKind::Le, s.pv[t]);
        }
        // Total demand.
        let mut total = vec![0.0; n_vars];
        for t in 0..horizon {
            total[idx_p(t)] = 1.0;
        }
        lp.add_row(total, RowKind::Eq, region.bounds.sum_target);
        // Region cuts act on the allocation variables.
        for h in region.cut_halfspaces() {
            let mut row = vec![0.0; n_vars];
            row[..horizon].copy_from_slice(&h.normal);
            lp.add_row(row, RowKind::Le, h.rhs);
        }

        match solve_lp(&lp, DEFAULT_LP_TOL).expect("pattern LP is well-formed") {
            LpOutcome::Optimal {
                primal, objective, ..
            } => {
                let p = primal[..horizon].to_vec();
                let g = primal[horizon..2 * horizon].to_vec();
                let pieces = (0..k_pieces)
                    .map(|k| {
                        (0..horizon)
                            .map(|t| primal[idx_piece(k, t)])
                            .collect::<Vec<f64>>()
                    })
                    .collect();
                Some((objective, p, g, pieces))
            }
            LpOutcome::Infeasible { .. } => None,
            LpOutcome::Unbounded { .. } => {
                unreachable!("all pattern variables are bounded")
            }
        }
    }
}

impl MasterSolver for MicrogridMaster {
    fn solve(&self, region: &FeasibleRegion) -> Result<MasterPoint, MasterError> {
        let s = &self.spec;
        assert_eq!(region.horizon(), s.horizon, "region/spec horizon mismatch");
        let horizon = s.horizon;
        let mut best: Option<(f64, Vec<f64>, Schedule, Vec<Vec<f64>>)> = None;
        for pattern in 0u32..1 << horizon {
            let on: Vec<bool> = (0..horizon).map(|t| pattern >> t & 1 == 1).collect();
            // Capacity prune: committed output plus free generation must
            // cover the total demand.
            let cap: f64 = (0..horizon)
                .map(|t| s.pv[t] + if on[t] { s.p_max } else { 0.0 })
                .sum();
            if cap < region.bounds.sum_target - 1e-9 {
                continue;
            }
            let (fixed, startup) = self.fixed_cost(&on);
            if let Some((lp_obj, p, g, pieces)) = self.price_pattern(region, &on) {
                let total = lp_obj + fixed;
                if best.as_ref().is_none_or(|(b, ..)| total < *b - 0.0) {
                    best = Some((
                        total,
                        p,
                        Schedule {
                            on,
                            startup,
                            generation: g,
                        },
                        pieces,
                    ));
                }
            }
        }
        let Some((objective, p, schedule, pieces)) = best else {
            return Err(MasterError::Infeasible {
                certificate: region.emptiness_certificate(),
            });
        };
        // Increasing marginal costs make the piecewise relaxation exact:
        // a piece may only be used once every cheaper piece is full.
        for t in 0..horizon {
            for k in 1..s.n_breakpoints {
                if pieces[k][t] > self.tol {
                    let cap = s.theta[k] - s.theta[k - 1];
                    assert!(
                        pieces[k - 1][t] >= cap - self.tol,
                        "piece {k} used at period {t} before piece {} is full",
                        k - 1
                    );
                }
            }
        }
        Ok(MasterPoint {
            p,
            objective,
            schedule: Some(schedule),
        })
    }
}
