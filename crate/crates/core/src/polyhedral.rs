//! Agents described by explicit halfspace systems `A x ≤ b`.
//!
//! Box-with-budget agents have an exact projection, but the protocol only
//! needs each agent to project onto its own set and to price support
//! queries. This module supplies both for general bounded polytopes —
//! projection via Dykstra's algorithm over the rows, support prices via
//! the dual linear program `min bᵀλ` over `Aᵀλ = μ, λ ≥ 0` — and runs the
//! same outer loop with general separating planes instead of period-subset
//! cuts.

use crate::cuts::LambdaCut;
use crate::linalg::{solve_lp, LinearProgram, LpOutcome, RowKind, Sense, DEFAULT_LP_TOL};
use crate::master::{FeasibleRegion, MasterError, MasterSolver};
use crate::projections::{dykstra_project, AgentBlock, DykstraParams, Halfspace, ProjectionSet};
use crate::protocol::{
    finish_run, CutMode, DisaggRun, LocalConstraint, NiApmOutcome, OperatorTranscript,
    ProtocolError, ProtocolParams, RunOutcome, Simulator,
};
use serde::{Deserialize, Serialize};

/// Master-solve budget for the general-plane pipeline, which has no
/// combinatorial cut cap to fall back on.
pub const DEFAULT_DUAL_OUTER_CAP: usize = 500;

/// One agent's feasible set as rows `a_i · x ≤ b_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyAgent {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl PolyAgent {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        assert!(!a.is_empty(), "need at least one halfspace");
        assert_eq!(a.len(), b.len(), "row/rhs count mismatch");
        let horizon = a[0].len();
        assert!(horizon > 0, "rows must have coordinates");
        for row in &a {
            assert_eq!(row.len(), horizon, "ragged halfspace rows");
        }
        PolyAgent { a, b }
    }

    /// A box-with-budget block as explicit halfspaces: two per coordinate
    /// bound and two for the budget equality.
    pub fn from_block(block: &AgentBlock) -> Self {
        let horizon = block.horizon();
        let mut a = Vec::with_capacity(2 * horizon + 2);
        let mut b = Vec::with_capacity(2 * horizon + 2);
        for t in 0..horizon {
            let mut up = vec![0.0; horizon];
            up[t] = 1.0;
            a.push(up);
            b.push(block.upper[t]);
            let mut lo = vec![0.0; horizon];
            lo[t] = -1.0;
            a.push(lo);
            b.push(-block.lower[t]);
        }
        a.push(vec![1.0; horizon]);
        b.push(block.demand);
        a.push(vec![-1.0; horizon]);
        b.push(-block.demand);
        PolyAgent { a, b }
    }

    pub fn horizon(&self) -> usize {
        self.a[0].len()
    }

    pub fn halfspaces(&self) -> Vec<Halfspace> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, &rhs)| Halfspace::new(row.clone(), rhs))
            .collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.halfspaces().iter().all(|h| h.violation(x) <= tol)
    }

    /// Checks that the set is nonempty and bounded (both required for the
    /// protocol: projections need a point to land on, support prices must
    /// be finite in every direction). Returns human-readable defects.
    pub fn validate(&self) -> Vec<String> {
        let horizon = self.horizon();
        let mut findings = Vec::new();
        if self
            .a
            .iter()
            .flatten()
            .chain(self.b.iter())
            .any(|v| !v.is_finite())
        {
            findings.push("halfspace data contains non-finite entries".to_string());
            return findings;
        }
        for (t, sense) in (0..horizon).flat_map(|t| [(t, 1.0), (t, -1.0)]) {
            let mut objective = vec![0.0; horizon];
            objective[t] = sense;
            let mut lp = LinearProgram::new(Sense::Maximize, objective);
            for v in 0..horizon {
                lp.set_bounds(v, f64::NEG_INFINITY, f64::INFINITY);
            }
            for (row, &rhs) in self.a.iter().zip(&self.b) {
                lp.add_row(row.clone(), RowKind::Le, rhs);
            }
            match solve_lp(&lp, DEFAULT_LP_TOL).expect("well-formed validation LP") {
                LpOutcome::Optimal { .. } => {}
                LpOutcome::Infeasible { .. } => {
                    findings.push("the halfspace system has no solution".to_string());
                    return findings;
                }
                LpOutcome::Unbounded { .. } => {
                    let dir = if sense > 0.0 { "above" } else { "below" };
                    findings.push(format!("coordinate {t} is unbounded {dir}"));
                }
            }
        }
        findings
    }

    fn projection_params(&self) -> DykstraParams {
        DykstraParams {
            max_cycles: 50_000,
            tol: 1e-12,
        }
    }
}

impl LocalConstraint for PolyAgent {
    fn horizon(&self) -> usize {
        PolyAgent::horizon(self)
    }

    fn start_point(&self) -> Vec<f64> {
        vec![0.0; PolyAgent::horizon(self)]
    }

    fn project(&self, y: &[f64]) -> Vec<f64> {
        let sets: Vec<ProjectionSet> = self
            .halfspaces()
            .into_iter()
            .map(ProjectionSet::Halfspace)
            .collect();
        let out = dykstra_project(y, &sets, self.projection_params());
        assert!(
            out.converged,
            "projection onto the halfspace system did not settle (violation {:.3e})",
            out.max_violation
        );
        out.point
    }

    fn contains(&self, x: &[f64], tol: f64) -> bool {
        PolyAgent::contains(self, x, tol)
    }

    /// Support price `max{μ·x : Ax ≤ b}`, computed through the dual
    /// program `min bᵀλ` over `Aᵀλ = μ, λ ≥ 0` (always solvable for a
    /// nonempty bounded set).
    fn dual_value(&self, mu: &[f64]) -> f64 {
        let horizon = PolyAgent::horizon(self);
        assert_eq!(mu.len(), horizon, "query direction length");
        let m = self.a.len();
        let mut lp = LinearProgram::new(Sense::Minimize, self.b.clone());
        for row in 0..m {
            lp.set_bounds(row, 0.0, f64::INFINITY);
        }
        for t in 0..horizon {
            let coeffs: Vec<f64> = self.a.iter().map(|row| row[t]).collect();
            lp.add_row(coeffs, RowKind::Eq, mu[t]);
        }
        match solve_lp(&lp, DEFAULT_LP_TOL).expect("well-formed support program") {
            LpOutcome::Optimal { objective, .. } => objective,
            other => panic!(
                "support program must be solvable for a nonempty bounded set, got {other:?}"
            ),
        }
    }
}

/// One inner run for explicit-halfspace agents, ending in a disaggregation
/// or a violated general plane.
pub fn ni_apm_poly(
    agents: Vec<PolyAgent>,
    p: &[f64],
    params: &ProtocolParams,
) -> Result<(NiApmOutcome, OperatorTranscript), ProtocolError> {
    let mut sim = Simulator::new(agents, params.clone());
    let outcome = sim.ni_apm(p, CutMode::Dual)?;
    Ok((outcome, sim.transcript().clone()))
}

/// Master/inner-loop alternation for explicit-halfspace agents. Each
/// violated support price becomes a general separating plane in the
/// master's region.
pub fn optimal_disaggregation_poly(
    agents: Vec<PolyAgent>,
    mut region: FeasibleRegion,
    master: &dyn MasterSolver,
    params: &ProtocolParams,
) -> Result<DisaggRun, ProtocolError> {
    for (n, agent) in agents.iter().enumerate() {
        let defects = agent.validate();
        assert!(defects.is_empty(), "agent {n}: {}", defects.join("; "));
    }
    let mut sim = Simulator::new(agents, params.clone());
    let max_outer = params.max_outer.unwrap_or(DEFAULT_DUAL_OUTER_CAP);
    let mut lambda_cuts: Vec<LambdaCut> = Vec::new();
    let mut last_objective = f64::NEG_INFINITY;
    let mut master_sequence: Vec<Vec<f64>> = Vec::new();
    let mut outer = 0usize;
    loop {
        outer += 1;
        if outer > max_outer {
            return Err(ProtocolError::OuterBudget { outer: outer - 1 });
        }
        let point = match master.solve(&region) {
            Ok(point) => point,
            Err(MasterError::Infeasible { certificate }) => {
                return Ok(finish_run(
                    RunOutcome::NoSolution { certificate },
                    outer,
                    &region,
                    lambda_cuts,
                    master_sequence,
                    sim,
                ));
            }
        };
        assert!(
            point.objective >= last_objective - 1e-9,
            "master objective regressed: {} after {}",
            point.objective,
            last_objective
        );
        last_objective = point.objective;
        master_sequence.push(point.p.clone());

        match sim.ni_apm(&point.p, CutMode::Dual)? {
            NiApmOutcome::Disaggregated { x, gap } => {
                return Ok(finish_run(
                    RunOutcome::Disaggregated {
                        p: point.p,
                        x,
                        objective: point.objective,
                        schedule: point.schedule,
                        gap,
                    },
                    outer,
                    &region,
                    lambda_cuts,
                    master_sequence,
                    sim,
                ));
            }
            NiApmOutcome::DualCut { nu, price, .. } => {
                let cut = LambdaCut::from_shift(&nu, price);
                assert!(
                    cut.violation(&point.p) > 0.0,
                    "accepted plane must exclude the allocation that produced it"
                );
                assert!(
                    region.add_halfspace(cut.halfspace()),
                    "accepted plane left the master region unchanged"
                );
                lambda_cuts.push(cut);
            }
            NiApmOutcome::SubsetCut { .. } => {
                unreachable!("dual mode never prices subset cuts")
            }
        }
    }
}
