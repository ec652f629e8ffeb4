//! Alternating projections between the product of agent sets and the
//! aggregate coupling space.
//!
//! One sweep projects each agent's row onto its feasible block and then
//! projects the stacked profiles onto `{Σ_n y_n = p}`. The iteration stops
//! when consecutive agent-side iterates move less than a threshold; if the
//! two sets intersect, the remaining gap between the sides shrinks to zero,
//! and otherwise it stabilizes at the minimal distance, which is the
//! infeasibility signal the cutting-plane layer consumes.
//!
//! Residual ratios are tracked in the Euclidean norm, where the sweep map
//! is provably nonexpansive, so they are certified to stay at or below one;
//! the caller-selected norm only decides the stopping threshold and the
//! reported residual/gap (the max-row norm avoids the `√N` inflation of
//! the Euclidean gap on stacked profiles).

use crate::model::{ProfileMatrix, TransportInstance};
use crate::projections::{project_agent, project_aggregate, AgentBlock};

/// Norm on stacked profile matrices used for stopping and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormSpec {
    /// Euclidean (Frobenius) norm of the stacked matrix.
    L2,
    /// Max over agents of the row 1-norm.
    #[default]
    Operator,
}

impl NormSpec {
    pub fn distance(&self, a: &ProfileMatrix, b: &ProfileMatrix) -> f64 {
        match self {
            NormSpec::L2 => a
                .rows
                .iter()
                .flatten()
                .zip(b.rows.iter().flatten())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt(),
            NormSpec::Operator => a
                .rows
                .iter()
                .zip(&b.rows)
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).sum())
                .fold(0.0, f64::max),
        }
    }
}

/// Worst-case per-sweep contraction margin `κ = 4 / (N (T+1)² (T−1))`: the
/// Euclidean rate of the sweep map is at most `1 − κ` for any configuration
/// of `N` agents over `T ≥ 2` periods.
pub fn contraction_bound(n_agents: usize, horizon: usize) -> f64 {
    assert!(n_agents >= 1 && horizon >= 2, "need N ≥ 1 and T ≥ 2");
    let (n, t) = (n_agents as f64, horizon as f64);
    4.0 / (n * (t + 1.0).powi(2) * (t - 1.0))
}

#[derive(Debug, Clone, Copy)]
pub struct ApmParams {
    /// Stopping threshold on the agent-side residual `‖x^(k) − x^(k−1)‖`.
    pub eps_cvg: f64,
    /// Sweep budget; `None` derives a worst-case budget from the
    /// contraction margin after the first sweep (capped at 10⁶).
    pub max_iter: Option<usize>,
    pub norm: NormSpec,
}

impl ApmParams {
    pub fn new(eps_cvg: f64) -> Self {
        assert!(eps_cvg > 0.0 && eps_cvg.is_finite(), "threshold must be positive");
        ApmParams {
            eps_cvg,
            max_iter: None,
            norm: NormSpec::default(),
        }
    }

    pub fn with_norm(mut self, norm: NormSpec) -> Self {
        self.norm = norm;
        self
    }
}

#[derive(Debug, Clone)]
pub struct ApmResult {
    /// Agent-side iterate after the final sweep; rows lie in their blocks.
    pub x_final: ProfileMatrix,
    /// Aggregate-side iterate; columns sum to `p`.
    pub y_final: ProfileMatrix,
    /// Number of completed sweeps `K`.
    pub iterations: usize,
    /// Final residual `‖x^(K) − x^(K−1)‖` in the selected norm.
    pub residual: f64,
    /// Final gap `‖x^(K) − y^(K)‖` in the selected norm.
    pub gap: f64,
    /// Per-period shift `ν = (p − Σ_n x_n^(K)) / N`; `y_n = x_n + ν`.
    pub multiplier: Vec<f64>,
    /// Residual per sweep in the selected norm.
    pub residuals: Vec<f64>,
    /// Gap per sweep in the selected norm.
    pub gaps: Vec<f64>,
    /// Euclidean residual ratios `r_{k+1}/r_k`; certified ≤ 1.
    pub contraction_ratios: Vec<f64>,
    /// False iff the sweep budget ran out before the threshold was met.
    pub converged: bool,
}

impl ApmResult {
    /// Empirical linear rate: the worst Euclidean ratio over the last half
    /// of the sweeps. Needs at least three sweeps to say anything.
    pub fn observed_rate(&self) -> Option<f64> {
        if self.iterations < 3 || self.contraction_ratios.is_empty() {
            return None;
        }
        let tail = &self.contraction_ratios[self.contraction_ratios.len() / 2..];
        tail.iter().copied().reduce(f64::max)
    }

    /// Per-iteration trace as `k,residual,gap,ratio` CSV text.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("k,residual,gap,ratio\n");
        for k in 0..self.residuals.len() {
            let ratio = if k >= 1 {
                format!("{}", self.contraction_ratios[k - 1])
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{},{},{},{}\n",
                k + 1,
                self.residuals[k],
                self.gaps[k],
                ratio
            ));
        }
        out
    }
}

/// Alternating projections with per-agent projection supplied as a closure
/// (`agent index, aggregate-side row ↦ nearest feasible row`). This is the
/// engine behind [`run_apm`]; general polyhedral agents plug in their own
/// projector.
pub fn run_apm_with<P>(
    mut project_row: P,
    n_agents: usize,
    p: &[f64],
    y0: &ProfileMatrix,
    params: &ApmParams,
) -> ApmResult
where
    P: FnMut(usize, &[f64]) -> Vec<f64>,
{
    assert!(n_agents >= 1, "need at least one agent");
    assert_eq!(y0.n_agents(), n_agents, "start matrix shape");
    assert_eq!(y0.horizon(), p.len(), "aggregate length");
    assert!(
        y0.is_finite() && p.iter().all(|v| v.is_finite()),
        "non-finite input to the projection iteration"
    );
    let horizon = p.len();
    let cap = 1_000_000usize;
    let kappa = contraction_bound(n_agents, horizon.max(2));

    let project_all = |y: &ProfileMatrix, project_row: &mut P| -> ProfileMatrix {
        ProfileMatrix::new(
            y.rows
                .iter()
                .enumerate()
                .map(|(n, row)| project_row(n, row))
                .collect(),
        )
    };

    let mut x = project_all(y0, &mut project_row);
    let mut y = project_aggregate(&x, p).0;
    let mut nu;

    let mut residuals = Vec::new();
    let mut gaps = Vec::new();
    let mut ratios = Vec::new();
    let mut prev_l2: Option<f64> = None;
    let mut budget = params.max_iter;
    let mut converged = false;

    loop {
        let x_next = project_all(&y, &mut project_row);
        assert!(
            x_next.is_finite(),
            "non-finite iterate: projection produced NaN or infinity"
        );
        let r = params.norm.distance(&x_next, &x);
        let r_l2 = NormSpec::L2.distance(&x_next, &x);
        if let Some(prev) = prev_l2 {
            let ratio = if prev > 0.0 { r_l2 / prev } else { 0.0 };
            assert!(
                ratio <= 1.0 + 1e-9,
                "sweep map expanded a Euclidean residual: ratio {ratio}"
            );
            ratios.push(ratio.min(1.0));
        }
        prev_l2 = Some(r_l2);
        residuals.push(r);

        let (y_next, nu_next) = project_aggregate(&x_next, p);
        gaps.push(params.norm.distance(&x_next, &y_next));
        x = x_next;
        y = y_next;
        nu = nu_next;

        if r < params.eps_cvg {
            converged = true;
            break;
        }
        if budget.is_none() {
            // First measured residual sizes the worst-case geometric budget
            // ln(ε / r₁) / ln(1 − κ), capped to stay responsive.
            let sweeps = ((params.eps_cvg / r).ln() / (1.0 - kappa).ln()).ceil();
            budget = Some(if sweeps.is_finite() && sweeps > 0.0 {
                (sweeps as usize).clamp(1, cap)
            } else {
                cap
            });
        }
        if residuals.len() >= budget.unwrap_or(cap).min(cap) {
            break;
        }
    }

    ApmResult {
        iterations: residuals.len(),
        residual: *residuals.last().expect("at least one sweep"),
        gap: *gaps.last().expect("at least one sweep"),
        multiplier: nu,
        x_final: x,
        y_final: y,
        residuals,
        gaps,
        contraction_ratios: ratios,
        converged,
    }
}

/// Alternating projections for box-with-budget agents, starting from `y0`
/// (conventionally the lower-bound matrix).
pub fn run_apm(
    inst: &TransportInstance,
    p: &[f64],
    y0: &ProfileMatrix,
    params: &ApmParams,
) -> ApmResult {
    let blocks: Vec<AgentBlock> = (0..inst.n_agents)
        .map(|n| AgentBlock::from_instance(inst, n))
        .collect();
    run_apm_with(
        |n, row| project_agent(&blocks[n], row),
        inst.n_agents,
        p,
        y0,
        params,
    )
}
