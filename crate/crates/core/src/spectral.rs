//! Eigenvalue verification of the sweep map's worst-case contraction rate.
//!
//! At a fixed point of the alternating iteration, each agent sits on a face
//! of its box-with-budget set described by the periods pinned at a bound.
//! The interaction of those faces with the aggregate coupling is captured
//! by a weighted graph on the periods: agents whose free periods overlap
//! connect them, with weight inversely proportional to how many free
//! periods the agent has. The Laplacian of that graph governs the local
//! rate, and its least positive eigenvalue `λ₁` is bounded below by the
//! closed-form margin `κ = 4/(N(T+1)²(T−1))` — the quantity this module
//! constructs, measures, and sweeps over random configurations.

use crate::apm::contraction_bound;
use crate::linalg::{symmetric_eigenvalues, DEFAULT_EIGEN_TOL};
use crate::model::stream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Eigenvalues at or below this threshold count as kernel directions.
pub const KERNEL_TOL: f64 = 1e-9;

/// One face configuration: for each agent, the set of periods pinned at a
/// lower or upper bound. Pinned sets must be proper (every agent keeps at
/// least one free period), otherwise the graph weights are undefined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceConfig {
    pub n_agents: usize,
    pub horizon: usize,
    /// `saturated[n]` lists agent `n`'s pinned periods, sorted, deduplicated.
    pub saturated: Vec<Vec<usize>>,
}

impl FaceConfig {
    /// Normalizes (sorts and deduplicates each pinned set) and checks shape.
    pub fn new(n_agents: usize, horizon: usize, mut saturated: Vec<Vec<usize>>) -> Self {
        for set in &mut saturated {
            set.sort_unstable();
            set.dedup();
        }
        let config = FaceConfig {
            n_agents,
            horizon,
            saturated,
        };
        let defects = config.validate();
        assert!(defects.is_empty(), "{}", defects.join("; "));
        config
    }

    /// Human-readable defects; empty means the configuration is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut findings = Vec::new();
        if self.n_agents == 0 {
            findings.push("need at least one agent".to_string());
        }
        if self.horizon == 0 {
            findings.push("need at least one period".to_string());
        }
        if self.saturated.len() != self.n_agents {
            findings.push(format!(
                "expected {} pinned sets, got {}",
                self.n_agents,
                self.saturated.len()
            ));
            return findings;
        }
        for (n, set) in self.saturated.iter().enumerate() {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                findings.push(format!("agent {n}: pinned set not sorted/deduplicated"));
            }
            if set.iter().any(|&t| t >= self.horizon) {
                findings.push(format!("agent {n}: pinned period out of range"));
            }
            if set.len() >= self.horizon {
                findings.push(format!("agent {n}: no free period remains"));
            }
        }
        findings
    }

    /// Draws each agent's pinned set uniformly in size (0 to `horizon − 1`
    /// periods, so at least one period stays free) and uniformly among the
    /// subsets of that size. Size-uniform sampling reaches the sparse,
    /// weakly coupled configurations that dominate the worst-case rate far
    /// more often than a coin flip per period would.
    pub fn random<R: Rng>(n_agents: usize, horizon: usize, rng: &mut R) -> Self {
        assert!(n_agents >= 1 && horizon >= 1);
        let saturated = (0..n_agents)
            .map(|_| {
                let size = rng.random_range(0..horizon);
                let mut set = rand::seq::index::sample(rng, horizon, size).into_vec();
                set.sort_unstable();
                set
            })
            .collect();
        FaceConfig {
            n_agents,
            horizon,
            saturated,
        }
    }

    /// Free periods of agent `n` (the complement of its pinned set).
    fn free_periods(&self, n: usize) -> Vec<usize> {
        let pinned = &self.saturated[n];
        (0..self.horizon).filter(|t| !pinned.contains(t)).collect()
    }

    /// Union of all agents' free periods, sorted.
    pub fn active_periods(&self) -> Vec<usize> {
        let mut active: Vec<usize> = (0..self.horizon)
            .filter(|t| (0..self.n_agents).any(|n| !self.saturated[n].contains(t)))
            .collect();
        active.sort_unstable();
        active
    }
}

/// Weighted-graph Laplacian of a face configuration.
///
/// Off the diagonal, periods `k ≠ ℓ` are coupled with weight
/// `(1/N) Σ_n 1{both free for n} / |free_n|` (entered negatively); each
/// diagonal entry is then set so its row sums to zero. The result is
/// symmetric positive semidefinite, and periods pinned by every agent
/// contribute empty rows.
pub fn laplacian(config: &FaceConfig) -> Vec<Vec<f64>> {
    let defects = config.validate();
    assert!(defects.is_empty(), "{}", defects.join("; "));
    let t = config.horizon;
    let n_f = config.n_agents as f64;
    let mut p = vec![vec![0.0; t]; t];
    for n in 0..config.n_agents {
        let free = config.free_periods(n);
        let w = 1.0 / (n_f * free.len() as f64);
        for (i, &k) in free.iter().enumerate() {
            for &l in &free[i + 1..] {
                p[k][l] -= w;
                p[l][k] -= w;
            }
        }
    }
    for k in 0..t {
        let off: f64 = (0..t).filter(|&l| l != k).map(|l| p[k][l]).sum();
        p[k][k] = -off;
    }
    p
}

/// Least eigenvalue of the Laplacian exceeding [`KERNEL_TOL`], computed on
/// the block of periods left free by at least one agent. Returns 0 when
/// that block carries no coupling at all (every agent down to a single
/// free period), in which case the local rate statement is vacuous.
pub fn lambda1(config: &FaceConfig) -> f64 {
    let p = laplacian(config);
    let active = config.active_periods();
    if active.is_empty() {
        return 0.0;
    }
    let block: Vec<Vec<f64>> = active
        .iter()
        .map(|&k| active.iter().map(|&l| p[k][l]).collect())
        .collect();
    let eigs = symmetric_eigenvalues(&block, DEFAULT_EIGEN_TOL)
        .expect("Laplacian restriction is symmetric");
    eigs.into_iter().find(|&e| e > KERNEL_TOL).unwrap_or(0.0)
}

/// One horizon's worth of random-configuration statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub horizon: usize,
    /// Smallest positive `λ₁` seen across the draws (0 if every draw was
    /// degenerate, which does not happen at the sizes studied here).
    pub worst_lambda1: f64,
    /// Closed-form lower bound `κ` for this `(N, T)`.
    pub kappa_bound: f64,
    pub draws: usize,
    /// Draws with no coupling left (`λ₁ = 0`), excluded from the minimum.
    pub degenerate: usize,
}

/// Random-configuration sweep over several horizons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingTable {
    pub n_agents: usize,
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `ln worst_lambda1` against `ln T`.
    pub slope: f64,
}

impl ScalingTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,worst_lambda1,kappa_bound\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.12e},{:.12e}\n",
                row.horizon, row.worst_lambda1, row.kappa_bound
            ));
        }
        out
    }
}

/// Draws `draws_per_t` (default `100·T`) random face configurations per
/// horizon, records the worst positive `λ₁`, hard-asserts the closed-form
/// bound on every non-degenerate draw, and fits the log-log slope.
pub fn scaling_experiment(
    n_agents: usize,
    horizons: &[usize],
    draws_per_t: Option<usize>,
    seed: u64,
) -> ScalingTable {
    assert!(n_agents >= 1, "need at least one agent");
    let mut rows = Vec::with_capacity(horizons.len());
    for &t in horizons {
        assert!(t >= 2, "the rate bound needs at least two periods");
        let draws = draws_per_t.unwrap_or(100 * t);
        let kappa = contraction_bound(n_agents, t);
        let mut rng = stream_rng(seed, t as u64);
        let mut worst = f64::INFINITY;
        let mut degenerate = 0usize;
        for _ in 0..draws {
            let config = FaceConfig::random(n_agents, t, &mut rng);
            let l1 = lambda1(&config);
            if l1 <= 0.0 {
                degenerate += 1;
                continue;
            }
            assert!(
                l1 >= kappa,
                "rate bound violated: lambda1 {l1:.6e} < kappa {kappa:.6e} for {config:?}"
            );
            worst = worst.min(l1);
        }
        rows.push(ScalingRow {
            horizon: t,
            worst_lambda1: if worst.is_finite() { worst } else { 0.0 },
            kappa_bound: kappa,
            draws,
            degenerate,
        });
    }
    let slope = log_log_slope(
        rows.iter()
            .filter(|r| r.worst_lambda1 > 0.0)
            .map(|r| (r.horizon as f64, r.worst_lambda1)),
    );
    ScalingTable {
        n_agents,
        rows,
        slope,
    }
}

/// Least-squares slope of `ln y` against `ln x`; NaN with fewer than two
/// usable points.
fn log_log_slope(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let logged: Vec<(f64, f64)> = points.map(|(x, y)| (x.ln(), y.ln())).collect();
    if logged.len() < 2 {
        return f64::NAN;
    }
    let n = logged.len() as f64;
    let mx = logged.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logged.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logged.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logged.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apm::{run_apm, ApmParams};
    use crate::model::random_instance;

    fn frob(m: &[Vec<f64>]) -> f64 {
        m.iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn rows_sum_to_zero_and_the_matrix_is_symmetric_psd() {
        let mut rng = stream_rng(21, 0);
        for _ in 0..50 {
            let config = FaceConfig::random(4, 6, &mut rng);
            let p = laplacian(&config);
            for k in 0..6 {
                let row_sum: f64 = p[k].iter().sum();
                assert!(row_sum.abs() < 1e-12, "row {k} sums to {row_sum}");
                for l in 0..6 {
                    assert_eq!(p[k][l], p[l][k], "asymmetry at ({k},{l})");
                }
            }
            let eigs = symmetric_eigenvalues(&p, DEFAULT_EIGEN_TOL).unwrap();
            assert!(eigs[0] > -1e-10, "negative eigenvalue {}", eigs[0]);
            // The indicator of the active periods lies in the kernel.
            let active = config.active_periods();
            let ind: Vec<f64> = (0..6)
                .map(|t| if active.contains(&t) { 1.0 } else { 0.0 })
                .collect();
            for k in 0..6 {
                let dot: f64 = (0..6).map(|l| p[k][l] * ind[l]).sum();
                assert!(dot.abs() < 1e-12, "kernel defect {dot} in row {k}");
            }
        }
    }

    #[test]
    fn no_pinning_gives_the_uniform_complete_graph_laplacian() {
        let config = FaceConfig::new(3, 5, vec![vec![]; 3]);
        let p = laplacian(&config);
        for k in 0..5 {
            for l in 0..5 {
                let want = if k == l { 0.8 } else { -0.2 };
                assert!((p[k][l] - want).abs() < 1e-12);
            }
        }
        let eigs = symmetric_eigenvalues(&p, DEFAULT_EIGEN_TOL).unwrap();
        assert!(eigs[0].abs() < 1e-12);
        for e in &eigs[1..] {
            assert!((e - 1.0).abs() < 1e-12, "complete-graph eigenvalue {e}");
        }
        assert!((lambda1(&config) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_period_single_agent_closed_form() {
        let config = FaceConfig::new(1, 2, vec![vec![]]);
        let p = laplacian(&config);
        assert!((p[0][0] - 0.5).abs() < 1e-15);
        assert!((p[0][1] + 0.5).abs() < 1e-15);
        assert!((p[1][0] + 0.5).abs() < 1e-15);
        assert!((p[1][1] - 0.5).abs() < 1e-15);
        assert!((lambda1(&config) - 1.0).abs() < 1e-12);
    }

    /// Independent construction: with `A` the row-orthonormal averaging
    /// frame and `B` an orthonormal basis of each agent's blocked
    /// directions (pinned coordinates plus the uniform direction on its
    /// free periods), the Laplacian equals `I − (ABᵀ)(BAᵀ)`.
    #[test]
    fn laplacian_matches_the_orthonormal_frame_product() {
        let mut rng = stream_rng(22, 0);
        for trial in 0..40 {
            let (n, t) = (1 + trial % 5, 3 + trial % 4);
            let config = FaceConfig::random(n, t, &mut rng);
            let nt = n * t;
            let scale = 1.0 / (n as f64).sqrt();
            let mut a = vec![vec![0.0; nt]; t];
            for (row, a_row) in a.iter_mut().enumerate() {
                for agent in 0..n {
                    a_row[agent * t + row] = scale;
                }
            }
            let mut b: Vec<Vec<f64>> = Vec::new();
            for agent in 0..n {
                for &pinned in &config.saturated[agent] {
                    let mut row = vec![0.0; nt];
                    row[agent * t + pinned] = 1.0;
                    b.push(row);
                }
                let free = config.free_periods(agent);
                let unit = 1.0 / (free.len() as f64).sqrt();
                let mut row = vec![0.0; nt];
                for &f in &free {
                    row[agent * t + f] = unit;
                }
                b.push(row);
            }
            // M = A Bᵀ, then I − M Mᵀ entrywise.
            let m: Vec<Vec<f64>> = a
                .iter()
                .map(|ar| {
                    b.iter()
                        .map(|br| ar.iter().zip(br).map(|(x, y)| x * y).sum())
                        .collect::<Vec<f64>>()
                })
                .collect();
            let p = laplacian(&config);
            let mut defect: f64 = 0.0;
            for k in 0..t {
                for l in 0..t {
                    let mm: f64 = m[k].iter().zip(&m[l]).map(|(x, y)| x * y).sum();
                    let identity = if k == l { 1.0 } else { 0.0 };
                    defect = defect.max((identity - mm - p[k][l]).abs());
                }
            }
            assert!(
                defect < 1e-10,
                "trial {trial}: frame product differs by {defect:.3e} (frob {})",
                frob(&p)
            );
        }
    }

    #[test]
    fn lambda_one_vanishes_exactly_when_no_coupling_remains() {
        // Every agent down to one free period: the graph has no edges.
        let lonely = FaceConfig::new(2, 3, vec![vec![0, 1], vec![1, 2]]);
        assert_eq!(lambda1(&lonely), 0.0);
        assert!(frob(&laplacian(&lonely)) == 0.0);
        // One agent with two free periods restores an edge.
        let coupled = FaceConfig::new(2, 3, vec![vec![0], vec![1, 2]]);
        assert!(lambda1(&coupled) > KERNEL_TOL);
    }

    #[test]
    fn sampled_configurations_respect_the_rate_bound() {
        let mut rng = stream_rng(23, 0);
        for t in [4usize, 6] {
            let kappa = contraction_bound(6, t);
            for _ in 0..200 {
                let config = FaceConfig::random(6, t, &mut rng);
                let l1 = lambda1(&config);
                if l1 > 0.0 {
                    assert!(
                        l1 >= kappa,
                        "lambda1 {l1:.6e} < kappa {kappa:.6e} for {config:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn scaling_experiment_is_deterministic_and_respects_the_bound() {
        let first = scaling_experiment(6, &[4, 6, 8], Some(60), 7);
        let second = scaling_experiment(6, &[4, 6, 8], Some(60), 7);
        assert_eq!(first, second);
        for row in &first.rows {
            assert!(row.worst_lambda1 >= row.kappa_bound);
            assert_eq!(row.draws, 60);
        }
        assert!(first.slope.is_finite());
        let csv = first.to_csv();
        assert!(csv.starts_with("T,worst_lambda1,kappa_bound\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn observed_sweep_rates_stay_under_the_certified_margin() {
        for seed in 0..6u64 {
            let inst = random_instance(3, 4, 900 + seed);
            let kappa = contraction_bound(inst.n_agents, inst.horizon);
            let mut rng = stream_rng(901, seed);
            // An unreachable aggregate keeps the iteration from terminating
            // at zero residual, exposing the asymptotic ratio.
            let hi = inst.aggregate_box().col_upper;
            let p: Vec<f64> = (0..inst.horizon)
                .map(|t| hi[t] + 1.0 + rng.random_range(0.0..1.0))
                .collect();
            let out = run_apm(&inst, &p, &inst.lower_matrix(), &ApmParams::new(1e-11));
            let tail: Vec<f64> = out
                .contraction_ratios
                .iter()
                .rev()
                .take(5)
                .copied()
                .collect();
            assert!(!tail.is_empty());
            for r in tail {
                assert!(
                    r <= 1.0 - kappa + 1e-6,
                    "seed {seed}: tail ratio {r} exceeds 1 − κ = {}",
                    1.0 - kappa
                );
            }
        }
    }
}
