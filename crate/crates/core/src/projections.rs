//! Euclidean projections onto the sets the alternating iteration visits.
//!
//! Three projections do all the work:
//!
//! * [`project_agent`] — onto one agent's box-with-budget set
//!   `{x : lower ≤ x ≤ upper, Σ_t x_t = demand}`, computed exactly by a
//!   breakpoint walk over the shift parameter of the clamped solution.
//! * [`project_aggregate`] — onto the coupling set
//!   `{(y_1,…,y_N) : Σ_n y_n = p}`, which shifts every agent by the same
//!   per-period correction `ν = (p − Σ_n x_n) / N`.
//! * [`dykstra_project`] — onto an intersection of halfspaces, hyperplanes
//!   and boxes by Dykstra's algorithm, used for general polyhedral agent
//!   sets and for the master problem. The per-set correction vectors it
//!   returns are Lagrange-multiplier certificates for the projection.

use crate::model::{ProfileMatrix, TransportInstance};
use rand::Rng;

/// One agent's feasible set: a box intersected with a budget hyperplane.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBlock {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub demand: f64,
}

impl AgentBlock {
    pub fn from_instance(inst: &TransportInstance, agent: usize) -> Self {
        AgentBlock {
            lower: inst.lower[agent].clone(),
            upper: inst.upper[agent].clone(),
            demand: inst.demand[agent],
        }
    }

    pub fn horizon(&self) -> usize {
        self.lower.len()
    }

    /// The set is nonempty iff the demand is reachable inside the box
    /// (with a relative rounding slack, since demands often sit exactly on
    /// the reachable boundary).
    pub fn is_nonempty(&self) -> bool {
        let lo: f64 = self.lower.iter().sum();
        let hi: f64 = self.upper.iter().sum();
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        self.lower
            .iter()
            .zip(&self.upper)
            .all(|(l, u)| l.is_finite() && u.is_finite() && l <= u)
            && self.demand >= lo - slack
            && self.demand <= hi + slack
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.horizon()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
            && (x.iter().sum::<f64>() - self.demand).abs() <= tol * (1.0 + self.demand.abs())
    }
}

/// Exact projection of `y` onto an agent block.
///
/// The minimizer has the form `x_t(λ) = clamp(y_t + λ, lower_t, upper_t)`
/// for a scalar shift `λ` chosen so the coordinates sum to the demand. The
/// residual `λ ↦ Σ_t x_t(λ) − demand` is piecewise linear and nondecreasing
/// with breakpoints where a coordinate enters or leaves its bound, so the
/// root is located by sorting the `2T` breakpoints and interpolating on the
/// crossing segment — no iterative tolerance is involved.
pub fn project_agent(block: &AgentBlock, y: &[f64]) -> Vec<f64> {
    let t_len = block.horizon();
    assert_eq!(y.len(), t_len, "profile length");
    debug_assert!(block.is_nonempty(), "agent set must be nonempty");

    let clamp_all = |lambda: f64| -> Vec<f64> {
        y.iter()
            .zip(block.lower.iter().zip(&block.upper))
            .map(|(v, (lo, hi))| (v + lambda).clamp(*lo, *hi))
            .collect()
    };

    // Events along λ: a coordinate unclamps from its lower bound at
    // lower_t − y_t (slope +1) and saturates at its upper bound at
    // upper_t − y_t (slope −1).
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * t_len);
    for t in 0..t_len {
        events.push((block.lower[t] - y[t], 1));
        events.push((block.upper[t] - y[t], -1));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Left of the first event every coordinate sits at its lower bound.
    let mut lambda = events[0].0;
    let mut residual: f64 = block.lower.iter().sum::<f64>() - block.demand;
    let mut slope: i32 = 0;
    if residual >= 0.0 {
        // Demand at (or numerically below) the box minimum.
        return clamp_all(lambda);
    }
    let mut idx = 0;
    while idx < events.len() {
        let here = events[idx].0;
        // Advance the residual across the segment ending at this event.
        let next = residual + slope as f64 * (here - lambda);
        if next >= 0.0 && slope > 0 {
            let root = lambda - residual / slope as f64;
            return clamp_all(root.min(here));
        }
        residual = next;
        lambda = here;
        while idx < events.len() && events[idx].0 == here {
            slope += events[idx].1;
            idx += 1;
        }
        if residual >= 0.0 {
            return clamp_all(lambda);
        }
    }
    // Residual never crossed zero: demand equals the box maximum up to
    // rounding; the final clamp saturates everything at the upper bound.
    clamp_all(lambda)
}

/// Projection of the stacked profiles onto the coupling set
/// `{(y_n) : Σ_n y_n = p}`: every agent receives the same per-period shift
/// `ν = (p − Σ_n x_n) / N`. Returns the shifted matrix and `ν`.
pub fn project_aggregate(x: &ProfileMatrix, p: &[f64]) -> (ProfileMatrix, Vec<f64>) {
    let n = x.n_agents();
    assert!(n > 0, "need at least one agent");
    assert_eq!(p.len(), x.horizon(), "aggregate length");
    let sums = x.column_sums();
    let nu: Vec<f64> = p
        .iter()
        .zip(&sums)
        .map(|(pt, st)| (pt - st) / n as f64)
        .collect();
    let rows = x
        .rows
        .iter()
        .map(|row| row.iter().zip(&nu).map(|(v, d)| v + d).collect())
        .collect();
    (ProfileMatrix::new(rows), nu)
}

/// Closed halfspace `{x : normal · x ≤ rhs}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub rhs: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, rhs: f64) -> Self {
        Halfspace { normal, rhs }
    }

    /// Positive part of the constraint residual `normal · x − rhs`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        (dot(&self.normal, x) - self.rhs).max(0.0)
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let excess = dot(&self.normal, x) - self.rhs;
        if excess <= 0.0 {
            return x.to_vec();
        }
        let nn = dot(&self.normal, &self.normal);
        assert!(nn > 0.0, "halfspace normal must be nonzero");
        x.iter()
            .zip(&self.normal)
            .map(|(v, a)| v - excess / nn * a)
            .collect()
    }
}

/// One factor set of a Dykstra intersection.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionSet {
    Halfspace(Halfspace),
    /// Affine hyperplane `normal · x = rhs`.
    Hyperplane { normal: Vec<f64>, rhs: f64 },
    /// Componentwise bounds `lower ≤ x ≤ upper`.
    Bounds { lower: Vec<f64>, upper: Vec<f64> },
}

impl ProjectionSet {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ProjectionSet::Halfspace(h) => h.project(x),
            ProjectionSet::Hyperplane { normal, rhs } => {
                let nn = dot(normal, normal);
                assert!(nn > 0.0, "hyperplane normal must be nonzero");
                let excess = dot(normal, x) - rhs;
                x.iter()
                    .zip(normal)
                    .map(|(v, a)| v - excess / nn * a)
                    .collect()
            }
            ProjectionSet::Bounds { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
                .collect(),
        }
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            ProjectionSet::Halfspace(h) => h.violation(x),
            ProjectionSet::Hyperplane { normal, rhs } => (dot(normal, x) - rhs).abs(),
            ProjectionSet::Bounds { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (lo, hi))| (lo - v).max(*v - hi).max(0.0))
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DykstraParams {
    pub max_cycles: usize,
    pub tol: f64,
}

impl DykstraParams {
    /// Budget scaled to the problem: `10 · dimension · sets` cycles at a
    /// `1e-10` fixed-point tolerance.
    pub fn for_problem(dimension: usize, n_sets: usize) -> Self {
        DykstraParams {
            max_cycles: 10 * dimension.max(1) * n_sets.max(1),
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DykstraOutcome {
    pub point: Vec<f64>,
    /// Per-set correction vectors; the final point satisfies
    /// `start − point = Σ_i corrections[i]`, and for a halfspace the
    /// correction is a nonnegative multiple of its normal — a Lagrange
    /// multiplier certificate.
    pub corrections: Vec<Vec<f64>>,
    pub cycles: usize,
    pub max_violation: f64,
    pub converged: bool,
}

/// Dykstra's alternating projection onto `⋂_i sets[i]`.
///
/// Unlike plain cyclic projection, each set keeps a correction vector that
/// is added back before its projection; the iterates then converge to the
/// exact nearest point of the intersection rather than merely some point in
/// it. Terminates when a full cycle moves the iterate by at most `tol` in
/// the max norm and every violation is below `tol`.
pub fn dykstra_project(start: &[f64], sets: &[ProjectionSet], params: DykstraParams) -> DykstraOutcome {
    let dim = start.len();
    let mut z = start.to_vec();
    let mut corrections = vec![vec![0.0; dim]; sets.len()];
    let mut cycles = 0;
    let mut converged = false;
    while cycles < params.max_cycles {
        let before = z.clone();
        // The iterate alone can sit still for many cycles while the
        // corrections crawl (they change by a fixed step per cycle near a
        // blocking face), so convergence must watch both.
        let mut correction_move: f64 = 0.0;
        for (set, e) in sets.iter().zip(corrections.iter_mut()) {
            let w: Vec<f64> = z.iter().zip(e.iter()).map(|(a, b)| a + b).collect();
            let next = set.project(&w);
            for t in 0..dim {
                let updated = w[t] - next[t];
                correction_move = correction_move.max((updated - e[t]).abs());
                e[t] = updated;
            }
            z = next;
        }
        cycles += 1;
        let moved = z
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b).abs())
            .fold(correction_move, f64::max);
        let viol = sets.iter().map(|s| s.violation(&z)).fold(0.0, f64::max);
        if moved <= params.tol && viol <= params.tol {
            converged = true;
            break;
        }
    }
    let max_violation = sets.iter().map(|s| s.violation(&z)).fold(0.0, f64::max);
    DykstraOutcome {
        point: z,
        corrections,
        cycles,
        max_violation,
        converged,
    }
}

/// Uniformly-seeded feasible point of an agent block: draw inside the box,
/// then project onto the block. Used by instance samplers and tests.
pub fn sample_block_point<R: Rng>(block: &AgentBlock, rng: &mut R) -> Vec<f64> {
    let draw: Vec<f64> = block
        .lower
        .iter()
        .zip(&block.upper)
        .map(|(lo, hi)| {
            if hi > lo {
                rng.random_range(*lo..*hi)
            } else {
                *lo
            }
        })
        .collect();
    project_agent(block, &draw)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense::solve_linear;
    use crate::model::{random_instance, stream_rng, toy_instance};
    use proptest::prelude::*;
    use rand::Rng;

    /// Exhaustive active-set oracle: every projection candidate clamps some
    /// coordinates at bounds and shifts the rest uniformly; the projection
    /// is the feasible candidate nearest to `y`.
    fn oracle_project(block: &AgentBlock, y: &[f64]) -> Vec<f64> {
        let t_len = block.horizon();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for pattern in 0..3usize.pow(t_len as u32) {
            let mut code = pattern;
            let mut states = Vec::with_capacity(t_len);
            for _ in 0..t_len {
                states.push(code % 3); // 0 = lower, 1 = free, 2 = upper
                code /= 3;
            }
            let fixed: f64 = (0..t_len)
                .map(|t| match states[t] {
                    0 => block.lower[t],
                    2 => block.upper[t],
                    _ => 0.0,
                })
                .sum();
            let free: Vec<usize> = (0..t_len).filter(|&t| states[t] == 1).collect();
            let mut x = vec![0.0; t_len];
            if free.is_empty() {
                if (fixed - block.demand).abs() > 1e-9 {
                    continue;
                }
            } else {
                let y_free: f64 = free.iter().map(|&t| y[t]).sum();
                let lambda = (block.demand - fixed - y_free) / free.len() as f64;
                for &t in &free {
                    x[t] = y[t] + lambda;
                }
            }
            for t in 0..t_len {
                match states[t] {
                    0 => x[t] = block.lower[t],
                    2 => x[t] = block.upper[t],
                    _ => {}
                }
            }
            if !block.contains(&x, 1e-9) {
                continue;
            }
            let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, x));
            }
        }
        best.expect("nonempty block has a projection").1
    }

    fn random_block<R: Rng>(t_len: usize, rng: &mut R) -> AgentBlock {
        let lower: Vec<f64> = (0..t_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let upper: Vec<f64> = lower
            .iter()
            .map(|l| l + rng.random_range(0.0..2.0))
            .collect();
        let (lo, hi): (f64, f64) = (lower.iter().sum(), upper.iter().sum());
        let u: f64 = rng.random();
        AgentBlock {
            lower,
            upper,
            demand: lo + u * (hi - lo),
        }
    }

    #[test]
    fn breakpoint_projection_matches_active_set_oracle() {
        let mut rng = stream_rng(31, 0);
        for case in 0..300 {
            let t_len = rng.random_range(2..=5);
            let block = random_block(t_len, &mut rng);
            let y: Vec<f64> = (0..t_len).map(|_| rng.random_range(-3.0..3.0)).collect();
            let got = project_agent(&block, &y);
            assert!(block.contains(&got, 1e-9), "case {case}: outside block");
            let want = oracle_project(&block, &y);
            for t in 0..t_len {
                assert!(
                    (got[t] - want[t]).abs() < 1e-8,
                    "case {case} period {t}: {} vs oracle {}",
                    got[t],
                    want[t]
                );
            }
        }
    }

    #[test]
    fn projection_handles_saturated_demands() {
        let block = AgentBlock {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 2.0],
            demand: 3.0, // exactly the box maximum
        };
        let x = project_agent(&block, &[-5.0, 9.0]);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);

        let tight = AgentBlock {
            lower: vec![0.5, 0.5],
            upper: vec![0.5, 0.5],
            demand: 1.0, // degenerate box: single point
        };
        assert_eq!(project_agent(&tight, &[3.0, -3.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn aggregate_projection_is_the_uniform_shift() {
        let inst = toy_instance();
        let x = inst.lower_matrix();
        let p = vec![1.0, 0.4, 1.0, 0.9];
        let (y, nu) = project_aggregate(&x, &p);
        for t in 0..4 {
            assert!((nu[t] - p[t] / 3.0).abs() < 1e-12);
        }
        let sums = y.column_sums();
        for t in 0..4 {
            assert!((sums[t] - p[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_projection_matches_kkt_linear_system() {
        // Stationarity of min Σ_n ‖y_n − x_n‖² over Σ_n y_n = p gives the
        // square system: y_{n,t} − μ_t/2 = x_{n,t} and Σ_n y_{n,t} = p_t.
        let mut rng = stream_rng(77, 0);
        let (n, t_len) = (3, 4);
        let x = ProfileMatrix::new(
            (0..n)
                .map(|_| (0..t_len).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        );
        let p: Vec<f64> = (0..t_len).map(|_| rng.random_range(-2.0..2.0)).collect();

        let dim = n * t_len + t_len;
        let mut a = vec![vec![0.0; dim]; dim];
        let mut b = vec![0.0; dim];
        for agent in 0..n {
            for t in 0..t_len {
                let row = agent * t_len + t;
                a[row][row] = 1.0;
                a[row][n * t_len + t] = -0.5;
                b[row] = x.rows[agent][t];
            }
        }
        for t in 0..t_len {
            let row = n * t_len + t;
            for agent in 0..n {
                a[row][agent * t_len + t] = 1.0;
            }
            b[row] = p[t];
        }
        let solution = solve_linear(&a, &b).expect("KKT system is nonsingular");

        let (y, _) = project_aggregate(&x, &p);
        for agent in 0..n {
            for t in 0..t_len {
                assert!((y.rows[agent][t] - solution[agent * t_len + t]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dykstra_reproduces_the_exact_block_projection() {
        let mut rng = stream_rng(55, 0);
        for _ in 0..40 {
            let t_len = rng.random_range(2..=5);
            let block = random_block(t_len, &mut rng);
            let y: Vec<f64> = (0..t_len).map(|_| rng.random_range(-3.0..3.0)).collect();
            let sets = vec![
                ProjectionSet::Bounds {
                    lower: block.lower.clone(),
                    upper: block.upper.clone(),
                },
                ProjectionSet::Hyperplane {
                    normal: vec![1.0; t_len],
                    rhs: block.demand,
                },
            ];
            // Correctness test, not a budget test: near-degenerate random
            // blocks can make the linear rate arbitrarily slow, so give the
            // iteration plenty of room.
            let params = DykstraParams {
                max_cycles: 50_000,
                tol: 1e-10,
            };
            let out = dykstra_project(&y, &sets, params);
            assert!(out.converged, "Dykstra must converge on a box/plane pair");
            let exact = project_agent(&block, &y);
            for t in 0..t_len {
                assert!(
                    (out.point[t] - exact[t]).abs() < 1e-7,
                    "{} vs {} (block {block:?}, y {y:?}, cycles {}, viol {:.3e})",
                    out.point[t],
                    exact[t],
                    out.cycles,
                    out.max_violation
                );
            }
        }
    }

    #[test]
    fn dykstra_corrections_decompose_the_displacement() {
        let sets = vec![
            ProjectionSet::Halfspace(Halfspace::new(vec![1.0, 1.0], 1.0)),
            ProjectionSet::Halfspace(Halfspace::new(vec![1.0, -1.0], 0.2)),
            ProjectionSet::Bounds {
                lower: vec![-5.0, -5.0],
                upper: vec![5.0, 5.0],
            },
        ];
        let start = [2.0, 1.5];
        let out = dykstra_project(&start, &sets, DykstraParams::for_problem(2, 3));
        assert!(out.converged);
        for t in 0..2 {
            let total: f64 = out.corrections.iter().map(|e| e[t]).sum();
            assert!(
                (start[t] - out.point[t] - total).abs() < 1e-9,
                "corrections must add up to the displacement"
            );
        }
        // Halfspace corrections are nonnegative multiples of their normals.
        for (set, e) in sets.iter().zip(&out.corrections) {
            if let ProjectionSet::Halfspace(h) = set {
                let scale = dot(e, &h.normal) / dot(&h.normal, &h.normal);
                assert!(scale >= -1e-12, "multiplier must be nonnegative");
                for t in 0..2 {
                    assert!((e[t] - scale * h.normal[t]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn halfspace_projection_is_idempotent_and_feasible() {
        let h = Halfspace::new(vec![3.0, -1.0, 0.5], 2.0);
        let x = [5.0, 0.0, 1.0];
        let p = h.project(&x);
        assert!(h.violation(&p) < 1e-12);
        assert_eq!(h.project(&p), p);
        // Interior points are untouched.
        let inside = [0.0, 1.0, 0.0];
        assert_eq!(h.project(&inside), inside.to_vec());
    }

    #[test]
    fn sampled_points_are_feasible() {
        let inst = random_instance(4, 6, 5);
        let mut rng = stream_rng(5, 99);
        for n in 0..4 {
            let block = AgentBlock::from_instance(&inst, n);
            for _ in 0..25 {
                let x = sample_block_point(&block, &mut rng);
                assert!(block.contains(&x, 1e-9));
            }
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(
            seed in 0u64..5_000,
            shift in -4.0f64..4.0,
        ) {
            let mut rng = stream_rng(seed, 3);
            let t_len = rng.random_range(2..=6);
            let block = random_block(t_len, &mut rng);
            let y: Vec<f64> = (0..t_len).map(|_| rng.random_range(-2.0..2.0) + shift).collect();
            let once = project_agent(&block, &y);
            let twice = project_agent(&block, &once);
            for t in 0..t_len {
                prop_assert!((once[t] - twice[t]).abs() < 1e-9);
            }
        }

        #[test]
        fn projection_is_nonexpansive(seed in 0u64..5_000) {
            let mut rng = stream_rng(seed, 4);
            let t_len = rng.random_range(2..=6);
            let block = random_block(t_len, &mut rng);
            let a: Vec<f64> = (0..t_len).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..t_len).map(|_| rng.random_range(-3.0..3.0)).collect();
            let pa = project_agent(&block, &a);
            let pb = project_agent(&block, &b);
            let d_in: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
            let d_out: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum();
            prop_assert!(d_out <= d_in + 1e-12);
        }
    }
}
