//! Dense two-phase primal simplex for small linear programs with general
//! variable bounds.
//!
//! The solver keeps an explicit tableau (artificial columns double as B⁻¹),
//! uses Dantzig pricing with an automatic switch to Bland's rule after a
//! degenerate stall, and always produces a checkable artifact:
//!
//! * optimal: primal solution plus row duals satisfying strong duality
//!   (including bound terms, see [`dual_objective`]);
//! * infeasible: a Farkas vector `y` over the rows proving emptiness, see
//!   [`verify_farkas`];
//! * unbounded: an improving recession direction, see [`verify_ray`].
//!
//! Everything is dense and allocation-happy on purpose: problems in this
//! crate stay below a few hundred variables and clarity wins.

use thiserror::Error;

/// Default pivot / feasibility tolerance.
pub const DEFAULT_LP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Eq,
    Ge,
}

/// `sense objective·x` subject to `rows[i]·x (kind[i]) rhs[i]` and
/// `var_lower ≤ x ≤ var_upper` (entries may be ±∞).
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub row_kinds: Vec<RowKind>,
    pub rhs: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
}

impl LinearProgram {
    /// New program over `objective.len()` free variables and no rows.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            rows: Vec::new(),
            row_kinds: Vec::new(),
            rhs: Vec::new(),
            var_lower: vec![f64::NEG_INFINITY; n],
            var_upper: vec![f64::INFINITY; n],
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, kind: RowKind, rhs: f64) {
        self.rows.push(coeffs);
        self.row_kinds.push(kind);
        self.rhs.push(rhs);
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.var_lower[var] = lower;
        self.var_upper[var] = upper;
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if n == 0 {
            return Err(LpError::Shape("objective has no variables".into()));
        }
        if self.rows.len() != self.rhs.len() || self.rows.len() != self.row_kinds.len() {
            return Err(LpError::Shape("row/kind/rhs lengths differ".into()));
        }
        if self.var_lower.len() != n || self.var_upper.len() != n {
            return Err(LpError::Shape("bound lengths differ from objective".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != n {
                return Err(LpError::Shape(format!("row {i} has length {}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) || !self.rhs[i].is_finite() {
                return Err(LpError::NonFinite);
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite);
        }
        for j in 0..n {
            let (l, u) = (self.var_lower[j], self.var_upper[j]);
            if l.is_nan() || u.is_nan() {
                return Err(LpError::NonFinite);
            }
            if l > u {
                return Err(LpError::BoundOrder { var: j });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal {
        primal: Vec<f64>,
        /// Row multipliers; `dual_objective` reproduces the optimal value.
        dual: Vec<f64>,
        objective: f64,
    },
    Infeasible {
        /// Farkas row multipliers, ‖·‖∞-normalized; see [`verify_farkas`].
        farkas: Vec<f64>,
    },
    Unbounded {
        /// Improving recession direction, ‖·‖∞-normalized; see [`verify_ray`].
        ray: Vec<f64>,
    },
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<(&[f64], &[f64], f64)> {
        match self {
            LpOutcome::Optimal {
                primal,
                dual,
                objective,
            } => Some((primal, dual, *objective)),
            _ => None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        matches!(self, LpOutcome::Optimal { .. })
    }
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Shape(String),
    #[error("program contains NaN or infinite data where finite values are required")]
    NonFinite,
    #[error("variable {var} has lower bound above upper bound")]
    BoundOrder { var: usize },
    #[error("simplex iteration limit reached (pivoting stalled)")]
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable pinned at zero until it enters the basis.
    Free,
}

struct Tableau {
    m: usize,
    n_struct: usize,
    n_total: usize,
    /// `m × (n_total + 1)` rows of `B⁻¹ [A | b]`.
    t: Vec<Vec<f64>>,
    /// Reduced-cost row for the current phase objective.
    z: Vec<f64>,
    /// Current phase costs per column.
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    value: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    /// Artificial column for row `i` is `art_sign[i]·e_i`.
    art_sign: Vec<f64>,
    tol: f64,
    bland: bool,
    degenerate_streak: usize,
    pivots: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded { entering: usize, direction: f64 },
}

impl Tableau {
    fn build(lp: &LinearProgram, tol: f64) -> Tableau {
        let m = lp.num_rows();
        let n_struct = lp.num_vars();
        let n_slack = lp
            .row_kinds
            .iter()
            .filter(|k| !matches!(k, RowKind::Eq))
            .count();
        let n_total = n_struct + n_slack + m;
        let art0 = n_struct + n_slack;

        let mut lo = vec![0.0; n_total];
        let mut hi = vec![f64::INFINITY; n_total];
        lo[..n_struct].copy_from_slice(&lp.var_lower);
        hi[..n_struct].copy_from_slice(&lp.var_upper);

        // Nonbasic start: structurals at the finite bound nearest zero.
        let mut value = vec![0.0; n_total];
        let mut state = vec![VarState::AtLower; n_total];
        for j in 0..n_struct {
            let (l, u) = (lo[j], hi[j]);
            if l.is_finite() && (!u.is_finite() || l.abs() <= u.abs()) {
                value[j] = l;
                state[j] = VarState::AtLower;
            } else if u.is_finite() {
                value[j] = u;
                state[j] = VarState::AtUpper;
            } else {
                value[j] = 0.0;
                state[j] = VarState::Free;
            }
        }

        // Standardized rows: a·x + slack = b with slack ≥ 0 (Le) or ≤ 0
        // encoded as coefficient −1 with slack ≥ 0 (Ge).
        let mut a_rows = vec![vec![0.0; n_total]; m];
        let mut slack_idx = n_struct;
        for i in 0..m {
            a_rows[i][..n_struct].copy_from_slice(&lp.rows[i]);
            match lp.row_kinds[i] {
                RowKind::Le => {
                    a_rows[i][slack_idx] = 1.0;
                    slack_idx += 1;
                }
                RowKind::Ge => {
                    a_rows[i][slack_idx] = -1.0;
                    slack_idx += 1;
                }
                RowKind::Eq => {}
            }
        }

        let mut art_sign = vec![1.0; m];
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            let mut residual = lp.rhs[i];
            for j in 0..(n_struct + n_slack) {
                residual -= a_rows[i][j] * value[j];
            }
            art_sign[i] = if residual >= 0.0 { 1.0 } else { -1.0 };
            let art = art0 + i;
            a_rows[i][art] = art_sign[i];
            basis.push(art);
            state[art] = VarState::Basic(i);
            value[art] = residual.abs();
        }

        // Initial B is diag(art_sign), so B⁻¹ = diag(art_sign).
        let mut t = vec![vec![0.0; n_total + 1]; m];
        for i in 0..m {
            for j in 0..n_total {
                t[i][j] = art_sign[i] * a_rows[i][j];
            }
            t[i][n_total] = art_sign[i] * lp.rhs[i];
        }

        Tableau {
            m,
            n_struct,
            n_total,
            t,
            z: vec![0.0; n_total],
            cost: vec![0.0; n_total],
            lo,
            hi,
            value,
            state,
            basis,
            art_sign,
            tol,
            bland: false,
            degenerate_streak: 0,
            pivots: 0,
        }
    }

    fn art0(&self) -> usize {
        self.n_total - self.m
    }

    fn set_phase_costs(&mut self, cost: Vec<f64>) {
        debug_assert_eq!(cost.len(), self.n_total);
        self.cost = cost;
        for j in 0..self.n_total {
            let mut z = self.cost[j];
            for i in 0..self.m {
                z -= self.cost[self.basis[i]] * self.t[i][j];
            }
            self.z[j] = z;
        }
        self.bland = false;
        self.degenerate_streak = 0;
    }

    fn refresh_basic_values(&mut self) {
        for i in 0..self.m {
            let mut v = self.t[i][self.n_total];
            for j in 0..self.n_total {
                if matches!(self.state[j], VarState::Basic(_)) {
                    continue;
                }
                let xj = self.value[j];
                if xj != 0.0 {
                    v -= self.t[i][j] * xj;
                }
            }
            self.value[self.basis[i]] = v;
        }
    }

    /// Picks an entering column and its direction, or `None` at optimality.
    fn choose_entering(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None; // (col, dir, score)
        for j in 0..self.n_total {
            if self.hi[j] - self.lo[j] <= 0.0 {
                continue; // fixed column (retired artificials)
            }
            let zj = self.z[j];
            let candidate = match self.state[j] {
                VarState::Basic(_) => None,
                VarState::AtLower => (zj < -self.tol).then_some((j, 1.0, -zj)),
                VarState::AtUpper => (zj > self.tol).then_some((j, -1.0, zj)),
                VarState::Free => {
                    if zj < -self.tol {
                        Some((j, 1.0, -zj))
                    } else if zj > self.tol {
                        Some((j, -1.0, zj))
                    } else {
                        None
                    }
                }
            };
            let Some(cand) = candidate else { continue };
            if self.bland {
                return Some((cand.0, cand.1));
            }
            if best.map_or(true, |b| cand.2 > b.2) {
                best = Some(cand);
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Runs the current phase to optimality or unboundedness.
    fn run_phase(&mut self, iter_limit: usize) -> Result<PhaseEnd, LpError> {
        loop {
            if self.pivots > iter_limit {
                return Err(LpError::IterationLimit);
            }
            let Some((enter, dir)) = self.choose_entering() else {
                return Ok(PhaseEnd::Optimal);
            };
            self.pivots += 1;

            // Ratio test: largest step θ ≥ 0 for the entering variable.
            let own_span = self.hi[enter] - self.lo[enter];
            let mut theta = if own_span.is_finite() {
                own_span
            } else {
                f64::INFINITY
            };
            let mut leaving: Option<(usize, bool)> = None; // (row, hits_upper)
            for i in 0..self.m {
                let rate = -dir * self.t[i][enter];
                let b = self.basis[i];
                let (step, hits_upper) = if rate < -self.tol {
                    if !self.lo[b].is_finite() {
                        continue;
                    }
                    (((self.value[b] - self.lo[b]) / -rate).max(0.0), false)
                } else if rate > self.tol {
                    if !self.hi[b].is_finite() {
                        continue;
                    }
                    (((self.hi[b] - self.value[b]) / rate).max(0.0), true)
                } else {
                    continue;
                };
                let tie = self.tol * (1.0 + step.abs());
                let better = match leaving {
                    // A blocking row must strictly beat a bound flip.
                    None => step < theta,
                    Some((row, _)) => {
                        if step < theta - tie {
                            true
                        } else if step <= theta + tie {
                            // Tie: smallest leaving column id (anti-cycling).
                            self.basis[i] < self.basis[row]
                        } else {
                            false
                        }
                    }
                };
                if better {
                    theta = theta.min(step);
                    leaving = Some((i, hits_upper));
                }
            }

            if theta.is_infinite() {
                return Ok(PhaseEnd::Unbounded {
                    entering: enter,
                    direction: dir,
                });
            }

            if theta <= self.tol {
                self.degenerate_streak += 1;
                if self.degenerate_streak > 3 * (self.m + self.n_total) {
                    self.bland = true;
                }
            } else {
                self.degenerate_streak = 0;
                if self.bland {
                    self.bland = false;
                }
            }

            match leaving {
                None => {
                    // Bound-to-bound flip of the entering variable.
                    self.value[enter] = if dir > 0.0 {
                        self.hi[enter]
                    } else {
                        self.lo[enter]
                    };
                    self.state[enter] = if dir > 0.0 {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.refresh_basic_values();
                }
                Some((row, hits_upper)) => {
                    let b_out = self.basis[row];
                    self.value[enter] += dir * theta;
                    self.state[b_out] = if hits_upper {
                        self.value[b_out] = self.hi[b_out];
                        VarState::AtUpper
                    } else {
                        self.value[b_out] = self.lo[b_out];
                        VarState::AtLower
                    };
                    self.pivot(row, enter);
                }
            }
        }
    }

    fn pivot(&mut self, row: usize, enter: usize) {
        let pivot = self.t[row][enter];
        debug_assert!(pivot.abs() > 1e-12, "pivot too small: {pivot:e}");
        let inv = 1.0 / pivot;
        for v in self.t[row].iter_mut() {
            *v *= inv;
        }
        let pivot_row = self.t[row].clone();
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let factor = self.t[i][enter];
            if factor == 0.0 {
                continue;
            }
            for (v, pv) in self.t[i].iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
            self.t[i][enter] = 0.0; // exact elimination
        }
        let zfactor = self.z[enter];
        if zfactor != 0.0 {
            for (j, pv) in pivot_row[..self.n_total].iter().enumerate() {
                self.z[j] -= zfactor * pv;
            }
            self.z[enter] = 0.0;
        }
        self.basis[row] = enter;
        self.state[enter] = VarState::Basic(row);
        self.refresh_basic_values();
    }

    /// Row duals `y = c_Bᵀ B⁻¹` for the current phase costs, read off the
    /// artificial columns (whose reduced costs are `c_art − y·(±e_i)`).
    fn duals(&self) -> Vec<f64> {
        let art0 = self.art0();
        (0..self.m)
            .map(|i| self.art_sign[i] * (self.cost[art0 + i] - self.z[art0 + i]))
            .collect()
    }

    fn phase1_objective(&self) -> f64 {
        let art0 = self.art0();
        (0..self.m).map(|i| self.value[art0 + i]).sum()
    }
}

/// Solves the program; `tol` is the pivot/feasibility tolerance
/// ([`DEFAULT_LP_TOL`] unless the caller has a reason to loosen it).
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<LpOutcome, LpError> {
    lp.validate()?;
    let tol = if tol > 0.0 { tol } else { DEFAULT_LP_TOL };
    let mut tab = Tableau::build(lp, tol);
    let iter_limit = 50_000 + 200 * (tab.m + tab.n_total);

    // Phase 1: minimize the artificial mass.
    let mut phase1_cost = vec![0.0; tab.n_total];
    for j in tab.art0()..tab.n_total {
        phase1_cost[j] = 1.0;
    }
    tab.set_phase_costs(phase1_cost);
    tab.refresh_basic_values();
    match tab.run_phase(iter_limit)? {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded { .. } => {
            unreachable!("phase-1 objective is bounded below by zero")
        }
    }
    let b_scale = lp.rhs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if tab.phase1_objective() > 1e-8 * (1.0 + b_scale) {
        let mut farkas = tab.duals();
        // Phase-1 duals certify emptiness; normalize for readability.
        let scale = farkas.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if scale > 0.0 {
            for v in farkas.iter_mut() {
                *v /= scale;
            }
        }
        return Ok(LpOutcome::Infeasible { farkas });
    }

    // Phase 2: retire artificials (pin to zero) and install the real costs.
    let art0 = tab.art0();
    for j in art0..tab.n_total {
        tab.lo[j] = 0.0;
        tab.hi[j] = 0.0;
        if !matches!(tab.state[j], VarState::Basic(_)) {
            tab.value[j] = 0.0;
            tab.state[j] = VarState::AtLower;
        }
    }
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut phase2_cost = vec![0.0; tab.n_total];
    for j in 0..tab.n_struct {
        phase2_cost[j] = sign * lp.objective[j];
    }
    tab.set_phase_costs(phase2_cost);
    tab.refresh_basic_values();

    match tab.run_phase(iter_limit)? {
        PhaseEnd::Optimal => {
            let primal: Vec<f64> = tab.value[..tab.n_struct].to_vec();
            let mut dual = tab.duals();
            if sign < 0.0 {
                for v in dual.iter_mut() {
                    *v = -*v;
                }
            }
            let objective = lp
                .objective
                .iter()
                .zip(&primal)
                .map(|(c, x)| c * x)
                .sum::<f64>();
            Ok(LpOutcome::Optimal {
                primal,
                dual,
                objective,
            })
        }
        PhaseEnd::Unbounded {
            entering,
            direction,
        } => {
            let mut ray = vec![0.0; tab.n_struct];
            if entering < tab.n_struct {
                ray[entering] = direction;
            }
            for i in 0..tab.m {
                let b = tab.basis[i];
                if b < tab.n_struct {
                    ray[b] = -direction * tab.t[i][entering];
                }
            }
            let scale = ray.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if scale > 0.0 {
                for v in ray.iter_mut() {
                    *v /= scale;
                }
            }
            Ok(LpOutcome::Unbounded { ray })
        }
    }
}

/// Lagrangian dual value `y·b + Σ_j extremal bound term` for row duals `y`.
/// At an optimal pair this equals the primal objective (strong duality).
pub fn dual_objective(lp: &LinearProgram, dual: &[f64]) -> f64 {
    let n = lp.num_vars();
    let mut value: f64 = dual.iter().zip(&lp.rhs).map(|(y, b)| y * b).sum();
    for j in 0..n {
        let mut reduced = lp.objective[j];
        for (i, row) in lp.rows.iter().enumerate() {
            reduced -= dual[i] * row[j];
        }
        if reduced.abs() <= 1e-9 {
            continue;
        }
        // min-sense Lagrangian closes over x_j at the bound favored by the
        // reduced cost; max-sense mirrors it.
        let bound = match lp.sense {
            Sense::Minimize => {
                if reduced > 0.0 {
                    lp.var_lower[j]
                } else {
                    lp.var_upper[j]
                }
            }
            Sense::Maximize => {
                if reduced > 0.0 {
                    lp.var_upper[j]
                } else {
                    lp.var_lower[j]
                }
            }
        };
        value += reduced * bound;
    }
    value
}

/// Checks a Farkas certificate: row-kind sign conditions plus
/// `sup_{l ≤ x ≤ u} (yᵀA)·x < yᵀb`, which proves the rows and bounds are
/// jointly inconsistent.
pub fn verify_farkas(lp: &LinearProgram, farkas: &[f64], tol: f64) -> bool {
    if farkas.len() != lp.num_rows() {
        return false;
    }
    for (y, kind) in farkas.iter().zip(&lp.row_kinds) {
        match kind {
            RowKind::Le if *y > tol => return false,
            RowKind::Ge if *y < -tol => return false,
            _ => {}
        }
    }
    let n = lp.num_vars();
    let mut combined = vec![0.0; n];
    for (i, row) in lp.rows.iter().enumerate() {
        for j in 0..n {
            combined[j] += farkas[i] * row[j];
        }
    }
    let mut sup = 0.0;
    for j in 0..n {
        let d = combined[j];
        if d.abs() <= tol {
            continue;
        }
        let bound = if d > 0.0 {
            lp.var_upper[j]
        } else {
            lp.var_lower[j]
        };
        if !bound.is_finite() {
            return false;
        }
        sup += d * bound;
    }
    let yb: f64 = farkas.iter().zip(&lp.rhs).map(|(y, b)| y * b).sum();
    sup < yb - tol * (1.0 + yb.abs())
}

/// Checks an unbounded-direction certificate: a recession direction of the
/// feasible set along which the objective improves.
pub fn verify_ray(lp: &LinearProgram, ray: &[f64], tol: f64) -> bool {
    if ray.len() != lp.num_vars() {
        return false;
    }
    for (j, &r) in ray.iter().enumerate() {
        if lp.var_lower[j].is_finite() && r < -tol {
            return false;
        }
        if lp.var_upper[j].is_finite() && r > tol {
            return false;
        }
    }
    for (i, row) in lp.rows.iter().enumerate() {
        let along: f64 = row.iter().zip(ray).map(|(a, r)| a * r).sum();
        let ok = match lp.row_kinds[i] {
            RowKind::Le => along <= tol,
            RowKind::Ge => along >= -tol,
            RowKind::Eq => along.abs() <= tol,
        };
        if !ok {
            return false;
        }
    }
    let drift: f64 = lp.objective.iter().zip(ray).map(|(c, r)| c * r).sum();
    match lp.sense {
        Sense::Minimize => drift < -tol,
        Sense::Maximize => drift > tol,
    }
}
