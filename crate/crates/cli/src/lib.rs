//! Implementations behind the `disagg` binary.
//!
//! Every command builds a serializable report that knows whether its
//! embedded checks passed. The binary renders the report (text or
//! JSON), honours `--out`, and maps verdicts onto exit codes:
//! 0 all checks pass, 1 a check failed, 2 usage or runtime error.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use disagg_core::model::stream_rng;
use disagg_core::{
    audit_transcript, hoffman_feasible, microgrid_instance, optimal_disaggregation,
    optimal_disaggregation_poly, permutation_invariance_check, privacy_audit, random_instance,
    run_apm, sample_aggregate_candidate, sample_disaggregable, scaling_experiment, AgentBlock,
    ApmParams, AuditFinding, FeasibilityReport, FeasibleRegion, HoffmanCut, LambdaCut,
    MicrogridMaster, PolyAgent, ProtocolError, ProtocolParams, QuadraticCost, QuadraticMaster,
    RunReport, ScalingTable, TransportInstance,
};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

/// Anything a command can fail with. `Check` means the command ran but
/// an embedded assertion did not hold (exit 1); the rest are usage or
/// runtime errors (exit 2).
#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Parse(String),
    #[error("protocol: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("{0}")]
    Check(String),
}

// ---------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------

/// Run `task(0..count)` and collect results in index order, splitting the
/// indices over up to `jobs` worker threads. Each task owns its index, so
/// the collected output is identical for every job count.
pub fn run_indexed<T, F>(count: usize, jobs: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let jobs = jobs.max(1).min(count.max(1));
    if jobs <= 1 {
        return (0..count).map(task).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..count).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let value = task(i);
                *slots[i].lock().expect("slot lock") = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("worker filled slot"))
        .collect()
}

/// A seeded shuffle of `0..n`, nudged away from the identity so that a
/// permutation test actually permutes (for `n ≥ 2`).
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, 97);
    perm.shuffle(&mut rng);
    if n >= 2 && perm.iter().enumerate().all(|(i, &v)| i == v) {
        perm.rotate_left(1);
    }
    perm
}

fn fmt_vec(v: &[f64]) -> String {
    let body: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", body.join(", "))
}

fn cut_expr(time_set: &[usize]) -> String {
    let body: Vec<String> = time_set.iter().map(|t| format!("p[{t}]")).collect();
    body.join("+")
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn vec_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, tol))
}

fn check_sequence(
    label: &str,
    got: &[Vec<f64>],
    want: &[[f64; 4]],
    tol: f64,
    out: &mut Vec<String>,
) {
    if got.len() != want.len() {
        out.push(format!(
            "{label}: expected {} entries, got {}",
            want.len(),
            got.len()
        ));
        return;
    }
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        if !vec_close(g, w, tol) {
            out.push(format!(
                "{label} {}: expected {}, got {}",
                i + 1,
                fmt_vec(w),
                fmt_vec(g)
            ));
        }
    }
}

// ---------------------------------------------------------------------
// toy
// ---------------------------------------------------------------------

const TOY_TOL: f64 = 1e-2;

const SUBSET_MASTERS: [[f64; 4]; 3] = [
    [1.0, 0.4, 1.0, 0.9],
    [0.75, 0.4, 1.4, 0.75],
    [0.9, 0.4, 1.4, 0.6],
];
const SUBSET_CUT_SETS: [&[usize]; 2] = [&[0, 1, 3], &[1, 2, 3]];
const SUBSET_CUT_RHS: [f64; 2] = [1.9, 2.4];

const PLANE_MASTERS: [[f64; 4]; 4] = [
    [1.0, 0.4, 1.0, 0.9],
    [0.8097, 0.4, 1.3984, 0.6919],
    [0.9062, 0.4, 1.3823, 0.6115],
    [0.9, 0.4, 1.4, 0.6],
];
const PLANE_NORMALS: [[f64; 4]; 3] = [
    [-0.25, -0.25, 1.0, -0.5],
    [1.0, -0.509, 0.018, -0.509],
    [-0.333, -0.333, 1.0, -0.333],
];
const PLANE_OFFSETS: [f64; 3] = [0.75, 0.4161, 0.7666];

/// What one pipeline produced on the built-in instance, plus every
/// discrepancy against the reference trajectory (empty means on track).
#[derive(Debug, Serialize)]
pub struct PipelineCheck {
    pub outer_iterations: usize,
    pub master_sequence: Vec<Vec<f64>>,
    pub cuts: Vec<HoffmanCut>,
    pub planes: Vec<LambdaCut>,
    pub mismatches: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ToyReport {
    pub subset_pipeline: PipelineCheck,
    pub plane_pipeline: PipelineCheck,
}

impl ToyReport {
    pub fn pass(&self) -> bool {
        self.subset_pipeline.mismatches.is_empty() && self.plane_pipeline.mismatches.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        render_pipeline(&mut s, "period-subset cuts", &self.subset_pipeline);
        render_pipeline(&mut s, "separating planes", &self.plane_pipeline);
        s.push_str(if self.pass() { "result: PASS\n" } else { "result: FAIL\n" });
        s
    }
}

fn render_pipeline(s: &mut String, title: &str, pipe: &PipelineCheck) {
    s.push_str(&format!(
        "{title}: {} outer iterations\n",
        pipe.outer_iterations
    ));
    for (i, p) in pipe.master_sequence.iter().enumerate() {
        s.push_str(&format!("  master {}: {}\n", i + 1, fmt_vec(p)));
    }
    for (i, cut) in pipe.cuts.iter().enumerate() {
        s.push_str(&format!(
            "  cut {}: {} <= {:.4}\n",
            i + 1,
            cut_expr(&cut.time_set),
            cut.rhs
        ));
    }
    for (i, plane) in pipe.planes.iter().enumerate() {
        s.push_str(&format!(
            "  plane {}: {} . p >= {:.4}\n",
            i + 1,
            fmt_vec(&plane.lambda0),
            plane.beta
        ));
    }
    for m in &pipe.mismatches {
        s.push_str(&format!("  MISMATCH {m}\n"));
    }
}

fn toy_params(threshold_b: f64, seed: u64) -> ProtocolParams {
    ProtocolParams {
        eps_cvg0: 1e-5,
        eps_dis: 1e-3,
        threshold_b,
        seed,
        ..ProtocolParams::default()
    }
}

/// Reproduce the built-in 3-agent, 4-period reference run with both cut
/// families and diff every printed iterate and cut against the expected
/// trajectory (tolerance 1e-2). Stopping thresholds are pinned to the
/// reference values, so `--eps-dis` / `--eps-cvg` do not apply here.
pub fn cmd_toy(threshold_b: f64, seed: u64) -> Result<ToyReport, CmdError> {
    let inst = disagg_core::toy_instance();
    let master = QuadraticMaster::new(QuadraticCost::new(0.8, 0.1));
    let params = toy_params(threshold_b, seed);

    let subset_run = optimal_disaggregation(&inst, &master, &params)?;
    let mut mism = Vec::new();
    if subset_run.report.status != "disaggregated" {
        mism.push(format!("status: expected disaggregated, got {}", subset_run.report.status));
    }
    if subset_run.report.outer_iterations != SUBSET_MASTERS.len() {
        mism.push(format!(
            "outer iterations: expected {}, got {}",
            SUBSET_MASTERS.len(),
            subset_run.report.outer_iterations
        ));
    }
    check_sequence(
        "master point",
        &subset_run.report.master_sequence,
        &SUBSET_MASTERS,
        TOY_TOL,
        &mut mism,
    );
    if subset_run.report.cuts.len() != SUBSET_CUT_SETS.len() {
        mism.push(format!(
            "cuts: expected {}, got {}",
            SUBSET_CUT_SETS.len(),
            subset_run.report.cuts.len()
        ));
    } else {
        for (i, cut) in subset_run.report.cuts.iter().enumerate() {
            if cut.time_set != SUBSET_CUT_SETS[i] {
                mism.push(format!(
                    "cut {} periods: expected {:?}, got {:?}",
                    i + 1,
                    SUBSET_CUT_SETS[i],
                    cut.time_set
                ));
            }
            if !close(cut.rhs, SUBSET_CUT_RHS[i], TOY_TOL) {
                mism.push(format!(
                    "cut {} rhs: expected {:.4}, got {:.4}",
                    i + 1,
                    SUBSET_CUT_RHS[i],
                    cut.rhs
                ));
            }
        }
    }
    let subset_pipeline = PipelineCheck {
        outer_iterations: subset_run.report.outer_iterations,
        master_sequence: subset_run.report.master_sequence.clone(),
        cuts: subset_run.report.cuts.clone(),
        planes: Vec::new(),
        mismatches: mism,
    };

    let agents: Vec<PolyAgent> = (0..inst.n_agents)
        .map(|n| PolyAgent::from_block(&AgentBlock::from_instance(&inst, n)))
        .collect();
    let region = FeasibleRegion::from_instance(&inst);
    let plane_run = optimal_disaggregation_poly(agents, region, &master, &params)?;
    let mut mism = Vec::new();
    if plane_run.report.status != "disaggregated" {
        mism.push(format!("status: expected disaggregated, got {}", plane_run.report.status));
    }
    if plane_run.report.outer_iterations != PLANE_MASTERS.len() {
        mism.push(format!(
            "outer iterations: expected {}, got {}",
            PLANE_MASTERS.len(),
            plane_run.report.outer_iterations
        ));
    }
    check_sequence(
        "master point",
        &plane_run.report.master_sequence,
        &PLANE_MASTERS,
        TOY_TOL,
        &mut mism,
    );
    if plane_run.report.lambda_cuts.len() != PLANE_NORMALS.len() {
        mism.push(format!(
            "planes: expected {}, got {}",
            PLANE_NORMALS.len(),
            plane_run.report.lambda_cuts.len()
        ));
    } else {
        for (i, plane) in plane_run.report.lambda_cuts.iter().enumerate() {
            if !vec_close(&plane.lambda0, &PLANE_NORMALS[i], TOY_TOL) {
                mism.push(format!(
                    "plane {} normal: expected {}, got {}",
                    i + 1,
                    fmt_vec(&PLANE_NORMALS[i]),
                    fmt_vec(&plane.lambda0)
                ));
            }
            if !close(plane.beta, PLANE_OFFSETS[i], TOY_TOL) {
                mism.push(format!(
                    "plane {} offset: expected {:.4}, got {:.4}",
                    i + 1,
                    PLANE_OFFSETS[i],
                    plane.beta
                ));
            }
        }
    }
    let plane_pipeline = PipelineCheck {
        outer_iterations: plane_run.report.outer_iterations,
        master_sequence: plane_run.report.master_sequence.clone(),
        cuts: Vec::new(),
        planes: plane_run.report.lambda_cuts.clone(),
        mismatches: mism,
    };

    Ok(ToyReport {
        subset_pipeline,
        plane_pipeline,
    })
}

// ---------------------------------------------------------------------
// run
// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct RunCmdReport {
    pub report: RunReport,
    pub transcript_findings: Vec<String>,
    pub wire_findings: Vec<AuditFinding>,
}

impl RunCmdReport {
    /// The run itself may legitimately end in `no_solution`; what must
    /// hold is that nothing private leaked on the way.
    pub fn pass(&self) -> bool {
        self.transcript_findings.is_empty() && self.wire_findings.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "status: {}\nouter iterations: {}\ncuts: {}\n",
            self.report.status,
            self.report.outer_iterations,
            self.report.cuts.len() + self.report.lambda_cuts.len(),
        );
        if let Some(obj) = self.report.objective {
            s.push_str(&format!("objective: {obj:.6}\n"));
        }
        if let Some(gap) = self.report.final_gap {
            s.push_str(&format!("gap: {gap:.3e}\n"));
        }
        s.push_str(&format!(
            "audit findings: {} transcript, {} wire\n",
            self.transcript_findings.len(),
            self.wire_findings.len()
        ));
        s.push_str(&self.report.to_json());
        s.push('\n');
        s
    }
}

/// Disaggregate one instance file (JSON). Scheduling instances bring
/// their own aggregate cost model; plain ones get the standard quadratic
/// objective. The full message log is kept and audited.
pub fn cmd_run(path: &Path, params: &ProtocolParams) -> Result<RunCmdReport, CmdError> {
    let text = std::fs::read_to_string(path)?;
    let inst = TransportInstance::from_json(&text)
        .map_err(|e| CmdError::Parse(format!("{}: {e}", path.display())))?;
    let defects = inst.validate();
    if !defects.is_empty() {
        let lines: Vec<String> = defects.iter().map(|d| d.to_string()).collect();
        return Err(CmdError::Parse(format!(
            "invalid instance {}: {}",
            path.display(),
            lines.join("; ")
        )));
    }
    let mut params = params.clone();
    params.log_bus = true;
    let run = match &inst.microgrid {
        Some(spec) => {
            let master = MicrogridMaster::new(spec.clone());
            optimal_disaggregation(&inst, &master, &params)?
        }
        None => {
            let master = QuadraticMaster::new(QuadraticCost::new(0.8, 0.1));
            optimal_disaggregation(&inst, &master, &params)?
        }
    };
    let transcript_findings = audit_transcript(&run.transcript, inst.horizon);
    let wire_findings = privacy_audit(run.bus_log.as_deref().unwrap_or(&[]));
    Ok(RunCmdReport {
        report: run.report,
        transcript_findings,
        wire_findings,
    })
}

// ---------------------------------------------------------------------
// microgrid
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CampaignRow {
    pub instance: usize,
    pub seed: u64,
    pub master_solves: usize,
    pub projections: usize,
    pub objective: Option<f64>,
    pub status: String,
}

#[derive(Debug, Serialize)]
pub struct CampaignReport {
    pub n_agents: usize,
    pub horizon: usize,
    pub rows: Vec<CampaignRow>,
    pub mean_master_solves: f64,
    pub mean_projections: f64,
    pub mean_objective: Option<f64>,
}

impl CampaignReport {
    pub fn pass(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.status == "disaggregated")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("instance,seed,master_solves,projections,objective,status\n");
        for r in &self.rows {
            let obj = r.objective.map_or(String::new(), |o| format!("{o:.6}"));
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.instance, r.seed, r.master_solves, r.projections, obj, r.status
            ));
        }
        let mean_obj = self.mean_objective.map_or(String::new(), |o| format!("{o:.6}"));
        s.push_str(&format!(
            "mean,,{:.3},{:.3},{},\n",
            self.mean_master_solves, self.mean_projections, mean_obj
        ));
        s
    }

    pub fn render(&self) -> String {
        self.to_csv()
    }
}

/// Seeded campaign of generation-scheduling instances. Instance `i` uses
/// seed `seed + i`; failures are recorded in their row and the campaign
/// keeps going. Rows are independent of `--jobs`.
pub fn cmd_microgrid(
    n_agents: usize,
    horizon: usize,
    instances: usize,
    seed: u64,
    params: &ProtocolParams,
    jobs: usize,
) -> Result<CampaignReport, CmdError> {
    if horizon > 16 {
        return Err(CmdError::Parse(format!(
            "horizon {horizon} exceeds the scheduling limit of 16"
        )));
    }
    if n_agents == 0 || horizon == 0 || instances == 0 {
        return Err(CmdError::Parse(
            "n-agents, horizon, and instances must all be positive".into(),
        ));
    }
    let rows = run_indexed(instances, jobs, |i| {
        let inst_seed = seed.wrapping_add(i as u64);
        let inst = microgrid_instance(n_agents, horizon, inst_seed);
        let spec = inst
            .microgrid
            .clone()
            .expect("generator embeds a schedule spec");
        let master = MicrogridMaster::new(spec);
        match optimal_disaggregation(&inst, &master, params) {
            Ok(run) => CampaignRow {
                instance: i,
                seed: inst_seed,
                master_solves: run.report.outer_iterations,
                projections: run.report.total_projections,
                objective: run.report.objective,
                status: run.report.status,
            },
            Err(e) => CampaignRow {
                instance: i,
                seed: inst_seed,
                master_solves: 0,
                projections: 0,
                objective: None,
                status: format!("error: {e}"),
            },
        }
    });
    let done: Vec<&CampaignRow> = rows.iter().filter(|r| r.status == "disaggregated").collect();
    let count = done.len().max(1) as f64;
    let mean_master_solves = done.iter().map(|r| r.master_solves as f64).sum::<f64>() / count;
    let mean_projections = done.iter().map(|r| r.projections as f64).sum::<f64>() / count;
    let objectives: Vec<f64> = done.iter().filter_map(|r| r.objective).collect();
    let mean_objective = if objectives.is_empty() {
        None
    } else {
        Some(objectives.iter().sum::<f64>() / objectives.len() as f64)
    };
    Ok(CampaignReport {
        n_agents,
        horizon,
        rows,
        mean_master_solves,
        mean_projections,
        mean_objective,
    })
}

// ---------------------------------------------------------------------
// spectral
// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct SpectralReport {
    pub table: ScalingTable,
    pub bound_ok: bool,
}

impl SpectralReport {
    pub fn pass(&self) -> bool {
        self.bound_ok
    }

    pub fn render(&self) -> String {
        format!("{}slope,{:.4}\n", self.table.to_csv(), self.table.slope)
    }
}

/// Worst smallest-positive Laplacian eigenvalue across random face
/// configurations, per horizon, against the closed-form lower bound.
pub fn cmd_spectral(
    n_agents: usize,
    horizons: &[usize],
    draws: Option<usize>,
    seed: u64,
) -> Result<SpectralReport, CmdError> {
    if n_agents < 2 {
        return Err(CmdError::Parse("need at least two agents".into()));
    }
    if horizons.is_empty() || horizons.iter().any(|&t| t < 2) {
        return Err(CmdError::Parse("horizons must all be at least 2".into()));
    }
    let table = scaling_experiment(n_agents, horizons, draws, seed);
    let bound_ok = table
        .rows
        .iter()
        .all(|r| r.degenerate == r.draws || r.worst_lambda1 >= r.kappa_bound);
    Ok(SpectralReport { table, bound_ok })
}

// ---------------------------------------------------------------------
// privacy
// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct PrivacyReport {
    pub n_agents: usize,
    pub horizon: usize,
    pub permutation: Vec<usize>,
    pub permutation_invariant: bool,
    pub transcript_findings: Vec<String>,
    pub wire_findings: Vec<AuditFinding>,
}

impl PrivacyReport {
    pub fn pass(&self) -> bool {
        self.permutation_invariant
            && self.transcript_findings.is_empty()
            && self.wire_findings.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "permutation {:?}: transcript {}\n",
            self.permutation,
            if self.permutation_invariant {
                "bit-identical"
            } else {
                "DIFFERS"
            }
        );
        s.push_str(&format!(
            "transcript audit: {} findings\nwire audit: {} findings\n",
            self.transcript_findings.len(),
            self.wire_findings.len()
        ));
        for f in &self.transcript_findings {
            s.push_str(&format!("  transcript: {f}\n"));
        }
        for f in &self.wire_findings {
            s.push_str(&format!("  wire: round {} {:?}->{:?}: {}\n", f.round, f.from, f.to, f.reason));
        }
        s.push_str(if self.pass() { "result: PASS\n" } else { "result: FAIL\n" });
        s
    }
}

/// Permutation invariance of the operator transcript on a random
/// instance, plus structural audits of the transcript and the full
/// message log.
pub fn cmd_privacy(
    n_agents: usize,
    horizon: usize,
    seed: u64,
    params: &ProtocolParams,
) -> Result<PrivacyReport, CmdError> {
    if n_agents == 0 || horizon == 0 {
        return Err(CmdError::Parse("n-agents and horizon must be positive".into()));
    }
    let inst = random_instance(n_agents, horizon, seed);
    let master = QuadraticMaster::new(QuadraticCost::new(0.8, 0.1));
    let perm = seeded_permutation(n_agents, seed ^ 0x5eed);
    let permutation_invariant = permutation_invariance_check(&inst, &master, params, &perm)?;
    let mut logged = params.clone();
    logged.log_bus = true;
    let run = optimal_disaggregation(&inst, &master, &logged)?;
    let transcript_findings = audit_transcript(&run.transcript, inst.horizon);
    let wire_findings = privacy_audit(run.bus_log.as_deref().unwrap_or(&[]));
    Ok(PrivacyReport {
        n_agents,
        horizon,
        permutation: perm,
        permutation_invariant,
        transcript_findings,
        wire_findings,
    })
}

// ---------------------------------------------------------------------
// oracle-check
// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub requested: usize,
    pub feasible_agreements: usize,
    pub infeasible_agreements: usize,
    pub borderline_skipped: usize,
    pub disagreements: Vec<String>,
}

impl OracleReport {
    pub fn pass(&self) -> bool {
        self.disagreements.is_empty()
            && self.feasible_agreements + self.infeasible_agreements >= self.requested
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "decisive samples: {} ({} feasible, {} infeasible), {} borderline skipped\n",
            self.feasible_agreements + self.infeasible_agreements,
            self.feasible_agreements,
            self.infeasible_agreements,
            self.borderline_skipped
        );
        for d in &self.disagreements {
            s.push_str(&format!("  DISAGREE {d}\n"));
        }
        s.push_str(if self.pass() { "result: PASS\n" } else { "result: FAIL\n" });
        s
    }
}

enum OracleOutcome {
    Agree { feasible: bool },
    Borderline,
    Disagree(String),
}

/// Cross-check the exhaustive subset oracle against the projection gap
/// on random small instances until `checks` decisive samples are in.
/// Half the draws come from inside the disaggregable set, half from the
/// wider candidate box; borderline draws (oracle slack within 1e-3 of
/// zero) prove nothing either way and are skipped.
pub fn cmd_oracle_check(checks: usize, seed: u64, jobs: usize) -> Result<OracleReport, CmdError> {
    if checks == 0 {
        return Err(CmdError::Parse("checks must be positive".into()));
    }
    let attempts = checks * 6;
    let outcomes = run_indexed(attempts, jobs, |i| {
        let mut rng = stream_rng(seed, 50_000 + i as u64);
        let n = rng.random_range(2..=5);
        let t = rng.random_range(2..=6);
        let inst = random_instance(n, t, rng.random());
        let p = if i % 2 == 0 {
            sample_disaggregable(&inst, &mut rng)
        } else {
            sample_aggregate_candidate(&inst, &mut rng)
        };
        let verdict = hoffman_feasible(&inst, &p, 1e-9);
        if matches!(verdict, FeasibilityReport::Violated { slack, .. } if slack > -1e-3) {
            return OracleOutcome::Borderline;
        }
        let out = run_apm(&inst, &p, &inst.lower_matrix(), &ApmParams::new(1e-8));
        let orbit_feasible = out.gap < 1e-4;
        if verdict.is_feasible() == orbit_feasible {
            OracleOutcome::Agree {
                feasible: orbit_feasible,
            }
        } else {
            OracleOutcome::Disagree(format!(
                "sample {i} (N={n}, T={t}): oracle says {}, orbit gap {:.3e}",
                if verdict.is_feasible() { "feasible" } else { "infeasible" },
                out.gap
            ))
        }
    });
    let mut report = OracleReport {
        requested: checks,
        feasible_agreements: 0,
        infeasible_agreements: 0,
        borderline_skipped: 0,
        disagreements: Vec::new(),
    };
    for outcome in outcomes {
        if report.feasible_agreements + report.infeasible_agreements
            + report.disagreements.len()
            >= checks
        {
            break;
        }
        match outcome {
            OracleOutcome::Agree { feasible: true } => report.feasible_agreements += 1,
            OracleOutcome::Agree { feasible: false } => report.infeasible_agreements += 1,
            OracleOutcome::Borderline => report.borderline_skipped += 1,
            OracleOutcome::Disagree(msg) => report.disagreements.push(msg),
        }
    }
    let decisive = report.feasible_agreements + report.infeasible_agreements
        + report.disagreements.len();
    if decisive < checks {
        return Err(CmdError::Check(format!(
            "only {decisive} decisive samples out of {attempts} attempts"
        )));
    }
    Ok(report)
}
