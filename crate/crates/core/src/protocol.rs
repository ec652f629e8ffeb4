//! Multi-agent disaggregation protocol over the message bus.
//!
//! The operator holds an aggregate allocation and never sees any agent's
//! profile. Each sweep the agents project locally, then the column sums of
//! their profiles reach the operator only as a secure modular sum; the
//! operator broadcasts the per-period shift `ν = (p − S)/N` (and the
//! current stopping threshold) back to everyone as plain `f64` bit
//! patterns, so every party advances through bit-identical state.
//!
//! Once the agent-side iterates stop moving, the gap to the coupling space
//! is read off `ν`. A small gap means the allocation is disaggregable and
//! the agents keep their profiles as the answer. A large gap drives cut
//! extraction: a queried subset of periods is priced by one more secure
//! scalar sum, and a violated price becomes a cutting plane for the master
//! problem. A cut attempt that fails halves the stopping threshold and
//! resumes sweeping; too many halvings abort the run with diagnostics.
//!
//! The outer loop alternates master solves with this inner loop until the
//! master's allocation disaggregates, tightening the master's region with
//! every accepted cut.

use crate::apm::NormSpec;
use crate::bus::{Bus, Endpoint, Message, MsgKind};
use crate::cuts::{CutProvenance, HoffmanCut, LambdaCut, DEFAULT_THRESHOLD_B};
use crate::master::{FeasibleRegion, MasterError, MasterSolver, Schedule};
use crate::model::{stream_rng, ProfileMatrix, TransportInstance};
use crate::projections::{project_agent, AgentBlock};
use crate::smc::{aggregate_words, sigma_from_bundles, split, FixedPoint, ShareBundle, SigmaVector};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// An agent's private feasible set, as the protocol engine sees it: a
/// starting point, an exact projection, a membership test, and (for agents
/// described by explicit halfspaces) a support price used by dual cuts.
pub trait LocalConstraint {
    fn horizon(&self) -> usize;
    /// Where the iteration starts when no warmer point is known.
    fn start_point(&self) -> Vec<f64>;
    /// Euclidean projection onto the set.
    fn project(&self, y: &[f64]) -> Vec<f64>;
    fn contains(&self, x: &[f64], tol: f64) -> bool;
    /// Support-function price `min bᵀλ` over `Aᵀλ = μ, λ ≥ 0` for agents
    /// with explicit halfspace data; box-with-budget agents never receive
    /// dual queries.
    fn dual_value(&self, mu: &[f64]) -> f64 {
        let _ = mu;
        unimplemented!("this constraint has no explicit halfspace representation")
    }
    /// The most this agent can place inside a period subset: the support
    /// value in the subset's indicator direction. Summing these across
    /// agents prices a subset inequality that every jointly feasible
    /// allocation satisfies, whatever subset the operator proposes.
    fn subset_capacity(&self, time_set: &[usize]) -> f64 {
        let mut indicator = vec![0.0; self.horizon()];
        for &t in time_set {
            indicator[t] = 1.0;
        }
        self.dual_value(&indicator)
    }
}

impl LocalConstraint for AgentBlock {
    fn horizon(&self) -> usize {
        AgentBlock::horizon(self)
    }

    fn start_point(&self) -> Vec<f64> {
        self.lower.clone()
    }

    fn project(&self, y: &[f64]) -> Vec<f64> {
        project_agent(self, y)
    }

    fn contains(&self, x: &[f64], tol: f64) -> bool {
        AgentBlock::contains(self, x, tol)
    }

    /// Closed form for a box with a budget row: fill the subset up to its
    /// upper bounds, unless the budget minus the floor owed elsewhere
    /// binds first.
    fn subset_capacity(&self, time_set: &[usize]) -> f64 {
        let mut in_set = vec![false; self.horizon()];
        for &t in time_set {
            in_set[t] = true;
        }
        let mut cap = 0.0;
        let mut floor_out = 0.0;
        for t in 0..self.horizon() {
            if in_set[t] {
                cap += self.upper[t];
            } else {
                floor_out += self.lower[t];
            }
        }
        cap.min(self.demand - floor_out)
    }
}

/// Which cutting-plane family the inner loop extracts on a stalled gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutMode {
    /// Period-subset cuts priced by a secure sum of per-agent subset
    /// capacities.
    Subset,
    /// General halfspace cuts priced by per-agent support values.
    Dual,
}

#[derive(Debug, Clone)]
pub struct ProtocolParams {
    /// Initial stopping threshold on per-sweep movement.
    pub eps_cvg0: f64,
    /// Gap below which an allocation counts as disaggregated.
    pub eps_dis: f64,
    /// Cut periods are those with `ν_t > −threshold_b · eps_cvg`: only
    /// clearly oversupplied periods are dropped from a candidate subset.
    pub threshold_b: f64,
    pub norm: NormSpec,
    /// Seed for the agents' share-splitting randomness.
    pub seed: u64,
    /// Threshold halvings allowed per inner run before aborting.
    pub max_halvings: u32,
    /// Sweep budget per inner run.
    pub max_sweeps: usize,
    /// Master-solve budget; `None` derives one from the cut family.
    pub max_outer: Option<usize>,
    /// Keep the full message log (memory-heavy on large campaigns).
    pub log_bus: bool,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            eps_cvg0: 0.1,
            eps_dis: 0.01,
            threshold_b: DEFAULT_THRESHOLD_B,
            norm: NormSpec::default(),
            seed: 0,
            max_halvings: 40,
            max_sweeps: 1_000_000,
            max_outer: None,
            log_bus: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error(
        "threshold halving exhausted: eps {eps:.3e}, gap {gap:.3e} after {halvings} halvings and {sweeps} sweeps"
    )]
    Stalled {
        eps: f64,
        gap: f64,
        halvings: u32,
        sweeps: usize,
    },
    #[error(
        "sweep budget exhausted: {sweeps} sweeps without convergence (residual {residual:.3e}, eps {eps:.3e})"
    )]
    SweepBudget {
        sweeps: usize,
        residual: f64,
        eps: f64,
    },
    #[error("outer iteration budget exhausted after {outer} master solves")]
    OuterBudget { outer: usize },
}

/// One sweep as the operator records it: nothing but secure aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    /// Ring words of the aggregate profile sum `Σ_n x_n`.
    pub aggregate: Vec<u64>,
    /// Ring word of the summed squared per-agent movements.
    pub residual_sq: u64,
    /// Ring word of the summed convergence indicators.
    pub indicator: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CutQueryRecord {
    Subset { time_set: Vec<usize> },
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutAttempt {
    pub query: CutQueryRecord,
    /// Ring word of the aggregated scalar response.
    pub response: u64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterStatus {
    Disaggregated,
    CutFound,
    Stalled,
}

/// Operator-side record of one inner run.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct OuterRecord {
    pub sweeps: Vec<SweepRecord>,
    pub cut_attempts: Vec<CutAttempt>,
    pub status: Option<OuterStatus>,
}

/// Everything the operator learns across a whole run. Holds secure
/// aggregates, queried period sets, and scalar cut prices — never a
/// per-agent value.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct OperatorTranscript {
    pub outer: Vec<OuterRecord>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub sweeps: usize,
    pub projections: usize,
    pub messages: u64,
    pub halvings: u32,
}

/// Result of one inner run on a fixed aggregate allocation.
#[derive(Debug, Clone, PartialEq)]
pub enum NiApmOutcome {
    /// The allocation splits across the agents; profiles stay agent-side
    /// (they are returned here because this is a simulation — nothing on
    /// the bus carried them).
    Disaggregated { x: ProfileMatrix, gap: f64 },
    /// A violated period-subset cut.
    SubsetCut { cut: HoffmanCut, gap: f64 },
    /// A violated support-price cut: `−νᵀp' ≥ −price` for all
    /// disaggregable `p'`, violated by the current allocation.
    DualCut { nu: Vec<f64>, price: f64, gap: f64 },
}

/// In-process simulator: the agents, their share randomness, the bus, and
/// the operator's transcript.
pub struct Simulator<C: LocalConstraint> {
    constraints: Vec<C>,
    params: ProtocolParams,
    bus: Bus,
    rngs: Vec<ChaCha8Rng>,
    transcript: OperatorTranscript,
    stats: RunStats,
    eps_history: Vec<f64>,
    /// Each agent's profile at the end of the previous inner run; the next
    /// run resumes from here instead of re-projecting the cold start.
    profiles: Option<Vec<Vec<f64>>>,
}

impl<C: LocalConstraint> Simulator<C> {
    pub fn new(constraints: Vec<C>, params: ProtocolParams) -> Self {
        assert!(!constraints.is_empty(), "need at least one agent");
        let horizon = constraints[0].horizon();
        assert!(
            constraints.iter().all(|c| c.horizon() == horizon),
            "all agents must share the horizon"
        );
        assert!(params.eps_cvg0 > 0.0 && params.eps_dis > 0.0);
        let n = constraints.len();
        let rngs = (0..n)
            .map(|i| stream_rng(params.seed, i as u64 + 1))
            .collect();
        Simulator {
            bus: Bus::new(n, params.log_bus),
            constraints,
            params,
            rngs,
            transcript: OperatorTranscript::default(),
            stats: RunStats::default(),
            eps_history: Vec::new(),
            profiles: None,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.constraints.len()
    }

    pub fn transcript(&self) -> &OperatorTranscript {
        &self.transcript
    }

    pub fn stats(&self) -> RunStats {
        let mut stats = self.stats;
        stats.messages = self.bus.delivered();
        stats
    }

    pub fn eps_history(&self) -> &[f64] {
        &self.eps_history
    }

    /// Direct access to the wire, primarily for fault injection in tests.
    pub fn bus_mut(&mut self) -> &mut Bus {
        &mut self.bus
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    /// One full secure-sum round over the bus: share, partial-sum, and
    /// operator-side aggregation. Returns the ring words of `Σ_n values_n`.
    fn smca_exchange(&mut self, values: &[Vec<f64>]) -> Vec<FixedPoint> {
        let n = self.n_agents();
        debug_assert_eq!(values.len(), n);
        let mut kept: Vec<Option<ShareBundle>> = (0..n).map(|_| None).collect();
        for sender in 0..n {
            for bundle in split(sender, &values[sender], n, &mut self.rngs[sender]) {
                if bundle.receiver == sender {
                    kept[sender] = Some(bundle);
                } else {
                    let payload = bundle.shares.iter().map(|s| s.raw).collect();
                    self.bus.send(
                        MsgKind::Share,
                        Endpoint::Agent(sender),
                        Endpoint::Agent(bundle.receiver),
                        payload,
                    );
                }
            }
        }
        self.bus.advance_round();
        for owner in 0..n {
            let mut received: Vec<ShareBundle> = Vec::with_capacity(n);
            for msg in self.bus.drain(Endpoint::Agent(owner)) {
                if msg.kind != MsgKind::Share {
                    continue;
                }
                let Endpoint::Agent(sender) = msg.from else {
                    continue;
                };
                received.push(ShareBundle {
                    sender,
                    receiver: owner,
                    shares: msg.payload.iter().map(|&w| FixedPoint::from_raw(w)).collect(),
                });
            }
            received.push(kept[owner].take().expect("own bundle kept"));
            let sigma = sigma_from_bundles(owner, &received);
            let payload = sigma.values.iter().map(|v| v.raw).collect();
            self.bus.send(
                MsgKind::Sigma,
                Endpoint::Agent(owner),
                Endpoint::Operator,
                payload,
            );
        }
        self.bus.advance_round();
        let mut sigmas: Vec<SigmaVector> = Vec::with_capacity(n);
        for msg in self.bus.drain(Endpoint::Operator) {
            if msg.kind != MsgKind::Sigma {
                continue;
            }
            let Endpoint::Agent(owner) = msg.from else {
                continue;
            };
            sigmas.push(SigmaVector {
                owner,
                values: msg.payload.iter().map(|&w| FixedPoint::from_raw(w)).collect(),
            });
        }
        aggregate_words(&sigmas)
    }

    /// Operator broadcast of identical words to every agent.
    fn broadcast(&mut self, payload: &[u64]) {
        for i in 0..self.n_agents() {
            self.bus.send(
                MsgKind::Aggregate,
                Endpoint::Operator,
                Endpoint::Agent(i),
                payload.to_vec(),
            );
        }
        self.bus.advance_round();
    }

    /// The most recent operator broadcast in an agent's inbox.
    fn read_broadcast(&mut self, agent: usize) -> Vec<u64> {
        self.bus
            .drain(Endpoint::Agent(agent))
            .into_iter()
            .rev()
            .find(|m| m.kind == MsgKind::Aggregate && m.from == Endpoint::Operator)
            .map(|m| m.payload)
            .expect("agent expected an operator broadcast")
    }

    /// One inner run: distributed alternating projections on allocation
    /// `p`, ending in a disaggregation or a violated cut (threshold
    /// halvings bridge failed attempts).
    pub fn ni_apm(&mut self, p: &[f64], mode: CutMode) -> Result<NiApmOutcome, ProtocolError> {
        let n = self.n_agents();
        let horizon = self.constraints[0].horizon();
        assert_eq!(p.len(), horizon, "allocation length");
        assert!(p.iter().all(|v| v.is_finite()), "non-finite allocation");
        let n_f = n as f64;
        let mut record = OuterRecord::default();
        let mut eps = self.params.eps_cvg0;
        self.eps_history.push(eps);
        let mut halvings: u32 = 0;

        // Agents resume from their previous profiles when they have any
        // (later runs pick up where the last one stopped); otherwise each
        // projects its cold start. Then exchange the first aggregate.
        let mut xs: Vec<Vec<f64>> = match self.profiles.take() {
            Some(prev) => prev,
            None => {
                self.stats.projections += n;
                self.constraints
                    .iter()
                    .map(|c| c.project(&c.start_point()))
                    .collect()
            }
        };
        self.stats.sweeps += 1;
        let zeros = vec![0.0; n];
        let words = self.smca_exchange(&pack_sweep(&xs, &zeros, &zeros));
        record.sweeps.push(sweep_record(&words, horizon));
        let mut nu = shift_from_aggregate(&words, p, n_f);
        let mut last_residual = f64::INFINITY;

        let outcome = loop {
            if record.sweeps.len() > self.params.max_sweeps {
                record.status = Some(OuterStatus::Stalled);
                self.transcript.outer.push(record);
                self.profiles = Some(xs);
                return Err(ProtocolError::SweepBudget {
                    sweeps: self.params.max_sweeps,
                    residual: last_residual,
                    eps,
                });
            }
            // Operator → agents: current shift and threshold.
            let mut payload: Vec<u64> = nu.iter().map(|v| v.to_bits()).collect();
            payload.push(eps.to_bits());
            self.broadcast(&payload);

            // Agents: move to the aggregate-side point and reproject.
            let mut sq = vec![0.0; n];
            let mut ind = vec![0.0; n];
            for i in 0..n {
                let bcast = self.read_broadcast(i);
                let nu_i: Vec<f64> = bcast[..horizon].iter().map(|&w| f64::from_bits(w)).collect();
                let eps_i = f64::from_bits(bcast[horizon]);
                let y: Vec<f64> = xs[i].iter().zip(&nu_i).map(|(x, d)| x + d).collect();
                let x_new = self.constraints[i].project(&y);
                let mut row_l1 = 0.0;
                let mut row_sq = 0.0;
                for (a, b) in x_new.iter().zip(&xs[i]) {
                    row_l1 += (a - b).abs();
                    row_sq += (a - b) * (a - b);
                }
                let row_move = match self.params.norm {
                    NormSpec::Operator => row_l1,
                    NormSpec::L2 => row_sq.sqrt(),
                };
                sq[i] = row_sq;
                ind[i] = if row_move < eps_i { 1.0 } else { 0.0 };
                xs[i] = x_new;
            }
            self.stats.projections += n;
            self.stats.sweeps += 1;

            let words = self.smca_exchange(&pack_sweep(&xs, &sq, &ind));
            record.sweeps.push(sweep_record(&words, horizon));
            nu = shift_from_aggregate(&words, p, n_f);
            let residual_sq = words[horizon].decode().max(0.0);
            last_residual = residual_sq.sqrt();
            let count = words[horizon + 1].decode().round() as usize;

            let converged = match self.params.norm {
                NormSpec::Operator => count == n,
                NormSpec::L2 => last_residual < eps,
            };
            if !converged {
                continue;
            }

            let gap = match self.params.norm {
                NormSpec::Operator => nu.iter().map(|v| v.abs()).sum::<f64>(),
                NormSpec::L2 => (n_f * nu.iter().map(|v| v * v).sum::<f64>()).sqrt(),
            };
            if gap <= self.params.eps_dis {
                for (c, x) in self.constraints.iter().zip(&xs) {
                    assert!(
                        c.contains(x, 1e-9),
                        "final profile left its feasible block"
                    );
                }
                record.status = Some(OuterStatus::Disaggregated);
                self.profiles = Some(xs.clone());
                break NiApmOutcome::Disaggregated {
                    x: ProfileMatrix::new(xs),
                    gap,
                };
            }

            // Cut attempt: price a candidate plane through a secure scalar
            // sum, accept it only if the current allocation violates it.
            // Period selection keeps everything except clearly oversupplied
            // coordinates: exactly balanced periods ride along, adding their
            // saturated column to both sides of the inequality.
            let time_set: Vec<usize> = (0..horizon)
                .filter(|&t| nu[t] > -self.params.threshold_b * eps)
                .collect();
            let accepted = match mode {
                CutMode::Subset => {
                    if time_set.is_empty() || time_set.len() == horizon {
                        None // degenerate period set; refine instead
                    } else {
                        let query: Vec<u64> = time_set.iter().map(|&t| t as u64).collect();
                        self.broadcast(&query);
                        let responses: Vec<Vec<f64>> = (0..n)
                            .map(|i| {
                                let ts: Vec<usize> = self
                                    .read_broadcast(i)
                                    .iter()
                                    .map(|&t| t as usize)
                                    .collect();
                                vec![self.constraints[i].subset_capacity(&ts)]
                            })
                            .collect();
                        let words = self.smca_exchange(&responses);
                        // Pad by the worst-case fixed-point rounding so the
                        // accepted inequality never overstates the bound.
                        let rhs = words[0].decode() + quantization_pad(n_f);
                        let covered: f64 = time_set.iter().map(|&t| p[t]).sum();
                        let violated = covered - rhs > 0.0;
                        record.cut_attempts.push(CutAttempt {
                            query: CutQueryRecord::Subset {
                                time_set: time_set.clone(),
                            },
                            response: words[0].raw,
                            accepted: violated,
                        });
                        violated.then(|| NiApmOutcome::SubsetCut {
                            cut: HoffmanCut {
                                time_set,
                                rhs,
                                provenance: CutProvenance::Apm,
                            },
                            gap,
                        })
                    }
                }
                CutMode::Dual => {
                    let query: Vec<u64> = nu.iter().map(|v| v.to_bits()).collect();
                    self.broadcast(&query);
                    let responses: Vec<Vec<f64>> = (0..n)
                        .map(|i| {
                            let mu: Vec<f64> = self
                                .read_broadcast(i)
                                .iter()
                                .map(|&w| f64::from_bits(w))
                                .collect();
                            vec![self.constraints[i].dual_value(&mu)]
                        })
                        .collect();
                    let words = self.smca_exchange(&responses);
                    // Same padding: a support price rounded down must never
                    // turn into a plane that excludes a feasible total.
                    let price = words[0].decode() + quantization_pad(n_f);
                    let violated =
                        price - nu.iter().zip(p).map(|(v, q)| v * q).sum::<f64>() < 0.0;
                    record.cut_attempts.push(CutAttempt {
                        query: CutQueryRecord::Dual,
                        response: words[0].raw,
                        accepted: violated,
                    });
                    violated.then(|| NiApmOutcome::DualCut {
                        nu: nu.clone(),
                        price,
                        gap,
                    })
                }
            };
            if let Some(outcome) = accepted {
                record.status = Some(OuterStatus::CutFound);
                self.profiles = Some(xs.clone());
                break outcome;
            }

            // No usable cut at this resolution: refine and resume.
            halvings += 1;
            self.stats.halvings += 1;
            if halvings > self.params.max_halvings {
                let sweeps = record.sweeps.len();
                record.status = Some(OuterStatus::Stalled);
                self.transcript.outer.push(record);
                self.profiles = Some(xs);
                return Err(ProtocolError::Stalled {
                    eps,
                    gap,
                    halvings: halvings - 1,
                    sweeps,
                });
            }
            eps /= 2.0;
            self.eps_history.push(eps);
        };

        self.transcript.outer.push(record);
        Ok(outcome)
    }
}

fn pack_sweep(xs: &[Vec<f64>], sq: &[f64], ind: &[f64]) -> Vec<Vec<f64>> {
    xs.iter()
        .zip(sq)
        .zip(ind)
        .map(|((x, &s), &i)| {
            let mut v = x.clone();
            v.push(s);
            v.push(i);
            v
        })
        .collect()
}

fn sweep_record(words: &[FixedPoint], horizon: usize) -> SweepRecord {
    SweepRecord {
        aggregate: words[..horizon].iter().map(|w| w.raw).collect(),
        residual_sq: words[horizon].raw,
        indicator: words[horizon + 1].raw,
    }
}

/// Worst-case error of a securely summed scalar: each of the `n` parties
/// rounds to the nearest fixed-point step before sharing.
fn quantization_pad(n_f: f64) -> f64 {
    n_f / (2.0 * crate::smc::SCALE)
}

fn shift_from_aggregate(words: &[FixedPoint], p: &[f64], n_f: f64) -> Vec<f64> {
    p.iter()
        .enumerate()
        .map(|(t, &pt)| (pt - words[t].decode()) / n_f)
        .collect()
}

/// Convenience wrapper: one inner run for an instance's agents.
pub fn ni_apm(
    inst: &TransportInstance,
    p: &[f64],
    params: &ProtocolParams,
) -> Result<(NiApmOutcome, OperatorTranscript), ProtocolError> {
    let blocks: Vec<AgentBlock> = (0..inst.n_agents)
        .map(|n| AgentBlock::from_instance(inst, n))
        .collect();
    let mut sim = Simulator::new(blocks, params.clone());
    let outcome = sim.ni_apm(p, CutMode::Subset)?;
    Ok((outcome, sim.transcript))
}

/// Final verdict of a full run.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Disaggregated {
        p: Vec<f64>,
        x: ProfileMatrix,
        objective: f64,
        schedule: Option<Schedule>,
        gap: f64,
    },
    /// The master region emptied out: no allocation can satisfy every
    /// accepted constraint.
    NoSolution { certificate: Option<Vec<f64>> },
}

/// Summary of a full run, serializable for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub status: String,
    pub outer_iterations: usize,
    pub total_sweeps: usize,
    pub total_projections: usize,
    pub messages: u64,
    pub halvings: u32,
    pub cuts: Vec<HoffmanCut>,
    /// General separating planes (only the dual-cut pipeline fills this).
    pub lambda_cuts: Vec<LambdaCut>,
    /// Every master solution in order, the last being the settled one.
    pub master_sequence: Vec<Vec<f64>>,
    pub final_p: Option<Vec<f64>>,
    pub final_gap: Option<f64>,
    pub objective: Option<f64>,
    pub eps_history: Vec<f64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A full run's artifacts: verdict, summary, the operator's transcript,
/// and (if enabled) the complete message log.
#[derive(Debug)]
pub struct DisaggRun {
    pub outcome: RunOutcome,
    pub report: RunReport,
    pub transcript: OperatorTranscript,
    pub bus_log: Option<Vec<Message>>,
}

/// Master/inner-loop alternation with the standard region (the instance's
/// aggregate box and total).
pub fn optimal_disaggregation(
    inst: &TransportInstance,
    master: &dyn MasterSolver,
    params: &ProtocolParams,
) -> Result<DisaggRun, ProtocolError> {
    optimal_disaggregation_with_region(
        inst,
        FeasibleRegion::from_instance(inst),
        master,
        params,
    )
}

/// Master/inner-loop alternation from a caller-supplied starting region
/// (extra constraints beyond the instance's own box are allowed).
pub fn optimal_disaggregation_with_region(
    inst: &TransportInstance,
    mut region: FeasibleRegion,
    master: &dyn MasterSolver,
    params: &ProtocolParams,
) -> Result<DisaggRun, ProtocolError> {
    assert!(inst.validate().is_empty(), "instance failed validation");
    let horizon = inst.horizon;
    let blocks: Vec<AgentBlock> = (0..inst.n_agents)
        .map(|n| AgentBlock::from_instance(inst, n))
        .collect();
    let mut sim = Simulator::new(blocks, params.clone());

    // Distinct period subsets bound the proper-subset cut count; the outer
    // budget adds slack for re-tightened planes.
    let max_cuts: usize = if horizon < usize::BITS as usize {
        (1usize << horizon) - 2
    } else {
        usize::MAX
    };
    let max_outer = params
        .max_outer
        .unwrap_or_else(|| max_cuts.saturating_mul(4).max(64));

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
                    Vec::new(),
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

        match sim.ni_apm(&point.p, CutMode::Subset)? {
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
                    Vec::new(),
                    master_sequence,
                    sim,
                ));
            }
            NiApmOutcome::SubsetCut { cut, .. } => {
                assert!(
                    cut.violation(&point.p) > 0.0,
                    "accepted cut must exclude the allocation that produced it"
                );
                assert!(
                    region.add_cut(cut),
                    "accepted cut left the master region unchanged"
                );
                assert!(
                    region.cuts.len() <= max_cuts,
                    "proper-subset cut count exceeded its combinatorial cap"
                );
            }
            NiApmOutcome::DualCut { .. } => {
                unreachable!("subset mode never prices dual cuts")
            }
        }
    }
}

pub(crate) fn finish_run<C: LocalConstraint>(
    outcome: RunOutcome,
    outer: usize,
    region: &FeasibleRegion,
    lambda_cuts: Vec<LambdaCut>,
    master_sequence: Vec<Vec<f64>>,
    mut sim: Simulator<C>,
) -> DisaggRun {
    let stats = sim.stats();
    let (status, final_p, final_gap, objective) = match &outcome {
        RunOutcome::Disaggregated {
            p, gap, objective, ..
        } => (
            "disaggregated".to_string(),
            Some(p.clone()),
            Some(*gap),
            Some(*objective),
        ),
        RunOutcome::NoSolution { .. } => ("no_solution".to_string(), None, None, None),
    };
    let report = RunReport {
        status,
        outer_iterations: outer,
        total_sweeps: stats.sweeps,
        total_projections: stats.projections,
        messages: stats.messages,
        halvings: stats.halvings,
        cuts: region.cuts.clone(),
        lambda_cuts,
        master_sequence,
        final_p,
        final_gap,
        objective,
        eps_history: sim.eps_history.clone(),
    };
    let bus_log = sim.bus.take_log();
    DisaggRun {
        outcome,
        report,
        transcript: sim.transcript,
        bus_log,
    }
}

/// One rule violation found on the wire or in the transcript.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditFinding {
    pub round: u64,
    pub from: Endpoint,
    pub to: Endpoint,
    pub kind: MsgKind,
    pub reason: String,
}

/// Structural privacy audit of a message log. The allowed traffic is
/// exactly: agent→agent `share`, agent→operator `sigma`, and
/// operator→agent `aggregate`. Anything else — in particular any
/// non-secure agent→operator payload — is reported.
pub fn privacy_audit(log: &[Message]) -> Vec<AuditFinding> {
    let mut findings = Vec::new();
    let mut flag = |m: &Message, reason: String| {
        findings.push(AuditFinding {
            round: m.round,
            from: m.from,
            to: m.to,
            kind: m.kind,
            reason,
        });
    };
    for m in log {
        match (m.from, m.to) {
            (Endpoint::Agent(i), Endpoint::Agent(j)) => {
                if i == j {
                    flag(m, "agent messaged itself over the wire".into());
                } else if m.kind != MsgKind::Share {
                    flag(m, "only additive shares may travel between agents".into());
                }
            }
            (Endpoint::Agent(_), Endpoint::Operator) => {
                if m.kind != MsgKind::Sigma {
                    flag(
                        m,
                        "only masked partial sums may reach the operator".into(),
                    );
                }
            }
            (Endpoint::Operator, Endpoint::Agent(_)) => {
                if m.kind != MsgKind::Aggregate {
                    flag(m, "operator may only broadcast aggregate-derived data".into());
                }
            }
            (Endpoint::Operator, Endpoint::Operator) => {
                flag(m, "operator self-message".into());
            }
        }
    }
    findings
}

/// Shape audit of the operator transcript: per sweep one aggregate vector
/// of the instance horizon plus two scalar aggregates; per cut attempt one
/// proper period subset (or a dual marker) and one scalar price.
pub fn audit_transcript(transcript: &OperatorTranscript, horizon: usize) -> Vec<String> {
    let mut findings = Vec::new();
    for (s, rec) in transcript.outer.iter().enumerate() {
        for (k, sweep) in rec.sweeps.iter().enumerate() {
            if sweep.aggregate.len() != horizon {
                findings.push(format!(
                    "outer {s} sweep {k}: aggregate has {} words, expected {horizon}",
                    sweep.aggregate.len()
                ));
            }
        }
        let mut accepted_seen = false;
        for (a, attempt) in rec.cut_attempts.iter().enumerate() {
            if accepted_seen {
                findings.push(format!(
                    "outer {s}: cut attempt {a} recorded after an accepted cut"
                ));
            }
            accepted_seen |= attempt.accepted;
            if let CutQueryRecord::Subset { time_set } = &attempt.query {
                if time_set.is_empty() || time_set.len() >= horizon {
                    findings.push(format!(
                        "outer {s}: cut attempt {a} queried a degenerate period set"
                    ));
                }
                if time_set.iter().any(|&t| t >= horizon) {
                    findings.push(format!(
                        "outer {s}: cut attempt {a} queried an out-of-range period"
                    ));
                }
            }
        }
        if rec.status.is_none() {
            findings.push(format!("outer {s}: no terminal status recorded"));
        }
    }
    findings
}

/// Runs the full pipeline on an instance and on a reindexed copy of it and
/// checks that the operator's transcripts are bit-identical: the operator
/// cannot tell which agent holds which block.
pub fn permutation_invariance_check(
    inst: &TransportInstance,
    master: &dyn MasterSolver,
    params: &ProtocolParams,
    perm: &[usize],
) -> Result<bool, ProtocolError> {
    let base = optimal_disaggregation(inst, master, params)?;
    let permuted = optimal_disaggregation(&inst.permuted(perm), master, params)?;
    Ok(base.transcript == permuted.transcript && base.report.status == permuted.report.status)
}
