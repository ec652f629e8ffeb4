//! In-process, round-synchronous message bus for the protocol simulator.
//!
//! Every message names a round, a kind, and two endpoints, and carries only
//! `u64` words (ring elements or bit patterns). Delivery is deterministic:
//! mailboxes drain in `(round, sender)` order regardless of send
//! interleaving. The bus optionally keeps a full log — the raw material for
//! the privacy audit — and exposes [`Bus::inject`] so tests can place
//! arbitrary (including rule-breaking) traffic on the wire.

use serde::{Deserialize, Serialize};

/// A party on the bus. Serialized as an integer: agents by index, the
/// operator as `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "i64", into = "i64")]
pub enum Endpoint {
    Operator,
    Agent(usize),
}

impl From<Endpoint> for i64 {
    fn from(e: Endpoint) -> i64 {
        match e {
            Endpoint::Operator => -1,
            Endpoint::Agent(n) => n as i64,
        }
    }
}

impl From<i64> for Endpoint {
    fn from(v: i64) -> Endpoint {
        if v < 0 {
            Endpoint::Operator
        } else {
            Endpoint::Agent(v as usize)
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Operator => write!(f, "operator"),
            Endpoint::Agent(n) => write!(f, "agent {n}"),
        }
    }
}

/// Message families the protocol is allowed to use:
/// * `share` — one additive share, agent to agent;
/// * `sigma` — an agent's partial sum, agent to operator;
/// * `aggregate` — operator broadcast (aggregate-derived words or queries).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MsgKind {
    Share,
    Sigma,
    Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub round: u64,
    pub kind: MsgKind,
    pub from: Endpoint,
    pub to: Endpoint,
    pub payload: Vec<u64>,
}

/// Round-synchronous bus with per-endpoint mailboxes.
#[derive(Debug)]
pub struct Bus {
    n_agents: usize,
    round: u64,
    /// Mailbox 0 is the operator's; agent `n` owns mailbox `n + 1`.
    mailboxes: Vec<Vec<Message>>,
    log: Option<Vec<Message>>,
    delivered: u64,
}

impl Bus {
    pub fn new(n_agents: usize, keep_log: bool) -> Self {
        Bus {
            n_agents,
            round: 0,
            mailboxes: vec![Vec::new(); n_agents + 1],
            log: keep_log.then(Vec::new),
            delivered: 0,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Close the current round; subsequent sends belong to the next one.
    pub fn advance_round(&mut self) {
        self.round += 1;
    }

    fn mailbox_index(&self, to: Endpoint) -> usize {
        match to {
            Endpoint::Operator => 0,
            Endpoint::Agent(n) => {
                assert!(n < self.n_agents, "no such agent: {n}");
                n + 1
            }
        }
    }

    /// Send within the current round.
    pub fn send(&mut self, kind: MsgKind, from: Endpoint, to: Endpoint, payload: Vec<u64>) {
        let msg = Message {
            round: self.round,
            kind,
            from,
            to,
            payload,
        };
        self.inject(msg);
    }

    /// Place an arbitrary message on the wire (fault injection included);
    /// it is logged and delivered like any other.
    pub fn inject(&mut self, msg: Message) {
        let slot = self.mailbox_index(msg.to);
        if let Some(log) = &mut self.log {
            log.push(msg.clone());
        }
        self.mailboxes[slot].push(msg);
        self.delivered += 1;
    }

    /// Drain an endpoint's mailbox in `(round, sender)` order.
    pub fn drain(&mut self, to: Endpoint) -> Vec<Message> {
        let slot = self.mailbox_index(to);
        let mut inbox = std::mem::take(&mut self.mailboxes[slot]);
        inbox.sort_by_key(|m| (m.round, i64::from(m.from)));
        inbox
    }

    /// Total messages placed on the bus so far.
    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn log(&self) -> Option<&[Message]> {
        self.log.as_deref()
    }

    pub fn take_log(&mut self) -> Option<Vec<Message>> {
        self.log.take()
    }

    /// The log as newline-delimited JSON, one message per line.
    pub fn log_ndjson(&self) -> Option<String> {
        self.log.as_ref().map(|log| messages_to_ndjson(log))
    }
}

pub fn messages_to_ndjson(log: &[Message]) -> String {
    let mut out = String::new();
    for msg in log {
        out.push_str(&serde_json::to_string(msg).expect("message serializes"));
        out.push('\n');
    }
    out
}
