//! Per-node dissemination state machine.
//!
//! Every node forwards each overheard packet immediately, at most `N_max`
//! times per dissemination round (one round = one flood of a single
//! sequence number). The initiator paces rounds with a timer and, when
//! nothing is heard back, re-injects the current packet until its own
//! transmit budget is exhausted. The machine is pure: `on_packet` and
//! `on_timer` map (state, event) to (state, actions) with no hidden I/O,
//! so the simulator replays it deterministically.

use std::collections::BTreeMap;

use crate::framing::Packet;

/// Simulation clock in nanoseconds.
pub type SimTime = u64;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum Error {
    #[error("dissemination requires at least one packet")]
    EmptyPatch,
    #[error("packet list is not sequence-complete for M={m}")]
    IncompleteSequence { m: u8 },
    #[error("network size must be at least 1")]
    InvalidN,
    #[error("timer {0:?} was never set by this node")]
    UnknownTimer(TimerId),
}

/// `N_max = ceil(log2(N + 1))` for a network of `N` nodes.
pub fn compute_nmax(n: u64) -> Result<u8, Error> {
    if n == 0 {
        return Err(Error::InvalidN);
    }
    let m = n + 1;
    let ceil = 64 - (m - 1).leading_zeros();
    Ok(ceil as u8)
}

/// Floor reading of the same rule, `floor(log2(N + 1))`; at N = 94 this
/// gives 6 where the ceiling gives 7.
pub fn compute_nmax_floor(n: u64) -> Result<u8, Error> {
    if n == 0 {
        return Err(Error::InvalidN);
    }
    Ok((63 - (n + 1).leading_zeros()) as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolParams {
    /// Maximum transmissions per node per round.
    pub n_max: u8,
    /// Airtime of one packet plus the processing delay.
    pub t_slot: SimTime,
    /// Interval between round starts at the initiator.
    pub t_round: SimTime,
    /// Turnaround between reception end and the forwarded transmission.
    pub t_proc: SimTime,
    /// Re-inject the current packet when the initiator hears nothing for
    /// two slots and still has budget.
    pub initiator_timeout_retx: bool,
}

impl ProtocolParams {
    pub fn new(n_max: u8, t_slot: SimTime, t_round: SimTime, t_proc: SimTime) -> ProtocolParams {
        assert!(n_max >= 1, "N_max must be at least 1");
        assert!(t_round >= t_slot, "round interval shorter than a slot");
        ProtocolParams {
            n_max,
            t_slot,
            t_round,
            t_proc,
            initiator_timeout_retx: true,
        }
    }

    /// Default pacing: rounds spaced `(2 * hop_bound + N_max + 2)` slots
    /// apart, enough for a flood wave to cross the network and die out.
    pub fn for_network(n_max: u8, t_slot: SimTime, t_proc: SimTime, hop_bound: u32) -> ProtocolParams {
        let slots = 2 * hop_bound as u64 + n_max as u64 + 2;
        ProtocolParams::new(n_max, t_slot, slots * t_slot, t_proc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Relay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerId {
    RoundStart { version: u16, round: u8 },
    RetxCheck { version: u16, round: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Transmit { packet: Packet, at: SimTime },
    SetTimer { id: TimerId, at: SimTime },
    DeliverComplete { object: Vec<u8>, at: SimTime },
}

/// Per-node protocol state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    pub node_id: usize,
    pub role: Role,
    pub current_version: u16,
    /// Round in progress; 0 means idle.
    pub current_seq: u8,
    /// Transmissions made in the current round.
    pub n_tx: u8,
    /// Received payloads by sequence number.
    pub buffer: BTreeMap<u8, Vec<u8>>,
    pub delivered: bool,
    pub m_known: Option<u8>,
    obj_len_known: Option<u16>,
    /// Time of the last accepted reception; drives timeout retransmission.
    pub last_rx: Option<SimTime>,
    /// The full packet list; initiator only.
    outbound: Vec<Packet>,
}

impl NodeState {
    pub fn new_relay(node_id: usize) -> NodeState {
        NodeState {
            node_id,
            role: Role::Relay,
            current_version: 0,
            current_seq: 0,
            n_tx: 0,
            buffer: BTreeMap::new(),
            delivered: false,
            m_known: None,
            obj_len_known: None,
            last_rx: None,
            outbound: Vec::new(),
        }
    }

    pub fn new_initiator(node_id: usize) -> NodeState {
        NodeState {
            role: Role::Initiator,
            ..NodeState::new_relay(node_id)
        }
    }

    fn reset_for_version(&mut self, version: u16) {
        self.current_version = version;
        self.current_seq = 0;
        self.n_tx = 0;
        self.buffer.clear();
        self.delivered = false;
        self.m_known = None;
        self.obj_len_known = None;
    }

    fn reassembled_object(&self) -> Option<Vec<u8>> {
        let m = self.m_known?;
        let obj_len = self.obj_len_known? as usize;
        let mut object = Vec::with_capacity(obj_len);
        for n in 1..=m {
            object.extend_from_slice(self.buffer.get(&n)?);
        }
        object.truncate(obj_len);
        Some(object)
    }
}

/// True iff the node has received the complete object. Pure read.
pub fn is_complete(state: &NodeState) -> bool {
    state.delivered
}

/// Seed the initiator with a sequence-complete packet list and emit the
/// first transmission plus the pacing timers.
pub fn start_dissemination(
    mut state: NodeState,
    packets: &[Packet],
    now: SimTime,
    params: &ProtocolParams,
) -> Result<(NodeState, Vec<Action>), Error> {
    if packets.is_empty() {
        return Err(Error::EmptyPatch);
    }
    let m = packets[0].header.m;
    if packets.len() != m as usize
        || packets
            .iter()
            .enumerate()
            .any(|(i, p)| p.header.n as usize != i + 1 || p.header.m != m)
    {
        return Err(Error::IncompleteSequence { m });
    }
    let version = packets[0].header.version;
    state.reset_for_version(version);
    state.outbound = packets.to_vec();
    // The source holds the whole object from the start.
    for p in packets {
        state.buffer.insert(p.header.n, p.payload.clone());
    }
    state.m_known = Some(m);
    state.obj_len_known = Some(packets[0].header.obj_len);
    state.delivered = true;
    state.current_seq = 1;
    state.n_tx = 1;

    let mut actions = vec![Action::Transmit {
        packet: packets[0].clone(),
        at: now,
    }];
    if m > 1 {
        actions.push(Action::SetTimer {
            id: TimerId::RoundStart { version, round: 2 },
            at: now + params.t_round,
        });
    }
    if params.initiator_timeout_retx {
        actions.push(Action::SetTimer {
            id: TimerId::RetxCheck { version, round: 1 },
            at: now + 2 * params.t_slot,
        });
    }
    Ok((state, actions))
}

/// Handle one decoded packet reception ending at `now`.
pub fn on_packet(
    mut state: NodeState,
    pkt: &Packet,
    now: SimTime,
    params: &ProtocolParams,
) -> (NodeState, Vec<Action>) {
    let hdr = pkt.header;
    // Stale update: ignore entirely.
    if hdr.version < state.current_version {
        return (state, Vec::new());
    }
    if hdr.version > state.current_version {
        state.reset_for_version(hdr.version);
    }
    // A packet disagreeing with the known geometry of this version is
    // malformed; drop it.
    if state.m_known.is_some_and(|m| m != hdr.m)
        || state.obj_len_known.is_some_and(|l| l != hdr.obj_len)
    {
        return (state, Vec::new());
    }
    state.last_rx = Some(now);
    state.m_known = Some(hdr.m);
    state.obj_len_known = Some(hdr.obj_len);

    if hdr.n > state.current_seq {
        // New round: the transmit budget is per dissemination process.
        state.current_seq = hdr.n;
        state.n_tx = 0;
    }
    state
        .buffer
        .entry(hdr.n)
        .or_insert_with(|| pkt.payload.clone());

    let mut actions = Vec::new();
    // Forward current-round packets while budget remains; late fragments
    // of past rounds are stored above but never relayed.
    if hdr.n == state.current_seq && state.n_tx < params.n_max {
        actions.push(Action::Transmit {
            packet: pkt.relayed(),
            at: now + params.t_proc,
        });
        state.n_tx += 1;
    }
    if !state.delivered {
        if let Some(m) = state.m_known {
            if (1..=m).all(|n| state.buffer.contains_key(&n)) {
                if let Some(object) = state.reassembled_object() {
                    state.delivered = true;
                    actions.push(Action::DeliverComplete { object, at: now });
                }
            }
        }
    }
    (state, actions)
}

/// Handle a timer this node previously set. Relays never set timers.
pub fn on_timer(
    mut state: NodeState,
    timer: TimerId,
    now: SimTime,
    params: &ProtocolParams,
) -> Result<(NodeState, Vec<Action>), Error> {
    if state.role != Role::Initiator {
        return Err(Error::UnknownTimer(timer));
    }
    match timer {
        TimerId::RoundStart { version, round } => {
            let m = state.outbound.len() as u8;
            if round == 0 || round > m {
                return Err(Error::UnknownTimer(timer));
            }
            if version != state.current_version {
                // Timer from a superseded update; inert.
                return Ok((state, Vec::new()));
            }
            state.current_seq = round;
            state.n_tx = 1;
            let mut actions = vec![Action::Transmit {
                packet: state.outbound[round as usize - 1].clone(),
                at: now,
            }];
            if round < m {
                actions.push(Action::SetTimer {
                    id: TimerId::RoundStart {
                        version,
                        round: round + 1,
                    },
                    at: now + params.t_round,
                });
            }
            if params.initiator_timeout_retx {
                actions.push(Action::SetTimer {
                    id: TimerId::RetxCheck { version, round },
                    at: now + 2 * params.t_slot,
                });
            }
            Ok((state, actions))
        }
        TimerId::RetxCheck { version, round } => {
            if round == 0 || round > state.outbound.len() as u8 {
                return Err(Error::UnknownTimer(timer));
            }
            if version != state.current_version || round != state.current_seq {
                return Ok((state, Vec::new()));
            }
            if state.n_tx >= params.n_max {
                return Ok((state, Vec::new()));
            }
            let mut actions = Vec::new();
            let silent = state
                .last_rx
                .map_or(true, |t| now.saturating_sub(t) >= 2 * params.t_slot);
            if silent {
                state.n_tx += 1;
                actions.push(Action::Transmit {
                    packet: state.outbound[round as usize - 1].clone(),
                    at: now,
                });
            }
            // Keep watching while budget remains.
            actions.push(Action::SetTimer {
                id: TimerId::RetxCheck { version, round },
                at: now + 2 * params.t_slot,
            });
            Ok((state, actions))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framing::{fragment, FramingParams};
    use proptest::prelude::*;

    fn params() -> ProtocolParams {
        ProtocolParams::new(2, 1_719_000, 17_190_000, 23_000)
    }

    fn four_packets() -> Vec<Packet> {
        fragment(&[0x5au8; 128], &FramingParams::default(), 1).unwrap()
    }

    #[test]
    fn nmax_formula() {
        assert_eq!(compute_nmax(1).unwrap(), 1);
        assert_eq!(compute_nmax(7).unwrap(), 3);
        assert_eq!(compute_nmax(94).unwrap(), 7);
        assert_eq!(compute_nmax_floor(94).unwrap(), 6);
        assert!(matches!(compute_nmax(0), Err(Error::InvalidN)));
        assert!(matches!(compute_nmax_floor(0), Err(Error::InvalidN)));
    }

    #[test]
    fn idle_relay_forwards_first_packet() {
        let state = NodeState::new_relay(3);
        let pkt = &four_packets()[0];
        let (state, actions) = on_packet(state, pkt, 1000, &params());
        assert_eq!(state.current_seq, 1);
        assert_eq!(state.n_tx, 1);
        assert_eq!(state.buffer.len(), 1);
        assert_eq!(actions.len(), 1);
        match &actions[0] {
            Action::Transmit { packet, at } => {
                assert_eq!(*at, 1000 + 23_000);
                assert_eq!(packet.header.relay, 1);
                assert_eq!(packet.payload, pkt.payload);
            }
            other => panic!("expected Transmit, got {other:?}"),
        }
    }

    #[test]
    fn budget_exhausted_stops_forwarding() {
        let mut state = NodeState::new_relay(3);
        let pkt = &four_packets()[0];
        let p = params();
        for _ in 0..p.n_max {
            let (s, actions) = on_packet(state, pkt, 1000, &p);
            state = s;
            assert_eq!(actions.len(), 1);
        }
        assert_eq!(state.n_tx, p.n_max);
        let (state, actions) = on_packet(state, pkt, 2000, &p);
        assert!(actions.is_empty());
        assert_eq!(state.n_tx, p.n_max);
    }

    #[test]
    fn completion_on_last_fragment() {
        let packets = four_packets();
        let mut state = NodeState::new_relay(1);
        let p = params();
        for pkt in &packets[..3] {
            let (s, _) = on_packet(state, pkt, 10, &p);
            state = s;
        }
        assert!(!is_complete(&state));
        let (state, actions) = on_packet(state, &packets[3], 20, &p);
        assert!(is_complete(&state));
        let delivered = actions.iter().find_map(|a| match a {
            Action::DeliverComplete { object, at } => Some((object.clone(), *at)),
            _ => None,
        });
        let (object, at) = delivered.expect("expected DeliverComplete");
        assert_eq!(object, vec![0x5au8; 128]);
        assert_eq!(at, 20);
    }

    #[test]
    fn stale_version_ignored() {
        let mut state = NodeState::new_relay(1);
        state.current_version = 5;
        let pkt = &four_packets()[0]; // version 1
        let (state, actions) = on_packet(state, pkt, 10, &params());
        assert!(actions.is_empty());
        assert_eq!(state.current_version, 5);
        assert!(state.buffer.is_empty());
    }

    #[test]
    fn newer_version_resets_state() {
        let packets = four_packets();
        let mut state = NodeState::new_relay(1);
        let p = params();
        for pkt in &packets {
            let (s, _) = on_packet(state, pkt, 10, &p);
            state = s;
        }
        assert!(state.delivered);
        let newer = fragment(&[1u8; 36], &FramingParams::default(), 2).unwrap();
        let (state, _) = on_packet(state, &newer[0], 20, &p);
        assert_eq!(state.current_version, 2);
        assert_eq!(state.buffer.len(), 1);
        assert!(state.delivered); // delivered again: single-packet object
        assert_eq!(state.m_known, Some(1));
    }

    #[test]
    fn late_fragment_stored_but_not_relayed() {
        let packets = four_packets();
        let mut state = NodeState::new_relay(1);
        let p = params();
        // Jump straight to round 3.
        let (s, _) = on_packet(state, &packets[2], 10, &p);
        state = s;
        assert_eq!(state.current_seq, 3);
        // Late copy of round 1 arrives: stored, no Transmit.
        let (state, actions) = on_packet(state, &packets[0], 20, &p);
        assert!(state.buffer.contains_key(&1));
        assert!(actions.is_empty());
    }

    #[test]
    fn new_round_resets_budget() {
        let packets = four_packets();
        let p = params();
        let mut state = NodeState::new_relay(1);
        for _ in 0..p.n_max {
            let (s, _) = on_packet(state, &packets[0], 10, &p);
            state = s;
        }
        assert_eq!(state.n_tx, p.n_max);
        let (state, actions) = on_packet(state, &packets[1], 20, &p);
        assert_eq!(state.current_seq, 2);
        assert_eq!(state.n_tx, 1);
        assert_eq!(
            actions
                .iter()
                .filter(|a| matches!(a, Action::Transmit { .. }))
                .count(),
            1
        );
    }

    #[test]
    fn start_emits_single_transmit_and_round_timer() {
        let packets = four_packets();
        let p = params();
        let (state, actions) =
            start_dissemination(NodeState::new_initiator(0), &packets, 0, &p).unwrap();
        assert_eq!(state.n_tx, 1);
        assert!(state.delivered);
        let transmits: Vec<_> = actions
            .iter()
            .filter(|a| matches!(a, Action::Transmit { .. }))
            .collect();
        assert_eq!(transmits.len(), 1);
        assert!(actions.iter().any(|a| matches!(
            a,
            Action::SetTimer { id: TimerId::RoundStart { round: 2, .. }, at } if *at == p.t_round
        )));
    }

    #[test]
    fn single_packet_patch_has_no_round_timer() {
        let packets = fragment(&[9u8; 36], &FramingParams::default(), 1).unwrap();
        let (_, actions) =
            start_dissemination(NodeState::new_initiator(0), &packets, 0, &params()).unwrap();
        assert!(!actions
            .iter()
            .any(|a| matches!(a, Action::SetTimer { id: TimerId::RoundStart { .. }, .. })));
    }

    #[test]
    fn empty_patch_rejected() {
        assert!(matches!(
            start_dissemination(NodeState::new_initiator(0), &[], 0, &params()),
            Err(Error::EmptyPatch)
        ));
    }

    #[test]
    fn incomplete_sequence_rejected() {
        let mut packets = four_packets();
        packets.remove(1);
        assert!(matches!(
            start_dissemination(NodeState::new_initiator(0), &packets, 0, &params()),
            Err(Error::IncompleteSequence { m: 4 })
        ));
    }

    #[test]
    fn round_timer_advances_round() {
        let packets = four_packets();
        let p = params();
        let (state, _) =
            start_dissemination(NodeState::new_initiator(0), &packets, 0, &p).unwrap();
        let (state, actions) = on_timer(
            state,
            TimerId::RoundStart { version: 1, round: 2 },
            p.t_round,
            &p,
        )
        .unwrap();
        assert_eq!(state.current_seq, 2);
        assert_eq!(state.n_tx, 1);
        assert!(actions.iter().any(|a| matches!(
            a,
            Action::Transmit { packet, at } if packet.header.n == 2 && *at == p.t_round
        )));
        assert!(actions.iter().any(|a| matches!(
            a,
            Action::SetTimer { id: TimerId::RoundStart { round: 3, .. }, at }
                if *at == 2 * p.t_round
        )));
    }

    #[test]
    fn timeout_with_exhausted_budget_does_not_transmit() {
        let packets = four_packets();
        let mut p = params();
        p.n_max = 1;
        let (state, _) =
            start_dissemination(NodeState::new_initiator(0), &packets, 0, &p).unwrap();
        // n_tx is already 1 = N_max.
        let (_, actions) = on_timer(
            state,
            TimerId::RetxCheck { version: 1, round: 1 },
            2 * p.t_slot,
            &p,
        )
        .unwrap();
        assert!(actions.is_empty());
    }

    #[test]
    fn silent_timeout_retransmits() {
        let packets = four_packets();
        let p = params();
        let (state, _) =
            start_dissemination(NodeState::new_initiator(0), &packets, 0, &p).unwrap();
        let (state, actions) = on_timer(
            state,
            TimerId::RetxCheck { version: 1, round: 1 },
            2 * p.t_slot,
            &p,
        )
        .unwrap();
        assert_eq!(state.n_tx, 2);
        assert!(actions.iter().any(|a| matches!(
            a,
            Action::Transmit { packet, .. } if packet.header.n == 1 && packet.header.relay == 0
        )));
        // The watchdog re-arms itself.
        assert!(actions.iter().any(|a| matches!(
            a,
            Action::SetTimer { id: TimerId::RetxCheck { round: 1, .. }, .. }
        )));
    }

    #[test]
    fn recent_reception_suppresses_retransmit() {
        let packets = four_packets();
        let p = params();
        let (mut state, _) =
            start_dissemination(NodeState::new_initiator(0), &packets, 0, &p).unwrap();
        state.last_rx = Some(2 * p.t_slot - 1);
        let (state, actions) = on_timer(
            state,
            TimerId::RetxCheck { version: 1, round: 1 },
            2 * p.t_slot,
            &p,
        )
        .unwrap();
        assert_eq!(state.n_tx, 1);
        assert!(!actions.iter().any(|a| matches!(a, Action::Transmit { .. })));
    }

    #[test]
    fn relay_rejects_timers() {
        let err = on_timer(
            NodeState::new_relay(2),
            TimerId::RoundStart { version: 1, round: 1 },
            0,
            &params(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownTimer(_)));
    }

    #[test]
    fn handlers_are_pure() {
        let pkt = &four_packets()[1];
        let state = NodeState::new_relay(4);
        let a = on_packet(state.clone(), pkt, 99, &params());
        let b = on_packet(state, pkt, 99, &params());
        assert_eq!(a, b);
    }

    proptest! {
        /// Over random packet interleavings, no round ever sees more than
        /// N_max transmissions, and sequence/version never move backward.
        #[test]
        fn transmit_bound_and_monotonicity(
            script in proptest::collection::vec((1u8..=4, 0u8..2), 1..60),
            n_max in 1u8..4,
        ) {
            let mut p = params();
            p.n_max = n_max;
            let all = [
                fragment(&[1u8; 128], &FramingParams::default(), 1).unwrap(),
                fragment(&[2u8; 128], &FramingParams::default(), 2).unwrap(),
            ];
            let mut state = NodeState::new_relay(7);
            let mut tx_per_round: std::collections::BTreeMap<(u16, u8), u32> =
                std::collections::BTreeMap::new();
            let mut now = 0;
            let mut prev_seq = (0u16, 0u8);
            for (n, v) in script {
                let pkt = &all[v as usize][n as usize - 1];
                now += 1000;
                let (next, actions) = on_packet(state, pkt, now, &p);
                state = next;
                for a in &actions {
                    if let Action::Transmit { packet, .. } = a {
                        *tx_per_round
                            .entry((packet.header.version, packet.header.n))
                            .or_default() += 1;
                    }
                }
                let cur = (state.current_version, state.current_seq);
                prop_assert!(cur >= prev_seq, "version/round moved backward");
                prev_seq = cur;
            }
            for ((_, _), count) in tx_per_round {
                prop_assert!(count <= n_max as u32);
            }
        }
    }
}
