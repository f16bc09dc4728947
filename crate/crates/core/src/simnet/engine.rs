//! The event loop: drives one dissemination over a topology.
//!
//! Transmissions starting within one airtime window at a receiver form a
//! single reception group, resolved at window end through the
//! constructive-interference model. A node transmitting during a window is
//! deaf to it (half-duplex). Relayed transmissions start at reception end
//! plus the turnaround delay, which keeps concurrent forwarders aligned to
//! slot boundaries exactly as the flood timing discipline intends.
//!
//! Determinism: one ChaCha8 stream per run, drawn strictly in event order;
//! the event order itself is total via (time, kind rank, node, insertion
//! sequence). Replays with the same seed are bit-identical.

use std::cmp::Reverse;
use std::collections::BTreeMap;
use std::collections::BinaryHeap;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::radio::{ci_reception, draw_jitter, RadioParams, TxObservation};
use super::topology::Topology;
use super::Error;
use crate::framing::{FramingParams, Packet, HEADER_LEN};
use crate::protocol::{
    self, Action, NodeState, ProtocolParams, SimTime, TimerId,
};

const DEFAULT_EVENT_BUDGET: u64 = 50_000_000;
const RNG_ALGO: &str = "chacha8";

#[derive(Debug, Clone, PartialEq)]
pub struct NodeOutcome {
    pub node: usize,
    pub hops: u32,
    pub delivered: bool,
    pub completion_ns: Option<SimTime>,
    /// First successful reception time per sequence number (index 0 is
    /// packet 1); `None` when never received.
    pub first_rx_ns: Vec<Option<SimTime>>,
    /// The reassembled object, for end-to-end verification.
    pub delivered_object: Option<Vec<u8>>,
    /// Highest transmission count this node reached in any single round.
    pub max_round_tx: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub rng_algo: &'static str,
    pub m: u8,
    pub n_max: u8,
    pub params_echo: String,
    pub nodes: Vec<NodeOutcome>,
    pub events_processed: u64,
}

impl RunResult {
    /// Delivered committed? True when every node other than the initiator
    /// completed.
    pub fn all_relays_delivered(&self) -> bool {
        self.nodes.iter().skip(1).all(|n| n.delivered)
    }
}

#[derive(Debug, Clone)]
enum EventKind {
    Timer(TimerId),
    TransmitStart { frame: Rc<Vec<u8>> },
    ReceptionResolve { window_start: SimTime },
    RunEnd,
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::Timer(_) => 0,
            EventKind::ReceptionResolve { .. } => 1,
            EventKind::TransmitStart { .. } => 2,
            EventKind::RunEnd => 3,
        }
    }
}

struct Event {
    time: SimTime,
    rank: u8,
    node: usize,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}
impl Event {
    fn key(&self) -> (SimTime, u8, usize, u64) {
        (self.time, self.rank, self.node, self.seq)
    }
}

struct InFlight {
    offset_ns: SimTime,
    jitter_ns: f64,
    frame: Rc<Vec<u8>>,
}

struct PendingGroup {
    window_start: SimTime,
    window_end: SimTime,
    txs: Vec<InFlight>,
}

struct Engine<'a> {
    topology: &'a Topology,
    radio: &'a RadioParams,
    proto: &'a ProtocolParams,
    l_pkt: usize,
    frame_bytes: usize,
    airtime: SimTime,
    run_version: u16,
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    rng: ChaCha8Rng,
    states: Vec<Option<NodeState>>,
    pending: Vec<Vec<PendingGroup>>,
    tx_windows: Vec<Vec<(SimTime, SimTime)>>,
    tx_counts: Vec<BTreeMap<(u16, u8), u8>>,
    round_payload: BTreeMap<(u16, u8), Rc<Vec<u8>>>,
    first_rx: Vec<Vec<Option<SimTime>>>,
    completion: Vec<Option<SimTime>>,
    delivered_object: Vec<Option<Vec<u8>>>,
}

impl<'a> Engine<'a> {
    fn schedule(&mut self, time: SimTime, node: usize, kind: EventKind) {
        let rank = kind.rank();
        self.next_seq += 1;
        self.heap.push(Reverse(Event {
            time,
            rank,
            node,
            seq: self.next_seq,
            kind,
        }));
    }

    fn handle_actions(&mut self, node: usize, actions: Vec<Action>) {
        for action in actions {
            match action {
                Action::Transmit { packet, at } => {
                    let frame = Rc::new(packet.encode());
                    self.schedule(at, node, EventKind::TransmitStart { frame });
                }
                Action::SetTimer { id, at } => {
                    self.schedule(at, node, EventKind::Timer(id));
                }
                Action::DeliverComplete { object, at } => {
                    if self.completion[node].is_none() {
                        self.completion[node] = Some(at);
                        self.delivered_object[node] = Some(object);
                    }
                }
            }
        }
    }

    fn on_transmit_start(&mut self, now: SimTime, node: usize, frame: Rc<Vec<u8>>) -> Result<(), Error> {
        let version = u16::from_le_bytes([frame[0], frame[1]]);
        let n = frame[3];

        // Per-round transmit bound, asserted on every transmission.
        let count = self.tx_counts[node].entry((version, n)).or_insert(0);
        *count += 1;
        if *count > self.proto.n_max {
            return Err(Error::InvariantViolation(format!(
                "node {node} exceeded N_max={} in round {n}",
                self.proto.n_max
            )));
        }

        // Constructive-interference prerequisite: every copy of round n
        // carries the payload first heard for that round.
        let payload = &frame[HEADER_LEN..];
        match self.round_payload.get(&(version, n)) {
            Some(first) if &first[HEADER_LEN..] != payload => {
                return Err(Error::InvariantViolation(format!(
                    "node {node} transmitted a divergent payload in round {n}"
                )));
            }
            Some(_) => {}
            None => {
                self.round_payload.insert((version, n), frame.clone());
            }
        }

        self.tx_windows[node].push((now, now + self.airtime));
        let jitter = draw_jitter(self.radio, &mut self.rng);
        for &neighbor in &self.topology.adjacency[node] {
            let groups = &mut self.pending[neighbor];
            if let Some(group) = groups
                .iter_mut()
                .find(|g| g.window_start <= now && now < g.window_end)
            {
                group.txs.push(InFlight {
                    offset_ns: now - group.window_start,
                    jitter_ns: jitter,
                    frame: frame.clone(),
                });
            } else {
                groups.push(PendingGroup {
                    window_start: now,
                    window_end: now + self.airtime,
                    txs: vec![InFlight {
                        offset_ns: 0,
                        jitter_ns: jitter,
                        frame: frame.clone(),
                    }],
                });
                self.schedule(
                    now + self.airtime,
                    neighbor,
                    EventKind::ReceptionResolve { window_start: now },
                );
            }
        }
        Ok(())
    }

    fn on_reception_resolve(
        &mut self,
        now: SimTime,
        node: usize,
        window_start: SimTime,
    ) -> Result<(), Error> {
        let idx = self.pending[node]
            .iter()
            .position(|g| g.window_start == window_start)
            .ok_or_else(|| {
                Error::InvariantViolation(format!("missing reception group at node {node}"))
            })?;
        let group = self.pending[node].remove(idx);

        // Half-duplex: own transmission overlapping the window deafens us.
        let busy = self.tx_windows[node]
            .iter()
            .any(|&(s, e)| s < group.window_end && group.window_start < e);
        if busy {
            return Ok(());
        }
        let identical = group
            .txs
            .windows(2)
            .all(|pair| pair[0].frame == pair[1].frame);
        let observations: Vec<TxObservation> = group
            .txs
            .iter()
            .map(|tx| TxObservation {
                offset_ns: tx.offset_ns,
                jitter_ns: tx.jitter_ns,
            })
            .collect();
        if !ci_reception(
            &observations,
            identical,
            self.frame_bytes,
            self.radio,
            &mut self.rng,
        ) {
            return Ok(());
        }
        let packet = Packet::decode(&group.txs[0].frame, self.l_pkt)?;
        if packet.header.version == self.run_version {
            let slot = &mut self.first_rx[node][(packet.header.n - 1) as usize];
            if slot.is_none() {
                *slot = Some(now);
            }
        }
        let state = self.states[node].take().expect("state present");
        let (state, actions) = protocol::on_packet(state, &packet, now, self.proto);
        self.states[node] = Some(state);
        self.handle_actions(node, actions);
        Ok(())
    }
}

/// Simulate one dissemination of `packets` and report per-node outcomes.
///
/// Slot airtime is `(phy_overhead + header + L_pkt) * t_byte`; a relay's
/// transmission starts at reception end plus `t_proc` (carried in
/// `proto.t_proc`, which must equal `radio.t_proc`).
pub fn run_dissemination(
    topology: &Topology,
    radio: &RadioParams,
    framing: &FramingParams,
    proto: &ProtocolParams,
    packets: &[Packet],
    seed: u64,
) -> Result<RunResult, Error> {
    radio.validate()?;
    if packets.is_empty() {
        return Err(protocol::Error::EmptyPatch.into());
    }
    if packets.iter().any(|p| p.payload.len() != framing.l_pkt) {
        return Err(Error::InvalidParams(
            "packet payloads do not match framing L_pkt".into(),
        ));
    }
    if proto.t_proc != radio.t_proc {
        return Err(Error::InvalidParams(
            "protocol and radio turnaround delays disagree".into(),
        ));
    }
    let n = topology.n;
    let m = packets.len() as u8;
    let frame_bytes = framing.frame_bytes();
    let airtime = radio.airtime(frame_bytes);

    let mut engine = Engine {
        topology,
        radio,
        proto,
        l_pkt: framing.l_pkt,
        frame_bytes,
        airtime,
        run_version: packets[0].header.version,
        heap: BinaryHeap::new(),
        next_seq: 0,
        rng: ChaCha8Rng::seed_from_u64(seed),
        states: (0..n)
            .map(|i| {
                Some(if i == 0 {
                    NodeState::new_initiator(i)
                } else {
                    NodeState::new_relay(i)
                })
            })
            .collect(),
        pending: (0..n).map(|_| Vec::new()).collect(),
        tx_windows: vec![Vec::new(); n],
        tx_counts: vec![BTreeMap::new(); n],
        round_payload: BTreeMap::new(),
        first_rx: vec![vec![None; m as usize]; n],
        completion: vec![None; n],
        delivered_object: vec![None; n],
    };

    let initiator = engine.states[0].take().expect("initiator state");
    let (initiator, actions) = protocol::start_dissemination(initiator, packets, 0, proto)?;
    engine.states[0] = Some(initiator);
    engine.completion[0] = Some(0);
    engine.handle_actions(0, actions);

    // Runaway guards: a hard event budget plus a generous time horizon.
    let horizon = m as u64 * proto.t_round + 1000 * proto.t_slot;
    engine.schedule(horizon, 0, EventKind::RunEnd);

    let mut events_processed = 0u64;
    while let Some(Reverse(event)) = engine.heap.pop() {
        events_processed += 1;
        if events_processed > DEFAULT_EVENT_BUDGET {
            return Err(Error::EventBudgetExceeded {
                budget: DEFAULT_EVENT_BUDGET,
            });
        }
        match event.kind {
            EventKind::Timer(id) => {
                let state = engine.states[event.node].take().expect("state present");
                let (state, actions) = protocol::on_timer(state, id, event.time, proto)?;
                engine.states[event.node] = Some(state);
                engine.handle_actions(event.node, actions);
            }
            EventKind::TransmitStart { frame } => {
                engine.on_transmit_start(event.time, event.node, frame)?;
            }
            EventKind::ReceptionResolve { window_start } => {
                engine.on_reception_resolve(event.time, event.node, window_start)?;
            }
            EventKind::RunEnd => break,
        }
    }

    let params_echo = format!(
        "rng={RNG_ALGO} radio(t_byte={},t_proc={},sigma={},eps={:.9},delta={}) \
         proto(n_max={},t_slot={},t_round={},retx={}) frame_bytes={}",
        radio.t_byte,
        radio.t_proc,
        radio.sigma_jitter_ns,
        radio.eps_byte,
        radio.delta_ci_ns,
        proto.n_max,
        proto.t_slot,
        proto.t_round,
        proto.initiator_timeout_retx,
        frame_bytes,
    );
    let Engine {
        states,
        tx_counts,
        first_rx,
        completion,
        mut delivered_object,
        ..
    } = engine;
    let nodes = (0..n)
        .map(|i| {
            let state = states[i].as_ref().expect("state present");
            let max_round_tx = tx_counts[i].values().copied().max().unwrap_or(0);
            NodeOutcome {
                node: i,
                hops: topology.hop_distance[i],
                delivered: state.delivered,
                completion_ns: completion[i],
                first_rx_ns: first_rx[i].clone(),
                delivered_object: delivered_object[i].take(),
                max_round_tx,
            }
        })
        .collect();
    Ok(RunResult {
        seed,
        rng_algo: RNG_ALGO,
        m,
        n_max: proto.n_max,
        params_echo,
        nodes,
        events_processed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framing::fragment;
    use crate::simnet::topology::{build_topology, TopologySpec};

    fn slot(radio: &RadioParams, framing: &FramingParams) -> SimTime {
        radio.airtime(framing.frame_bytes()) + radio.t_proc
    }

    fn run_line(
        nodes: usize,
        radio: &RadioParams,
        n_max: u8,
        object: &[u8],
        seed: u64,
    ) -> RunResult {
        let topo = build_topology(&TopologySpec::Line { nodes }, 0).unwrap();
        let framing = FramingParams::default();
        let packets = fragment(object, &framing, 1).unwrap();
        let proto = ProtocolParams::for_network(
            n_max,
            slot(radio, &framing),
            radio.t_proc,
            topo.max_hops(),
        );
        run_dissemination(&topo, radio, &framing, &proto, &packets, seed).unwrap()
    }

    #[test]
    fn two_node_hand_trace() {
        // Pencil schedule: airtime = (10 + 7 + 36) * 32 us = 1_696 us.
        // Initiator transmits at t = 0; the relay's reception resolves at
        // airtime and delivers immediately; its forward starts at
        // airtime + t_proc; the echo ends at 2*airtime + t_proc and is
        // absorbed (initiator budget spent). Exactly two transmissions.
        let radio = RadioParams::lossless();
        let result = run_line(2, &radio, 1, &[0xa5; 36], 9);
        assert_eq!(result.nodes[1].completion_ns, Some(1_696_000));
        assert_eq!(result.nodes[1].first_rx_ns, vec![Some(1_696_000)]);
        let total_tx: u32 = result
            .nodes
            .iter()
            .map(|n| n.max_round_tx as u32)
            .sum();
        assert_eq!(total_tx, 2);
        assert!(result.all_relays_delivered());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let radio = RadioParams::default();
        let a = run_line(5, &radio, 3, &[1; 128], 1234);
        let b = run_line(5, &radio, 3, &[1; 128], 1234);
        assert_eq!(a, b);
        let c = run_line(5, &radio, 3, &[1; 128], 1235);
        assert_ne!(a, c);
    }

    #[test]
    fn certain_corruption_stops_the_flood() {
        let radio = RadioParams {
            eps_byte: 1.0,
            sigma_jitter_ns: 0.0,
            ..RadioParams::default()
        };
        let result = run_line(4, &radio, 2, &[7; 36], 3);
        assert!(result.nodes.iter().skip(1).all(|n| !n.delivered));
    }

    #[test]
    fn completion_grows_with_hop_distance() {
        let radio = RadioParams::lossless();
        let result = run_line(6, &radio, 2, &[2; 128], 5);
        assert!(result.all_relays_delivered());
        let times: Vec<SimTime> = result
            .nodes
            .iter()
            .map(|n| n.completion_ns.unwrap())
            .collect();
        for pair in times.windows(2) {
            assert!(pair[1] > pair[0], "completion not increasing: {times:?}");
        }
    }

    #[test]
    fn transmit_bound_holds_on_dense_topology() {
        let topo = build_topology(
            &TopologySpec::Rgg { nodes: 40, radius: 1.0, side: 3.0 },
            11,
        )
        .unwrap();
        let framing = FramingParams::default();
        let packets = fragment(&[9u8; 128], &framing, 1).unwrap();
        let radio = RadioParams::default();
        let proto = ProtocolParams::for_network(
            4,
            slot(&radio, &framing),
            radio.t_proc,
            topo.max_hops(),
        );
        for seed in 0..20 {
            let result =
                run_dissemination(&topo, &radio, &framing, &proto, &packets, seed).unwrap();
            for node in &result.nodes {
                assert!(node.max_round_tx <= proto.n_max);
            }
        }
    }

    #[test]
    fn grid_flood_delivers_everywhere_lossless() {
        let topo = build_topology(
            &TopologySpec::Grid { rows: 4, cols: 5, radius: 1.0 },
            0,
        )
        .unwrap();
        let framing = FramingParams::default();
        let packets = fragment(&[3u8; 72], &framing, 1).unwrap();
        let radio = RadioParams::lossless();
        let proto = ProtocolParams::for_network(
            3,
            slot(&radio, &framing),
            radio.t_proc,
            topo.max_hops(),
        );
        let result = run_dissemination(&topo, &radio, &framing, &proto, &packets, 0).unwrap();
        assert!(result.all_relays_delivered());
        // Delivered object matches at every relay.
        for node in result.nodes.iter().skip(1) {
            assert_eq!(node.delivered_object.as_deref(), Some(&[3u8; 72][..]));
        }
    }

    #[test]
    fn reliability_monotone_in_channel_quality() {
        // Reliability must not improve when eps or sigma grow. Parameter
        // spacing is wide enough that the effect dominates Monte Carlo
        // noise at this trial count.
        let topo = build_topology(
            &TopologySpec::Rgg { nodes: 20, radius: 1.0, side: 2.5 },
            21,
        )
        .unwrap();
        let framing = FramingParams::default();
        let packets = fragment(&[1u8; 128], &framing, 1).unwrap();
        let eps_grid = [0.0, 0.01, 0.08];
        let sigma_grid = [0.0, 250.0, 450.0];
        let mut table = [[0.0f64; 3]; 3];
        for (i, &eps) in eps_grid.iter().enumerate() {
            for (j, &sigma) in sigma_grid.iter().enumerate() {
                let radio = RadioParams {
                    eps_byte: eps,
                    sigma_jitter_ns: sigma,
                    ..RadioParams::default()
                };
                let proto = ProtocolParams::for_network(
                    4,
                    slot(&radio, &framing),
                    radio.t_proc,
                    topo.max_hops(),
                );
                let mut delivered = 0usize;
                let runs = 60;
                for seed in 0..runs {
                    let r = run_dissemination(&topo, &radio, &framing, &proto, &packets, seed)
                        .unwrap();
                    delivered += r.nodes.iter().skip(1).filter(|n| n.delivered).count();
                }
                table[i][j] = delivered as f64 / (runs as f64 * (topo.n - 1) as f64);
            }
        }
        for j in 0..3 {
            assert!(table[0][j] >= table[1][j] && table[1][j] >= table[2][j],
                "not monotone in eps: {table:?}");
        }
        for row in &table {
            assert!(row[0] >= row[1] && row[1] >= row[2],
                "not monotone in sigma: {table:?}");
        }
    }
}
