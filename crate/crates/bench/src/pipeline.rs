//! End-to-end update pipeline over one simulated dissemination:
//! reorganize, diff, store, compress, fragment, flood, and node-side
//! decompress/apply with byte-for-byte verification against the target
//! image.

use std::fmt;
use std::path::PathBuf;

use cidp_core::framing::{fragment, FramingParams};
use cidp_core::patchgen::{apply, diff, reorganize, FirmwareImage, Patch, VersionStore};
use cidp_core::protocol::{compute_nmax, compute_nmax_floor, ProtocolParams};
use cidp_core::simnet::{build_topology, metrics::format_us, run_dissemination, RadioParams};

use crate::config::TopologyConfig;
use crate::BenchError;

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub topology: TopologyConfig,
    pub seed: u64,
    pub radio: RadioParams,
    pub l_pkt: usize,
    pub phy_overhead: usize,
    pub n_max_override: Option<u8>,
    pub nmax_floor: bool,
    /// When set, the (old, new, patch) tuple is stored here before
    /// dissemination.
    pub store_dir: Option<PathBuf>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            topology: TopologyConfig::Line { nodes: 3 },
            seed: 1,
            // Correctness demo by default: a lossless channel.
            radio: RadioParams::lossless(),
            l_pkt: cidp_core::framing::DEFAULT_L_PKT,
            phy_overhead: cidp_core::framing::DEFAULT_PHY_OVERHEAD,
            n_max_override: None,
            nmax_floor: false,
            store_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeVerdict {
    pub node: usize,
    pub hops: u32,
    pub delivered: bool,
    /// `None` when never delivered; otherwise whether the applied image
    /// matched the target byte for byte.
    pub verified: Option<bool>,
    pub completion_us: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub base_version: u32,
    pub target_version: u32,
    pub patch_records: usize,
    pub raw_patch_bytes: usize,
    /// Disseminated object size (compressed patch), the L_obj on air.
    pub object_bytes: usize,
    pub m: u8,
    pub relays: usize,
    pub delivered: usize,
    pub verified: usize,
    pub verdicts: Vec<NodeVerdict>,
    pub stored_at: Option<PathBuf>,
}

impl PipelineReport {
    /// True when every delivered node verified; zero deliveries is not a
    /// failure (the channel may simply have dropped everything).
    pub fn all_verified(&self) -> bool {
        self.verdicts
            .iter()
            .all(|v| v.verified.unwrap_or(!v.delivered))
    }
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "update v{} -> v{}: {} records, patch {} B, compressed object {} B, M = {}",
            self.base_version,
            self.target_version,
            self.patch_records,
            self.raw_patch_bytes,
            self.object_bytes,
            self.m
        )?;
        if let Some(dir) = &self.stored_at {
            writeln!(f, "stored tuple under {}", dir.display())?;
        }
        for v in &self.verdicts {
            let status = match (v.delivered, v.verified) {
                (false, _) => "not delivered".to_string(),
                (true, Some(true)) => format!(
                    "delivered at {} us, image verified",
                    v.completion_us.as_deref().unwrap_or("?")
                ),
                (true, Some(false)) => "delivered but VERIFICATION FAILED".to_string(),
                (true, None) => "delivered, object unreadable".to_string(),
            };
            writeln!(f, "node {:>3} (hop {}): {}", v.node, v.hops, status)?;
        }
        write!(
            f,
            "verified {}/{} delivered ({} relays total)",
            self.verified, self.delivered, self.relays
        )
    }
}

pub fn run_pipeline(
    old: &FirmwareImage,
    proposed: &FirmwareImage,
    opts: &PipelineOptions,
) -> Result<PipelineReport, BenchError> {
    let new = reorganize(old, proposed)?;
    let patch = diff(old, &new)?;
    let raw = patch.serialize();
    let object = patch.to_compressed();

    let stored_at = match &opts.store_dir {
        Some(dir) => {
            let store = VersionStore::open(dir)?;
            store.store_version(old, &new, &patch)?;
            Some(dir.clone())
        }
        None => None,
    };

    if patch.target_version > u16::MAX as u32 {
        return Err(BenchError::Invalid(
            "target version does not fit the packet header".into(),
        ));
    }
    let framing = FramingParams {
        l_pkt: opts.l_pkt,
        phy_overhead: opts.phy_overhead,
    };
    let packets = fragment(&object, &framing, patch.target_version as u16)?;

    let topology = build_topology(&opts.topology.to_spec(), opts.seed)?;
    let n_max = match opts.n_max_override {
        Some(n) => n,
        None if opts.nmax_floor => compute_nmax_floor(topology.n as u64)?,
        None => compute_nmax(topology.n as u64)?,
    };
    let t_slot = opts.radio.airtime(framing.frame_bytes()) + opts.radio.t_proc;
    let proto = ProtocolParams {
        n_max,
        t_slot,
        t_round: (2 * topology.max_hops() as u64 + n_max as u64 + 2) * t_slot,
        t_proc: opts.radio.t_proc,
        initiator_timeout_retx: true,
    };
    let result = run_dissemination(&topology, &opts.radio, &framing, &proto, &packets, opts.seed)?;

    let mut verdicts = Vec::new();
    let mut delivered = 0;
    let mut verified = 0;
    for outcome in result.nodes.iter().skip(1) {
        let mut verdict = NodeVerdict {
            node: outcome.node,
            hops: outcome.hops,
            delivered: outcome.delivered,
            verified: None,
            completion_us: outcome.completion_ns.map(format_us),
        };
        if let Some(bytes) = &outcome.delivered_object {
            delivered += 1;
            let ok = verify_node(old, &new, bytes);
            if ok {
                verified += 1;
            }
            verdict.verified = Some(ok);
        }
        verdicts.push(verdict);
    }
    Ok(PipelineReport {
        base_version: patch.base_version,
        target_version: patch.target_version,
        patch_records: patch.records.len(),
        raw_patch_bytes: raw.len(),
        object_bytes: object.len(),
        m: packets.len() as u8,
        relays: topology.n - 1,
        delivered,
        verified,
        verdicts,
        stored_at,
    })
}

/// Node-side path: decompress the received object, parse the patch, apply
/// it to the old image, and compare against the target image exactly.
fn verify_node(old: &FirmwareImage, target: &FirmwareImage, object: &[u8]) -> bool {
    let Ok(patch) = Patch::from_compressed(object) else {
        return false;
    };
    match apply(old, &patch) {
        Ok(applied) => applied == *target && applied.to_text() == target.to_text(),
        Err(_) => false,
    }
}
