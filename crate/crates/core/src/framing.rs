//! Packet framing: byte-exact header encoding and fragmentation of a data
//! object into fixed-size payloads.
//!
//! Wire layout, little-endian, normative:
//!
//! ```text
//! version(2) | M(1) | n(1) | relay(1) | obj_len(2) | payload(L_pkt)
//! ```
//!
//! `M` is the packet count, `n` the 1-based sequence number, `relay` a
//! diagnostic hop counter excluded from header-consistency checks, and
//! `obj_len` the pre-padding object length. The object is split into
//! `M = ceil(L_obj / L_pkt)` payloads; the last one is zero-padded.

pub const HEADER_LEN: usize = 7;

/// Default payload size in bytes.
pub const DEFAULT_L_PKT: usize = 36;

/// Default on-air overhead (preamble/SFD/MAC bytes) counted for airtime
/// accounting only; never serialized here.
pub const DEFAULT_PHY_OVERHEAD: usize = 10;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum Error {
    #[error("cannot fragment an empty object")]
    EmptyObject,
    #[error("object of {len} bytes exceeds the fragmentation limit {max}")]
    ObjectTooLarge { len: usize, max: usize },
    #[error("byte stream too short: got {got}, need {need}")]
    Truncated { got: usize, need: usize },
    #[error("header invariant violated: {0}")]
    InvariantViolation(String),
    #[error("fragments missing: {0:?}")]
    MissingFragments(Vec<u8>),
    #[error("packets disagree on (version, M, obj_len)")]
    InconsistentHeaders,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramingParams {
    pub l_pkt: usize,
    pub phy_overhead: usize,
}

impl Default for FramingParams {
    fn default() -> Self {
        FramingParams {
            l_pkt: DEFAULT_L_PKT,
            phy_overhead: DEFAULT_PHY_OVERHEAD,
        }
    }
}

impl FramingParams {
    pub fn with_l_pkt(l_pkt: usize) -> FramingParams {
        FramingParams {
            l_pkt,
            ..FramingParams::default()
        }
    }

    /// Total on-air bytes for one frame: PHY overhead + header + payload.
    pub fn frame_bytes(&self) -> usize {
        self.phy_overhead + HEADER_LEN + self.l_pkt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u16,
    pub m: u8,
    pub n: u8,
    pub relay: u8,
    pub obj_len: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub header: Header,
    pub payload: Vec<u8>,
}

impl Packet {
    /// Construct after checking the header invariants against the payload
    /// length: `1 <= n <= M` and `(M-1)*L_pkt < obj_len <= M*L_pkt`.
    pub fn new(header: Header, payload: Vec<u8>) -> Result<Packet, Error> {
        let l_pkt = payload.len();
        if l_pkt == 0 {
            return Err(Error::InvariantViolation("empty payload".into()));
        }
        if header.m == 0 {
            return Err(Error::InvariantViolation("M = 0".into()));
        }
        if header.n == 0 || header.n > header.m {
            return Err(Error::InvariantViolation(format!(
                "sequence number {} outside 1..={}",
                header.n, header.m
            )));
        }
        let m = header.m as usize;
        let obj_len = header.obj_len as usize;
        if obj_len > m * l_pkt || obj_len <= (m - 1) * l_pkt {
            return Err(Error::InvariantViolation(format!(
                "obj_len {} inconsistent with M={} L_pkt={}",
                obj_len, m, l_pkt
            )));
        }
        Ok(Packet { header, payload })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.header.version.to_le_bytes());
        out.push(self.header.m);
        out.push(self.header.n);
        out.push(self.header.relay);
        out.extend_from_slice(&self.header.obj_len.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decode a frame of exactly `HEADER_LEN + l_pkt` bytes.
    pub fn decode(bytes: &[u8], l_pkt: usize) -> Result<Packet, Error> {
        let need = HEADER_LEN + l_pkt;
        if bytes.len() != need {
            return Err(Error::Truncated {
                got: bytes.len(),
                need,
            });
        }
        let header = Header {
            version: u16::from_le_bytes([bytes[0], bytes[1]]),
            m: bytes[2],
            n: bytes[3],
            relay: bytes[4],
            obj_len: u16::from_le_bytes([bytes[5], bytes[6]]),
        };
        Packet::new(header, bytes[HEADER_LEN..].to_vec())
    }

    /// Copy with the relay counter bumped, as forwarded by a node.
    pub fn relayed(&self) -> Packet {
        let mut p = self.clone();
        p.header.relay = p.header.relay.saturating_add(1);
        p
    }
}

/// Split `object` into `M = ceil(len / L_pkt)` packets with sequence
/// numbers `1..=M`; the last payload is zero-padded.
pub fn fragment(object: &[u8], params: &FramingParams, version: u16) -> Result<Vec<Packet>, Error> {
    if object.is_empty() {
        return Err(Error::EmptyObject);
    }
    let max = (255 * params.l_pkt).min(u16::MAX as usize);
    if object.len() > max {
        return Err(Error::ObjectTooLarge {
            len: object.len(),
            max,
        });
    }
    let m = object.len().div_ceil(params.l_pkt);
    let mut packets = Vec::with_capacity(m);
    for n in 1..=m {
        let start = (n - 1) * params.l_pkt;
        let end = (start + params.l_pkt).min(object.len());
        let mut payload = object[start..end].to_vec();
        payload.resize(params.l_pkt, 0);
        packets.push(Packet::new(
            Header {
                version,
                m: m as u8,
                n: n as u8,
                relay: 0,
                obj_len: object.len() as u16,
            },
            payload,
        )?);
    }
    Ok(packets)
}

/// Rebuild the object from any permutation of the fragments. All packets
/// must agree on (version, M, obj_len); the relay counter may differ.
pub fn reassemble(packets: &[Packet]) -> Result<Vec<u8>, Error> {
    let first = packets.first().ok_or(Error::InconsistentHeaders)?;
    let (version, m, obj_len) = (first.header.version, first.header.m, first.header.obj_len);
    let l_pkt = first.payload.len();
    let mut slots: Vec<Option<&Packet>> = vec![None; m as usize];
    for p in packets {
        if p.header.version != version
            || p.header.m != m
            || p.header.obj_len != obj_len
            || p.payload.len() != l_pkt
        {
            return Err(Error::InconsistentHeaders);
        }
        let idx = (p.header.n - 1) as usize;
        match slots[idx] {
            Some(prev) if prev.payload != p.payload => return Err(Error::InconsistentHeaders),
            _ => slots[idx] = Some(p),
        }
    }
    let missing: Vec<u8> = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_none())
        .map(|(i, _)| (i + 1) as u8)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFragments(missing));
    }
    let mut object = Vec::with_capacity(obj_len as usize);
    for slot in slots {
        object.extend_from_slice(&slot.unwrap().payload);
    }
    object.truncate(obj_len as usize);
    Ok(object)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn patch_of_128_bytes_makes_4_packets() {
        let object = vec![0xabu8; 128];
        let packets = fragment(&object, &FramingParams::default(), 1).unwrap();
        assert_eq!(packets.len(), 4);
        assert_eq!(packets[3].header.n, 4);
        assert_eq!(packets[3].header.obj_len, 128);
        // 128 = 3*36 + 20, so 16 zero pad bytes at the tail.
        assert_eq!(&packets[3].payload[20..], &[0u8; 16]);
        assert!(packets[3].payload[..20].iter().all(|&b| b == 0xab));
    }

    #[test]
    fn exact_fit_has_no_padding() {
        let packets = fragment(&[7u8; 36], &FramingParams::default(), 1).unwrap();
        assert_eq!(packets.len(), 1);
        assert_eq!(packets[0].payload, vec![7u8; 36]);
    }

    #[test]
    fn one_byte_over_adds_a_packet() {
        let packets = fragment(&[9u8; 37], &FramingParams::default(), 1).unwrap();
        assert_eq!(packets.len(), 2);
        assert_eq!(&packets[1].payload[1..], &[0u8; 35]);
    }

    #[test]
    fn empty_object_rejected() {
        assert_eq!(
            fragment(&[], &FramingParams::default(), 1),
            Err(Error::EmptyObject)
        );
    }

    #[test]
    fn oversized_object_rejected() {
        let object = vec![0u8; 255 * 36 + 1];
        assert!(matches!(
            fragment(&object, &FramingParams::default(), 1),
            Err(Error::ObjectTooLarge { .. })
        ));
    }

    #[test]
    fn golden_encoding() {
        let p = Packet::new(
            Header {
                version: 1,
                m: 4,
                n: 1,
                relay: 0,
                obj_len: 128,
            },
            vec![0u8; 36],
        )
        .unwrap();
        let mut expect = vec![0x01, 0x00, 0x04, 0x01, 0x00, 0x80, 0x00];
        expect.extend_from_slice(&[0u8; 36]);
        assert_eq!(p.encode(), expect);
    }

    #[test]
    fn decode_rejects_short_input() {
        assert_eq!(
            Packet::decode(&[0u8; 6], 36),
            Err(Error::Truncated { got: 6, need: 43 })
        );
    }

    #[test]
    fn decode_rejects_bad_headers() {
        let mut bytes = vec![0x01, 0x00, 0x04, 0x05, 0x00, 0x80, 0x00]; // n > M
        bytes.extend_from_slice(&[0u8; 36]);
        assert!(matches!(
            Packet::decode(&bytes, 36),
            Err(Error::InvariantViolation(_))
        ));
        bytes[3] = 0; // n = 0
        assert!(matches!(
            Packet::decode(&bytes, 36),
            Err(Error::InvariantViolation(_))
        ));
        bytes[3] = 1;
        bytes[5] = 0x10; // obj_len = 16 but M = 4 demands > 108
        assert!(matches!(
            Packet::decode(&bytes, 36),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn missing_fragment_reported() {
        let object = vec![1u8; 128];
        let mut packets = fragment(&object, &FramingParams::default(), 1).unwrap();
        packets.remove(2); // drop n = 3
        assert_eq!(
            reassemble(&packets),
            Err(Error::MissingFragments(vec![3]))
        );
    }

    #[test]
    fn mixed_versions_rejected() {
        let mut packets = fragment(&[1u8; 72], &FramingParams::default(), 1).unwrap();
        packets[1].header.version = 2;
        assert_eq!(reassemble(&packets), Err(Error::InconsistentHeaders));
    }

    #[test]
    fn relay_counter_excluded_from_consistency() {
        let mut packets = fragment(&[1u8; 72], &FramingParams::default(), 1).unwrap();
        packets[1].header.relay = 9;
        assert!(reassemble(&packets).is_ok());
    }

    #[test]
    fn padded_identity_holds() {
        // M*L_pkt - L_pkt < obj_len <= M*L_pkt for every fragmentation.
        for len in [1usize, 35, 36, 37, 71, 72, 128, 9180] {
            let object = vec![3u8; len];
            let packets = fragment(&object, &FramingParams::default(), 1).unwrap();
            let m = packets.len();
            assert!(m * 36 - 36 < len && len <= m * 36, "len {len}, M {m}");
        }
    }

    proptest! {
        #[test]
        fn fragment_reassemble_identity(
            len in 1usize..9180,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let object: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            let packets = fragment(&object, &FramingParams::default(), 7).unwrap();
            // Reassembly is order-independent.
            let mut shuffled = packets.clone();
            shuffled.reverse();
            prop_assert_eq!(reassemble(&shuffled).unwrap(), object);
        }

        #[test]
        fn encode_decode_identity(
            version in any::<u16>(),
            m in 1u8..=255,
            n_off in 0u8..255,
            relay in any::<u8>(),
            tail in 1usize..=36,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let n = 1 + n_off % m;
            let obj_len = (m as usize - 1) * 36 + tail;
            prop_assume!(obj_len <= u16::MAX as usize);
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let payload: Vec<u8> = (0..36).map(|_| rng.random()).collect();
            let p = Packet::new(
                Header { version, m, n, relay, obj_len: obj_len as u16 },
                payload,
            ).unwrap();
            let bytes = p.encode();
            prop_assert_eq!(bytes.len(), HEADER_LEN + 36);
            prop_assert_eq!(Packet::decode(&bytes, 36).unwrap(), p);
        }
    }
}
