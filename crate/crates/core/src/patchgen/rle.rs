//! Byte-oriented run-length codec used on serialized patches.
//!
//! Stream grammar: a sequence of blocks, each one control byte `c` followed
//! by payload. `c` in `[0, 127]` copies the next `c + 1` literal bytes;
//! `c` in `[128, 255]` repeats the next byte `c - 127` times. Runs shorter
//! than three bytes are folded into literal blocks, so worst-case expansion
//! is one control byte per 128 input bytes.

use super::Error;

/// Minimum run length worth a repeat block. A 3-run costs 2 encoded bytes
/// against 3 literal bytes; 2-runs save nothing.
const MIN_RUN: usize = 3;
const MAX_BLOCK: usize = 128;

pub fn compress(raw: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(raw.len() + raw.len() / MAX_BLOCK + 1);
    let mut literal_start = 0;
    let mut i = 0;
    while i < raw.len() {
        let byte = raw[i];
        let mut run = 1;
        while i + run < raw.len() && raw[i + run] == byte && run < MAX_BLOCK {
            run += 1;
        }
        if run >= MIN_RUN {
            flush_literals(&mut out, &raw[literal_start..i]);
            out.push(127 + run as u8);
            out.push(byte);
            i += run;
            literal_start = i;
        } else {
            i += run;
        }
    }
    flush_literals(&mut out, &raw[literal_start..]);
    out
}

fn flush_literals(out: &mut Vec<u8>, mut literals: &[u8]) {
    while !literals.is_empty() {
        let n = literals.len().min(MAX_BLOCK);
        out.push((n - 1) as u8);
        out.extend_from_slice(&literals[..n]);
        literals = &literals[n..];
    }
}

pub fn decompress(enc: &[u8]) -> Result<Vec<u8>, Error> {
    let mut out = Vec::with_capacity(enc.len());
    let mut i = 0;
    while i < enc.len() {
        let control = enc[i];
        i += 1;
        if control <= 127 {
            let n = control as usize + 1;
            if i + n > enc.len() {
                return Err(Error::TruncatedStream);
            }
            out.extend_from_slice(&enc[i..i + n]);
            i += n;
        } else {
            let n = control as usize - 127;
            if i >= enc.len() {
                return Err(Error::TruncatedStream);
            }
            let byte = enc[i];
            i += 1;
            out.resize(out.len() + n, byte);
        }
    }
    Ok(out)
}
