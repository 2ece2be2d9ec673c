//! N-MNIST binary layout: 5 bytes per event, big-endian.
//!
//! byte 0 = x, byte 1 = y, bit 7 of byte 2 = polarity, and the remaining 23
//! bits (byte 2 bits 6..0, bytes 3 and 4) = timestamp in microseconds.

use super::EventRecord;
use crate::error::{Error, Result};

/// Sensor edge length in pixels.
pub const NMNIST_SIZE: u32 = 34;

const MAX_TIMESTAMP: u64 = (1 << 23) - 1;

pub fn read_nmnist_bin(bytes: &[u8]) -> Result<Vec<EventRecord>> {
    if bytes.len() % 5 != 0 {
        return Err(Error::Format(format!(
            "truncated record: {} bytes is not a multiple of 5",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(5)
        .enumerate()
        .map(|(i, r)| {
            let ev = EventRecord {
                x: r[0] as u32,
                y: r[1] as u32,
                p: (r[2] >> 7) as u32,
                t_us: ((r[2] as u64 & 0x7f) << 16) | ((r[3] as u64) << 8) | r[4] as u64,
            };
            if ev.x >= NMNIST_SIZE || ev.y >= NMNIST_SIZE {
                return Err(Error::Format(format!(
                    "event {i}: coordinate ({}, {}) outside the {NMNIST_SIZE}x{NMNIST_SIZE} sensor",
                    ev.x, ev.y
                )));
            }
            Ok(ev)
        })
        .collect()
}

pub fn write_nmnist_bin(events: &[EventRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(events.len() * 5);
    for (i, ev) in events.iter().enumerate() {
        if ev.x > 255 || ev.y > 255 || ev.p > 1 || ev.t_us > MAX_TIMESTAMP {
            return Err(Error::Format(format!(
                "event {i} does not fit the 5-byte layout: {ev:?}"
            )));
        }
        out.extend_from_slice(&[
            ev.x as u8,
            ev.y as u8,
            ((ev.p as u8) << 7) | ((ev.t_us >> 16) as u8 & 0x7f),
            (ev.t_us >> 8) as u8,
            ev.t_us as u8,
        ]);
    }
    Ok(out)
}
