//! Event CSV: UTF-8, header `t_us,x,y,p`, one event per line.

use std::fmt::Write;

use super::EventRecord;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "t_us,x,y,p";

/// Parses an event CSV. Blank lines are skipped; timestamps need not be sorted.
pub fn read_event_csv(text: &str) -> Result<Vec<EventRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header '{CSV_HEADER}', found '{}'", header.trim()),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("missing header '{CSV_HEADER}'"),
            })
        }
    }
    let mut events = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let field = |k: usize, name: &str| {
            fields[k].parse::<u64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("{name} '{}' is not a non-negative integer", fields[k]),
            })
        };
        let narrow = |v: u64, name: &str| {
            u32::try_from(v).map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("{name} {v} out of range"),
            })
        };
        events.push(EventRecord {
            t_us: field(0, "t_us")?,
            x: narrow(field(1, "x")?, "x")?,
            y: narrow(field(2, "y")?, "y")?,
            p: narrow(field(3, "p")?, "p")?,
        });
    }
    Ok(events)
}

pub fn write_event_csv(events: &[EventRecord]) -> String {
    let mut out = String::with_capacity(16 * (events.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for ev in events {
        let _ = writeln!(out, "{},{},{},{}", ev.t_us, ev.x, ev.y, ev.p);
    }
    out
}
