//! Event files: a CSV-like text form and a packed little-endian binary form.
//!
//! Text: header `# width height`, then one `t_us,x,y,p` line per event.
//! Binary: `EVS1`, `u16` width, `u16` height, then 13-byte records
//! `(u64 t_us, u16 x, u16 y, i8 p)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use darksplat_core::events::{Event, EventStream};

use crate::error::{DataError, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"EVS1";
const RECORD_LEN: usize = 13;

/// On-disk representation, chosen by file extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Text,
    Binary,
}

impl EventFormat {
    /// `.csv` and `.txt` are text; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") | Some("txt") => Self::Text,
            _ => Self::Binary,
        }
    }
}

pub fn encode_text(stream: &EventStream) -> String {
    let mut out = format!("# {} {}\n", stream.width, stream.height);
    for e in &stream.events {
        out.push_str(&format!("{},{},{},{}\n", e.t, e.x, e.y, e.polarity));
    }
    out
}

pub fn decode_text(path: &Path, text: &str) -> Result<EventStream> {
    let mut lines = text.lines().enumerate();
    let (width, height) = match lines.next() {
        Some((_, header)) => {
            let dims: Vec<&str> = header.strip_prefix('#').unwrap_or("").split_whitespace().collect();
            match dims.as_slice() {
                [w, h] => (
                    w.parse().map_err(|_| DataError::parse(path, 1, "bad width in header"))?,
                    h.parse().map_err(|_| DataError::parse(path, 1, "bad height in header"))?,
                ),
                _ => return Err(DataError::parse(path, 1, "expected header `# width height`")),
            }
        }
        None => return Err(DataError::parse(path, 1, "empty event file")),
    };
    let mut stream = EventStream::new(width, height);
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [t, x, y, p] = fields.as_slice() else {
            return Err(DataError::parse(path, lineno, "expected `t_us,x,y,p`"));
        };
        let bad = |what: &str| DataError::parse(path, lineno, format!("bad {what}"));
        let event = Event {
            t: t.trim().parse().map_err(|_| bad("timestamp"))?,
            x: x.trim().parse().map_err(|_| bad("x"))?,
            y: y.trim().parse().map_err(|_| bad("y"))?,
            polarity: p.trim().parse().map_err(|_| bad("polarity"))?,
        };
        check_event(&stream, &event).map_err(|m| DataError::parse(path, lineno, m))?;
        stream.events.push(event);
    }
    Ok(stream)
}

fn check_event(stream: &EventStream, e: &Event) -> std::result::Result<(), String> {
    if e.polarity != 1 && e.polarity != -1 {
        return Err(format!("polarity must be 1 or -1, got {}", e.polarity));
    }
    if e.x as u32 >= stream.width || e.y as u32 >= stream.height {
        return Err(format!("pixel ({}, {}) outside {}x{}", e.x, e.y, stream.width, stream.height));
    }
    if stream.events.last().is_some_and(|last| last.t > e.t) {
        return Err("timestamps must be non-decreasing".into());
    }
    Ok(())
}

pub fn encode_binary(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + stream.events.len() * RECORD_LEN);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(stream.width as u16).to_le_bytes());
    out.extend_from_slice(&(stream.height as u16).to_le_bytes());
    for e in &stream.events {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.polarity as u8);
    }
    out
}

pub fn decode_binary(path: &Path, bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < 8 || &bytes[..4] != BINARY_MAGIC {
        return Err(DataError::corrupt(path, 0, "missing EVS1 header"));
    }
    let width = u16::from_le_bytes([bytes[4], bytes[5]]) as u32;
    let height = u16::from_le_bytes([bytes[6], bytes[7]]) as u32;
    let body = &bytes[8..];
    if body.len() % RECORD_LEN != 0 {
        let offset = 8 + (body.len() / RECORD_LEN * RECORD_LEN) as u64;
        return Err(DataError::corrupt(path, offset, "truncated event record"));
    }
    let mut stream = EventStream::new(width, height);
    stream.events.reserve(body.len() / RECORD_LEN);
    for (i, r) in body.chunks_exact(RECORD_LEN).enumerate() {
        let event = Event {
            t: u64::from_le_bytes(r[..8].try_into().expect("8 bytes")),
            x: u16::from_le_bytes([r[8], r[9]]),
            y: u16::from_le_bytes([r[10], r[11]]),
            polarity: r[12] as i8,
        };
        let offset = 8 + (i * RECORD_LEN) as u64;
        check_event(&stream, &event).map_err(|m| DataError::corrupt(path, offset, m))?;
        stream.events.push(event);
    }
    Ok(stream)
}

pub fn write_events(path: &Path, stream: &EventStream) -> Result<()> {
    if stream.width > u16::MAX as u32 || stream.height > u16::MAX as u32 {
        return Err(DataError::core(path, darksplat_core::Error::InvalidParameter("sensor too large for u16".into())));
    }
    let bytes = match EventFormat::from_path(path) {
        EventFormat::Text => encode_text(stream).into_bytes(),
        EventFormat::Binary => encode_binary(stream),
    };
    let mut f = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| DataError::io(path, e))
}

pub fn read_events(path: &Path) -> Result<EventStream> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    match EventFormat::from_path(path) {
        EventFormat::Text => {
            let text = String::from_utf8(bytes).map_err(|_| DataError::parse(path, 1, "file is not UTF-8"))?;
            decode_text(path, &text)
        }
        EventFormat::Binary => decode_binary(path, &bytes),
    }
}
