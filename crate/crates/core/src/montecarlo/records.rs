//! TDC record stream and its two file formats.
//!
//! CSV: a `channel,timestamp_ns` header followed by one record per line.
//! Timestamps use the shortest decimal that parses back to the same `f64`.
//!
//! Binary: an 8-byte little-endian `u64` record count, then per record one
//! channel tag byte followed by the timestamp as a little-endian `f64` in
//! nanoseconds.

use std::fmt;
use std::io::{self, BufRead, Read, Write};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Channel {
    /// Alice's detection, resynchronized to the pump clock.
    Trigger = 0,
    /// Both of Bob's detectors were out of dead time when the gate opened.
    Ready = 1,
    S1 = 2,
    S2 = 3,
    I1 = 4,
    I2 = 5,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::Trigger,
        Channel::Ready,
        Channel::S1,
        Channel::S2,
        Channel::I1,
        Channel::I2,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Channel::ALL.get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Trigger => "trigger",
            Channel::Ready => "ready",
            Channel::S1 => "S1",
            Channel::S2 => "S2",
            Channel::I1 => "I1",
            Channel::I2 => "I2",
        }
    }

    pub fn is_alice(self) -> bool {
        matches!(self, Channel::S1 | Channel::S2)
    }

    pub fn is_bob(self) -> bool {
        matches!(self, Channel::I1 | Channel::I2)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown channel `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub channel: Channel,
    pub timestamp_ns: f64,
}

impl DetectionRecord {
    pub fn new(channel: Channel, timestamp_ns: f64) -> Self {
        DetectionRecord { channel, timestamp_ns }
    }
}

/// Orders records by time, then by channel tag.
pub fn sort_records(records: &mut [DetectionRecord]) {
    records.sort_by(|a, b| {
        a.timestamp_ns
            .total_cmp(&b.timestamp_ns)
            .then(a.channel.cmp(&b.channel))
    });
}

pub const CSV_HEADER: &str = "channel,timestamp_ns";

pub fn write_csv<W: Write>(mut w: W, records: &[DetectionRecord]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{},{}", r.channel, r.timestamp_ns)?;
    }
    w.flush()
}

fn invalid(line: usize, msg: impl fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {msg}"))
}

pub fn read_csv<R: BufRead>(r: R) -> io::Result<Vec<DetectionRecord>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(CSV_HEADER) {
        return Err(invalid(1, format!("expected header `{CSV_HEADER}`")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (chan, ts) = line.split_once(',').ok_or_else(|| invalid(i + 2, "missing comma"))?;
        let channel: Channel = chan.parse().map_err(|e| invalid(i + 2, e))?;
        let timestamp_ns: f64 = ts.parse().map_err(|e| invalid(i + 2, e))?;
        out.push(DetectionRecord::new(channel, timestamp_ns));
    }
    Ok(out)
}

pub fn write_binary<W: Write>(mut w: W, records: &[DetectionRecord]) -> io::Result<()> {
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        w.write_all(&[r.channel.tag()])?;
        w.write_all(&r.timestamp_ns.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_binary<R: Read>(mut r: R) -> io::Result<Vec<DetectionRecord>> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let n = u64::from_le_bytes(len);
    let mut out = Vec::with_capacity(n.min(1 << 24) as usize);
    let mut buf = [0u8; 9];
    for i in 0..n {
        r.read_exact(&mut buf)?;
        let channel = Channel::from_tag(buf[0]).ok_or_else(|| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("record {i}: unknown channel tag {}", buf[0]),
            )
        })?;
        let ts = f64::from_le_bytes(buf[1..].try_into().expect("8 bytes"));
        out.push(DetectionRecord::new(channel, ts));
    }
    Ok(out)
}
