//! Byte-level Standard MIDI File reading and writing.
//!
//! Only the subset of events the note pipeline consumes is decoded; every
//! other channel, meta and sysex event is skipped after its length has been
//! validated.

use super::MidiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum EventKind {
    NoteOn {
        channel: u8,
        key: u8,
        velocity: u8,
    },
    NoteOff {
        channel: u8,
        key: u8,
    },
    /// Microseconds per quarter note.
    Tempo(u32),
    TimeSignature {
        numerator: u8,
        denominator: u32,
    },
    EndOfTrack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct TimedEvent {
    pub tick: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone)]
pub(crate) struct SmfContents {
    pub format: u16,
    pub ticks_per_quarter: u16,
    pub tracks: Vec<Vec<TimedEvent>>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, reason: impl Into<String>) -> MidiError {
        MidiError::Malformed {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        if self.pos >= self.end {
            return Err(self.err("unexpected end of data"));
        }
        let b = self.bytes[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn peek(&self) -> Result<u8, MidiError> {
        if self.pos >= self.end {
            return Err(self.err("unexpected end of data"));
        }
        Ok(self.bytes[self.pos])
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.end - self.pos < n {
            return Err(self.err(format!("need {n} bytes, {} left", self.end - self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16_be(&mut self) -> Result<u16, MidiError> {
        let s = self.take(2)?;
        Ok(u16::from_be_bytes([s[0], s[1]]))
    }

    fn u32_be(&mut self) -> Result<u32, MidiError> {
        let s = self.take(4)?;
        Ok(u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
    }

    /// Variable-length quantity, at most four bytes.
    fn vlq(&mut self) -> Result<u32, MidiError> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(MidiError::Malformed {
            offset: start,
            reason: "variable-length quantity longer than 4 bytes".into(),
        })
    }
}

pub(crate) fn read(bytes: &[u8]) -> Result<SmfContents, MidiError> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        end: bytes.len(),
    };
    if cur.take(4).map_err(|_| cur_err(0, "file too short for header"))? != b"MThd" {
        return Err(cur_err(0, "missing MThd chunk"));
    }
    let header_len = cur.u32_be()? as usize;
    if header_len < 6 {
        return Err(cur_err(4, "header chunk shorter than 6 bytes"));
    }
    let format = cur.u16_be()?;
    let ntracks = cur.u16_be()?;
    let division_at = cur.pos;
    let division = cur.u16_be()?;
    cur.take(header_len - 6)?;
    if format > 1 {
        return Err(cur_err(8, format!("unsupported SMF format {format}")));
    }
    if division & 0x8000 != 0 {
        return Err(cur_err(division_at, "SMPTE time division is not supported"));
    }
    if division == 0 {
        return Err(cur_err(division_at, "zero ticks per quarter note"));
    }

    let mut tracks = Vec::with_capacity(ntracks as usize);
    while tracks.len() < ntracks as usize {
        let chunk_at = cur.pos;
        let id = cur.take(4)?;
        let len = cur.u32_be()? as usize;
        if cur.end - cur.pos < len {
            return Err(cur_err(chunk_at, format!("chunk length {len} runs past end of file")));
        }
        if id != b"MTrk" {
            // Unknown chunks are skipped per the SMF convention.
            cur.pos += len;
            continue;
        }
        let mut track_cur = Cursor {
            bytes,
            pos: cur.pos,
            end: cur.pos + len,
        };
        tracks.push(read_track(&mut track_cur)?);
        cur.pos += len;
    }
    Ok(SmfContents {
        format,
        ticks_per_quarter: division,
        tracks,
    })
}

fn cur_err(offset: usize, reason: impl Into<String>) -> MidiError {
    MidiError::Malformed {
        offset,
        reason: reason.into(),
    }
}

fn read_track(cur: &mut Cursor<'_>) -> Result<Vec<TimedEvent>, MidiError> {
    let mut events = Vec::new();
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    while cur.pos < cur.end {
        tick += u64::from(cur.vlq()?);
        let status_at = cur.pos;
        let mut status = cur.peek()?;
        if status & 0x80 != 0 {
            cur.pos += 1;
        } else {
            status = running.ok_or_else(|| cur.err("data byte without running status"))?;
        }
        match status {
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                let nbytes = if matches!(status & 0xf0, 0xc0 | 0xd0) { 1 } else { 2 };
                let data = cur.take(nbytes)?;
                if data.iter().any(|b| b & 0x80 != 0) {
                    return Err(cur_err(status_at, "channel message data byte above 127"));
                }
                match status & 0xf0 {
                    0x80 => events.push(TimedEvent {
                        tick,
                        kind: EventKind::NoteOff { channel, key: data[0] },
                    }),
                    0x90 if data[1] == 0 => events.push(TimedEvent {
                        tick,
                        kind: EventKind::NoteOff { channel, key: data[0] },
                    }),
                    0x90 => events.push(TimedEvent {
                        tick,
                        kind: EventKind::NoteOn {
                            channel,
                            key: data[0],
                            velocity: data[1],
                        },
                    }),
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = cur.vlq()? as usize;
                cur.take(len)?;
            }
            0xff => {
                running = None;
                let meta_type = cur.u8()?;
                let len = cur.vlq()? as usize;
                let data = cur.take(len)?;
                match meta_type {
                    0x51 => {
                        if len != 3 {
                            return Err(cur_err(status_at, "tempo meta event must carry 3 bytes"));
                        }
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if us == 0 {
                            return Err(cur_err(status_at, "zero tempo"));
                        }
                        events.push(TimedEvent {
                            tick,
                            kind: EventKind::Tempo(us),
                        });
                    }
                    0x58 => {
                        if len < 2 {
                            return Err(cur_err(status_at, "time signature meta event too short"));
                        }
                        if data[1] > 31 {
                            return Err(cur_err(status_at, "time signature denominator overflow"));
                        }
                        events.push(TimedEvent {
                            tick,
                            kind: EventKind::TimeSignature {
                                numerator: data[0],
                                denominator: 1u32 << data[1],
                            },
                        });
                    }
                    0x2f => {
                        events.push(TimedEvent {
                            tick,
                            kind: EventKind::EndOfTrack,
                        });
                        return Ok(events);
                    }
                    _ => {}
                }
            }
            _ => return Err(cur_err(status_at, format!("invalid status byte {status:#04x}"))),
        }
    }
    // Tolerate a missing end-of-track marker.
    events.push(TimedEvent {
        tick,
        kind: EventKind::EndOfTrack,
    });
    Ok(events)
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = 0x80 | (value & 0x7f) as u8;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Serializes a single-track (format 0) file. `events` must be sorted by tick.
pub(crate) fn write_format0(ticks_per_quarter: u16, events: &[TimedEvent]) -> Vec<u8> {
    let mut track = Vec::new();
    let mut last = 0u64;
    for ev in events {
        let delta = u32::try_from(ev.tick - last).expect("delta time fits in 28 bits");
        last = ev.tick;
        push_vlq(&mut track, delta);
        match ev.kind {
            EventKind::NoteOn { channel, key, velocity } => track.extend_from_slice(&[0x90 | channel, key, velocity]),
            EventKind::NoteOff { channel, key } => track.extend_from_slice(&[0x80 | channel, key, 0x40]),
            EventKind::Tempo(us) => {
                let b = us.to_be_bytes();
                track.extend_from_slice(&[0xff, 0x51, 0x03, b[1], b[2], b[3]]);
            }
            EventKind::TimeSignature { numerator, denominator } => {
                let pow = denominator.trailing_zeros() as u8;
                track.extend_from_slice(&[0xff, 0x58, 0x04, numerator, pow, 24, 8]);
            }
            EventKind::EndOfTrack => track.extend_from_slice(&[0xff, 0x2f, 0x00]),
        }
    }

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&ticks_per_quarter.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}
