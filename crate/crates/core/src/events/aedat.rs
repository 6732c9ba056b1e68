//! AEDAT 3.1 container.
//!
//! Layout: an ASCII header of `#`-prefixed lines that starts with
//! `#!AER-DAT3.1` and ends with `#!END-HEADER\r\n`, followed by packets.
//! Every packet starts with a 28-byte little-endian header
//!
//! ```text
//! i16 event_type  i16 event_source  i32 event_size  i32 ts_offset
//! i32 ts_overflow i32 capacity      i32 number      i32 valid
//! ```
//!
//! and carries `number * event_size` bytes of events. Only polarity events
//! (type 1, 8 bytes: `u32 data, i32 timestamp`) are decoded; other packet
//! types are skipped. Polarity `data` bits: 0 = valid, 1 = polarity,
//! 2..=16 = y, 17..=31 = x. Full timestamps are `overflow << 31 | ts`.

use byteorder::{ByteOrder, LittleEndian};

use super::{Event, EventStream, Polarity, DVS128_SIZE};
use crate::error::{Error, Result};

pub const AEDAT_MAGIC: &[u8] = b"#!AER-DAT3.1";
const END_HEADER: &[u8] = b"#!END-HEADER\r\n";
const PACKET_HEADER_LEN: usize = 28;
pub const POLARITY_EVENT: i16 = 1;
const POLARITY_EVENT_SIZE: usize = 8;

fn header_end(bytes: &[u8]) -> Result<usize> {
    if !bytes.starts_with(AEDAT_MAGIC) {
        return Err(Error::MalformedHeader(
            "missing #!AER-DAT3.1 version marker".into(),
        ));
    }
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes[pos] != b'#' {
            return Err(Error::MalformedHeader(format!(
                "header line at byte {pos} does not start with '#'"
            )));
        }
        let nl = match bytes[pos..].iter().position(|&b| b == b'\n') {
            Some(n) => pos + n + 1,
            None => break,
        };
        if &bytes[pos..nl] == END_HEADER {
            return Ok(nl);
        }
        pos = nl;
    }
    Err(Error::MalformedHeader("missing #!END-HEADER line".into()))
}

/// Decodes an AEDAT 3.1 file into a DVS128 event stream.
pub fn decode_events(bytes: &[u8]) -> Result<EventStream> {
    decode_events_with_size(bytes, (DVS128_SIZE, DVS128_SIZE))
}

pub fn decode_events_with_size(bytes: &[u8], sensor_size: (u16, u16)) -> Result<EventStream> {
    let mut pos = header_end(bytes)?;
    let (width, height) = sensor_size;
    let mut events = Vec::new();

    while pos < bytes.len() {
        if bytes.len() - pos < PACKET_HEADER_LEN {
            return Err(Error::TruncatedEvent { offset: pos });
        }
        let h = &bytes[pos..pos + PACKET_HEADER_LEN];
        let event_type = LittleEndian::read_i16(&h[0..2]);
        let event_size = LittleEndian::read_i32(&h[4..8]);
        let ts_overflow = LittleEndian::read_i32(&h[12..16]);
        let number = LittleEndian::read_i32(&h[20..24]);
        if event_size < 0 || number < 0 {
            return Err(Error::TruncatedEvent { offset: pos });
        }
        pos += PACKET_HEADER_LEN;

        let payload = event_size as usize * number as usize;
        if bytes.len() - pos < payload {
            // Report the first event that does not fit.
            let fit = (bytes.len() - pos) / (event_size.max(1) as usize);
            return Err(Error::TruncatedEvent {
                offset: pos + fit * event_size as usize,
            });
        }
        if event_type == POLARITY_EVENT {
            if event_size as usize != POLARITY_EVENT_SIZE {
                return Err(Error::MalformedHeader(format!(
                    "polarity packet at byte {} declares event size {event_size}",
                    pos - PACKET_HEADER_LEN
                )));
            }
            for k in 0..number as usize {
                let off = pos + k * POLARITY_EVENT_SIZE;
                let data = LittleEndian::read_u32(&bytes[off..off + 4]);
                let ts = LittleEndian::read_i32(&bytes[off + 4..off + 8]);
                if data & 1 == 0 {
                    continue;
                }
                let x = (data >> 17) & 0x7fff;
                let y = (data >> 2) & 0x7fff;
                if x >= width as u32 || y >= height as u32 {
                    return Err(Error::MalformedEvent {
                        offset: off,
                        x,
                        y,
                        width,
                        height,
                    });
                }
                let polarity = if (data >> 1) & 1 == 1 {
                    Polarity::On
                } else {
                    Polarity::Off
                };
                let t = ((ts_overflow as u64) << 31) | (ts as u32 as u64 & 0x7fff_ffff);
                events.push(Event {
                    x: x as u16,
                    y: y as u16,
                    polarity,
                    t,
                });
            }
        }
        pos += payload;
    }

    // Packets are mostly ordered already; stable sort keeps same-time order.
    if !events.windows(2).all(|p| p[0].t <= p[1].t) {
        events.sort_by_key(|e| e.t);
    }
    Ok(EventStream {
        events,
        sensor_size,
    })
}

/// Encodes a stream as an AEDAT 3.1 file with one polarity packet per
/// timestamp-overflow epoch.
pub fn encode_events(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(AEDAT_MAGIC);
    out.extend_from_slice(b"\r\n#Format: RAW\r\n#Source 1: DVS128\r\n");
    out.extend_from_slice(END_HEADER);

    let mut start = 0;
    while start < stream.events.len() {
        let overflow = stream.events[start].t >> 31;
        let end = start
            + stream.events[start..]
                .iter()
                .take_while(|e| e.t >> 31 == overflow)
                .count();
        let chunk = &stream.events[start..end];
        let mut header = [0u8; PACKET_HEADER_LEN];
        LittleEndian::write_i16(&mut header[0..2], POLARITY_EVENT);
        LittleEndian::write_i16(&mut header[2..4], 1);
        LittleEndian::write_i32(&mut header[4..8], POLARITY_EVENT_SIZE as i32);
        LittleEndian::write_i32(&mut header[8..12], 4);
        LittleEndian::write_i32(&mut header[12..16], overflow as i32);
        LittleEndian::write_i32(&mut header[16..20], chunk.len() as i32);
        LittleEndian::write_i32(&mut header[20..24], chunk.len() as i32);
        LittleEndian::write_i32(&mut header[24..28], chunk.len() as i32);
        out.extend_from_slice(&header);
        for e in chunk {
            let data = ((e.x as u32) << 17) | ((e.y as u32) << 2) | ((e.polarity as u32) << 1) | 1;
            let mut buf = [0u8; POLARITY_EVENT_SIZE];
            LittleEndian::write_u32(&mut buf[0..4], data);
            LittleEndian::write_i32(&mut buf[4..8], (e.t & 0x7fff_ffff) as i32);
            out.extend_from_slice(&buf);
        }
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> Vec<u8> {
        let mut b = b"#!AER-DAT3.1\r\n#Source 1: DVS128\r\n".to_vec();
        b.extend_from_slice(END_HEADER);
        b
    }

    fn packet(events: &[(u32, u32, u32, i32)]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [1i16, 1] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [8i32, 4, 0, events.len() as i32, events.len() as i32, events.len() as i32] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for &(x, y, p, t) in events {
            b.extend_from_slice(&((x << 17) | (y << 2) | (p << 1) | 1).to_le_bytes());
            b.extend_from_slice(&t.to_le_bytes());
        }
        b
    }

    #[test]
    fn empty_payload_is_empty_stream() {
        let s = decode_events(&header()).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.sensor_size, (128, 128));
    }

    #[test]
    fn missing_marker_is_malformed_header() {
        let err = decode_events(b"hello").unwrap_err();
        assert!(matches!(err, Error::MalformedHeader(_)));
        let mut b = b"#!AER-DAT3.1\r\n".to_vec();
        b.extend_from_slice(b"#no end\r\n");
        assert!(matches!(
            decode_events(&b).unwrap_err(),
            Error::MalformedHeader(_)
        ));
    }

    #[test]
    fn out_of_range_x_is_malformed_event() {
        let mut b = header();
        b.extend(packet(&[(200, 3, 1, 10)]));
        match decode_events(&b).unwrap_err() {
            Error::MalformedEvent { x, .. } => assert_eq!(x, 200),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn truncated_event_reports_offset() {
        let mut b = header();
        let hlen = b.len();
        b.extend(packet(&[(1, 1, 1, 1), (2, 2, 0, 2)]));
        b.truncate(b.len() - 3);
        match decode_events(&b).unwrap_err() {
            Error::TruncatedEvent { offset } => assert_eq!(offset, hlen + 28 + 8),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn invalid_events_and_other_packets_skipped() {
        let mut b = header();
        // special-event packet (type 0), one 8-byte event
        for v in [0i16, 1] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [8i32, 4, 0, 1, 1, 1] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&[0u8; 8]);
        let mut p = packet(&[(5, 6, 1, 100)]);
        // clear validity bit of the only event
        p[28] &= !1;
        b.extend(p);
        b.extend(packet(&[(7, 8, 0, 200)]));
        let s = decode_events(&b).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.events[0], Event { x: 7, y: 8, polarity: Polarity::Off, t: 200 });
    }

    #[test]
    fn unsorted_packets_come_out_sorted() {
        let mut b = header();
        b.extend(packet(&[(1, 1, 1, 50)]));
        b.extend(packet(&[(2, 2, 1, 10)]));
        let s = decode_events(&b).unwrap();
        assert_eq!(s.events.iter().map(|e| e.t).collect::<Vec<_>>(), vec![10, 50]);
    }

    #[test]
    fn overflow_epochs_extend_timestamps() {
        let s = EventStream {
            events: vec![
                Event { x: 0, y: 0, polarity: Polarity::On, t: 5 },
                Event { x: 1, y: 0, polarity: Polarity::Off, t: (1 << 31) + 7 },
            ],
            sensor_size: (128, 128),
        };
        assert_eq!(decode_events(&encode_events(&s)).unwrap(), s);
    }
}
