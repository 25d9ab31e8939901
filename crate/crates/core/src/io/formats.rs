//! Little-endian binary containers for event streams and float maps.
//!
//! Event file: `"EVRX"`, version u32, width u32, height u32, count u64
//! (24 bytes), then `count` records of `t f64, x u16, y u16, polarity i8`
//! plus three zero bytes (16 bytes each).
//!
//! Map file: `"EVRF"`, version u32, semantics u32, width u32, height u32
//! (20 bytes), then `width * height` f32 values, row-major, top row first.
//! A flow field is two map records back to back, semantics 4 (u) then 5 (v).

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::types::{Event, FloatMap, FlowField, Polarity, Semantics};

pub const EVENT_MAGIC: [u8; 4] = *b"EVRX";
pub const MAP_MAGIC: [u8; 4] = *b"EVRF";
pub const FORMAT_VERSION: u32 = 1;
pub const EVENT_HEADER_LEN: usize = 24;
pub const EVENT_RECORD_LEN: usize = 16;
pub const MAP_HEADER_LEN: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    VersionMismatch(u32),
    #[error("truncated: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("declared size {expected} bytes disagrees with actual length {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("event {index} at ({x}, {y}) outside the {width}x{height} header bounds")]
    CoordinateOutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        width: u32,
        height: u32,
    },
    #[error("event {index} has invalid polarity byte {value}")]
    BadPolarity { index: usize, value: i8 },
    #[error("event {index} has non-zero padding")]
    BadPadding { index: usize },
    #[error("event {index} timestamp is not finite and non-negative, or out of order")]
    BadTimestamp { index: usize },
    #[error("unknown map semantics code {0}")]
    BadSemantics(u32),
    #[error("expected semantics {expected}, found {found}")]
    WrongSemantics { expected: u32, found: u32 },
    #[error("dimensions {width}x{height} too large")]
    TooLarge { width: u32, height: u32 },
}

fn need(bytes: &[u8], len: usize) -> Result<(), FormatError> {
    if bytes.len() < len {
        Err(FormatError::Truncated {
            expected: len,
            actual: bytes.len(),
        })
    } else {
        Ok(())
    }
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().expect("4 bytes"))
}

fn check_magic(bytes: &[u8], expected: [u8; 4]) -> Result<(), FormatError> {
    need(bytes, 4)?;
    let found: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if found != expected {
        return Err(FormatError::BadMagic { expected, found });
    }
    Ok(())
}

/// Events together with the raster size declared in their file header.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFile {
    pub width: u32,
    pub height: u32,
    pub events: Vec<Event>,
}

pub fn encode_events(events: &[Event], width: u32, height: u32) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(EVENT_HEADER_LEN + EVENT_RECORD_LEN * events.len());
    out.extend_from_slice(&EVENT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&(events.len() as u64).to_le_bytes());
    let mut prev = 0.0f64;
    for (index, e) in events.iter().enumerate() {
        if e.x as u32 >= width || e.y as u32 >= height {
            return Err(FormatError::CoordinateOutOfBounds {
                index,
                x: e.x,
                y: e.y,
                width,
                height,
            });
        }
        if !(e.t.is_finite() && e.t >= 0.0) || (index > 0 && e.t < prev) {
            return Err(FormatError::BadTimestamp { index });
        }
        prev = e.t;
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.polarity.sign() as u8);
        out.extend_from_slice(&[0u8; 3]);
    }
    Ok(out)
}

pub fn decode_events(bytes: &[u8]) -> Result<EventFile, FormatError> {
    check_magic(bytes, EVENT_MAGIC)?;
    need(bytes, EVENT_HEADER_LEN)?;
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(FormatError::VersionMismatch(version));
    }
    let width = u32_at(bytes, 8);
    let height = u32_at(bytes, 12);
    let count = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(EVENT_RECORD_LEN))
        .and_then(|p| p.checked_add(EVENT_HEADER_LEN))
        .unwrap_or(usize::MAX);
    need(bytes, expected)?;
    if bytes.len() != expected {
        return Err(FormatError::SizeMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let mut events = Vec::with_capacity(count as usize);
    let mut prev = 0.0f64;
    for (index, rec) in bytes[EVENT_HEADER_LEN..].chunks_exact(EVENT_RECORD_LEN).enumerate() {
        let t = f64::from_le_bytes(rec[0..8].try_into().expect("8 bytes"));
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let p = rec[12] as i8;
        if rec[13..16] != [0, 0, 0] {
            return Err(FormatError::BadPadding { index });
        }
        let polarity = Polarity::from_sign(p).ok_or(FormatError::BadPolarity { index, value: p })?;
        if x as u32 >= width || y as u32 >= height {
            return Err(FormatError::CoordinateOutOfBounds {
                index,
                x,
                y,
                width,
                height,
            });
        }
        if !(t.is_finite() && t >= 0.0) || (index > 0 && t < prev) {
            return Err(FormatError::BadTimestamp { index });
        }
        prev = t;
        events.push(Event { t, x, y, polarity });
    }
    Ok(EventFile {
        width,
        height,
        events,
    })
}

fn push_map(out: &mut Vec<u8>, semantics: Semantics, width: usize, height: usize, values: &[f32]) {
    out.extend_from_slice(&MAP_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&semantics.code().to_le_bytes());
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
}

pub fn encode_map(map: &FloatMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAP_HEADER_LEN + 4 * map.values.len());
    push_map(&mut out, map.semantics, map.width, map.height, &map.values);
    out
}

/// Parses one map record at the start of `bytes`; returns it and the bytes consumed.
fn parse_map_record(bytes: &[u8]) -> Result<(FloatMap, usize), FormatError> {
    check_magic(bytes, MAP_MAGIC)?;
    need(bytes, MAP_HEADER_LEN)?;
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(FormatError::VersionMismatch(version));
    }
    let code = u32_at(bytes, 8);
    let semantics = Semantics::from_code(code).ok_or(FormatError::BadSemantics(code))?;
    let (width, height) = (u32_at(bytes, 12), u32_at(bytes, 16));
    let payload = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(4))
        .ok_or(FormatError::TooLarge { width, height })?;
    let total = MAP_HEADER_LEN + payload;
    need(bytes, total)?;
    let values = bytes[MAP_HEADER_LEN..total]
        .chunks_exact(4)
        .map(|c| f32::from_bits(u32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Ok((
        FloatMap {
            width: width as usize,
            height: height as usize,
            semantics,
            values,
        },
        total,
    ))
}

pub fn decode_map(bytes: &[u8]) -> Result<FloatMap, FormatError> {
    let (map, used) = parse_map_record(bytes)?;
    if used != bytes.len() {
        return Err(FormatError::SizeMismatch {
            expected: used,
            actual: bytes.len(),
        });
    }
    Ok(map)
}

pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 * (MAP_HEADER_LEN + 4 * flow.u.len()));
    push_map(&mut out, Semantics::FlowU, flow.width, flow.height, &flow.u);
    push_map(&mut out, Semantics::FlowV, flow.width, flow.height, &flow.v);
    out
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField, FormatError> {
    let (u, used) = parse_map_record(bytes)?;
    let (v, used_v) = parse_map_record(&bytes[used..])?;
    for (m, expected) in [(&u, Semantics::FlowU), (&v, Semantics::FlowV)] {
        if m.semantics != expected {
            return Err(FormatError::WrongSemantics {
                expected: expected.code(),
                found: m.semantics.code(),
            });
        }
    }
    if used + used_v != bytes.len() {
        return Err(FormatError::SizeMismatch {
            expected: used + used_v,
            actual: bytes.len(),
        });
    }
    if u.dims() != v.dims() {
        return Err(FormatError::SizeMismatch {
            expected: used,
            actual: used_v,
        });
    }
    Ok(FlowField {
        width: u.width,
        height: u.height,
        u: u.values,
        v: v.values,
    })
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

pub fn write_events(path: &Path, events: &[Event], width: u32, height: u32) -> Result<()> {
    write_atomic(path, &encode_events(events, width, height)?)
}

pub fn read_events(path: &Path) -> Result<EventFile> {
    Ok(decode_events(&read_all(path)?)?)
}

pub fn write_map(path: &Path, map: &FloatMap) -> Result<()> {
    write_atomic(path, &encode_map(map))
}

pub fn read_map(path: &Path) -> Result<FloatMap> {
    Ok(decode_map(&read_all(path)?)?)
}

pub fn write_flow(path: &Path, flow: &FlowField) -> Result<()> {
    write_atomic(path, &encode_flow(flow))
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    Ok(decode_flow(&read_all(path)?)?)
}

/// Binary PPM (P6) with 8-bit RGB samples.
pub fn encode_ppm(width: usize, height: usize, rgb: &[[u8; 3]]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for px in rgb {
        out.extend_from_slice(px);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn event_file_sizes() {
        assert_eq!(encode_events(&[], 4, 4).unwrap().len(), 24);
        let evs = [
            Event::new(0.1, 0, 0, Polarity::Positive),
            Event::new(0.2, 1, 2, Polarity::Negative),
            Event::new(0.2, 3, 3, Polarity::Positive),
        ];
        let bytes = encode_events(&evs, 4, 4).unwrap();
        assert_eq!(bytes.len(), 24 + 48);
        assert_eq!(decode_events(&bytes).unwrap().events, evs);
    }

    #[test]
    fn map_file_sizes_and_signed_zero() {
        let m = FloatMap::zeros(1, 1, Semantics::Intensity);
        assert_eq!(encode_map(&m).len(), 24);
        let neg = FloatMap::filled(2, 1, Semantics::DepthM, -0.0);
        let back = decode_map(&encode_map(&neg)).unwrap();
        assert!(back.values.iter().all(|v| v.to_bits() == (-0.0f32).to_bits()));
    }

    #[test]
    fn malformed_event_headers() {
        let good = encode_events(&[Event::new(0.5, 1, 1, Polarity::Positive)], 2, 2).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_events(&bad), Err(FormatError::BadMagic { .. })));
        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(decode_events(&bad), Err(FormatError::VersionMismatch(2)));
        assert!(matches!(decode_events(&good[..30]), Err(FormatError::Truncated { .. })));
        assert!(matches!(decode_events(&good[..10]), Err(FormatError::Truncated { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_events(&long), Err(FormatError::SizeMismatch { .. })));
        let mut oob = good.clone();
        oob[8] = 1; // width 1 while x = 1
        assert!(matches!(decode_events(&oob), Err(FormatError::CoordinateOutOfBounds { .. })));
        let mut pol = good.clone();
        pol[24 + 12] = 0;
        assert!(matches!(decode_events(&pol), Err(FormatError::BadPolarity { .. })));
        assert!(matches!(
            encode_events(&[Event::new(0.0, 5, 0, Polarity::Positive)], 2, 2),
            Err(FormatError::CoordinateOutOfBounds { .. })
        ));
    }

    #[test]
    fn malformed_maps() {
        let good = encode_map(&FloatMap::filled(3, 2, Semantics::InvTtiS, 1.5));
        assert!(matches!(decode_map(&good[..good.len() - 1]), Err(FormatError::Truncated { .. })));
        let mut bad = good.clone();
        bad[8] = 9;
        assert_eq!(decode_map(&bad), Err(FormatError::BadSemantics(9)));
        let mut bad = good.clone();
        bad[3] = b'X';
        assert!(matches!(decode_map(&bad), Err(FormatError::BadMagic { .. })));
        // A flow container is not a single map.
        let flow = encode_flow(&FlowField::zeros(3, 2));
        assert!(matches!(decode_map(&flow), Err(FormatError::SizeMismatch { .. })));
        assert!(matches!(decode_flow(&good), Err(FormatError::BadMagic { .. }) | Err(FormatError::Truncated { .. })));
    }

    #[test]
    fn atomic_write_and_missing_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.evrf");
        let m = FloatMap::filled(2, 2, Semantics::ClassId, 2.0);
        write_map(&p, &m).unwrap();
        assert_eq!(read_map(&p).unwrap(), m);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(matches!(read_map(&dir.path().join("nope")), Err(Error::MissingInput(_))));
    }

    #[test]
    fn ppm_header() {
        let b = encode_ppm(2, 1, &[[1, 2, 3], [4, 5, 6]]);
        assert_eq!(&b[..11], b"P6\n2 1\n255\n");
        assert_eq!(b.len(), 17);
    }

    proptest! {
        #[test]
        fn map_round_trip_is_bit_exact(bits in proptest::collection::vec(any::<u32>(), 0..64), w in 1usize..8) {
            let h = bits.len() / w;
            let values: Vec<f32> = bits[..w * h].iter().map(|b| f32::from_bits(*b)).collect();
            let m = FloatMap { width: w, height: h, semantics: Semantics::DepthM, values };
            let bytes = encode_map(&m);
            let back = decode_map(&bytes).unwrap();
            prop_assert_eq!(encode_map(&back), bytes);
        }
    }
}
