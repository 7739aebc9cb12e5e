//! File formats: event streams (binary and text), `.flo` flow fields,
//! grayscale images and voxel grids.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use super::container::{read_container, write_container, NamedTensor};
use crate::encode::VoxelGrid;
use crate::error::{Error, Result};
use crate::eventsim::{Event, EventStream};
use crate::tensor::{Frame, Tensor};
use crate::warp::FlowField;

pub const EVENT_MAGIC: &[u8; 16] = b"EVST0001\0\0\0\0\0\0\0\0";
const EVENT_HEADER: usize = 16 + 4 + 4 + 8 + 8 + 8;
const EVENT_RECORD: usize = 2 + 2 + 8 + 1;
pub const FLO_MAGIC: f32 = 202021.25;

/// Binary event container, bit-exact round trip.
pub fn encode_events(events: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVENT_HEADER + events.len() * EVENT_RECORD);
    out.extend_from_slice(EVENT_MAGIC);
    out.extend_from_slice(&(events.width() as u32).to_le_bytes());
    out.extend_from_slice(&(events.height() as u32).to_le_bytes());
    out.extend_from_slice(&(events.len() as u64).to_le_bytes());
    out.extend_from_slice(&events.t_start().to_le_bytes());
    out.extend_from_slice(&events.t_end().to_le_bytes());
    for e in events {
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.extend_from_slice(&e.t.to_le_bytes());
        out.push(e.polarity as u8);
    }
    out
}

pub fn decode_events(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < EVENT_MAGIC.len() || &bytes[..16] != EVENT_MAGIC {
        return Err(Error::Format("bad event file magic".into()));
    }
    if bytes.len() < EVENT_HEADER {
        return Err(Error::Format("truncated event header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let width = u32_at(16) as usize;
    let height = u32_at(20) as usize;
    let count = u64_at(24);
    let (t_start, t_end) = (f64_at(32), f64_at(40));
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(EVENT_RECORD))
        .and_then(|n| n.checked_add(EVENT_HEADER));
    if expected != Some(bytes.len()) {
        return Err(Error::Format(format!(
            "event file holds {} bytes, header announces {count} events",
            bytes.len()
        )));
    }
    let events = bytes[EVENT_HEADER..]
        .chunks_exact(EVENT_RECORD)
        .map(|r| Event {
            x: u16::from_le_bytes([r[0], r[1]]),
            y: u16::from_le_bytes([r[2], r[3]]),
            t: f64::from_le_bytes(r[4..12].try_into().expect("8 bytes")),
            polarity: r[12] as i8,
        })
        .collect();
    EventStream::new(width, height, t_start, t_end, events)
}

/// Text form: `# evst W H`, `# window T0 T1`, then one `t x y p` per line.
pub fn events_to_text(events: &EventStream) -> String {
    let mut s = String::with_capacity(32 * (events.len() + 2));
    let _ = writeln!(s, "# evst {} {}", events.width(), events.height());
    let _ = writeln!(s, "# window {:?} {:?}", events.t_start(), events.t_end());
    for e in events {
        let _ = writeln!(s, "{:?} {} {} {}", e.t, e.x, e.y, e.polarity);
    }
    s
}

pub fn events_from_text(text: &str) -> Result<EventStream> {
    let mut lines = text.lines().enumerate();
    let (width, height) = match lines.next() {
        Some((_, l)) => {
            let f: Vec<_> = l.split_whitespace().collect();
            if f.len() != 4 || f[0] != "#" || f[1] != "evst" {
                return Err(Error::Format("missing `# evst W H` header".into()));
            }
            (parse::<usize>(f[2], 1)?, parse::<usize>(f[3], 1)?)
        }
        None => return Err(Error::Format("empty event file".into())),
    };
    let mut window = None;
    let mut events = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let f: Vec<_> = rest.split_whitespace().collect();
            if f.first() == Some(&"window") && f.len() == 3 {
                window = Some((parse::<f64>(f[1], i + 1)?, parse::<f64>(f[2], i + 1)?));
            }
            continue;
        }
        let f: Vec<_> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(Error::Format(format!("line {}: expected `t x y p`", i + 1)));
        }
        events.push(Event {
            t: parse(f[0], i + 1)?,
            x: parse(f[1], i + 1)?,
            y: parse(f[2], i + 1)?,
            polarity: parse(f[3], i + 1)?,
        });
    }
    let (t0, t1) = window.unwrap_or_else(|| {
        let first = events.first().map_or(0.0, |e| e.t);
        let last = events.last().map_or(0.0, |e| e.t);
        (first, last)
    });
    EventStream::new(width, height, t0, t1, events)
}

fn parse<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Format(format!("line {line}: cannot parse `{s}`")))
}

fn is_text(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("txt") | Some("csv"))
}

/// Writes events; `.txt` paths use the text form, anything else binary.
pub fn write_events(path: &Path, events: &EventStream) -> Result<()> {
    let bytes = if is_text(path) {
        events_to_text(events).into_bytes()
    } else {
        encode_events(events)
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_events(path: &Path) -> Result<EventStream> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"EVST") {
        decode_events(&bytes)
    } else if bytes.starts_with(b"#") {
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::Format("event text is not UTF-8".into()))?;
        events_from_text(text)
    } else {
        Err(Error::Format(format!("{}: not an event file", path.display())))
    }
}

pub fn encode_flo(flow: &FlowField) -> Result<Vec<u8>> {
    let (w, h) = (flow.width(), flow.height());
    let (u, v) = (flow.u_slice(), flow.v_slice());
    if u.iter().chain(v).any(|x| x.is_nan()) {
        return Err(Error::Format("flow field contains NaN".into()));
    }
    let mut out = Vec::with_capacity(12 + 8 * w * h);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (a, b) in u.iter().zip(v) {
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::Format("truncated .flo header".into()));
    }
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let i32_at = |o: usize| i32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    if f32_at(0) != FLO_MAGIC {
        return Err(Error::Format("bad .flo magic".into()));
    }
    let (w, h) = (i32_at(4), i32_at(8));
    if w < 0 || h < 0 {
        return Err(Error::Format(format!("negative .flo size {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    if bytes.len() != 12 + 8 * w * h {
        return Err(Error::Format(format!(
            ".flo body holds {} bytes, expected {} for {w}x{h}",
            bytes.len() - 12,
            8 * w * h
        )));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for i in 0..w * h {
        u.push(f32_at(12 + 8 * i));
        v.push(f32_at(16 + 8 * i));
    }
    let flow = FlowField::new(w, h, u, v)?;
    if !flow.within_sanity_bound() {
        log::warn!("flow field has components larger than its {w}x{h} extent");
    }
    Ok(flow)
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<()> {
    fs::write(path, encode_flo(flow)?).map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    decode_flo(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Sample depth used when writing images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

/// Reads an 8- or 16-bit grayscale PGM or PNG into [0, 1].
pub fn read_image(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported pixel format {:?}, expected 8- or 16-bit grayscale",
                path.display(),
                other.color()
            )))
        }
    };
    Frame::from_vec(w, h, data)
}

/// Writes a frame as grayscale; the container follows the extension
/// (`.png` or `.pgm`). Values are clamped to [0, 1] and rounded.
pub fn write_image(path: &Path, frame: &Frame, depth: BitDepth) -> Result<()> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let res = match depth {
        BitDepth::Eight => {
            let raw = frame
                .as_slice()
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect();
            ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(w, h, raw)
                .expect("sized")
                .save(path)
        }
        BitDepth::Sixteen => {
            let raw = frame
                .as_slice()
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
                .collect();
            ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(w, h, raw)
                .expect("sized")
                .save(path)
        }
    };
    res.map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })
}

pub const TIMESTAMPS_FILE: &str = "timestamps.txt";

/// One time per line, shortest round-trip formatting.
pub fn write_timestamps(path: &Path, times: &[f64]) -> Result<()> {
    let text: String = times.iter().map(|t| format!("{t:?}\n")).collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_timestamps(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite())
                .ok_or_else(|| Error::Format(format!("{}:{}: bad timestamp {l:?}", path.display(), i + 1)))
        })
        .collect()
}

/// Stores a voxel grid and its time window in the tensor container.
pub fn write_voxels(path: &Path, grid: &VoxelGrid) -> Result<()> {
    let t = grid.tensor();
    let (b, h, w) = t.shape();
    write_container(
        path,
        &[
            NamedTensor::new("voxels", vec![b, h, w], t.as_slice().to_vec()),
            NamedTensor::new("window", vec![2], vec![grid.t_start(), grid.t_end()]),
        ],
    )
}

pub fn read_voxels(path: &Path) -> Result<VoxelGrid> {
    let tensors = read_container(path)?;
    let find = |name: &str| {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::MissingTensor(name.into()))
    };
    let v = find("voxels")?;
    let win = find("window")?;
    if v.shape.len() != 3 || win.data.len() != 2 {
        return Err(Error::Format("malformed voxel file".into()));
    }
    let data = Tensor::from_vec(v.shape[0], v.shape[1], v.shape[2], v.data.clone())?;
    VoxelGrid::from_tensor(data, win.data[0], win.data[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EventStream {
        EventStream::new(
            5,
            4,
            0.0,
            0.75,
            vec![
                Event::new(0, 0, 0.0, 1),
                Event::new(4, 3, 0.1 + 0.2, -1),
                Event::new(2, 1, 1.0 / 3.0, 1),
                Event::new(1, 2, 0.75, -1),
            ],
        )
        .unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let s = sample();
        let bytes = encode_events(&s);
        assert_eq!(bytes.len(), 48 + 4 * 13);
        assert_eq!(decode_events(&bytes).unwrap(), s);
    }

    #[test]
    fn corrupted_magic_and_truncation() {
        let mut bytes = encode_events(&sample());
        let cut = bytes[..bytes.len() - 3].to_vec();
        assert!(matches!(decode_events(&cut), Err(Error::Format(_))));
        bytes[3] = b'X';
        assert!(matches!(decode_events(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn out_of_range_coordinate_is_rejected() {
        let mut bytes = encode_events(&sample());
        bytes[EVENT_HEADER] = 9;
        assert!(matches!(decode_events(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn text_round_trip_and_cross_conversion() {
        let s = sample();
        let back = events_from_text(&events_to_text(&s)).unwrap();
        assert_eq!(back, s);
        let via_binary = decode_events(&encode_events(&back)).unwrap();
        assert_eq!(events_to_text(&via_binary), events_to_text(&s));
    }

    #[test]
    fn text_without_window_uses_event_span() {
        let s = events_from_text("# evst 3 3\n0.5 1 1 1\n0.25 0 0 -1\n");
        assert!(s.is_err(), "unsorted text must be rejected");
        let s = events_from_text("# evst 3 3\n0.25 0 0 -1\n0.5 1 1 1\n").unwrap();
        assert_eq!((s.t_start(), s.t_end()), (0.25, 0.5));
        assert!(events_from_text("0.1 0 0 1\n").is_err());
    }

    #[test]
    fn flo_layout() {
        let f = FlowField::new(1, 1, vec![1.5], vec![-2.0]).unwrap();
        let bytes = encode_flo(&f).unwrap();
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[12..16], &1.5f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-2.0f32).to_le_bytes());
        assert_eq!(decode_flo(&bytes).unwrap(), f);
    }

    #[test]
    fn flo_errors() {
        let f = FlowField::from_fn(3, 2, |x, y| (x as f32 * 0.25, y as f32 - 1.0));
        let mut bytes = encode_flo(&f).unwrap();
        assert_eq!(decode_flo(&bytes).unwrap(), f);
        assert!(decode_flo(&bytes[..bytes.len() - 4]).is_err());
        bytes[0] ^= 1;
        assert!(decode_flo(&bytes).is_err());
        let nan = FlowField::from_parts_unchecked(1, 1, vec![f32::NAN], vec![0.0]);
        assert!(encode_flo(&nan).is_err());
    }

    #[test]
    fn image_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let frame = Frame::from_fn(7, 5, |x, y| (x * 5 + y) as f64 / 34.0);
        for (name, depth, tol) in [
            ("a.pgm", BitDepth::Eight, 0.5 / 255.0),
            ("b.png", BitDepth::Eight, 0.5 / 255.0),
            ("c.pgm", BitDepth::Sixteen, 0.5 / 65535.0),
            ("d.png", BitDepth::Sixteen, 0.5 / 65535.0),
        ] {
            let p = dir.path().join(name);
            write_image(&p, &frame, depth).unwrap();
            let back = read_image(&p).unwrap();
            assert!(back.same_shape(&frame));
            for (a, b) in back.as_slice().iter().zip(frame.as_slice()) {
                assert!((a - b).abs() <= tol + 1e-12, "{name}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn color_images_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        image::RgbImage::new(2, 2).save(&p).unwrap();
        assert!(matches!(read_image(&p), Err(Error::Format(_))));
    }
}
