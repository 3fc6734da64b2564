// SPDX-License-Identifier: Apache-2.0

//! DRPC: a line-oriented ASCII format for dual-return organized scans.
//!
//! ```text
//! DRPC 1
//! rings 32 step_mrad 2.791... cols 2251 scan 0 time 0.000000
//! fields ring col sx sy sz si lx ly lz li [slabel llabel] [stx sty stz ltx lty ltz] [spane lpane]
//! 23 0 2.013114 0.002811 0.000412 18.000000 5.002114 0.007011 -0.000121 51.000000 G O
//! ...
//! end <record count> <fnv1a-64 of everything above, hex>
//! ```
//!
//! One record per beam with at least one valid return. A missing channel is
//! written as `nan nan nan 0`. Optional column groups carry per-channel
//! labels, positions (truth positions from the simulator, mirrored positions
//! for reflections after classification) and pane ids; `-` marks an absent
//! value.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::classify::Label;
use crate::cloud::{DualScan, GridGeometry, OrganizedCloud, RawReturn, ReturnChannel};
use crate::error::{Error, ParseError, Result};

pub const MAGIC: &str = "DRPC";
pub const VERSION: &str = "1";

const BASE_FIELDS: [&str; 10] = ["ring", "col", "sx", "sy", "sz", "si", "lx", "ly", "lz", "li"];
const LABEL_FIELDS: [&str; 2] = ["slabel", "llabel"];
const POSITION_FIELDS: [&str; 6] = ["stx", "sty", "stz", "ltx", "lty", "ltz"];
const PANE_FIELDS: [&str; 2] = ["spane", "lpane"];

/// Per-point annotation carried alongside a return.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellTag {
    pub label: Option<Label>,
    pub position: Option<Vector3<f64>>,
    pub pane: Option<usize>,
}

/// Dense per-cell annotations for both channels, indexed like the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanTags {
    pub strongest: Vec<Option<CellTag>>,
    pub last: Vec<Option<CellTag>>,
}

impl ScanTags {
    pub fn empty(geometry: &GridGeometry) -> Self {
        Self { strongest: vec![None; geometry.cell_count()], last: vec![None; geometry.cell_count()] }
    }

    pub fn channel(&self, channel: ReturnChannel) -> &[Option<CellTag>] {
        match channel {
            ReturnChannel::Strongest => &self.strongest,
            ReturnChannel::Last => &self.last,
        }
    }

    pub fn channel_mut(&mut self, channel: ReturnChannel) -> &mut Vec<Option<CellTag>> {
        match channel {
            ReturnChannel::Strongest => &mut self.strongest,
            ReturnChannel::Last => &mut self.last,
        }
    }
}

/// Which optional column groups a file carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TagColumns {
    pub label: bool,
    pub position: bool,
    pub pane: bool,
}

impl TagColumns {
    pub const ALL: TagColumns = TagColumns { label: true, position: true, pane: true };

    pub fn any(&self) -> bool {
        self.label || self.position || self.pane
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrpcFile {
    pub scan: DualScan,
    pub tags: Option<ScanTags>,
    pub columns: TagColumns,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Serializes a scan and optional annotations.
pub fn to_drpc_string(scan: &DualScan, tags: Option<(&ScanTags, TagColumns)>) -> String {
    let g = scan.geometry();
    let mut out = String::with_capacity(64 * scan.strongest.valid_count().max(scan.last.valid_count()) + 256);
    out.push_str(MAGIC);
    out.push(' ');
    out.push_str(VERSION);
    out.push('\n');
    let _ = writeln!(
        out,
        "rings {} step_mrad {} cols {} scan {} time {:.6}",
        g.ring_count,
        g.step_azimuth * 1000.0,
        g.column_count,
        scan.scan_id,
        scan.timestamp
    );
    let cols = tags.map(|(_, c)| c).unwrap_or_default();
    let mut fields: Vec<&str> = BASE_FIELDS.to_vec();
    if cols.label {
        fields.extend(LABEL_FIELDS);
    }
    if cols.position {
        fields.extend(POSITION_FIELDS);
    }
    if cols.pane {
        fields.extend(PANE_FIELDS);
    }
    let _ = writeln!(out, "fields {}", fields.join(" "));

    let mut records = 0usize;
    for ring in 0..g.ring_count {
        for col in 0..g.column_count {
            let s = scan.strongest.get(ring, col);
            let l = scan.last.get(ring, col);
            if s.is_none() && l.is_none() {
                continue;
            }
            records += 1;
            let _ = write!(out, "{ring} {col}");
            for r in [s, l] {
                match r {
                    Some(r) => {
                        let _ = write!(out, " {:.6} {:.6} {:.6} {:.6}", r.x, r.y, r.z, r.intensity);
                    }
                    None => out.push_str(" nan nan nan 0"),
                }
            }
            if let Some((t, c)) = tags {
                let i = g.index(ring, col);
                let pair = [t.strongest[i], t.last[i]];
                if c.label {
                    for tag in pair {
                        out.push(' ');
                        out.push(tag.and_then(|t| t.label).map_or('-', Label::as_char));
                    }
                }
                if c.position {
                    for tag in pair {
                        match tag.and_then(|t| t.position) {
                            Some(p) => {
                                let _ = write!(out, " {:.6} {:.6} {:.6}", p.x, p.y, p.z);
                            }
                            None => out.push_str(" - - -"),
                        }
                    }
                }
                if c.pane {
                    for tag in pair {
                        match tag.and_then(|t| t.pane) {
                            Some(p) => {
                                let _ = write!(out, " {p}");
                            }
                            None => out.push_str(" -"),
                        }
                    }
                }
            }
            out.push('\n');
        }
    }
    let sum = fnv1a(out.as_bytes());
    let _ = writeln!(out, "end {records} {sum:016x}");
    out
}

pub fn write_drpc(path: &Path, scan: &DualScan, tags: Option<(&ScanTags, TagColumns)>) -> Result<()> {
    std::fs::write(path, to_drpc_string(scan, tags)).map_err(|e| Error::io(path, e))
}

pub fn read_drpc(path: &Path) -> Result<DrpcFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_drpc(&text).map_err(|source| Error::Parse { path: path.to_path_buf(), source })
}

struct Header {
    geometry: GridGeometry,
    scan_id: u64,
    timestamp: f64,
}

fn parse_header(line: &str) -> Result<Header, ParseError> {
    let bad = |reason: String| ParseError::Header { line: 2, reason };
    let toks: Vec<&str> = line.split_whitespace().collect();
    let mut rings = None;
    let mut step = None;
    let mut cols = None;
    let mut scan_id = 0u64;
    let mut timestamp = 0.0f64;
    if !toks.len().is_multiple_of(2) {
        return Err(bad("expected key/value pairs".into()));
    }
    for kv in toks.chunks(2) {
        let (k, v) = (kv[0], kv[1]);
        let num_err = |_| bad(format!("bad value {v:?} for {k}"));
        match k {
            "rings" => rings = Some(v.parse::<usize>().map_err(|e| num_err(e.to_string()))?),
            "step_mrad" => step = Some(v.parse::<f64>().map_err(|e| num_err(e.to_string()))?),
            "cols" => cols = Some(v.parse::<usize>().map_err(|e| num_err(e.to_string()))?),
            "scan" => scan_id = v.parse().map_err(|e: std::num::ParseIntError| num_err(e.to_string()))?,
            "time" => timestamp = v.parse().map_err(|e: std::num::ParseFloatError| num_err(e.to_string()))?,
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    let (Some(rings), Some(step), Some(cols)) = (rings, step, cols) else {
        return Err(bad("rings, step_mrad and cols are required".into()));
    };
    let geometry = GridGeometry::new(rings, step / 1000.0).map_err(|e| bad(e.to_string()))?;
    if geometry.column_count != cols {
        return Err(bad(format!("cols {cols} disagrees with step_mrad {step} ({} columns)", geometry.column_count)));
    }
    Ok(Header { geometry, scan_id, timestamp })
}

fn parse_fields(line: &str) -> Result<TagColumns, ParseError> {
    let bad = |reason: String| ParseError::Header { line: 3, reason };
    let mut toks = line.split_whitespace();
    if toks.next() != Some("fields") {
        return Err(bad("expected a fields line".into()));
    }
    let rest: Vec<&str> = toks.collect();
    if rest.len() < BASE_FIELDS.len() || rest[..BASE_FIELDS.len()] != BASE_FIELDS {
        return Err(bad(format!("fields must start with {}", BASE_FIELDS.join(" "))));
    }
    let mut cols = TagColumns::default();
    let mut tail = &rest[BASE_FIELDS.len()..];
    let mut take = |group: &[&str], flag: &mut bool| {
        if tail.len() >= group.len() && tail[..group.len()] == *group {
            *flag = true;
            tail = &tail[group.len()..];
        }
    };
    take(&LABEL_FIELDS, &mut cols.label);
    take(&POSITION_FIELDS, &mut cols.position);
    take(&PANE_FIELDS, &mut cols.pane);
    if !tail.is_empty() {
        return Err(bad(format!("unexpected fields {tail:?}")));
    }
    Ok(cols)
}

/// Parses DRPC text.
pub fn parse_drpc(text: &str) -> Result<DrpcFile, ParseError> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    let mut magic = first.split_whitespace();
    if magic.next() != Some(MAGIC) {
        return Err(ParseError::Header { line: 1, reason: format!("expected {MAGIC:?} magic") });
    }
    let version = magic.next().unwrap_or("");
    if version != VERSION {
        return Err(ParseError::Version { found: version.to_string(), expected: VERSION.to_string() });
    }
    let header = parse_header(lines.next().ok_or(ParseError::Header { line: 2, reason: "missing".into() })?)?;
    let columns = parse_fields(lines.next().ok_or(ParseError::Header { line: 3, reason: "missing".into() })?)?;
    let g = header.geometry;
    let mut strongest = OrganizedCloud::empty(g);
    let mut last = OrganizedCloud::empty(g);
    let mut tags = columns.any().then(|| ScanTags::empty(&g));

    let mut records = 0usize;
    for (li, line) in text.lines().enumerate().skip(3) {
        let line_no = li + 1;
        if let Some(rest) = line.strip_prefix("end ") {
            let mut it = rest.split_whitespace();
            let declared: usize = it
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or(ParseError::Header { line: line_no, reason: "bad end line".into() })?;
            let expected = it
                .next()
                .and_then(|v| u64::from_str_radix(v, 16).ok())
                .ok_or(ParseError::Header { line: line_no, reason: "bad checksum".into() })?;
            if declared != records {
                return Err(ParseError::Truncated { expected: declared, found: records });
            }
            let offset = line.as_ptr() as usize - text.as_ptr() as usize;
            let actual = fnv1a(&text.as_bytes()[..offset]);
            if actual != expected {
                return Err(ParseError::Checksum { expected, actual });
            }
            return Ok(DrpcFile { scan: DualScan { strongest, last, scan_id: header.scan_id, timestamp: header.timestamp }, tags, columns });
        }
        let rec = parse_record(line, &g, columns).map_err(|reason| ParseError::Record { record: records, line: line_no, reason })?;
        let (ring, col, pair, tag_pair) = rec;
        if strongest.get(ring, col).is_some() || last.get(ring, col).is_some() {
            return Err(ParseError::Record { record: records, line: line_no, reason: format!("duplicate cell ({ring}, {col})") });
        }
        strongest.set(ring, col, pair[0]);
        last.set(ring, col, pair[1]);
        if let Some(t) = tags.as_mut() {
            let i = g.index(ring, col);
            t.strongest[i] = tag_pair[0];
            t.last[i] = tag_pair[1];
        }
        records += 1;
    }
    Err(ParseError::Truncated { expected: records + 1, found: records })
}

type Record = (usize, usize, [Option<RawReturn>; 2], [Option<CellTag>; 2]);

fn parse_record(line: &str, g: &GridGeometry, cols: TagColumns) -> std::result::Result<Record, String> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let expected = 10 + if cols.label { 2 } else { 0 } + if cols.position { 6 } else { 0 } + if cols.pane { 2 } else { 0 };
    if toks.len() != expected {
        return Err(format!("expected {expected} values, found {}", toks.len()));
    }
    let int = |i: usize| toks[i].parse::<usize>().map_err(|_| format!("bad integer {:?}", toks[i]));
    let num = |i: usize| toks[i].parse::<f64>().map_err(|_| format!("bad number {:?}", toks[i]));
    let ring = int(0)?;
    let col = int(1)?;
    if ring >= g.ring_count {
        return Err(format!("ring {ring} out of range (rings {})", g.ring_count));
    }
    if col >= g.column_count {
        return Err(format!("column {col} out of range (cols {})", g.column_count));
    }
    let mut pair = [None, None];
    for (k, channel) in [ReturnChannel::Strongest, ReturnChannel::Last].into_iter().enumerate() {
        let b = 2 + 4 * k;
        let (x, y, z, i) = (num(b)?, num(b + 1)?, num(b + 2)?, num(b + 3)?);
        if x.is_nan() && y.is_nan() && z.is_nan() {
            continue;
        }
        let r = RawReturn { x, y, z, intensity: i, ring: ring as u16, azimuth: g.column_center(col), channel };
        if !r.is_valid() || !(0.0..=255.0).contains(&i) {
            return Err(format!("invalid {channel:?} return"));
        }
        pair[k] = Some(r);
    }
    if pair[0].is_none() && pair[1].is_none() {
        return Err("record without any valid return".into());
    }
    let mut tags = [None, None];
    if cols.any() {
        let mut at = 10;
        let mut t = [CellTag { label: None, position: None, pane: None }; 2];
        if cols.label {
            for tk in &mut t {
                tk.label = match toks[at] {
                    "-" => None,
                    s => Some(s.parse::<Label>().map_err(|e| e.to_string())?),
                };
                at += 1;
            }
        }
        if cols.position {
            for tk in &mut t {
                if toks[at..at + 3].iter().all(|s| *s == "-") {
                    tk.position = None;
                } else {
                    tk.position = Some(Vector3::new(num(at)?, num(at + 1)?, num(at + 2)?));
                }
                at += 3;
            }
        }
        if cols.pane {
            for tk in &mut t {
                tk.pane = match toks[at] {
                    "-" => None,
                    _ => Some(int(at)?),
                };
                at += 1;
            }
        }
        for k in 0..2 {
            if pair[k].is_some() {
                tags[k] = Some(t[k]);
            } else if t[k].label.is_some() || t[k].position.is_some() || t[k].pane.is_some() {
                return Err("annotation on a missing return".into());
            }
        }
    }
    Ok((ring, col, pair, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_scan() -> DualScan {
        let g = GridGeometry::default();
        let mut s = OrganizedCloud::empty(g);
        let mut l = OrganizedCloud::empty(g);
        let mk = |ring: usize, col: usize, range: f64, i: f64, ch| {
            let az = g.column_center(col);
            RawReturn { x: range * az.cos(), y: range * az.sin(), z: 0.1, intensity: i, ring: ring as u16, azimuth: az, channel: ch }
        };
        s.set(3, 10, Some(mk(3, 10, 2.0, 120.0, ReturnChannel::Strongest)));
        l.set(3, 10, Some(mk(3, 10, 5.0, 200.0, ReturnChannel::Last)));
        l.set(31, 2250, Some(mk(31, 2250, 7.5, 3.0, ReturnChannel::Last)));
        DualScan::new(s, l, 42, 4.2).unwrap()
    }

    fn assert_scans_close(a: &DualScan, b: &DualScan) {
        assert!(a.geometry().same_as(b.geometry()));
        assert_eq!(a.scan_id, b.scan_id);
        for (ca, cb) in [(&a.strongest, &b.strongest), (&a.last, &b.last)] {
            for (x, y) in ca.cells().iter().zip(cb.cells()) {
                match (x, y) {
                    (None, None) => {}
                    (Some(x), Some(y)) => {
                        assert!((x.position() - y.position()).norm() <= 1e-6 * 3f64.sqrt());
                        assert!((x.intensity - y.intensity).abs() <= 1e-6);
                        assert_eq!((x.ring, x.channel), (y.ring, y.channel));
                    }
                    _ => panic!("occupancy differs"),
                }
            }
        }
    }

    #[test]
    fn round_trip_without_tags() {
        let scan = sample_scan();
        let text = to_drpc_string(&scan, None);
        assert!(text.starts_with("DRPC 1\n"));
        assert!(text.contains("nan nan nan 0"));
        let back = parse_drpc(&text).unwrap();
        assert!(back.tags.is_none());
        assert_scans_close(&scan, &back.scan);
    }

    #[test]
    fn round_trip_with_tags() {
        let scan = sample_scan();
        let g = *scan.geometry();
        let mut tags = ScanTags::empty(&g);
        let i = g.index(3, 10);
        tags.strongest[i] = Some(CellTag { label: Some(Label::G), position: Some(Vector3::new(1.0, 2.0, 3.0)), pane: Some(0) });
        tags.last[i] = Some(CellTag { label: Some(Label::O), position: None, pane: None });
        tags.last[g.index(31, 2250)] = Some(CellTag { label: Some(Label::I), position: None, pane: None });
        let text = to_drpc_string(&scan, Some((&tags, TagColumns::ALL)));
        let back = parse_drpc(&text).unwrap();
        assert_eq!(back.columns, TagColumns::ALL);
        assert_eq!(back.tags.unwrap(), tags);
    }

    #[test]
    fn ring_out_of_range_names_record() {
        let scan = sample_scan();
        let text = to_drpc_string(&scan, None).replacen("\n31 2250", "\n40 2250", 1);
        match parse_drpc(&text) {
            Err(ParseError::Record { record, reason, .. }) => {
                assert_eq!(record, 1);
                assert!(reason.contains("ring 40"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn distinct_errors_for_version_truncation_checksum() {
        let text = to_drpc_string(&sample_scan(), None);
        let v2 = text.replacen("DRPC 1", "DRPC 2", 1);
        assert!(matches!(parse_drpc(&v2), Err(ParseError::Version { .. })));

        let truncated: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_drpc(&truncated), Err(ParseError::Truncated { .. })));

        let tampered = text.replacen("120.000000", "121.000000", 1);
        assert!(matches!(parse_drpc(&tampered), Err(ParseError::Checksum { .. })));

        let lines: Vec<&str> = text.lines().collect();
        let dropped = format!("{}\n{}\n{}\n{}\n{}\n", lines[0], lines[1], lines[2], lines[3], lines[5]);
        assert!(matches!(parse_drpc(&dropped), Err(ParseError::Truncated { expected: 2, found: 1 })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip_is_lossless(cells in proptest::collection::vec(
            (0usize..32, 0usize..2251, 0.5f64..80.0, -1.0f64..1.0, 0.0f64..255.0, proptest::option::of(0.0f64..30.0)),
            0..200,
        )) {
            let g = GridGeometry::default();
            let mut s = OrganizedCloud::empty(g);
            let mut l = OrganizedCloud::empty(g);
            for (ring, col, range, z, inten, extra) in cells {
                let az = g.column_center(col);
                let mk = |r: f64, ch| RawReturn { x: r * az.cos(), y: r * az.sin(), z, intensity: inten, ring: ring as u16, azimuth: az, channel: ch };
                s.set(ring, col, Some(mk(range, ReturnChannel::Strongest)));
                l.set(ring, col, Some(mk(range + extra.unwrap_or(0.0), ReturnChannel::Last)));
            }
            let scan = DualScan::new(s, l, 7, 0.1).unwrap();
            let back = parse_drpc(&to_drpc_string(&scan, None)).unwrap();
            assert_scans_close(&scan, &back.scan);
        }
    }
}
