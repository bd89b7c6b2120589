//! JSON-lines scan files. One object per scan:
//! `{"seq", "t", "points": [{"x", "y", "v", "rcs", "sem", "inst", "track", "ox", "oy", "otx", "oty"}]}`.
//! Label fields are optional; prediction files carry no offsets. Lines
//! holding a `"header"` key are provenance records and are skipped on read.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{AnnotatedScan, RadarPoint, RadarScan, SegmentedScan, Semantic, Vec2};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub rcs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sem: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inst: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ox: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub otx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oty: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRecord {
    pub seq: String,
    pub t: u32,
    pub points: Vec<PointRecord>,
}

impl ScanRecord {
    /// Full record including offsets.
    pub fn from_annotated(scan: &AnnotatedScan) -> Self {
        let s = &scan.segmented;
        Self {
            seq: s.scan.sequence_id.clone(),
            t: s.scan.t,
            points: (0..s.len())
                .map(|i| {
                    let p = &s.scan.points[i];
                    PointRecord {
                        x: p.x,
                        y: p.y,
                        v: p.v,
                        rcs: p.rcs,
                        sem: Some(s.semantics[i].flag()),
                        inst: Some(s.instance_ids[i]),
                        track: Some(scan.track_ids[i]),
                        ox: Some(s.offsets[i].x),
                        oy: Some(s.offsets[i].y),
                        otx: Some(s.temporal_offsets[i].x),
                        oty: Some(s.temporal_offsets[i].y),
                    }
                })
                .collect(),
        }
    }

    /// Tracker output: segmentation and predicted track IDs, no offsets.
    pub fn from_prediction(scan: &SegmentedScan, track_ids: &[u32]) -> Self {
        let mut r = Self::from_annotated(&AnnotatedScan {
            segmented: scan.clone(),
            track_ids: track_ids.to_vec(),
        });
        for p in &mut r.points {
            (p.ox, p.oy, p.otx, p.oty) = (None, None, None, None);
        }
        r
    }

    /// Missing labels default to static, ID 0 and zero offsets.
    pub fn to_annotated(&self) -> Result<AnnotatedScan> {
        let n = self.points.len();
        let mut points = Vec::with_capacity(n);
        let mut semantics = Vec::with_capacity(n);
        let (mut inst, mut track) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let (mut off, mut temp) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for (i, p) in self.points.iter().enumerate() {
            points.push(RadarPoint::new(p.x, p.y, p.v, p.rcs));
            let flag = p.sem.unwrap_or(0);
            semantics.push(
                Semantic::from_flag(flag)
                    .ok_or_else(|| Error::Invariant(format!("point {i}: semantic flag {flag} is not 0 or 1")))?,
            );
            inst.push(p.inst.unwrap_or(0));
            track.push(p.track.unwrap_or(0));
            off.push(Vec2::new(p.ox.unwrap_or(0.0), p.oy.unwrap_or(0.0)));
            temp.push(Vec2::new(p.otx.unwrap_or(0.0), p.oty.unwrap_or(0.0)));
        }
        let segmented = SegmentedScan::new(RadarScan::new(self.seq.clone(), self.t, points), semantics, inst, off, temp)?;
        Ok(AnnotatedScan { segmented, track_ids: track })
    }
}

/// All scans of one sequence, ordered by scan index.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub id: String,
    pub scans: Vec<AnnotatedScan>,
}

impl Sequence {
    pub fn segmented(&self) -> Vec<SegmentedScan> {
        self.scans.iter().map(|s| s.segmented.clone()).collect()
    }
}

/// Provenance line written at the top of output files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub header: String,
    pub fingerprint: String,
    pub config: serde_json::Value,
}

impl Header {
    pub fn new(tool: impl Into<String>, config: &impl Serialize) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(Self {
            header: tool.into(),
            fingerprint: fingerprint(&config)?,
            config,
        })
    }
}

/// SHA-256 of the compact JSON encoding, hex encoded.
pub fn fingerprint(value: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Parses a JSON-lines stream, grouping scans by sequence (sorted by ID) and
/// ordering each sequence by scan index.
pub fn parse_sequences(reader: impl BufRead) -> Result<Vec<Sequence>> {
    let mut groups: BTreeMap<String, BTreeMap<u32, (usize, AnnotatedScan)>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: lineno, msg };
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if value.get("header").is_some() {
            continue;
        }
        let record: ScanRecord = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        let scan = record.to_annotated().map_err(|e| parse_err(e.to_string()))?;
        let seq = groups.entry(record.seq.clone()).or_default();
        if let Some((first, _)) = seq.get(&record.t) {
            return Err(parse_err(format!(
                "duplicate scan (seq {:?}, t {}), first seen on line {first}",
                record.seq, record.t
            )));
        }
        seq.insert(record.t, (lineno, scan));
    }
    Ok(groups
        .into_iter()
        .map(|(id, scans)| Sequence {
            id,
            scans: scans.into_values().map(|(_, s)| s).collect(),
        })
        .collect())
}

pub fn read_sequences(path: impl AsRef<Path>) -> Result<Vec<Sequence>> {
    let file = std::fs::File::open(path)?;
    parse_sequences(BufReader::new(file))
}

/// Writes an optional header line followed by one line per record.
pub fn write_records(mut writer: impl Write, header: Option<&Header>, records: &[ScanRecord]) -> Result<()> {
    if let Some(h) = header {
        serde_json::to_writer(&mut writer, h)?;
        writer.write_all(b"\n")?;
    }
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_sequences(path: impl AsRef<Path>, header: Option<&Header>, sequences: &[Sequence]) -> Result<()> {
    let records: Vec<ScanRecord> = sequences
        .iter()
        .flat_map(|s| s.scans.iter().map(ScanRecord::from_annotated))
        .collect();
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_records(file, header, &records)
}
