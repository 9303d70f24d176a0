//! Turning FMEA tables and slide text-box exports into [`TextUnit`]s.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{read_json, read_to_string, write_file, write_json, Error, Result};

/// Row-band tolerance for slide reading order, as a fraction of slide height.
pub const ROW_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SourceKind {
    Fmea,
    Slides,
}

impl SourceKind {
    pub const ALL: [SourceKind; 2] = [SourceKind::Fmea, SourceKind::Slides];

    pub fn display_name(self) -> &'static str {
        match self {
            SourceKind::Fmea => "FMEA",
            SourceKind::Slides => "Slides",
        }
    }
}

/// Fractional page coordinates `(x0, y0, x1, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let coords = [self.x0, self.y0, self.x1, self.y1];
        if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(format!("coordinates {coords:?} outside [0,1]"));
        }
        if self.x0 > self.x1 || self.y0 > self.y1 {
            return Err(format!("degenerate box {coords:?}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Location {
    Cell { row: usize, column: String },
    Box { index: usize, bbox: BBox },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub file: PathBuf,
    /// Sheet index for tables, slide index for slide exports.
    pub section: usize,
    pub location: Location,
}

impl Provenance {
    pub fn bbox(&self) -> Option<BBox> {
        match self.location {
            Location::Box { bbox, .. } => Some(bbox),
            Location::Cell { .. } => None,
        }
    }
}

/// One annotatable text: a single FMEA cell or one slide text box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextUnit {
    pub id: String,
    pub text: String,
    pub source_kind: SourceKind,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ColumnId {
    Name(String),
    Index(usize),
}

impl FromStr for ColumnId {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnId::Index(i),
            Err(_) => ColumnId::Name(s.to_string()),
        })
    }
}

impl fmt::Display for ColumnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnId::Name(n) => f.write_str(n),
            ColumnId::Index(i) => write!(f, "#{i}"),
        }
    }
}

/// Which table columns hold the failure mode, effect and cause texts.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub failure_mode: ColumnId,
    pub effect: ColumnId,
    pub cause: ColumnId,
}

impl ColumnMap {
    pub fn new(failure_mode: ColumnId, effect: ColumnId, cause: ColumnId) -> Result<Self> {
        let map = Self {
            failure_mode,
            effect,
            cause,
        };
        let ids = map.columns();
        if ids[0] == ids[1] || ids[0] == ids[2] || ids[1] == ids[2] {
            return Err(Error::Config(format!(
                "column map entries must be distinct: {}, {}, {}",
                ids[0], ids[1], ids[2]
            )));
        }
        Ok(map)
    }

    /// Parses `failure_mode,effect,cause`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "expected three comma-separated columns, got {spec:?}"
            )));
        }
        let id = |s: &str| ColumnId::from_str(s).unwrap_or_else(|e| match e {});
        Self::new(id(parts[0]), id(parts[1]), id(parts[2]))
    }

    fn columns(&self) -> [&ColumnId; 3] {
        [&self.failure_mode, &self.effect, &self.cause]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub units: usize,
    pub skipped_empty: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub units: Vec<TextUnit>,
    pub summary: IngestSummary,
}

/// Collapses runs of spaces and tabs, normalises line endings and trims.
/// Newlines are kept.
pub fn normalize_whitespace(text: &str) -> String {
    let text = text.replace("\r\n", "\n").replace('\r', "\n");
    let mut out = String::with_capacity(text.len());
    let mut in_run = false;
    for ch in text.chars() {
        if ch == ' ' || ch == '\t' {
            if !in_run {
                out.push(' ');
            }
            in_run = true;
        } else {
            out.push(ch);
            in_run = false;
        }
    }
    out.trim().to_string()
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "input".to_string())
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Reads a delimiter-separated FMEA table with a header row.
///
/// Emits one unit per non-empty mapped cell, row by row, in the order failure
/// mode, effect, cause.
pub fn ingest_fmea(table_file: &Path, map: &ColumnMap) -> Result<Ingested> {
    let contents = read_to_string(table_file)?;
    let delimiter = match table_file.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("tsv") => b'\t',
        _ => b',',
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(contents.as_bytes());
    let csv_err = |source| Error::Csv {
        path: table_file.to_path_buf(),
        source,
    };
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let mut resolved = Vec::with_capacity(3);
    for column in map.columns() {
        let index = match column {
            ColumnId::Name(name) => headers.iter().position(|h| h == name),
            ColumnId::Index(i) => (*i < headers.len()).then_some(*i),
        };
        let index = index.ok_or_else(|| {
            Error::Config(format!(
                "column {column} not found in {} (headers: {})",
                table_file.display(),
                headers.join(", ")
            ))
        })?;
        resolved.push(index);
    }
    if resolved.iter().collect::<HashSet<_>>().len() != 3 {
        return Err(Error::Config(
            "column map resolves to duplicate table columns".to_string(),
        ));
    }

    let stem = file_stem(table_file);
    let mut units = Vec::new();
    let mut summary = IngestSummary::default();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        for &col in &resolved {
            let text = normalize_whitespace(record.get(col).unwrap_or(""));
            if text.is_empty() {
                summary.skipped_empty += 1;
                continue;
            }
            units.push(TextUnit {
                id: format!("{stem}_r{row:04}_c{col:02}"),
                text,
                source_kind: SourceKind::Fmea,
                provenance: Provenance {
                    file: table_file.to_path_buf(),
                    section: 0,
                    location: Location::Cell {
                        row,
                        column: headers[col].clone(),
                    },
                },
            });
        }
    }
    summary.units = units.len();
    Ok(Ingested { units, summary })
}

#[derive(Debug, Deserialize)]
struct RawSlide {
    index: usize,
    boxes: Vec<RawBox>,
}

#[derive(Debug, Deserialize)]
struct RawBox {
    text: String,
    #[serde(default)]
    bbox: Option<Vec<f64>>,
}

/// Reads a slide export (`[{index, boxes: [{text, bbox}]}]`) and orders the
/// boxes of every slide by [`reading_order`].
pub fn ingest_slide_boxes(boxes_file: &Path) -> Result<Ingested> {
    let slides: Vec<RawSlide> = read_json(boxes_file)?;
    let stem = file_stem(boxes_file);
    let mut units = Vec::new();
    let mut summary = IngestSummary::default();
    for slide in &slides {
        let mut boxes = Vec::with_capacity(slide.boxes.len());
        for (i, b) in slide.boxes.iter().enumerate() {
            let coords = b.bbox.as_deref().ok_or_else(|| {
                Error::Validation(format!("slide {} box {i} has no coordinates", slide.index))
            })?;
            let [x0, y0, x1, y1] = coords else {
                return Err(Error::Validation(format!(
                    "slide {} box {i}: bbox needs 4 values, got {}",
                    slide.index,
                    coords.len()
                )));
            };
            let bbox = BBox::new(*x0, *y0, *x1, *y1);
            bbox.validate()
                .map_err(|m| Error::Validation(format!("slide {} box {i}: {m}", slide.index)))?;
            boxes.push(bbox);
        }
        for i in reading_order(&boxes) {
            let text = normalize_whitespace(&slide.boxes[i].text);
            if text.is_empty() {
                summary.skipped_empty += 1;
                continue;
            }
            units.push(TextUnit {
                id: format!("{stem}_s{:03}_b{i:03}", slide.index),
                text,
                source_kind: SourceKind::Slides,
                provenance: Provenance {
                    file: boxes_file.to_path_buf(),
                    section: slide.index,
                    location: Location::Box {
                        index: i,
                        bbox: boxes[i],
                    },
                },
            });
        }
    }
    summary.units = units.len();
    Ok(Ingested { units, summary })
}

/// Reading order of the boxes on one slide with the default row tolerance.
pub fn reading_order(boxes: &[BBox]) -> Vec<usize> {
    reading_order_with_tolerance(boxes, ROW_TOLERANCE)
}

/// Groups boxes into horizontal bands (top edge within `tolerance` of the
/// band's first box), orders bands top to bottom and boxes left to right
/// within a band. Ties keep input order.
pub fn reading_order_with_tolerance(boxes: &[BBox], tolerance: f64) -> Vec<usize> {
    let mut by_top: Vec<usize> = (0..boxes.len()).collect();
    by_top.sort_by(|&a, &b| boxes[a].y0.total_cmp(&boxes[b].y0));

    let mut bands: Vec<Vec<usize>> = Vec::new();
    let mut anchor = f64::NEG_INFINITY;
    for i in by_top {
        match bands.last_mut() {
            Some(band) if boxes[i].y0 - anchor <= tolerance => band.push(i),
            _ => {
                anchor = boxes[i].y0;
                bands.push(vec![i]);
            }
        }
    }
    bands
        .into_iter()
        .flat_map(|mut band| {
            band.sort_by(|&a, &b| boxes[a].x0.total_cmp(&boxes[b].x0).then(a.cmp(&b)));
            band
        })
        .collect()
}

/// Merges independently ingested corpora into one deterministic sequence,
/// ordered by file path and then by original position.
pub fn merge_corpora(parts: Vec<Vec<TextUnit>>) -> Result<Vec<TextUnit>> {
    let mut parts: Vec<Vec<TextUnit>> = parts.into_iter().filter(|p| !p.is_empty()).collect();
    parts.sort_by(|a, b| a[0].provenance.file.cmp(&b[0].provenance.file));
    let merged: Vec<TextUnit> = parts.into_iter().flatten().collect();
    let mut seen = HashSet::new();
    for unit in &merged {
        if !seen.insert(unit.id.as_str()) {
            return Err(Error::Validation(format!("duplicate text id {}", unit.id)));
        }
    }
    Ok(merged)
}

pub const CORPUS_SCHEMA: &str = "causal-corpus/v1";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    source_kind: SourceKind,
    provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema: String,
    texts: Vec<ManifestEntry>,
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

/// Writes `manifest.json` plus one `<id>.txt` per unit.
pub fn write_corpus(dir: &Path, units: &[TextUnit]) -> Result<()> {
    let manifest = Manifest {
        schema: CORPUS_SCHEMA.to_string(),
        texts: units
            .iter()
            .map(|u| ManifestEntry {
                id: u.id.clone(),
                source_kind: u.source_kind,
                provenance: u.provenance.clone(),
            })
            .collect(),
    };
    for unit in units {
        write_file(&dir.join(format!("{}.txt", unit.id)), &unit.text)?;
    }
    write_json(&manifest_path(dir), &manifest)
}

pub fn read_corpus(dir: &Path) -> Result<Vec<TextUnit>> {
    let manifest: Manifest = read_json(&manifest_path(dir))?;
    if manifest.schema != CORPUS_SCHEMA {
        return Err(Error::Validation(format!(
            "unsupported corpus schema {}",
            manifest.schema
        )));
    }
    manifest
        .texts
        .into_iter()
        .map(|e| {
            let text = read_to_string(&dir.join(format!("{}.txt", e.id)))?;
            Ok(TextUnit {
                id: e.id,
                text,
                source_kind: e.source_kind,
                provenance: e.provenance,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64) -> BBox {
        BBox::new(x0, y0, (x0 + 0.1).min(1.0), (y0 + 0.05).min(1.0))
    }

    #[test]
    fn reading_order_examples() {
        assert!(reading_order(&[]).is_empty());
        assert_eq!(reading_order(&[b(0.0, 0.5), b(0.0, 0.1)]), vec![1, 0]);
        assert_eq!(reading_order(&[b(0.6, 0.10), b(0.2, 0.13)]), vec![1, 0]);
        // L layout given bottom-left, top-right, top-left
        assert_eq!(
            reading_order(&[b(0.1, 0.7), b(0.6, 0.1), b(0.1, 0.1)]),
            vec![2, 1, 0]
        );
        assert_eq!(reading_order(&[b(0.3, 0.3), b(0.3, 0.3)]), vec![0, 1]);
    }

    #[test]
    fn band_anchor_is_first_box_not_running() {
        // 0.10 anchors; 0.14 joins; 0.18 is beyond tolerance of the anchor
        let order = reading_order(&[b(0.9, 0.18), b(0.5, 0.14), b(0.1, 0.10)]);
        assert_eq!(order, vec![2, 1, 0]);
        let order = reading_order(&[b(0.1, 0.18), b(0.5, 0.14), b(0.9, 0.10)]);
        assert_eq!(order, vec![1, 2, 0]);
    }

    #[test]
    fn whitespace_normalization_keeps_newlines() {
        assert_eq!(
            normalize_whitespace("  Die \t chipping\r\n  due  to\tX  "),
            "Die chipping\n due to X"
        );
    }

    #[test]
    fn column_map_rejects_duplicates() {
        assert!(ColumnMap::parse("a,b,a").is_err());
        assert!(ColumnMap::parse("a,b").is_err());
        let map = ColumnMap::parse("Failure Mode, 2 ,Cause").unwrap();
        assert_eq!(map.effect, ColumnId::Index(2));
    }
}
