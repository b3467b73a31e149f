//! JSONL corpus ingestion, deduplication and corpus statistics.
//!
//! One record per line:
//!
//! ```text
//! {"id": "p1", "doc_type": "newspaper", "width": 1000, "height": 1400,
//!  "elements": [{"category": "title", "bbox": [40, 30, 900, 80], "order": 0}]}
//! ```
//!
//! Boxes are absolute pixels. Rejected lines are reported with a reason code
//! and never abort a run.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layout::{normalize_layout_with_limit, DocType, Layout, Normalized, Page, RawElement, RawLayout};
use crate::metrics::{extract_features, feature_names};
use crate::taxonomy::{normalize_label, LabelMap, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub category: String,
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

/// On-disk page record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRecord {
    pub id: String,
    pub doc_type: DocType,
    pub width: u32,
    pub height: u32,
    pub elements: Vec<ElementRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// Pixel values are rounded to 1e-6 px so integer-pixel inputs survive a
/// write/read cycle unchanged.
fn to_pixels(v: f64, extent: u32) -> f64 {
    (v * f64::from(extent) * 1e6).round() / 1e6
}

impl LayoutRecord {
    pub fn from_layout(layout: &Layout, taxonomy: &Taxonomy) -> Result<Self> {
        let (w, h) = layout.canvas();
        let elements = layout
            .elements()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let label = taxonomy.label(e.category).ok_or(Error::UnknownLabel {
                    label: format!("#{}", e.category.0),
                    index: Some(i),
                })?;
                let b = &e.bbox;
                Ok(ElementRecord {
                    category: label.to_string(),
                    bbox: [to_pixels(b.x(), w), to_pixels(b.y(), h), to_pixels(b.w(), w), to_pixels(b.h(), h)],
                    order: Some(i),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            id: layout.id().to_string(),
            doc_type: layout.doc_type(),
            width: w,
            height: h,
            elements,
            source: None,
        })
    }

    /// Validates and normalizes against `taxonomy`.
    pub fn to_layout(&self, taxonomy: &Taxonomy, max_elements: usize) -> Result<Normalized> {
        let filters = IngestConfig {
            max_elements,
            ..IngestConfig::default()
        };
        validate_record(self, &Labels::Direct(taxonomy), &filters).map_err(|(reason, detail)| Error::InvalidRecord {
            id: self.id.clone(),
            reason: reason.as_str(),
            detail,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    Malformed,
    BadGeometry,
    UnknownCategory,
    BadOrder,
    Empty,
    ElementCount,
    Duplicate,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Malformed => "malformed",
            RejectReason::BadGeometry => "bad-geometry",
            RejectReason::UnknownCategory => "unknown-category",
            RejectReason::BadOrder => "bad-order",
            RejectReason::Empty => "empty",
            RejectReason::ElementCount => "element-count",
            RejectReason::Duplicate => "duplicate",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of the rejection log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub source: String,
    pub line: usize,
    pub id: Option<String>,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub min_elements: usize,
    pub max_elements: usize,
    /// Reject pages whose quantized geometry repeats an earlier page.
    pub dedup: bool,
    /// Lines parsed in parallel per batch.
    pub batch_size: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            min_elements: 1,
            max_elements: crate::layout::DEFAULT_MAX_ELEMENTS,
            dedup: true,
            batch_size: 8192,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub lines: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    /// Boxes dropped for clipping to less than one bin.
    pub dropped_boxes: usize,
}

impl IngestSummary {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }
}

enum Labels<'a> {
    Direct(&'a Taxonomy),
    Mapped(&'a LabelMap),
}

type Invalid = (RejectReason, String);

fn validate_record(record: &LayoutRecord, labels: &Labels<'_>, config: &IngestConfig) -> std::result::Result<Normalized, Invalid> {
    if record.id.trim().is_empty() {
        return Err((RejectReason::Malformed, "empty id".into()));
    }
    if record.width == 0 || record.height == 0 {
        return Err((RejectReason::BadGeometry, format!("canvas {}x{}", record.width, record.height)));
    }
    if record.elements.is_empty() {
        return Err((RejectReason::Empty, "no elements".into()));
    }
    let n = record.elements.len();
    let mut order: Vec<usize> = (0..n).collect();
    let given = record.elements.iter().filter(|e| e.order.is_some()).count();
    if given == n {
        let mut seen = vec![false; n];
        for e in &record.elements {
            let o = e.order.unwrap_or_default();
            if o >= n || std::mem::replace(&mut seen[o], true) {
                return Err((RejectReason::BadOrder, "order is not a permutation of 0..N".into()));
            }
        }
        order.sort_by_key(|&i| record.elements[i].order);
    } else if given != 0 {
        return Err((RejectReason::BadOrder, "order given for some elements only".into()));
    }
    let mut elements = Vec::with_capacity(n);
    for &i in &order {
        let e = &record.elements[i];
        let [x, y, w, h] = e.bbox;
        if !e.bbox.iter().all(|v| v.is_finite()) || w < 0.0 || h < 0.0 {
            return Err((RejectReason::BadGeometry, format!("element {i} box {:?}", e.bbox)));
        }
        let label = normalize_label(&e.category);
        let category = match labels {
            Labels::Direct(t) => t.id(&label),
            Labels::Mapped(m) => m.fine().id(&label).and_then(|f| m.coarsen_id(f)),
        }
        .map_err(|_| (RejectReason::UnknownCategory, format!("element {i} label {:?}", e.category)))?;
        elements.push(RawElement { category, x, y, w, h });
    }
    let raw = RawLayout {
        page: Page::new(record.id.clone(), record.doc_type, record.width, record.height),
        elements,
    };
    let normalized = match normalize_layout_with_limit(&raw, usize::MAX) {
        Ok(n) => n,
        Err(Error::EmptyLayout) => return Err((RejectReason::Empty, "no elements survive clipping".into())),
        Err(e) => return Err((RejectReason::BadGeometry, e.to_string())),
    };
    let len = normalized.layout.len();
    if len < config.min_elements || len > config.max_elements {
        return Err((
            RejectReason::ElementCount,
            format!("{len} elements outside {}..={}", config.min_elements, config.max_elements),
        ));
    }
    Ok(normalized)
}

/// 64-bit key over the doc type and the quantized element tuples in reading
/// order. Layouts equal after quantization share a key.
pub fn dedup_key(layout: &Layout) -> u64 {
    let mut h = Sha256::new();
    h.update([layout.doc_type().index() as u8]);
    h.update((layout.len() as u32).to_le_bytes());
    for e in layout.elements() {
        let q = e.quantized();
        h.update(e.category.0.to_le_bytes());
        for v in [q.qx, q.qy, q.qw, q.qh] {
            h.update(v.to_le_bytes());
        }
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Streaming ingestion with run-wide duplicate detection.
///
/// Lines are parsed and validated in parallel batches; duplicate checks and
/// callbacks run sequentially in input order, so output is deterministic.
pub struct Ingestor {
    taxonomy: Taxonomy,
    label_map: Option<LabelMap>,
    config: IngestConfig,
    seen_ids: HashSet<String>,
    seen_keys: HashSet<u64>,
    summary: IngestSummary,
}

impl Ingestor {
    pub fn new(taxonomy: Taxonomy, config: IngestConfig) -> Self {
        Self {
            taxonomy,
            label_map: None,
            config,
            seen_ids: HashSet::new(),
            seen_keys: HashSet::new(),
            summary: IngestSummary::default(),
        }
    }

    /// Records carry fine labels; accepted layouts use the map's coarse taxonomy.
    pub fn with_label_map(map: LabelMap, config: IngestConfig) -> Self {
        let mut me = Self::new(map.coarse().clone(), config);
        me.label_map = Some(map);
        me
    }

    /// Taxonomy of accepted layouts.
    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn summary(&self) -> &IngestSummary {
        &self.summary
    }

    pub fn ingest_reader<R, A, J>(&mut self, source: &str, reader: R, mut on_accept: A, mut on_reject: J) -> Result<()>
    where
        R: BufRead,
        A: FnMut(Layout) -> Result<()>,
        J: FnMut(&Rejection) -> Result<()>,
    {
        let batch_size = self.config.batch_size.max(1);
        let mut lines = reader.lines();
        let mut line_no = 0usize;
        loop {
            let mut batch = Vec::with_capacity(batch_size);
            for line in lines.by_ref() {
                line_no += 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                batch.push((line_no, line));
                if batch.len() == batch_size {
                    break;
                }
            }
            if batch.is_empty() {
                return Ok(());
            }
            let labels = match &self.label_map {
                Some(m) => Labels::Mapped(m),
                None => Labels::Direct(&self.taxonomy),
            };
            let config = &self.config;
            let parsed: Vec<(usize, Option<String>, std::result::Result<Normalized, Invalid>)> = batch
                .par_iter()
                .map(|(no, line)| match serde_json::from_str::<LayoutRecord>(line) {
                    Ok(rec) => (*no, Some(rec.id.clone()), validate_record(&rec, &labels, config)),
                    Err(e) => (*no, None, Err((RejectReason::Malformed, e.to_string()))),
                })
                .collect();
            for (no, id, outcome) in parsed {
                self.summary.lines += 1;
                let outcome = outcome.and_then(|n| self.check_duplicate(n));
                match outcome {
                    Ok(n) => {
                        self.summary.accepted += 1;
                        self.summary.dropped_boxes += n.dropped;
                        on_accept(n.layout)?;
                    }
                    Err((reason, detail)) => {
                        *self.summary.rejected.entry(reason).or_default() += 1;
                        on_reject(&Rejection {
                            source: source.to_string(),
                            line: no,
                            id,
                            reason,
                            detail,
                        })?;
                    }
                }
            }
        }
    }

    pub fn ingest_path<A, J>(&mut self, path: &Path, on_accept: A, on_reject: J) -> Result<()>
    where
        A: FnMut(Layout) -> Result<()>,
        J: FnMut(&Rejection) -> Result<()>,
    {
        let file = File::open(path)?;
        self.ingest_reader(&path.display().to_string(), BufReader::new(file), on_accept, on_reject)
    }

    fn check_duplicate(&mut self, n: Normalized) -> std::result::Result<Normalized, Invalid> {
        if self.seen_ids.contains(n.layout.id()) {
            return Err((RejectReason::Duplicate, format!("id {:?} seen before", n.layout.id())));
        }
        if self.config.dedup && !self.seen_keys.insert(dedup_key(&n.layout)) {
            return Err((RejectReason::Duplicate, "quantized geometry seen before".into()));
        }
        self.seen_ids.insert(n.layout.id().to_string());
        Ok(n)
    }
}

/// Reads a JSONL corpus strictly: the first invalid line is an error.
pub fn read_layouts(path: &Path, taxonomy: &Taxonomy) -> Result<Vec<Layout>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LayoutRecord = serde_json::from_str(&line).map_err(|e| Error::InvalidRecord {
            id: format!("line {}", i + 1),
            reason: RejectReason::Malformed.as_str(),
            detail: e.to_string(),
        })?;
        out.push(record.to_layout(taxonomy, usize::MAX)?.layout);
    }
    Ok(out)
}

pub fn write_layout<W: Write>(out: &mut W, layout: &Layout, taxonomy: &Taxonomy) -> Result<()> {
    serde_json::to_writer(&mut *out, &LayoutRecord::from_layout(layout, taxonomy)?)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Exact-count corpus statistics. Every field is a sum over pages, so shard
/// results combine with [`CorpusStats::merge`] independent of split and order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pages: u64,
    pub elements: u64,
    pub doc_type_pages: BTreeMap<String, u64>,
    pub doc_type_elements: BTreeMap<String, u64>,
    /// Elements per page -> pages.
    pub element_count: BTreeMap<u32, u64>,
    /// `floor(100 * summed element area / page area)` -> pages.
    pub area_ratio_percent: BTreeMap<u32, u64>,
    /// `floor(4 * log2(width / height))` in pixels -> elements.
    pub aspect_ratio_quarter_log2: BTreeMap<i32, u64>,
    /// Category -> doc type -> elements.
    pub category_by_doc_type: BTreeMap<String, BTreeMap<String, u64>>,
    /// Category pair -> pages containing both (diagonal: pages containing it).
    pub cooccurrence: BTreeMap<String, BTreeMap<String, u64>>,
}

fn bump<K: Ord>(map: &mut BTreeMap<K, u64>, key: K, by: u64) {
    *map.entry(key).or_default() += by;
}

fn merge_nested(into: &mut BTreeMap<String, BTreeMap<String, u64>>, from: &BTreeMap<String, BTreeMap<String, u64>>) {
    for (k, row) in from {
        let dst = into.entry(k.clone()).or_default();
        for (k2, v) in row {
            bump(dst, k2.clone(), *v);
        }
    }
}

impl CorpusStats {
    pub fn add(&mut self, layout: &Layout, taxonomy: &Taxonomy) -> Result<()> {
        let doc = layout.doc_type().as_str().to_string();
        let (cw, ch) = layout.canvas();
        let mut labels = Vec::with_capacity(layout.len());
        for (i, e) in layout.elements().iter().enumerate() {
            let label = taxonomy.label(e.category).ok_or(Error::UnknownLabel {
                label: format!("#{}", e.category.0),
                index: Some(i),
            })?;
            labels.push(label);
        }
        self.pages += 1;
        self.elements += layout.len() as u64;
        bump(&mut self.doc_type_pages, doc.clone(), 1);
        bump(&mut self.doc_type_elements, doc.clone(), layout.len() as u64);
        bump(&mut self.element_count, layout.len() as u32, 1);
        let area: f64 = layout.elements().iter().map(|e| e.bbox.area()).sum();
        bump(&mut self.area_ratio_percent, (area * 100.0).floor() as u32, 1);
        for (e, label) in layout.elements().iter().zip(&labels) {
            let aspect = (e.bbox.w() * f64::from(cw)) / (e.bbox.h() * f64::from(ch));
            bump(&mut self.aspect_ratio_quarter_log2, (aspect.log2() * 4.0).floor() as i32, 1);
            bump(self.category_by_doc_type.entry(label.to_string()).or_default(), doc.clone(), 1);
        }
        labels.sort_unstable();
        labels.dedup();
        for a in &labels {
            let row = self.cooccurrence.entry(a.to_string()).or_default();
            for b in &labels {
                bump(row, b.to_string(), 1);
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        self.pages += other.pages;
        self.elements += other.elements;
        for (dst, src) in [
            (&mut self.doc_type_pages, &other.doc_type_pages),
            (&mut self.doc_type_elements, &other.doc_type_elements),
        ] {
            for (k, v) in src {
                bump(dst, k.clone(), *v);
            }
        }
        for (k, v) in &other.element_count {
            bump(&mut self.element_count, *k, *v);
        }
        for (k, v) in &other.area_ratio_percent {
            bump(&mut self.area_ratio_percent, *k, *v);
        }
        for (k, v) in &other.aspect_ratio_quarter_log2 {
            bump(&mut self.aspect_ratio_quarter_log2, *k, *v);
        }
        merge_nested(&mut self.category_by_doc_type, &other.category_by_doc_type);
        merge_nested(&mut self.cooccurrence, &other.cooccurrence);
    }
}

/// Single pass over `layouts`.
pub fn compute_stats<'a, I>(layouts: I, taxonomy: &Taxonomy) -> Result<CorpusStats>
where
    I: IntoIterator<Item = &'a Layout>,
{
    let mut stats = CorpusStats::default();
    for l in layouts {
        stats.add(l, taxonomy)?;
    }
    if stats.pages == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(stats)
}

/// Streams per-page feature rows as CSV: id, doc type, element count, mean
/// element area, mean centroid, then the metric feature vector.
pub struct FeatureWriter<W: Write> {
    csv: csv::Writer<W>,
    taxonomy: Taxonomy,
    rows: usize,
}

impl<W: Write> FeatureWriter<W> {
    pub fn new(out: W, taxonomy: &Taxonomy) -> Result<Self> {
        let mut csv = csv::Writer::from_writer(out);
        let mut header = vec![
            "id".to_string(),
            "doc_type".into(),
            "count".into(),
            "mean_area".into(),
            "centroid_x".into(),
            "centroid_y".into(),
        ];
        header.extend(feature_names(taxonomy));
        csv.write_record(&header)?;
        Ok(Self {
            csv,
            taxonomy: taxonomy.clone(),
            rows: 0,
        })
    }

    pub fn write(&mut self, layout: &Layout) -> Result<()> {
        let n = layout.len() as f64;
        let els = layout.elements();
        let mean = |f: &dyn Fn(&crate::layout::BBox) -> f64| els.iter().map(|e| f(&e.bbox)).sum::<f64>() / n;
        let mut row = vec![
            layout.id().to_string(),
            layout.doc_type().as_str().to_string(),
            layout.len().to_string(),
            mean(&|b| b.area()).to_string(),
            mean(&|b| b.center().0).to_string(),
            mean(&|b| b.center().1).to_string(),
        ];
        row.extend(extract_features(layout, &self.taxonomy)?.0.iter().map(f64::to_string));
        self.csv.write_record(&row)?;
        self.rows += 1;
        Ok(())
    }

    /// Flushes and returns the number of rows written.
    pub fn finish(mut self) -> Result<usize> {
        self.csv.flush()?;
        Ok(self.rows)
    }
}

pub fn export_features<'a, I, W>(layouts: I, taxonomy: &Taxonomy, out: W) -> Result<usize>
where
    I: IntoIterator<Item = &'a Layout>,
    W: Write,
{
    let mut writer = FeatureWriter::new(out, taxonomy)?;
    for l in layouts {
        writer.write(l)?;
    }
    writer.finish()
}
