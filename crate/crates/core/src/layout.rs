//! Canonical layout data model: categorized boxes on a normalized page.
//!
//! Boxes are stored as normalized `(x, y, w, h)` with `(x, y)` the top-left
//! corner. The quantized view maps every coordinate into `0..=999`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of quantization bins per coordinate.
pub const BINS: u16 = 1000;
/// Slack allowed on `x + w <= 1` and `y + h <= 1`.
pub const BOX_EPSILON: f64 = 1e-6;
pub const DEFAULT_MAX_ELEMENTS: usize = 256;

/// Index of a label inside one taxonomy. Ids from different taxonomies are
/// not comparable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CategoryId(pub u16);

impl CategoryId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocType {
    Textbook,
    Newspaper,
    Magazine,
    Exam,
    Academic,
    Slide,
}

impl DocType {
    pub const ALL: [DocType; 6] = [
        DocType::Textbook,
        DocType::Newspaper,
        DocType::Magazine,
        DocType::Exam,
        DocType::Academic,
        DocType::Slide,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DocType::Textbook => "textbook",
            DocType::Newspaper => "newspaper",
            DocType::Magazine => "magazine",
            DocType::Exam => "exam",
            DocType::Academic => "academic",
            DocType::Slide => "slide",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DocType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DocType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        DocType::ALL
            .into_iter()
            .find(|d| d.as_str() == lower)
            .ok_or_else(|| Error::UnknownLabel {
                label: s.to_string(),
                index: None,
            })
    }
}

/// Maps a normalized coordinate to its bin: `min(floor(v * 1000), 999)`.
pub fn quantize(v: f64) -> Result<u16> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain {
            value: v,
            domain: "[0, 1]",
        });
    }
    Ok(((v * f64::from(BINS)).floor() as u16).min(BINS - 1))
}

/// Bin-center inverse of [`quantize`]: `(q + 0.5) / 1000`.
pub fn dequantize(q: u16) -> Result<f64> {
    if q >= BINS {
        return Err(Error::Domain {
            value: f64::from(q),
            domain: "0..=999",
        });
    }
    Ok((f64::from(q) + 0.5) / f64::from(BINS))
}

/// Normalized axis-aligned box, top-left anchored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let invalid = |reason| Error::InvalidBox { x, y, w, h, reason };
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(invalid("origin outside the page"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(invalid("non-positive extent"));
        }
        if x + w > 1.0 + BOX_EPSILON || y + h > 1.0 + BOX_EPSILON {
            return Err(invalid("box extends past the page"));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn right(&self) -> f64 {
        self.x + self.w
    }
    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Quantized view. Extents are floored at one bin so the result is always
    /// a valid [`QBBox`]; ingestion drops boxes that would need the floor.
    pub fn quantize(&self) -> QBBox {
        let q = |v: f64| quantize(v.clamp(0.0, 1.0)).expect("clamped into domain");
        QBBox {
            qx: q(self.x),
            qy: q(self.y),
            qw: q(self.w).max(1),
            qh: q(self.h).max(1),
        }
    }
}

/// Quantized box with every field in `0..=999` and non-zero extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QBBox {
    pub qx: u16,
    pub qy: u16,
    pub qw: u16,
    pub qh: u16,
}

impl QBBox {
    pub fn new(qx: u16, qy: u16, qw: u16, qh: u16) -> Result<Self> {
        for v in [qx, qy, qw, qh] {
            if v >= BINS {
                return Err(Error::Domain {
                    value: f64::from(v),
                    domain: "0..=999",
                });
            }
        }
        if qw == 0 || qh == 0 {
            return Err(Error::InvalidBox {
                x: f64::from(qx),
                y: f64::from(qy),
                w: f64::from(qw),
                h: f64::from(qh),
                reason: "zero quantized extent",
            });
        }
        Ok(Self { qx, qy, qw, qh })
    }

    pub fn get(&self, role: usize) -> u16 {
        [self.qx, self.qy, self.qw, self.qh][role]
    }

    /// Dequantizes to bin centers. An axis with `q + extent = 1000` can only
    /// come from a box ending exactly on the page edge, so it decodes to bin
    /// floors instead; sums past 1000 are trimmed. Either way the result lies
    /// on the page and quantizes back to `self` whenever `q + extent <= 1000`.
    pub fn to_bbox(&self) -> BBox {
        let (x, w) = axis(self.qx, self.qw);
        let (y, h) = axis(self.qy, self.qh);
        BBox { x, y, w, h }
    }
}

fn axis(q: u16, extent: u16) -> (f64, f64) {
    let bins = f64::from(BINS);
    if q + extent < BINS {
        ((f64::from(q) + 0.5) / bins, (f64::from(extent) + 0.5) / bins)
    } else {
        (f64::from(q) / bins, f64::from(extent.min(BINS - q)) / bins)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub category: CategoryId,
    pub bbox: BBox,
}

impl Element {
    pub fn new(category: CategoryId, bbox: BBox) -> Self {
        Self { category, bbox }
    }

    pub fn quantized(&self) -> QBBox {
        self.bbox.quantize()
    }
}

/// Page-level metadata shared by a layout and anything derived from it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Page {
    pub id: String,
    pub doc_type: DocType,
    pub canvas_w: u32,
    pub canvas_h: u32,
}

impl Page {
    pub fn new(id: impl Into<String>, doc_type: DocType, canvas_w: u32, canvas_h: u32) -> Self {
        Self {
            id: id.into(),
            doc_type,
            canvas_w,
            canvas_h,
        }
    }
}

/// A page of elements in reading order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    page: Page,
    elements: Vec<Element>,
}

impl Layout {
    pub fn new(page: Page, elements: Vec<Element>) -> Result<Self> {
        Self::with_limit(page, elements, DEFAULT_MAX_ELEMENTS)
    }

    pub fn with_limit(page: Page, elements: Vec<Element>, max_elements: usize) -> Result<Self> {
        if page.canvas_w == 0 || page.canvas_h == 0 {
            return Err(Error::Config(format!(
                "canvas must be positive, got {}x{}",
                page.canvas_w, page.canvas_h
            )));
        }
        if elements.is_empty() {
            return Err(Error::EmptyLayout);
        }
        if elements.len() > max_elements {
            return Err(Error::TooManyElements {
                count: elements.len(),
                limit: max_elements,
            });
        }
        Ok(Self { page, elements })
    }

    /// Same page, different elements.
    pub fn with_elements(&self, elements: Vec<Element>) -> Result<Self> {
        Self::with_limit(self.page.clone(), elements, usize::MAX)
    }

    pub fn page(&self) -> &Page {
        &self.page
    }
    pub fn id(&self) -> &str {
        &self.page.id
    }
    pub fn doc_type(&self) -> DocType {
        self.page.doc_type
    }
    pub fn canvas(&self) -> (u32, u32) {
        (self.page.canvas_w, self.page.canvas_h)
    }
    pub fn elements(&self) -> &[Element] {
        &self.elements
    }
    pub fn len(&self) -> usize {
        self.elements.len()
    }
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn categories(&self) -> impl Iterator<Item = CategoryId> + '_ {
        self.elements.iter().map(|e| e.category)
    }
}

/// Element in absolute pixel units, as found in source annotations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawElement {
    pub category: CategoryId,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawLayout {
    pub page: Page,
    pub elements: Vec<RawElement>,
}

/// Result of [`normalize_layout`]: the layout plus how many boxes were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub layout: Layout,
    pub dropped: usize,
}

pub fn normalize_layout(raw: &RawLayout) -> Result<Normalized> {
    normalize_layout_with_limit(raw, DEFAULT_MAX_ELEMENTS)
}

/// Divides pixel boxes by the canvas, clips them to the page and drops boxes
/// whose clipped width or height falls below one quantization bin.
pub fn normalize_layout_with_limit(raw: &RawLayout, max_elements: usize) -> Result<Normalized> {
    let (cw, ch) = (f64::from(raw.page.canvas_w), f64::from(raw.page.canvas_h));
    if cw <= 0.0 || ch <= 0.0 {
        return Err(Error::Config("canvas must be positive".into()));
    }
    let mut dropped = 0;
    let mut elements = Vec::with_capacity(raw.elements.len());
    for e in &raw.elements {
        match clip_box(e, cw, ch) {
            Some(bbox) => elements.push(Element::new(e.category, bbox)),
            None => dropped += 1,
        }
    }
    let layout = Layout::with_limit(raw.page.clone(), elements, max_elements)?;
    Ok(Normalized { layout, dropped })
}

fn clip_box(e: &RawElement, cw: f64, ch: f64) -> Option<BBox> {
    if ![e.x, e.y, e.w, e.h].iter().all(|v| v.is_finite()) {
        return None;
    }
    let x0 = e.x.clamp(0.0, cw);
    let x1 = (e.x + e.w).clamp(0.0, cw);
    let y0 = e.y.clamp(0.0, ch);
    let y1 = (e.y + e.h).clamp(0.0, ch);
    let (x, w) = (x0 / cw, (x1 - x0) / cw);
    let (y, h) = (y0 / ch, (y1 - y0) / ch);
    if quantize(w.clamp(0.0, 1.0)).ok()? == 0 || quantize(h.clamp(0.0, 1.0)).ok()? == 0 {
        return None;
    }
    BBox::new(x, y, w, h).ok()
}
