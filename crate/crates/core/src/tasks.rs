//! Construction of conditioning instances for the five generation regimes.
//!
//! | kind        | condition list                                  |
//! |-------------|-------------------------------------------------|
//! | U-Cond      | empty                                           |
//! | C→S+P       | categories                                      |
//! | C+S→P       | categories + quantized `(w, h)`                 |
//! | Completion  | complete tuples for a retained 0–20% prefix     |
//! | Refinement  | complete tuples perturbed by Gaussian noise     |

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::dataset::LayoutRecord;
use crate::error::{Error, Result};
use crate::layout::{BBox, CategoryId, Layout, QBBox, BOX_EPSILON};
use crate::serialization::PromptHeader;
use crate::taxonomy::Taxonomy;

/// Upper bound of the Completion retention fraction.
pub const MAX_RETAINED_FRACTION: f64 = 0.2;
/// Default refinement noise: variance 1e-2.
pub const DEFAULT_SIGMA: f64 = 0.1;
/// Smallest normalized extent kept by the refinement clamp (one bin).
pub const MIN_EXTENT: f64 = 0.001;
/// U-Cond : C→S+P : C+S→P : Completion : Refinement.
pub const DEFAULT_WEIGHTS: [f64; 5] = [1.0, 1.0, 1.0, 3.0, 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    UCond,
    CToSp,
    CsToP,
    Completion,
    Refinement,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::UCond,
        TaskKind::CToSp,
        TaskKind::CsToP,
        TaskKind::Completion,
        TaskKind::Refinement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::UCond => "u_cond",
            TaskKind::CToSp => "c_to_sp",
            TaskKind::CsToP => "cs_to_p",
            TaskKind::Completion => "completion",
            TaskKind::Refinement => "refinement",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric() || *c == '+')
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "ucond" | "unconditional" => Ok(TaskKind::UCond),
            "ctosp" | "cs+p" => Ok(TaskKind::CToSp),
            "cstop" | "c+sp" => Ok(TaskKind::CsToP),
            "completion" => Ok(TaskKind::Completion),
            "refinement" => Ok(TaskKind::Refinement),
            _ => Err(Error::Config(format!("unknown task kind {s:?}"))),
        }
    }
}

/// One partially specified element. Quantized `(w, h)` and `(x, y)` are each
/// present or absent as a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConditionTuple {
    pub category: Option<CategoryId>,
    pub size: Option<(u16, u16)>,
    pub position: Option<(u16, u16)>,
}

impl ConditionTuple {
    pub fn complete(category: CategoryId, q: QBBox) -> Self {
        Self {
            category: Some(category),
            size: Some((q.qw, q.qh)),
            position: Some((q.qx, q.qy)),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.category.is_some() && self.size.is_some() && self.position.is_some()
    }

    pub fn is_empty(&self) -> bool {
        self.category.is_none() && self.size.is_none() && self.position.is_none()
    }

    /// `(category, size, position)` presence.
    pub fn pattern(&self) -> (bool, bool, bool) {
        (self.category.is_some(), self.size.is_some(), self.position.is_some())
    }

    pub fn qbbox(&self) -> Option<QBBox> {
        let ((qx, qy), (qw, qh)) = (self.position?, self.size?);
        QBBox::new(qx, qy, qw, qh).ok()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ConditionList {
    tuples: Vec<ConditionTuple>,
}

impl ConditionList {
    pub fn new(tuples: Vec<ConditionTuple>) -> Self {
        Self { tuples }
    }
    pub fn tuples(&self) -> &[ConditionTuple] {
        &self.tuples
    }
    pub fn len(&self) -> usize {
        self.tuples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Shared field-group pattern, or `None` when tuples disagree.
    /// An empty list has the all-absent pattern.
    pub fn pattern(&self) -> Option<(bool, bool, bool)> {
        let first = self.tuples.first().map_or((false, false, false), ConditionTuple::pattern);
        self.tuples.iter().all(|t| t.pattern() == first).then_some(first)
    }
}

/// RNG draws consumed while building an instance.
///
/// Completion records `[f]` (followed by the retained indices in random-subset
/// mode); Refinement records the pre-clamp deltas `dx, dy, dw, dh` per element.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub seed: Option<u64>,
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub kind: TaskKind,
    pub header: PromptHeader,
    pub condition: ConditionList,
    pub target: Layout,
    pub trace: SeedTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    /// Keep the first `k` elements in reading order.
    Prefix,
    /// Keep `k` elements chosen uniformly, listed in reading order.
    RandomSubset,
}

/// Builds [`TaskInstance`]s from ground-truth layouts.
#[derive(Debug, Clone)]
pub struct TaskBuilder {
    valid_categories: Vec<CategoryId>,
    sigma: f64,
    retention: Retention,
}

impl TaskBuilder {
    pub fn new(taxonomy: &Taxonomy) -> Self {
        Self {
            valid_categories: taxonomy.ids().collect(),
            sigma: DEFAULT_SIGMA,
            retention: Retention::Prefix,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::Config(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_retention(mut self, retention: Retention) -> Self {
        self.retention = retention;
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn header(&self, layout: &Layout) -> PromptHeader {
        let (w, h) = layout.canvas();
        PromptHeader {
            doc_type: layout.doc_type(),
            canvas_w: w,
            canvas_h: h,
            bbox_count: layout.len() as u32,
            valid_categories: self.valid_categories.clone(),
        }
    }

    fn instance(&self, kind: TaskKind, layout: &Layout, condition: Vec<ConditionTuple>, draws: Vec<f64>) -> TaskInstance {
        TaskInstance {
            kind,
            header: self.header(layout),
            condition: ConditionList::new(condition),
            target: layout.clone(),
            trace: SeedTrace { seed: None, draws },
        }
    }

    pub fn make_ucond(&self, layout: &Layout) -> TaskInstance {
        self.instance(TaskKind::UCond, layout, Vec::new(), Vec::new())
    }

    pub fn make_c_to_sp(&self, layout: &Layout) -> TaskInstance {
        self.instance(TaskKind::CToSp, layout, categories_only(layout), Vec::new())
    }

    pub fn make_cs_to_p(&self, layout: &Layout) -> TaskInstance {
        self.instance(TaskKind::CsToP, layout, categories_and_sizes(layout), Vec::new())
    }

    pub fn make_completion<R: Rng + ?Sized>(&self, layout: &Layout, rng: &mut R) -> TaskInstance {
        let f = rng.random_range(0.0..=MAX_RETAINED_FRACTION);
        let n = layout.len();
        let k = retained_count(f, n);
        let mut draws = vec![f];
        let indices: Vec<usize> = match self.retention {
            Retention::Prefix => (0..k).collect(),
            Retention::RandomSubset => {
                let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
                idx.sort_unstable();
                draws.extend(idx.iter().map(|&i| i as f64));
                idx
            }
        };
        let condition = indices
            .iter()
            .map(|&i| {
                let e = &layout.elements()[i];
                ConditionTuple::complete(e.category, e.quantized())
            })
            .collect();
        self.instance(TaskKind::Completion, layout, condition, draws)
    }

    pub fn make_refinement<R: Rng + ?Sized>(&self, layout: &Layout, rng: &mut R) -> TaskInstance {
        let noise = Normal::new(0.0, self.sigma).expect("sigma validated");
        let mut draws = Vec::with_capacity(4 * layout.len());
        let mut condition = Vec::with_capacity(layout.len());
        for e in layout.elements() {
            let d = [noise.sample(rng), noise.sample(rng), noise.sample(rng), noise.sample(rng)];
            draws.extend_from_slice(&d);
            condition.push(ConditionTuple::complete(e.category, perturb(&e.bbox, d).quantize()));
        }
        self.instance(TaskKind::Refinement, layout, condition, draws)
    }

    pub fn make<R: Rng + ?Sized>(&self, kind: TaskKind, layout: &Layout, rng: &mut R) -> TaskInstance {
        match kind {
            TaskKind::UCond => self.make_ucond(layout),
            TaskKind::CToSp => self.make_c_to_sp(layout),
            TaskKind::CsToP => self.make_cs_to_p(layout),
            TaskKind::Completion => self.make_completion(layout, rng),
            TaskKind::Refinement => self.make_refinement(layout, rng),
        }
    }

    /// Re-applies the kind's masking rule to `instance.target` using the
    /// recorded draws.
    pub fn rederive(instance: &TaskInstance) -> Result<ConditionList> {
        let layout = &instance.target;
        let tuples = match instance.kind {
            TaskKind::UCond => Vec::new(),
            TaskKind::CToSp => categories_only(layout),
            TaskKind::CsToP => categories_and_sizes(layout),
            TaskKind::Completion => {
                let f = *instance
                    .trace
                    .draws
                    .first()
                    .ok_or_else(|| Error::Config("completion trace lacks the fraction draw".into()))?;
                let k = retained_count(f, layout.len());
                let indices: Vec<usize> = if instance.trace.draws.len() > 1 {
                    instance.trace.draws[1..].iter().map(|&i| i as usize).collect()
                } else {
                    (0..k).collect()
                };
                if indices.len() != k || indices.iter().any(|&i| i >= layout.len()) {
                    return Err(Error::Config("completion trace is inconsistent".into()));
                }
                indices
                    .iter()
                    .map(|&i| {
                        let e = &layout.elements()[i];
                        ConditionTuple::complete(e.category, e.quantized())
                    })
                    .collect()
            }
            TaskKind::Refinement => {
                let draws = &instance.trace.draws;
                if draws.len() != 4 * layout.len() {
                    return Err(Error::Config("refinement trace has the wrong number of deltas".into()));
                }
                layout
                    .elements()
                    .iter()
                    .zip(draws.chunks_exact(4))
                    .map(|(e, d)| ConditionTuple::complete(e.category, perturb(&e.bbox, [d[0], d[1], d[2], d[3]]).quantize()))
                    .collect()
            }
        };
        Ok(ConditionList::new(tuples))
    }
}

/// `k = round(f * n)`.
pub fn retained_count(f: f64, n: usize) -> usize {
    ((f * n as f64).round() as usize).min(n)
}

fn categories_only(layout: &Layout) -> Vec<ConditionTuple> {
    layout
        .categories()
        .map(|c| ConditionTuple {
            category: Some(c),
            size: None,
            position: None,
        })
        .collect()
}

fn categories_and_sizes(layout: &Layout) -> Vec<ConditionTuple> {
    layout
        .elements()
        .iter()
        .map(|e| {
            let q = e.quantized();
            ConditionTuple {
                category: Some(e.category),
                size: Some((q.qw, q.qh)),
                position: None,
            }
        })
        .collect()
}

/// Adds `[dx, dy, dw, dh]` and clamps back onto the page with extents of at
/// least one bin.
pub fn perturb(b: &BBox, d: [f64; 4]) -> BBox {
    let w = (b.w() + d[2]).clamp(MIN_EXTENT, 1.0);
    let h = (b.h() + d[3]).clamp(MIN_EXTENT, 1.0);
    let mut x = (b.x() + d[0]).clamp(0.0, 1.0);
    let mut y = (b.y() + d[1]).clamp(0.0, 1.0);
    if x + w > 1.0 + BOX_EPSILON {
        x = 1.0 - w;
    }
    if y + h > 1.0 + BOX_EPSILON {
        y = 1.0 - h;
    }
    BBox::new(x, y, w, h).expect("clamped box is valid")
}

/// Draws task kinds i.i.d. proportional to per-kind weights and builds
/// instances from a layout stream.
pub struct TaskMixture<R> {
    builder: TaskBuilder,
    kinds: WeightedIndex<f64>,
    rng: R,
    seed: Option<u64>,
}

impl TaskMixture<ChaCha8Rng> {
    pub fn seeded(builder: TaskBuilder, weights: [f64; 5], seed: u64) -> Result<Self> {
        let mut m = Self::new(builder, weights, ChaCha8Rng::seed_from_u64(seed))?;
        m.seed = Some(seed);
        Ok(m)
    }
}

impl<R: Rng> TaskMixture<R> {
    pub fn new(builder: TaskBuilder, weights: [f64; 5], rng: R) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(format!("invalid task weights {weights:?}")));
        }
        let kinds = WeightedIndex::new(weights).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            builder,
            kinds,
            rng,
            seed: None,
        })
    }

    pub fn sample_kind(&mut self) -> TaskKind {
        TaskKind::ALL[self.kinds.sample(&mut self.rng)]
    }

    pub fn next_instance(&mut self, layout: &Layout) -> TaskInstance {
        let kind = self.sample_kind();
        let mut inst = self.builder.make(kind, layout, &mut self.rng);
        inst.trace.seed = self.seed;
        inst
    }

    pub fn stream<'a, I>(&'a mut self, layouts: I) -> impl Iterator<Item = TaskInstance> + 'a
    where
        I: IntoIterator<Item = &'a Layout>,
        I::IntoIter: 'a,
    {
        layouts.into_iter().map(move |l| self.next_instance(l))
    }
}

/// Parses `"1,1,1,3,3"`.
pub fn parse_weights(text: &str) -> Result<[f64; 5]> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| Error::Config(format!("weight {p:?}: {e}"))))
        .collect::<Result<_>>()?;
    parts
        .try_into()
        .map_err(|p: Vec<f64>| Error::Config(format!("expected 5 weights, got {}", p.len())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderRecord {
    pub doc_type: crate::layout::DocType,
    pub canvas_w: u32,
    pub canvas_h: u32,
    pub bbox_count: u32,
    pub valid_categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<u16>,
}

/// JSONL form of a [`TaskInstance`], labels spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub kind: TaskKind,
    pub header: HeaderRecord,
    pub condition: Vec<ConditionRecord>,
    pub target: LayoutRecord,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub draws: Vec<f64>,
}

impl TaskInstance {
    pub fn to_record(&self, taxonomy: &Taxonomy) -> Result<TaskRecord> {
        let label = |c: CategoryId| {
            taxonomy.label(c).map(str::to_string).ok_or(Error::UnknownLabel {
                label: format!("#{}", c.0),
                index: None,
            })
        };
        Ok(TaskRecord {
            kind: self.kind,
            header: HeaderRecord {
                doc_type: self.header.doc_type,
                canvas_w: self.header.canvas_w,
                canvas_h: self.header.canvas_h,
                bbox_count: self.header.bbox_count,
                valid_categories: self.header.valid_categories.iter().map(|&c| label(c)).collect::<Result<_>>()?,
            },
            condition: self
                .condition
                .tuples()
                .iter()
                .map(|t| {
                    Ok(ConditionRecord {
                        category: t.category.map(label).transpose()?,
                        x: t.position.map(|p| p.0),
                        y: t.position.map(|p| p.1),
                        w: t.size.map(|s| s.0),
                        h: t.size.map(|s| s.1),
                    })
                })
                .collect::<Result<_>>()?,
            target: LayoutRecord::from_layout(&self.target, taxonomy)?,
            seed: self.trace.seed,
            draws: self.trace.draws.clone(),
        })
    }

    pub fn from_record(record: &TaskRecord, taxonomy: &Taxonomy) -> Result<Self> {
        let group = |a: Option<u16>, b: Option<u16>, what: &str| -> Result<Option<(u16, u16)>> {
            match (a, b) {
                (Some(a), Some(b)) => {
                    if a >= 1000 || b >= 1000 {
                        return Err(Error::ConditionMismatch(format!("{what} value out of range")));
                    }
                    Ok(Some((a, b)))
                }
                (None, None) => Ok(None),
                _ => Err(Error::ConditionMismatch(format!("{what} group is half specified"))),
            }
        };
        let tuples = record
            .condition
            .iter()
            .map(|c| {
                Ok(ConditionTuple {
                    category: c.category.as_deref().map(|l| taxonomy.id(l)).transpose()?,
                    size: group(c.w, c.h, "size")?,
                    position: group(c.x, c.y, "position")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let target = record.target.to_layout(taxonomy, crate::layout::DEFAULT_MAX_ELEMENTS)?.layout;
        Ok(TaskInstance {
            kind: record.kind,
            header: PromptHeader {
                doc_type: record.header.doc_type,
                canvas_w: record.header.canvas_w,
                canvas_h: record.header.canvas_h,
                bbox_count: record.header.bbox_count,
                valid_categories: record
                    .header
                    .valid_categories
                    .iter()
                    .map(|l| taxonomy.id(l))
                    .collect::<Result<_>>()?,
            },
            condition: ConditionList::new(tuples),
            target,
            trace: SeedTrace {
                seed: record.seed,
                draws: record.draws.clone(),
            },
        })
    }
}
