//! Layout quality metrics: Alignment, Overlap, maximum IoU and a Fréchet
//! distance over hand-crafted layout features.

mod frechet;
mod hungarian;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use frechet::{frechet_distance, FeatureVector, COVARIANCE_EPSILON};
pub use hungarian::{hungarian, Assignment, Sense};

use crate::error::{Error, Result};
use crate::layout::{BBox, Layout};
use crate::taxonomy::Taxonomy;

/// Side of the occupancy grid used by the coverage feature.
pub const COVERAGE_GRID: usize = 32;
/// Number of features before the category histogram.
pub const BASE_FEATURES: usize = 14;

fn anchors(b: &BBox) -> [f64; 6] {
    let (cx, cy) = b.center();
    [b.x(), cx, b.right(), b.y(), cy, b.bottom()]
}

/// Mean over elements of `-ln(1 - d)`, times 100, where `d` is the smallest
/// gap between any of the element's six anchor lines (left, center, right,
/// top, middle, bottom) and the same anchor of another element.
pub fn alignment_score(layout: &Layout) -> f64 {
    let els = layout.elements();
    let n = els.len();
    if n < 2 {
        return 0.0;
    }
    let anchors: Vec<[f64; 6]> = els.iter().map(|e| anchors(&e.bbox)).collect();
    let total: f64 = (0..n)
        .map(|i| {
            let mut d = f64::INFINITY;
            for j in (0..n).filter(|&j| j != i) {
                for (u, v) in anchors[i].iter().zip(&anchors[j]) {
                    d = d.min((u - v).abs());
                }
            }
            -(1.0 - d.min(1.0 - 1e-9)).ln()
        })
        .sum();
    100.0 * total / n as f64
}

/// Mean over elements of the fraction of the element's area covered by each
/// other element, summed over the others.
pub fn overlap_score(layout: &Layout) -> Result<f64> {
    let els = layout.elements();
    let n = els.len();
    let mut total = 0.0;
    for (i, a) in els.iter().enumerate() {
        let area = a.bbox.area();
        if area <= 0.0 {
            return Err(Error::Degenerate(format!("element {i} has zero area")));
        }
        for (j, b) in els.iter().enumerate() {
            if i != j {
                total += a.bbox.intersection_area(&b.bbox) / area;
            }
        }
    }
    Ok(total / n as f64)
}

/// Category-gated optimal IoU matching between two layouts, normalized by the
/// larger element count.
pub fn layout_miou(generated: &Layout, reference: &Layout) -> f64 {
    let weights: Vec<Vec<f64>> = generated
        .elements()
        .iter()
        .map(|g| {
            reference
                .elements()
                .iter()
                .map(|r| if g.category == r.category { g.bbox.iou(&r.bbox) } else { 0.0 })
                .collect()
        })
        .collect();
    let a = hungarian(&weights, Sense::Max).expect("IoU weights are finite");
    a.value / generated.len().max(reference.len()) as f64
}

/// Optimal one-to-one pairing of generated and reference layouts maximizing
/// the mean [`layout_miou`].
pub fn set_miou(generated: &[Layout], reference: &[Layout]) -> Result<f64> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: 1,
            got: 0,
        });
    }
    let scores: Vec<Vec<f64>> = generated
        .par_iter()
        .map(|g| reference.iter().map(|r| layout_miou(g, r)).collect())
        .collect();
    let a = hungarian(&scores, Sense::Max)?;
    Ok(a.value / generated.len().max(reference.len()) as f64)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fraction of grid cell centers covered by at least one box.
pub fn grid_coverage(layout: &Layout) -> f64 {
    let g = COVERAGE_GRID;
    let mut covered = 0usize;
    for row in 0..g {
        let cy = (row as f64 + 0.5) / g as f64;
        for col in 0..g {
            let cx = (col as f64 + 0.5) / g as f64;
            if layout
                .elements()
                .iter()
                .any(|e| e.bbox.x() <= cx && cx <= e.bbox.right() && e.bbox.y() <= cy && cy <= e.bbox.bottom())
            {
                covered += 1;
            }
        }
    }
    covered as f64 / (g * g) as f64
}

pub fn feature_names(taxonomy: &Taxonomy) -> Vec<String> {
    let mut names: Vec<String> = [
        "log1p_count",
        "x_mean",
        "x_std",
        "y_mean",
        "y_std",
        "w_mean",
        "w_std",
        "h_mean",
        "h_std",
        "area_mean",
        "area_std",
        "coverage",
        "overlap",
        "alignment",
    ]
    .map(String::from)
    .to_vec();
    names.extend(taxonomy.labels().iter().map(|l| format!("freq_{l}")));
    names
}

/// Fixed-length description of a layout: count, coordinate moments, area
/// moments, grid coverage, overlap, unscaled alignment, then the normalized
/// category histogram.
pub fn extract_features(layout: &Layout, taxonomy: &Taxonomy) -> Result<FeatureVector> {
    let els = layout.elements();
    let n = els.len();
    let mut v = Vec::with_capacity(BASE_FEATURES + taxonomy.len());
    v.push((n as f64).ln_1p());
    let coord = |f: fn(&BBox) -> f64| mean_std(els.iter().map(move |e| f(&e.bbox)));
    for f in [BBox::x, BBox::y, BBox::w, BBox::h] {
        let (m, s) = coord(f);
        v.extend([m, s]);
    }
    let (m, s) = coord(BBox::area);
    v.extend([m, s]);
    v.push(grid_coverage(layout));
    v.push(overlap_score(layout)?);
    v.push(alignment_score(layout) / 100.0);
    let mut hist = vec![0.0; taxonomy.len()];
    for (i, e) in els.iter().enumerate() {
        let slot = hist.get_mut(e.category.index()).ok_or(Error::UnknownLabel {
            label: format!("#{}", e.category.0),
            index: Some(i),
        })?;
        *slot += 1.0;
    }
    v.extend(hist.iter().map(|c| c / n as f64));
    Ok(FeatureVector(v))
}

/// Which metrics [`evaluate`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSelection {
    pub fid: bool,
    pub alignment: bool,
    pub overlap: bool,
    pub miou: bool,
}

impl Default for MetricSelection {
    fn default() -> Self {
        Self {
            fid: true,
            alignment: true,
            overlap: true,
            miou: true,
        }
    }
}

impl MetricSelection {
    /// Parses a comma list such as `fid,alignment,overlap,miou` (`ali`/`ove` accepted).
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self {
            fid: false,
            alignment: false,
            overlap: false,
            miou: false,
        };
        for part in text.split(',').map(|p| p.trim().to_ascii_lowercase()) {
            match part.as_str() {
                "fid" => s.fid = true,
                "ali" | "alignment" => s.alignment = true,
                "ove" | "overlap" => s.overlap = true,
                "miou" => s.miou = true,
                "all" => s = Self::default(),
                other => return Err(Error::Config(format!("unknown metric {other:?}"))),
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutScores {
    pub id: String,
    pub alignment: f64,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub generated_count: usize,
    pub reference_count: usize,
    pub fid: Option<f64>,
    pub fid_error: Option<String>,
    pub alignment: Option<f64>,
    pub overlap: Option<f64>,
    pub miou: Option<f64>,
    pub per_layout: Vec<LayoutScores>,
}

impl MetricReport {
    pub const CSV_HEADER: [&'static str; 6] = ["generated", "reference", "fid", "alignment", "overlap", "miou"];

    pub fn csv_row(&self) -> [String; 6] {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        [
            self.generated_count.to_string(),
            self.reference_count.to_string(),
            opt(self.fid),
            opt(self.alignment),
            opt(self.overlap),
            opt(self.miou),
        ]
    }
}

fn per_layout_scores(set: &[Layout]) -> Result<Vec<LayoutScores>> {
    set.par_iter()
        .map(|l| {
            Ok(LayoutScores {
                id: l.id().to_string(),
                alignment: alignment_score(l),
                overlap: overlap_score(l)?,
            })
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Scores a generated set against a reference set. Alignment and overlap
/// are averaged over the generated set. A Fréchet failure (for example fewer
/// than two layouts on a side) is reported in `fid_error`.
pub fn evaluate(
    generated: &[Layout],
    reference: &[Layout],
    taxonomy: &Taxonomy,
    selection: MetricSelection,
) -> Result<MetricReport> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: 1,
            got: 0,
        });
    }
    let per_layout = per_layout_scores(generated)?;
    let (mut fid, mut fid_error) = (None, None);
    if selection.fid {
        let features = |set: &[Layout]| -> Result<Vec<FeatureVector>> {
            set.par_iter().map(|l| extract_features(l, taxonomy)).collect()
        };
        match frechet_distance(&features(generated)?, &features(reference)?) {
            Ok(d) => fid = Some(d),
            Err(e) => fid_error = Some(e.to_string()),
        }
    }
    Ok(MetricReport {
        generated_count: generated.len(),
        reference_count: reference.len(),
        fid,
        fid_error,
        alignment: selection.alignment.then(|| mean(per_layout.iter().map(|s| s.alignment))),
        overlap: selection.overlap.then(|| mean(per_layout.iter().map(|s| s.overlap))),
        miou: if selection.miou {
            Some(set_miou(generated, reference)?)
        } else {
            None
        },
        per_layout,
    })
}

/// Alignment and overlap of a reference set on its own.
pub fn evaluate_reference(reference: &[Layout]) -> Result<MetricReport> {
    if reference.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: 1,
            got: 0,
        });
    }
    let per_layout = per_layout_scores(reference)?;
    Ok(MetricReport {
        generated_count: 0,
        reference_count: reference.len(),
        fid: None,
        fid_error: None,
        alignment: Some(mean(per_layout.iter().map(|s| s.alignment))),
        overlap: Some(mean(per_layout.iter().map(|s| s.overlap))),
        miou: None,
        per_layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{CategoryId, DocType, Element, Page};

    fn layout(boxes: &[(u16, f64, f64, f64, f64)]) -> Layout {
        Layout::new(
            Page::new("t", DocType::Slide, 1000, 1000),
            boxes
                .iter()
                .map(|&(c, x, y, w, h)| Element::new(CategoryId(c), BBox::new(x, y, w, h).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    fn tiling(n: usize) -> Layout {
        let s = 1.0 / n as f64;
        let boxes: Vec<_> = (0..n * n)
            .map(|k| ((k % 3) as u16, (k % n) as f64 * s, (k / n) as f64 * s, s, s))
            .collect();
        layout(&boxes)
    }

    #[test]
    fn alignment_examples() {
        assert_eq!(alignment_score(&layout(&[(0, 0.1, 0.1, 0.3, 0.2), (0, 0.1, 0.5, 0.6, 0.3)])), 0.0);
        assert_eq!(alignment_score(&layout(&[(0, 0.1, 0.1, 0.3, 0.2)])), 0.0);
        let l = layout(&[(0, 0.0, 0.0, 0.2, 0.2), (0, 0.1, 0.1, 0.2, 0.2)]);
        let expected = -100.0 * 0.9f64.ln();
        assert!((alignment_score(&l) - expected).abs() < 1e-9);
        assert!((expected - 10.536).abs() < 1e-3);
        assert_eq!(alignment_score(&tiling(4)), 0.0);
    }

    #[test]
    fn alignment_translation_invariant() {
        let a = layout(&[(0, 0.1, 0.2, 0.2, 0.3), (1, 0.37, 0.25, 0.2, 0.1), (2, 0.05, 0.6, 0.5, 0.2)]);
        let b = layout(&[(0, 0.15, 0.2, 0.2, 0.3), (1, 0.42, 0.25, 0.2, 0.1), (2, 0.1, 0.6, 0.5, 0.2)]);
        assert!((alignment_score(&a) - alignment_score(&b)).abs() < 1e-9);
    }

    #[test]
    fn overlap_examples() {
        let same = layout(&[(0, 0.1, 0.1, 0.3, 0.3), (1, 0.1, 0.1, 0.3, 0.3)]);
        assert!((overlap_score(&same).unwrap() - 1.0).abs() < 1e-12);
        assert!(overlap_score(&tiling(4)).unwrap() < 1e-12);
        let l = layout(&[(0, 0.0, 0.0, 0.4, 0.4), (1, 0.2, 0.2, 0.4, 0.4)]);
        assert!((overlap_score(&l).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn miou_examples() {
        let l = tiling(3);
        assert!((layout_miou(&l, &l) - 1.0).abs() < 1e-12);
        let a = layout(&[(0, 0.1, 0.1, 0.3, 0.3)]);
        let b = layout(&[(1, 0.1, 0.1, 0.3, 0.3)]);
        assert_eq!(layout_miou(&a, &b), 0.0);
        let g = layout(&[(0, 0.0, 0.0, 0.2, 0.2)]);
        let r = layout(&[(0, 0.1, 0.1, 0.2, 0.2)]);
        assert!((layout_miou(&g, &r) - 1.0 / 7.0).abs() < 1e-12);
        // the extra reference element dilutes the score
        let r2 = layout(&[(0, 0.0, 0.0, 0.2, 0.2), (0, 0.5, 0.5, 0.2, 0.2)]);
        assert!((layout_miou(&g, &r2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn miou_symmetric_for_equal_counts() {
        let a = layout(&[(0, 0.0, 0.0, 0.3, 0.2), (1, 0.4, 0.1, 0.3, 0.3), (0, 0.1, 0.5, 0.5, 0.4)]);
        let b = layout(&[(0, 0.05, 0.5, 0.5, 0.3), (0, 0.0, 0.05, 0.3, 0.2), (1, 0.3, 0.1, 0.3, 0.3)]);
        assert!((layout_miou(&a, &b) - layout_miou(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn set_miou_examples() {
        let set = vec![tiling(2), tiling(3), layout(&[(1, 0.1, 0.1, 0.5, 0.5)])];
        assert!((set_miou(&set, &set).unwrap() - 1.0).abs() < 1e-12);
        let other = vec![layout(&[(7, 0.1, 0.1, 0.5, 0.5)])];
        assert_eq!(set_miou(&set, &other).unwrap(), 0.0);
        assert!(set_miou(&[], &set).is_err());
    }

    #[test]
    fn set_miou_matches_permutation_oracle() {
        let gen = vec![
            layout(&[(0, 0.0, 0.0, 0.5, 0.5)]),
            layout(&[(0, 0.2, 0.2, 0.5, 0.5)]),
            layout(&[(0, 0.4, 0.4, 0.5, 0.5)]),
        ];
        let reference = vec![
            layout(&[(0, 0.45, 0.4, 0.5, 0.5)]),
            layout(&[(0, 0.05, 0.0, 0.5, 0.5)]),
            layout(&[(0, 0.1, 0.25, 0.5, 0.5)]),
        ];
        let s: Vec<Vec<f64>> = gen.iter().map(|g| reference.iter().map(|r| layout_miou(g, r)).collect()).collect();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms
            .iter()
            .map(|p| (0..3).map(|i| s[i][p[i]]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((set_miou(&gen, &reference).unwrap() - best / 3.0).abs() < 1e-12);
    }

    #[test]
    fn feature_examples() {
        let t = Taxonomy::default_coarse();
        let full = layout(&[(3, 0.0, 0.0, 1.0, 1.0)]);
        let f = extract_features(&full, &t).unwrap();
        assert_eq!(f.dim(), BASE_FEATURES + t.len());
        assert_eq!(f.0[11], 1.0);
        assert_eq!(&f.0[BASE_FEATURES..], &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let three = layout(&[(0, 0.0, 0.0, 0.2, 0.2), (1, 0.3, 0.3, 0.2, 0.2), (1, 0.6, 0.6, 0.2, 0.2)]);
        let f3 = extract_features(&three, &t).unwrap();
        assert!((f3.0[0] - 1.3863).abs() < 1e-4);
        assert_eq!(f3, extract_features(&three, &t).unwrap());
        assert!((f3.0[BASE_FEATURES..].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(feature_names(&t).len(), f3.dim());
    }

    #[test]
    fn evaluate_self_and_singletons() {
        let t = Taxonomy::default_coarse();
        let set = vec![
            tiling(2),
            tiling(3),
            layout(&[(1, 0.1, 0.1, 0.5, 0.5), (0, 0.2, 0.7, 0.6, 0.2)]),
            layout(&[(4, 0.1, 0.1, 0.3, 0.5), (0, 0.5, 0.1, 0.4, 0.2), (2, 0.5, 0.4, 0.3, 0.3)]),
        ];
        let r = evaluate(&set, &set, &t, MetricSelection::default()).unwrap();
        assert!(r.fid.unwrap() < 1e-6);
        assert!((r.miou.unwrap() - 1.0).abs() < 1e-12);
        let own = evaluate_reference(&set).unwrap();
        assert_eq!(r.alignment, own.alignment);
        assert_eq!(r.overlap, own.overlap);
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            serde_json::to_string(&evaluate(&set, &set, &t, MetricSelection::default()).unwrap()).unwrap()
        );

        let single = vec![tiling(2)];
        let r = evaluate(&single, &single, &t, MetricSelection::default()).unwrap();
        assert!(r.fid.is_none());
        assert!(r.fid_error.is_some());
        assert!(r.miou.is_some() && r.alignment.is_some());
    }

    #[test]
    fn selection_parsing() {
        let s = MetricSelection::parse("ali,ove").unwrap();
        assert!(s.alignment && s.overlap && !s.fid && !s.miou);
        assert_eq!(MetricSelection::parse("all").unwrap(), MetricSelection::default());
        assert!(MetricSelection::parse("bleu").is_err());
    }
}
