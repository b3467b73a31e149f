//! Synthetic column-based page layouts for tests, demos and scale runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layout::{CategoryId, DocType, Layout, Page, RawElement, RawLayout};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub min_elements: usize,
    pub max_elements: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            min_elements: 1,
            max_elements: 24,
        }
    }
}

fn canvas(doc: DocType) -> (u32, u32) {
    match doc {
        DocType::Slide => (1600, 900),
        DocType::Newspaper => (1200, 1800),
        _ => (1000, 1400),
    }
}

/// Page `index` of the synthetic corpus for `seed`. Each index draws from
/// its own stream, so any subset can be produced independently.
pub fn synth_layout(seed: u64, index: u64, taxonomy: &Taxonomy, config: SynthConfig) -> Layout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let doc = DocType::ALL[rng.random_range(0..DocType::ALL.len())];
    // Scan resolution varies page to page.
    let scale = rng.random_range(0.8..=1.6);
    let (bw, bh) = canvas(doc);
    let (w, h) = ((f64::from(bw) * scale) as u32, (f64::from(bh) * scale) as u32);
    let target = rng.random_range(config.min_elements.max(1)..=config.max_elements.max(config.min_elements).max(1));
    let columns: u32 = rng.random_range(1..=3);
    // Per-page margins and gutters, as scanned pages never line up exactly.
    let margin = rng.random_range(24..=64);
    let gap = rng.random_range(12..=32);
    let col_w = (w - 2 * margin - gap * (columns - 1)) / columns;
    let max_h = (h - 2 * margin) / (target as u32).div_ceil(columns).max(1);
    let mut elements = Vec::with_capacity(target);
    let mut col = 0;
    let mut cursor = margin;
    while elements.len() < target && col < columns {
        let eh = rng.random_range(8.min(max_h)..=max_h.max(8));
        if cursor + eh > h - margin {
            col += 1;
            cursor = margin;
            continue;
        }
        let indent = if rng.random_bool(0.3) { rng.random_range(0..col_w / 4) } else { 0 };
        let ew = if rng.random_bool(0.5) { col_w - indent } else { rng.random_range(col_w / 3..=col_w - indent) };
        let category = CategoryId(rng.random_range(0..taxonomy.len() as u16));
        // Annotators rarely hit the column edge to the pixel.
        let nudge = rng.random_range(0..=3);
        let ew = ew - nudge - rng.random_range(0..=3);
        elements.push(RawElement {
            category,
            x: f64::from(margin + col * (col_w + gap) + indent + nudge),
            y: f64::from(cursor),
            w: f64::from(ew),
            h: f64::from(eh),
        });
        cursor += eh + rng.random_range(4..=gap);
    }
    let raw = RawLayout {
        page: Page::new(format!("synth-{seed}-{index}"), doc, w, h),
        elements,
    };
    crate::layout::normalize_layout_with_limit(&raw, usize::MAX)
        .expect("synthetic boxes lie on the page")
        .layout
}

pub fn synth_corpus(seed: u64, count: u64, taxonomy: &Taxonomy, config: SynthConfig) -> Vec<Layout> {
    (0..count).map(|i| synth_layout(seed, i, taxonomy, config)).collect()
}
