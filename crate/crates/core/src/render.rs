//! SVG rendering of layouts as colored boxes.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::layout::Layout;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderStyle {
    /// One fill color per category id, `#rrggbb`.
    pub palette: Vec<String>,
    pub labels: Vec<String>,
    pub stroke_width: f64,
    pub show_labels: bool,
    /// Canvas width in pixels; height follows the page aspect ratio.
    pub width_px: f64,
}

impl RenderStyle {
    pub fn new(taxonomy: &Taxonomy) -> Self {
        Self {
            palette: taxonomy.labels().iter().map(|l| label_color(l)).collect(),
            labels: taxonomy.labels().to_vec(),
            stroke_width: 1.0,
            show_labels: true,
            width_px: 400.0,
        }
    }

    fn color(&self, index: usize) -> &str {
        self.palette.get(index).map_or("#808080", String::as_str)
    }
}

/// Stable color for a label: hue from its digest at fixed saturation and lightness.
pub fn label_color(label: &str) -> String {
    let digest = Sha256::digest(label.as_bytes());
    let hue = f64::from(u16::from_be_bytes([digest[0], digest[1]])) / 65536.0 * 360.0;
    let (r, g, b) = hsl_to_rgb(hue, 0.65, 0.55);
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn hsl_to_rgb(h: f64, s: f64, l: f64) -> (u8, u8, u8) {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (to(r), to(g), to(b))
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn page_size(layout: &Layout, style: &RenderStyle) -> (f64, f64) {
    let (cw, ch) = layout.canvas();
    (style.width_px, style.width_px * f64::from(ch) / f64::from(cw))
}

fn write_page(out: &mut String, layout: &Layout, style: &RenderStyle, indent: &str) {
    let (w, h) = page_size(layout, style);
    let _ = writeln!(
        out,
        r##"{indent}<rect class="page" x="0" y="0" width="{w:.2}" height="{h:.2}" fill="#ffffff" stroke="#000000" stroke-width="{:.2}"/>"##,
        style.stroke_width
    );
    for e in layout.elements() {
        let b = &e.bbox;
        let color = style.color(e.category.index());
        let label = style
            .labels
            .get(e.category.index())
            .cloned()
            .unwrap_or_else(|| format!("#{}", e.category.0));
        let (x, y) = (b.x() * w, b.y() * h);
        let _ = writeln!(
            out,
            r#"{indent}<rect class="element" data-category="{}" x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.5" stroke="{color}" stroke-width="{:.2}"/>"#,
            escape(&label),
            b.w() * w,
            b.h() * h,
            style.stroke_width
        );
        if style.show_labels {
            let _ = writeln!(
                out,
                r##"{indent}<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" fill="#000000">{}</text>"##,
                x + 2.0,
                y + 11.0,
                escape(&label)
            );
        }
    }
}

/// Standalone SVG document with one `rect.element` per element, painted in
/// reading order.
pub fn render_svg(layout: &Layout, style: &RenderStyle) -> String {
    let (w, h) = page_size(layout, style);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.2}" height="{h:.2}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(out, "  <title>{}</title>", escape(layout.id()));
    write_page(&mut out, layout, style, "  ");
    out.push_str("</svg>\n");
    out
}

/// All layouts on one grid sheet, `columns` pages per row.
pub fn render_sheet(layouts: &[Layout], style: &RenderStyle, columns: usize) -> String {
    let columns = columns.max(1);
    let gap = 10.0;
    let row_heights: Vec<f64> = layouts
        .chunks(columns)
        .map(|row| row.iter().map(|l| page_size(l, style).1).fold(0.0, f64::max))
        .collect();
    let width = columns.min(layouts.len().max(1)) as f64 * (style.width_px + gap) + gap;
    let height = row_heights.iter().map(|h| h + gap).sum::<f64>() + gap;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.2}" height="{height:.2}" viewBox="0 0 {width:.2} {height:.2}">"#
    );
    let mut top = gap;
    for (r, row) in layouts.chunks(columns).enumerate() {
        for (c, l) in row.iter().enumerate() {
            let left = gap + c as f64 * (style.width_px + gap);
            let _ = writeln!(out, r#"  <g class="sheet-page" id="{}" transform="translate({left:.2} {top:.2})">"#, escape(l.id()));
            write_page(&mut out, l, style, "    ");
            out.push_str("  </g>\n");
        }
        top += row_heights[r] + gap;
    }
    out.push_str("</svg>\n");
    out
}
