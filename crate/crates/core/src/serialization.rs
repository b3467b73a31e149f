//! Token serialization of layouts.
//!
//! Every element is written as
//!
//! ```text
//! <|cat_start|> c <|cat_end|> <|box_start|> 0x 1y 2w 3h <|box_end|>
//! ```
//!
//! where each coordinate is one atomic role-prefixed token (`R0_000` ..
//! `R3_999`, printed as `0000` .. `3999`). A layout is its elements in reading
//! order followed by `<|eos|>`. Prompts prepend a header of key/value tokens
//! and a condition list of partial element frames.

use std::collections::HashMap;
use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layout::{CategoryId, DocType, Element, Layout, Page, QBBox, BINS};
use crate::tasks::{ConditionList, ConditionTuple};
use crate::taxonomy::Taxonomy;

pub type TokenId = u32;

const SPECIAL_COUNT: u32 = 6;
const COORD_COUNT: u32 = 4 * BINS as u32;
const KEY_COUNT: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Special {
    CatStart = 0,
    CatEnd = 1,
    BoxStart = 2,
    BoxEnd = 3,
    Sep = 4,
    Eos = 5,
}

impl Special {
    const ALL: [Special; 6] = [
        Special::CatStart,
        Special::CatEnd,
        Special::BoxStart,
        Special::BoxEnd,
        Special::Sep,
        Special::Eos,
    ];

    fn text(self) -> &'static str {
        match self {
            Special::CatStart => "<|cat_start|>",
            Special::CatEnd => "<|cat_end|>",
            Special::BoxStart => "<|box_start|>",
            Special::BoxEnd => "<|box_end|>",
            Special::Sep => "<|sep|>",
            Special::Eos => "<|eos|>",
        }
    }
}

/// Keys of the prompt header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeaderKey {
    DocType = 0,
    Width = 1,
    Height = 2,
    Count = 3,
    Categories = 4,
}

impl HeaderKey {
    const ALL: [HeaderKey; 5] = [
        HeaderKey::DocType,
        HeaderKey::Width,
        HeaderKey::Height,
        HeaderKey::Count,
        HeaderKey::Categories,
    ];

    fn text(self) -> &'static str {
        match self {
            HeaderKey::DocType => "<|doc|>",
            HeaderKey::Width => "<|width|>",
            HeaderKey::Height => "<|height|>",
            HeaderKey::Count => "<|count|>",
            HeaderKey::Categories => "<|cats|>",
        }
    }
}

/// Decoded meaning of a token id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    Special(Special),
    Category(CategoryId),
    Coord { role: u8, value: u16 },
    Key(HeaderKey),
    Doc(DocType),
}

/// Token inventory for one taxonomy.
///
/// Ids are laid out contiguously: 6 specials, one token per label, 4000
/// coordinate tokens, then 5 header keys and 6 document-type tokens. The
/// element grammar uses only the first `6 + labels + 4000` ids.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    labels: Vec<String>,
    lookup: HashMap<String, TokenId>,
    hash: String,
}

impl Vocabulary {
    pub fn new(taxonomy: &Taxonomy) -> Self {
        let labels = taxonomy.labels().to_vec();
        let mut lookup = HashMap::new();
        for s in Special::ALL {
            lookup.insert(s.text().to_string(), s as TokenId);
        }
        for (i, l) in labels.iter().enumerate() {
            lookup.insert(l.clone(), SPECIAL_COUNT + i as TokenId);
        }
        let header_base = SPECIAL_COUNT + labels.len() as TokenId + COORD_COUNT;
        for k in HeaderKey::ALL {
            lookup.insert(k.text().to_string(), header_base + k as TokenId);
        }
        for d in DocType::ALL {
            lookup.insert(format!("<|{}|>", d.as_str()), header_base + KEY_COUNT + d.index() as TokenId);
        }
        let mut hasher = Sha256::new();
        hasher.update(b"doclayout-vocab-v1\n");
        for l in &labels {
            hasher.update(l.as_bytes());
            hasher.update(b"\n");
        }
        let hash = hex::encode(&hasher.finalize()[..16]);
        Self { labels, lookup, hash }
    }

    /// Size of the element vocabulary: `6 + labels + 4000`.
    pub fn element_size(&self) -> usize {
        SPECIAL_COUNT as usize + self.labels.len() + COORD_COUNT as usize
    }

    /// Size including header tokens.
    pub fn len(&self) -> usize {
        self.element_size() + KEY_COUNT as usize + DocType::ALL.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    /// Stable digest of the label inventory.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn special(&self, s: Special) -> TokenId {
        s as TokenId
    }

    pub fn category(&self, c: CategoryId) -> Result<TokenId> {
        if c.index() < self.labels.len() {
            Ok(SPECIAL_COUNT + TokenId::from(c.0))
        } else {
            Err(Error::UnknownLabel {
                label: format!("#{}", c.0),
                index: None,
            })
        }
    }

    /// First category token id; category tokens are contiguous.
    pub fn category_base(&self) -> TokenId {
        SPECIAL_COUNT
    }

    pub fn coord_base(&self) -> TokenId {
        SPECIAL_COUNT + self.labels.len() as TokenId
    }

    pub fn coord(&self, role: u8, value: u16) -> TokenId {
        debug_assert!(role < 4 && value < BINS);
        self.coord_base() + TokenId::from(role) * TokenId::from(BINS) + TokenId::from(value)
    }

    fn header_base(&self) -> TokenId {
        self.coord_base() + COORD_COUNT
    }

    pub fn key(&self, k: HeaderKey) -> TokenId {
        self.header_base() + k as TokenId
    }

    pub fn doc_type(&self, d: DocType) -> TokenId {
        self.header_base() + KEY_COUNT + d.index() as TokenId
    }

    pub fn token(&self, id: TokenId) -> Option<Token> {
        if id < SPECIAL_COUNT {
            return Some(Token::Special(Special::ALL[id as usize]));
        }
        let cb = self.coord_base();
        if id < cb {
            return Some(Token::Category(CategoryId((id - SPECIAL_COUNT) as u16)));
        }
        let hb = self.header_base();
        if id < hb {
            let off = id - cb;
            return Some(Token::Coord {
                role: (off / TokenId::from(BINS)) as u8,
                value: (off % TokenId::from(BINS)) as u16,
            });
        }
        let off = id - hb;
        if off < KEY_COUNT {
            return Some(Token::Key(HeaderKey::ALL[off as usize]));
        }
        DocType::ALL.get((off - KEY_COUNT) as usize).copied().map(Token::Doc)
    }

    pub fn text(&self, id: TokenId) -> String {
        match self.token(id) {
            Some(Token::Special(s)) => s.text().to_string(),
            Some(Token::Category(c)) => self.labels[c.index()].clone(),
            Some(Token::Coord { role, value }) => format!("{role}{value:03}"),
            Some(Token::Key(k)) => k.text().to_string(),
            Some(Token::Doc(d)) => format!("<|{}|>", d.as_str()),
            None => format!("<|unk:{id}|>"),
        }
    }

    pub fn parse_token(&self, text: &str) -> Result<TokenId> {
        if let Some(&id) = self.lookup.get(text) {
            return Ok(id);
        }
        let b = text.as_bytes();
        if b.len() == 4 && b.iter().all(u8::is_ascii_digit) && b[0] <= b'3' {
            let role = b[0] - b'0';
            let value: u16 = text[1..].parse().expect("three ascii digits");
            return Ok(self.coord(role, value));
        }
        Err(Error::UnknownLabel {
            label: text.to_string(),
            index: None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(pub Vec<TokenId>);

impl TokenSequence {
    pub fn tokens(&self) -> &[TokenId] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Space-joined textual form.
    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        self.0.iter().map(|&t| vocab.text(t)).collect::<Vec<_>>().join(" ")
    }

    pub fn from_text(text: &str, vocab: &Vocabulary) -> Result<Self> {
        text.split_whitespace()
            .map(|t| vocab.parse_token(t))
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

pub fn encode_layout(layout: &Layout, vocab: &Vocabulary) -> Result<TokenSequence> {
    let mut out = Vec::with_capacity(9 * layout.len() + 1);
    for (i, e) in layout.elements().iter().enumerate() {
        let cat = vocab.category(e.category).map_err(|_| Error::UnknownLabel {
            label: format!("#{}", e.category.0),
            index: Some(i),
        })?;
        push_element(&mut out, vocab, cat, e.quantized());
    }
    out.push(vocab.special(Special::Eos));
    Ok(TokenSequence(out))
}

fn push_element(out: &mut Vec<TokenId>, vocab: &Vocabulary, cat: TokenId, q: QBBox) {
    out.extend([
        vocab.special(Special::CatStart),
        cat,
        vocab.special(Special::CatEnd),
        vocab.special(Special::BoxStart),
        vocab.coord(0, q.qx),
        vocab.coord(1, q.qy),
        vocab.coord(2, q.qw),
        vocab.coord(3, q.qh),
        vocab.special(Special::BoxEnd),
    ]);
}

/// Position inside the element grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GrammarState {
    ExpectCatStartOrEos,
    ExpectCat,
    ExpectCatEnd,
    ExpectBoxStart,
    ExpectX,
    ExpectY,
    ExpectW,
    ExpectH,
    ExpectBoxEnd,
    Done,
}

impl GrammarState {
    /// Coordinate role sampled in this state, if any.
    pub fn role(self) -> Option<u8> {
        match self {
            GrammarState::ExpectX => Some(0),
            GrammarState::ExpectY => Some(1),
            GrammarState::ExpectW => Some(2),
            GrammarState::ExpectH => Some(3),
            _ => None,
        }
    }

    /// Whether `token` is admissible here. Zero extents are never admissible.
    pub fn accepts(self, token: Token) -> bool {
        use GrammarState::*;
        match (self, token) {
            (ExpectCatStartOrEos, Token::Special(Special::CatStart | Special::Eos)) => true,
            (ExpectCat, Token::Category(_)) => true,
            (ExpectCatEnd, Token::Special(Special::CatEnd)) => true,
            (ExpectBoxStart, Token::Special(Special::BoxStart)) => true,
            (ExpectBoxEnd, Token::Special(Special::BoxEnd)) => true,
            (s, Token::Coord { role, value }) => match s.role() {
                Some(r) => r == role && (role < 2 || value > 0),
                None => false,
            },
            _ => false,
        }
    }

    pub fn next(self, token: Token) -> GrammarState {
        use GrammarState::*;
        match self {
            ExpectCatStartOrEos => match token {
                Token::Special(Special::Eos) => Done,
                _ => ExpectCat,
            },
            ExpectCat => ExpectCatEnd,
            ExpectCatEnd => ExpectBoxStart,
            ExpectBoxStart => ExpectX,
            ExpectX => ExpectY,
            ExpectY => ExpectW,
            ExpectW => ExpectH,
            ExpectH => ExpectBoxEnd,
            ExpectBoxEnd => ExpectCatStartOrEos,
            Done => Done,
        }
    }

    pub fn describe(self) -> &'static str {
        use GrammarState::*;
        match self {
            ExpectCatStartOrEos => "<|cat_start|> or <|eos|>",
            ExpectCat => "a category label",
            ExpectCatEnd => "<|cat_end|>",
            ExpectBoxStart => "<|box_start|>",
            ExpectX => "role 0 coordinate (0000..0999)",
            ExpectY => "role 1 coordinate (1000..1999)",
            ExpectW => "role 2 coordinate (2001..2999)",
            ExpectH => "role 3 coordinate (3001..3999)",
            ExpectBoxEnd => "<|box_end|>",
            Done => "end of sequence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub index: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "token {}: {}", self.index, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub layout: Layout,
    pub diagnostics: Vec<Diagnostic>,
}

/// Collects one element frame at a time.
#[derive(Default)]
struct Partial {
    category: Option<CategoryId>,
    coords: [u16; 4],
}

/// Parses an element sequence back into a layout on `page`.
pub fn decode_layout(seq: &TokenSequence, vocab: &Vocabulary, mode: DecodeMode, page: &Page) -> Result<Decoded> {
    let tokens = seq.tokens();
    let mut state = GrammarState::ExpectCatStartOrEos;
    let mut partial = Partial::default();
    let mut elements = Vec::new();
    let mut diagnostics = Vec::new();
    let mut i = 0;

    while i < tokens.len() {
        if state == GrammarState::Done {
            let message = format!("{} trailing token(s) after <|eos|>", tokens.len() - i);
            match mode {
                DecodeMode::Strict => {
                    return Err(Error::Parse {
                        index: i,
                        expected: "end of sequence".into(),
                        found: vocab.text(tokens[i]),
                    })
                }
                DecodeMode::Lenient => {
                    diagnostics.push(Diagnostic { index: i, message });
                    break;
                }
            }
        }
        let tok = vocab.token(tokens[i]);
        match tok.filter(|&t| state.accepts(t)) {
            Some(t) => {
                match t {
                    Token::Category(c) => partial.category = Some(c),
                    Token::Coord { role, value } => partial.coords[role as usize] = value,
                    Token::Special(Special::BoxEnd) => {
                        let [qx, qy, qw, qh] = partial.coords;
                        let q = QBBox::new(qx, qy, qw, qh)?;
                        let category = partial.category.take().expect("category precedes box");
                        elements.push(Element::new(category, q.to_bbox()));
                    }
                    _ => {}
                }
                state = state.next(t);
                i += 1;
            }
            None => {
                if mode == DecodeMode::Strict {
                    return Err(Error::Parse {
                        index: i,
                        expected: state.describe().into(),
                        found: vocab.text(tokens[i]),
                    });
                }
                diagnostics.push(Diagnostic {
                    index: i,
                    message: format!("expected {}, found {}; element dropped", state.describe(), vocab.text(tokens[i])),
                });
                partial = Partial::default();
                // Resume at the next frame start; the offending token may itself be one.
                let cat_start = vocab.special(Special::CatStart);
                let eos = vocab.special(Special::Eos);
                let from = if tokens[i] == cat_start && state != GrammarState::ExpectCatStartOrEos {
                    i
                } else {
                    i + 1
                };
                match tokens[from.min(tokens.len())..]
                    .iter()
                    .position(|&t| t == cat_start || t == eos)
                {
                    Some(off) => {
                        i = from + off;
                        state = GrammarState::ExpectCatStartOrEos;
                    }
                    None => {
                        i = tokens.len();
                        state = GrammarState::ExpectCatStartOrEos;
                    }
                }
            }
        }
    }

    if state != GrammarState::Done {
        match mode {
            DecodeMode::Strict => {
                return Err(Error::Parse {
                    index: tokens.len(),
                    expected: state.describe().into(),
                    found: "end of input".into(),
                })
            }
            DecodeMode::Lenient => {
                if state != GrammarState::ExpectCatStartOrEos {
                    diagnostics.push(Diagnostic {
                        index: tokens.len(),
                        message: "truncated element dropped".into(),
                    });
                }
                diagnostics.push(Diagnostic {
                    index: tokens.len(),
                    message: "missing <|eos|>".into(),
                });
            }
        }
    }
    let layout = Layout::new(page.clone(), elements)?;
    Ok(Decoded { layout, diagnostics })
}

/// Page-level prompt header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptHeader {
    pub doc_type: DocType,
    pub canvas_w: u32,
    pub canvas_h: u32,
    pub bbox_count: u32,
    pub valid_categories: Vec<CategoryId>,
}

/// Integers are written as base-1000 limbs, most significant first, each limb
/// a role-0 coordinate token.
fn push_integer(out: &mut Vec<TokenId>, vocab: &Vocabulary, mut v: u32) {
    let mut limbs = Vec::new();
    loop {
        limbs.push((v % 1000) as u16);
        v /= 1000;
        if v == 0 {
            break;
        }
    }
    out.extend(limbs.iter().rev().map(|&l| vocab.coord(0, l)));
}

pub fn encode_header(header: &PromptHeader, vocab: &Vocabulary) -> Result<Vec<TokenId>> {
    if header.bbox_count == 0 {
        return Err(Error::ConditionMismatch("bbox count must be at least 1".into()));
    }
    let mut out = vec![vocab.key(HeaderKey::DocType), vocab.doc_type(header.doc_type)];
    out.push(vocab.key(HeaderKey::Width));
    push_integer(&mut out, vocab, header.canvas_w);
    out.push(vocab.key(HeaderKey::Height));
    push_integer(&mut out, vocab, header.canvas_h);
    out.push(vocab.key(HeaderKey::Count));
    push_integer(&mut out, vocab, header.bbox_count);
    out.push(vocab.key(HeaderKey::Categories));
    for &c in &header.valid_categories {
        out.push(vocab.category(c)?);
    }
    Ok(out)
}

/// Checks a condition list against the header's element count.
pub fn check_condition(header: &PromptHeader, condition: &ConditionList) -> Result<()> {
    let n = condition.len();
    let count = header.bbox_count as usize;
    if n > count {
        return Err(Error::ConditionMismatch(format!(
            "{n} condition tuples for {count} boxes"
        )));
    }
    if condition.pattern().is_none() {
        return Err(Error::ConditionMismatch("condition tuples mix field groups".into()));
    }
    if condition.tuples().iter().any(|t| !t.is_complete()) && n != count {
        return Err(Error::ConditionMismatch(format!(
            "partial conditions must cover every box: {n} tuples for {count} boxes"
        )));
    }
    if condition.tuples().iter().any(ConditionTuple::is_empty) {
        return Err(Error::ConditionMismatch("empty condition tuple".into()));
    }
    Ok(())
}

/// Header, separator, condition frames, separator.
pub fn build_prompt(header: &PromptHeader, condition: &ConditionList, vocab: &Vocabulary) -> Result<TokenSequence> {
    check_condition(header, condition)?;
    let mut out = encode_header(header, vocab)?;
    let sep = vocab.special(Special::Sep);
    out.push(sep);
    for (i, t) in condition.tuples().iter().enumerate() {
        if let Some(c) = t.category {
            let cat = vocab.category(c).map_err(|_| Error::UnknownLabel {
                label: format!("#{}", c.0),
                index: Some(i),
            })?;
            out.extend([vocab.special(Special::CatStart), cat, vocab.special(Special::CatEnd)]);
        }
        if t.position.is_some() || t.size.is_some() {
            out.push(vocab.special(Special::BoxStart));
            if let Some((x, y)) = t.position {
                out.extend([vocab.coord(0, x), vocab.coord(1, y)]);
            }
            if let Some((w, h)) = t.size {
                out.extend([vocab.coord(2, w), vocab.coord(3, h)]);
            }
            out.push(vocab.special(Special::BoxEnd));
        }
    }
    out.push(sep);
    Ok(TokenSequence(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::BBox;
    use crate::taxonomy::Taxonomy;

    fn vocab() -> (Taxonomy, Vocabulary) {
        let t = Taxonomy::default_coarse();
        let v = Vocabulary::new(&t);
        (t, v)
    }

    fn page() -> Page {
        Page::new("p", DocType::Academic, 1000, 1000)
    }

    fn layout(t: &Taxonomy, els: &[(&str, f64, f64, f64, f64)]) -> Layout {
        Layout::new(
            page(),
            els.iter()
                .map(|&(c, x, y, w, h)| Element::new(t.id(c).unwrap(), BBox::new(x, y, w, h).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn vocabulary_size_and_layout() {
        let (t, v) = vocab();
        assert_eq!(v.element_size(), 6 + t.len() + 4000);
        assert_eq!(v.len(), v.element_size() + 11);
        for id in 0..v.len() as TokenId {
            let text = v.text(id);
            assert_eq!(v.parse_token(&text).unwrap(), id, "{text}");
        }
        assert_eq!(v.token(v.len() as TokenId), None);
    }

    #[test]
    fn vocabulary_hash_tracks_labels() {
        let a = Vocabulary::new(&Taxonomy::default_coarse());
        let b = Vocabulary::new(&Taxonomy::default_coarse());
        let c = Vocabulary::new(&Taxonomy::from_json(r#"["text", "title"]"#).unwrap());
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn encode_single_element() {
        let (t, v) = vocab();
        let seq = encode_layout(&layout(&t, &[("text", 0.1, 0.2, 0.5, 0.05)]), &v).unwrap();
        assert_eq!(
            seq.to_text(&v),
            "<|cat_start|> text <|cat_end|> <|box_start|> 0100 1200 2500 3050 <|box_end|> <|eos|>"
        );
        let expected = vec![
            0,
            v.category(t.id("text").unwrap()).unwrap(),
            1,
            2,
            v.coord(0, 100),
            v.coord(1, 200),
            v.coord(2, 500),
            v.coord(3, 50),
            3,
            5,
        ];
        assert_eq!(seq.tokens(), expected.as_slice());
        assert_eq!(TokenSequence::from_text(&seq.to_text(&v), &v).unwrap(), seq);
    }

    #[test]
    fn encode_length_and_unknown_category() {
        let (t, v) = vocab();
        let l = layout(&t, &[("text", 0.1, 0.2, 0.5, 0.05), ("title", 0.0, 0.0, 1.0, 0.1)]);
        assert_eq!(encode_layout(&l, &v).unwrap().len(), 19);
        let bad = Layout::new(page(), vec![Element::new(CategoryId(77), BBox::new(0.0, 0.0, 0.1, 0.1).unwrap())]).unwrap();
        assert!(matches!(encode_layout(&bad, &v), Err(Error::UnknownLabel { index: Some(0), .. })));
    }

    #[test]
    fn strict_round_trip() {
        let (t, v) = vocab();
        let l = layout(
            &t,
            &[("title", 0.1, 0.05, 0.8, 0.1), ("text", 0.1, 0.2, 0.4, 0.7), ("image", 0.5, 0.2, 0.5, 0.7)],
        );
        let d = decode_layout(&encode_layout(&l, &v).unwrap(), &v, DecodeMode::Strict, &page()).unwrap();
        assert!(d.diagnostics.is_empty());
        for (a, b) in l.elements().iter().zip(d.layout.elements()) {
            assert_eq!(a.category, b.category);
            for (p, q) in [
                (a.bbox.x(), b.bbox.x()),
                (a.bbox.y(), b.bbox.y()),
                (a.bbox.w(), b.bbox.w()),
                (a.bbox.h(), b.bbox.h()),
            ] {
                assert!((p - q).abs() <= 0.0005 + 1e-12);
            }
        }
    }

    #[test]
    fn strict_rejects_wrong_role() {
        let (t, v) = vocab();
        let mut seq = encode_layout(&layout(&t, &[("text", 0.1, 0.2, 0.5, 0.05)]), &v).unwrap();
        seq.0[4] = v.coord(1, 100);
        match decode_layout(&seq, &v, DecodeMode::Strict, &page()) {
            Err(Error::Parse { index, expected, .. }) => {
                assert_eq!(index, 4);
                assert!(expected.contains("role 0"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn strict_rejects_zero_extent_trailing_and_truncation() {
        let (t, v) = vocab();
        let good = encode_layout(&layout(&t, &[("text", 0.1, 0.2, 0.5, 0.05)]), &v).unwrap();
        let mut zero = good.clone();
        zero.0[6] = v.coord(2, 0);
        assert!(matches!(decode_layout(&zero, &v, DecodeMode::Strict, &page()), Err(Error::Parse { index: 6, .. })));

        let mut trailing = good.clone();
        trailing.0.push(0);
        assert!(decode_layout(&trailing, &v, DecodeMode::Strict, &page()).is_err());

        let truncated = TokenSequence(good.0[..5].to_vec());
        assert!(matches!(
            decode_layout(&truncated, &v, DecodeMode::Strict, &page()),
            Err(Error::Parse { index: 5, .. })
        ));

        let empty = TokenSequence(vec![5]);
        assert!(matches!(decode_layout(&empty, &v, DecodeMode::Strict, &page()), Err(Error::EmptyLayout)));
    }

    #[test]
    fn lenient_drops_frame_missing_box_end() {
        let (t, v) = vocab();
        let l = layout(
            &t,
            &[("title", 0.1, 0.05, 0.8, 0.1), ("text", 0.1, 0.2, 0.4, 0.7), ("image", 0.5, 0.2, 0.5, 0.7)],
        );
        let mut seq = encode_layout(&l, &v).unwrap();
        seq.0.remove(17); // BOX_END of the second element
        assert!(decode_layout(&seq, &v, DecodeMode::Strict, &page()).is_err());
        let d = decode_layout(&seq, &v, DecodeMode::Lenient, &page()).unwrap();
        assert_eq!(d.diagnostics.len(), 1);
        let cats: Vec<_> = d.layout.categories().collect();
        assert_eq!(cats, [t.id("title").unwrap(), t.id("image").unwrap()]);
    }

    #[test]
    fn lenient_single_deletion_loses_at_most_one_element() {
        let (t, v) = vocab();
        let l = layout(
            &t,
            &[
                ("title", 0.1, 0.05, 0.8, 0.1),
                ("text", 0.1, 0.2, 0.4, 0.7),
                ("image", 0.5, 0.2, 0.5, 0.7),
                ("caption", 0.5, 0.9, 0.5, 0.05),
            ],
        );
        let seq = encode_layout(&l, &v).unwrap();
        for k in 0..seq.len() {
            let mut s = seq.clone();
            s.0.remove(k);
            let d = decode_layout(&s, &v, DecodeMode::Lenient, &page()).unwrap();
            assert!(d.layout.len() + 1 >= l.len(), "deleting token {k}");
        }
    }

    #[test]
    fn lenient_with_nothing_recoverable() {
        let (_, v) = vocab();
        let seq = TokenSequence(vec![2, 3, 4]);
        assert!(matches!(decode_layout(&seq, &v, DecodeMode::Lenient, &page()), Err(Error::EmptyLayout)));
    }

    fn header(n: u32) -> PromptHeader {
        PromptHeader {
            doc_type: DocType::Newspaper,
            canvas_w: 1000,
            canvas_h: 1000,
            bbox_count: n,
            valid_categories: vec![CategoryId(0), CategoryId(1)],
        }
    }

    #[test]
    fn prompt_ucond_has_empty_condition_segment() {
        let (_, v) = vocab();
        let p = build_prompt(&header(12), &ConditionList::default(), &v).unwrap();
        let toks = p.tokens();
        assert_eq!(&toks[toks.len() - 2..], &[4, 4]);
        assert_eq!(
            p.to_text(&v),
            "<|doc|> <|newspaper|> <|width|> 0001 0000 <|height|> 0001 0000 <|count|> 0012 <|cats|> text title <|sep|> <|sep|>"
        );
    }

    #[test]
    fn prompt_categories_only() {
        let (t, v) = vocab();
        let cats = ["title", "text", "text"].map(|l| t.id(l).unwrap());
        let cond = ConditionList::new(
            cats.iter()
                .map(|&c| ConditionTuple { category: Some(c), size: None, position: None })
                .collect(),
        );
        let p = build_prompt(&header(3), &cond, &v).unwrap();
        let text = p.to_text(&v);
        assert!(text.ends_with(
            "<|sep|> <|cat_start|> title <|cat_end|> <|cat_start|> text <|cat_end|> <|cat_start|> text <|cat_end|> <|sep|>"
        ));
        assert_eq!(build_prompt(&header(3), &cond, &v).unwrap(), p);
    }

    #[test]
    fn prompt_category_and_size() {
        let (t, v) = vocab();
        let cond = ConditionList::new(vec![ConditionTuple {
            category: Some(t.id("title").unwrap()),
            size: Some((500, 100)),
            position: None,
        }]);
        let p = build_prompt(&header(1), &cond, &v).unwrap();
        let toks = p.tokens();
        let tail = &toks[toks.len() - 8..toks.len() - 1];
        assert_eq!(
            tail,
            &[0, v.category(t.id("title").unwrap()).unwrap(), 1, 2, v.coord(2, 500), v.coord(3, 100), 3]
        );
    }

    #[test]
    fn prompt_cardinality_mismatch() {
        let (_, v) = vocab();
        let tuple = ConditionTuple { category: Some(CategoryId(0)), size: None, position: None };
        let cond = ConditionList::new(vec![tuple; 2]);
        assert!(matches!(build_prompt(&header(3), &cond, &v), Err(Error::ConditionMismatch(_))));
        assert!(matches!(build_prompt(&header(1), &cond, &v), Err(Error::ConditionMismatch(_))));
        assert!(matches!(build_prompt(&header(0), &ConditionList::default(), &v), Err(Error::ConditionMismatch(_))));
    }
}
