//! Grammar-constrained n-gram baseline generator and a histogram-snap refiner.
//!
//! Training sequences are `[doc type, R0_count] ++ encode_layout(..)`. The
//! model predicts every token, but its context is built from content tokens
//! only (labels, coordinates and the two prefix tokens); frame delimiters
//! carry no information because the grammar fixes them.
//!
//! Decoding walks the element grammar. At each step the proposal is masked to
//! grammar-valid tokens, and condition tuples force their known fields.
//! Forced steps and greedy steps draw nothing from the RNG.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{CategoryId, Element, Layout, Page, QBBox, BINS};
pub use crate::serialization::GrammarState;
use crate::serialization::{
    check_condition, decode_layout, encode_layout, DecodeMode, PromptHeader, Special, Token, TokenId, TokenSequence,
    Vocabulary,
};
use crate::tasks::{ConditionList, TaskInstance, TaskKind};

pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_DELTA: u16 = 30;

/// Left padding for contexts shorter than the model order.
pub const BOS: TokenId = TokenId::MAX;

const FORMAT: &str = "doclayout-ngram";
const FORMAT_VERSION: u32 = 1;

/// One interpolation term: `(c + alpha) / (total + alpha * vocab)`.
pub fn smoothed(count: u64, total: u64, alpha: f64, vocab: usize) -> f64 {
    (count as f64 + alpha) / (total as f64 + alpha * vocab as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub order: usize,
    pub alpha: f64,
    /// Interpolation weights for context lengths `0..order`; uniform if `None`.
    pub lambdas: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            alpha: DEFAULT_ALPHA,
            lambdas: None,
        }
    }
}

impl TrainConfig {
    /// Checks order, smoothing and interpolation weights.
    pub fn validate(&self) -> Result<()> {
        self.resolved_lambdas().map(|_| ())
    }

    fn resolved_lambdas(&self) -> Result<Vec<f64>> {
        if self.order < 2 {
            return Err(Error::Config(format!("order must be at least 2, got {}", self.order)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        match &self.lambdas {
            None => Ok(vec![1.0 / self.order as f64; self.order]),
            Some(l) => {
                if l.len() != self.order || l.iter().any(|v| v.is_nan() || *v < 0.0) || (l.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "need {} non-negative interpolation weights summing to 1",
                        self.order
                    )));
                }
                Ok(l.clone())
            }
        }
    }
}

/// `[doc type, R0_min(count, 999)] ++ encode_layout(layout)`.
pub fn training_sequence(layout: &Layout, vocab: &Vocabulary) -> Result<TokenSequence> {
    let mut out = prefix(vocab, layout.doc_type(), layout.len());
    out.extend(encode_layout(layout, vocab)?.0);
    Ok(TokenSequence(out))
}

fn prefix(vocab: &Vocabulary, doc: crate::layout::DocType, count: usize) -> Vec<TokenId> {
    vec![vocab.doc_type(doc), vocab.coord(0, count.min(usize::from(BINS) - 1) as u16)]
}

fn is_content(vocab: &Vocabulary, t: TokenId) -> bool {
    !matches!(
        vocab.token(t),
        Some(Token::Special(
            Special::CatStart | Special::CatEnd | Special::BoxStart | Special::BoxEnd | Special::Sep
        ))
    )
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// Per-(role, category) counts over the 1000 quantized values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoordHistogram {
    bins: BTreeMap<(u8, u16), Vec<u64>>,
}

impl CoordHistogram {
    pub fn add(&mut self, role: u8, category: CategoryId, value: u16) {
        self.bins
            .entry((role, category.0))
            .or_insert_with(|| vec![0; usize::from(BINS)])[usize::from(value)] += 1;
    }

    pub fn counts(&self, role: u8, category: CategoryId) -> Option<&[u64]> {
        self.bins.get(&(role, category.0)).map(Vec::as_slice)
    }

    pub fn merge(&mut self, other: &CoordHistogram) {
        for (k, v) in &other.bins {
            let dst = self.bins.entry(*k).or_insert_with(|| vec![0; usize::from(BINS)]);
            for (d, s) in dst.iter_mut().zip(v) {
                *d += s;
            }
        }
    }

    /// Most frequent value in `[v - delta, v + delta] ∩ [lo, 999]`; ties go
    /// to the value nearest `v`, then the smaller one. Unseen keys and empty
    /// windows leave `v` unchanged.
    pub fn snap(&self, role: u8, category: CategoryId, v: u16, delta: u16, lo: u16) -> u16 {
        let Some(counts) = self.counts(role, category) else {
            return v;
        };
        let start = v.saturating_sub(delta).max(lo);
        let end = v.saturating_add(delta).min(BINS - 1);
        let mut best: Option<(u64, u16, u16)> = None;
        for u in start..=end {
            let c = counts[usize::from(u)];
            if c == 0 {
                continue;
            }
            let dist = u.abs_diff(v);
            let better = match best {
                None => true,
                Some((bc, bd, bu)) => c > bc || (c == bc && (dist < bd || (dist == bd && u < bu))),
            };
            if better {
                best = Some((c, dist, u));
            }
        }
        best.map_or(v, |(_, _, u)| u)
    }

    /// Snaps every quantized coordinate and clamps the result back onto the
    /// page by shrinking extents. Categories and order are unchanged.
    pub fn refine(&self, noisy: &Layout, delta: u16) -> Result<Layout> {
        let elements = noisy
            .elements()
            .iter()
            .map(|e| {
                let q = e.quantized();
                let c = e.category;
                let qx = self.snap(0, c, q.qx, delta, 0);
                let qy = self.snap(1, c, q.qy, delta, 0);
                let qw = self.snap(2, c, q.qw, delta, 1).min(BINS - qx);
                let qh = self.snap(3, c, q.qh, delta, 1).min(BINS - qy);
                Ok(Element::new(c, QBBox::new(qx, qy, qw, qh)?.to_bbox()))
            })
            .collect::<Result<Vec<_>>>()?;
        noisy.with_elements(elements)
    }
}

/// Decoding strategy. `Greedy` takes the argmax (smallest id on ties);
/// `Temperature` samples from `p^(1/tau)`, optionally restricted to the
/// `top_k` most probable tokens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    Greedy,
    Temperature { tau: f64, top_k: Option<usize> },
}

/// What to generate: page header, condition tuples and regime.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub id: String,
    pub kind: TaskKind,
    pub header: PromptHeader,
    pub condition: ConditionList,
}

impl Prompt {
    pub fn from_instance(instance: &TaskInstance) -> Self {
        Self {
            id: instance.target.id().to_string(),
            kind: instance.kind,
            header: instance.header.clone(),
            condition: instance.condition.clone(),
        }
    }

    fn page(&self) -> Page {
        Page::new(self.id.clone(), self.header.doc_type, self.header.canvas_w, self.header.canvas_h)
    }

    /// Checks the condition against the header and the regime's field pattern.
    pub fn validate(&self) -> Result<()> {
        check_condition(&self.header, &self.condition)?;
        let n = self.condition.len();
        let count = self.header.bbox_count as usize;
        let pattern = self.condition.pattern();
        let ok = match self.kind {
            TaskKind::UCond => n == 0,
            TaskKind::CToSp => n == count && pattern == Some((true, false, false)),
            TaskKind::CsToP => n == count && pattern == Some((true, true, false)),
            TaskKind::Completion => n == 0 || pattern == Some((true, true, true)),
            TaskKind::Refinement => n == count && pattern == Some((true, true, true)),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ConditionMismatch(format!(
                "{n} tuples with pattern {pattern:?} do not fit {} with {count} boxes",
                self.kind
            )))
        }
    }
}

/// Interpolated additive-smoothing n-gram model over the full vocabulary.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    lambdas: Vec<f64>,
    vocab_size: usize,
    vocab_hash: String,
    sequences: u64,
    /// `tables[m]` holds contexts of length `m`.
    tables: Vec<HashMap<Box<[TokenId]>, ContextCounts>>,
    histogram: CoordHistogram,
    /// `lambda_0 * c_0(t) / (C_0 + alpha |V|)` per token id.
    unigram: Vec<f64>,
}

impl NGramModel {
    /// Counts `sequences` (in [`training_sequence`] form) in one pass.
    pub fn train<I>(sequences: I, vocab: &Vocabulary, config: &TrainConfig) -> Result<Self>
    where
        I: IntoIterator<Item = TokenSequence>,
    {
        let lambdas = config.resolved_lambdas()?;
        let mut model = Self {
            order: config.order,
            alpha: config.alpha,
            lambdas,
            vocab_size: vocab.len(),
            vocab_hash: vocab.hash().to_string(),
            sequences: 0,
            tables: vec![HashMap::new(); config.order],
            histogram: CoordHistogram::default(),
            unigram: Vec::new(),
        };
        for seq in sequences {
            model.count(&seq, vocab)?;
        }
        if model.sequences == 0 {
            return Err(Error::EmptyCorpus);
        }
        model.finish();
        Ok(model)
    }

    pub fn train_layouts<'a, I>(layouts: I, vocab: &Vocabulary, config: &TrainConfig) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Layout>,
    {
        let seqs = layouts
            .into_iter()
            .map(|l| training_sequence(l, vocab))
            .collect::<Result<Vec<_>>>()?;
        Self::train(seqs, vocab, config)
    }

    fn count(&mut self, seq: &TokenSequence, vocab: &Vocabulary) -> Result<()> {
        let tokens = seq.tokens();
        let bad = |index: usize, expected: &str| Error::Parse {
            index,
            expected: expected.into(),
            found: tokens.get(index).map_or("end of input".into(), |&t| vocab.text(t)),
        };
        match (tokens.first().and_then(|&t| vocab.token(t)), tokens.get(1).and_then(|&t| vocab.token(t))) {
            (Some(Token::Doc(_)), Some(Token::Coord { role: 0, .. })) => {}
            (Some(Token::Doc(_)), _) => return Err(bad(1, "count token")),
            _ => return Err(bad(0, "document type token")),
        }
        let k = self.order;
        let mut history = vec![BOS; k - 1];
        history.extend_from_slice(&tokens[..2]);
        let mut state = GrammarState::ExpectCatStartOrEos;
        let mut category = CategoryId(0);
        for (i, &t) in tokens.iter().enumerate().skip(2) {
            let tok = vocab
                .token(t)
                .filter(|&tok| state.accepts(tok))
                .ok_or_else(|| bad(i, state.describe()))?;
            for m in 0..k {
                let ctx = &history[history.len() - m..];
                let entry = match self.tables[m].get_mut(ctx) {
                    Some(e) => e,
                    None => self.tables[m].entry(ctx.into()).or_default(),
                };
                entry.total += 1;
                *entry.next.entry(t).or_default() += 1;
            }
            match tok {
                Token::Category(c) => category = c,
                Token::Coord { role, value } => self.histogram.add(role, category, value),
                _ => {}
            }
            if is_content(vocab, t) {
                history.push(t);
            }
            state = state.next(tok);
        }
        if state != GrammarState::Done {
            return Err(bad(tokens.len(), state.describe()));
        }
        self.sequences += 1;
        Ok(())
    }

    /// Adds another model's counts. Both must share order, smoothing and vocabulary.
    pub fn merge(&mut self, other: &NGramModel) -> Result<()> {
        if self.vocab_hash != other.vocab_hash {
            return Err(Error::VocabMismatch {
                model: other.vocab_hash.clone(),
                active: self.vocab_hash.clone(),
            });
        }
        if self.order != other.order || self.alpha != other.alpha || self.lambdas != other.lambdas {
            return Err(Error::Config("merged models differ in hyperparameters".into()));
        }
        for (dst, src) in self.tables.iter_mut().zip(&other.tables) {
            for (ctx, counts) in src {
                let e = dst.entry(ctx.clone()).or_default();
                e.total += counts.total;
                for (t, c) in &counts.next {
                    *e.next.entry(*t).or_default() += c;
                }
            }
        }
        self.histogram.merge(&other.histogram);
        self.sequences += other.sequences;
        self.finish();
        Ok(())
    }

    fn finish(&mut self) {
        let mut unigram = vec![0.0; self.vocab_size];
        if let Some(root) = self.tables[0].get(&[][..]) {
            let denom = root.total as f64 + self.alpha * self.vocab_size as f64;
            for (&t, &c) in &root.next {
                if let Some(slot) = unigram.get_mut(t as usize) {
                    *slot = self.lambdas[0] * c as f64 / denom;
                }
            }
        }
        self.unigram = unigram;
    }

    pub fn order(&self) -> usize {
        self.order
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }
    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }
    pub fn sequences(&self) -> u64 {
        self.sequences
    }
    pub fn histogram(&self) -> &CoordHistogram {
        &self.histogram
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.hash() != self.vocab_hash || vocab.len() != self.vocab_size {
            return Err(Error::VocabMismatch {
                model: self.vocab_hash.clone(),
                active: vocab.hash().to_string(),
            });
        }
        Ok(())
    }

    fn window<'h>(&self, history: &'h [TokenId], m: usize) -> &'h [TokenId] {
        let pad = m.saturating_sub(history.len());
        debug_assert!(pad == 0, "history is pre-padded");
        &history[history.len() - m..]
    }

    /// Unmasked interpolated probability of `token` after `history`
    /// (content tokens, most recent last).
    pub fn probability(&self, history: &[TokenId], token: TokenId) -> f64 {
        let v = self.vocab_size;
        let padded = self.padded(history);
        (0..self.order)
            .map(|m| {
                let (c, total) = self.tables[m]
                    .get(self.window(&padded, m))
                    .map_or((0, 0), |e| (e.next.get(&token).copied().unwrap_or(0), e.total));
                self.lambdas[m] * smoothed(c, total, self.alpha, v)
            })
            .sum()
    }

    fn padded(&self, history: &[TokenId]) -> Vec<TokenId> {
        let need = self.order - 1;
        if history.len() >= need {
            history[history.len() - need..].to_vec()
        } else {
            let mut p = vec![BOS; need - history.len()];
            p.extend_from_slice(history);
            p
        }
    }

    /// Probabilities of `candidates` (sorted ascending, deduplicated) after
    /// masking to that set and renormalizing.
    pub fn masked_distribution(&self, history: &[TokenId], candidates: &[TokenId]) -> Vec<f64> {
        let padded = self.padded(history);
        let mut scores = vec![0.0; candidates.len()];
        let v = self.vocab_size as f64;
        let mut base = 0.0;
        for m in 0..self.order {
            let entry = self.tables[m].get(self.window(&padded, m));
            let total = entry.map_or(0, |e| e.total) as f64;
            let denom = total + self.alpha * v;
            base += self.lambdas[m] * self.alpha / denom;
            if m == 0 {
                for (s, &t) in scores.iter_mut().zip(candidates) {
                    *s += self.unigram.get(t as usize).copied().unwrap_or(0.0);
                }
                continue;
            }
            let (Some(e), Some(&lo), Some(&hi)) = (entry, candidates.first(), candidates.last()) else {
                continue;
            };
            let w = self.lambdas[m] / denom;
            for (&t, &c) in e.next.range(lo..=hi) {
                if let Ok(i) = candidates.binary_search(&t) {
                    scores[i] += w * c as f64;
                }
            }
        }
        for s in &mut scores {
            *s += base;
        }
        let z: f64 = scores.iter().sum();
        for s in &mut scores {
            *s /= z;
        }
        scores
    }

    fn choose<R: Rng + ?Sized>(
        &self,
        history: &[TokenId],
        candidates: &[TokenId],
        sampling: Sampling,
        rng: &mut R,
    ) -> Result<TokenId> {
        if candidates.is_empty() {
            return Err(Error::Degenerate("empty valid-token mask".into()));
        }
        if candidates.len() == 1 {
            return Ok(candidates[0]);
        }
        let probs = self.masked_distribution(history, candidates);
        match sampling {
            Sampling::Greedy => {
                let mut best = 0;
                for (i, &p) in probs.iter().enumerate() {
                    if p > probs[best] {
                        best = i;
                    }
                }
                Ok(candidates[best])
            }
            Sampling::Temperature { tau, top_k } => {
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::Config(format!("temperature must be positive, got {tau}")));
                }
                let mut idx: Vec<usize> = (0..candidates.len()).collect();
                if let Some(k) = top_k.filter(|&k| k < idx.len()) {
                    if k == 0 {
                        return Err(Error::Config("top_k must be at least 1".into()));
                    }
                    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
                    idx.truncate(k);
                    idx.sort_unstable();
                }
                let max_ln = idx.iter().map(|&i| probs[i].ln()).fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = idx.iter().map(|&i| ((probs[i].ln() - max_ln) / tau).exp()).collect();
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                for (&i, &w) in idx.iter().zip(&weights) {
                    if u < w {
                        return Ok(candidates[i]);
                    }
                    u -= w;
                }
                Ok(candidates[*idx.last().expect("non-empty")])
            }
        }
    }

    /// Decodes the element token sequence for `prompt` (no prefix, ends in EOS).
    pub fn generate_tokens<R: Rng + ?Sized>(
        &self,
        vocab: &Vocabulary,
        prompt: &Prompt,
        sampling: Sampling,
        rng: &mut R,
    ) -> Result<Vec<TokenId>> {
        self.check_vocab(vocab)?;
        prompt.validate()?;
        if prompt.kind == TaskKind::Refinement {
            return Err(Error::ConditionMismatch("refinement is decoded by the refiner, not by sampling".into()));
        }
        let header = &prompt.header;
        let n = header.bbox_count as usize;
        let mut cats: Vec<TokenId> = header
            .valid_categories
            .iter()
            .map(|&c| vocab.category(c))
            .collect::<Result<_>>()?;
        cats.sort_unstable();
        cats.dedup();
        let coords = |role: u8, lo: u16, hi: u16| -> Vec<TokenId> { (lo..=hi).map(|v| vocab.coord(role, v)).collect() };

        let mut history = prefix(vocab, header.doc_type, n);
        let mut out = Vec::with_capacity(9 * n + 1);
        let mut state = GrammarState::ExpectCatStartOrEos;
        let mut element = 0usize;
        let mut q = [0u16; 4];
        let max = BINS - 1;
        while state != GrammarState::Done {
            let tuple = prompt.condition.tuples().get(element);
            let size = tuple.and_then(|t| t.size);
            let position = tuple.and_then(|t| t.position);
            let token = match state {
                GrammarState::ExpectCatStartOrEos => {
                    vocab.special(if element < n { Special::CatStart } else { Special::Eos })
                }
                GrammarState::ExpectCat => match tuple.and_then(|t| t.category) {
                    Some(c) => vocab.category(c)?,
                    None => self.choose(&history, &cats, sampling, rng)?,
                },
                GrammarState::ExpectCatEnd => vocab.special(Special::CatEnd),
                GrammarState::ExpectBoxStart => vocab.special(Special::BoxStart),
                GrammarState::ExpectBoxEnd => vocab.special(Special::BoxEnd),
                GrammarState::ExpectX => match position {
                    Some((x, _)) => vocab.coord(0, x),
                    None => {
                        let hi = size.map_or(max, |(w, _)| max.min(BINS - w));
                        self.choose(&history, &coords(0, 0, hi), sampling, rng)?
                    }
                },
                GrammarState::ExpectY => match position {
                    Some((_, y)) => vocab.coord(1, y),
                    None => {
                        let hi = size.map_or(max, |(_, h)| max.min(BINS - h));
                        self.choose(&history, &coords(1, 0, hi), sampling, rng)?
                    }
                },
                GrammarState::ExpectW => match size {
                    Some((w, _)) => vocab.coord(2, w),
                    None => self.choose(&history, &coords(2, 1, max.min(BINS - q[0])), sampling, rng)?,
                },
                GrammarState::ExpectH => match size {
                    Some((_, h)) => vocab.coord(3, h),
                    None => self.choose(&history, &coords(3, 1, max.min(BINS - q[1])), sampling, rng)?,
                },
                GrammarState::Done => unreachable!("loop exits on Done"),
            };
            let tok = vocab.token(token).expect("token ids come from the vocabulary");
            debug_assert!(state.accepts(tok), "masking admits only grammar-valid tokens");
            match tok {
                Token::Coord { role, value } => q[usize::from(role)] = value,
                Token::Special(Special::BoxEnd) => element += 1,
                _ => {}
            }
            if is_content(vocab, token) {
                history.push(token);
            }
            out.push(token);
            state = state.next(tok);
        }
        Ok(out)
    }

    /// Generates a layout for `prompt`. Refinement prompts are routed to the
    /// histogram refiner with the default radius.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        vocab: &Vocabulary,
        prompt: &Prompt,
        sampling: Sampling,
        rng: &mut R,
    ) -> Result<Layout> {
        if prompt.kind == TaskKind::Refinement {
            self.check_vocab(vocab)?;
            prompt.validate()?;
            let elements = prompt
                .condition
                .tuples()
                .iter()
                .map(|t| {
                    let q = t.qbbox().ok_or_else(|| Error::ConditionMismatch("refinement tuple is not a valid box".into()))?;
                    Ok(Element::new(t.category.expect("validated pattern"), q.to_bbox()))
                })
                .collect::<Result<Vec<_>>>()?;
            let noisy = Layout::with_limit(prompt.page(), elements, usize::MAX)?;
            return self.histogram.refine(&noisy, DEFAULT_DELTA);
        }
        let tokens = self.generate_tokens(vocab, prompt, sampling, rng)?;
        Ok(decode_layout(&TokenSequence(tokens), vocab, DecodeMode::Strict, &prompt.page())?.layout)
    }

    /// `exp` of the mean negative log probability per predicted token, each
    /// probability masked to the grammar-valid set at its position. Sequences
    /// are in [`training_sequence`] form; the two prefix tokens are context.
    pub fn perplexity<I>(&self, sequences: I, vocab: &Vocabulary) -> Result<f64>
    where
        I: IntoIterator<Item = TokenSequence>,
    {
        self.check_vocab(vocab)?;
        let cats: Vec<TokenId> = (0..vocab.label_count() as u16)
            .map(|c| vocab.category(CategoryId(c)))
            .collect::<Result<_>>()?;
        let role_set = |role: u8| -> Vec<TokenId> {
            let lo = if role < 2 { 0 } else { 1 };
            (lo..BINS).map(|v| vocab.coord(role, v)).collect()
        };
        let roles: Vec<Vec<TokenId>> = (0..4).map(role_set).collect();
        let mut ends = vec![vocab.special(Special::CatStart), vocab.special(Special::Eos)];
        ends.sort_unstable();
        let (mut nll, mut n) = (0.0, 0usize);
        for seq in sequences {
            let tokens = seq.tokens();
            if tokens.len() < 3 {
                return Err(Error::Degenerate("sequence shorter than prefix + EOS".into()));
            }
            let mut history = tokens[..2].to_vec();
            let mut state = GrammarState::ExpectCatStartOrEos;
            for (i, &t) in tokens.iter().enumerate().skip(2) {
                let tok = vocab.token(t).filter(|&tok| state.accepts(tok)).ok_or_else(|| Error::Parse {
                    index: i,
                    expected: state.describe().into(),
                    found: vocab.text(t),
                })?;
                let valid: &[TokenId] = match state {
                    GrammarState::ExpectCatStartOrEos => &ends,
                    GrammarState::ExpectCat => &cats,
                    s => match s.role() {
                        Some(r) => &roles[usize::from(r)],
                        None => &[],
                    },
                };
                if !valid.is_empty() {
                    let probs = self.masked_distribution(&history, valid);
                    let idx = valid.binary_search(&t).expect("accepted token is in the valid set");
                    nll -= probs[idx].ln();
                }
                n += 1;
                if is_content(vocab, t) {
                    history.push(t);
                }
                state = state.next(tok);
            }
        }
        if n == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok((nll / n as f64).exp())
    }

    pub fn to_json(&self) -> Result<String> {
        let tables = self
            .tables
            .iter()
            .map(|t| {
                let mut rows: Vec<ContextRecord> = t
                    .iter()
                    .map(|(ctx, e)| ContextRecord {
                        context: ctx.to_vec(),
                        total: e.total,
                        next: e.next.iter().map(|(&a, &b)| (a, b)).collect(),
                    })
                    .collect();
                rows.sort_by(|a, b| a.context.cmp(&b.context));
                rows
            })
            .collect();
        let histogram = self
            .histogram
            .bins
            .iter()
            .map(|(&(role, category), counts)| HistogramRecord {
                role,
                category,
                counts: counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(v, &c)| (v as u16, c))
                    .collect(),
            })
            .collect();
        let file = ModelFile {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            vocab_hash: self.vocab_hash.clone(),
            vocab_size: self.vocab_size,
            order: self.order,
            alpha: self.alpha,
            lambdas: self.lambdas.clone(),
            sequences: self.sequences,
            tables,
            histogram,
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Parses a model dump and verifies it against the active vocabulary.
    pub fn from_json(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != FORMAT || file.version != FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported model format {} v{}", file.format, file.version)));
        }
        let config = TrainConfig {
            order: file.order,
            alpha: file.alpha,
            lambdas: Some(file.lambdas),
        };
        let lambdas = config.resolved_lambdas()?;
        if file.tables.len() != file.order {
            return Err(Error::Config("table count differs from model order".into()));
        }
        let mut tables = vec![HashMap::new(); file.order];
        for (m, rows) in file.tables.into_iter().enumerate() {
            for r in rows {
                if r.context.len() != m {
                    return Err(Error::Config(format!("context of length {} in table {m}", r.context.len())));
                }
                tables[m].insert(
                    r.context.into_boxed_slice(),
                    ContextCounts {
                        total: r.total,
                        next: r.next.into_iter().collect(),
                    },
                );
            }
        }
        let mut histogram = CoordHistogram::default();
        for h in file.histogram {
            let mut bins = vec![0; usize::from(BINS)];
            for (v, c) in h.counts {
                *bins
                    .get_mut(usize::from(v))
                    .ok_or_else(|| Error::Config(format!("histogram value {v} out of range")))? = c;
            }
            histogram.bins.insert((h.role, h.category), bins);
        }
        let mut model = Self {
            order: file.order,
            alpha: file.alpha,
            lambdas,
            vocab_size: file.vocab_size,
            vocab_hash: file.vocab_hash,
            sequences: file.sequences,
            tables,
            histogram,
            unigram: Vec::new(),
        };
        model.check_vocab(vocab)?;
        model.finish();
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?, vocab)
    }
}

#[derive(Serialize, Deserialize)]
struct ContextRecord {
    context: Vec<TokenId>,
    total: u64,
    next: Vec<(TokenId, u64)>,
}

#[derive(Serialize, Deserialize)]
struct HistogramRecord {
    role: u8,
    category: u16,
    counts: Vec<(u16, u64)>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    vocab_hash: String,
    vocab_size: usize,
    order: usize,
    alpha: f64,
    lambdas: Vec<f64>,
    sequences: u64,
    tables: Vec<Vec<ContextRecord>>,
    histogram: Vec<HistogramRecord>,
}
