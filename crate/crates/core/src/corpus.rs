//! CoNLL-format corpora: parsing, tag-scheme conversion, bilingual
//! merge+shuffle, subsampling and entity-level F1 scoring.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;

use crate::rng::substream;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: expected {expected} columns, got {got}")]
    MalformedLine {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: tag '{tag}' is not valid under scheme {scheme}")]
    UnknownTag {
        line: usize,
        tag: String,
        scheme: TagScheme,
    },
    #[error("cannot convert from IO to {0}: span boundaries are not recoverable")]
    LossyConversion(TagScheme),
    #[error("scheme mismatch: {0} vs {1}")]
    SchemeMismatch(TagScheme, TagScheme),
    #[error("gold and predicted corpora differ in structure: {0}")]
    StructureMismatch(String),
    #[error("fraction {0} outside (0, 1]")]
    FractionOutOfRange(f64),
    #[error("column layout: surface and tag columns must be distinct and within the column count")]
    BadColumnLayout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagScheme {
    Iob1,
    Iobes,
    Io,
}

impl TagScheme {
    pub fn parse(s: &str) -> Option<TagScheme> {
        match s.to_ascii_lowercase().as_str() {
            "iob1" => Some(TagScheme::Iob1),
            "iobes" => Some(TagScheme::Iobes),
            "io" => Some(TagScheme::Io),
            _ => None,
        }
    }

    fn prefixes(&self) -> &'static [char] {
        match self {
            TagScheme::Iob1 => &['I', 'B'],
            TagScheme::Iobes => &['I', 'B', 'E', 'S'],
            TagScheme::Io => &['I'],
        }
    }
}

impl fmt::Display for TagScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TagScheme::Iob1 => write!(f, "IOB1"),
            TagScheme::Iobes => write!(f, "IOBES"),
            TagScheme::Io => write!(f, "IO"),
        }
    }
}

/// Which whitespace-separated columns hold the surface form and the NER tag.
#[derive(Debug, Clone, Copy)]
pub struct ColumnLayout {
    pub columns: usize,
    pub surface: usize,
    pub tag: usize,
}

impl ColumnLayout {
    /// Two columns: surface then tag (CoNLL-2002 style).
    pub fn simple() -> Self {
        ColumnLayout {
            columns: 2,
            surface: 0,
            tag: 1,
        }
    }

    /// CoNLL-2003: word, POS, chunk, NER tag.
    pub fn conll2003() -> Self {
        ColumnLayout {
            columns: 4,
            surface: 0,
            tag: 3,
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.surface >= self.columns || self.tag >= self.columns || self.surface == self.tag {
            return Err(CorpusError::BadColumnLayout);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub tag: String,
    /// Remaining columns in original order (surface and tag excluded).
    pub extra: Vec<String>,
}

impl Token {
    pub fn new(surface: impl Into<String>, tag: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            tag: tag.into(),
            extra: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub language: String,
    pub scheme: TagScheme,
    pub layout: ColumnLayout,
    pub sentences: Vec<Sentence>,
    /// Number of out-of-scheme tag sequences repaired leniently during span
    /// extraction over this corpus's lifetime of parsing.
    pub repair_warnings: usize,
}

impl Corpus {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EntitySpan {
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub etype: String,
}

fn split_tag(tag: &str) -> (char, Option<&str>) {
    if tag == "O" {
        return ('O', None);
    }
    match tag.split_once('-') {
        Some((p, t)) if p.len() == 1 => (p.chars().next().unwrap(), Some(t)),
        _ => ('?', None),
    }
}

fn tag_valid(tag: &str, scheme: TagScheme) -> bool {
    let (prefix, etype) = split_tag(tag);
    if prefix == 'O' {
        return tag == "O";
    }
    match etype {
        Some(t) if !t.is_empty() => scheme.prefixes().contains(&prefix),
        _ => false,
    }
}

/// Parse CoNLL-format bytes into a corpus.
///
/// Blank lines delimit sentences; any sentence containing a `-DOCSTART-`
/// token is dropped whole. Tags are validated against `scheme`.
pub fn parse_conll(
    text: &str,
    layout: ColumnLayout,
    scheme: TagScheme,
    language: &str,
) -> Result<Corpus, CorpusError> {
    layout.validate()?;
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let mut drop_current = false;

    let close = |current: &mut Vec<Token>, drop: &mut bool, out: &mut Vec<Sentence>| {
        if !current.is_empty() && !*drop {
            out.push(Sentence::new(std::mem::take(current)));
        } else {
            current.clear();
        }
        *drop = false;
    };

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            close(&mut current, &mut drop_current, &mut sentences);
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "-DOCSTART-" {
            drop_current = true;
            continue;
        }
        if fields.len() != layout.columns {
            return Err(CorpusError::MalformedLine {
                line: lineno,
                expected: layout.columns,
                got: fields.len(),
            });
        }
        let tag = fields[layout.tag];
        if !tag_valid(tag, scheme) {
            return Err(CorpusError::UnknownTag {
                line: lineno,
                tag: tag.to_string(),
                scheme,
            });
        }
        let extra: Vec<String> = fields
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != layout.surface && *i != layout.tag)
            .map(|(_, f)| f.to_string())
            .collect();
        current.push(Token {
            surface: fields[layout.surface].to_string(),
            tag: tag.to_string(),
            extra,
        });
    }
    close(&mut current, &mut drop_current, &mut sentences);

    Ok(Corpus {
        language: language.to_string(),
        scheme,
        layout,
        sentences,
        repair_warnings: 0,
    })
}

/// Serialize a corpus back to CoNLL text under its own column layout.
pub fn write_conll(c: &Corpus) -> String {
    let mut out = String::new();
    for (i, sentence) in c.sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for tok in &sentence.tokens {
            let mut cols: Vec<&str> = Vec::with_capacity(c.layout.columns);
            let mut extra_it = tok.extra.iter();
            for i in 0..c.layout.columns {
                if i == c.layout.surface {
                    cols.push(&tok.surface);
                } else if i == c.layout.tag {
                    cols.push(&tok.tag);
                } else {
                    cols.push(extra_it.next().map(|s| s.as_str()).unwrap_or("_"));
                }
            }
            out.push_str(&cols.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Extract maximal entity runs from one sentence under `scheme`.
///
/// Out-of-scheme sequences (e.g. an inside tag with no matching open chunk)
/// are repaired by starting a new entity at that token; the repair count is
/// returned alongside the spans.
pub fn extract_spans_lenient(s: &Sentence, scheme: TagScheme) -> (Vec<EntitySpan>, usize) {
    let mut spans = Vec::new();
    let mut repairs = 0usize;
    // (type, start index) of the currently open chunk
    let mut open: Option<(String, usize)> = None;

    let close = |open: &mut Option<(String, usize)>, end: usize, spans: &mut Vec<EntitySpan>| {
        if let Some((etype, start)) = open.take() {
            spans.push(EntitySpan { start, end, etype });
        }
    };

    for (i, tok) in s.tokens.iter().enumerate() {
        let (prefix, etype) = split_tag(&tok.tag);
        let etype = etype.unwrap_or("").to_string();
        match (scheme, prefix) {
            (_, 'O') => close(&mut open, i.wrapping_sub(1), &mut spans),
            (TagScheme::Io, 'I') | (TagScheme::Iob1, 'I') => {
                let continues = matches!(&open, Some((t, _)) if *t == etype);
                if !continues {
                    close(&mut open, i.wrapping_sub(1), &mut spans);
                    open = Some((etype, i));
                }
            }
            (TagScheme::Iob1, 'B') => {
                // legal only immediately after a same-type chunk
                if !matches!(&open, Some((t, _)) if *t == etype) {
                    repairs += 1;
                }
                close(&mut open, i.wrapping_sub(1), &mut spans);
                open = Some((etype, i));
            }
            (TagScheme::Iobes, 'B') => {
                if open.is_some() {
                    repairs += 1;
                    close(&mut open, i.wrapping_sub(1), &mut spans);
                }
                open = Some((etype, i));
            }
            (TagScheme::Iobes, 'I') => {
                let continues = matches!(&open, Some((t, _)) if *t == etype);
                if !continues {
                    repairs += 1;
                    close(&mut open, i.wrapping_sub(1), &mut spans);
                    open = Some((etype, i));
                }
            }
            (TagScheme::Iobes, 'E') => {
                let continues = matches!(&open, Some((t, _)) if *t == etype);
                if continues {
                    let (t, start) = open.take().unwrap();
                    spans.push(EntitySpan {
                        start,
                        end: i,
                        etype: t,
                    });
                } else {
                    repairs += 1;
                    close(&mut open, i.wrapping_sub(1), &mut spans);
                    spans.push(EntitySpan {
                        start: i,
                        end: i,
                        etype,
                    });
                }
            }
            (TagScheme::Iobes, 'S') => {
                if open.is_some() {
                    repairs += 1;
                    close(&mut open, i.wrapping_sub(1), &mut spans);
                }
                spans.push(EntitySpan {
                    start: i,
                    end: i,
                    etype,
                });
            }
            _ => {
                // prefix not in scheme; treat as a fresh single-token start
                repairs += 1;
                close(&mut open, i.wrapping_sub(1), &mut spans);
                open = Some((etype, i));
            }
        }
    }
    if open.is_some() {
        if scheme == TagScheme::Iobes {
            // B..I run that never saw its E
            repairs += 1;
        }
        close(&mut open, s.tokens.len() - 1, &mut spans);
    }
    (spans, repairs)
}

pub fn extract_spans(s: &Sentence, scheme: TagScheme) -> Vec<EntitySpan> {
    extract_spans_lenient(s, scheme).0
}

/// Emit the tag sequence encoding `spans` under `target`.
pub fn emit_tags(len: usize, spans: &[EntitySpan], target: TagScheme) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    let mut prev_span_end: BTreeMap<usize, &str> = BTreeMap::new(); // end -> type
    for sp in spans {
        prev_span_end.insert(sp.end, &sp.etype);
    }
    for sp in spans {
        match target {
            TagScheme::Io => {
                for t in tags.iter_mut().take(sp.end + 1).skip(sp.start) {
                    *t = format!("I-{}", sp.etype);
                }
            }
            TagScheme::Iobes => {
                if sp.start == sp.end {
                    tags[sp.start] = format!("S-{}", sp.etype);
                } else {
                    tags[sp.start] = format!("B-{}", sp.etype);
                    tags[sp.end] = format!("E-{}", sp.etype);
                    for t in tags.iter_mut().take(sp.end).skip(sp.start + 1) {
                        *t = format!("I-{}", sp.etype);
                    }
                }
            }
            TagScheme::Iob1 => {
                // B only when butting against a preceding same-type span
                let adjacent_same = sp.start > 0
                    && prev_span_end
                        .get(&(sp.start - 1))
                        .is_some_and(|t| *t == sp.etype);
                let first = if adjacent_same { "B" } else { "I" };
                tags[sp.start] = format!("{}-{}", first, sp.etype);
                for t in tags.iter_mut().take(sp.end + 1).skip(sp.start + 1) {
                    *t = format!("I-{}", sp.etype);
                }
            }
        }
    }
    tags
}

/// Re-encode a corpus under another tag scheme. IOB1↔IOBES preserves spans
/// exactly; converting to IO merges adjacent same-type entities and is
/// one-way (IO sources are rejected for richer targets).
pub fn convert_scheme(c: &Corpus, target: TagScheme) -> Result<Corpus, CorpusError> {
    if c.scheme == TagScheme::Io && target != TagScheme::Io {
        return Err(CorpusError::LossyConversion(target));
    }
    let mut repairs = c.repair_warnings;
    let sentences = c
        .sentences
        .iter()
        .map(|s| {
            let (spans, r) = extract_spans_lenient(s, c.scheme);
            repairs += r;
            let tags = emit_tags(s.len(), &spans, target);
            let tokens = s
                .tokens
                .iter()
                .zip(tags)
                .map(|(tok, tag)| Token {
                    surface: tok.surface.clone(),
                    tag,
                    extra: tok.extra.clone(),
                })
                .collect();
            Sentence::new(tokens)
        })
        .collect();
    Ok(Corpus {
        language: c.language.clone(),
        scheme: target,
        layout: c.layout,
        sentences,
        repair_warnings: repairs,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Prf {
    fn from_counts(gold: usize, predicted: usize, correct: usize) -> Prf {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                100.0 * num as f64 / den as f64
            }
        };
        let p = ratio(correct, predicted);
        let r = ratio(correct, gold);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Prf {
            precision: p,
            recall: r,
            f1,
            gold,
            predicted,
            correct,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct F1Report {
    pub overall: Prf,
    pub per_type: BTreeMap<String, Prf>,
}

impl F1Report {
    /// Fixed-format text report plus machine-readable key=value lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "overall: P={:.2} R={:.2} F1={:.2} (gold={} pred={} correct={})\n",
            self.overall.precision,
            self.overall.recall,
            self.overall.f1,
            self.overall.gold,
            self.overall.predicted,
            self.overall.correct
        ));
        for (etype, prf) in &self.per_type {
            out.push_str(&format!(
                "{:>8}: P={:.2} R={:.2} F1={:.2} (gold={} pred={} correct={})\n",
                etype, prf.precision, prf.recall, prf.f1, prf.gold, prf.predicted, prf.correct
            ));
        }
        out.push_str(&format!(
            "precision={:.6}\nrecall={:.6}\nf1={:.6}\n",
            self.overall.precision, self.overall.recall, self.overall.f1
        ));
        out
    }
}

/// Entity-level F1: a predicted span is correct iff start, end and type all
/// match a gold span.
pub fn evaluate_f1(gold: &Corpus, pred: &Corpus) -> Result<F1Report, CorpusError> {
    if gold.scheme != pred.scheme {
        return Err(CorpusError::SchemeMismatch(gold.scheme, pred.scheme));
    }
    if gold.sentences.len() != pred.sentences.len() {
        return Err(CorpusError::StructureMismatch(format!(
            "sentence counts {} vs {}",
            gold.sentences.len(),
            pred.sentences.len()
        )));
    }
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let (mut g_total, mut p_total, mut c_total) = (0usize, 0usize, 0usize);
    for (idx, (gs, ps)) in gold.sentences.iter().zip(pred.sentences.iter()).enumerate() {
        if gs.len() != ps.len() {
            return Err(CorpusError::StructureMismatch(format!(
                "sentence {} lengths {} vs {}",
                idx,
                gs.len(),
                ps.len()
            )));
        }
        let g_spans = extract_spans(gs, gold.scheme);
        let p_spans = extract_spans(ps, pred.scheme);
        for sp in &g_spans {
            counts.entry(sp.etype.clone()).or_default().0 += 1;
        }
        for sp in &p_spans {
            let e = counts.entry(sp.etype.clone()).or_default();
            e.1 += 1;
            if g_spans.contains(sp) {
                e.2 += 1;
                c_total += 1;
            }
        }
        g_total += g_spans.len();
        p_total += p_spans.len();
    }
    let per_type = counts
        .into_iter()
        .map(|(t, (g, p, c))| (t, Prf::from_counts(g, p, c)))
        .collect();
    Ok(F1Report {
        overall: Prf::from_counts(g_total, p_total, c_total),
        per_type,
    })
}

/// One sentence of a merged bilingual training set, tagged with its language.
#[derive(Debug, Clone)]
pub struct JointSentence {
    pub language: String,
    pub sentence: Sentence,
}

#[derive(Debug, Clone)]
pub struct JointCorpus {
    pub scheme: TagScheme,
    pub sentences: Vec<JointSentence>,
}

/// Merge two corpora's sentences and shuffle them under `seed`.
pub fn merge_shuffle(a: &Corpus, b: &Corpus, seed: u64) -> Result<JointCorpus, CorpusError> {
    if a.scheme != b.scheme {
        return Err(CorpusError::SchemeMismatch(a.scheme, b.scheme));
    }
    let mut sentences: Vec<JointSentence> = a
        .sentences
        .iter()
        .map(|s| JointSentence {
            language: a.language.clone(),
            sentence: s.clone(),
        })
        .chain(b.sentences.iter().map(|s| JointSentence {
            language: b.language.clone(),
            sentence: s.clone(),
        }))
        .collect();
    let mut rng = substream(seed, "merge_shuffle");
    sentences.shuffle(&mut rng);
    Ok(JointCorpus {
        scheme: a.scheme,
        sentences,
    })
}

impl Corpus {
    /// View a single corpus as a joint corpus of one language (unshuffled).
    pub fn as_joint(&self) -> JointCorpus {
        JointCorpus {
            scheme: self.scheme,
            sentences: self
                .sentences
                .iter()
                .map(|s| JointSentence {
                    language: self.language.clone(),
                    sentence: s.clone(),
                })
                .collect(),
        }
    }
}

/// Keep `round(fraction * N)` sentences, chosen as the prefix of a seeded
/// permutation and re-emitted in original order. Nested fractions under the
/// same seed are therefore subsets of each other.
pub fn subsample(c: &Corpus, fraction: f64, seed: u64) -> Result<Corpus, CorpusError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CorpusError::FractionOutOfRange(fraction));
    }
    if fraction == 1.0 {
        return Ok(c.clone());
    }
    let n = c.sentences.len();
    let keep = ((fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = substream(seed, "subsample");
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = order.into_iter().take(keep).collect();
    chosen.sort_unstable();
    Ok(Corpus {
        language: c.language.clone(),
        scheme: c.scheme,
        layout: c.layout,
        sentences: chosen.iter().map(|&i| c.sentences[i].clone()).collect(),
        repair_warnings: c.repair_warnings,
    })
}
