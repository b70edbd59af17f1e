//! Word-level representation: lowercased embedding lookup (fine-tuned during
//! training), an optional per-language linear projection into a common
//! feature space, and the concatenated per-token input vector.

use std::collections::BTreeMap;

use rand::Rng;

use crate::autodiff::{Param, Tape, Tensor, Var};
use crate::charcnn::{encode_word, CharVocab, FilterBank};
use crate::rng::substream;

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("embedding file is empty")]
    EmptyFile,
    #[error("line {line}: expected {expected} dimensions, got {got}")]
    RaggedDimensions {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: malformed embedding entry")]
    MalformedEntry { line: usize },
}

/// Lowercased word -> row index, with a reserved UNK row.
#[derive(Debug, Clone)]
pub struct WordVocab {
    index: BTreeMap<String, usize>,
    unk: usize,
}

impl WordVocab {
    pub fn lookup(&self, word: &str) -> usize {
        let key = word.to_lowercase();
        *self.index.get(&key).unwrap_or(&self.unk)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(&word.to_lowercase())
    }

    pub fn unk_index(&self) -> usize {
        self.unk
    }

    pub fn len(&self) -> usize {
        self.index.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> {
        self.index.iter().map(|(w, &i)| (w.as_str(), i))
    }

    pub fn from_entries(entries: Vec<(String, usize)>, unk: usize) -> Self {
        WordVocab {
            index: entries.into_iter().collect(),
            unk,
        }
    }
}

fn unk_row(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    let bound = 0.25 / (dim as f64).sqrt();
    (0..dim).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Parse a text embedding file: optional "count dim" header (auto-detected),
/// then one `word v1 .. vd` line each. Duplicates keep the first occurrence;
/// an UNK row is appended with small seeded uniform init.
pub fn load_embeddings(
    text: &str,
    param_name: &str,
    seed: u64,
) -> Result<(WordVocab, Param), LexiconError> {
    let mut lines = text.lines().enumerate().peekable();

    // header: line 1 with exactly two integer fields
    if let Some((_, first)) = lines.peek() {
        let fields: Vec<&str> = first.split_whitespace().collect();
        if fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            lines.next();
        }
    }

    let mut dim: Option<usize> = None;
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields
            .next()
            .ok_or(LexiconError::MalformedEntry { line: lineno })?
            .to_lowercase();
        let values: Result<Vec<f64>, _> = fields.map(|f| f.parse::<f64>()).collect();
        let values = values.map_err(|_| LexiconError::MalformedEntry { line: lineno })?;
        if values.is_empty() {
            return Err(LexiconError::MalformedEntry { line: lineno });
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(LexiconError::RaggedDimensions {
                    line: lineno,
                    expected: d,
                    got: values.len(),
                })
            }
            _ => {}
        }
        if index.contains_key(&word) {
            continue; // first occurrence wins
        }
        index.insert(word, rows.len());
        rows.push(values);
    }
    let dim = dim.ok_or(LexiconError::EmptyFile)?;

    let mut rng = substream(seed, &format!("init.{param_name}.unk"));
    let unk = rows.len();
    rows.push(unk_row(dim, &mut rng));

    let data: Vec<f64> = rows.into_iter().flatten().collect();
    let table = Param::new(param_name, Tensor::matrix(unk + 1, dim, data));
    Ok((WordVocab { index, unk }, table))
}

/// Grow a vocab/table with training words missing from the embedding file,
/// giving each a seeded uniform row so it can be fine-tuned.
pub fn extend_vocab<'a>(
    vocab: &WordVocab,
    table: &Param,
    words: impl Iterator<Item = &'a str>,
    seed: u64,
) -> (WordVocab, Param) {
    let old = table.value();
    let dim = old.cols();
    let mut index = vocab.index.clone();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut next = old.rows();
    for w in words {
        let key = w.to_lowercase();
        if let std::collections::btree_map::Entry::Vacant(slot) = index.entry(key) {
            let mut rng = substream(seed, &format!("init.{}.word.{}", table.name(), slot.key()));
            rows.push(unk_row(dim, &mut rng));
            slot.insert(next);
            next += 1;
        }
    }
    let mut data = old.data().to_vec();
    for r in rows {
        data.extend(r);
    }
    let new_table = Param::new(table.name(), Tensor::matrix(next, dim, data));
    (
        WordVocab {
            index,
            unk: vocab.unk,
        },
        new_table,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMode {
    Identity,
    Learned,
}

/// Language-dependent linear layer mapping embeddings into a common space.
/// Identity mode is a bit-exact pass-through.
#[derive(Clone)]
pub struct LanguageProjection {
    pub mode: ProjectionMode,
    pub weight: Option<Param>, // [d x d]
    pub bias: Option<Param>,   // [d]
}

impl LanguageProjection {
    pub fn identity() -> Self {
        LanguageProjection {
            mode: ProjectionMode::Identity,
            weight: None,
            bias: None,
        }
    }

    /// Learned projection initialized to the identity map.
    pub fn learned(name_prefix: &str, dim: usize) -> Self {
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        LanguageProjection {
            mode: ProjectionMode::Learned,
            weight: Some(Param::new(
                format!("{name_prefix}.weight"),
                Tensor::matrix(dim, dim, eye),
            )),
            bias: Some(Param::new(
                format!("{name_prefix}.bias"),
                Tensor::vector(vec![0.0; dim]),
            )),
        }
    }

    pub fn params(&self) -> Vec<Param> {
        match self.mode {
            ProjectionMode::Identity => Vec::new(),
            ProjectionMode::Learned => vec![
                self.weight.clone().unwrap(),
                self.bias.clone().unwrap(),
            ],
        }
    }

    pub fn apply(&self, tape: &mut Tape, x: Var) -> Var {
        match self.mode {
            ProjectionMode::Identity => x,
            ProjectionMode::Learned => {
                let w = tape.leaf(self.weight.as_ref().unwrap());
                let b = tape.leaf(self.bias.as_ref().unwrap());
                let wx = tape.matvec(w, x);
                tape.add(wx, b)
            }
        }
    }
}

/// One language's word-level lookup machinery.
#[derive(Clone)]
pub struct Lexicon {
    pub vocab: WordVocab,
    pub table: Param,
    pub projection: LanguageProjection,
}

impl Lexicon {
    /// Embedding of the lowercased word, passed through the projection.
    pub fn embed(&self, tape: &mut Tape, word: &str) -> Var {
        let row = self.vocab.lookup(word);
        let e = tape.leaf_row(&self.table, row);
        self.projection.apply(tape, e)
    }

    /// The concatenated input vector: [embedding, char-CNN features].
    /// The embedding half is case-insensitive; the CNN half preserves case.
    pub fn input_vector(
        &self,
        tape: &mut Tape,
        word: &str,
        bank: &FilterBank,
        chars: &CharVocab,
    ) -> Var {
        let emb = self.embed(tape, word);
        let cnn = encode_word(tape, word, bank, chars);
        tape.concat(&[emb, cnn])
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }
}
