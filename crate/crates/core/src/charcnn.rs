//! Character-level word encoder: one-hot character matrix, multi-width 1-d
//! convolution, tanh, then max-over-time pooling into a fixed vector.

use std::collections::BTreeMap;

use rand::Rng;

use crate::autodiff::{Param, Tape, Tensor, Var};
use crate::rng::substream;

pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Case-sensitive character vocabulary with reserved PAD and UNK indices.
#[derive(Debug, Clone)]
pub struct CharVocab {
    index: BTreeMap<char, usize>,
    size: usize,
}

impl CharVocab {
    /// Build from the characters of all words in iteration order. Indices are
    /// dense; PAD=0, UNK=1.
    pub fn build<'a>(words: impl Iterator<Item = &'a str>) -> Self {
        let mut index = BTreeMap::new();
        let mut next = 2usize;
        for w in words {
            for ch in w.chars() {
                index.entry(ch).or_insert_with(|| {
                    let i = next;
                    next += 1;
                    i
                });
            }
        }
        CharVocab { index, size: next }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn lookup(&self, ch: char) -> usize {
        *self.index.get(&ch).unwrap_or(&UNK)
    }

    pub fn chars(&self) -> impl Iterator<Item = (char, usize)> + '_ {
        self.index.iter().map(|(&c, &i)| (c, i))
    }

    pub fn from_entries(entries: Vec<(char, usize)>) -> Self {
        let size = entries.iter().map(|&(_, i)| i + 1).max().unwrap_or(2).max(2);
        CharVocab {
            index: entries.into_iter().collect(),
            size,
        }
    }
}

/// One convolution filter: weight over a width-w window of one-hot rows plus
/// a scalar bias.
#[derive(Clone)]
pub struct Filter {
    pub weight: Param, // [w * |C|]
    pub bias: Param,   // [1]
    pub width: usize,
}

/// Filters of widths 1..=max_width, `per_width` of each; output dim is the
/// total filter count.
#[derive(Clone)]
pub struct FilterBank {
    pub filters: Vec<Filter>, // width-major, filter-index-minor
    pub max_width: usize,
    pub vocab_size: usize,
}

impl FilterBank {
    pub fn init(
        name_prefix: &str,
        max_width: usize,
        per_width: usize,
        vocab_size: usize,
        seed: u64,
    ) -> Self {
        let mut filters = Vec::new();
        for w in 1..=max_width {
            let scale = (6.0 / (w * vocab_size + 1) as f64).sqrt();
            for i in 0..per_width {
                let name = format!("{name_prefix}.w{w}.f{i}");
                let mut rng = substream(seed, &format!("init.{name}"));
                let n = w * vocab_size;
                let data = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
                filters.push(Filter {
                    weight: Param::new(format!("{name}.weight"), Tensor::vector(data)),
                    bias: Param::new(format!("{name}.bias"), Tensor::scalar(0.0)),
                    width: w,
                });
            }
        }
        FilterBank {
            filters,
            max_width,
            vocab_size,
        }
    }

    /// Total pooled output dimension d1.
    pub fn output_dim(&self) -> usize {
        self.filters.len()
    }

    pub fn params(&self) -> Vec<Param> {
        self.filters
            .iter()
            .flat_map(|f| [f.weight.clone(), f.bias.clone()])
            .collect()
    }
}

/// Stack one-hot rows for a word's characters. Unseen characters map to UNK.
pub fn one_hot(word: &str, vocab: &CharVocab) -> Tensor {
    assert!(!word.is_empty(), "one_hot of empty word");
    let chars: Vec<char> = word.chars().collect();
    let c = vocab.size();
    let mut data = vec![0.0; chars.len() * c];
    for (row, ch) in chars.iter().enumerate() {
        data[row * c + vocab.lookup(*ch)] = 1.0;
    }
    Tensor::matrix(chars.len(), c, data)
}

/// Encode a word into a d1-vector on the tape: per filter, slide over the
/// PAD-extended one-hot matrix, tanh(dot + bias), max over positions.
///
/// A width-w filter gets (w-1) all-zero PAD rows on each side, so every
/// filter sees at least one position for any non-empty word.
pub fn encode_word(tape: &mut Tape, word: &str, bank: &FilterBank, vocab: &CharVocab) -> Var {
    let matrix = one_hot(word, vocab);
    let k = matrix.rows();
    let c = vocab.size();
    assert!(c == bank.vocab_size, "filter bank built for |C|={} but vocab has {}", bank.vocab_size, c);

    let mut pooled = Vec::with_capacity(bank.filters.len());
    for filter in &bank.filters {
        let w = filter.width;
        let pad = w - 1;
        let positions = k + 2 * pad + 1 - w;
        let weight = tape.leaf(&filter.weight);
        let bias = tape.leaf(&filter.bias);
        let mut scores = Vec::with_capacity(positions);
        for pos in 0..positions {
            // window rows [pos-pad, pos-pad+w) of the unpadded matrix;
            // out-of-range rows are zero
            let mut window = vec![0.0; w * c];
            for r in 0..w {
                let src = pos + r;
                if src >= pad && src - pad < k {
                    let row = src - pad;
                    window[r * c..(r + 1) * c]
                        .copy_from_slice(&matrix.data()[row * c..(row + 1) * c]);
                }
            }
            let window = tape.constant(Tensor::vector(window));
            let dot = tape.dot(weight, window);
            let scored = tape.add(dot, bias);
            let activated = tape.tanh(scored);
            scores.push(activated);
        }
        let stacked = tape.concat(&scores);
        let column = tape.reshape(stacked, vec![positions, 1]);
        let max = tape.max_over_rows(column);
        pooled.push(max);
    }
    tape.concat(&pooled)
}
