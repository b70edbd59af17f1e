//! Locally normalized tag decoder: per-step softmax over tags conditioned on
//! the previous tag through a transition matrix, sentence NLL, and exact
//! Viterbi decoding of the best tag sequence.

use rand::Rng;

use crate::autodiff::{log_softmax_values, Param, Tape, Tensor, Var};
use crate::corpus::TagScheme;
use crate::rng::substream;

/// Ordered tag labels plus a synthetic START index (= |T|) used only as the
/// conditioning tag for the first step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet {
    labels: Vec<String>,
}

impl TagSet {
    /// Tags for `scheme` over sorted entity types, "O" first.
    pub fn for_types(scheme: TagScheme, types: &[String]) -> Self {
        let mut types: Vec<String> = types.to_vec();
        types.sort();
        types.dedup();
        let prefixes: &[&str] = match scheme {
            TagScheme::Io => &["I"],
            TagScheme::Iob1 => &["B", "I"],
            TagScheme::Iobes => &["B", "E", "I", "S"],
        };
        let mut labels = vec!["O".to_string()];
        for t in &types {
            for p in prefixes {
                labels.push(format!("{p}-{t}"));
            }
        }
        TagSet { labels }
    }

    pub fn from_labels(labels: Vec<String>) -> Self {
        TagSet { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn start_index(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Emission matrix W [|T| x 2H] and transition matrix A [(|T|+1) x |T|];
/// A's extra last row is the START row.
#[derive(Clone)]
pub struct DecoderParams {
    pub w: Param,
    pub a: Param,
    pub tags: usize,
    pub input_dim: usize,
}

impl DecoderParams {
    pub fn init(name_prefix: &str, tags: usize, input_dim: usize, seed: u64) -> Self {
        let bound = (6.0 / (tags + input_dim) as f64).sqrt();
        let mut rng = substream(seed, &format!("init.{name_prefix}.w"));
        let w_data = (0..tags * input_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        DecoderParams {
            w: Param::new(
                format!("{name_prefix}.w"),
                Tensor::matrix(tags, input_dim, w_data),
            ),
            a: Param::new(
                format!("{name_prefix}.a"),
                Tensor::matrix(tags + 1, tags, vec![0.0; (tags + 1) * tags]),
            ),
            tags,
            input_dim,
        }
    }

    pub fn params(&self) -> Vec<Param> {
        vec![self.w.clone(), self.a.clone()]
    }
}

/// log P(. | g_i, prev): scores W.g_i + A[prev, .] put through log-softmax.
/// `prev` may be the START index (= |T|).
pub fn step_log_probs(tape: &mut Tape, p: &DecoderParams, g: Var, prev: usize) -> Var {
    assert!(
        prev <= p.tags,
        "previous tag index {} out of range (|T| = {})",
        prev,
        p.tags
    );
    let w = tape.leaf(&p.w);
    let scores = tape.matvec(w, g);
    let trans = tape.leaf_row(&p.a, prev);
    let total = tape.add(scores, trans);
    tape.log_softmax(total)
}

/// Negative log-likelihood of the gold tag sequence, conditioning each step
/// on the previous gold tag (START for the first step).
pub fn sentence_nll(tape: &mut Tape, p: &DecoderParams, g: &[Var], y: &[usize]) -> Var {
    assert!(
        g.len() == y.len(),
        "got {} encodings but {} tags",
        g.len(),
        y.len()
    );
    let mut terms = Vec::with_capacity(y.len());
    let mut prev = p.tags; // START
    for (gi, &yi) in g.iter().zip(y.iter()) {
        let lp = step_log_probs(tape, p, *gi, prev);
        terms.push(tape.pick(lp, yi));
        prev = yi;
    }
    let total = tape.sum_list(&terms);
    tape.scale(total, -1.0)
}

/// Tape-free per-step log-probabilities from frozen params.
pub fn step_log_probs_frozen(p: &DecoderParams, g: &[f64], prev: usize) -> Vec<f64> {
    let w = p.w.value();
    let a = p.a.value();
    let t = p.tags;
    let mut scores = vec![0.0; t];
    for (tag, s) in scores.iter_mut().enumerate() {
        let row = &w.data()[tag * p.input_dim..(tag + 1) * p.input_dim];
        *s = row.iter().zip(g.iter()).map(|(x, y)| x * y).sum::<f64>() + a.data()[prev * t + tag];
    }
    log_softmax_values(&scores)
}

/// Exact Viterbi argmax over tag sequences; ties broken toward the smallest
/// tag index at every backpointer decision. Returns (sequence, total log-prob).
pub fn decode(p: &DecoderParams, g: &[Vec<f64>]) -> (Vec<usize>, f64) {
    assert!(!g.is_empty(), "decode on empty sentence");
    let t = p.tags;
    let n = g.len();

    // delta[j] = best log-prob of a sequence ending in tag j at position i
    let mut delta = step_log_probs_frozen(p, &g[0], t);
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    for gi in g.iter().skip(1) {
        // per previous tag, the distribution over current tags
        let rows: Vec<Vec<f64>> = (0..t).map(|prev| step_log_probs_frozen(p, gi, prev)).collect();
        let mut next = vec![f64::NEG_INFINITY; t];
        let mut bp = vec![0usize; t];
        for cur in 0..t {
            for prev in 0..t {
                let cand = delta[prev] + rows[prev][cur];
                if cand > next[cur] {
                    next[cur] = cand;
                    bp[cur] = prev;
                }
            }
        }
        delta = next;
        back.push(bp);
    }

    let mut best = 0usize;
    for j in 1..t {
        if delta[j] > delta[best] {
            best = j;
        }
    }
    let score = delta[best];
    let mut seq = vec![best];
    for bp in back.iter().rev() {
        best = bp[*seq.last().unwrap()];
        seq.push(best);
    }
    seq.reverse();
    (seq, score)
}

/// Greedy left-to-right decoding; debugging aid only.
pub fn decode_greedy(p: &DecoderParams, g: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut prev = p.tags;
    let mut seq = Vec::with_capacity(g.len());
    let mut score = 0.0;
    for gi in g {
        let lp = step_log_probs_frozen(p, gi, prev);
        let mut best = 0usize;
        for j in 1..p.tags {
            if lp[j] > lp[best] {
                best = j;
            }
        }
        score += lp[best];
        seq.push(best);
        prev = best;
    }
    (seq, score)
}

/// Total log-prob of a given sequence under frozen params (oracle helper).
pub fn sequence_log_prob(p: &DecoderParams, g: &[Vec<f64>], y: &[usize]) -> f64 {
    let mut prev = p.tags;
    let mut total = 0.0;
    for (gi, &yi) in g.iter().zip(y.iter()) {
        total += step_log_probs_frozen(p, gi, prev)[yi];
        prev = yi;
    }
    total
}
