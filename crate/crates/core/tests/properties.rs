//! Property tests for the numeric and tag-scheme invariants.

use proptest::prelude::*;

use xlner::autodiff::{log_softmax_values, Param, Tape, Tensor};
use xlner::corpus::{
    convert_scheme, emit_tags, evaluate_f1, extract_spans, ColumnLayout, Corpus, EntitySpan,
    Sentence, TagScheme, Token,
};

fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Non-overlapping spans over a sentence of the returned length.
fn spans_strategy() -> impl Strategy<Value = (usize, Vec<EntitySpan>)> {
    (1usize..=10, proptest::collection::vec((0.0f64..1.0, 1usize..=3, 0usize..3), 0..6)).prop_map(
        |(len, raw)| {
            let types = ["PER", "LOC", "ORG"];
            let mut spans = Vec::new();
            let mut i = 0usize;
            let mut raw = raw.into_iter();
            while i < len {
                match raw.next() {
                    Some((p, w, t)) if p < 0.5 => {
                        let w = w.min(len - i);
                        spans.push(EntitySpan {
                            start: i,
                            end: i + w - 1,
                            etype: types[t].to_string(),
                        });
                        i += w;
                    }
                    Some(_) => i += 1,
                    None => break,
                }
            }
            (len, spans)
        },
    )
}

fn sentence_from(len: usize, spans: &[EntitySpan], scheme: TagScheme) -> Sentence {
    let tags = emit_tags(len, spans, scheme);
    Sentence::new(tags.iter().map(|t| Token::new("w", t.clone())).collect())
}

fn corpus_of(sentence: Sentence, scheme: TagScheme) -> Corpus {
    Corpus {
        language: "x".into(),
        scheme,
        layout: ColumnLayout::simple(),
        sentences: vec![sentence],
        repair_warnings: 0,
    }
}

proptest! {
    #[test]
    fn log_softmax_always_normalizes(v in proptest::collection::vec(-1e3f64..1e3, 1..8)) {
        let out = log_softmax_values(&v);
        prop_assert!(logsumexp(&out).abs() <= 1e-9);
    }

    #[test]
    fn backward_twice_doubles_gradients(v in proptest::collection::vec(-2.0f64..2.0, 1..6)) {
        let p = Param::new("p", Tensor::vector(v));
        let mut tape = Tape::new();
        let x = tape.leaf(&p);
        let t = tape.tanh(x);
        let loss = tape.dot(t, t);
        tape.backward(loss);
        let once = p.grad().data().to_vec();
        tape.backward(loss);
        let twice = p.grad().data().to_vec();
        for (a, b) in once.iter().zip(twice.iter()) {
            prop_assert_eq!(b.to_bits(), (2.0 * a).to_bits());
        }
    }

    #[test]
    fn conversion_between_lossless_schemes_preserves_spans(
        (len, spans) in spans_strategy(),
        target in prop_oneof![Just(TagScheme::Iob1), Just(TagScheme::Iobes)],
    ) {
        let corpus = corpus_of(sentence_from(len, &spans, TagScheme::Iob1), TagScheme::Iob1);
        let converted = convert_scheme(&corpus, target).unwrap();
        prop_assert_eq!(extract_spans(&converted.sentences[0], target), spans);
    }

    #[test]
    fn self_evaluation_is_perfect_or_empty((len, spans) in spans_strategy()) {
        let corpus = corpus_of(sentence_from(len, &spans, TagScheme::Iobes), TagScheme::Iobes);
        let report = evaluate_f1(&corpus, &corpus).unwrap();
        if spans.is_empty() {
            prop_assert_eq!(report.overall.f1, 0.0);
        } else {
            prop_assert!((report.overall.f1 - 100.0).abs() < 1e-12);
        }
    }
}
