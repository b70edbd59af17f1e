//! Per-sentence SGD over the joint objective, with early stopping on dev F1,
//! gradient clipping, grid search, and plain-text/key=value reporting.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::autodiff::Tape;
use crate::corpus::{evaluate_f1, ColumnLayout, Corpus, JointCorpus, Sentence, Token};
use crate::model::{ModelError, ModelParams};
use crate::rng::substream;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged: NLL = {nll} at epoch {epoch}, sentence {sentence}")]
    Diverged {
        epoch: usize,
        sentence: usize,
        nll: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// Grid axes plus the schedule knobs the sweep does not touch.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub lstm_size: usize,
    pub max_filter_width: usize,
    pub filters_per_width: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lstm_size: 100,
            max_filter_width: 4,
            filters_per_width: 10,
            learning_rate: 0.05,
            max_epochs: 100,
            patience: 10,
            seed: 1,
        }
    }
}

impl Hyperparams {
    /// The full tuning grid: H in 100..=300 step 50, filter width 4..=9,
    /// filters per width 10..=30 step 5, lr 0.05..=0.50 step 0.05.
    pub fn full_grid(seed: u64, max_epochs: usize, patience: usize) -> Vec<Hyperparams> {
        let mut grid = Vec::new();
        for h in (100..=300).step_by(50) {
            for k in 4..=9 {
                for f in (10..=30).step_by(5) {
                    for lr_step in 1..=10 {
                        grid.push(Hyperparams {
                            lstm_size: h,
                            max_filter_width: k,
                            filters_per_width: f,
                            learning_rate: 0.05 * lr_step as f64,
                            max_epochs,
                            patience,
                            seed,
                        });
                    }
                }
            }
        }
        grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_nll: f64,
    pub dev_f1: f64,
    /// Wall-clock seconds; informational only, excluded from rendered
    /// reports so that reports stay byte-reproducible.
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub test_f1: Option<f64>,
    pub sharing_line: String,
}

impl TrainReport {
    /// Human-readable summary plus line-oriented key=value records.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("sharing: {}\n", self.sharing_line));
        for e in &self.epochs {
            out.push_str(&format!(
                "epoch={} nll={:.6} dev_f1={:.6}\n",
                e.epoch, e.train_nll, e.dev_f1
            ));
        }
        out.push_str(&format!(
            "best_epoch={}\nbest_dev_f1={:.6}\n",
            self.best_epoch, self.best_dev_f1
        ));
        if let Some(t) = self.test_f1 {
            out.push_str(&format!("test_f1={t:.6}\n"));
        }
        out
    }
}

const GRAD_CLIP_NORM: f64 = 5.0;

fn sharing_line(model: &ModelParams) -> String {
    let s = &model.sharing;
    format!(
        "filters={} decoder={} lstm={} shared_embedding_space={}",
        s.share_filters, s.share_decoder, s.share_lstm, s.shared_embedding_space
    )
}

/// Decode every sentence of a joint corpus and score against gold.
pub fn joint_dev_f1(model: &ModelParams, dev: &JointCorpus) -> Result<f64, TrainError> {
    if dev.sentences.is_empty() {
        return Ok(0.0);
    }
    let gold = Corpus {
        language: "joint".into(),
        scheme: dev.scheme,
        layout: ColumnLayout::simple(),
        sentences: dev.sentences.iter().map(|s| s.sentence.clone()).collect(),
        repair_warnings: 0,
    };
    let mut pred_sentences = Vec::with_capacity(dev.sentences.len());
    for js in &dev.sentences {
        let tags = model.predict(&js.language, &js.sentence)?;
        let tokens = js
            .sentence
            .tokens
            .iter()
            .zip(tags)
            .map(|(t, tag)| Token::new(t.surface.clone(), tag))
            .collect();
        pred_sentences.push(Sentence::new(tokens));
    }
    let pred = Corpus {
        language: "joint".into(),
        scheme: dev.scheme,
        layout: ColumnLayout::simple(),
        sentences: pred_sentences,
        repair_warnings: 0,
    };
    Ok(evaluate_f1(&gold, &pred)?.overall.f1)
}

/// Train with per-sentence SGD; one epoch is one seeded-shuffled pass. Stops
/// after `patience` epochs without a dev-F1 improvement or at `max_epochs`,
/// and leaves the model at its best-dev epoch.
pub fn train(
    model: &ModelParams,
    train: &JointCorpus,
    dev: &JointCorpus,
    hp: &Hyperparams,
) -> Result<TrainReport, TrainError> {
    let params = model.registry();
    let mut report = TrainReport {
        sharing_line: sharing_line(model),
        ..TrainReport::default()
    };
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_snapshot = model.snapshot();
    let n = train.sentences.len();

    for epoch in 0..hp.max_epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = substream(hp.seed, &format!("shuffle.{epoch}"));
        order.shuffle(&mut rng);

        let mut nll_sum = 0.0;
        for &idx in &order {
            let js = &train.sentences[idx];
            model.zero_grads();
            let mut tape = Tape::new();
            let nll = model.nll(&mut tape, &js.language, &js.sentence)?;
            let loss = tape.scalar_value(nll);
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    sentence: idx,
                    nll: loss,
                });
            }
            nll_sum += loss;
            tape.backward(nll);
            let norm: f64 = params.iter().map(|p| p.grad_sq_norm()).sum::<f64>().sqrt();
            let scale = if norm > GRAD_CLIP_NORM {
                GRAD_CLIP_NORM / norm
            } else {
                1.0
            };
            for p in &params {
                p.sgd_step(hp.learning_rate, scale);
            }
        }

        let dev_f1 = joint_dev_f1(model, dev)?;
        let train_nll = if n == 0 { 0.0 } else { nll_sum / n as f64 };
        report.epochs.push(EpochStats {
            epoch,
            train_nll,
            dev_f1,
            wall_secs: started.elapsed().as_secs_f64(),
        });

        if dev_f1 > best_f1 {
            best_f1 = dev_f1;
            best_epoch = epoch;
            best_snapshot = model.snapshot();
        } else if epoch - best_epoch >= hp.patience {
            break;
        }
    }

    ModelParams::restore(&best_snapshot);
    report.best_epoch = best_epoch;
    report.best_dev_f1 = best_f1.max(0.0);
    Ok(report)
}

pub struct GridOutcome {
    pub points: Vec<(Hyperparams, Result<TrainReport, TrainError>)>,
    /// Index of the point with the highest dev F1, if any point succeeded.
    pub best: Option<usize>,
}

/// Sweep hyperparameter points; each point builds its own model via
/// `builder`. Failed points are reported, not fatal.
pub fn grid_search<B>(
    grid: &[Hyperparams],
    builder: B,
    train_set: &JointCorpus,
    dev_set: &JointCorpus,
) -> GridOutcome
where
    B: Fn(&Hyperparams) -> Result<ModelParams, ModelError>,
{
    let mut points = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, hp) in grid.iter().enumerate() {
        let outcome = builder(hp)
            .map_err(TrainError::from)
            .and_then(|model| train(&model, train_set, dev_set, hp));
        if let Ok(report) = &outcome {
            if best.is_none() || report.best_dev_f1 > best.unwrap().1 {
                best = Some((i, report.best_dev_f1));
            }
        }
        points.push((hp.clone(), outcome));
    }
    GridOutcome {
        points,
        best: best.map(|(i, _)| i),
    }
}

/// Token accuracy of the model's predictions on a joint corpus.
pub fn token_accuracy(model: &ModelParams, data: &JointCorpus) -> Result<f64, TrainError> {
    let mut total = 0usize;
    let mut hit = 0usize;
    for js in &data.sentences {
        let tags = model.predict(&js.language, &js.sentence)?;
        for (tok, tag) in js.sentence.tokens.iter().zip(tags) {
            total += 1;
            if tok.tag == tag {
                hit += 1;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TagScheme;
    use crate::model::{build_model, EmbeddingSource, SharingConfig};

    fn fixture() -> (Corpus, String) {
        // trivially learnable: one entity word, one filler word
        let mut sentences = Vec::new();
        for i in 0..10 {
            let toks = if i % 2 == 0 {
                vec![Token::new("Anna", "S-PER"), Token::new("runs", "O")]
            } else {
                vec![Token::new("runs", "O"), Token::new("Anna", "S-PER")]
            };
            sentences.push(Sentence::new(toks));
        }
        let corpus = Corpus {
            language: "en".into(),
            scheme: TagScheme::Iobes,
            layout: ColumnLayout::simple(),
            sentences,
            repair_warnings: 0,
        };
        (corpus, "runs 0.1 0.2\nanna 0.3 0.4\n".to_string())
    }

    fn hp(lr: f64, epochs: usize) -> Hyperparams {
        Hyperparams {
            lstm_size: 4,
            max_filter_width: 2,
            filters_per_width: 2,
            learning_rate: lr,
            max_epochs: epochs,
            patience: epochs,
            seed: 3,
        }
    }

    #[test]
    fn zero_lr_leaves_parameters_untouched() {
        let (c, emb) = fixture();
        let model = build_model(
            (4, 2, 2),
            &[&c],
            &EmbeddingSource::Shared(emb),
            SharingConfig::default(),
            3,
        )
        .unwrap();
        let before: Vec<Vec<f64>> = model.registry().iter().map(|p| p.value().data().to_vec()).collect();
        train(&model, &c.as_joint(), &c.as_joint(), &hp(0.0, 3)).unwrap();
        let after: Vec<Vec<f64>> = model.registry().iter().map(|p| p.value().data().to_vec()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn overfits_tiny_fixture() {
        let (c, emb) = fixture();
        let model = build_model(
            (4, 2, 2),
            &[&c],
            &EmbeddingSource::Shared(emb),
            SharingConfig::default(),
            3,
        )
        .unwrap();
        let report = train(&model, &c.as_joint(), &c.as_joint(), &hp(0.3, 40)).unwrap();
        let acc = token_accuracy(&model, &c.as_joint()).unwrap();
        assert!(acc >= 0.99, "accuracy {acc}, report:\n{}", report.render());
    }

    #[test]
    fn same_seed_same_report() {
        let (c, emb) = fixture();
        let run = || {
            let model = build_model(
                (4, 2, 2),
                &[&c],
                &EmbeddingSource::Shared(emb.clone()),
                SharingConfig::default(),
                3,
            )
            .unwrap();
            train(&model, &c.as_joint(), &c.as_joint(), &hp(0.2, 5)).unwrap()
        };
        let (r1, r2) = (run(), run());
        assert_eq!(r1.render(), r2.render());
        for (a, b) in r1.epochs.iter().zip(r2.epochs.iter()) {
            assert_eq!(a.train_nll.to_bits(), b.train_nll.to_bits());
        }
    }

    #[test]
    fn early_stopping_returns_best_epoch() {
        let (c, emb) = fixture();
        let model = build_model(
            (4, 2, 2),
            &[&c],
            &EmbeddingSource::Shared(emb),
            SharingConfig::default(),
            3,
        )
        .unwrap();
        let mut h = hp(0.3, 30);
        h.patience = 5;
        let report = train(&model, &c.as_joint(), &c.as_joint(), &h).unwrap();
        let argmax = report
            .epochs
            .iter()
            .max_by(|a, b| a.dev_f1.partial_cmp(&b.dev_f1).unwrap())
            .unwrap();
        // ties earliest: best_epoch has the max dev F1 and no earlier epoch does
        assert_eq!(report.epochs[report.best_epoch].dev_f1, argmax.dev_f1);
        for e in &report.epochs[..report.best_epoch] {
            assert!(e.dev_f1 < argmax.dev_f1);
        }
    }

    #[test]
    fn grid_reports_all_points_and_picks_finite_winner() {
        let (c, emb) = fixture();
        let grid = vec![hp(0.2, 3), hp(1000.0, 3)]; // second likely diverges or does worse
        let out = grid_search(
            &grid,
            |h| {
                build_model(
                    (h.lstm_size, h.max_filter_width, h.filters_per_width),
                    &[&c],
                    &EmbeddingSource::Shared(emb.clone()),
                    SharingConfig::default(),
                    h.seed,
                )
            },
            &c.as_joint(),
            &c.as_joint(),
        );
        assert_eq!(out.points.len(), 2);
        assert!(out.best.is_some());
    }

    #[test]
    fn singleton_grid_returns_that_point() {
        let (c, emb) = fixture();
        let grid = vec![hp(0.1, 2)];
        let out = grid_search(
            &grid,
            |h| {
                build_model(
                    (h.lstm_size, h.max_filter_width, h.filters_per_width),
                    &[&c],
                    &EmbeddingSource::Shared(emb.clone()),
                    SharingConfig::default(),
                    h.seed,
                )
            },
            &c.as_joint(),
            &c.as_joint(),
        );
        assert_eq!(out.best, Some(0));
    }
}
