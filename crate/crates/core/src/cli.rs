//! Command implementations behind the `xlner` binary: config file parsing,
//! convert/train/tag/eval/sweep/grid, and the exit-code contract
//! (0 success, 1 usage/config, 2 data format, 3 numeric failure).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::corpus::{
    convert_scheme, evaluate_f1, merge_shuffle, parse_conll, subsample, write_conll, ColumnLayout,
    Corpus, CorpusError, JointCorpus, TagScheme,
};
use crate::lexicon::LexiconError;
use crate::model::{
    build_model, load_checkpoint, save_checkpoint, EmbeddingSource, ModelError, ModelParams,
    SharingConfig,
};
use crate::training::{grid_search, train, Hyperparams, TrainError, TrainReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("io: {0}: {1}")]
    Io(PathBuf, std::io::Error),
}

impl CliError {
    /// Stable exit-code contract for scripting.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(..) => 1,
            CliError::Corpus(_) | CliError::Lexicon(_) => 2,
            CliError::Model(ModelError::Lexicon(_)) => 2,
            CliError::Model(ModelError::Checkpoint(_)) => 2,
            CliError::Model(_) => 1,
            CliError::Train(TrainError::Diverged { .. }) => 3,
            CliError::Train(TrainError::Model(_)) => 1,
            CliError::Train(TrainError::Corpus(_)) => 2,
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// One language's data paths and column layout.
#[derive(Debug, Clone)]
pub struct LangConfig {
    pub name: String,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub layout: ColumnLayout,
}

/// Parsed run configuration: sections of key=value lines, flag overrides
/// applied by the binary before commands run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub scheme: TagScheme,
    pub languages: Vec<LangConfig>,
    pub shared_embeddings: Option<PathBuf>,
    pub sharing: SharingConfig,
    pub hyperparams: Hyperparams,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, Default)]
pub struct GridSpec {
    pub lstm_sizes: Vec<usize>,
    pub max_filter_widths: Vec<usize>,
    pub filters_per_width: Vec<usize>,
    pub learning_rates: Vec<f64>,
}

fn parse_bool(v: &str, key: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: std::str::FromStr>(v: &str, key: &str) -> Result<Vec<T>, CliError> {
    v.split(',')
        .map(|s| parse_num(s.trim(), key))
        .collect()
}

impl RunConfig {
    /// Parse the line-oriented `[section]` / `key = value` format.
    /// `#` starts a comment; language sections keep file order.
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig {
            seed: 0,
            scheme: TagScheme::Iob1,
            languages: Vec::new(),
            shared_embeddings: None,
            sharing: SharingConfig {
                share_filters: false,
                share_decoder: false,
                share_lstm: true,
                shared_embedding_space: false,
            },
            hyperparams: Hyperparams::default(),
            checkpoint: None,
            report: None,
            grid: None,
        };
        let mut seed_seen = false;
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                if let Some(lang) = section.strip_prefix("lang.") {
                    if !cfg.languages.iter().any(|l| l.name == lang) {
                        cfg.languages.push(LangConfig {
                            name: lang.to_string(),
                            train: None,
                            dev: None,
                            test: None,
                            embeddings: None,
                            layout: ColumnLayout::simple(),
                        });
                    }
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let full = format!("{section}.{key}");
            match (section.as_str(), key) {
                ("run", "seed") => {
                    cfg.seed = parse_num(value, &full)?;
                    seed_seen = true;
                }
                ("run", "scheme") => {
                    cfg.scheme = TagScheme::parse(value).ok_or_else(|| {
                        CliError::Config(format!("unknown scheme '{value}'"))
                    })?;
                }
                ("embeddings", "shared") => cfg.shared_embeddings = Some(value.into()),
                ("sharing", "filters") => cfg.sharing.share_filters = parse_bool(value, &full)?,
                ("sharing", "decoder") => cfg.sharing.share_decoder = parse_bool(value, &full)?,
                ("sharing", "lstm") => cfg.sharing.share_lstm = parse_bool(value, &full)?,
                ("sharing", "shared_embedding_space") => {
                    cfg.sharing.shared_embedding_space = parse_bool(value, &full)?
                }
                ("hyperparams", "lstm_size") => cfg.hyperparams.lstm_size = parse_num(value, &full)?,
                ("hyperparams", "max_filter_width") => {
                    cfg.hyperparams.max_filter_width = parse_num(value, &full)?
                }
                ("hyperparams", "filters_per_width") => {
                    cfg.hyperparams.filters_per_width = parse_num(value, &full)?
                }
                ("hyperparams", "learning_rate") => {
                    cfg.hyperparams.learning_rate = parse_num(value, &full)?
                }
                ("hyperparams", "max_epochs") => {
                    cfg.hyperparams.max_epochs = parse_num(value, &full)?
                }
                ("hyperparams", "patience") => cfg.hyperparams.patience = parse_num(value, &full)?,
                ("output", "checkpoint") => cfg.checkpoint = Some(value.into()),
                ("output", "report") => cfg.report = Some(value.into()),
                ("grid", _) => {
                    let grid = cfg.grid.get_or_insert_with(GridSpec::default);
                    match key {
                        "lstm_sizes" => grid.lstm_sizes = parse_list(value, &full)?,
                        "max_filter_widths" => grid.max_filter_widths = parse_list(value, &full)?,
                        "filters_per_width" => grid.filters_per_width = parse_list(value, &full)?,
                        "learning_rates" => grid.learning_rates = parse_list(value, &full)?,
                        _ => return Err(CliError::Config(format!("unknown key '{full}'"))),
                    }
                }
                (s, key) if s.starts_with("lang.") => {
                    let lang = s.strip_prefix("lang.").unwrap().to_string();
                    let lc = cfg
                        .languages
                        .iter_mut()
                        .find(|l| l.name == lang)
                        .expect("section registered above");
                    match key {
                        "train" => lc.train = Some(value.into()),
                        "dev" => lc.dev = Some(value.into()),
                        "test" => lc.test = Some(value.into()),
                        "embeddings" => lc.embeddings = Some(value.into()),
                        "columns" => lc.layout.columns = parse_num(value, &full)?,
                        "surface_col" => lc.layout.surface = parse_num(value, &full)?,
                        "tag_col" => lc.layout.tag = parse_num(value, &full)?,
                        _ => return Err(CliError::Config(format!("unknown key '{full}'"))),
                    }
                }
                _ => return Err(CliError::Config(format!("unknown key '{full}'"))),
            }
        }
        if !seed_seen {
            return Err(CliError::Config("run.seed is mandatory".into()));
        }
        if cfg.languages.is_empty() || cfg.languages.len() > 2 {
            return Err(CliError::Config(format!(
                "expected 1 or 2 [lang.*] sections, got {}",
                cfg.languages.len()
            )));
        }
        cfg.hyperparams.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        RunConfig::parse(&read_file(path)?)
    }

    /// Fail fast: every referenced path must exist before any work starts.
    pub fn check_paths(&self) -> Result<(), CliError> {
        let mut paths: Vec<&PathBuf> = Vec::new();
        for l in &self.languages {
            paths.extend([&l.train, &l.dev, &l.test, &l.embeddings].into_iter().flatten());
        }
        if let Some(p) = &self.shared_embeddings {
            paths.push(p);
        }
        for p in paths {
            if !p.exists() {
                return Err(CliError::Config(format!("path does not exist: {}", p.display())));
            }
        }
        Ok(())
    }
}

/// Loaded data for a train/sweep/grid run.
pub struct RunData {
    pub train_corpora: Vec<Corpus>,
    pub dev_corpora: Vec<Corpus>,
    pub test_corpora: Vec<Option<Corpus>>,
    pub embeddings: EmbeddingSource,
}

pub fn load_run_data(cfg: &RunConfig) -> Result<RunData, CliError> {
    cfg.check_paths()?;
    let mut train_corpora = Vec::new();
    let mut dev_corpora = Vec::new();
    let mut test_corpora = Vec::new();
    for l in &cfg.languages {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone()
                .ok_or_else(|| CliError::Config(format!("lang.{}.{} is required", l.name, what)))
        };
        let tr = read_file(&need(&l.train, "train")?)?;
        let dv = read_file(&need(&l.dev, "dev")?)?;
        train_corpora.push(parse_conll(&tr, l.layout, cfg.scheme, &l.name)?);
        dev_corpora.push(parse_conll(&dv, l.layout, cfg.scheme, &l.name)?);
        test_corpora.push(match &l.test {
            Some(p) => Some(parse_conll(&read_file(p)?, l.layout, cfg.scheme, &l.name)?),
            None => None,
        });
    }
    let embeddings = if let Some(shared) = &cfg.shared_embeddings {
        EmbeddingSource::Shared(read_file(shared)?)
    } else {
        let mut files = BTreeMap::new();
        for l in &cfg.languages {
            let p = l.embeddings.clone().ok_or_else(|| {
                CliError::Config(format!(
                    "lang.{}.embeddings is required (or set embeddings.shared)",
                    l.name
                ))
            })?;
            files.insert(l.name.clone(), read_file(&p)?);
        }
        EmbeddingSource::PerLang(files)
    };
    Ok(RunData {
        train_corpora,
        dev_corpora,
        test_corpora,
        embeddings,
    })
}

fn make_joint(corpora: &[Corpus], seed: u64) -> Result<JointCorpus, CliError> {
    match corpora.len() {
        // monolingual runs go through the same merge path with an empty
        // second corpus, so they are bit-identical to a degenerate joint run
        1 => {
            let empty = Corpus {
                language: String::new(),
                scheme: corpora[0].scheme,
                layout: corpora[0].layout,
                sentences: Vec::new(),
                repair_warnings: 0,
            };
            Ok(merge_shuffle(&corpora[0], &empty, seed)?)
        }
        2 => Ok(merge_shuffle(&corpora[0], &corpora[1], seed)?),
        n => Err(CliError::Config(format!("expected 1 or 2 corpora, got {n}"))),
    }
}

/// `convert`: re-encode a CoNLL file under another tag scheme.
pub fn cmd_convert(
    input: &Path,
    output: &Path,
    layout: ColumnLayout,
    from: TagScheme,
    to: TagScheme,
) -> Result<(), CliError> {
    let corpus = parse_conll(&read_file(input)?, layout, from, "conv")?;
    let converted = convert_scheme(&corpus, to)?;
    write_file(output, &write_conll(&converted))?;
    if converted.repair_warnings > 0 {
        eprintln!("repaired {} out-of-scheme tag sequences", converted.repair_warnings);
    }
    Ok(())
}

/// `train`: monolingual or joint training; writes the best-dev checkpoint
/// and the report.
pub fn cmd_train(cfg: &RunConfig) -> Result<(ModelParams, TrainReport), CliError> {
    let data = load_run_data(cfg)?;
    let refs: Vec<&Corpus> = data.train_corpora.iter().collect();
    let hp = &cfg.hyperparams;
    let model = build_model(
        (hp.lstm_size, hp.max_filter_width, hp.filters_per_width),
        &refs,
        &data.embeddings,
        cfg.sharing,
        cfg.seed,
    )?;
    let train_set = make_joint(&data.train_corpora, cfg.seed)?;
    let dev_set = make_joint(&data.dev_corpora, cfg.seed)?;
    let mut report = train(&model, &train_set, &dev_set, hp)?;

    let tests: Vec<Corpus> = data.test_corpora.iter().flatten().cloned().collect();
    if !tests.is_empty() {
        let test_set = make_joint(&tests, cfg.seed)?;
        report.test_f1 = Some(crate::training::joint_dev_f1(&model, &test_set)?);
    }
    if let Some(path) = &cfg.checkpoint {
        save_checkpoint(&model, path)?;
    }
    if let Some(path) = &cfg.report {
        write_file(path, &report.render())?;
    }
    Ok((model, report))
}

/// `tag`: append a predicted-tag column to a CoNLL file.
pub fn cmd_tag(
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    lang: &str,
    layout: ColumnLayout,
) -> Result<(), CliError> {
    let model = load_checkpoint(checkpoint)?;
    if !model.languages.iter().any(|l| l == lang) {
        return Err(CliError::Config(format!(
            "checkpoint was trained for languages {:?}, not '{lang}'",
            model.languages
        )));
    }
    let corpus = parse_conll(&read_file(input)?, layout, model.scheme, lang)?;
    let mut out = String::new();
    for (i, sentence) in corpus.sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let tags = model.predict(lang, sentence)?;
        for (tok, tag) in sentence.tokens.iter().zip(tags) {
            let mut cols: Vec<&str> = Vec::with_capacity(layout.columns + 1);
            let mut extra_it = tok.extra.iter();
            for i in 0..layout.columns {
                if i == layout.surface {
                    cols.push(&tok.surface);
                } else if i == layout.tag {
                    cols.push(&tok.tag);
                } else {
                    cols.push(extra_it.next().map(|s| s.as_str()).unwrap_or("_"));
                }
            }
            cols.push(&tag);
            let _ = writeln!(out, "{}", cols.join(" "));
        }
    }
    write_file(output, &out)?;
    Ok(())
}

/// `eval`: entity-level P/R/F1 of a predicted file against gold.
pub fn cmd_eval(
    gold: &Path,
    pred: &Path,
    scheme: TagScheme,
    gold_layout: ColumnLayout,
    pred_layout: ColumnLayout,
) -> Result<String, CliError> {
    let g = parse_conll(&read_file(gold)?, gold_layout, scheme, "gold")?;
    let p = parse_conll(&read_file(pred)?, pred_layout, scheme, "pred")?;
    let report = evaluate_f1(&g, &p)?;
    Ok(report.render())
}

/// `sweep`: training-fraction sweep over the second (target) language;
/// per fraction, a joint run and a monolingual-target baseline.
pub fn cmd_sweep(cfg: &RunConfig, fractions: &[f64]) -> Result<String, CliError> {
    if cfg.languages.len() != 2 {
        return Err(CliError::Config(
            "sweep requires exactly 2 [lang.*] sections (source then target)".into(),
        ));
    }
    let data = load_run_data(cfg)?;
    let hp = &cfg.hyperparams;
    let mut out = String::new();
    for &fraction in fractions {
        let target_train = subsample(&data.train_corpora[1], fraction, cfg.seed)?;
        let eval_set = match &data.test_corpora[1] {
            Some(t) => t.as_joint(),
            None => data.dev_corpora[1].as_joint(),
        };

        // monolingual-target baseline
        let mono_emb = match &data.embeddings {
            EmbeddingSource::Shared(t) => EmbeddingSource::Shared(t.clone()),
            EmbeddingSource::PerLang(m) => EmbeddingSource::PerLang(m.clone()),
        };
        let mono = build_model(
            (hp.lstm_size, hp.max_filter_width, hp.filters_per_width),
            &[&target_train],
            &mono_emb,
            SharingConfig::all(),
            cfg.seed,
        )?;
        train(&mono, &target_train.as_joint(), &data.dev_corpora[1].as_joint(), hp)?;
        let mono_f1 = crate::training::joint_dev_f1(&mono, &eval_set)?;

        // joint run
        let refs = [&data.train_corpora[0], &target_train];
        let joint_model = build_model(
            (hp.lstm_size, hp.max_filter_width, hp.filters_per_width),
            &refs,
            &data.embeddings,
            cfg.sharing,
            cfg.seed,
        )?;
        let train_set = merge_shuffle(&data.train_corpora[0], &target_train, cfg.seed)?;
        let dev_set = merge_shuffle(&data.dev_corpora[0], &data.dev_corpora[1], cfg.seed)?;
        train(&joint_model, &train_set, &dev_set, hp)?;
        let joint_f1 = crate::training::joint_dev_f1(&joint_model, &eval_set)?;

        let _ = writeln!(out, "fraction={fraction} setting=mono f1={mono_f1:.6}");
        let _ = writeln!(out, "fraction={fraction} setting=joint f1={joint_f1:.6}");
    }
    Ok(out)
}

/// `grid`: hyperparameter grid search on the configured data.
pub fn cmd_grid(cfg: &RunConfig) -> Result<String, CliError> {
    let data = load_run_data(cfg)?;
    let spec = cfg.grid.clone().unwrap_or_default();
    let pick = |v: Vec<usize>, d: usize| if v.is_empty() { vec![d] } else { v };
    let lstm_sizes = pick(spec.lstm_sizes, cfg.hyperparams.lstm_size);
    let widths = pick(spec.max_filter_widths, cfg.hyperparams.max_filter_width);
    let filters = pick(spec.filters_per_width, cfg.hyperparams.filters_per_width);
    let lrs = if spec.learning_rates.is_empty() {
        vec![cfg.hyperparams.learning_rate]
    } else {
        spec.learning_rates
    };
    let mut grid = Vec::new();
    for &h in &lstm_sizes {
        for &k in &widths {
            for &f in &filters {
                for &lr in &lrs {
                    grid.push(Hyperparams {
                        lstm_size: h,
                        max_filter_width: k,
                        filters_per_width: f,
                        learning_rate: lr,
                        ..cfg.hyperparams.clone()
                    });
                }
            }
        }
    }
    let train_set = make_joint(&data.train_corpora, cfg.seed)?;
    let dev_set = make_joint(&data.dev_corpora, cfg.seed)?;
    let refs: Vec<&Corpus> = data.train_corpora.iter().collect();
    let outcome = grid_search(
        &grid,
        |hp| {
            build_model(
                (hp.lstm_size, hp.max_filter_width, hp.filters_per_width),
                &refs,
                &data.embeddings,
                cfg.sharing,
                cfg.seed,
            )
        },
        &train_set,
        &dev_set,
    );
    let mut out = String::new();
    for (hp, result) in &outcome.points {
        match result {
            Ok(r) => {
                let _ = writeln!(
                    out,
                    "lstm_size={} max_filter_width={} filters_per_width={} lr={} dev_f1={:.6}",
                    hp.lstm_size,
                    hp.max_filter_width,
                    hp.filters_per_width,
                    hp.learning_rate,
                    r.best_dev_f1
                );
            }
            Err(e) => {
                let _ = writeln!(
                    out,
                    "lstm_size={} max_filter_width={} filters_per_width={} lr={} error={}",
                    hp.lstm_size, hp.max_filter_width, hp.filters_per_width, hp.learning_rate, e
                );
            }
        }
    }
    if let Some(best) = outcome.best {
        let hp = &outcome.points[best].0;
        let _ = writeln!(
            out,
            "best: lstm_size={} max_filter_width={} filters_per_width={} lr={}",
            hp.lstm_size, hp.max_filter_width, hp.filters_per_width, hp.learning_rate
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = "\
# example run
[run]
seed = 42
scheme = iobes

[lang.en]
train = /tmp/en.train
dev = /tmp/en.dev
embeddings = /tmp/en.emb

[lang.es]
train = /tmp/es.train
dev = /tmp/es.dev
embeddings = /tmp/es.emb
columns = 4
tag_col = 3

[sharing]
filters = true
decoder = false

[hyperparams]
lstm_size = 8
learning_rate = 0.2
";

    #[test]
    fn config_parses_sections_in_order() {
        let cfg = RunConfig::parse(CONFIG).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.scheme, TagScheme::Iobes);
        assert_eq!(cfg.languages.len(), 2);
        assert_eq!(cfg.languages[0].name, "en");
        assert_eq!(cfg.languages[1].name, "es");
        assert_eq!(cfg.languages[1].layout.columns, 4);
        assert!(cfg.sharing.share_filters);
        assert!(!cfg.sharing.share_decoder);
        assert_eq!(cfg.hyperparams.lstm_size, 8);
        assert_eq!(cfg.hyperparams.learning_rate, 0.2);
        assert_eq!(cfg.hyperparams.seed, 42);
    }

    #[test]
    fn config_requires_seed() {
        let err = RunConfig::parse("[lang.en]\ntrain = x\n").unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = RunConfig::parse("[run]\nseed = 1\nbogus = 2\n[lang.en]\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }
}
