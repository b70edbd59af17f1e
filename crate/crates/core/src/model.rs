//! Full model assembly: the parameter registry, cross-lingual sharing as
//! aliasing, per-sentence computation graphs, prediction, and binary
//! checkpointing.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::{Param, Tape, Tensor, Var};
use crate::bilstm::{encode_sentence, BiLstmParams, GateParams, LstmCellParams};
use crate::charcnn::{CharVocab, Filter, FilterBank};
use crate::corpus::{extract_spans, Corpus, Sentence, TagScheme};
use crate::decoder::{decode, DecoderParams, TagSet};
use crate::lexicon::{
    extend_vocab, load_embeddings, LanguageProjection, Lexicon, ProjectionMode, WordVocab,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("expected 1 or 2 corpora, got {0}")]
    BadCorpusCount(usize),
    #[error("corpora use different schemes: {0} vs {1}")]
    SchemeMismatch(TagScheme, TagScheme),
    #[error("entity tag sets differ across languages: {0:?} vs {1:?}")]
    TagSetMismatch(Vec<String>, Vec<String>),
    #[error("shared embedding space requires a single embedding file, got per-language files")]
    SharedSpaceNeedsOneFile,
    #[error("per-language embeddings required for languages {0:?}, missing {1}")]
    MissingEmbeddings(Vec<String>, String),
    #[error("embedding dimensions differ across languages: {0} vs {1}")]
    EmbeddingDimMismatch(usize, usize),
    #[error(transparent)]
    Lexicon(#[from] crate::lexicon::LexiconError),
    #[error("unknown language '{0}' for this model")]
    UnknownLanguage(String),
    #[error("tag '{0}' not in the model's tag set")]
    UnknownTag(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which parameter groups are tied across the two languages of a joint run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SharingConfig {
    pub share_filters: bool,
    pub share_decoder: bool,
    pub share_lstm: bool,
    pub shared_embedding_space: bool,
}

impl SharingConfig {
    pub fn all() -> Self {
        SharingConfig {
            share_filters: true,
            share_decoder: true,
            share_lstm: true,
            shared_embedding_space: true,
        }
    }
}

/// A component that is either one object used by every language or one
/// object per language.
#[derive(Clone)]
pub enum Tied<T> {
    Shared(T),
    PerLang(BTreeMap<String, T>),
}

impl<T> Tied<T> {
    pub fn get(&self, lang: &str) -> Option<&T> {
        match self {
            Tied::Shared(t) => Some(t),
            Tied::PerLang(m) => m.get(lang),
        }
    }

    pub fn instances(&self) -> Vec<(&str, &T)> {
        match self {
            Tied::Shared(t) => vec![("", t)],
            Tied::PerLang(m) => m.iter().map(|(k, v)| (k.as_str(), v)).collect(),
        }
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, Tied::Shared(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub hidden: usize,
    pub max_filter_width: usize,
    pub filters_per_width: usize,
    pub emb_dim: usize,
}

/// The complete parameter set. Shared components hold the same underlying
/// `Param` storage for both languages.
pub struct ModelParams {
    pub languages: Vec<String>,
    pub scheme: TagScheme,
    pub tagset: TagSet,
    pub chars: CharVocab,
    pub sharing: SharingConfig,
    pub dims: ModelDims,
    pub filters: Tied<FilterBank>,
    pub lexicons: Tied<Lexicon>,
    pub lstm: BiLstmParams,
    pub decoder: Tied<DecoderParams>,
}

/// Embedding inputs for model construction: one file for a shared space, or
/// one file per language.
pub enum EmbeddingSource {
    Shared(String),
    PerLang(BTreeMap<String, String>),
}

fn entity_types(c: &Corpus) -> BTreeSet<String> {
    let mut types = BTreeSet::new();
    for s in &c.sentences {
        for sp in extract_spans(s, c.scheme) {
            types.insert(sp.etype);
        }
    }
    types
}

/// Assemble a model over 1 or 2 corpora. Shared components are aliased, not
/// copied; all initialization draws from per-parameter substreams of `seed`.
pub fn build_model(
    dims_hp: (usize, usize, usize), // (lstm hidden, max filter width, filters per width)
    corpora: &[&Corpus],
    embeddings: &EmbeddingSource,
    sharing: SharingConfig,
    seed: u64,
) -> Result<ModelParams, ModelError> {
    if corpora.is_empty() || corpora.len() > 2 {
        return Err(ModelError::BadCorpusCount(corpora.len()));
    }
    let joint = corpora.len() == 2;
    let mut sharing = sharing;
    if joint {
        // LSTM parameters are always shared between the two languages
        sharing.share_lstm = true;
    } else {
        sharing = SharingConfig::all();
    }
    let scheme = corpora[0].scheme;
    for c in corpora {
        if c.scheme != scheme {
            return Err(ModelError::SchemeMismatch(scheme, c.scheme));
        }
    }
    if joint {
        let (a, b) = (entity_types(corpora[0]), entity_types(corpora[1]));
        if !a.is_empty() && !b.is_empty() && a != b {
            return Err(ModelError::TagSetMismatch(
                a.into_iter().collect(),
                b.into_iter().collect(),
            ));
        }
    }
    let types: Vec<String> = corpora
        .iter()
        .flat_map(|c| entity_types(c))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let tagset = TagSet::for_types(scheme, &types);
    let languages: Vec<String> = corpora.iter().map(|c| c.language.clone()).collect();

    // character vocabulary over the union of training corpora
    let chars = CharVocab::build(
        corpora
            .iter()
            .flat_map(|c| c.sentences.iter())
            .flat_map(|s| s.tokens.iter())
            .map(|t| t.surface.as_str()),
    );

    // a monolingual run has one table either way; route it through the
    // shared path so the parameter is always named "emb"
    let mono_text;
    let embeddings = if !joint {
        match embeddings {
            EmbeddingSource::Shared(t) => EmbeddingSource::Shared(t.clone()),
            EmbeddingSource::PerLang(files) => {
                let lang = &languages[0];
                mono_text = files
                    .get(lang)
                    .ok_or_else(|| ModelError::MissingEmbeddings(languages.clone(), lang.clone()))?
                    .clone();
                EmbeddingSource::Shared(mono_text)
            }
        }
    } else {
        match embeddings {
            EmbeddingSource::Shared(t) => EmbeddingSource::Shared(t.clone()),
            EmbeddingSource::PerLang(files) => EmbeddingSource::PerLang(files.clone()),
        }
    };

    // embedding tables, extended with training words
    let lexicons = match (&sharing.shared_embedding_space, &embeddings) {
        (true, EmbeddingSource::PerLang(_)) if joint => {
            return Err(ModelError::SharedSpaceNeedsOneFile)
        }
        (_, EmbeddingSource::Shared(text)) => {
            let (vocab, table) = load_embeddings(text, "emb", seed)?;
            let words: Vec<&str> = corpora
                .iter()
                .flat_map(|c| c.sentences.iter())
                .flat_map(|s| s.tokens.iter())
                .map(|t| t.surface.as_str())
                .collect();
            let (vocab, table) = extend_vocab(&vocab, &table, words.into_iter(), seed);
            Tied::Shared(Lexicon {
                vocab,
                table,
                projection: LanguageProjection::identity(),
            })
        }
        (_, EmbeddingSource::PerLang(files)) => {
            let mut map = BTreeMap::new();
            let mut dim: Option<usize> = None;
            for (c, lang) in corpora.iter().zip(languages.iter()) {
                let text = files.get(lang).ok_or_else(|| {
                    ModelError::MissingEmbeddings(languages.clone(), lang.clone())
                })?;
                let (vocab, table) = load_embeddings(text, &format!("emb.{lang}"), seed)?;
                let words = c
                    .sentences
                    .iter()
                    .flat_map(|s| s.tokens.iter())
                    .map(|t| t.surface.as_str());
                let (vocab, table) = extend_vocab(&vocab, &table, words, seed);
                let d = table.shape()[1];
                match dim {
                    None => dim = Some(d),
                    Some(d0) if d0 != d => return Err(ModelError::EmbeddingDimMismatch(d0, d)),
                    _ => {}
                }
                // monolingual: identity; joint with per-language spaces:
                // learned map into a common feature space
                let projection = if joint {
                    LanguageProjection::learned(&format!("proj.{lang}"), d)
                } else {
                    LanguageProjection::identity()
                };
                map.insert(
                    lang.clone(),
                    Lexicon {
                        vocab,
                        table,
                        projection,
                    },
                );
            }
            Tied::PerLang(map)
        }
    };

    let emb_dim = match &lexicons {
        Tied::Shared(l) => l.dim(),
        Tied::PerLang(m) => m.values().next().unwrap().dim(),
    };

    let (hidden, max_width, per_width) = dims_hp;
    let dims = ModelDims {
        hidden,
        max_filter_width: max_width,
        filters_per_width: per_width,
        emb_dim,
    };

    let filters = if sharing.share_filters || !joint {
        Tied::Shared(FilterBank::init("filters", max_width, per_width, chars.size(), seed))
    } else {
        Tied::PerLang(
            languages
                .iter()
                .map(|lang| {
                    (
                        lang.clone(),
                        FilterBank::init(
                            &format!("filters.{lang}"),
                            max_width,
                            per_width,
                            chars.size(),
                            seed,
                        ),
                    )
                })
                .collect(),
        )
    };

    let d1 = max_width * per_width;
    let input_dim = emb_dim + d1;
    let lstm = BiLstmParams::init("lstm", input_dim, hidden, seed);

    let decoder = if sharing.share_decoder || !joint {
        Tied::Shared(DecoderParams::init("decoder", tagset.len(), 2 * hidden, seed))
    } else {
        Tied::PerLang(
            languages
                .iter()
                .map(|lang| {
                    (
                        lang.clone(),
                        DecoderParams::init(
                            &format!("decoder.{lang}"),
                            tagset.len(),
                            2 * hidden,
                            seed,
                        ),
                    )
                })
                .collect(),
        )
    };

    Ok(ModelParams {
        languages,
        scheme,
        tagset,
        chars,
        sharing,
        dims,
        filters,
        lexicons,
        lstm,
        decoder,
    })
}

impl ModelParams {
    /// Every `Param`, each exactly once, in a stable order.
    pub fn registry(&self) -> Vec<Param> {
        let mut out = Vec::new();
        for (_, bank) in self.filters.instances() {
            out.extend(bank.params());
        }
        for (_, lex) in self.lexicons.instances() {
            out.push(lex.table.clone());
            out.extend(lex.projection.params());
        }
        out.extend(self.lstm.params());
        for (_, dec) in self.decoder.instances() {
            out.extend(dec.params());
        }
        out
    }

    pub fn zero_grads(&self) {
        for p in self.registry() {
            p.zero_grad();
        }
    }

    fn components(&self, lang: &str) -> Result<(&FilterBank, &Lexicon, &DecoderParams), ModelError> {
        let bank = self
            .filters
            .get(lang)
            .ok_or_else(|| ModelError::UnknownLanguage(lang.to_string()))?;
        let lex = self
            .lexicons
            .get(lang)
            .ok_or_else(|| ModelError::UnknownLanguage(lang.to_string()))?;
        let dec = self
            .decoder
            .get(lang)
            .ok_or_else(|| ModelError::UnknownLanguage(lang.to_string()))?;
        if !self.languages.iter().any(|l| l == lang) {
            return Err(ModelError::UnknownLanguage(lang.to_string()));
        }
        Ok((bank, lex, dec))
    }

    /// Build the BiLSTM encodings g_i for one sentence on the tape.
    pub fn encode(
        &self,
        tape: &mut Tape,
        lang: &str,
        sentence: &Sentence,
    ) -> Result<Vec<Var>, ModelError> {
        let (bank, lex, _) = self.components(lang)?;
        let inputs: Vec<Var> = sentence
            .tokens
            .iter()
            .map(|t| lex.input_vector(tape, &t.surface, bank, &self.chars))
            .collect();
        Ok(encode_sentence(tape, &self.lstm, &inputs))
    }

    /// Sentence NLL graph against the gold tags.
    pub fn nll(
        &self,
        tape: &mut Tape,
        lang: &str,
        sentence: &Sentence,
    ) -> Result<Var, ModelError> {
        let (_, _, dec) = self.components(lang)?;
        let y: Result<Vec<usize>, ModelError> = sentence
            .tokens
            .iter()
            .map(|t| {
                self.tagset
                    .index_of(&t.tag)
                    .ok_or_else(|| ModelError::UnknownTag(t.tag.clone()))
            })
            .collect();
        let g = self.encode(tape, lang, sentence)?;
        Ok(crate::decoder::sentence_nll(tape, dec, &g, &y?))
    }

    /// Viterbi-decode predicted tags for one sentence (frozen params).
    pub fn predict(&self, lang: &str, sentence: &Sentence) -> Result<Vec<String>, ModelError> {
        let (_, _, dec) = self.components(lang)?;
        let mut tape = Tape::new();
        let g = self.encode(&mut tape, lang, sentence)?;
        let g_values: Vec<Vec<f64>> = g.iter().map(|&v| tape.value(v).data().to_vec()).collect();
        let (seq, _) = decode(dec, &g_values);
        Ok(seq.into_iter().map(|i| self.tagset.label(i).to_string()).collect())
    }

    /// Snapshot all parameter values (for best-epoch restoration).
    pub fn snapshot(&self) -> Vec<(Param, Tensor)> {
        self.registry().into_iter().map(|p| {
            let v = p.value();
            (p, v)
        }).collect()
    }

    pub fn restore(snapshot: &[(Param, Tensor)]) {
        for (p, v) in snapshot {
            p.set_value(v.clone());
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpointing: self-describing binary container, format version 1.
// Layout: magic, version, config, vocabs, then (name, shape, f64 LE values)
// entries. Sharing structure is reconstructed from the stored config, so
// aliasing survives a round-trip.
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"XLNR";
const VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.0.write_all(&[v])
    }
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn string(&mut self, s: &str) -> std::io::Result<()> {
        self.u32(s.len() as u32)?;
        self.0.write_all(s.as_bytes())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn u8(&mut self) -> Result<u8, ModelError> {
        let mut b = [0u8; 1];
        self.0.read_exact(&mut b).map_err(truncated)?;
        Ok(b[0])
    }
    fn u32(&mut self) -> Result<u32, ModelError> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b).map_err(truncated)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> Result<u64, ModelError> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b).map_err(truncated)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> Result<f64, ModelError> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b).map_err(truncated)?;
        Ok(f64::from_le_bytes(b))
    }
    fn string(&mut self) -> Result<String, ModelError> {
        let n = self.u32()? as usize;
        let mut buf = vec![0u8; n];
        self.0.read_exact(&mut buf).map_err(truncated)?;
        String::from_utf8(buf).map_err(|_| ModelError::Checkpoint("invalid utf-8".into()))
    }
}

fn truncated(_: std::io::Error) -> ModelError {
    ModelError::Checkpoint("truncated file".into())
}

fn scheme_code(s: TagScheme) -> u8 {
    match s {
        TagScheme::Iob1 => 0,
        TagScheme::Iobes => 1,
        TagScheme::Io => 2,
    }
}

fn scheme_from(code: u8) -> Result<TagScheme, ModelError> {
    match code {
        0 => Ok(TagScheme::Iob1),
        1 => Ok(TagScheme::Iobes),
        2 => Ok(TagScheme::Io),
        _ => Err(ModelError::Checkpoint(format!("bad scheme code {code}"))),
    }
}

fn write_vocab<W: Write>(w: &mut Writer<W>, v: &WordVocab) -> std::io::Result<()> {
    let entries: Vec<(&str, usize)> = v.entries().collect();
    w.u32(entries.len() as u32)?;
    for (word, idx) in entries {
        w.string(word)?;
        w.u32(idx as u32)?;
    }
    w.u32(v.unk_index() as u32)
}

fn read_vocab<R: Read>(r: &mut Reader<R>) -> Result<WordVocab, ModelError> {
    let n = r.u32()? as usize;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let word = r.string()?;
        let idx = r.u32()? as usize;
        entries.push((word, idx));
    }
    let unk = r.u32()? as usize;
    Ok(WordVocab::from_entries(entries, unk))
}

pub fn save_checkpoint(model: &ModelParams, path: &Path) -> Result<(), ModelError> {
    let file = std::fs::File::create(path)?;
    let mut w = Writer(std::io::BufWriter::new(file));
    w.0.write_all(MAGIC)?;
    w.u32(VERSION)?;

    w.u8(scheme_code(model.scheme))?;
    w.u32(model.languages.len() as u32)?;
    for lang in &model.languages {
        w.string(lang)?;
    }
    let s = &model.sharing;
    for flag in [s.share_filters, s.share_decoder, s.share_lstm, s.shared_embedding_space] {
        w.u8(flag as u8)?;
    }
    for d in [
        model.dims.hidden,
        model.dims.max_filter_width,
        model.dims.filters_per_width,
        model.dims.emb_dim,
    ] {
        w.u32(d as u32)?;
    }

    let chars: Vec<(char, usize)> = model.chars.chars().collect();
    w.u32(model.chars.size() as u32)?;
    w.u32(chars.len() as u32)?;
    for (ch, idx) in chars {
        w.u32(ch as u32)?;
        w.u32(idx as u32)?;
    }

    w.u32(model.tagset.len() as u32)?;
    for label in model.tagset.labels() {
        w.string(label)?;
    }

    // lexicon structure: shared or per-language vocabs and projection modes
    w.u8(model.lexicons.is_shared() as u8)?;
    for (lang, lex) in model.lexicons.instances() {
        w.string(lang)?;
        write_vocab(&mut w, &lex.vocab)?;
        w.u8(matches!(lex.projection.mode, ProjectionMode::Learned) as u8)?;
    }
    w.u8(model.filters.is_shared() as u8)?;
    w.u8(model.decoder.is_shared() as u8)?;

    let params = model.registry();
    w.u64(params.len() as u64)?;
    for p in &params {
        w.string(&p.name())?;
        let v = p.value();
        w.u32(v.shape().len() as u32)?;
        for &d in v.shape() {
            w.u32(d as u32)?;
        }
        for &x in v.data() {
            w.f64(x)?;
        }
    }
    w.0.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams, ModelError> {
    let file = std::fs::File::open(path)?;
    let mut r = Reader(std::io::BufReader::new(file));
    let mut magic = [0u8; 4];
    r.0.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }

    let scheme = scheme_from(r.u8()?)?;
    let nlang = r.u32()? as usize;
    let mut languages = Vec::with_capacity(nlang);
    for _ in 0..nlang {
        languages.push(r.string()?);
    }
    let sharing = SharingConfig {
        share_filters: r.u8()? != 0,
        share_decoder: r.u8()? != 0,
        share_lstm: r.u8()? != 0,
        shared_embedding_space: r.u8()? != 0,
    };
    let dims = ModelDims {
        hidden: r.u32()? as usize,
        max_filter_width: r.u32()? as usize,
        filters_per_width: r.u32()? as usize,
        emb_dim: r.u32()? as usize,
    };

    let _char_size = r.u32()? as usize;
    let nchars = r.u32()? as usize;
    let mut char_entries = Vec::with_capacity(nchars);
    for _ in 0..nchars {
        let ch = char::from_u32(r.u32()?)
            .ok_or_else(|| ModelError::Checkpoint("bad char".into()))?;
        let idx = r.u32()? as usize;
        char_entries.push((ch, idx));
    }
    let chars = CharVocab::from_entries(char_entries);

    let ntags = r.u32()? as usize;
    let mut labels = Vec::with_capacity(ntags);
    for _ in 0..ntags {
        labels.push(r.string()?);
    }
    let tagset = TagSet::from_labels(labels);

    let lex_shared = r.u8()? != 0;
    let lex_count = if lex_shared { 1 } else { languages.len() };
    let mut lex_meta = Vec::with_capacity(lex_count);
    for _ in 0..lex_count {
        let lang = r.string()?;
        let vocab = read_vocab(&mut r)?;
        let learned = r.u8()? != 0;
        lex_meta.push((lang, vocab, learned));
    }
    let filters_shared = r.u8()? != 0;
    let decoder_shared = r.u8()? != 0;

    let nparams = r.u64()? as usize;
    let mut values: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..nparams {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(r.f64()?);
        }
        values.insert(name, Tensor::new(shape, data));
    }
    let mut take = |name: &str| -> Result<Tensor, ModelError> {
        values
            .remove(name)
            .ok_or_else(|| ModelError::Checkpoint(format!("missing parameter '{name}'")))
    };

    let build_bank = |take: &mut dyn FnMut(&str) -> Result<Tensor, ModelError>,
                      prefix: &str|
     -> Result<FilterBank, ModelError> {
        let mut filters = Vec::new();
        for w in 1..=dims.max_filter_width {
            for i in 0..dims.filters_per_width {
                let name = format!("{prefix}.w{w}.f{i}");
                filters.push(Filter {
                    weight: Param::new(format!("{name}.weight"), take(&format!("{name}.weight"))?),
                    bias: Param::new(format!("{name}.bias"), take(&format!("{name}.bias"))?),
                    width: w,
                });
            }
        }
        Ok(FilterBank {
            filters,
            max_width: dims.max_filter_width,
            vocab_size: chars.size(),
        })
    };

    let filters = if filters_shared {
        Tied::Shared(build_bank(&mut take, "filters")?)
    } else {
        let mut m = BTreeMap::new();
        for lang in &languages {
            m.insert(lang.clone(), build_bank(&mut take, &format!("filters.{lang}"))?);
        }
        Tied::PerLang(m)
    };

    let mut lexicons_map = BTreeMap::new();
    for (lang, vocab, learned) in lex_meta {
        let table_name = if lex_shared {
            "emb".to_string()
        } else {
            format!("emb.{lang}")
        };
        let table = Param::new(&table_name, take(&table_name)?);
        let projection = if learned {
            let prefix = format!("proj.{lang}");
            LanguageProjection {
                mode: ProjectionMode::Learned,
                weight: Some(Param::new(
                    format!("{prefix}.weight"),
                    take(&format!("{prefix}.weight"))?,
                )),
                bias: Some(Param::new(
                    format!("{prefix}.bias"),
                    take(&format!("{prefix}.bias"))?,
                )),
            }
        } else {
            LanguageProjection::identity()
        };
        lexicons_map.insert(
            lang,
            Lexicon {
                vocab,
                table,
                projection,
            },
        );
    }
    let lexicons = if lex_shared {
        Tied::Shared(lexicons_map.into_iter().next().unwrap().1)
    } else {
        Tied::PerLang(lexicons_map)
    };

    let build_cell = |take: &mut dyn FnMut(&str) -> Result<Tensor, ModelError>,
                      prefix: &str,
                      input_dim: usize|
     -> Result<LstmCellParams, ModelError> {
        let mut gates = Vec::new();
        for tag in ["i", "f", "o", "g"] {
            gates.push(GateParams {
                w: Param::new(format!("{prefix}.{tag}.w"), take(&format!("{prefix}.{tag}.w"))?),
                u: Param::new(format!("{prefix}.{tag}.u"), take(&format!("{prefix}.{tag}.u"))?),
                b: Param::new(format!("{prefix}.{tag}.b"), take(&format!("{prefix}.{tag}.b"))?),
            });
        }
        Ok(LstmCellParams {
            gates,
            hidden: dims.hidden,
            input_dim,
        })
    };
    let input_dim = dims.emb_dim + dims.max_filter_width * dims.filters_per_width;
    let lstm = BiLstmParams {
        forward: build_cell(&mut take, "lstm.fwd", input_dim)?,
        backward: build_cell(&mut take, "lstm.bwd", input_dim)?,
    };

    let build_decoder = |take: &mut dyn FnMut(&str) -> Result<Tensor, ModelError>,
                         prefix: &str|
     -> Result<DecoderParams, ModelError> {
        Ok(DecoderParams {
            w: Param::new(format!("{prefix}.w"), take(&format!("{prefix}.w"))?),
            a: Param::new(format!("{prefix}.a"), take(&format!("{prefix}.a"))?),
            tags: tagset.len(),
            input_dim: 2 * dims.hidden,
        })
    };
    let decoder = if decoder_shared {
        Tied::Shared(build_decoder(&mut take, "decoder")?)
    } else {
        let mut m = BTreeMap::new();
        for lang in &languages {
            m.insert(lang.clone(), build_decoder(&mut take, &format!("decoder.{lang}"))?);
        }
        Tied::PerLang(m)
    };

    if let Some(name) = values.keys().next() {
        return Err(ModelError::Checkpoint(format!(
            "unexpected extra parameter '{name}'"
        )));
    }

    Ok(ModelParams {
        languages,
        scheme,
        tagset,
        chars,
        sharing,
        dims,
        filters,
        lexicons,
        lstm,
        decoder,
    })
}
