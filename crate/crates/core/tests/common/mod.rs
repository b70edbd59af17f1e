//! Synthetic bilingual data for the acceptance suite: two toy languages with
//! different filler vocabularies but shared orthographic entity cues
//! (person names end in "-son", locations end in "-ia").

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use xlner::corpus::{ColumnLayout, Corpus, Sentence, TagScheme, Token};
use xlner::rng::substream;

pub const PER_STEMS: &[&str] = &[
    "Erik", "Jak", "Karl", "Thor", "Ander", "Niel", "Olaf", "Sven", "Gud", "Leif", "Hal", "Bjorn",
    "Ragn", "Sig", "Arn", "Vald", "Harald", "Knut",
];
pub const LOC_STEMS: &[&str] = &[
    "Veld", "Tarn", "Bor", "Mar", "Quel", "Ost", "Nor", "Sud", "Gal", "Ith", "Frank", "Dan",
];
pub const FILL_A: &[&str] = &[
    "the", "old", "dog", "walks", "near", "river", "and", "sings", "under", "bright", "moon",
    "trades", "with", "merchants", "from",
];
pub const FILL_B: &[&str] = &[
    "le", "vieux", "chien", "marche", "pres", "fleuve", "et", "chante", "sous", "claire", "lune",
    "troque", "avec", "marchands", "de",
];

fn capitalize(w: &str) -> String {
    let mut cs = w.chars();
    match cs.next() {
        Some(f) => f.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

pub fn synth_sentence(rng: &mut ChaCha20Rng, fillers: &[&str]) -> Sentence {
    let n = rng.gen_range(3..=6);
    let mut tokens = Vec::with_capacity(n);
    let mut entities = 0usize;
    for i in 0..n {
        let r: f64 = rng.gen();
        if r < 0.22 && entities < 2 {
            let stem = PER_STEMS[rng.gen_range(0..PER_STEMS.len())];
            tokens.push(Token::new(format!("{stem}son"), "S-PER"));
            entities += 1;
        } else if r < 0.40 && entities < 2 {
            let stem = LOC_STEMS[rng.gen_range(0..LOC_STEMS.len())];
            tokens.push(Token::new(format!("{stem}ia"), "S-LOC"));
            entities += 1;
        } else {
            let w = fillers[rng.gen_range(0..fillers.len())];
            // sentence-initial capitalization: capitalization alone must not
            // identify entities
            let w = if i == 0 { capitalize(w) } else { w.to_string() };
            tokens.push(Token::new(w, "O"));
        }
    }
    if entities == 0 {
        let stem = PER_STEMS[rng.gen_range(0..PER_STEMS.len())];
        let last = tokens.len() - 1;
        tokens[last] = Token::new(format!("{stem}son"), "S-PER");
    }
    Sentence::new(tokens)
}

pub fn synth_corpus(lang: &str, fillers: &[&str], n: usize, seed: u64, label: &str) -> Corpus {
    let mut rng = substream(seed, label);
    Corpus {
        language: lang.into(),
        scheme: TagScheme::Iobes,
        layout: ColumnLayout::simple(),
        sentences: (0..n).map(|_| synth_sentence(&mut rng, fillers)).collect(),
        repair_warnings: 0,
    }
}

/// A shared embedding file covering both languages' filler vocabularies.
/// Entity words stay out-of-vocabulary, so suffix cues must come from the
/// character CNN.
pub fn synth_embeddings(seed: u64) -> String {
    let mut rng = substream(seed, "synth.embeddings");
    let mut words: Vec<&str> = FILL_A.iter().chain(FILL_B.iter()).copied().collect();
    words.sort_unstable();
    words.dedup();
    let mut out = String::new();
    for w in words {
        out.push_str(w);
        for _ in 0..8 {
            out.push_str(&format!(" {:.4}", rng.gen_range(-0.5..0.5)));
        }
        out.push('\n');
    }
    out
}
