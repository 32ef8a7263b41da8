//! Seeded synthetic corpora for tests, examples and desk-scale experiments.
//!
//! Each label owns a cue word. A document's gold labels plant their cues in
//! the body sections; only a fraction of them also appear in the title or
//! abstract, so full text carries strictly more signal than the abstract.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ArticleRecord, Section, SectionTexts};
use crate::mesh::{MeshDescriptor, MeshVocabulary};

const SYLLABLES: [&str; 16] = [
    "ba", "ko", "ri", "te", "mu", "sa", "lo", "ne", "vi", "du", "pa", "gi", "fo", "ze", "ha", "ru",
];

/// Two-syllable filler word number `i` (256 distinct words).
pub fn filler_word(i: usize) -> String {
    format!("{}{}", SYLLABLES[i % 16], SYLLABLES[(i / 16) % 16])
}

/// Cue word of label `i`; never collides with a filler word.
pub fn cue_word(i: usize) -> String {
    format!("{}{}{}in", SYLLABLES[i % 16], SYLLABLES[(i / 16) % 16], SYLLABLES[(i / 256) % 16])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub labels: usize,
    pub documents: usize,
    pub seed: u64,
    /// Inclusive range of gold labels per document.
    pub labels_per_doc: (usize, usize),
    /// Probability that a gold label's cue also appears in the title or abstract.
    pub abstract_cue_rate: f64,
    pub title_tokens: usize,
    pub abstract_tokens: usize,
    pub body_tokens: usize,
    /// Publication years, assigned round-robin.
    pub years: Vec<i32>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            labels: 20,
            documents: 32,
            seed: 0,
            labels_per_doc: (1, 3),
            abstract_cue_rate: 1.0,
            title_tokens: 8,
            abstract_tokens: 24,
            body_tokens: 24,
            years: vec![2016, 2017, 2018],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub vocabulary: MeshVocabulary,
    pub records: Vec<ArticleRecord>,
}

/// A random forest of descriptors: label `i` hangs below a random earlier
/// label unless it is one of the first few roots.
pub fn synthetic_vocabulary(labels: usize, rng: &mut ChaCha8Rng) -> MeshVocabulary {
    let roots = labels.clamp(1, 4);
    let mut trees: Vec<String> = Vec::with_capacity(labels);
    let mut children = vec![0usize; labels];
    for i in 0..labels {
        let tree = if i < roots {
            format!("Z{i:02}")
        } else {
            let parent = rng.gen_range(0..i);
            children[parent] += 1;
            format!("{}.{:03}", trees[parent], children[parent])
        };
        trees.push(tree);
    }
    let descriptors = trees
        .into_iter()
        .enumerate()
        .map(|(i, tree)| MeshDescriptor {
            ui: format!("D{:06}", 900_000 + i),
            name: cue_word(i),
            tree_numbers: vec![tree],
        })
        .collect();
    MeshVocabulary::from_descriptors(descriptors).expect("generated UIs are unique")
}

fn text(rng: &mut ChaCha8Rng, tokens: usize, cues: &[usize]) -> String {
    let mut words: Vec<String> = (0..tokens.max(1)).map(|_| filler_word(rng.gen_range(0..256))).collect();
    for &c in cues {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, cue_word(c));
    }
    let mut s = words.join(" ");
    s.push('.');
    s
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocabulary = synthetic_vocabulary(spec.labels, &mut rng);
    let (lo, hi) = spec.labels_per_doc;
    let hi = hi.clamp(1, spec.labels.max(1));
    let lo = lo.clamp(1, hi);
    let all: Vec<usize> = (0..spec.labels).collect();
    let body = [Section::Intro, Section::Methods, Section::Results, Section::Discuss];

    let records = (0..spec.documents)
        .map(|i| {
            let k = rng.gen_range(lo..=hi);
            let gold: BTreeSet<usize> = all.choose_multiple(&mut rng, k).copied().collect();
            let mut in_abstract = Vec::new();
            let mut per_body: [Vec<usize>; 4] = Default::default();
            for &g in &gold {
                if rng.gen_bool(spec.abstract_cue_rate.clamp(0.0, 1.0)) {
                    in_abstract.push(g);
                }
                per_body[rng.gen_range(0..4)].push(g);
            }
            let (in_title, in_abs) = in_abstract.split_at(in_abstract.len() / 2);
            let mut sections = SectionTexts::default();
            sections.set(Section::Title, Some(text(&mut rng, spec.title_tokens, in_title)));
            sections.set(Section::Abstract, Some(text(&mut rng, spec.abstract_tokens, in_abs)));
            for (s, cues) in body.iter().zip(&per_body) {
                sections.set(*s, Some(text(&mut rng, spec.body_tokens, cues)));
            }
            sections.set(Section::FigCaptions, Some(text(&mut rng, 6, &[])));
            let mesh: BTreeMap<String, String> = gold
                .iter()
                .map(|&g| {
                    let d = vocabulary.get(g).expect("label in range");
                    (d.ui.clone(), d.name.clone())
                })
                .collect();
            ArticleRecord {
                pmid: (10_000 + i).to_string(),
                sections,
                journal: "Synthetic Reports".into(),
                year: spec.years[i % spec.years.len().max(1)],
                doi: Some(format!("10.5555/syn.{i}")),
                authors: vec!["Ada,Lovelace".into()],
                mesh,
                chemicals: Vec::new(),
                suppl_mesh: Vec::new(),
            }
        })
        .collect();
    SyntheticCorpus { vocabulary, records }
}
