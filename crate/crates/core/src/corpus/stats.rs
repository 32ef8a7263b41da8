use serde::Serialize;

use super::{token_count, ArticleRecord, Section};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionStat {
    pub section: &'static str,
    /// Articles that have the section.
    pub articles: usize,
    /// Mean whitespace-token count over those articles; 0 when none have it.
    pub average_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionStats {
    pub documents: usize,
    pub sections: Vec<SectionStat>,
}

impl SectionStats {
    pub fn get(&self, s: Section) -> &SectionStat {
        &self.sections[s.index()]
    }
}

pub fn corpus_stats(records: &[ArticleRecord]) -> SectionStats {
    let sections = Section::ALL
        .into_iter()
        .map(|s| {
            let lengths: Vec<usize> = records.iter().filter_map(|r| r.section(s)).map(token_count).collect();
            let average_length = if lengths.is_empty() {
                0.0
            } else {
                lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
            };
            SectionStat {
                section: s.display_name(),
                articles: lengths.len(),
                average_length,
            }
        })
        .collect();
    SectionStats {
        documents: records.len(),
        sections,
    }
}
