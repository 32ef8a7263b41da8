use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{CitationMetadata, CorpusError, FullTextSections, Section, SectionTexts};

/// Written in place of an absent section, DOI or empty concept list.
pub const NONE_MARKER: &str = "None";

/// One joined article: full-text sections plus citation metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticleRecord {
    pub pmid: String,
    pub sections: SectionTexts,
    pub journal: String,
    pub year: i32,
    pub doi: Option<String>,
    pub authors: Vec<String>,
    pub mesh: BTreeMap<String, String>,
    pub chemicals: Vec<String>,
    pub suppl_mesh: Vec<String>,
}

impl ArticleRecord {
    /// Combines parsed parts. `None` when the PMIDs differ or the year is missing.
    pub fn from_parts(text: FullTextSections, citation: CitationMetadata) -> Option<Self> {
        if text.pmid != citation.pmid {
            return None;
        }
        Some(ArticleRecord {
            pmid: text.pmid,
            sections: text.sections,
            journal: citation.journal,
            year: citation.year?,
            doi: citation.doi,
            authors: citation.authors,
            mesh: citation.mesh,
            chemicals: citation.chemicals,
            suppl_mesh: citation.suppl_mesh,
        })
    }

    pub fn section(&self, s: Section) -> Option<&str> {
        self.sections.get(s)
    }

    pub fn mesh_uis(&self) -> BTreeSet<&str> {
        self.mesh.keys().map(String::as_str).collect()
    }
}

struct Marked<'a>(Option<&'a str>);

impl Serialize for Marked<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.0.unwrap_or(NONE_MARKER))
    }
}

struct MarkedList<'a>(&'a [String]);

impl Serialize for MarkedList<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_empty() {
            s.serialize_str(NONE_MARKER)
        } else {
            self.0.serialize(s)
        }
    }
}

#[derive(Serialize)]
struct WireOut<'a> {
    #[serde(rename = "PMID")]
    pmid: &'a str,
    #[serde(rename = "TITLE")]
    title: Marked<'a>,
    #[serde(rename = "ABSTRACT")]
    abstract_: Marked<'a>,
    #[serde(rename = "INTRO")]
    intro: Marked<'a>,
    #[serde(rename = "METHODS")]
    methods: Marked<'a>,
    #[serde(rename = "RESULTS")]
    results: Marked<'a>,
    #[serde(rename = "DISCUSS")]
    discuss: Marked<'a>,
    #[serde(rename = "FIG_CAPTIONS")]
    fig_captions: Marked<'a>,
    #[serde(rename = "TABLE_CAPTIONS")]
    table_captions: Marked<'a>,
    #[serde(rename = "JOURNAL")]
    journal: &'a str,
    #[serde(rename = "YEAR")]
    year: String,
    #[serde(rename = "DOI")]
    doi: Marked<'a>,
    #[serde(rename = "AUTHORS")]
    authors: &'a [String],
    #[serde(rename = "MeSH")]
    mesh: &'a BTreeMap<String, String>,
    #[serde(rename = "CHEMICALS")]
    chemicals: MarkedList<'a>,
    #[serde(rename = "SUPPLMeSH")]
    suppl_mesh: MarkedList<'a>,
}

fn marked_string<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let s = String::deserialize(d)?;
    Ok((s != NONE_MARKER).then_some(s))
}

fn marked_list<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum ListOrMarker {
        List(Vec<String>),
        Marker(String),
    }
    match ListOrMarker::deserialize(d)? {
        ListOrMarker::List(v) => Ok(v),
        ListOrMarker::Marker(m) if m == NONE_MARKER => Ok(Vec::new()),
        ListOrMarker::Marker(m) => Err(serde::de::Error::custom(format!(
            "expected a list or \"{NONE_MARKER}\", found \"{m}\""
        ))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireIn {
    #[serde(rename = "PMID")]
    pmid: String,
    #[serde(rename = "TITLE", deserialize_with = "marked_string")]
    title: Option<String>,
    #[serde(rename = "ABSTRACT", deserialize_with = "marked_string")]
    abstract_: Option<String>,
    #[serde(rename = "INTRO", deserialize_with = "marked_string")]
    intro: Option<String>,
    #[serde(rename = "METHODS", deserialize_with = "marked_string")]
    methods: Option<String>,
    #[serde(rename = "RESULTS", deserialize_with = "marked_string")]
    results: Option<String>,
    #[serde(rename = "DISCUSS", deserialize_with = "marked_string")]
    discuss: Option<String>,
    #[serde(rename = "FIG_CAPTIONS", deserialize_with = "marked_string")]
    fig_captions: Option<String>,
    #[serde(rename = "TABLE_CAPTIONS", deserialize_with = "marked_string")]
    table_captions: Option<String>,
    #[serde(rename = "JOURNAL")]
    journal: String,
    #[serde(rename = "YEAR")]
    year: String,
    #[serde(rename = "DOI", deserialize_with = "marked_string")]
    doi: Option<String>,
    #[serde(rename = "AUTHORS")]
    authors: Vec<String>,
    #[serde(rename = "MeSH")]
    mesh: BTreeMap<String, String>,
    #[serde(rename = "CHEMICALS", deserialize_with = "marked_list")]
    chemicals: Vec<String>,
    #[serde(rename = "SUPPLMeSH", deserialize_with = "marked_list")]
    suppl_mesh: Vec<String>,
}

/// Serializes a record as one compact JSON object with the fixed key order.
pub fn emit_record(r: &ArticleRecord) -> String {
    let m = |s| Marked(r.sections.get(s));
    let wire = WireOut {
        pmid: &r.pmid,
        title: m(Section::Title),
        abstract_: m(Section::Abstract),
        intro: m(Section::Intro),
        methods: m(Section::Methods),
        results: m(Section::Results),
        discuss: m(Section::Discuss),
        fig_captions: m(Section::FigCaptions),
        table_captions: m(Section::TableCaptions),
        journal: &r.journal,
        year: r.year.to_string(),
        doi: Marked(r.doi.as_deref()),
        authors: &r.authors,
        mesh: &r.mesh,
        chemicals: MarkedList(&r.chemicals),
        suppl_mesh: MarkedList(&r.suppl_mesh),
    };
    serde_json::to_string(&wire).expect("record serialization cannot fail")
}

fn is_descriptor_ui(ui: &str) -> bool {
    ui.len() > 1 && ui.starts_with('D') && ui[1..].bytes().all(|b| b.is_ascii_digit())
}

pub fn parse_record(line: &str) -> Result<ArticleRecord, CorpusError> {
    let w: WireIn = serde_json::from_str(line)?;
    if w.pmid.is_empty() {
        return Err(CorpusError::Record("empty PMID".into()));
    }
    let year = w
        .year
        .parse()
        .map_err(|_| CorpusError::Record(format!("PMID {}: bad YEAR {:?}", w.pmid, w.year)))?;
    if let Some(ui) = w.mesh.keys().find(|k| !is_descriptor_ui(k)) {
        return Err(CorpusError::Record(format!("PMID {}: bad descriptor UI {ui:?}", w.pmid)));
    }
    let mut sections = SectionTexts::default();
    for (s, text) in Section::ALL.into_iter().zip([
        w.title,
        w.abstract_,
        w.intro,
        w.methods,
        w.results,
        w.discuss,
        w.fig_captions,
        w.table_captions,
    ]) {
        sections.set(s, text);
    }
    Ok(ArticleRecord {
        pmid: w.pmid,
        sections,
        journal: w.journal,
        year,
        doi: w.doi,
        authors: w.authors,
        mesh: w.mesh,
        chemicals: w.chemicals,
        suppl_mesh: w.suppl_mesh,
    })
}

/// Reads newline-delimited records, skipping blank lines.
pub fn read_records(input: impl BufRead) -> Result<Vec<ArticleRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            parse_record(&line).map_err(|e| CorpusError::Record(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}
