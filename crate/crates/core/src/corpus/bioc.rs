use std::io::BufRead;

use super::xml::{Element, XmlStream};
use super::{normalize_text, CorpusError, FullTextSections, Section, SectionTexts};

/// Streams `<document>` elements out of a BioC collection.
///
/// A document that violates the schema yields `Err(CorpusError::Schema)` and
/// the stream continues; malformed XML ends it.
pub struct BiocReader<R: BufRead> {
    stream: XmlStream<R>,
    done: bool,
}

impl<R: BufRead> BiocReader<R> {
    pub fn new(input: R) -> Self {
        BiocReader {
            stream: XmlStream::new(input),
            done: false,
        }
    }
}

impl<R: BufRead> Iterator for BiocReader<R> {
    type Item = Result<FullTextSections, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.stream.next_element(&["document"], &[]) {
            Ok(Some(doc)) => Some(document_sections(&doc)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Parses the first document of a BioC XML text.
pub fn parse_bioc_article(xml_text: &str) -> Result<FullTextSections, CorpusError> {
    BiocReader::new(xml_text.as_bytes())
        .next()
        .unwrap_or_else(|| Err(CorpusError::Schema("no <document> element".into())))
}

/// Parses every document of a BioC collection, failing on the first error.
pub fn parse_bioc_collection(xml_text: &str) -> Result<Vec<FullTextSections>, CorpusError> {
    BiocReader::new(xml_text.as_bytes()).collect()
}

fn infon(el: &Element, key: &str) -> Option<String> {
    el.children_named("infon")
        .find(|i| i.attr("key") == Some(key))
        .map(|i| i.text().trim().to_string())
        .filter(|t| !t.is_empty())
}

fn document_pmid(doc: &Element) -> Option<String> {
    let from_infon = std::iter::once(doc)
        .chain(doc.children_named("passage"))
        .find_map(|el| infon(el, "article-id_pmid"));
    from_infon
        .or_else(|| doc.child("id").map(|i| i.text().trim().to_string()))
        .filter(|p| !p.is_empty())
}

fn document_sections(doc: &Element) -> Result<FullTextSections, CorpusError> {
    let pmid = document_pmid(doc).ok_or_else(|| CorpusError::Schema("document without an id".into()))?;
    let mut sections = SectionTexts::default();
    for passage in doc.children_named("passage") {
        let Some(section) = infon(passage, "section_type").and_then(|t| Section::from_bioc_type(&t)) else {
            continue;
        };
        // Table bodies are markup dumps; only captions and footnotes are kept.
        if section == Section::TableCaptions && infon(passage, "type").as_deref() == Some("table") {
            continue;
        }
        if let Some(text) = passage.child("text") {
            sections.append(section, &normalize_text(&text.text()));
        }
    }
    if !sections.has(Section::Title) {
        return Err(CorpusError::Schema(format!("document {pmid} has no title passage")));
    }
    Ok(FullTextSections { pmid, sections })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn passage(section: &str, kind: &str, text: &str) -> String {
        format!(
            "<passage><infon key=\"section_type\">{section}</infon><infon key=\"type\">{kind}</infon>\
             <offset>0</offset><text>{text}</text></passage>"
        )
    }

    fn doc(id: &str, passages: &[String]) -> String {
        format!("<collection><source>PMC</source><document><id>{id}</id>{}</document></collection>", passages.concat())
    }

    #[test]
    fn passages_join_in_order() {
        let xml = doc(
            "1",
            &[
                passage("TITLE", "front", "T"),
                passage("INTRO", "paragraph", "A."),
                passage("REF", "ref", "dropped"),
                passage("INTRO", "paragraph", " B.\n"),
            ],
        );
        let s = parse_bioc_article(&xml).unwrap();
        assert_eq!(s.pmid, "1");
        assert_eq!(s.get(Section::Intro), Some("A. B."));
        assert_eq!(s.get(Section::TableCaptions), None);
    }

    #[test]
    fn pmid_infon_overrides_document_id() {
        let front = "<passage><infon key=\"article-id_pmid\">27976717</infon>\
                     <infon key=\"section_type\">TITLE</infon><text>x</text></passage>";
        let s = parse_bioc_article(&doc("PMC5171867", &[front.to_string()])).unwrap();
        assert_eq!(s.pmid, "27976717");
    }

    #[test]
    fn table_bodies_are_skipped() {
        let xml = doc(
            "2",
            &[
                passage("TITLE", "front", "T"),
                passage("TABLE", "table_caption", "Caption."),
                passage("TABLE", "table", "<xml/>"),
                passage("TABLE", "table_footnote", "Note."),
            ],
        );
        let s = parse_bioc_article(&xml).unwrap();
        assert_eq!(s.get(Section::TableCaptions), Some("Caption. Note."));
    }

    #[test]
    fn missing_id_and_title_are_schema_errors() {
        let no_id = "<collection><document>".to_string() + &passage("TITLE", "front", "T") + "</document></collection>";
        assert!(matches!(parse_bioc_article(&no_id), Err(CorpusError::Schema(_))));
        let no_title = doc("3", &[passage("INTRO", "paragraph", "x")]);
        assert!(matches!(parse_bioc_article(&no_title), Err(CorpusError::Schema(_))));
    }

    #[test]
    fn malformed_xml_carries_offset() {
        let bad = "<collection><document><id>1</id><passage></document></collection>";
        assert!(matches!(parse_bioc_article(bad), Err(CorpusError::Xml { .. })));
    }
}
