use std::collections::BTreeMap;
use std::io::BufRead;

use super::xml::{Element, XmlStream};
use super::{current_year, normalize_text, CitationMetadata, CorpusError, IndexingMode};

const TARGETS: [&str; 2] = ["PubmedArticle", "MedlineCitation"];
const SKIPPED: [&str; 1] = ["DeleteCitation"];

/// Streams citations out of a MEDLINE baseline file (`PubmedArticleSet`).
///
/// Same error policy as [`super::BiocReader`]: schema errors are per citation,
/// XML errors end the stream.
pub struct MedlineReader<R: BufRead> {
    stream: XmlStream<R>,
    done: bool,
}

impl<R: BufRead> MedlineReader<R> {
    pub fn new(input: R) -> Self {
        MedlineReader {
            stream: XmlStream::new(input),
            done: false,
        }
    }
}

impl<R: BufRead> Iterator for MedlineReader<R> {
    type Item = Result<CitationMetadata, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.stream.next_element(&TARGETS, &SKIPPED) {
            Ok(Some(el)) => Some(citation(&el)),
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

/// Parses the first citation (`PubmedArticle` or bare `MedlineCitation`).
pub fn parse_medline_citation(xml_text: &str) -> Result<CitationMetadata, CorpusError> {
    MedlineReader::new(xml_text.as_bytes())
        .next()
        .unwrap_or_else(|| Err(CorpusError::Schema("no citation element".into())))
}

pub fn parse_medline_set(xml_text: &str) -> Result<Vec<CitationMetadata>, CorpusError> {
    MedlineReader::new(xml_text.as_bytes()).collect()
}

fn clean(el: &Element) -> String {
    normalize_text(&el.text())
}

fn indexing_mode(attr: Option<&str>) -> IndexingMode {
    match attr.map(str::trim) {
        None | Some("") | Some("Human") => IndexingMode::Human,
        Some("Curated") => IndexingMode::Curated,
        Some(_) => IndexingMode::Auto,
    }
}

fn leading_year(text: &str) -> Option<i32> {
    let digits: String = text.trim().chars().take_while(char::is_ascii_digit).collect();
    if digits.len() == 4 {
        digits.parse().ok()
    } else {
        None
    }
}

fn publication_year(article: Option<&Element>) -> Option<i32> {
    let article = article?;
    let pub_date = article.path(&["Journal", "JournalIssue", "PubDate"]);
    let year = pub_date
        .and_then(|d| d.child("Year").or_else(|| d.child("MedlineDate")))
        .and_then(|y| leading_year(&y.text()))
        .or_else(|| {
            article
                .path(&["ArticleDate", "Year"])
                .and_then(|y| leading_year(&y.text()))
        })?;
    (1800..=current_year()).contains(&year).then_some(year)
}

fn author_name(author: &Element) -> Option<String> {
    if let Some(c) = author.child("CollectiveName") {
        return Some(clean(c)).filter(|s| !s.is_empty());
    }
    let last = author.child("LastName").map(clean).filter(|s| !s.is_empty())?;
    match author
        .child("ForeName")
        .or_else(|| author.child("Initials"))
        .map(clean)
        .filter(|s| !s.is_empty())
    {
        Some(first) => Some(format!("{first},{last}")),
        None => Some(last),
    }
}

fn doi(article: Option<&Element>, root: &Element) -> Option<String> {
    let from_location = article.and_then(|a| {
        a.children_named("ELocationID")
            .find(|e| e.attr("EIdType") == Some("doi"))
            .map(clean)
    });
    let from_ids = || {
        root.path(&["PubmedData", "ArticleIdList"]).and_then(|l| {
            l.children_named("ArticleId")
                .find(|e| e.attr("IdType") == Some("doi"))
                .map(clean)
        })
    };
    from_location.or_else(from_ids).filter(|d| !d.is_empty())
}

fn citation(root: &Element) -> Result<CitationMetadata, CorpusError> {
    let medline = if root.name == "MedlineCitation" {
        root
    } else {
        root.child("MedlineCitation")
            .ok_or_else(|| CorpusError::Schema("PubmedArticle without MedlineCitation".into()))?
    };
    let pmid = medline
        .child("PMID")
        .map(clean)
        .filter(|p| !p.is_empty())
        .ok_or_else(|| CorpusError::Schema("citation without PMID".into()))?;
    let article = medline.child("Article");

    let journal = article
        .and_then(|a| a.child("Journal"))
        .and_then(|j| j.child("Title").or_else(|| j.child("ISOAbbreviation")))
        .map(clean)
        .or_else(|| medline.path(&["MedlineJournalInfo", "MedlineTA"]).map(clean))
        .unwrap_or_default();
    let language = article
        .and_then(|a| a.child("Language"))
        .map(clean)
        .unwrap_or_default();
    let authors = article
        .and_then(|a| a.child("AuthorList"))
        .map(|l| l.children_named("Author").filter_map(author_name).collect())
        .unwrap_or_default();

    let mut mesh = BTreeMap::new();
    if let Some(list) = medline.child("MeshHeadingList") {
        for heading in list.children_named("MeshHeading") {
            if let Some(d) = heading.child("DescriptorName") {
                if let Some(ui) = d.attr("UI") {
                    mesh.insert(ui.trim().to_string(), clean(d));
                }
            }
        }
    }
    let chemicals = medline
        .child("ChemicalList")
        .map(|l| {
            l.children_named("Chemical")
                .filter_map(|c| c.child("NameOfSubstance").map(clean))
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_default();
    let suppl_mesh = medline
        .child("SupplMeshList")
        .map(|l| {
            l.children_named("SupplMeshName")
                .map(clean)
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_default();

    Ok(CitationMetadata {
        pmid,
        language,
        indexing_mode: indexing_mode(medline.attr("IndexingMethod")),
        journal,
        year: publication_year(article),
        doi: doi(article, root),
        authors,
        mesh,
        chemicals,
        suppl_mesh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"<PubmedArticleSet>
<PubmedArticle><MedlineCitation Status="MEDLINE" Owner="NLM" IndexingMethod="Curated">
  <PMID Version="1">100</PMID>
  <Article><Journal><JournalIssue><PubDate><MedlineDate>1998 Dec-1999 Jan</MedlineDate></PubDate></JournalIssue>
  <Title>Some journal</Title></Journal>
  <AuthorList><Author><LastName>Doe</LastName><Initials>J</Initials></Author>
  <Author><CollectiveName>The Consortium</CollectiveName></Author></AuthorList>
  <Language>fre</Language><Language>eng</Language></Article>
  <ChemicalList><Chemical><RegistryNumber>0</RegistryNumber><NameOfSubstance UI="D1">Water</NameOfSubstance></Chemical></ChemicalList>
  <SupplMeshList><SupplMeshName Type="Disease" UI="C1">Rare syndrome</SupplMeshName></SupplMeshList>
</MedlineCitation>
<PubmedData><ArticleIdList><ArticleId IdType="doi">10.1/x</ArticleId></ArticleIdList></PubmedData></PubmedArticle>
<DeleteCitation><PMID>5</PMID></DeleteCitation>
<PubmedArticle><MedlineCitation><PMID>101</PMID><Article><Journal><JournalIssue><PubDate><Year>1700</Year></PubDate></JournalIssue></Journal></Article></MedlineCitation></PubmedArticle>
</PubmedArticleSet>"#;

    #[test]
    fn extracts_metadata_fields() {
        let all = parse_medline_set(SAMPLE).unwrap();
        assert_eq!(all.len(), 2);
        let c = &all[0];
        assert_eq!(c.pmid, "100");
        assert_eq!(c.indexing_mode, IndexingMode::Curated);
        assert_eq!(c.language, "fre");
        assert_eq!(c.year, Some(1998));
        assert_eq!(c.doi.as_deref(), Some("10.1/x"));
        assert_eq!(c.authors, vec!["J,Doe", "The Consortium"]);
        assert_eq!(c.chemicals, vec!["Water"]);
        assert_eq!(c.suppl_mesh, vec!["Rare syndrome"]);
        assert!(c.mesh.is_empty());
    }

    #[test]
    fn implausible_year_and_missing_fields() {
        let c = &parse_medline_set(SAMPLE).unwrap()[1];
        assert_eq!(c.year, None);
        assert_eq!(c.indexing_mode, IndexingMode::Human);
        assert_eq!(c.doi, None);
        assert!(c.chemicals.is_empty() && c.suppl_mesh.is_empty());
    }

    #[test]
    fn missing_pmid_is_a_schema_error() {
        let xml = "<MedlineCitation><Article/></MedlineCitation>";
        assert!(matches!(parse_medline_citation(xml), Err(CorpusError::Schema(_))));
    }

    #[test]
    fn automated_and_unknown_modes_are_auto() {
        assert_eq!(indexing_mode(Some("Automated")), IndexingMode::Auto);
        assert_eq!(indexing_mode(Some("Other")), IndexingMode::Auto);
        assert_eq!(indexing_mode(None), IndexingMode::Human);
    }
}
