use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use proptest::prelude::*;

use ftmesh::corpus::{
    build_corpus, emit_record, filter_citation, join_records, parse_record, read_records, select_complete,
    stratified_split, ArticleRecord, BuildOptions, BuildReport, CitationMetadata, FullTextSections, IndexingMode,
    JoinStrategy, Section, SectionTexts, SplitSpec, NONE_MARKER,
};
use ftmesh::synthetic::{generate, SyntheticSpec};

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn bioc_type(s: Section) -> &'static str {
    match s {
        Section::Title => "TITLE",
        Section::Abstract => "ABSTRACT",
        Section::Intro => "INTRO",
        Section::Methods => "METHODS",
        Section::Results => "RESULTS",
        Section::Discuss => "DISCUSS",
        Section::FigCaptions => "FIG",
        Section::TableCaptions => "TABLE",
    }
}

fn bioc_document(r: &ArticleRecord) -> String {
    let mut out = format!("<document><id>PMC{}</id>", r.pmid);
    for (i, s) in Section::ALL.into_iter().enumerate() {
        let Some(text) = r.section(s) else { continue };
        let pmid = if i == 0 {
            format!("<infon key=\"article-id_pmid\">{}</infon>", r.pmid)
        } else {
            String::new()
        };
        out += &format!(
            "<passage>{pmid}<infon key=\"section_type\">{}</infon><infon key=\"type\">paragraph</infon>\
             <offset>0</offset><text>{}</text></passage>",
            bioc_type(s),
            escape(text)
        );
    }
    out + "</document>"
}

fn bioc_collection(records: &[&ArticleRecord]) -> String {
    let docs: String = records.iter().map(|r| bioc_document(r)).collect();
    format!("<?xml version=\"1.0\"?><collection><source>PMC</source>{docs}</collection>")
}

fn medline_article(r: &ArticleRecord, method: &str, language: &str) -> String {
    let authors: String = r
        .authors
        .iter()
        .map(|a| {
            let (fore, last) = a.split_once(',').unwrap();
            format!("<Author><LastName>{}</LastName><ForeName>{}</ForeName></Author>", escape(last), escape(fore))
        })
        .collect();
    let mesh: String = r
        .mesh
        .iter()
        .map(|(ui, name)| format!("<MeshHeading><DescriptorName UI=\"{ui}\">{}</DescriptorName></MeshHeading>", escape(name)))
        .collect();
    let doi = r
        .doi
        .as_ref()
        .map(|d| format!("<ELocationID EIdType=\"doi\">{}</ELocationID>", escape(d)))
        .unwrap_or_default();
    format!(
        "<PubmedArticle><MedlineCitation Status=\"MEDLINE\" IndexingMethod=\"{method}\"><PMID>{}</PMID>\
         <Article><Journal><JournalIssue><PubDate><Year>{}</Year></PubDate></JournalIssue><Title>{}</Title></Journal>\
         {doi}<AuthorList>{authors}</AuthorList><Language>{language}</Language></Article>\
         <MeshHeadingList>{mesh}</MeshHeadingList></MedlineCitation></PubmedArticle>",
        r.pmid,
        r.year,
        escape(&r.journal)
    )
}

fn medline_set(articles: &[String]) -> String {
    format!("<?xml version=\"1.0\"?><PubmedArticleSet>{}</PubmedArticleSet>", articles.concat())
}

fn write(path: &Path, text: &str) -> PathBuf {
    fs::write(path, text).unwrap();
    path.to_path_buf()
}

fn write_gz(path: &Path, text: &str) -> PathBuf {
    let mut enc = GzEncoder::new(fs::File::create(path).unwrap(), Compression::default());
    enc.write_all(text.as_bytes()).unwrap();
    enc.finish().unwrap();
    path.to_path_buf()
}

/// Synthetic records rendered as three BioC files and two MEDLINE files (one
/// gzipped), plus citations the filter must drop and a few unmatched items.
fn write_inputs(dir: &Path, records: &[ArticleRecord]) -> (Vec<PathBuf>, Vec<PathBuf>) {
    let all: Vec<&ArticleRecord> = records.iter().collect();
    let bioc = all
        .chunks(all.len().div_ceil(3))
        .enumerate()
        .map(|(i, chunk)| write(&dir.join(format!("bioc{i}.xml")), &bioc_collection(chunk)))
        .collect();

    let mut first = Vec::new();
    let mut second = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let target = if i % 2 == 0 { &mut first } else { &mut second };
        target.push(medline_article(r, "Human", "eng"));
    }
    let mut extra = records[0].clone();
    extra.pmid = "990001".into();
    first.push(medline_article(&extra, "Curated", "eng"));
    extra.pmid = "990002".into();
    first.push(medline_article(&extra, "Human", "ger"));
    extra.pmid = "990003".into();
    second.push(medline_article(&extra, "Human", "eng"));
    let medline = vec![
        write(&dir.join("medline0.xml"), &medline_set(&first)),
        write_gz(&dir.join("medline1.xml.gz"), &medline_set(&second)),
    ];
    (bioc, medline)
}

#[test]
fn built_corpus_reproduces_the_source_records() {
    let corpus = generate(&SyntheticSpec {
        documents: 60,
        ..SyntheticSpec::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let (bioc, medline) = write_inputs(dir.path(), &corpus.records);
    let out = dir.path().join("out.jsonl");
    let report = build_corpus(&BuildOptions::new(bioc, medline, out.clone())).unwrap();
    assert_eq!(report.join_strategy, Some(JoinStrategy::Memory));
    assert_eq!(report.records_written, 60);
    assert_eq!(report.dropped_indexing_mode, 1);
    assert_eq!(report.dropped_language, 1);
    let records = read_records(fs::File::open(&out).map(std::io::BufReader::new).unwrap()).unwrap();
    assert_eq!(records, corpus.records);
}

#[test]
fn memory_and_disk_joins_write_identical_bytes() {
    let corpus = generate(&SyntheticSpec {
        documents: 90,
        seed: 4,
        ..SyntheticSpec::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let (bioc, medline) = write_inputs(dir.path(), &corpus.records);

    let memory_out = dir.path().join("memory.jsonl");
    let memory = build_corpus(&BuildOptions::new(bioc.clone(), medline.clone(), memory_out.clone())).unwrap();

    let disk_out = dir.path().join("disk.jsonl");
    let mut options = BuildOptions::new(bioc, medline, disk_out.clone());
    options.memory_budget_bytes = 0;
    options.partitions = 5;
    let disk = build_corpus(&options).unwrap();

    assert_eq!(memory.join_strategy, Some(JoinStrategy::Memory));
    assert_eq!(disk.join_strategy, Some(JoinStrategy::Disk));
    assert_eq!(
        BuildReport { join_strategy: None, ..memory },
        BuildReport { join_strategy: None, ..disk }
    );
    assert_eq!(fs::read(&memory_out).unwrap(), fs::read(&disk_out).unwrap());
}

#[test]
fn worker_count_does_not_change_output() {
    let corpus = generate(&SyntheticSpec {
        documents: 40,
        seed: 9,
        ..SyntheticSpec::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let (bioc, medline) = write_inputs(dir.path(), &corpus.records);
    let mut outputs = Vec::new();
    for workers in [1, 3] {
        let out = dir.path().join(format!("w{workers}.jsonl"));
        let mut options = BuildOptions::new(bioc.clone(), medline.clone(), out.clone());
        options.workers = workers;
        build_corpus(&options).unwrap();
        outputs.push(fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn malformed_xml_fails_without_leaving_output() {
    let dir = tempfile::tempdir().unwrap();
    let bioc = write(&dir.path().join("bad.xml"), "<collection><document><id>1</id><passage>");
    let medline = write(&dir.path().join("m.xml"), &medline_set(&[]));
    let out = dir.path().join("out.jsonl");
    let err = build_corpus(&BuildOptions::new(vec![bioc], vec![medline], out.clone())).unwrap_err();
    assert!(err.to_string().contains("bad.xml"), "{err}");
    assert!(!out.exists());
}

// ------------------------------------------------------------- properties

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,.;:()\\[\\]\"\\\\/é-]{1,40}".prop_filter("marker text is reserved", |s| s != NONE_MARKER)
}

fn record() -> impl Strategy<Value = ArticleRecord> {
    (
        1u32..100_000_000,
        proptest::collection::vec(proptest::option::of(text()), 8),
        text(),
        1800i32..2100,
        proptest::option::of(text()),
        proptest::collection::vec(text(), 0..4),
        proptest::collection::btree_map("D[0-9]{6}", text(), 0..5),
        proptest::collection::vec(text(), 0..3),
        proptest::collection::vec(text(), 0..3),
    )
        .prop_map(|(pmid, sections, journal, year, doi, authors, mesh, chemicals, suppl_mesh)| {
            let mut texts = SectionTexts::default();
            for (s, t) in Section::ALL.into_iter().zip(sections) {
                texts.set(s, t);
            }
            ArticleRecord {
                pmid: pmid.to_string(),
                sections: texts,
                journal,
                year,
                doi,
                authors,
                mesh,
                chemicals,
                suppl_mesh,
            }
        })
}

fn citation(pmid: &str, year: Option<i32>, language: &str, mode: IndexingMode) -> CitationMetadata {
    CitationMetadata {
        pmid: pmid.into(),
        language: language.into(),
        indexing_mode: mode,
        journal: "J".into(),
        year,
        doi: None,
        authors: Vec::new(),
        mesh: BTreeMap::new(),
        chemicals: Vec::new(),
        suppl_mesh: Vec::new(),
    }
}

fn mode() -> impl Strategy<Value = IndexingMode> {
    prop_oneof![
        Just(IndexingMode::Human),
        Just(IndexingMode::Curated),
        Just(IndexingMode::Auto)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn record_round_trip(r in record()) {
        let line = emit_record(&r);
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(parse_record(&line).unwrap(), r);
    }

    #[test]
    fn join_is_a_sorted_intersection(
        text_ids in proptest::collection::btree_set(1u32..500, 0..40),
        cite_ids in proptest::collection::btree_set(1u32..500, 0..40),
    ) {
        let sections: HashMap<String, FullTextSections> = text_ids
            .iter()
            .map(|id| (id.to_string(), FullTextSections { pmid: id.to_string(), sections: SectionTexts::default() }))
            .collect();
        let citations: HashMap<String, CitationMetadata> = cite_ids
            .iter()
            .map(|id| (id.to_string(), citation(&id.to_string(), Some(2000), "eng", IndexingMode::Human)))
            .collect();
        let joined = join_records(sections, citations);
        let got: Vec<u32> = joined.iter().map(|r| r.pmid.parse().unwrap()).collect();
        let want: Vec<u32> = text_ids.intersection(&cite_ids).copied().collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn filter_is_a_pure_predicate(language in "[a-z]{3}", m in mode(), year in proptest::option::of(1900i32..2020)) {
        let c = citation("1", year, &language, m);
        let expected = language == "eng" && m == IndexingMode::Human;
        prop_assert_eq!(filter_citation(&c), expected);
        prop_assert_eq!(filter_citation(&c.clone()), filter_citation(&c));
    }

    #[test]
    fn split_partitions_every_year(
        per_year in proptest::collection::vec(0usize..40, 1..5),
        seed in any::<u64>(),
        a in 1u32..10, b in 0u32..10, c in 0u32..10,
    ) {
        let total = (a + b + c) as f64;
        let ratios = [a as f64 / total, b as f64 / total, c as f64 / total];
        let mut records = Vec::new();
        for (y, &n) in per_year.iter().enumerate() {
            for i in 0..n {
                records.push(ArticleRecord {
                    pmid: (y * 1000 + i + 1).to_string(),
                    sections: SectionTexts::default(),
                    journal: "J".into(),
                    year: 2000 + y as i32,
                    doi: None,
                    authors: Vec::new(),
                    mesh: BTreeMap::new(),
                    chemicals: Vec::new(),
                    suppl_mesh: Vec::new(),
                });
            }
        }
        let spec = SplitSpec::new(ratios, seed).unwrap();
        let split = stratified_split(records.clone(), &spec).unwrap();
        let again = stratified_split(records.clone(), &spec).unwrap();
        prop_assert_eq!(&split, &again);

        let mut seen = BTreeSet::new();
        for (_, part) in split.parts() {
            for r in part {
                prop_assert!(seen.insert(r.pmid.clone()));
            }
        }
        prop_assert_eq!(seen.len(), records.len());

        for (y, &n) in per_year.iter().enumerate() {
            let year = 2000 + y as i32;
            for (slot, (_, part)) in split.parts().iter().enumerate() {
                let count = part.iter().filter(|r| r.year == year).count() as f64;
                let exact = ratios[slot] * n as f64;
                prop_assert!((count - exact).abs() <= 1.0 + 1e-9, "year {} part {} has {} for {}", year, slot, count, exact);
            }
        }
    }

    #[test]
    fn select_complete_keeps_only_full_records(rs in proptest::collection::vec(record(), 0..12)) {
        let kept = select_complete(rs.clone());
        for r in &kept {
            prop_assert!(rs.contains(r));
            prop_assert!(Section::CORE.iter().all(|&s| r.section(s).is_some()));
        }
        let expected = rs.iter().filter(|r| Section::CORE.iter().all(|&s| r.section(s).is_some())).count();
        prop_assert_eq!(kept.len(), expected);
    }
}
