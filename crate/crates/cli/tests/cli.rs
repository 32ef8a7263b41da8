use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flate2::write::GzEncoder;
use flate2::Compression;
use ftmesh::corpus::{emit_record, read_records, ArticleRecord};
use ftmesh::mesh::MeshVocabulary;
use ftmesh::synthetic::{generate, SyntheticSpec};
use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_ftmesh");

fn ftmesh(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .env_remove("FTMESH_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(output: Output) -> Output {
    assert!(
        output.status.success(),
        "exit {:?}\nstderr: {}",
        output.status,
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn golden(name: &str) -> String {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden");
    fs::read_to_string(dir.join(name)).unwrap()
}

/// Three BioC articles and four MEDLINE citations, two of which survive the
/// filters and have full text.
fn corpus_dirs(root: &Path) -> (PathBuf, PathBuf) {
    let bioc = root.join("bioc");
    let medline = root.join("medline");
    fs::create_dir_all(&bioc).unwrap();
    fs::create_dir_all(&medline).unwrap();
    fs::write(bioc.join("articles.xml"), golden("bioc.xml")).unwrap();
    let citations = golden("medline.xml").replace(r#" IndexingMethod="Curated""#, "");
    fs::write(medline.join("a.xml"), citations).unwrap();
    let extra = r#"<PubmedArticleSet><PubmedArticle><MedlineCitation Status="MEDLINE" Owner="NLM">
<PMID Version="1">31000009</PMID><Article><Journal><JournalIssue><PubDate><Year>2019</Year></PubDate></JournalIssue>
<Title>Journal without full text</Title></Journal><Language>eng</Language></Article>
<MeshHeadingList><MeshHeading><DescriptorName UI="D009474">Neurons</DescriptorName></MeshHeading></MeshHeadingList>
</MedlineCitation></PubmedArticle></PubmedArticleSet>"#;
    let mut gz = GzEncoder::new(fs::File::create(medline.join("b.xml.gz")).unwrap(), Compression::default());
    gz.write_all(extra.as_bytes()).unwrap();
    gz.finish().unwrap();
    (bioc, medline)
}

fn write_records(path: &Path, records: &[ArticleRecord]) {
    let text: String = records.iter().map(|r| emit_record(r) + "\n").collect();
    fs::write(path, text).unwrap();
}

fn write_descriptors(path: &Path, vocab: &MeshVocabulary) {
    let text: String = vocab
        .descriptors()
        .iter()
        .map(|d| format!("{}\t{}\t{}\n", d.ui, d.name, d.tree_numbers.join(";")))
        .collect();
    fs::write(path, text).unwrap();
}

fn leftovers(dir: &Path) -> Vec<String> {
    fs::read_dir(dir)
        .map(|rd| rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default()
}

#[test]
fn build_corpus_joins_the_fixture_and_is_idempotent() {
    let tmp = TempDir::new().unwrap();
    let (bioc, medline) = corpus_dirs(tmp.path());
    let run = |out: &Path| ok(ftmesh(&["build-corpus", "--bioc-dir", s(&bioc), "--medline-dir", s(&medline)], out));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&a);
    run(&b);

    let text = fs::read(a.join("records.jsonl")).unwrap();
    let records = read_records(text.as_slice()).unwrap();
    let pmids: Vec<&str> = records.iter().map(|r| r.pmid.as_str()).collect();
    assert_eq!(pmids, ["27976717", "31000001"]);

    let manifest = json(&a.join("build-corpus.manifest.json"));
    assert_eq!(manifest["summary"]["articles_parsed"], 3);
    assert_eq!(manifest["summary"]["citations_parsed"], 4);
    assert_eq!(manifest["summary"]["dropped_language"], 1);
    assert_eq!(manifest["summary"]["records_written"], 2);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    assert!(manifest["seed"].is_u64());

    assert_eq!(text, fs::read(b.join("records.jsonl")).unwrap());
    assert_eq!(
        fs::read(a.join("build-corpus.manifest.json")).unwrap(),
        fs::read(b.join("build-corpus.manifest.json")).unwrap()
    );
    assert_eq!(leftovers(&a).len(), 2);
}

#[test]
fn empty_inputs_give_an_empty_corpus() {
    let tmp = TempDir::new().unwrap();
    let (bioc, medline) = (tmp.path().join("x"), tmp.path().join("y"));
    fs::create_dir_all(&bioc).unwrap();
    fs::create_dir_all(&medline).unwrap();
    let out = tmp.path().join("out");
    ok(ftmesh(&["build-corpus", "--bioc-dir", s(&bioc), "--medline-dir", s(&medline)], &out));
    assert!(fs::read(out.join("records.jsonl")).unwrap().is_empty());
}

#[test]
fn malformed_xml_fails_and_leaves_nothing_behind() {
    let tmp = TempDir::new().unwrap();
    let (bioc, medline) = corpus_dirs(tmp.path());
    fs::write(bioc.join("broken.xml"), "<collection><document><id>1</id></passage></collection>").unwrap();
    let out = tmp.path().join("out");
    let output = ftmesh(&["build-corpus", "--bioc-dir", s(&bioc), "--medline-dir", s(&medline)], &out);
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("broken.xml"));
    assert!(leftovers(&out).is_empty(), "{:?}", leftovers(&out));
}

#[test]
fn missing_inputs_are_reported() {
    let tmp = TempDir::new().unwrap();
    let output = ftmesh(&["stats", "--records", "/nonexistent/records.jsonl"], tmp.path());
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("/nonexistent/records.jsonl"));
}

#[test]
fn split_counts_per_year() {
    let tmp = TempDir::new().unwrap();
    let corpus = generate(&SyntheticSpec {
        documents: 30,
        ..SyntheticSpec::default()
    });
    let records = tmp.path().join("records.jsonl");
    write_records(&records, &corpus.records);
    let out = tmp.path().join("out");
    ok(ftmesh(&["split", "--records", s(&records), "--ratios", "0.8,0.1,0.1", "--seed", "7"], &out));

    let manifest = json(&out.join("split.manifest.json"));
    assert_eq!(manifest["seed"], 7);
    for year in ["2016", "2017", "2018"] {
        assert_eq!(manifest["summary"]["per_year"][year], serde_json::json!([8, 1, 1]));
    }
    let mut all = Vec::new();
    for part in ["train", "validation", "test"] {
        let pmids = fs::read_to_string(out.join(format!("{part}.pmids"))).unwrap();
        let from_records: Vec<String> = read_records(fs::read(out.join(format!("{part}.jsonl"))).unwrap().as_slice())
            .unwrap()
            .into_iter()
            .map(|r| r.pmid)
            .collect();
        let mut listed: Vec<String> = pmids.lines().map(String::from).collect();
        let mut sorted = from_records.clone();
        sorted.sort();
        listed.sort();
        assert_eq!(listed, sorted);
        all.extend(listed);
    }
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 30);
}

#[test]
fn config_file_flags_and_environment_compose() {
    let tmp = TempDir::new().unwrap();
    let corpus = generate(&SyntheticSpec::default());
    let records = tmp.path().join("records.jsonl");
    write_records(&records, &corpus.records);
    let config = tmp.path().join("run.conf");
    fs::write(&config, "seed = 3\nsplit_ratios = 0.5, 0.25, 0.25\n").unwrap();
    let env_out = tmp.path().join("from-env");

    let output = Command::new(BIN)
        .args(["split", "--records", s(&records), "--config", s(&config), "--set", "seed=4"])
        .env("FTMESH_OUTPUT_DIR", &env_out)
        .output()
        .unwrap();
    ok(output);
    let manifest = json(&env_out.join("split.manifest.json"));
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["config"]["ratios"], serde_json::json!([0.5, 0.25, 0.25]));

    let out = tmp.path().join("flag");
    ok(ftmesh(&["split", "--records", s(&records), "--config", s(&config), "--seed", "9"], &out));
    assert_eq!(json(&out.join("split.manifest.json"))["seed"], 9);

    let bad = ftmesh(&["split", "--records", s(&records), "--set", "no_such_key=1"], &out);
    assert!(!bad.status.success());
}

#[test]
fn pipeline_overfits_the_synthetic_set() {
    let tmp = TempDir::new().unwrap();
    let corpus = generate(&SyntheticSpec::default());
    let records = tmp.path().join("records.jsonl");
    let descriptors = tmp.path().join("descriptors.tsv");
    write_records(&records, &corpus.records);
    write_descriptors(&descriptors, &corpus.vocabulary);
    let config = tmp.path().join("model.conf");
    fs::write(
        &config,
        "d = 16\nconv_width = 16\nchannel_lengths = 48,32,32,32,32\ndropout = 0.1\n\
         learning_rate = 0.01\ndecay = 1.0\nmin_word_freq = 1\nepochs = 200\nseed = 1\n",
    )
    .unwrap();
    let (r, d, c) = (s(&records), s(&descriptors), s(&config));

    let out = tmp.path().join("out");
    let o = s(&out);
    ok(ftmesh(&["train", "--train", r, "--descriptors", d, "--config", c], &out));
    let model = format!("{o}/model.ckpt");
    ok(ftmesh(&["predict", "--model", &model, "--records", r, "--descriptors", d, "--full-scores", "--top-k", "3"], &out));
    let scores = format!("{o}/scores.jsonl");
    let stdout = ok(ftmesh(&["evaluate", "--scores", &scores, "--gold", r, "--descriptors", d], &out)).stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("EBF"));
    let metrics = json(&out.join("metrics.json"));
    assert!(metrics["EBF"].as_f64().unwrap() >= 0.95, "{metrics}");
    assert_eq!(metrics["documents"], 32);

    let first = fs::read_to_string(out.join("predictions.jsonl")).unwrap();
    let line: Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(line["top_k"].as_array().unwrap().len(), 3);

    ok(ftmesh(&["tune-thresholds", "--scores", &scores, "--gold", r, "--descriptors", d], &out));
    let tuned = json(&out.join("tune-thresholds.manifest.json"));
    assert!(tuned["summary"]["micro_f_tuned"].as_f64() >= tuned["summary"]["micro_f_uniform"].as_f64());
    let thresholds = format!("{o}/thresholds.json");
    ok(ftmesh(
        &["predict", "--model", &model, "--records", r, "--descriptors", d, "--thresholds", &thresholds],
        &out,
    ));
    ok(ftmesh(&["evaluate", "--predictions", &format!("{o}/predictions.jsonl"), "--gold", r, "--descriptors", d], &out));
    let from_sets = json(&out.join("metrics.json"));
    ok(ftmesh(
        &["evaluate", "--scores", &scores, "--thresholds", &thresholds, "--gold", r, "--descriptors", d],
        &out,
    ));
    let from_scores = json(&out.join("metrics.json"));
    assert_eq!(from_sets["EBF"], from_scores["EBF"]);
    assert_eq!(from_sets["MiF"], from_scores["MiF"]);
    assert!(from_sets.get("P@1").is_none());

    // Same inputs and seed, fresh directory: identical bytes.
    let again = tmp.path().join("again");
    ok(ftmesh(&["train", "--train", r, "--descriptors", d, "--config", c], &again));
    for name in ["model.ckpt", "train_report.json", "train.manifest.json"] {
        assert_eq!(fs::read(out.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn perfect_predictions_score_one() {
    let tmp = TempDir::new().unwrap();
    let corpus = generate(&SyntheticSpec::default());
    let records = tmp.path().join("records.jsonl");
    let descriptors = tmp.path().join("descriptors.tsv");
    write_records(&records, &corpus.records);
    write_descriptors(&descriptors, &corpus.vocabulary);
    let scores: String = corpus
        .records
        .iter()
        .map(|r| {
            let row: Vec<f64> = corpus
                .vocabulary
                .uis()
                .map(|ui| if r.mesh.contains_key(ui) { 0.9 } else { 0.1 })
                .collect();
            serde_json::json!({ "pmid": r.pmid, "scores": row }).to_string() + "\n"
        })
        .collect();
    let scores_path = tmp.path().join("scores.jsonl");
    fs::write(&scores_path, scores).unwrap();
    let out = tmp.path().join("out");
    ok(ftmesh(
        &["evaluate", "--scores", s(&scores_path), "--gold", s(&records), "--descriptors", s(&descriptors)],
        &out,
    ));
    let metrics = json(&out.join("metrics.json"));
    for key in ["EBF", "EBP", "EBR", "MiF", "MiP", "MiR", "MaF", "MaP", "MaR"] {
        assert_eq!(metrics[key], 1.0, "{key}");
    }

    fs::write(&scores_path, "{\"pmid\":\"10000\",\"scores\":[0.5]}\n").unwrap();
    let bad = ftmesh(
        &["evaluate", "--scores", s(&scores_path), "--gold", s(&records), "--descriptors", s(&descriptors)],
        &out,
    );
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("scores"));
}
