//! End-to-end tests that drive the compiled `gema` binary the way an
//! operator would: generate a corpus, score it, benchmark it, correlate it,
//! and exercise the mock backend with its response cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gema_score::extraction::{ExtractionPromptTemplate, build_extraction_prompt};
use gema_score::gateway::{MockBackend, MockFixture};
use gema_score::scoring::{SubjectivePromptTemplate, build_subjective_prompt};

fn gema() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gema"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "command failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn synth_into(dir: &Path, seed: u64, studies: usize) {
    run_ok(
        gema()
            .arg("synth")
            .arg("--out-dir")
            .arg(dir)
            .arg("--seed")
            .arg(seed.to_string())
            .arg("--studies")
            .arg(studies.to_string()),
    );
}

#[test]
fn synth_is_seed_deterministic() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    let c = root.path().join("c");
    synth_into(&a, 11, 8);
    synth_into(&b, 11, 8);
    synth_into(&c, 12, 8);

    for file in ["corpus.jsonl", "fixtures.jsonl", "annotations.csv"] {
        assert_eq!(
            read(&a.join(file)),
            read(&b.join(file)),
            "{file} differs between identical seeds"
        );
    }
    assert_ne!(
        read(&a.join("corpus.jsonl")),
        read(&c.join("corpus.jsonl")),
        "different seeds produced identical corpora"
    );
}

#[test]
fn score_offline_is_deterministic_and_sorted() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    synth_into(&data, 5, 10);

    let score = |out: &Path| {
        run_ok(
            gema()
                .arg("score")
                .arg("--corpus")
                .arg(data.join("corpus.jsonl"))
                .arg("--fixtures")
                .arg(data.join("fixtures.jsonl"))
                .arg("--out")
                .arg(out),
        );
    };
    let s1 = root.path().join("scores1.jsonl");
    let s2 = root.path().join("scores2.jsonl");
    score(&s1);
    score(&s2);
    assert_eq!(read(&s1), read(&s2), "score runs are not byte-identical");

    let text = String::from_utf8(read(&s1)).unwrap();
    let ids: Vec<String> = text
        .lines()
        .map(|line| {
            let value: serde_json::Value = serde_json::from_str(line).expect("score line is JSON");
            for key in ["gema", "s_obj", "s_sub", "bleu1", "rouge_l", "meteor"] {
                assert!(value[key].is_number(), "missing {key} in {line}");
            }
            value["study_id"].as_str().expect("study_id").to_string()
        })
        .collect();
    assert_eq!(ids.len(), 10);
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted, "score file is not sorted by study_id");
}

#[test]
fn benchmark_emits_exact_csv_header() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    synth_into(&data, 3, 6);

    let out = root.path().join("bench.csv");
    run_ok(
        gema()
            .arg("benchmark")
            .arg("--corpus")
            .arg(data.join("corpus.jsonl"))
            .arg("--fixtures")
            .arg(data.join("fixtures.jsonl"))
            .arg("--out")
            .arg(&out),
    );
    let text = String::from_utf8(read(&out)).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("study_id,bleu1,rouge_l,meteor,gema,s_obj,s_sub")
    );
    assert_eq!(lines.count(), 6, "one data row per study");
}

#[test]
fn correlate_separates_pipeline_score_from_bleu() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    synth_into(&data, 20250823, 50);

    let scores = root.path().join("scores.jsonl");
    run_ok(
        gema()
            .arg("score")
            .arg("--corpus")
            .arg(data.join("corpus.jsonl"))
            .arg("--fixtures")
            .arg(data.join("fixtures.jsonl"))
            .arg("--out")
            .arg(&scores),
    );

    let report_path = root.path().join("correlation.json");
    let output = run_ok(
        gema()
            .arg("correlate")
            .arg("--scores")
            .arg(&scores)
            .arg("--annotations")
            .arg(data.join("annotations.csv"))
            .arg("--out")
            .arg(&report_path),
    );
    let table = String::from_utf8_lossy(&output.stdout).to_string();
    assert!(table.contains("gema"), "table lists the pipeline score");
    assert!(table.contains("bleu1"), "table lists the baseline");

    let report: serde_json::Value = serde_json::from_slice(&read(&report_path)).unwrap();
    assert_eq!(report["joined_studies"], 50);
    assert_eq!(report["target"], "mean_significant_errors");
    let tau_gema = report["metrics"]["gema"]["kendall_b"]["coefficient"]
        .as_f64()
        .expect("gema tau present");
    let tau_bleu = report["metrics"]["bleu1"]["kendall_b"]["coefficient"]
        .as_f64()
        .expect("bleu tau present");
    assert!(
        tau_gema < -0.5,
        "pipeline score should track injected errors inversely, got {tau_gema}"
    );
    assert!(
        tau_gema.abs() > tau_bleu.abs(),
        "pipeline score should outrank the token baseline: {tau_gema} vs {tau_bleu}"
    );
}

#[test]
fn strict_mode_rejects_malformed_corpus_without_partial_output() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    synth_into(&data, 9, 4);

    let corpus = data.join("corpus.jsonl");
    let mut contents = read(&corpus);
    contents.extend_from_slice(b"{\"study_id\": \"broken\"\n");
    fs::write(&corpus, contents).unwrap();

    let out = root.path().join("strict-scores.jsonl");
    let output = gema()
        .arg("score")
        .arg("--corpus")
        .arg(&corpus)
        .arg("--fixtures")
        .arg(data.join("fixtures.jsonl"))
        .arg("--out")
        .arg(&out)
        .arg("--strict")
        .output()
        .unwrap();
    assert!(!output.status.success(), "strict run must fail");
    assert!(!out.exists(), "failed strict run must not leave output behind");

    let out_lenient = root.path().join("lenient-scores.jsonl");
    let output = run_ok(
        gema()
            .arg("score")
            .arg("--corpus")
            .arg(&corpus)
            .arg("--fixtures")
            .arg(data.join("fixtures.jsonl"))
            .arg("--out")
            .arg(&out_lenient),
    );
    let stderr = String::from_utf8_lossy(&output.stderr).to_string();
    assert!(
        stderr.contains("skipped 1 malformed corpus line"),
        "lenient run should report the skip, stderr was:\n{stderr}"
    );
    assert_eq!(read(&out_lenient).iter().filter(|&&b| b == b'\n').count(), 4);
}

/// Two tiny studies with hand-authored reports, extraction completions, and
/// empty audit responses for every recorded prompt.
fn install_mock_corpus(root: &Path) -> (PathBuf, PathBuf) {
    let corpus = root.join("corpus.jsonl");
    let mock_dir = root.join("mock");
    fs::create_dir_all(&mock_dir).unwrap();

    let studies = [
        (
            "study-a",
            "Mild pneumonia is seen in the right lower lobe.",
            "Mild pneumonia is seen in the right lower lobe.",
            r#"[{"disease":"pneumonia","location":"right lower lobe","severity":"mild","uncertainty":"definite"}]"#,
            r#"[{"disease":"pneumonia","location":"right lower lobe","severity":"mild","uncertainty":"definite"}]"#,
        ),
        (
            "study-b",
            "There is a large left pleural effusion.",
            "No pleural effusion is identified.",
            r#"[{"disease":"pleural effusion","location":"left","severity":"large","uncertainty":"definite"}]"#,
            r#"[]"#,
        ),
    ];

    let mut corpus_lines = String::new();
    let extraction = ExtractionPromptTemplate::builtin_v1();
    let audit = SubjectivePromptTemplate::builtin_v1();
    for (study_id, reference, candidate, reference_json, candidate_json) in studies {
        corpus_lines.push_str(
            &serde_json::json!({
                "study_id": study_id,
                "modality": "xray",
                "reference": reference,
                "candidate": candidate,
            })
            .to_string(),
        );
        corpus_lines.push('\n');
        for (text, payload) in [(reference, reference_json), (candidate, candidate_json)] {
            let request = build_extraction_prompt(text, &extraction);
            MockBackend::install_fixture(&mock_dir, &request, &MockFixture::new(payload)).unwrap();
        }
        for aspect in gema_score::model::Aspect::ALL {
            let request = build_subjective_prompt(candidate, aspect, &audit);
            MockBackend::install_fixture(&mock_dir, &request, &MockFixture::new("[]")).unwrap();
        }
    }
    fs::write(&corpus, corpus_lines).unwrap();
    (corpus, mock_dir)
}

#[test]
fn mock_backend_scores_and_cache_eliminates_repeat_calls() {
    let root = tempfile::tempdir().unwrap();
    let (corpus, mock_dir) = install_mock_corpus(root.path());
    let cache_dir = root.path().join("cache");

    let score = |out: &Path| -> Output {
        run_ok(
            gema()
                .arg("score")
                .arg("--corpus")
                .arg(&corpus)
                .arg("--backend")
                .arg("mock")
                .arg("--mock-dir")
                .arg(&mock_dir)
                .arg("--cache-dir")
                .arg(&cache_dir)
                .arg("--out")
                .arg(out),
        )
    };

    let s1 = root.path().join("scores1.jsonl");
    let cold = score(&s1);
    let cold_err = String::from_utf8_lossy(&cold.stderr).to_string();
    // One backend call per unique prompt: study-a's reference and candidate
    // are the same text, so its second extraction is already a cache hit.
    // 3 distinct extraction prompts + 2 candidates x 3 audit prompts = 9.
    assert!(
        cold_err.contains("backend calls: 9"),
        "cold run should hit the backend once per unique prompt, stderr:\n{cold_err}"
    );

    let s2 = root.path().join("scores2.jsonl");
    let warm = score(&s2);
    let warm_err = String::from_utf8_lossy(&warm.stderr).to_string();
    assert!(
        warm_err.contains("backend calls: 0"),
        "warm run should be served entirely from cache, stderr:\n{warm_err}"
    );
    assert_eq!(read(&s1), read(&s2), "cache changed the scores");

    let text = String::from_utf8(read(&s1)).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    // Identical reference and candidate: a perfect score.
    assert_eq!(lines[0]["study_id"], "study-a");
    assert_eq!(lines[0]["gema"], 1.0);
    // Candidate missed the only finding: clinical half collapses to zero.
    assert_eq!(lines[1]["study_id"], "study-b");
    assert_eq!(lines[1]["s_obj"], 0.0);
}

#[test]
fn extract_writes_fixtures_equivalent_to_mock_completions() {
    let root = tempfile::tempdir().unwrap();
    let (corpus, mock_dir) = install_mock_corpus(root.path());

    let fixtures = root.path().join("extracted.jsonl");
    run_ok(
        gema()
            .arg("extract")
            .arg("--corpus")
            .arg(&corpus)
            .arg("--backend")
            .arg("mock")
            .arg("--mock-dir")
            .arg(&mock_dir)
            .arg("--out")
            .arg(&fixtures),
    );

    let text = String::from_utf8(read(&fixtures)).unwrap();
    assert_eq!(text.lines().count(), 4, "two roles per study");
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["study_id"], "study-a");
    assert_eq!(first["role"], "reference");
    assert_eq!(first["entities"][0]["disease"], "pneumonia");

    // The extracted fixtures drive the offline scorer to the same verdicts.
    let scores = root.path().join("scores.jsonl");
    run_ok(
        gema()
            .arg("score")
            .arg("--corpus")
            .arg(&corpus)
            .arg("--fixtures")
            .arg(&fixtures)
            .arg("--out")
            .arg(&scores),
    );
    let lines: Vec<serde_json::Value> = String::from_utf8(read(&scores))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines[0]["gema"], 1.0);
    assert_eq!(lines[1]["s_obj"], 0.0);
}
