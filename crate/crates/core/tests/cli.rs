use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn brainscore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brainscore"))
        .args(args)
        .output()
        .expect("spawn brainscore")
}

fn ok(args: &[&str]) -> Output {
    let out = brainscore(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small synthetic dataset with one noise layer and augmented sets.
fn small_synth(dir: &Path) {
    ok(&[
        "--seed", "3", "synth", "--words", "400", "--dims", "4", "--frames", "150", "--voxels", "12",
        "--subjects", "3", "--k-true", "2", "--noise", "0.5", "--memory-tokens", "1", "--sentence-words",
        "10", "--noise-layers", "1", "--augment", "1", "--out", p(dir),
    ]);
}

fn score(data: &Path, out: &Path, workers: &str, extra: &[&str]) {
    let mut args = vec![
        "--k", "2", "--penalty-grid", "-1:4:6", "--outer-folds-pooled", "4", "--outer-folds-subject", "4",
        "--inner-folds", "3", "--workers", workers, "score",
    ];
    let transcript = data.join("transcript.tsv");
    let features = data.join("layer-01.feat");
    let bold = data.join("bold");
    args.extend([
        "--transcript", p(&transcript), "--features", p(&features), "--bold-dir", p(&bold), "--out", p(out),
    ]);
    args.extend(extra);
    ok(&args);
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_writes_expected_layout() {
    let tmp = TempDir::new().unwrap();
    small_synth(tmp.path());
    for f in [
        "transcript.tsv", "layer-01.feat", "layer-02.feat", "truth.json", "atlas.tsv", "bold/sub-01.bold",
        "bold/sub-03.bold", "memory/transcript.tsv", "memory/layer-01.feat", "control/layer-01.feat",
    ] {
        assert!(tmp.path().join(f).is_file(), "missing {f}");
    }
    let truth: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("truth.json")).unwrap()).unwrap();
    assert!(truth["expected_score"].as_f64().unwrap() > 0.9);
}

#[test]
fn score_is_identical_across_workers_and_reruns() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    small_synth(&data);
    let runs = [("one", "1"), ("eight", "8"), ("again", "1")];
    for (name, w) in runs {
        score(&data, &tmp.path().join(name), w, &["--per-subject"]);
    }
    let first = dir_bytes(&tmp.path().join("one"));
    assert_eq!(first.len(), 8, "brain + 3 subjects, csv and json each");
    for (name, _) in &runs[1..] {
        assert_eq!(dir_bytes(&tmp.path().join(name)), first, "{name}");
    }
}

#[test]
fn single_subject_per_subject_matches_pooled() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    small_synth(&data);
    for f in ["sub-02.bold", "sub-03.bold"] {
        fs::remove_file(data.join("bold").join(f)).unwrap();
    }
    let out = tmp.path().join("out");
    score(&data, &out, "2", &["--per-subject"]);
    let pooled = fs::read_to_string(out.join("brain.csv")).unwrap();
    let single = fs::read_to_string(out.join("brain-sub-01.csv")).unwrap();
    assert_eq!(pooled, single);
}

#[test]
fn ceiling_diff_and_roi_chain() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    small_synth(&data);
    let base = tmp.path().join("base");
    score(&data, &base, "1", &[]);
    let mem = tmp.path().join("mem");
    let mut args = vec!["--k", "2", "--penalty-grid", "-1:4:6", "--outer-folds-pooled", "4", "--inner-folds", "3", "score"];
    let (mt, mf, bold) = (data.join("memory/transcript.tsv"), data.join("memory/layer-01.feat"), data.join("bold"));
    args.extend(["--transcript", p(&mt), "--features", p(&mf), "--bold-dir", p(&bold), "--out", p(&mem)]);
    ok(&args);

    let diff = tmp.path().join("diff");
    let (a, b) = (mem.join("brain.csv"), base.join("brain.csv"));
    ok(&["diff", "--a", p(&a), "--b", p(&b), "--mode", "memory", "--out", p(&diff)]);
    let memory = fs::read_to_string(diff.join("memory.csv")).unwrap();
    let lines: Vec<&str> = memory.lines().collect();
    assert_eq!(lines.len(), 13);
    ok(&["diff", "--a", p(&a), "--b", p(&b), "--mode", "tuning", "--out", p(&diff)]);
    assert!(diff.join("tuning.json").is_file());

    let ceil = tmp.path().join("ceil");
    ok(&["--n-ceiling-splits", "4", "ceiling", "--bold-dir", p(&bold), "--out", p(&ceil)]);
    assert!(ceil.join("ceiling.csv").is_file());

    let atlas = data.join("atlas.tsv");
    let table = tmp.path().join("roi.csv");
    ok(&["roi", "--map", p(&b), "--atlas", p(&atlas), "--out", p(&table)]);
    let text = fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("label,hemisphere,mean,ci_low,ci_high,n_voxels,n_subjects\n"));
    assert_eq!(text.lines().count(), 1 + 18);

    let ci = tmp.path().join("roi-ci.csv");
    ok(&["roi", "--map", p(&b), p(&a), "--atlas", p(&atlas), "--out", p(&ci)]);
    let row = fs::read_to_string(&ci).unwrap().lines().nth(1).unwrap().to_string();
    assert!(row.ends_with(",2"), "{row}");
}

#[test]
fn layers_ranks_signal_first_and_rejects_duplicates() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    small_synth(&data);
    let out = tmp.path().join("layers.csv");
    let (t, bold, atlas) = (data.join("transcript.tsv"), data.join("bold"), data.join("atlas.tsv"));
    let glob = format!("{}/layer-*.feat", p(&data));
    let base = ["--k", "2", "--penalty-grid", "-1:4:6", "--outer-folds-pooled", "4", "--inner-folds", "3", "layers"];
    let mut args = base.to_vec();
    args.extend(["--transcript", p(&t), "--features-glob", &glob, "--bold-dir", p(&bold), "--atlas", p(&atlas), "--out", p(&out)]);
    ok(&args);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("layer_id,hemisphere,mean_score"));
    let rows: Vec<(i32, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].1 > rows[2].1 && rows[1].1 > rows[3].1, "{rows:?}");

    fs::copy(data.join("layer-01.feat"), data.join("layer-03.feat")).unwrap();
    let out = brainscore(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("layer"));
}

#[test]
fn augment_inserts_words_at_sentence_end() {
    let tmp = TempDir::new().unwrap();
    let t = tmp.path().join("t.tsv");
    fs::write(&t, "word\tonset\toffset\tsentence_id\nthe\t0.0\t0.3\t0\ncat\t0.3\t0.6\t0\nsat\t1.0\t1.4\t1\n").unwrap();
    let a = tmp.path().join("a.tsv");
    fs::write(&a, "sentence_id\tlevel\tcontent\n0\tsentence\tfur, whiskers.\n").unwrap();
    let out = tmp.path().join("out.tsv");
    ok(&["augment", "--transcript", p(&t), "--annotations", p(&a), "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let words: Vec<&str> = text.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(words, ["the", "cat", "fur", "whiskers", "sat"]);
    assert!(text.contains("fur\t0.600\t0.600\t0"), "{text}");

    fs::write(&a, "sentence_id\tlevel\tcontent\n9\tword\tdog\n").unwrap();
    assert_eq!(brainscore(&["augment", "--transcript", p(&t), "--annotations", p(&a), "--out", p(&out)]).status.code(), Some(2));
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope");
    let out = brainscore(&["ceiling", "--bold-dir", p(&missing), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "k = 2\nlambda = 3\n").unwrap();
    let out = brainscore(&["--config", p(&cfg), "ceiling", "--bold-dir", p(tmp.path()), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    assert_eq!(brainscore(&["--inner-folds", "1", "ceiling", "--bold-dir", p(tmp.path()), "--out", p(tmp.path())]).status.code(), Some(2));
}
