use std::path::{Path, PathBuf};

use muats_core::transcript::{replay, Transcript, TranscriptError};

fn transcripts() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/transcripts");
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt") && !p.ends_with("bank.txt"))
        .collect();
    files.sort();
    files
}

#[test]
fn every_transcript_replays() {
    let files = transcripts();
    assert!(files.len() >= 12, "only {} transcripts", files.len());
    let mut failures = Vec::new();
    for path in &files {
        let t = Transcript::from_file(path).unwrap();
        for seed in [0, 1, 0xDEAD_BEEF] {
            if let Err(e) = replay(&t, None, Some(seed)) {
                failures.push(format!("{} (seed {seed}): {e}", path.display()));
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn a_doctored_transcript_fails_at_the_right_step() {
    let path = transcripts()
        .into_iter()
        .find(|p| p.ends_with("07_grading.txt"))
        .unwrap();
    let text =
        std::fs::read_to_string(&path)
            .unwrap()
            .replacen("WRONG\\. ANS 2", "WRONG\\. ANS 3", 1);
    let t = Transcript::parse(&text, path.parent()).unwrap();
    match replay(&t, None, None) {
        Err(TranscriptError::Mismatch(m)) => {
            assert_eq!(m.step, 10);
            assert!(m.actual.unwrap().starts_with("WRONG. ANS 2. Q7"));
        }
        other => panic!("expected a mismatch, got {other:?}"),
    }
}
