//! Scripted conversations replayed against an in-process engine.
//!
//! ```text
//! # comment
//! ! bank bank.txt            question bank, relative to the transcript
//! ! seed 7                   engine RNG seed
//! ! idle_timeout 600         session config overrides (seconds / counts)
//! > 07700900001|START        send: advance the clock 1 s, submit, deliver
//! < 07700900001|PLAYERS: .*  expect: next message for that phone must
//!                            fully match the regex
//! @ 601                      advance the clock N seconds, then run the
//!                            idle-timeout sweep and deliver
//! ```
//!
//! Replies are delivered immediately. A transcript fails on the first
//! mismatch, and also when delivered messages are left unexpected at the end.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use regex::Regex;

use crate::clock::{SimClock, Timestamp};
use crate::fuzzy::FuzzySystem;
use crate::gateway::{Gateway, WireInbound};
use crate::session::{Engine, SessionConfig};
use crate::tables::{read_bank, Phone, Store};

/// Simulated clock start for replays: 2024-01-01T00:00:00Z.
pub const REPLAY_EPOCH: Timestamp = Timestamp::from_secs(1_704_067_200);

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Setup(String),
    #[error("{0}")]
    Mismatch(Mismatch),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    /// 1-based index among the transcript's steps.
    pub step: usize,
    pub line: usize,
    pub phone: String,
    pub expected: String,
    pub actual: Option<String>,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step {} (line {}) for {}: expected /{}/, got {}",
            self.step,
            self.line,
            self.phone,
            self.expected,
            match &self.actual {
                Some(a) => format!("{a:?}"),
                None => "no message".into(),
            }
        )
    }
}

#[derive(Debug, Clone)]
pub enum Step {
    Send { phone: String, text: String },
    Expect { phone: String, pattern: Regex },
    Advance { secs: u64 },
}

#[derive(Debug, Clone)]
pub struct TranscriptStep {
    pub line: usize,
    pub step: Step,
}

#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub bank: Option<PathBuf>,
    pub seed: Option<u64>,
    pub config: SessionConfig,
    pub steps: Vec<TranscriptStep>,
}

impl Transcript {
    /// Parse transcript text. Relative `! bank` paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, TranscriptError> {
        let mut t = Transcript::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |reason: String| TranscriptError::Parse { line, reason };
            let trimmed = raw.trim_end();
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (tag, rest) = trimmed.split_at(1);
            let rest = rest.strip_prefix(' ').unwrap_or(rest);
            match tag {
                ">" | "<" => {
                    let (phone, body) = rest
                        .split_once('|')
                        .ok_or_else(|| err("expected `phone|text`".into()))?;
                    let phone = phone.trim().to_string();
                    if Phone::parse(&phone).is_none() {
                        return Err(err(format!("bad phone `{phone}`")));
                    }
                    let step = if tag == ">" {
                        Step::Send {
                            phone,
                            text: body.to_string(),
                        }
                    } else {
                        let pattern = Regex::new(&format!("^(?:{body})$"))
                            .map_err(|e| err(format!("bad regex: {e}")))?;
                        Step::Expect { phone, pattern }
                    };
                    t.steps.push(TranscriptStep { line, step });
                }
                "@" => {
                    let secs = rest
                        .trim()
                        .parse()
                        .map_err(|_| err(format!("bad advance `{}`", rest.trim())))?;
                    t.steps.push(TranscriptStep {
                        line,
                        step: Step::Advance { secs },
                    });
                }
                "!" => {
                    let (key, value) = rest
                        .trim()
                        .split_once(' ')
                        .ok_or_else(|| err("expected `! key value`".into()))?;
                    let value = value.trim();
                    let num = || {
                        value
                            .parse::<u64>()
                            .map_err(|_| err(format!("bad number `{value}`")))
                    };
                    match key {
                        "bank" => {
                            let p = PathBuf::from(value);
                            t.bank = Some(match base {
                                Some(b) if p.is_relative() => b.join(p),
                                _ => p,
                            });
                        }
                        "seed" => t.seed = Some(num()?),
                        "idle_timeout" => t.config.idle_timeout_seconds = num()?,
                        "adaptation_threshold" => t.config.adaptation_threshold = num()? as u32,
                        "max_players" => t.config.max_players_per_phone = num()? as usize,
                        other => return Err(err(format!("unknown directive `{other}`"))),
                    }
                }
                _ => return Err(err(format!("unknown line prefix `{tag}`"))),
            }
        }
        Ok(t)
    }

    pub fn from_file(path: &Path) -> Result<Self, TranscriptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TranscriptError::Setup(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReplayReport {
    pub steps: usize,
    pub sent: usize,
    pub matched: usize,
}

/// Run `transcript` against a fresh in-memory engine. `seed` overrides the
/// transcript's own seed; without either, seed 0 is used.
pub fn replay(
    transcript: &Transcript,
    bank_override: Option<&Path>,
    seed: Option<u64>,
) -> Result<ReplayReport, TranscriptError> {
    let bank_path = bank_override
        .map(Path::to_path_buf)
        .or_else(|| transcript.bank.clone())
        .ok_or_else(|| TranscriptError::Setup("no question bank given".into()))?;
    let bank = read_bank(&bank_path).map_err(|e| TranscriptError::Setup(e.to_string()))?;
    let config = SessionConfig {
        rng_seed: Some(seed.or(transcript.seed).unwrap_or(0)),
        ..transcript.config.clone()
    };
    let engine = Engine::new(Store::from_bank(bank), FuzzySystem::normative(), config)
        .map_err(|e| TranscriptError::Setup(e.to_string()))?;
    let clock = SimClock::new(REPLAY_EPOCH);
    let mut gw = Gateway::new(engine, 1.0, Arc::new(clock.clone()))
        .map_err(|e| TranscriptError::Setup(e.to_string()))?;

    let mut cursors: HashMap<Phone, u64> = HashMap::new();
    let mut report = ReplayReport::default();
    for (i, ts) in transcript.steps.iter().enumerate() {
        report.steps += 1;
        match &ts.step {
            Step::Send { phone, text } => {
                let now = clock.advance_secs(1.0);
                gw.submit_inbound(&WireInbound::new(phone.clone(), text.clone()))
                    .map_err(|e| TranscriptError::Setup(format!("line {}: {e}", ts.line)))?;
                gw.process_inbound();
                gw.flush_all(now);
                report.sent += 1;
            }
            Step::Advance { secs } => {
                let now = clock.advance_secs(*secs as f64);
                gw.timeout_sweep(now);
                gw.flush_all(now);
            }
            Step::Expect { phone, pattern } => {
                let key = Phone::parse(phone).expect("validated at parse time");
                let cursor = cursors.entry(key.clone()).or_insert(0);
                let next = gw.poll_outbound(&key, *cursor).into_iter().next();
                let mismatch = |actual: Option<String>| {
                    TranscriptError::Mismatch(Mismatch {
                        step: i + 1,
                        line: ts.line,
                        phone: phone.clone(),
                        expected: pattern
                            .as_str()
                            .trim_start_matches("^(?:")
                            .trim_end_matches(")$")
                            .to_string(),
                        actual,
                    })
                };
                match next {
                    Some(msg) if pattern.is_match(&msg.text) => {
                        *cursor = msg.seq;
                        report.matched += 1;
                    }
                    Some(msg) => return Err(mismatch(Some(msg.text))),
                    None => return Err(mismatch(None)),
                }
            }
        }
    }

    // Every delivered message must have been expected.
    let mailboxes = gw.mailboxes();
    let boxes = mailboxes
        .read()
        .unwrap_or_else(std::sync::PoisonError::into_inner);
    let mut phones: Vec<Phone> = transcript
        .steps
        .iter()
        .filter_map(|s| match &s.step {
            Step::Send { phone, .. } | Step::Expect { phone, .. } => Phone::parse(phone),
            Step::Advance { .. } => None,
        })
        .collect();
    phones.sort();
    phones.dedup();
    for phone in phones {
        let cursor = cursors.get(&phone).copied().unwrap_or(0);
        if let Some(extra) = boxes.poll(&phone, cursor).into_iter().next() {
            return Err(TranscriptError::Mismatch(Mismatch {
                step: transcript.steps.len() + 1,
                line: 0,
                phone: phone.to_string(),
                expected: "<end of transcript>".into(),
                actual: Some(extra.text),
            }));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("bank.txt"),
            "T | 0 | ONE | a;b | 2 | HINT\n",
        )
        .unwrap();
        dir
    }

    fn run(dir: &Path, body: &str) -> Result<ReplayReport, TranscriptError> {
        let t = Transcript::parse(&format!("! bank bank.txt\n{body}"), Some(dir)).unwrap();
        replay(&t, None, None)
    }

    #[test]
    fn passing_transcript_reports_counts() {
        let dir = bank_dir();
        let r = run(
            dir.path(),
            "> 1|START\n< 1|PLAYERS: NONE\\. .*\n> 1|NEW ALI\n< 1|TOPICS: 1:T\\. SEND NUMBER\n",
        )
        .unwrap();
        assert_eq!(
            r,
            ReplayReport {
                steps: 4,
                sent: 2,
                matched: 2
            }
        );
    }

    #[test]
    fn wrong_expectation_reports_step_index() {
        let dir = bank_dir();
        let err = run(dir.path(), "> 1|START\n< 1|PLAYERS: BOB.*\n").unwrap_err();
        match err {
            TranscriptError::Mismatch(m) => {
                assert_eq!(m.step, 2);
                assert_eq!(m.line, 3);
                assert_eq!(m.expected, "PLAYERS: BOB.*");
                assert!(m.actual.unwrap().starts_with("PLAYERS: NONE"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expectation_is_anchored() {
        let dir = bank_dir();
        assert!(run(dir.path(), "> 1|START\n< 1|PLAYERS\n").is_err());
    }

    #[test]
    fn missing_and_leftover_messages_fail() {
        let dir = bank_dir();
        let err = run(dir.path(), "< 1|PLAYERS.*\n").unwrap_err();
        assert!(matches!(
            err,
            TranscriptError::Mismatch(Mismatch { actual: None, .. })
        ));
        let err = run(dir.path(), "> 1|START\n").unwrap_err();
        assert!(matches!(
            err,
            TranscriptError::Mismatch(Mismatch { line: 0, .. })
        ));
    }

    #[test]
    fn advance_runs_the_sweep() {
        let dir = bank_dir();
        run(
            dir.path(),
            "! idle_timeout 5\n> 1|START\n< 1|PLAYERS.*\n@ 6\n< 1|SESSION ENDED\\. SEND START TO PLAY\n",
        )
        .unwrap();
    }

    #[test]
    fn parse_errors() {
        let bad = |s: &str| Transcript::parse(s, None).unwrap_err();
        assert!(matches!(
            bad("> 1 START"),
            TranscriptError::Parse { line: 1, .. }
        ));
        assert!(matches!(
            bad("\n< 1|("),
            TranscriptError::Parse { line: 2, .. }
        ));
        assert!(matches!(bad("@ soon"), TranscriptError::Parse { .. }));
        assert!(matches!(bad("! colour red"), TranscriptError::Parse { .. }));
        assert!(matches!(bad("? what"), TranscriptError::Parse { .. }));
        assert!(matches!(bad("> abc|START"), TranscriptError::Parse { .. }));
    }

    #[test]
    fn missing_bank_is_a_setup_error() {
        let t = Transcript::parse("> 1|START\n", None).unwrap();
        assert!(matches!(
            replay(&t, None, None),
            Err(TranscriptError::Setup(_))
        ));
    }
}
