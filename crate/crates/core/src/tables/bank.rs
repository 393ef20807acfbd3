//! Question bank reader.
//!
//! One question per line:
//!
//! ```text
//! topic_name | level | question_text | choice1;choice2;... | correct_index | help_text
//! ```
//!
//! `\|`, `\;` and `\\` escape the separators. Blank lines and lines starting
//! with `#` are skipped. Fields are trimmed.

use super::{Question, TableError, Topic};

/// Longest grading prefix ("WRONG. ANS 9. ") prepended to a question reply.
const GRADE_PREFIX_MAX: usize = 14;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuestionBank {
    pub topics: Vec<Topic>,
    pub questions: Vec<Question>,
}

impl QuestionBank {
    /// Topic ids are assigned 1, 2, ... in order of first appearance;
    /// question ids 1, 2, ... in file order.
    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut bank = QuestionBank::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |reason: String| TableError::Parse { line, reason };

            let fields = split_escaped(trimmed, '|').map_err(err)?;
            if fields.len() != 6 {
                return Err(err(format!(
                    "expected 6 `|`-separated fields, found {}",
                    fields.len()
                )));
            }
            let topic_name = unescape(fields[0].trim()).map_err(err)?;
            if topic_name.is_empty() {
                return Err(err("empty topic name".into()));
            }
            let level: u8 = fields[1]
                .trim()
                .parse()
                .ok()
                .filter(|l| *l <= 5)
                .ok_or_else(|| {
                    err(format!(
                        "level `{}` is not an integer in 0..=5",
                        fields[1].trim()
                    ))
                })?;
            let text = unescape(fields[2].trim()).map_err(err)?;
            if text.is_empty() {
                return Err(err("empty question text".into()));
            }
            let choices = split_escaped(fields[3].trim(), ';')
                .map_err(err)?
                .into_iter()
                .map(|c| unescape(c.trim()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            if !(2..=9).contains(&choices.len()) {
                return Err(err(format!("need 2 to 9 choices, found {}", choices.len())));
            }
            if choices.iter().any(String::is_empty) {
                return Err(err("empty choice".into()));
            }
            let correct_index: u8 = fields[4].trim().parse().map_err(|_| {
                err(format!(
                    "correct index `{}` is not a number",
                    fields[4].trim()
                ))
            })?;
            if correct_index < 1 || usize::from(correct_index) > choices.len() {
                return Err(err(format!(
                    "correct index {correct_index} out of range for {} choices",
                    choices.len()
                )));
            }
            let help = unescape(fields[5].trim()).map_err(err)?;

            let topic_id = match bank.topics.iter().find(|t| t.name == topic_name) {
                Some(t) => t.topic_id,
                None => {
                    let id = bank.topics.len() as u32 + 1;
                    bank.topics.push(Topic {
                        topic_id: id,
                        name: topic_name,
                    });
                    id
                }
            };
            let question = Question {
                question_id: bank.questions.len() as u32 + 1,
                topic_id,
                level,
                text,
                choices,
                correct_index,
                help,
            };
            let len = question.render().chars().count() + GRADE_PREFIX_MAX;
            if len > super::MAX_MESSAGE_CHARS {
                return Err(err(format!(
                    "question renders to {len} characters with grading prefix, limit is {}",
                    super::MAX_MESSAGE_CHARS
                )));
            }
            bank.questions.push(question);
        }
        Ok(bank)
    }
}

/// Split on `sep` where it is not preceded by a backslash. Escapes are kept
/// in the pieces; call [`unescape`] afterwards.
fn split_escaped(s: &str, sep: char) -> Result<Vec<&str>, String> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == sep {
            parts.push(&s[start..i]);
            start = i + c.len_utf8();
        }
    }
    if escaped {
        return Err("trailing backslash".into());
    }
    parts.push(&s[start..]);
    Ok(parts)
}

fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some(n @ ('|' | ';' | '\\')) => out.push(n),
                Some(n) => {
                    out.push('\\');
                    out.push(n);
                }
                None => return Err("trailing backslash".into()),
            }
        } else {
            out.push(c);
        }
    }
    Ok(out)
}
