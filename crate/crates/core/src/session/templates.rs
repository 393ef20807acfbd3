//! Reply texts. These strings are part of the wire contract: handsets and
//! conformance transcripts match them byte for byte.

use crate::tables::{Player, Topic};

pub const PHONE_FULL_PREFIX: &str = "PHONE FULL";
pub const SESSION_ENDED: &str = "SESSION ENDED. SEND START TO PLAY";
pub const SEND_START: &str = "SEND START TO BEGIN";
pub const NAME_TAKEN: &str = "NAME TAKEN.";
pub const INVALID_NAME: &str = "INVALID NAME.";
pub const CORRECT: &str = "CORRECT!";

/// `PLAYERS: A, B. SEND NAME TO LOGIN OR NEW <NAME> TO REGISTER`; the
/// registration hint is dropped once the phone is full.
pub fn player_list(players: &[&Player], can_register: bool) -> String {
    let names = if players.is_empty() {
        "NONE".to_string()
    } else {
        players
            .iter()
            .map(|p| p.player_id.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut text = format!("PLAYERS: {names}. SEND NAME TO LOGIN");
    if can_register {
        text.push_str(" OR NEW <NAME> TO REGISTER");
    }
    text
}

/// `TOPICS: 1:ADDITION 2:SUBTRACTION. SEND NUMBER`
pub fn topic_list<'a>(topics: impl IntoIterator<Item = &'a Topic>) -> String {
    let entries: Vec<String> = topics
        .into_iter()
        .map(|t| format!("{}:{}", t.topic_id, t.name))
        .collect();
    format!("TOPICS: {}. SEND NUMBER", entries.join(" "))
}

pub fn phone_full(max_players: usize) -> String {
    format!("{PHONE_FULL_PREFIX} ({max_players} PLAYERS)")
}

pub fn wrong(correct_index: u8) -> String {
    format!("WRONG. ANS {correct_index}.")
}

pub fn help(text: &str) -> String {
    format!("HELP: {text}")
}

pub fn no_questions() -> String {
    format!("NO QUESTIONS AVAILABLE. {SESSION_ENDED}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::Phone;
    use chrono::NaiveDate;

    fn player(name: &str) -> Player {
        Player {
            phone_no: Phone::parse("1").unwrap(),
            player_id: name.into(),
            reg_date: NaiveDate::default(),
            last_game_played: None,
            age_years: 12.0,
            education_years: 6.0,
        }
    }

    #[test]
    fn renders_player_lists() {
        assert_eq!(
            player_list(&[], true),
            "PLAYERS: NONE. SEND NAME TO LOGIN OR NEW <NAME> TO REGISTER"
        );
        let (a, b) = (player("ALI"), player("SARA"));
        assert_eq!(
            player_list(&[&a, &b], false),
            "PLAYERS: ALI, SARA. SEND NAME TO LOGIN"
        );
    }

    #[test]
    fn renders_topics_and_grading() {
        let topics = [
            Topic {
                topic_id: 1,
                name: "ADDITION".into(),
            },
            Topic {
                topic_id: 2,
                name: "SUBTRACTION".into(),
            },
        ];
        assert_eq!(
            topic_list(&topics),
            "TOPICS: 1:ADDITION 2:SUBTRACTION. SEND NUMBER"
        );
        assert_eq!(wrong(3), "WRONG. ANS 3.");
        assert_eq!(phone_full(10), "PHONE FULL (10 PLAYERS)");
    }
}
