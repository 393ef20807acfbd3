use super::*;
use crate::tables::QuestionBank;

/// Two questions per level on ADDITION (levels 0..=5), one question on
/// SUBTRACTION level 1. Correct answer is always choice 3 for ADDITION.
fn bank() -> QuestionBank {
    let mut text = String::new();
    for level in 0..=5 {
        for i in 0..2 {
            text.push_str(&format!(
                "ADDITION | {level} | A{level}{i}? | w;x;y;z | 3 | HINT{level}{i}\n"
            ));
        }
    }
    text.push_str("SUBTRACTION | 1 | S? | a;b | 1 | SH\n");
    QuestionBank::parse(&text).unwrap()
}

fn engine() -> Engine {
    engine_with(bank())
}

fn engine_with(bank: QuestionBank) -> Engine {
    let config = SessionConfig {
        rng_seed: Some(7),
        ..SessionConfig::default()
    };
    Engine::new(Store::from_bank(bank), FuzzySystem::normative(), config).unwrap()
}

fn phone() -> Phone {
    Phone::parse("07700900001").unwrap()
}

struct Driver {
    engine: Engine,
    t: i64,
}

impl Driver {
    fn new(engine: Engine) -> Self {
        Self {
            engine,
            t: 1_700_000_000,
        }
    }

    fn send(&mut self, text: &str) -> String {
        self.send_from(&phone(), text)
    }

    fn send_from(&mut self, phone: &Phone, text: &str) -> String {
        self.t += 1;
        let replies = self.engine.handle_message(InboundSms {
            phone_no: phone.clone(),
            text: text.into(),
            received_at: Timestamp::from_secs(self.t),
        });
        assert_eq!(replies.len(), 1, "{replies:?}");
        replies.into_iter().next().unwrap().text
    }

    fn row(&self) -> &ActivePlayerRow {
        self.engine.store().active(&phone()).expect("active row")
    }

    fn pending(&self) -> Pending {
        self.row().pending().expect("pending question").clone()
    }

    fn answer(&mut self, correct: bool) -> String {
        let p = self.pending();
        let choice = if correct {
            p.correct_index
        } else {
            p.correct_index % 4 + 1
        };
        self.send(&choice.to_string())
    }

    fn logged_in(name: &str) -> Self {
        let mut d = Driver::new(engine());
        d.send("START");
        d.send(&format!("NEW {name}"));
        d
    }

    fn in_game() -> Self {
        let mut d = Driver::logged_in("ALI");
        d.send("1");
        d
    }
}

fn stat(engine: &Engine, level: u8) -> Option<(u64, u64)> {
    engine
        .store()
        .level_stat(&StatKey {
            phone_no: phone(),
            player_id: "ALI".into(),
            topic_id: 1,
            level,
        })
        .ok()
        .map(|s| (s.total_asked, s.total_correct))
}

#[test]
fn normalize_examples() {
    assert_eq!(normalize("  start "), "START");
    assert_eq!(normalize("new   Ali"), "NEW ALI");
    assert_eq!(normalize(""), "");
    assert_eq!(normalize("\tExit\n"), "EXIT");
}

#[test]
fn command_parsing() {
    assert_eq!(Command::parse("START"), Command::Start);
    assert_eq!(Command::parse("#"), Command::Help);
    assert_eq!(Command::parse("12"), Command::Number(12));
    assert_eq!(Command::parse("NEW"), Command::BadNew);
    assert_eq!(Command::parse("NEW A B"), Command::BadNew);
    assert_eq!(Command::parse("NEW A X 5"), Command::BadNew);
    assert_eq!(
        Command::parse("NEW ALI 14 8"),
        Command::New {
            name: "ALI".into(),
            age_years: Some(14.0),
            education_years: Some(8.0)
        }
    );
    assert_eq!(Command::parse("NEWS"), Command::Other("NEWS".into()));
    assert_eq!(
        Command::parse("START NOW"),
        Command::Other("START NOW".into())
    );
    assert_eq!(
        Command::parse("99999999999"),
        Command::Other("99999999999".into())
    );
}

#[test]
fn fresh_phone_start_lists_no_players() {
    let mut d = Driver::new(engine());
    assert_eq!(
        d.send("  start "),
        "PLAYERS: NONE. SEND NAME TO LOGIN OR NEW <NAME> TO REGISTER"
    );
    assert_eq!(d.row().state, SessionState::AwaitLogin);
    assert_eq!(d.engine.store().outbox_len(), 1);
}

#[test]
fn registration_logs_in_and_lists_topics() {
    let mut d = Driver::new(engine());
    d.send("START");
    assert_eq!(
        d.send("new ali"),
        "TOPICS: 1:ADDITION 2:SUBTRACTION. SEND NUMBER"
    );
    assert_eq!(d.row().state, SessionState::AwaitTopic);
    assert_eq!(d.row().player_id.as_deref(), Some("ALI"));
    let p = d.engine.store().player(&phone(), "ALI").unwrap();
    assert_eq!(p.reg_date, Timestamp::from_secs(d.t).date());
    assert_eq!((p.age_years, p.education_years), (12.0, 6.0));
}

#[test]
fn extended_registration_sets_demographics() {
    let mut d = Driver::new(engine());
    d.send("START");
    d.send("NEW SADIQ 25 8");
    let p = d.engine.store().player(&phone(), "SADIQ").unwrap();
    assert_eq!((p.age_years, p.education_years), (25.0, 8.0));
}

#[test]
fn duplicate_and_invalid_names() {
    let mut d = Driver::logged_in("ALI");
    d.send("START");
    assert_eq!(
        d.send("NEW ALI"),
        "NAME TAKEN. PLAYERS: ALI. SEND NAME TO LOGIN OR NEW <NAME> TO REGISTER"
    );
    assert!(d.send("NEW A_B").starts_with("INVALID NAME. PLAYERS: ALI."));
    assert!(d.send("NEW").starts_with("INVALID NAME."));
    assert_eq!(d.engine.store().players_for(&phone()).len(), 1);
}

#[test]
fn eleventh_player_is_refused() {
    let mut d = Driver::new(engine());
    for i in 0..10 {
        d.send("START");
        d.send(&format!("NEW P{i}"));
    }
    let list = d.send("START");
    assert!(list.ends_with("SEND NAME TO LOGIN"), "{list}");
    assert_eq!(d.send("NEW PAT"), "PHONE FULL (10 PLAYERS)");
    assert_eq!(d.row().state, SessionState::AwaitLogin);
    assert_eq!(d.engine.store().players_for(&phone()).len(), 10);
}

#[test]
fn login_retries_until_a_known_name() {
    let mut d = Driver::logged_in("ALI");
    d.send("START");
    let list = "PLAYERS: ALI. SEND NAME TO LOGIN OR NEW <NAME> TO REGISTER";
    assert_eq!(d.send("BOB"), list);
    assert_eq!(d.send("1"), list);
    assert_eq!(
        d.send("ali"),
        "TOPICS: 1:ADDITION 2:SUBTRACTION. SEND NUMBER"
    );
}

#[test]
fn invalid_topic_reprompts() {
    let mut d = Driver::logged_in("ALI");
    let topics = "TOPICS: 1:ADDITION 2:SUBTRACTION. SEND NUMBER";
    assert_eq!(d.send("9"), topics);
    assert_eq!(d.send("ADDITION"), topics);
    assert_eq!(d.row().state, SessionState::AwaitTopic);
}

#[test]
fn first_play_starts_on_the_lowest_level() {
    let d = Driver::in_game();
    assert_eq!(d.row().level, 0);
    assert_eq!(d.row().topic_id, Some(1));
    assert_eq!(stat(&d.engine, 0), Some((0, 0)));
    let p = d.engine.store().player(&phone(), "ALI").unwrap();
    assert!(p.last_game_played.is_some());

    // SUBTRACTION only has level 1.
    let mut d = Driver::logged_in("ALI");
    let q = d.send("2");
    assert!(q.starts_with("Q13 L2: S? 1:a 2:b."), "{q}");
}

#[test]
fn help_keeps_the_question_pending() {
    let mut d = Driver::in_game();
    let before = d.pending();
    let help = d.send("#");
    assert_eq!(help, format!("HELP: {}", before.help));
    assert_eq!(d.pending(), before);
    assert_eq!(d.row().block_asked, 0);
}

#[test]
fn correct_answer_is_recorded_and_next_question_sent() {
    let mut d = Driver::in_game();
    let p = d.pending();
    assert_eq!(p.correct_index, 3);
    let reply = d.send("3");
    assert!(reply.starts_with("CORRECT! Q"), "{reply}");
    assert_eq!((d.row().block_asked, d.row().block_correct), (1, 1));
    let h = d.engine.store().history().last().unwrap();
    assert!(h.correct);
    assert_eq!(h.question_id, p.question_id);
    assert_eq!(h.answer_seconds, 1.0);
    // Two questions per level: the repeat is skipped.
    assert_ne!(d.pending().question_id, p.question_id);
}

#[test]
fn wrong_answer_reveals_the_correct_index() {
    let mut d = Driver::in_game();
    let reply = d.send("1");
    assert!(reply.starts_with("WRONG. ANS 3. Q"), "{reply}");
    assert_eq!((d.row().block_asked, d.row().block_correct), (1, 0));
    assert!(!d.engine.store().history()[0].correct);
}

#[test]
fn out_of_range_choice_resends_the_question() {
    let mut d = Driver::in_game();
    let p = d.pending();
    let q = d.engine.store().question(p.question_id).unwrap().render();
    assert_eq!(d.send("7"), q);
    assert_eq!(d.send("0"), q);
    assert_eq!(d.send("HELLO"), q);
    assert_eq!(d.row().block_asked, 0);
    assert!(d.engine.store().history().is_empty());
}

#[test]
fn tenth_answer_flushes_the_block_and_adapts() {
    let mut d = Driver::in_game();
    for _ in 0..9 {
        d.answer(true);
    }
    assert_eq!(d.row().block_asked, 9);
    assert_eq!(stat(&d.engine, 0), Some((0, 0)));
    d.answer(true);
    assert_eq!(stat(&d.engine, 0), Some((10, 10)));
    assert_eq!((d.row().block_asked, d.row().block_correct), (0, 0));
    // Defaults (edu 6, age 12) with 100% standing: School/Child/Good → Level3.
    assert_eq!(d.row().level, 3);
    let q = d.engine.store().question(d.pending().question_id).unwrap();
    assert_eq!(q.level, 3);
}

#[test]
fn exit_archives_the_partial_block() {
    let mut d = Driver::in_game();
    d.answer(true);
    d.answer(false);
    d.answer(true);
    assert_eq!(d.send("exit"), "SESSION ENDED. SEND START TO PLAY");
    assert!(d.engine.store().active(&phone()).is_none());
    assert_eq!(stat(&d.engine, 0), Some((3, 2)));
    assert_eq!(d.send("HELLO"), "SEND START TO BEGIN");
    assert_eq!(d.send("EXIT"), "SEND START TO BEGIN");
    assert_eq!(d.send("NEW BOB"), "SEND START TO BEGIN");
}

#[test]
fn start_mid_game_archives_like_exit() {
    let mut d = Driver::in_game();
    d.answer(true);
    d.answer(true);
    assert!(d.send("START").starts_with("PLAYERS: ALI."));
    assert_eq!(stat(&d.engine, 0), Some((2, 2)));
    assert_eq!(d.row().state, SessionState::AwaitLogin);
}

#[test]
fn new_mid_game_archives_and_registers() {
    let mut d = Driver::in_game();
    d.answer(false);
    assert_eq!(
        d.send("NEW SARA"),
        "TOPICS: 1:ADDITION 2:SUBTRACTION. SEND NUMBER"
    );
    assert_eq!(stat(&d.engine, 0), Some((1, 0)));
    assert_eq!(d.row().player_id.as_deref(), Some("SARA"));
}

#[test]
fn returning_player_resumes_at_adapted_level() {
    let mut d = Driver::in_game();
    for _ in 0..10 {
        d.answer(true);
    }
    d.send("EXIT");
    d.send("START");
    d.send("ALI");
    d.send("1");
    assert_eq!(d.row().level, 3);
}

#[test]
fn timeout_boundaries() {
    let mut d = Driver::in_game();
    let last = d.row().last_activity;
    assert_eq!(d.engine.timeout_sweep(last.plus_millis(599_000)), 0);
    assert_eq!(d.engine.timeout_sweep(last.plus_millis(600_000)), 0);
    assert_eq!(d.engine.timeout_sweep(last.plus_millis(601_000)), 1);
    assert!(d.engine.store().active(&phone()).is_none());
    let mut outbox = d.engine.store().tables().outbox.clone();
    assert_eq!(
        outbox.pop_back().unwrap().text,
        "SESSION ENDED. SEND START TO PLAY"
    );
}

#[test]
fn timeout_flushes_the_block_in_progress() {
    let mut d = Driver::in_game();
    for correct in [true, false, true, false, true] {
        d.answer(correct);
    }
    let last = d.row().last_activity;
    assert_eq!(d.engine.timeout_sweep(last.plus_millis(601_000)), 1);
    assert_eq!(stat(&d.engine, 0), Some((5, 3)));
}

#[test]
fn every_reply_goes_through_the_buffer() {
    let mut d = Driver::in_game();
    d.send("#");
    d.answer(true);
    let texts: Vec<&str> = d
        .engine
        .store()
        .tables()
        .outbox
        .iter()
        .map(|m| m.text.as_str())
        .collect();
    assert_eq!(texts.len(), 5);
    assert!(texts[0].starts_with("PLAYERS:"));
    assert!(texts[1].starts_with("TOPICS:"));
    assert!(texts[2].starts_with("Q"));
    assert!(texts[3].starts_with("HELP:"));
    assert!(texts[4].starts_with("CORRECT!"));
}

#[test]
fn phones_are_independent() {
    let mut d = Driver::in_game();
    let other = Phone::parse("07700900002").unwrap();
    assert_eq!(d.send_from(&other, "3"), "SEND START TO BEGIN");
    assert_eq!(d.row().block_asked, 0);
}

fn adapt_for(age: &str, edu: &str, asked: u64, correct: u64, bank: QuestionBank) -> u8 {
    let mut d = Driver::new(engine_with(bank));
    d.send("START");
    d.send(&format!("NEW ALI {age} {edu}"));
    d.engine
        .store_mut()
        .add_level_stats(
            StatKey {
                phone_no: phone(),
                player_id: "ALI".into(),
                topic_id: 1,
                level: 0,
            },
            asked,
            correct,
        )
        .unwrap();
    d.engine.adapt(&phone(), "ALI", 1).unwrap()
}

#[test]
fn adapt_corner_cases() {
    assert_eq!(adapt_for("30", "16", 10, 10, bank()), 5);
    assert_eq!(adapt_for("10", "0", 10, 0, bank()), 0);
}

#[test]
fn adapt_clamps_to_populated_levels() {
    let limited = QuestionBank::parse(
        "T | 0 | a | x;y | 1 | h\nT | 1 | b | x;y | 1 | h\nT | 2 | c | x;y | 1 | h\n",
    )
    .unwrap();
    // Teen with ten years of schooling at 100%: fuzzy says 4 or 5.
    let fuzzy = FuzzySystem::normative()
        .infer(CrispInput::new(10.0, 17.0, 100.0))
        .unwrap();
    assert!(fuzzy.level >= 4);
    assert_eq!(adapt_for("17", "10", 10, 10, limited), 2);
}

#[test]
fn nearest_level_ties_go_down() {
    assert_eq!(nearest_level(&[1, 3], 2), Some(1));
    assert_eq!(nearest_level(&[0, 5], 4), Some(5));
    assert_eq!(nearest_level(&[2], 0), Some(2));
    assert_eq!(nearest_level(&[], 3), None);
}

#[test]
fn pick_question_cases() {
    let store = Store::from_bank(bank());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // SUBTRACTION level 1 has one question: always it, even if it was the last.
    for _ in 0..5 {
        assert_eq!(
            pick_question(&store, 2, 1, Some(13), &mut rng)
                .unwrap()
                .question_id,
            13
        );
    }
    assert!(matches!(
        pick_question(&store, 2, 0, None, &mut rng),
        Err(SessionError::NoQuestions {
            topic_id: 2,
            level: Some(0)
        })
    ));
    // Level 0 of ADDITION is {1, 2}: excluding 1 forces 2.
    for _ in 0..5 {
        assert_eq!(
            pick_question(&store, 1, 0, Some(1), &mut rng)
                .unwrap()
                .question_id,
            2
        );
    }
}

#[test]
fn pick_question_is_reproducible_under_seed() {
    let mut text = String::new();
    for i in 0..4 {
        text.push_str(&format!("T | 0 | q{i} | a;b | 1 | h\n"));
    }
    let store = Store::from_bank(QuestionBank::parse(&text).unwrap());
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev = None;
        (0..20)
            .map(|_| {
                let id = pick_question(&store, 1, 0, prev, &mut rng)
                    .unwrap()
                    .question_id;
                prev = Some(id);
                id
            })
            .collect::<Vec<_>>()
    };
    let a = run(42);
    assert_eq!(a, run(42));
    assert!(a.windows(2).all(|w| w[0] != w[1]));
    let distinct: std::collections::BTreeSet<u32> = a.iter().copied().collect();
    assert_eq!(distinct.len(), 4);
}

#[test]
fn config_validation() {
    let bad = SessionConfig {
        adaptation_threshold: 0,
        ..SessionConfig::default()
    };
    assert!(Engine::new(Store::default(), FuzzySystem::normative(), bad).is_err());
    let bad = SessionConfig {
        max_players_per_phone: 11,
        ..SessionConfig::default()
    };
    assert!(bad.validate().is_err());
}
