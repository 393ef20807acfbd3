//! Per-phone SMS protocol.
//!
//! A phone moves through `AwaitLogin → AwaitTopic → InGame`. `START`, `NEW`
//! and `EXIT` are recognised in every state before anything else. Every reply
//! goes through the store's message buffer.

pub mod templates;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clock::Timestamp;
use crate::fuzzy::{CrispInput, FuzzyError, FuzzySystem};
use crate::tables::{
    is_valid_player_name, ActivePlayerRow, BufferedMessage, GameHistoryRow, Pending, Phone, Player,
    Question, SessionState, StatKey, Store, TableError, DEFAULT_AGE_YEARS, DEFAULT_EDUCATION_YEARS,
    MAX_PLAYERS_PER_PHONE,
};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("topic {topic_id} has no questions at level {level:?}")]
    NoQuestions { topic_id: u32, level: Option<u8> },
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub max_players_per_phone: usize,
    /// Answers per block; stats are flushed and the level recomputed after
    /// this many.
    pub adaptation_threshold: u32,
    pub idle_timeout_seconds: u64,
    pub sweep_interval_seconds: u64,
    /// `None` seeds from OS entropy.
    pub rng_seed: Option<u64>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_players_per_phone: MAX_PLAYERS_PER_PHONE,
            adaptation_threshold: 10,
            idle_timeout_seconds: 600,
            sweep_interval_seconds: 60,
            rng_seed: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        if self.max_players_per_phone == 0 || self.max_players_per_phone > MAX_PLAYERS_PER_PHONE {
            return Err(SessionError::Config(format!(
                "max_players_per_phone must be in 1..={MAX_PLAYERS_PER_PHONE}"
            )));
        }
        if self.adaptation_threshold == 0
            || self.idle_timeout_seconds == 0
            || self.sweep_interval_seconds == 0
        {
            return Err(SessionError::Config(
                "all periods and thresholds must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InboundSms {
    pub phone_no: Phone,
    pub text: String,
    pub received_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub phone_no: Phone,
    pub text: String,
}

/// Uppercase, trim, and collapse runs of interior whitespace to one space.
pub fn normalize(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_uppercase()
}

#[derive(Debug, Clone, PartialEq)]
enum Command {
    Start,
    Exit,
    New {
        name: String,
        age_years: Option<f64>,
        education_years: Option<f64>,
    },
    BadNew,
    Help,
    Number(u32),
    Other(String),
}

impl Command {
    fn parse(text: &str) -> Self {
        match text {
            "START" => return Command::Start,
            "EXIT" => return Command::Exit,
            "#" => return Command::Help,
            _ => {}
        }
        if text == "NEW" {
            return Command::BadNew;
        }
        if let Some(rest) = text.strip_prefix("NEW ") {
            let parts: Vec<&str> = rest.split(' ').collect();
            let years = |s: &str| s.parse::<f64>().ok().filter(|v| (0.0..=150.0).contains(v));
            return match parts.as_slice() {
                [name] => Command::New {
                    name: name.to_string(),
                    age_years: None,
                    education_years: None,
                },
                [name, age, edu] => match (years(age), years(edu)) {
                    (Some(a), Some(e)) => Command::New {
                        name: name.to_string(),
                        age_years: Some(a),
                        education_years: Some(e),
                    },
                    _ => Command::BadNew,
                },
                _ => Command::BadNew,
            };
        }
        if !text.is_empty() && text.len() <= 9 && text.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(n) = text.parse() {
                return Command::Number(n);
            }
        }
        Command::Other(text.to_string())
    }
}

/// Uniform pick among the questions at `(topic_id, level)`, skipping
/// `previous` when there is another choice.
pub fn pick_question<'s, R: Rng>(
    store: &'s Store,
    topic_id: u32,
    level: u8,
    previous: Option<u32>,
    rng: &mut R,
) -> Result<&'s Question, SessionError> {
    let ids = store.questions_at(topic_id, level);
    let candidates: Vec<u32> = if ids.len() >= 2 {
        ids.iter()
            .copied()
            .filter(|&id| Some(id) != previous)
            .collect()
    } else {
        ids.to_vec()
    };
    let id = match candidates.len() {
        0 => {
            return Err(SessionError::NoQuestions {
                topic_id,
                level: Some(level),
            })
        }
        1 => candidates[0],
        n => candidates[rng.gen_range(0..n)],
    };
    Ok(store.question(id)?)
}

/// Next level for a player: fuzzy inference on the player's demographics and
/// pooled standing, snapped to the nearest level that has questions (ties go
/// to the lower level).
pub fn adapt(
    store: &Store,
    fuzzy: &FuzzySystem,
    phone: &Phone,
    player_id: &str,
    topic_id: u32,
) -> Result<u8, SessionError> {
    let player = store.player(phone, player_id)?;
    let standing = store.standing_pct(phone, player_id, topic_id);
    let target = fuzzy
        .infer(CrispInput::new(
            player.education_years,
            player.age_years,
            standing,
        ))?
        .level;
    nearest_level(&store.populated_levels(topic_id), target).ok_or(SessionError::NoQuestions {
        topic_id,
        level: None,
    })
}

fn nearest_level(levels: &[u8], target: u8) -> Option<u8> {
    levels
        .iter()
        .copied()
        .min_by_key(|&l| (l.abs_diff(target), l))
}

/// The protocol engine. Owns the store and processes one event at a time.
#[derive(Debug)]
pub struct Engine {
    store: Store,
    fuzzy: FuzzySystem,
    config: SessionConfig,
    rng: ChaCha8Rng,
}

impl Engine {
    pub fn new(
        store: Store,
        fuzzy: FuzzySystem,
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        let rng = match config.rng_seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::from_entropy(),
        };
        Ok(Self {
            store,
            fuzzy,
            config,
            rng,
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut Store {
        &mut self.store
    }

    pub fn into_store(self) -> Store {
        self.store
    }

    pub fn fuzzy(&self) -> &FuzzySystem {
        &self.fuzzy
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn adapt(&self, phone: &Phone, player_id: &str, topic_id: u32) -> Result<u8, SessionError> {
        adapt(&self.store, &self.fuzzy, phone, player_id, topic_id)
    }

    /// Process one inbound message. The returned replies have already been
    /// pushed to the message buffer.
    pub fn handle_message(&mut self, sms: InboundSms) -> Vec<Reply> {
        let text = normalize(&sms.text);
        let phone = sms.phone_no.clone();
        let now = sms.received_at;
        let texts = self.dispatch(&phone, Command::parse(&text), now);
        if let Some(row) = self.store.active_mut(&phone) {
            row.last_activity = now;
        }
        texts
            .into_iter()
            .map(|text| {
                let msg = BufferedMessage::new(phone.clone(), text);
                self.store.push_message(msg.clone());
                Reply {
                    phone_no: msg.phone_no,
                    text: msg.text,
                }
            })
            .collect()
    }

    /// End every session idle for longer than the timeout. Returns how many
    /// were ended.
    pub fn timeout_sweep(&mut self, now: Timestamp) -> usize {
        let limit = self.config.idle_timeout_seconds as i64 * 1000;
        let stale: Vec<Phone> = self
            .store
            .active_rows()
            .filter(|r| now.millis() - r.last_activity.millis() > limit)
            .map(|r| r.phone_no.clone())
            .collect();
        for phone in &stale {
            self.end_session(phone);
            self.store.push_message(BufferedMessage::new(
                phone.clone(),
                templates::SESSION_ENDED,
            ));
        }
        stale.len()
    }

    fn dispatch(&mut self, phone: &Phone, cmd: Command, now: Timestamp) -> Vec<String> {
        match cmd {
            Command::Start => {
                self.end_session(phone);
                self.store
                    .upsert_active(ActivePlayerRow::awaiting_login(phone.clone(), now));
                vec![self.player_list(phone)]
            }
            Command::Exit => {
                if self.end_session(phone) {
                    vec![templates::SESSION_ENDED.to_string()]
                } else {
                    vec![templates::SEND_START.to_string()]
                }
            }
            Command::New {
                name,
                age_years,
                education_years,
            } => {
                if self.store.active(phone).is_none() {
                    return vec![templates::SEND_START.to_string()];
                }
                self.back_to_login(phone);
                vec![self.register(phone, name, age_years, education_years, now)]
            }
            Command::BadNew => {
                if self.store.active(phone).is_none() {
                    return vec![templates::SEND_START.to_string()];
                }
                self.back_to_login(phone);
                vec![format!(
                    "{} {}",
                    templates::INVALID_NAME,
                    self.player_list(phone)
                )]
            }
            other => {
                let Some(row) = self.store.active(phone) else {
                    return vec![templates::SEND_START.to_string()];
                };
                match row.state.clone() {
                    SessionState::AwaitLogin => vec![self.login(phone, other)],
                    SessionState::AwaitTopic => vec![self.select_topic(phone, other, now)],
                    SessionState::InGame { pending } => {
                        vec![self.in_game(phone, other, pending, now)]
                    }
                }
            }
        }
    }

    fn player_list(&self, phone: &Phone) -> String {
        let players = self.store.players_for(phone);
        let can_register = players.len() < self.config.max_players_per_phone;
        templates::player_list(&players, can_register)
    }

    fn topic_list(&self) -> String {
        templates::topic_list(
            self.store
                .topics()
                .filter(|t| !self.store.populated_levels(t.topic_id).is_empty()),
        )
    }

    /// Archive the logged-in player (if any) and return the phone to the
    /// login prompt without removing its row.
    fn back_to_login(&mut self, phone: &Phone) {
        let last = self.store.active(phone).map(|r| r.last_activity);
        if self
            .store
            .active(phone)
            .is_some_and(|r| r.state != SessionState::AwaitLogin)
        {
            self.end_session(phone);
            self.store.upsert_active(ActivePlayerRow::awaiting_login(
                phone.clone(),
                last.unwrap_or_default(),
            ));
        }
    }

    fn register(
        &mut self,
        phone: &Phone,
        name: String,
        age_years: Option<f64>,
        education_years: Option<f64>,
        now: Timestamp,
    ) -> String {
        if self.store.players_for(phone).len() >= self.config.max_players_per_phone {
            return templates::phone_full(self.config.max_players_per_phone);
        }
        if !is_valid_player_name(&name) {
            return format!("{} {}", templates::INVALID_NAME, self.player_list(phone));
        }
        if self.store.player(phone, &name).is_ok() {
            return format!("{} {}", templates::NAME_TAKEN, self.player_list(phone));
        }
        let player = Player {
            phone_no: phone.clone(),
            player_id: name.clone(),
            reg_date: now.date(),
            last_game_played: None,
            age_years: age_years.unwrap_or(DEFAULT_AGE_YEARS),
            education_years: education_years.unwrap_or(DEFAULT_EDUCATION_YEARS),
        };
        if let Err(e) = self.store.insert_player(player) {
            log::warn!("registration of {name} on {phone} refused: {e}");
            return self.player_list(phone);
        }
        self.log_in(phone, name)
    }

    fn log_in(&mut self, phone: &Phone, name: String) -> String {
        if let Some(row) = self.store.active_mut(phone) {
            row.player_id = Some(name);
            row.state = SessionState::AwaitTopic;
        }
        self.topic_list()
    }

    fn login(&mut self, phone: &Phone, cmd: Command) -> String {
        let candidate = match cmd {
            Command::Other(text) => text,
            Command::Number(n) => n.to_string(),
            _ => String::new(),
        };
        if self.store.player(phone, &candidate).is_ok() {
            self.log_in(phone, candidate)
        } else {
            self.player_list(phone)
        }
    }

    fn select_topic(&mut self, phone: &Phone, cmd: Command, now: Timestamp) -> String {
        let topic_id = match cmd {
            Command::Number(id) if !self.store.populated_levels(id).is_empty() => id,
            _ => return self.topic_list(),
        };
        let player_id = self
            .store
            .active(phone)
            .and_then(|r| r.player_id.clone())
            .expect("topic selection requires a logged-in player");

        match self.start_topic(phone, &player_id, topic_id, now) {
            Ok(text) => text,
            Err(e) => {
                log::error!("cannot start topic {topic_id} for {player_id} on {phone}: {e}");
                self.end_session(phone);
                templates::no_questions()
            }
        }
    }

    fn start_topic(
        &mut self,
        phone: &Phone,
        player_id: &str,
        topic_id: u32,
        now: Timestamp,
    ) -> Result<String, SessionError> {
        self.store.player_mut(phone, player_id)?.last_game_played = Some(now.date());
        let level = if self.store.total_asked(phone, player_id, topic_id) == 0 {
            // Beginners start on the lowest populated level.
            let level = nearest_level(&self.store.populated_levels(topic_id), 0).ok_or(
                SessionError::NoQuestions {
                    topic_id,
                    level: None,
                },
            )?;
            self.store.add_level_stats(
                StatKey {
                    phone_no: phone.clone(),
                    player_id: player_id.to_string(),
                    topic_id,
                    level,
                },
                0,
                0,
            )?;
            level
        } else {
            self.adapt(phone, player_id, topic_id)?
        };
        let question = pick_question(&self.store, topic_id, level, None, &mut self.rng)?.clone();
        let row = self.store.active_mut(phone).expect("active row");
        row.topic_id = Some(topic_id);
        row.level = level;
        row.block_asked = 0;
        row.block_correct = 0;
        row.state = SessionState::InGame {
            pending: pending_for(&question, now),
        };
        Ok(question.render())
    }

    fn in_game(&mut self, phone: &Phone, cmd: Command, pending: Pending, now: Timestamp) -> String {
        let question = match self.store.question(pending.question_id) {
            Ok(q) => q.clone(),
            Err(e) => {
                log::error!("pending question vanished: {e}");
                self.end_session(phone);
                return templates::no_questions();
            }
        };
        match cmd {
            Command::Help => templates::help(&pending.help),
            Command::Number(n) if n >= 1 && (n as usize) <= question.choices.len() => {
                match self.grade(phone, &pending, n, now) {
                    Ok(text) => text,
                    Err(e) => {
                        log::error!("grading failed on {phone}: {e}");
                        self.end_session(phone);
                        templates::no_questions()
                    }
                }
            }
            _ => question.render(),
        }
    }

    fn grade(
        &mut self,
        phone: &Phone,
        pending: &Pending,
        answer: u32,
        now: Timestamp,
    ) -> Result<String, SessionError> {
        let correct = answer == u32::from(pending.correct_index);
        let row = self.store.active_mut(phone).expect("active row");
        let player_id = row.player_id.clone().expect("in-game row has a player");
        let topic_id = row.topic_id.expect("in-game row has a topic");
        row.block_asked += 1;
        row.block_correct += u32::from(correct);
        let (level, block_asked, block_correct) = (row.level, row.block_asked, row.block_correct);

        self.store.append_history(GameHistoryRow {
            phone_no: phone.clone(),
            player_id: player_id.clone(),
            topic_id,
            level,
            question_id: pending.question_id,
            asked_at: pending.sent_at,
            answer_seconds: now.secs_since(pending.sent_at).max(0.0),
            correct,
        })?;

        let mut next_level = level;
        if block_asked >= self.config.adaptation_threshold {
            self.flush_block(phone)?;
            next_level = self.adapt(phone, &player_id, topic_id)?;
        }

        let question = pick_question(
            &self.store,
            topic_id,
            next_level,
            Some(pending.question_id),
            &mut self.rng,
        )?
        .clone();
        let row = self.store.active_mut(phone).expect("active row");
        row.level = next_level;
        row.state = SessionState::InGame {
            pending: pending_for(&question, now),
        };

        let prefix = if correct {
            templates::CORRECT.to_string()
        } else {
            templates::wrong(pending.correct_index)
        };
        log::debug!(
            "{phone}/{player_id} topic {topic_id} L{level}: {}/{} in block",
            block_correct,
            block_asked
        );
        Ok(format!("{prefix} {}", question.render()))
    }

    /// Move the row's block counters into the per-level statistics.
    fn flush_block(&mut self, phone: &Phone) -> Result<(), SessionError> {
        let Some(row) = self.store.active_mut(phone) else {
            return Ok(());
        };
        let (asked, correct) = (row.block_asked, row.block_correct);
        row.block_asked = 0;
        row.block_correct = 0;
        let (Some(player_id), Some(topic_id)) = (row.player_id.clone(), row.topic_id) else {
            return Ok(());
        };
        if asked == 0 {
            return Ok(());
        }
        let key = StatKey {
            phone_no: phone.clone(),
            player_id,
            topic_id,
            level: row.level,
        };
        self.store
            .add_level_stats(key, u64::from(asked), u64::from(correct))?;
        Ok(())
    }

    /// Archive and delete the phone's active row. Returns whether one existed.
    fn end_session(&mut self, phone: &Phone) -> bool {
        if self.store.active(phone).is_none() {
            return false;
        }
        if let Err(e) = self.flush_block(phone) {
            log::error!("failed to archive block for {phone}: {e}");
        }
        self.store.remove_active(phone);
        true
    }
}

fn pending_for(q: &Question, now: Timestamp) -> Pending {
    Pending {
        question_id: q.question_id,
        correct_index: q.correct_index,
        help: q.help.clone(),
        sent_at: now,
    }
}

#[cfg(test)]
mod tests;
