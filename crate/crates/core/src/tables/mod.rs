//! In-memory tables with file-backed persistence.
//!
//! Questions, topics and the per-level question counts come from a read-only
//! question bank and are always memory resident. Players, per-level
//! statistics, game history, active sessions and the outbound message buffer
//! are persisted to a state directory as line-delimited record files.

mod bank;
mod persist;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;

pub use bank::QuestionBank;
pub use persist::{ACTIVE_FILE, HISTORY_FILE, OUTBOX_FILE, PLAYERS_FILE, PLAYER_LEVEL_FILE};

/// Longest message body the buffer accepts (three concatenated SMS).
pub const MAX_MESSAGE_CHARS: usize = 480;

/// Hard cap on registered players per phone number.
pub const MAX_PLAYERS_PER_PHONE: usize = 10;

pub const DEFAULT_AGE_YEARS: f64 = 12.0;
pub const DEFAULT_EDUCATION_YEARS: f64 = 6.0;

/// Standing reported for a player with no answered questions in a topic.
pub const NEUTRAL_STANDING_PCT: f64 = 50.0;

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{file} line {line}: {reason}")]
    Corrupt {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("duplicate: {0}")]
    Duplicate(String),
    #[error("phone {0} already has {MAX_PLAYERS_PER_PHONE} players")]
    Capacity(Phone),
    #[error("invalid record: {0}")]
    Invalid(String),
}

/// Phone number reduced to its digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phone(String);

impl Phone {
    /// Keeps only ASCII digits; `None` if there are none.
    pub fn parse(raw: &str) -> Option<Self> {
        let digits: String = raw.chars().filter(char::is_ascii_digit).collect();
        (!digits.is_empty()).then_some(Self(digits))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Phone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Player names are 1 to 16 uppercase letters or digits.
pub fn is_valid_player_name(name: &str) -> bool {
    (1..=16).contains(&name.len())
        && name
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: u32,
    pub topic_id: u32,
    /// Difficulty level, `0..=5`.
    pub level: u8,
    pub text: String,
    pub choices: Vec<String>,
    /// 1-based index into `choices`.
    pub correct_index: u8,
    pub help: String,
}

impl Question {
    /// SMS body for this question. Levels are shown 1-based.
    pub fn render(&self) -> String {
        let choices: Vec<String> = self
            .choices
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}:{c}", i + 1))
            .collect();
        format!(
            "Q{} L{}: {} {}. SEND NUMBER, # FOR HELP",
            self.question_id,
            self.level + 1,
            self.text,
            choices.join(" ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Player {
    pub phone_no: Phone,
    pub player_id: String,
    pub reg_date: NaiveDate,
    pub last_game_played: Option<NaiveDate>,
    pub age_years: f64,
    pub education_years: f64,
}

/// Key of a per-level statistic: phone, player, topic, level.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StatKey {
    pub phone_no: Phone,
    pub player_id: String,
    pub topic_id: u32,
    pub level: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerLevelStat {
    pub phone_no: Phone,
    pub player_id: String,
    pub topic_id: u32,
    pub level: u8,
    pub total_asked: u64,
    pub total_correct: u64,
}

impl PlayerLevelStat {
    pub fn key(&self) -> StatKey {
        StatKey {
            phone_no: self.phone_no.clone(),
            player_id: self.player_id.clone(),
            topic_id: self.topic_id,
            level: self.level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameHistoryRow {
    pub phone_no: Phone,
    pub player_id: String,
    pub topic_id: u32,
    pub level: u8,
    pub question_id: u32,
    pub asked_at: Timestamp,
    pub answer_seconds: f64,
    pub correct: bool,
}

/// The question currently awaiting an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pending {
    pub question_id: u32,
    pub correct_index: u8,
    pub help: String,
    pub sent_at: Timestamp,
}

/// Where a phone is in the protocol. A pending question exists exactly when
/// the session is in game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state")]
pub enum SessionState {
    AwaitLogin,
    AwaitTopic,
    InGame { pending: Pending },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivePlayerRow {
    pub phone_no: Phone,
    pub player_id: Option<String>,
    #[serde(flatten)]
    pub state: SessionState,
    pub topic_id: Option<u32>,
    pub level: u8,
    pub block_asked: u32,
    pub block_correct: u32,
    pub last_activity: Timestamp,
}

impl ActivePlayerRow {
    pub fn awaiting_login(phone_no: Phone, now: Timestamp) -> Self {
        Self {
            phone_no,
            player_id: None,
            state: SessionState::AwaitLogin,
            topic_id: None,
            level: 0,
            block_asked: 0,
            block_correct: 0,
            last_activity: now,
        }
    }

    pub fn pending(&self) -> Option<&Pending> {
        match &self.state {
            SessionState::InGame { pending } => Some(pending),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferedMessage {
    pub phone_no: Phone,
    pub text: String,
}

impl BufferedMessage {
    /// Bodies longer than [`MAX_MESSAGE_CHARS`] are cut to the limit.
    pub fn new(phone_no: Phone, text: impl Into<String>) -> Self {
        let mut text = text.into();
        if let Some((idx, _)) = text.char_indices().nth(MAX_MESSAGE_CHARS) {
            text.truncate(idx);
        }
        Self { phone_no, text }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopLevelStat {
    pub topic_id: u32,
    pub level: u8,
    pub question_count: u32,
}

/// Every table, without any persistence bookkeeping. Two stores hold the same
/// data exactly when their `Tables` compare equal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tables {
    pub topics: BTreeMap<u32, Topic>,
    pub questions: BTreeMap<u32, Question>,
    pub top_level: BTreeMap<(u32, u8), TopLevelStat>,
    pub players: IndexMap<(Phone, String), Player>,
    pub player_levels: BTreeMap<StatKey, PlayerLevelStat>,
    pub history: Vec<GameHistoryRow>,
    pub active: BTreeMap<Phone, ActivePlayerRow>,
    pub outbox: VecDeque<BufferedMessage>,
}

#[derive(Debug, Clone, Default)]
pub struct Store {
    tables: Tables,
    /// Question ids per (topic, level), in bank order.
    by_level: BTreeMap<(u32, u8), Vec<u32>>,
    state_dir: Option<PathBuf>,
    history_persisted: usize,
}

impl Store {
    /// In-memory store over `bank`, with no state directory.
    pub fn from_bank(bank: QuestionBank) -> Self {
        let mut store = Store::default();
        store.install_bank(bank);
        store
    }

    /// Read the question bank and any persisted tables under `state_dir`,
    /// creating the directory if needed.
    pub fn load(state_dir: &Path, bank_path: &Path) -> Result<Self, TableError> {
        let bank = read_bank(bank_path)?;
        let mut store = Self::from_bank(bank);
        persist::load_into(&mut store, state_dir)?;
        store.state_dir = Some(state_dir.to_path_buf());
        Ok(store)
    }

    fn install_bank(&mut self, bank: QuestionBank) {
        self.tables.topics = bank.topics.into_iter().map(|t| (t.topic_id, t)).collect();
        self.tables.questions = bank
            .questions
            .into_iter()
            .map(|q| (q.question_id, q))
            .collect();
        self.recount_levels();
    }

    /// Rebuild the per-level index and [`TopLevelStat`] rows from the questions.
    fn recount_levels(&mut self) {
        self.by_level.clear();
        for q in self.tables.questions.values() {
            self.by_level
                .entry((q.topic_id, q.level))
                .or_default()
                .push(q.question_id);
        }
        self.tables.top_level = self
            .by_level
            .iter()
            .map(|(&(topic_id, level), ids)| {
                (
                    (topic_id, level),
                    TopLevelStat {
                        topic_id,
                        level,
                        question_count: ids.len() as u32,
                    },
                )
            })
            .collect();
    }

    pub fn tables(&self) -> &Tables {
        &self.tables
    }

    pub fn state_dir(&self) -> Option<&Path> {
        self.state_dir.as_deref()
    }

    /// Persist to the store's own state directory. History rows are appended;
    /// every other table is rewritten.
    pub fn checkpoint(&mut self) -> Result<(), TableError> {
        let Some(dir) = self.state_dir.clone() else {
            return Ok(());
        };
        persist::write_tables(&self.tables, &dir)?;
        persist::append_history(&dir, &self.tables.history[self.history_persisted..])?;
        self.history_persisted = self.tables.history.len();
        Ok(())
    }

    /// Write every table from scratch into `dir`, which becomes this store's
    /// state directory.
    pub fn save_to(&mut self, dir: &Path) -> Result<(), TableError> {
        persist::write_tables(&self.tables, dir)?;
        persist::rewrite_history(dir, &self.tables.history)?;
        self.state_dir = Some(dir.to_path_buf());
        self.history_persisted = self.tables.history.len();
        Ok(())
    }

    // ---- topics, questions, level counts

    pub fn topics(&self) -> impl Iterator<Item = &Topic> {
        self.tables.topics.values()
    }

    pub fn topic(&self, topic_id: u32) -> Result<&Topic, TableError> {
        self.tables
            .topics
            .get(&topic_id)
            .ok_or_else(|| TableError::NotFound(format!("topic {topic_id}")))
    }

    pub fn question(&self, question_id: u32) -> Result<&Question, TableError> {
        self.tables
            .questions
            .get(&question_id)
            .ok_or_else(|| TableError::NotFound(format!("question {question_id}")))
    }

    /// Ids of the questions at one level of a topic, in bank order.
    pub fn questions_at(&self, topic_id: u32, level: u8) -> &[u32] {
        self.by_level
            .get(&(topic_id, level))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn top_level_stats(&self) -> impl Iterator<Item = &TopLevelStat> {
        self.tables.top_level.values()
    }

    /// Levels of `topic_id` that hold at least one question, ascending.
    pub fn populated_levels(&self, topic_id: u32) -> Vec<u8> {
        self.tables
            .top_level
            .range((topic_id, 0)..=(topic_id, u8::MAX))
            .filter(|(_, s)| s.question_count > 0)
            .map(|(&(_, level), _)| level)
            .collect()
    }

    // ---- players

    /// Players registered on `phone`, in registration order.
    pub fn players_for(&self, phone: &Phone) -> Vec<&Player> {
        self.tables
            .players
            .values()
            .filter(|p| &p.phone_no == phone)
            .collect()
    }

    pub fn player(&self, phone: &Phone, player_id: &str) -> Result<&Player, TableError> {
        self.tables
            .players
            .get(&(phone.clone(), player_id.to_string()))
            .ok_or_else(|| TableError::NotFound(format!("player {player_id} on {phone}")))
    }

    pub fn player_mut(
        &mut self,
        phone: &Phone,
        player_id: &str,
    ) -> Result<&mut Player, TableError> {
        self.tables
            .players
            .get_mut(&(phone.clone(), player_id.to_string()))
            .ok_or_else(|| TableError::NotFound(format!("player {player_id} on {phone}")))
    }

    /// Register a new player. Fails on a duplicate name, an invalid name, or a
    /// phone that is already full.
    pub fn insert_player(&mut self, player: Player) -> Result<(), TableError> {
        if !is_valid_player_name(&player.player_id) {
            return Err(TableError::Invalid(format!(
                "player name `{}`",
                player.player_id
            )));
        }
        let key = (player.phone_no.clone(), player.player_id.clone());
        if self.tables.players.contains_key(&key) {
            return Err(TableError::Duplicate(format!(
                "player {} on {}",
                player.player_id, player.phone_no
            )));
        }
        if self.players_for(&player.phone_no).len() >= MAX_PLAYERS_PER_PHONE {
            return Err(TableError::Capacity(player.phone_no));
        }
        self.tables.players.insert(key, player);
        Ok(())
    }

    pub fn remove_player(&mut self, phone: &Phone, player_id: &str) -> Result<Player, TableError> {
        self.tables
            .players
            .shift_remove(&(phone.clone(), player_id.to_string()))
            .ok_or_else(|| TableError::NotFound(format!("player {player_id} on {phone}")))
    }

    // ---- per-level statistics

    pub fn level_stat(&self, key: &StatKey) -> Result<&PlayerLevelStat, TableError> {
        self.tables
            .player_levels
            .get(key)
            .ok_or_else(|| TableError::NotFound(format!("level stat {key:?}")))
    }

    pub fn level_stats(&self) -> impl Iterator<Item = &PlayerLevelStat> {
        self.tables.player_levels.values()
    }

    /// Add `asked`/`correct` to the row for `key`, creating it at zero first.
    pub fn add_level_stats(
        &mut self,
        key: StatKey,
        asked: u64,
        correct: u64,
    ) -> Result<(), TableError> {
        if correct > asked {
            return Err(TableError::Invalid(format!(
                "{correct} correct out of {asked} asked"
            )));
        }
        let row = self
            .tables
            .player_levels
            .entry(key.clone())
            .or_insert_with(|| PlayerLevelStat {
                phone_no: key.phone_no,
                player_id: key.player_id,
                topic_id: key.topic_id,
                level: key.level,
                total_asked: 0,
                total_correct: 0,
            });
        row.total_asked += asked;
        row.total_correct += correct;
        Ok(())
    }

    pub fn remove_level_stat(&mut self, key: &StatKey) -> Result<PlayerLevelStat, TableError> {
        self.tables
            .player_levels
            .remove(key)
            .ok_or_else(|| TableError::NotFound(format!("level stat {key:?}")))
    }

    // ---- game history (append-only)

    pub fn append_history(&mut self, row: GameHistoryRow) -> Result<(), TableError> {
        if row.answer_seconds.is_nan() || row.answer_seconds < 0.0 {
            return Err(TableError::Invalid(format!(
                "answer_seconds {} is negative",
                row.answer_seconds
            )));
        }
        self.tables.history.push(row);
        Ok(())
    }

    pub fn history(&self) -> &[GameHistoryRow] {
        &self.tables.history
    }

    // ---- active players

    pub fn active(&self, phone: &Phone) -> Option<&ActivePlayerRow> {
        self.tables.active.get(phone)
    }

    pub fn active_mut(&mut self, phone: &Phone) -> Option<&mut ActivePlayerRow> {
        self.tables.active.get_mut(phone)
    }

    pub fn active_rows(&self) -> impl Iterator<Item = &ActivePlayerRow> {
        self.tables.active.values()
    }

    /// Insert or replace the single active row of `row.phone_no`.
    pub fn upsert_active(&mut self, row: ActivePlayerRow) {
        self.tables.active.insert(row.phone_no.clone(), row);
    }

    pub fn remove_active(&mut self, phone: &Phone) -> Option<ActivePlayerRow> {
        self.tables.active.remove(phone)
    }

    // ---- message buffer (FIFO)

    pub fn push_message(&mut self, msg: BufferedMessage) {
        self.tables.outbox.push_back(msg);
    }

    /// Oldest buffered message.
    pub fn pop_message(&mut self) -> Option<BufferedMessage> {
        self.tables.outbox.pop_front()
    }

    pub fn outbox_len(&self) -> usize {
        self.tables.outbox.len()
    }

    // ---- statistics

    /// Pooled percent correct of a player over every level of a topic, or
    /// [`NEUTRAL_STANDING_PCT`] with no answers yet.
    pub fn standing_pct(&self, phone: &Phone, player_id: &str, topic_id: u32) -> f64 {
        let (asked, correct) = self
            .stats_for(phone, player_id, topic_id)
            .fold((0u64, 0u64), |(a, c), s| {
                (a + s.total_asked, c + s.total_correct)
            });
        if asked == 0 {
            NEUTRAL_STANDING_PCT
        } else {
            100.0 * correct as f64 / asked as f64
        }
    }

    /// Total questions answered by a player in a topic, over all levels.
    pub fn total_asked(&self, phone: &Phone, player_id: &str, topic_id: u32) -> u64 {
        self.stats_for(phone, player_id, topic_id)
            .map(|s| s.total_asked)
            .sum()
    }

    fn stats_for<'a>(
        &'a self,
        phone: &'a Phone,
        player_id: &'a str,
        topic_id: u32,
    ) -> impl Iterator<Item = &'a PlayerLevelStat> + 'a {
        let lo = StatKey {
            phone_no: phone.clone(),
            player_id: player_id.to_string(),
            topic_id,
            level: 0,
        };
        let hi = StatKey {
            level: u8::MAX,
            ..lo.clone()
        };
        self.tables.player_levels.range(lo..=hi).map(|(_, s)| s)
    }

    /// Percent correct over consecutive windows of `window` answers, oldest
    /// first. The last window may be partial.
    pub fn learning_curve(
        &self,
        phone: &Phone,
        player_id: &str,
        topic_id: u32,
        window: usize,
    ) -> Vec<(usize, f64)> {
        let window = window.max(1);
        let rows: Vec<&GameHistoryRow> = self
            .tables
            .history
            .iter()
            .filter(|r| &r.phone_no == phone && r.player_id == player_id && r.topic_id == topic_id)
            .collect();
        rows.chunks(window)
            .enumerate()
            .map(|(i, chunk)| {
                let correct = chunk.iter().filter(|r| r.correct).count();
                (i, 100.0 * correct as f64 / chunk.len() as f64)
            })
            .collect()
    }
}

pub fn read_bank(path: &Path) -> Result<QuestionBank, TableError> {
    let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    QuestionBank::parse(&text)
}
