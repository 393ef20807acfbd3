//! Simulated learners driving the engine over SMS.
//!
//! Each learner texts `START`, registers with `NEW NAME AGE EDU` (or logs in
//! if the name already exists on the phone), picks a topic, answers
//! `n_questions` questions and finally texts `EXIT`. A question at level `k`
//! is answered correctly with probability `p_correct[k]`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::{SimClock, Timestamp};
use crate::fuzzy::LEVEL_COUNT;
use crate::gateway::{Gateway, WireInbound};
use crate::session::Engine;
use crate::tables::{Phone, DEFAULT_AGE_YEARS, DEFAULT_EDUCATION_YEARS};

/// Learner RNG stream is kept apart from the engine's question picks.
const LEARNER_STREAM: u64 = 0x5EED_1EA2;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("profiles: {0}")]
    Profiles(String),
    #[error("learner {name}: {reason}")]
    Learner { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLearnerProfile {
    pub phone: String,
    pub name: String,
    #[serde(default = "default_age")]
    pub age_years: u32,
    #[serde(default = "default_education")]
    pub education_years: u32,
    pub p_correct: [f64; LEVEL_COUNT],
    pub n_questions: u32,
    /// Topic number as listed by the system, 1-based.
    #[serde(default = "default_topic")]
    pub topic: u32,
}

fn default_age() -> u32 {
    DEFAULT_AGE_YEARS as u32
}
fn default_education() -> u32 {
    DEFAULT_EDUCATION_YEARS as u32
}
fn default_topic() -> u32 {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProfilesFile {
    /// Question bank, relative to the profiles file.
    pub bank: Option<PathBuf>,
    #[serde(rename = "learner", default)]
    pub learners: Vec<SimLearnerProfile>,
}

impl ProfilesFile {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let f: ProfilesFile =
            toml::from_str(text).map_err(|e| SimError::Profiles(e.to_string()))?;
        for l in &f.learners {
            if Phone::parse(&l.phone).is_none() {
                return Err(SimError::Profiles(format!(
                    "{}: bad phone `{}`",
                    l.name, l.phone
                )));
            }
            if let Some(p) = l.p_correct.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(SimError::Profiles(format!(
                    "{}: p_correct {p} not in [0, 1]",
                    l.name
                )));
            }
        }
        Ok(f)
    }

    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Profiles(format!("{}: {e}", path.display())))?;
        let mut f = Self::parse(&text)?;
        if let (Some(bank), Some(dir)) = (&f.bank, path.parent()) {
            if bank.is_relative() {
                f.bank = Some(dir.join(bank));
            }
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSummary {
    /// 0-based level the block was played at (the level of its first question).
    pub level: u8,
    pub asked: u32,
    pub correct: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnerSummary {
    pub name: String,
    pub phone: String,
    pub asked: u32,
    pub correct: u32,
    pub blocks: Vec<BlockSummary>,
    /// Level the next question would have been asked at.
    pub final_level: u8,
    pub messages_sent: u32,
}

impl LearnerSummary {
    /// Block levels followed by the final level.
    pub fn trajectory(&self) -> Vec<u8> {
        self.blocks
            .iter()
            .map(|b| b.level)
            .chain(std::iter::once(self.final_level))
            .collect()
    }
}

/// Options beyond the profiles themselves.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub seed: u64,
    /// Text `EXIT` after the last answer.
    pub exit_at_end: bool,
    pub start: Timestamp,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            exit_at_end: true,
            start: crate::transcript::REPLAY_EPOCH,
        }
    }
}

/// Owns a gateway on a simulated clock. Learners run one after another; each
/// message advances the clock by a second and replies are delivered at once.
pub struct Simulation {
    gateway: Gateway,
    clock: SimClock,
    rng: ChaCha8Rng,
    exit_at_end: bool,
}

impl Simulation {
    /// The engine's own seed is left as configured; `options.seed` drives the
    /// learners' answers.
    pub fn new(engine: Engine, options: &SimOptions) -> Self {
        let clock = SimClock::new(options.start);
        let gateway =
            Gateway::new(engine, 1.0, Arc::new(clock.clone())).expect("rate 1.0 is valid");
        Self {
            gateway,
            clock,
            rng: ChaCha8Rng::seed_from_u64(options.seed ^ LEARNER_STREAM),
            exit_at_end: options.exit_at_end,
        }
    }

    pub fn engine(&self) -> &Engine {
        self.gateway.engine()
    }

    pub fn into_engine(self) -> Engine {
        self.gateway.into_engine()
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    fn send(&mut self, phone: &str, text: &str) {
        let now = self.clock.advance_secs(1.0);
        self.gateway
            .submit_inbound(&WireInbound::new(phone, text))
            .expect("simulated messages are well formed");
        self.gateway.process_inbound();
        self.gateway.flush_all(now);
    }

    pub fn run(&mut self, learners: &[SimLearnerProfile]) -> Result<Vec<LearnerSummary>, SimError> {
        learners.iter().map(|l| self.run_learner(l)).collect()
    }

    pub fn run_learner(&mut self, p: &SimLearnerProfile) -> Result<LearnerSummary, SimError> {
        let fail = |reason: String| SimError::Learner {
            name: p.name.clone(),
            reason,
        };
        let phone = Phone::parse(&p.phone).ok_or_else(|| fail("bad phone".into()))?;
        let mut sent = 0u32;
        let mut send = |sim: &mut Self, text: &str| {
            sim.send(&p.phone, text);
            sent += 1;
        };

        send(self, "START");
        if self.engine().store().player(&phone, &p.name).is_ok() {
            send(self, &p.name);
        } else {
            send(
                self,
                &format!("NEW {} {} {}", p.name, p.age_years, p.education_years),
            );
        }
        send(self, &p.topic.to_string());

        let threshold = self.engine().config().adaptation_threshold;
        let mut blocks: Vec<BlockSummary> = Vec::new();
        let (mut asked, mut correct) = (0u32, 0u32);
        for _ in 0..p.n_questions {
            let row = self
                .engine()
                .store()
                .active(&phone)
                .ok_or_else(|| fail("session vanished".into()))?;
            let (level, pending) = match row.pending() {
                Some(pending) => (row.level, pending.clone()),
                None => return Err(fail(format!("not in a game (state {:?})", row.state))),
            };
            let choices = self
                .engine()
                .store()
                .question(pending.question_id)
                .ok()
                .map(|q| q.choices.len())
                .ok_or_else(|| fail("pending question missing".into()))?;
            let p_ok = p.p_correct[level as usize];
            let right = self.rng.gen_bool(p_ok);
            let answer = if right {
                pending.correct_index
            } else {
                // Uniform over the wrong choices.
                let k = self.rng.gen_range(1..choices) as u8;
                if k >= pending.correct_index {
                    k + 1
                } else {
                    k
                }
            };
            if asked % threshold == 0 {
                blocks.push(BlockSummary {
                    level,
                    asked: 0,
                    correct: 0,
                });
            }
            send(self, &answer.to_string());
            asked += 1;
            correct += right as u32;
            let b = blocks.last_mut().expect("pushed above");
            b.asked += 1;
            b.correct += right as u32;
        }
        let final_level = self
            .engine()
            .store()
            .active(&phone)
            .map(|r| r.level)
            .unwrap_or_default();
        if self.exit_at_end {
            send(self, "EXIT");
        }
        Ok(LearnerSummary {
            name: p.name.clone(),
            phone: phone.to_string(),
            asked,
            correct,
            blocks,
            final_level,
            messages_sent: sent,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzy::FuzzySystem;
    use crate::session::SessionConfig;
    use crate::tables::{QuestionBank, Store};

    fn bank() -> QuestionBank {
        let mut text = String::new();
        for level in 0..6 {
            for i in 0..2 {
                text.push_str(&format!("SUMS | {level} | Q{level}{i} | a;b;c;d | 3 | H\n"));
            }
        }
        QuestionBank::parse(&text).unwrap()
    }

    fn engine(seed: u64) -> Engine {
        let cfg = SessionConfig {
            rng_seed: Some(seed),
            ..SessionConfig::default()
        };
        Engine::new(Store::from_bank(bank()), FuzzySystem::normative(), cfg).unwrap()
    }

    fn learner(name: &str, p: f64, age: u32, edu: u32, n: u32) -> SimLearnerProfile {
        SimLearnerProfile {
            phone: "07700900001".into(),
            name: name.into(),
            age_years: age,
            education_years: edu,
            p_correct: [p; LEVEL_COUNT],
            n_questions: n,
            topic: 1,
        }
    }

    #[test]
    fn perfect_adult_climbs_to_top() {
        let mut sim = Simulation::new(engine(1), &SimOptions::default());
        let s = sim.run_learner(&learner("ACE", 1.0, 30, 16, 30)).unwrap();
        assert_eq!(s.trajectory(), vec![0, 5, 5, 5]);
        assert_eq!((s.asked, s.correct), (30, 30));
        assert_eq!(s.messages_sent, 34);
    }

    #[test]
    fn hopeless_child_stays_at_bottom() {
        let mut sim = Simulation::new(engine(1), &SimOptions::default());
        let s = sim.run_learner(&learner("KID", 0.0, 10, 0, 30)).unwrap();
        assert_eq!(s.trajectory(), vec![0, 0, 0, 0]);
        assert_eq!(s.correct, 0);
    }

    #[test]
    fn wrong_answers_are_never_the_correct_choice() {
        let mut sim = Simulation::new(engine(3), &SimOptions::default());
        sim.run_learner(&learner("KID", 0.0, 10, 0, 40)).unwrap();
        let hist = sim.engine().store().history();
        assert_eq!(hist.len(), 40);
        assert!(hist.iter().all(|h| !h.correct));
    }

    #[test]
    fn same_seed_same_run() {
        let run = |seed| {
            let mut sim = Simulation::new(
                engine(seed),
                &SimOptions {
                    seed,
                    ..SimOptions::default()
                },
            );
            let s = sim.run_learner(&learner("MID", 0.6, 17, 10, 50)).unwrap();
            (s, sim.into_engine().into_store().tables().clone())
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9).0, run(10).0);
    }

    #[test]
    fn returning_learner_logs_in() {
        let mut sim = Simulation::new(engine(1), &SimOptions::default());
        sim.run_learner(&learner("ACE", 1.0, 30, 16, 10)).unwrap();
        let s = sim.run_learner(&learner("ACE", 1.0, 30, 16, 10)).unwrap();
        assert_eq!(s.blocks[0].level, 5);
        assert_eq!(
            sim.engine()
                .store()
                .players_for(&Phone::parse("07700900001").unwrap())
                .len(),
            1
        );
    }

    #[test]
    fn profiles_parse_and_validate() {
        let f = ProfilesFile::parse(
            r#"
bank = "b.txt"
[[learner]]
phone = "555"
name = "ANA"
p_correct = [1, 1, 0.5, 0.5, 0, 0]
n_questions = 20
"#,
        )
        .unwrap();
        assert_eq!(f64::from(f.learners[0].age_years), DEFAULT_AGE_YEARS);
        assert_eq!(f.learners[0].topic, 1);
        assert!(ProfilesFile::parse(
            "[[learner]]\nphone=\"x\"\nname=\"A\"\np_correct=[0,0,0,0,0,0]\nn_questions=1\n"
        )
        .is_err());
        assert!(ProfilesFile::parse(
            "[[learner]]\nphone=\"1\"\nname=\"A\"\np_correct=[2,0,0,0,0,0]\nn_questions=1\n"
        )
        .is_err());
    }
}
