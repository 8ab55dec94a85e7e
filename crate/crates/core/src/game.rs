//! One Sketcher against the network: stroke accumulation, cadence-gated
//! guessing and a blacklist shared by the network and human guessers.
//!
//! The engine never reads a clock. Every timestamp is a `Duration` measured
//! from whatever origin the caller picks.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ensemble::{top_k_masked, Predictor};
use crate::error::{Error, Result};
use crate::rdp::{rdp_simplify, CANVAS_EPSILON};
use crate::stroke::{prepare, Sketch, Stroke};

pub const DEFAULT_CADENCE: Duration = Duration::from_millis(2500);
pub const DEFAULT_ROUND_TIME: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundConfig {
    pub cadence: Duration,
    pub round_time: Duration,
    /// RDP epsilon applied to incoming strokes.
    pub rdp_epsilon: f64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            cadence: DEFAULT_CADENCE,
            round_time: DEFAULT_ROUND_TIME,
            rdp_epsilon: CANVAS_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundStatus {
    Active,
    NnWon,
    PlayersWon,
    /// Timer ran out; the players win.
    Expired,
}

impl RoundStatus {
    pub fn is_terminal(self) -> bool {
        self != RoundStatus::Active
    }

    pub fn name(self) -> &'static str {
        match self {
            RoundStatus::Active => "active",
            RoundStatus::NnWon => "nn_won",
            RoundStatus::PlayersWon => "players_won",
            RoundStatus::Expired => "expired",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessSource {
    Nn,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuessEvent {
    pub source: GuessSource,
    pub class: usize,
    pub at: Duration,
    pub correct: bool,
}

#[derive(Debug, Clone)]
pub struct GameRound {
    code_word: usize,
    class_count: usize,
    config: RoundConfig,
    strokes: Vec<Stroke>,
    blacklist: BTreeSet<usize>,
    started: Duration,
    last_query: Duration,
    status: RoundStatus,
    guesses: Vec<GuessEvent>,
}

impl GameRound {
    /// Starts a round at `now`. The first network guess is due one cadence
    /// later.
    pub fn new(code_word: usize, class_count: usize, now: Duration, config: RoundConfig) -> Result<Self> {
        if code_word >= class_count {
            return Err(Error::arg(format!("code word {code_word} out of range for {class_count} classes")));
        }
        if config.cadence.is_zero() || config.round_time.is_zero() {
            return Err(Error::arg("cadence and round time must be positive"));
        }
        if !(config.rdp_epsilon >= 0.0 && config.rdp_epsilon.is_finite()) {
            return Err(Error::arg("rdp epsilon must be finite and non-negative"));
        }
        Ok(GameRound {
            code_word,
            class_count,
            config,
            strokes: Vec::new(),
            blacklist: BTreeSet::new(),
            started: now,
            last_query: now,
            status: RoundStatus::Active,
            guesses: Vec::new(),
        })
    }

    pub fn code_word(&self) -> usize {
        self.code_word
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn config(&self) -> &RoundConfig {
        &self.config
    }

    pub fn status(&self) -> RoundStatus {
        self.status
    }

    pub fn strokes(&self) -> &[Stroke] {
        &self.strokes
    }

    pub fn blacklist(&self) -> &BTreeSet<usize> {
        &self.blacklist
    }

    pub fn guesses(&self) -> &[GuessEvent] {
        &self.guesses
    }

    pub fn started(&self) -> Duration {
        self.started
    }

    /// Time left on the round timer at `now`.
    pub fn remaining(&self, now: Duration) -> Duration {
        (self.started + self.config.round_time).saturating_sub(now)
    }

    /// The unlabeled sketch drawn so far.
    pub fn sketch(&self) -> Result<Sketch> {
        Sketch::new(self.strokes.clone(), None)
    }

    fn require_active(&self) -> Result<()> {
        match self.status {
            RoundStatus::Active => Ok(()),
            s => Err(Error::RoundState(s.name().into())),
        }
    }

    /// Marks the round expired once the timer has run out.
    pub fn advance_clock(&mut self, now: Duration) -> RoundStatus {
        if self.status == RoundStatus::Active && now >= self.started + self.config.round_time {
            self.status = RoundStatus::Expired;
        }
        self.status
    }

    /// Appends a simplified stroke. Never triggers a guess.
    pub fn submit_stroke(&mut self, stroke: Stroke) -> Result<()> {
        self.require_active()?;
        self.strokes.push(rdp_simplify(&stroke, self.config.rdp_epsilon)?);
        Ok(())
    }

    /// Queries the predictor if a cadence has passed since the last query
    /// and something has been drawn. A no-op on terminal rounds.
    pub fn tick(&mut self, now: Duration, predictor: &dyn Predictor) -> Result<Option<GuessEvent>> {
        if self.advance_clock(now).is_terminal() {
            return Ok(None);
        }
        if self.strokes.is_empty() || now.saturating_sub(self.last_query) < self.config.cadence {
            return Ok(None);
        }
        if predictor.class_count() != self.class_count {
            return Err(Error::Shape(format!(
                "predictor has {} classes, round expects {}",
                predictor.class_count(),
                self.class_count
            )));
        }
        let seq = prepare(&self.sketch()?)?;
        let probs = predictor.predict_proba(&[&seq])?;
        let class = top_k_masked(&probs.row(0).to_vec(), 1, &self.blacklist)?[0].0;
        self.last_query = now;
        let event = self.record(GuessSource::Nn, class, now);
        Ok(Some(event))
    }

    /// A human guess. Wrong guesses are blacklisted for everyone.
    pub fn human_guess(&mut self, class: usize, now: Duration) -> Result<GuessEvent> {
        self.advance_clock(now);
        self.require_active()?;
        if class >= self.class_count {
            return Err(Error::arg(format!("class {class} out of range for {} classes", self.class_count)));
        }
        if self.blacklist.contains(&class) {
            return Err(Error::Blacklisted(class));
        }
        Ok(self.record(GuessSource::Human, class, now))
    }

    fn record(&mut self, source: GuessSource, class: usize, at: Duration) -> GuessEvent {
        let correct = class == self.code_word;
        if correct {
            self.status = match source {
                GuessSource::Nn => RoundStatus::NnWon,
                GuessSource::Human => RoundStatus::PlayersWon,
            };
        } else {
            self.blacklist.insert(class);
        }
        let event = GuessEvent {
            source,
            class,
            at,
            correct,
        };
        self.guesses.push(event);
        event
    }
}
