//! Transport-free session state: one client, at most one live round.
//!
//! The caller feeds in client text frames and clock ticks, both stamped
//! with its own `Duration` clock, and forwards whatever comes back.

use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchnet::error::Error;
use sketchnet::game::{GameRound, GuessEvent, RoundConfig, RoundStatus};
use sketchnet::stroke::{ClassTable, Stroke, CANVAS_MAX};
use sketchnet::Predictor;

use crate::protocol::{parse_client, ClientMessage, PlayMode, ServerMessage, Winner};

pub type SharedPredictor = Arc<dyn Predictor + Send + Sync>;

/// Messages for the client, and whether the session must now close.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Reply {
    pub messages: Vec<ServerMessage>,
    pub close: bool,
}

impl Reply {
    fn one(m: ServerMessage) -> Self {
        Reply {
            messages: vec![m],
            close: false,
        }
    }
}

struct LiveRound {
    id: u64,
    round: GameRound,
    announced_end: bool,
}

pub struct Session {
    predictor: SharedPredictor,
    classes: Arc<ClassTable>,
    config: RoundConfig,
    rng: ChaCha8Rng,
    rounds_started: u64,
    current: Option<LiveRound>,
}

impl Session {
    /// `seed` drives code-word selection for every round of this session.
    pub fn new(predictor: SharedPredictor, classes: Arc<ClassTable>, config: RoundConfig, seed: u64) -> Self {
        Session {
            predictor,
            classes,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rounds_started: 0,
            current: None,
        }
    }

    pub fn round(&self) -> Option<&GameRound> {
        self.current.as_ref().map(|l| &l.round)
    }

    pub fn round_id(&self) -> Option<u64> {
        self.current.as_ref().map(|l| l.id)
    }

    fn error(&self, message: impl Into<String>) -> ServerMessage {
        ServerMessage::Error {
            round_id: self.round_id(),
            message: message.into(),
        }
    }

    fn word(&self, class: usize) -> String {
        self.classes.name(class).unwrap_or("?").to_string()
    }

    fn blacklist_words(&self, round: &GameRound) -> Vec<String> {
        round.blacklist().iter().map(|&c| self.word(c)).collect()
    }

    /// A round-over message the first time the live round is seen terminal.
    fn announce_end(&mut self) -> Option<ServerMessage> {
        let live = self.current.as_mut()?;
        if live.announced_end || !live.round.status().is_terminal() {
            return None;
        }
        live.announced_end = true;
        let winner = match live.round.status() {
            RoundStatus::NnWon => Winner::Nn,
            _ => Winner::Players,
        };
        let (id, code) = (live.id, live.round.code_word());
        Some(ServerMessage::RoundOver {
            round_id: id,
            winner,
            code_word: self.word(code),
        })
    }

    fn active(&self) -> bool {
        self.current.as_ref().is_some_and(|l| l.round.status() == RoundStatus::Active)
    }

    /// Handles one client text frame received at `now`.
    pub fn handle_text(&mut self, text: &str, now: Duration) -> Reply {
        match parse_client(text) {
            Ok(msg) => self.handle(msg, now),
            Err(e) => Reply {
                messages: vec![self.error(format!("malformed message: {e}"))],
                close: true,
            },
        }
    }

    pub fn handle(&mut self, msg: ClientMessage, now: Duration) -> Reply {
        // the timer may have run out since the last tick
        if let Some(live) = self.current.as_mut() {
            live.round.advance_clock(now);
        }
        let mut reply = Reply::default();
        reply.messages.extend(self.announce_end());
        let more = match msg {
            ClientMessage::StartRound { mode } => self.start_round(mode, now),
            ClientMessage::Stroke { points } => self.stroke(&points),
            ClientMessage::Guess { word } => self.guess(&word, now),
        };
        reply.messages.extend(more.messages);
        reply.close |= more.close;
        reply
    }

    fn start_round(&mut self, mode: PlayMode, now: Duration) -> Reply {
        if self.active() {
            return Reply::one(self.error("a round is already running"));
        }
        let code = self.rng.random_range(0..self.classes.len());
        let round = match GameRound::new(code, self.classes.len(), now, self.config) {
            Ok(r) => r,
            Err(e) => return Reply::one(self.error(e.to_string())),
        };
        self.rounds_started += 1;
        let word = self.word(code);
        self.current = Some(LiveRound {
            id: self.rounds_started,
            round,
            announced_end: false,
        });
        Reply::one(ServerMessage::RoundStarted {
            round_id: self.rounds_started,
            code_word_masked_length: word.chars().count(),
            round_seconds: self.config.round_time.as_secs_f64(),
            code_word_plain: (mode == PlayMode::Sketcher).then_some(word),
        })
    }

    fn stroke(&mut self, points: &[[f64; 2]]) -> Reply {
        if !self.active() {
            return Reply::one(self.error("no active round"));
        }
        let xy: Vec<(f64, f64)> = points
            .iter()
            .map(|[x, y]| (x.clamp(0.0, CANVAS_MAX), y.clamp(0.0, CANVAS_MAX)))
            .collect();
        let stroke = match Stroke::from_xy(&xy) {
            Ok(s) => s,
            Err(e) => return Reply::one(self.error(format!("bad stroke: {e}"))),
        };
        let live = self.current.as_mut().expect("active round");
        match live.round.submit_stroke(stroke) {
            Ok(()) => Reply::default(),
            Err(e) => Reply::one(self.error(e.to_string())),
        }
    }

    fn guess(&mut self, word: &str, now: Duration) -> Reply {
        if !self.active() {
            return Reply::one(self.error("no active round"));
        }
        let live = self.current.as_mut().expect("active round");
        let id = live.id;
        let result = match self.classes.index_of(word) {
            Ok(class) => live.round.human_guess(class, now),
            Err(e) => Err(e),
        };
        let round = &self.current.as_ref().expect("active round").round;
        let blacklist = self.blacklist_words(round);
        let mut reply = match result {
            Ok(event) => Reply::one(ServerMessage::HumanGuessResult {
                round_id: id,
                correct: event.correct,
                blacklist,
                rejected: false,
            }),
            Err(Error::Blacklisted(_)) | Err(Error::UnknownClass(_)) => Reply::one(ServerMessage::HumanGuessResult {
                round_id: id,
                correct: false,
                blacklist,
                rejected: true,
            }),
            Err(e) => Reply::one(self.error(e.to_string())),
        };
        reply.messages.extend(self.announce_end());
        reply
    }

    /// Lets the network guess if the cadence allows, and reports a round
    /// that just ended.
    pub fn tick(&mut self, now: Duration) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        let Some(live) = self.current.as_mut() else {
            return out;
        };
        let id = live.id;
        match live.round.tick(now, self.predictor.as_ref()) {
            Ok(Some(GuessEvent { class, correct, .. })) => {
                let round = &self.current.as_ref().expect("live round").round;
                out.push(ServerMessage::NnGuess {
                    round_id: id,
                    word: self.word(class),
                    correct,
                    blacklist: self.blacklist_words(round),
                });
            }
            Ok(None) => {}
            Err(e) => out.push(self.error(e.to_string())),
        }
        out.extend(self.announce_end());
        out
    }
}
