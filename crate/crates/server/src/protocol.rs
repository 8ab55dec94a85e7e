//! JSON text frames exchanged on `/play`. Every message carries a `type`
//! discriminator.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayMode {
    /// The client only learns the code word's length.
    #[default]
    Guesser,
    /// The client is the Sketcher and is told the word.
    Sketcher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    StartRound {
        #[serde(default)]
        mode: PlayMode,
    },
    /// Canvas coordinates; values outside `[0, 255]` are clamped.
    Stroke { points: Vec<[f64; 2]> },
    Guess { word: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Nn,
    Players,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    RoundStarted {
        round_id: u64,
        code_word_masked_length: usize,
        round_seconds: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        code_word_plain: Option<String>,
    },
    NnGuess {
        round_id: u64,
        word: String,
        correct: bool,
        blacklist: Vec<String>,
    },
    HumanGuessResult {
        round_id: u64,
        correct: bool,
        blacklist: Vec<String>,
        /// Set when the guess was refused (repeat of a blacklisted word or
        /// a word outside the class table).
        #[serde(default)]
        rejected: bool,
    },
    RoundOver {
        round_id: u64,
        winner: Winner,
        code_word: String,
    },
    Error {
        round_id: Option<u64>,
        message: String,
    },
}

impl ServerMessage {
    pub fn round_id(&self) -> Option<u64> {
        match self {
            ServerMessage::RoundStarted { round_id, .. }
            | ServerMessage::NnGuess { round_id, .. }
            | ServerMessage::HumanGuessResult { round_id, .. }
            | ServerMessage::RoundOver { round_id, .. } => Some(*round_id),
            ServerMessage::Error { round_id, .. } => *round_id,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

pub fn parse_client(text: &str) -> Result<ClientMessage, serde_json::Error> {
    serde_json::from_str(text)
}
