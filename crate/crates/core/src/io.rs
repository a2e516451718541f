//! JSON game files.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "players": 3,
//!   "strategies": [["H", "T"], ["H", "T"], ["H", "T"]],
//!   "payoffs": [
//!     [1, 1, 0], [1, 0, 1], [0, 0, 0], [0, 1, 1],
//!     [0, 1, 1], [0, 0, 0], [1, 0, 1], [1, 1, 0]
//!   ]
//! }
//! ```
//!
//! `payoffs` lists one vector per pure profile in row-major order with the
//! last player's strategy varying fastest, so the entries above are for
//! `(H,H,H), (H,H,T), (H,T,H), (H,T,T), (T,H,H), ...`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::GameError;
use crate::game::Game;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub schema_version: u32,
    pub players: usize,
    pub strategies: Vec<Vec<String>>,
    pub payoffs: Vec<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Schema { field: String, message: String },
}

impl IoError {
    fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        IoError::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl GameFile {
    pub fn from_game(game: &Game) -> Self {
        GameFile {
            schema_version: SCHEMA_VERSION,
            players: game.num_players(),
            strategies: game.labels().to_vec(),
            payoffs: (0..game.num_profiles()).map(|k| game.payoff_at(k).to_vec()).collect(),
        }
    }

    pub fn into_game(self) -> Result<Game, IoError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(IoError::schema(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.players != self.strategies.len() {
            return Err(IoError::schema(
                "players",
                format!("{} players but {} strategy lists", self.players, self.strategies.len()),
            ));
        }
        Game::new(self.strategies, self.payoffs).map_err(schema_error)
    }
}

fn schema_error(e: GameError) -> IoError {
    match e {
        GameError::NoPlayers => IoError::schema("players", "at least one player is required"),
        GameError::TooFewStrategies { player, count } => IoError::schema(
            format!("strategies[{player}]"),
            format!("{count} strategies, at least 2 required"),
        ),
        GameError::PayoffCount { expected, actual } => IoError::schema(
            "payoffs",
            format!("expected {expected} entries, found {actual}"),
        ),
        GameError::PayoffArity {
            profile,
            expected,
            actual,
        } => IoError::schema(
            format!("payoffs[{profile}]"),
            format!("expected {expected} values, found {actual}"),
        ),
        GameError::NonFinitePayoff { profile } => {
            IoError::schema(format!("payoffs[{profile}]"), "non-finite value")
        }
        other => IoError::schema("payoffs", other.to_string()),
    }
}

pub fn parse_game(text: &str) -> Result<Game, IoError> {
    let file: GameFile = serde_json::from_str(text).map_err(|e| IoError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.into_game()
}

pub fn game_to_string(game: &Game) -> String {
    let mut s = serde_json::to_string_pretty(&GameFile::from_game(game)).expect("game files serialise");
    s.push('\n');
    s
}

pub fn load_game(path: impl AsRef<Path>) -> Result<Game, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_game(&text)
}

pub fn save_game(game: &Game, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, game_to_string(game)).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}
