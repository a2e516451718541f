//! Canonical games.

use crate::game::Game;

pub const NAMES: &[&str] = &[
    "shapley",
    "jordan",
    "jordan_weighted",
    "matching_pennies",
    "matching_pennies_asym",
    "rps",
    "prisoners_dilemma",
];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BuiltinError {
    #[error("unknown builtin game '{0}'")]
    Unknown(String),
    #[error("builtin '{name}' expects {expected} parameters, got {actual}")]
    Params {
        name: String,
        expected: usize,
        actual: usize,
    },
    #[error("builtin parameters must be finite and positive")]
    BadParam,
}

/// Looks up a builtin by name. Only `jordan_weighted` takes parameters
/// (three win payoffs); the others take none.
pub fn builtin(name: &str, params: &[f64]) -> Result<Game, BuiltinError> {
    let expect = |n: usize| {
        if params.len() == n {
            Ok(())
        } else {
            Err(BuiltinError::Params {
                name: name.to_string(),
                expected: n,
                actual: params.len(),
            })
        }
    };
    match name {
        "shapley" => expect(0).map(|_| shapley()),
        "jordan" => expect(0).map(|_| jordan()),
        "jordan_weighted" => {
            expect(3)?;
            if params.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                return Err(BuiltinError::BadParam);
            }
            Ok(jordan_weighted(params[0], params[1], params[2]))
        }
        "matching_pennies" => expect(0).map(|_| matching_pennies()),
        "matching_pennies_asym" => expect(0).map(|_| matching_pennies_asym()),
        "rps" => expect(0).map(|_| rps()),
        "prisoners_dilemma" => expect(0).map(|_| prisoners_dilemma()),
        other => Err(BuiltinError::Unknown(other.to_string())),
    }
}

fn labels(names: &[&[&str]]) -> Vec<Vec<String>> {
    names
        .iter()
        .map(|l| l.iter().map(|s| s.to_string()).collect())
        .collect()
}

/// Shapley's 3x3 game with payoff levels {0, 1, 2}.
pub fn shapley() -> Game {
    Game::bimatrix(
        &[vec![0., 2., 1.], vec![1., 0., 2.], vec![2., 1., 0.]],
        &[vec![0., 1., 2.], vec![2., 0., 1.], vec![1., 2., 0.]],
    )
    .and_then(|g| g.with_labels(labels(&[&["1", "2", "3"], &["1", "2", "3"]])))
    .expect("valid builtin")
}

/// Jordan's three-player matching-pennies triangle.
pub fn jordan() -> Game {
    jordan_weighted(1.0, 1.0, 1.0)
}

/// Jordan's game with win payoffs `a`, `b`, `c` for players 1 to 3: player 1
/// wins by matching player 2, player 2 by matching player 3, player 3 by
/// mismatching player 1.
pub fn jordan_weighted(a: f64, b: f64, c: f64) -> Game {
    Game::from_fn(&[2, 2, 2], |p| {
        vec![
            if p[0] == p[1] { a } else { 0.0 },
            if p[1] == p[2] { b } else { 0.0 },
            if p[2] != p[0] { c } else { 0.0 },
        ]
    })
    .and_then(|g| g.with_labels(labels(&[&["H", "T"], &["H", "T"], &["H", "T"]])))
    .expect("valid builtin")
}

pub fn matching_pennies() -> Game {
    Game::bimatrix(
        &[vec![1., -1.], vec![-1., 1.]],
        &[vec![-1., 1.], vec![1., -1.]],
    )
    .and_then(|g| g.with_labels(labels(&[&["H", "T"], &["H", "T"]])))
    .expect("valid builtin")
}

pub fn matching_pennies_asym() -> Game {
    Game::bimatrix(
        &[vec![3., -1.], vec![-1., 1.]],
        &[vec![-3., 1.], vec![1., -1.]],
    )
    .and_then(|g| g.with_labels(labels(&[&["H", "T"], &["H", "T"]])))
    .expect("valid builtin")
}

pub fn rps() -> Game {
    Game::bimatrix(
        &[vec![0., -1., 1.], vec![1., 0., -1.], vec![-1., 1., 0.]],
        &[vec![0., 1., -1.], vec![-1., 0., 1.], vec![1., -1., 0.]],
    )
    .and_then(|g| g.with_labels(labels(&[&["R", "P", "S"], &["R", "P", "S"]])))
    .expect("valid builtin")
}

pub fn prisoners_dilemma() -> Game {
    Game::bimatrix(&[vec![3., 0.], vec![5., 1.]], &[vec![3., 5.], vec![0., 1.]])
        .and_then(|g| g.with_labels(labels(&[&["C", "D"], &["C", "D"]])))
        .expect("valid builtin")
}
