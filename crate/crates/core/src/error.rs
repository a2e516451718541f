use thiserror::Error;

use crate::game::PureProfile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("game has no players")]
    NoPlayers,
    #[error("player {player} has {count} strategies, at least 2 required")]
    TooFewStrategies { player: usize, count: usize },
    #[error("expected {expected} payoff entries, found {actual}")]
    PayoffCount { expected: usize, actual: usize },
    #[error("payoff entry {profile} has {actual} values, expected {expected}")]
    PayoffArity {
        profile: usize,
        expected: usize,
        actual: usize,
    },
    #[error("payoff entry {profile} is not finite")]
    NonFinitePayoff { profile: usize },
    #[error("dimension mismatch: expected {expected}, found {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("player {player}'s strategy is not a probability distribution")]
    NotADistribution { player: usize },
    #[error("non-finite coordinate in payoff point")]
    NonFinite,
    #[error("profile {0} is not valid for this game")]
    InvalidProfile(PureProfile),
    #[error("empty strategy subset for player {player}")]
    EmptySubset { player: usize },
    #[error("invalid strategy subset for player {player}")]
    InvalidSubset { player: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("walk needs at least 2 profiles, got {0}")]
    TooShort(usize),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("transition {0} does not change exactly one player's strategy")]
    NonAdjacent(usize),
    #[error("transition {0} has no arc in the preference graph")]
    MissingArc(usize),
    #[error("transition {0} goes against the arc direction")]
    WrongDirection(usize),
    #[error("walk is not a simple cycle")]
    NotSimpleCycle,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrdError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("argmax of the starting point is not a unique pure profile")]
    AmbiguousArgmax,
    #[error("point is not on the walk's section: {0}")]
    NotOnSection(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RdError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("invalid integration parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("step size underflow at t = {time}")]
    StepUnderflow { time: f64 },
    #[error("point is not on the walk's section: {0}")]
    NotOnSection(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error("arc {0} of the walk has zero weight")]
    ZeroWeightArc(usize),
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
    #[error("walk must have length 4, got {0}")]
    NotFourCycle(usize),
    #[error("degenerate arc weights on 4-cycle")]
    DegenerateWeights,
    #[error("sink cycle of length {len} failed the spectral test: {detail}")]
    TheoremViolation { len: usize, detail: String },
}
