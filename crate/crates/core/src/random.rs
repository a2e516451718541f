//! Seeded random games.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::Game;

/// Seeds tried after the requested one before giving up.
pub const MAX_RETRIES: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayoffDistribution {
    Uniform01,
    Gauss,
}

impl std::str::FromStr for PayoffDistribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform01" | "uniform" => Ok(PayoffDistribution::Uniform01),
            "gauss" | "normal" => Ok(PayoffDistribution::Gauss),
            _ => Err(format!("unknown distribution `{s}`")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandomGameError {
    #[error("every player needs at least 2 strategies, got {0:?}")]
    InvalidDims(Vec<usize>),
    #[error("no generic game after {retries} retries from seed {seed}")]
    RetriesExhausted { seed: u64, retries: u64 },
}

/// I.i.d. payoffs, regenerated with the next seed whenever some player has
/// two equal payoffs against the same opponents' profile.
pub fn random_game(dims: &[usize], seed: u64, dist: PayoffDistribution) -> Result<Game, RandomGameError> {
    if dims.is_empty() || dims.iter().any(|&d| d < 2) {
        return Err(RandomGameError::InvalidDims(dims.to_vec()));
    }
    for attempt in 0..=MAX_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let n = dims.len();
        let game = Game::from_fn(dims, |_| {
            (0..n)
                .map(|_| match dist {
                    PayoffDistribution::Uniform01 => rng.random::<f64>(),
                    PayoffDistribution::Gauss => rng.sample(StandardNormal),
                })
                .collect()
        })
        .expect("dims validated");
        if is_generic(&game) {
            return Ok(game);
        }
    }
    Err(RandomGameError::RetriesExhausted {
        seed,
        retries: MAX_RETRIES,
    })
}

/// No player is indifferent between two of its strategies against any
/// fixed profile of the others.
pub fn is_generic(game: &Game) -> bool {
    game.profiles().all(|p| {
        (0..game.num_players()).all(|i| {
            let own = game.utility(&p, i);
            (p[i] + 1..game.strategy_counts()[i]).all(|s| game.utility(&p.with(i, s), i) != own)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_tensor() {
        for dist in [PayoffDistribution::Uniform01, PayoffDistribution::Gauss] {
            let a = random_game(&[3, 2, 2], 42, dist).unwrap();
            let b = random_game(&[3, 2, 2], 42, dist).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, random_game(&[3, 2, 2], 43, dist).unwrap());
        }
    }

    #[test]
    fn thousand_seeds_are_generic() {
        for seed in 0..1000 {
            let g = random_game(&[2, 2], seed, PayoffDistribution::Uniform01).unwrap();
            assert!(is_generic(&g));
            let (lo, hi) = g.payoff_range();
            assert!(lo >= 0.0 && hi < 1.0);
        }
    }

    #[test]
    fn bad_dims_rejected() {
        assert_eq!(
            random_game(&[1, 2], 0, PayoffDistribution::Gauss),
            Err(RandomGameError::InvalidDims(vec![1, 2]))
        );
        assert!(random_game(&[], 0, PayoffDistribution::Gauss).is_err());
    }

    #[test]
    fn tie_detection() {
        let g = Game::bimatrix(&[vec![1.0, 0.0], vec![1.0, 2.0]], &[vec![0.0, 1.0], vec![3.0, 2.0]]).unwrap();
        assert!(!is_generic(&g));
        assert!(is_generic(&crate::builtins::shapley()));
    }
}
