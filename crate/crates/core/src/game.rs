//! Finite N-player normal-form games.
//!
//! Payoffs are stored densely in row-major profile order: the last player's
//! strategy index varies fastest. Payoff-space vectors ([`PayoffPoint`]) are
//! laid out player by player, one coordinate per (player, strategy) pair.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::GameError;

/// Tolerance for probability vectors summing to one.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// One strategy index per player.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PureProfile(pub Vec<usize>);

impl PureProfile {
    pub fn new(strategies: Vec<usize>) -> Self {
        Self(strategies)
    }

    pub fn strategies(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `self` with player `player` switched to `strategy`.
    pub fn with(&self, player: usize, strategy: usize) -> Self {
        let mut s = self.0.clone();
        s[player] = strategy;
        Self(s)
    }

    /// Players whose strategies differ between the two profiles.
    pub fn differing_players(&self, other: &PureProfile) -> Vec<usize> {
        self.0
            .iter()
            .zip(&other.0)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect()
    }
}

impl std::ops::Index<usize> for PureProfile {
    type Output = usize;
    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

impl fmt::Display for PureProfile {
    /// 1-based tuple, e.g. `(1,3)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", s + 1)?;
        }
        write!(f, ")")
    }
}

/// A probability vector per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixedProfile(pub Vec<Vec<f64>>);

impl MixedProfile {
    pub fn pure(game: &Game, profile: &PureProfile) -> Self {
        Self(
            game.strategy_counts()
                .iter()
                .zip(profile.strategies())
                .map(|(&n, &s)| {
                    let mut v = vec![0.0; n];
                    v[s] = 1.0;
                    v
                })
                .collect(),
        )
    }

    pub fn uniform(game: &Game) -> Self {
        Self(
            game.strategy_counts()
                .iter()
                .map(|&n| vec![1.0 / n as f64; n])
                .collect(),
        )
    }

    pub fn distributions(&self) -> &[Vec<f64>] {
        &self.0
    }

    /// Checks shape against `game` and that each vector lies on the simplex.
    pub fn validate(&self, game: &Game) -> Result<(), GameError> {
        if self.0.len() != game.num_players() {
            return Err(GameError::DimensionMismatch {
                expected: game.num_players(),
                actual: self.0.len(),
            });
        }
        for (i, (dist, &n)) in self.0.iter().zip(game.strategy_counts()).enumerate() {
            if dist.len() != n {
                return Err(GameError::DimensionMismatch {
                    expected: n,
                    actual: dist.len(),
                });
            }
            let sum: f64 = dist.iter().sum();
            if dist.iter().any(|&p| !(p >= 0.0) || !p.is_finite())
                || (sum - 1.0).abs() > PROBABILITY_TOL
            {
                return Err(GameError::NotADistribution { player: i });
            }
        }
        Ok(())
    }
}

/// Probability of every pure profile, indexed like the payoff tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileDistribution {
    pub probabilities: Vec<f64>,
}

impl ProfileDistribution {
    pub fn get(&self, game: &Game, profile: &PureProfile) -> f64 {
        self.probabilities[game.profile_index(profile)]
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

/// A point in payoff space: one cumulative score per (player, strategy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffPoint {
    scores: Vec<f64>,
    sizes: Vec<usize>,
}

impl PayoffPoint {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            scores: vec![0.0; sizes.iter().sum()],
            sizes: sizes.to_vec(),
        }
    }

    pub fn from_flat(sizes: &[usize], scores: Vec<f64>) -> Result<Self, GameError> {
        let dim: usize = sizes.iter().sum();
        if scores.len() != dim {
            return Err(GameError::DimensionMismatch {
                expected: dim,
                actual: scores.len(),
            });
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(GameError::NonFinite);
        }
        Ok(Self {
            scores,
            sizes: sizes.to_vec(),
        })
    }

    pub fn from_blocks(blocks: &[Vec<f64>]) -> Result<Self, GameError> {
        let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
        Self::from_flat(&sizes, blocks.concat())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn dim(&self) -> usize {
        self.scores.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.scores
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.scores
    }

    fn offset(&self, player: usize) -> usize {
        self.sizes[..player].iter().sum()
    }

    pub fn block(&self, player: usize) -> &[f64] {
        let o = self.offset(player);
        &self.scores[o..o + self.sizes[player]]
    }

    pub fn block_mut(&mut self, player: usize) -> &mut [f64] {
        let o = self.offset(player);
        let n = self.sizes[player];
        &mut self.scores[o..o + n]
    }

    pub fn blocks(&self) -> Vec<Vec<f64>> {
        (0..self.sizes.len()).map(|i| self.block(i).to_vec()).collect()
    }

    pub fn get(&self, player: usize, strategy: usize) -> f64 {
        self.scores[self.offset(player) + strategy]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            scores: self.scores.iter().map(|v| v * factor).collect(),
            sizes: self.sizes.clone(),
        }
    }

    /// `self + factor * other`.
    pub fn add_scaled(&mut self, other: &PayoffPoint, factor: f64) {
        for (a, b) in self.scores.iter_mut().zip(&other.scores) {
            *a += factor * b;
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.scores.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm2(&self) -> f64 {
        self.scores.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Per-player argmax, or `None` for any player whose maximum is not unique
    /// within `tol`.
    pub fn unique_argmax(&self, tol: f64) -> Option<PureProfile> {
        let mut out = Vec::with_capacity(self.sizes.len());
        for i in 0..self.sizes.len() {
            let b = self.block(i);
            let (best, &max) = b
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty block");
            if b.iter()
                .enumerate()
                .any(|(s, &v)| s != best && v >= max - tol)
            {
                return None;
            }
            out.push(best);
        }
        Some(PureProfile(out))
    }
}

/// A finite normal-form game with a dense payoff tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    labels: Vec<Vec<String>>,
    counts: Vec<usize>,
    strides: Vec<usize>,
    // num_profiles * num_players, profile-major
    payoffs: Vec<f64>,
}

impl Game {
    /// Builds a game from strategy labels and a flat list of payoff vectors in
    /// row-major profile order.
    pub fn new(labels: Vec<Vec<String>>, payoffs: Vec<Vec<f64>>) -> Result<Self, GameError> {
        if labels.is_empty() {
            return Err(GameError::NoPlayers);
        }
        for (i, l) in labels.iter().enumerate() {
            if l.len() < 2 {
                return Err(GameError::TooFewStrategies {
                    player: i,
                    count: l.len(),
                });
            }
        }
        let n = labels.len();
        let counts: Vec<usize> = labels.iter().map(Vec::len).collect();
        let num_profiles: usize = counts.iter().product();
        if payoffs.len() != num_profiles {
            return Err(GameError::PayoffCount {
                expected: num_profiles,
                actual: payoffs.len(),
            });
        }
        let mut flat = Vec::with_capacity(num_profiles * n);
        for (k, entry) in payoffs.iter().enumerate() {
            if entry.len() != n {
                return Err(GameError::PayoffArity {
                    profile: k,
                    expected: n,
                    actual: entry.len(),
                });
            }
            if entry.iter().any(|v| !v.is_finite()) {
                return Err(GameError::NonFinitePayoff { profile: k });
            }
            flat.extend_from_slice(entry);
        }
        let mut strides = vec![1; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        Ok(Self {
            labels,
            counts,
            strides,
            payoffs: flat,
        })
    }

    /// Builds a game with default labels `s1, s2, ...` from a payoff function.
    pub fn from_fn(
        counts: &[usize],
        f: impl FnMut(&PureProfile) -> Vec<f64>,
    ) -> Result<Self, GameError> {
        let labels = default_labels(counts);
        let profiles = all_profiles(counts);
        let payoffs = profiles.iter().map(f).collect();
        Self::new(labels, payoffs)
    }

    /// Two-player game from row and column payoff matrices.
    pub fn bimatrix(row: &[Vec<f64>], col: &[Vec<f64>]) -> Result<Self, GameError> {
        let m = row.len();
        let n = row.first().map_or(0, Vec::len);
        if col.len() != m || row.iter().chain(col).any(|r| r.len() != n) {
            return Err(GameError::DimensionMismatch {
                expected: m * n,
                actual: col.iter().map(Vec::len).sum(),
            });
        }
        Self::from_fn(&[m, n], |p| vec![row[p[0]][p[1]], col[p[0]][p[1]]])
    }

    pub fn with_labels(mut self, labels: Vec<Vec<String>>) -> Result<Self, GameError> {
        if labels.len() != self.counts.len()
            || labels.iter().zip(&self.counts).any(|(l, &c)| l.len() != c)
        {
            return Err(GameError::DimensionMismatch {
                expected: self.counts.iter().sum(),
                actual: labels.iter().map(Vec::len).sum(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn num_players(&self) -> usize {
        self.counts.len()
    }

    pub fn strategy_counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn labels(&self) -> &[Vec<String>] {
        &self.labels
    }

    pub fn num_profiles(&self) -> usize {
        self.payoffs.len() / self.counts.len()
    }

    /// Dimension of payoff space, `sum_i |S_i|`.
    pub fn payoff_dim(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Offset of player `i`'s block within payoff space.
    pub fn block_offset(&self, player: usize) -> usize {
        self.counts[..player].iter().sum()
    }

    pub fn profile_index(&self, p: &PureProfile) -> usize {
        p.0.iter().zip(&self.strides).map(|(s, k)| s * k).sum()
    }

    pub fn profile_at(&self, mut index: usize) -> PureProfile {
        let mut s = vec![0; self.counts.len()];
        for i in 0..self.counts.len() {
            s[i] = index / self.strides[i];
            index %= self.strides[i];
        }
        PureProfile(s)
    }

    pub fn profiles(&self) -> impl Iterator<Item = PureProfile> + '_ {
        (0..self.num_profiles()).map(|k| self.profile_at(k))
    }

    pub fn is_valid_profile(&self, p: &PureProfile) -> bool {
        p.len() == self.counts.len() && p.0.iter().zip(&self.counts).all(|(s, n)| s < n)
    }

    pub fn check_profile(&self, p: &PureProfile) -> Result<(), GameError> {
        if self.is_valid_profile(p) {
            Ok(())
        } else {
            Err(GameError::InvalidProfile(p.clone()))
        }
    }

    /// Payoff vector `u(p)`.
    pub fn payoff(&self, p: &PureProfile) -> &[f64] {
        self.payoff_at(self.profile_index(p))
    }

    pub fn payoff_at(&self, index: usize) -> &[f64] {
        let n = self.counts.len();
        &self.payoffs[index * n..(index + 1) * n]
    }

    pub fn utility(&self, p: &PureProfile, player: usize) -> f64 {
        self.payoff(p)[player]
    }

    pub fn payoff_range(&self) -> (f64, f64) {
        self.payoffs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn zero_point(&self) -> PayoffPoint {
        PayoffPoint::zeros(&self.counts)
    }

    /// Product distribution `z_p = prod_i x^i_{p_i}`.
    pub fn product_distribution(&self, x: &MixedProfile) -> Result<ProfileDistribution, GameError> {
        x.validate(self)?;
        let probabilities = (0..self.num_profiles())
            .map(|k| {
                let p = self.profile_at(k);
                p.0.iter()
                    .enumerate()
                    .map(|(i, &s)| x.0[i][s])
                    .product()
            })
            .collect();
        Ok(ProfileDistribution { probabilities })
    }

    /// Expected utility vector `sum_p z_p u(p)`.
    pub fn expected_utility(&self, x: &MixedProfile) -> Result<Vec<f64>, GameError> {
        let z = self.product_distribution(x)?;
        let n = self.num_players();
        let mut out = vec![0.0; n];
        for (k, &zp) in z.probabilities.iter().enumerate() {
            if zp == 0.0 {
                continue;
            }
            for (o, u) in out.iter_mut().zip(self.payoff_at(k)) {
                *o += zp * u;
            }
        }
        Ok(out)
    }

    /// Rate at which every (player, strategy) coordinate accrues payoff while
    /// `p` is played: `u_i(s; p_{-i})`.
    pub fn counterfactual_rates(&self, p: &PureProfile) -> PayoffPoint {
        let mut out = self.zero_point();
        for i in 0..self.num_players() {
            let block = out.block_mut(i);
            for (s, v) in block.iter_mut().enumerate() {
                *v = self.utility(&p.with(i, s), i);
            }
        }
        out
    }

    /// Expected counterfactual payoff of every (player, strategy) against the
    /// opponents' mixed strategies in `x`. Player `i`'s own distribution is
    /// ignored for its own block.
    pub fn counterfactual_expected(&self, x: &[Vec<f64>]) -> PayoffPoint {
        let n = self.num_players();
        let mut out = self.zero_point();
        let offsets: Vec<usize> = (0..n).map(|i| self.block_offset(i)).collect();
        let scores = out.as_mut_slice();
        for k in 0..self.num_profiles() {
            let p = self.profile_at(k);
            let u = self.payoff_at(k);
            for i in 0..n {
                let mut weight = 1.0;
                for (j, &s) in p.0.iter().enumerate() {
                    if j != i {
                        weight *= x[j][s];
                    }
                }
                if weight != 0.0 {
                    scores[offsets[i] + p[i]] += weight * u[i];
                }
            }
        }
        out
    }

    /// Per-player set of strategies attaining the block maximum of `w`, using
    /// exact comparison.
    pub fn best_response_sets(&self, w: &PayoffPoint) -> Result<Vec<Vec<usize>>, GameError> {
        self.check_point(w)?;
        Ok((0..self.num_players())
            .map(|i| {
                let b = w.block(i);
                let max = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (0..b.len()).filter(|&s| b[s] == max).collect()
            })
            .collect())
    }

    pub fn check_point(&self, w: &PayoffPoint) -> Result<(), GameError> {
        if w.sizes() != self.counts.as_slice() {
            return Err(GameError::DimensionMismatch {
                expected: self.payoff_dim(),
                actual: w.dim(),
            });
        }
        Ok(())
    }

    /// Restricts each player to a subset of strategies. Returns the subgame and,
    /// per player, the original index of each retained strategy.
    pub fn restrict(&self, subsets: &[Vec<usize>]) -> Result<(Game, Vec<Vec<usize>>), GameError> {
        if subsets.len() != self.num_players() {
            return Err(GameError::DimensionMismatch {
                expected: self.num_players(),
                actual: subsets.len(),
            });
        }
        let mut maps = Vec::with_capacity(subsets.len());
        for (i, sub) in subsets.iter().enumerate() {
            if sub.is_empty() {
                return Err(GameError::EmptySubset { player: i });
            }
            let mut sorted = sub.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != sub.len() || sorted.iter().any(|&s| s >= self.counts[i]) {
                return Err(GameError::InvalidSubset { player: i });
            }
            maps.push(sorted);
        }
        let labels: Vec<Vec<String>> = maps
            .iter()
            .enumerate()
            .map(|(i, m)| m.iter().map(|&s| self.labels[i][s].clone()).collect())
            .collect();
        let counts: Vec<usize> = maps.iter().map(Vec::len).collect();
        let payoffs: Vec<Vec<f64>> = all_profiles(&counts)
            .iter()
            .map(|q| {
                let orig = PureProfile(q.0.iter().enumerate().map(|(i, &s)| maps[i][s]).collect());
                self.payoff(&orig).to_vec()
            })
            .collect();
        // Subgames may have single-strategy players; bypass the >= 2 rule.
        let n = counts.len();
        let mut strides = vec![1; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        let flat: Vec<f64> = payoffs.into_iter().flat_map(|v: Vec<f64>| v).collect();
        Ok((
            Game {
                labels,
                counts,
                strides,
                payoffs: flat,
            },
            maps,
        ))
    }

    /// Human-readable profile label built from strategy labels, e.g. `(H,T)`.
    pub fn profile_label(&self, p: &PureProfile) -> String {
        let parts: Vec<&str> = p
            .0
            .iter()
            .enumerate()
            .map(|(i, &s)| self.labels[i][s].as_str())
            .collect();
        format!("({})", parts.join(","))
    }
}

pub fn default_labels(counts: &[usize]) -> Vec<Vec<String>> {
    counts
        .iter()
        .map(|&n| (1..=n).map(|s| format!("s{s}")).collect())
        .collect()
}

/// Every pure profile in row-major order.
pub fn all_profiles(counts: &[usize]) -> Vec<PureProfile> {
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![0; counts.len()];
    for _ in 0..total {
        out.push(PureProfile(cur.clone()));
        for i in (0..counts.len()).rev() {
            cur[i] += 1;
            if cur[i] < counts[i] {
                break;
            }
            cur[i] = 0;
        }
    }
    out
}
