//! Replicator dynamic in payoff space, in exponential-weights form.
//!
//! Each coordinate `w^i_s` accrues the expected payoff of `s` against the
//! other players' softmax strategies. The state is integrated with an
//! embedded Dormand-Prince 5(4) pair and renormalised per player after every
//! accepted step; the offsets are kept so that reported points are in the
//! original coordinates.

use serde::Serialize;

use crate::brd::{section_membership, SectionReturn};
use crate::error::RdError;
use crate::game::{Game, MixedProfile, PayoffPoint, PureProfile};
use crate::graph::Walk;
use crate::stability::poincare_matrix;

/// Margin a challenger must gain over the current leader before the sequence
/// of play records a switch.
pub const HYSTERESIS: f64 = 1e-6;
/// Time accuracy of section crossings.
pub const EVENT_TIME_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RdOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Step cap while some leader is close to being overtaken; `None` picks
    /// `1 / (1 + max |u|)`. Longer steps are taken only when no switch can
    /// occur within them.
    pub max_step: Option<f64>,
    pub hysteresis: f64,
}

impl Default for RdOptions {
    fn default() -> Self {
        RdOptions {
            abs_tol: 1e-9,
            rel_tol: 1e-7,
            max_step: None,
            hysteresis: HYSTERESIS,
        }
    }
}

impl RdOptions {
    fn validate(&self) -> Result<(), RdError> {
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(RdError::InvalidParameter("abs_tol must be positive"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(RdError::InvalidParameter("rel_tol must be positive"));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(RdError::InvalidParameter("max_step must be positive"));
            }
        }
        if !(self.hysteresis >= 0.0 && self.hysteresis.is_finite()) {
            return Err(RdError::InvalidParameter("hysteresis must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub field_evaluations: usize,
    /// Largest normalised local error estimate among accepted steps.
    pub max_error_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayInterval {
    pub profile: PureProfile,
    pub entry: f64,
    pub exit: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RdTrajectory {
    pub samples: Vec<(f64, PayoffPoint)>,
    pub sequence_of_play: Vec<PlayInterval>,
    pub stats: IntegratorStats,
}

impl RdTrajectory {
    pub fn profiles(&self) -> Vec<PureProfile> {
        self.sequence_of_play.iter().map(|iv| iv.profile.clone()).collect()
    }

    pub fn terminal(&self) -> &PayoffPoint {
        &self.samples.last().expect("trajectory has a start sample").1
    }
}

/// Per-player softmax of `w`, shifted by the block maximum.
pub fn payoff_to_strategy(w: &PayoffPoint) -> MixedProfile {
    MixedProfile(w.blocks().iter().map(|b| softmax(b)).collect())
}

fn softmax(block: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; block.len()];
    softmax_into(block, &mut out);
    out
}

fn softmax_into(block: &[f64], out: &mut [f64]) {
    let max = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(block) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Replicator velocity at `w`: each coordinate's expected payoff against the
/// opponents' softmax strategies.
pub fn rd_field(game: &Game, w: &PayoffPoint) -> Result<PayoffPoint, RdError> {
    game.check_point(w)?;
    let x = payoff_to_strategy(w);
    Ok(game.counterfactual_expected(x.distributions()))
}

/// Field evaluation with the profile table unrolled once.
struct Field {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    /// Flat strategy index of every profile, per player.
    coords: Vec<Vec<usize>>,
    payoffs: Vec<Vec<f64>>,
    probs: Vec<f64>,
    evaluations: usize,
}

impl Field {
    fn new(game: &Game) -> Self {
        let n = game.num_players();
        let offsets: Vec<usize> = (0..n).map(|i| game.block_offset(i)).collect();
        let coords = game
            .profiles()
            .map(|p| (0..n).map(|i| offsets[i] + p[i]).collect())
            .collect();
        let payoffs = (0..game.num_profiles()).map(|k| game.payoff_at(k).to_vec()).collect();
        Field {
            sizes: game.strategy_counts().to_vec(),
            offsets,
            coords,
            payoffs,
            probs: vec![0.0; game.payoff_dim()],
            evaluations: 0,
        }
    }

    fn dim(&self) -> usize {
        self.probs.len()
    }

    fn eval(&mut self, y: &[f64], out: &mut [f64]) {
        self.evaluations += 1;
        for (i, &n) in self.sizes.iter().enumerate() {
            let o = self.offsets[i];
            softmax_into(&y[o..o + n], &mut self.probs[o..o + n]);
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let n = self.sizes.len();
        for (c, u) in self.coords.iter().zip(&self.payoffs) {
            for i in 0..n {
                let mut weight = 1.0;
                for (j, &cj) in c.iter().enumerate() {
                    if j != i {
                        weight *= self.probs[cj];
                    }
                }
                out[c[i]] += weight * u[i];
            }
        }
    }

    /// Subtracts each block's maximum, accumulating it into `offset`.
    fn renormalise(&self, y: &mut [f64], offset: &mut [f64]) {
        for (i, &n) in self.sizes.iter().enumerate() {
            let o = self.offsets[i];
            let max = y[o..o + n].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in &mut y[o..o + n] {
                *v -= max;
            }
            offset[i] += max;
        }
    }

    /// Longest step over which no leader can be overtaken: every rate
    /// difference is bounded by the payoff range, so the smallest gap between
    /// a leader and its runner-up cannot close faster than that.
    fn safe_step(&self, y: &[f64], range: f64) -> f64 {
        if range <= 0.0 {
            return f64::INFINITY;
        }
        let mut gap = f64::INFINITY;
        for (i, &n) in self.sizes.iter().enumerate() {
            let b = &y[self.offsets[i]..self.offsets[i] + n];
            let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &v in b {
                if v > first {
                    second = first;
                    first = v;
                } else if v > second {
                    second = v;
                }
            }
            gap = gap.min(first - second);
        }
        0.5 * gap / range
    }

    fn unshift(&self, y: &[f64], offset: &[f64]) -> PayoffPoint {
        let mut out = y.to_vec();
        for (i, &n) in self.sizes.iter().enumerate() {
            let o = self.offsets[i];
            for v in &mut out[o..o + n] {
                *v += offset[i];
            }
        }
        PayoffPoint::from_flat(&self.sizes, out).expect("sizes match")
    }
}

const A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Stepper {
    field: Field,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl Stepper {
    fn new(field: Field) -> Self {
        let n = field.dim();
        Stepper {
            field,
            k: vec![vec![0.0; n]; 7],
            tmp: vec![0.0; n],
        }
    }

    /// One Dormand-Prince step of length `h` from `y` with `k[0] = f(y)`.
    /// Writes the fifth-order solution into `out` and returns the error
    /// vector's weighted RMS norm.
    fn step(&mut self, y: &[f64], h: f64, out: &mut [f64], opts: &RdOptions) -> f64 {
        let n = y.len();
        for s in 0..6 {
            let row = A[s];
            for m in 0..n {
                let mut acc = 0.0;
                for (r, a) in row.iter().enumerate() {
                    acc += a * self.k[r][m];
                }
                self.tmp[m] = y[m] + h * acc;
            }
            self.field.eval(&self.tmp, &mut self.k[s + 1]);
        }
        out.copy_from_slice(&self.tmp);
        let mut sum = 0.0;
        for m in 0..n {
            let mut e = 0.0;
            for (r, c) in E.iter().enumerate() {
                e += c * self.k[r][m];
            }
            let sc = opts.abs_tol + opts.rel_tol * y[m].abs().max(out[m].abs());
            sum += (h * e / sc).powi(2);
        }
        (sum / n as f64).sqrt()
    }

    /// Fifth-order solution over a fraction of the step, without error
    /// control; used to locate events inside an accepted step.
    fn partial(&mut self, y: &[f64], k0: &[f64], h: f64, opts: &RdOptions) -> Vec<f64> {
        self.k[0].copy_from_slice(k0);
        let mut out = vec![0.0; y.len()];
        self.step(y, h, &mut out, opts);
        out
    }
}

/// Tracks the per-player leaders with hysteresis.
struct PlayTracker {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    leaders: Vec<usize>,
    delta: f64,
}

impl PlayTracker {
    fn new(sizes: &[usize], start: Vec<usize>, delta: f64) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &n in sizes {
            offsets.push(acc);
            acc += n;
        }
        PlayTracker {
            sizes: sizes.to_vec(),
            offsets,
            leaders: start,
            delta,
        }
    }

    fn profile(&self) -> PureProfile {
        PureProfile(self.leaders.clone())
    }

    /// Updates the leaders; returns the players that switched.
    fn update(&mut self, y: &[f64]) -> Vec<usize> {
        let mut switched = Vec::new();
        for (i, &n) in self.sizes.iter().enumerate() {
            let b = &y[self.offsets[i]..self.offsets[i] + n];
            let (best, &bv) = b
                .iter()
                .enumerate()
                .max_by(|a, c| a.1.total_cmp(c.1).then(c.0.cmp(&a.0)))
                .expect("nonempty block");
            if best != self.leaders[i] && bv > b[self.leaders[i]] + self.delta {
                self.leaders[i] = best;
                switched.push(i);
            }
        }
        switched
    }
}

fn first_argmax(b: &[f64]) -> usize {
    let mut best = 0;
    for (s, &v) in b.iter().enumerate() {
        if v > b[best] {
            best = s;
        }
    }
    best
}

/// Step bounds: a base cap near switches and the payoff range used to
/// relax it where every leader is safely ahead.
struct Limits {
    base: f64,
    range: f64,
}

impl Limits {
    fn new(game: &Game, opts: &RdOptions) -> Self {
        let (lo, hi) = game.payoff_range();
        Limits {
            base: opts.max_step.unwrap_or(1.0 / (1.0 + lo.abs().max(hi.abs()))),
            range: hi - lo,
        }
    }

    fn cap(&self, field: &Field, y: &[f64]) -> f64 {
        self.base.max(field.safe_step(y, self.range))
    }
}

fn initial_step(y: &[f64], f: &[f64], opts: &RdOptions, h_max: f64) -> f64 {
    let fnorm = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ynorm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = opts.abs_tol + opts.rel_tol * ynorm;
    let h = if fnorm > 0.0 { 0.1 * tol.powf(0.2) / fnorm } else { h_max };
    h.min(h_max).max(1e-8 * h_max)
}

fn next_h(h: f64, err: f64, h_max: f64) -> f64 {
    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
    (h * factor).min(h_max)
}

fn underflow(h: f64, t: f64) -> bool {
    h < 1e-14 * (1.0 + t.abs())
}

/// Integrates the replicator dynamic from `w0` over `[0, t_end]`.
pub fn rd_simulate(
    game: &Game,
    w0: &PayoffPoint,
    t_end: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<RdTrajectory, RdError> {
    let opts = RdOptions {
        abs_tol,
        rel_tol,
        ..RdOptions::default()
    };
    rd_simulate_with(game, w0, t_end, &opts)
}

pub fn rd_simulate_with(
    game: &Game,
    w0: &PayoffPoint,
    t_end: f64,
    opts: &RdOptions,
) -> Result<RdTrajectory, RdError> {
    game.check_point(w0)?;
    opts.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(RdError::InvalidParameter("t_end must be positive"));
    }
    let field = Field::new(game);
    let n_players = game.num_players();
    let mut offset = vec![0.0; n_players];
    let mut y = w0.as_slice().to_vec();
    field.renormalise(&mut y, &mut offset);

    let start: Vec<usize> = (0..n_players).map(|i| first_argmax(w0.block(i))).collect();
    let mut tracker = PlayTracker::new(game.strategy_counts(), start, opts.hysteresis);
    let mut play = vec![PlayInterval {
        profile: tracker.profile(),
        entry: 0.0,
        exit: t_end,
    }];
    let mut samples = vec![(0.0, w0.clone())];
    let mut stats = IntegratorStats::default();

    let mut stepper = Stepper::new(field);
    let limits = Limits::new(game, opts);
    stepper.field.eval(&y, &mut stepper.k[0]);
    let mut h_max = limits.cap(&stepper.field, &y);
    let mut h = initial_step(&y, &stepper.k[0], opts, limits.base);
    let mut t = 0.0;
    let mut y_new = vec![0.0; y.len()];
    while t < t_end {
        let last = t + h >= t_end;
        let step_h = if last { t_end - t } else { h };
        let err = stepper.step(&y, step_h, &mut y_new, opts);
        if !err.is_finite() || err > 1.0 {
            stats.rejected += 1;
            h = if err.is_finite() { next_h(step_h, err, h_max) } else { step_h * 0.2 };
            if underflow(h, t) {
                return Err(RdError::StepUnderflow { time: t });
            }
            continue;
        }
        stats.accepted += 1;
        stats.max_error_estimate = stats.max_error_estimate.max(err);
        t = if last { t_end } else { t + step_h };
        y.copy_from_slice(&y_new);
        let k6 = stepper.k[6].clone();
        stepper.k[0].copy_from_slice(&k6);
        stepper.field.renormalise(&mut y, &mut offset);
        samples.push((t, stepper.field.unshift(&y, &offset)));
        if !tracker.update(&y).is_empty() {
            let cur = play.last_mut().expect("nonempty");
            if cur.entry < t {
                cur.exit = t;
                play.push(PlayInterval {
                    profile: tracker.profile(),
                    entry: t,
                    exit: t_end,
                });
            } else {
                cur.profile = tracker.profile();
            }
        }
        h_max = limits.cap(&stepper.field, &y);
        h = next_h(step_h, err, h_max);
    }
    // a switch recorded exactly at t_end leaves an empty interval
    if play.len() > 1 && play.last().is_some_and(|iv| iv.entry >= iv.exit) {
        play.pop();
        play.last_mut().expect("nonempty").exit = t_end;
    }
    stats.field_evaluations = stepper.field.evaluations;
    Ok(RdTrajectory {
        samples,
        sequence_of_play: play,
        stats,
    })
}

/// First return of the replicator dynamic to the walk's section, starting
/// on the section with the walk's first profile in play.
pub fn rd_section_return(game: &Game, w: &PayoffPoint, walk: &Walk) -> Result<SectionReturn, RdError> {
    rd_section_return_with(game, w, walk, &RdOptions::default())
}

pub fn rd_section_return_with(
    game: &Game,
    w: &PayoffPoint,
    walk: &Walk,
    opts: &RdOptions,
) -> Result<SectionReturn, RdError> {
    game.check_point(w)?;
    opts.validate()?;
    section_membership(w, walk).map_err(RdError::NotOnSection)?;
    let k = walk.len();
    let closing = &walk.arcs[k - 1];
    let gi = game.block_offset(closing.player);
    let (g_to, g_from) = (gi + closing.to_strategy, gi + closing.from_strategy);
    let event = |y: &[f64]| y[g_to] - y[g_from];
    let min_weight = walk.weights().into_iter().fold(f64::INFINITY, f64::min);
    if !(min_weight > 0.0) {
        return Err(RdError::InvalidParameter("walk has a zero-weight arc"));
    }

    let field = Field::new(game);
    let mut offset = vec![0.0; game.num_players()];
    let mut y = w.as_slice().to_vec();
    field.renormalise(&mut y, &mut offset);
    let mut tracker = PlayTracker::new(game.strategy_counts(), walk.profiles[0].0.clone(), opts.hysteresis);

    let mut stepper = Stepper::new(field);
    let limits = Limits::new(game, opts);
    stepper.field.eval(&y, &mut stepper.k[0]);
    let mut h_max = limits.cap(&stepper.field, &y);
    let mut h = initial_step(&y, &stepper.k[0], opts, limits.base);
    let mut t = 0.0;
    let mut stage = 0;
    let mut stage_entry = 0.0;
    let mut entries = vec![0.0];
    let mut stage_limit = stage_budget(&y, min_weight);
    let mut y_new = vec![0.0; y.len()];
    loop {
        let err = stepper.step(&y, h, &mut y_new, opts);
        if !err.is_finite() || err > 1.0 {
            h = if err.is_finite() { next_h(h, err, h_max) } else { h * 0.2 };
            if underflow(h, t) {
                return Err(RdError::StepUnderflow { time: t });
            }
            continue;
        }
        if stage == k - 1 && event(&y) < 0.0 && event(&y_new) >= 0.0 {
            let k0 = stepper.k[0].clone();
            let (theta, point) = locate(&mut stepper, &y, &k0, h, opts, &event);
            let t_cross = t + theta * h;
            let mut dwell: Vec<f64> = entries.windows(2).map(|p| p[1] - p[0]).collect();
            dwell.push(t_cross - entries[k - 1]);
            return Ok(SectionReturn::Returned {
                point: stepper.field.unshift(&point, &offset),
                dwell_times: dwell,
                time: t_cross,
            });
        }
        t += h;
        y.copy_from_slice(&y_new);
        let k6 = stepper.k[6].clone();
        stepper.k[0].copy_from_slice(&k6);
        stepper.field.renormalise(&mut y, &mut offset);
        let switched = tracker.update(&y);
        if !switched.is_empty() {
            let now = tracker.profile();
            let ahead = (1..=switched.len()).find(|&m| stage + m < k && walk.profiles[stage + m] == now);
            match ahead {
                Some(m) => {
                    for _ in 0..m {
                        entries.push(t);
                    }
                    stage += m;
                    stage_entry = t;
                    stage_limit = stage_budget(&y, min_weight);
                }
                None => return Ok(SectionReturn::Deviated { step: stage }),
            }
        }
        if t - stage_entry > stage_limit {
            return Ok(SectionReturn::Deviated { step: stage });
        }
        h_max = limits.cap(&stepper.field, &y);
        h = next_h(h, err, h_max);
    }
}

/// Generous bound on how long one stage of the lap can last: every gap in
/// the renormalised state must close at a rate of at least the smallest arc
/// weight once play has settled.
fn stage_budget(y: &[f64], min_weight: f64) -> f64 {
    let spread = y.iter().fold(0.0f64, |m, v| m.max(-v));
    10.0 * (spread + 1.0) / min_weight + 10.0
}

/// Bisection on the step fraction until the event is bracketed to
/// `EVENT_TIME_TOL` in time. Returns the fraction and the state there.
fn locate(
    stepper: &mut Stepper,
    y: &[f64],
    k0: &[f64],
    h: f64,
    opts: &RdOptions,
    event: &dyn Fn(&[f64]) -> f64,
) -> (f64, Vec<f64>) {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut hi_point = stepper.partial(y, k0, h, opts);
    while (hi - lo) * h > EVENT_TIME_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p = stepper.partial(y, k0, mid * h, opts);
        if event(&p) >= 0.0 {
            hi = mid;
            hi_point = p;
        } else {
            lo = mid;
        }
    }
    (hi, hi_point)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ProbeOutcome {
    /// `|RD_H(s w) - M_c s w| / s` in the Euclidean norm.
    Error(f64),
    Deviated { step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbePoint {
    pub scale: f64,
    pub outcome: ProbeOutcome,
}

impl ProbePoint {
    pub fn error(&self) -> Option<f64> {
        match self.outcome {
            ProbeOutcome::Error(e) => Some(e),
            ProbeOutcome::Deviated { .. } => None,
        }
    }
}

/// Compares the replicator return map with the Poincaré matrix at each
/// scale. `w_unit` is normalised to unit Euclidean length first.
pub fn asymptotic_linearity_probe(
    game: &Game,
    walk: &Walk,
    w_unit: &PayoffPoint,
    scales: &[f64],
) -> Result<Vec<ProbePoint>, RdError> {
    game.check_point(w_unit)?;
    let norm = w_unit.norm2();
    if !(norm > 0.0) {
        return Err(RdError::InvalidParameter("direction must be nonzero"));
    }
    if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(RdError::InvalidParameter("scales must be positive"));
    }
    let unit = w_unit.scaled(1.0 / norm);
    let pm = poincare_matrix(game, walk)
        .map_err(|_| RdError::InvalidParameter("walk has a zero-weight arc"))?;
    let v = nalgebra::DVector::from_column_slice(unit.as_slice());
    let image = &pm.matrix * v;
    let mut out = Vec::with_capacity(scales.len());
    for &s in scales {
        let outcome = match rd_section_return(game, &unit.scaled(s), walk)? {
            SectionReturn::Returned { point, .. } => {
                let err = point
                    .as_slice()
                    .iter()
                    .zip(image.iter())
                    .map(|(a, b)| (a - s * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                ProbeOutcome::Error(err / s)
            }
            SectionReturn::Deviated { step } => ProbeOutcome::Deviated { step },
        };
        out.push(ProbePoint { scale: s, outcome });
    }
    Ok(out)
}
