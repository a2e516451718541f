//! Event-driven best-response dynamics in payoff space.
//!
//! While a pure profile `p` is the argmax, every coordinate `w^i_s` grows at
//! the constant rate `u_i(s; p_{-i})`, so trajectories are piecewise linear
//! and switching times are solved in closed form.

use serde::Serialize;

use crate::error::BrdError;
use crate::game::{Game, PayoffPoint, PureProfile};
use crate::graph::{canonical_rotation, Walk};

/// Crossing times closer than `TIE_TOL * (1 + |t|)` are a tie.
pub const TIE_TOL: f64 = 1e-9;
/// Required gap (relative to `1 + |w|`) below the maximum for strategies that
/// are not argmaxes on a section.
pub const SECTION_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub time: f64,
    pub player: usize,
    pub from_strategy: usize,
    pub to_strategy: usize,
    pub profile_before: PureProfile,
    pub profile_after: PureProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NextSwitch {
    Switch(SwitchEvent),
    /// The current profile is a strict pure Nash equilibrium.
    ReachedPne,
    /// Two crossings coincide at `time`.
    HitTie { time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BrdStatus {
    Completed,
    HitTie,
    ReachedPne,
    AmbiguousStart,
}

#[derive(Debug, Clone, Serialize)]
pub struct BrdTrajectory {
    pub start: PayoffPoint,
    pub events: Vec<SwitchEvent>,
    /// State at each event, parallel to `events`.
    pub points: Vec<PayoffPoint>,
    pub sequence_of_play: Vec<PureProfile>,
    pub terminal: PayoffPoint,
    pub terminal_time: f64,
    pub status: BrdStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SectionReturn {
    Returned {
        point: PayoffPoint,
        dwell_times: Vec<f64>,
        time: f64,
    },
    /// Play left the walk at the given step.
    Deviated { step: usize },
}

/// Argmax profile of `w`, or `AmbiguousArgmax` when any player's maximum is
/// shared within `1e-12 (1 + |w|)`.
pub fn argmax_profile(w: &PayoffPoint) -> Result<PureProfile, BrdError> {
    w.unique_argmax(SECTION_MARGIN * (1.0 + w.norm_inf()))
        .ok_or(BrdError::AmbiguousArgmax)
}

/// Next switch from `w`, whose argmax must be a unique pure profile. The
/// returned event time is relative to `w`.
pub fn next_switch(game: &Game, w: &PayoffPoint) -> Result<NextSwitch, BrdError> {
    game.check_point(w)?;
    let p = argmax_profile(w)?;
    Ok(next_switch_from(game, w, &p, 0.0))
}

/// Next switch while `p` is played from `w` at absolute time `now`.
pub fn next_switch_from(game: &Game, w: &PayoffPoint, p: &PureProfile, now: f64) -> NextSwitch {
    let rates = game.counterfactual_rates(p);
    let mut best: Option<(f64, usize, usize)> = None;
    let mut second = f64::INFINITY;
    for i in 0..game.num_players() {
        let cur = p[i];
        let rc = rates.get(i, cur);
        let wc = w.get(i, cur);
        for s in 0..game.strategy_counts()[i] {
            let rs = rates.get(i, s);
            if s == cur || rs <= rc {
                continue;
            }
            let tau = ((wc - w.get(i, s)) / (rs - rc)).max(0.0);
            match best {
                Some((t, _, _)) if tau >= t => second = second.min(tau),
                _ => {
                    if let Some((t, _, _)) = best {
                        second = second.min(t);
                    }
                    best = Some((tau, i, s));
                }
            }
        }
    }
    let Some((tau, player, to)) = best else {
        return NextSwitch::ReachedPne;
    };
    let t = now + tau;
    if second.is_finite() && (second - tau) <= TIE_TOL * (1.0 + t.abs()) {
        return NextSwitch::HitTie { time: t };
    }
    NextSwitch::Switch(SwitchEvent {
        time: t,
        player,
        from_strategy: p[player],
        to_strategy: to,
        profile_before: p.clone(),
        profile_after: p.with(player, to),
    })
}

/// Moves `w` along the rates of `ev.profile_before` for `dt`, then makes the
/// switching player's two strategies exactly equal.
fn advance(game: &Game, w: &mut PayoffPoint, ev: &SwitchEvent, dt: f64) {
    let rates = game.counterfactual_rates(&ev.profile_before);
    w.add_scaled(&rates, dt);
    let b = w.block_mut(ev.player);
    b[ev.to_strategy] = b[ev.from_strategy];
}

/// Simulates BRD from `w0` for at most `max_switches` switches.
pub fn simulate(game: &Game, w0: &PayoffPoint, max_switches: usize) -> Result<BrdTrajectory, BrdError> {
    game.check_point(w0)?;
    match argmax_profile(w0) {
        Ok(p) => Ok(simulate_from(game, w0, &p, max_switches)),
        Err(_) => Ok(BrdTrajectory {
            start: w0.clone(),
            events: Vec::new(),
            points: Vec::new(),
            sequence_of_play: Vec::new(),
            terminal: w0.clone(),
            terminal_time: 0.0,
            status: BrdStatus::AmbiguousStart,
        }),
    }
}

/// Simulates BRD from `w0` with `p` as the initial played profile (useful on
/// indifference surfaces, where the argmax alone does not determine it).
pub fn simulate_from(game: &Game, w0: &PayoffPoint, p: &PureProfile, max_switches: usize) -> BrdTrajectory {
    let mut w = w0.clone();
    let mut p = p.clone();
    let mut t = 0.0;
    let mut events = Vec::new();
    let mut points = Vec::new();
    let mut seq = vec![p.clone()];
    let mut status = BrdStatus::Completed;
    while events.len() < max_switches {
        match next_switch_from(game, &w, &p, t) {
            NextSwitch::Switch(ev) => {
                advance(game, &mut w, &ev, ev.time - t);
                t = ev.time;
                p = ev.profile_after.clone();
                seq.push(p.clone());
                points.push(w.clone());
                events.push(ev);
            }
            NextSwitch::ReachedPne => {
                status = BrdStatus::ReachedPne;
                break;
            }
            NextSwitch::HitTie { .. } => {
                status = BrdStatus::HitTie;
                break;
            }
        }
    }
    BrdTrajectory {
        start: w0.clone(),
        events,
        points,
        sequence_of_play: seq,
        terminal: w,
        terminal_time: t,
        status,
    }
}

/// Checks that `w` lies on the walk's section: the first and last profiles of
/// the walk are both argmaxes (ties within `tie_tol`), and every other
/// strategy sits strictly below the maximum.
pub fn section_membership(w: &PayoffPoint, walk: &Walk) -> Result<(), String> {
    let scale = 1.0 + w.norm_inf();
    let tie_tol = TIE_TOL * scale;
    let margin = SECTION_MARGIN * scale;
    let first = &walk.profiles[0];
    let last = &walk.profiles[walk.len() - 1];
    for j in 0..first.len() {
        let b = w.block(j);
        let max = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (s, &v) in b.iter().enumerate() {
            let allowed = s == first[j] || s == last[j];
            if allowed && v < max - tie_tol {
                return Err(format!("player {j} strategy {s} is not an argmax"));
            }
            if !allowed && v >= max - margin {
                return Err(format!("player {j} strategy {s} reaches the maximum"));
            }
        }
    }
    Ok(())
}

/// First return of BRD to the walk's section, starting on the section and
/// playing the walk's first profile.
pub fn section_return(game: &Game, w: &PayoffPoint, walk: &Walk) -> Result<SectionReturn, BrdError> {
    game.check_point(w)?;
    section_membership(w, walk).map_err(BrdError::NotOnSection)?;
    let k = walk.len();
    let mut p = walk.profiles[0].clone();
    let mut cur = w.clone();
    let mut t = 0.0;
    let mut dwell = Vec::with_capacity(k);
    for step in 0..k {
        match next_switch_from(game, &cur, &p, t) {
            NextSwitch::Switch(ev) if ev.profile_after == walk.profiles[(step + 1) % k] => {
                dwell.push(ev.time - t);
                advance(game, &mut cur, &ev, ev.time - t);
                t = ev.time;
                p = ev.profile_after;
            }
            _ => return Ok(SectionReturn::Deviated { step }),
        }
    }
    Ok(SectionReturn::Returned {
        point: cur,
        dwell_times: dwell,
        time: t,
    })
}

/// Smallest period `P` such that the last `P * min_reps` entries of `seq` are
/// `min_reps` copies of one block; returned in canonical rotation.
pub fn detect_period(seq: &[PureProfile], min_reps: usize) -> Option<Vec<PureProfile>> {
    let reps = min_reps.max(2);
    let n = seq.len();
    for period in 1..=n / reps {
        let tail = &seq[n - period * reps..];
        if (period..tail.len()).all(|k| tail[k] == tail[k - period]) {
            return Some(canonical_rotation(&tail[..period]));
        }
    }
    None
}

/// Default switch budget, `10 * K * profiles`.
pub fn default_max_switches(walk_len: usize, num_profiles: usize) -> usize {
    10 * walk_len.max(1) * num_profiles
}
