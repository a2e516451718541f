//! End-to-end analysis of a game: graph, sinks, cycles, verdicts and
//! simulation checks, collected into one serialisable report.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::brd::{self, BrdStatus};
use crate::game::{Game, PayoffPoint};
use crate::graph::{canonical_rotation, PreferenceGraph, SinkComponent, Walk};
use crate::rd::{self, ProbePoint};
use crate::stability::{
    certify_sink_cycle, four_cycle_analysis, stability_test, FourCycleAnalysis, StabilityVerdict,
    Tolerances,
};

/// Environment variable capping the worker threads of [`run_analysis`].
pub const THREADS_ENV: &str = "GDX_THREADS";

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisOptions {
    pub max_cycle_len: usize,
    /// Enumeration stops after this many cycles.
    pub max_cycles: usize,
    pub simulate: bool,
    pub scales: Vec<f64>,
    /// Random BRD starts near the eigenvector, besides the eigenvector itself.
    pub perturbations: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    /// Overrides `GDX_THREADS` when set.
    pub threads: Option<usize>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            max_cycle_len: 6,
            max_cycles: 10_000,
            simulate: false,
            scales: vec![10.0, 100.0, 1000.0],
            perturbations: 5,
            seed: 0,
            tolerances: Tolerances::default(),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GameSummary {
    pub players: usize,
    pub strategy_counts: Vec<usize>,
    pub labels: Vec<Vec<String>>,
    pub profiles: usize,
    pub arcs: usize,
    pub tie_arcs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SinkReport {
    pub profiles: Vec<String>,
    pub is_singleton: bool,
    /// Index into `walks` when the sink is a simple cycle.
    pub cycle: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WalkReport {
    pub id: usize,
    pub profiles: Vec<String>,
    pub weights: Vec<f64>,
    pub is_sink: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictReport {
    pub walk: usize,
    pub verdict: StabilityVerdict,
    pub four_cycle: Option<FourCycleAnalysis>,
    /// Set for sink cycles that were certified.
    pub attractor_claim: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BrdConfirmation {
    pub starts: usize,
    /// Starts whose last three laps repeat the walk.
    pub followed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Confirmation {
    pub walk: usize,
    pub brd: BrdConfirmation,
    /// Whether the replicator's sequence of play settles on the walk.
    pub rd_followed: Option<bool>,
    pub rd_probe: Vec<ProbePoint>,
    pub rd_probe_decreasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageError {
    pub stage: String,
    pub walk: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub graph_ms: f64,
    pub cycles_ms: f64,
    pub stability_ms: f64,
    pub simulation_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub game: GameSummary,
    pub sinks: Vec<SinkReport>,
    pub walks: Vec<WalkReport>,
    pub cycles_truncated: bool,
    pub verdicts: Vec<VerdictReport>,
    pub confirmations: Vec<Confirmation>,
    pub errors: Vec<StageError>,
    pub timings: Timings,
}

impl AnalysisReport {
    pub fn verdict_for(&self, walk: usize) -> Option<&VerdictReport> {
        self.verdicts.iter().find(|v| v.walk == walk)
    }
}

fn threads(opts: &AnalysisOptions) -> usize {
    opts.threads
        .or_else(|| std::env::var(THREADS_ENV).ok()?.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// The sink's cycle, starting from its smallest profile, when every node
/// has a single outgoing arc.
fn sink_cycle(graph: &PreferenceGraph, sink: &SinkComponent) -> Option<Walk> {
    if sink.is_singleton {
        return None;
    }
    let start = *sink.indices.iter().min()?;
    let mut profiles = Vec::new();
    let mut node = start;
    loop {
        let mut out = graph.outgoing(node);
        let arc = match (out.next(), out.next()) {
            (Some(a), None) => a,
            _ => return None,
        };
        profiles.push(graph.nodes()[node].clone());
        node = arc.to_index;
        if node == start {
            break;
        }
        if profiles.len() > sink.indices.len() {
            return None;
        }
    }
    if profiles.len() != sink.indices.len() {
        return None;
    }
    graph.validate_walk(&profiles).ok()
}

pub fn run_analysis(game: &Game, opts: &AnalysisOptions) -> AnalysisReport {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads(opts))
        .build()
        .expect("thread pool");
    pool.install(|| analyse(game, opts))
}

fn analyse(game: &Game, opts: &AnalysisOptions) -> AnalysisReport {
    let mut timings = Timings::default();
    let mut errors = Vec::new();

    let t = Instant::now();
    let graph = PreferenceGraph::build(game);
    let sinks = graph.sink_equilibria();
    timings.graph_ms = ms(t);

    let t = Instant::now();
    let mut walks: Vec<Walk> = Vec::new();
    let mut cycles_truncated = false;
    for c in graph.simple_cycles(opts.max_cycle_len) {
        if walks.len() == opts.max_cycles {
            cycles_truncated = true;
            break;
        }
        walks.push(c);
    }
    let mut seen: HashSet<Vec<crate::game::PureProfile>> =
        walks.iter().map(|w| canonical_rotation(&w.profiles)).collect();
    let mut sink_reports = Vec::with_capacity(sinks.len());
    for sink in &sinks {
        let cycle = sink_cycle(&graph, sink).map(|walk| {
            let key = canonical_rotation(&walk.profiles);
            if seen.insert(key.clone()) {
                walks.push(walk);
                walks.len() - 1
            } else {
                walks
                    .iter()
                    .position(|w| canonical_rotation(&w.profiles) == key)
                    .expect("seen walks are listed")
            }
        });
        sink_reports.push(SinkReport {
            profiles: sink.profiles.iter().map(|p| game.profile_label(p)).collect(),
            is_singleton: sink.is_singleton,
            cycle,
        });
    }
    let sink_flags: Vec<bool> = walks
        .iter()
        .map(|w| graph.is_sink_cycle(w).unwrap_or(false))
        .collect();
    timings.cycles_ms = ms(t);

    let t = Instant::now();
    let tols = &opts.tolerances;
    let results: Vec<_> = walks
        .par_iter()
        .enumerate()
        .map(|(id, walk)| {
            let mut errs = Vec::new();
            let mut err = |stage: &str, e: String| {
                errs.push(StageError {
                    stage: stage.into(),
                    walk: Some(id),
                    message: e,
                })
            };
            let verdict = stability_test(game, walk, tols).map_err(|e| err("stability", e.to_string())).ok();
            let four_cycle = if walk.len() == 4 {
                four_cycle_analysis(game, walk).map_err(|e| err("four_cycle", e.to_string())).ok()
            } else {
                None
            };
            let attractor_claim = if sink_flags[id] {
                certify_sink_cycle(game, &graph, walk, tols)
                    .map_err(|e| err("certify", e.to_string()))
                    .ok()
                    .map(|c| c.attractor_claim)
            } else {
                None
            };
            let report = verdict.map(|verdict| VerdictReport {
                walk: id,
                verdict,
                four_cycle,
                attractor_claim,
            });
            (report, errs)
        })
        .collect();
    let mut verdicts = Vec::new();
    for (report, errs) in results {
        verdicts.extend(report);
        errors.extend(errs);
    }
    timings.stability_ms = ms(t);

    let t = Instant::now();
    let mut confirmations = Vec::new();
    if opts.simulate {
        let results: Vec<_> = verdicts
            .par_iter()
            .filter(|v| v.verdict.is_stable())
            .map(|v| confirm(game, &walks[v.walk], v, opts))
            .collect();
        for (c, errs) in results {
            confirmations.extend(c);
            errors.extend(errs);
        }
    }
    timings.simulation_ms = ms(t);

    AnalysisReport {
        game: GameSummary {
            players: game.num_players(),
            strategy_counts: game.strategy_counts().to_vec(),
            labels: game.labels().to_vec(),
            profiles: game.num_profiles(),
            arcs: graph.arcs().len(),
            tie_arcs: graph.arcs().iter().filter(|a| a.is_tie()).count(),
        },
        sinks: sink_reports,
        walks: walks
            .iter()
            .enumerate()
            .map(|(id, w)| WalkReport {
                id,
                profiles: w.profiles.iter().map(|p| game.profile_label(p)).collect(),
                weights: w.weights(),
                is_sink: sink_flags[id],
            })
            .collect(),
        cycles_truncated,
        verdicts,
        confirmations,
        errors,
        timings,
    }
}

/// Norm of the points BRD confirmations start from.
pub const CONFIRM_NORM: f64 = 100.0;
/// Radius of the perturbation ball around the unit eigenvector.
pub const CONFIRM_RADIUS: f64 = 1e-2;

/// A uniform point of the `radius`-ball around `center`, rescaled to `norm`.
pub fn perturbed_start(center: &PayoffPoint, radius: f64, norm: f64, rng: &mut impl Rng) -> PayoffPoint {
    let d = center.dim();
    let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    let mut p = center.clone();
    for (v, e) in p.as_mut_slice().iter_mut().zip(&dir) {
        *v += r * e / len;
    }
    let n = p.norm2();
    p.scaled(norm / n)
}

/// Whether the last three laps of `seq` repeat `walk`.
pub fn follows_walk(seq: &[crate::game::PureProfile], walk: &Walk) -> bool {
    let k = walk.len();
    seq.len() >= 3 * k
        && brd::detect_period(&seq[seq.len() - 3 * k..], 3).is_some_and(|p| p == canonical_rotation(&walk.profiles))
}

fn confirm(
    game: &Game,
    walk: &Walk,
    v: &VerdictReport,
    opts: &AnalysisOptions,
) -> (Option<Confirmation>, Vec<StageError>) {
    let mut errs = Vec::new();
    let eig = match &v.verdict.eigvec {
        Some(e) => e.clone(),
        None => return (None, errs),
    };
    let unit = eig.scaled(1.0 / eig.norm2());
    let k = walk.len();
    let switches = 10 * k;

    let mut starts = 0;
    let mut followed = 0;
    let base = brd::simulate_from(game, &unit.scaled(CONFIRM_NORM), &walk.profiles[0], switches);
    starts += 1;
    if base.status == BrdStatus::Completed && follows_walk(&base.sequence_of_play, walk) {
        followed += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (v.walk as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    for _ in 0..opts.perturbations {
        let w0 = perturbed_start(&unit, CONFIRM_RADIUS, CONFIRM_NORM, &mut rng);
        match brd::simulate(game, &w0, switches) {
            Ok(traj) => {
                starts += 1;
                if traj.status == BrdStatus::Completed && follows_walk(&traj.sequence_of_play, walk) {
                    followed += 1;
                }
            }
            Err(e) => errs.push(StageError {
                stage: "brd".into(),
                walk: Some(v.walk),
                message: e.to_string(),
            }),
        }
    }

    // run the replicator for as long as BRD needs for four laps
    let rd_followed = {
        let laps = brd::simulate_from(game, &unit.scaled(CONFIRM_NORM), &walk.profiles[0], 4 * k);
        if laps.status == BrdStatus::Completed && laps.terminal_time.is_finite() {
            match rd::rd_simulate(game, &unit.scaled(CONFIRM_NORM), 1.05 * laps.terminal_time, 1e-9, 1e-7) {
                Ok(traj) => Some(follows_walk(&traj.profiles(), walk)),
                Err(e) => {
                    errs.push(StageError {
                        stage: "rd".into(),
                        walk: Some(v.walk),
                        message: e.to_string(),
                    });
                    None
                }
            }
        } else {
            None
        }
    };

    let rd_probe = match rd::asymptotic_linearity_probe(game, walk, &unit, &opts.scales) {
        Ok(p) => p,
        Err(e) => {
            errs.push(StageError {
                stage: "rd_probe".into(),
                walk: Some(v.walk),
                message: e.to_string(),
            });
            Vec::new()
        }
    };
    let errors: Vec<Option<f64>> = rd_probe.iter().map(|p| p.error()).collect();
    let rd_probe_decreasing = !errors.is_empty()
        && errors.iter().all(|e| e.is_some())
        && errors.windows(2).all(|w| w[1] < w[0]);

    (
        Some(Confirmation {
            walk: v.walk,
            brd: BrdConfirmation { starts, followed },
            rd_followed,
            rd_probe,
            rd_probe_decreasing,
        }),
        errs,
    )
}

/// Plain-text summary of a report.
pub fn render_text(report: &AnalysisReport) -> String {
    let mut s = String::new();
    let g = &report.game;
    let dims: Vec<String> = g.strategy_counts.iter().map(|n| n.to_string()).collect();
    let _ = writeln!(s, "game: {} players, {} ({} profiles, {} arcs)", g.players, dims.join("x"), g.profiles, g.arcs);
    let _ = writeln!(s, "sink equilibria: {}", report.sinks.len());
    for (i, sink) in report.sinks.iter().enumerate() {
        let kind = if sink.is_singleton {
            "pure equilibrium".to_string()
        } else if let Some(c) = sink.cycle {
            format!("cycle, walk {c}")
        } else {
            format!("{} profiles", sink.profiles.len())
        };
        let _ = writeln!(s, "  [{i}] {kind}: {}", sink.profiles.join(" "));
    }
    let trunc = if report.cycles_truncated { " (truncated)" } else { "" };
    let _ = writeln!(s, "cycles: {}{trunc}", report.walks.len());
    for w in &report.walks {
        let sink = if w.is_sink { " [sink]" } else { "" };
        let _ = writeln!(s, "  walk {}{sink}: {}", w.id, w.profiles.join(" -> "));
        if let Some(v) = report.verdict_for(w.id) {
            let status = match &v.verdict.status {
                crate::stability::VerdictStatus::Stable => "stable".to_string(),
                other => format!("{other:?}").to_lowercase(),
            };
            let lambda = v.verdict.eigenvalue;
            let _ = writeln!(s, "    verdict: {status}, top eigenvalue {:.6}{:+.6}i", lambda[0], lambda[1]);
            if let Some(fc) = &v.four_cycle {
                let _ = writeln!(
                    s,
                    "    2x2 fixed point: ({:.6}, {:.6}) x ({:.6}, {:.6}), persistent: {}",
                    fc.mix[0][0], fc.mix[0][1], fc.mix[1][0], fc.mix[1][1], fc.persistent
                );
            }
            if let Some(a) = v.attractor_claim {
                let _ = writeln!(s, "    attractor: {a}");
            }
        }
    }
    for c in &report.confirmations {
        let _ = writeln!(
            s,
            "confirmation walk {}: brd {}/{} starts followed, rd {}",
            c.walk,
            c.brd.followed,
            c.brd.starts,
            match c.rd_followed {
                Some(true) => "followed",
                Some(false) => "did not follow",
                None => "not run",
            }
        );
        for p in &c.rd_probe {
            match p.error() {
                Some(e) => {
                    let _ = writeln!(s, "    probe scale {}: error {e:.6e}", p.scale);
                }
                None => {
                    let _ = writeln!(s, "    probe scale {}: deviated", p.scale);
                }
            }
        }
    }
    for e in &report.errors {
        let walk = e.walk.map(|w| format!(" walk {w}")).unwrap_or_default();
        let _ = writeln!(s, "error ({}{walk}): {}", e.stage, e.message);
    }
    s
}
