//! DOT and CSV renderings of graphs and trajectories.

use std::fmt::Write as _;

use crate::brd::BrdTrajectory;
use crate::game::Game;
use crate::graph::PreferenceGraph;
use crate::rd::{payoff_to_strategy, PlayInterval, RdTrajectory};

/// Graphviz rendering of the preference graph. Nodes are labelled by their
/// strategy tuples, arcs by weight; nodes of sink equilibria are filled and
/// zero-weight arcs are dashed.
pub fn export_dot(game: &Game, graph: &PreferenceGraph) -> String {
    let mut in_sink = vec![false; graph.num_nodes()];
    for sink in graph.sink_equilibria() {
        for &n in &sink.indices {
            in_sink[n] = true;
        }
    }
    let mut out = String::from("digraph preference_graph {\n  node [shape=box];\n");
    for (n, p) in graph.nodes().iter().enumerate() {
        let label = escape(&game.profile_label(p));
        if in_sink[n] {
            let _ = writeln!(out, "  n{n} [label=\"{label}\", style=filled, fillcolor=\"#f4a6a6\", penwidth=2];");
        } else {
            let _ = writeln!(out, "  n{n} [label=\"{label}\"];");
        }
    }
    let mut arcs: Vec<_> = graph.arcs().iter().collect();
    arcs.sort_by_key(|a| (a.from_index, a.to_index));
    for a in arcs {
        let style = if a.is_tie() { ", style=dashed" } else { "" };
        let _ = writeln!(
            out,
            "  n{} -> n{} [label=\"{}\"{style}];",
            a.from_index, a.to_index, a.weight
        );
    }
    out.push_str("}\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn coordinate_names(game: &Game, prefix: &str) -> Vec<String> {
    game.labels()
        .iter()
        .enumerate()
        .flat_map(|(i, ls)| ls.iter().map(move |l| format!("{prefix}{}_{l}", i + 1)))
        .collect()
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

/// One row per switch: time, switching player (1-based), the strategies it
/// leaves and takes up, then the payoff point at the switch.
pub fn brd_csv(game: &Game, traj: &BrdTrajectory) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time".to_string(), "player".into(), "from".into(), "to".into()];
    header.extend(coordinate_names(game, "w"));
    w.write_record(&header).expect("in-memory writer");
    for (ev, point) in traj.events.iter().zip(&traj.points) {
        let labels = &game.labels()[ev.player];
        let mut row = vec![
            ev.time.to_string(),
            (ev.player + 1).to_string(),
            labels[ev.from_strategy].clone(),
            labels[ev.to_strategy].clone(),
        ];
        row.extend(point.as_slice().iter().map(|v| v.to_string()));
        w.write_record(&row).expect("in-memory writer");
    }
    finish(w)
}

/// One row per accepted integration step: time, payoff coordinates, then the
/// corresponding mixed strategies.
pub fn rd_samples_csv(game: &Game, traj: &RdTrajectory) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time".to_string()];
    header.extend(coordinate_names(game, "w"));
    header.extend(coordinate_names(game, "x"));
    w.write_record(&header).expect("in-memory writer");
    for (t, point) in &traj.samples {
        let mut row = vec![t.to_string()];
        row.extend(point.as_slice().iter().map(|v| v.to_string()));
        row.extend(payoff_to_strategy(point).0.iter().flatten().map(|v| v.to_string()));
        w.write_record(&row).expect("in-memory writer");
    }
    finish(w)
}

pub fn play_csv(game: &Game, play: &[PlayInterval]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["profile", "entry", "exit"]).expect("in-memory writer");
    for iv in play {
        w.write_record([game.profile_label(&iv.profile), iv.entry.to_string(), iv.exit.to_string()])
            .expect("in-memory writer");
    }
    finish(w)
}
