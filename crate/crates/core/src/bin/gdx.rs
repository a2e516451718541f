use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gdx_core::analysis::{render_text, run_analysis, AnalysisOptions};
use gdx_core::builtins;
use gdx_core::export;
use gdx_core::game::{Game, PayoffPoint};
use gdx_core::graph::PreferenceGraph;
use gdx_core::io;
use gdx_core::random::{random_game, PayoffDistribution};
use gdx_core::{brd, rd};

#[derive(Parser)]
#[command(name = "gdx", version, about = "Stability of periodic play in normal-form games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sinks, cycles and stability verdicts.
    Analyze {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 6)]
        max_cycle_len: usize,
        /// Confirm stable verdicts by simulating both dynamics.
        #[arg(long)]
        simulate: bool,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        scales: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Trajectory of BRD or RD as CSV (or JSON with --format machine).
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = Dynamic::Brd)]
        dynamic: Dynamic,
        /// Switch budget for BRD.
        #[arg(long, default_value_t = 100)]
        switches: usize,
        /// Time horizon for RD.
        #[arg(long, default_value_t = 100.0)]
        t_end: f64,
        /// Starting payoff point, player by player; random from --seed if absent.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        start: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// For RD, print play intervals instead of samples.
        #[arg(long)]
        play: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Preference graph in DOT.
    Graph {
        #[command(flatten)]
        source: Source,
    },
    /// Write a builtin game as a game file.
    Builtin {
        name: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        params: Vec<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write a random generic game as a game file.
    Random {
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "uniform01")]
        dist: PayoffDistribution,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Source {
    /// Game file.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    game: Option<PathBuf>,
    /// Builtin game name.
    #[arg(long)]
    builtin: Option<String>,
    /// Parameters of the builtin game.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, requires = "builtin")]
    params: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Dynamic {
    Brd,
    Rd,
}

enum Failure {
    Schema(String),
    Numerical(String),
}

impl Failure {
    fn exit(self) -> ExitCode {
        match self {
            Failure::Schema(m) => {
                eprintln!("error: {m}");
                ExitCode::from(2)
            }
            Failure::Numerical(m) => {
                eprintln!("numerical failure: {m}");
                ExitCode::from(3)
            }
        }
    }
}

fn schema(e: impl std::fmt::Display) -> Failure {
    Failure::Schema(e.to_string())
}

fn numerical(e: impl std::fmt::Display) -> Failure {
    Failure::Numerical(e.to_string())
}

fn load(source: &Source) -> Result<Game, Failure> {
    match (&source.game, &source.builtin) {
        (Some(path), _) => io::load_game(path).map_err(schema),
        (None, Some(name)) => builtins::builtin(name, &source.params).map_err(schema),
        (None, None) => Err(Failure::Schema("no game given".into())),
    }
}

fn emit(text: &str, output: Option<&PathBuf>) -> Result<(), Failure> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| schema(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s
}

fn start_point(game: &Game, start: Option<Vec<f64>>, seed: u64) -> Result<PayoffPoint, Failure> {
    match start {
        Some(v) => PayoffPoint::from_flat(game.strategy_counts(), v).map_err(schema),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = (0..game.payoff_dim()).map(|_| rng.sample(StandardNormal)).collect();
            Ok(PayoffPoint::from_flat(game.strategy_counts(), v).expect("dimension matches"))
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze {
            source,
            max_cycle_len,
            simulate,
            scales,
            seed,
            format,
        } => {
            let game = load(&source)?;
            if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Failure::Schema("scales must be positive".into()));
            }
            let opts = AnalysisOptions {
                max_cycle_len,
                simulate,
                scales,
                seed,
                ..Default::default()
            };
            let report = run_analysis(&game, &opts);
            match format {
                Format::Text => print!("{}", render_text(&report)),
                Format::Machine => print!("{}", json(&report)),
            }
            Ok(())
        }
        Command::Simulate {
            source,
            dynamic,
            switches,
            t_end,
            start,
            seed,
            play,
            format,
        } => {
            let game = load(&source)?;
            let w0 = start_point(&game, start, seed)?;
            match dynamic {
                Dynamic::Brd => {
                    let traj = brd::simulate(&game, &w0, switches).map_err(numerical)?;
                    match format {
                        Format::Text => print!("{}", export::brd_csv(&game, &traj)),
                        Format::Machine => print!("{}", json(&traj)),
                    }
                }
                Dynamic::Rd => {
                    let traj = rd::rd_simulate(&game, &w0, t_end, 1e-9, 1e-7).map_err(|e| match e {
                        gdx_core::RdError::InvalidParameter(_) => schema(e),
                        other => numerical(other),
                    })?;
                    match (format, play) {
                        (Format::Text, false) => print!("{}", export::rd_samples_csv(&game, &traj)),
                        (Format::Text, true) => print!("{}", export::play_csv(&game, &traj.sequence_of_play)),
                        (Format::Machine, _) => print!("{}", json(&traj)),
                    }
                }
            }
            Ok(())
        }
        Command::Graph { source } => {
            let game = load(&source)?;
            print!("{}", export::export_dot(&game, &PreferenceGraph::build(&game)));
            Ok(())
        }
        Command::Builtin { name, params, output } => {
            let game = builtins::builtin(&name, &params).map_err(schema)?;
            emit(&io::game_to_string(&game), output.as_ref())
        }
        Command::Random {
            dims,
            seed,
            dist,
            output,
        } => {
            let game = random_game(&dims, seed, dist).map_err(schema)?;
            emit(&io::game_to_string(&game), output.as_ref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}
