//! `ndg` command line: single games, standard tests, custom sweeps,
//! pretraining and self-validation.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::engine::{pretrain, write_log_csv, GameSummary, RngPlan, Stream};
use crate::error::{Error, Result};
use crate::experiments::{default_grid, parse_grid, run_test, TestSpec};
use crate::game::{GameConfig, Role};
use crate::opponent::DirichletLearner;
use crate::oracle;
use crate::planner::{AgentModel, MdpAgent, TieBreak};

#[derive(Debug, Parser)]
#[command(name = "ndg", version, about = "Repeated Nash demand game laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play one game and write its per-round log.
    Run {
        /// Which standard test's players to use.
        #[arg(long, default_value_t = 3)]
        id: u8,
    },
    /// Run one of the five standard tests over the default weight grid.
    Test {
        #[arg(long)]
        id: u8,
    },
    /// Run a standard test's players over a custom grid (`--grid`).
    Sweep {
        #[arg(long)]
        id: u8,
    },
    /// Warm up two learning players and save their learned counts.
    Pretrain {
        #[arg(long, default_value_t = 30)]
        rounds: u32,
    },
    /// Check the planner against brute force and every model's normalisation.
    Validate,
}

#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Flat `key = value` or JSON file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub q: Option<u32>,
    #[arg(long, global = true)]
    pub rounds: Option<u32>,
    #[arg(long, global = true)]
    pub horizon: Option<u32>,
    #[arg(long, global = true)]
    pub initial_demand: Option<u32>,
    #[arg(long, global = true)]
    pub omega_a: Option<f64>,
    #[arg(long, global = true)]
    pub omega_b: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub replications: Option<u32>,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long, global = true)]
    pub grid: Option<String>,
    /// `smallest` or `random`.
    #[arg(long, global = true)]
    pub tie_break: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,
}

/// Settings read from a configuration file; every key is optional.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileConfig {
    pub q: Option<u32>,
    pub rounds: Option<u32>,
    pub horizon: Option<u32>,
    pub initial_demand: Option<u32>,
    pub omega_a: Option<f64>,
    pub omega_b: Option<f64>,
    pub seed: Option<u64>,
    pub replications: Option<u32>,
    pub grid: Option<Vec<f64>>,
    pub tie_break: Option<TieBreak>,
    pub out: Option<PathBuf>,
}

/// Fully resolved settings for one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct CliConfig {
    pub game: GameConfig,
    pub replications: u32,
    pub grid: Option<Vec<f64>>,
    pub tie_break: TieBreak,
    pub out: Option<PathBuf>,
    pub force: bool,
}

/// Reads a JSON object or a flat `key = value` file.
pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path)?;
    let map: BTreeMap<String, Value> = if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
    } else {
        let table: toml::Table = text.parse().map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        table
            .into_iter()
            .map(|(k, v)| serde_json::to_value(v).map(|v| (k, v)))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(e.to_string()))?
    };
    let mut cfg = FileConfig::default();
    for (key, value) in map {
        let k = key.as_str();
        match k {
            "q" => cfg.q = Some(typed(k, value)?),
            "rounds" => cfg.rounds = Some(typed(k, value)?),
            "horizon" => cfg.horizon = Some(typed(k, value)?),
            "initial_demand" => cfg.initial_demand = Some(typed(k, value)?),
            "omega_a" => cfg.omega_a = Some(typed(k, value)?),
            "omega_b" => cfg.omega_b = Some(typed(k, value)?),
            "seed" => cfg.seed = Some(typed(k, value)?),
            "replications" => cfg.replications = Some(typed(k, value)?),
            "tie_break" => cfg.tie_break = Some(typed(k, value)?),
            "out" => cfg.out = Some(typed(k, value)?),
            "grid" => {
                cfg.grid = Some(match value {
                    Value::String(s) => parse_grid(&s)?,
                    other => typed(k, other)?,
                })
            }
            _ => return Err(Error::config(k, "unknown key")),
        }
    }
    Ok(cfg)
}

fn typed<T: serde::de::DeserializeOwned>(key: &str, value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::config(key, e.to_string()))
}

impl CliConfig {
    /// Defaults, then the config file, then flags.
    pub fn resolve(flags: &Overrides) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => load_config(path)?,
            None => FileConfig::default(),
        };
        let d = GameConfig::default();
        let game = GameConfig {
            q: flags.q.or(file.q).unwrap_or(d.q),
            rounds: flags.rounds.or(file.rounds).unwrap_or(d.rounds),
            horizon: flags.horizon.or(file.horizon).unwrap_or(d.horizon),
            initial_demand: flags.initial_demand.or(file.initial_demand).unwrap_or(d.initial_demand),
            omega_a: flags.omega_a.or(file.omega_a).unwrap_or(d.omega_a),
            omega_b: flags.omega_b.or(file.omega_b).unwrap_or(d.omega_b),
            seed: flags.seed.or(file.seed).unwrap_or(d.seed),
        };
        game.validate()?;
        let grid = match &flags.grid {
            Some(text) => Some(parse_grid(text)?),
            None => file.grid,
        };
        if let Some(g) = &grid {
            if let Some(w) = g.iter().find(|w| !(0.0..=1.0).contains(*w)) {
                return Err(Error::config("grid", format!("weight {w} outside [0, 1]")));
            }
        }
        let tie_break = match &flags.tie_break {
            Some(text) => text.parse()?,
            None => file.tie_break.unwrap_or_default(),
        };
        let replications = flags.replications.or(file.replications).unwrap_or(30);
        if replications < 1 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        Ok(CliConfig {
            game,
            replications,
            grid,
            tie_break,
            out: flags.out.clone().or(file.out),
            force: flags.force,
        })
    }

    fn out_dir(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| Path::new("out").join(default))
    }
}

/// Refuses to clobber existing files unless forced, then creates `dir`.
fn prepare_outputs(dir: &Path, files: &[&str], force: bool) -> Result<Vec<PathBuf>> {
    let paths: Vec<PathBuf> = files.iter().map(|f| dir.join(f)).collect();
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Error::Exists(p.display().to_string()));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(paths)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(text) = std::env::var("NDG_THREADS") {
        let n: usize = text
            .trim()
            .parse()
            .map_err(|_| Error::config("NDG_THREADS", format!("expected a positive integer, got `{text}`")))?;
        if n == 0 {
            return Err(Error::config("NDG_THREADS", "must be positive"));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::config("NDG_THREADS", e.to_string()))
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Ok,
    ValidationFailed,
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let cfg = CliConfig::resolve(&cli.overrides)?;
    match &cli.command {
        Command::Run { id } => {
            let spec = TestSpec::standard(*id, cfg.game.clone(), 1).map(|s| TestSpec {
                tie_break: cfg.tie_break,
                ..s
            })?;
            let dir = cfg.out_dir("run");
            let paths = prepare_outputs(&dir, &["game.csv", "summary.csv"], cfg.force)?;
            let log = spec.play(cfg.game.omega_a, cfg.game.omega_b, cfg.game.seed)?;
            write_log_csv(&log, create(&paths[0])?)?;
            GameSummary::of(&log).write_csv(create(&paths[1])?)?;
            println!(
                "test {id} players, omega=({}, {}): A {} B {} total {} success {:.2}% -> {}",
                log.config.omega_a,
                log.config.omega_b,
                log.cum_profit_a,
                log.cum_profit_b,
                log.total_profit(),
                log.success_rate_pct,
                dir.display()
            );
        }
        Command::Test { id } | Command::Sweep { id } => {
            let sweep = matches!(cli.command, Command::Sweep { .. });
            let mut spec = TestSpec::standard(*id, cfg.game.clone(), cfg.replications)?;
            spec.tie_break = cfg.tie_break;
            let grid = match (&cfg.grid, sweep) {
                (Some(g), _) => g.clone(),
                (None, true) => return Err(Error::config("grid", "`sweep` needs --grid")),
                (None, false) => default_grid(),
            };
            if spec.omega_grid_b.is_some() {
                spec.omega_grid_b = Some(grid.clone());
            }
            spec.omega_grid_a = grid;
            let stem = if sweep { format!("sweep{id}") } else { format!("test{id}") };
            let dir = cfg.out_dir(&stem);
            let cells_name = format!("{stem}_cells.csv");
            let summary_name = format!("{stem}_summary.csv");
            let paths = prepare_outputs(&dir, &[&cells_name, &summary_name], cfg.force)?;
            let summary = thread_pool()?.install(|| run_test(&spec))?;
            summary.write_cells_csv(create(&paths[0])?)?;
            summary.write_summary_csv(create(&paths[1])?)?;
            let t = summary.table;
            println!("test {id}: {} cells x {} replications -> {}", summary.cells.len(), spec.replications, dir.display());
            for (label, m) in [("min", t.min), ("mean", t.mean), ("max", t.max)] {
                println!(
                    "  {label:<4} A {:>8.2}  B {:>8.2}  total {:>8.2}  success {:>6.2}%",
                    m.profit_a, m.profit_b, m.total, m.success_rate_pct
                );
            }
        }
        Command::Pretrain { rounds } => {
            let game = &cfg.game;
            let plan = RngPlan::new(game.seed);
            let warm = |role: Role| -> Result<MdpAgent> {
                MdpAgent::new(
                    role,
                    game.omega(role),
                    game.horizon,
                    AgentModel::Learned(DirichletLearner::uniform(game.q)?),
                    true,
                    cfg.tie_break,
                    plan.stream(Stream::Pretrain(role)),
                )
            };
            let dir = cfg.out_dir("pretrain");
            let paths = prepare_outputs(&dir, &["learner_a.txt", "learner_b.txt", "pretrain_log.csv"], cfg.force)?;
            let out = pretrain(game, warm(Role::A)?, warm(Role::B)?, *rounds)?;
            fs::write(&paths[0], out.learner_a.to_text())?;
            fs::write(&paths[1], out.learner_b.to_text())?;
            write_log_csv(&out.log, create(&paths[2])?)?;
            println!("pretrained for {rounds} rounds -> {}", dir.display());
        }
        Command::Validate => {
            let mut checks = oracle::dp_checks(&[3, 4, 5, 6], &[1, 2, 3], &[0.0, 0.5, 1.0], 5, cfg.game.seed);
            checks.extend(oracle::normalisation_checks());
            let mut all = true;
            for c in &checks {
                all &= c.passed;
                println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("{}/{} checks passed", checks.iter().filter(|c| c.passed).count(), checks.len());
            if !all {
                return Ok(Outcome::ValidationFailed);
            }
        }
    }
    Ok(Outcome::Ok)
}

/// Exit codes: 0 success, 1 failed validation, 2 bad configuration or usage.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ValidationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn flags_override_file() {
        let f = write_tmp("q = 10\nrounds = 20\n");
        let flags = Overrides {
            config: Some(f.path().to_path_buf()),
            q: Some(8),
            ..Overrides::default()
        };
        let cfg = CliConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.game.q, 8);
        assert_eq!(cfg.game.rounds, 20);
    }

    #[test]
    fn json_config() {
        let f = write_tmp(r#"{"omega_a": 0.25, "grid": [0.0, 0.5], "tie_break": "random"}"#);
        let cfg = load_config(f.path()).unwrap();
        assert_eq!(cfg.omega_a, Some(0.25));
        assert_eq!(cfg.grid, Some(vec![0.0, 0.5]));
        assert_eq!(cfg.tie_break, Some(TieBreak::Random));
    }

    #[test]
    fn invalid_weight_names_key() {
        let f = write_tmp("omega_a = 1.5\n");
        let flags = Overrides {
            config: Some(f.path().to_path_buf()),
            ..Overrides::default()
        };
        let err = CliConfig::resolve(&flags).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "omega_a"), "{err}");
    }

    #[test]
    fn bad_types_and_unknown_keys_name_key() {
        let f = write_tmp("q = \"ten\"\n");
        assert!(matches!(load_config(f.path()), Err(Error::Config { key, .. }) if key == "q"));
        let f = write_tmp("{\"colour\": 1}");
        assert!(matches!(load_config(f.path()), Err(Error::Config { key, .. }) if key == "colour"));
        let f = write_tmp("q = = 3");
        assert!(matches!(load_config(f.path()), Err(Error::Parse(_))));
    }

    #[test]
    fn empty_file_gives_defaults() {
        let f = write_tmp("");
        let flags = Overrides {
            config: Some(f.path().to_path_buf()),
            ..Overrides::default()
        };
        let cfg = CliConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.game, GameConfig::default());
        assert_eq!((cfg.game.q, cfg.game.rounds, cfg.game.horizon, cfg.game.initial_demand), (10, 60, 10, 3));
    }

    #[test]
    fn unknown_flags_exit_two() {
        assert_eq!(main_with_args(["ndg", "run", "--bogus"]), ExitCode::from(2));
        assert_eq!(main_with_args(["ndg", "run", "--omega-a", "2"]), ExitCode::from(2));
    }
}
