//! The five standard bargaining experiments and the grid sweeps behind them.
//!
//! A sweep plays one game per (grid cell, replication). Replication `r`
//! always uses the seed derived from `(master seed, r)`, so every cell of a
//! sweep (and every test) sees the same family of random streams.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{pretrain, run_game, Agent, HeuristicAgent, RngPlan, Stream};
use crate::error::{Error, Result};
use crate::game::{GameConfig, GameLog, Role};
use crate::opponent::{make_prior, DemandModel, DirichletLearner, HeuristicModel, PriorKind};
use crate::planner::{AgentModel, MdpAgent, TieBreak};

/// Opponent model an MDP player starts from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Uniform,
    /// Heuristic-shaped, with the given kernel width.
    Heuristic { sigma: f64 },
    /// Learned during a warm-up game of `rounds` played rounds.
    Pretrained { rounds: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AgentSpec {
    Heuristic { sigma: f64 },
    Mdp { model: ModelSpec, learning: bool },
}

impl AgentSpec {
    fn pretraining_rounds(&self) -> Option<u32> {
        match self {
            AgentSpec::Mdp {
                model: ModelSpec::Pretrained { rounds },
                ..
            } => Some(*rounds),
            _ => None,
        }
    }
}

/// A complete experiment: who plays, over which weights, how often.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSpec {
    pub id: u8,
    pub agent_a: AgentSpec,
    pub agent_b: AgentSpec,
    pub omega_grid_a: Vec<f64>,
    /// `None` for sweeps over A's weight only; B keeps `base.omega_b`.
    pub omega_grid_b: Option<Vec<f64>>,
    pub replications: u32,
    pub base: GameConfig,
    pub tie_break: TieBreak,
}

/// `0.0, 0.1, …, 1.0`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|k| f64::from(k) / 10.0).collect()
}

/// Parses `start:stop:step` or a comma-separated list of weights.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |reason: String| Error::config("grid", reason);
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| bad(format!("`{t}`: {e}")));
    let grid = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step".into()));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(bad("need step > 0 and stop >= start".into()));
        }
        let n = ((stop - start) / step + 1e-9).floor() as u32;
        (0..=n)
            .map(|i| {
                let x = start + f64::from(i) * step;
                (x * 1e10).round() / 1e10
            })
            .collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if grid.is_empty() {
        return Err(bad("empty grid".into()));
    }
    if let Some(w) = grid.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(bad(format!("weight {w} outside [0, 1]")));
    }
    Ok(grid)
}

impl TestSpec {
    /// The standard configuration of test `id` (1 to 5).
    pub fn standard(id: u8, base: GameConfig, replications: u32) -> Result<Self> {
        let mdp = |model, learning| AgentSpec::Mdp { model, learning };
        let (agent_a, agent_b, two_d) = match id {
            1 => (mdp(ModelSpec::Heuristic { sigma: 3.0 }, false), AgentSpec::Heuristic { sigma: 1.0 }, false),
            2 => (mdp(ModelSpec::Uniform, true), AgentSpec::Heuristic { sigma: 1.0 }, false),
            3 => (mdp(ModelSpec::Uniform, false), mdp(ModelSpec::Uniform, false), true),
            4 => (mdp(ModelSpec::Uniform, true), mdp(ModelSpec::Uniform, true), true),
            5 => (
                mdp(ModelSpec::Pretrained { rounds: 30 }, true),
                mdp(ModelSpec::Pretrained { rounds: 30 }, true),
                true,
            ),
            other => return Err(Error::config("id", format!("tests are numbered 1 to 5, got {other}"))),
        };
        let spec = TestSpec {
            id,
            agent_a,
            agent_b,
            omega_grid_a: default_grid(),
            omega_grid_b: two_d.then(default_grid),
            replications,
            base,
            tie_break: TieBreak::Smallest,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.replications < 1 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        let grids = std::iter::once(&self.omega_grid_a).chain(self.omega_grid_b.as_ref());
        for grid in grids {
            if grid.is_empty() {
                return Err(Error::config("grid", "empty grid"));
            }
            if let Some(w) = grid.iter().find(|w| !(0.0..=1.0).contains(*w)) {
                return Err(Error::config("grid", format!("weight {w} outside [0, 1]")));
            }
        }
        for (key, spec) in [("agent_a", &self.agent_a), ("agent_b", &self.agent_b)] {
            match spec {
                AgentSpec::Heuristic { sigma } | AgentSpec::Mdp { model: ModelSpec::Heuristic { sigma }, .. } => {
                    if !(sigma.is_finite() && *sigma > 0.0) {
                        return Err(Error::config(key, format!("sigma must be positive, got {sigma}")));
                    }
                }
                _ => {}
            }
        }
        match (self.agent_a.pretraining_rounds(), self.agent_b.pretraining_rounds()) {
            (None, None) => {}
            (Some(x), Some(y)) if x == y => {}
            _ => {
                return Err(Error::config(
                    "agent_b",
                    "pretrained priors need both players to be MDP players pretrained for the same number of rounds",
                ))
            }
        }
        Ok(())
    }

    /// Every `(omega_a, omega_b)` pair, A's weight varying slowest.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        match &self.omega_grid_b {
            None => self.omega_grid_a.iter().map(|&a| (a, self.base.omega_b)).collect(),
            Some(grid_b) => self
                .omega_grid_a
                .iter()
                .flat_map(|&a| grid_b.iter().map(move |&b| (a, b)))
                .collect(),
        }
    }

    /// Plays one game at the given weights with the given seed.
    pub fn play(&self, omega_a: f64, omega_b: f64, seed: u64) -> Result<GameLog> {
        let config = GameConfig {
            omega_a,
            omega_b,
            seed,
            ..self.base.clone()
        };
        config.validate()?;
        let plan = RngPlan::new(seed);
        let (prior_a, prior_b) = match self.agent_a.pretraining_rounds() {
            Some(rounds) => {
                let warm = |role: Role| -> Result<MdpAgent> {
                    MdpAgent::new(
                        role,
                        config.omega(role),
                        config.horizon,
                        AgentModel::Learned(DirichletLearner::uniform(config.q)?),
                        true,
                        self.tie_break,
                        plan.stream(Stream::Pretrain(role)),
                    )
                };
                let out = pretrain(&config, warm(Role::A)?, warm(Role::B)?, rounds)?;
                (Some(out.learner_a), Some(out.learner_b))
            }
            None => (None, None),
        };
        let mut a = self.build(&config, Role::A, &self.agent_a, prior_a, &plan)?;
        let mut b = self.build(&config, Role::B, &self.agent_b, prior_b, &plan)?;
        run_game(&config, a.as_mut(), b.as_mut())
    }

    fn build(
        &self,
        config: &GameConfig,
        role: Role,
        spec: &AgentSpec,
        pretrained: Option<DirichletLearner>,
        plan: &RngPlan,
    ) -> Result<Box<dyn Agent>> {
        let q = config.q;
        let rng = plan.stream(Stream::Play(role));
        let opponent = role.other();
        match *spec {
            AgentSpec::Heuristic { sigma } => Ok(Box::new(HeuristicAgent::new(HeuristicModel::new(sigma, q)?, role, rng))),
            AgentSpec::Mdp { model, learning } => {
                let model = match (model, learning) {
                    (ModelSpec::Uniform, false) => AgentModel::Fixed(DemandModel::uniform(q)?),
                    (ModelSpec::Uniform, true) => AgentModel::Learned(make_prior(PriorKind::Uniform, q)?),
                    (ModelSpec::Heuristic { sigma }, false) => {
                        AgentModel::Fixed(DemandModel::heuristic(&HeuristicModel::new(sigma, q)?, opponent)?)
                    }
                    (ModelSpec::Heuristic { sigma }, true) => AgentModel::Learned(make_prior(
                        PriorKind::Heuristic {
                            sigma,
                            modeled: opponent,
                        },
                        q,
                    )?),
                    (ModelSpec::Pretrained { .. }, _) => AgentModel::Learned(
                        pretrained.ok_or_else(|| Error::domain("pretrained prior was not produced"))?,
                    ),
                };
                let agent = MdpAgent::new(role, config.omega(role), config.horizon, model, learning, self.tie_break, rng)?;
                Ok(Box::new(agent))
            }
        }
    }
}

/// Seed of replication `r` under `master` (SplitMix64 finaliser).
pub fn replication_seed(master: u64, r: u32) -> u64 {
    let mut z = master.wrapping_add(u64::from(r).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Integer outcome of one game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub profit_a: u64,
    pub profit_b: u64,
    pub compatible_rounds: u32,
    pub rounds: u32,
}

impl RunOutcome {
    pub fn of(log: &GameLog) -> Self {
        RunOutcome {
            seed: log.config.seed,
            profit_a: log.cum_profit_a,
            profit_b: log.cum_profit_b,
            compatible_rounds: log.records.iter().filter(|r| r.compatible).count() as u32,
            rounds: log.records.len() as u32,
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            profit_a: self.profit_a as f64,
            profit_b: self.profit_b as f64,
            total: (self.profit_a + self.profit_b) as f64,
            success_rate_pct: 100.0 * f64::from(self.compatible_rounds) / f64::from(self.rounds),
        }
    }
}

/// The four reported quantities, as one table row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub profit_a: f64,
    pub profit_b: f64,
    pub total: f64,
    pub success_rate_pct: f64,
}

impl Metrics {
    fn zip(self, other: Metrics, f: impl Fn(f64, f64) -> f64) -> Metrics {
        Metrics {
            profit_a: f(self.profit_a, other.profit_a),
            profit_b: f(self.profit_b, other.profit_b),
            total: f(self.total, other.total),
            success_rate_pct: f(self.success_rate_pct, other.success_rate_pct),
        }
    }

    fn values(&self) -> [f64; 4] {
        [self.profit_a, self.profit_b, self.total, self.success_rate_pct]
    }
}

/// All replications played at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub omega_a: f64,
    pub omega_b: f64,
    pub runs: Vec<RunOutcome>,
}

impl CellResult {
    /// Replication average, computed from integer totals so the result does
    /// not depend on replication order.
    pub fn mean(&self) -> Metrics {
        let n = self.runs.len() as f64;
        let pa: u64 = self.runs.iter().map(|r| r.profit_a).sum();
        let pb: u64 = self.runs.iter().map(|r| r.profit_b).sum();
        let ok: u64 = self.runs.iter().map(|r| u64::from(r.compatible_rounds)).sum();
        let rounds: u64 = self.runs.iter().map(|r| u64::from(r.rounds)).sum();
        Metrics {
            profit_a: pa as f64 / n,
            profit_b: pb as f64 / n,
            total: (pa + pb) as f64 / n,
            success_rate_pct: 100.0 * ok as f64 / rounds as f64,
        }
    }

    pub fn min(&self) -> Metrics {
        self.fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> Metrics {
        self.fold(f64::NEG_INFINITY, f64::max)
    }

    fn fold(&self, init: f64, f: fn(f64, f64) -> f64) -> Metrics {
        let start = Metrics {
            profit_a: init,
            profit_b: init,
            total: init,
            success_rate_pct: init,
        };
        self.runs.iter().map(RunOutcome::metrics).fold(start, |acc, m| acc.zip(m, f))
    }
}

/// Min / mean / max rows over the grid, each column reduced on its own.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub min: Metrics,
    pub mean: Metrics,
    pub max: Metrics,
}

/// Reduces replication-averaged cells to the three table rows. The total
/// column is reduced independently, so `min.total` need not equal
/// `min.profit_a + min.profit_b`.
pub fn aggregate(cells: &[CellResult]) -> Result<TableSummary> {
    if cells.is_empty() {
        return Err(Error::domain("nothing to aggregate"));
    }
    if cells.iter().any(|c| c.runs.is_empty()) {
        return Err(Error::domain("cell without runs"));
    }
    let means: Vec<Metrics> = cells.iter().map(CellResult::mean).collect();
    let first = means[0];
    let min = means.iter().fold(first, |acc, m| acc.zip(*m, f64::min));
    let max = means.iter().fold(first, |acc, m| acc.zip(*m, f64::max));
    let sum = means[1..].iter().fold(first, |acc, m| acc.zip(*m, |x, y| x + y));
    let n = means.len() as f64;
    let mean = sum.zip(sum, |x, _| x / n);
    Ok(TableSummary { min, mean, max })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub test_id: u8,
    pub cells: Vec<CellResult>,
    pub table: TableSummary,
}

impl SweepSummary {
    /// For each replication, the metrics averaged over the whole grid.
    pub fn replication_means(&self) -> Vec<Metrics> {
        let reps = self.cells.first().map_or(0, |c| c.runs.len());
        (0..reps)
            .map(|r| {
                let single: Vec<CellResult> = self
                    .cells
                    .iter()
                    .map(|c| CellResult {
                        omega_a: c.omega_a,
                        omega_b: c.omega_b,
                        runs: vec![c.runs[r]],
                    })
                    .collect();
                aggregate(&single).expect("non-empty grid").mean
            })
            .collect()
    }

    pub fn write_cells_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.cells {
            let (mean, min, max) = (c.mean(), c.min(), c.max());
            w.serialize(CellRow {
                omega_a: c.omega_a,
                omega_b: c.omega_b,
                replications: c.runs.len() as u32,
                profit_a_mean: mean.profit_a,
                profit_a_min: min.profit_a,
                profit_a_max: max.profit_a,
                profit_b_mean: mean.profit_b,
                profit_b_min: min.profit_b,
                profit_b_max: max.profit_b,
                total_mean: mean.total,
                total_min: min.total,
                total_max: max.total,
                success_rate_pct_mean: mean.success_rate_pct,
                success_rate_pct_min: min.success_rate_pct,
                success_rate_pct_max: max.success_rate_pct,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// The table with two decimals, one row each for min, mean and max.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "row,profit_a,profit_b,total,success_rate_pct")?;
        for (label, m) in [("min", self.table.min), ("mean", self.table.mean), ("max", self.table.max)] {
            let [a, b, t, s] = m.values();
            writeln!(out, "{label},{a:.2},{b:.2},{t:.2},{s:.2}")?;
        }
        Ok(())
    }
}

/// One line of `test<k>_cells.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub omega_a: f64,
    pub omega_b: f64,
    pub replications: u32,
    pub profit_a_mean: f64,
    pub profit_a_min: f64,
    pub profit_a_max: f64,
    pub profit_b_mean: f64,
    pub profit_b_min: f64,
    pub profit_b_max: f64,
    pub total_mean: f64,
    pub total_min: f64,
    pub total_max: f64,
    pub success_rate_pct_mean: f64,
    pub success_rate_pct_min: f64,
    pub success_rate_pct_max: f64,
}

pub fn read_cells_csv<R: Read>(input: R) -> Result<Vec<CellRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Parses a summary file back into its three rows.
pub fn read_summary_csv<R: Read>(input: R) -> Result<TableSummary> {
    #[derive(Deserialize)]
    struct Row {
        row: String,
        profit_a: f64,
        profit_b: f64,
        total: f64,
        success_rate_pct: f64,
    }
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = std::collections::HashMap::new();
    for r in rdr.deserialize::<Row>() {
        let r = r?;
        rows.insert(
            r.row.clone(),
            Metrics {
                profit_a: r.profit_a,
                profit_b: r.profit_b,
                total: r.total,
                success_rate_pct: r.success_rate_pct,
            },
        );
    }
    let take = |k: &str| rows.get(k).copied().ok_or_else(|| Error::Parse(format!("summary lacks a `{k}` row")));
    Ok(TableSummary {
        min: take("min")?,
        mean: take("mean")?,
        max: take("max")?,
    })
}

/// Runs every cell and replication of `spec` on the current rayon pool.
pub fn run_test(spec: &TestSpec) -> Result<SweepSummary> {
    spec.validate()?;
    let cells = spec.cells();
    let reps = spec.replications;
    let work: Vec<(usize, u32)> = (0..cells.len()).flat_map(|c| (0..reps).map(move |r| (c, r))).collect();
    let outcomes: Vec<RunOutcome> = work
        .par_iter()
        .map(|&(c, r)| {
            let (wa, wb) = cells[c];
            spec.play(wa, wb, replication_seed(spec.base.seed, r)).map(|log| RunOutcome::of(&log))
        })
        .collect::<Result<_>>()?;
    let cell_results: Vec<CellResult> = cells
        .iter()
        .zip(outcomes.chunks(reps as usize))
        .map(|(&(omega_a, omega_b), runs)| CellResult {
            omega_a,
            omega_b,
            runs: runs.to_vec(),
        })
        .collect();
    let table = aggregate(&cell_results)?;
    Ok(SweepSummary {
        test_id: spec.id,
        cells: cell_results,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(pa: u64, pb: u64, ok: u32) -> RunOutcome {
        RunOutcome {
            seed: 0,
            profit_a: pa,
            profit_b: pb,
            compatible_rounds: ok,
            rounds: 60,
        }
    }

    fn cell(runs: Vec<RunOutcome>) -> CellResult {
        CellResult {
            omega_a: 0.0,
            omega_b: 0.0,
            runs,
        }
    }

    #[test]
    fn grid_sizes() {
        let base = GameConfig::default();
        assert_eq!(TestSpec::standard(1, base.clone(), 1).unwrap().cells().len(), 11);
        assert_eq!(TestSpec::standard(2, base.clone(), 1).unwrap().cells().len(), 11);
        for id in 3..=5 {
            assert_eq!(TestSpec::standard(id, base.clone(), 1).unwrap().cells().len(), 121);
        }
        assert!(TestSpec::standard(6, base, 1).is_err());
    }

    #[test]
    fn parse_grid_forms() {
        assert_eq!(parse_grid("0:1:0.1").unwrap(), default_grid());
        assert_eq!(parse_grid("0,0.5,1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0.2:0.2:0.1").unwrap(), vec![0.2]);
        assert!(parse_grid("0:2:0.5").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn aggregate_single_cell() {
        let t = aggregate(&[cell(vec![outcome(100, 200, 45)])]).unwrap();
        assert_eq!(t.min, t.mean);
        assert_eq!(t.max, t.mean);
        assert_eq!(t.mean.success_rate_pct, 75.0);
    }

    #[test]
    fn aggregate_rows_are_independent() {
        let t = aggregate(&[cell(vec![outcome(100, 200, 60)]), cell(vec![outcome(150, 120, 60)])]).unwrap();
        assert_eq!(t.min.total, 270.0);
        assert_eq!(t.min.profit_a + t.min.profit_b, 220.0);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn replication_order_does_not_matter() {
        let runs = vec![outcome(101, 99, 31), outcome(7, 300, 59), outcome(250, 250, 44), outcome(1, 2, 3)];
        let mut reversed = runs.clone();
        reversed.reverse();
        assert_eq!(cell(runs).mean(), cell(reversed).mean());
    }

    #[test]
    fn invalid_spec_rejected_before_play() {
        let mut spec = TestSpec::standard(5, GameConfig::default(), 1).unwrap();
        spec.agent_b = AgentSpec::Heuristic { sigma: 1.0 };
        assert!(matches!(run_test(&spec), Err(Error::Config { .. })));
        let mut spec = TestSpec::standard(1, GameConfig::default(), 1).unwrap();
        spec.replications = 0;
        assert!(run_test(&spec).is_err());
        spec.replications = 1;
        spec.omega_grid_a = vec![1.5];
        assert!(run_test(&spec).is_err());
    }

    #[test]
    fn replication_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..100).map(|r| replication_seed(7, r)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
