//! The round loop of a single repeated game.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{success_pct, Demand, GameConfig, GameLog, JointState, Role, RoundRecord};
use crate::opponent::{DirichletLearner, HeuristicModel};
use crate::planner::MdpAgent;

/// A player: picks a demand from the last joint state, then sees what the
/// other player demanded.
pub trait Agent {
    fn role(&self) -> Role;

    fn act(&mut self, s: JointState) -> Demand;

    fn observe(&mut self, s: JointState, opponent_demand: Demand);
}

impl Agent for MdpAgent {
    fn role(&self) -> Role {
        MdpAgent::role(self)
    }

    fn act(&mut self, s: JointState) -> Demand {
        MdpAgent::act(self, s)
    }

    fn observe(&mut self, s: JointState, opponent_demand: Demand) {
        MdpAgent::observe(self, s, opponent_demand)
    }
}

/// Non-optimising, non-learning player that samples from its own heuristic.
#[derive(Clone, Debug)]
pub struct HeuristicAgent {
    model: HeuristicModel,
    role: Role,
    rng: ChaCha8Rng,
}

impl HeuristicAgent {
    pub fn new(model: HeuristicModel, role: Role, rng: ChaCha8Rng) -> Self {
        HeuristicAgent { model, role, rng }
    }
}

impl Agent for HeuristicAgent {
    fn role(&self) -> Role {
        self.role
    }

    fn act(&mut self, s: JointState) -> Demand {
        self.model.sample(s, self.role, &mut self.rng)
    }

    fn observe(&mut self, _s: JointState, _opponent_demand: Demand) {}
}

/// Stream identifiers handed out by [`RngPlan`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Play(Role),
    Pretrain(Role),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Play(Role::A) => 0,
            Stream::Play(Role::B) => 1,
            Stream::Pretrain(Role::A) => 2,
            Stream::Pretrain(Role::B) => 3,
        }
    }
}

/// Derives independent, reproducible generators from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngPlan {
    master_seed: u64,
}

impl RngPlan {
    pub fn new(master_seed: u64) -> Self {
        RngPlan { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(stream.id());
        rng
    }
}

/// Which player is asked for its demand first. Demands are simultaneous,
/// so the choice must not change the outcome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MoveOrder {
    #[default]
    AFirst,
    BFirst,
}

pub fn run_game(config: &GameConfig, agent_a: &mut dyn Agent, agent_b: &mut dyn Agent) -> Result<GameLog> {
    run_game_ordered(config, agent_a, agent_b, MoveOrder::AFirst)
}

/// Plays `config.rounds` rounds. Round 1 is the preset opening
/// `(initial_demand, initial_demand)`; every later round both players act on
/// the previous round's demands, are paid, and observe each other.
pub fn run_game_ordered(
    config: &GameConfig,
    agent_a: &mut dyn Agent,
    agent_b: &mut dyn Agent,
    order: MoveOrder,
) -> Result<GameLog> {
    config.validate()?;
    if agent_a.role() != Role::A || agent_b.role() != Role::B {
        return Err(Error::domain("agents must occupy seats A and B respectively"));
    }
    let opening = config.initial_state()?;
    let mut records = Vec::with_capacity(config.rounds as usize);
    records.push(RoundRecord::settle(1, opening.prev_a, opening.prev_b, config)?);
    let mut state = opening;
    for t in 2..=config.rounds {
        let (da, db) = match order {
            MoveOrder::AFirst => {
                let da = agent_a.act(state);
                (da, agent_b.act(state))
            }
            MoveOrder::BFirst => {
                let db = agent_b.act(state);
                (agent_a.act(state), db)
            }
        };
        let record = RoundRecord::settle(t, da, db, config)?;
        agent_a.observe(state, db);
        agent_b.observe(state, da);
        state = record.state_after();
        records.push(record);
    }
    Ok(GameLog::from_records(config.clone(), records))
}

/// Learners produced by a warm-up game.
#[derive(Clone, Debug)]
pub struct Pretrained {
    pub learner_a: DirichletLearner,
    pub learner_b: DirichletLearner,
    /// The warm-up game: the preset opening plus `n_rounds` played rounds.
    pub log: GameLog,
}

/// Plays `n_rounds` learning rounds after the preset opening and returns
/// the two learners for use as priors. The warm-up never counts towards the
/// evaluated game.
pub fn pretrain(config: &GameConfig, mut agent_a: MdpAgent, mut agent_b: MdpAgent, n_rounds: u32) -> Result<Pretrained> {
    if !agent_a.is_learning() || !agent_b.is_learning() {
        return Err(Error::domain("pretraining requires two learning agents"));
    }
    let warmup = GameConfig {
        rounds: n_rounds + 1,
        ..config.clone()
    };
    let log = run_game(&warmup, &mut agent_a, &mut agent_b)?;
    let learner_a = agent_a.into_learner().expect("learning agents hold learners");
    let learner_b = agent_b.into_learner().expect("learning agents hold learners");
    Ok(Pretrained { learner_a, learner_b, log })
}

/// Percentage of rounds with compatible demands.
pub fn success_rate(log: &GameLog) -> Result<f64> {
    if log.records.is_empty() {
        return Err(Error::domain("success rate of an empty game"));
    }
    Ok(success_pct(&log.records))
}

pub fn write_log_csv<W: Write>(log: &GameLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &log.records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log_csv<R: Read>(input: R) -> Result<Vec<RoundRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut records = Vec::new();
    for row in rdr.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

/// One-line outcome of a game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSummary {
    pub omega_a: f64,
    pub omega_b: f64,
    pub seed: u64,
    pub cum_profit_a: u64,
    pub cum_profit_b: u64,
    pub total: u64,
    pub success_rate_pct: f64,
}

impl GameSummary {
    pub fn of(log: &GameLog) -> Self {
        GameSummary {
            omega_a: log.config.omega_a,
            omega_b: log.config.omega_b,
            seed: log.config.seed,
            cum_profit_a: log.cum_profit_a,
            cum_profit_b: log.cum_profit_b,
            total: log.total_profit(),
            success_rate_pct: log.success_rate_pct,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "omega_a,omega_b,seed,cum_profit_a,cum_profit_b,total,success_rate_pct")?;
        writeln!(
            out,
            "{:.2},{:.2},{},{},{},{},{:.2}",
            self.omega_a, self.omega_b, self.seed, self.cum_profit_a, self.cum_profit_b, self.total, self.success_rate_pct
        )?;
        Ok(())
    }
}
