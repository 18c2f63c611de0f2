//! Finite-horizon planning against an opponent model.
//!
//! States and rules here are *agent-centric*: the first coordinate of a
//! [`JointState`] is the planning player's own previous demand and the
//! model predicts the other player's demand. A seat-A agent uses canonical
//! states directly; a seat-B agent mirrors both the state and the model.

use std::io::Write;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{reward_raw, Demand, JointState, Role};
use crate::opponent::{DemandModel, DirichletLearner};

/// Two action values closer than this are treated as tied.
pub const TIE_TOL: f64 = 1e-10;

/// How to choose among equally good demands.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    #[default]
    Smallest,
    /// Uniformly at random among tied demands, from the agent's own stream.
    Random,
}

impl std::str::FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smallest" => Ok(TieBreak::Smallest),
            "random" => Ok(TieBreak::Random),
            other => Err(Error::config("tie_break", format!("expected `smallest` or `random`, got `{other}`"))),
        }
    }
}

/// Optimal expected totals `V_k(s)` for `k = 0..=horizon` steps to go.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    q: u32,
    horizon: u32,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn stage(&self, k: u32) -> &[f64] {
        let n = JointState::count(self.q);
        let k = k as usize;
        &self.values[k * n..(k + 1) * n]
    }

    pub fn value(&self, k: u32, s: JointState) -> f64 {
        self.stage(k)[s.index(self.q)]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "stage,prev_a,prev_b,value")?;
        for k in 0..=self.horizon {
            for s in JointState::all(self.q) {
                writeln!(out, "{k},{},{},{}", s.prev_a, s.prev_b, self.value(k, s))?;
            }
        }
        Ok(())
    }
}

/// A deterministic rule mapping every state to a demand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionRule {
    q: u32,
    actions: Vec<Demand>,
}

impl DecisionRule {
    pub fn action(&self, s: JointState) -> Demand {
        self.actions[s.index(self.q)]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "prev_a,prev_b,action")?;
        for s in JointState::all(self.q) {
            writeln!(out, "{},{},{}", s.prev_a, s.prev_b, self.action(s))?;
        }
        Ok(())
    }
}

/// Solves the `h`-step problem by backward induction.
///
/// `V_0 = 0`, `Q_k(s,a) = Σ_b p(b|s)[R(a,b) + V_{k-1}(a,b)]`,
/// `V_k = max_a Q_k`. The returned rule is the greedy first-stage rule with
/// ties going to the smallest demand.
pub fn backward_induction(model: &DemandModel, omega: f64, h: u32) -> Result<(ValueTable, DecisionRule)> {
    let values = solve_values(model, omega, h)?;
    let rule = greedy_rule(model, &values, omega, h);
    Ok((values, rule))
}

/// The value recursion alone.
pub fn solve_values(model: &DemandModel, omega: f64, h: u32) -> Result<ValueTable> {
    if h < 1 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::domain(format!("weight {omega} outside [0, 1]")));
    }
    let err = model.max_normalisation_error();
    if !(err <= 1e-9) {
        return Err(Error::domain(format!("model rows are not normalised (max error {err:e})")));
    }
    let q = model.q();
    let n = q as usize - 1;
    let states = n * n;
    let mut values = vec![0.0; (h as usize + 1) * states];
    let mut continuation = vec![0.0; states];
    let rewards = reward_matrix(q, omega);
    for k in 1..=h as usize {
        let (done, rest) = values.split_at_mut(k * states);
        let prev = &done[(k - 1) * states..];
        // W(a,b) = R(a,b) + V_{k-1}((a,b)); the next state index is exactly a*n+b
        for (w, (r, v)) in continuation.iter_mut().zip(rewards.iter().zip(prev)) {
            *w = r + v;
        }
        for (si, out) in rest[..states].iter_mut().enumerate() {
            let row = model.row_at(si);
            let mut best = f64::NEG_INFINITY;
            for a in 0..n {
                let q_val = dot(row, &continuation[a * n..(a + 1) * n]);
                if q_val > best {
                    best = q_val;
                }
            }
            *out = best;
        }
    }
    Ok(ValueTable { q, horizon: h, values })
}

/// `Q_k(s, ·)` from a solved table, for `1 <= k <= horizon`.
pub fn action_values(model: &DemandModel, values: &ValueTable, omega: f64, k: u32, s: JointState) -> Vec<f64> {
    let q = values.q;
    let n = q as usize - 1;
    let prev = values.stage(k - 1);
    let row = model.row(s);
    (0..n)
        .map(|a| {
            row.iter()
                .enumerate()
                .map(|(b, p)| p * (reward_raw(a as u32 + 1, b as u32 + 1, omega, q) + prev[a * n + b]))
                .sum()
        })
        .collect()
}

/// Greedy rule for the stage with `k` steps to go, smallest demand on ties.
pub fn greedy_rule(model: &DemandModel, values: &ValueTable, omega: f64, k: u32) -> DecisionRule {
    let q = values.q;
    let actions = JointState::all(q)
        .map(|s| {
            let qs = action_values(model, values, omega, k, s);
            Demand::from_index(argmax_smallest(&qs))
        })
        .collect();
    DecisionRule { q, actions }
}

/// Index of the first entry within [`TIE_TOL`] of the maximum.
pub fn argmax_smallest(values: &[f64]) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|v| *v >= max - TIE_TOL).unwrap_or(0)
}

fn argmax_random(values: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] >= max - TIE_TOL).collect();
    *ties.choose(rng).unwrap_or(&0)
}

fn reward_matrix(q: u32, omega: f64) -> Vec<f64> {
    let n = q as usize - 1;
    let mut r = Vec::with_capacity(n * n);
    for a in 1..q {
        for b in 1..q {
            r.push(reward_raw(a, b, omega, q));
        }
    }
    r
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// What an MDP player believes about its opponent.
#[derive(Clone, Debug, PartialEq)]
pub enum AgentModel {
    /// Canonical table predicting the opponent's demand; never updated.
    Fixed(DemandModel),
    Learned(DirichletLearner),
}

impl AgentModel {
    fn q(&self) -> u32 {
        match self {
            AgentModel::Fixed(m) => m.q(),
            AgentModel::Learned(l) => l.q(),
        }
    }
}

#[derive(Clone, Debug)]
struct Plan {
    view: DemandModel,
    values: ValueTable,
    rule: DecisionRule,
}

/// A receding-horizon optimiser: every round it solves the `horizon`-step
/// problem under its current opponent model and plays the first action.
#[derive(Clone, Debug)]
pub struct MdpAgent {
    role: Role,
    omega: f64,
    horizon: u32,
    model: AgentModel,
    learning: bool,
    tie_break: TieBreak,
    rng: ChaCha8Rng,
    plan: Option<Plan>,
}

impl MdpAgent {
    pub fn new(
        role: Role,
        omega: f64,
        horizon: u32,
        model: AgentModel,
        learning: bool,
        tie_break: TieBreak,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if learning && !matches!(model, AgentModel::Learned(_)) {
            return Err(Error::domain("a learning agent needs a Dirichlet learner"));
        }
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::domain(format!("weight {omega} outside [0, 1]")));
        }
        if horizon < 1 {
            return Err(Error::domain("horizon must be at least 1"));
        }
        if model.q() < 2 {
            return Err(Error::domain("q must be at least 2"));
        }
        Ok(MdpAgent {
            role,
            omega,
            horizon,
            model,
            learning,
            tie_break,
            rng,
            plan: None,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn is_learning(&self) -> bool {
        self.learning
    }

    pub fn model(&self) -> &AgentModel {
        &self.model
    }

    pub fn learner(&self) -> Option<&DirichletLearner> {
        match &self.model {
            AgentModel::Learned(l) => Some(l),
            AgentModel::Fixed(_) => None,
        }
    }

    pub fn into_learner(self) -> Option<DirichletLearner> {
        match self.model {
            AgentModel::Learned(l) => Some(l),
            AgentModel::Fixed(_) => None,
        }
    }

    /// The agent-centric model the planner currently uses.
    pub fn current_view(&self) -> DemandModel {
        let canonical = match &self.model {
            AgentModel::Fixed(m) => m.clone(),
            AgentModel::Learned(l) => l.estimate_model(),
        };
        match self.role {
            Role::A => canonical,
            Role::B => canonical.mirrored(),
        }
    }

    fn plan(&mut self) -> &Plan {
        if self.plan.is_none() {
            let view = self.current_view();
            let (values, rule) =
                backward_induction(&view, self.omega, self.horizon).expect("agent invariants guarantee a valid problem");
            self.plan = Some(Plan { view, values, rule });
        }
        self.plan.as_ref().expect("plan was just computed")
    }

    /// Demand to play from canonical state `s`.
    pub fn act(&mut self, s: JointState) -> Demand {
        let local = self.role.agent_view(s);
        let (omega, horizon, tie_break) = (self.omega, self.horizon, self.tie_break);
        match tie_break {
            TieBreak::Smallest => self.plan().rule.action(local),
            TieBreak::Random => {
                let plan = self.plan();
                let qs = action_values(&plan.view, &plan.values, omega, horizon, local);
                Demand::from_index(argmax_random(&qs, &mut self.rng))
            }
        }
    }

    /// Feeds back the opponent's demand played from canonical state `s`.
    pub fn observe(&mut self, s: JointState, opponent_demand: Demand) {
        if !self.learning {
            return;
        }
        if let AgentModel::Learned(l) = &mut self.model {
            l.update(s, opponent_demand);
            self.plan = None;
        }
    }
}
