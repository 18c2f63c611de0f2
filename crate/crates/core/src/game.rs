//! Domain types and the per-round mathematics of the repeated Nash demand game.
//!
//! Two players simultaneously claim an integer share of `q`. Both claims are
//! paid iff they sum to at most `q`; otherwise both get nothing. The reward
//! of an optimising player mixes its own profit with a penalty on the part of
//! `q` that the pair of demands leaves unclaimed (or overshoots).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Run-level settings shared by both players.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    /// Amount split in every round (money units).
    pub q: u32,
    /// Number of rounds, counting the preset opening round.
    pub rounds: u32,
    /// Planning horizon of the MDP players.
    pub horizon: u32,
    /// Demand both players are preset to in the opening round.
    pub initial_demand: u32,
    pub omega_a: f64,
    pub omega_b: f64,
    pub seed: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            q: 10,
            rounds: 60,
            horizon: 10,
            initial_demand: 3,
            omega_a: 0.0,
            omega_b: 0.0,
            seed: 0,
        }
    }
}

impl GameConfig {
    /// Checks every invariant, naming the first offending key.
    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::config("q", format!("must be at least 2, got {}", self.q)));
        }
        if self.rounds < 1 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        if self.horizon < 1 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.initial_demand < 1 || self.initial_demand > self.q - 1 {
            return Err(Error::config(
                "initial_demand",
                format!("must lie in 1..={}, got {}", self.q - 1, self.initial_demand),
            ));
        }
        check_omega("omega_a", self.omega_a)?;
        check_omega("omega_b", self.omega_b)?;
        Ok(())
    }

    pub fn initial_state(&self) -> Result<JointState> {
        let d = Demand::new(self.initial_demand, self.q)?;
        Ok(JointState::new(d, d))
    }

    pub fn omega(&self, role: Role) -> f64 {
        match role {
            Role::A => self.omega_a,
            Role::B => self.omega_b,
        }
    }
}

fn check_omega(key: &str, omega: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::config(key, format!("must lie in [0, 1], got {omega}")));
    }
    Ok(())
}

/// A claim on the shared amount, always in `1..=q-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Demand(u32);

impl Demand {
    pub fn new(value: u32, q: u32) -> Result<Self> {
        if q < 2 || value < 1 || value > q - 1 {
            return Err(Error::domain(format!("demand {value} outside 1..={}", q.saturating_sub(1))));
        }
        Ok(Demand(value))
    }

    pub fn value(self) -> u32 {
        self.0
    }

    /// Zero-based position in the action set.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub(crate) fn from_index(i: usize) -> Self {
        Demand(i as u32 + 1)
    }

    /// Every admissible demand for `q`, ascending.
    pub fn all(q: u32) -> impl Iterator<Item = Demand> {
        (1..q).map(Demand)
    }

    fn check(self, q: u32) -> Result<()> {
        if self.0 < 1 || self.0 >= q {
            return Err(Error::domain(format!("demand {} outside 1..={}", self.0, q.saturating_sub(1))));
        }
        Ok(())
    }
}

impl fmt::Display for Demand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Which seat a player occupies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    A,
    B,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::A => Role::B,
            Role::B => Role::A,
        }
    }

    /// The player's own previous demand in `s`.
    pub fn own(self, s: JointState) -> Demand {
        match self {
            Role::A => s.prev_a,
            Role::B => s.prev_b,
        }
    }

    pub fn opp(self, s: JointState) -> Demand {
        self.other().own(s)
    }

    /// Re-expresses `s` with this player's demand in the first slot.
    pub fn agent_view(self, s: JointState) -> JointState {
        match self {
            Role::A => s,
            Role::B => s.mirrored(),
        }
    }
}

/// The pair of demands played in the previous round; the state both
/// players condition on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointState {
    pub prev_a: Demand,
    pub prev_b: Demand,
}

impl JointState {
    pub fn new(prev_a: Demand, prev_b: Demand) -> Self {
        JointState { prev_a, prev_b }
    }

    pub fn from_values(prev_a: u32, prev_b: u32, q: u32) -> Result<Self> {
        Ok(JointState::new(Demand::new(prev_a, q)?, Demand::new(prev_b, q)?))
    }

    pub fn mirrored(self) -> Self {
        JointState::new(self.prev_b, self.prev_a)
    }

    /// Row-major position among the `(q-1)^2` states.
    pub fn index(self, q: u32) -> usize {
        self.prev_a.index() * (q as usize - 1) + self.prev_b.index()
    }

    pub fn from_index(i: usize, q: u32) -> Self {
        let n = q as usize - 1;
        JointState::new(Demand::from_index(i / n), Demand::from_index(i % n))
    }

    pub fn count(q: u32) -> usize {
        let n = q as usize - 1;
        n * n
    }

    pub fn all(q: u32) -> impl Iterator<Item = JointState> {
        (0..Self::count(q)).map(move |i| Self::from_index(i, q))
    }

    pub fn check(self, q: u32) -> Result<()> {
        self.prev_a.check(q)?;
        self.prev_b.check(q)
    }
}

/// 1 iff the two demands can both be paid out of `q`.
pub fn chi(a: Demand, b: Demand, q: u32) -> Result<u32> {
    a.check(q)?;
    b.check(q)?;
    Ok(chi_raw(a.value(), b.value(), q))
}

/// Profit of the player demanding `a` against a demand of `b`.
pub fn profit(a: Demand, b: Demand, q: u32) -> Result<u32> {
    Ok(a.value() * chi(a, b, q)?)
}

/// Reward of the player demanding `a` against `b`:
/// `a(1-ω)χ(a,b) - ω|q-(a+b)|`.
pub fn reward(a: Demand, b: Demand, omega: f64, q: u32) -> Result<f64> {
    a.check(q)?;
    b.check(q)?;
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::domain(format!("weight {omega} outside [0, 1]")));
    }
    Ok(reward_raw(a.value(), b.value(), omega, q))
}

#[inline]
pub(crate) fn chi_raw(a: u32, b: u32, q: u32) -> u32 {
    u32::from(a + b <= q)
}

#[inline]
pub(crate) fn reward_raw(a: u32, b: u32, omega: f64, q: u32) -> f64 {
    let economic = f64::from(a * chi_raw(a, b, q)) * (1.0 - omega);
    let gap = (i64::from(q) - i64::from(a) - i64::from(b)).unsigned_abs() as f64;
    economic - omega * gap
}

/// One played round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    #[serde(rename = "round")]
    pub t: u32,
    pub demand_a: Demand,
    pub demand_b: Demand,
    pub compatible: bool,
    pub profit_a: u32,
    pub profit_b: u32,
    pub reward_a: f64,
    pub reward_b: f64,
    /// `q - a - b` when compatible, the whole `q` otherwise.
    pub unclaimed: u32,
}

impl RoundRecord {
    pub fn settle(t: u32, demand_a: Demand, demand_b: Demand, config: &GameConfig) -> Result<Self> {
        let q = config.q;
        let compatible = chi(demand_a, demand_b, q)? == 1;
        let profit_a = profit(demand_a, demand_b, q)?;
        let profit_b = profit(demand_b, demand_a, q)?;
        Ok(RoundRecord {
            t,
            demand_a,
            demand_b,
            compatible,
            profit_a,
            profit_b,
            reward_a: reward(demand_a, demand_b, config.omega_a, q)?,
            reward_b: reward(demand_b, demand_a, config.omega_b, q)?,
            unclaimed: if compatible { q - demand_a.value() - demand_b.value() } else { q },
        })
    }

    pub fn state_after(&self) -> JointState {
        JointState::new(self.demand_a, self.demand_b)
    }
}

/// Full record of one game.
#[derive(Clone, Debug, PartialEq)]
pub struct GameLog {
    pub config: GameConfig,
    pub records: Vec<RoundRecord>,
    pub cum_profit_a: u64,
    pub cum_profit_b: u64,
    pub success_rate_pct: f64,
}

impl GameLog {
    pub fn from_records(config: GameConfig, records: Vec<RoundRecord>) -> Self {
        let cum_profit_a = records.iter().map(|r| u64::from(r.profit_a)).sum();
        let cum_profit_b = records.iter().map(|r| u64::from(r.profit_b)).sum();
        let success_rate_pct = success_pct(&records);
        GameLog {
            config,
            records,
            cum_profit_a,
            cum_profit_b,
            success_rate_pct,
        }
    }

    pub fn total_profit(&self) -> u64 {
        self.cum_profit_a + self.cum_profit_b
    }

    /// `(context, opponent demand)` pairs as seen by `observer`: the state
    /// each round was played from, and what the other player then demanded.
    pub fn observations(&self, observer: Role) -> impl Iterator<Item = (JointState, Demand)> + '_ {
        self.records.windows(2).map(move |w| {
            let s = w[0].state_after();
            let opp = match observer {
                Role::A => w[1].demand_b,
                Role::B => w[1].demand_a,
            };
            (s, opp)
        })
    }
}

pub(crate) fn success_pct(records: &[RoundRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let ok = records.iter().filter(|r| r.compatible).count();
    100.0 * ok as f64 / records.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: u32) -> Demand {
        Demand::new(v, 10).unwrap()
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi(d(5), d(5), 10).unwrap(), 1);
        assert_eq!(chi(d(6), d(6), 10).unwrap(), 0);
        assert_eq!(chi(d(1), d(9), 10).unwrap(), 1);
    }

    #[test]
    fn profit_examples() {
        assert_eq!(profit(d(5), d(5), 10).unwrap(), 5);
        assert_eq!(profit(d(6), d(6), 10).unwrap(), 0);
        assert_eq!(profit(d(9), d(1), 10).unwrap(), 9);
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward(d(5), d(5), 0.0, 10).unwrap(), 5.0);
        assert_eq!(reward(d(5), d(5), 1.0, 10).unwrap(), 0.0);
        assert_eq!(reward(d(6), d(6), 0.5, 10).unwrap(), -1.0);
        assert_eq!(reward(d(4), d(4), 0.5, 10).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors() {
        assert!(Demand::new(0, 10).is_err());
        assert!(Demand::new(10, 10).is_err());
        // a demand valid for q=10 is not valid for q=5
        assert!(chi(d(7), d(1), 5).is_err());
        assert!(reward(d(1), d(1), 1.5, 10).is_err());
        assert!(reward(d(1), d(1), -0.1, 10).is_err());
    }

    #[test]
    fn chi_is_symmetric() {
        for q in 2..=12 {
            for a in Demand::all(q) {
                for b in Demand::all(q) {
                    assert_eq!(chi(a, b, q).unwrap(), chi(b, a, q).unwrap());
                }
            }
        }
    }

    #[test]
    fn reward_bounds_by_enumeration() {
        // q = 2 has a single joint action, so the lower bound is not attained there
        for q in 3..=12u32 {
            for k in 0..=10 {
                let omega = f64::from(k) / 10.0;
                let lo = -omega * f64::from(q.saturating_sub(2));
                let hi = f64::from(q - 1) * (1.0 - omega);
                let mut seen_lo = f64::INFINITY;
                let mut seen_hi = f64::NEG_INFINITY;
                for a in Demand::all(q) {
                    for b in Demand::all(q) {
                        let r = reward(a, b, omega, q).unwrap();
                        seen_lo = seen_lo.min(r);
                        seen_hi = seen_hi.max(r);
                        let p = profit(a, b, q).unwrap();
                        assert!(p <= q - 1);
                    }
                }
                assert!((seen_lo - lo).abs() < 1e-12, "q={q} ω={omega}: {seen_lo} vs {lo}");
                assert!((seen_hi - hi).abs() < 1e-12, "q={q} ω={omega}: {seen_hi} vs {hi}");
            }
        }
    }

    #[test]
    fn complement_demand_maximises_reward() {
        let q = 10;
        for k in 0..=10 {
            let omega = f64::from(k) / 10.0;
            for a in Demand::all(q) {
                let best = reward(a, d(q - a.value()), omega, q).unwrap();
                assert!((best - f64::from(a.value()) * (1.0 - omega)).abs() < 1e-12);
                for b in Demand::all(q) {
                    let r = reward(a, b, omega, q).unwrap();
                    if b.value() <= q - a.value() {
                        assert!(r <= best + 1e-12);
                    } else if omega > 0.0 {
                        assert!(r <= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn reward_increasing_in_own_demand_when_compatible() {
        let q = 10;
        for k in 0..10 {
            let omega = f64::from(k) / 10.0;
            for b in 1..q {
                for a in 1..(q - b) {
                    let lo = reward(d(a), d(b), omega, q).unwrap();
                    let hi = reward(d(a + 1), d(b), omega, q).unwrap();
                    assert!(hi > lo);
                }
            }
        }
    }

    #[test]
    fn state_index_roundtrip() {
        for q in [2, 3, 10] {
            for (i, s) in JointState::all(q).enumerate() {
                assert_eq!(s.index(q), i);
            }
        }
        assert_eq!(JointState::count(10), 81);
    }

    #[test]
    fn settle_accounting() {
        let cfg = GameConfig::default();
        let r = RoundRecord::settle(2, d(4), d(3), &cfg).unwrap();
        assert!(r.compatible);
        assert_eq!((r.profit_a, r.profit_b, r.unclaimed), (4, 3, 3));
        let r = RoundRecord::settle(2, d(6), d(7), &cfg).unwrap();
        assert!(!r.compatible);
        assert_eq!((r.profit_a, r.profit_b, r.unclaimed), (0, 0, 10));
    }

    #[test]
    fn config_validation_names_key() {
        let cfg = GameConfig {
            omega_a: 1.5,
            ..GameConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "omega_a"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = GameConfig {
            initial_demand: 10,
            ..GameConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { key, .. }) if key == "initial_demand"));
        assert!(GameConfig::default().validate().is_ok());
    }
}
