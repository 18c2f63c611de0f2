//! Models of the other player's next demand.
//!
//! Every model is a conditional table indexed by the canonical
//! [`JointState`] `(prev_a, prev_b)` with one distribution over `1..=q-1`
//! per context. Which player's demand the table predicts is fixed when the
//! table is built; planners that sit in seat B mirror it before use.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{Demand, GameLog, JointState, Role};

const NORM_TOL: f64 = 1e-12;

/// Probabilities of the demands `1..=q-1`, in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandDistribution {
    probs: Vec<f64>,
}

impl DemandDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_row(&probs)?;
        Ok(DemandDistribution { probs })
    }

    /// Normalises non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::domain("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::domain("weights sum to zero"));
        }
        Ok(DemandDistribution {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, d: Demand) -> f64 {
        self.probs.get(d.index()).copied().unwrap_or(0.0)
    }

    /// Inverse-CDF draw over the support points.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Demand {
        sample_row(&self.probs, rng)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }
}

fn check_row(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::domain("empty distribution"));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::domain("probabilities must be finite and non-negative"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(Error::domain(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

pub(crate) fn sample_row<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Demand {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return Demand::from_index(i);
        }
    }
    // u landed in the rounding slack above the final partial sum
    Demand::from_index(last)
}

/// A conditional table `p(demand | JointState)` for every context.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandModel {
    q: u32,
    /// Row-major: `JointState::index` rows of `q - 1` probabilities.
    table: Vec<f64>,
}

impl DemandModel {
    /// Builds a model row by row, validating each.
    pub fn from_fn<F>(q: u32, mut row: F) -> Result<Self>
    where
        F: FnMut(JointState) -> Result<DemandDistribution>,
    {
        check_q(q)?;
        let n = q as usize - 1;
        let mut table = Vec::with_capacity(n * n * n);
        for s in JointState::all(q) {
            let dist = row(s)?;
            if dist.probs.len() != n {
                return Err(Error::domain(format!(
                    "row for {s:?} has {} entries, expected {n}",
                    dist.probs.len()
                )));
            }
            table.extend_from_slice(&dist.probs);
        }
        Ok(DemandModel { q, table })
    }

    /// Wraps a raw row-major table, rejecting rows that are not distributions.
    pub fn from_table(q: u32, table: Vec<f64>) -> Result<Self> {
        check_q(q)?;
        let n = q as usize - 1;
        if table.len() != n * n * n {
            return Err(Error::domain(format!("table has {} entries, expected {}", table.len(), n * n * n)));
        }
        for (i, row) in table.chunks(n).enumerate() {
            check_row(row).map_err(|e| Error::domain(format!("context {:?}: {e}", JointState::from_index(i, q))))?;
        }
        Ok(DemandModel { q, table })
    }

    pub fn uniform(q: u32) -> Result<Self> {
        let dist = uniform_model(q)?;
        Self::from_fn(q, |_| Ok(dist.clone()))
    }

    /// Heuristic table predicting the demand of the player in seat `modeled`.
    pub fn heuristic(model: &HeuristicModel, modeled: Role) -> Result<Self> {
        Self::from_fn(model.q, |s| Ok(model.distribution(s, modeled)))
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn row(&self, s: JointState) -> &[f64] {
        let n = self.q as usize - 1;
        let i = s.index(self.q);
        &self.table[i * n..(i + 1) * n]
    }

    pub(crate) fn row_at(&self, index: usize) -> &[f64] {
        let n = self.q as usize - 1;
        &self.table[index * n..(index + 1) * n]
    }

    pub fn distribution(&self, s: JointState) -> DemandDistribution {
        DemandDistribution {
            probs: self.row(s).to_vec(),
        }
    }

    /// The same table with the two context coordinates swapped.
    pub fn mirrored(&self) -> Self {
        let n = self.q as usize - 1;
        let mut table = vec![0.0; self.table.len()];
        for s in JointState::all(self.q) {
            let dst = s.mirrored().index(self.q);
            table[dst * n..(dst + 1) * n].copy_from_slice(self.row(s));
        }
        DemandModel { q: self.q, table }
    }

    /// Largest deviation of any row sum from 1.
    pub fn max_normalisation_error(&self) -> f64 {
        let n = self.q as usize - 1;
        self.table
            .chunks(n)
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn check_q(q: u32) -> Result<()> {
    if q < 2 {
        return Err(Error::domain(format!("q must be at least 2, got {q}")));
    }
    Ok(())
}

/// Every demand equally likely, in every context.
pub fn uniform_model(q: u32) -> Result<DemandDistribution> {
    check_q(q)?;
    let n = q as usize - 1;
    Ok(DemandDistribution {
        probs: vec![1.0 / n as f64; n],
    })
}

/// Rule-of-thumb bargainer: a Gaussian kernel over the integer demands,
/// centred on a rule-based adjustment of the player's previous demand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeuristicModel {
    sigma: f64,
    q: u32,
}

impl HeuristicModel {
    pub fn new(sigma: f64, q: u32) -> Result<Self> {
        check_q(q)?;
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
        }
        Ok(HeuristicModel { sigma, q })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    /// Centre of the next-demand kernel for the player in seat `role`.
    ///
    /// After an incompatible round a player whose own previous claim was at
    /// most `q/2` stays put. Otherwise it moves by its proportional share of
    /// what was left over (negative when the pair overshot).
    pub fn mean(&self, s: JointState, role: Role) -> f64 {
        let own = f64::from(role.own(s).value());
        let opp = f64::from(role.opp(s).value());
        let q = f64::from(self.q);
        if 2.0 * own <= q && own + opp > q {
            own
        } else {
            own + own / (own + opp) * (q - own - opp)
        }
    }

    pub fn distribution(&self, s: JointState, role: Role) -> DemandDistribution {
        let mu = self.mean(s, role);
        let n = self.q as usize - 1;
        let sq: Vec<f64> = (1..=n).map(|b| (b as f64 - mu).powi(2)).collect();
        // shift by the nearest support point so a tiny sigma cannot underflow every weight
        let nearest = sq.iter().copied().fold(f64::INFINITY, f64::min);
        let two_var = 2.0 * self.sigma * self.sigma;
        let weights: Vec<f64> = sq.iter().map(|d| (-(d - nearest) / two_var).exp()).collect();
        let total: f64 = weights.iter().sum();
        DemandDistribution {
            probs: weights.into_iter().map(|w| w / total).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: JointState, role: Role, rng: &mut R) -> Demand {
        self.distribution(s, role).sample(rng)
    }
}

/// Dirichlet pseudo-counts over the opponent's demand, one row per context.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletLearner {
    q: u32,
    counts: Vec<f64>,
}

impl DirichletLearner {
    /// The non-informative prior: every count equal to one.
    pub fn uniform(q: u32) -> Result<Self> {
        check_q(q)?;
        let n = q as usize - 1;
        Ok(DirichletLearner {
            q,
            counts: vec![1.0; n * n * n],
        })
    }

    pub fn from_counts(q: u32, counts: Vec<f64>) -> Result<Self> {
        check_q(q)?;
        let n = q as usize - 1;
        if counts.len() != n * n * n {
            return Err(Error::domain(format!("expected {} counts, got {}", n * n * n, counts.len())));
        }
        if counts.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::domain("concentration parameters must be positive"));
        }
        Ok(DirichletLearner { q, counts })
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn counts(&self, s: JointState) -> &[f64] {
        let n = self.q as usize - 1;
        let i = s.index(self.q);
        &self.counts[i * n..(i + 1) * n]
    }

    /// Records one observed opponent demand in context `s`.
    pub fn update(&mut self, s: JointState, observed: Demand) {
        let n = self.q as usize - 1;
        self.counts[s.index(self.q) * n + observed.index()] += 1.0;
    }

    /// Posterior mean of the opponent's demand distribution in context `s`.
    pub fn estimate(&self, s: JointState) -> DemandDistribution {
        let row = self.counts(s);
        let total: f64 = row.iter().sum();
        DemandDistribution {
            probs: row.iter().map(|c| c / total).collect(),
        }
    }

    /// Posterior-mean table over all contexts.
    pub fn estimate_model(&self) -> DemandModel {
        let n = self.q as usize - 1;
        let mut table = Vec::with_capacity(self.counts.len());
        for row in self.counts.chunks(n) {
            let total: f64 = row.iter().sum();
            table.extend(row.iter().map(|c| c / total));
        }
        DemandModel { q: self.q, table }
    }

    pub fn total_mass(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn row_mass(&self, s: JointState) -> f64 {
        self.counts(s).iter().sum()
    }

    /// One line per context: `prev_a prev_b ν_1 … ν_{q-1}`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in JointState::all(self.q) {
            let _ = write!(out, "{} {}", s.prev_a, s.prev_b);
            for c in self.counts(s) {
                let _ = write!(out, " {c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let rows: Vec<Vec<&str>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.split_whitespace().collect())
            .collect();
        let first = rows.first().ok_or_else(|| Error::Parse("empty learner file".into()))?;
        if first.len() < 3 {
            return Err(Error::Parse("learner rows need at least three columns".into()));
        }
        let q = (first.len() - 1) as u32;
        let n = q as usize - 1;
        if rows.len() != n * n {
            return Err(Error::Parse(format!("expected {} rows for q={q}, found {}", n * n, rows.len())));
        }
        let mut counts = vec![0.0; n * n * n];
        let mut seen = vec![false; n * n];
        for (line, cols) in rows.iter().enumerate() {
            if cols.len() != n + 2 {
                return Err(Error::Parse(format!("row {}: expected {} columns", line + 1, n + 2)));
            }
            let parse_u = |t: &str| t.parse::<u32>().map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)));
            let s = JointState::from_values(parse_u(cols[0])?, parse_u(cols[1])?, q)?;
            let i = s.index(q);
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Parse(format!("row {}: duplicate context", line + 1)));
            }
            for (k, tok) in cols[2..].iter().enumerate() {
                counts[i * n + k] = tok
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))?;
            }
        }
        Self::from_counts(q, counts)
    }
}

/// How a learner's initial counts are chosen.
#[derive(Clone, Copy, Debug)]
pub enum PriorKind<'a> {
    Uniform,
    /// Rows shaped like the heuristic model of the player in `modeled`,
    /// each carrying mass `q - 1`.
    Heuristic { sigma: f64, modeled: Role },
    /// Uniform counts updated with every `(context, opponent demand)` pair
    /// `observer` saw in a warm-up game.
    Pretrained { log: &'a GameLog, observer: Role },
}

pub fn make_prior(kind: PriorKind<'_>, q: u32) -> Result<DirichletLearner> {
    match kind {
        PriorKind::Uniform => DirichletLearner::uniform(q),
        PriorKind::Heuristic { sigma, modeled } => {
            let model = HeuristicModel::new(sigma, q)?;
            let mass = f64::from(q - 1);
            let mut counts = Vec::new();
            for s in JointState::all(q) {
                counts.extend(model.distribution(s, modeled).probs.iter().map(|p| p * mass));
            }
            // far tails of a narrow kernel can round to zero; counts must stay positive
            for c in counts.iter_mut() {
                *c = c.max(f64::MIN_POSITIVE);
            }
            DirichletLearner::from_counts(q, counts)
        }
        PriorKind::Pretrained { log, observer } => {
            if log.config.q != q {
                return Err(Error::domain(format!("log was played with q={}, not {q}", log.config.q)));
            }
            let mut learner = DirichletLearner::uniform(q)?;
            if log.records.len() < 2 {
                log::warn!("pretraining log has no observations; falling back to the uniform prior");
                return Ok(learner);
            }
            for (s, opp) in log.observations(observer) {
                learner.update(s, opp);
            }
            Ok(learner)
        }
    }
}
