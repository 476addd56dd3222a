//! Strategy-space simulation of multi-generation social learning.
//!
//! Agents hold a single preferred strategy out of random, myopic and optimal.
//! Generation 0 explores individually and then demonstrates; later
//! generations explore briefly, pick a demonstrator from the previous
//! generation and imitate it, then demonstrate in turn.

mod grid;

pub use grid::{
    adoption_boundary, crossing, run_grid, run_grid_detailed, sensitivity_suite, uplift, Axis, BoundaryPoint, Crossing,
    GridResult, GridSpec, Panel, PopulationType, ReplicationRecord, SensitivitySuite,
};

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, IndexedRandom};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Myopic,
    Optimal,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::Myopic, Strategy::Optimal];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Human,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Selective,
    Random,
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMode::Selective => "selective",
            SelectionMode::Random => "random",
        })
    }
}

impl FromStr for SelectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "selective" => Ok(SelectionMode::Selective),
            "random" => Ok(SelectionMode::Random),
            other => Err(format!("unknown selection mode `{other}` (expected selective or random)")),
        }
    }
}

/// How many previous-generation agents a learner gets to choose from.
/// Serialized as a number or the string `"all"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CandidateCount {
    Count(usize),
    All,
}

impl CandidateCount {
    pub fn resolve(self, available: usize) -> usize {
        match self {
            CandidateCount::Count(k) => k.min(available),
            CandidateCount::All => available,
        }
    }
}

impl Serialize for CandidateCount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CandidateCount::Count(k) => s.serialize_u64(*k as u64),
            CandidateCount::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for CandidateCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(usize),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(k) => Ok(CandidateCount::Count(k)),
            Repr::Word(w) if w == "all" => Ok(CandidateCount::All),
            Repr::Word(w) => Err(serde::de::Error::custom(format!("candidate count must be a number or \"all\", got `{w}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyMeans {
    pub random: f64,
    pub myopic: f64,
    pub optimal: f64,
}

impl StrategyMeans {
    pub fn of(&self, s: Strategy) -> f64 {
        match s {
            Strategy::Random => self.random,
            Strategy::Myopic => self.myopic,
            Strategy::Optimal => self.optimal,
        }
    }
}

impl Default for StrategyMeans {
    fn default() -> Self {
        StrategyMeans { random: 600.0, myopic: 1400.0, optimal: 2200.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbmConfig {
    pub generations: usize,
    pub agents_per_generation: usize,
    /// Machine seats in generation 0; they count towards `agents_per_generation`.
    pub machine_count: usize,
    pub strategy_means: StrategyMeans,
    pub noise_sigma: f64,
    pub explore_prob: f64,
    pub d_myopic: f64,
    pub d_optimal: f64,
    pub machine_multiplier: f64,
    pub transmission_rate: f64,
    pub selection_mode: SelectionMode,
    pub candidate_count: CandidateCount,
    pub founder_exploration_tasks: usize,
    pub exploration_tasks: usize,
    pub social_tasks: usize,
    pub demonstration_tasks: usize,
    pub replications: usize,
    pub seed: u64,
}

impl Default for AbmConfig {
    fn default() -> Self {
        AbmConfig {
            generations: 5,
            agents_per_generation: 8,
            machine_count: 3,
            strategy_means: StrategyMeans::default(),
            noise_sigma: 200.0,
            explore_prob: 0.5,
            d_myopic: 0.4,
            d_optimal: 1e-4,
            machine_multiplier: 1000.0,
            transmission_rate: 0.95,
            selection_mode: SelectionMode::Selective,
            candidate_count: CandidateCount::Count(5),
            founder_exploration_tasks: 6,
            exploration_tasks: 2,
            social_tasks: 4,
            demonstration_tasks: 4,
            replications: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbmError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

impl AbmConfig {
    pub fn validate(&self) -> Result<(), AbmError> {
        let bad = |m: String| Err(AbmError::InvalidConfig(m));
        for (name, p) in [
            ("explore_prob", self.explore_prob),
            ("d_myopic", self.d_myopic),
            ("d_optimal", self.d_optimal),
            ("transmission_rate", self.transmission_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.generations == 0 || self.agents_per_generation == 0 {
            return bad("generations and agents per generation must be positive".into());
        }
        if self.machine_count > self.agents_per_generation {
            return bad(format!("{} machines do not fit {} seats", self.machine_count, self.agents_per_generation));
        }
        if self.candidate_count == CandidateCount::Count(0) {
            return bad("candidate count must be positive".into());
        }
        if self.demonstration_tasks == 0 {
            return bad("selection needs at least one demonstration task".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) || !(self.machine_multiplier >= 0.0) {
            return bad("noise sigma and machine multiplier must be non-negative".into());
        }
        Ok(())
    }

    /// Per-attempt probability of finding the optimal strategy.
    pub fn discovery_rate(&self, kind: AgentKind) -> f64 {
        match kind {
            AgentKind::Human => self.d_optimal,
            AgentKind::Machine => (self.machine_multiplier * self.d_optimal).min(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbmAgent {
    pub kind: AgentKind,
    pub preferred: Strategy,
    pub demo_rewards: Vec<f64>,
}

impl AbmAgent {
    pub fn new(kind: AgentKind) -> Self {
        AbmAgent { kind, preferred: Strategy::Random, demo_rewards: Vec::new() }
    }

    /// Only ever moves up the strategy order.
    pub fn upgrade(&mut self, s: Strategy) -> bool {
        if s > self.preferred {
            self.preferred = s;
            true
        } else {
            false
        }
    }

    pub fn demo_mean(&self) -> f64 {
        if self.demo_rewards.is_empty() {
            return 0.0;
        }
        self.demo_rewards.iter().sum::<f64>() / self.demo_rewards.len() as f64
    }
}

/// Noisy task reward for playing `s`.
pub fn draw_reward(cfg: &AbmConfig, s: Strategy, rng: &mut seed::Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    cfg.strategy_means.of(s) + cfg.noise_sigma * z
}

/// One individual-exploration task. Returns the strategy discovered, if any.
/// Both discovery draws happen whenever the agent explores; optimal wins
/// when both succeed.
pub fn explore_step(agent: &mut AbmAgent, cfg: &AbmConfig, rng: &mut seed::Rng) -> Option<Strategy> {
    if !rng.random_bool(cfg.explore_prob) {
        return None;
    }
    let optimal = rng.random_bool(cfg.discovery_rate(agent.kind));
    let myopic = rng.random_bool(cfg.d_myopic);
    let found = if optimal {
        Strategy::Optimal
    } else if myopic {
        Strategy::Myopic
    } else {
        return None;
    };
    agent.upgrade(found);
    Some(found)
}

/// Index of the chosen candidate given their mean demonstration rewards.
/// Selective ties are broken uniformly.
pub fn select_demonstrator(means: &[f64], mode: SelectionMode, rng: &mut seed::Rng) -> usize {
    assert!(!means.is_empty(), "no candidates to choose from");
    match mode {
        SelectionMode::Random => rng.random_range(0..means.len()),
        SelectionMode::Selective => {
            let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let top: Vec<usize> = (0..means.len()).filter(|&i| means[i] == best).collect();
            *top.choose(rng).expect("at least one maximum")
        }
    }
}

/// One social-learning task: with probability `t` the learner takes over
/// the demonstrator's strategy if it is an upgrade.
pub fn social_step(learner: &mut AbmAgent, demonstrated: Strategy, t: f64, rng: &mut seed::Rng) -> bool {
    rng.random_bool(t) && learner.upgrade(demonstrated)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Human agents per strategy, indexed random, myopic, optimal.
    pub human_counts: [usize; 3],
    pub machines: usize,
    pub machine_optimal: usize,
    /// Mean demonstration reward over human agents.
    pub mean_human_reward: f64,
}

impl GenerationRecord {
    pub fn humans(&self) -> usize {
        self.human_counts.iter().sum()
    }

    pub fn human_adoption(&self) -> f64 {
        match self.humans() {
            0 => 0.0,
            n => self.human_counts[Strategy::Optimal.index()] as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRun {
    pub agents: Vec<Vec<AbmAgent>>,
    /// Previous-generation index chosen by each agent; `None` in generation 0.
    pub demonstrators: Vec<Vec<Option<usize>>>,
    pub records: Vec<GenerationRecord>,
}

impl PopulationRun {
    /// Share of final-generation agents preferring the optimal strategy.
    pub fn final_adoption(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.human_adoption())
    }

    pub fn final_mean_reward(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.mean_human_reward)
    }
}

fn demonstrate(agent: &mut AbmAgent, cfg: &AbmConfig, rng: &mut seed::Rng) {
    agent.demo_rewards = (0..cfg.demonstration_tasks).map(|_| draw_reward(cfg, agent.preferred, rng)).collect();
}

fn summarize(generation: usize, agents: &[AbmAgent]) -> GenerationRecord {
    let mut human_counts = [0; 3];
    let (mut machines, mut machine_optimal) = (0, 0);
    let (mut reward, mut tasks) = (0.0, 0usize);
    for a in agents {
        match a.kind {
            AgentKind::Human => {
                human_counts[a.preferred.index()] += 1;
                reward += a.demo_rewards.iter().sum::<f64>();
                tasks += a.demo_rewards.len();
            }
            AgentKind::Machine => {
                machines += 1;
                machine_optimal += usize::from(a.preferred == Strategy::Optimal);
            }
        }
    }
    let mean_human_reward = if tasks == 0 { 0.0 } else { reward / tasks as f64 };
    GenerationRecord { generation, human_counts, machines, machine_optimal, mean_human_reward }
}

/// Simulates one population. `cfg` is assumed valid.
pub fn run_population(cfg: &AbmConfig, rng: &mut seed::Rng) -> PopulationRun {
    let n = cfg.agents_per_generation;
    let mut agents: Vec<Vec<AbmAgent>> = Vec::with_capacity(cfg.generations);
    let mut demonstrators = Vec::with_capacity(cfg.generations);

    let mut founders: Vec<AbmAgent> = (0..n)
        .map(|i| AbmAgent::new(if i < cfg.machine_count { AgentKind::Machine } else { AgentKind::Human }))
        .collect();
    for a in &mut founders {
        for _ in 0..cfg.founder_exploration_tasks {
            explore_step(a, cfg, rng);
        }
        demonstrate(a, cfg, rng);
    }
    agents.push(founders);
    demonstrators.push(vec![None; n]);

    for _ in 1..cfg.generations {
        let prev = agents.last().expect("generation 0 exists");
        let k = cfg.candidate_count.resolve(prev.len());
        let mut next = Vec::with_capacity(n);
        let mut chosen = Vec::with_capacity(n);
        for _ in 0..n {
            let mut a = AbmAgent::new(AgentKind::Human);
            for _ in 0..cfg.exploration_tasks {
                explore_step(&mut a, cfg, rng);
            }
            let candidates = index::sample(rng, prev.len(), k).into_vec();
            let means: Vec<f64> = candidates.iter().map(|&c| prev[c].demo_mean()).collect();
            let pick = candidates[select_demonstrator(&means, cfg.selection_mode, rng)];
            for _ in 0..cfg.social_tasks {
                social_step(&mut a, prev[pick].preferred, cfg.transmission_rate, rng);
            }
            demonstrate(&mut a, cfg, rng);
            next.push(a);
            chosen.push(Some(pick));
        }
        agents.push(next);
        demonstrators.push(chosen);
    }

    let records = agents.iter().enumerate().map(|(g, gen)| summarize(g, gen)).collect();
    PopulationRun { agents, demonstrators, records }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial_within_3_sigma(hits: usize, n: usize, p: f64) -> bool {
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        (hits as f64 / n as f64 - p).abs() <= 3.0 * sd
    }

    #[test]
    fn reward_mean_and_variance() {
        let cfg = AbmConfig::default();
        let mut rng = seed::rng(1);
        let xs: Vec<f64> = (0..10_000).map(|_| draw_reward(&cfg, Strategy::Optimal, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((mean - 2200.0).abs() <= 3.0 * 200.0 / 100.0, "mean {mean}");
        assert!((var / 40_000.0 - 1.0).abs() <= 0.05, "variance {var}");
    }

    #[test]
    fn zero_noise_gives_the_mean() {
        let cfg = AbmConfig { noise_sigma: 0.0, ..Default::default() };
        let mut rng = seed::rng(2);
        for s in Strategy::ALL {
            assert_eq!(draw_reward(&cfg, s, &mut rng), cfg.strategy_means.of(s));
        }
    }

    #[test]
    fn impossible_discovery_never_finds_optimal() {
        let cfg = AbmConfig { d_optimal: 0.0, ..Default::default() };
        let mut rng = seed::rng(3);
        let mut a = AbmAgent::new(AgentKind::Human);
        for _ in 0..1000 {
            explore_step(&mut a, &cfg, &mut rng);
        }
        assert_eq!(a.preferred, Strategy::Myopic);
    }

    #[test]
    fn machine_rate_is_capped_multiple() {
        let cfg = AbmConfig { d_optimal: 1e-4, ..Default::default() };
        assert!((cfg.discovery_rate(AgentKind::Machine) - 0.1).abs() < 1e-12);
        assert_eq!(cfg.discovery_rate(AgentKind::Human), 1e-4);
        let easy = AbmConfig { d_optimal: 0.01, ..Default::default() };
        assert_eq!(easy.discovery_rate(AgentKind::Machine), 1.0);
    }

    #[test]
    fn certain_discovery_single_task_rate() {
        let cfg = AbmConfig { d_optimal: 1.0, ..Default::default() };
        let mut rng = seed::rng(4);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| {
                let mut a = AbmAgent::new(AgentKind::Human);
                explore_step(&mut a, &cfg, &mut rng);
                a.preferred == Strategy::Optimal
            })
            .count();
        assert!(binomial_within_3_sigma(hits, n, 0.5), "{hits}");
    }

    #[test]
    fn machine_adoption_within_six_tasks() {
        let cfg = AbmConfig { d_optimal: 1e-4, ..Default::default() };
        let mut rng = seed::rng(5);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| {
                let mut a = AbmAgent::new(AgentKind::Machine);
                (0..6).for_each(|_| {
                    explore_step(&mut a, &cfg, &mut rng);
                });
                a.preferred == Strategy::Optimal
            })
            .count();
        let p = 1.0 - 0.95f64.powi(6);
        assert!(binomial_within_3_sigma(hits, n, p), "{hits} vs {p}");
    }

    #[test]
    fn selective_picks_argmax() {
        let mut rng = seed::rng(6);
        let means = [610.0, 1395.0, 2210.0, 590.0, 1410.0];
        assert_eq!(select_demonstrator(&means, SelectionMode::Selective, &mut rng), 2);
    }

    #[test]
    fn selective_ties_split_evenly() {
        let mut rng = seed::rng(7);
        let means = [2200.0, 100.0, 2200.0];
        let n = 10_000;
        let first = (0..n).filter(|_| select_demonstrator(&means, SelectionMode::Selective, &mut rng) == 0).count();
        assert!(binomial_within_3_sigma(first, n, 0.5), "{first}");
    }

    #[test]
    fn full_transmission_copies_immediately() {
        let mut rng = seed::rng(8);
        let mut a = AbmAgent::new(AgentKind::Human);
        assert!(social_step(&mut a, Strategy::Optimal, 1.0, &mut rng));
        assert_eq!(a.preferred, Strategy::Optimal);
    }

    #[test]
    fn zero_transmission_changes_nothing() {
        let mut rng = seed::rng(9);
        let mut a = AbmAgent::new(AgentKind::Human);
        for _ in 0..4 {
            assert!(!social_step(&mut a, Strategy::Optimal, 0.0, &mut rng));
        }
        assert_eq!(a.preferred, Strategy::Random);
    }

    #[test]
    fn imitation_never_downgrades() {
        let mut rng = seed::rng(10);
        let mut a = AbmAgent::new(AgentKind::Human);
        a.preferred = Strategy::Optimal;
        assert!(!social_step(&mut a, Strategy::Myopic, 1.0, &mut rng));
        assert_eq!(a.preferred, Strategy::Optimal);
    }

    #[test]
    fn machines_only_in_founders() {
        let cfg = AbmConfig::default();
        let run = run_population(&cfg, &mut seed::rng(11));
        assert_eq!(run.agents.len(), 5);
        assert_eq!(run.agents[0].iter().filter(|a| a.kind == AgentKind::Machine).count(), 3);
        for gen in &run.agents[1..] {
            assert_eq!(gen.len(), 8);
            assert!(gen.iter().all(|a| a.kind == AgentKind::Human));
        }
        assert!(run.demonstrators[0].iter().all(Option::is_none));
        assert!(run.demonstrators[1..].iter().flatten().all(|d| d.is_some_and(|i| i < 8)));
    }

    #[test]
    fn population_is_seeded() {
        let cfg = AbmConfig::default();
        assert_eq!(run_population(&cfg, &mut seed::rng(12)), run_population(&cfg, &mut seed::rng(12)));
    }

    #[test]
    fn candidate_count_serde() {
        assert_eq!(serde_json::to_string(&CandidateCount::All).unwrap(), "\"all\"");
        assert_eq!(serde_json::from_str::<CandidateCount>("5").unwrap(), CandidateCount::Count(5));
        assert_eq!(serde_json::from_str::<CandidateCount>("\"all\"").unwrap(), CandidateCount::All);
        assert!(serde_json::from_str::<CandidateCount>("\"some\"").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AbmConfig::default().validate().is_ok());
        assert!(AbmConfig { transmission_rate: 1.5, ..Default::default() }.validate().is_err());
        assert!(AbmConfig { machine_count: 9, ..Default::default() }.validate().is_err());
        assert!(AbmConfig { candidate_count: CandidateCount::Count(0), ..Default::default() }.validate().is_err());
    }
}
