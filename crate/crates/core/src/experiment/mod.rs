//! Multi-generation transmission experiments over reward networks.
//!
//! A population is a grid of seats (generations x players). Seats are filled
//! in generation order; each seat walks through a fixed phase sequence and
//! every state change is appended to the population's ledger. The
//! [`PopulationRun`] view is rebuilt by replaying that ledger.

mod ledger;
mod scripted;
mod session;

pub use ledger::{Event, Ledger, LedgerEntry};
pub use scripted::{run_design, run_scripted_population, RootPolicy, ScriptedBehavior, ScriptedPolicy};
pub use session::{
    CandidateView, Candidates, Choice, Claim, Engine, MoveOutcome, NetworkView, ReplayStep, ReplayView, SessionView,
    REPLAY_STEP_MS,
};

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dqn::{greedy_trajectory, QNetwork};
pub use crate::network::NodeId;
use crate::network::{EnvError, Network, Trajectory};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    HumanOnly,
    HumanMachine,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::HumanOnly => "human_only",
            Condition::HumanMachine => "human_machine",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerKind {
    Human,
    Machine,
    Scripted,
}

impl fmt::Display for PlayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlayerKind::Human => "human",
            PlayerKind::Machine => "machine",
            PlayerKind::Scripted => "scripted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    pub condition: Condition,
    pub generations: usize,
    pub seats_per_generation: usize,
    /// Machine seats in generation 0 under [`Condition::HumanMachine`].
    pub machine_seats: usize,
    pub candidate_count: usize,
    pub founder_individual_trials: usize,
    pub individual_trials: usize,
    pub social_trials: usize,
    pub demonstration_trials: usize,
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            condition: Condition::HumanMachine,
            generations: 5,
            seats_per_generation: 8,
            machine_seats: 3,
            candidate_count: 5,
            founder_individual_trials: 6,
            individual_trials: 2,
            social_trials: 4,
            demonstration_trials: 4,
            seed: 0,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidSpec(m.to_string()));
        if self.generations == 0 || self.seats_per_generation == 0 {
            return bad("generations and seats per generation must be positive");
        }
        if self.machine_seats > self.seats_per_generation {
            return bad("more machine seats than seats in generation 0");
        }
        if self.candidate_count == 0 || self.candidate_count > self.seats_per_generation {
            return bad("candidate count must lie between 1 and the seats per generation");
        }
        if self.demonstration_trials == 0 {
            return bad("seats need at least one demonstration trial");
        }
        if self.social_trials > self.demonstration_trials {
            return bad("social trials replay demonstrations, so they cannot outnumber them");
        }
        Ok(())
    }

    pub fn machine_count(&self) -> usize {
        match self.condition {
            Condition::HumanOnly => 0,
            Condition::HumanMachine => self.machine_seats,
        }
    }

    pub fn individual_trials_at(&self, generation: usize) -> usize {
        if generation == 0 {
            self.founder_individual_trials
        } else {
            self.individual_trials
        }
    }

    pub fn seats(&self) -> usize {
        self.generations * self.seats_per_generation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Intro,
    IndividualLearning,
    DemonstratorSelection,
    Observe,
    Repeat,
    TrySelf,
    Demonstration,
    StrategyEntry,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("phase serializes");
        f.write_str(s.as_str().expect("unit variant"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyWhen {
    Pre,
    Post,
}

/// One position in a seat's phase sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", content = "index", rename_all = "snake_case")]
pub enum Step {
    Intro,
    Individual(usize),
    Strategy(StrategyWhen),
    Selection,
    Observe(usize),
    Repeat(usize),
    TrySelf(usize),
    Demonstration(usize),
    Done,
}

impl Step {
    pub fn phase(self) -> Phase {
        match self {
            Step::Intro => Phase::Intro,
            Step::Individual(_) => Phase::IndividualLearning,
            Step::Strategy(_) => Phase::StrategyEntry,
            Step::Selection => Phase::DemonstratorSelection,
            Step::Observe(_) => Phase::Observe,
            Step::Repeat(_) => Phase::Repeat,
            Step::TrySelf(_) => Phase::TrySelf,
            Step::Demonstration(_) => Phase::Demonstration,
            Step::Done => Phase::Done,
        }
    }
}

/// The phase sequence of a seat. Generation 0 has no social phases and a
/// single strategy text.
pub fn seat_steps(spec: &PopulationSpec, generation: usize) -> Vec<Step> {
    let mut steps = vec![Step::Intro];
    steps.extend((0..spec.individual_trials_at(generation)).map(Step::Individual));
    steps.push(Step::Strategy(StrategyWhen::Pre));
    if generation > 0 {
        steps.push(Step::Selection);
        for k in 0..spec.social_trials {
            steps.extend([Step::Observe(k), Step::Repeat(k), Step::TrySelf(k)]);
        }
        steps.push(Step::Strategy(StrategyWhen::Post));
    }
    steps.extend((0..spec.demonstration_trials).map(Step::Demonstration));
    steps.push(Step::Done);
    steps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialPhase {
    Individual,
    TrySelf,
    Demonstration,
}

impl TrialPhase {
    pub fn of(step: Step) -> Option<(TrialPhase, usize)> {
        match step {
            Step::Individual(i) => Some((TrialPhase::Individual, i)),
            Step::TrySelf(i) => Some((TrialPhase::TrySelf, i)),
            Step::Demonstration(i) => Some((TrialPhase::Demonstration, i)),
            _ => None,
        }
    }
}

impl fmt::Display for TrialPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrialPhase::Individual => "individual",
            TrialPhase::TrySelf => "try_self",
            TrialPhase::Demonstration => "demonstration",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub phase: TrialPhase,
    pub index: usize,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeatRecord {
    pub generation: usize,
    pub seat: usize,
    /// `None` until the seat is claimed.
    pub kind: Option<PlayerKind>,
    /// Seed of the machine player occupying the seat.
    pub machine: Option<u64>,
    pub candidates: Vec<usize>,
    pub demonstrator: Option<usize>,
    pub trials: Vec<TrialRecord>,
    pub repeat_tally: i32,
    pub strategy_pre: Option<String>,
    pub strategy_post: Option<String>,
    /// Whether the seat's strategy mentions the loss strategy, when known.
    pub strategy_flag: Option<bool>,
    pub complete: bool,
}

impl SeatRecord {
    pub fn demonstrations(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter(|t| t.phase == TrialPhase::Demonstration)
    }

    fn mean_total(&self, phase: TrialPhase) -> Option<f64> {
        let totals: Vec<i32> = self.trials.iter().filter(|t| t.phase == phase).map(|t| t.trajectory.total).collect();
        if totals.is_empty() {
            None
        } else {
            Some(totals.iter().map(|&t| t as f64).sum::<f64>() / totals.len() as f64)
        }
    }

    pub fn demo_average(&self) -> Option<f64> {
        self.mean_total(TrialPhase::Demonstration)
    }

    /// Own reference score shown at demonstrator selection.
    pub fn individual_average(&self) -> Option<f64> {
        self.mean_total(TrialPhase::Individual)
    }
}

/// Which networks every seat plays. Demonstration networks are shared
/// within a generation; social networks are the previous generation's
/// demonstration networks; individual networks are per seat and avoid both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub demonstration: Vec<Vec<String>>,
    pub individual: Vec<Vec<Vec<String>>>,
}

impl NetworkPlan {
    pub fn build(spec: &PopulationSpec, pool: &Pool) -> Result<Self, ExperimentError> {
        let n = pool.len();
        let demo_total = spec.generations * spec.demonstration_trials;
        if demo_total > n {
            return Err(ExperimentError::PoolExhausted { needed: demo_total, available: n });
        }
        let mut rng = seed::rng_at(spec.seed, &[seed::label("plan")]);
        let picked = index::sample(&mut rng, n, demo_total).into_vec();
        let demo_idx: Vec<Vec<usize>> = picked.chunks(spec.demonstration_trials).map(<[usize]>::to_vec).collect();

        let mut individual = Vec::with_capacity(spec.generations);
        for g in 0..spec.generations {
            let mut excluded: BTreeSet<usize> = demo_idx[g].iter().copied().collect();
            if g > 0 {
                excluded.extend(demo_idx[g - 1].iter().copied());
            }
            let free: Vec<usize> = (0..n).filter(|i| !excluded.contains(i)).collect();
            let need = spec.individual_trials_at(g);
            if need > free.len() {
                return Err(ExperimentError::PoolExhausted { needed: need + excluded.len(), available: n });
            }
            let seats = (0..spec.seats_per_generation)
                .map(|_| {
                    index::sample(&mut rng, free.len(), need)
                        .into_iter()
                        .map(|i| pool.networks[free[i]].id().to_string())
                        .collect()
                })
                .collect();
            individual.push(seats);
        }
        let demonstration = demo_idx
            .iter()
            .map(|gen| gen.iter().map(|&i| pool.networks[i].id().to_string()).collect())
            .collect();
        Ok(NetworkPlan { demonstration, individual })
    }

    /// Every network id a seat meets, in phase order.
    pub fn seat_networks(&self, generation: usize, seat: usize, social_trials: usize) -> Vec<&str> {
        let mut out: Vec<&str> = self.individual[generation][seat].iter().map(String::as_str).collect();
        if generation > 0 {
            out.extend(self.demonstration[generation - 1][..social_trials].iter().map(String::as_str));
        }
        out.extend(self.demonstration[generation].iter().map(String::as_str));
        out
    }
}

/// Networks addressable by id.
#[derive(Debug, Clone, Default)]
pub struct Pool {
    networks: Vec<Network>,
    index: HashMap<String, usize>,
}

impl Pool {
    pub fn new(networks: Vec<Network>) -> Result<Self, ExperimentError> {
        let mut index = HashMap::with_capacity(networks.len());
        for (i, n) in networks.iter().enumerate() {
            if index.insert(n.id().to_string(), i).is_some() {
                return Err(ExperimentError::InvalidSpec(format!("network id {} appears twice in the pool", n.id())));
            }
        }
        Ok(Pool { networks, index })
    }

    pub fn get(&self, id: &str) -> Option<&Network> {
        self.index.get(id).map(|&i| &self.networks[i])
    }

    pub fn networks(&self) -> &[Network] {
        &self.networks
    }

    pub fn len(&self) -> usize {
        self.networks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.networks.is_empty()
    }
}

/// A trained machine player.
#[derive(Debug, Clone)]
pub struct MachinePlayer {
    pub seed: u64,
    pub net: QNetwork,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum ExperimentError {
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),
    #[error("network pool too small: need {needed}, have {available}")]
    PoolExhausted { needed: usize, available: usize },
    #[error("{needed} machine players needed, {available} loaded")]
    MissingMachines { needed: usize, available: usize },
    #[error("generation {generation} is not complete yet")]
    GenerationIncomplete { generation: usize },
    #[error("no open seat")]
    NoSeatAvailable,
    #[error("unknown population {0}")]
    UnknownPopulation(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("not allowed in phase {actual}, expected {expected}")]
    PhaseViolation { expected: String, actual: Phase },
    #[error("trajectory has {moves} moves; trials need 10")]
    IncompleteTrajectory { moves: usize },
    #[error("illegal move: {0}")]
    IllegalMove(EnvError),
    #[error("unknown candidate {0}")]
    UnknownCandidate(String),
    #[error("the demonstrated move {expected} must be enacted first")]
    CorrectionRequired { expected: NodeId },
    #[error("corrupt ledger: {0}")]
    CorruptLedger(String),
}

impl ExperimentError {
    pub fn code(&self) -> &'static str {
        match self {
            ExperimentError::InvalidSpec(_) => "invalid_spec",
            ExperimentError::PoolExhausted { .. } => "pool_exhausted",
            ExperimentError::MissingMachines { .. } => "missing_machines",
            ExperimentError::GenerationIncomplete { .. } => "generation_incomplete",
            ExperimentError::NoSeatAvailable => "no_seat_available",
            ExperimentError::UnknownPopulation(_) => "unknown_population",
            ExperimentError::UnknownSession(_) => "unknown_session",
            ExperimentError::PhaseViolation { .. } => "phase_violation",
            ExperimentError::IncompleteTrajectory { .. } => "incomplete_trajectory",
            ExperimentError::IllegalMove(_) => "illegal_move",
            ExperimentError::UnknownCandidate(_) => "unknown_candidate",
            ExperimentError::CorrectionRequired { .. } => "correction_required",
            ExperimentError::CorruptLedger(_) => "corrupt_ledger",
        }
    }
}

/// The materialized state of one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRun {
    pub id: String,
    pub spec: PopulationSpec,
    pub plan: NetworkPlan,
    pub seats: Vec<Vec<SeatRecord>>,
}

impl PopulationRun {
    fn empty(id: String, spec: PopulationSpec, plan: NetworkPlan) -> Self {
        let seats = (0..spec.generations)
            .map(|g| (0..spec.seats_per_generation).map(|s| SeatRecord { generation: g, seat: s, ..Default::default() }).collect())
            .collect();
        PopulationRun { id, spec, plan, seats }
    }

    pub fn seat(&self, generation: usize, seat: usize) -> &SeatRecord {
        &self.seats[generation][seat]
    }

    pub fn generation_complete(&self, generation: usize) -> bool {
        self.seats[generation].iter().all(|s| s.complete)
    }

    pub fn is_complete(&self) -> bool {
        (0..self.spec.generations).all(|g| self.generation_complete(g))
    }

    /// Applies one ledger event to the view.
    fn apply(&mut self, generation: usize, seat: usize, event: &Event) -> Result<(), ExperimentError> {
        let rec = self
            .seats
            .get_mut(generation)
            .and_then(|g| g.get_mut(seat))
            .ok_or_else(|| ExperimentError::CorruptLedger(format!("no seat {generation}/{seat}")))?;
        match event {
            Event::SeatFilled { kind, machine } => {
                rec.kind = Some(*kind);
                rec.machine = *machine;
            }
            Event::CandidatesDrawn { candidates } => rec.candidates = candidates.clone(),
            Event::DemonstratorSelected { demonstrator } => rec.demonstrator = Some(*demonstrator),
            Event::Trial { phase, index, trajectory } => {
                rec.trials.push(TrialRecord { phase: *phase, index: *index, trajectory: trajectory.clone() })
            }
            Event::Repeat { points, .. } => rec.repeat_tally += points,
            Event::Strategy { when, text } => match when {
                StrategyWhen::Pre => rec.strategy_pre = Some(text.clone()),
                StrategyWhen::Post => rec.strategy_post = Some(text.clone()),
            },
            Event::StrategyFlag { flag } => rec.strategy_flag = Some(*flag),
            Event::SeatCompleted => rec.complete = true,
        }
        Ok(())
    }
}

/// A population together with its append-only ledger.
#[derive(Debug, Clone)]
pub struct Population {
    run: PopulationRun,
    ledger: Ledger,
}

impl Population {
    /// Plans networks and fills the machine seats of generation 0 with
    /// greedy demonstrations.
    pub fn build(
        id: impl Into<String>,
        spec: PopulationSpec,
        pool: &Pool,
        machines: &[MachinePlayer],
    ) -> Result<Self, ExperimentError> {
        let mut pop = Population::planned(id.into(), spec, pool)?;
        let count = pop.run.spec.machine_count();
        if machines.len() < count {
            return Err(ExperimentError::MissingMachines { needed: count, available: machines.len() });
        }
        let mut rng = seed::rng_at(pop.run.spec.seed, &[seed::label("machine-seats")]);
        let mut positions = index::sample(&mut rng, pop.run.spec.seats_per_generation, count).into_vec();
        positions.sort_unstable();
        for (m, &seat) in machines.iter().zip(&positions) {
            pop.push(0, seat, Event::SeatFilled { kind: PlayerKind::Machine, machine: Some(m.seed) })?;
            for (i, id) in pop.run.plan.demonstration[0].clone().iter().enumerate() {
                let net = pool.get(id).expect("planned from this pool");
                let trajectory = greedy_trajectory(&m.net, net);
                pop.push(0, seat, Event::Trial { phase: TrialPhase::Demonstration, index: i, trajectory })?;
            }
            pop.push(0, seat, Event::SeatCompleted)?;
        }
        Ok(pop)
    }

    fn planned(id: String, spec: PopulationSpec, pool: &Pool) -> Result<Self, ExperimentError> {
        spec.validate()?;
        let plan = NetworkPlan::build(&spec, pool)?;
        Ok(Population { run: PopulationRun::empty(id.clone(), spec, plan), ledger: Ledger::new(id) })
    }

    /// Rebuilds a population from its exported ledger.
    pub fn from_ledger(
        id: impl Into<String>,
        spec: PopulationSpec,
        pool: &Pool,
        entries: &[LedgerEntry],
    ) -> Result<Self, ExperimentError> {
        let mut pop = Population::planned(id.into(), spec, pool)?;
        for e in entries {
            if e.population != pop.run.id {
                return Err(ExperimentError::CorruptLedger(format!("entry {} belongs to {}", e.seq, e.population)));
            }
            pop.push(e.generation, e.seat, e.event.clone())?;
        }
        Ok(pop)
    }

    pub(crate) fn push(&mut self, generation: usize, seat: usize, event: Event) -> Result<(), ExperimentError> {
        self.run.apply(generation, seat, &event)?;
        self.ledger.append(generation, seat, event);
        Ok(())
    }

    pub fn run(&self) -> &PopulationRun {
        &self.run
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn id(&self) -> &str {
        &self.run.id
    }

    /// Draws demonstrator candidates for a seat of generation >= 1.
    pub fn draw_candidates(&self, generation: usize, seat: usize) -> Result<Vec<usize>, ExperimentError> {
        draw_candidates(&self.run, generation, seat)
    }

    /// Validates and appends a finished trial.
    pub fn record_trial(
        &mut self,
        generation: usize,
        seat: usize,
        step: Step,
        trajectory: Trajectory,
        pool: &Pool,
    ) -> Result<(), ExperimentError> {
        let (phase, index) = TrialPhase::of(step).ok_or(ExperimentError::PhaseViolation {
            expected: "a trial phase".into(),
            actual: step.phase(),
        })?;
        let expected = self.network_for(generation, seat, step).expect("trial steps have networks");
        let net = pool.get(&expected).ok_or_else(|| ExperimentError::CorruptLedger(format!("network {expected} missing from pool")))?;
        if trajectory.moves.len() != crate::network::MOVES_PER_EPISODE {
            return Err(ExperimentError::IncompleteTrajectory { moves: trajectory.moves.len() });
        }
        trajectory.verify(net).map_err(ExperimentError::IllegalMove)?;
        self.push(generation, seat, Event::Trial { phase, index, trajectory })
    }

    /// Network id played at `step`; `None` for steps without a network.
    pub fn network_for(&self, generation: usize, seat: usize, step: Step) -> Option<String> {
        let plan = &self.run.plan;
        match step {
            Step::Individual(i) => plan.individual[generation].get(seat)?.get(i).cloned(),
            Step::Observe(k) | Step::Repeat(k) | Step::TrySelf(k) => self.demonstrator_trial(generation, seat, k).map(|t| t.trajectory.network_id.clone()),
            Step::Demonstration(i) => plan.demonstration[generation].get(i).cloned(),
            _ => None,
        }
    }

    /// The chosen demonstrator's k-th demonstration.
    pub fn demonstrator_trial(&self, generation: usize, seat: usize, k: usize) -> Option<&TrialRecord> {
        let d = self.run.seats[generation][seat].demonstrator?;
        self.run.seats[generation - 1][d].demonstrations().find(|t| t.index == k)
    }
}

/// Uniform draw of distinct previous-generation seats, in ascending order.
pub fn draw_candidates(run: &PopulationRun, generation: usize, seat: usize) -> Result<Vec<usize>, ExperimentError> {
    if generation == 0 || generation >= run.spec.generations {
        return Err(ExperimentError::InvalidSpec(format!("generation {generation} has no demonstrator candidates")));
    }
    if !run.generation_complete(generation - 1) {
        return Err(ExperimentError::GenerationIncomplete { generation: generation - 1 });
    }
    let mut rng = seed::rng_at(run.spec.seed, &[seed::label("candidates"), generation as u64, seat as u64]);
    let mut c = index::sample(&mut rng, run.spec.seats_per_generation, run.spec.candidate_count).into_vec();
    c.sort_unstable();
    Ok(c)
}

pub const REPEAT_POINTS: i32 = 100;

/// Feedback for one repeated move.
pub fn repeat_score(demonstrated: NodeId, chosen: NodeId) -> i32 {
    if demonstrated == chosen {
        REPEAT_POINTS
    } else {
        -REPEAT_POINTS
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::network::{generate_batch, GenConfig};

    pub fn pool(count: usize) -> Pool {
        let (nets, _) = generate_batch(&GenConfig { seed: 3, ..Default::default() }, "experiment", count).unwrap();
        Pool::new(nets).unwrap()
    }

    pub fn machines() -> Vec<MachinePlayer> {
        (0..3).map(|s| MachinePlayer { seed: s, net: QNetwork::new(s) }).collect()
    }
}
