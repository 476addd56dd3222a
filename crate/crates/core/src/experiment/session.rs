//! Live sessions: one player occupying one seat, stepping through its phases.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{
    repeat_score, seat_steps, Event, ExperimentError, MachinePlayer, Phase, PlayerKind, Pool, Population,
    PopulationRun, PopulationSpec, Step, TrialPhase,
};
use crate::network::{EnvState, Network, NodeId, Trajectory, MOVES_PER_EPISODE};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub token: String,
    pub population: String,
    pub generation: usize,
    pub seat: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub target: NodeId,
    pub reward: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkView {
    pub network: Network,
    pub current: NodeId,
    pub move_index: usize,
    pub moves_left: usize,
    /// Network points in trial phases; feedback points while repeating.
    pub score: i32,
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub token: String,
    pub population: String,
    pub generation: usize,
    pub seat: usize,
    pub kind: PlayerKind,
    pub phase: Phase,
    pub step: Step,
    pub step_number: usize,
    pub steps_total: usize,
    pub network: Option<NetworkView>,
    /// The demonstrated move to enact after a wrong repeat.
    pub correction: Option<NodeId>,
    pub repeat_tally: i32,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateView {
    pub label: String,
    /// Demonstration average, rounded to whole points.
    pub average_score: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidates {
    pub own_average: Option<i64>,
    pub candidates: Vec<CandidateView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayStep {
    pub from: NodeId,
    pub to: NodeId,
    pub reward: i32,
    /// Suggested pause before animating this move.
    pub delay_ms: u64,
}

/// Pacing of observation replays.
pub const REPLAY_STEP_MS: u64 = 1500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayView {
    pub network_id: String,
    pub steps: Vec<ReplayStep>,
    pub total: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveOutcome {
    /// Edge reward in trial phases; +100, -100 or 0 while repeating.
    pub points: i32,
    /// Set while repeating: whether the move matched the demonstration.
    pub matched: Option<bool>,
    pub trial_complete: bool,
    pub view: SessionView,
}

#[derive(Debug, Clone, Default)]
struct Live {
    moves: Vec<NodeId>,
    points: i32,
    attempts: Vec<NodeId>,
    correction: Option<NodeId>,
}

#[derive(Debug, Clone)]
struct Session {
    population: String,
    generation: usize,
    seat: usize,
    kind: PlayerKind,
    steps: Vec<Step>,
    cursor: usize,
    live: Live,
}

impl Session {
    fn step(&self) -> Step {
        self.steps[self.cursor]
    }
}

/// All populations of a deployment plus the sessions playing in them.
#[derive(Debug)]
pub struct Engine {
    pool: Pool,
    machines: Vec<MachinePlayer>,
    seed: u64,
    populations: Vec<Population>,
    by_id: HashMap<String, usize>,
    sessions: HashMap<String, Session>,
    issued: u64,
}

fn label_of(i: usize) -> String {
    char::from(b'A' + i as u8).to_string()
}

fn violation(expected: &str, actual: Phase) -> ExperimentError {
    ExperimentError::PhaseViolation { expected: expected.to_string(), actual }
}

impl Engine {
    pub fn new(pool: Pool, machines: Vec<MachinePlayer>, seed: u64) -> Self {
        Engine { pool, machines, seed, populations: Vec::new(), by_id: HashMap::new(), sessions: HashMap::new(), issued: 0 }
    }

    pub fn pool(&self) -> &Pool {
        &self.pool
    }

    pub fn machines(&self) -> &[MachinePlayer] {
        &self.machines
    }

    pub fn create_population(&mut self, spec: PopulationSpec) -> Result<String, ExperimentError> {
        let id = format!("pop-{:03}", self.populations.len());
        let pop = Population::build(id.clone(), spec, &self.pool, &self.machines)?;
        self.by_id.insert(id.clone(), self.populations.len());
        self.populations.push(pop);
        Ok(id)
    }

    /// Adds a population rebuilt elsewhere, e.g. from a ledger.
    pub fn insert_population(&mut self, pop: Population) -> Result<(), ExperimentError> {
        if self.by_id.contains_key(pop.id()) {
            return Err(ExperimentError::InvalidSpec(format!("population {} exists", pop.id())));
        }
        self.by_id.insert(pop.id().to_string(), self.populations.len());
        self.populations.push(pop);
        Ok(())
    }

    pub fn population(&self, id: &str) -> Result<&Population, ExperimentError> {
        self.by_id.get(id).map(|&i| &self.populations[i]).ok_or_else(|| ExperimentError::UnknownPopulation(id.to_string()))
    }

    fn population_mut(&mut self, id: &str) -> Result<&mut Population, ExperimentError> {
        let i = *self.by_id.get(id).ok_or_else(|| ExperimentError::UnknownPopulation(id.to_string()))?;
        Ok(&mut self.populations[i])
    }

    pub fn populations(&self) -> &[Population] {
        &self.populations
    }

    pub fn runs(&self) -> Vec<PopulationRun> {
        self.populations.iter().map(|p| p.run().clone()).collect()
    }

    /// The population's ledger as JSON lines.
    pub fn export(&self, id: &str) -> Result<String, ExperimentError> {
        Ok(self.population(id)?.ledger().to_jsonl())
    }

    fn open_seat(pop: &Population) -> Result<(usize, usize), ExperimentError> {
        let run = pop.run();
        let Some(g) = (0..run.spec.generations).find(|&g| !run.generation_complete(g)) else {
            return Err(ExperimentError::NoSeatAvailable);
        };
        if let Some(s) = run.seats[g].iter().position(|s| s.kind.is_none()) {
            return Ok((g, s));
        }
        if g + 1 < run.spec.generations {
            Err(ExperimentError::GenerationIncomplete { generation: g })
        } else {
            Err(ExperimentError::NoSeatAvailable)
        }
    }

    /// Claims the next open seat. Without a population id, populations are
    /// filled depth-first in creation order.
    pub fn claim(&mut self, population: Option<&str>, kind: PlayerKind) -> Result<Claim, ExperimentError> {
        if kind == PlayerKind::Machine {
            return Err(ExperimentError::InvalidSpec("machine seats are filled at creation".into()));
        }
        let (pi, g, s) = match population {
            Some(id) => {
                let pi = *self.by_id.get(id).ok_or_else(|| ExperimentError::UnknownPopulation(id.to_string()))?;
                let (g, s) = Self::open_seat(&self.populations[pi])?;
                (pi, g, s)
            }
            None => {
                let mut last = ExperimentError::NoSeatAvailable;
                let mut found = None;
                for (pi, pop) in self.populations.iter().enumerate() {
                    match Self::open_seat(pop) {
                        Ok((g, s)) => {
                            found = Some((pi, g, s));
                            break;
                        }
                        Err(e @ ExperimentError::GenerationIncomplete { .. }) => last = e,
                        Err(_) => {}
                    }
                }
                found.ok_or(last)?
            }
        };
        let pop = &mut self.populations[pi];
        let candidates = if g > 0 { Some(pop.draw_candidates(g, s)?) } else { None };
        pop.push(g, s, Event::SeatFilled { kind, machine: None })?;
        if let Some(candidates) = candidates {
            pop.push(g, s, Event::CandidatesDrawn { candidates })?;
        }
        let steps = seat_steps(&pop.run().spec, g);
        let id = pop.id().to_string();
        let token = format!("{:016x}", seed::derive(self.seed, &[seed::label("session"), self.issued]));
        self.issued += 1;
        self.sessions.insert(
            token.clone(),
            Session { population: id.clone(), generation: g, seat: s, kind, steps, cursor: 0, live: Live::default() },
        );
        Ok(Claim { token, population: id, generation: g, seat: s })
    }

    fn session(&self, token: &str) -> Result<&Session, ExperimentError> {
        self.sessions.get(token).ok_or_else(|| ExperimentError::UnknownSession(token.to_string()))
    }

    fn network_at(&self, sess: &Session) -> Result<Option<&Network>, ExperimentError> {
        let pop = self.population(&sess.population)?;
        Ok(pop.network_for(sess.generation, sess.seat, sess.step()).and_then(|id| self.pool.get(&id)))
    }

    pub fn view(&self, token: &str) -> Result<SessionView, ExperimentError> {
        let sess = self.session(token)?;
        let step = sess.step();
        let network = match step.phase() {
            Phase::IndividualLearning | Phase::Repeat | Phase::TrySelf | Phase::Demonstration => {
                let net = self.network_at(sess)?.expect("trial steps have networks");
                let mut state = EnvState::new(net);
                let mut score = 0;
                for &m in &sess.live.moves {
                    score += state.step(m).expect("live moves are legal");
                }
                if step.phase() == Phase::Repeat {
                    score = sess.live.points;
                }
                Some(NetworkView {
                    network: net.clone(),
                    current: state.current(),
                    move_index: state.move_index(),
                    moves_left: MOVES_PER_EPISODE - state.move_index(),
                    score,
                    choices: state.choices().iter().map(|&(target, reward)| Choice { target, reward }).collect(),
                })
            }
            _ => None,
        };
        let pop = self.population(&sess.population)?;
        Ok(SessionView {
            token: token.to_string(),
            population: sess.population.clone(),
            generation: sess.generation,
            seat: sess.seat,
            kind: sess.kind,
            phase: step.phase(),
            step,
            step_number: sess.cursor,
            steps_total: sess.steps.len(),
            network,
            correction: sess.live.correction,
            repeat_tally: pop.run().seat(sess.generation, sess.seat).repeat_tally,
            done: step == Step::Done,
        })
    }

    /// Moves the session past its current step, completing the seat when
    /// the last step is reached.
    fn next_step(&mut self, token: &str) -> Result<(), ExperimentError> {
        let sess = self.sessions.get_mut(token).expect("checked by caller");
        sess.cursor += 1;
        sess.live = Live::default();
        if sess.step() == Step::Done {
            let (id, g, s) = (sess.population.clone(), sess.generation, sess.seat);
            self.population_mut(&id)?.push(g, s, Event::SeatCompleted)?;
        }
        Ok(())
    }

    /// Acknowledges an instruction or observation screen.
    pub fn advance(&mut self, token: &str) -> Result<SessionView, ExperimentError> {
        let phase = self.session(token)?.step().phase();
        if !matches!(phase, Phase::Intro | Phase::Observe) {
            return Err(violation("intro or observe", phase));
        }
        self.next_step(token)?;
        self.view(token)
    }

    pub fn candidates(&self, token: &str) -> Result<Candidates, ExperimentError> {
        let sess = self.session(token)?;
        let phase = sess.step().phase();
        if phase != Phase::DemonstratorSelection {
            return Err(violation("demonstrator_selection", phase));
        }
        let run = self.population(&sess.population)?.run();
        let me = run.seat(sess.generation, sess.seat);
        let prev = &run.seats[sess.generation - 1];
        let candidates = me
            .candidates
            .iter()
            .enumerate()
            .map(|(i, &c)| CandidateView {
                label: label_of(i),
                average_score: prev[c].demo_average().unwrap_or(0.0).round() as i64,
            })
            .collect();
        Ok(Candidates { own_average: me.individual_average().map(|a| a.round() as i64), candidates })
    }

    pub fn select(&mut self, token: &str, label: &str) -> Result<SessionView, ExperimentError> {
        let sess = self.session(token)?;
        let phase = sess.step().phase();
        if phase != Phase::DemonstratorSelection {
            return Err(violation("demonstrator_selection", phase));
        }
        let (id, g, s) = (sess.population.clone(), sess.generation, sess.seat);
        let pop = self.population_mut(&id)?;
        let candidates = &pop.run().seat(g, s).candidates;
        let demonstrator = (0..candidates.len())
            .find(|&i| label_of(i).eq_ignore_ascii_case(label))
            .map(|i| candidates[i])
            .ok_or_else(|| ExperimentError::UnknownCandidate(label.to_string()))?;
        pop.push(g, s, Event::DemonstratorSelected { demonstrator })?;
        self.next_step(token)?;
        self.view(token)
    }

    /// The demonstration being observed, move by move.
    pub fn replay(&self, token: &str) -> Result<ReplayView, ExperimentError> {
        let sess = self.session(token)?;
        let Step::Observe(k) = sess.step() else {
            return Err(violation("observe", sess.step().phase()));
        };
        let pop = self.population(&sess.population)?;
        let trial = pop.demonstrator_trial(sess.generation, sess.seat, k).expect("demonstrator has all demonstrations");
        let net = self.pool.get(&trial.trajectory.network_id).expect("planned network");
        let t = &trial.trajectory;
        let mut from = net.start_node();
        let steps = t
            .moves
            .iter()
            .zip(&t.rewards)
            .map(|(&to, &reward)| {
                let s = ReplayStep { from, to, reward, delay_ms: REPLAY_STEP_MS };
                from = to;
                s
            })
            .collect();
        Ok(ReplayView { network_id: t.network_id.clone(), steps, total: t.total })
    }

    /// Plays one move of the current trial or repeat.
    pub fn play_move(&mut self, token: &str, target: NodeId) -> Result<MoveOutcome, ExperimentError> {
        let sess = self.session(token)?;
        let step = sess.step();
        match step.phase() {
            Phase::Repeat => self.repeat_move(token, target),
            Phase::IndividualLearning | Phase::TrySelf | Phase::Demonstration => {
                let net = self.network_at(sess)?.expect("trial steps have networks");
                let mut moves = sess.live.moves.clone();
                moves.push(target);
                let played = Trajectory::play(net, &moves).map_err(ExperimentError::IllegalMove)?;
                let points = *played.rewards.last().expect("one move was played");
                let complete = played.moves.len() == MOVES_PER_EPISODE;
                if complete {
                    let (id, g, s) = (sess.population.clone(), sess.generation, sess.seat);
                    let pool = &self.pool;
                    let i = self.by_id[&id];
                    self.populations[i].record_trial(g, s, step, played, pool)?;
                    self.next_step(token)?;
                } else {
                    self.sessions.get_mut(token).expect("exists").live.moves = moves;
                }
                Ok(MoveOutcome { points, matched: None, trial_complete: complete, view: self.view(token)? })
            }
            other => Err(violation("a playing phase", other)),
        }
    }

    fn repeat_move(&mut self, token: &str, target: NodeId) -> Result<MoveOutcome, ExperimentError> {
        let sess = self.session(token)?;
        let Step::Repeat(k) = sess.step() else { unreachable!("caller checked the phase") };
        let pop = self.population(&sess.population)?;
        let demo = &pop.demonstrator_trial(sess.generation, sess.seat, k).expect("demonstrator trial").trajectory;
        let net = self.pool.get(&demo.network_id).expect("planned network");
        let expected = demo.moves[sess.live.moves.len()];
        let network_id = demo.network_id.clone();

        let mut live = sess.live.clone();
        let (points, matched) = if let Some(c) = live.correction {
            if target != c {
                return Err(ExperimentError::CorrectionRequired { expected: c });
            }
            live.correction = None;
            (0, None)
        } else {
            // an illegal target is an error, not a wrong guess
            let mut probe = live.moves.clone();
            probe.push(target);
            Trajectory::play(net, &probe).map_err(ExperimentError::IllegalMove)?;
            live.attempts.push(target);
            let p = repeat_score(expected, target);
            if p < 0 {
                live.correction = Some(expected);
            }
            (p, Some(p > 0))
        };
        live.points += points;
        if live.correction.is_none() {
            live.moves.push(expected);
        }
        let complete = live.moves.len() == MOVES_PER_EPISODE;
        let (id, g, s) = (sess.population.clone(), sess.generation, sess.seat);
        if complete {
            let event = Event::Repeat { index: k, network_id, attempts: live.attempts.clone(), points: live.points };
            self.population_mut(&id)?.push(g, s, event)?;
            self.next_step(token)?;
        } else {
            self.sessions.get_mut(token).expect("exists").live = live;
        }
        Ok(MoveOutcome { points, matched, trial_complete: complete, view: self.view(token)? })
    }

    /// Submits a whole trial at once.
    pub fn submit_trajectory(&mut self, token: &str, moves: &[NodeId]) -> Result<SessionView, ExperimentError> {
        let sess = self.session(token)?;
        let step = sess.step();
        if TrialPhase::of(step).is_none() {
            return Err(violation("a trial phase", step.phase()));
        }
        if !sess.live.moves.is_empty() {
            return Err(violation("a trial without live moves", step.phase()));
        }
        if moves.len() != MOVES_PER_EPISODE {
            return Err(ExperimentError::IncompleteTrajectory { moves: moves.len() });
        }
        let net = self.network_at(sess)?.expect("trial steps have networks");
        let trajectory = Trajectory::play(net, moves).map_err(ExperimentError::IllegalMove)?;
        let (id, g, s) = (sess.population.clone(), sess.generation, sess.seat);
        let i = self.by_id[&id];
        self.populations[i].record_trial(g, s, step, trajectory, &self.pool)?;
        self.next_step(token)?;
        self.view(token)
    }

    /// Records the free-text strategy. The loss-strategy flag is coded
    /// outside the engine for people; scripted players supply it.
    pub fn submit_strategy(&mut self, token: &str, text: &str, flag: Option<bool>) -> Result<SessionView, ExperimentError> {
        let sess = self.session(token)?;
        let Step::Strategy(when) = sess.step() else {
            return Err(violation("strategy_entry", sess.step().phase()));
        };
        let (id, g, s) = (sess.population.clone(), sess.generation, sess.seat);
        let pop = self.population_mut(&id)?;
        pop.push(g, s, Event::Strategy { when, text: text.to_string() })?;
        if let Some(flag) = flag {
            pop.push(g, s, Event::StrategyFlag { flag })?;
        }
        self.next_step(token)?;
        self.view(token)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{machines, pool};
    use super::super::Condition;
    use super::*;
    use crate::strategies::{loss_seeking_choice, myopic_choice};

    fn engine(condition: Condition) -> (Engine, String) {
        let mut e = Engine::new(pool(80), machines(), 9);
        let id = e.create_population(PopulationSpec { condition, seed: 4, ..Default::default() }).unwrap();
        (e, id)
    }

    fn play_rule(e: &mut Engine, token: &str, pick: fn(&[(NodeId, i32)]) -> NodeId) {
        loop {
            let v = e.view(token).unwrap();
            let net = v.network.unwrap();
            let choices: Vec<(NodeId, i32)> = net.choices.iter().map(|c| (c.target, c.reward)).collect();
            if e.play_move(token, pick(&choices)).unwrap().trial_complete {
                return;
            }
        }
    }

    /// Drives a seat to completion with a fixed rule player.
    fn finish_seat(e: &mut Engine, token: &str, pick: fn(&[(NodeId, i32)]) -> NodeId) {
        loop {
            let v = e.view(token).unwrap();
            match v.step {
                Step::Intro | Step::Observe(_) => {
                    e.advance(token).unwrap();
                }
                Step::Individual(_) | Step::TrySelf(_) | Step::Demonstration(_) => play_rule(e, token, pick),
                Step::Strategy(_) => {
                    e.submit_strategy(token, "take the big edges", Some(false)).unwrap();
                }
                Step::Selection => {
                    e.select(token, "A").unwrap();
                }
                Step::Repeat(_) => loop {
                    let v = e.view(token).unwrap();
                    let c = v.correction.unwrap_or(v.network.unwrap().choices[0].target);
                    if e.play_move(token, c).unwrap().trial_complete {
                        break;
                    }
                },
                Step::Done => return,
            }
        }
    }

    #[test]
    fn seats_fill_in_generation_order() {
        let (mut e, id) = engine(Condition::HumanMachine);
        let claims: Vec<Claim> = (0..5).map(|_| e.claim(Some(&id), PlayerKind::Human).unwrap()).collect();
        assert!(claims.iter().all(|c| c.generation == 0));
        assert_eq!(e.claim(Some(&id), PlayerKind::Human), Err(ExperimentError::GenerationIncomplete { generation: 0 }));
        for c in &claims {
            finish_seat(&mut e, &c.token, myopic_choice);
        }
        let next = e.claim(None, PlayerKind::Human).unwrap();
        assert_eq!(next.generation, 1);
        assert_eq!(e.population(&id).unwrap().run().seat(1, next.seat).candidates.len(), 5);
    }

    #[test]
    fn demonstration_average_is_shown() {
        let (mut e, id) = engine(Condition::HumanOnly);
        let claims: Vec<Claim> = (0..8).map(|_| e.claim(Some(&id), PlayerKind::Human).unwrap()).collect();
        for (i, c) in claims.iter().enumerate() {
            finish_seat(&mut e, &c.token, if i == 0 { loss_seeking_choice } else { myopic_choice });
        }
        let run = e.population(&id).unwrap().run().clone();
        assert_eq!(run.seat(0, 0).demo_average(), Some(2650.0));
        assert_eq!(run.seat(0, 1).demo_average(), Some(2000.0));
        let c = e.claim(Some(&id), PlayerKind::Human).unwrap();
        e.advance(&c.token).unwrap();
        play_rule(&mut e, &c.token, myopic_choice);
        play_rule(&mut e, &c.token, myopic_choice);
        e.submit_strategy(&c.token, "", None).unwrap();
        let shown = e.candidates(&c.token).unwrap();
        assert_eq!(shown.own_average, Some(2000));
        let drawn = &e.population(&id).unwrap().run().seat(1, c.seat).candidates;
        for (view, &seat) in shown.candidates.iter().zip(drawn) {
            assert_eq!(view.average_score, if seat == 0 { 2650 } else { 2000 });
        }
        assert_eq!(shown.candidates.iter().map(|c| c.label.as_str()).collect::<Vec<_>>(), ["A", "B", "C", "D", "E"]);
    }

    #[test]
    fn phase_violations_are_rejected() {
        let (mut e, id) = engine(Condition::HumanMachine);
        let c = e.claim(Some(&id), PlayerKind::Human).unwrap();
        let err = e.play_move(&c.token, 1).unwrap_err();
        assert_eq!(err.code(), "phase_violation");
        assert_eq!(e.select(&c.token, "A").unwrap_err().code(), "phase_violation");
        e.advance(&c.token).unwrap();
        assert_eq!(e.advance(&c.token).unwrap_err().code(), "phase_violation");
        assert_eq!(e.view("nope").unwrap_err().code(), "unknown_session");
    }

    #[test]
    fn short_submission_is_incomplete() {
        let (mut e, id) = engine(Condition::HumanMachine);
        let c = e.claim(Some(&id), PlayerKind::Human).unwrap();
        e.advance(&c.token).unwrap();
        let err = e.submit_trajectory(&c.token, &[1, 2, 3]).unwrap_err();
        assert_eq!(err, ExperimentError::IncompleteTrajectory { moves: 3 });
        // nothing was recorded
        assert!(e.population(&id).unwrap().run().seat(0, c.seat).trials.is_empty());
        let v = e.view(&c.token).unwrap();
        let net = v.network.unwrap();
        let illegal = (0..12).find(|t| !net.choices.iter().any(|c| c.target == *t)).unwrap();
        assert_eq!(e.play_move(&c.token, illegal).unwrap_err().code(), "illegal_move");
    }

    #[test]
    fn repeat_scores_and_forces_corrections() {
        let (mut e, id) = engine(Condition::HumanMachine);
        let claims: Vec<Claim> = (0..5).map(|_| e.claim(Some(&id), PlayerKind::Human).unwrap()).collect();
        for c in &claims {
            finish_seat(&mut e, &c.token, myopic_choice);
        }
        let c = e.claim(Some(&id), PlayerKind::Human).unwrap();
        let tok = c.token.as_str();
        e.advance(tok).unwrap();
        play_rule(&mut e, tok, myopic_choice);
        play_rule(&mut e, tok, myopic_choice);
        e.submit_strategy(tok, "", None).unwrap();
        e.select(tok, "A").unwrap();
        let replay = e.replay(tok).unwrap();
        assert_eq!(replay.steps.len(), 10);
        e.advance(tok).unwrap();
        assert_eq!(e.replay(tok).unwrap_err().code(), "phase_violation");

        let mut tally = 0;
        for (i, step) in replay.steps.iter().enumerate() {
            let v = e.view(tok).unwrap();
            assert_eq!(v.network.as_ref().unwrap().current, step.from);
            let wrong = v.network.unwrap().choices.iter().map(|c| c.target).find(|&t| t != step.to);
            match (i % 2, wrong) {
                (0, Some(w)) => {
                    let out = e.play_move(tok, w).unwrap();
                    assert_eq!((out.points, out.matched), (-100, Some(false)));
                    tally -= 100;
                    assert_eq!(out.view.correction, Some(step.to));
                    assert_eq!(
                        e.play_move(tok, w).unwrap_err(),
                        ExperimentError::CorrectionRequired { expected: step.to }
                    );
                    assert_eq!(e.play_move(tok, step.to).unwrap().points, 0);
                }
                _ => {
                    assert_eq!(e.play_move(tok, step.to).unwrap().points, 100);
                    tally += 100;
                }
            }
        }
        let v = e.view(tok).unwrap();
        assert_eq!(v.step, Step::TrySelf(0));
        assert_eq!(v.repeat_tally, tally);
        let entries = e.population(&id).unwrap().ledger().entries();
        assert!(entries.iter().any(|en| matches!(&en.event, Event::Repeat { points, .. } if *points == tally)));
    }

    #[test]
    fn ledger_replay_rebuilds_the_run() {
        let (mut e, id) = engine(Condition::HumanMachine);
        for _ in 0..13 {
            let c = e.claim(Some(&id), PlayerKind::Human).unwrap();
            finish_seat(&mut e, &c.token, myopic_choice);
        }
        let pop = e.population(&id).unwrap();
        let entries = super::super::Ledger::read_jsonl(e.export(&id).unwrap().as_bytes()).unwrap();
        let back = Population::from_ledger(id.clone(), pop.run().spec.clone(), e.pool(), &entries).unwrap();
        assert_eq!(back.run(), pop.run());
        assert!(back.run().generation_complete(1));
    }
}
