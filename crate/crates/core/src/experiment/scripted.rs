//! Scripted learners: simulated players that drive the same session API as
//! people do, copying their demonstrator's policy with a set fidelity.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Condition, Engine, ExperimentError, PlayerKind, PopulationSpec, Step};
use crate::abm::SelectionMode;
use crate::dqn::{masked_argmax, Input, QNetwork};
use crate::network::{NodeId, Observation};
use crate::seed;
use crate::strategies::{loss_seeking_choice, myopic_choice};

/// The policy a lineage started from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "machine", rename_all = "snake_case")]
pub enum RootPolicy {
    Myopic,
    LossSeeking,
    /// Index into the engine's machine players.
    Machine(usize),
}

/// Each move follows `root` with probability `copy_prob`, else the myopic
/// choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPolicy {
    pub root: RootPolicy,
    pub copy_prob: f64,
}

impl ScriptedPolicy {
    pub const MYOPIC: ScriptedPolicy = ScriptedPolicy { root: RootPolicy::Myopic, copy_prob: 1.0 };

    pub fn uses_losses(&self) -> bool {
        self.root != RootPolicy::Myopic && self.copy_prob > 0.0
    }

    fn describe(&self) -> &'static str {
        if self.uses_losses() {
            "Take the losses early to climb to the level with the big rewards, then stay there."
        } else {
            "Pick the largest reward on every move."
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedBehavior {
    /// Probability of reproducing a demonstrated move, and the factor
    /// applied to the inherited copy probability.
    pub fidelity: f64,
    /// Per-seat chance of finding the loss strategy alone.
    pub discovery_prob: f64,
    pub selection: SelectionMode,
}

impl Default for ScriptedBehavior {
    fn default() -> Self {
        ScriptedBehavior { fidelity: 1.0, discovery_prob: 0.0, selection: SelectionMode::Selective }
    }
}

impl ScriptedBehavior {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        for (name, p) in [("fidelity", self.fidelity), ("discovery probability", self.discovery_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ExperimentError::InvalidSpec(format!("{name} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Plays moves one at a time through the session until the trial ends.
fn play_trial(
    engine: &mut Engine,
    token: &str,
    policy: ScriptedPolicy,
    rng: &mut seed::Rng,
) -> Result<(), ExperimentError> {
    let mut hidden = QNetwork::initial_hidden();
    loop {
        let view = engine.view(token)?;
        let nv = view.network.expect("trial steps show a network");
        let choices: Vec<(NodeId, i32)> = nv.choices.iter().map(|c| (c.target, c.reward)).collect();
        let root_move = match policy.root {
            RootPolicy::Myopic => myopic_choice(&choices),
            RootPolicy::LossSeeking => loss_seeking_choice(&choices),
            RootPolicy::Machine(k) => {
                // the recurrent state follows every move, copied or not
                let input = Input::from(&Observation::of(&nv.network, nv.current));
                let q = engine.machines()[k].net.forward_q(&mut hidden, &input);
                masked_argmax(&q, &input.mask).expect("node without outgoing edges")
            }
        };
        let target = if rng.random::<f64>() < policy.copy_prob { root_move } else { myopic_choice(&choices) };
        if engine.play_move(token, target)?.trial_complete {
            return Ok(());
        }
    }
}

/// Fills every remaining seat of a population with scripted learners.
pub fn run_scripted_population(
    engine: &mut Engine,
    population: &str,
    behavior: &ScriptedBehavior,
    seed: u64,
) -> Result<(), ExperimentError> {
    behavior.validate()?;
    let mut policies: HashMap<(usize, usize), ScriptedPolicy> = HashMap::new();
    {
        let run = engine.population(population)?.run();
        for (s, rec) in run.seats[0].iter().enumerate() {
            if let (Some(PlayerKind::Machine), Some(ms)) = (rec.kind, rec.machine) {
                let k = engine
                    .machines()
                    .iter()
                    .position(|m| m.seed == ms)
                    .ok_or(ExperimentError::MissingMachines { needed: 1, available: 0 })?;
                policies.insert((0, s), ScriptedPolicy { root: RootPolicy::Machine(k), copy_prob: 1.0 });
            }
        }
    }
    let pop_label = seed::label(population);
    loop {
        let claim = match engine.claim(Some(population), PlayerKind::Scripted) {
            Ok(c) => c,
            Err(ExperimentError::NoSeatAvailable) => return Ok(()),
            Err(e) => return Err(e),
        };
        let (g, s, token) = (claim.generation, claim.seat, claim.token);
        let mut rng = seed::rng_at(seed, &[seed::label("scripted"), pop_label, g as u64, s as u64]);
        let own = if rng.random::<f64>() < behavior.discovery_prob {
            ScriptedPolicy { root: RootPolicy::LossSeeking, copy_prob: 1.0 }
        } else {
            ScriptedPolicy::MYOPIC
        };
        let mut policy = own;
        let mut observed: Vec<Vec<NodeId>> = Vec::new();
        loop {
            match engine.view(&token)?.step {
                Step::Intro => {
                    engine.advance(&token)?;
                }
                Step::Observe(_) => {
                    observed.push(engine.replay(&token)?.steps.iter().map(|st| st.to).collect());
                    engine.advance(&token)?;
                }
                Step::Individual(_) => play_trial(engine, &token, own, &mut rng)?,
                Step::TrySelf(_) | Step::Demonstration(_) => play_trial(engine, &token, policy, &mut rng)?,
                Step::Strategy(_) => {
                    engine.submit_strategy(&token, policy.describe(), Some(policy.uses_losses()))?;
                }
                Step::Selection => {
                    let shown = engine.candidates(&token)?.candidates;
                    let pick = match behavior.selection {
                        SelectionMode::Random => shown.choose(&mut rng),
                        SelectionMode::Selective => {
                            let best = shown.iter().map(|c| c.average_score).max().expect("candidates exist");
                            let top: Vec<_> = shown.iter().filter(|c| c.average_score == best).collect();
                            top.choose(&mut rng).copied()
                        }
                    }
                    .expect("candidates exist");
                    engine.select(&token, &pick.label)?;
                    let d = engine.population(population)?.run().seat(g, s).demonstrator.expect("just selected");
                    let inherited = policies.get(&(g - 1, d)).copied().unwrap_or(ScriptedPolicy::MYOPIC);
                    if !own.uses_losses() && inherited.root != RootPolicy::Myopic {
                        policy = ScriptedPolicy { root: inherited.root, copy_prob: inherited.copy_prob * behavior.fidelity };
                    }
                }
                Step::Repeat(k) => loop {
                    let view = engine.view(&token)?;
                    let target = match view.correction {
                        Some(c) => c,
                        None => {
                            let nv = view.network.expect("repeat shows the network");
                            let expected = observed[k][nv.move_index];
                            if rng.random::<f64>() < behavior.fidelity {
                                expected
                            } else {
                                let choices: Vec<(NodeId, i32)> = nv.choices.iter().map(|c| (c.target, c.reward)).collect();
                                myopic_choice(&choices)
                            }
                        }
                    };
                    if engine.play_move(&token, target)?.trial_complete {
                        break;
                    }
                },
                Step::Done => break,
            }
        }
        policies.insert((g, s), policy);
    }
}

/// Creates `per_condition` human-machine populations followed by as many
/// human-only ones and fills all of them with scripted learners.
pub fn run_design(
    engine: &mut Engine,
    per_condition: usize,
    template: &PopulationSpec,
    behavior: &ScriptedBehavior,
    seed: u64,
) -> Result<Vec<String>, ExperimentError> {
    let mut ids = Vec::with_capacity(2 * per_condition);
    for (c, condition) in [Condition::HumanMachine, Condition::HumanOnly].into_iter().enumerate() {
        for i in 0..per_condition {
            let spec = PopulationSpec {
                condition,
                seed: seed::derive(seed, &[seed::label("population"), c as u64, i as u64]),
                ..template.clone()
            };
            ids.push(engine.create_population(spec)?);
        }
    }
    for id in &ids {
        run_scripted_population(engine, id, behavior, seed)?;
    }
    Ok(ids)
}
