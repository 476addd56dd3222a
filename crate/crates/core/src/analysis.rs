//! Post-hoc analysis of experiment populations: outcome labels, per-generation
//! aggregates, lineage statistics and tidy CSV tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dqn::congruency;
use crate::experiment::{Condition, MachinePlayer, PlayerKind, Pool, PopulationRun};
use crate::fsutil::write_atomic;

/// Scores above this require the loss strategy; the myopic score is 2000.
pub const DISCOVERY_THRESHOLD: f64 = 2000.0;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("population {population} is incomplete: seat {generation}/{seat} has not finished")]
    IncompleteRun { population: String, generation: usize, seat: usize },
    #[error("no machine player loaded to compare against")]
    NoReferenceMachine,
    #[error("network {0} is not in the pool")]
    UnknownNetwork(String),
    #[error("trajectory does not replay: {0}")]
    Trajectory(#[from] crate::dqn::TrajectoryMismatch),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    PermanentlyPreserved,
    TemporarilyPreserved,
    Discovered,
    NotDiscovered,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::PermanentlyPreserved => "permanently_preserved",
            Outcome::TemporarilyPreserved => "temporarily_preserved",
            Outcome::Discovered => "discovered",
            Outcome::NotDiscovered => "not_discovered",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub population: String,
    pub condition: Condition,
    pub outcome: Outcome,
    /// Best demonstration average of each generation.
    pub top: Vec<f64>,
}

fn check_complete(run: &PopulationRun) -> Result<(), AnalysisError> {
    for (g, seats) in run.seats.iter().enumerate() {
        if let Some(s) = seats.iter().find(|s| !s.complete) {
            return Err(AnalysisError::IncompleteRun { population: run.id.clone(), generation: g, seat: s.seat });
        }
    }
    Ok(())
}

/// Labels a finished population by its top performers.
///
/// A mixed population is preserved when generation 1's best beats the
/// threshold, permanently if every later generation's best does too. One
/// whose generation 1 misses the threshold is labelled like a human-only
/// population, by its final generation.
pub fn classify(run: &PopulationRun) -> Result<Classification, AnalysisError> {
    check_complete(run)?;
    let top: Vec<f64> = run
        .seats
        .iter()
        .map(|g| g.iter().filter_map(|s| s.demo_average()).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let above = |g: usize| top[g] > DISCOVERY_THRESHOLD;
    let last = top.len() - 1;
    let outcome = if run.spec.condition == Condition::HumanMachine && last >= 1 && above(1) {
        if (1..=last).all(above) {
            Outcome::PermanentlyPreserved
        } else {
            Outcome::TemporarilyPreserved
        }
    } else if above(last) {
        Outcome::Discovered
    } else {
        Outcome::NotDiscovered
    };
    Ok(Classification { population: run.id.clone(), condition: run.spec.condition, outcome, top })
}

/// Generation-0 seat a seat's demonstrator chain leads back to.
pub fn lineage_root(run: &PopulationRun, generation: usize, seat: usize) -> usize {
    let (mut g, mut s) = (generation, seat);
    while g > 0 {
        match run.seats[g][s].demonstrator {
            Some(d) => {
                g -= 1;
                s = d;
            }
            None => break,
        }
    }
    s
}

fn descends_from_machine(run: &PopulationRun, generation: usize, seat: usize) -> bool {
    let mut g = generation;
    let mut s = seat;
    while g > 0 {
        let Some(d) = run.seats[g][s].demonstrator else { return false };
        g -= 1;
        s = d;
    }
    run.seats[0][s].kind == Some(PlayerKind::Machine)
}

/// An externally coded strategy flag for one seat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyAnnotation {
    pub population: String,
    pub generation: usize,
    pub seat: usize,
    pub flag: bool,
}

/// Overrides seat strategy flags with annotations. Returns how many
/// annotations matched a seat.
pub fn annotate(runs: &mut [PopulationRun], annotations: &[StrategyAnnotation]) -> usize {
    let mut applied = 0;
    for a in annotations {
        let seat = runs
            .iter_mut()
            .find(|r| r.id == a.population)
            .and_then(|r| r.seats.get_mut(a.generation))
            .and_then(|g| g.get_mut(a.seat));
        if let Some(rec) = seat {
            rec.strategy_flag = Some(a.flag);
            applied += 1;
        }
    }
    applied
}

pub fn read_annotations(path: &Path) -> Result<Vec<StrategyAnnotation>, AnalysisError> {
    read_csv(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageStats {
    pub population: String,
    /// Per generation, the share of non-machine seats descending from a machine.
    pub machine_descent: Vec<f64>,
    pub final_machine_descent: f64,
    /// Generation-1 demonstrator choices by the chosen seat's kind.
    pub gen1_chose_machine: usize,
    pub gen1_chose_human: usize,
}

pub fn lineage_stats(run: &PopulationRun) -> Result<LineageStats, AnalysisError> {
    check_complete(run)?;
    let machine_descent: Vec<f64> = (0..run.spec.generations)
        .map(|g| {
            let seats: Vec<usize> =
                (0..run.spec.seats_per_generation).filter(|&s| run.seats[g][s].kind != Some(PlayerKind::Machine)).collect();
            if seats.is_empty() {
                return 0.0;
            }
            seats.iter().filter(|&&s| descends_from_machine(run, g, s)).count() as f64 / seats.len() as f64
        })
        .collect();
    let (mut m, mut h) = (0, 0);
    if run.spec.generations > 1 {
        for rec in &run.seats[1] {
            if let Some(d) = rec.demonstrator {
                if run.seats[0][d].kind == Some(PlayerKind::Machine) {
                    m += 1;
                } else {
                    h += 1;
                }
            }
        }
    }
    Ok(LineageStats {
        population: run.id.clone(),
        final_machine_descent: *machine_descent.last().expect("at least one generation"),
        machine_descent,
        gen1_chose_machine: m,
        gen1_chose_human: h,
    })
}

/// One demonstration trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub population: String,
    pub condition: Condition,
    pub generation: usize,
    pub seat: usize,
    pub kind: PlayerKind,
    pub trial: usize,
    pub network_id: String,
    pub total: i32,
    pub congruency: f64,
    /// Seed of the machine the moves were compared with.
    pub reference_machine: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRow {
    pub population: String,
    pub generation: usize,
    pub seat: usize,
    pub trial: usize,
    pub step: usize,
    pub target: usize,
    pub reward: i32,
    pub congruent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRow {
    pub population: String,
    pub condition: Condition,
    pub generation: usize,
    pub seat: usize,
    pub kind: PlayerKind,
    pub demonstrator: Option<usize>,
    pub lineage_root: usize,
    pub machine_descent: bool,
    pub demo_average: f64,
    pub repeat_tally: i32,
    pub strategy_flag: Option<bool>,
    pub strategy_pre: String,
    pub strategy_post: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tidy {
    pub trials: Vec<TrialRow>,
    pub moves: Vec<MoveRow>,
    pub participants: Vec<ParticipantRow>,
}

/// Flattens finished populations into tidy tables, keeping generations from
/// `first_generation` on.
///
/// Moves are compared with the machine at the root of the seat's lineage;
/// seats that do not descend from a machine are compared with the first
/// machine in `machines`.
pub fn tidy(
    runs: &[PopulationRun],
    machines: &[MachinePlayer],
    pool: &Pool,
    first_generation: usize,
) -> Result<Tidy, AnalysisError> {
    let default = machines.first().ok_or(AnalysisError::NoReferenceMachine)?;
    let by_seed: HashMap<u64, &MachinePlayer> = machines.iter().map(|m| (m.seed, m)).collect();
    let mut out = Tidy::default();
    for run in runs {
        check_complete(run)?;
        for g in first_generation..run.spec.generations {
            for rec in &run.seats[g] {
                let s = rec.seat;
                let kind = rec.kind.expect("complete seats are claimed");
                let root = lineage_root(run, g, s);
                let reference = run.seats[0][root]
                    .machine
                    .filter(|_| g == 0 || rec.demonstrator.is_some())
                    .and_then(|seed| by_seed.get(&seed).copied())
                    .unwrap_or(default);
                for t in rec.demonstrations() {
                    let net = pool
                        .get(&t.trajectory.network_id)
                        .ok_or_else(|| AnalysisError::UnknownNetwork(t.trajectory.network_id.clone()))?;
                    let c = congruency(&reference.net, net, &t.trajectory)?;
                    for (step, ((&target, &reward), &congruent)) in
                        t.trajectory.moves.iter().zip(&t.trajectory.rewards).zip(&c.matches).enumerate()
                    {
                        out.moves.push(MoveRow {
                            population: run.id.clone(),
                            generation: g,
                            seat: s,
                            trial: t.index,
                            step,
                            target,
                            reward,
                            congruent,
                        });
                    }
                    out.trials.push(TrialRow {
                        population: run.id.clone(),
                        condition: run.spec.condition,
                        generation: g,
                        seat: s,
                        kind,
                        trial: t.index,
                        network_id: t.trajectory.network_id.clone(),
                        total: t.trajectory.total,
                        congruency: c.fraction(),
                        reference_machine: reference.seed,
                    });
                }
                out.participants.push(ParticipantRow {
                    population: run.id.clone(),
                    condition: run.spec.condition,
                    generation: g,
                    seat: s,
                    kind,
                    demonstrator: rec.demonstrator,
                    lineage_root: root,
                    machine_descent: descends_from_machine(run, g, s),
                    demo_average: rec.demo_average().unwrap_or(0.0),
                    repeat_tally: rec.repeat_tally,
                    strategy_flag: rec.strategy_flag,
                    strategy_pre: rec.strategy_pre.clone().unwrap_or_default(),
                    strategy_post: rec.strategy_post.clone().unwrap_or_default(),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetrics {
    pub condition: Condition,
    pub generation: usize,
    pub populations: usize,
    /// Grand mean over populations of the population's mean demonstration score.
    pub mean_reward: f64,
    pub mean_congruency: f64,
    /// Flagged share among seats whose strategy was rated; 0 when none was.
    pub strategy_flag_fraction: f64,
    pub strategy_flag_count: usize,
}

/// Per-(condition, generation) aggregates over non-machine seats.
pub fn aggregate(t: &Tidy) -> Vec<GenerationMetrics> {
    // (condition, generation) -> population -> (reward sum, congruency sum, n)
    let mut per: BTreeMap<(Condition, usize), BTreeMap<&str, (f64, f64, usize)>> = BTreeMap::new();
    for r in t.trials.iter().filter(|r| r.kind != PlayerKind::Machine) {
        let e = per.entry((r.condition, r.generation)).or_default().entry(&r.population).or_default();
        e.0 += r.total as f64;
        e.1 += r.congruency;
        e.2 += 1;
    }
    let mut flags: BTreeMap<(Condition, usize), (usize, usize)> = BTreeMap::new();
    for p in t.participants.iter().filter(|p| p.kind != PlayerKind::Machine) {
        if let Some(f) = p.strategy_flag {
            let e = flags.entry((p.condition, p.generation)).or_default();
            e.0 += f as usize;
            e.1 += 1;
        }
    }
    per.into_iter()
        .map(|((condition, generation), pops)| {
            let n = pops.len() as f64;
            let mean_reward = pops.values().map(|&(r, _, k)| r / k as f64).sum::<f64>() / n;
            let mean_congruency = pops.values().map(|&(_, c, k)| c / k as f64).sum::<f64>() / n;
            let (flagged, rated) = flags.get(&(condition, generation)).copied().unwrap_or((0, 0));
            GenerationMetrics {
                condition,
                generation,
                populations: pops.len(),
                mean_reward,
                mean_congruency,
                strategy_flag_fraction: if rated > 0 { flagged as f64 / rated as f64 } else { 0.0 },
                strategy_flag_count: rated,
            }
        })
        .collect()
}

pub fn aggregate_metrics(
    runs: &[PopulationRun],
    machines: &[MachinePlayer],
    pool: &Pool,
) -> Result<Vec<GenerationMetrics>, AnalysisError> {
    Ok(aggregate(&tidy(runs, machines, pool, 0)?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TidyPaths {
    pub trials: PathBuf,
    pub moves: PathBuf,
    pub participants: PathBuf,
}

impl TidyPaths {
    pub fn in_dir(dir: &Path) -> Self {
        TidyPaths {
            trials: dir.join("trials.csv"),
            moves: dir.join("moves.csv"),
            participants: dir.join("participants.csv"),
        }
    }
}

/// Rows as CSV with a header, columns in field order.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, AnalysisError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| AnalysisError::Io(e.into_error()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), AnalysisError> {
    write_atomic(path, &to_csv(rows)?)?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, AnalysisError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

pub fn export_tidy(t: &Tidy, dir: &Path) -> Result<TidyPaths, AnalysisError> {
    let paths = TidyPaths::in_dir(dir);
    write_csv(&paths.trials, &t.trials)?;
    write_csv(&paths.moves, &t.moves)?;
    write_csv(&paths.participants, &t.participants)?;
    Ok(paths)
}

pub fn load_tidy(dir: &Path) -> Result<Tidy, AnalysisError> {
    let paths = TidyPaths::in_dir(dir);
    Ok(Tidy {
        trials: read_csv(&paths.trials)?,
        moves: read_csv(&paths.moves)?,
        participants: read_csv(&paths.participants)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::testutil::{machines, pool};
    use crate::experiment::{run_design, Engine, PopulationSpec, ScriptedBehavior};

    fn design(behavior: ScriptedBehavior) -> Engine {
        let mut e = Engine::new(pool(120), machines(), 2);
        run_design(&mut e, 2, &PopulationSpec::default(), &behavior, 8).unwrap();
        e
    }

    fn run_with_tops(condition: Condition, tops: &[f64]) -> PopulationRun {
        let mut e = Engine::new(pool(60), machines(), 0);
        let spec = PopulationSpec { condition, generations: tops.len(), ..Default::default() };
        let id = e.create_population(spec).unwrap();
        crate::experiment::run_scripted_population(&mut e, &id, &ScriptedBehavior::default(), 0).unwrap();
        let mut run = e.population(&id).unwrap().run().clone();
        // overwrite the best seat's demonstration totals
        for (g, &top) in tops.iter().enumerate() {
            for rec in run.seats[g].iter_mut() {
                for t in rec.trials.iter_mut() {
                    t.trajectory.total = 1000;
                }
            }
            for t in run.seats[g][7].trials.iter_mut() {
                t.trajectory.total = top as i32;
            }
        }
        run
    }

    #[test]
    fn outcome_labels() {
        let hm = Condition::HumanMachine;
        let ho = Condition::HumanOnly;
        let label = |c, tops: &[f64]| classify(&run_with_tops(c, tops)).unwrap().outcome;
        assert_eq!(label(hm, &[2600.0, 2650.0, 2400.0, 2100.0, 2001.0]), Outcome::PermanentlyPreserved);
        assert_eq!(label(hm, &[2600.0, 2650.0, 2400.0, 2100.0, 2000.0]), Outcome::TemporarilyPreserved);
        assert_eq!(label(hm, &[2600.0, 2000.0, 2000.0, 2000.0, 2650.0]), Outcome::Discovered);
        assert_eq!(label(ho, &[2000.0, 2650.0, 2650.0, 2650.0, 2000.0]), Outcome::NotDiscovered);
        assert_eq!(label(ho, &[2000.0, 2000.0, 2000.0, 2000.0, 2050.0]), Outcome::Discovered);
    }

    #[test]
    fn incomplete_runs_are_rejected() {
        let mut e = Engine::new(pool(60), machines(), 0);
        let id = e.create_population(PopulationSpec::default()).unwrap();
        let err = classify(e.population(&id).unwrap().run()).unwrap_err();
        assert!(matches!(err, AnalysisError::IncompleteRun { generation: 0, .. }));
    }

    #[test]
    fn machine_lineages_are_fully_congruent() {
        let e = design(ScriptedBehavior::default());
        let runs = e.runs();
        let t = tidy(&runs, e.machines(), e.pool(), 0).unwrap();
        for row in &t.trials {
            let p = t.participants.iter().find(|p| (&p.population, p.generation, p.seat) == (&row.population, row.generation, row.seat)).unwrap();
            if p.machine_descent || p.kind == PlayerKind::Machine {
                assert_eq!(row.congruency, 1.0, "{row:?}");
            }
        }
        // the scripted learners with perfect fidelity copy the best demonstrator
        for run in &runs {
            let stats = lineage_stats(run).unwrap();
            assert_eq!(stats.gen1_chose_machine + stats.gen1_chose_human, 8);
        }
    }

    #[test]
    fn row_counts_and_generation_filter() {
        let e = design(ScriptedBehavior::default());
        let runs = e.runs();
        let all = tidy(&runs, e.machines(), e.pool(), 0).unwrap();
        assert_eq!(all.trials.len(), 4 * 5 * 8 * 4);
        assert_eq!(all.moves.len(), 10 * all.trials.len());
        assert_eq!(all.participants.len(), 4 * 5 * 8);
        let later = tidy(&runs, e.machines(), e.pool(), 1).unwrap();
        assert_eq!(later.trials.len(), 4 * 4 * 8 * 4);
    }

    #[test]
    fn export_reload_matches_memory() {
        let e = design(ScriptedBehavior { fidelity: 0.8, discovery_prob: 0.1, ..Default::default() });
        let t = tidy(&e.runs(), e.machines(), e.pool(), 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_tidy(&t, dir.path()).unwrap();
        let back = load_tidy(dir.path()).unwrap();
        assert_eq!(back, t);
        assert_eq!(aggregate(&back), aggregate_metrics(&e.runs(), e.machines(), e.pool()).unwrap());
    }

    #[test]
    fn unrated_flags_give_zero_with_count() {
        let e = design(ScriptedBehavior::default());
        let mut t = tidy(&e.runs(), e.machines(), e.pool(), 0).unwrap();
        t.participants.iter_mut().for_each(|p| p.strategy_flag = None);
        for row in aggregate(&t) {
            assert_eq!((row.strategy_flag_fraction, row.strategy_flag_count), (0.0, 0));
        }
    }

    #[test]
    fn annotations_override_flags() {
        let e = design(ScriptedBehavior::default());
        let mut runs = e.runs();
        let id = runs[2].id.clone();
        let notes = vec![
            StrategyAnnotation { population: id.clone(), generation: 3, seat: 1, flag: true },
            StrategyAnnotation { population: "missing".into(), generation: 0, seat: 0, flag: true },
        ];
        assert_eq!(annotate(&mut runs, &notes), 1);
        assert_eq!(runs[2].seat(3, 1).strategy_flag, Some(true));
    }

    #[test]
    fn aggregates_are_grand_means() {
        let e = design(ScriptedBehavior::default());
        let m = aggregate_metrics(&e.runs(), e.machines(), e.pool()).unwrap();
        assert_eq!(m.len(), 10);
        for row in &m {
            assert_eq!(row.populations, 2);
            assert!((0.0..=1.0).contains(&row.mean_congruency));
            assert_eq!(row.strategy_flag_count, if row.generation == 0 && row.condition == Condition::HumanMachine { 10 } else { 16 });
        }
        let ho: Vec<_> = m.iter().filter(|r| r.condition == Condition::HumanOnly).collect();
        assert!(ho.iter().all(|r| r.mean_reward == 2000.0 && r.strategy_flag_fraction == 0.0));
    }
}
