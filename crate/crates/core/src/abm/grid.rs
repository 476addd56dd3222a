//! Parameter sweeps over discovery and transmission difficulty.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{run_population, AbmConfig, AbmError, CandidateCount, SelectionMode};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationType {
    HumanOnly,
    HumanMachine,
}

impl std::fmt::Display for PopulationType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PopulationType::HumanOnly => "human_only",
            PopulationType::HumanMachine => "human_machine",
        })
    }
}

/// Evenly spaced values from `start` to `end` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n).map(|i| self.start + (self.end - self.start) * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

/// Discovery difficulty is `-log10 d`, so a linear axis in difficulty is
/// log-spaced in the discovery rate. Transmission difficulty is `1 - t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub discovery: Axis,
    pub transmission: Axis,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            discovery: Axis { start: 0.0, end: 6.0, steps: 25 },
            transmission: Axis { start: 0.0, end: 0.30, steps: 36 },
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), AbmError> {
        let d = &self.discovery;
        let t = &self.transmission;
        if d.steps == 0 || t.steps == 0 {
            return Err(AbmError::InvalidConfig("grid axes need at least one step".into()));
        }
        if d.start.min(d.end) < 0.0 || !d.end.is_finite() {
            return Err(AbmError::InvalidConfig("discovery difficulty must be finite and non-negative".into()));
        }
        if t.start.min(t.end) < 0.0 || t.start.max(t.end) > 1.0 {
            return Err(AbmError::InvalidConfig("transmission difficulty must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.discovery.steps * self.transmission.steps
    }
}

/// One (population type, selection mode) sheet of the grid. Cell arrays are
/// row-major with one row per transmission difficulty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub population: PopulationType,
    pub mode: SelectionMode,
    pub config_hash: String,
    /// Mean final-generation share of optimal agents.
    pub adoption: Vec<f64>,
    /// Mean final-generation human demonstration reward.
    pub mean_reward: Vec<f64>,
}

impl Panel {
    pub fn row<'a>(&'a self, values: &'a [f64], spec: &GridSpec, ti: usize) -> &'a [f64] {
        let n = spec.discovery.steps;
        &values[ti * n..(ti + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub base: AbmConfig,
    pub spec: GridSpec,
    pub panels: Vec<Panel>,
}

impl GridResult {
    pub fn panel(&self, population: PopulationType, mode: SelectionMode) -> Option<&Panel> {
        self.panels.iter().find(|p| p.population == population && p.mode == mode)
    }

    /// Cell table: one row per panel and cell.
    pub fn write_heatmap_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "population",
            "mode",
            "discovery_difficulty",
            "transmission_difficulty",
            "adoption",
            "mean_reward",
        ])?;
        let (ds, ts) = (self.spec.discovery.values(), self.spec.transmission.values());
        for p in &self.panels {
            for (ti, t) in ts.iter().enumerate() {
                for (di, d) in ds.iter().enumerate() {
                    let i = ti * ds.len() + di;
                    w.write_record([
                        p.population.to_string(),
                        p.mode.to_string(),
                        d.to_string(),
                        t.to_string(),
                        p.adoption[i].to_string(),
                        p.mean_reward[i].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Boundary table: one row per panel and transmission difficulty.
    /// Rows without a crossing leave the difficulty empty and name the side.
    pub fn write_boundary_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["population", "mode", "transmission_difficulty", "discovery_difficulty", "crossing"])?;
        for p in &self.panels {
            for b in adoption_boundary(p, &self.spec) {
                let (at, kind) = match b.crossing {
                    Crossing::At { difficulty } => (difficulty.to_string(), "at"),
                    Crossing::NoCrossing { above: true } => (String::new(), "above"),
                    Crossing::NoCrossing { above: false } => (String::new(), "below"),
                };
                w.write_record([
                    p.population.to_string(),
                    p.mode.to_string(),
                    b.transmission_difficulty.to_string(),
                    at,
                    kind.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl GridResult {
    /// Uplift table: mixed minus human-only mean reward, per mode and cell.
    pub fn write_uplift_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mode", "discovery_difficulty", "transmission_difficulty", "uplift"])?;
        let (ds, ts) = (self.spec.discovery.values(), self.spec.transmission.values());
        for mode in [SelectionMode::Selective, SelectionMode::Random] {
            let (Some(m), Some(h)) =
                (self.panel(PopulationType::HumanMachine, mode), self.panel(PopulationType::HumanOnly, mode))
            else {
                continue;
            };
            let up = uplift(m, h);
            for (ti, t) in ts.iter().enumerate() {
                for (di, d) in ds.iter().enumerate() {
                    w.write_record([mode.to_string(), d.to_string(), t.to_string(), up[ti * ds.len() + di].to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub config_hash: String,
    pub population: PopulationType,
    pub mode: SelectionMode,
    pub discovery_difficulty: f64,
    pub transmission_difficulty: f64,
    pub replication: usize,
    pub final_adoption: f64,
    pub mean_human_reward: Vec<f64>,
}

fn config_hash(cfg: &AbmConfig, spec: &GridSpec) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(serde_json::to_vec(spec).expect("grid spec serializes"));
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn panel_configs(base: &AbmConfig) -> Vec<(PopulationType, SelectionMode, AbmConfig)> {
    let mut out = Vec::with_capacity(4);
    for population in [PopulationType::HumanOnly, PopulationType::HumanMachine] {
        for mode in [SelectionMode::Selective, SelectionMode::Random] {
            let machine_count = match population {
                PopulationType::HumanOnly => 0,
                PopulationType::HumanMachine => base.machine_count,
            };
            out.push((population, mode, AbmConfig { machine_count, selection_mode: mode, ..base.clone() }));
        }
    }
    out
}

/// Runs every cell of every panel and keeps the per-replication records.
///
/// Replication `r` of cell `(ti, di)` uses the same seed in all four panels.
pub fn run_grid_detailed(base: &AbmConfig, spec: &GridSpec) -> Result<(GridResult, Vec<ReplicationRecord>), AbmError> {
    base.validate()?;
    spec.validate()?;
    if base.machine_count == 0 {
        return Err(AbmError::InvalidConfig("a grid compares against machine populations; machine_count must be positive".into()));
    }
    let ds = spec.discovery.values();
    let ts = spec.transmission.values();
    let configs = panel_configs(base);
    let hashes: Vec<String> = configs.iter().map(|(_, _, c)| config_hash(c, spec)).collect();
    let (nt, nd) = (ts.len(), ds.len());
    let jobs: Vec<(usize, usize, usize)> = (0..configs.len())
        .flat_map(|p| (0..nt).flat_map(move |ti| (0..nd).map(move |di| (p, ti, di))))
        .collect();

    let cells: Vec<Vec<ReplicationRecord>> = jobs
        .par_iter()
        .map(|&(p, ti, di)| {
            let (population, mode, panel_cfg) = &configs[p];
            let cfg = AbmConfig {
                d_optimal: 10f64.powf(-ds[di]),
                transmission_rate: 1.0 - ts[ti],
                ..panel_cfg.clone()
            };
            (0..base.replications)
                .map(|rep| {
                    let mut rng = seed::rng_at(base.seed, &[seed::label("abm-cell"), ti as u64, di as u64, rep as u64]);
                    let run = run_population(&cfg, &mut rng);
                    ReplicationRecord {
                        config_hash: hashes[p].clone(),
                        population: *population,
                        mode: *mode,
                        discovery_difficulty: ds[di],
                        transmission_difficulty: ts[ti],
                        replication: rep,
                        final_adoption: run.final_adoption(),
                        mean_human_reward: run.records.iter().map(|r| r.mean_human_reward).collect(),
                    }
                })
                .collect()
        })
        .collect();

    let per_panel = ts.len() * ds.len();
    let mut panels = Vec::with_capacity(configs.len());
    for (p, (population, mode, _)) in configs.iter().enumerate() {
        let slice = &cells[p * per_panel..(p + 1) * per_panel];
        let mean = |f: &dyn Fn(&ReplicationRecord) -> f64| -> Vec<f64> {
            slice
                .iter()
                .map(|reps| if reps.is_empty() { 0.0 } else { reps.iter().map(f).sum::<f64>() / reps.len() as f64 })
                .collect()
        };
        panels.push(Panel {
            population: *population,
            mode: *mode,
            config_hash: hashes[p].clone(),
            adoption: mean(&|r| r.final_adoption),
            mean_reward: mean(&|r| r.mean_human_reward.last().copied().unwrap_or(0.0)),
        });
    }
    let records = cells.into_iter().flatten().collect();
    Ok((GridResult { base: base.clone(), spec: *spec, panels }, records))
}

/// Human-only and human-machine populations under both selection modes.
pub fn run_grid(base: &AbmConfig, spec: &GridSpec) -> Result<GridResult, AbmError> {
    run_grid_detailed(base, spec).map(|(g, _)| g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Crossing {
    At { difficulty: f64 },
    /// Adoption stays on one side of 50% along the whole row.
    NoCrossing { above: bool },
}

impl Crossing {
    /// Crossing difficulty, with rows that never cross pinned to the axis ends.
    pub fn clamped(&self, axis: &Axis) -> f64 {
        match *self {
            Crossing::At { difficulty } => difficulty,
            Crossing::NoCrossing { above: true } => axis.start.max(axis.end),
            Crossing::NoCrossing { above: false } => axis.start.min(axis.end),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub transmission_difficulty: f64,
    pub crossing: Crossing,
}

/// Where adoption along one row last drops below one half. Linear
/// interpolation between the last cell at or above 0.5 and its successor.
pub fn crossing(difficulties: &[f64], adoption: &[f64]) -> Crossing {
    assert_eq!(difficulties.len(), adoption.len());
    match adoption.iter().rposition(|&a| a >= 0.5) {
        None => Crossing::NoCrossing { above: false },
        Some(i) if i + 1 == adoption.len() => Crossing::NoCrossing { above: true },
        Some(i) => {
            let (a0, a1) = (adoption[i], adoption[i + 1]);
            let (d0, d1) = (difficulties[i], difficulties[i + 1]);
            Crossing::At { difficulty: d0 + (a0 - 0.5) / (a0 - a1) * (d1 - d0) }
        }
    }
}

/// The 50% adoption contour, one point per transmission difficulty.
pub fn adoption_boundary(panel: &Panel, spec: &GridSpec) -> Vec<BoundaryPoint> {
    let ds = spec.discovery.values();
    spec.transmission
        .values()
        .into_iter()
        .enumerate()
        .map(|(ti, t)| BoundaryPoint {
            transmission_difficulty: t,
            crossing: crossing(&ds, panel.row(&panel.adoption, spec, ti)),
        })
        .collect()
}

/// Cellwise difference in final-generation mean human reward.
pub fn uplift(mixed: &Panel, human: &Panel) -> Vec<f64> {
    mixed.mean_reward.iter().zip(&human.mean_reward).map(|(m, h)| m - h).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySuite {
    pub one_machine: GridResult,
    pub sixteen_agents: GridResult,
    pub all_candidates: GridResult,
}

/// Reruns the grid with a single machine, with 16 agents per generation, and
/// with every previous-generation agent as a candidate.
pub fn sensitivity_suite(base: &AbmConfig, spec: &GridSpec) -> Result<SensitivitySuite, AbmError> {
    Ok(SensitivitySuite {
        one_machine: run_grid(&AbmConfig { machine_count: 1, ..base.clone() }, spec)?,
        sixteen_agents: run_grid(&AbmConfig { agents_per_generation: 16, ..base.clone() }, spec)?,
        all_candidates: run_grid(&AbmConfig { candidate_count: CandidateCount::All, ..base.clone() }, spec)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GridSpec {
        GridSpec {
            discovery: Axis { start: 0.0, end: 6.0, steps: 4 },
            transmission: Axis { start: 0.0, end: 0.3, steps: 2 },
        }
    }

    #[test]
    fn axes_are_inclusive() {
        let v = GridSpec::default().discovery.values();
        assert_eq!(v.len(), 25);
        assert_eq!(v[0], 0.0);
        assert!((v[24] - 6.0).abs() < 1e-12);
        assert!((v[1] - 0.25).abs() < 1e-12);
        assert_eq!(GridSpec::default().transmission.values().len(), 36);
    }

    #[test]
    fn interpolated_crossing() {
        let c = crossing(&[1.0, 2.0, 3.0, 4.0], &[0.9, 0.6, 0.4, 0.1]);
        assert_eq!(c, Crossing::At { difficulty: 2.5 });
    }

    #[test]
    fn rows_without_crossing() {
        assert_eq!(crossing(&[1.0, 2.0], &[0.0, 0.0]), Crossing::NoCrossing { above: false });
        assert_eq!(crossing(&[1.0, 2.0], &[0.7, 0.5]), Crossing::NoCrossing { above: true });
    }

    #[test]
    fn last_downward_crossing_wins() {
        // dips below and recovers before the final drop
        let c = crossing(&[0.0, 1.0, 2.0, 3.0], &[0.8, 0.4, 0.6, 0.2]);
        assert_eq!(c, Crossing::At { difficulty: 2.25 });
    }

    #[test]
    fn trivial_discovery_cell_adopts() {
        let base = AbmConfig { replications: 20, ..Default::default() };
        let g = run_grid(&base, &small()).unwrap();
        for p in &g.panels {
            assert!(p.adoption[0] > 0.95, "{:?} {:?}: {}", p.population, p.mode, p.adoption[0]);
        }
    }

    #[test]
    fn grid_is_deterministic_and_hashed() {
        let base = AbmConfig { replications: 5, seed: 9, ..Default::default() };
        let (a, ra) = run_grid_detailed(&base, &small()).unwrap();
        let (b, rb) = run_grid_detailed(&base, &small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(ra.len(), 4 * 8 * 5);
        let hashes: std::collections::BTreeSet<_> = a.panels.iter().map(|p| p.config_hash.clone()).collect();
        assert_eq!(hashes.len(), 4);
        assert!(ra.iter().all(|r| r.mean_human_reward.len() == 5));
    }

    #[test]
    fn boundary_csv_marks_sides() {
        let base = AbmConfig { replications: 5, ..Default::default() };
        let g = run_grid(&base, &small()).unwrap();
        let mut buf = Vec::new();
        g.write_boundary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * 2);
        let mut heat = Vec::new();
        g.write_heatmap_csv(&mut heat).unwrap();
        assert_eq!(String::from_utf8(heat).unwrap().lines().count(), 1 + 4 * 8);
    }

    #[test]
    fn invalid_axes_rejected() {
        let spec = GridSpec { transmission: Axis { start: 0.0, end: 1.5, steps: 3 }, ..small() };
        assert!(run_grid(&AbmConfig::default(), &spec).is_err());
        let no_machines = AbmConfig { machine_count: 0, ..Default::default() };
        assert!(run_grid(&no_machines, &small()).is_err());
    }
}
