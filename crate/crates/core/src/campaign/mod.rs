//! The outer optimization loop: design of experiments, then repeated
//! fit → propose → evaluate/ingest, with every transition producing a new
//! [`CampaignState`]. A failed transition leaves the input state untouched.
//!
//! Two backends drive evaluation. In embedded mode a built-in [`Evaluator`]
//! scores each batch immediately; in external mode the batch is written as a
//! proposals CSV and the state waits for [`ingest`].

mod state;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use state::{
    load_state, save_state, CampaignState, FittedChannel, PendingBatch, PendingPoint, Stage, StepRecord,
    STATE_FILE, STATE_VERSION,
};

use crate::acquisition::{incumbent, AcquisitionConfig, Incumbent};
use crate::data::{Dataset, Observation, Provenance, DUPLICATE_TOL};
use crate::error::{Error, Result};
use crate::evaluators::protocol::{proposal_id, proposals_file_name, read_results, write_proposals};
use crate::evaluators::Evaluator;
use crate::gp::{fit_with, Channel, FitOptions, GpModel, MATERN_NU};
use crate::optimize::{propose_batch, OptimizerBudget};
use crate::par;
use crate::qmc::SamplerKind;
use crate::seeds::derive_seed;
use crate::space::{latin_hypercube_with, LhsPlacement, ParameterSpace, UnitPoint};

/// Where batches get evaluated.
#[derive(Clone, Copy)]
pub enum Backend<'a> {
    /// Evaluate in process.
    Embedded(&'a dyn Evaluator),
    /// Write proposals CSVs into this directory and wait for results.
    External(&'a Path),
}

/// Everything needed to start a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSetup {
    pub space: ParameterSpace,
    pub acq: AcquisitionConfig,
    pub budget: OptimizerBudget,
    pub fit: FitOptions,
    pub doe_n: usize,
    pub lhs: LhsPlacement,
    pub raw_sampler: SamplerKind,
    pub seed: u64,
}

impl CampaignSetup {
    pub fn new(space: ParameterSpace, acq: AcquisitionConfig, doe_n: usize, seed: u64) -> Self {
        Self {
            space,
            acq,
            budget: OptimizerBudget::default(),
            fit: FitOptions::default(),
            doe_n,
            lhs: LhsPlacement::Random,
            raw_sampler: SamplerKind::Sobol,
            seed,
        }
    }
}

// Seed streams under the campaign seed.
const STREAM_DOE: u64 = 0;
const FIT_K: u64 = 0;
const FIT_V: u64 = 1;
const PROPOSE: u64 = 2;
const RESAMPLE: u64 = 3;

fn iteration_seed(state: &CampaignState, iteration: u32) -> u64 {
    derive_seed(state.rng_seed, 1 + iteration as u64)
}

/// Creates the campaign and its Latin hypercube design. Embedded mode
/// evaluates the design right away; external mode leaves it pending.
pub fn init_campaign(setup: CampaignSetup, backend: Backend<'_>) -> Result<CampaignState> {
    if setup.doe_n < 2 {
        return Err(Error::invalid(format!(
            "initial design needs at least 2 points, got {}",
            setup.doe_n
        )));
    }
    let mut state = CampaignState {
        version: STATE_VERSION,
        space: setup.space,
        acq: setup.acq,
        budget: setup.budget,
        fit: setup.fit,
        doe_n: setup.doe_n,
        lhs: setup.lhs,
        raw_sampler: setup.raw_sampler,
        rng_seed: setup.seed,
        iteration: 0,
        dataset: Dataset::new(),
        pending: None,
        fitted_k: None,
        fitted_v: None,
        kernel_nu: MATERN_NU,
        log: Vec::new(),
    };
    state.acq.validate()?;
    state.budget.validate()?;
    let design = latin_hypercube_with(
        &state.space,
        state.doe_n,
        derive_seed(state.rng_seed, STREAM_DOE),
        state.lhs,
    )?;
    settle_batch(&mut state, design, Stage::Doe, backend)?;
    Ok(state)
}

/// One optimization iteration: fit both surrogates, propose `q` designs and
/// evaluate them (embedded) or write them out (external).
pub fn step(state: &CampaignState, backend: Backend<'_>) -> Result<CampaignState> {
    if state.pending.is_some() {
        return Err(Error::InvalidState(
            "results for the pending batch must be ingested before the next step".into(),
        ));
    }
    if state.dataset.len() < 2 {
        return Err(Error::InvalidState("need at least 2 observations to fit surrogates".into()));
    }
    let mut next = state.clone();
    let target = state.iteration + 1;
    let seed = iteration_seed(state, state.iteration);
    let (model_k, model_v) = fit_models(state, seed)?;
    let inc = incumbent(&state.dataset, state.acq.threshold)?;

    let mut acq = state.acq.clone();
    acq.sampler = state.raw_sampler;
    let proposal = propose_batch(
        &model_k,
        &model_v,
        &acq,
        inc.map(|i| i.value),
        &state.budget,
        derive_seed(seed, PROPOSE),
    )?;
    let (points, resampled) = resolve_collisions(state, proposal.points, derive_seed(seed, RESAMPLE));

    next.fitted_k = Some(FittedChannel {
        hyper: model_k.hyperparameters().clone(),
        standardization: model_k.standardization(),
    });
    next.fitted_v = Some(FittedChannel {
        hyper: model_v.hyperparameters().clone(),
        standardization: model_v.standardization(),
    });
    next.log.push(StepRecord {
        iteration: target,
        acquisition_value: proposal.value,
        raw_best: proposal.raw_best,
        feasibility_fallback: inc.is_none(),
        resampled,
    });
    settle_batch(&mut next, points, Stage::Iteration(target), backend)?;
    Ok(next)
}

/// Appends the results of the pending batch. The input state is not modified,
/// so a failed ingest leaves nothing half-applied.
pub fn ingest(state: &CampaignState, results_path: &Path) -> Result<CampaignState> {
    let pending = state
        .pending
        .as_ref()
        .ok_or_else(|| Error::InvalidState("no pending proposals to ingest".into()))?;
    let rows = read_results(results_path, &pending.ids())?;
    let mut next = state.clone();
    let provenance = match pending.stage {
        Stage::Doe => Provenance::Doe,
        Stage::Iteration(n) => Provenance::BoIter(n),
    };
    for p in &pending.points {
        let r = rows.iter().find(|r| r.id == p.id).expect("ids checked by read_results");
        next.dataset.push(&state.space, Observation::new(p.x.clone(), r.k, r.v), provenance)?;
    }
    if let Stage::Iteration(n) = pending.stage {
        next.iteration = n;
    }
    next.pending = None;
    next.validate()?;
    Ok(next)
}

/// Runs `iters` embedded iterations, checking after each that the cumulative
/// feasible best has not decreased.
pub fn run_iterations(state: &CampaignState, evaluator: &dyn Evaluator, iters: u32) -> Result<CampaignState> {
    let mut current = state.clone();
    let mut best = cumulative_best(&current)?;
    for _ in 0..iters {
        current = step(&current, Backend::Embedded(evaluator))?;
        let now = cumulative_best(&current)?;
        if let (Some(before), Some(after)) = (best, now) {
            if after < before {
                return Err(Error::InvalidState(format!(
                    "cumulative best decreased from {before} to {after}"
                )));
            }
        }
        best = now;
    }
    Ok(current)
}

/// Initial design plus `iters` iterations, all in process.
pub fn run_embedded(setup: CampaignSetup, evaluator: &dyn Evaluator, iters: u32) -> Result<CampaignState> {
    let state = init_campaign(setup, Backend::Embedded(evaluator))?;
    run_iterations(&state, evaluator, iters)
}

fn cumulative_best(state: &CampaignState) -> Result<Option<f64>> {
    if state.dataset.is_empty() {
        return Ok(None);
    }
    Ok(incumbent(&state.dataset, state.acq.threshold)?.map(|i| i.value))
}

/// Surrogates for the current dataset, fitted with the seed the next step
/// would use.
pub fn surrogate_models(state: &CampaignState) -> Result<(GpModel, GpModel)> {
    fit_models(state, iteration_seed(state, state.iteration))
}

fn fit_models(state: &CampaignState, seed: u64) -> Result<(GpModel, GpModel)> {
    let (xs, ks, vs) = state.dataset.training_columns(&state.space)?;
    let mk = fit_with(xs.clone(), &ks, Channel::Objective, derive_seed(seed, FIT_K), &state.fit)?;
    let mv = fit_with(xs, &vs, Channel::Constraint, derive_seed(seed, FIT_V), &state.fit)?;
    Ok((mk, mv))
}

/// Replaces proposals that coincide with stored designs (or with each other)
/// by seeded uniform draws.
fn resolve_collisions(state: &CampaignState, points: Vec<UnitPoint>, seed: u64) -> (Vec<UnitPoint>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = state.space.len();
    let mut out: Vec<UnitPoint> = Vec::with_capacity(points.len());
    let mut resampled = 0;
    for p in points {
        let mut p = p;
        loop {
            let clash = state.dataset.position_near(&state.space, &p).is_some()
                || out.iter().any(|o| o.distance(&p) < DUPLICATE_TOL);
            if !clash {
                break;
            }
            resampled += 1;
            p = UnitPoint::clamped((0..d).map(|_| rng.random::<f64>()).collect());
        }
        out.push(p);
    }
    (out, resampled)
}

fn settle_batch(state: &mut CampaignState, points: Vec<UnitPoint>, stage: Stage, backend: Backend<'_>) -> Result<()> {
    let physical = points
        .iter()
        .map(|u| state.space.from_unit(u))
        .collect::<Result<Vec<_>>>()?;
    match backend {
        Backend::Embedded(evaluator) => {
            if evaluator.space() != state.space {
                return Err(Error::invalid(format!(
                    "evaluator `{}` is defined on a different design space",
                    evaluator.name()
                )));
            }
            let results = par::map_slice(&physical, |x| evaluator.evaluate(x));
            let provenance = match stage {
                Stage::Doe => Provenance::Doe,
                Stage::Iteration(n) => Provenance::BoIter(n),
            };
            for (x, r) in physical.into_iter().zip(results) {
                let (k, v) = r?;
                state.dataset.push(&state.space, Observation::new(x, k, v), provenance)?;
            }
            if let Stage::Iteration(n) = stage {
                state.iteration = n;
            }
        }
        Backend::External(dir) => {
            let file_iter = match stage {
                Stage::Doe => 0,
                Stage::Iteration(n) => n,
            };
            let (path, ids) = write_proposals(dir, &state.space, &physical, file_iter)?;
            debug_assert_eq!(ids[0], proposal_id(file_iter, 0));
            let points = ids
                .into_iter()
                .zip(physical)
                .zip(points)
                .map(|((id, x), unit)| PendingPoint { id, x, unit })
                .collect();
            state.pending = Some(PendingBatch {
                stage,
                file: file_name(&path),
                points,
            });
        }
    }
    Ok(())
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| proposals_file_name(0))
}

/// Best feasible row after one stage of the campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// `0` for the initial design, `n` for iteration `n`.
    pub stage: u32,
    /// Rows available after this stage.
    pub rows: usize,
    /// Best feasible row among all rows up to this stage.
    pub cumulative: Option<usize>,
    /// Best feasible row added in this stage alone.
    pub batch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSoFar {
    pub best: Option<Incumbent>,
    pub trace: Vec<TraceEntry>,
    /// Row with the smallest constraint value, reported when nothing is feasible.
    pub least_violating: Option<usize>,
}

impl BestSoFar {
    pub fn best_observation<'a>(&self, state: &'a CampaignState) -> Option<&'a Observation> {
        self.best.map(|b| &state.dataset.rows()[b.index].obs)
    }
}

fn stage_of(p: Provenance) -> u32 {
    match p {
        Provenance::Doe | Provenance::Manual => 0,
        Provenance::BoIter(n) => n,
    }
}

/// Feasible best plus one trace entry per completed stage.
pub fn best_so_far(state: &CampaignState) -> Result<BestSoFar> {
    if state.dataset.is_empty() {
        return Err(Error::InvalidState("dataset is empty".into()));
    }
    let thr = state.acq.threshold;
    let rows = state.dataset.rows();
    let last_stage = rows.iter().map(|r| stage_of(r.provenance)).max().unwrap_or(0);
    let better = |cur: Option<usize>, i: usize| match cur {
        Some(c) if rows[c].obs.k >= rows[i].obs.k => Some(c),
        _ => Some(i),
    };
    let mut trace = Vec::new();
    let mut cumulative: Option<usize> = None;
    for stage in 0..=last_stage {
        let mut batch: Option<usize> = None;
        let mut count = 0;
        for (i, r) in rows.iter().enumerate() {
            let s = stage_of(r.provenance);
            if s <= stage {
                count += 1;
            }
            if s == stage && r.obs.is_feasible(thr) {
                batch = better(batch, i);
            }
        }
        if let Some(b) = batch {
            cumulative = better(cumulative, b);
        }
        trace.push(TraceEntry {
            stage,
            rows: count,
            cumulative,
            batch,
        });
    }
    let best = incumbent(&state.dataset, thr)?;
    let least_violating = if best.is_none() {
        (0..rows.len()).min_by(|&a, &b| rows[a].obs.v.total_cmp(&rows[b].obs.v))
    } else {
        None
    };
    Ok(BestSoFar {
        best,
        trace,
        least_violating,
    })
}

/// A campaign rooted in a directory holding `state.json` and the CSV files.
#[derive(Debug, Clone)]
pub struct CampaignDir {
    root: PathBuf,
}

impl CampaignDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn state_path(&self) -> PathBuf {
        self.root.join(STATE_FILE)
    }

    pub fn exists(&self) -> bool {
        self.state_path().exists()
    }

    pub fn load(&self) -> Result<CampaignState> {
        load_state(&self.state_path())
    }

    pub fn save(&self, state: &CampaignState) -> Result<()> {
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        save_state(state, &self.state_path())
    }

    /// Creates an external-mode campaign and writes the initial design.
    pub fn init_external(&self, setup: CampaignSetup) -> Result<CampaignState> {
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let state = init_campaign(setup, Backend::External(&self.root))?;
        self.save(&state)?;
        Ok(state)
    }

    /// Creates a campaign whose initial design is evaluated in process.
    pub fn init_embedded(&self, setup: CampaignSetup, evaluator: &dyn Evaluator) -> Result<CampaignState> {
        let state = init_campaign(setup, Backend::Embedded(evaluator))?;
        self.save(&state)?;
        Ok(state)
    }

    /// Loads, proposes the next batch into the directory, saves.
    pub fn propose(&self) -> Result<CampaignState> {
        self.propose_with(|_| {})
    }

    /// Like [`CampaignDir::propose`], adjusting the stored optimizer budget
    /// first. The adjusted budget is persisted.
    pub fn propose_with(&self, adjust: impl FnOnce(&mut OptimizerBudget)) -> Result<CampaignState> {
        let mut state = self.load()?;
        adjust(&mut state.budget);
        state.budget.validate()?;
        let next = step(&state, Backend::External(&self.root))?;
        self.save(&next)?;
        Ok(next)
    }

    /// Loads, ingests `results`, saves. The state file is only replaced when
    /// ingestion succeeds.
    pub fn ingest(&self, results: &Path) -> Result<CampaignState> {
        let state = self.load()?;
        let next = ingest(&state, results)?;
        self.save(&next)?;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluators::protocol::{write_results, ResultRow};
    use crate::evaluators::BuiltinEvaluator;

    fn quick_setup(space: ParameterSpace, threshold: f64, q: usize, doe_n: usize, seed: u64) -> CampaignSetup {
        let acq = AcquisitionConfig {
            threshold,
            q,
            mc_samples: 256,
            ..AcquisitionConfig::default()
        };
        let mut s = CampaignSetup::new(space, acq, doe_n, seed);
        s.budget = OptimizerBudget {
            raw_samples: 64,
            restarts: 3,
            max_iters_per_restart: 50,
            convergence_tol: 1e-6,
        };
        s
    }

    #[test]
    fn init_embedded_and_errors() {
        let ev = BuiltinEvaluator::Proxy;
        let s = init_campaign(quick_setup(ev.space(), 25.0, 5, 10, 1), Backend::Embedded(&ev)).unwrap();
        assert_eq!(s.dataset.len(), 10);
        assert_eq!(s.iteration, 0);
        assert!(s.pending.is_none());
        let two = init_campaign(quick_setup(ev.space(), 25.0, 5, 2, 1), Backend::Embedded(&ev)).unwrap();
        assert_eq!(two.dataset.len(), 2);
        let zero = init_campaign(quick_setup(ev.space(), 25.0, 5, 0, 1), Backend::Embedded(&ev));
        assert!(matches!(zero, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn all_infeasible_falls_back_to_feasibility() {
        let ev = BuiltinEvaluator::Quadratic;
        // v = x1 + x2 >= 0 > -1: nothing can be feasible
        let s = init_campaign(quick_setup(ev.space(), -1.0, 2, 6, 3), Backend::Embedded(&ev)).unwrap();
        let next = step(&s, Backend::Embedded(&ev)).unwrap();
        assert_eq!(next.dataset.len(), 8);
        assert!(next.log[0].feasibility_fallback);
        let report = best_so_far(&next).unwrap();
        assert!(report.best.is_none());
        assert!(report.least_violating.is_some());
    }

    #[test]
    fn external_round_trip_and_atomic_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let campaign = CampaignDir::new(dir.path());
        let ev = BuiltinEvaluator::Quadratic;
        let s = campaign.init_external(quick_setup(ev.space(), 1.0, 3, 5, 8)).unwrap();
        let pending = s.pending.clone().unwrap();
        assert_eq!(pending.stage, Stage::Doe);
        assert!(dir.path().join("proposals_iter0.csv").exists());

        assert!(matches!(campaign.propose(), Err(Error::InvalidState(_))));

        let results = dir.path().join("results0.csv");
        let mut rows: Vec<ResultRow> = pending
            .points
            .iter()
            .map(|p| {
                let (k, v) = ev.evaluate(&p.x).unwrap();
                ResultRow { id: p.id.clone(), k, v }
            })
            .collect();
        // a bad row must leave the state file untouched
        let good = rows.clone();
        rows[1].id = "nope".into();
        write_results(&results, &rows).unwrap();
        let before = std::fs::read(campaign.state_path()).unwrap();
        assert!(matches!(campaign.ingest(&results), Err(Error::Protocol(_))));
        assert_eq!(std::fs::read(campaign.state_path()).unwrap(), before);

        write_results(&results, &good).unwrap();
        let s = campaign.ingest(&results).unwrap();
        assert_eq!(s.iteration, 0);
        assert_eq!(s.dataset.len(), 5);
        assert!(matches!(ingest(&s, &results), Err(Error::InvalidState(_))));

        let s = campaign.propose().unwrap();
        let pending = s.pending.clone().unwrap();
        assert_eq!(pending.stage, Stage::Iteration(1));
        assert_eq!(pending.points.len(), 3);
        let rows: Vec<ResultRow> = pending
            .points
            .iter()
            .map(|p| {
                let (k, v) = ev.evaluate(&p.x).unwrap();
                ResultRow { id: p.id.clone(), k, v }
            })
            .collect();
        let results = dir.path().join("results1.csv");
        write_results(&results, &rows).unwrap();
        let s = campaign.ingest(&results).unwrap();
        assert_eq!(s.iteration, 1);
        assert_eq!(s.dataset.len(), 8);
        assert_eq!(campaign.load().unwrap(), s);
    }

    #[test]
    fn external_matches_embedded() {
        let ev = BuiltinEvaluator::Quadratic;
        let setup = quick_setup(ev.space(), 1.0, 2, 4, 21);
        let embedded = init_campaign(setup.clone(), Backend::Embedded(&ev)).unwrap();
        let embedded = step(&embedded, Backend::Embedded(&ev)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let campaign = CampaignDir::new(dir.path());
        let mut s = campaign.init_external(setup).unwrap();
        for round in 0..2 {
            let pending = s.pending.clone().unwrap();
            let rows: Vec<ResultRow> = pending
                .points
                .iter()
                .map(|p| {
                    let (k, v) = ev.evaluate(&p.x).unwrap();
                    ResultRow { id: p.id.clone(), k, v }
                })
                .collect();
            let path = dir.path().join(format!("res{round}.csv"));
            write_results(&path, &rows).unwrap();
            s = campaign.ingest(&path).unwrap();
            if round == 0 {
                s = campaign.propose().unwrap();
            }
        }
        assert_eq!(s.dataset, embedded.dataset);
    }

    #[test]
    fn trace_cumulative_and_batch() {
        let space = ParameterSpace::unit_cube(1).unwrap();
        let acq = AcquisitionConfig { threshold: 1.0, q: 1, ..Default::default() };
        let mut state = init_campaign(
            CampaignSetup::new(space.clone(), acq, 2, 0),
            Backend::External(tempfile::tempdir().unwrap().path()),
        )
        .unwrap();
        state.pending = None;
        let rows = [
            (0.1, 5.0, 0.5, Provenance::Doe),
            (0.2, 7.0, 2.0, Provenance::Doe),
            (0.3, 6.0, 0.5, Provenance::BoIter(1)),
            (0.4, 4.0, 0.5, Provenance::BoIter(2)),
        ];
        for (x, k, v, p) in rows {
            state.dataset.push(&space, Observation::new(vec![x], k, v), p).unwrap();
        }
        state.iteration = 2;
        let r = best_so_far(&state).unwrap();
        let cum: Vec<Option<usize>> = r.trace.iter().map(|t| t.cumulative).collect();
        let batch: Vec<Option<usize>> = r.trace.iter().map(|t| t.batch).collect();
        assert_eq!(cum, vec![Some(0), Some(2), Some(2)]);
        assert_eq!(batch, vec![Some(0), Some(2), Some(3)]);
        assert_eq!(r.best.unwrap().index, 2);
        assert_eq!(r.trace.iter().map(|t| t.rows).collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn save_load_versions() {
        let dir = tempfile::tempdir().unwrap();
        let ev = BuiltinEvaluator::Quadratic;
        let s = init_campaign(quick_setup(ev.space(), 1.0, 2, 4, 2), Backend::Embedded(&ev)).unwrap();
        let s = step(&s, Backend::Embedded(&ev)).unwrap();
        let path = dir.path().join("state.json");
        save_state(&s, &path).unwrap();
        assert_eq!(load_state(&path).unwrap(), s);

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_state(&path), Err(Error::Parse { .. })));

        std::fs::write(&path, text.replacen("\"version\": 1", "\"version\": 99", 1)).unwrap();
        assert!(matches!(
            load_state(&path),
            Err(Error::UnsupportedVersion { found: 99, expected: 1 })
        ));
    }
}
