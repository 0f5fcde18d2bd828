//! Campaign artifacts: the best-so-far table and posterior slice grids.
//!
//! Files written into the campaign directory:
//! - `table_cumulative.csv`, `table_batch.csv`, `table.txt`
//! - `slice_<dim>_mean.csv`, `slice_<dim>_std.csv` for every dimension
//! - `slice_markers.csv` (training points and the incumbent)

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::campaign::{best_so_far, surrogate_models, BestSoFar, CampaignState};
use crate::error::{Error, Result};
use crate::evaluators::protocol::format_value;
use crate::par;

pub const DEFAULT_RESOLUTION: usize = 101;

/// Which best each table row reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableView {
    /// Best feasible row over everything evaluated so far.
    Cumulative,
    /// Best feasible row of that stage's batch only.
    Batch,
}

impl TableView {
    pub fn label(self) -> &'static str {
        match self {
            TableView::Cumulative => "cumulative",
            TableView::Batch => "batch",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub stage: String,
    /// Dataset row index, or `None` when the stage has no feasible row.
    pub index: Option<usize>,
    pub k: Option<f64>,
    pub v: Option<f64>,
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub view: TableView,
    /// `stage, k, v_mag`, then one column per dimension.
    pub header: Vec<String>,
    pub rows: Vec<TableRow>,
}

pub fn stage_label(stage: u32) -> String {
    if stage == 0 {
        "DoE".to_string()
    } else {
        format!("It{stage}")
    }
}

/// One row per completed stage: the initial design, then each iteration.
pub fn emit_table(state: &CampaignState, view: TableView) -> Result<Table> {
    let report = best_so_far(state)?;
    Ok(table_from(state, &report, view))
}

fn table_from(state: &CampaignState, report: &BestSoFar, view: TableView) -> Table {
    let header = ["stage", "k", "v_mag"]
        .into_iter()
        .map(str::to_string)
        .chain(state.space.names().map(str::to_string))
        .collect();
    let rows = report
        .trace
        .iter()
        .map(|t| {
            let index = match view {
                TableView::Cumulative => t.cumulative,
                TableView::Batch => t.batch,
            };
            let obs = index.map(|i| &state.dataset.rows()[i].obs);
            TableRow {
                stage: stage_label(t.stage),
                index,
                k: obs.map(|o| o.k),
                v: obs.map(|o| o.v),
                x: obs.map(|o| o.x.clone()),
            }
        })
        .collect();
    Table { view, header, rows }
}

impl Table {
    /// Full-precision CSV; stages without a feasible row have empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![r.stage.clone()];
            let blank = || std::iter::repeat_n(String::new(), self.header.len() - 1);
            match (r.k, r.v, &r.x) {
                (Some(k), Some(v), Some(x)) => {
                    cells.push(format_value(k));
                    cells.push(format_value(v));
                    cells.extend(x.iter().map(|&c| format_value(c)));
                }
                _ => cells.extend(blank()),
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Right-aligned text with two decimals.
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = vec![self
            .header
            .iter()
            .map(|h| if h == "v_mag" { "|v|".to_string() } else { h.clone() })
            .collect()];
        for r in &self.rows {
            let mut cells = vec![r.stage.clone()];
            match (r.k, r.v, &r.x) {
                (Some(k), Some(v), Some(x)) => {
                    cells.push(format!("{k:.2}"));
                    cells.push(format!("{v:.2}"));
                    cells.extend(x.iter().map(|c| format!("{c:.2}")));
                }
                _ => cells.extend(std::iter::repeat_n("-".to_string(), self.header.len() - 1)),
            }
            grid.push(cells);
        }
        let widths: Vec<usize> = (0..self.header.len())
            .map(|j| grid.iter().map(|row| row[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &grid {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (c, &w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Both table views plus a no-feasible-point diagnostic, as printed by the CLI.
pub fn summary_text(state: &CampaignState) -> Result<String> {
    let report = best_so_far(state)?;
    let mut out = String::new();
    for view in [TableView::Cumulative, TableView::Batch] {
        let t = table_from(state, &report, view);
        let _ = writeln!(out, "best feasible ({}), threshold {}", view.label(), state.acq.threshold);
        out.push_str(&t.to_text());
        out.push('\n');
    }
    if let Some(i) = report.least_violating {
        let o = &state.dataset.rows()[i].obs;
        let _ = writeln!(
            out,
            "no feasible observation; least violating row {i}: k = {:.2}, v = {:.2} (threshold {})",
            o.k, o.v, state.acq.threshold
        );
    }
    Ok(out)
}

/// Writes both CSV tables and the text summary into `dir`.
pub fn write_tables(state: &CampaignState, dir: &Path) -> Result<Vec<PathBuf>> {
    let report = best_so_far(state)?;
    let mut written = Vec::new();
    for view in [TableView::Cumulative, TableView::Batch] {
        let path = dir.join(format!("table_{}.csv", view.label()));
        write_file(&path, &table_from(state, &report, view).to_csv())?;
        written.push(path);
    }
    let path = dir.join("table.txt");
    write_file(&path, &summary_text(state)?)?;
    written.push(path);
    Ok(written)
}

/// Posterior of the objective surrogate along one coordinate through `x*`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceGrid {
    pub dimension: String,
    /// Physical coordinate of the swept dimension.
    pub coords: Vec<f64>,
    /// Posterior mean of `k`, raw units.
    pub mean: Vec<f64>,
    /// Posterior standard deviation of `k`, raw units.
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slices {
    /// Incumbent design (physical) all slices pass through.
    pub anchor: Vec<f64>,
    pub incumbent_index: usize,
    /// Prior standard deviation of the objective surrogate, raw units.
    pub prior_std: f64,
    pub grids: Vec<SliceGrid>,
}

/// Sweeps each dimension over `resolution` equispaced points with the other
/// coordinates held at the incumbent.
pub fn emit_slices(state: &CampaignState, resolution: usize) -> Result<Slices> {
    if resolution < 2 {
        return Err(Error::invalid(format!("slice resolution must be at least 2, got {resolution}")));
    }
    let report = best_so_far(state)?;
    let best = report.best.ok_or_else(|| {
        Error::InvalidState(
            "no feasible observation to anchor slices; run `report` for the least-violating row".into(),
        )
    })?;
    let (model_k, _) = surrogate_models(state)?;
    let anchor_phys = state.dataset.rows()[best.index].obs.x.clone();
    let anchor = state.space.to_unit(&anchor_phys)?;
    let prior_std = model_k.standardization().scale * model_k.prior_std();

    let grids = state
        .space
        .dims()
        .iter()
        .enumerate()
        .map(|(i, dim)| {
            let units: Vec<Vec<f64>> = (0..resolution)
                .map(|j| {
                    let mut u = anchor.to_vec();
                    u[i] = j as f64 / (resolution - 1) as f64;
                    u
                })
                .collect();
            let post = par::map_slice(&units, |u| model_k.predict(u));
            SliceGrid {
                dimension: dim.name.clone(),
                coords: units.iter().map(|u| dim.lower + u[i] * dim.width()).collect(),
                mean: post.iter().map(|g| g.mean).collect(),
                std: post.iter().map(|g| g.std).collect(),
            }
        })
        .collect();
    Ok(Slices {
        anchor: anchor_phys,
        incumbent_index: best.index,
        prior_std,
        grids,
    })
}

/// Writes the 2·d grid files and the markers file into `dir`.
pub fn write_slices(state: &CampaignState, slices: &Slices, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for g in &slices.grids {
        for (label, values) in [("mean", &g.mean), ("std", &g.std)] {
            let mut text = format!("{},k_{label}\n", g.dimension);
            for (c, v) in g.coords.iter().zip(values) {
                let _ = writeln!(text, "{},{}", format_value(*c), format_value(*v));
            }
            let path = dir.join(format!("slice_{}_{label}.csv", g.dimension));
            write_file(&path, &text)?;
            written.push(path);
        }
    }
    let names: Vec<&str> = state.space.names().collect();
    let mut text = format!("kind,row,{},k,v_mag\n", names.join(","));
    for (i, r) in state.dataset.rows().iter().enumerate() {
        let kind = if i == slices.incumbent_index { "incumbent" } else { "training" };
        let coords: Vec<String> = r.obs.x.iter().map(|&c| format_value(c)).collect();
        let _ = writeln!(
            text,
            "{kind},{i},{},{},{}",
            coords.join(","),
            format_value(r.obs.k),
            format_value(r.obs.v)
        );
    }
    let path = dir.join("slice_markers.csv");
    write_file(&path, &text)?;
    written.push(path);
    Ok(written)
}

/// Tables, plus slice grids when a feasible incumbent exists.
pub fn write_report(state: &CampaignState, dir: &Path, resolution: usize) -> Result<Vec<PathBuf>> {
    let mut written = write_tables(state, dir)?;
    if best_so_far(state)?.best.is_some() {
        let slices = emit_slices(state, resolution)?;
        written.extend(write_slices(state, &slices, dir)?);
    }
    Ok(written)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::AcquisitionConfig;
    use crate::campaign::{init_campaign, step, Backend, CampaignSetup};
    use crate::data::{Observation, Provenance};
    use crate::evaluators::{BuiltinEvaluator, Evaluator};
    use crate::optimize::OptimizerBudget;
    use crate::space::ParameterSpace;

    fn small_run(iters: u32) -> CampaignState {
        let ev = BuiltinEvaluator::Quadratic;
        let acq = AcquisitionConfig {
            threshold: 1.0,
            q: 2,
            mc_samples: 128,
            ..Default::default()
        };
        let mut setup = CampaignSetup::new(ev.space(), acq, 6, 4);
        setup.budget = OptimizerBudget {
            raw_samples: 32,
            restarts: 2,
            max_iters_per_restart: 30,
            convergence_tol: 1e-6,
        };
        let mut s = init_campaign(setup, Backend::Embedded(&ev)).unwrap();
        for _ in 0..iters {
            s = step(&s, Backend::Embedded(&ev)).unwrap();
        }
        s
    }

    #[test]
    fn table_shape_and_formats() {
        let s = small_run(2);
        let t = emit_table(&s, TableView::Cumulative).unwrap();
        assert_eq!(t.header, ["stage", "k", "v_mag", "x1", "x2"]);
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[0].stage, "DoE");
        assert_eq!(t.rows[2].stage, "It2");
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 4);
        let k: f64 = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(Some(k), t.rows[0].k);
        let text = t.to_text();
        assert!(text.lines().next().unwrap().contains("|v|"));
        assert!(text.contains(&format!("{:.2}", t.rows[0].k.unwrap())));

        let doe_only = small_run(0);
        assert_eq!(emit_table(&doe_only, TableView::Batch).unwrap().rows.len(), 1);
    }

    #[test]
    fn slices_match_posterior_queries() {
        let s = small_run(1);
        let sl = emit_slices(&s, 11).unwrap();
        assert_eq!(sl.grids.len(), 2);
        let (mk, _) = surrogate_models(&s).unwrap();
        let anchor = s.space.to_unit(&sl.anchor).unwrap();
        for (i, g) in sl.grids.iter().enumerate() {
            assert_eq!(g.coords.len(), 11);
            for j in 0..11 {
                let mut u = anchor.to_vec();
                u[i] = j as f64 / 10.0;
                let p = mk.predict(&u);
                assert!((p.mean - g.mean[j]).abs() < 1e-10);
                assert!((p.std - g.std[j]).abs() < 1e-10);
            }
        }
        let two = emit_slices(&s, 2).unwrap();
        assert!(two.grids.iter().all(|g| g.coords.len() == 2));
        assert!(emit_slices(&s, 1).is_err());

        let dir = tempfile::tempdir().unwrap();
        let files = write_slices(&s, &sl, dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        let text = std::fs::read_to_string(dir.path().join("slice_x1_std.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x1,k_std");
        assert_eq!(text.lines().count(), 12);
    }

    #[test]
    fn far_slice_ends_revert_to_prior() {
        let space = ParameterSpace::new(vec![
            crate::space::Dimension::new("a", 0.0, 100.0),
            crate::space::Dimension::new("b", 0.0, 1.0),
        ])
        .unwrap();
        let acq = AcquisitionConfig { threshold: 10.0, q: 1, ..Default::default() };
        let mut s = init_campaign(
            CampaignSetup::new(space.clone(), acq, 2, 0),
            Backend::External(tempfile::tempdir().unwrap().path()),
        )
        .unwrap();
        s.pending = None;
        s.dataset = Default::default();
        for x in [[0.0_f64, 0.1], [0.5, 0.5], [1.0, 0.9], [1.5, 0.3], [0.8, 0.7], [0.3, 0.2]] {
            let k = (x[0] * 3.0).sin() + x[1];
            s.dataset
                .push(&space, Observation::new(x.to_vec(), k, 0.0), Provenance::Doe)
                .unwrap();
        }
        s.doe_n = 6;
        let sl = emit_slices(&s, 101).unwrap();
        let far = *sl.grids[0].std.last().unwrap();
        assert!(far > 0.95 * sl.prior_std, "{far} vs {}", sl.prior_std);
    }

    #[test]
    fn no_feasible_point_is_reported() {
        let s = {
            let mut s = small_run(0);
            s.acq.threshold = -5.0;
            s
        };
        assert!(matches!(emit_slices(&s, 5), Err(Error::InvalidState(_))));
        let text = summary_text(&s).unwrap();
        assert!(text.contains("least violating"));
    }
}
