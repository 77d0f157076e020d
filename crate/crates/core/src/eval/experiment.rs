//! The experiment grid: placements × distances × attacker shadowing ×
//! attack mixes × detectors, each evaluated on a holdout test set and by
//! k-fold cross-validation.
//!
//! For every placement the PU training set holds `n_slots` PU examples. A
//! test set for attack mix `p` is that training set followed by
//! `round(n_slots * p / 100)` attack examples, so holdout accuracy counts the
//! training rows again (inflating true negatives). Cross-validation runs on
//! the same mixed test set.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, kfold_cv, MetricsReport};
use crate::features::{build_dataset, Dataset, Label};
use crate::oneclass::{Detector, DetectorKind, DetectorParams};
use crate::rng::derive_seed;
use crate::scenario::{generate_topology, simulate_slots, Placement, Source};

/// Stream tags for [`derive_seed`].
const TOPOLOGY_STREAM: u64 = 1;
const PU_STREAM: u64 = 2;
const ATTACK_STREAM: u64 = 3;
const DETECTOR_STREAM: u64 = 4;
const CV_STREAM: u64 = 5;

pub const REPORT_CSV_HEADER: &str = "placement,D,sigma2_attacker,puea_pct,detector,k,accuracy,precision,recall,f1";

/// Coordinates of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellCoord {
    pub placement: Placement,
    pub d: f64,
    pub sigma2_attacker: f64,
    pub puea_pct: f64,
}

impl CellCoord {
    /// File-name stem `{placement}_{D}_{sigma2}_{pct}`.
    pub fn stem(&self) -> String {
        format!("{}_{}_{}_{}", self.placement, self.d, self.sigma2_attacker, self.puea_pct)
    }
}

impl std::fmt::Display for CellCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "placement={} D={} sigma2_attacker={} puea_pct={}",
            self.placement, self.d, self.sigma2_attacker, self.puea_pct
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub cell: CellCoord,
    pub detector: DetectorKind,
    /// Fold count, or `None` for the holdout evaluation.
    pub k: Option<usize>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

impl ExperimentReport {
    /// Plot-data CSV; holdout rows carry `k = 0`, metrics are fractions.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.cell.placement,
                r.cell.d,
                r.cell.sigma2_attacker,
                r.cell.puea_pct,
                r.detector,
                r.k.unwrap_or(0),
                m.accuracy,
                m.precision,
                m.recall,
                m.f1
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Aligned human-readable table with metrics in percent.
    pub fn to_table(&self) -> String {
        let header = ["placement", "D", "sigma2", "puea%", "detector", "k", "acc%", "prec%", "rec%", "f1%"];
        let body: Vec<[String; 10]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.cell.placement.to_string(),
                    r.cell.d.to_string(),
                    r.cell.sigma2_attacker.to_string(),
                    r.cell.puea_pct.to_string(),
                    r.detector.to_string(),
                    r.k.map_or("holdout".to_string(), |k| k.to_string()),
                    pct(r.metrics.accuracy),
                    pct(r.metrics.precision),
                    pct(r.metrics.recall),
                    pct(r.metrics.f1),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &body {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[&str]| {
            let parts: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:>w$}")).collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(&header);
        for row in &body {
            line(&row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }

    pub fn rows_for(&self, placement: Placement, detector: DetectorKind) -> impl Iterator<Item = &ExperimentRow> {
        self.rows.iter().filter(move |r| r.cell.placement == placement && r.detector == detector)
    }
}

/// Every grid cell in output order (placement, D, σ², mix).
pub fn cells(cfg: &RunConfig) -> Vec<CellCoord> {
    let mut out = Vec::new();
    for &placement in &cfg.placements {
        for &d in &cfg.d_list {
            for &sigma2_attacker in &cfg.sigma2_attacker {
                for &puea_pct in &cfg.puea_pct {
                    out.push(CellCoord { placement, d, sigma2_attacker, puea_pct });
                }
            }
        }
    }
    out
}

fn placement_tag(p: Placement) -> u64 {
    match p {
        Placement::InsideRegion => 0,
        Placement::OutsideRegion => 1,
    }
}

/// Detector parameters with seeds derived from the run seed.
pub fn detector_params(cfg: &RunConfig) -> DetectorParams {
    cfg.params.with_seed(derive_seed(cfg.seed, &[DETECTOR_STREAM]))
}

/// Seed used to shuffle cross-validation folds.
pub fn cv_seed(cfg: &RunConfig) -> u64 {
    derive_seed(cfg.seed, &[CV_STREAM])
}

/// PU-only training set for `placement`.
///
/// SU and PU positions do not depend on D, so one training set serves every
/// distance of a placement.
pub fn pu_dataset(cfg: &RunConfig, placement: Placement) -> Result<Dataset> {
    let tag = placement_tag(placement);
    let topo = generate_topology(
        &cfg.topology(placement, cfg.d_list[0], cfg.sigma2_attacker[0]),
        derive_seed(cfg.seed, &[TOPOLOGY_STREAM, tag]),
    )?;
    let slots =
        simulate_slots(&topo, Source::Pu, cfg.n_slots, &cfg.channel(), derive_seed(cfg.seed, &[PU_STREAM, tag]))?;
    build_dataset(&slots, Label::Pu)
}

/// `count` attack examples for one (placement, D, σ²) setting. Smaller
/// counts are prefixes of larger ones.
pub fn attack_dataset(cfg: &RunConfig, placement: Placement, d: f64, sigma2: f64, count: usize) -> Result<Dataset> {
    let tag = placement_tag(placement);
    let topo = generate_topology(&cfg.topology(placement, d, sigma2), derive_seed(cfg.seed, &[TOPOLOGY_STREAM, tag]))?;
    let seed = derive_seed(cfg.seed, &[ATTACK_STREAM, tag, d.to_bits(), sigma2.to_bits()]);
    let slots = simulate_slots(&topo, Source::Attacker, count, &cfg.channel(), seed)?;
    build_dataset(&slots, Label::Attack)
}

/// Training set and mixed test set of one cell.
pub fn cell_datasets(cfg: &RunConfig, cell: &CellCoord) -> Result<(Dataset, Dataset)> {
    let train = pu_dataset(cfg, cell.placement)?;
    let attack = attack_dataset(cfg, cell.placement, cell.d, cell.sigma2_attacker, cfg.attack_slots(cell.puea_pct))?;
    let test = train.concat(&attack);
    Ok((train, test))
}

/// Runs the full grid described by `cfg`.
///
/// Rows are ordered by cell, then detector, then holdout before each `k` of
/// `cfg.k_list`; the numbers do not depend on scheduling.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let params = detector_params(cfg);
    let cv = cv_seed(cfg);
    let mut rows = Vec::new();

    for &placement in &cfg.placements {
        let cell_err = |cell: String| move |e: Error| e.in_cell(cell.clone());
        let train = pu_dataset(cfg, placement).map_err(cell_err(format!("placement={placement}")))?;
        let train_x = train.feature_matrix();
        let fitted: Vec<Detector> = cfg
            .detectors
            .par_iter()
            .map(|&kind| {
                Detector::fit(kind, train_x.view(), &params)
                    .map_err(|e| e.in_cell(format!("placement={placement} detector={kind}")))
            })
            .collect::<Result<_>>()?;

        let placement_cells: Vec<CellCoord> = cells(cfg).into_iter().filter(|c| c.placement == placement).collect();
        let tests: Vec<Dataset> = placement_cells
            .par_iter()
            .map(|cell| {
                let attack =
                    attack_dataset(cfg, placement, cell.d, cell.sigma2_attacker, cfg.attack_slots(cell.puea_pct))
                        .map_err(|e| e.in_cell(cell.to_string()))?;
                Ok(train.concat(&attack))
            })
            .collect::<Result<_>>()?;

        let mut tasks = Vec::new();
        for (c, cell) in placement_cells.iter().enumerate() {
            for (d, &kind) in cfg.detectors.iter().enumerate() {
                tasks.push((c, *cell, d, kind, None));
                for &k in &cfg.k_list {
                    tasks.push((c, *cell, d, kind, Some(k)));
                }
            }
        }
        let placement_rows = tasks
            .into_par_iter()
            .map(|(c, cell, d, kind, k)| {
                let metrics = match k {
                    None => evaluate(&fitted[d], &tests[c]),
                    Some(k) => kfold_cv(&tests[c], k, kind, &params, cv).map(|r| r.mean),
                }
                .map_err(|e| {
                    e.in_cell(format!("{cell} detector={kind} k={}", k.map_or("holdout".into(), |k| k.to_string())))
                })?;
                Ok(ExperimentRow { cell, detector: kind, k, metrics })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(placement_rows);
    }
    Ok(ExperimentReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            n_slots: 300,
            d_list: vec![5.0],
            sigma2_attacker: vec![8.0],
            placements: vec![Placement::InsideRegion],
            puea_pct: vec![10.0],
            k_list: vec![],
            params: DetectorParams {
                iforest: crate::oneclass::IsolationForestParams { num_trees: 20, ..Default::default() },
                mcd: crate::oneclass::McdParams { num_initial_subsets: 20, ..Default::default() },
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn single_cell_yields_one_row_per_detector() {
        let report = run_experiment(&small()).unwrap();
        assert_eq!(report.rows.len(), 4);
        let kinds: Vec<DetectorKind> = report.rows.iter().map(|r| r.detector).collect();
        assert_eq!(kinds, DetectorKind::ALL.to_vec());
        assert!(report.rows.iter().all(|r| r.k.is_none()));
    }

    #[test]
    fn report_is_deterministic() {
        let cfg = RunConfig { k_list: vec![2], ..small() };
        assert_eq!(run_experiment(&cfg).unwrap().to_csv(), run_experiment(&cfg).unwrap().to_csv());
    }

    #[test]
    fn cell_enumeration_and_naming() {
        let cfg = RunConfig::default();
        let all = cells(&cfg);
        assert_eq!(all.len(), 2 * 3 * 3 * 2);
        assert_eq!(all[0].stem(), "inside_5_4_10");
    }

    #[test]
    fn attack_counts_nest() {
        let cfg = small();
        let a = attack_dataset(&cfg, Placement::InsideRegion, 5.0, 8.0, 10).unwrap();
        let b = attack_dataset(&cfg, Placement::InsideRegion, 5.0, 8.0, 20).unwrap();
        assert_eq!(a.examples[..], b.examples[..10]);
    }

    #[test]
    fn csv_and_table_render_every_row() {
        let report = run_experiment(&small()).unwrap();
        let csv = report.to_csv();
        assert!(csv.starts_with(REPORT_CSV_HEADER));
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(report.to_table().lines().count(), 5);
    }
}
