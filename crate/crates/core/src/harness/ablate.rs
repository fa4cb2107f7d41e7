use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::{resolve_samples, CacheSet};
use super::manifest::{parse_manifest, ManifestRecord, Split};
use super::train::{run_experiment, RunResult};
use crate::error::{Error, Result};
use crate::metrics::MetricValues;
use crate::model::Sample;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub factor: f64,
    pub moe_enabled: bool,
}

/// The seven ablation cells in table order: MoE off/on at factors 1 and 2,
/// then MoE on at 1.5, 2.5 and 3.
pub const TABLE_CELLS: [Cell; 7] = [
    Cell { factor: 1.0, moe_enabled: false },
    Cell { factor: 1.0, moe_enabled: true },
    Cell { factor: 2.0, moe_enabled: false },
    Cell { factor: 2.0, moe_enabled: true },
    Cell { factor: 1.5, moe_enabled: true },
    Cell { factor: 2.5, moe_enabled: true },
    Cell { factor: 3.0, moe_enabled: true },
];

/// Grid file. Paths are relative to the grid file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub test_manifest: PathBuf,
    /// Cache directory for training records.
    pub caches: PathBuf,
    /// Cache directory for test records; defaults to `caches`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_caches: Option<PathBuf>,
    /// Training manifest per augmentation factor, keyed by the factor as text.
    pub manifests: BTreeMap<String, PathBuf>,
    /// Defaults to [`TABLE_CELLS`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<Cell>>,
}

impl GridSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut g: GridSpec = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut g.test_manifest);
        abs(&mut g.caches);
        if let Some(p) = g.test_caches.as_mut() {
            abs(p);
        }
        g.manifests.values_mut().for_each(abs);
        Ok(g)
    }

    pub fn cells(&self) -> Vec<Cell> {
        self.cells.clone().unwrap_or_else(|| TABLE_CELLS.to_vec())
    }

    pub fn manifest_for(&self, factor: f64) -> Result<&Path> {
        for (k, p) in &self.manifests {
            let f: f64 = k
                .trim()
                .parse()
                .map_err(|_| Error::Validation(format!("grid manifest key {k:?} is not a number")))?;
            if (f - factor).abs() < 1e-9 {
                return Ok(p);
            }
        }
        Err(Error::Validation(format!("no augmented training manifest for factor {factor}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    /// 1-based position in the grid.
    pub id: usize,
    pub cell: Cell,
    pub result: RunResult,
}

fn train_records(path: &Path) -> Result<Vec<ManifestRecord>> {
    let recs = parse_manifest(path)?;
    let n_test = recs.iter().filter(|r| r.split == Split::Test).count();
    if n_test > 0 {
        log::warn!("ignoring {n_test} test records in training manifest {}", path.display());
    }
    Ok(recs.into_iter().filter(|r| r.split == Split::Train).collect())
}

/// Train and evaluate every cell. Every manifest is checked before any
/// training starts.
pub fn run_ablation(base: &ExperimentConfig, grid: &GridSpec) -> Result<Vec<CellResult>> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::Validation("ablation grid has no cells".into()));
    }
    for c in &cells {
        grid.manifest_for(c.factor)?;
    }
    let test: Vec<ManifestRecord> = parse_manifest(&grid.test_manifest)?
        .into_iter()
        .filter(|r| r.split == Split::Test)
        .collect();
    let mut test_caches = CacheSet::new(grid.test_caches.as_ref().unwrap_or(&grid.caches));
    let test = resolve_samples(&test, &mut test_caches, &base.model)?;
    if test.is_empty() {
        return Err(Error::Validation(format!("{} has no test records", grid.test_manifest.display())));
    }
    let mut caches = CacheSet::new(&grid.caches);
    let mut train_by_factor: Vec<(f64, Vec<Sample>)> = Vec::new();
    let mut out = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let pos = match train_by_factor.iter().position(|(f, _)| (f - cell.factor).abs() < 1e-9) {
            Some(p) => p,
            None => {
                let recs = train_records(grid.manifest_for(cell.factor)?)?;
                train_by_factor.push((cell.factor, resolve_samples(&recs, &mut caches, &base.model)?));
                train_by_factor.len() - 1
            }
        };
        let mut cfg = base.clone();
        cfg.model.moe_enabled = cell.moe_enabled;
        cfg.augmentation_factor = cell.factor;
        log::info!("cell {}: factor {} moe {}", i + 1, cell.factor, cell.moe_enabled);
        let (result, _) = run_experiment(&cfg, &train_by_factor[pos].1, &test)?;
        out.push(CellResult {
            id: i + 1,
            cell: *cell,
            result,
        });
    }
    Ok(out)
}

/// One row per cell: id, factor, MoE flag, then mean and sd of every metric.
pub fn ablation_csv(rows: &[CellResult]) -> String {
    let mut s = String::from("id,factor,moe_enabled");
    for n in MetricValues::NAMES {
        write!(s, ",{n}_mean,{n}_sd").unwrap();
    }
    s.push('\n');
    for r in rows {
        write!(s, "{},{},{}", r.id, r.cell.factor, r.cell.moe_enabled).unwrap();
        let avg = &r.result.averaged;
        for (m, sd) in avg.mean.to_array().iter().zip(avg.sd.to_array()) {
            write!(s, ",{m},{sd}").unwrap();
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub factor: f64,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
}

pub const CURVE_HEADER: &str = "factor,accuracy_mean,accuracy_sd";

/// CSV of accuracy against factor, ascending. Values are written in
/// shortest round-trip form.
pub fn emit_curve(points: &[CurvePoint]) -> String {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.factor.total_cmp(&b.factor));
    let mut s = format!("{CURVE_HEADER}\n");
    for p in pts {
        writeln!(s, "{},{},{}", p.factor, p.accuracy_mean, p.accuracy_sd).unwrap();
    }
    s
}

pub fn parse_curve(csv: &str) -> Result<Vec<CurvePoint>> {
    let mut lines = csv.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::Validation(format!("curve CSV must start with {CURVE_HEADER:?}")));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let v: Vec<f64> = l
                .split(',')
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Validation(format!("curve row {}: {e}", i + 2)))?;
            match v[..] {
                [factor, accuracy_mean, accuracy_sd] => Ok(CurvePoint {
                    factor,
                    accuracy_mean,
                    accuracy_sd,
                }),
                _ => Err(Error::Validation(format!("curve row {} has {} fields", i + 2, v.len()))),
            }
        })
        .collect()
}

/// One point per factor. With both MoE settings present for a factor the
/// MoE-enabled run is used; two runs with the same setting are an error.
pub fn curve_points(results: &[RunResult]) -> Result<Vec<CurvePoint>> {
    let mut chosen: Vec<(f64, bool, &RunResult)> = Vec::new();
    for r in results {
        let f = r.config.augmentation_factor;
        let moe = r.config.model.moe_enabled;
        match chosen.iter_mut().find(|(g, _, _)| (g - f).abs() < 1e-9) {
            None => chosen.push((f, moe, r)),
            Some(slot) if slot.1 == moe => {
                return Err(Error::Validation(format!(
                    "two results for factor {f} with moe_enabled={moe}"
                )))
            }
            Some(slot) if moe => *slot = (f, moe, r),
            Some(_) => {}
        }
    }
    Ok(chosen
        .into_iter()
        .map(|(factor, _, r)| CurvePoint {
            factor,
            accuracy_mean: r.averaged.mean.accuracy,
            accuracy_sd: r.averaged.sd.accuracy,
        })
        .collect())
}

/// Load every `*.json` run result in `dir`, in file-name order.
pub fn read_results_dir(dir: impl AsRef<Path>) -> Result<Vec<RunResult>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", p.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::SeedAverage;

    fn result(factor: f64, moe: bool, acc: f64) -> RunResult {
        let mut config = ExperimentConfig::default();
        config.augmentation_factor = factor;
        config.model.moe_enabled = moe;
        let v = MetricValues {
            accuracy: acc,
            ..Default::default()
        };
        RunResult {
            config,
            per_seed: vec![],
            averaged: SeedAverage {
                mean: v,
                sd: MetricValues::default(),
                runs: 1,
            },
            evaluated_on: 0,
        }
    }

    #[test]
    fn table_cells_order() {
        let ids: Vec<(f64, bool)> = TABLE_CELLS.iter().map(|c| (c.factor, c.moe_enabled)).collect();
        assert_eq!(
            ids,
            [(1.0, false), (1.0, true), (2.0, false), (2.0, true), (1.5, true), (2.5, true), (3.0, true)]
        );
    }

    #[test]
    fn curve_csv_shapes() {
        let one = emit_curve(&[CurvePoint {
            factor: 2.0,
            accuracy_mean: 0.8,
            accuracy_sd: 0.01,
        }]);
        assert_eq!(one.lines().count(), 2);
        let pts: Vec<CurvePoint> = [3.0, 1.0, 2.0]
            .iter()
            .map(|&f| CurvePoint {
                factor: f,
                accuracy_mean: 0.1 * f + 1.0 / 3.0,
                accuracy_sd: f / 7.0,
            })
            .collect();
        let csv = emit_curve(&pts);
        let back = parse_curve(&csv).unwrap();
        assert_eq!(back.iter().map(|p| p.factor).collect::<Vec<_>>(), [1.0, 2.0, 3.0]);
        for p in &back {
            let orig = pts.iter().find(|q| q.factor == p.factor).unwrap();
            assert!((p.accuracy_mean - orig.accuracy_mean).abs() < 1e-9);
            assert!((p.accuracy_sd - orig.accuracy_sd).abs() < 1e-9);
        }
        assert!(parse_curve("a,b\n").is_err());
    }

    #[test]
    fn curve_prefers_moe_runs() {
        let pts = curve_points(&[result(1.0, false, 0.6), result(1.0, true, 0.7), result(2.0, false, 0.8)]).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].accuracy_mean, 0.7);
        assert_eq!(pts[1].accuracy_mean, 0.8);
        assert!(curve_points(&[result(1.0, true, 0.6), result(1.0, true, 0.7)]).is_err());
    }

    #[test]
    fn grid_requires_manifest_per_factor() {
        let g = GridSpec {
            test_manifest: "t".into(),
            caches: "c".into(),
            test_caches: None,
            manifests: [("1".to_string(), PathBuf::from("a")), ("2.0".to_string(), PathBuf::from("b"))].into(),
            cells: None,
        };
        assert_eq!(g.manifest_for(2.0).unwrap(), Path::new("b"));
        let err = run_ablation(&ExperimentConfig::default(), &g).unwrap_err();
        assert!(err.to_string().contains("factor 1.5"), "{err}");
    }

    #[test]
    fn ablation_csv_columns() {
        let rows = vec![CellResult {
            id: 1,
            cell: TABLE_CELLS[0],
            result: result(1.0, false, 0.75),
        }];
        let csv = ablation_csv(&rows);
        let mut lines = csv.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header.len(), 3 + 14);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&row[..4], ["1", "1", "false", "0.75"]);
    }
}
