//! Train/test dataset construction and the on-disk format.
//!
//! A dataset directory holds `meta.json` and `samples.jsonl`, one record per
//! line: `{"sensors": [[..]..], "u": [..], "queries": [[..]..], "targets": [..]}`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::burgers::{burgers_initial_condition, burgers_solve, interpolate_periodic, BurgersConfig, PERIOD};
use super::elliptic::{elliptic_source, gaussian_basis_solutions, interior_grid, EllipticConfig, GridSolution};
use super::sensors::{SamplingMode, SensorLayout, SensorSampler};
use super::streams::{stream, Purpose};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::operators::{OperatorSample, PointSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", content = "config", rename_all = "snake_case")]
pub enum ProblemConfig {
    Burgers(BurgersConfig),
    Elliptic(EllipticConfig),
}

impl ProblemConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemConfig::Burgers(_) => "burgers",
            ProblemConfig::Elliptic(_) => "elliptic",
        }
    }

    /// Default configuration for `"burgers"` or `"elliptic"`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "burgers" => Ok(ProblemConfig::Burgers(BurgersConfig::default())),
            "elliptic" => Ok(ProblemConfig::Elliptic(EllipticConfig::default())),
            other => Err(Error::config(format!("unknown problem '{other}' (expected burgers or elliptic)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProblemConfig::Burgers(c) => c.validate(),
            ProblemConfig::Elliptic(c) => c.validate(),
        }
    }

    /// Sensor layout used under `mode`: Burgers uses the uniform grid for
    /// fixed sensors and per-interval draws for free ones; the elliptic
    /// problem always draws one sensor per coarse cell.
    pub fn sensor_layout(&self, mode: SamplingMode) -> SensorLayout {
        match (self, mode) {
            (ProblemConfig::Burgers(c), SamplingMode::Fix) => SensorLayout::Uniform {
                lo: 0.0,
                hi: PERIOD,
                n: c.n_sensors,
            },
            (ProblemConfig::Burgers(c), SamplingMode::Free) => SensorLayout::Stratified {
                lo: 0.0,
                hi: PERIOD,
                n: c.n_sensors,
            },
            (ProblemConfig::Elliptic(c), _) => SensorLayout::StratifiedSquare { cells: c.sensor_cells },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn sensor_purpose(self) -> Purpose {
        match self {
            Split::Train => Purpose::TrainSensors,
            Split::Test => Purpose::TestSensors,
        }
    }

    fn input_purpose(self) -> Purpose {
        match self {
            Split::Train => Purpose::TrainInput,
            Split::Test => Purpose::TestInput,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub problem: String,
    pub split: Split,
    pub mode: SamplingMode,
    pub seed: u64,
    pub config: ProblemConfig,
    pub n_samples: usize,
    pub n_sensors: usize,
    pub sensor_dim: usize,
    pub query_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<OperatorSample>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    sensors: Vec<Vec<f64>>,
    u: Vec<f64>,
    queries: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

fn points_to_rows(points: &PointSet) -> Vec<Vec<f64>> {
    points.iter().map(<[f64]>::to_vec).collect()
}

fn rows_to_points(rows: &[Vec<f64>], dim: usize) -> Result<PointSet> {
    PointSet::from_points(dim, rows)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes `meta.json` and `samples.jsonl` into `dir`, creating it.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta_path = dir.join("meta.json");
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::format(&meta_path, e.to_string()))?;
        fs::write(&meta_path, meta + "\n").map_err(|e| Error::io(&meta_path, e))?;

        let samples_path = dir.join("samples.jsonl");
        let file = File::create(&samples_path).map_err(|e| Error::io(&samples_path, e))?;
        let mut out = BufWriter::new(file);
        for s in &self.samples {
            let record = SampleRecord {
                sensors: points_to_rows(&s.sensors),
                u: s.u.clone(),
                queries: points_to_rows(&s.queries),
                targets: s.targets.clone(),
            };
            let line = serde_json::to_string(&record).map_err(|e| Error::format(&samples_path, e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| Error::io(&samples_path, e))?;
        }
        out.flush().map_err(|e| Error::io(&samples_path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| Error::format(&meta_path, e.to_string()))?;

        let samples_path = dir.join("samples.jsonl");
        let file = File::open(&samples_path).map_err(|e| Error::io(&samples_path, e))?;
        let mut samples = Vec::with_capacity(meta.n_samples);
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&samples_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::format(&samples_path, format!("line {}: {message}", i + 1));
            let r: SampleRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            let sample = OperatorSample::new(
                rows_to_points(&r.sensors, meta.sensor_dim).map_err(|e| bad(e.to_string()))?,
                r.u,
                rows_to_points(&r.queries, meta.query_dim).map_err(|e| bad(e.to_string()))?,
                r.targets,
            )
            .map_err(|e| bad(e.to_string()))?;
            if sample.sensors.len() != meta.n_sensors {
                return Err(bad(format!(
                    "{} sensors, metadata declares {}",
                    sample.sensors.len(),
                    meta.n_sensors
                )));
            }
            samples.push(sample);
        }
        if samples.len() != meta.n_samples {
            return Err(Error::format(&samples_path, format!("{} samples, metadata declares {}", samples.len(), meta.n_samples)));
        }
        Ok(Dataset { meta, samples })
    }
}

/// Training split. Only this type is accepted by the training loop.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSet(Dataset);

/// Held-out split. Only this type is accepted by evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSet(Dataset);

macro_rules! split_wrapper {
    ($name:ident, $split:expr) => {
        impl $name {
            pub fn new(dataset: Dataset) -> Result<Self> {
                if dataset.meta.split != $split {
                    return Err(Error::contract(format!(
                        "expected a {:?} split, got {:?}",
                        $split, dataset.meta.split
                    )));
                }
                Ok($name(dataset))
            }

            pub fn read(dir: &Path) -> Result<Self> {
                Self::new(Dataset::read(dir)?)
            }

            pub fn dataset(&self) -> &Dataset {
                &self.0
            }

            pub fn into_dataset(self) -> Dataset {
                self.0
            }

            pub fn samples(&self) -> &[OperatorSample] {
                &self.0.samples
            }

            pub fn meta(&self) -> &DatasetMeta {
                &self.0.meta
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }
        }
    };
}

split_wrapper!(TrainSet, Split::Train);
split_wrapper!(TestSet, Split::Test);

/// Builds both splits. Every sample draws from its own `(seed, split,
/// index)` streams, so the result does not depend on `exec`.
pub fn build_dataset(
    problem: &ProblemConfig,
    mode: SamplingMode,
    n_train: usize,
    n_test: usize,
    seed: u64,
    exec: Exec,
) -> Result<(TrainSet, TestSet)> {
    problem.validate()?;
    let sampler = SensorSampler::new(mode, problem.sensor_layout(mode), seed)?;
    let (train, test) = match problem {
        ProblemConfig::Burgers(c) => (
            burgers_split(c, &sampler, Split::Train, n_train, seed, exec)?,
            burgers_split(c, &sampler, Split::Test, n_test, seed, exec)?,
        ),
        ProblemConfig::Elliptic(c) => {
            let basis = if n_train + n_test > 0 {
                gaussian_basis_solutions(c, exec)?
            } else {
                Vec::new()
            };
            (
                elliptic_split(c, &basis, &sampler, Split::Train, n_train, seed, exec)?,
                elliptic_split(c, &basis, &sampler, Split::Test, n_test, seed, exec)?,
            )
        }
    };
    let wrap = |split: Split, samples: Vec<OperatorSample>| Dataset {
        meta: DatasetMeta {
            problem: problem.name().to_string(),
            split,
            mode,
            seed,
            config: problem.clone(),
            n_samples: samples.len(),
            n_sensors: sampler.layout().n_sensors(),
            sensor_dim: sampler.layout().dim(),
            query_dim: 2,
        },
        samples,
    };
    Ok((
        TrainSet(wrap(Split::Train, train)),
        TestSet(wrap(Split::Test, test)),
    ))
}

/// Training queries `(x, t)`: `n_query_points` uniform points of `[0, 2 pi)`
/// at each snapshot time, time-major. Test queries: `n_test_points` uniform
/// points of `[0, 2 pi]` at the terminal time.
fn burgers_queries(config: &BurgersConfig, split: Split) -> (Vec<f64>, Vec<f64>) {
    match split {
        Split::Train => {
            let xs = (0..config.n_query_points)
                .map(|i| PERIOD * i as f64 / config.n_query_points as f64)
                .collect();
            (xs, config.snapshot_times())
        }
        Split::Test => {
            let last = (config.n_test_points.max(2) - 1) as f64;
            let xs = (0..config.n_test_points)
                .map(|i| PERIOD * i as f64 / last)
                .collect();
            (xs, vec![config.terminal_time])
        }
    }
}

fn burgers_split(
    config: &BurgersConfig,
    sampler: &SensorSampler,
    split: Split,
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<OperatorSample>> {
    let (xs, times) = burgers_queries(config, split);
    let mut query_coords = Vec::with_capacity(2 * xs.len() * times.len());
    for &t in &times {
        for &x in &xs {
            query_coords.extend_from_slice(&[x, t]);
        }
    }
    let queries = PointSet::new(2, query_coords)?;
    let (lo, hi) = config.s_range;
    exec.try_map(n, |i| {
        let s = if hi > lo {
            stream(seed, split.input_purpose(), i as u64).gen_range(lo..hi)
        } else {
            lo
        };
        let sensors = sampler.sensors(split.sensor_purpose(), i as u64);
        let u = burgers_initial_condition(s, config.pre_evolution_time, sensors.flattened())?;
        let snapshots = burgers_solve(config, s, &times)?;
        let targets = snapshots
            .iter()
            .flat_map(|snap| xs.iter().map(move |&x| interpolate_periodic(snap, x)))
            .collect();
        OperatorSample::new(sensors, u, queries.clone(), targets)
    })
}

fn elliptic_split(
    config: &EllipticConfig,
    basis: &[GridSolution],
    sampler: &SensorSampler,
    split: Split,
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<OperatorSample>> {
    let grid = interior_grid(match split {
        Split::Train => config.train_grid,
        Split::Test => config.test_grid,
    });
    let queries = PointSet::new(2, grid.iter().flatten().copied().collect())?;
    if n == 0 {
        return Ok(Vec::new());
    }
    // Basis responses at the query points, one row per Gaussian.
    let at_queries: Vec<Vec<f64>> = basis
        .iter()
        .map(|b| grid.iter().map(|p| b.interpolate(p[0], p[1])).collect())
        .collect();
    let (lo, hi) = config.weight_range;
    exec.try_map(n, |i| {
        let mut rng = stream(seed, split.input_purpose(), i as u64);
        let weights: Vec<f64> = (0..config.n_gaussians)
            .map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo })
            .collect();
        let source = elliptic_source(config, &weights)?;
        let sensors = sampler.sensors(split.sensor_purpose(), i as u64);
        let u = sensors.iter().map(|p| source.evaluate(p[0], p[1])).collect();
        let mut targets = vec![0.0; grid.len()];
        for (w, row) in weights.iter().zip(&at_queries) {
            for (t, v) in targets.iter_mut().zip(row) {
                *t += w * v;
            }
        }
        OperatorSample::new(sensors, u, queries.clone(), targets)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_burgers() -> ProblemConfig {
        ProblemConfig::Burgers(BurgersConfig {
            grid_cells: 128,
            ..BurgersConfig::default()
        })
    }

    #[test]
    fn burgers_shapes_and_no_terminal_time_in_training() {
        let (train, test) = build_dataset(&small_burgers(), SamplingMode::Fix, 3, 2, 7, Exec::Sequential).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(test.len(), 2);
        for s in train.samples() {
            assert_eq!(s.queries.len(), 125);
            assert_eq!(s.sensors.len(), 25);
            assert!(s.queries.iter().all(|q| q[1] < 0.3 - 1e-12));
        }
        for s in test.samples() {
            assert_eq!(s.queries.len(), 151);
            assert!(s.queries.iter().all(|q| q[1] == 0.3));
            assert_eq!(s.queries.point(150)[0], PERIOD);
        }
    }

    #[test]
    fn burgers_training_targets_at_time_zero_match_the_initial_condition() {
        let (train, _) = build_dataset(&small_burgers(), SamplingMode::Free, 2, 0, 3, Exec::Sequential).unwrap();
        let s = &train.samples()[1];
        // Sample 1's sensors are different from sample 0's in free mode.
        assert_ne!(s.sensors, train.samples()[0].sensors);
        // Recover s from one sensor value: u = s sin(y - u t_pre).
        let (y, u) = (s.sensors.point(3)[0], s.u[3]);
        let amp = u / (y - u * 0.1).sin();
        for (q, t) in s.queries.iter().zip(&s.targets).take(25) {
            let exact = super::super::burgers::characteristic_solution(amp, 0.1, q[0]).unwrap();
            assert!((t - exact).abs() < 1e-6, "{t} vs {exact}");
        }
    }

    #[test]
    fn empty_split_has_valid_metadata() {
        let (train, test) = build_dataset(&small_burgers(), SamplingMode::Fix, 0, 1, 1, Exec::Sequential).unwrap();
        assert!(train.is_empty());
        assert_eq!(train.meta().n_samples, 0);
        assert_eq!(train.meta().n_sensors, 25);
        assert_eq!(test.len(), 1);
    }

    #[test]
    fn parallel_and_sequential_builds_agree() {
        let a = build_dataset(&small_burgers(), SamplingMode::Free, 4, 2, 9, Exec::Sequential).unwrap();
        let b = build_dataset(&small_burgers(), SamplingMode::Free, 4, 2, 9, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn round_trip_through_disk() {
        let (train, _) = build_dataset(&small_burgers(), SamplingMode::Free, 2, 0, 5, Exec::Sequential).unwrap();
        let dir = std::env::temp_dir().join(format!("belnet-dataset-{}", std::process::id()));
        train.dataset().write(&dir).unwrap();
        let back = TrainSet::read(&dir).unwrap();
        fs::remove_dir_all(&dir).ok();
        assert_eq!(back, train);
        assert!(TestSet::new(back.into_dataset()).is_err());
    }

    #[test]
    fn elliptic_small_grid_is_linear_in_the_weights() {
        let config = EllipticConfig {
            fine_cells: 32,
            test_grid: 7,
            ..EllipticConfig::default()
        };
        let problem = ProblemConfig::Elliptic(config.clone());
        let (train, test) = build_dataset(&problem, SamplingMode::Fix, 2, 1, 11, Exec::Sequential).unwrap();
        assert_eq!(train.samples()[0].queries.len(), 361);
        assert_eq!(test.samples()[0].queries.len(), 49);
        assert_eq!(train.samples()[0].sensors, test.samples()[0].sensors);
        // Direct solve of the same source agrees with the basis combination.
        let mut rng = stream(11, Purpose::TrainInput, 0);
        let w: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let src = elliptic_source(&config, &w).unwrap();
        let direct = super::super::elliptic::elliptic_solve(
            &|x, y| src.evaluate(x, y),
            &|x, y| super::super::elliptic::elliptic_permeability(&config.epsilons, x, y),
            32,
            1e-12,
            10_000,
        )
        .unwrap();
        for (q, t) in train.samples()[0].queries.iter().zip(&train.samples()[0].targets) {
            assert!((direct.interpolate(q[0], q[1]) - t).abs() < 1e-9);
        }
    }
}
