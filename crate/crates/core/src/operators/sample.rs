use super::mlp::CoordinateMap;
use crate::autodiff::DenseArray;
use crate::error::{Error, Result};

/// Ordered list of points in `R^dim`, stored point-major, coordinate-minor.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

/// Sensor locations of one input function.
pub type SensorSet = PointSet;

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("points must have at least one coordinate"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::contract(format!(
                "{} coordinates cannot be split into {dim}-dimensional points",
                coords.len()
            )));
        }
        Ok(PointSet { dim, coords })
    }

    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::contract(format!(
                    "point {i} has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        Ok(PointSet { dim, coords })
    }

    /// One-dimensional points.
    pub fn from_scalars(values: Vec<f64>) -> Self {
        PointSet {
            dim: 1,
            coords: values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    /// The `len * dim` flattened coordinates fed to the projection nets.
    pub fn flattened(&self) -> &[f64] {
        &self.coords
    }

    /// `dim x len` matrix with one point per column.
    pub fn as_columns(&self) -> DenseArray {
        self.as_mapped_columns(None)
    }

    /// [`PointSet::as_columns`] after an optional coordinate rescaling.
    pub fn as_mapped_columns(&self, map: Option<&CoordinateMap>) -> DenseArray {
        let n = self.len();
        let mut data = vec![0.0; self.coords.len()];
        for (j, p) in self.iter().enumerate() {
            for (c, &v) in p.iter().enumerate() {
                data[c * n + j] = map.map_or(v, |m| m.apply(c, v));
            }
        }
        DenseArray::new(vec![self.dim, n], data).expect("consistent by construction")
    }
}

/// One input function observed at its sensors, with target values of the
/// output function at the query points.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSample {
    pub sensors: SensorSet,
    pub u: Vec<f64>,
    pub queries: PointSet,
    pub targets: Vec<f64>,
}

impl OperatorSample {
    pub fn new(sensors: SensorSet, u: Vec<f64>, queries: PointSet, targets: Vec<f64>) -> Result<Self> {
        if u.len() != sensors.len() {
            return Err(Error::contract(format!(
                "{} input values for {} sensors",
                u.len(),
                sensors.len()
            )));
        }
        if targets.len() != queries.len() {
            return Err(Error::contract(format!(
                "{} targets for {} queries",
                targets.len(),
                queries.len()
            )));
        }
        Ok(OperatorSample {
            sensors,
            u,
            queries,
            targets,
        })
    }

    /// Sample without targets, for pure prediction.
    pub fn unlabelled(sensors: SensorSet, u: Vec<f64>, queries: PointSet) -> Result<Self> {
        let targets = vec![0.0; queries.len()];
        Self::new(sensors, u, queries, targets)
    }
}
