//! `model.json` (architecture plus flat parameters) and `history.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{Model, ModelSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub architecture: ModelSpec,
    pub parameters: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Checkpoint {
            architecture: model.spec(),
            parameters: model.to_flat(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        Model::from_flat(&self.architecture, &self.parameters)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::format(path, e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

pub fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,mean_loss\n");
    for (epoch, loss) in history.iter().enumerate() {
        writeln!(out, "{epoch},{loss:?}").expect("writing to a string");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            line.split_once(',')
                .and_then(|(_, v)| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::format(path, format!("bad history line '{line}'")))
        })
        .collect()
}
