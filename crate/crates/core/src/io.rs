//! Shared file formats: configuration documents and CSV helpers.

use std::io::Write;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Configuration, MassSystem};

/// `{"masses": [...], "dim": k, "kappa": x, "positions": [[...], ...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub masses: Vec<f64>,
    pub dim: usize,
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Vec<f64>>>,
}

impl ConfigDocument {
    pub fn from_parts(sys: &MassSystem, x: Option<&Configuration>) -> Self {
        Self {
            masses: sys.masses().to_vec(),
            dim: sys.dim(),
            kappa: sys.kappa(),
            positions: x.map(|c| c.positions()),
        }
    }

    pub fn system(&self) -> Result<MassSystem> {
        MassSystem::new(self.masses.clone(), self.dim, self.kappa)
    }

    pub fn configuration(&self) -> Result<Configuration> {
        let rows = self
            .positions
            .as_ref()
            .ok_or_else(|| Error::arg("document has no positions"))?;
        let c = Configuration::from_positions(rows)?;
        if c.n_bodies() != self.masses.len() || c.dim() != self.dim {
            return Err(Error::arg("positions do not match masses and dim"));
        }
        Ok(c)
    }

    pub fn read(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Seventeen significant digits, enough for exact round trips.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// CSV writer with LF line endings.
pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}
