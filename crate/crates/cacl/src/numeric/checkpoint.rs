//! Flat, versioned parameter serialization.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Matrix, ParamStore};
use crate::{CaclError, Result};

const FORMAT: &str = "cacl-params";
const VERSION: u32 = 1;

/// One parameter as stored on disk: name, shape, row-major values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamDump {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamFile {
    format: String,
    version: u32,
    params: Vec<ParamDump>,
}

pub fn dump_params(store: &ParamStore) -> Vec<ParamDump> {
    store
        .iter()
        .map(|(_, p)| ParamDump {
            name: p.name.clone(),
            rows: p.value.rows(),
            cols: p.value.cols(),
            data: p.value.data().to_vec(),
        })
        .collect()
}

/// Writes values into an already-constructed store, matching by name.
/// Every store parameter must be present with the same shape.
pub fn restore_params(store: &mut ParamStore, dumps: &[ParamDump]) -> Result<()> {
    for id in store.ids() {
        let name = store.name(id).to_string();
        let dump = dumps
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| CaclError::Checkpoint(format!("missing param {name}")))?;
        let expected = store.value(id).shape();
        if (dump.rows, dump.cols) != expected {
            return Err(CaclError::Checkpoint(format!(
                "param {name}: stored shape {}x{} vs expected {}x{}",
                dump.rows, dump.cols, expected.0, expected.1
            )));
        }
        *store.value_mut(id) = Matrix::from_vec(dump.rows, dump.cols, dump.data.clone())?;
    }
    Ok(())
}

pub fn save_params(store: &ParamStore, path: &Path) -> Result<()> {
    let file = ParamFile {
        format: FORMAT.to_string(),
        version: VERSION,
        params: dump_params(store),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &file)
        .map_err(|e| CaclError::Checkpoint(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<Vec<ParamDump>> {
    let r = BufReader::new(File::open(path)?);
    let file: ParamFile =
        serde_json::from_reader(r).map_err(|e| CaclError::Checkpoint(e.to_string()))?;
    if file.format != FORMAT {
        return Err(CaclError::Checkpoint(format!(
            "unrecognized format {:?}",
            file.format
        )));
    }
    if file.version != VERSION {
        return Err(CaclError::Checkpoint(format!(
            "unsupported version {}",
            file.version
        )));
    }
    Ok(file.params)
}
