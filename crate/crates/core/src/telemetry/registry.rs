//! Cell registry: antenna identifiers with WGS84 coordinates.
//!
//! CSV format: header `cell_id,lat,lon`, decimal degrees.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::cube::CellId;
use super::TelemetryError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellInfo {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellRegistry {
    cells: BTreeMap<CellId, CellInfo>,
}

impl CellRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cell: CellId, lat: f64, lon: f64) -> Result<(), TelemetryError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(TelemetryError::Registry(format!("latitude {lat} out of range for {cell}")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(TelemetryError::Registry(format!("longitude {lon} out of range for {cell}")));
        }
        if self.cells.insert(cell.clone(), CellInfo { lat, lon }).is_some() {
            return Err(TelemetryError::Registry(format!("duplicate cell id {cell}")));
        }
        Ok(())
    }

    pub fn get(&self, cell: &CellId) -> Option<CellInfo> {
        self.cells.get(cell).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellId, CellInfo)> {
        self.cells.iter().map(|(c, i)| (c, *i))
    }

    pub fn cell_ids(&self) -> impl Iterator<Item = &CellId> {
        self.cells.keys()
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, TelemetryError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| TelemetryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut registry = CellRegistry::new();
        for result in rdr.records() {
            let record = result.map_err(|e| TelemetryError::Registry(e.to_string()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let get = |i: usize| {
                record.get(i).ok_or_else(|| {
                    TelemetryError::Registry(format!("line {line}: missing column {i}"))
                })
            };
            let cell = CellId::new(get(0)?).map_err(TelemetryError::Registry)?;
            let lat: f64 = get(1)?
                .parse()
                .map_err(|_| TelemetryError::Registry(format!("line {line}: bad latitude")))?;
            let lon: f64 = get(2)?
                .parse()
                .map_err(|_| TelemetryError::Registry(format!("line {line}: bad longitude")))?;
            registry.insert(cell, lat, lon)?;
        }
        Ok(registry)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, meta_lines: &[String]) -> Result<(), TelemetryError> {
        let path = path.as_ref();
        let io_err = |source| TelemetryError::Io { path: path.display().to_string(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        for line in meta_lines {
            writeln!(w, "# {line}").map_err(io_err)?;
        }
        writeln!(w, "cell_id,lat,lon").map_err(io_err)?;
        for (cell, info) in &self.cells {
            writeln!(w, "{cell},{},{}", info.lat, info.lon).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}
