//! Contingency tables over a product of discrete variable level sets.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// The level counts of the k discrete variables, in vertex order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VariableSpec {
    levels: Vec<usize>,
}

impl VariableSpec {
    /// Every variable needs at least two levels.
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("need at least one variable"));
        }
        if levels.iter().any(|&l| l < 2) {
            return Err(Error::invalid("every variable needs at least 2 levels"));
        }
        Ok(VariableSpec { levels })
    }

    /// `k` binary variables.
    pub fn binary(k: usize) -> Result<Self> {
        VariableSpec::new(vec![2; k])
    }

    pub fn num_vars(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    /// Total number of cells, the product of all level counts.
    pub fn num_cells(&self) -> usize {
        self.levels.iter().product()
    }

    /// Row-major cell index of a coordinate vector (0-based levels,
    /// vertex order, last variable fastest).
    pub fn cell_index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.levels.len());
        let mut idx = 0;
        for (&c, &l) in coords.iter().zip(&self.levels) {
            debug_assert!(c < l);
            idx = idx * l + c;
        }
        idx
    }

    /// Inverse of [`cell_index`](Self::cell_index).
    pub fn cell_coords(&self, mut index: usize) -> Vec<usize> {
        let mut coords = vec![0; self.levels.len()];
        for (slot, &l) in coords.iter_mut().zip(&self.levels).rev() {
            *slot = index % l;
            index /= l;
        }
        coords
    }
}

/// Observed cell counts, row-major over the cells of the variable product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    spec: VariableSpec,
    counts: Vec<u64>,
}

impl ContingencyTable {
    /// A table must have one count per cell and a positive total.
    pub fn new(spec: VariableSpec, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != spec.num_cells() {
            return Err(Error::invalid(format!(
                "expected {} cells, got {}",
                spec.num_cells(),
                counts.len()
            )));
        }
        if counts.iter().sum::<u64>() == 0 {
            return Err(Error::invalid("table total must be >= 1"));
        }
        Ok(ContingencyTable { spec, counts })
    }

    pub fn spec(&self) -> &VariableSpec {
        &self.spec
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Writes the table as CSV: header `v1,...,vk,count`, then one row per
    /// cell with 1-based level indices.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.spec.num_vars();
        let mut header: Vec<String> = (1..=k).map(|v| format!("v{v}")).collect();
        header.push("count".to_string());
        w.write_record(&header)?;
        for (idx, &count) in self.counts.iter().enumerate() {
            let coords = self.spec.cell_coords(idx);
            let mut row: Vec<String> = coords.iter().map(|&c| (c + 1).to_string()).collect();
            row.push(count.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a table from the CSV layout produced by
    /// [`write_csv`](Self::write_csv). Level counts are inferred as the
    /// largest 1-based index seen per column; cells missing from the file
    /// default to count 0; duplicate cells are rejected.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let mut rows: Vec<(Vec<usize>, u64)> = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::invalid("table row needs level indices and a count"));
            }
            let mut coords = Vec::with_capacity(record.len() - 1);
            for field in record.iter().take(record.len() - 1) {
                let level: usize = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad level index: {field:?}")))?;
                if level == 0 {
                    return Err(Error::invalid("level indices are 1-based"));
                }
                coords.push(level - 1);
            }
            let count: u64 = record[record.len() - 1]
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad count: {:?}", &record[record.len() - 1])))?;
            rows.push((coords, count));
        }
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("empty table file"))?;
        let k = first.0.len();
        let mut levels = vec![0usize; k];
        for (coords, _) in &rows {
            if coords.len() != k {
                return Err(Error::invalid("inconsistent column count"));
            }
            for (slot, &c) in levels.iter_mut().zip(coords) {
                *slot = (*slot).max(c + 1);
            }
        }
        let spec = VariableSpec::new(levels)?;
        let mut counts = vec![u64::MAX; spec.num_cells()];
        for (coords, count) in &rows {
            let idx = spec.cell_index(coords);
            if counts[idx] != u64::MAX {
                return Err(Error::invalid(format!("duplicate cell {coords:?}")));
            }
            counts[idx] = *count;
        }
        for c in counts.iter_mut() {
            if *c == u64::MAX {
                *c = 0;
            }
        }
        ContingencyTable::new(spec, counts)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
