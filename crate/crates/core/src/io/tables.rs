//! CSV result tables.

use std::path::Path;

use crate::density::DiscretizationGrid;
use crate::engine::IterationDiagnostics;
use crate::error::Result;
use crate::eval::{HoldoutResult, KlSeries};
use crate::io::{fmt_float, write_text};

/// A header plus rows of already formatted fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = csv_writer();
        out.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            out.write_record(row).expect("in-memory write");
        }
        String::from_utf8(out.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

pub(crate) fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .flexible(true)
        .from_writer(Vec::new())
}

/// `None` is written as an empty field.
pub fn opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

/// Leading `cell,x1,...,xD` columns shared by per-cell tables.
pub fn cell_header(dim: usize) -> Vec<String> {
    std::iter::once("cell".to_string())
        .chain((1..=dim).map(|d| format!("x{d}")))
        .collect()
}

pub fn cell_fields(grid: &DiscretizationGrid, cell: usize) -> Vec<String> {
    std::iter::once(cell.to_string())
        .chain(grid.cell_center(cell).into_iter().map(fmt_float))
        .collect()
}

/// Most likely topic and word label at every cell.
pub fn ml_maps_table(grid: &DiscretizationGrid, topics: &[usize], words: &[usize], vocabulary: &[String]) -> Table {
    let mut t = Table::new(cell_header(grid.dim()).into_iter().chain(["topic".into(), "word".into()]));
    for (cell, (&z, &w)) in topics.iter().zip(words).enumerate() {
        let mut row = cell_fields(grid, cell);
        row.push(z.to_string());
        row.push(vocabulary[w].clone());
        t.push(row);
    }
    t
}

pub fn diagnostics_table(diagnostics: &[IterationDiagnostics], k: usize) -> Table {
    let header = ["iteration", "train_log_likelihood", "rejected_steps"]
        .into_iter()
        .map(String::from)
        .chain((0..k).map(|j| format!("elbo_{j}")));
    let mut t = Table::new(header);
    for d in diagnostics {
        let mut row = vec![
            d.iteration.to_string(),
            fmt_float(d.train_log_likelihood),
            d.rejected_steps.to_string(),
        ];
        row.extend((0..k).map(|j| opt_float(d.elbo.get(j).copied())));
        t.push(row);
    }
    t
}

pub fn kl_series_table(series: &KlSeries) -> Table {
    let mut t = Table::new(["bin", "center", "n_obs", "kl"]);
    for b in &series.bins {
        t.push(vec![b.bin.to_string(), fmt_float(b.center), b.n_obs.to_string(), opt_float(b.kl)]);
    }
    t
}

pub fn holdout_table(result: &HoldoutResult) -> Table {
    let mut t = Table::new(["start_bin", "end_bin", "n_held_out", "kl_full", "kl_held_out", "ratio"]);
    for w in &result.windows {
        t.push(vec![
            w.start_bin.to_string(),
            w.end_bin.to_string(),
            w.n_held_out.to_string(),
            opt_float(w.kl_full),
            opt_float(w.kl_held_out),
            opt_float(w.ratio),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::World;

    #[test]
    fn quoting_and_line_endings() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["x,y".into(), "plain".into()]);
        t.push(vec![String::new(), "q\"".into()]);
        assert_eq!(t.to_csv(), "a,b\n\"x,y\",plain\n,\"q\"\"\"\n");
    }

    #[test]
    fn map_rows_carry_cell_centres() {
        let grid = DiscretizationGrid::new(World::lattice(&[2, 1]).unwrap(), vec![2, 1]).unwrap();
        let vocab = vec!["a".to_string(), "b".into()];
        let csv = ml_maps_table(&grid, &[1, 0], &[0, 1], &vocab).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "cell,x1,x2,topic,word");
        assert_eq!(lines[2], "1,1.0000000000000000e0,0.0000000000000000e0,0,b");
    }
}
