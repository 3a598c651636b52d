//! Two-dimensional table representation shared by every pipeline stage.
//!
//! Tables come out of the understanding stage as CSV text. [`parse_csv`]
//! turns that text into a rectangular [`TableDocument`], repairing short rows
//! and duplicate headers and recording each repair. Overlong rows and broken
//! quoting are errors so the caller can re-prompt instead of guessing.

mod cell;
mod csv;

use serde::{Deserialize, Serialize};

pub use cell::{coerce_cell, to_number, CellKind, CellValue, CURRENCY_SYMBOLS};
pub use csv::{parse_csv, preview, serialize_csv, TableError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDocument {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<CellValue>>,
    #[serde(default)]
    pub repair_notes: Vec<String>,
}

impl TableDocument {
    /// Builds a table from raw strings, coercing every cell.
    ///
    /// Panics if a row's width differs from the header; intended for fixtures
    /// and tests where the shape is known.
    pub fn from_raw<S: AsRef<str>>(columns: &[S], rows: &[Vec<S>]) -> Self {
        let columns: Vec<String> = columns.iter().map(|c| c.as_ref().to_string()).collect();
        let rows = rows
            .iter()
            .map(|row| {
                assert_eq!(row.len(), columns.len(), "row width must match header");
                row.iter().map(|c| coerce_cell(c.as_ref())).collect()
            })
            .collect();
        Self {
            columns,
            rows,
            repair_notes: Vec::new(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column_cells(&self, index: usize) -> impl Iterator<Item = &CellValue> {
        self.rows.iter().map(move |row| &row[index])
    }

    /// Kind summarising a column: the shared kind of its non-empty cells,
    /// `Decimal` for mixed numeric kinds, `Text` otherwise.
    pub fn column_kind(&self, index: usize) -> CellKind {
        let mut kinds = self
            .column_cells(index)
            .filter(|c| !c.is_empty())
            .map(|c| c.kind);
        let Some(first) = kinds.next() else {
            return CellKind::Text;
        };
        let mut all_numeric = first.is_numeric();
        let mut uniform = true;
        for kind in kinds {
            all_numeric &= kind.is_numeric();
            uniform &= kind == first;
        }
        match (uniform, all_numeric) {
            (true, _) => first,
            (false, true) => CellKind::Decimal,
            (false, false) => CellKind::Text,
        }
    }

    /// Distinct raw values of the text cells in a column, in first-seen order.
    pub fn distinct_text_values(&self, index: usize) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for cell in self.column_cells(index) {
            if cell.kind == CellKind::Text && !cell.is_empty() && !out.contains(&cell.raw) {
                out.push(cell.raw.clone());
            }
        }
        out
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }
}
