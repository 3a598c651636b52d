use thiserror::Error;

use super::{coerce_cell, TableDocument};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("no header line in input")]
    EmptyInput,
    #[error("line {line}: row has {found} cells but the header has {expected}")]
    OverlongRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unbalanced or malformed quoting")]
    UnbalancedQuote { line: usize },
}

struct Record {
    line: usize,
    fields: Vec<String>,
}

impl Record {
    fn is_blank(&self) -> bool {
        self.fields.len() == 1 && self.fields[0].is_empty()
    }
}

enum State {
    FieldStart,
    Unquoted,
    Quoted,
    AfterQuote,
}

fn tokenize(text: &str) -> Result<Vec<Record>, TableError> {
    let mut records = Vec::new();
    let mut fields = Vec::new();
    let mut field = String::new();
    let mut state = State::FieldStart;
    // a record made only of `""` is a quoted empty cell, not a blank line
    let mut quoted_in_record = false;
    let mut line = 1;
    let mut record_line = 1;
    let mut quote_line = 1;
    let mut chars = text.chars().peekable();

    let finish_record = |fields: &mut Vec<String>,
                         field: &mut String,
                         records: &mut Vec<Record>,
                         quoted: bool,
                         at: usize| {
        fields.push(std::mem::take(field));
        let record = Record {
            line: at,
            fields: std::mem::take(fields),
        };
        if quoted || !record.is_blank() {
            records.push(record);
        }
    };

    while let Some(c) = chars.next() {
        match state {
            State::FieldStart | State::Unquoted => match c {
                '"' if matches!(state, State::FieldStart) => {
                    state = State::Quoted;
                    quoted_in_record = true;
                    quote_line = line;
                }
                ',' => {
                    fields.push(std::mem::take(&mut field));
                    state = State::FieldStart;
                }
                '\n' => {
                    if field.ends_with('\r') {
                        field.pop();
                    }
                    finish_record(&mut fields, &mut field, &mut records, quoted_in_record, record_line);
                    quoted_in_record = false;
                    line += 1;
                    record_line = line;
                    state = State::FieldStart;
                }
                _ => {
                    field.push(c);
                    state = State::Unquoted;
                }
            },
            State::Quoted => match c {
                '"' if chars.peek() == Some(&'"') => {
                    chars.next();
                    field.push('"');
                }
                '"' => state = State::AfterQuote,
                _ => {
                    if c == '\n' {
                        line += 1;
                    }
                    field.push(c);
                }
            },
            State::AfterQuote => match c {
                ',' => {
                    fields.push(std::mem::take(&mut field));
                    state = State::FieldStart;
                }
                '\r' if chars.peek() == Some(&'\n') => {}
                '\n' => {
                    finish_record(&mut fields, &mut field, &mut records, quoted_in_record, record_line);
                    quoted_in_record = false;
                    line += 1;
                    record_line = line;
                    state = State::FieldStart;
                }
                _ => return Err(TableError::UnbalancedQuote { line }),
            },
        }
    }
    match state {
        State::Quoted => return Err(TableError::UnbalancedQuote { line: quote_line }),
        State::FieldStart if fields.is_empty() && field.is_empty() && !quoted_in_record => {}
        _ => {
            if field.ends_with('\r') && matches!(state, State::Unquoted) {
                field.pop();
            }
            finish_record(&mut fields, &mut field, &mut records, quoted_in_record, record_line);
        }
    }
    Ok(records)
}

fn disambiguate_headers(raw: Vec<String>, notes: &mut Vec<String>) -> Vec<String> {
    let mut columns: Vec<String> = Vec::with_capacity(raw.len());
    for (i, name) in raw.into_iter().enumerate() {
        let mut name = if name.trim().is_empty() {
            let generated = format!("column_{}", i + 1);
            notes.push(format!("header {}: empty name replaced by {generated:?}", i + 1));
            generated
        } else {
            name
        };
        if columns.contains(&name) {
            let base = name.clone();
            let mut n = 2;
            while columns.contains(&format!("{base}_{n}")) {
                n += 1;
            }
            name = format!("{base}_{n}");
            notes.push(format!(
                "header {}: duplicate {base:?} renamed to {name:?}",
                i + 1
            ));
        }
        columns.push(name);
    }
    columns
}

/// Parses CSV text whose first line is the header.
///
/// Short rows are right-padded with empty cells; blank lines are skipped.
/// Every repair is recorded in `repair_notes`.
pub fn parse_csv(text: &str) -> Result<TableDocument, TableError> {
    if text.trim().is_empty() {
        return Err(TableError::EmptyInput);
    }
    let mut records = tokenize(text)?.into_iter();
    let header = records.next().ok_or(TableError::EmptyInput)?;
    let mut repair_notes = Vec::new();
    let columns = disambiguate_headers(header.fields, &mut repair_notes);
    let width = columns.len();

    let mut rows = Vec::new();
    for record in records {
        let found = record.fields.len();
        if found > width {
            return Err(TableError::OverlongRow {
                line: record.line,
                expected: width,
                found,
            });
        }
        let mut cells: Vec<_> = record.fields.iter().map(|f| coerce_cell(f)).collect();
        if found < width {
            repair_notes.push(format!(
                "line {}: padded {} missing cell(s)",
                record.line,
                width - found
            ));
            cells.resize_with(width, || coerce_cell(""));
        }
        rows.push(cells);
    }
    Ok(TableDocument {
        columns,
        rows,
        repair_notes,
    })
}

fn push_field(out: &mut String, field: &str) {
    if field.contains([',', '"', '\n', '\r']) {
        out.push('"');
        out.push_str(&field.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(field);
    }
}

fn push_record<'a>(out: &mut String, fields: impl ExactSizeIterator<Item = &'a str>) {
    let single = fields.len() == 1;
    for (i, field) in fields.enumerate() {
        if i > 0 {
            out.push(',');
        }
        if single && field.is_empty() {
            // a bare empty line would read back as a skipped blank line
            out.push_str("\"\"");
        } else {
            push_field(out, field);
        }
    }
    out.push('\n');
}

/// Canonical CSV: header then rows, minimal quoting, one trailing newline.
pub fn serialize_csv(table: &TableDocument) -> String {
    let mut out = String::new();
    push_record(&mut out, table.columns.iter().map(String::as_str));
    for row in &table.rows {
        push_record(&mut out, row.iter().map(|c| c.raw.as_str()));
    }
    out
}

/// Header plus the first `max_rows` rows, with a trailing "… N more rows"
/// line when rows were cut.
pub fn preview(table: &TableDocument, max_rows: usize) -> String {
    let max_rows = max_rows.max(1);
    let shown = table.rows.len().min(max_rows);
    let head = TableDocument {
        columns: table.columns.clone(),
        rows: table.rows[..shown].to_vec(),
        repair_notes: Vec::new(),
    };
    let mut out = serialize_csv(&head);
    let hidden = table.rows.len() - shown;
    if hidden > 0 {
        out.push_str(&format!("… {hidden} more rows\n"));
    }
    out
}
