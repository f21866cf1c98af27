//! Table assembly and emission: CSV at full precision for machines, markdown
//! rounded to three decimals for reading, plus a machine-readable error
//! manifest for partially failed grids.

use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub enum Cell {
    Str(String),
    Num(f64),
    Int(i64),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Str(s) => {
                if s.contains(',') || s.contains('"') || s.contains('\n') {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => format!("{v}"),
            Cell::Missing => String::new(),
        }
    }

    fn md(&self) -> String {
        match self {
            Cell::Str(s) => s.clone(),
            Cell::Num(v) => format!("{v:.3}"),
            Cell::Int(v) => format!("{v}"),
            Cell::Missing => "-".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Table {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Md,
}

/// Write the table in the requested format; returns the file path.
pub fn write_table(table: &Table, out_dir: &Path, format: Format) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(match format {
        Format::Csv => format!("{}.csv", table.name),
        Format::Md => format!("{}.md", table.name),
    });
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
    match format {
        Format::Csv => {
            writeln!(w, "{}", table.columns.join(","))?;
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
        }
        Format::Md => {
            writeln!(w, "| {} |", table.columns.join(" | "))?;
            writeln!(
                w,
                "|{}|",
                table.columns.iter().map(|_| "---").collect::<Vec<_>>().join("|")
            )?;
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(Cell::md).collect();
                writeln!(w, "| {} |", cells.join(" | "))?;
            }
        }
    }
    w.flush()?;
    Ok(path)
}

/// One failed cell of a grid-style run.
#[derive(Debug, Clone)]
pub struct CellError {
    pub cell: String,
    pub message: String,
}

/// Write the error manifest; empty manifests write nothing.
pub fn write_manifest(errors: &[CellError], out_dir: &Path) -> anyhow::Result<bool> {
    if errors.is_empty() {
        return Ok(false);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("errors.csv"))?);
    writeln!(w, "cell,message")?;
    for e in errors {
        writeln!(
            w,
            "{},{}",
            Cell::Str(e.cell.clone()).csv(),
            Cell::Str(e.message.clone()).csv()
        )?;
    }
    w.flush()?;
    Ok(true)
}
