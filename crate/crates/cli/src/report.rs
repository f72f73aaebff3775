//! JSON and CSV emitters shared by all subcommands.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use ftl_core::C64;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Rows for CSV output. Every subcommand provides one.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Table {
        Table { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    /// Two-column `key,value` table from flat pairs.
    pub fn pairs(pairs: &[(&str, String)]) -> Table {
        let mut t = Table::new(&["key", "value"]);
        for (k, v) in pairs {
            t.push(vec![k.to_string(), v.clone()]);
        }
        t
    }
}

/// Result of one subcommand.
pub struct Outcome {
    pub domain: String,
    pub result: Value,
    pub table: Table,
    /// `false` turns into exit status 2 after the output is written.
    pub certified: bool,
}

impl Outcome {
    pub fn new<T: Serialize>(domain: &str, result: &T, table: Table) -> Result<Outcome> {
        Ok(Outcome { domain: domain.to_string(), result: serde_json::to_value(result)?, table, certified: true })
    }

    pub fn require(mut self, ok: bool) -> Outcome {
        self.certified &= ok;
        self
    }
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn num(x: f64) -> String {
    format!("{:.16e}", x + 0.0)
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn complex(z: &C64) -> String {
    let sign = if z.im.is_sign_negative() { "" } else { "+" };
    format!("{}{sign}{}i", num(z.re), num(z.im))
}

pub fn point(p: &[C64]) -> String {
    p.iter().map(complex).collect::<Vec<_>>().join(";")
}

pub fn write(out: &Outcome, command: &str, seed: u64, format: Format, path: Option<&Path>) -> Result<()> {
    let mut sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    match format {
        Format::Json => {
            let doc = json!({
                "schema": 1,
                "command": command,
                "domain": out.domain,
                "seed": seed,
                "result": out.result,
            });
            serde_json::to_writer_pretty(&mut sink, &doc)?;
            writeln!(sink)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(&out.table.headers)?;
            for r in &out.table.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 6.02e23, -1e-300] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn complex_sign_is_explicit() {
        let s = complex(&C64::new(1.0, -2.0));
        assert!(s.contains("e0-2") && s.ends_with('i'), "{s}");
        let t = complex(&C64::new(1.0, 2.0));
        assert!(t.contains("e0+2"), "{t}");
    }
}
