use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Stdout, or the file named by `--out`.
pub fn sink(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_rows<R: Serialize>(rows: &[R], format: Format, mut w: impl Write) -> io::Result<()> {
    match format {
        Format::Csv => {
            let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut w);
            for r in rows {
                csv.serialize(r).map_err(io::Error::other)?;
            }
            csv.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows).map_err(io::Error::other)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()
}

pub fn write_object<R: Serialize>(obj: &R, mut w: impl Write) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, obj).map_err(io::Error::other)?;
    w.write_all(b"\n")?;
    w.flush()
}
