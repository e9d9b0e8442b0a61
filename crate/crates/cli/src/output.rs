//! File helpers. Every output goes through a temp file in the target
//! directory and is renamed into place once complete.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{CliError, Result, ResultExt};

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).context(path.display())
}

pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).context(dir.display())?;
    let tmp = NamedTempFile::new_in(dir).context(dir.display())?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        body(&mut out).map_err(|e| e.context(path.display()))?;
        out.flush().context(path.display())?;
    }
    tmp.as_file().sync_all().context(path.display())?;
    tmp.persist(path)
        .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        writeln!(out)?;
        Ok(())
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    write_atomic(path, |out| {
        // explicit header so empty tables still carry their columns
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        wtr.write_record(header)?;
        for row in rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    })
}
