//! Line-delimited JSON dataset files, one [`MemeRecord`] per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{validate_dataset, MemeRecord};
use crate::error::{Error, Result};

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<MemeRecord>> {
    let mut records = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let record: MemeRecord =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Malformed {
                line: i + 1,
                field: match e.path().to_string() {
                    p if p == "." => "<record>".to_string(),
                    p => p,
                },
                message: e.into_inner().to_string(),
            })?;
        records.push(record);
    }
    validate_dataset(&records)?;
    Ok(records)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<MemeRecord>> {
    read_dataset(File::open(path)?)
}

pub fn write_dataset<W: Write>(records: &[MemeRecord], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(records: &[MemeRecord], path: impl AsRef<Path>) -> Result<()> {
    write_dataset(records, File::create(path)?)
}
