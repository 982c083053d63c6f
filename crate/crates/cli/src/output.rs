use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Collects rows for one CSV file; written with the config header on top.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(columns).expect("in-memory write");
        Self { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}

/// Output directory plus the header every file starts with.
pub struct Sink {
    dir: PathBuf,
    header: String,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, header: String) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            header,
            written: Vec::new(),
        })
    }

    /// `name` is relative to the output directory.
    pub fn write(&mut self, name: &str, body: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        let mut bytes = self.header.clone().into_bytes();
        bytes.extend_from_slice(body);
        std::fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.written.push(path);
        Ok(())
    }

    pub fn table(&mut self, name: &str, table: Table) -> Result<(), CliError> {
        self.write(name, &table.into_bytes())
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.written
    }
}

pub fn num(v: f64) -> String {
    v.to_string()
}
