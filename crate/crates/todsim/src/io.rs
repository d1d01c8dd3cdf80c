//! Artifact files. Every artifact carries a provenance record: JSON documents
//! get a `"provenance"` key, JSONL files start with a `{"provenance": ...}`
//! line and TSV files with a `#` comment line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use todsim_core::action::{parse_corpus, Dialogue};
use todsim_core::Ontology;

use crate::config::RunConfig;
use crate::error::CliError;

pub const TOOL: &str = "todsim";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub command: String,
}

impl Provenance {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            tool: TOOL.into(),
            version: todsim_core::VERSION.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            command: command.into(),
        }
    }

    fn tsv_comment(&self) -> String {
        format!(
            "# {} {} command={} config={} seed={}\n",
            self.tool, self.version, self.command, self.config_hash, self.seed
        )
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn load_ontology(path: &Path) -> Result<Ontology, CliError> {
    let text = read_text(path)?;
    todsim_core::ontology::load_ontology(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn load_corpus(path: &Path) -> Result<Vec<Dialogue>, CliError> {
    parse_corpus(&read_text(path)?).map_err(|errs| {
        let lines: Vec<String> = errs.iter().take(5).map(|e| format!("{}: {e}", path.display())).collect();
        CliError::input(lines.join("\n"))
    })
}

/// Creates `dir` and returns `dir/name`.
pub fn out_path(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir.join(name))
}

/// Writes a JSON document with a `"provenance"` key added at the top level.
pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, body: &T) -> Result<(), CliError> {
    let mut doc = serde_json::Map::new();
    doc.insert("provenance".into(), serde_json::to_value(prov).expect("provenance serializes"));
    match serde_json::to_value(body).expect("artifact serializes") {
        Value::Object(m) => doc.extend(m),
        other => {
            doc.insert("data".into(), other);
        }
    }
    let text = serde_json::to_string_pretty(&Value::Object(doc)).expect("json serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

/// Single writer for a JSONL artifact.
pub struct JsonlSink {
    out: BufWriter<File>,
    path: PathBuf,
}

impl JsonlSink {
    pub fn create(path: &Path, prov: &Provenance) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        let mut sink = Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        sink.write_line(&serde_json::json!({ "provenance": prov }).to_string())?;
        Ok(sink)
    }

    pub fn write<T: Serialize>(&mut self, item: &T) -> Result<(), CliError> {
        let line = serde_json::to_string(item).expect("record serializes");
        self.write_line(&line)
    }

    pub fn write_line(&mut self, line: &str) -> Result<(), CliError> {
        writeln!(self.out, "{line}").map_err(|e| CliError::runtime(format!("{}: {e}", self.path.display())))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out
            .flush()
            .map_err(|e| CliError::runtime(format!("{}: {e}", self.path.display())))
    }
}

pub fn write_tsv(path: &Path, prov: &Provenance, table: &str) -> Result<(), CliError> {
    let text = prov.tsv_comment() + table;
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifacts_embed_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let prov = Provenance::new("test", &RunConfig::default());
        let p = dir.path().join("a.json");
        write_json(&p, &prov, &serde_json::json!({"x": 1})).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["provenance"]["config_hash"], prov.config_hash);
        assert_eq!(v["x"], 1);

        let p = dir.path().join("a.jsonl");
        let mut sink = JsonlSink::create(&p, &prov).unwrap();
        sink.write(&serde_json::json!({"y": 2})).unwrap();
        sink.finish().unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(todsim_core::action::is_provenance_line(text.lines().next().unwrap()));
        assert_eq!(text.lines().count(), 2);

        let p = dir.path().join("a.tsv");
        write_tsv(&p, &prov, "a\tb\n").unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("# todsim"));
    }
}
