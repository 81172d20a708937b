use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::config::Format;

/// Writes every artifact atomically (temp file + rename) and stamps it
/// with the config hash.
pub struct Sink {
    pub dir: PathBuf,
    pub sha256: String,
    pub formats: Vec<Format>,
}

impl Sink {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn csv(&self, name: &str, body: &str) -> io::Result<PathBuf> {
        let text = format!("# config_sha256={}\n{body}", self.sha256);
        self.write(name, text.as_bytes())
    }

    pub fn json(&self, name: &str, value: Value) -> io::Result<PathBuf> {
        let value = match value {
            Value::Object(mut map) => {
                map.insert("configSha256".into(), Value::String(self.sha256.clone()));
                Value::Object(map)
            }
            other => serde_json::json!({ "configSha256": self.sha256, "items": other }),
        };
        let mut text = serde_json::to_string_pretty(&value).expect("json value serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write(&self, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let target = self.dir.join(name);
        write_atomic(&target, bytes)?;
        Ok(target)
    }
}

pub fn write_atomic(target: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = target.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, target).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// `0.1` → `h0.1`, as used in artifact names.
pub fn h_tag(h: f64) -> String {
    format!("h{h}")
}
