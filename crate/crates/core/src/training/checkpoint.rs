//! Plain-text checkpoints.
//!
//! ```text
//! spantagger-ckpt v1
//! config
//! <key = value lines>
//! end config
//! vocab token <n> / vocab pos <n> / vocab deprel <n> / vocab tag <n> blocks
//! param <name> <rank> <d1..dk>
//! <space-separated values, 17 significant digits>
//! ...
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::config::TrainConfig;
use crate::corpus::Vocabs;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{ParamStore, Tensor};

pub const HEADER: &str = "spantagger-ckpt v1";

pub fn to_text(model: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    out.push_str("config\n");
    out.push_str(&model.config.to_text());
    out.push_str("end config\n");
    out.push_str(&model.vocabs.to_text());
    for (_, p) in model.params.iter() {
        let shape = p.value.shape();
        let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "param {} {} {}", p.name, shape.len(), dims.join(" "));
        let values: Vec<String> = p.value.data().iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&values.join(" "));
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

pub fn from_text(text: &str) -> Result<Model> {
    let mut lines = text.lines();
    match lines.next() {
        Some(HEADER) => {}
        Some(h) if h.starts_with("spantagger-ckpt") => {
            return Err(Error::checkpoint("version", format!("unsupported {h:?}, expected {HEADER:?}")))
        }
        _ => return Err(Error::checkpoint("header", "not a spantagger checkpoint")),
    }
    if lines.next() != Some("config") {
        return Err(Error::checkpoint("config", "missing config block"));
    }
    let mut config_text = String::new();
    loop {
        match lines.next() {
            Some("end config") => break,
            Some(l) => {
                config_text.push_str(l);
                config_text.push('\n');
            }
            None => return Err(Error::checkpoint("config", "truncated config block")),
        }
    }
    let config = TrainConfig::from_text(&config_text).map_err(|e| Error::checkpoint("config", e.to_string()))?;
    let vocabs = Vocabs::from_lines(&mut lines, config.task)?;

    let mut params = ParamStore::new();
    loop {
        let line = lines.next().ok_or_else(|| Error::checkpoint("param", "truncated: missing end marker"))?;
        if line == "end" {
            break;
        }
        let mut parts = line.split(' ');
        if parts.next() != Some("param") {
            return Err(Error::checkpoint("param", format!("unexpected line {line:?}")));
        }
        let name = parts.next().ok_or_else(|| Error::checkpoint("param", "missing name"))?;
        let rank: usize = parts
            .next()
            .and_then(|r| r.parse().ok())
            .ok_or_else(|| Error::checkpoint(name, "bad rank"))?;
        let shape: Vec<usize> = parts
            .map(|d| d.parse().map_err(|_| Error::checkpoint(name, "bad dimension")))
            .collect::<Result<_>>()?;
        if shape.len() != rank {
            return Err(Error::checkpoint(name, format!("rank {rank} but {} dimensions", shape.len())));
        }
        let values_line = lines.next().ok_or_else(|| Error::checkpoint(name, "missing values"))?;
        let values: Vec<f64> = values_line
            .split(' ')
            .map(|v| v.parse().map_err(|_| Error::checkpoint(name, format!("bad value {v:?}"))))
            .collect::<Result<_>>()?;
        let tensor = Tensor::new(shape, values).map_err(|e| Error::checkpoint(name, e.to_string()))?;
        params.insert(name, tensor).map_err(|e| Error::checkpoint(name, e.to_string()))?;
    }
    Model::from_parts(config, vocabs, params)
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    crate::io::write_atomic(path, to_text(model).as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    from_text(&crate::io::read_to_string(path)?)
}
