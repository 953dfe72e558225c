//! Versioned plain-text checkpoints.
//!
//! ```text
//! flockdet-checkpoint 1
//! [config]      key = value lines
//! [meta]        training metadata, sequence length, DTW mode
//! [scaler]      the scaler block
//! [params]      `param <name> <rows> <cols>` followed by one line of values
//! [end]
//! ```
//!
//! Floats are written in shortest round-trip form, so loading restores every
//! value bit for bit. A file without the `[end]` trailer is rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::arch::Params;
use super::{Arch, ModelConfig, SequenceModel, TrainingMeta};
use crate::error::{Error, Result};
use crate::features::{DtwMode, ScalerState};
use crate::linalg::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "flockdet-checkpoint";

fn err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(out: &mut W, model: &SequenceModel) -> Result<()> {
    let c = &model.config;
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {CHECKPOINT_VERSION}");
    let _ = writeln!(s, "[config]");
    let _ = writeln!(s, "arch = {}", c.arch.name());
    let _ = writeln!(s, "input_dim = {}", c.input_dim);
    let _ = writeln!(s, "hidden_size = {}", c.hidden_size);
    let _ = writeln!(s, "num_layers = {}", c.num_layers);
    let _ = writeln!(s, "heads = {}", c.heads);
    let _ = writeln!(s, "ff_multiplier = {}", c.ff_multiplier);
    let _ = writeln!(s, "dropout = {:?}", c.dropout);
    let _ = writeln!(s, "seed = {}", c.seed);
    let _ = writeln!(s, "position_encoding = {}", c.position_encoding);
    let _ = writeln!(s, "[meta]");
    let _ = writeln!(s, "seq_len = {}", model.seq_len);
    let _ = writeln!(s, "dtw_mode = {}", model.dtw_mode.name());
    let _ = writeln!(s, "epochs_run = {}", model.meta.epochs_run);
    let _ = writeln!(s, "best_val_loss = {:?}", model.meta.best_val_loss);
    let _ = writeln!(s, "wall_time_s = {:?}", model.meta.wall_time_s);
    let _ = writeln!(s, "[scaler]");
    s.push_str(&model.scaler.to_text());
    let _ = writeln!(s, "[params]");
    for (name, m) in model.params.iter() {
        let _ = writeln!(s, "param {name} {} {}", m.rows(), m.cols());
        let vals: Vec<String> = m.as_slice().iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}", vals.join(" "));
    }
    let _ = writeln!(s, "[end]");
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn sections(text: &str) -> Result<BTreeMap<&str, Vec<&str>>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err("empty checkpoint"))?;
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| err("not a checkpoint file"))?;
    if version != CHECKPOINT_VERSION {
        return Err(err(format!(
            "checkpoint version {version} is not supported by this build (version {CHECKPOINT_VERSION})"
        )));
    }
    let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut current: Option<&str> = None;
    let mut ended = false;
    for line in lines {
        let t = line.trim();
        if ended {
            if !t.is_empty() {
                return Err(err("content after [end]"));
            }
            continue;
        }
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            if name == "end" {
                ended = true;
                continue;
            }
            if out.insert(name, Vec::new()).is_some() {
                return Err(err(format!("duplicate section [{name}]")));
            }
            current = Some(name);
        } else if let Some(sec) = current {
            out.get_mut(sec).expect("inserted").push(line);
        } else if !t.is_empty() {
            return Err(err("content before the first section"));
        }
    }
    if !ended {
        return Err(err("truncated checkpoint (missing [end])"));
    }
    Ok(out)
}

fn key_values<'a>(lines: &[&'a str]) -> Result<BTreeMap<&'a str, &'a str>> {
    lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("bad line '{l}'")))
        })
        .collect()
}

fn field<T: std::str::FromStr>(kv: &BTreeMap<&str, &str>, key: &str) -> Result<T> {
    kv.get(key)
        .ok_or_else(|| err(format!("missing '{key}'")))?
        .parse()
        .map_err(|_| err(format!("bad value for '{key}'")))
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<SequenceModel> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| err(format!("unreadable checkpoint: {e}")))?;
    let secs = sections(&text)?;
    let section = |name: &str| secs.get(name).ok_or_else(|| err(format!("missing [{name}]")));

    let kv = key_values(section("config")?)?;
    let arch_name: String = field(&kv, "arch")?;
    let config = ModelConfig {
        arch: Arch::parse(&arch_name).ok_or_else(|| err(format!("unknown arch '{arch_name}'")))?,
        input_dim: field(&kv, "input_dim")?,
        hidden_size: field(&kv, "hidden_size")?,
        num_layers: field(&kv, "num_layers")?,
        heads: field(&kv, "heads")?,
        ff_multiplier: field(&kv, "ff_multiplier")?,
        dropout: field(&kv, "dropout")?,
        seed: field(&kv, "seed")?,
        position_encoding: field(&kv, "position_encoding")?,
    };
    config.validate().map_err(|e| err(e.to_string()))?;

    let kv = key_values(section("meta")?)?;
    let mode: String = field(&kv, "dtw_mode")?;
    let meta = TrainingMeta {
        epochs_run: field(&kv, "epochs_run")?,
        best_val_loss: field(&kv, "best_val_loss")?,
        wall_time_s: field(&kv, "wall_time_s")?,
    };
    let seq_len: usize = field(&kv, "seq_len")?;
    let dtw_mode = DtwMode::parse(&mode).ok_or_else(|| err(format!("unknown dtw_mode '{mode}'")))?;

    let scaler = ScalerState::from_text(&section("scaler")?.join("\n"))?;

    let lines: Vec<&str> = section("params")?
        .iter()
        .copied()
        .filter(|l| !l.trim().is_empty())
        .collect();
    if !lines.len().is_multiple_of(2) {
        return Err(err("parameter block is incomplete"));
    }
    let mut entries = Vec::with_capacity(lines.len() / 2);
    for pair in lines.chunks(2) {
        let head: Vec<&str> = pair[0].split_whitespace().collect();
        let ["param", name, rows, cols] = head[..] else {
            return Err(err(format!("bad parameter header '{}'", pair[0])));
        };
        let (rows, cols): (usize, usize) = (
            rows.parse().map_err(|_| err("bad rows"))?,
            cols.parse().map_err(|_| err("bad cols"))?,
        );
        let values = pair[1]
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| err(format!("bad value in {name}"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != rows * cols {
            return Err(err(format!(
                "parameter {name}: {} values for shape {rows}x{cols}",
                values.len()
            )));
        }
        entries.push((name.to_string(), Matrix::from_vec(rows, cols, values)));
    }
    let params = Params::new(entries).map_err(|e| err(e.to_string()))?;
    let expected = super::init_params(&config).map_err(|e| err(e.to_string()))?;
    let layout_ok = expected.len() == params.len()
        && expected
            .iter()
            .zip(params.iter())
            .all(|((n1, m1), (n2, m2))| n1 == n2 && m1.shape() == m2.shape());
    if !layout_ok {
        return Err(err("parameter layout does not match the configuration"));
    }
    Ok(SequenceModel {
        config,
        params,
        scaler,
        meta,
        seq_len,
        dtw_mode,
    })
}

/// Writes to a temporary sibling and renames, so a crash never leaves a
/// half-written checkpoint under `path`.
pub fn save_checkpoint(model: &SequenceModel, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
        write_checkpoint(&mut f, model)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SequenceModel> {
    let f = fs::File::open(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    read_checkpoint(std::io::BufReader::new(f))
}
