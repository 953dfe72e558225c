//! Plain-text persistence for scene bins and pair datasets.
//!
//! A scene file starts with `# flock-scene v1`, then `key = value` header
//! lines, then for each member an `agent <id>` line followed by its block in
//! the trajectory CSV layout. Pair datasets are two CSV files, `pairs.csv`
//! (one row per sample) and `pair_blocks.csv` (one row per block point).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{PairDataset, RawPairSample, SceneBin};
use crate::error::{Error, Result};
use crate::ingest::parse_timestamp_ms;
use crate::ingest::write_points_to_string;
use crate::model::{AgentId, TrajectoryPoint};

pub const SCENE_FORMAT_VERSION: u32 = 1;
const SCENE_MAGIC: &str = "# flock-scene v";

fn bad(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::invalid_input(format!("{path}: {msg}"))
}

pub fn write_scene_bin<W: Write>(out: &mut W, bin: &SceneBin) -> std::io::Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "{SCENE_MAGIC}{SCENE_FORMAT_VERSION}");
    let _ = writeln!(s, "bin_index = {}", bin.bin_index);
    let _ = writeln!(s, "bin_start_ms = {}", bin.bin_start_ms);
    let _ = writeln!(s, "bin_width_ms = {}", bin.bin_width_ms);
    let _ = writeln!(s, "seq_len = {}", bin.sequence_length().unwrap_or(0));
    let members: Vec<String> = bin.member_ids.iter().map(ToString::to_string).collect();
    let _ = writeln!(s, "members = {}", members.join(" "));
    for id in &bin.member_ids {
        let _ = writeln!(s, "agent {id}");
        if let Some(block) = bin.blocks.get(id) {
            s.push_str(&write_points_to_string(block));
        }
    }
    out.write_all(s.as_bytes())
}

fn parse_point(line: &str) -> Option<TrajectoryPoint> {
    let f: Vec<&str> = line.split(',').map(str::trim).collect();
    if f.len() != 7 {
        return None;
    }
    let num = |i: usize| f[i].parse::<f64>().ok();
    TrajectoryPoint::new(
        parse_timestamp_ms(f[0])?,
        f[1].parse().ok()?,
        num(2)?,
        num(3)?,
        num(4)?,
        num(5)?,
        num(6)?,
    )
    .ok()
}

pub fn read_scene_bin<R: BufRead>(reader: R, name: &str) -> Result<SceneBin> {
    let mut lines = reader.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| bad(name, "empty scene file"))?;
    let first = first?;
    let version: u32 = first
        .trim()
        .strip_prefix(SCENE_MAGIC)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(name, "missing scene header"))?;
    if version != SCENE_FORMAT_VERSION {
        return Err(bad(
            name,
            format!("scene format v{version}, expected v{SCENE_FORMAT_VERSION}"),
        ));
    }
    let mut header = BTreeMap::new();
    let mut blocks: BTreeMap<AgentId, Vec<TrajectoryPoint>> = BTreeMap::new();
    let mut current: Option<AgentId> = None;
    for (idx, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if let Some(id) = t.strip_prefix("agent ") {
            let id: AgentId = id
                .trim()
                .parse()
                .map_err(|_| bad(name, format!("line {}: bad agent id", idx + 1)))?;
            blocks.entry(id).or_default();
            current = Some(id);
        } else if let Some(id) = current {
            let p = parse_point(t)
                .filter(|p| p.agent_id == id)
                .ok_or_else(|| bad(name, format!("line {}: bad block row", idx + 1)))?;
            blocks.get_mut(&id).expect("inserted").push(p);
        } else if let Some((k, v)) = t.split_once('=') {
            header.insert(k.trim().to_string(), v.trim().to_string());
        } else {
            return Err(bad(name, format!("line {}: unexpected '{t}'", idx + 1)));
        }
    }
    let get = |k: &str| -> Result<&String> {
        header.get(k).ok_or_else(|| bad(name, format!("missing '{k}'")))
    };
    let int = |k: &str| -> Result<i64> {
        get(k)?
            .parse()
            .map_err(|_| bad(name, format!("'{k}' is not an integer")))
    };
    let member_ids = get("members")?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad(name, "bad member id")))
        .collect::<Result<Vec<AgentId>>>()?;
    let seq_len = int("seq_len")? as usize;
    for id in &member_ids {
        let n = blocks.get(id).map_or(0, Vec::len);
        if n != seq_len {
            return Err(bad(name, format!("agent {id} has {n} points, seq_len is {seq_len}")));
        }
    }
    if blocks.len() != member_ids.len() {
        return Err(bad(name, "blocks do not match the member list"));
    }
    Ok(SceneBin {
        bin_index: int("bin_index")? as usize,
        bin_start_ms: int("bin_start_ms")?,
        bin_width_ms: int("bin_width_ms")?,
        member_ids,
        blocks,
    })
}

fn scene_file(dir: &Path, bin_index: usize) -> PathBuf {
    dir.join(format!("bin_{bin_index:05}.scene"))
}

/// Writes one `bin_NNNNN.scene` file per bin; returns the paths written.
pub fn write_scene_dir(dir: &Path, bins: &[SceneBin]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    bins.iter()
        .map(|b| {
            let path = scene_file(dir, b.bin_index);
            let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
            write_scene_bin(&mut f, b)?;
            f.flush()?;
            Ok(path)
        })
        .collect()
}

/// Reads every `*.scene` file of a directory, ordered by file name.
pub fn read_scene_dir(dir: &Path) -> Result<Vec<SceneBin>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "scene"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let f = BufReader::new(fs::File::open(p)?);
            read_scene_bin(f, &p.display().to_string())
        })
        .collect()
}

const PAIRS_HEADER: &str = "id,agent_a,agent_b,label,split,synthetic";
const BLOCKS_HEADER: &str = "sample_id,side,timestamp_ms,agent_id,x_mm,y_mm,velocity_mm_s,motion_angle_rad,face_angle_rad";
const META_FILE: &str = "pairs_meta.txt";

/// Writes `pairs.csv`, `pair_blocks.csv` and `pairs_meta.txt` into `dir`.
pub fn write_pair_dataset(dir: &Path, data: &PairDataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut pairs = String::new();
    let mut blocks = String::new();
    let _ = writeln!(pairs, "{PAIRS_HEADER}");
    let _ = writeln!(blocks, "{BLOCKS_HEADER}");
    let splits = data
        .train
        .iter()
        .map(|s| ("train", s))
        .chain(data.test.iter().map(|s| ("test", s)));
    for (split, s) in splits {
        let _ = writeln!(
            pairs,
            "{},{},{},{},{split},{}",
            s.id,
            s.agent_a,
            s.agent_b,
            s.label,
            u8::from(s.synthetic)
        );
        for (side, block) in [("a", &s.block_a), ("b", &s.block_b)] {
            for p in block {
                let _ = writeln!(
                    blocks,
                    "{},{side},{},{},{},{},{},{},{}",
                    s.id,
                    p.timestamp_ms,
                    p.agent_id,
                    p.x_mm,
                    p.y_mm,
                    p.velocity_mm_s,
                    p.motion_angle_rad,
                    p.face_angle_rad
                );
            }
        }
    }
    let excluded: Vec<String> = data.excluded_agents.iter().map(ToString::to_string).collect();
    let meta = format!(
        "sequence_length = {}\nclass_weights = {:?} {:?}\nexcluded_agents = {}\n",
        data.sequence_length,
        data.class_weights.0,
        data.class_weights.1,
        excluded.join(" ")
    );
    fs::write(dir.join("pairs.csv"), pairs)?;
    fs::write(dir.join("pair_blocks.csv"), blocks)?;
    fs::write(dir.join(META_FILE), meta)?;
    Ok(())
}

fn parse_block_row(row: &str) -> Option<(usize, bool, TrajectoryPoint)> {
    let f: Vec<&str> = row.split(',').collect();
    if f.len() != 9 {
        return None;
    }
    let num = |i: usize| f[i].parse::<f64>().ok();
    let side_a = match f[1] {
        "a" => true,
        "b" => false,
        _ => return None,
    };
    let p = TrajectoryPoint::new(
        f[2].parse().ok()?,
        f[3].parse().ok()?,
        num(4)?,
        num(5)?,
        num(6)?,
        num(7)?,
        num(8)?,
    )
    .ok()?;
    Some((f[0].parse().ok()?, side_a, p))
}

pub fn read_pair_dataset(dir: &Path) -> Result<PairDataset> {
    let name = dir.display().to_string();
    let meta = fs::read_to_string(dir.join(META_FILE))?;
    let mut out = PairDataset::default();
    for line in meta.lines() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        let v = v.trim();
        match k.trim() {
            "sequence_length" => {
                out.sequence_length = v.parse().map_err(|_| bad(&name, "bad sequence_length"))?
            }
            "class_weights" => {
                let w: Vec<f64> = v
                    .split_whitespace()
                    .map(|x| x.parse().map_err(|_| bad(&name, "bad class weight")))
                    .collect::<Result<_>>()?;
                let [w0, w1] = w[..] else {
                    return Err(bad(&name, "class_weights needs two values"));
                };
                out.class_weights = (w0, w1);
            }
            "excluded_agents" => {
                out.excluded_agents = v
                    .split_whitespace()
                    .map(|x| x.parse().map_err(|_| bad(&name, "bad agent id")))
                    .collect::<Result<_>>()?
            }
            _ => {}
        }
    }

    let mut blocks: BTreeMap<usize, (Vec<TrajectoryPoint>, Vec<TrajectoryPoint>)> = BTreeMap::new();
    let text = fs::read_to_string(dir.join("pair_blocks.csv"))?;
    for (i, row) in text.lines().enumerate().skip(1) {
        let (id, side_a, p) =
            parse_block_row(row).ok_or_else(|| bad(&name, format!("pair_blocks.csv line {}", i + 1)))?;
        let e = blocks.entry(id).or_default();
        if side_a { &mut e.0 } else { &mut e.1 }.push(p);
    }
    let text = fs::read_to_string(dir.join("pairs.csv"))?;
    for (i, row) in text.lines().enumerate().skip(1) {
        let err = || bad(&name, format!("pairs.csv line {}", i + 1));
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 6 {
            return Err(err());
        }
        let id: usize = f[0].parse().map_err(|_| err())?;
        let (block_a, block_b) = blocks.remove(&id).ok_or_else(err)?;
        let s = RawPairSample {
            id,
            agent_a: f[1].parse().map_err(|_| err())?,
            agent_b: f[2].parse().map_err(|_| err())?,
            block_a,
            block_b,
            label: f[3].parse().map_err(|_| err())?,
            synthetic: f[5] == "1",
        };
        if s.block_a.len() != out.sequence_length || s.block_b.len() != out.sequence_length {
            return Err(bad(&name, format!("sample {id} blocks do not have length {}", out.sequence_length)));
        }
        match f[4] {
            "train" => out.train.push(s),
            "test" => out.test.push(s),
            _ => return Err(err()),
        }
    }
    Ok(out)
}
