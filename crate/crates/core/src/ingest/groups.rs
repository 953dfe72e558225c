use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{AgentId, GroupAnnotation};

/// Parses a space-separated group file. Each row is
/// `PEDESTRIAN-ID GROUP-SIZE PARTNER-ID... N-INTERACTING INTERACTING-ID...`
/// with `GROUP-SIZE - 1` partners.
pub fn parse_group_file<R: BufRead>(reader: R) -> Result<Vec<GroupAnnotation>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(parse_row(trimmed, line_no)?);
    }
    Ok(out)
}

fn parse_row(row: &str, line: usize) -> Result<GroupAnnotation> {
    let malformed = |reason: String| Error::MalformedGroupRow { line, reason };
    let tokens = row
        .split_whitespace()
        .map(|t| {
            t.parse::<AgentId>()
                .map_err(|_| malformed(format!("'{t}' is not an integer")))
        })
        .collect::<Result<Vec<_>>>()?;
    if tokens.len() < 2 {
        return Err(malformed("missing GROUP-SIZE".into()));
    }
    let id = tokens[0];
    let size = usize::try_from(tokens[1])
        .ok()
        .filter(|&s| s >= 2)
        .ok_or_else(|| malformed(format!("group size {} is below 2", tokens[1])))?;
    let rest = &tokens[2..];
    let n_partners = size - 1;
    // partners plus the interacting count
    if rest.len() < n_partners + 1 {
        return Err(malformed(format!(
            "group size {size} needs {n_partners} partners and an interacting count, found {} fields",
            rest.len()
        )));
    }
    let partners = rest[..n_partners].to_vec();
    let count = usize::try_from(rest[n_partners])
        .map_err(|_| malformed(format!("negative interacting count {}", rest[n_partners])))?;
    let interacting = &rest[n_partners + 1..];
    if interacting.len() != count {
        return Err(malformed(format!(
            "{count} interacting partners announced, {} listed",
            interacting.len()
        )));
    }
    GroupAnnotation::new(id, size, partners, interacting.to_vec())
        .map_err(|e| malformed(e.to_string()))
}

pub fn write_group_file<W: Write>(out: &mut W, groups: &[GroupAnnotation]) -> std::io::Result<()> {
    for g in groups {
        let mut fields = vec![g.pedestrian_id.to_string(), g.group_size.to_string()];
        fields.extend(g.partner_ids.iter().map(ToString::to_string));
        fields.push(g.interacting_count().to_string());
        fields.extend(g.interacting_ids.iter().map(ToString::to_string));
        writeln!(out, "{}", fields.join(" "))?;
    }
    Ok(())
}
