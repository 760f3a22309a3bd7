use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::graph::{elements, AtomicStructure};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Splits a comment line into `key=value` pairs; values may be double
/// quoted, and a bare key stands for `key=T`.
fn tokenize(comment: &str, line: usize) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut chars = comment.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c == '=' || c.is_whitespace() {
                break;
            }
            key.push(c);
            chars.next();
        }
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek() != Some(&'=') {
            out.push((key, "T".to_string()));
            continue;
        }
        chars.next();
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let mut value = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            let mut closed = false;
            for c in chars.by_ref() {
                if c == '"' {
                    closed = true;
                    break;
                }
                value.push(c);
            }
            if !closed {
                return Err(parse_err(line, format!("unterminated quote in value of {key}")));
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                value.push(c);
                chars.next();
            }
        }
        if key.is_empty() {
            return Err(parse_err(line, "empty key in comment line"));
        }
        out.push((key, value));
    }
    Ok(out)
}

fn floats(v: &str, n: usize, what: &str, line: usize) -> Result<Vec<f64>> {
    let vals = v
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| parse_err(line, format!("{what}: {t:?} is not a number"))))
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != n {
        return Err(parse_err(line, format!("{what} needs {n} numbers, found {}", vals.len())));
    }
    Ok(vals)
}

fn parse_bool(t: &str, line: usize) -> Result<bool> {
    match t {
        "T" | "t" | "True" | "true" | "1" => Ok(true),
        "F" | "f" | "False" | "false" | "0" => Ok(false),
        other => Err(parse_err(line, format!("{other:?} is not a boolean"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Column {
    Species,
    Positions,
    Forces,
    Skip,
}

fn parse_properties(v: &str, line: usize) -> Result<Vec<(Column, usize)>> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() % 3 != 0 {
        return Err(parse_err(line, format!("Properties {v:?} is not name:type:count triples")));
    }
    let mut cols = Vec::new();
    for t in parts.chunks(3) {
        let count: usize = t[2]
            .parse()
            .map_err(|_| parse_err(line, format!("Properties count {:?} is not an integer", t[2])))?;
        let kind = match (t[0].to_ascii_lowercase().as_str(), t[1]) {
            ("species", "S") | ("z", "I") | ("numbers", "I") => Column::Species,
            ("pos", "R") | ("positions", "R") => Column::Positions,
            ("forces", "R") | ("force", "R") | ("forces_ref", "R") => Column::Forces,
            _ => Column::Skip,
        };
        if matches!(kind, Column::Positions | Column::Forces) && count != 3 {
            return Err(parse_err(line, format!("{} must have 3 columns", t[0])));
        }
        cols.push((kind, count));
    }
    if !cols.iter().any(|c| c.0 == Column::Species) || !cols.iter().any(|c| c.0 == Column::Positions) {
        return Err(parse_err(line, "Properties must declare species and positions"));
    }
    Ok(cols)
}

fn parse_species(t: &str, line: usize) -> Result<u32> {
    if let Ok(z) = t.parse::<u32>() {
        elements::symbol(z).map_err(|_| parse_err(line, format!("atomic number {z} unknown")))?;
        return Ok(z);
    }
    elements::atomic_number(t).map_err(|_| parse_err(line, format!("unknown element {t:?}")))
}

/// Reads every frame of an extended-XYZ text.
pub fn parse_extxyz_str(text: &str) -> Result<Vec<AtomicStructure>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = Vec::new();
    let mut k = 0;
    while k < lines.len() {
        if lines[k].trim().is_empty() {
            k += 1;
            continue;
        }
        let frame_index = frames.len();
        let count_line = k + 1;
        let n: usize = lines[k]
            .trim()
            .parse()
            .map_err(|_| parse_err(count_line, format!("expected an atom count, found {:?}", lines[k].trim())))?;
        if k + 1 >= lines.len() {
            return Err(parse_err(count_line, format!("frame {frame_index} is truncated: missing comment line")));
        }
        let comment_line = k + 2;
        let pairs = tokenize(lines[k + 1], comment_line)?;
        let available = lines.len() - (k + 2);
        if available < n {
            return Err(parse_err(
                lines.len(),
                format!("frame {frame_index} is truncated: expected {n} atoms, found {available}"),
            ));
        }
        frames.push(parse_frame(&pairs, &lines[k + 2..k + 2 + n], comment_line)?);
        k += 2 + n;
    }
    Ok(frames)
}

fn parse_frame(pairs: &[(String, String)], atom_lines: &[&str], comment_line: usize) -> Result<AtomicStructure> {
    let mut columns = vec![(Column::Species, 1), (Column::Positions, 3)];
    let mut cell = None;
    let mut pbc = None;
    let mut energy = None;
    let mut stress = None;
    let mut charge = None;
    let mut info = BTreeMap::new();
    for (key, value) in pairs {
        match key.to_ascii_lowercase().as_str() {
            "lattice" => {
                let v = floats(value, 9, "Lattice", comment_line)?;
                cell = Some([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]);
            }
            "properties" => columns = parse_properties(value, comment_line)?,
            "pbc" => {
                let flags = value
                    .split_whitespace()
                    .map(|t| parse_bool(t, comment_line))
                    .collect::<Result<Vec<_>>>()?;
                pbc = Some(match flags.as_slice() {
                    [a] => [*a; 3],
                    [a, b, c] => [*a, *b, *c],
                    _ => return Err(parse_err(comment_line, "pbc needs 1 or 3 flags")),
                });
            }
            "energy" => {
                energy = Some(floats(value, 1, "energy", comment_line)?[0]);
            }
            "stress" => {
                let n = value.split_whitespace().count();
                let v = floats(value, if n == 9 { 9 } else { 6 }, "stress", comment_line)?;
                stress = Some(if n == 9 { [v[0], v[4], v[8], v[5], v[2], v[1]] } else { std::array::from_fn(|i| v[i]) });
            }
            "charge" | "total_charge" => {
                let c: f64 = floats(value, 1, "charge", comment_line)?[0];
                if c.fract() != 0.0 {
                    return Err(parse_err(comment_line, format!("charge {c} is not an integer")));
                }
                charge = Some(c as i32);
            }
            _ => {
                info.insert(key.clone(), value.clone());
            }
        }
    }
    let width: usize = columns.iter().map(|c| c.1).sum();
    let mut species = Vec::with_capacity(atom_lines.len());
    let mut positions = Vec::with_capacity(atom_lines.len());
    let has_forces = columns.iter().any(|c| c.0 == Column::Forces);
    let mut forces = Vec::new();
    for (a, l) in atom_lines.iter().enumerate() {
        let line = comment_line + 1 + a;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != width {
            return Err(parse_err(line, format!("expected {width} columns, found {}", toks.len())));
        }
        let mut off = 0;
        for &(kind, count) in &columns {
            let t = &toks[off..off + count];
            match kind {
                Column::Species => species.push(parse_species(t[0], line)?),
                Column::Positions | Column::Forces => {
                    let v = floats(&t.join(" "), 3, "atom row", line)?;
                    let v = [v[0], v[1], v[2]];
                    if kind == Column::Positions {
                        positions.push(v);
                    } else {
                        forces.push(v);
                    }
                }
                Column::Skip => {}
            }
            off += count;
        }
    }
    let mut s = AtomicStructure::new(positions, species).map_err(|e| parse_err(comment_line, e.to_string()))?;
    if let Some(c) = cell {
        s = s
            .with_cell(c, pbc.unwrap_or([true; 3]))
            .map_err(|e| parse_err(comment_line, e.to_string()))?;
    } else if pbc.is_some_and(|p| p.iter().any(|&b| b)) {
        return Err(parse_err(comment_line, "pbc set without a Lattice"));
    }
    s.energy = energy;
    s.forces = has_forces.then_some(forces);
    s.stress = stress;
    s.total_charge = charge;
    s.info = info;
    Ok(s)
}

pub fn parse_extxyz(path: impl AsRef<Path>) -> Result<Vec<AtomicStructure>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_extxyz_str(&text)
}

fn quote(v: &str) -> String {
    if v.is_empty() || v.chars().any(|c| c.is_whitespace() || c == '=' || c == '"') {
        format!("\"{v}\"")
    } else {
        v.to_string()
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "T"
    } else {
        "F"
    }
}

/// Canonical text: floats in shortest round-trip form, fixed key order.
pub fn format_extxyz(frames: &[AtomicStructure]) -> Result<String> {
    let mut out = String::new();
    for s in frames {
        s.validate()?;
        let _ = writeln!(out, "{}", s.len());
        let mut comment = Vec::new();
        if let Some(c) = &s.cell {
            let v: Vec<String> = c.iter().flatten().map(|x| format!("{x:?}")).collect();
            comment.push(format!("Lattice=\"{}\"", v.join(" ")));
        }
        let props = if s.forces.is_some() { "species:S:1:pos:R:3:forces:R:3" } else { "species:S:1:pos:R:3" };
        comment.push(format!("Properties={props}"));
        if let Some(e) = s.energy {
            comment.push(format!("energy={e:?}"));
        }
        if let Some(st) = &s.stress {
            let v: Vec<String> = st.iter().map(|x| format!("{x:?}")).collect();
            comment.push(format!("stress=\"{}\"", v.join(" ")));
        }
        if let Some(q) = s.total_charge {
            comment.push(format!("charge={q}"));
        }
        comment.push(format!("pbc=\"{} {} {}\"", flag(s.pbc[0]), flag(s.pbc[1]), flag(s.pbc[2])));
        for (k, v) in &s.info {
            comment.push(format!("{k}={}", quote(v)));
        }
        let _ = writeln!(out, "{}", comment.join(" "));
        for (i, (z, p)) in s.species.iter().zip(&s.positions).enumerate() {
            let _ = write!(out, "{} {:?} {:?} {:?}", elements::symbol(*z)?, p[0], p[1], p[2]);
            if let Some(f) = &s.forces {
                let _ = write!(out, " {:?} {:?} {:?}", f[i][0], f[i][1], f[i][2]);
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_extxyz(path: impl AsRef<Path>, frames: &[AtomicStructure]) -> Result<()> {
    write_atomic(path.as_ref(), format_extxyz(frames)?.as_bytes())
}
