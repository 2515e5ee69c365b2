//! Path CSV: `step, z1..zm, p_class_0..p_class_{c-1}, entropy`, one row per
//! recorded step. Code columns are only written for 2-D latent spaces.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::pgd::AttackPath;
use crate::csvfmt::{fmt_f64, join_f64, parse_f64, parse_usize, read_table};
use crate::error::{Error, Result};

pub fn write_path_csv(path: &AttackPath, mut out: impl Write) -> Result<()> {
    let io = |e| Error::io("<path csv>", e);
    let with_codes = path.codes().first().is_some_and(|z| z.len() == 2);
    let classes = path.soft_labels().first().map_or(0, Vec::len);
    let mut header = vec!["step".to_string()];
    if with_codes {
        header.extend(["z1".to_string(), "z2".to_string()]);
    }
    header.extend((0..classes).map(|k| format!("p_class_{k}")));
    header.push("entropy".into());
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    let t = &path.trajectory;
    for i in 0..t.codes.len() {
        let mut fields = vec![t.steps[i].to_string()];
        if with_codes {
            fields.push(join_f64(&t.codes[i]));
        }
        fields.push(join_f64(&t.soft_labels[i]));
        fields.push(fmt_f64(t.entropies[i]));
        writeln!(out, "{}", fields.join(",")).map_err(io)?;
    }
    Ok(())
}

pub fn export_path_csv(path: &AttackPath, dest: &Path) -> Result<()> {
    let file = File::create(dest).map_err(|e| Error::io(dest, e))?;
    let mut w = BufWriter::new(file);
    write_path_csv(path, &mut w)?;
    w.flush().map_err(|e| Error::io(dest, e))
}

/// Parsed contents of a path CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTable {
    pub steps: Vec<usize>,
    /// Empty when the file carries no code columns.
    pub codes: Vec<Vec<f64>>,
    pub soft_labels: Vec<Vec<f64>>,
    pub entropies: Vec<f64>,
}

pub fn read_path_csv(src: &Path) -> Result<PathTable> {
    let file = File::open(src).map_err(|e| Error::io(src, e))?;
    parse_path_csv(BufReader::new(file))
}

pub fn parse_path_csv(reader: impl std::io::BufRead) -> Result<PathTable> {
    let (header, rows) = read_table(reader)?;
    if header.first().map(String::as_str) != Some("step") || header.last().map(String::as_str) != Some("entropy") {
        return Err(Error::Parse("path CSV must start with `step` and end with `entropy`".into()));
    }
    let code_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with('z')).collect();
    let prob_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("p_class_")).collect();
    let mut table = PathTable {
        steps: Vec::new(),
        codes: Vec::new(),
        soft_labels: Vec::new(),
        entropies: Vec::new(),
    };
    for row in rows {
        table.steps.push(parse_usize(&row[0])?);
        if !code_cols.is_empty() {
            table.codes.push(code_cols.iter().map(|&i| parse_f64(&row[i])).collect::<Result<_>>()?);
        }
        table
            .soft_labels
            .push(prob_cols.iter().map(|&i| parse_f64(&row[i])).collect::<Result<_>>()?);
        table.entropies.push(parse_f64(&row[header.len() - 1])?);
    }
    Ok(table)
}
