//! Minimal FASTA reader.

use std::io::BufRead;
use std::path::Path;

use crate::SwError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    pub name: String,
    pub residues: Vec<u8>,
}

impl Sequence {
    pub fn new(name: impl Into<String>, residues: impl Into<Vec<u8>>) -> Self {
        Sequence {
            name: name.into(),
            residues: residues.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }
}

pub fn parse_fasta(path: &Path) -> Result<Vec<Sequence>, SwError> {
    let file = std::fs::File::open(path).map_err(|e| SwError::io(path, e))?;
    let seqs = read_fasta(std::io::BufReader::new(file)).map_err(|e| match e {
        SwError::Io { source, .. } => SwError::io(path, source),
        SwError::Fasta { line, msg, .. } => SwError::Fasta {
            path: path.display().to_string(),
            line,
            msg,
        },
        other => other,
    })?;
    if seqs.is_empty() {
        log::warn!("{}: no sequences", path.display());
    }
    Ok(seqs)
}

/// Records in input order. Names run from `>` to the first whitespace;
/// residue lines are concatenated with whitespace removed.
pub fn read_fasta<R: BufRead>(reader: R) -> Result<Vec<Sequence>, SwError> {
    let err = |line: usize, msg: &str| SwError::Fasta {
        path: "<input>".into(),
        line,
        msg: msg.into(),
    };
    let mut out: Vec<Sequence> = Vec::new();
    let mut header_line = 0;
    let check_last = |out: &Vec<Sequence>, header_line| match out.last() {
        Some(s) if s.residues.is_empty() => Err(err(header_line, "record has no residues")),
        _ => Ok(()),
    };
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| SwError::io(Path::new("<input>"), e))?;
        let line = line.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            check_last(&out, header_line)?;
            let name = header.split_whitespace().next().unwrap_or_default();
            if name.is_empty() {
                return Err(err(n, "header without a name"));
            }
            out.push(Sequence::new(name, Vec::new()));
            header_line = n;
        } else if line.starts_with(';') {
            continue;
        } else {
            let seq = out
                .last_mut()
                .ok_or_else(|| err(n, "sequence data before the first header"))?;
            seq.residues
                .extend(line.bytes().filter(|b| !b.is_ascii_whitespace()));
        }
    }
    check_last(&out, header_line)?;
    Ok(out)
}
