//! Plain-text container for paired input/target sequence sets.
//!
//! ```text
//! channels_in,channels_out,T,n_seq
//! 1,2,5000,2000
//! <channels_in rows of T comma-separated values>   \  repeated
//! <channels_out rows of T comma-separated values>  /  n_seq times
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::SeqTensor;

pub const HEADER: &str = "channels_in,channels_out,T,n_seq";

#[derive(Debug, Clone, PartialEq)]
pub struct SequencePair {
    pub input: SeqTensor,
    pub target: SeqTensor,
}

pub fn to_text(pairs: &[SequencePair]) -> Result<String> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::data("refusing to write an empty sequence set"))?;
    let (cin, cout, len) = (first.input.channels(), first.target.channels(), first.input.len());
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}\n{cin},{cout},{len},{}", pairs.len());
    for p in pairs {
        if p.input.channels() != cin
            || p.target.channels() != cout
            || p.input.len() != len
            || p.target.len() != len
        {
            return Err(Error::data("all sequences in a file must share one shape"));
        }
        for row in p.input.rows().chain(p.target.rows()) {
            let mut sep = "";
            for v in row {
                let _ = write!(out, "{sep}{v}");
                sep = ",";
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write(path: impl AsRef<Path>, pairs: &[SequencePair]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_text(pairs)?).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<Vec<SequencePair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}

pub fn parse(text: &str, path: &Path) -> Result<Vec<SequencePair>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == HEADER => {}
        Some((i, _)) => return Err(err(i + 1, format!("expected header `{HEADER}`"))),
        None => return Err(Error::data(format!("{} is empty", path.display()))),
    }
    let (i, dims) = lines.next().ok_or_else(|| err(2, "missing dimension line".into()))?;
    let dims: Vec<usize> = dims
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(i + 1, e.to_string()))?;
    let [cin, cout, len, n_seq] = dims[..] else {
        return Err(err(i + 1, "expected four dimensions".into()));
    };
    if cin == 0 || cout == 0 || len == 0 {
        return Err(err(i + 1, "dimensions must be positive".into()));
    }

    let mut read_block = |rows: usize| -> Result<SeqTensor> {
        let mut data = Vec::with_capacity(rows * len);
        for _ in 0..rows {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::data(format!("{} ends early", path.display())))?;
            let before = data.len();
            for field in line.split(',') {
                data.push(field.trim().parse::<f64>().map_err(|e| err(i + 1, e.to_string()))?);
            }
            if data.len() - before != len {
                return Err(err(i + 1, format!("expected {len} values, got {}", data.len() - before)));
            }
        }
        SeqTensor::from_vec(rows, len, data)
    };

    let mut pairs = Vec::with_capacity(n_seq);
    for _ in 0..n_seq {
        let input = read_block(cin)?;
        let target = read_block(cout)?;
        pairs.push(SequencePair { input, target });
    }
    if let Some((i, _)) = lines.next() {
        return Err(err(i + 1, "trailing rows after the declared sequences".into()));
    }
    Ok(pairs)
}
