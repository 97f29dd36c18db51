//! Plain-text transmit matrix files.
//!
//! ```text
//! M K P_t
//! re,im        <- M lines for column 1
//!
//! re,im        <- M lines for column 2
//! ...
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Floats are written in
//! shortest round-trip form, so a write/read cycle is lossless.

use std::io::{BufRead, Write};

use crate::numerics::{c64, CMatrix};
use crate::{Error, Result};

pub fn write_matrix<W: Write>(out: &mut W, w: &CMatrix, p_t: f64) -> Result<()> {
    let (m, k) = w.shape();
    writeln!(out, "{m} {k} {p_t}")?;
    for j in 0..k {
        if j > 0 {
            writeln!(out)?;
        }
        for i in 0..m {
            let z = w[(i, j)];
            writeln!(out, "{},{}", z.re, z.im)?;
        }
    }
    Ok(())
}

pub fn read_matrix<R: BufRead>(input: R) -> Result<(CMatrix, f64)> {
    let mut lines = Vec::new();
    for line in input.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        lines.push(t.to_string());
    }
    let header = lines.first().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(Error::Parse(format!("header must be `M K P_t`, got `{header}`")));
    }
    let m: usize = fields[0].parse().map_err(|_| Error::Parse(format!("bad M `{}`", fields[0])))?;
    let k: usize = fields[1].parse().map_err(|_| Error::Parse(format!("bad K `{}`", fields[1])))?;
    let p_t: f64 =
        fields[2].parse().map_err(|_| Error::Parse(format!("bad P_t `{}`", fields[2])))?;
    let body = &lines[1..];
    if body.len() != m * k {
        return Err(Error::Parse(format!(
            "expected {} entries for a {m}x{k} matrix, found {}",
            m * k,
            body.len()
        )));
    }
    let mut w = CMatrix::zeros(m, k);
    for (n, line) in body.iter().enumerate() {
        let (re, im) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("entry `{line}` is not `re,im`")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{s}`")))
        };
        w[(n % m, n / m)] = c64::new(parse(re)?, parse(im)?);
    }
    Ok((w, p_t))
}
