//! Binary and CSV serialization of coding functions.
//!
//! Binary layout (little endian): magic `STCF`, u32 version, u64 n, f64 delta,
//! f64 gamma, u64 seed, then n + 1 f64 values.
//! CSV layout: `n,delta,gamma,seed` header and row, a `value` header, one value per line.

use std::io::{BufRead, Read, Write};

use super::CodingFunction;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"STCF";
const VERSION: u32 = 1;

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_binary<W: Write>(c: &CodingFunction, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(c.n() as u64).to_le_bytes())?;
    w.write_all(&c.delta.to_le_bytes())?;
    w.write_all(&c.gamma.to_le_bytes())?;
    w.write_all(&c.seed.to_le_bytes())?;
    for v in &c.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read8<R: Read>(r: &mut R) -> Result<[u8; 8]> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_binary<R: Read>(mut r: R) -> Result<CodingFunction> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(fmt_err("bad magic"));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    if u32::from_le_bytes(ver) != VERSION {
        return Err(fmt_err(format!(
            "unsupported version {}",
            u32::from_le_bytes(ver)
        )));
    }
    let n = u64::from_le_bytes(read8(&mut r)?) as usize;
    let delta = f64::from_le_bytes(read8(&mut r)?);
    let gamma = f64::from_le_bytes(read8(&mut r)?);
    let seed = u64::from_le_bytes(read8(&mut r)?);
    let mut values = Vec::with_capacity(n.saturating_add(1).min(1 << 26));
    for _ in 0..=n {
        values.push(f64::from_le_bytes(read8(&mut r)?));
    }
    Ok(CodingFunction::new(delta, values, gamma, seed))
}

pub fn write_csv<W: Write>(c: &CodingFunction, mut w: W) -> Result<()> {
    writeln!(w, "n,delta,gamma,seed")?;
    writeln!(w, "{},{:?},{:?},{}", c.n(), c.delta, c.gamma, c.seed)?;
    writeln!(w, "value")?;
    for v in &c.values {
        writeln!(w, "{v:?}")?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| fmt_err(format!("cannot parse {what} from `{s}`")))
}

pub fn read_csv<R: BufRead>(r: R) -> Result<CodingFunction> {
    let mut lines = r.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| fmt_err(format!("missing {what}")))?
            .map_err(Error::from)
    };
    if next("header")?.trim() != "n,delta,gamma,seed" {
        return Err(fmt_err("bad header"));
    }
    let row = next("header row")?;
    let f: Vec<&str> = row.split(',').collect();
    if f.len() != 4 {
        return Err(fmt_err("header row needs 4 fields"));
    }
    let n: usize = parse(f[0], "n")?;
    let delta: f64 = parse(f[1], "delta")?;
    let gamma: f64 = parse(f[2], "gamma")?;
    let seed: u64 = parse(f[3], "seed")?;
    if next("value header")?.trim() != "value" {
        return Err(fmt_err("bad value header"));
    }
    let mut values = Vec::with_capacity(n.saturating_add(1).min(1 << 26));
    for i in 0..=n {
        values.push(parse(&next(&format!("value {i}"))?, "value")?);
    }
    Ok(CodingFunction::new(delta, values, gamma, seed))
}
