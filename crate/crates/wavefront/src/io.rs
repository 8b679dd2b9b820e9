//! Density records: a little-endian binary layout and a CSV layout, both
//! carrying the grid header `(A, delta, n_points)`, the weights and the
//! mass at `+∞`.
//!
//! Binary: magic `WFD1`, `A: f64`, `delta: f64`, `n_points: u64`,
//! `n_points` weights as `f64`, then `mass_inf: f64`.
//!
//! CSV: a header block `A,delta,n_points` with one row, then `alpha,weight`
//! rows in grid order and a final `inf,<mass>` row.

use std::io::{self, BufRead, Read, Write};

use crate::density::{Density, LlrGrid};

const MAGIC: &[u8; 4] = b"WFD1";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed density record: {0}")]
    Malformed(String),
    #[error(transparent)]
    Density(#[from] wavefront_core::Error),
}

fn malformed(msg: impl Into<String>) -> FormatError {
    FormatError::Malformed(msg.into())
}

pub fn write_binary(mut w: impl Write, d: &Density) -> io::Result<()> {
    let g = d.grid();
    w.write_all(MAGIC)?;
    w.write_all(&g.a_max().to_le_bytes())?;
    w.write_all(&g.delta().to_le_bytes())?;
    w.write_all(&(g.points() as u64).to_le_bytes())?;
    for x in d.weights() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&d.mass_inf().to_le_bytes())
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_binary(mut r: impl Read) -> Result<Density, FormatError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(malformed("bad magic"));
    }
    let a = read_f64(&mut r)?;
    let delta = read_f64(&mut r)?;
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let n = u64::from_le_bytes(b) as usize;
    let grid = LlrGrid::new(a, delta)?;
    if n != grid.points() {
        return Err(malformed(format!(
            "{n} points for a grid of {}",
            grid.points()
        )));
    }
    let weights = (0..n)
        .map(|_| read_f64(&mut r))
        .collect::<io::Result<Vec<_>>>()?;
    let inf = read_f64(&mut r)?;
    Ok(Density::from_parts(grid, weights, inf)?)
}

pub fn write_csv(w: impl Write, d: &Density) -> Result<(), FormatError> {
    let g = d.grid();
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
    out.write_record(["A", "delta", "n_points"])?;
    out.write_record([fmt(g.a_max()), fmt(g.delta()), g.points().to_string()])?;
    out.write_record(["alpha", "weight"])?;
    for (k, x) in d.weights().iter().enumerate() {
        out.write_record([fmt(g.alpha(k)), fmt(*x)])?;
    }
    out.write_record(["inf".to_string(), fmt(d.mass_inf())])?;
    out.flush()?;
    Ok(())
}

/// Shortest representation that reads back to the same `f64`.
pub fn fmt(x: f64) -> String {
    format!("{x:?}")
}

pub fn read_csv(r: impl BufRead) -> Result<Density, FormatError> {
    let mut rows = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(r)
        .into_records();
    let mut next = || {
        rows.next()
            .transpose()?
            .ok_or_else(|| malformed("truncated"))
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| malformed(format!("not a number: {s}")))
    };
    next()?;
    let head = next()?;
    if head.len() != 3 {
        return Err(malformed("grid header needs A, delta, n_points"));
    }
    let grid = LlrGrid::new(num(&head[0])?, num(&head[1])?)?;
    let n: usize = head[2]
        .trim()
        .parse()
        .map_err(|_| malformed("n_points is not an integer"))?;
    if n != grid.points() {
        return Err(malformed(format!(
            "{n} points for a grid of {}",
            grid.points()
        )));
    }
    next()?;
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        let row = next()?;
        if row.len() != 2 {
            return Err(malformed("weight rows need alpha, weight"));
        }
        weights.push(num(&row[1])?);
    }
    let last = next()?;
    if last.len() != 2 || last[0].trim() != "inf" {
        return Err(malformed("missing inf row"));
    }
    Ok(Density::from_parts(grid, weights, num(&last[1])?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Density {
        let g = LlrGrid::new(4.0, 0.5).unwrap();
        Density::biawgn(g, 1.7)
            .unwrap()
            .combine(0.6, &Density::bec(g, 0.3).unwrap(), 0.4)
            .unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let d = sample();
        let mut buf = Vec::new();
        write_binary(&mut buf, &d).unwrap();
        assert_eq!(&buf[..4], b"WFD1");
        assert_eq!(buf.len(), 4 + 24 + 8 * (d.grid().points() + 1));
        assert_eq!(read_binary(&buf[..]).unwrap(), d);
        assert!(read_binary(&buf[..buf.len() - 3]).is_err());
        buf[0] = b'X';
        assert!(matches!(
            read_binary(&buf[..]),
            Err(FormatError::Malformed(_))
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = sample();
        let mut buf = Vec::new();
        write_csv(&mut buf, &d).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("A,delta,n_points\n4.0,0.5,17\nalpha,weight\n-4.0,"));
        assert!(text.trim_end().lines().last().unwrap().starts_with("inf,"));
        assert_eq!(read_csv(&buf[..]).unwrap(), d);
        let cut: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(read_csv(cut.as_bytes()).is_err());
    }
}
