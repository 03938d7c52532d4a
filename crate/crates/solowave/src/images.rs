//! Grayscale images and raw grids for matrices and spectrograms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use solowave_core::analysis::Grid;

use crate::{Error, Result};

/// Writes a binary PGM, mapping `[lo, hi]` linearly to black..white. Row 0
/// of the grid is the bottom row of the image when `flip` is set.
pub fn write_pgm(grid: &Grid, path: impl AsRef<Path>, range: Option<(f32, f32)>, flip: bool) -> Result<()> {
    let path = path.as_ref();
    let (lo, hi) = range.unwrap_or_else(|| grid.min_max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut pixels = Vec::with_capacity(grid.rows * grid.cols);
    for r in 0..grid.rows {
        let src = if flip { grid.rows - 1 - r } else { r };
        for c in 0..grid.cols {
            let v = ((grid.get(src, c) - lo) / span).clamp(0.0, 1.0);
            pixels.push((v * 255.0).round() as u8);
        }
    }
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write!(w, "P5\n{} {}\n255\n", grid.cols, grid.rows).map_err(io)?;
    w.write_all(&pixels).map_err(io)?;
    w.flush().map_err(io)
}

/// Writes `"<KIND> rows=R cols=C dtype=f32le\n"` followed by the row-major
/// values.
pub fn write_raw_grid(grid: &Grid, kind: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write!(w, "{kind} rows={} cols={} dtype=f32le\n", grid.rows, grid.cols).map_err(io)?;
    for v in &grid.values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_raw_grid(path: impl AsRef<Path>) -> Result<(String, Grid)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::format(path, "missing header"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::format(path, "header is not text"))?;
    let mut parts = header.split(' ');
    let kind = parts.next().unwrap_or_default().to_string();
    let (mut rows, mut cols) = (None, None);
    for p in parts {
        match p.split_once('=') {
            Some(("rows", v)) => rows = v.parse().ok(),
            Some(("cols", v)) => cols = v.parse().ok(),
            Some(("dtype", "f32le")) => {}
            _ => return Err(Error::format(path, format!("unexpected header field {p:?}"))),
        }
    }
    let (rows, cols): (usize, usize) = rows.zip(cols).ok_or_else(|| Error::format(path, "missing dimensions"))?;
    let data = &bytes[nl + 1..];
    if data.len() != rows * cols * 4 {
        return Err(Error::format(path, format!("expected {} bytes of data, found {}", rows * cols * 4, data.len())));
    }
    let values = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((kind, Grid { rows, cols, values }))
}
