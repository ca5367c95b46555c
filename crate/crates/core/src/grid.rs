//! Scalar fields sampled on uniform periodic grids.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{bail, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    /// Row-major, last axis fastest.
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(dims: Vec<usize>, spacing: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if dims.len() != spacing.len() {
            bail!(Config, "grid has {} axes but {} spacings", dims.len(), spacing.len());
        }
        let n: usize = dims.iter().product();
        if n != values.len() {
            bail!(Config, "grid of size {} given {} values", n, values.len());
        }
        if values.iter().any(|v| !v.is_finite()) {
            bail!(Config, "grid values must be finite");
        }
        Ok(GridFunction { dims, spacing, values })
    }

    /// Uniform grid over a torus of the given periods.
    pub fn zeros_periodic(dims: Vec<usize>, periods: &[f64]) -> Self {
        let spacing = dims.iter().zip(periods).map(|(&n, &p)| p / n as f64).collect();
        let n = dims.iter().product();
        GridFunction { dims, spacing, values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Index with periodic wrap-around on every axis.
    pub fn index_wrapped(&self, idx: &[i64]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &n)| acc * n + i.rem_euclid(n as i64) as usize)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for ax in (0..self.dims.len()).rev() {
            out[ax] = flat % self.dims[ax];
            flat /= self.dims[ax];
        }
        out
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().zip(&self.spacing).map(|(&i, &h)| i as f64 * h).collect()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn same_shape(&self, other: &GridFunction) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    /// Linear interpolation on a periodic grid (all axes periodic).
    pub fn interpolate_periodic(&self, x: &[f64]) -> f64 {
        let d = self.dims.len();
        let mut base = vec![0i64; d];
        let mut frac = vec![0.0; d];
        for ax in 0..d {
            let s = x[ax] / self.spacing[ax];
            let f = s.floor();
            base[ax] = f as i64;
            frac[ax] = s - f;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = base.clone();
            for ax in 0..d {
                if corner >> ax & 1 == 1 {
                    idx[ax] += 1;
                    w *= frac[ax];
                } else {
                    w *= 1.0 - frac[ax];
                }
            }
            total += w * self.values[self.index_wrapped(&idx)];
        }
        total
    }

    /// Text header (`dims`, `spacing`) followed by little-endian f64 values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let sp: Vec<String> = self.spacing.iter().map(|h| format!("{h:e}")).collect();
        writeln!(w, "dims {}", dims.join(" "))?;
        writeln!(w, "spacing {}", sp.join(" "))?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut lines = Vec::new();
        let mut pos = 0;
        for _ in 0..2 {
            let Some(end) = bytes[pos..].iter().position(|&b| b == b'\n') else {
                bail!(Config, "truncated grid header");
            };
            lines.push(String::from_utf8_lossy(&bytes[pos..pos + end]).to_string());
            pos += end + 1;
        }
        let parse_list = |line: &str, key: &str| -> Result<Vec<String>> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                bail!(Config, "expected grid header key {key}");
            }
            Ok(it.map(|s| s.to_string()).collect())
        };
        let dims: Vec<usize> = parse_list(&lines[0], "dims")?
            .iter()
            .map(|s| s.parse().map_err(|_| crate::Error::Config(format!("bad dim {s}"))))
            .collect::<Result<_>>()?;
        let spacing: Vec<f64> = parse_list(&lines[1], "spacing")?
            .iter()
            .map(|s| s.parse().map_err(|_| crate::Error::Config(format!("bad spacing {s}"))))
            .collect::<Result<_>>()?;
        let body = &bytes[pos..];
        if body.len() % 8 != 0 {
            bail!(Config, "grid body is not a whole number of f64 values");
        }
        let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        GridFunction::new(dims, spacing, values)
    }

    /// CSV with one coordinate column per axis followed by `value`.
    pub fn to_csv(&self, axis_names: &[&str]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{},value", axis_names.join(","));
        for flat in 0..self.values.len() {
            let c = self.coords(flat);
            let cs: Vec<String> = c.iter().map(|x| format!("{x:.12e}")).collect();
            let _ = writeln!(s, "{},{:.15e}", cs.join(","), self.values[flat]);
        }
        s
    }
}
