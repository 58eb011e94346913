//! Benchmark CSV: `#`-prefixed `key=value` metadata lines, a header row, then
//! one row per image size.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const BENCH_COLUMNS: [&str; 5] = [
    "size",
    "patches",
    "epochs",
    "wall_ms",
    "throughput_patches_per_s",
];

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    /// Image side length N of an N×N image.
    pub size: usize,
    pub patches: usize,
    pub epochs: usize,
    /// Median wall time of the repeats.
    pub wall_ms: f64,
    /// Patch updates per second: patches × epochs / wall time.
    pub throughput_patches_per_s: f64,
}

pub fn write_bench_csv(
    mut out: impl Write,
    metadata: &[(String, String)],
    rows: &[BenchRow],
) -> Result<()> {
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "{}", BENCH_COLUMNS.join(","))?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.3},{:.1}",
            r.size, r.patches, r.epochs, r.wall_ms, r.throughput_patches_per_s
        )?;
    }
    Ok(())
}

/// Parses a benchmark CSV back into metadata and rows.
pub fn read_bench_csv(input: impl BufRead) -> Result<(Vec<(String, String)>, Vec<BenchRow>)> {
    let mut metadata = Vec::new();
    let mut rows = Vec::new();
    let mut header_seen = false;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                metadata.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if !header_seen {
            if line != BENCH_COLUMNS.join(",") {
                return Err(Error::Format(format!("unexpected CSV header {line:?}")));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != BENCH_COLUMNS.len() {
            return Err(Error::Format(format!("bad CSV row {line:?}")));
        }
        let bad = |_| Error::Format(format!("bad CSV row {line:?}"));
        rows.push(BenchRow {
            size: f[0].parse().map_err(bad)?,
            patches: f[1].parse().map_err(bad)?,
            epochs: f[2].parse().map_err(bad)?,
            wall_ms: f[3]
                .parse()
                .map_err(|_| Error::Format(format!("bad CSV row {line:?}")))?,
            throughput_patches_per_s: f[4]
                .parse()
                .map_err(|_| Error::Format(format!("bad CSV row {line:?}")))?,
        });
    }
    if !header_seen {
        return Err(Error::Format("missing CSV header".into()));
    }
    Ok((metadata, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_read() {
        let meta = vec![("atoms".to_string(), "64".to_string())];
        let rows = vec![BenchRow {
            size: 128,
            patches: 14161,
            epochs: 2,
            wall_ms: 12.5,
            throughput_patches_per_s: 2265760.0,
        }];
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, &meta, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(
            text.starts_with("# atoms=64\nsize,patches,epochs,wall_ms,throughput_patches_per_s\n")
        );
        let (m, r) = read_bench_csv(buf.as_slice()).unwrap();
        assert_eq!(m, meta);
        assert_eq!(r, rows);
    }
}
