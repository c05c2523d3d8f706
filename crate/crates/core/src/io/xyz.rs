//! Whitespace-separated `x y z [s]` text, one point per line. `#` starts a comment.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{normalize_intensity, ColorAttr, PointCloud, Vec3};

pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_xyz_from(BufReader::new(file), path)
}

/// A fourth column is read as raw intensity and min-max normalized.
/// Files without it get a constant 0.5 intensity.
pub fn read_xyz_from<R: BufRead>(r: R, path: &Path) -> Result<PointCloud> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        record: line,
        msg,
    };
    let mut points = Vec::new();
    let mut scalars = Vec::new();
    let mut columns = None;
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let vals = body
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|_| err(line_no, format!("bad number {f:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if !(3..=4).contains(&vals.len()) {
            return Err(err(line_no, format!("expected 3 or 4 columns, found {}", vals.len())));
        }
        match columns {
            None => columns = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(err(line_no, format!("expected {c} columns, found {}", vals.len())))
            }
            _ => {}
        }
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(err(line_no, "non-finite value".into()));
        }
        points.push(Vec3::new(vals[0], vals[1], vals[2]));
        if vals.len() == 4 {
            scalars.push(vals[3]);
        }
    }
    let colors = if columns == Some(4) {
        ColorAttr::Intensity(normalize_intensity(&scalars))
    } else {
        ColorAttr::Intensity(vec![0.5; points.len()])
    };
    PointCloud::new(points, colors)
}

/// Writes `x y z s`, where `s` is the intensity, signed distance or RGB luma.
pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        for (i, p) in cloud.points().iter().enumerate() {
            let s = match cloud.colors() {
                ColorAttr::Intensity(v) | ColorAttr::SignedDistance(v) => v[i],
                ColorAttr::Rgb8(c) => {
                    let [r, g, b] = c[i].map(f64::from);
                    (0.299 * r + 0.587 * g + 0.114 * b) / 255.0
                }
            };
            writeln!(w, "{} {} {} {}", p.x, p.y, p.z, s)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(s: &str) -> Result<PointCloud> {
        read_xyz_from(Cursor::new(s.as_bytes()), Path::new("t.xyz"))
    }

    #[test]
    fn fourth_column_is_normalized() {
        let c = parse("# header\n0 0 0 100\n1 0 0 300 # trailing\n\n2 0 0 200\n").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.colors(), &ColorAttr::Intensity(vec![0.0, 1.0, 0.5]));
    }

    #[test]
    fn constant_intensity_degenerates_to_half() {
        let c = parse("0 0 0 7\n1 1 1 7\n").unwrap();
        assert_eq!(c.colors(), &ColorAttr::Intensity(vec![0.5, 0.5]));
        let c = parse("0 0 0\n1 1 1\n").unwrap();
        assert_eq!(c.colors(), &ColorAttr::Intensity(vec![0.5, 0.5]));
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse("0 0 0 1\n1 1 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { record: 2, .. }), "{e}");
        assert!(matches!(parse("0 0 zz\n").unwrap_err(), Error::Parse { record: 1, .. }));
        assert!(matches!(parse("# a\ninf 0 0\n").unwrap_err(), Error::Parse { record: 2, .. }));
    }
}
