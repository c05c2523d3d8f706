//! PLY 1.0 reader and writer, `ascii` and `binary_little_endian` only.
//!
//! Recognized vertex properties: `x y z` (required), `red green blue`,
//! `intensity`, `scalar` / `scalar_*` (signed distance) and `label`.
//! Unknown vertex properties are skipped. Elements after `vertex` are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{normalize_intensity, ColorAttr, PointCloud, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    X,
    Y,
    Z,
    Red,
    Green,
    Blue,
    Intensity,
    Scalar,
    Label,
    Other,
}

impl Role {
    fn of(name: &str) -> Self {
        match name {
            "x" => Role::X,
            "y" => Role::Y,
            "z" => Role::Z,
            "red" => Role::Red,
            "green" => Role::Green,
            "blue" => Role::Blue,
            "intensity" | "scalar_intensity" => Role::Intensity,
            "label" => Role::Label,
            n if n == "scalar" || n.starts_with("scalar_") => Role::Scalar,
            _ => Role::Other,
        }
    }
}

struct Header {
    encoding: PlyEncoding,
    vertex_count: usize,
    props: Vec<(ScalarType, Role)>,
}

/// Everything read from a PLY vertex element.
#[derive(Debug, Clone)]
pub struct PlyContents {
    pub cloud: PointCloud,
    /// `label` property when present.
    pub labels: Option<Vec<u32>>,
    pub encoding: PlyEncoding,
}

pub fn read_ply(path: &Path) -> Result<PlyContents> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply_from(BufReader::new(file), path)
}

pub fn read_ply_from<R: BufRead>(mut r: R, path: &Path) -> Result<PlyContents> {
    let (header, lines) = read_header(&mut r, path)?;
    let n = header.vertex_count;
    let nprops = header.props.len();
    let mut values = vec![0.0f64; n * nprops];
    match header.encoding {
        PlyEncoding::Ascii => {
            let mut line = String::new();
            let mut rec = 0;
            let mut line_no = lines;
            while rec < n {
                line.clear();
                line_no += 1;
                let read = r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
                if read == 0 {
                    return Err(parse_err(path, line_no, format!("expected {n} vertices, found {rec}")));
                }
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() < nprops {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("vertex {rec}: expected {nprops} values, found {}", fields.len()),
                    ));
                }
                for (k, f) in fields.iter().take(nprops).enumerate() {
                    values[rec * nprops + k] = f.parse::<f64>().map_err(|_| {
                        parse_err(path, line_no, format!("vertex {rec}: bad number {f:?}"))
                    })?;
                }
                rec += 1;
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            let stride: usize = header.props.iter().map(|(t, _)| t.size()).sum();
            let mut buf = vec![0u8; stride];
            for rec in 0..n {
                r.read_exact(&mut buf).map_err(|_| {
                    parse_err(path, rec, format!("truncated binary data at vertex {rec} of {n}"))
                })?;
                let mut off = 0;
                for (k, (t, _)) in header.props.iter().enumerate() {
                    values[rec * nprops + k] = t.decode_le(&buf[off..]);
                    off += t.size();
                }
            }
        }
    }
    assemble(&header, &values, path)
}

fn parse_err(path: &Path, record: usize, msg: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        record,
        msg,
    }
}

fn read_header<R: BufRead>(r: &mut R, path: &Path) -> Result<(Header, usize)> {
    let mut line = String::new();
    let mut line_no = 0;
    let mut next = |line: &mut String, line_no: &mut usize| -> Result<()> {
        line.clear();
        *line_no += 1;
        let n = r.read_line(line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(parse_err(path, *line_no, "unexpected end of header".into()));
        }
        Ok(())
    };
    next(&mut line, &mut line_no)?;
    if line.trim_end() != "ply" {
        return Err(parse_err(path, line_no, "missing 'ply' magic".into()));
    }
    let mut encoding = None;
    let mut vertex_count = None;
    let mut props = Vec::new();
    // name of the element whose properties are being declared
    let mut current: Option<String> = None;
    loop {
        next(&mut line, &mut line_no)?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, "1.0"] => {
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => {
                        return Err(parse_err(path, line_no, format!("unsupported format {other}")))
                    }
                });
            }
            ["element", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("bad element count {count:?}")))?;
                if *name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(parse_err(path, line_no, "duplicate vertex element".into()));
                    }
                    vertex_count = Some(count);
                } else if vertex_count.is_none() && count > 0 {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("element {name} before vertex is not supported"),
                    ));
                }
                current = Some(name.to_string());
            }
            ["property", "list", ..] => {
                if current.as_deref() == Some("vertex") {
                    return Err(parse_err(path, line_no, "list properties on vertex are not supported".into()));
                }
            }
            ["property", ty, name] => {
                if current.as_deref() == Some("vertex") {
                    let t = ScalarType::parse(ty)
                        .ok_or_else(|| parse_err(path, line_no, format!("unknown type {ty}")))?;
                    props.push((t, Role::of(name)));
                }
            }
            _ => {
                return Err(parse_err(path, line_no, format!("malformed header line {:?}", line.trim_end())));
            }
        }
    }
    let encoding = encoding.ok_or_else(|| parse_err(path, line_no, "missing format line".into()))?;
    let vertex_count =
        vertex_count.ok_or_else(|| parse_err(path, line_no, "missing vertex element".into()))?;
    for role in [Role::X, Role::Y, Role::Z] {
        if !props.iter().any(|(_, r)| *r == role) {
            return Err(parse_err(path, line_no, format!("missing vertex property {role:?}")));
        }
    }
    let has = |r: Role| props.iter().any(|(_, p)| *p == r);
    let rgb = [Role::Red, Role::Green, Role::Blue].map(has);
    if rgb.iter().any(|&b| b) && !rgb.iter().all(|&b| b) {
        return Err(parse_err(path, line_no, "partial red/green/blue properties".into()));
    }
    Ok((
        Header {
            encoding,
            vertex_count,
            props,
        },
        line_no,
    ))
}

fn assemble(h: &Header, values: &[f64], path: &Path) -> Result<PlyContents> {
    let nprops = h.props.len();
    let col = |role: Role| h.props.iter().position(|(_, r)| *r == role);
    let get = |rec: usize, k: usize| values[rec * nprops + k];
    let (xi, yi, zi) = (col(Role::X).unwrap(), col(Role::Y).unwrap(), col(Role::Z).unwrap());
    let mut points = Vec::with_capacity(h.vertex_count);
    for rec in 0..h.vertex_count {
        let p = Vec3::new(get(rec, xi), get(rec, yi), get(rec, zi));
        if !p.iter().all(|c| c.is_finite()) {
            return Err(parse_err(path, rec, format!("vertex {rec} has a non-finite coordinate")));
        }
        points.push(p);
    }
    let column = |k: usize| (0..h.vertex_count).map(|rec| get(rec, k)).collect::<Vec<_>>();
    let colors = if let (Some(r), Some(g), Some(b)) = (col(Role::Red), col(Role::Green), col(Role::Blue)) {
        ColorAttr::Rgb8(
            (0..h.vertex_count)
                .map(|rec| [r, g, b].map(|k| get(rec, k).round().clamp(0.0, 255.0) as u8))
                .collect(),
        )
    } else if let Some(k) = col(Role::Intensity) {
        ColorAttr::Intensity(normalize_intensity(&column(k)))
    } else if let Some(k) = col(Role::Scalar) {
        let d = column(k);
        if let Some(rec) = d.iter().position(|v| !v.is_finite()) {
            return Err(parse_err(path, rec, format!("vertex {rec} has a non-finite scalar")));
        }
        ColorAttr::SignedDistance(d)
    } else {
        ColorAttr::Intensity(vec![0.5; h.vertex_count])
    };
    let labels = col(Role::Label).map(|k| column(k).into_iter().map(|v| v as u32).collect());
    let cloud = PointCloud::new(points, colors)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    Ok(PlyContents {
        cloud,
        labels,
        encoding: h.encoding,
    })
}

pub fn write_ply(
    path: &Path,
    cloud: &PointCloud,
    encoding: PlyEncoding,
    labels: Option<&[u32]>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply_to(&mut w, cloud, encoding, labels)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(PathBuf::from(path), e))
}

pub fn write_ply_to<W: Write>(
    w: &mut W,
    cloud: &PointCloud,
    encoding: PlyEncoding,
    labels: Option<&[u32]>,
) -> std::io::Result<()> {
    if let Some(l) = labels {
        assert_eq!(l.len(), cloud.len(), "one label per point");
    }
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply\nformat {fmt} 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    match cloud.colors() {
        ColorAttr::Rgb8(_) => writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?,
        ColorAttr::Intensity(_) => writeln!(w, "property double intensity")?,
        ColorAttr::SignedDistance(_) => writeln!(w, "property double scalar")?,
    }
    if labels.is_some() {
        writeln!(w, "property uint label")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points().iter().enumerate() {
        match encoding {
            PlyEncoding::Ascii => {
                write!(w, "{} {} {}", p.x, p.y, p.z)?;
                match cloud.colors() {
                    ColorAttr::Rgb8(c) => write!(w, " {} {} {}", c[i][0], c[i][1], c[i][2])?,
                    ColorAttr::Intensity(v) | ColorAttr::SignedDistance(v) => write!(w, " {}", v[i])?,
                }
                if let Some(l) = labels {
                    write!(w, " {}", l[i])?;
                }
                writeln!(w)?;
            }
            PlyEncoding::BinaryLittleEndian => {
                for c in p.iter() {
                    w.write_all(&c.to_le_bytes())?;
                }
                match cloud.colors() {
                    ColorAttr::Rgb8(c) => w.write_all(&c[i])?,
                    ColorAttr::Intensity(v) | ColorAttr::SignedDistance(v) => {
                        w.write_all(&v[i].to_le_bytes())?
                    }
                }
                if let Some(l) = labels {
                    w.write_all(&l[i].to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}
