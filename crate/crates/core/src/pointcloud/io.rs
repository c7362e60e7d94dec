use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;

use super::PointCloud;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    XyzText,
    PlyAscii,
    PlyBinary,
}

impl Format {
    /// Guess from the extension; PLY flavour is resolved from the header.
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "xyz" | "txt" | "pts" => Some(Format::XyzText),
            "ply" => Some(Format::PlyBinary),
            _ => None,
        }
    }
}

/// Load a point cloud, dispatching on the extension.
pub fn load(path: &Path) -> Result<PointCloud> {
    match Format::from_path(path) {
        Some(Format::XyzText) => load_xyz(path),
        Some(_) => load_ply(path),
        None => Err(Error::Invalid(format!(
            "unknown point cloud format for {}",
            path.display()
        ))),
    }
}

pub fn load_xyz(path: &Path) -> Result<PointCloud> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_xyz(BufReader::new(file)).map_err(|e| match e {
        Error::Parse { location, message } => {
            Error::parse(format!("{}:{}", path.display(), location), message)
        }
        e => e,
    })
}

fn parse_xyz(reader: impl BufRead) -> Result<PointCloud> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut width = None;
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(format!("line {}", k + 1), e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = t
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(format!("line {}", k + 1), e.to_string()))?;
        if vals.len() != 3 && vals.len() != 6 {
            return Err(Error::parse(
                format!("line {}", k + 1),
                format!("expected 3 or 6 values, found {}", vals.len()),
            ));
        }
        if *width.get_or_insert(vals.len()) != vals.len() {
            return Err(Error::parse(
                format!("line {}", k + 1),
                "inconsistent column count",
            ));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(format!("line {}", k + 1), "non-finite value"));
        }
        positions.push(Vec3::new(vals[0], vals[1], vals[2]));
        if vals.len() == 6 {
            normals.push(Vec3::new(vals[3], vals[4], vals[5]).normalize());
        }
    }
    if positions.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(PointCloud {
        normals: (!normals.is_empty()).then_some(normals),
        positions,
        ..Default::default()
    })
}

pub fn save_xyz(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..cloud.len() {
        let p = cloud.positions[i];
        match cloud.normal(i) {
            Some(n) => out.push_str(&format!("{} {} {} {} {} {}\n", p.x, p.y, p.z, n.x, n.y, n.z)),
            None => out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z)),
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct PlyHeader {
    binary: bool,
    count: usize,
    props: Vec<(String, Scalar)>,
}

fn read_header(reader: &mut impl BufRead) -> Result<PlyHeader> {
    let mut line = String::new();
    let mut next = |reader: &mut dyn BufRead, n: &mut usize| -> Result<String> {
        line.clear();
        *n += 1;
        let got = reader
            .read_line(&mut line)
            .map_err(|e| Error::parse(format!("header line {n}"), e.to_string()))?;
        if got == 0 {
            return Err(Error::parse(format!("header line {n}"), "unexpected end of header"));
        }
        Ok(line.trim().to_string())
    };
    let mut n = 0;
    if next(reader, &mut n)? != "ply" {
        return Err(Error::parse("header line 1", "missing `ply` magic"));
    }
    let mut binary = None;
    let mut count = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    loop {
        let l = next(reader, &mut n)?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", f, _] => {
                return Err(Error::parse(format!("header line {n}"), format!("unsupported format {f}")))
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, c] => {
                if count.is_some() {
                    in_vertex = false;
                    continue;
                }
                if *name != "vertex" {
                    return Err(Error::parse(
                        format!("header line {n}"),
                        "the vertex element must come first",
                    ));
                }
                in_vertex = true;
                count = Some(c.parse::<usize>().map_err(|e| {
                    Error::parse(format!("header line {n}"), e.to_string())
                })?);
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::parse(format!("header line {n}"), "list properties on vertices are unsupported"));
            }
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| {
                    Error::parse(format!("header line {n}"), format!("unknown type {ty}"))
                })?;
                props.push((name.to_string(), s));
            }
            ["property", ..] => {}
            _ => return Err(Error::parse(format!("header line {n}"), format!("unexpected `{l}`"))),
        }
    }
    Ok(PlyHeader {
        binary: binary.ok_or_else(|| Error::parse("header", "missing format"))?,
        count: count.ok_or_else(|| Error::parse("header", "missing vertex element"))?,
        props,
    })
}

pub fn load_ply(path: &Path) -> Result<PointCloud> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let header = read_header(&mut reader)?;
    let find = |name: &str| header.props.iter().position(|(n, _)| n == name);
    let (Some(ix), Some(iy), Some(iz)) = (find("x"), find("y"), find("z")) else {
        return Err(Error::parse("header", "vertex element needs x, y, z"));
    };
    let normal_idx = match (find("nx"), find("ny"), find("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(header.count);
    if header.binary {
        let stride: usize = header.props.iter().map(|(_, s)| s.size()).sum();
        let mut buf = vec![0u8; stride];
        for r in 0..header.count {
            reader
                .read_exact(&mut buf)
                .map_err(|e| Error::parse(format!("record {r}"), e.to_string()))?;
            let mut off = 0;
            let mut row = Vec::with_capacity(header.props.len());
            for (_, s) in &header.props {
                row.push(s.read_le(&buf[off..]));
                off += s.size();
            }
            rows.push(row);
        }
    } else {
        let mut line = String::new();
        for r in 0..header.count {
            line.clear();
            reader
                .read_line(&mut line)
                .map_err(|e| Error::parse(format!("record {r}"), e.to_string()))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(format!("record {r}"), e.to_string()))?;
            if row.len() < header.props.len() {
                return Err(Error::parse(format!("record {r}"), "too few values"));
            }
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let positions = rows.iter().map(|r| Vec3::new(r[ix], r[iy], r[iz])).collect();
    let normals = normal_idx.map(|[a, b, c]| {
        rows.iter()
            .map(|r| {
                let n = Vec3::new(r[a], r[b], r[c]);
                if n.norm() > 0.0 {
                    n.normalize()
                } else {
                    Vec3::z()
                }
            })
            .collect()
    });
    Ok(PointCloud {
        positions,
        normals,
        ..Default::default()
    })
}

/// Write binary little-endian PLY with double-precision coordinates.
pub fn save_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
        cloud.len()
    );
    if cloud.has_normals() {
        header.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes()).unwrap();
    for i in 0..cloud.len() {
        for v in cloud.positions[i].iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(n) = cloud.normal(i) {
            for v in n.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
