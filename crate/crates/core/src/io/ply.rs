//! 3DGS-style PLY scenes: logit opacity, log scale, `(w, x, y, z)`
//! rotation, DC and higher-order SH color split into `f_dc_*` / `f_rest_*`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scene::{normalize_quat, GaussianPrimitive, GaussianScene};
use crate::sh;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    BinaryLittleEndian,
    Ascii,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarType::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarType::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Where each property lands in a primitive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Mean(usize),
    Normal,
    Dc(usize),
    Rest(usize),
    Opacity,
    Scale(usize),
    Rot(usize),
}

fn slot_for(name: &str) -> Option<Slot> {
    let indexed = |prefix: &str| name.strip_prefix(prefix).and_then(|r| r.parse::<usize>().ok());
    Some(match name {
        "x" => Slot::Mean(0),
        "y" => Slot::Mean(1),
        "z" => Slot::Mean(2),
        "nx" | "ny" | "nz" => Slot::Normal,
        "opacity" => Slot::Opacity,
        _ => {
            if let Some(i) = indexed("f_dc_").filter(|&i| i < 3) {
                Slot::Dc(i)
            } else if let Some(i) = indexed("f_rest_") {
                Slot::Rest(i)
            } else if let Some(i) = indexed("scale_").filter(|&i| i < 3) {
                Slot::Scale(i)
            } else {
                Slot::Rot(indexed("rot_").filter(|&i| i < 4)?)
            }
        }
    })
}

struct Header {
    format: PlyFormat,
    count: usize,
    props: Vec<(String, ScalarType, Slot)>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let mut format = None;
    let mut count = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    let mut first = true;
    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse("header", offset as u64, "missing end_header"))?;
        let line_bytes = &bytes[offset..offset + end];
        let line = std::str::from_utf8(line_bytes)
            .map_err(|_| Error::parse("header", offset as u64, "header is not UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        let at = offset as u64;
        offset += end + 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        if first {
            if line != "ply" {
                return Err(Error::parse("magic", at, "file does not start with `ply`"));
            }
            first = false;
            continue;
        }
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, v] => {
                if *v != "1.0" {
                    return Err(Error::parse("format", at, format!("unsupported version {v}")));
                }
                format = Some(match *f {
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    "ascii" => PlyFormat::Ascii,
                    other => return Err(Error::parse("format", at, format!("unsupported format {other}"))),
                });
            }
            ["element", name, n] => {
                if *name != "vertex" {
                    return Err(Error::parse("element", at, format!("unexpected element `{name}`")));
                }
                if count.is_some() {
                    return Err(Error::parse("element", at, "duplicate vertex element"));
                }
                count = Some(
                    n.parse::<usize>()
                        .map_err(|_| Error::parse("element", at, format!("bad vertex count `{n}`")))?,
                );
                in_vertex = true;
            }
            ["property", "list", ..] => {
                return Err(Error::parse("property", at, "list properties are not supported"));
            }
            ["property", ty, name] => {
                if !in_vertex {
                    return Err(Error::parse(
                        name.to_string(),
                        at,
                        "property outside the vertex element",
                    ));
                }
                let t = ScalarType::parse(ty)
                    .ok_or_else(|| Error::parse(name.to_string(), at, format!("unknown type `{ty}`")))?;
                let slot = slot_for(name).ok_or_else(|| Error::parse(name.to_string(), at, "unknown property"))?;
                if props.iter().any(|(n, _, _)| n == name) {
                    return Err(Error::parse(name.to_string(), at, "duplicate property"));
                }
                props.push((name.to_string(), t, slot));
            }
            ["end_header"] => break,
            _ => return Err(Error::parse("header", at, format!("unrecognized line `{line}`"))),
        }
    }
    let format = format.ok_or_else(|| Error::parse("format", 0, "missing format line"))?;
    let count = count.ok_or_else(|| Error::parse("element", 0, "missing vertex element"))?;
    Ok(Header {
        format,
        count,
        props,
        body_offset: offset,
    })
}

/// SH degree implied by the `f_rest_*` properties; they must be numbered
/// contiguously from 0.
fn layout(h: &Header) -> Result<usize> {
    let mut rest: Vec<usize> = h
        .props
        .iter()
        .filter_map(|(_, _, s)| if let Slot::Rest(i) = s { Some(*i) } else { None })
        .collect();
    rest.sort_unstable();
    if rest.iter().enumerate().any(|(i, &r)| i != r) {
        return Err(Error::parse("f_rest", 0, "f_rest properties are not numbered 0..n"));
    }
    let n = rest.len();
    if !n.is_multiple_of(3) {
        return Err(Error::parse(
            "f_rest",
            0,
            format!("{n} f_rest properties is not a multiple of 3"),
        ));
    }
    let deg = sh::degree_for_count(n / 3 + 1)
        .ok_or_else(|| Error::parse("f_rest", 0, format!("{n} f_rest properties match no SH degree")))?;
    for req in [
        "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
        "rot_2", "rot_3",
    ] {
        if !h.props.iter().any(|(n, _, _)| n == req) {
            return Err(Error::parse(req, 0, "required property missing"));
        }
    }
    Ok(deg)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn build_primitive(values: &[f64], h: &Header, deg: usize, index: usize, at: u64) -> Result<GaussianPrimitive> {
    let n = sh::coeff_count(deg);
    let mut p = GaussianPrimitive {
        mean: Vector3::zeros(),
        scale: Vector3::zeros(),
        rotation: [0.0; 4],
        opacity: 0.0,
        sh_color: vec![0.0; 3 * n],
    };
    for ((name, _, slot), &v) in h.props.iter().zip(values) {
        if !v.is_finite() {
            return Err(Error::parse(
                name.clone(),
                at,
                format!("vertex {index}: non-finite value"),
            ));
        }
        match *slot {
            Slot::Mean(i) => p.mean[i] = v,
            Slot::Normal => {}
            Slot::Dc(c) => p.sh_color[c * n] = v,
            Slot::Rest(i) => {
                let (c, j) = (i / (n - 1), i % (n - 1));
                p.sh_color[c * n + 1 + j] = v;
            }
            Slot::Opacity => p.opacity = sigmoid(v),
            Slot::Scale(i) => p.scale[i] = v.exp(),
            Slot::Rot(i) => p.rotation[i] = v,
        }
    }
    p.rotation = normalize_quat(p.rotation).map_err(|e| Error::parse("rot_0", at, format!("vertex {index}: {e}")))?;
    p.validate(deg)
        .map_err(|e| Error::parse("vertex", at, format!("vertex {index}: {e}")))?;
    Ok(p)
}

/// Parses a PLY scene from memory.
pub fn parse_ply(bytes: &[u8]) -> Result<GaussianScene> {
    let h = parse_header(bytes)?;
    let deg = layout(&h)?;
    let mut prims = Vec::with_capacity(h.count);
    let mut values = vec![0.0; h.props.len()];
    match h.format {
        PlyFormat::BinaryLittleEndian => {
            let stride: usize = h.props.iter().map(|(_, t, _)| t.size()).sum();
            let expected = h.body_offset + stride * h.count;
            if bytes.len() < expected {
                // name the first field that runs past the end
                let short_vertex = (bytes.len() - h.body_offset) / stride.max(1);
                let mut off = h.body_offset + short_vertex * stride;
                let mut field = h.props.first().map_or("vertex".to_string(), |p| p.0.clone());
                for (name, t, _) in &h.props {
                    if off + t.size() > bytes.len() {
                        field = name.clone();
                        break;
                    }
                    off += t.size();
                }
                return Err(Error::parse(
                    field,
                    off as u64,
                    format!("truncated body: vertex {short_vertex} of {} incomplete", h.count),
                ));
            }
            if bytes.len() > expected {
                return Err(Error::parse(
                    "body",
                    expected as u64,
                    "trailing bytes after the last vertex",
                ));
            }
            for i in 0..h.count {
                let start = h.body_offset + i * stride;
                let mut off = start;
                for ((_, t, _), v) in h.props.iter().zip(values.iter_mut()) {
                    *v = t.read(&bytes[off..off + t.size()]);
                    off += t.size();
                }
                prims.push(build_primitive(&values, &h, deg, i, start as u64)?);
            }
        }
        PlyFormat::Ascii => {
            let body = std::str::from_utf8(&bytes[h.body_offset..])
                .map_err(|_| Error::parse("body", h.body_offset as u64, "ASCII body is not UTF-8"))?;
            let mut off = h.body_offset;
            let mut lines = body.split_inclusive('\n').filter_map(|l| {
                let at = off;
                off += l.len();
                let t = l.trim();
                (!t.is_empty()).then_some((at, t))
            });
            for i in 0..h.count {
                let (at, line) = lines.next().ok_or_else(|| {
                    Error::parse(
                        "vertex",
                        bytes.len() as u64,
                        format!("expected {} vertices, found {i}", h.count),
                    )
                })?;
                let words: Vec<&str> = line.split_whitespace().collect();
                if words.len() != h.props.len() {
                    return Err(Error::parse(
                        "vertex",
                        at as u64,
                        format!("vertex {i}: {} values for {} properties", words.len(), h.props.len()),
                    ));
                }
                for ((name, _, _), (w, v)) in h.props.iter().zip(words.iter().zip(values.iter_mut())) {
                    *v = w
                        .parse::<f64>()
                        .map_err(|_| Error::parse(name.clone(), at as u64, format!("vertex {i}: bad number `{w}`")))?;
                }
                prims.push(build_primitive(&values, &h, deg, i, at as u64)?);
            }
            if let Some((at, _)) = lines.next() {
                return Err(Error::parse("body", at as u64, "more vertices than declared"));
            }
        }
    }
    GaussianScene::new(deg, prims)
}

pub fn read_ply(path: &Path) -> Result<GaussianScene> {
    parse_ply(&std::fs::read(path)?)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn property_names(deg: usize) -> Vec<String> {
    let n = sh::coeff_count(deg);
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..3 * (n - 1)).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

fn stored_values(p: &GaussianPrimitive, deg: usize) -> Vec<f64> {
    let n = sh::coeff_count(deg);
    let mut v = vec![p.mean.x, p.mean.y, p.mean.z, 0.0, 0.0, 0.0];
    v.extend((0..3).map(|c| p.sh_color[c * n]));
    for c in 0..3 {
        v.extend_from_slice(&p.sh_color[c * n + 1..(c + 1) * n]);
    }
    v.push(logit(p.opacity));
    v.extend(p.scale.iter().map(|s| s.ln()));
    v.extend_from_slice(&p.rotation);
    v
}

/// Serializes a scene; binary files store doubles, ASCII files use
/// shortest round-trip decimal formatting.
pub fn encode_ply(scene: &GaussianScene, format: PlyFormat) -> Vec<u8> {
    let names = property_names(scene.sh_degree);
    let mut header = String::from("ply\n");
    let fmt = match format {
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
        PlyFormat::Ascii => "ascii",
    };
    writeln!(header, "format {fmt} 1.0").unwrap();
    writeln!(header, "element vertex {}", scene.len()).unwrap();
    for n in &names {
        writeln!(header, "property double {n}").unwrap();
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for p in &scene.primitives {
        let vals = stored_values(p, scene.sh_degree);
        match format {
            PlyFormat::BinaryLittleEndian => vals.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            PlyFormat::Ascii => {
                let line: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

pub fn write_ply(path: &Path, scene: &GaussianScene, format: PlyFormat) -> Result<()> {
    std::fs::write(path, encode_ply(scene, format))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(opacity_logit: f64, log_scale: f64, rest: usize) -> Vec<u8> {
        let mut s = String::from("ply\nformat ascii 1.0\nelement vertex 1\n");
        let mut names = vec!["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        names.extend((0..rest).map(|i| format!("f_rest_{i}")));
        names.extend(
            [
                "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
            ]
            .map(String::from),
        );
        for n in &names {
            s += &format!("property float {n}\n");
        }
        s += "end_header\n";
        let mut vals = vec!["0.1", "0.2", "0.3", "0.5", "0.5", "0.5"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        vals.extend((0..rest).map(|i| format!("{}", i as f64 * 0.01)));
        vals.push(opacity_logit.to_string());
        vals.extend([log_scale.to_string(), log_scale.to_string(), log_scale.to_string()]);
        vals.extend(["2", "0", "0", "0"].map(String::from));
        s += &vals.join(" ");
        s += "\n";
        s.into_bytes()
    }

    #[test]
    fn activation_examples() {
        let sc = parse_ply(&minimal(0.0, 0.0, 0)).unwrap();
        assert_eq!(sc.sh_degree, 0);
        assert_eq!(sc.primitives[0].opacity, 0.5);
        assert_eq!(sc.primitives[0].scale, Vector3::repeat(1.0));
        assert_eq!(sc.primitives[0].rotation, [1.0, 0.0, 0.0, 0.0]);
        let sc = parse_ply(&minimal(0.0, 0.0, 45)).unwrap();
        assert_eq!(sc.sh_degree, 3);
        // f_rest is channel-major: f_rest_15 is the first non-DC coefficient of green
        assert!((sc.primitives[0].sh_color[16 + 1] - 0.15).abs() < 1e-7);
    }

    #[test]
    fn header_errors_name_field_and_offset() {
        let bytes = minimal(0.0, 0.0, 0);
        let bad = String::from_utf8(bytes.clone())
            .unwrap()
            .replace("property float opacity", "property float weird");
        match parse_ply(bad.as_bytes()) {
            Err(Error::Parse { field, offset, .. }) => {
                assert_eq!(field, "weird");
                assert_eq!(&bad.as_bytes()[offset as usize..offset as usize + 8], b"property");
            }
            other => panic!("{other:?}"),
        }
        let bad = String::from_utf8(bytes)
            .unwrap()
            .replace("f_rest", "x")
            .replace("element vertex 1", "element vertex 2");
        assert!(matches!(parse_ply(bad.as_bytes()), Err(Error::Parse { .. })));
        assert!(parse_ply(&minimal(0.0, 0.0, 4)).is_err());
    }

    #[test]
    fn truncated_binary_names_field() {
        let sc = GaussianScene::new(
            0,
            vec![GaussianPrimitive {
                mean: Vector3::new(1.0, 2.0, 3.0),
                scale: Vector3::repeat(0.1),
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity: 0.7,
                sh_color: vec![0.1, 0.2, 0.3],
            }],
        )
        .unwrap();
        let bytes = encode_ply(&sc, PlyFormat::BinaryLittleEndian);
        let cut = &bytes[..bytes.len() - 12];
        match parse_ply(cut) {
            Err(Error::Parse { field, offset, .. }) => {
                assert_eq!(field, "rot_2");
                assert_eq!(offset as usize, bytes.len() - 16);
            }
            other => panic!("{other:?}"),
        }
    }
}
