//! Mesh and pattern file I/O.
//!
//! The format is line-oriented text (see `docs/formats.md` for the grammar).
//! Coordinates are written with the shortest round-tripping decimal form, so
//! save/load reproduces `f64` coordinates exactly. All writes go through
//! [`write_atomic`] so interrupted runs never leave truncated files.

use super::{CoordBounds, PatternSheet, SurfaceMesh, Triangle};
use crate::{Error, Real, Result};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

const MESH_MAGIC: &str = "mempat mesh 1";
const PATTERN_MAGIC: &str = "mempat pattern 1";
const UNITS: &str = "units m kN";

/// Writes `contents` to `path` via a temporary file in the same directory
/// followed by a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let unique = format!(
        ".{}.{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    );
    let tmp = dir.join(unique);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_mesh<T: Real>(mesh: &SurfaceMesh<T>, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{MESH_MAGIC}");
    let _ = writeln!(out, "{UNITS}");
    let _ = writeln!(out, "nodes {}", mesh.node_count());
    for (i, p) in mesh.nodes().iter().enumerate() {
        let f = mesh.fixed_flags()[i];
        let _ = writeln!(
            out,
            "{i} {} {} {} {}{}{}",
            p[0],
            p[1],
            p[2],
            f[0] as u8,
            f[1] as u8,
            f[2] as u8
        );
    }
    let _ = writeln!(out, "elements {}", mesh.element_count());
    for (k, tri) in mesh.elements().iter().enumerate() {
        let _ = writeln!(
            out,
            "{k} {} {} {} {} {}",
            tri.nodes[0],
            tri.nodes[1],
            tri.nodes[2],
            mesh.sheet_of(k),
            tri.material_angle
        );
    }
    if let Some(b) = mesh.bounds() {
        let _ = writeln!(out, "bounds {}", mesh.node_count());
        for i in 0..mesh.node_count() {
            let lo = b.lower[i];
            let hi = b.upper[i];
            let _ = writeln!(
                out,
                "{i} {} {} {} {} {} {}",
                lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]
            );
        }
    }
    let _ = writeln!(out, "end");
    write_atomic(path, &out)
}

pub fn save_pattern<T: Real>(sheet: &PatternSheet<T>, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{PATTERN_MAGIC}");
    let _ = writeln!(out, "{UNITS}");
    let _ = writeln!(out, "nodes {}", sheet.nodes2d.len());
    for (i, p) in sheet.nodes2d.iter().enumerate() {
        let _ = writeln!(out, "{i} {} {}", p[0], p[1]);
    }
    let _ = writeln!(out, "elements {}", sheet.elements.len());
    for (k, tri) in sheet.elements.iter().enumerate() {
        let _ = writeln!(
            out,
            "{k} {} {} {} {} {}",
            tri.nodes[0], tri.nodes[1], tri.nodes[2], sheet.sheet_id, tri.material_angle
        );
    }
    let _ = writeln!(out, "end");
    write_atomic(path, &out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
        }
    }

    /// Next non-blank, non-comment line with its 1-based number.
    fn next_record(&mut self) -> Option<(usize, &'a str)> {
        for (idx, raw) in self.inner.by_ref() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            return Some((idx + 1, line));
        }
        None
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn expect_line(lines: &mut Lines, expected: &str) -> Result<()> {
    match lines.next_record() {
        Some((_, line)) if line == expected => Ok(()),
        Some((no, line)) => Err(parse_err(no, format!("expected `{expected}`, got `{line}`"))),
        None => Err(parse_err(0, format!("missing `{expected}`"))),
    }
}

fn section_count(lines: &mut Lines, keyword: &str) -> Result<usize> {
    match lines.next_record() {
        Some((no, line)) => {
            let mut parts = line.split_whitespace();
            if parts.next() != Some(keyword) {
                return Err(parse_err(no, format!("expected `{keyword} <count>`")));
            }
            parts
                .next()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| parse_err(no, format!("bad count in `{keyword}` header")))
        }
        None => Err(parse_err(0, format!("missing `{keyword}` section"))),
    }
}

fn parse_scalar<T: Real>(no: usize, field: &str, token: Option<&str>) -> Result<T> {
    let token = token.ok_or_else(|| parse_err(no, format!("missing field `{field}`")))?;
    let value = token
        .parse::<f64>()
        .map_err(|_| parse_err(no, format!("field `{field}`: `{token}` is not a number")))?;
    Ok(T::of(value))
}

fn parse_index(no: usize, field: &str, token: Option<&str>) -> Result<usize> {
    let token = token.ok_or_else(|| parse_err(no, format!("missing field `{field}`")))?;
    token
        .parse::<usize>()
        .map_err(|_| parse_err(no, format!("field `{field}`: `{token}` is not an index")))
}

fn check_record_id(no: usize, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(parse_err(no, format!("record id {got}, expected {want}")));
    }
    Ok(())
}

pub fn load_mesh<T: Real>(path: &Path) -> Result<SurfaceMesh<T>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = Lines::new(&text);
    expect_line(&mut lines, MESH_MAGIC)?;
    expect_line(&mut lines, UNITS)?;

    let n = section_count(&mut lines, "nodes")?;
    let mut nodes = Vec::with_capacity(n);
    let mut fixed = Vec::with_capacity(n);
    for want in 0..n {
        let (no, line) = lines
            .next_record()
            .ok_or_else(|| parse_err(0, "truncated node section"))?;
        let mut t = line.split_whitespace();
        check_record_id(no, parse_index(no, "id", t.next())?, want)?;
        let x = parse_scalar::<T>(no, "x", t.next())?;
        let y = parse_scalar::<T>(no, "y", t.next())?;
        let z = parse_scalar::<T>(no, "z", t.next())?;
        let flags = t
            .next()
            .ok_or_else(|| parse_err(no, "missing fixed flags"))?;
        if flags.len() != 3 || !flags.chars().all(|c| c == '0' || c == '1') {
            return Err(parse_err(no, format!("fixed flags `{flags}` must be three 0/1 digits")));
        }
        let f: Vec<bool> = flags.chars().map(|c| c == '1').collect();
        nodes.push([x, y, z]);
        fixed.push([f[0], f[1], f[2]]);
    }

    let m = section_count(&mut lines, "elements")?;
    if m == 0 {
        return Err(Error::validation("mesh file declares zero elements"));
    }
    let mut elements = Vec::with_capacity(m);
    let mut sheets = Vec::with_capacity(m);
    for want in 0..m {
        let (no, line) = lines
            .next_record()
            .ok_or_else(|| parse_err(0, "truncated element section"))?;
        let mut t = line.split_whitespace();
        check_record_id(no, parse_index(no, "id", t.next())?, want)?;
        let n1 = parse_index(no, "n1", t.next())?;
        let n2 = parse_index(no, "n2", t.next())?;
        let n3 = parse_index(no, "n3", t.next())?;
        let sheet = parse_index(no, "sheet", t.next())?;
        let angle = parse_scalar::<T>(no, "material_angle", t.next())?;
        elements.push(Triangle {
            nodes: [n1, n2, n3],
            material_angle: angle,
        });
        sheets.push(sheet);
    }

    let mut bounds = None;
    let (no, line) = lines
        .next_record()
        .ok_or_else(|| parse_err(0, "missing `end`"))?;
    if line.starts_with("bounds") {
        let count = {
            let mut t = line.split_whitespace();
            t.next();
            t.next()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| parse_err(no, "bad count in `bounds` header"))?
        };
        if count != n {
            return Err(parse_err(no, "bounds section must cover every node"));
        }
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for want in 0..count {
            let (no, line) = lines
                .next_record()
                .ok_or_else(|| parse_err(0, "truncated bounds section"))?;
            let mut t = line.split_whitespace();
            check_record_id(no, parse_index(no, "id", t.next())?, want)?;
            let mut v = [T::zero(); 6];
            for (slot, name) in ["lx", "ly", "lz", "ux", "uy", "uz"].iter().enumerate() {
                v[slot] = parse_scalar::<T>(no, name, t.next())?;
            }
            lower.push([v[0], v[1], v[2]]);
            upper.push([v[3], v[4], v[5]]);
        }
        bounds = Some(CoordBounds { lower, upper });
        expect_line(&mut lines, "end")?;
    } else if line != "end" {
        return Err(parse_err(no, format!("expected `end`, got `{line}`")));
    }

    SurfaceMesh::new(nodes, elements, fixed, sheets, bounds)
}

pub fn load_pattern<T: Real>(path: &Path) -> Result<PatternSheet<T>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = Lines::new(&text);
    expect_line(&mut lines, PATTERN_MAGIC)?;
    expect_line(&mut lines, UNITS)?;

    let n = section_count(&mut lines, "nodes")?;
    let mut nodes2d = Vec::with_capacity(n);
    for want in 0..n {
        let (no, line) = lines
            .next_record()
            .ok_or_else(|| parse_err(0, "truncated node section"))?;
        let mut t = line.split_whitespace();
        check_record_id(no, parse_index(no, "id", t.next())?, want)?;
        let x = parse_scalar::<T>(no, "x", t.next())?;
        let y = parse_scalar::<T>(no, "y", t.next())?;
        nodes2d.push([x, y]);
    }

    let m = section_count(&mut lines, "elements")?;
    let mut elements = Vec::with_capacity(m);
    let mut sheet_id = 0;
    for want in 0..m {
        let (no, line) = lines
            .next_record()
            .ok_or_else(|| parse_err(0, "truncated element section"))?;
        let mut t = line.split_whitespace();
        check_record_id(no, parse_index(no, "id", t.next())?, want)?;
        let n1 = parse_index(no, "n1", t.next())?;
        let n2 = parse_index(no, "n2", t.next())?;
        let n3 = parse_index(no, "n3", t.next())?;
        sheet_id = parse_index(no, "sheet", t.next())?;
        let angle = parse_scalar::<T>(no, "material_angle", t.next())?;
        elements.push(Triangle {
            nodes: [n1, n2, n3],
            material_angle: angle,
        });
    }
    expect_line(&mut lines, "end")?;

    let sheet = PatternSheet {
        surface_nodes: (0..nodes2d.len()).collect(),
        nodes2d,
        elements,
        sheet_id,
        bounds2d: None,
    };
    sheet.validate()?;
    Ok(sheet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_hp_mesh;

    #[test]
    fn mesh_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hp.mesh");
        let mesh = generate_hp_mesh(10.0_f64, 4).unwrap();
        save_mesh(&mesh, &path).unwrap();
        let back: SurfaceMesh<f64> = load_mesh(&path).unwrap();
        assert_eq!(mesh.nodes(), back.nodes());
        assert_eq!(mesh.fixed_flags(), back.fixed_flags());
        assert_eq!(mesh.element_sheets(), back.element_sheets());
        for (a, b) in mesh.elements().iter().zip(back.elements()) {
            assert_eq!(a.nodes, b.nodes);
            assert_eq!(a.material_angle, b.material_angle);
        }
    }

    #[test]
    fn roundtrip_preserves_awkward_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("awkward.mesh");
        let mesh = SurfaceMesh::new(
            vec![
                [0.1 + 0.2, -1.0 / 3.0, 1e-17],
                [std::f64::consts::PI, 2.0_f64.sqrt(), 0.0],
                [6.02e23, -1.6e-19, 12.3456789012345678],
            ],
            vec![Triangle::new([0, 1, 2])],
            vec![[true, false, true]; 3],
            vec![0],
            None,
        )
        .unwrap();
        save_mesh(&mesh, &path).unwrap();
        let back: SurfaceMesh<f64> = load_mesh(&path).unwrap();
        assert_eq!(mesh.nodes(), back.nodes());
    }

    #[test]
    fn duplicate_ids_in_element_fail_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mesh");
        let text = "mempat mesh 1\nunits m kN\nnodes 3\n0 0 0 0 000\n1 1 0 0 000\n2 0 1 0 000\nelements 1\n0 0 1 1 0 0\nend\n";
        std::fs::write(&path, text).unwrap();
        let err = load_mesh::<f64>(&path);
        assert!(matches!(err, Err(crate::Error::Validation(_))));
    }

    #[test]
    fn empty_element_list_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.mesh");
        let text = "mempat mesh 1\nunits m kN\nnodes 3\n0 0 0 0 000\n1 1 0 0 000\n2 0 1 0 000\nelements 0\nend\n";
        std::fs::write(&path, text).unwrap();
        assert!(load_mesh::<f64>(&path).is_err());
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("garbled.mesh");
        let text = "mempat mesh 1\nunits m kN\nnodes 1\n0 0 oops 0 000\n";
        std::fs::write(&path, text).unwrap();
        match load_mesh::<f64>(&path) {
            Err(crate::Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn pattern_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sheet.pattern");
        let sheet = PatternSheet {
            nodes2d: vec![[0.0_f64, 0.0], [1.0, 0.0], [0.25, 0.75]],
            elements: vec![Triangle {
                nodes: [0, 1, 2],
                material_angle: -0.3,
            }],
            surface_nodes: vec![4, 7, 8],
            sheet_id: 1,
            bounds2d: None,
        };
        save_pattern(&sheet, &path).unwrap();
        let back: PatternSheet<f64> = load_pattern(&path).unwrap();
        assert_eq!(sheet.nodes2d, back.nodes2d);
        assert_eq!(back.sheet_id, 1);
        assert_eq!(back.elements[0].material_angle, -0.3);
    }
}
