//! On-disk grid fields and corrector manifests.
//!
//! A field is a JSON header plus a sibling binary payload of little-endian
//! `f64` values, one block of `N^d` values per component, each block
//! row-major with the first axis slowest.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cell::correctors::CorrectorTable;
use crate::cell::field::CoefficientField;
use crate::cell::grid::MAX_N;
use crate::error::{Error, Result};
use crate::polyalg::json::{tensor_real_from_value, tensor_real_to_value};
use crate::polyalg::multi_index::MultiIndex;

/// Largest header or manifest accepted, in bytes.
pub const MAX_HEADER_BYTES: u64 = 16 << 20;
/// Largest payload accepted, in bytes.
pub const MAX_PAYLOAD_BYTES: u64 = 8 << 30;
/// Largest number of components in one file.
pub const MAX_COMPONENTS: usize = 4096;

pub const MANIFEST_FORMAT: &str = "homog-uc-correctors";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Coefficients,
    Corrector,
    /// Samples of a function on a finite window (not periodic).
    Window,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub kind: FieldKind,
    pub order: u32,
    pub components: Vec<Vec<u32>>,
    pub payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
}

fn bad(label: &str, msg: impl Into<String>) -> Error {
    Error::Format {
        file: label.to_string(),
        msg: msg.into(),
    }
}

/// The coefficient components `e_i + e_j`, `i ≤ j`, in canonical order.
pub fn coefficient_components(d: usize) -> Vec<MultiIndex> {
    MultiIndex::all_of_order(d, 2)
}

fn plain_file_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && !name.contains(['/', '\\', '\0'])
        && Path::new(name).file_name().is_some_and(|f| f == name)
}

impl FieldHeader {
    /// Checks every structural invariant; never allocates in proportion to `N`.
    pub fn validate(&self, label: &str) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(bad(label, format!("d = {} not in 1..=3", self.d)));
        }
        if !(2..=MAX_N).contains(&self.n) {
            return Err(bad(label, format!("N = {} not in 2..={MAX_N}", self.n)));
        }
        if self.components.is_empty() || self.components.len() > MAX_COMPONENTS {
            return Err(bad(label, format!("{} components", self.components.len())));
        }
        if !plain_file_name(&self.payload) {
            return Err(bad(
                label,
                format!("payload {:?} is not a plain file name", self.payload),
            ));
        }
        let mut seen = HashSet::new();
        for c in &self.components {
            if c.len() != self.d {
                return Err(bad(
                    label,
                    format!("component {c:?} has length {} but d = {}", c.len(), self.d),
                ));
            }
            let o: u64 = c.iter().map(|&x| x as u64).sum();
            if o != self.order as u64 {
                return Err(bad(
                    label,
                    format!("component {c:?} does not have order {}", self.order),
                ));
            }
            if !seen.insert(c.clone()) {
                return Err(bad(label, format!("duplicate component {c:?}")));
            }
        }
        match self.kind {
            FieldKind::Coefficients => {
                let want: Vec<Vec<u32>> = coefficient_components(self.d)
                    .into_iter()
                    .map(|a| a.entries().to_vec())
                    .collect();
                if self.order != 2 || self.components != want {
                    return Err(bad(
                        label,
                        "coefficient files list the components e_i+e_j (i <= j) in canonical order",
                    ));
                }
                if let Some(l) = self.lambda {
                    if !(l.is_finite() && l >= 1.0) {
                        return Err(bad(label, format!("lambda = {l} must be finite and >= 1")));
                    }
                }
            }
            FieldKind::Corrector => {}
            FieldKind::Window => {
                match &self.origin {
                    Some(o) if o.len() == self.d && o.iter().all(|v| v.is_finite()) => {}
                    _ => return Err(bad(label, "window fields need a finite origin of length d")),
                }
                match self.spacing {
                    Some(s) if s.is_finite() && s > 0.0 => {}
                    _ => return Err(bad(label, "window fields need a positive spacing")),
                }
            }
        }
        if self.kind != FieldKind::Window && (self.origin.is_some() || self.spacing.is_some()) {
            return Err(bad(
                label,
                "origin/spacing are only valid for window fields",
            ));
        }
        if self.kind != FieldKind::Coefficients && self.lambda.is_some() {
            return Err(bad(label, "lambda is only valid for coefficient fields"));
        }
        self.payload_bytes(label)?;
        Ok(())
    }

    pub fn cells(&self) -> Option<u64> {
        (self.n as u64).checked_pow(self.d as u32)
    }

    /// Exact payload size implied by the header.
    pub fn payload_bytes(&self, label: &str) -> Result<u64> {
        let bytes = self
            .cells()
            .and_then(|c| c.checked_mul(self.components.len() as u64))
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| bad(label, "payload size overflows"))?;
        if bytes > MAX_PAYLOAD_BYTES {
            return Err(bad(
                label,
                format!("payload of {bytes} bytes exceeds the limit"),
            ));
        }
        Ok(bytes)
    }
}

pub fn parse_field_header(text: &str, label: &str) -> Result<FieldHeader> {
    let h: FieldHeader = serde_json::from_str(text).map_err(|e| bad(label, e.to_string()))?;
    h.validate(label)?;
    Ok(h)
}

/// Splits a payload into per-component blocks, checking its length first.
pub fn decode_payload(header: &FieldHeader, bytes: &[u8], label: &str) -> Result<Vec<Vec<f64>>> {
    let want = header.payload_bytes(label)?;
    if bytes.len() as u64 != want {
        return Err(bad(
            label,
            format!("payload has {} bytes, header implies {want}", bytes.len()),
        ));
    }
    let cells = header.cells().unwrap() as usize;
    let mut out = Vec::with_capacity(header.components.len());
    for block in bytes.chunks_exact(cells * 8) {
        let v: Vec<f64> = block
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(bad(
                label,
                format!("non-finite value at component {} cell {i}", out.len()),
            ));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn encode_payload(blocks: &[&[f64]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(blocks.iter().map(|b| b.len() * 8).sum());
    for b in blocks {
        for v in *b {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        file: path.display().to_string(),
        source,
    }
}

fn read_limited(path: &Path, limit: u64) -> Result<Vec<u8>> {
    let meta = fs::metadata(path).map_err(|e| io_err(path, e))?;
    if meta.len() > limit {
        return Err(bad(
            &path.display().to_string(),
            format!("file of {} bytes exceeds the limit", meta.len()),
        ));
    }
    fs::read(path).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>.bin`; returns the header path.
pub fn write_field(
    dir: &Path,
    stem: &str,
    header: &FieldHeader,
    blocks: &[&[f64]],
) -> Result<PathBuf> {
    let label = dir.join(format!("{stem}.json")).display().to_string();
    let mut header = header.clone();
    header.payload = format!("{stem}.bin");
    header.validate(&label)?;
    let cells = header.cells().unwrap() as usize;
    if blocks.len() != header.components.len() || blocks.iter().any(|b| b.len() != cells) {
        return Err(bad(&label, "data does not match header"));
    }
    let json_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&header).expect("serializable") + "\n";
    write_file(&json_path, text.as_bytes())?;
    write_file(&dir.join(&header.payload), &encode_payload(blocks))?;
    Ok(json_path)
}

/// Reads a header and its payload; errors name the offending file.
pub fn read_field(header_path: &Path) -> Result<(FieldHeader, Vec<Vec<f64>>)> {
    let label = header_path.display().to_string();
    let text = read_limited(header_path, MAX_HEADER_BYTES)?;
    let text = String::from_utf8(text).map_err(|_| bad(&label, "header is not UTF-8"))?;
    let header = parse_field_header(&text, &label)?;
    let dir = header_path.parent().unwrap_or(Path::new("."));
    let payload_path = dir.join(&header.payload);
    let plabel = payload_path.display().to_string();
    let want = header.payload_bytes(&plabel)?;
    let bytes = read_limited(&payload_path, want)?;
    let blocks = decode_payload(&header, &bytes, &plabel)?;
    Ok((header, blocks))
}

pub fn coefficient_header(field: &CoefficientField) -> FieldHeader {
    FieldHeader {
        d: field.dim(),
        n: field.n(),
        kind: FieldKind::Coefficients,
        order: 2,
        components: coefficient_components(field.dim())
            .into_iter()
            .map(|a| a.entries().to_vec())
            .collect(),
        payload: "coefficients.bin".into(),
        lambda: Some(field.lambda()),
        origin: None,
        spacing: None,
    }
}

pub fn write_coefficients(dir: &Path, stem: &str, field: &CoefficientField) -> Result<PathBuf> {
    let d = field.dim();
    let blocks: Vec<Vec<f64>> = coefficient_components(d)
        .iter()
        .map(|a| {
            let nz: Vec<usize> = (0..d).filter(|&i| a.get(i) > 0).collect();
            let (i, j) = if nz.len() == 1 {
                (nz[0], nz[0])
            } else {
                (nz[0], nz[1])
            };
            field.component(i, j)
        })
        .collect();
    let refs: Vec<&[f64]> = blocks.iter().map(|b| b.as_slice()).collect();
    write_field(dir, stem, &coefficient_header(field), &refs)
}

pub fn read_coefficients(header_path: &Path) -> Result<CoefficientField> {
    let (h, blocks) = read_field(header_path)?;
    let label = header_path.display().to_string();
    if h.kind != FieldKind::Coefficients {
        return Err(bad(&label, "not a coefficient field"));
    }
    let d = h.d;
    let cells = blocks[0].len();
    let mut values = vec![0.0; cells * d * d];
    for (a, b) in coefficient_components(d).iter().zip(&blocks) {
        let nz: Vec<usize> = (0..d).filter(|&i| a.get(i) > 0).collect();
        let (i, j) = if nz.len() == 1 {
            (nz[0], nz[0])
        } else {
            (nz[0], nz[1])
        };
        for c in 0..cells {
            values[c * d * d + i * d + j] = b[c];
            values[c * d * d + j * d + i] = b[c];
        }
    }
    let f = match h.lambda {
        Some(l) => CoefficientField::new(d, h.n, l, values),
        None => CoefficientField::with_auto_lambda(d, h.n, values),
    };
    f.map_err(|e| bad(&label, e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderEntry {
    pub m: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub m_max: usize,
    pub solver_tol: f64,
    pub coefficients: String,
    pub orders: Vec<OrderEntry>,
    /// `ā_0..ā_{m_max}` in the polynomial-tensor JSON form.
    pub abar: Vec<serde_json::Value>,
}

pub fn parse_manifest(text: &str, label: &str) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| bad(label, e.to_string()))?;
    if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
        return Err(bad(
            label,
            format!("unsupported manifest {} v{}", m.format, m.version),
        ));
    }
    if !(1..=3).contains(&m.d) || !(2..=MAX_N).contains(&m.n) {
        return Err(bad(label, "bad grid shape"));
    }
    if m.m_max > crate::cell::correctors::MAX_ORDER {
        return Err(bad(label, format!("m_max = {} too large", m.m_max)));
    }
    if !(m.solver_tol > 0.0 && m.solver_tol < 1.0) {
        return Err(bad(label, "solver_tol must be in (0, 1)"));
    }
    if !plain_file_name(&m.coefficients) {
        return Err(bad(label, "coefficients is not a plain file name"));
    }
    let want: Vec<usize> = (1..=m.m_max).collect();
    let have: Vec<usize> = m.orders.iter().map(|o| o.m).collect();
    if have != want {
        return Err(bad(label, format!("orders {have:?}, expected {want:?}")));
    }
    if m.orders.iter().any(|o| !plain_file_name(&o.file)) {
        return Err(bad(label, "order file is not a plain file name"));
    }
    if m.abar.len() != m.m_max + 1 {
        return Err(bad(
            label,
            format!("{} tensors for m_max = {}", m.abar.len(), m.m_max),
        ));
    }
    for (i, v) in m.abar.iter().enumerate() {
        let t = tensor_real_from_value(v, label)?;
        if t.order() as usize != i || t.dim() != m.d {
            return Err(bad(label, format!("tensor {i} has the wrong shape")));
        }
    }
    Ok(m)
}

/// Writes the coefficient field, one field file per corrector order, and `manifest.json`.
pub fn write_table(dir: &Path, table: &CorrectorTable) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let coef = write_coefficients(dir, "coefficients", table.field())?;
    let mut orders = Vec::new();
    for m in 1..=table.m_max() {
        let comps = table.components(m);
        let header = FieldHeader {
            d: table.dim(),
            n: table.n(),
            kind: FieldKind::Corrector,
            order: m as u32,
            components: comps.iter().map(|a| a.entries().to_vec()).collect(),
            payload: String::new(),
            lambda: None,
            origin: None,
            spacing: None,
        };
        let blocks: Vec<&[f64]> = table.phi_order(m).iter().map(|v| v.as_slice()).collect();
        let stem = format!("phi_{m}");
        write_field(
            dir,
            &stem,
            &FieldHeader {
                payload: format!("{stem}.bin"),
                ..header
            },
            &blocks,
        )?;
        orders.push(OrderEntry {
            m,
            file: format!("{stem}.json"),
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        d: table.dim(),
        n: table.n(),
        m_max: table.m_max(),
        solver_tol: table.tol(),
        coefficients: coef.file_name().unwrap().to_string_lossy().into_owned(),
        orders,
        abar: table.abar_all().iter().map(tensor_real_to_value).collect(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

pub fn read_table(manifest_path: &Path) -> Result<CorrectorTable> {
    let label = manifest_path.display().to_string();
    let text = read_limited(manifest_path, MAX_HEADER_BYTES)?;
    let text = String::from_utf8(text).map_err(|_| bad(&label, "manifest is not UTF-8"))?;
    let m = parse_manifest(&text, &label)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let field = read_coefficients(&dir.join(&m.coefficients))?;
    if field.dim() != m.d || field.n() != m.n {
        return Err(bad(&label, "coefficient field does not match the manifest"));
    }
    let cells = field.num_cells();
    let mut phi = vec![vec![vec![1.0; cells]]];
    for o in &m.orders {
        let path = dir.join(&o.file);
        let plabel = path.display().to_string();
        let (h, blocks) = read_field(&path)?;
        let want: Vec<Vec<u32>> = MultiIndex::all_of_order(m.d, o.m as u32)
            .into_iter()
            .map(|a| a.entries().to_vec())
            .collect();
        if h.kind != FieldKind::Corrector
            || h.order as usize != o.m
            || h.d != m.d
            || h.n != m.n
            || h.components != want
        {
            return Err(bad(&plabel, "corrector file does not match the manifest"));
        }
        phi.push(blocks);
    }
    let abar = m
        .abar
        .iter()
        .map(|v| tensor_real_from_value(v, &label))
        .collect::<Result<Vec<_>>>()?;
    CorrectorTable::from_parts(field, m.m_max, m.solver_tol, phi, abar)
}
