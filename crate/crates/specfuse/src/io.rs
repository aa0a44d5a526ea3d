//! On-disk formats.
//!
//! Spectral cubes are a two-file pair: a TOML header and a raw raster of
//! little-endian 32-bit floats in linear order (row index fastest, then
//! column, then band). Label maps are CSV with one line per image row and
//! 0 for unlabeled pixels. Filter banks are CSV with one line per filter.
//! Pattern cubes reuse the cube pair with a provenance entry recording the
//! filter count. Networks are a flat binary record: shape header, then
//! standardization and parameters as little-endian 64-bit floats.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::classifier::{init_network_layers, MlpNetwork};
use crate::cube::{FilterBank, LabelMap, PatternCube, SpectralCube};
use crate::error::{Error, Result};

pub const CUBE_DTYPE: &str = "f32le";
pub const CUBE_ORDERING: &str = "band-sequential column-major";

const NETWORK_MAGIC: &[u8; 4] = b"MLPN";
const NETWORK_VERSION: u32 = 1;

/// Companion record describing a raw cube raster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubeHeader {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub dtype: String,
    pub ordering: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl CubeHeader {
    pub fn for_cube(cube: &SpectralCube) -> Self {
        CubeHeader {
            rows: cube.rows(),
            cols: cube.cols(),
            bands: cube.bands(),
            dtype: CUBE_DTYPE.into(),
            ordering: CUBE_ORDERING.into(),
            provenance: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.bands == 0 {
            return Err(Error::Data(format!(
                "cube header dimensions must be positive, got {}x{}x{}",
                self.rows, self.cols, self.bands
            )));
        }
        if self.dtype != CUBE_DTYPE {
            return Err(Error::Data(format!(
                "unsupported cube dtype {:?}, expected {CUBE_DTYPE:?}",
                self.dtype
            )));
        }
        if self.ordering != CUBE_ORDERING {
            return Err(Error::Data(format!(
                "unsupported cube ordering {:?}, expected {CUBE_ORDERING:?}",
                self.ordering
            )));
        }
        Ok(())
    }
}

/// Serializes any record as TOML.
pub fn write_toml<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("cannot encode {}: {e}", path.display())))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a TOML record written by `write_toml`.
pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Data(format!("malformed {}: {e}", path.display())))
}

pub fn write_cube(cube: &SpectralCube, header_path: &Path, data_path: &Path) -> Result<()> {
    write_cube_with_provenance(cube, header_path, data_path, BTreeMap::new())
}

pub fn write_cube_with_provenance(
    cube: &SpectralCube,
    header_path: &Path,
    data_path: &Path,
    provenance: BTreeMap<String, String>,
) -> Result<()> {
    let mut header = CubeHeader::for_cube(cube);
    header.provenance = provenance;
    write_toml(&header, header_path)?;
    let mut bytes = Vec::with_capacity(cube.data().len() * 4);
    for &v in cube.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(data_path, bytes).map_err(|e| Error::io(data_path, e))
}

pub fn read_cube_with_header(header_path: &Path, data_path: &Path) -> Result<(SpectralCube, CubeHeader)> {
    let header: CubeHeader = read_toml(header_path)?;
    header.validate()?;
    let expected = header.rows * header.cols * header.bands * 4;
    let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "{}: expected {expected} bytes for a {}x{}x{} cube, found {}",
            data_path.display(),
            header.rows,
            header.cols,
            header.bands,
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let cube = SpectralCube::from_vec(header.rows, header.cols, header.bands, data)?;
    Ok((cube, header))
}

pub fn read_cube(header_path: &Path, data_path: &Path) -> Result<SpectralCube> {
    read_cube_with_header(header_path, data_path).map(|(cube, _)| cube)
}

pub fn write_labels(map: &LabelMap, path: &Path) -> Result<()> {
    let mut text = String::new();
    for m in 0..map.rows() {
        for n in 0..map.cols() {
            if n > 0 {
                text.push(',');
            }
            text.push_str(&map.label(m, n).to_string());
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut grid: Vec<Vec<u32>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let z: u32 = field.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: line {}: {:?} is not a non-negative label",
                    path.display(),
                    i + 1,
                    field.trim()
                ))
            })?;
            row.push(z);
        }
        if let Some(first) = grid.first() {
            if row.len() != first.len() {
                return Err(Error::Data(format!(
                    "{}: line {} has {} fields, expected {}",
                    path.display(),
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        grid.push(row);
    }
    if grid.is_empty() {
        return Err(Error::Data(format!("{}: no label rows", path.display())));
    }
    let rows = grid.len();
    let cols = grid[0].len();
    let mut labels = vec![0u32; rows * cols];
    for (m, row) in grid.iter().enumerate() {
        for (n, &z) in row.iter().enumerate() {
            labels[m + n * rows] = z;
        }
    }
    LabelMap::from_labels(rows, cols, labels)
}

/// One line per filter: comma-separated 0/1 responses across the bands.
pub fn write_bank(bank: &FilterBank, path: &Path) -> Result<()> {
    let mut text = String::new();
    for i in 0..bank.count() {
        for l in 0..bank.bands() {
            if l > 0 {
                text.push(',');
            }
            text.push(if bank.passes(i, l) { '1' } else { '0' });
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_bank(path: &Path) -> Result<FilterBank> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            match field.trim() {
                "0" => row.push(0),
                "1" => row.push(1),
                other => {
                    return Err(Error::Data(format!(
                        "{}: line {}: filter response {:?} is not 0 or 1",
                        path.display(),
                        i + 1,
                        other
                    )))
                }
            }
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Data(format!(
                    "{}: line {} has {} fields, expected {}",
                    path.display(),
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no filters", path.display())));
    }
    let count = rows.len();
    let bands = rows[0].len();
    let mut responses = vec![0u8; bands * count];
    for (i, row) in rows.iter().enumerate() {
        for (l, &v) in row.iter().enumerate() {
            responses[l + i * bands] = v;
        }
    }
    FilterBank::new(bands, count, responses)
}

/// Stores the 1-based filter ids as raster values with the filter count in
/// the header provenance.
pub fn write_patterns(patterns: &PatternCube, header_path: &Path, data_path: &Path) -> Result<()> {
    let data: Vec<f64> = patterns.indices().iter().map(|&v| v as f64).collect();
    let cube = SpectralCube::from_vec(
        patterns.rows(),
        patterns.cols(),
        patterns.snapshots(),
        data,
    )?;
    let mut provenance = BTreeMap::new();
    provenance.insert("kind".into(), "patterns".into());
    provenance.insert(
        "filter_count".into(),
        patterns.filter_count().to_string(),
    );
    write_cube_with_provenance(&cube, header_path, data_path, provenance)
}

pub fn read_patterns(header_path: &Path, data_path: &Path) -> Result<PatternCube> {
    let (cube, header) = read_cube_with_header(header_path, data_path)?;
    let filter_count: usize = header
        .provenance
        .get("filter_count")
        .ok_or_else(|| {
            Error::Data(format!(
                "{}: pattern header lacks a filter_count entry",
                header_path.display()
            ))
        })?
        .parse()
        .map_err(|_| {
            Error::Data(format!(
                "{}: filter_count is not a positive integer",
                header_path.display()
            ))
        })?;
    let mut indices = Vec::with_capacity(cube.data().len());
    for &v in cube.data() {
        let id = v.round();
        if (v - id).abs() > 1e-6 || id < 1.0 {
            return Err(Error::Data(format!(
                "{}: pattern value {v} is not a positive filter id",
                data_path.display()
            )));
        }
        indices.push(id as u32);
    }
    PatternCube::new(
        cube.rows(),
        cube.cols(),
        cube.bands(),
        filter_count,
        indices,
    )
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn take_u32(bytes: &[u8], at: &mut usize, path: &Path) -> Result<u32> {
    if *at + 4 > bytes.len() {
        return Err(Error::Data(format!(
            "{}: truncated network record",
            path.display()
        )));
    }
    let v = u32::from_le_bytes([bytes[*at], bytes[*at + 1], bytes[*at + 2], bytes[*at + 3]]);
    *at += 4;
    Ok(v)
}

fn take_f64s(bytes: &[u8], at: &mut usize, count: usize, path: &Path) -> Result<Vec<f64>> {
    if *at + count * 8 > bytes.len() {
        return Err(Error::Data(format!(
            "{}: truncated network record",
            path.display()
        )));
    }
    let out = bytes[*at..*at + count * 8]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    *at += count * 8;
    Ok(out)
}

pub fn write_network(net: &MlpNetwork, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(NETWORK_MAGIC);
    push_u32(&mut bytes, NETWORK_VERSION);
    let dims = net.layer_dims();
    push_u32(&mut bytes, dims.len() as u32);
    push_u32(&mut bytes, net.input_dim() as u32);
    for &(_, out) in &dims {
        push_u32(&mut bytes, out as u32);
    }
    let (mean, std) = net.standardization();
    for v in mean.iter().chain(std).copied() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in net.parameters() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_network(path: &Path) -> Result<MlpNetwork> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != NETWORK_MAGIC {
        return Err(Error::Data(format!(
            "{}: not a network record",
            path.display()
        )));
    }
    let mut at = 4;
    let version = take_u32(&bytes, &mut at, path)?;
    if version != NETWORK_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported network record version {version}",
            path.display()
        )));
    }
    let layer_count = take_u32(&bytes, &mut at, path)? as usize;
    if layer_count == 0 {
        return Err(Error::Data(format!(
            "{}: network record has no layers",
            path.display()
        )));
    }
    let mut dims = Vec::with_capacity(layer_count + 1);
    dims.push(take_u32(&bytes, &mut at, path)? as usize);
    for _ in 0..layer_count {
        dims.push(take_u32(&bytes, &mut at, path)? as usize);
    }
    let mut net = init_network_layers(&dims, 0)?;
    let input_dim = dims[0];
    let mean = take_f64s(&bytes, &mut at, input_dim, path)?;
    let std = take_f64s(&bytes, &mut at, input_dim, path)?;
    net.set_standardization(mean, std)?;
    let params = take_f64s(&bytes, &mut at, net.parameter_count(), path)?;
    if at != bytes.len() {
        return Err(Error::Data(format!(
            "{}: {} trailing bytes after network record",
            path.display(),
            bytes.len() - at
        )));
    }
    net.set_parameters(&params)?;
    Ok(net)
}
