//! Raw little-endian volume files with a key-value sidecar header, and the
//! zero padding that makes arbitrary grids pyramid-compatible.
//!
//! A volume stored at `path` has its payload at `path` and its header at
//! `path.hdr`:
//!
//! ```text
//! role = flow
//! dims = 48,48,48
//! spacing = 1,1,1
//! channels = 3
//! dtype = f32le
//! ```
//!
//! Dims and spacing are listed in (D, H, W) order. The payload is W-fastest;
//! multi-channel data is stored channel-major (one full grid per channel).
//! Pyramid files carry an extra `values` key with the parameter count.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::LabelVolume;
use crate::pyramid::CoefficientPyramid;
use crate::volume::{Dims, ScalarVolume, Spacing, VectorField};

pub const DTYPE: &str = "f32le";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Image,
    Flow,
    Labels,
    Pyramid,
}

impl Role {
    fn name(self) -> &'static str {
        match self {
            Role::Image => "image",
            Role::Flow => "flow",
            Role::Labels => "labels",
            Role::Pyramid => "pyramid",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Role::Image),
            "flow" => Ok(Role::Flow),
            "labels" => Ok(Role::Labels),
            "pyramid" => Ok(Role::Pyramid),
            other => Err(Error::Format(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeHeader {
    pub dims: Dims,
    pub spacing: Spacing,
    pub channels: usize,
    pub role: Role,
}

impl VolumeHeader {
    pub fn new(dims: Dims, spacing: Spacing, channels: usize, role: Role) -> Result<Self> {
        let h = Self { dims, spacing, channels, role };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Format(format!("dims must be positive, got {}", self.dims)));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Format(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if self.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Format(format!("spacing must be positive, got {:?}", self.spacing)));
        }
        Ok(())
    }

    /// Number of stored values.
    pub fn num_values(&self) -> usize {
        match self.role {
            Role::Pyramid => CoefficientPyramid::expected_num_params(self.dims),
            _ => self.channels * self.dims.len(),
        }
    }

    pub fn payload_bytes(&self) -> u64 {
        4 * self.num_values() as u64
    }

    fn render(&self) -> String {
        let [d, h, w] = self.dims.to_array();
        let [sd, sh, sw] = self.spacing;
        let mut out = format!(
            "role = {}\ndims = {d},{h},{w}\nspacing = {sd},{sh},{sw}\nchannels = {}\ndtype = {DTYPE}\n",
            self.role, self.channels
        );
        if self.role == Role::Pyramid {
            out.push_str(&format!("values = {}\n", self.num_values()));
        }
        out
    }

    fn parse(text: &str) -> Result<Self> {
        let mut role = None;
        let mut dims = None;
        let mut spacing = None;
        let mut channels = None;
        let mut dtype = None;
        let mut values = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("header line {line:?} is not key = value")))?;
            let value = value.trim();
            match key.trim() {
                "role" => role = Some(value.parse::<Role>()?),
                "dims" => dims = Some(Dims::from_array(parse_triple::<usize>(value, "dims")?)),
                "spacing" => spacing = Some(parse_triple::<f64>(value, "spacing")?),
                "channels" => channels = Some(parse_one::<usize>(value, "channels")?),
                "dtype" => dtype = Some(value.to_string()),
                "values" => values = Some(parse_one::<usize>(value, "values")?),
                _ => {}
            }
        }
        let missing = |k: &str| Error::Format(format!("header is missing {k:?}"));
        let dtype = dtype.ok_or_else(|| missing("dtype"))?;
        if dtype != DTYPE {
            return Err(Error::Format(format!("unsupported dtype {dtype:?} (expected {DTYPE})")));
        }
        let header = Self::new(
            dims.ok_or_else(|| missing("dims"))?,
            spacing.unwrap_or([1.0; 3]),
            channels.ok_or_else(|| missing("channels"))?,
            role.ok_or_else(|| missing("role"))?,
        )?;
        if let Some(v) = values {
            if v != header.num_values() {
                return Err(Error::Format(format!("header lists {v} values, dims imply {}", header.num_values())));
            }
        }
        Ok(header)
    }
}

fn parse_one<T: FromStr>(s: &str, key: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Format(format!("bad {key} value {s:?}")))
}

fn parse_triple<T: FromStr + Copy>(s: &str, key: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Format(format!("{key} needs three comma-separated values, got {s:?}")));
    }
    Ok([parse_one(parts[0], key)?, parse_one(parts[1], key)?, parse_one(parts[2], key)?])
}

pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Writes `data` (narrowed to f32) and its header.
pub fn write_volume(path: &Path, header: &VolumeHeader, data: &[f64]) -> Result<()> {
    header.validate()?;
    if data.len() != header.num_values() {
        return Err(Error::Shape(format!("header implies {} values, got {}", header.num_values(), data.len())));
    }
    let mut bytes = Vec::with_capacity(4 * data.len());
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    let mut f = fs::File::create(header_path(path))?;
    f.write_all(header.render().as_bytes())?;
    Ok(())
}

pub fn read_header(path: &Path) -> Result<VolumeHeader> {
    let hdr = header_path(path);
    let text = fs::read_to_string(&hdr)
        .map_err(|e| Error::Format(format!("cannot read header {}: {e}", hdr.display())))?;
    VolumeHeader::parse(&text)
}

pub fn read_volume(path: &Path) -> Result<(VolumeHeader, Vec<f64>)> {
    let header = read_header(path)?;
    let bytes = fs::read(path)?;
    let expected = header.payload_bytes();
    if bytes.len() as u64 != expected {
        return Err(Error::Corrupt { path: path.to_path_buf(), expected, actual: bytes.len() as u64 });
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    Ok((header, data))
}

fn expect_layout(path: &Path, header: &VolumeHeader, channels: usize, roles: &[Role]) -> Result<()> {
    if header.channels != channels || !roles.contains(&header.role) {
        return Err(Error::Format(format!(
            "{} holds a {}-channel {} volume, expected {channels} channel(s) as {}",
            path.display(),
            header.channels,
            header.role,
            roles.iter().map(|r| r.name()).collect::<Vec<_>>().join("/")
        )));
    }
    Ok(())
}

pub fn write_image(path: &Path, vol: &ScalarVolume) -> Result<()> {
    write_volume(path, &VolumeHeader::new(vol.dims(), vol.spacing(), 1, Role::Image)?, vol.data())
}

/// Reads any single-channel file (image or labels) as intensities.
pub fn read_image(path: &Path) -> Result<ScalarVolume> {
    let (header, data) = read_volume(path)?;
    expect_layout(path, &header, 1, &[Role::Image, Role::Labels])?;
    ScalarVolume::new(header.dims, header.spacing, data)
}

pub fn write_labels(path: &Path, labels: &LabelVolume) -> Result<()> {
    let vol = labels.to_volume();
    write_volume(path, &VolumeHeader::new(vol.dims(), vol.spacing(), 1, Role::Labels)?, vol.data())
}

pub fn read_labels(path: &Path) -> Result<LabelVolume> {
    LabelVolume::from_volume(&read_image(path)?)
}

pub fn write_field(path: &Path, field: &VectorField) -> Result<()> {
    let header = VolumeHeader::new(field.dims(), field.spacing(), 3, Role::Flow)?;
    write_volume(path, &header, &field.channels().concat())
}

pub fn read_field(path: &Path) -> Result<VectorField> {
    let (header, data) = read_volume(path)?;
    expect_layout(path, &header, 3, &[Role::Flow])?;
    let n = header.dims.len();
    let channels = [data[..n].to_vec(), data[n..2 * n].to_vec(), data[2 * n..].to_vec()];
    VectorField::new(header.dims, header.spacing, channels)
}

pub fn write_pyramid(path: &Path, p: &CoefficientPyramid) -> Result<()> {
    let header = VolumeHeader::new(p.full_dims(), [1.0; 3], 1, Role::Pyramid)?;
    write_volume(path, &header, &p.to_flat())
}

pub fn read_pyramid(path: &Path) -> Result<CoefficientPyramid> {
    let (header, data) = read_volume(path)?;
    expect_layout(path, &header, 1, &[Role::Pyramid])?;
    CoefficientPyramid::from_flat(header.dims, &data)
}

/// Placement of an original grid inside its padded version.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRecord {
    pub original: Dims,
    pub padded: Dims,
    /// Leading pad per axis, (D, H, W).
    pub offset: [usize; 3],
}

impl CropRecord {
    pub fn is_empty(&self) -> bool {
        self.original == self.padded
    }

    fn crop_data(&self, data: &[f64]) -> Vec<f64> {
        let [od, oh, ow] = self.offset;
        let mut out = Vec::with_capacity(self.original.len());
        for (d, h, w) in self.original.iter() {
            out.push(data[self.padded.index(d + od, h + oh, w + ow)]);
        }
        out
    }

    pub fn crop(&self, vol: &ScalarVolume) -> Result<ScalarVolume> {
        self.check(vol.dims())?;
        ScalarVolume::new(self.original, vol.spacing(), self.crop_data(vol.data()))
    }

    pub fn crop_field(&self, field: &VectorField) -> Result<VectorField> {
        self.check(field.dims())?;
        let [a, b, c] = field.channels();
        VectorField::new(
            self.original,
            field.spacing(),
            [self.crop_data(a), self.crop_data(b), self.crop_data(c)],
        )
    }

    fn check(&self, dims: Dims) -> Result<()> {
        if dims != self.padded {
            return Err(Error::Shape(format!("crop expects {} input, got {dims}", self.padded)));
        }
        Ok(())
    }
}

/// Zero-pads every axis symmetrically up to the next multiple of `m`; the
/// odd voxel, if any, goes after the data.
pub fn pad_to_multiple(vol: &ScalarVolume, m: usize) -> Result<(ScalarVolume, CropRecord)> {
    if m == 0 {
        return Err(Error::Config("padding multiple must be positive".into()));
    }
    let original = vol.dims();
    let padded = original.map(|n| n.div_ceil(m) * m);
    let o = original.to_array();
    let p = padded.to_array();
    let offset = [(p[0] - o[0]) / 2, (p[1] - o[1]) / 2, (p[2] - o[2]) / 2];
    let record = CropRecord { original, padded, offset };
    if record.is_empty() {
        return Ok((vol.clone(), record));
    }
    let mut data = vec![0.0; padded.len()];
    for (i, (d, h, w)) in original.iter().enumerate() {
        data[padded.index(d + offset[0], h + offset[1], w + offset[2])] = vol.data()[i];
    }
    Ok((ScalarVolume::new(padded, vol.spacing(), data)?, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pyramid::init_pyramid;
    use crate::wavelet::Subband;

    fn ramp(dims: Dims) -> ScalarVolume {
        ScalarVolume::from_fn(dims, |d, h, w| (d * 100 + h * 10 + w) as f64 * 0.25)
    }

    #[test]
    fn one_is_00_00_80_3f() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.raw");
        let vol = ScalarVolume::new(Dims::cube(1), [1.0; 3], vec![1.0]).unwrap();
        write_image(&path, &vol).unwrap();
        assert_eq!(fs::read(&path).unwrap(), vec![0x00, 0x00, 0x80, 0x3F]);
    }

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let dims = Dims::new(3, 4, 5);
        let img = ramp(dims).with_spacing([1.2, 0.5, 2.0]);
        let path = dir.path().join("img.raw");
        write_image(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);

        let field = VectorField::from_fn(dims, |d, h, w| [w as f64 * 0.5, -(h as f64), d as f64 + 0.125]);
        let fpath = dir.path().join("flow.raw");
        write_field(&fpath, &field).unwrap();
        assert_eq!(read_field(&fpath).unwrap(), field);
        let (header, _) = read_volume(&fpath).unwrap();
        assert_eq!(header.role, Role::Flow);
        assert_eq!(header.channels, 3);

        let mut p = init_pyramid(Dims::cube(8)).unwrap();
        p.phi1.band_mut(Subband::from_index(3))[1] = 0.75;
        p.gates3[2].b = -1.5;
        let ppath = dir.path().join("p.raw");
        write_pyramid(&ppath, &p).unwrap();
        assert_eq!(read_pyramid(&ppath).unwrap(), p);
    }

    #[test]
    fn short_payload_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.raw");
        write_image(&path, &ramp(Dims::cube(2))).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        match read_image(&path) {
            Err(Error::Corrupt { expected, actual, .. }) => assert_eq!((expected, actual), (32, 31)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_problems_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.raw");
        fs::write(&path, [0u8; 4]).unwrap();
        assert!(matches!(read_image(&path), Err(Error::Format(_))));
        fs::write(header_path(&path), "role = image\ndims = 1,1,1\nchannels = 1\ndtype = f64le\n").unwrap();
        assert!(matches!(read_image(&path), Err(Error::Format(_))));
        fs::write(header_path(&path), "role = image\ndims = 1,1\nchannels = 1\ndtype = f32le\n").unwrap();
        assert!(matches!(read_image(&path), Err(Error::Format(_))));
        fs::write(header_path(&path), "role = image\ndims = 1,1,1\nchannels = 1\ndtype = f32le\n").unwrap();
        assert_eq!(read_image(&path).unwrap().data(), &[0.0]);
        assert!(matches!(read_field(&path), Err(Error::Format(_))));
    }

    #[test]
    fn padding_cases() {
        let v = ramp(Dims::cube(16));
        let (p, rec) = pad_to_multiple(&v, 8).unwrap();
        assert!(rec.is_empty());
        assert_eq!(p, v);

        let v = ramp(Dims::new(15, 17, 16));
        let (p, rec) = pad_to_multiple(&v, 8).unwrap();
        assert_eq!(p.dims(), Dims::new(16, 24, 16));
        assert_eq!(rec.offset, [0, 3, 0]);
        assert_eq!(p.get(0, 3, 0), v.get(0, 0, 0));
        assert_eq!(p.get(15, 23, 15), 0.0);
        assert_eq!(rec.crop(&p).unwrap(), v);
        let field = VectorField::from_fn(p.dims(), |d, h, w| [d as f64, h as f64, w as f64]);
        let cropped = rec.crop_field(&field).unwrap();
        assert_eq!(cropped.dims(), v.dims());
        assert_eq!(cropped.at(0), [0.0, 3.0, 0.0]);
        assert!(matches!(rec.crop(&v), Err(Error::Shape(_))));
    }
}
