//! Dataset ingestion, synthetic targets and the on-disk containers.
//!
//! Three little-endian containers live here:
//!
//! * `CMID` datasets: header, then per sample a label byte, the clean image
//!   and the interleaved complex measurement.
//! * `CMIM` sensing matrices: dimensions followed by interleaved entries.
//! * binary PGM (`P5`) image dumps.
//!
//! MNIST IDX files are big-endian and are converted on ingestion.

use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::binio::{len_u32, put_f64s, put_u32, put_u64, read_file, write_file, Reader};
use crate::error::{Error, Result};
use crate::forward_model::{forward_measure, ComplexMatrix, NormStats};
use crate::metrics::NUM_CLASSES;
use crate::tensor::Tensor;

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Images as flat row-major `[0, 1]` buffers of 784 pixels.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let mut r = Reader::new(bytes);
    let magic = r.u32_be("IDX magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            0,
            format!("IDX image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = r.u32_be("image count")? as usize;
    let rows_at = r.pos();
    let rows = r.u32_be("row count")? as usize;
    let cols = r.u32_be("column count")? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(Error::format(
            rows_at,
            format!("images are {rows}x{cols}, expected 28x28"),
        ));
    }
    let need = count.saturating_mul(IMAGE_PIXELS);
    if r.remaining() < need {
        return Err(Error::format(
            r.pos(),
            format!(
                "truncated pixels: header declares {count} images, {} bytes left",
                r.remaining()
            ),
        ));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let px = r.take(IMAGE_PIXELS, "pixels")?;
        out.push(px.iter().map(|&b| b as f64 / 255.0).collect());
    }
    r.expect_end("pixel data")?;
    Ok(out)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader::new(bytes);
    let magic = r.u32_be("IDX magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            0,
            format!("IDX label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let count = r.u32_be("label count")? as usize;
    let start = r.pos();
    let labels = r.take(count, "labels")?.to_vec();
    if let Some(i) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
        return Err(Error::format(start + i, format!("label {} out of range", labels[i])));
    }
    r.expect_end("label data")?;
    Ok(labels)
}

/// 5x7 block digits, one row per string.
const FONT: [[&str; 7]; 10] = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
];

/// Glyph height and width ranges (inclusive).
const GLYPH_H: (usize, usize) = (14, 22);
const GLYPH_W: (usize, usize) = (10, 16);

fn render_glyph(digit: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let h = rng.gen_range(GLYPH_H.0..=GLYPH_H.1);
    let w = rng.gen_range(GLYPH_W.0..=GLYPH_W.1);
    let y0 = rng.gen_range(0..=IMAGE_SIDE - h);
    let x0 = rng.gen_range(0..=IMAGE_SIDE - w);
    let mut img = vec![0.0; IMAGE_PIXELS];
    let font = &FONT[digit];
    for i in 0..h {
        let row = font[i * 7 / h].as_bytes();
        for j in 0..w {
            if row[j * 5 / w] == b'1' {
                img[(y0 + i) * IMAGE_SIDE + x0 + j] = 1.0;
            }
        }
    }
    img
}

/// Block-digit targets at random scale and position, with labels spread
/// evenly over the classes in a seeded order.
pub fn synth_targets(count: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    if count == 0 {
        return Err(Error::contract("synth_targets needs count >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<u8> = (0..count).map(|i| (i % NUM_CLASSES) as u8).collect();
    labels.shuffle(&mut rng);
    let images = labels.iter().map(|&l| render_glyph(l as usize, &mut rng)).collect();
    Ok((images, labels))
}

/// One measurement / image / class triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub g: Vec<Complex64>,
    pub rho: Vec<f64>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub m: usize,
    pub n: usize,
    pub count: usize,
    pub snr_db: Option<f64>,
    /// [`matrix_hash`] of the sensing matrix used to simulate the samples.
    pub h_hash: [u8; 32],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

const CMID_MAGIC: &[u8; 4] = b"CMID";
const CMID_VERSION: u32 = 1;
const CMIM_MAGIC: &[u8; 4] = b"CMIM";
const CMIM_VERSION: u32 = 1;

/// SHA-256 over the `CMIM` encoding of `h`.
pub fn matrix_hash(h: &ComplexMatrix) -> [u8; 32] {
    Sha256::digest(encode_matrix(h)).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Simulates `g = H rho (+ noise)` for every image. Sample `i` draws its
/// noise from `seed ^ i`, so the result does not depend on processing order.
pub fn build_dataset(
    images: &[Vec<f64>],
    labels: &[u8],
    h: &ComplexMatrix,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<Dataset> {
    if images.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} images for {} labels",
            images.len(),
            labels.len()
        )));
    }
    if images.is_empty() {
        return Err(Error::contract("dataset needs at least one sample"));
    }
    if h.cols() != IMAGE_PIXELS {
        return Err(Error::dim(format!(
            "sensing matrix has {} columns, images have {IMAGE_PIXELS} pixels",
            h.cols()
        )));
    }
    let mut samples = Vec::with_capacity(images.len());
    for (i, (img, &label)) in images.iter().zip(labels).enumerate() {
        if img.len() != IMAGE_PIXELS {
            return Err(Error::dim(format!("image {i} has {} pixels", img.len())));
        }
        if label as usize >= NUM_CLASSES {
            return Err(Error::contract(format!("label {label} of sample {i} out of range")));
        }
        let g = forward_measure(h, img, snr_db, seed ^ i as u64)?;
        samples.push(Sample {
            g,
            rho: img.clone(),
            label,
        });
    }
    Ok(Dataset {
        header: DatasetHeader {
            version: CMID_VERSION,
            m: h.rows(),
            n: h.cols(),
            count: samples.len(),
            snr_db,
            h_hash: matrix_hash(h),
            seed,
        },
        samples,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn sample_bytes(m: usize, n: usize) -> usize {
        1 + 8 * n + 16 * m
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let mut out = Vec::with_capacity(68 + self.len() * Self::sample_bytes(h.m, h.n));
        out.extend_from_slice(CMID_MAGIC);
        put_u32(&mut out, h.version);
        put_u32(&mut out, len_u32(h.m, "M")?);
        put_u32(&mut out, len_u32(h.n, "N")?);
        put_u32(&mut out, len_u32(self.samples.len(), "sample count")?);
        out.extend_from_slice(&h.snr_db.unwrap_or(f64::NAN).to_le_bytes());
        out.extend_from_slice(&h.h_hash);
        put_u64(&mut out, h.seed);
        for (i, s) in self.samples.iter().enumerate() {
            if s.rho.len() != h.n || s.g.len() != h.m {
                return Err(Error::dim(format!(
                    "sample {i} does not match header dims {}x{}",
                    h.m, h.n
                )));
            }
            out.push(s.label);
            put_f64s(&mut out, &s.rho);
            for z in &s.g {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Validates the header against the payload length before decoding any
    /// sample.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4, "magic")?;
        if magic != CMID_MAGIC {
            return Err(Error::format(0, format!("bad magic {magic:?}, expected \"CMID\"")));
        }
        let version = r.u32_le("version")?;
        if version != CMID_VERSION {
            return Err(Error::format(4, format!("unsupported dataset version {version}")));
        }
        let m = r.u32_le("M")? as usize;
        let n = r.u32_le("N")? as usize;
        let count = r.u32_le("sample count")? as usize;
        let snr = r.f64_le("snr")?;
        let h_hash: [u8; 32] = r.take(32, "matrix hash")?.try_into().unwrap();
        let seed = r.u64_le("seed")?;
        let expect = (count as u128) * (Self::sample_bytes(m, n) as u128);
        if expect != r.remaining() as u128 {
            return Err(Error::format(
                r.pos(),
                format!(
                    "payload is {} bytes, header ({count} samples of M={m}, N={n}) implies {expect}",
                    r.remaining()
                ),
            ));
        }
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let at = r.pos();
            let label = r.u8("label")?;
            if label as usize >= NUM_CLASSES {
                return Err(Error::format(at, format!("label {label} out of range")));
            }
            let rho = r.f64s_le(n, "image")?;
            let g = r.f64s_le(2 * m, "measurement")?;
            samples.push(Sample {
                g: g.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
                rho,
                label,
            });
        }
        Ok(Dataset {
            header: DatasetHeader {
                version,
                m,
                n,
                count,
                snr_db: if snr.is_nan() { None } else { Some(snr) },
                h_hash,
                seed,
            },
            samples,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        Self::from_bytes(&bytes)
    }

    /// Errors unless `h` is the matrix recorded in the header.
    pub fn check_matrix(&self, h: &ComplexMatrix) -> Result<()> {
        let got = matrix_hash(h);
        if got != self.header.h_hash {
            return Err(Error::contract(format!(
                "dataset was built with matrix {}, got {}",
                hex(&self.header.h_hash),
                hex(&got)
            )));
        }
        Ok(())
    }

    /// Interleaved `[re, im]` measurement of one sample.
    pub fn measurement(&self, i: usize) -> Vec<f64> {
        self.samples[i].g.iter().flat_map(|z| [z.re, z.im]).collect()
    }

    /// Normalized measurements `[batch, M, 2]`, images `[batch, side, side]`
    /// and labels for the selected samples.
    pub fn batch(&self, idx: &[usize], stats: &NormStats) -> Result<(Tensor, Tensor, Vec<usize>)> {
        let (m, n) = (self.header.m, self.header.n);
        let side = (n as f64).sqrt() as usize;
        if side * side != n {
            return Err(Error::dim(format!("{n} pixels is not a square image")));
        }
        let mut x = Vec::with_capacity(idx.len() * 2 * m);
        let mut y = Vec::with_capacity(idx.len() * n);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            let s = self
                .samples
                .get(i)
                .ok_or_else(|| Error::contract(format!("sample index {i} out of range")))?;
            stats.apply_interleaved(&self.measurement(i), &mut x);
            y.extend_from_slice(&s.rho);
            labels.push(s.label as usize);
        }
        Ok((
            Tensor::new(&[idx.len(), m, 2], x)?,
            Tensor::new(&[idx.len(), side, side], y)?,
            labels,
        ))
    }
}

pub fn encode_matrix(h: &ComplexMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 16 * h.data().len());
    out.extend_from_slice(CMIM_MAGIC);
    put_u32(&mut out, CMIM_VERSION);
    put_u32(&mut out, h.rows() as u32);
    put_u32(&mut out, h.cols() as u32);
    for z in h.data() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<ComplexMatrix> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != CMIM_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"CMIM\"")));
    }
    let version = r.u32_le("version")?;
    if version != CMIM_VERSION {
        return Err(Error::format(4, format!("unsupported matrix version {version}")));
    }
    let rows = r.u32_le("rows")? as usize;
    let cols = r.u32_le("cols")? as usize;
    let expect = (rows as u128) * (cols as u128) * 16;
    if expect != r.remaining() as u128 {
        return Err(Error::format(
            r.pos(),
            format!(
                "payload is {} bytes, a {rows}x{cols} matrix needs {expect}",
                r.remaining()
            ),
        ));
    }
    let raw = r.f64s_le(2 * rows * cols, "entries")?;
    let data = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    ComplexMatrix::new(rows, cols, data)
}

pub fn write_matrix(path: &Path, h: &ComplexMatrix) -> Result<()> {
    write_file(path, &encode_matrix(h))
}

pub fn read_matrix(path: &Path) -> Result<ComplexMatrix> {
    decode_matrix(&read_file(path)?)
}

/// Binary greyscale PGM. Values are clamped to `[0, 1]` and scaled to 0..=255.
pub fn encode_pgm(pixels: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    if pixels.len() != width * height || pixels.is_empty() {
        return Err(Error::dim(format!(
            "{} pixels for a {width}x{height} image",
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&v| {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        (v * 255.0).round() as u8
    }));
    Ok(out)
}

pub fn write_pgm(path: &Path, pixels: &[f64], width: usize, height: usize) -> Result<()> {
    write_file(path, &encode_pgm(pixels, width, height)?)
}
