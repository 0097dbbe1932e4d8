//! Dataset preparation: MNIST IDX loading, downsample/flatten/normalize to
//! input voltages, a synthetic chirp-spread-spectrum generator standing in
//! for captured LoRa RF data, and a generic CSV vector loader.

use num_complex::Complex64;

use crate::crossbar::InputVector;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

const MAGIC_IMAGES: u32 = 0x0000_0803;
const MAGIC_LABELS: u32 = 0x0000_0801;

/// Parsed IDX payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxTensor {
    /// Rank-3 unsigned-byte tensor: `count` images of `height` x `width`.
    Images {
        count: usize,
        height: usize,
        width: usize,
        pixels: Vec<u8>,
    },
    /// Rank-1 unsigned-byte tensor.
    Labels(Vec<u8>),
}

impl IdxTensor {
    /// One image's pixels, row-major.
    pub fn image(&self, index: usize) -> Option<&[u8]> {
        match self {
            IdxTensor::Images {
                count,
                height,
                width,
                pixels,
            } => {
                if index >= *count {
                    return None;
                }
                let size = height * width;
                Some(&pixels[index * size..(index + 1) * size])
            }
            IdxTensor::Labels(_) => None,
        }
    }

    /// Serializes back to IDX bytes; inverse of [`load_idx`].
    pub fn to_idx_bytes(&self) -> Vec<u8> {
        match self {
            IdxTensor::Images {
                count,
                height,
                width,
                pixels,
            } => {
                let mut out = Vec::with_capacity(16 + pixels.len());
                out.extend_from_slice(&MAGIC_IMAGES.to_be_bytes());
                out.extend_from_slice(&(*count as u32).to_be_bytes());
                out.extend_from_slice(&(*height as u32).to_be_bytes());
                out.extend_from_slice(&(*width as u32).to_be_bytes());
                out.extend_from_slice(pixels);
                out
            }
            IdxTensor::Labels(labels) => {
                let mut out = Vec::with_capacity(8 + labels.len());
                out.extend_from_slice(&MAGIC_LABELS.to_be_bytes());
                out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
                out.extend_from_slice(labels);
                out
            }
        }
    }
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "IDX truncated: need {end} header bytes, have {}",
            bytes.len()
        )));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parses big-endian IDX bytes: magic `0x00000803` (unsigned-byte rank-3
/// images) or `0x00000801` (rank-1 labels), then one 32-bit size per
/// dimension, then the payload.
pub fn load_idx(bytes: &[u8]) -> Result<IdxTensor> {
    let magic = read_be_u32(bytes, 0)?;
    match magic {
        MAGIC_IMAGES => {
            let count = read_be_u32(bytes, 4)? as usize;
            let height = read_be_u32(bytes, 8)? as usize;
            let width = read_be_u32(bytes, 12)? as usize;
            let expected = count
                .checked_mul(height)
                .and_then(|v| v.checked_mul(width))
                .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
            let payload = &bytes[16..];
            if payload.len() != expected {
                return Err(Error::Format(format!(
                    "IDX payload is {} bytes, dimensions {count}x{height}x{width} require {expected}",
                    payload.len()
                )));
            }
            Ok(IdxTensor::Images {
                count,
                height,
                width,
                pixels: payload.to_vec(),
            })
        }
        MAGIC_LABELS => {
            let count = read_be_u32(bytes, 4)? as usize;
            let payload = &bytes[8..];
            if payload.len() != count {
                return Err(Error::Format(format!(
                    "IDX payload is {} bytes, header declares {count} labels",
                    payload.len()
                )));
            }
            Ok(IdxTensor::Labels(payload.to_vec()))
        }
        other => Err(Error::Format(format!(
            "bad IDX magic 0x{other:08x} (expected 0x00000803 images or 0x00000801 labels)"
        ))),
    }
}

/// 1-D piecewise-linear resample of a sequence to `target` points with the
/// endpoints preserved. Linear interpolation cannot overshoot, so the
/// output stays inside the input's min/max.
pub fn resample_linear(src: &[f64], target: usize) -> Vec<f64> {
    assert!(!src.is_empty() && target >= 1);
    if src.len() == 1 {
        return vec![src[0]; target];
    }
    if target == 1 {
        return vec![src[0]];
    }
    let scale = (src.len() - 1) as f64 / (target - 1) as f64;
    (0..target)
        .map(|i| {
            let pos = i as f64 * scale;
            let lo = pos.floor() as usize;
            if lo + 1 >= src.len() {
                return src[src.len() - 1];
            }
            let frac = pos - lo as f64;
            src[lo] + frac * (src[lo + 1] - src[lo])
        })
        .collect()
}

/// Flattens an image row-major, scales bytes to [0, 1] by /255, then
/// linearly resamples to `target_rows` values.
pub fn resample_flatten(image: &[u8], target_rows: usize) -> Result<Vec<f64>> {
    if image.is_empty() {
        return Err(Error::Format("cannot resample an empty image".into()));
    }
    if target_rows == 0 {
        return Err(Error::OutOfRange("target_rows must be >= 1".into()));
    }
    let unit: Vec<f64> = image.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(resample_linear(&unit, target_rows))
}

/// Scales a unit-interval vector to drive voltages: `v_i = vec_i * v_read`.
pub fn normalize_to_voltage(vec: &[f64], v_read: f64) -> Result<InputVector> {
    for (i, &x) in vec.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfRange(format!("entry [{i}] = {x} outside [0, 1]")));
        }
    }
    InputVector::new(vec.iter().map(|x| x * v_read).collect(), v_read)
}

/// Chirp-spread-spectrum stream description: `2^sf` samples per symbol,
/// one cyclic frequency offset per symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChirpSpec {
    sf: u8,
    symbols: Vec<u32>,
}

impl ChirpSpec {
    pub fn new(sf: u8, symbols: Vec<u32>) -> Result<Self> {
        if !(5..=12).contains(&sf) {
            return Err(Error::OutOfRange(format!("spreading factor {sf} outside [5, 12]")));
        }
        let n = 1u32 << sf;
        if let Some(&bad) = symbols.iter().find(|&&s| s >= n) {
            return Err(Error::OutOfRange(format!(
                "symbol {bad} outside [0, {n}) for SF{sf}"
            )));
        }
        Ok(Self { sf, symbols })
    }

    pub fn spreading_factor(&self) -> u8 {
        self.sf
    }

    pub fn samples_per_symbol(&self) -> usize {
        1 << self.sf
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }
}

/// Generates a baseband CSS stream: per symbol `s` with `N = 2^sf` samples,
/// `x[n] = exp(j 2 pi (n^2 / (2N) + n (s/N - 1/2)))` — an upchirp whose
/// instantaneous frequency starts at `s/N - 1/2` cycles/sample and wraps
/// once through the band. Optional seeded complex white noise is added at
/// `snr_db`; at `None` the samples are exactly unit modulus.
pub fn gen_lora_chirps(spec: &ChirpSpec, seed: u64, snr_db: Option<f64>) -> Vec<Complex64> {
    let n = spec.samples_per_symbol();
    let nf = n as f64;
    let mut out = Vec::with_capacity(n * spec.symbols.len());
    for &s in &spec.symbols {
        let offset = f64::from(s) / nf - 0.5;
        for i in 0..n {
            let t = i as f64;
            let phase = std::f64::consts::TAU * (t * t / (2.0 * nf) + t * offset);
            out.push(Complex64::new(phase.cos(), phase.sin()));
        }
    }
    if let Some(snr_db) = snr_db {
        // Unit signal power; complex AWGN split evenly across I and Q.
        let noise_var = 10f64.powf(-snr_db / 10.0);
        let sigma = (noise_var / 2.0).sqrt();
        let mut rng = SplitMix64::new(derive_seed(seed, "chirp-noise"));
        for x in &mut out {
            *x += Complex64::new(sigma * rng.next_gaussian(), sigma * rng.next_gaussian());
        }
    }
    out
}

/// Reduces an IQ stream to a length-`target_rows` feature vector in
/// [0, 1]: real part, min-max normalization (constant streams map to 0.5),
/// linear resample. The real part is used rather than the magnitude, which
/// is constant for a pure chirp.
pub fn rf_features(iq: &[Complex64], target_rows: usize) -> Result<Vec<f64>> {
    if iq.is_empty() {
        return Err(Error::Format("cannot extract features from an empty stream".into()));
    }
    if target_rows == 0 {
        return Err(Error::OutOfRange("target_rows must be >= 1".into()));
    }
    let real: Vec<f64> = iq.iter().map(|x| x.re).collect();
    let lo = real.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = real.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unit: Vec<f64> = if hi > lo {
        real.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; real.len()]
    };
    Ok(resample_linear(&unit, target_rows))
}

/// Batch of prepared unit-interval sample vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Option<Vec<u8>>,
    pub source: String,
}

impl SampleBatch {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Option<Vec<u8>>, source: &str) -> Result<Self> {
        let len = vectors.first().map_or(0, Vec::len);
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != len {
                return Err(Error::ShapeMismatch {
                    expected: format!("{len}-entry vectors"),
                    actual: format!("{} entries in vector {i}", v.len()),
                });
            }
            if let Some((j, &bad)) = v.iter().enumerate().find(|&(_, &x)| !(0.0..=1.0).contains(&x)) {
                return Err(Error::OutOfRange(format!(
                    "sample {i} entry {j} = {bad} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            vectors,
            labels,
            source: source.to_string(),
        })
    }

    /// Scales every sample to drive voltages.
    pub fn to_input_vectors(&self, v_read: f64) -> Result<Vec<InputVector>> {
        self.vectors
            .iter()
            .map(|v| normalize_to_voltage(v, v_read))
            .collect()
    }
}

/// Prepares the first `limit` images of an IDX tensor as crossbar inputs of
/// length `target_rows`.
pub fn mnist_batch(
    images: &IdxTensor,
    labels: Option<&IdxTensor>,
    target_rows: usize,
    limit: usize,
) -> Result<SampleBatch> {
    let count = match images {
        IdxTensor::Images { count, .. } => *count,
        IdxTensor::Labels(_) => {
            return Err(Error::Format("expected an image tensor, got labels".into()))
        }
    };
    let take = limit.min(count);
    let mut vectors = Vec::with_capacity(take);
    for i in 0..take {
        vectors.push(resample_flatten(images.image(i).unwrap(), target_rows)?);
    }
    let labels = match labels {
        None => None,
        Some(IdxTensor::Labels(l)) => Some(l.iter().copied().take(take).collect()),
        Some(IdxTensor::Images { .. }) => {
            return Err(Error::Format("expected a label tensor, got images".into()))
        }
    };
    SampleBatch::new(vectors, labels, "mnist")
}

/// Generates a batch of synthetic LoRa feature vectors: each sample is a
/// fresh seeded symbol sequence rendered to chirps and reduced to
/// `target_rows` features.
pub fn lora_batch(
    sf: u8,
    symbols_per_sample: usize,
    batch: usize,
    target_rows: usize,
    seed: u64,
    snr_db: Option<f64>,
) -> Result<SampleBatch> {
    let n = 1u64 << sf;
    let mut rng = SplitMix64::new(derive_seed(seed, "lora-symbols"));
    let mut vectors = Vec::with_capacity(batch);
    for sample in 0..batch {
        let symbols: Vec<u32> = (0..symbols_per_sample)
            .map(|_| rng.next_below(n) as u32)
            .collect();
        let spec = ChirpSpec::new(sf, symbols)?;
        let iq = gen_lora_chirps(&spec, derive_seed(seed, &format!("lora-noise-{sample}")), snr_db);
        vectors.push(rf_features(&iq, target_rows)?);
    }
    SampleBatch::new(vectors, None, "lora")
}

/// Parses the generic input CSV: one sample per line, comma-separated
/// decimals in [0, 1].
pub fn parse_csv_vectors(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let x: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!("line {}: `{}` is not a number", lineno + 1, field.trim()))
            })?;
            row.push(x);
        }
        out.push(row);
    }
    if out.is_empty() {
        return Err(Error::Format("CSV contains no samples".into()));
    }
    Ok(out)
}
