use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioClip, FrameConfig, ResolvedFrames};
use crate::error::{Error, Result};

/// Side length of the square spectrogram image.
pub const IMAGE_SIZE: usize = 224;

/// Symmetric Hann window `0.5 - 0.5 cos(2πt / (n - 1))`.
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "hann window needs at least 2 points, got {n}"
        )));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|t| 0.5 - 0.5 * (2.0 * PI * t as f64 / denom).cos())
        .collect())
}

fn check_fft_size(frame_len: usize, n_fft: usize) -> Result<()> {
    if n_fft == 0 || !n_fft.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "n_fft must be a power of two, got {n_fft}"
        )));
    }
    if frame_len > n_fft {
        return Err(Error::InvalidArgument(format!(
            "frame of {frame_len} samples does not fit n_fft {n_fft}"
        )));
    }
    Ok(())
}

/// Squared DFT magnitudes `|X_k|²` for `k = 0..=n_fft/2`, zero-padding the
/// frame to `n_fft`.
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Result<Vec<f64>> {
    check_fft_size(frame.len(), n_fft)?;
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    Ok(power_spectrum_with(&*fft, frame, n_fft))
}

fn power_spectrum_with(fft: &dyn Fft<f64>, frame: &[f64], n_fft: usize) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(n_fft, Complex::new(0.0, 0.0));
    fft.process(&mut buf);
    buf[..=n_fft / 2].iter().map(|c| c.norm_sqr()).collect()
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale, unnormalized (peak 1).
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    n_mels: usize,
    n_bins: usize,
    weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32, n_fft: usize, n_mels: usize, fmin: f64, fmax: f64) -> Result<Self> {
        if n_mels == 0 {
            return Err(Error::InvalidArgument("n_mels must be positive".into()));
        }
        check_fft_size(0, n_fft)?;
        let n_bins = n_fft / 2 + 1;
        let (mel_lo, mel_hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = f64::from(sample_rate) / n_fft as f64;

        let mut weights = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * n_bins..(m + 1) * n_bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                let rising = (f - lo) / (center - lo);
                let falling = (hi - f) / (hi - center);
                *w = rising.min(falling).max(0.0);
            }
            if row.iter().all(|&w| w <= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "mel filter {m} covers no FFT bin; use fewer mel bands or a larger n_fft"
                )));
            }
        }
        Ok(MelFilterbank {
            n_mels,
            n_bins,
            weights,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        (0..self.n_mels)
            .map(|m| self.row(m).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// `T × n_mfcc` coefficients, row-major by frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MfccSequence {
    n_frames: usize,
    n_mfcc: usize,
    data: Vec<f64>,
}

impl MfccSequence {
    pub fn new(n_frames: usize, n_mfcc: usize, data: Vec<f64>) -> Result<Self> {
        if n_frames == 0 || n_mfcc == 0 {
            return Err(Error::InvalidArgument("empty MFCC sequence".into()));
        }
        if data.len() != n_frames * n_mfcc {
            return Err(Error::shape(
                "MfccSequence",
                format!("{} values for {n_frames} x {n_mfcc}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MFCC sequence".into()));
        }
        Ok(MfccSequence {
            n_frames,
            n_mfcc,
            data,
        })
    }

    /// Rebuild from a flattened row of a feature cache.
    pub fn from_flat(data: Vec<f64>, n_mfcc: usize) -> Result<Self> {
        if n_mfcc == 0 || data.len() % n_mfcc != 0 {
            return Err(Error::shape(
                "MfccSequence",
                format!("{} values are not a multiple of {n_mfcc} coefficients", data.len()),
            ));
        }
        Self::new(data.len() / n_mfcc, n_mfcc, data)
    }

    pub fn num_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_mfcc(&self) -> usize {
        self.n_mfcc
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_mfcc..(t + 1) * self.n_mfcc]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Same coefficients with the frame order reversed.
    pub fn reversed(&self) -> Self {
        let data = (0..self.n_frames)
            .rev()
            .flat_map(|t| self.frame(t).iter().copied())
            .collect();
        MfccSequence {
            n_frames: self.n_frames,
            n_mfcc: self.n_mfcc,
            data,
        }
    }
}

/// `IMAGE_SIZE × IMAGE_SIZE` log-mel image with entries in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrogramImage {
    pixels: Vec<f64>,
}

impl SpectrogramImage {
    pub fn new(pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != IMAGE_SIZE * IMAGE_SIZE {
            return Err(Error::shape(
                "SpectrogramImage",
                format!("{} pixels, expected {}", pixels.len(), IMAGE_SIZE * IMAGE_SIZE),
            ));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(
                "spectrogram pixels must lie in [0, 1]".into(),
            ));
        }
        Ok(SpectrogramImage { pixels })
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * IMAGE_SIZE + c]
    }
}

/// Reusable per-configuration state: window, FFT plan, filterbank and DCT
/// basis.
pub struct MfccExtractor {
    frames: ResolvedFrames,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    mel: MelFilterbank,
    dct: Vec<f64>,
}

impl MfccExtractor {
    pub fn new(cfg: &FrameConfig, sample_rate: u32) -> Result<Self> {
        let frames = cfg.resolve(sample_rate)?;
        let window = hann_window(frames.frame_len)?;
        let fft = FftPlanner::new().plan_fft_forward(frames.n_fft);
        let mel = MelFilterbank::new(
            sample_rate,
            frames.n_fft,
            frames.n_mels,
            frames.fmin,
            frames.fmax,
        )?;
        let dct = dct2_ortho_basis(frames.n_mfcc, frames.n_mels);
        Ok(MfccExtractor {
            frames,
            window,
            fft,
            mel,
            dct,
        })
    }

    pub fn frames(&self) -> &ResolvedFrames {
        &self.frames
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.mel
    }

    fn check_clip(&self, clip: &AudioClip) -> Result<usize> {
        if clip.sample_rate() != self.frames.sample_rate {
            return Err(Error::InvalidArgument(format!(
                "clip sampled at {} Hz, extractor configured for {} Hz",
                clip.sample_rate(),
                self.frames.sample_rate
            )));
        }
        self.frames.num_frames(clip.len()).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "clip of {} samples is shorter than one {}-sample frame",
                clip.len(),
                self.frames.frame_len
            ))
        })
    }

    /// Log mel energies of one raw (unwindowed) frame.
    pub fn log_mel_frame(&self, frame: &[f64]) -> Vec<f64> {
        let windowed: Vec<f64> = frame.iter().zip(&self.window).map(|(x, w)| x * w).collect();
        let power = power_spectrum_with(&*self.fft, &windowed, self.frames.n_fft);
        self.mel
            .apply(&power)
            .into_iter()
            .map(|e| e.max(self.frames.log_floor).ln())
            .collect()
    }

    /// Cepstral coefficients of one raw frame.
    pub fn mfcc_frame(&self, frame: &[f64]) -> Vec<f64> {
        let log_mel = self.log_mel_frame(frame);
        let n_mels = self.frames.n_mels;
        (0..self.frames.n_mfcc)
            .map(|k| {
                self.dct[k * n_mels..(k + 1) * n_mels]
                    .iter()
                    .zip(&log_mel)
                    .map(|(b, x)| b * x)
                    .sum()
            })
            .collect()
    }

    fn frame_slices<'a>(&self, clip: &'a AudioClip, n: usize) -> impl Iterator<Item = &'a [f64]> {
        let (len, hop) = (self.frames.frame_len, self.frames.hop);
        (0..n).map(move |t| &clip.samples()[t * hop..t * hop + len])
    }

    pub fn mfcc(&self, clip: &AudioClip) -> Result<MfccSequence> {
        let n = self.check_clip(clip)?;
        let data = self
            .frame_slices(clip, n)
            .flat_map(|f| self.mfcc_frame(f))
            .collect();
        MfccSequence::new(n, self.frames.n_mfcc, data)
    }

    /// Log-mel matrix with `n_mels` rows and one column per frame.
    pub fn log_mel(&self, clip: &AudioClip) -> Result<(usize, usize, Vec<f64>)> {
        let n = self.check_clip(clip)?;
        let n_mels = self.frames.n_mels;
        let mut out = vec![0.0; n_mels * n];
        for (t, f) in self.frame_slices(clip, n).enumerate() {
            for (m, v) in self.log_mel_frame(f).into_iter().enumerate() {
                out[m * n + t] = v;
            }
        }
        Ok((n_mels, n, out))
    }

    pub fn spectrogram(&self, clip: &AudioClip) -> Result<SpectrogramImage> {
        let (rows, cols, log_mel) = self.log_mel(clip)?;
        // A constant log-mel matrix has no range to normalize; map it to zeros.
        if log_mel.iter().all(|&v| v == log_mel[0]) {
            return SpectrogramImage::new(vec![0.0; IMAGE_SIZE * IMAGE_SIZE]);
        }
        let mut img = resize_bilinear(&log_mel, rows, cols, IMAGE_SIZE, IMAGE_SIZE)?;
        let (lo, hi) = img
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        for v in &mut img {
            *v = if range > 0.0 { ((*v - lo) / range).clamp(0.0, 1.0) } else { 0.0 };
        }
        SpectrogramImage::new(img)
    }
}

/// Orthonormal DCT-II rows: `c_k = s_k Σ_n x_n cos(π k (2n + 1) / 2N)` with
/// `s_0 = √(1/N)`, `s_k = √(2/N)`.
fn dct2_ortho_basis(n_out: usize, n_in: usize) -> Vec<f64> {
    let n = n_in as f64;
    let mut basis = Vec::with_capacity(n_out * n_in);
    for k in 0..n_out {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for i in 0..n_in {
            basis.push(scale * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos());
        }
    }
    basis
}

pub fn compute_mfcc(clip: &AudioClip, cfg: &FrameConfig) -> Result<MfccSequence> {
    MfccExtractor::new(cfg, clip.sample_rate())?.mfcc(clip)
}

pub fn compute_log_mel(clip: &AudioClip, cfg: &FrameConfig) -> Result<(usize, usize, Vec<f64>)> {
    MfccExtractor::new(cfg, clip.sample_rate())?.log_mel(clip)
}

pub fn compute_spectrogram(clip: &AudioClip, cfg: &FrameConfig) -> Result<SpectrogramImage> {
    MfccExtractor::new(cfg, clip.sample_rate())?.spectrogram(clip)
}

/// Bilinear resampling with corner alignment: output pixel `i` samples the
/// source at `i · (in - 1) / (out - 1)`.
pub fn resize_bilinear(
    src: &[f64],
    rows: usize,
    cols: usize,
    out_rows: usize,
    out_cols: usize,
) -> Result<Vec<f64>> {
    if rows == 0 || cols == 0 || out_rows == 0 || out_cols == 0 || src.len() != rows * cols {
        return Err(Error::shape(
            "resize_bilinear",
            format!("{} values as {rows}x{cols} -> {out_rows}x{out_cols}", src.len()),
        ));
    }
    let coord = |i: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (pos.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for r in 0..out_rows {
        let (r0, r1, fr) = coord(r, rows, out_rows);
        for c in 0..out_cols {
            let (c0, c1, fc) = coord(c, cols, out_cols);
            let top = src[r0 * cols + c0] * (1.0 - fc) + src[r0 * cols + c1] * fc;
            let bottom = src[r1 * cols + c0] * (1.0 - fc) + src[r1 * cols + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    Ok(out)
}
