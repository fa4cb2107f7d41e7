//! Audio decoding, fixed-length segmentation and frame-level features.

mod features;
mod wav;

pub use features::{
    compute_log_mel, compute_mfcc, compute_spectrogram, hann_window, power_spectrum,
    resize_bilinear, MelFilterbank, MfccExtractor, MfccSequence, SpectrogramImage, IMAGE_SIZE,
};
pub use wav::{load_wav, write_wav_f32, write_wav_i16};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono audio with amplitudes nominally in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("audio clip has no samples".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples".into()));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn is_silent(&self) -> bool {
        self.samples.iter().all(|&s| s == 0.0)
    }
}

/// Cut a clip into consecutive windows of exactly `target_s` seconds.
///
/// Shorter clips become one zero-padded window; longer clips are split and the
/// last window is zero-padded.
pub fn pad_or_split(clip: &AudioClip, target_s: f64) -> Result<Vec<AudioClip>> {
    if !(target_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target duration must be positive, got {target_s}"
        )));
    }
    let target = (target_s * f64::from(clip.sample_rate)).round() as usize;
    if target == 0 {
        return Err(Error::InvalidArgument(
            "target duration is shorter than one sample".into(),
        ));
    }
    Ok(clip
        .samples
        .chunks(target)
        .map(|chunk| {
            let mut samples = chunk.to_vec();
            samples.resize(target, 0.0);
            AudioClip {
                samples,
                sample_rate: clip.sample_rate,
            }
        })
        .collect())
}

/// Short-time analysis settings. Durations are in milliseconds and converted
/// to samples with [`FrameConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameConfig {
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    /// Defaults to the next power of two at or above the frame length.
    pub n_fft: Option<usize>,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin: f64,
    /// Defaults to the Nyquist frequency.
    pub fmax: Option<f64>,
    pub log_floor: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            frame_len_ms: 25.0,
            hop_ms: 10.0,
            n_fft: None,
            n_mels: 40,
            n_mfcc: 13,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-10,
        }
    }
}

/// A [`FrameConfig`] bound to a sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedFrames {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl ResolvedFrames {
    /// `1 + floor((len - frame_len) / hop)`, or `None` if the clip is shorter
    /// than one frame.
    pub fn num_frames(&self, len: usize) -> Option<usize> {
        (len >= self.frame_len).then(|| 1 + (len - self.frame_len) / self.hop)
    }
}

impl FrameConfig {
    pub fn resolve(&self, sample_rate: u32) -> Result<ResolvedFrames> {
        let sr = f64::from(sample_rate);
        let invalid = |m: String| Err(Error::InvalidArgument(m));
        if sample_rate == 0 {
            return invalid("sample rate must be positive".into());
        }
        if !(self.hop_ms > 0.0 && self.hop_ms <= self.frame_len_ms) {
            return invalid(format!(
                "need 0 < hop_ms <= frame_len_ms, got {} / {}",
                self.hop_ms, self.frame_len_ms
            ));
        }
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return invalid(format!(
                "need 0 < n_mfcc <= n_mels, got {} / {}",
                self.n_mfcc, self.n_mels
            ));
        }
        let frame_len = (sr * self.frame_len_ms / 1000.0).round() as usize;
        let hop = (sr * self.hop_ms / 1000.0).round() as usize;
        if frame_len < 2 || hop == 0 {
            return invalid(format!("frame of {frame_len} samples / hop {hop} is too short"));
        }
        let n_fft = self.n_fft.unwrap_or_else(|| frame_len.next_power_of_two());
        if !n_fft.is_power_of_two() || n_fft < frame_len {
            return invalid(format!(
                "n_fft must be a power of two >= frame length {frame_len}, got {n_fft}"
            ));
        }
        let nyquist = sr / 2.0;
        let fmax = self.fmax.unwrap_or(nyquist);
        if !(self.fmin >= 0.0 && self.fmin < fmax && fmax <= nyquist) {
            return invalid(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got {} / {fmax}",
                self.fmin
            ));
        }
        if !(self.log_floor > 0.0) {
            return invalid("log_floor must be positive".into());
        }
        Ok(ResolvedFrames {
            sample_rate,
            frame_len,
            hop,
            n_fft,
            n_mels: self.n_mels,
            n_mfcc: self.n_mfcc,
            fmin: self.fmin,
            fmax,
            log_floor: self.log_floor,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(n: usize) -> AudioClip {
        AudioClip::new((0..n).map(|i| ((i % 97) as f64 / 97.0) - 0.5).collect(), 16_000).unwrap()
    }

    #[test]
    fn three_seconds_is_padded() {
        let c = clip(48_000);
        let out = pad_or_split(&c, 5.0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 80_000);
        assert_eq!(&out[0].samples()[..48_000], c.samples());
        assert!(out[0].samples()[48_000..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn exactly_five_seconds_is_identity() {
        let c = clip(80_000);
        let out = pad_or_split(&c, 5.0).unwrap();
        assert_eq!(out, vec![c]);
    }

    #[test]
    fn twelve_seconds_gives_three_windows() {
        let c = clip(192_000);
        let out = pad_or_split(&c, 5.0).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|w| w.len() == 80_000));
        assert_eq!(&out[2].samples()[..32_000], &c.samples()[160_000..]);
        assert!(out[2].samples()[32_000..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn silence_is_allowed() {
        let c = AudioClip::new(vec![0.0; 100], 16_000).unwrap();
        let out = pad_or_split(&c, 5.0).unwrap();
        assert!(out[0].is_silent());
    }

    #[test]
    fn clip_validation() {
        assert!(AudioClip::new(vec![], 16_000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
        assert!(AudioClip::new(vec![f64::NAN], 16_000).is_err());
    }

    #[test]
    fn default_frames_at_16k() {
        let r = FrameConfig::default().resolve(16_000).unwrap();
        assert_eq!((r.frame_len, r.hop, r.n_fft), (400, 160, 512));
        assert_eq!(r.fmax, 8_000.0);
        assert_eq!(r.num_frames(80_000), Some(498));
        assert_eq!(r.num_frames(399), None);
    }

    #[test]
    fn frame_config_validation() {
        let bad = |f: fn(&mut FrameConfig)| {
            let mut c = FrameConfig::default();
            f(&mut c);
            c.resolve(16_000).is_err()
        };
        assert!(bad(|c| c.hop_ms = 30.0));
        assert!(bad(|c| c.hop_ms = 0.0));
        assert!(bad(|c| c.n_mfcc = 41));
        assert!(bad(|c| c.n_mfcc = 0));
        assert!(bad(|c| c.n_fft = Some(500)));
        assert!(bad(|c| c.n_fft = Some(256)));
        assert!(bad(|c| c.fmax = Some(9_000.0)));
        assert!(bad(|c| c.fmin = 8_000.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn windows_have_target_length_and_recover_input(
                n in 1usize..5_000,
                target in 1usize..1_000,
            ) {
                let samples: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5).collect();
                let c = AudioClip::new(samples.clone(), 1_000).unwrap();
                let out = pad_or_split(&c, target as f64 / 1000.0).unwrap();
                prop_assert!(out.iter().all(|w| w.len() == target));
                let joined: Vec<f64> = out.iter().flat_map(|w| w.samples().iter().copied()).collect();
                prop_assert_eq!(&joined[..n], &samples[..]);
                prop_assert!(joined[n..].iter().all(|&s| s == 0.0));
                prop_assert!(joined.len() - n < target);
            }
        }
    }
}
