use std::f64::consts::TAU;

use crate::tensor::Tensor;

/// Centre frequencies of the 20 synthesis/analysis bands. All are multiples
/// of 100 Hz, so each band completes a whole number of cycles in a 10 ms
/// frame at 16 kHz and the bands are mutually orthogonal over a frame.
pub const MEL_BANDS_HZ: [f64; 20] = [
    200.0, 300.0, 400.0, 500.0, 600.0, 800.0, 1000.0, 1200.0, 1400.0, 1700.0, 2000.0, 2400.0, 2800.0, 3300.0, 3800.0,
    4400.0, 5000.0, 5800.0, 6600.0, 7500.0,
];

/// Samples per mel frame (100 frames/s at 16 kHz).
pub const MEL_FRAME: usize = 160;

/// Single-frequency DFT magnitudes over fixed, non-overlapping frames.
#[derive(Clone, Debug)]
pub struct BandAnalyzer {
    frame: usize,
    bands: usize,
    /// `[band][n]` cosine and sine tables.
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl BandAnalyzer {
    pub fn new(freqs_hz: &[f64], frame: usize, sample_rate: u32) -> Self {
        let mut cos = Vec::with_capacity(freqs_hz.len() * frame);
        let mut sin = Vec::with_capacity(freqs_hz.len() * frame);
        for f in freqs_hz {
            let w = TAU * f / f64::from(sample_rate);
            for n in 0..frame {
                cos.push((w * n as f64).cos());
                sin.push((w * n as f64).sin());
            }
        }
        Self {
            frame,
            bands: freqs_hz.len(),
            cos,
            sin,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.frame
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Whole frames only; a trailing partial frame is dropped.
    pub fn frames(&self, samples: &[f64]) -> usize {
        samples.len() / self.frame
    }

    /// `[frames, bands]` amplitudes, scaled so a unit sinusoid at a band
    /// frequency reads 1.0.
    pub fn magnitudes(&self, samples: &[f64]) -> Tensor {
        let n_frames = self.frames(samples);
        let scale = 2.0 / self.frame as f64;
        let mut out = Tensor::zeros(&[n_frames, self.bands]);
        for t in 0..n_frames {
            let x = &samples[t * self.frame..(t + 1) * self.frame];
            let row = out.row_mut(t);
            for (b, slot) in row.iter_mut().enumerate() {
                let c = &self.cos[b * self.frame..(b + 1) * self.frame];
                let s = &self.sin[b * self.frame..(b + 1) * self.frame];
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..self.frame {
                    re += x[n] * c[n];
                    im += x[n] * s[n];
                }
                *slot = scale * (re * re + im * im).sqrt();
            }
        }
        out
    }
}

/// Band amplitudes at 100 frames/s, the tokenizer's input features.
pub fn mel_frames(samples: &[f64], sample_rate: u32) -> Tensor {
    BandAnalyzer::new(&MEL_BANDS_HZ, MEL_FRAME, sample_rate).magnitudes(samples)
}

/// Sum of sinusoids, one per band, with phases carried across calls.
#[derive(Clone, Debug)]
pub struct OscillatorBank {
    increments: Vec<f64>,
}

impl OscillatorBank {
    pub fn new(freqs_hz: &[f64], sample_rate: u32) -> Self {
        Self {
            increments: freqs_hz.iter().map(|f| TAU * f / f64::from(sample_rate)).collect(),
        }
    }

    pub fn mel(sample_rate: u32) -> Self {
        Self::new(&MEL_BANDS_HZ, sample_rate)
    }

    pub fn bands(&self) -> usize {
        self.increments.len()
    }

    /// Appends `count` samples with constant band `amplitudes`, advancing
    /// `phases` (each kept in `[0, 2π)`).
    pub fn render(&self, amplitudes: &[f64], phases: &mut [f64], count: usize, out: &mut Vec<f64>) {
        out.reserve(count);
        for _ in 0..count {
            let mut acc = 0.0;
            for ((a, p), inc) in amplitudes.iter().zip(phases.iter_mut()).zip(&self.increments) {
                acc += a * p.sin();
                *p += inc;
                if *p >= TAU {
                    *p -= TAU;
                }
            }
            out.push(acc);
        }
    }
}
