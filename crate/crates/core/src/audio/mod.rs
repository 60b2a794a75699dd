//! Waveform IO and the fixed band analysis / oscillator synthesis shared by
//! the encoder stub, the speech tokenizer features and the vocoder.

mod bands;
mod wav;

pub use bands::{mel_frames, BandAnalyzer, OscillatorBank, MEL_BANDS_HZ, MEL_FRAME};
pub use wav::{read_wav, read_wav_bytes, wav_bytes, write_wav};
