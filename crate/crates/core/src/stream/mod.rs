//! Model-free arithmetic of the streaming design: rates, the interleave
//! layout between LLM hidden states and speech tokens, the loss mask, vocoder
//! chunking and the first-audio latency model.
//!
//! Everything here is a pure function of counts and configuration.

mod config;
mod latency;
mod layout;

pub use config::{RateConfig, ScheduleConfig};
pub use latency::{first_audio_latency, simulate, ChunkEvent, LatencyParams, SimTrace, Workload};
pub use layout::{chunk_boundaries, interleave_layout, loss_mask, InterleaveLayout, Slot};

/// Output length of two stride-2, width-3, pad-1 convolutions applied in
/// sequence, i.e. the adapter's 4x temporal compression.
pub fn downsampled_length(n_frames: usize) -> usize {
    conv_out_len(conv_out_len(n_frames, 3, 2, 1), 3, 2, 1)
}

/// `floor((n + 2*pad - kernel) / stride) + 1`, or zero when the padded input
/// is shorter than the kernel.
pub fn conv_out_len(n: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    let padded = n + 2 * pad;
    if n == 0 || padded < kernel {
        0
    } else {
        (padded - kernel) / stride + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsampled_length_examples() {
        assert_eq!(downsampled_length(100), 25);
        assert_eq!(downsampled_length(0), 0);
        assert_eq!(downsampled_length(7), 2);
        assert_eq!(downsampled_length(1), 1);
    }

    #[test]
    fn downsampled_length_is_ceil_of_ceil() {
        for n in 0..=1000usize {
            let expect = n.div_ceil(2).div_ceil(2);
            let got = downsampled_length(n);
            assert_eq!(got, expect, "n={n}");
            let quarter = n.div_ceil(4);
            assert!(got == quarter || got == quarter + 1);
        }
    }
}
