use super::ScheduleConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Hidden,
    Speech,
}

/// Slot order of one interleaved decoder sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterleaveLayout {
    slots: Vec<Slot>,
    hidden: usize,
    speech: usize,
}

impl InterleaveLayout {
    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn h_total(&self) -> usize {
        self.hidden
    }

    pub fn s_total(&self) -> usize {
        self.speech
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Maximal runs as `(kind, length)` pairs.
    pub fn runs(&self) -> Vec<(Slot, usize)> {
        let mut runs: Vec<(Slot, usize)> = Vec::new();
        for &slot in &self.slots {
            match runs.last_mut() {
                Some((kind, len)) if *kind == slot => *len += 1,
                _ => runs.push((slot, 1)),
            }
        }
        runs
    }
}

/// Builds the M:N interleave. While both hidden states and speech tokens
/// remain, each block consumes up to `m_hidden` hidden states and then emits
/// up to `n_tokens` speech tokens. Once hidden states run out the remaining
/// speech tokens form a single drain run. If speech runs out first the
/// leftover hidden states are appended as a trailing run.
pub fn interleave_layout(h_total: usize, s_total: usize, cfg: &ScheduleConfig) -> InterleaveLayout {
    let mut slots = Vec::with_capacity(h_total + s_total);
    let (mut h_left, mut s_left) = (h_total, s_total);
    while h_left > 0 && s_left > 0 {
        let take = h_left.min(cfg.m_hidden);
        slots.extend(std::iter::repeat_n(Slot::Hidden, take));
        h_left -= take;
        if h_left == 0 {
            break;
        }
        let emit = s_left.min(cfg.n_tokens);
        slots.extend(std::iter::repeat_n(Slot::Speech, emit));
        s_left -= emit;
    }
    slots.extend(std::iter::repeat_n(Slot::Hidden, h_left));
    slots.extend(std::iter::repeat_n(Slot::Speech, s_left));
    InterleaveLayout {
        slots,
        hidden: h_total,
        speech: s_total,
    }
}

/// True exactly at speech slots.
pub fn loss_mask(layout: &InterleaveLayout) -> Vec<bool> {
    layout.slots.iter().map(|s| *s == Slot::Speech).collect()
}

/// Partitions `[0, s_total)` into consecutive ranges of `chunk_tokens`, the
/// last one possibly shorter.
pub fn chunk_boundaries(s_total: usize, chunk_tokens: usize) -> Vec<(usize, usize)> {
    assert!(chunk_tokens >= 1, "chunk_tokens must be at least 1");
    (0..s_total)
        .step_by(chunk_tokens)
        .map(|start| (start, (start + chunk_tokens).min(s_total)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Slot::{Hidden as H, Speech as S};

    fn cfg(m: usize, n: usize) -> ScheduleConfig {
        ScheduleConfig::new(m, n, 4).unwrap()
    }

    #[test]
    fn single_block() {
        let layout = interleave_layout(4, 8, &cfg(4, 8));
        let mut expect = vec![H; 4];
        expect.extend([S; 8]);
        assert_eq!(layout.slots(), expect.as_slice());
    }

    #[test]
    fn empty_layout() {
        let layout = interleave_layout(0, 0, &cfg(4, 8));
        assert!(layout.is_empty());
        assert!(loss_mask(&layout).is_empty());
    }

    #[test]
    fn short_final_block_then_drain() {
        let layout = interleave_layout(10, 30, &cfg(4, 8));
        assert_eq!(layout.runs(), vec![(H, 4), (S, 8), (H, 4), (S, 8), (H, 2), (S, 14)]);
        let mask = loss_mask(&layout);
        assert_eq!(mask.len(), 40);
        assert_eq!(mask.iter().filter(|m| **m).count(), 30);
    }

    #[test]
    fn mask_marks_speech_only() {
        let mask = loss_mask(&interleave_layout(4, 8, &cfg(4, 8)));
        assert_eq!(&mask[..4], &[false; 4]);
        assert_eq!(&mask[4..], &[true; 8]);
    }

    #[test]
    fn speech_exhausted_before_hidden() {
        let layout = interleave_layout(10, 3, &cfg(4, 8));
        assert_eq!(layout.runs(), vec![(H, 4), (S, 3), (H, 6)]);
    }

    #[test]
    fn chunk_examples() {
        assert_eq!(chunk_boundaries(8, 4), vec![(0, 4), (4, 8)]);
        assert!(chunk_boundaries(0, 4).is_empty());
        assert_eq!(chunk_boundaries(10, 4), vec![(0, 4), (4, 8), (8, 10)]);
    }

    #[test]
    fn chunks_partition_the_range() {
        for s in 0..50 {
            for c in 1..10 {
                let chunks = chunk_boundaries(s, c);
                let mut next = 0;
                for (i, &(a, b)) in chunks.iter().enumerate() {
                    assert_eq!(a, next);
                    assert!(b > a);
                    if i + 1 < chunks.len() {
                        assert_eq!(b - a, c);
                    } else {
                        assert!(b - a <= c);
                    }
                    next = b;
                }
                assert_eq!(next, s);
            }
        }
    }
}
