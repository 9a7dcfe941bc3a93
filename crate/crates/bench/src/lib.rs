//! Shared inputs for the benchmarks.

use eegsz_core::dataset::{synth_subject, ClassLabel, EegRecording};

/// One synthetic subject, fixed seed.
pub fn subject() -> EegRecording {
    synth_subject(ClassLabel::Sz, 0)
}

/// The first `len` samples of channel 0 of [`subject`].
pub fn signal(len: usize) -> Vec<f64> {
    subject().data[0][..len].to_vec()
}
