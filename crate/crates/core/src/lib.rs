//! Kernel additive modelling with a shift-invariant kernel, for removing short
//! interferences (coughs, door slams, dropped objects) from music recordings.
//!
//! The pipeline is: [`timefreq::forward_logfreq`] to a log-frequency
//! spectrogram, [`kam::separate`] with one of four kernels
//! ([`kam::Variant`]), then [`timefreq::inverse_logfreq`] on the source and
//! interference spectrograms. [`eval`] builds synthetic scenes and scores
//! them; [`complexity`] times the kernels.

pub mod complexity;
pub mod error;
pub mod eval;
pub mod kam;
pub mod shiftkam;
pub mod specmurt;
pub mod timefreq;
pub mod wav;

pub use error::{Error, Result};
pub use kam::{
    build_soft_mask, knn_baseline, median_estimate, separate, separate_channels, Neighbor,
    NeighborSet, Separation, SeparationConfig, Variant,
};
pub use rustfft::num_complex::Complex64;
pub use shiftkam::{knn_shift_exhaustive, shift_frame};
pub use specmurt::{
    estimate_shift_deconv, knn_specmurt, knn_specmurt_pruned, specmurt_transform, ShiftEstimate,
    SpecmurtFrame,
};
pub use timefreq::{
    apply_mask_and_resynthesize, forward_logfreq, inverse_logfreq, magnitude, ComplexSpectrogram,
    MagSpectrogram, SoftMask, TransformParams,
};
