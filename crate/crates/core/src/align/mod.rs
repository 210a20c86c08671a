//! Windowed multi-frame rigid alignment: sparse point correspondences for the
//! coarse solution, then photometric and point-to-plane refinement over all
//! frame pairs in the window.

mod camera;
mod energy;
mod frame;
mod solve;
mod synth;

pub use camera::{project, unproject, Intrinsics};
pub use energy::{
    dense_rows, e_align, e_geo, e_photo, e_sparse, sparse_rows, window_pairs, AlignmentState,
    AlignmentWeights, Correspondence, CorrespondenceSet, DenseEnergy, DenseKind, ResidualRow,
};
pub use frame::{Frame, Sample, Scene, FRAME_MAGIC};
pub use solve::{apply_update, minimize_alignment, AlignmentResult, AlignmentSettings};
pub use synth::{render_synthetic_scene, synthetic_correspondences, SyntheticWindow, FRAME_HEIGHT, FRAME_WIDTH};
