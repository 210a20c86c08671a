//! Recurrent fusion of the magnetic and visual streams: multi-rate branch
//! LSTMs, a core LSTM and a linear head emitting one 6-DoF delta per visual
//! frame, plus training and trajectory inference.

mod checkpoint;
mod network;
mod normalize;
mod samples;
mod train;

pub use checkpoint::{
    load_checkpoint, predict_trajectory, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use network::{
    negated, ForwardCache, FusionNetwork, NetworkState, Readout, ReadoutCache, SKIP_INPUTS,
};
pub use normalize::{ChannelStats, Normalization};
pub use samples::{
    align_streams, integrate, mag_features, DeltaKind, FusedSample, MagEncoding, MAG_INPUTS, OUTPUTS,
    VIS_INPUTS,
};
pub use train::{
    beta_from_residuals, calibrate_beta, cut_windows, dof_prior, train, window_loss,
    BetaCalibration, EarlyStopping, EpochRecord, LossSpan, TrainingConfig, TrainingLog, BETA_MAX,
    BETA_MIN,
};

#[cfg(test)]
mod tests;
