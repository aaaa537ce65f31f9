//! The network: configuration, parameters, forward pass, and checkpoint files.

mod checkpoint;
mod config;
mod network;
mod state;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::{EncoderKind, MessagePassing, ModelConfig, ABLATION_ROWS};
pub use network::{
    decode_outputs, distance_factors, dregcn_layer, encode, forward, message_pass, opinion_attention, opinion_mass,
    run, task_heads, vanilla_gcn_layer, Attention, ForwardTrace, ForwardVars, Heads, RoundTrace, RoundVars,
};
pub use state::{Layer, ModelState, ParamIds};
