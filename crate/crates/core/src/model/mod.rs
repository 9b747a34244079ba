//! The memory network: configuration, parameters, encoders, memories and
//! the forward pass.

pub mod config;
pub mod encode;
pub mod forward;
pub mod memory;
pub mod params;

pub use config::{Attention, Encoding, HopNonlinearity, ModelConfig, Tying};
pub use encode::{encode_sentence, position_weight, position_weights};
pub use forward::{
    answer_logits, forward, forward_from_state, hop, lm_query, query_state, relu_half, Episode, ForwardTrace, HopStep,
    HopTrace, Query,
};
pub use memory::{build_bank, build_memories, plan_slots, MemoryBank, NoisePlan, Slot, SlotOrigin};
pub use params::{Gradients, Layout, ModelParams, ParamSet, Role, TensorKind};
