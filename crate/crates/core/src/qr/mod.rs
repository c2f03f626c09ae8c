//! QR symbol coding: GF(256), Reed–Solomon, block tables, matrix layout and the
//! byte-mode encoder/decoder.

pub mod codec;
pub mod gf256;
pub mod layout;
pub mod matrix;
pub mod rs;
pub mod spec;
mod tables;

pub use codec::{build_matrix, decode_message, decode_symbol, DecodedMessage};
pub use layout::{function_pattern_map, placement_order, Layout, ModuleRole};
pub use matrix::ModuleMatrix;
pub use rs::{rs_decode, rs_encode};
pub use spec::{BlockShape, EcLevel, MaskChoice, QrSpec};
