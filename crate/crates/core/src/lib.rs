//! Face-preserving artistic QR codes.
//!
//! The crate covers the QR side of a portrait-QR pipeline:
//!
//! * [`qr`]: GF(256) / Reed–Solomon coding and byte-mode symbol assembly.
//! * [`scanner`]: a simulated decoder (luminance, dual-threshold binarization, finder
//!   location, module extraction, Gaussian soft sampling, error counting).
//! * [`idrs`]: reshuffling the code so that face modules keep their appearance while
//!   the symbol still decodes, plus blueprint synthesis.
//! * [`idse`]: marker harmonization and gradient-based scannability enhancement.
//! * [`harness`]: perturbation and scan-success statistics.
//! * [`pipeline`]: the end-to-end run used by the command-line tool.

pub mod error;
pub mod harness;
pub mod idrs;
pub mod idse;
pub mod raster;
pub mod pipeline;
pub mod qr;
pub mod scanner;
pub mod synth;

pub use error::{DecodeStage, Error, Result};
pub use idrs::{Blueprint, RegionSets, ReshuffleReport};
pub use idse::LossConfig;
pub use raster::GrayImage;
pub use qr::{EcLevel, MaskChoice, ModuleMatrix, QrSpec};
pub use scanner::{ErrorReport, GridGeometry};
