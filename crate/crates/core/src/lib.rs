//! Fast multirate bitrate-ladder preparation for 360-degree video.
//!
//! The crate covers the whole batch flow: raw 4:2:0 I/O ([`media`]),
//! ERP/cubemap geometry and resampling ([`sphere`]), PSNR and WS-PSNR
//! ([`metrics`]), Bjøntegaard-delta analysis ([`bd`]), anchor/dependent
//! encode planning ([`plan`]), plan execution against x265 or a simulated
//! encoder ([`exec`]), OMAF-flavored DASH packaging ([`package`]), and the
//! end-to-end pipeline and comparison reports ([`pipeline`], [`report`]).
//! Deterministic test content and independent reference oracles live in
//! [`fixtures`].

pub mod bd;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod media;
pub mod metrics;
pub mod package;
pub mod pipeline;
pub mod plan;
pub mod report;
pub mod sphere;

pub use error::{Error, Result};
