//! Activity-log analysis for live streamers: behavioral features, rule
//! binarization, popularity labels and temporal AUC-gain experiments.

pub mod binarize;
pub mod data;
pub mod experiments;
pub mod features;
pub mod glm;
pub mod labels;
pub mod oracle;
pub mod svg;
pub mod synth;
