//! Matching-augmented synthetic control estimation for panels of
//! deforestation rates.
//!
//! The pipeline runs in five steps: panel ingestion ([`panel`]), donor
//! matching ([`matcher`]), ridge-augmented synthetic control ([`ascm`]),
//! inference ([`inference`]) and heterogeneity analysis ([`heterogeneity`]).
//! [`dgp`] simulates panels with known effects for validation.

pub mod ascm;
pub mod config;
pub mod design;
pub mod dgp;
pub mod error;
pub mod heterogeneity;
pub mod inference;
pub mod matcher;
pub mod panel;
pub mod pipeline;
pub mod stats;

pub use ascm::{AscmFit, EffectSeries, PooledEstimate, UnitEffects};
pub use config::{PoolWeight, StudyConfig, Variant};
pub use design::{CovariateTable, Design, DESIGN_COVARIATES};
pub use error::{Error, Result};
pub use matcher::{AuditRule, MatchResult, Metric};
pub use panel::{Covariates, PanelDataset};
