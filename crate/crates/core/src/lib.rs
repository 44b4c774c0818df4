//! Curation pipeline that turns object-detection corpora into a square,
//! quality-ranked human-image restoration dataset.
//!
//! The stages mirror the processing funnel:
//!
//! 1. [`annotations`] parses COCO / Object365, Open Images, CrowdHuman and
//!    detector-import files into person-labelled [`annotations::SourceRecord`]s.
//! 2. [`imaging::laplacian_variance`] gates out blurry source images.
//! 3. [`boxgeom`] squarifies person boxes, rejects small ones and suppresses
//!    overlaps with a center-priority NMS.
//! 4. [`iqa`] scores the 512×512 crops (NIQE, BRISQUE) and [`selection`]
//!    standardizes all metrics, keeps the top fraction and applies thresholds.
//!
//! [`pipeline`] runs the stages over sharded inputs with checkpoints, and
//! [`degrade`] synthesizes low-quality counterparts for validation pairs.

pub mod annotations;
pub mod boxgeom;
pub mod degrade;
pub mod error;
pub mod imaging;
pub mod iqa;
pub mod pipeline;
pub mod selection;

pub use error::{Error, Result};
