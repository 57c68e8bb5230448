//! Healthcare scheduling on a shared finite-domain constraint core:
//! chemotherapy treatment (CTS), operating rooms with special-care-unit beds
//! (ORS) and pre-operative assessment clinics (POAC), with an exact
//! branch-and-bound engine and an explanation layer.

pub mod baseline;
pub mod cts;
pub mod domain;
pub mod engine;
pub mod explain;
pub mod io;
pub mod edit;
pub mod model;
pub mod ors;
pub mod pipeline;
pub mod poac;
