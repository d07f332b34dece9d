//! Longitudinal confirmation of static street structures from geotagged
//! per-frame detector output, evaluated against a municipal permit
//! registry.
//!
//! The pipeline in input order:
//!
//! 1. [`ingest`] parses frame streams (JSONL/CSV) and the permit registry
//!    (CSV or the open-data API) into validated, sorted records.
//! 2. [`geo`] projects everything onto a local planar grid.
//! 3. [`curation`] selects annotation candidates near permitted sites and
//!    stratifies them by borough.
//! 4. [`tagging`] buckets displaced observations into 80-ft cells and
//!    confirms cells via a rolling window over the last 20 observations.
//! 5. [`amplify`] computes the aggregate recall/precision the rolling
//!    window buys over the base detector, and picks the threshold.
//! 6. [`evaluate`] matches confirmed cells to permit regions, estimates
//!    unpermitted structures, and computes neighborhood impact factors.
//! 7. [`simulate`] generates synthetic worlds with known ground truth to
//!    validate the whole chain against the analytic model.

pub mod amplify;
pub mod boundary;
pub mod curation;
pub mod evaluate;
pub mod geo;
pub mod ingest;
pub mod simulate;
pub mod tagging;
