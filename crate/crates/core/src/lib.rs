//! flowgate: a DICOM routing gateway for imaging AI integration.
//!
//! The crate is organized by subsystem:
//!
//! * [`dicom`]: data model and Part 10 / dataset codec
//! * [`dimse`]: DICOM upper layer protocol and C-STORE SCU/SCP
//! * [`rules`]: routing rule grammar, evaluation and atomic reload
//! * [`sr`]: structured report construction, parsing and field extraction
//! * [`hl7`]: HL7 v2 messages, the ORM^O01 builder and MLLP transport
//! * [`map`]: operator-DAG application runner with a stub inference operator
//! * [`gateway`]: the long-running router service
//! * [`sim`]: simulators and the end-to-end scenario runner

pub mod conf;
pub mod dicom;
pub mod dimse;
pub mod gateway;
pub mod hl7;
pub mod map;
pub mod par;
pub mod rules;
pub mod sim;
pub mod sr;
pub mod uid;
