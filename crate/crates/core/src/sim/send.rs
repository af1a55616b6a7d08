//! Modality stand-in: pushes a directory of Part 10 files to an SCP.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::dicom::DicomFile;
use crate::dimse::{scu_store, status, AeTitle, ScuOptions};

use super::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SendSummary {
    pub files: Vec<(PathBuf, u16)>,
}

impl SendSummary {
    pub fn sent(&self) -> usize {
        self.files.len()
    }

    pub fn succeeded(&self) -> usize {
        self.files.iter().filter(|(_, s)| status::is_success(*s)).count()
    }

    pub fn all_succeeded(&self) -> bool {
        self.succeeded() == self.sent()
    }
}

impl fmt::Display for SendSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} sent, {} success", self.sent(), self.succeeded())
    }
}

/// Files under `dir`, recursively, in path order.
pub fn dicom_files_in(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("dcm")) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Sends every `.dcm` file under `dir` over one association.
pub fn cli_modality_send(dir: &Path, endpoint: &str, calling: &AeTitle, called: &AeTitle) -> Result<SendSummary, Error> {
    let paths = dicom_files_in(dir)?;
    if paths.is_empty() {
        return Err(Error::InvariantViolation(format!("no .dcm files under {}", dir.display())));
    }
    let files = paths.iter().map(|p| DicomFile::read(p)).collect::<Result<Vec<_>, _>>()?;
    let statuses = scu_store(endpoint, calling, called, &files, &ScuOptions::default())?;
    Ok(SendSummary {
        files: paths.into_iter().zip(statuses).collect(),
    })
}
