//! File formats: LIBSVM input, trace and returns CSV.

pub mod csv;
pub mod libsvm;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

pub use self::csv::{read_returns, read_returns_file, read_trace, write_returns, write_trace, write_trace_csv, TraceRow};
pub use self::libsvm::{parse_libsvm, write_libsvm};

use crate::error::Result;
use crate::problems::ClassificationDataset;

pub fn read_libsvm_file(path: &Path) -> Result<ClassificationDataset> {
    parse_libsvm(BufReader::new(File::open(path)?))
}
