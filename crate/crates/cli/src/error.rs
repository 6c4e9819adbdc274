//! Failure reporting with the process exit-code contract:
//! 2 input or parse problems, 3 invalid data, 4 incompatible file versions.

use std::path::Path;

use patchscope::embedding::EmbeddingError;
use patchscope::gat::GatError;
use patchscope::metrics::MetricsError;
use patchscope::train::{DatasetError, PipelineError, RunError, SplitError, TrainError};

pub const INPUT: u8 = 2;
pub const DATA: u8 = 3;
pub const VERSION: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    fn new(code: u8, message: impl ToString) -> CliError {
        CliError {
            code,
            message: message.to_string(),
        }
    }

    pub fn input(message: impl ToString) -> CliError {
        CliError::new(INPUT, message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> CliError {
        CliError::input(format!("{}: {e}", path.display()))
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        let code = match e {
            DatasetError::DuplicateId(_) => DATA,
            DatasetError::Parse { .. } | DatasetError::Io(_) => INPUT,
        };
        CliError::new(code, e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::Syntax { .. } => INPUT,
            PipelineError::Alpha { .. } => DATA,
        };
        CliError::new(code, e)
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        let code = match e {
            EmbeddingError::EmptyCorpus | EmbeddingError::DegenerateCorpus(_) => DATA,
            EmbeddingError::Version(_) => VERSION,
            EmbeddingError::Format(_) | EmbeddingError::Io(_) => INPUT,
        };
        CliError::new(code, e)
    }
}

fn gat_code(e: &GatError) -> u8 {
    match e {
        GatError::Version(_) => VERSION,
        GatError::ShapeMismatch(_) | GatError::EmptyGraph | GatError::EmptyBatch => DATA,
        GatError::BadConfig(_) | GatError::Format(_) | GatError::Io(_) => INPUT,
    }
}

impl From<GatError> for CliError {
    fn from(e: GatError) -> Self {
        CliError::new(gat_code(&e), e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let code = match e {
            TrainError::BadConfig(_) => INPUT,
            TrainError::Model(ref m) => gat_code(m),
            TrainError::EmptyDataset | TrainError::SingleClassDataset(_) => DATA,
        };
        CliError::new(code, e)
    }
}

impl From<SplitError> for CliError {
    fn from(e: SplitError) -> Self {
        match e {
            SplitError::Pipeline(p) => p.into(),
            SplitError::TooFewProjects(_) => CliError::new(DATA, e),
            SplitError::BadFraction(_) | SplitError::TooFewFolds(_) | SplitError::BadEdges => {
                CliError::new(INPUT, e)
            }
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let code = match e {
            MetricsError::EmptySet | MetricsError::SingleClass | MetricsError::NoFixingCommits => {
                DATA
            }
            MetricsError::InvalidLevel(_)
            | MetricsError::InvalidThreshold(_)
            | MetricsError::Csv(_) => INPUT,
        };
        CliError::new(code, e)
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Pipeline(e) => e.into(),
            RunError::Embedding(e) => e.into(),
            RunError::Train(e) => e.into(),
            RunError::Model(e) => e.into(),
            RunError::Split(e) => e.into(),
            RunError::Metrics(e) => e.into(),
        }
    }
}
