use std::io::ErrorKind;
use std::path::PathBuf;

use super::transcript::{read, transcript_path};
use super::{ChatBackend, ChatRequest, TransportError};

/// Answers from the transcripts of an earlier run, attempt by attempt.
pub struct TranscriptBackend {
    dir: PathBuf,
}

impl TranscriptBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TranscriptBackend { dir: dir.into() }
    }
}

impl ChatBackend for TranscriptBackend {
    fn respond(&mut self, req: &ChatRequest<'_>) -> Result<String, TransportError> {
        let path = transcript_path(&self.dir, req.step, req.purpose);
        let missing = || TransportError::MissingTranscript(format!("{} attempt {}", path.display(), req.attempt));
        let log = match read(&self.dir, req.step, req.purpose) {
            Ok(l) => l,
            Err(e) if e.kind() == ErrorKind::NotFound => return Err(missing()),
            Err(e) => return Err(TransportError::MissingTranscript(format!("{}: {e}", path.display()))),
        };
        let ex = log.into_iter().nth(req.attempt).ok_or_else(missing)?;
        ex.reply.map_err(TransportError::Failed)
    }
}
