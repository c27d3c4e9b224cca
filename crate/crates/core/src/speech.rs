//! Speech seam. Transcription and synthesis happen outside the engine; a
//! deployment can plug a vendor client in here.

use crate::model::TtsRequest;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("speech adapter: {0}")]
pub struct SpeechError(pub String);

pub trait SpeechAdapter: Send + Sync {
    /// Audio for a peer line, or `None` when synthesis is not available.
    fn synthesize(&self, request: &TtsRequest) -> Result<Option<Vec<u8>>, SpeechError>;
    /// Transcript of recorded audio, or `None` when transcription is not available.
    fn transcribe(&self, audio: &[u8]) -> Result<Option<String>, SpeechError>;
}

/// Default adapter: clients send transcripts and play text themselves.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoSpeech;

impl SpeechAdapter for NoSpeech {
    fn synthesize(&self, _request: &TtsRequest) -> Result<Option<Vec<u8>>, SpeechError> {
        Ok(None)
    }

    fn transcribe(&self, _audio: &[u8]) -> Result<Option<String>, SpeechError> {
        Ok(None)
    }
}
