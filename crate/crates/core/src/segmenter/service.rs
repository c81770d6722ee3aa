//! HTTP backend for a hosted promptable segmenter. Stateless apart from a
//! counting semaphore bounding in-flight requests.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use ndarray::Array3;

use crate::error::{Error, Result};

use super::wire::{encode_png, SegmentRequest, SegmentResponse, WirePoint};
use super::{PointPrompt, PromptPolarity, SegmentationResult, SegmenterBackend};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            permits: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut p = self.permits.lock().unwrap();
        while *p == 0 {
            p = self.cv.wait(p).unwrap();
        }
        *p -= 1;
    }

    fn release(&self) {
        *self.permits.lock().unwrap() += 1;
        self.cv.notify_one();
    }
}

pub struct ServiceSegmenter {
    endpoint: String,
    agent: ureq::Agent,
    limiter: Semaphore,
}

impl ServiceSegmenter {
    pub fn new(base_url: &str) -> Self {
        Self::with_limit(base_url, DEFAULT_MAX_IN_FLIGHT)
    }

    pub fn with_limit(base_url: &str, max_in_flight: usize) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(5))
            .timeout(Duration::from_secs(30))
            .build();
        ServiceSegmenter {
            endpoint: format!("{}/segment", base_url.trim_end_matches('/')),
            agent,
            limiter: Semaphore::new(max_in_flight.max(1)),
        }
    }
}

impl SegmenterBackend for ServiceSegmenter {
    fn segment_raw(&self, image: &Array3<u8>, prompt: &PointPrompt) -> Result<SegmentationResult> {
        let png = encode_png(image)?;
        let request = SegmentRequest {
            image_png_b64: base64::engine::general_purpose::STANDARD.encode(png),
            points: prompt
                .points
                .iter()
                .map(|p| WirePoint {
                    x: p.x.round() as i64,
                    y: p.y.round() as i64,
                    label: u8::from(p.polarity == PromptPolarity::Foreground),
                })
                .collect(),
            multimask: true,
        };

        self.limiter.acquire();
        let outcome = self.agent.post(&self.endpoint).send_json(&request);
        self.limiter.release();

        let response = match outcome {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) => {
                return Err(Error::Transport {
                    message: format!("segmenter returned HTTP {code}"),
                    retryable: code >= 500,
                });
            }
            Err(e) => {
                return Err(Error::Transport {
                    message: format!("segmenter unreachable: {e}"),
                    retryable: true,
                });
            }
        };

        let body: SegmentResponse = response.into_json().map_err(|e| Error::Transport {
            message: format!("malformed segmenter response: {e}"),
            retryable: true,
        })?;

        let mut masks = Vec::with_capacity(body.masks.len());
        for wire in &body.masks {
            masks.push(wire.to_bitmap().map_err(|e| Error::integrity(format!(
                "segmenter mask does not decode: {e}"
            )))?);
        }
        Ok(SegmentationResult {
            masks,
            scores: body.scores,
        })
    }
}
