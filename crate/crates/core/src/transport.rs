//! Request/response transport to external model services, plus the base64
//! image and latent encodings used on the wire.

use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde_json::Value;
use thiserror::Error;

use crate::latent::{LatentError, LatentTensor};
use crate::raster::{Raster, RasterError};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("no endpoint configured")]
    NoEndpoint,
    #[error("request to {endpoint} failed: {message}")]
    Request { endpoint: String, message: String },
    #[error("bad response from {endpoint}: {message}")]
    BadResponse { endpoint: String, message: String },
}

/// Sends one structured request and returns the structured response.
pub trait Transport: Send + Sync {
    fn exchange(&self, request: &Value) -> Result<Value, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn exchange(&self, request: &Value) -> Result<Value, TransportError> {
        (**self).exchange(request)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn exchange(&self, request: &Value) -> Result<Value, TransportError> {
        (**self).exchange(request)
    }
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn exchange(&self, request: &Value) -> Result<Value, TransportError> {
        (**self).exchange(request)
    }
}

/// A transport that refuses every request.
#[derive(Debug, Clone, Copy, Default)]
pub struct Offline;

impl Transport for Offline {
    fn exchange(&self, _request: &Value) -> Result<Value, TransportError> {
        Err(TransportError::NoEndpoint)
    }
}

/// JSON over HTTP POST.
#[derive(Debug)]
pub struct HttpTransport {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(600)).build(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl Transport for HttpTransport {
    fn exchange(&self, request: &Value) -> Result<Value, TransportError> {
        let response = self
            .agent
            .post(&self.endpoint)
            .send_json(request.clone())
            .map_err(|e| TransportError::Request {
                endpoint: self.endpoint.clone(),
                message: e.to_string(),
            })?;
        response.into_json().map_err(|e| TransportError::BadResponse {
            endpoint: self.endpoint.clone(),
            message: e.to_string(),
        })
    }
}

pub fn encode_image_b64(image: &Raster) -> String {
    STANDARD.encode(image.to_pnm())
}

pub fn decode_image_b64(text: &str) -> Result<Raster, RasterError> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| RasterError::Decode(format!("base64: {e}")))?;
    Raster::from_pnm(&bytes)
}

pub fn encode_latent_b64(latent: &LatentTensor) -> Result<String, LatentError> {
    Ok(STANDARD.encode(latent.to_bytes()?))
}

pub fn decode_latent_b64(text: &str) -> Result<LatentTensor, LatentError> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| LatentError::Format(format!("base64: {e}")))?;
    LatentTensor::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_and_latent_wire_round_trip() {
        let img = Raster::new(1, 2, 3, vec![0.0, 1.0, 0.2, 0.4, 0.6, 0.8]).unwrap();
        assert_eq!(decode_image_b64(&encode_image_b64(&img)).unwrap(), img.quantized());

        let z = LatentTensor::new([1, 1, 1, 2], vec![0.5, -3.0]).unwrap();
        assert_eq!(decode_latent_b64(&encode_latent_b64(&z).unwrap()).unwrap(), z);
        assert!(decode_latent_b64("not base64!").is_err());
    }

    #[test]
    fn offline_refuses() {
        assert!(matches!(
            Offline.exchange(&serde_json::json!({})),
            Err(TransportError::NoEndpoint)
        ));
    }
}
