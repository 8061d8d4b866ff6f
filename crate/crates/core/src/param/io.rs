use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfound::SpdMatrix;
use crate::param::chart::ChartParams;
use crate::param::ssm::{Dims, Ssm};

pub const SCHEMA_VERSION: &str = "stable-ssm/v1";

/// Serialized model: realized matrices plus, optionally, the certificate
/// and the parameters that generated them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub schema: String,
    pub dims: Dims,
    #[serde(flatten)]
    pub model: Ssm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<SpdMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ChartParams>,
}

impl ModelDocument {
    pub fn new(model: Ssm, gamma: Option<f64>, certificate: Option<SpdMatrix>, params: Option<ChartParams>) -> Self {
        Self {
            schema: SCHEMA_VERSION.to_string(),
            dims: model.dims(),
            model,
            gamma,
            certificate,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if doc.schema != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!("unsupported schema '{}'", doc.schema)));
        }
        doc.model.validate()?;
        if doc.dims != doc.model.dims() {
            return Err(Error::DimensionMismatch(format!(
                "declared dims {:?} disagree with matrices {:?}",
                doc.dims,
                doc.model.dims()
            )));
        }
        if let Some(p) = &doc.certificate {
            if p.dim() != doc.dims.n {
                return Err(Error::DimensionMismatch("certificate size differs from n".into()));
            }
        }
        Ok(doc)
    }
}
