use std::path::Path;

use serde::{Deserialize, Serialize};
use stable_ssm::matfound::SpdMatrix;
use stable_ssm::param::ChartParams;

use super::load_model;
use crate::checks::{brl_lyapunov_q, certify, CertificateReport};
use crate::error::{CliError, CliResult};
use crate::io::read_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub model: String,
    /// Where the certificate came from: `embedded`, a file path, or `none`.
    pub certificate: String,
    #[serde(flatten)]
    pub checks: CertificateReport,
}

/// Checks a model document. A certificate file overrides the embedded one;
/// `gamma` overrides the embedded gain bound and requires a certificate.
pub fn verify(model: &Path, certificate: Option<&Path>, gamma: Option<f64>) -> CliResult<VerifyReport> {
    let doc = load_model(model)?;
    let (p, source) = match certificate {
        Some(path) => {
            let p: SpdMatrix = read_json(path)?;
            if p.dim() != doc.dims.n {
                return Err(CliError::Config("certificate size differs from n".into()));
            }
            (Some(p), path.display().to_string())
        }
        None => match &doc.certificate {
            Some(p) => (Some(p.clone()), "embedded".to_string()),
            None => (None, "none".to_string()),
        },
    };
    if let Some(g) = gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(CliError::Config(format!("gamma = {g} must be positive")));
        }
        if p.is_none() {
            return Err(CliError::Config("a gain check needs a certificate".into()));
        }
    }
    let gamma = gamma.or(doc.gamma);
    // The generating Q is only meaningful together with its own certificate.
    let q = match (&doc.params, certificate) {
        (Some(ChartParams::Brl(b)), None) => Some(brl_lyapunov_q(b)?),
        (Some(ChartParams::Stable(s)), None) => Some(s.q()?.into_matrix()),
        _ => None,
    };
    let checks = certify(&doc.model, p.as_ref(), q.as_ref(), gamma)?;
    Ok(VerifyReport { model: model.display().to_string(), certificate: source, checks })
}
